#include "dpsim/dist.hpp"

#include "dpsim/command.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstdlib>
#include <cstring>
#include <deque>

namespace dpsim
{
    using nlohmann::json;

    // --------------------------------------------------------------------------- WorkerSession

    Frame WorkerSession::reply(FrameType type, json payload) { return Frame{type, ++seq_out_, std::move(payload)}; }

    ShardStatus WorkerSession::status() const
    {
        return {engine_->now(), engine_->quiescent(), engine_->substitutions_started(),
                engine_->substitutions_resolved()};
    }

    void WorkerSession::drain_remote(std::vector<Frame> &out)
    {
        for (auto &m : engine_->take_remote())
            out.push_back(reply(FrameType::FORWARD, {{"message", to_json(m)}}));
    }

    void WorkerSession::handle(const Frame &in, std::vector<Frame> &out)
    {
        if (in.seq <= seq_in_)
            throw SchemaMismatch("frame sequence went backwards");
        seq_in_ = in.seq;
        if (!engine_ && in.type != FrameType::HELLO && in.type != FrameType::ASSIGN && in.type != FrameType::SHUTDOWN)
            throw SchemaMismatch(std::string(to_string(in.type)) + " before ASSIGN");
        const json &p = in.payload;
        try
        {
            switch (in.type)
            {
            case FrameType::HELLO:
                out.push_back(reply(FrameType::HELLO, {{"version", kWireVersion}}));
                return;
            case FrameType::ASSIGN: {
                map_ = shard_map_from_json(p.at("map"));
                shard_ = p.at("shard").get<std::size_t>();
                const auto &pj = p.at("protocol");
                ProtocolSpec spec{pj.at("name").get<std::string>(), pj.at("fanout").get<unsigned>(),
                                  pj.at("key_bits").get<unsigned>()};
                engine_.emplace(make_protocol(spec), network_model_from_json(p.at("network")));
                const Key lo = map_.shards.at(shard_).lo, hi = map_.shards.at(shard_).hi;
                engine_->set_local_predicate([lo, hi](NodeId id) { return id.value >= lo && id.value < hi; });
                engine_->set_keep_log(p.value("keep_log", true));
                out.push_back(reply(FrameType::ASSIGN, {{"ok", true}, {"shard", shard_}}));
                return;
            }
            case FrameType::APPLY: {
                std::string error;
                for (const auto &c : p.at("commands"))
                {
                    try
                    {
                        engine_->apply(command_from_json(c));
                    }
                    catch (const SimError &e)
                    {
                        error = e.what();
                        break;
                    }
                }
                drain_remote(out);
                json payload = {{"status", to_json(status())}};
                if (!error.empty())
                    payload["error"] = error;
                out.push_back(reply(FrameType::APPLY, payload));
                return;
            }
            case FrameType::FORWARD:
                engine_->inject_remote(message_from_json(p.at("message")));
                return;
            case FrameType::TICK: {
                const auto delivered = engine_->step();
                drain_remote(out);
                out.push_back(
                    reply(FrameType::TICK_DONE, {{"status", to_json(status())}, {"delivered", delivered}}));
                return;
            }
            case FrameType::STATS: {
                json summaries = json::array();
                for (const auto &s : engine_->stats().summaries())
                    summaries.push_back(to_json(s));
                json counts = json::array();
                for (std::size_t k = 0; k < kMessageKindCount; ++k)
                    counts.push_back(engine_->log_count(static_cast<MessageKind>(k)));
                json ops = json::array();
                for (const auto &[_, r] : engine_->ops())
                    ops.push_back(to_json(r));
                json payload = {{"summaries", summaries},
                                {"counts", counts},
                                {"counters", to_json(engine_->counters())},
                                {"digest", engine_->log_digest()},
                                {"ops", ops}};
                if (p.value("log", false))
                {
                    json log = json::array();
                    for (const auto &r : engine_->log())
                        log.push_back(to_json(r));
                    payload["log"] = log;
                }
                if (p.value("reset", false))
                    engine_->reset_log_counts();
                out.push_back(reply(FrameType::STATS, payload));
                return;
            }
            case FrameType::SHUTDOWN:
                finished_ = true;
                out.push_back(reply(FrameType::SHUTDOWN, json::object()));
                return;
            case FrameType::TICK_DONE:
                break;
            }
        }
        catch (const json::exception &e)
        {
            throw SchemaMismatch(std::string("bad ") + std::string(to_string(in.type)) + " payload: " + e.what());
        }
        throw SchemaMismatch("unexpected frame " + std::string(to_string(in.type)));
    }

    // ----------------------------------------------------------------------------------- links

    std::chrono::milliseconds tick_timeout()
    {
        if (const char *v = std::getenv("DPSIM_TICK_TIMEOUT_MS"))
        {
            char *end = nullptr;
            const long ms = std::strtol(v, &end, 10);
            if (end != v && *end == '\0' && ms > 0)
                return std::chrono::milliseconds(ms);
        }
        return std::chrono::milliseconds(30000);
    }

    namespace
    {
        class InProcessLink : public Link
        {
        public:
            explicit InProcessLink(std::string label) : label_(std::move(label)) {}

            void send(const Frame &f) override
            {
                std::vector<Frame> replies;
                session_.handle(decode_frame(encode_frame(f)), replies);
                for (const auto &r : replies)
                    queue_.push_back(encode_frame(r));
            }

            Frame receive() override
            {
                if (queue_.empty())
                    throw WorkerUnreachable("in-process worker " + label_ + " has nothing to say");
                auto line = std::move(queue_.front());
                queue_.pop_front();
                return decode_frame(line);
            }

            std::string address() const override { return label_; }

        private:
            std::string label_;
            WorkerSession session_;
            std::deque<std::string> queue_;
        };

        std::pair<std::string, std::string> split_address(const std::string &address)
        {
            const auto colon = address.rfind(':');
            if (colon == std::string::npos || colon + 1 == address.size())
                throw InvalidParams("address '" + address + "' is not host:port");
            std::string host = address.substr(0, colon);
            if (host.size() >= 2 && host.front() == '[' && host.back() == ']')
                host = host.substr(1, host.size() - 2);
            return {host.empty() ? "0.0.0.0" : host, address.substr(colon + 1)};
        }

        bool write_all(int fd, const std::string &data)
        {
            std::size_t done = 0;
            while (done < data.size())
            {
                const ssize_t n = ::send(fd, data.data() + done, data.size() - done, MSG_NOSIGNAL);
                if (n < 0 && errno == EINTR)
                    continue;
                if (n <= 0)
                    return false;
                done += static_cast<std::size_t>(n);
            }
            return true;
        }

        // Line reader over a socket. Returns false on EOF or error; throws TickTimeout on deadline.
        class LineReader
        {
        public:
            explicit LineReader(int fd) : fd_(fd) {}

            bool next(std::string &line, std::optional<std::chrono::milliseconds> timeout)
            {
                for (;;)
                {
                    if (auto nl = buf_.find('\n'); nl != std::string::npos)
                    {
                        line = buf_.substr(0, nl);
                        buf_.erase(0, nl + 1);
                        return true;
                    }
                    if (timeout)
                    {
                        pollfd pfd{fd_, POLLIN, 0};
                        int r;
                        do
                            r = ::poll(&pfd, 1, static_cast<int>(timeout->count()));
                        while (r < 0 && errno == EINTR);
                        if (r == 0)
                            throw TickTimeout("no frame within " + std::to_string(timeout->count()) + " ms");
                        if (r < 0)
                            return false;
                    }
                    char chunk[65536];
                    ssize_t n;
                    do
                        n = ::recv(fd_, chunk, sizeof chunk, 0);
                    while (n < 0 && errno == EINTR);
                    if (n <= 0)
                        return false;
                    buf_.append(chunk, static_cast<std::size_t>(n));
                }
            }

        private:
            int fd_;
            std::string buf_;
        };

        class TcpLink : public Link
        {
        public:
            TcpLink(int fd, std::string address, std::chrono::milliseconds timeout)
                : fd_(fd), address_(std::move(address)), timeout_(timeout), reader_(fd)
            {
            }
            ~TcpLink() override { ::close(fd_); }

            void send(const Frame &f) override
            {
                if (!write_all(fd_, encode_frame(f)))
                    throw WorkerUnreachable("lost connection to worker " + address_);
            }

            Frame receive() override
            {
                std::string line;
                if (!reader_.next(line, timeout_))
                    throw WorkerUnreachable("worker " + address_ + " closed the connection");
                return decode_frame(line);
            }

            std::string address() const override { return address_; }

        private:
            int fd_;
            std::string address_;
            std::chrono::milliseconds timeout_;
            LineReader reader_;
        };

        addrinfo *resolve(const std::string &host, const std::string &port, bool passive)
        {
            addrinfo hints{};
            hints.ai_family = AF_UNSPEC;
            hints.ai_socktype = SOCK_STREAM;
            if (passive)
                hints.ai_flags = AI_PASSIVE;
            addrinfo *res = nullptr;
            if (int rc = ::getaddrinfo(host.c_str(), port.c_str(), &hints, &res); rc != 0)
                throw WorkerUnreachable("cannot resolve " + host + ":" + port + ": " + ::gai_strerror(rc));
            return res;
        }
    } // namespace

    std::unique_ptr<Link> make_in_process_link(std::string label)
    {
        return std::make_unique<InProcessLink>(std::move(label));
    }

    std::unique_ptr<Link> connect_worker(const std::string &address, std::chrono::milliseconds timeout)
    {
        auto [host, port] = split_address(address);
        addrinfo *res = resolve(host, port, false);
        int fd = -1;
        for (addrinfo *a = res; a; a = a->ai_next)
        {
            fd = ::socket(a->ai_family, a->ai_socktype, a->ai_protocol);
            if (fd < 0)
                continue;
            if (::connect(fd, a->ai_addr, a->ai_addrlen) == 0)
                break;
            ::close(fd);
            fd = -1;
        }
        ::freeaddrinfo(res);
        if (fd < 0)
            throw WorkerUnreachable("cannot connect to worker " + address + ": " + std::strerror(errno));
        int one = 1;
        ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
        return std::make_unique<TcpLink>(fd, address, timeout);
    }

    // ---------------------------------------------------------------------------- WorkerServer

    WorkerServer::WorkerServer(const std::string &listen)
    {
        auto [host, port] = split_address(listen);
        addrinfo *res = resolve(host, port, true);
        for (addrinfo *a = res; a; a = a->ai_next)
        {
            int fd = ::socket(a->ai_family, a->ai_socktype, a->ai_protocol);
            if (fd < 0)
                continue;
            int one = 1;
            ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
            if (::bind(fd, a->ai_addr, a->ai_addrlen) == 0 && ::listen(fd, 4) == 0)
            {
                listen_fd_ = fd;
                break;
            }
            ::close(fd);
        }
        ::freeaddrinfo(res);
        if (listen_fd_ < 0)
            throw IoFailure("cannot listen on " + listen + ": " + std::strerror(errno));
        sockaddr_storage addr{};
        socklen_t len = sizeof addr;
        ::getsockname(listen_fd_, reinterpret_cast<sockaddr *>(&addr), &len);
        port_ = ntohs(addr.ss_family == AF_INET6 ? reinterpret_cast<sockaddr_in6 *>(&addr)->sin6_port
                                                 : reinterpret_cast<sockaddr_in *>(&addr)->sin_port);
    }

    WorkerServer::~WorkerServer()
    {
        stop();
        if (listen_fd_ >= 0)
            ::close(listen_fd_);
    }

    void WorkerServer::stop()
    {
        stopping_ = true;
        if (int fd = conn_fd_.load(); fd >= 0)
            ::shutdown(fd, SHUT_RDWR);
    }

    void WorkerServer::run()
    {
        while (!stopping_)
        {
            pollfd pfd{listen_fd_, POLLIN, 0};
            const int r = ::poll(&pfd, 1, 100);
            if (r <= 0)
                continue;
            const int fd = ::accept(listen_fd_, nullptr, nullptr);
            if (fd < 0)
                continue;
            int one = 1;
            ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
            conn_fd_ = fd;
            if (stopping_)
                ::shutdown(fd, SHUT_RDWR);
            serve(fd);
            conn_fd_ = -1;
            ::close(fd);
        }
    }

    void WorkerServer::serve(int fd)
    {
        WorkerSession session;
        LineReader reader(fd);
        std::string line;
        std::vector<Frame> replies;
        while (reader.next(line, std::nullopt))
        {
            replies.clear();
            try
            {
                session.handle(decode_frame(line), replies);
            }
            catch (const SimError &)
            {
                return; // protocol violation: drop the connection
            }
            std::string out;
            for (const auto &r : replies)
                out += encode_frame(r);
            if (!out.empty() && !write_all(fd, out))
                return;
            if (session.finished())
            {
                stopping_ = true;
                return;
            }
        }
    }

    // --------------------------------------------------------------------------- RemoteCluster

    RemoteCluster::RemoteCluster(std::vector<std::unique_ptr<Link>> links, ShardMap map,
                                 const ProtocolSpec &protocol, const NetworkModel &model, bool keep_log)
        : map_(std::move(map)), replica_(make_protocol(protocol), model)
    {
        if (links.empty())
            throw NoWorkers("no workers to run on");
        if (links.size() != map_.shards.size())
            throw InvalidParams("one link per shard is required");
        replica_.set_local_predicate([](NodeId) { return false; });
        replica_.set_keep_log(false);
        for (auto &l : links)
            links_.push_back(Peer{std::move(l), 0, 0, {}});
        pending_.resize(links_.size());
        const json proto = {{"name", protocol.name}, {"fanout", protocol.fanout}, {"key_bits", protocol.key_bits}};
        for (std::size_t i = 0; i < links_.size(); ++i)
        {
            send(i, FrameType::HELLO, {{"version", kWireVersion}});
            const auto hello = await(i, FrameType::HELLO);
            if (hello.value("version", 0) != kWireVersion)
                throw SchemaMismatch("worker " + links_[i].link->address() + " speaks another wire version");
            send(i, FrameType::ASSIGN,
                 {{"map", to_json(map_)},
                  {"shard", i},
                  {"protocol", proto},
                  {"network", to_json(model)},
                  {"keep_log", keep_log}});
            await(i, FrameType::ASSIGN);
        }
    }

    RemoteCluster::~RemoteCluster()
    {
        try
        {
            shutdown();
        }
        catch (const SimError &)
        {
        }
    }

    void RemoteCluster::send(std::size_t shard, FrameType type, json payload)
    {
        auto &p = links_[shard];
        p.link->send(Frame{type, ++p.seq_out, std::move(payload)});
    }

    json RemoteCluster::await(std::size_t shard, FrameType type)
    {
        auto &p = links_[shard];
        for (;;)
        {
            Frame f = p.link->receive();
            if (f.seq <= p.seq_in)
                throw SchemaMismatch("worker " + p.link->address() + " sent a stale frame");
            p.seq_in = f.seq;
            if (f.type == FrameType::FORWARD)
            {
                route(message_from_json(f.payload.at("message")));
                continue;
            }
            if (f.type != type)
                throw SchemaMismatch("expected " + std::string(to_string(type)) + " from " + p.link->address() +
                                     ", got " + std::string(to_string(f.type)));
            return f.payload;
        }
    }

    void RemoteCluster::route(const Message &m) { pending_[map_.shard_of(m.receiver)].push_back(m); }

    void RemoteCluster::apply(const std::vector<Command> &commands)
    {
        if (commands.empty())
            return;
        // The replica validates first so a bad command never reaches the workers.
        std::vector<Command> accepted;
        std::optional<std::string> failure;
        std::exception_ptr error;
        for (const auto &c : commands)
        {
            try
            {
                replica_.apply(c);
                accepted.push_back(c);
            }
            catch (const SimError &)
            {
                error = std::current_exception();
                break;
            }
        }
        if (!accepted.empty())
        {
            json list = json::array();
            for (const auto &c : accepted)
                list.push_back(to_json(c));
            for (std::size_t i = 0; i < links_.size(); ++i)
                send(i, FrameType::APPLY, {{"commands", list}});
            for (std::size_t i = 0; i < links_.size(); ++i)
            {
                const auto payload = await(i, FrameType::APPLY);
                links_[i].status = status_from_json(payload.at("status"));
                if (payload.contains("error"))
                    failure = payload.at("error").get<std::string>();
            }
        }
        if (error)
            std::rethrow_exception(error);
        if (failure)
            throw SchemaMismatch("worker replica diverged: " + *failure);
    }

    void RemoteCluster::step()
    {
        for (std::size_t i = 0; i < links_.size(); ++i)
        {
            auto batch = std::move(pending_[i]);
            pending_[i].clear();
            for (const auto &m : batch)
                send(i, FrameType::FORWARD, {{"message", to_json(m)}});
        }
        for (std::size_t i = 0; i < links_.size(); ++i)
            send(i, FrameType::TICK, {{"tick", now_ + 1}});
        for (std::size_t i = 0; i < links_.size(); ++i)
        {
            const auto payload = await(i, FrameType::TICK_DONE);
            links_[i].status = status_from_json(payload.at("status"));
            if (links_[i].status.now != now_ + 1)
                throw SchemaMismatch("worker " + links_[i].link->address() + " clock diverged");
        }
        ++now_;
    }

    bool RemoteCluster::quiescent()
    {
        for (std::size_t i = 0; i < links_.size(); ++i)
            if (!links_[i].status.quiescent || !pending_[i].empty())
                return false;
        return true;
    }

    std::int64_t RemoteCluster::substitutions_pending()
    {
        std::int64_t n = 0;
        for (const auto &p : links_)
            n += p.status.subs_started - p.status.subs_resolved;
        return n;
    }

    std::vector<json> RemoteCluster::gather_stats(bool with_log)
    {
        for (std::size_t i = 0; i < links_.size(); ++i)
            send(i, FrameType::STATS, {{"log", with_log}});
        std::vector<json> out;
        for (std::size_t i = 0; i < links_.size(); ++i)
            out.push_back(await(i, FrameType::STATS));
        return out;
    }

    std::vector<MetricSummary> RemoteCluster::stats()
    {
        std::vector<std::vector<MetricSummary>> partials;
        for (const auto &p : gather_stats(false))
        {
            std::vector<MetricSummary> set;
            for (const auto &s : p.at("summaries"))
                set.push_back(summary_from_json(s));
            partials.push_back(std::move(set));
        }
        return merge_stats(partials);
    }

    KindCounts RemoteCluster::log_counts()
    {
        KindCounts total{};
        for (const auto &p : gather_stats(false))
            for (std::size_t k = 0; k < kMessageKindCount; ++k)
                total[k] += p.at("counts").at(k).get<std::uint64_t>();
        return total;
    }

    void RemoteCluster::reset_log_counts()
    {
        for (std::size_t i = 0; i < links_.size(); ++i)
            send(i, FrameType::STATS, {{"log", false}, {"reset", true}});
        for (std::size_t i = 0; i < links_.size(); ++i)
            await(i, FrameType::STATS);
    }

    Counters RemoteCluster::counters()
    {
        Counters total;
        for (const auto &p : gather_stats(false))
        {
            const auto c = counters_from_json(p.at("counters"));
            total.sent += c.sent;
            total.delivered += c.delivered;
            total.undeliverable += c.undeliverable;
            total.receiver_down += c.receiver_down;
            total.forwarded += c.forwarded;
            total.injected += c.injected;
            total.illegal_transitions += c.illegal_transitions;
        }
        return total;
    }

    std::vector<LogRecord> RemoteCluster::log()
    {
        std::vector<LogRecord> out;
        for (const auto &p : gather_stats(true))
            for (const auto &r : p.at("log"))
                out.push_back(log_record_from_json(r));
        std::sort(out.begin(), out.end());
        return out;
    }

    std::vector<std::uint64_t> RemoteCluster::log_digests()
    {
        std::vector<std::uint64_t> out;
        for (const auto &p : gather_stats(false))
            out.push_back(p.at("digest").get<std::uint64_t>());
        return out;
    }

    std::map<std::uint64_t, OpResult> RemoteCluster::op_results()
    {
        std::map<std::uint64_t, OpResult> out;
        for (const auto &p : gather_stats(false))
        {
            for (const auto &j : p.at("ops"))
            {
                auto r = op_result_from_json(j);
                auto [it, inserted] = out.try_emplace(r.op_id, r);
                if (!inserted)
                    merge_op_result(it->second, r);
            }
        }
        return out;
    }

    void RemoteCluster::shutdown()
    {
        if (closed_)
            return;
        closed_ = true;
        for (std::size_t i = 0; i < links_.size(); ++i)
        {
            try
            {
                send(i, FrameType::SHUTDOWN, json::object());
                await(i, FrameType::SHUTDOWN);
            }
            catch (const SimError &)
            {
                // A worker that is already gone needs no goodbye.
            }
        }
    }

    std::unique_ptr<RemoteCluster> make_sharded_cluster(std::size_t shards, const ProtocolSpec &protocol,
                                                        const NetworkModel &model, bool keep_log)
    {
        std::vector<std::string> labels;
        std::vector<std::unique_ptr<Link>> links;
        for (std::size_t i = 0; i < shards; ++i)
        {
            labels.push_back("local-" + std::to_string(i));
            links.push_back(make_in_process_link(labels.back()));
        }
        auto map = make_shard_map(protocol.key_bits, labels);
        return std::make_unique<RemoteCluster>(std::move(links), std::move(map), protocol, model, keep_log);
    }

    std::unique_ptr<RemoteCluster> make_remote_cluster(const std::vector<std::string> &workers,
                                                       const ProtocolSpec &protocol, const NetworkModel &model,
                                                       bool keep_log)
    {
        auto map = make_shard_map(protocol.key_bits, workers);
        std::vector<std::unique_ptr<Link>> links;
        for (const auto &w : workers)
            links.push_back(connect_worker(w, tick_timeout()));
        return std::make_unique<RemoteCluster>(std::move(links), std::move(map), protocol, model, keep_log);
    }
} // namespace dpsim
