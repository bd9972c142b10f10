#include "support.hpp"

#include "dpsim/dist.hpp"

#include <catch_amalgamated.hpp>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <thread>

using namespace dpsim;
using namespace testing;

namespace
{
    struct Workload
    {
        std::vector<NodeId> ids;
        std::vector<NodeId> contacts;
        std::vector<OperationSpec> ops;
    };

    Workload make_workload(std::size_t n, std::size_t ops, std::uint64_t seed)
    {
        Workload w;
        w.ids = random_ids(n, 32, seed);
        Rng rng(seed + 1);
        w.contacts.resize(n);
        for (std::size_t i = 1; i < n; ++i)
            w.contacts[i] = w.ids[rng.below(i)];
        const MessageKind kinds[] = {MessageKind::SEARCH, MessageKind::INSERT, MessageKind::SEARCH,
                                     MessageKind::DELETE, MessageKind::RANGE};
        for (std::size_t i = 0; i < ops; ++i)
        {
            OperationSpec op;
            op.op_id = i + 1;
            op.kind = kinds[i % 5];
            op.origin = w.ids[rng.below(n)];
            op.key = rng.below(key_space(32) - (1u << 24));
            if (op.kind == MessageKind::RANGE)
                op.hi = op.key + (1u << 24);
            if (op.kind == MessageKind::INSERT)
                op.value = {1, 2, 3};
            w.ops.push_back(op);
        }
        return w;
    }

    // Build, fail a few nodes, then issue one operation per tick and settle.
    void drive(Cluster &c, const Workload &w)
    {
        build_overlay(c, w.ids, w.contacts);
        c.apply(cmd::ResetLoad{});
        c.apply(cmd::Fail{{w.ids[3], w.ids[7]}});
        for (const auto &op : w.ops)
        {
            if (c.view().state(op.origin) != PeerState::WORKING ||
                (op.kind == MessageKind::RANGE && !c.view().protocol().supports_range()))
                continue;
            c.apply(cmd::Operation{op});
            c.step();
        }
        settle(c, 100000);
        c.apply(cmd::RecordLoad{});
        c.apply(cmd::RecordTables{});
    }

    struct Outcome
    {
        std::vector<LogRecord> log;
        std::vector<MetricSummary> stats;
        std::map<std::uint64_t, OpResult> ops;
        Tick now = 0;
    };

    Outcome outcome(Cluster &c) { return {c.log(), c.stats(), c.op_results(), c.now()}; }

    void check_same(const Outcome &a, const Outcome &b)
    {
        CHECK(a.now == b.now);
        REQUIRE(a.log.size() == b.log.size());
        CHECK(a.log == b.log);
        REQUIRE(a.stats.size() == b.stats.size());
        for (std::size_t i = 0; i < a.stats.size(); ++i)
        {
            INFO(a.stats[i].name);
            CHECK(a.stats[i] == b.stats[i]);
        }
        REQUIRE(a.ops.size() == b.ops.size());
        for (const auto &[id, r] : a.ops)
        {
            const auto &s = b.ops.at(id);
            CHECK(r.status == s.status);
            CHECK(r.hops == s.hops);
            CHECK(r.owner == s.owner);
            CHECK(r.path == s.path);
            CHECK(r.matches == s.matches);
        }
    }

    MetricSummary summary_of(std::initializer_list<double> values, const std::string &name = "m")
    {
        MetricRegistry r;
        for (double v : values)
            r.record(name, v);
        return r.summary(name);
    }
} // namespace

TEST_CASE("shard map arithmetic", "[dist]")
{
    auto one = make_shard_map(32, {"a:1"});
    REQUIRE(one.shards.size() == 1);
    CHECK(one.shards[0].lo == 0);
    CHECK(one.shards[0].hi == key_space(32));

    auto four = make_shard_map(32, {"a:1", "b:1", "c:1", "d:1"});
    for (std::size_t i = 0; i < 4; ++i)
    {
        CHECK(four.shards[i].hi - four.shards[i].lo == (Key{1} << 30));
        CHECK(four.shards[i].lo == i * (Key{1} << 30));
    }
    CHECK(four.shard_of(NodeId{0}) == 0);
    CHECK(four.shard_of(NodeId{(Key{1} << 30) - 1}) == 0);
    CHECK(four.shard_of(NodeId{Key{1} << 30}) == 1);
    CHECK(four.shard_of(NodeId{key_space(32) - 1}) == 3);
    CHECK_THROWS_AS(four.shard_of(NodeId{key_space(32)}), UnknownNode);

    auto three = make_shard_map(4, {"a:1", "b:1", "c:1"});
    CHECK(three.shards[0].hi == 5);
    CHECK(three.shards[1].hi == 10);
    CHECK(three.shards[2].lo == 10);
    CHECK(three.shards[2].hi == 16); // remainder goes last

    CHECK_THROWS_AS(make_shard_map(32, {}), NoWorkers);
}

TEST_CASE("frames encode as sorted single-line JSON", "[dist][wire]")
{
    Frame f{FrameType::TICK_DONE, 7, {{"zeta", 1}, {"alpha", {{"b", 2}, {"a", 1}}}}};
    const auto line = encode_frame(f);
    CHECK(line == R"({"payload":{"alpha":{"a":1,"b":2},"zeta":1},"seq":7,"type":"TICK_DONE"})"
                  "\n");
    auto back = decode_frame(line.substr(0, line.size() - 1));
    CHECK(back.type == FrameType::TICK_DONE);
    CHECK(back.seq == 7);
    CHECK(back.payload == f.payload);
    CHECK_THROWS_AS(decode_frame("{"), SchemaMismatch);
    CHECK_THROWS_AS(decode_frame(R"({"type":"NOPE","seq":1})"), SchemaMismatch);
}

TEST_CASE("forwarded messages survive the wire intact", "[dist][wire]")
{
    Message m;
    m.kind = MessageKind::RANGE;
    m.sender = NodeId{4};
    m.receiver = NodeId{9};
    m.path = ids_of({1, 4});
    m.hops = 2;
    m.send_time = 11;
    m.deliver_time = 12;
    m.op_id = 5;
    m.data.key = 77;
    m.data.value = std::vector<std::uint8_t>{9, 8};
    m.data.range = KeyRange{10, 20};
    Frame f{FrameType::FORWARD, 1, {{"message", to_json(m)}}};
    auto back = message_from_json(decode_frame(encode_frame(f)).payload.at("message"));
    CHECK(back == m);
}

TEST_CASE("worker session rejects out-of-order frames", "[dist]")
{
    WorkerSession s;
    std::vector<Frame> out;
    s.handle(Frame{FrameType::HELLO, 1, {}}, out);
    REQUIRE(out.size() == 1);
    CHECK(out[0].type == FrameType::HELLO);
    CHECK(out[0].seq == 1);
    CHECK_THROWS_AS(s.handle(Frame{FrameType::TICK, 1, {}}, out), SchemaMismatch);
    CHECK_THROWS_AS(s.handle(Frame{FrameType::TICK, 2, {}}, out), SchemaMismatch); // before ASSIGN
}

TEST_CASE("merge_stats algebra", "[dist][stats]")
{
    auto a = summary_of({2, 2, 2});
    auto b = summary_of({6});
    auto m = merge(a, b);
    CHECK(m.count == 4);
    CHECK(m.mean == 3.0);
    CHECK(m.min == 2);
    CHECK(m.max == 6);
    CHECK(m.histogram == std::map<std::int64_t, std::uint64_t>{{2, 3}, {6, 1}});
    CHECK(merge(a, MetricSummary{"m"}) == a);
    CHECK(merge(MetricSummary{"m"}, a) == a);

    Rng rng(5);
    for (int trial = 0; trial < 200; ++trial)
    {
        std::vector<MetricSummary> parts;
        for (int k = 0; k < 3; ++k)
        {
            MetricRegistry r;
            const auto n = rng.below(20);
            for (std::uint64_t i = 0; i < n; ++i)
                r.record("m", static_cast<double>(rng.below(50)));
            parts.push_back(n ? r.summary("m") : MetricSummary{"m"});
        }
        auto left = merge(merge(parts[0], parts[1]), parts[2]);
        auto right = merge(parts[0], merge(parts[1], parts[2]));
        auto swapped = merge(merge(parts[2], parts[0]), parts[1]);
        CHECK(left.count == right.count);
        CHECK(left.histogram == right.histogram);
        CHECK(left.histogram == swapped.histogram);
        if (left.count)
        {
            CHECK(left.min == right.min);
            CHECK(left.max == swapped.max);
            CHECK(left.mean == Catch::Approx(right.mean).epsilon(1e-12));
            CHECK(left.mean == Catch::Approx(swapped.mean).epsilon(1e-12));
        }
    }

    MetricSummary real = summary_of({0.5, 1.25});
    MetricSummary other = summary_of({0.5, 3.75});
    CHECK_THROWS_AS(merge(real, other), SchemaMismatch);
}

TEST_CASE("one in-process shard behaves like a local engine", "[dist]")
{
    const auto w = make_workload(150, 120, 17);
    LocalCluster local(ProtocolSpec{"baton_star", 3, 32}, NetworkModel{});
    drive(local, w);
    auto sharded = make_sharded_cluster(1, ProtocolSpec{"baton_star", 3, 32}, NetworkModel{});
    drive(*sharded, w);
    check_same(outcome(local), outcome(*sharded));
}

TEST_CASE("k shards produce the same log multiset and results as one", "[dist]")
{
    for (const auto &proto : {ProtocolSpec{"baton_star", 2, 32}, ProtocolSpec{"chord", 2, 32}})
    {
        const auto w = make_workload(200, 150, 23);
        NetworkModel model;
        model.base_latency = 2;
        model.per_node_step[w.ids[10]] = 3;
        LocalCluster local(proto, model);
        drive(local, w);
        const auto reference = outcome(local);
        for (std::size_t k : {2u, 3u, 4u})
        {
            INFO(proto.name << " shards=" << k);
            auto c = make_sharded_cluster(k, proto, model);
            drive(*c, w);
            check_same(reference, outcome(*c));
            CHECK(c->counters().forwarded > 0);
            CHECK(c->counters().forwarded == c->counters().injected);
            CHECK(c->log_digests().size() == k);
        }
    }
}

TEST_CASE("cross-shard delivery keeps the latency", "[dist]")
{
    NetworkModel model;
    model.base_latency = 4;
    // One node per shard; the op completes at b with no reply message.
    const NodeId a{10}, b{key_space(32) - 10};
    auto steps_to_finish = [&](Cluster &c) {
        c.apply(cmd::Bootstrap{a});
        join_node(c, b, a);
        settle(c, 1000);
        const Tick t0 = c.now();
        c.apply(cmd::Operation{OperationSpec{1, MessageKind::SEARCH, a, b.value - 1, 0, {}}});
        int steps = 0;
        for (; steps < 100; ++steps)
        {
            auto ops = c.op_results();
            auto it = ops.find(1);
            if (it != ops.end() && it->second.status != OpStatus::Pending)
                break;
            c.step();
        }
        const auto r = c.op_results().at(1);
        CHECK(r.owner == b);
        CHECK(r.hops == 1);
        std::vector<LogRecord> tail;
        for (const auto &rec : c.log())
            if (rec.tick >= t0)
                tail.push_back(rec);
        REQUIRE(tail.size() == 1);
        CHECK(tail[0].tick == t0);
        return steps;
    };
    LocalCluster local(ProtocolSpec{"chord", 2, 32}, model);
    auto sharded = make_sharded_cluster(2, ProtocolSpec{"chord", 2, 32}, model);
    const int expect = steps_to_finish(local);
    CHECK(expect == 4);
    CHECK(steps_to_finish(*sharded) == expect);
}

TEST_CASE("10,000 lockstep ticks keep the clocks together", "[dist]")
{
    NetworkModel model;
    model.background_traffic_rate = 0.5;
    auto c = make_sharded_cluster(2, ProtocolSpec{"dummy", 2, 32}, model);
    const auto ids = random_ids(20, 32, 3);
    build_overlay(*c, ids, std::vector<NodeId>(20, ids[0]));
    for (int i = 0; i < 10000; ++i)
        c->step(); // throws if a worker reports another tick
    CHECK(c->now() >= 10000);
    CHECK(c->counters().sent > 1000);
}

TEST_CASE("TCP workers match the local run", "[dist][tcp]")
{
    WorkerServer s1("127.0.0.1:0"), s2("127.0.0.1:0");
    std::thread t1([&] { s1.run(); }), t2([&] { s2.run(); });
    const auto w = make_workload(120, 80, 31);
    {
        LocalCluster local(ProtocolSpec{"baton_star", 4, 32}, NetworkModel{});
        drive(local, w);
        auto remote = make_remote_cluster(
            {"127.0.0.1:" + std::to_string(s1.port()), "127.0.0.1:" + std::to_string(s2.port())},
            ProtocolSpec{"baton_star", 4, 32}, NetworkModel{});
        drive(*remote, w);
        check_same(outcome(local), outcome(*remote));
        remote->shutdown();
    }
    t1.join();
    t2.join();
}

TEST_CASE("a killed worker surfaces as WorkerUnreachable", "[dist][tcp]")
{
    WorkerServer s1("127.0.0.1:0"), s2("127.0.0.1:0");
    std::thread t1([&] { s1.run(); }), t2([&] { s2.run(); });
    auto remote = make_remote_cluster(
        {"127.0.0.1:" + std::to_string(s1.port()), "127.0.0.1:" + std::to_string(s2.port())},
        ProtocolSpec{"chord", 2, 32}, NetworkModel{});
    const auto w = make_workload(40, 0, 5);
    build_overlay(*remote, w.ids, w.contacts);
    s2.stop();
    t2.join();
    bool thrown = false;
    try
    {
        for (int i = 0; i < 5; ++i)
            remote->step();
    }
    catch (const WorkerUnreachable &)
    {
        thrown = true;
    }
    CHECK(thrown);
    remote.reset();
    s1.stop();
    t1.join();
}

TEST_CASE("a silent worker times out", "[dist][tcp]")
{
    // Accepts the connection but never answers.
    int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    REQUIRE(::bind(fd, reinterpret_cast<sockaddr *>(&addr), sizeof addr) == 0);
    REQUIRE(::listen(fd, 1) == 0);
    socklen_t len = sizeof addr;
    ::getsockname(fd, reinterpret_cast<sockaddr *>(&addr), &len);
    const std::string address = "127.0.0.1:" + std::to_string(ntohs(addr.sin_port));
    auto link = connect_worker(address, std::chrono::milliseconds(200));
    std::vector<std::unique_ptr<Link>> links;
    links.push_back(std::move(link));
    CHECK_THROWS_AS(RemoteCluster(std::move(links), make_shard_map(32, {address}), ProtocolSpec{}, NetworkModel{}),
                    TickTimeout);
    ::close(fd);
}

TEST_CASE("unreachable worker address", "[dist][tcp]")
{
    // Grab a free port, then close it so nobody listens there.
    int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    ::bind(fd, reinterpret_cast<sockaddr *>(&addr), sizeof addr);
    socklen_t len = sizeof addr;
    ::getsockname(fd, reinterpret_cast<sockaddr *>(&addr), &len);
    ::close(fd);
    CHECK_THROWS_AS(connect_worker("127.0.0.1:" + std::to_string(ntohs(addr.sin_port)), std::chrono::milliseconds(200)),
                    WorkerUnreachable);
}

TEST_CASE("tick timeout comes from the environment", "[dist]")
{
    ::unsetenv("DPSIM_TICK_TIMEOUT_MS");
    CHECK(tick_timeout() == std::chrono::milliseconds(30000));
    ::setenv("DPSIM_TICK_TIMEOUT_MS", "1500", 1);
    CHECK(tick_timeout() == std::chrono::milliseconds(1500));
    ::setenv("DPSIM_TICK_TIMEOUT_MS", "junk", 1);
    CHECK(tick_timeout() == std::chrono::milliseconds(30000));
    ::unsetenv("DPSIM_TICK_TIMEOUT_MS");
}
