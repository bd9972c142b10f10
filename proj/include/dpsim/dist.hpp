// Coordinator/worker execution of one overlay across shards.
//
// Every worker holds a full replica of the overlay structure and hosts the peers of its id range.
// The coordinator keeps one more replica (hosting nothing) to answer structural queries, relays
// FORWARD frames between workers and drives ticks in lockstep: a tick starts only after every
// worker has reported TICK_DONE for the previous one and all forwards have been handed over.

#pragma once

#include "dpsim/cluster.hpp"
#include "dpsim/wire.hpp"

#include <atomic>
#include <chrono>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace dpsim
{
    // Worker-side state machine: one per coordinator connection.
    class WorkerSession
    {
    public:
        // Handles one coordinator frame and appends the replies, in order.
        void handle(const Frame &in, std::vector<Frame> &out);
        bool finished() const noexcept { return finished_; }
        const Engine *engine() const { return engine_ ? &*engine_ : nullptr; }

    private:
        Frame reply(FrameType type, nlohmann::json payload);
        ShardStatus status() const;
        void drain_remote(std::vector<Frame> &out);

        std::optional<Engine> engine_;
        ShardMap map_;
        std::size_t shard_ = 0;
        std::uint64_t seq_out_ = 0;
        std::uint64_t seq_in_ = 0;
        bool finished_ = false;
    };

    // Coordinator's end of a connection to one worker.
    class Link
    {
    public:
        virtual ~Link() = default;
        virtual void send(const Frame &f) = 0;
        // Blocks until the next frame; throws WorkerUnreachable or TickTimeout.
        virtual Frame receive() = 0;
        virtual std::string address() const = 0;
    };

    // Milliseconds from DPSIM_TICK_TIMEOUT_MS, default 30000.
    std::chrono::milliseconds tick_timeout();

    // A worker session in this process. Frames still go through their text encoding.
    std::unique_ptr<Link> make_in_process_link(std::string label);
    // Connects to "host:port"; throws WorkerUnreachable.
    std::unique_ptr<Link> connect_worker(const std::string &address, std::chrono::milliseconds timeout);

    // TCP listener serving coordinator connections one at a time until a SHUTDOWN frame.
    class WorkerServer
    {
    public:
        explicit WorkerServer(const std::string &listen); // "host:port", port 0 picks one
        ~WorkerServer();
        WorkerServer(const WorkerServer &) = delete;
        WorkerServer &operator=(const WorkerServer &) = delete;

        std::uint16_t port() const noexcept { return port_; }
        // Returns after a SHUTDOWN or stop().
        void run();
        // Closes the listener and any open connection; run() returns. Used for fault injection.
        void stop();

    private:
        void serve(int fd);

        int listen_fd_ = -1;
        std::atomic<int> conn_fd_{-1};
        std::atomic<bool> stopping_{false};
        std::uint16_t port_ = 0;
    };

    class RemoteCluster : public Cluster
    {
    public:
        // links[i] serves map.shards[i].
        RemoteCluster(std::vector<std::unique_ptr<Link>> links, ShardMap map, const ProtocolSpec &protocol,
                      const NetworkModel &model, bool keep_log = true);
        ~RemoteCluster() override;

        using Cluster::apply;
        void apply(const std::vector<Command> &commands) override;
        void step() override;
        bool quiescent() override;
        std::int64_t substitutions_pending() override;
        Tick now() const override { return now_; }
        const Engine &view() const override { return replica_; }

        std::vector<MetricSummary> stats() override;
        KindCounts log_counts() override;
        void reset_log_counts() override;
        Counters counters() override;
        std::vector<LogRecord> log() override;
        std::vector<std::uint64_t> log_digests() override;
        std::map<std::uint64_t, OpResult> op_results() override;
        std::size_t shard_count() const override { return links_.size(); }
        void shutdown() override;

        const ShardMap &shard_map() const { return map_; }

    private:
        struct Peer
        {
            std::unique_ptr<Link> link;
            std::uint64_t seq_out = 0;
            std::uint64_t seq_in = 0;
            ShardStatus status;
        };

        void send(std::size_t shard, FrameType type, nlohmann::json payload);
        // Collects FORWARD frames until a frame of `type` arrives; returns its payload.
        nlohmann::json await(std::size_t shard, FrameType type);
        void route(const Message &m);
        std::vector<nlohmann::json> gather_stats(bool with_log);

        std::vector<Peer> links_;
        ShardMap map_;
        Engine replica_;
        Tick now_ = 0;
        std::vector<std::vector<Message>> pending_; // forwards per destination shard
        bool closed_ = false;
    };

    // k in-process shards over equal id ranges.
    std::unique_ptr<RemoteCluster> make_sharded_cluster(std::size_t shards, const ProtocolSpec &protocol,
                                                        const NetworkModel &model, bool keep_log = true);
    // One shard per worker address.
    std::unique_ptr<RemoteCluster> make_remote_cluster(const std::vector<std::string> &workers,
                                                       const ProtocolSpec &protocol, const NetworkModel &model,
                                                       bool keep_log = true);
} // namespace dpsim
