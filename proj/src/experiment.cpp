#include "dpsim/experiment.hpp"

#include "dpsim/dist.hpp"
#include "dpsim/wire.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <unordered_set>

namespace dpsim
{
    using nlohmann::json;

    namespace
    {
        // Stream tags for derive_seed.
        constexpr std::uint64_t kIdStream = 1;
        constexpr std::uint64_t kContactStream = 2;
        constexpr std::uint64_t kOriginStream = 3;
        constexpr std::uint64_t kKeyStream = 10;
        constexpr std::uint64_t kChurnStream = 100;
        constexpr std::uint64_t kResistanceStream = 200;

        constexpr Tick kSettleTicks = 1000000;

        double wall_seconds()
        {
            using namespace std::chrono;
            return duration<double>(steady_clock::now().time_since_epoch()).count();
        }

        std::string hex64(std::uint64_t x)
        {
            char buf[17];
            std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(x));
            return buf;
        }

        void write_file(const std::string &path, const std::string &body)
        {
            std::ofstream f(path, std::ios::binary);
            if (!f)
                throw IoFailure("cannot open '" + path + "' for writing");
            f << body;
            if (!f)
                throw IoFailure("write to '" + path + "' failed");
        }

        void write_manifest(const ExperimentResult &r)
        {
            if (r.config.output_path.empty())
                return;
            std::filesystem::create_directories(r.config.output_path);
            write_file(r.config.output_path + "/manifest.json", to_json(r).dump(2) + "\n");
        }

        Key key_from_unit(double u, Key space)
        {
            auto k = static_cast<Key>(u * static_cast<double>(space));
            return std::min(k, space - 1);
        }
    } // namespace

    std::string_view to_string(RunStatus s)
    {
        switch (s)
        {
        case RunStatus::complete:
            return "complete";
        case RunStatus::degraded:
            return "degraded";
        case RunStatus::aborted:
            return "aborted";
        }
        return "aborted";
    }

    int exit_code(RunStatus s)
    {
        switch (s)
        {
        case RunStatus::complete:
            return 0;
        case RunStatus::degraded:
            return 2;
        case RunStatus::aborted:
            return 3;
        }
        return 3;
    }

    json to_json(const ExperimentResult &r)
    {
        json summaries = json::array();
        for (const auto &s : r.summaries)
            summaries.push_back(to_json(s));
        json counts = json::object();
        for (std::size_t k = 0; k < kMessageKindCount; ++k)
            counts[std::string(to_string(static_cast<MessageKind>(k)))] = r.log_counts[k];
        json churn = json::array();
        for (const auto &c : r.churn)
        {
            json nodes = json::array();
            for (auto id : c.nodes)
                nodes.push_back(id.value);
            churn.push_back({{"tick", c.tick},
                             {"nodes", nodes},
                             {"replacements", c.replacements},
                             {"substitutes_not_found", c.substitutes_not_found}});
        }
        json j = {{"config", to_json(r.config)},
                  {"status", to_string(r.status)},
                  {"digest", r.digest},
                  {"wall_time", r.wall_time},
                  {"ticks", r.ticks},
                  {"operations", r.operations},
                  {"log_counts", counts},
                  {"churn", churn},
                  {"summaries", summaries}};
        if (!r.error.empty())
            j["error"] = r.error;
        if (r.resistance)
            j["resistance"] = {{"fraction", r.resistance->fraction},
                               {"failed", r.resistance->failed},
                               {"rounds", r.resistance->rounds},
                               {"partitioned", r.resistance->partitioned}};
        return j;
    }

    std::vector<NodeId> assign_ids(const ExperimentConfig &config)
    {
        const std::uint64_t n = config.network_size;
        const Key space = key_space(config.protocol.key_bits);
        if (n == 0 || n > space)
            throw InvalidParams("network size must lie in [1, 2^keyBits]");
        const DistributionSpec spec = config.distribution(config.id_distribution, kIdStream);
        std::vector<NodeId> ids;
        ids.reserve(n);
        if (spec.kind == DistributionKind::uniform)
        {
            // One id inside [floor(iK/n), floor((i+1)K/n)) per slot, then a seeded shuffle gives
            // the join order.
            Rng rng(spec.seed);
            auto edge = [&](std::uint64_t i) {
                return static_cast<Key>(static_cast<unsigned __int128>(i) * space / n);
            };
            for (std::uint64_t i = 0; i < n; ++i)
            {
                const Key lo = edge(i);
                ids.emplace_back(lo + rng.below(edge(i + 1) - lo));
            }
            for (std::uint64_t i = n; i > 1; --i)
                std::swap(ids[i - 1], ids[rng.below(i)]);
            return ids;
        }
        Sampler sampler(spec);
        std::unordered_set<std::uint64_t> seen;
        seen.reserve(n * 2);
        std::uint64_t redraws = 0;
        while (ids.size() < n)
        {
            const Key id = key_from_unit(sampler.draw_unit(), space);
            if (seen.insert(id).second)
                ids.emplace_back(id);
            else if (++redraws > 100 * n)
                throw InvalidParams("id distribution '" + config.id_distribution +
                                    "' is too concentrated for the network size");
        }
        return ids;
    }

    // ------------------------------------------------------------------------------ Experiment

    Experiment::Experiment(ExperimentConfig config)
        : config_(std::move(config)), contact_rng_(derive_seed(config_.seed, kContactStream)),
          origin_rng_(derive_seed(config_.seed, kOriginStream)), started_(wall_seconds())
    {
        config_.validate("experiment");
        ids_ = assign_ids(config_);
        for (std::size_t i = 0; i < config_.workload.size(); ++i)
        {
            key_samplers_.emplace_back(config_.distribution(config_.workload[i].keys, kKeyStream + i));
            total_ops_ += config_.workload[i].count;
        }
        if (!config_.output_path.empty())
            std::filesystem::create_directories(config_.output_path);

        const bool log_to_file = config_.write_log && !config_.output_path.empty();
        if (!config_.workers.empty())
            cluster_ = make_remote_cluster(config_.workers, config_.protocol, config_.network, log_to_file);
        else if (config_.shard_count > 1)
            cluster_ = make_sharded_cluster(config_.shard_count, config_.protocol, config_.network, log_to_file);
        else
        {
            auto local = std::make_unique<LocalCluster>(config_.protocol, config_.network);
            local->engine().set_keep_log(false);
            if (log_to_file)
            {
                log_file_ = std::make_unique<std::ofstream>(config_.output_path + "/log.csv", std::ios::binary);
                if (!*log_file_)
                    throw IoFailure("cannot open '" + config_.output_path + "/log.csv' for writing");
                local->engine().set_log_sink(log_file_.get());
            }
            cluster_ = std::move(local);
        }
    }

    Experiment::~Experiment()
    {
        try
        {
            if (cluster_)
                cluster_->shutdown();
        }
        catch (const std::exception &)
        {
        }
    }

    void Experiment::join_next()
    {
        const NodeId node = ids_[joined_];
        if (joined_ == 0)
            cluster_->apply(cmd::Bootstrap{node});
        else
            join_node(*cluster_, node, ids_[contact_rng_.below(joined_)], kSettleTicks);
        ++joined_;
    }

    void Experiment::issue_op()
    {
        std::size_t item = 0;
        for (std::uint64_t before = 0; item < config_.workload.size(); ++item)
        {
            before += config_.workload[item].count;
            if (next_op_ < before)
                break;
        }
        const WorkloadItem &w = config_.workload[item];
        const auto &live = cluster_->view().working_members();
        if (live.empty())
            throw NoEligibleNode("no live node left to originate operations");
        const Key space = key_space(config_.protocol.key_bits);

        OperationSpec op;
        op.op_id = next_op_ + 1;
        op.kind = w.kind;
        op.origin = live[origin_rng_.below(live.size())];
        op.key = key_from_unit(key_samplers_[item].draw_unit(), space);
        if (w.kind == MessageKind::RANGE)
        {
            const Key span = w.span != 0 ? w.span : (config_.protocol.key_bits > 10 ? Key{1} << (config_.protocol.key_bits - 10) : Key{1});
            op.hi = span >= space - 1 - op.key ? space - 1 : op.key + span;
        }
        if (w.kind == MessageKind::INSERT)
            for (int b = 0; b < 8; ++b)
                op.value.push_back(static_cast<std::uint8_t>(op.op_id >> (8 * b)));
        cluster_->apply(cmd::Operation{op});
    }

    void Experiment::fire_triggers(bool all)
    {
        while (next_trigger_ < config_.churn.size() && (all || config_.churn[next_trigger_].tick <= next_op_))
        {
            const ChurnTrigger &t = config_.churn[next_trigger_];
            ChurnPlan plan = t.plan;
            plan.distribution = config_.distribution(t.distribution, kChurnStream + next_trigger_);
            ++next_trigger_;
            apply_plan(plan);
        }
    }

    bool Experiment::advance()
    {
        switch (phase_)
        {
        case Phase::building:
            join_next();
            if (joined_ == ids_.size())
            {
                settle(*cluster_, kSettleTicks);
                cluster_->apply(cmd::ResetLoad{});
                phase_ = Phase::running;
            }
            return true;
        case Phase::running:
            fire_triggers(false);
            if (workload_done())
                return false;
            issue_op();
            ++next_op_;
            cluster_->step();
            return true;
        case Phase::finished:
            break;
        }
        return false;
    }

    std::vector<NodeId> Experiment::check_plan(const ChurnPlan &plan) const
    {
        plan.validate();
        return resolve_plan(cluster_->view(), plan);
    }

    ChurnReport Experiment::apply_plan(const ChurnPlan &plan)
    {
        churn_.push_back(execute_plan(*cluster_, plan, kSettleTicks));
        return churn_.back();
    }

    std::string Experiment::digest()
    {
        const auto parts = cluster_->log_digests();
        if (parts.size() == 1)
            return hex64(parts.front());
        std::uint64_t h = 0xcbf29ce484222325ULL;
        for (auto d : parts)
            for (int b = 0; b < 8; ++b)
            {
                h ^= (d >> (8 * b)) & 0xff;
                h *= 0x100000001b3ULL;
            }
        return hex64(h);
    }

    ExperimentResult Experiment::finish()
    {
        while (phase_ == Phase::building)
            advance();
        fire_triggers(true);
        settle(*cluster_, kSettleTicks);
        cluster_->apply(std::vector<Command>{cmd::RecordLoad{}, cmd::RecordTables{}});

        ExperimentResult r;
        r.config = config_;
        r.summaries = cluster_->stats();
        r.log_counts = cluster_->log_counts();
        r.operations = next_op_;
        r.churn = churn_;
        if (config_.resistance)
        {
            Sampler sampler(config_.distribution("uniform", kResistanceStream));
            r.resistance = resistance_experiment(*cluster_, config_.resistance->initial,
                                                 config_.resistance->increment, sampler);
        }
        r.ticks = cluster_->now();
        r.digest = digest();
        phase_ = Phase::finished;
        if (log_file_)
            log_file_->flush();
        r.wall_time = wall_seconds() - started_;
        write_outputs(r);
        return r;
    }

    void Experiment::write_outputs(const ExperimentResult &r)
    {
        if (config_.output_path.empty())
            return;
        write_stats_files(r.summaries, config_.output_path + "/stats");
        if (config_.write_log && !log_file_)
        {
            std::ofstream f(config_.output_path + "/log.csv", std::ios::binary);
            for (const auto &rec : cluster_->log())
                f << format_log_record(rec) << '\n';
            if (!f)
                throw IoFailure("write to '" + config_.output_path + "/log.csv' failed");
        }
        write_manifest(r);
    }

    // --------------------------------------------------------------------------------- drivers

    ExperimentResult run(const ExperimentConfig &config)
    {
        const double t0 = wall_seconds();
        ExperimentResult failed;
        failed.config = config;
        try
        {
            Experiment e(config);
            while (e.advance())
            {
            }
            return e.finish();
        }
        catch (const WorkerUnreachable &ex)
        {
            failed.status = RunStatus::degraded;
            failed.error = ex.what();
        }
        catch (const TickTimeout &ex)
        {
            failed.status = RunStatus::degraded;
            failed.error = ex.what();
        }
        catch (const std::exception &ex)
        {
            failed.status = RunStatus::aborted;
            failed.error = ex.what();
        }
        failed.wall_time = wall_seconds() - t0;
        try
        {
            write_manifest(failed);
        }
        catch (const std::exception &)
        {
        }
        return failed;
    }

    std::vector<ExperimentResult> schedule(const std::vector<ExperimentConfig> &configs)
    {
        std::vector<ExperimentResult> out;
        out.reserve(configs.size());
        for (const auto &c : configs)
            out.push_back(run(c));
        return out;
    }

    std::vector<ExperimentResult> schedule_directory(const std::string &dir)
    {
        std::vector<std::filesystem::path> files;
        for (const auto &e : std::filesystem::directory_iterator(dir))
            if (e.is_regular_file() && (e.path().extension() == ".xml" || e.path().extension() == ".json"))
                files.push_back(e.path());
        std::sort(files.begin(), files.end());
        std::vector<ExperimentResult> out;
        for (const auto &f : files)
        {
            try
            {
                out.push_back(run(parse_config_file(f.string())));
            }
            catch (const std::exception &ex)
            {
                ExperimentResult r;
                r.config.name = f.stem().string();
                r.status = RunStatus::aborted;
                r.error = ex.what();
                out.push_back(std::move(r));
            }
        }
        return out;
    }
} // namespace dpsim
