// Experiment runs: overlay build, workload with churn triggers, stats export.
//
// An Experiment is a resumable run. advance() performs one unit of work (one join while
// building, one workload tick while running) so the control API can interleave commands at
// tick boundaries; run() simply drives it to the end.
//
// Files under output_path (a directory):
//   stats.csv, stats_histograms.csv, stats.jsonl   merged metric summaries
//   log.csv                                        message log, when write_log is set
//   manifest.json                                  the ExperimentResult

#pragma once

#include "dpsim/churn.hpp"
#include "dpsim/cluster.hpp"
#include "dpsim/config.hpp"

#include <json.hpp>

#include <fstream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace dpsim
{
    enum class RunStatus : std::uint8_t
    {
        complete,
        degraded, // a worker was lost
        aborted,  // invalid config, or the run could not reach quiescence
    };

    std::string_view to_string(RunStatus s);
    int exit_code(RunStatus s); // 0, 2, 3

    struct ExperimentResult
    {
        ExperimentConfig config;
        std::vector<MetricSummary> summaries;
        std::string digest; // 16 hex digits
        RunStatus status = RunStatus::complete;
        std::string error;
        double wall_time = 0.0; // seconds
        Tick ticks = 0;
        std::uint64_t operations = 0;
        KindCounts log_counts{};
        std::vector<ChurnReport> churn;
        std::optional<ResistanceResult> resistance;
    };

    nlohmann::json to_json(const ExperimentResult &r);

    // Node ids for a build of n nodes. Uniform ids are stratified, one per slice of width 2^B / n,
    // so shards of a contiguous id range get equal shares. Other kinds are drawn, with collisions
    // redrawn. The result is in join order.
    std::vector<NodeId> assign_ids(const ExperimentConfig &config);

    class Experiment
    {
    public:
        enum class Phase : std::uint8_t
        {
            building,
            running,
            finished,
        };

        explicit Experiment(ExperimentConfig config); // throws SchemaError, NoWorkers, WorkerUnreachable
        ~Experiment();

        Phase phase() const noexcept { return phase_; }
        // One join or one workload tick. False once the workload has been issued.
        bool advance();
        bool workload_done() const noexcept { return next_op_ >= total_ops_; }

        // Validates against the current view; throws InvalidPlan or NoEligibleNode.
        std::vector<NodeId> check_plan(const ChurnPlan &plan) const;
        ChurnReport apply_plan(const ChurnPlan &plan);

        // Settles, records loads and tables, runs the resistance test and writes the outputs.
        ExperimentResult finish();

        Cluster &cluster() { return *cluster_; }
        const ExperimentConfig &config() const noexcept { return config_; }
        std::size_t joined() const noexcept { return joined_; }
        std::uint64_t operations_issued() const noexcept { return next_op_; }
        std::uint64_t operations_total() const noexcept { return total_ops_; }
        std::string digest();

    private:
        void join_next();
        void issue_op();
        void fire_triggers(bool all);
        void write_outputs(const ExperimentResult &r);

        ExperimentConfig config_;
        std::unique_ptr<Cluster> cluster_;
        std::unique_ptr<std::ofstream> log_file_;
        std::vector<NodeId> ids_;
        Rng contact_rng_;
        Rng origin_rng_;
        std::vector<Sampler> key_samplers_; // one per workload item
        std::size_t joined_ = 0;
        std::uint64_t total_ops_ = 0;
        std::uint64_t next_op_ = 0;
        std::size_t next_trigger_ = 0;
        std::vector<ChurnReport> churn_;
        Phase phase_ = Phase::building;
        double started_ = 0.0;
    };

    // Runs to completion. Errors become the result status; nothing is thrown.
    ExperimentResult run(const ExperimentConfig &config);
    // Sequentially; one failing item does not stop the rest.
    std::vector<ExperimentResult> schedule(const std::vector<ExperimentConfig> &configs);
    // Config files (*.xml, *.json) of a directory in name order. Unparsable files yield aborted results.
    std::vector<ExperimentResult> schedule_directory(const std::string &dir);
} // namespace dpsim
