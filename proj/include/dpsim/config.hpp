// Experiment configuration: XML (normative) and an equivalent JSON form.
//
// <experiment>
//   <name>fanout-sweep-m4</name>
//   <seed>7</seed>
//   <protocol><name>baton_star</name><fanout>4</fanout><keyBits>32</keyBits></protocol>
//   <networkSize>10000</networkSize>
//   <distribution>                        distribution parameters, referenced by name below
//     <random><seed>1</seed></random>
//     <beta><alpha>2.0</alpha><beta>4.0</beta></beta>
//     <powerLaw><alpha>0.5</alpha><beta>1.0</beta></powerLaw>
//   </distribution>
//   <idDistribution>uniform</idDistribution>
//   <network><baseLatency>1</baseLatency><backgroundRate>0</backgroundRate>
//            <queueCap>65536</queueCap><nodeStep><node>42</node><step>3</step></nodeStep></network>
//   <workload>
//     <operation><kind>lookup</kind><count>3000</count><keys>uniform</keys></operation>
//     <operation><kind>range</kind><count>100</count><keys>beta</keys><span>65536</span></operation>
//   </workload>
//   <churn>
//     <event><tick>500</tick><kind>failure</kind><mode>concurrent</mode>
//            <fraction>0.1</fraction><distribution>uniform</distribution></event>
//     <event><tick>900</tick><kind>departure</kind><node>123</node><node>456</node></event>
//   </churn>
//   <resistance><initial>0.1</initial><increment>0.01</increment></resistance>
//   <shards><count>2</count><worker>10.0.0.2:7000</worker></shards>
//   <output><path>out/m4</path><log>true</log></output>
// </experiment>
//
// Every element is optional except protocol and networkSize. A document whose root is a bare
// <distribution> block is accepted too and yields defaults for everything else.

#pragma once

#include "dpsim/churn.hpp"
#include "dpsim/distribution.hpp"
#include "dpsim/engine.hpp"
#include "dpsim/protocol.hpp"

#include <json.hpp>

#include <optional>
#include <string>
#include <vector>

namespace dpsim
{
    struct WorkloadItem
    {
        MessageKind kind = MessageKind::SEARCH; // SEARCH ("lookup"), INSERT, DELETE, RANGE
        std::uint64_t count = 0;
        std::string keys = "uniform"; // distribution name
        Key span = 0;                  // RANGE: hi - lo; 0 = 2^(B-10)

        friend bool operator==(const WorkloadItem &, const WorkloadItem &) = default;
    };

    struct ChurnTrigger
    {
        Tick tick = 0; // workload tick, 0 = before the first operation
        ChurnPlan plan;
        std::string distribution = "uniform"; // fraction plans draw nodes with this

        friend bool operator==(const ChurnTrigger &, const ChurnTrigger &) = default;
    };

    struct ResistanceSpec
    {
        double initial = 0.1;
        double increment = 0.01;

        friend bool operator==(const ResistanceSpec &, const ResistanceSpec &) = default;
    };

    struct ExperimentConfig
    {
        std::string name = "experiment";
        std::uint64_t seed = 1;
        ProtocolSpec protocol;
        std::uint64_t network_size = 1000;
        // Parameters per distribution kind; kinds not listed use default_params().
        std::map<DistributionKind, std::map<std::string, double>> distributions;
        std::optional<std::uint64_t> distribution_seed; // <random><seed>; defaults to `seed`
        std::string id_distribution = "uniform";
        NetworkModel network;
        std::vector<WorkloadItem> workload;
        std::vector<ChurnTrigger> churn;
        std::optional<ResistanceSpec> resistance;
        std::uint32_t shard_count = 1; // in-process shards when no workers are listed
        std::vector<std::string> workers;
        std::string output_path; // empty: no files
        bool write_log = false;

        // Spec of a named distribution, seeded from the distribution seed and `stream`.
        DistributionSpec distribution(const std::string &name, std::uint64_t stream) const;

        void validate(const std::string &prefix = "") const; // throws SchemaError, paths under `prefix`

        friend bool operator==(const ExperimentConfig &, const ExperimentConfig &) = default;
    };

    ExperimentConfig parse_config(const std::string &xml);
    ExperimentConfig parse_config_file(const std::string &path); // .json files use the JSON form
    std::string to_xml(const ExperimentConfig &config);

    ExperimentConfig config_from_json(const nlohmann::json &j);
    nlohmann::json to_json(const ExperimentConfig &config);

    // "lookup", "insert", "delete", "range"
    std::string_view workload_kind_name(MessageKind kind);
    std::optional<MessageKind> parse_workload_kind(std::string_view name);
} // namespace dpsim
