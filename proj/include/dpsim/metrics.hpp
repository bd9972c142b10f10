// Metric registration and aggregation: count / min / max / mean plus a frequency histogram.
//
// Integer-valued metrics (hops, messages per node, table lengths) bucket at unit width keyed by
// the value itself. Once a non-integral value is recorded the metric switches to real mode and its
// histogram is 64 equal-width buckets over the observed [min, max], built when summarized.

#pragma once

#include "dpsim/types.hpp"

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace dpsim
{
    inline constexpr int kRealBuckets = 64;

    // Neumaier-compensated running sum.
    struct CompensatedSum
    {
        double sum = 0.0;
        double comp = 0.0;

        void add(double x);
        void add(const CompensatedSum &other);
        double value() const { return sum + comp; }
    };

    struct MetricSummary
    {
        std::string name;
        std::uint64_t count = 0;
        double min = 0.0;
        double max = 0.0;
        double mean = 0.0;
        std::map<std::int64_t, std::uint64_t> histogram;
        bool integral = true;
        double bucket_width = 1.0;  // 1 for integral metrics
        double bucket_origin = 0.0; // bucket b covers [origin + b*width, origin + (b+1)*width)
        CompensatedSum total;       // carried for exact merging; not part of equality

        std::uint64_t histogram_total() const;

        friend bool operator==(const MetricSummary &a, const MetricSummary &b)
        {
            return a.name == b.name && a.count == b.count && a.min == b.min && a.max == b.max &&
                   a.mean == b.mean && a.histogram == b.histogram && a.integral == b.integral &&
                   a.bucket_width == b.bucket_width && a.bucket_origin == b.bucket_origin;
        }
    };

    // Folds `b` into `a`: counts add, min/max fold, mean is the weighted mean, histograms add
    // bucketwise. Throws SchemaMismatch when bucket geometry differs.
    MetricSummary merge(const MetricSummary &a, const MetricSummary &b);

    class MetricRegistry
    {
    public:
        void record(const std::string &metric, double value);

        bool contains(const std::string &metric) const { return metrics_.contains(metric); }
        MetricSummary summary(const std::string &metric) const; // throws UnknownMetric
        std::vector<MetricSummary> summaries() const;           // sorted by name
        std::vector<std::string> names() const;

        void clear() { metrics_.clear(); }

    private:
        struct Accumulator
        {
            std::uint64_t count = 0;
            double min = 0.0;
            double max = 0.0;
            CompensatedSum total;
            bool integral = true;
            std::map<std::int64_t, std::uint64_t> int_hist;
            std::vector<double> raw; // real mode only
        };

        static MetricSummary finalize(const std::string &name, const Accumulator &acc);

        std::map<std::string, Accumulator> metrics_;
    };

    // Merges several shard summary sets by metric name.
    std::vector<MetricSummary> merge_stats(const std::vector<std::vector<MetricSummary>> &partials);

    // CSV: header "metric,count,min,max,mean" then one row per metric.
    std::string export_csv(const std::vector<MetricSummary> &summaries);
    // Companion histogram CSV: header "metric,bucket,frequency".
    std::string export_histogram_csv(const std::vector<MetricSummary> &summaries);
    // One JSON object per line with the same fields plus histogram and bucket geometry.
    std::string export_json_lines(const std::vector<MetricSummary> &summaries);

    std::vector<MetricSummary> import_csv(const std::string &summary_csv, const std::string &histogram_csv);
    std::vector<MetricSummary> import_json_lines(const std::string &text);

    // Writes `<stem>.csv`, `<stem>_histograms.csv` and `<stem>.jsonl`; throws IoFailure.
    void write_stats_files(const std::vector<MetricSummary> &summaries, const std::string &stem);
} // namespace dpsim
