#include "dpsim/metrics.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace dpsim
{
    namespace
    {
        std::string format_double(double v)
        {
            char buf[64];
            auto res = std::to_chars(buf, buf + sizeof buf, v);
            return std::string(buf, res.ptr);
        }

        double parse_double(std::string_view s)
        {
            double v = 0.0;
            auto res = std::from_chars(s.data(), s.data() + s.size(), v);
            if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
                throw IoFailure("malformed number '" + std::string(s) + "'");
            return v;
        }

        template <typename Int>
        Int parse_int(std::string_view s)
        {
            Int v{};
            auto res = std::from_chars(s.data(), s.data() + s.size(), v);
            if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
                throw IoFailure("malformed integer '" + std::string(s) + "'");
            return v;
        }

        std::vector<std::string_view> split(std::string_view line, char sep)
        {
            std::vector<std::string_view> out;
            std::size_t start = 0;
            for (;;)
            {
                auto pos = line.find(sep, start);
                if (pos == std::string_view::npos)
                {
                    out.push_back(line.substr(start));
                    return out;
                }
                out.push_back(line.substr(start, pos - start));
                start = pos + 1;
            }
        }

        std::vector<std::string_view> lines_of(std::string_view text)
        {
            std::vector<std::string_view> out;
            for (auto l : split(text, '\n'))
            {
                if (!l.empty() && l.back() == '\r')
                    l.remove_suffix(1);
                if (!l.empty())
                    out.push_back(l);
            }
            return out;
        }
    } // namespace

    void CompensatedSum::add(double x)
    {
        const double t = sum + x;
        if (std::abs(sum) >= std::abs(x))
            comp += (sum - t) + x;
        else
            comp += (x - t) + sum;
        sum = t;
    }

    void CompensatedSum::add(const CompensatedSum &other)
    {
        add(other.sum);
        add(other.comp);
    }

    std::uint64_t MetricSummary::histogram_total() const
    {
        std::uint64_t n = 0;
        for (const auto &[_, f] : histogram)
            n += f;
        return n;
    }

    MetricSummary merge(const MetricSummary &a, const MetricSummary &b)
    {
        if (b.count == 0)
            return a;
        if (a.count == 0)
        {
            MetricSummary out = b;
            out.name = a.name.empty() ? b.name : a.name;
            return out;
        }
        if (a.integral != b.integral || a.bucket_width != b.bucket_width || a.bucket_origin != b.bucket_origin)
            throw SchemaMismatch("metric '" + a.name + "' has incompatible bucket geometry across shards");

        MetricSummary out;
        out.name = a.name;
        out.count = a.count + b.count;
        out.min = std::min(a.min, b.min);
        out.max = std::max(a.max, b.max);
        out.total = a.total;
        out.total.add(b.total);
        out.mean = out.total.value() / static_cast<double>(out.count);
        out.integral = a.integral;
        out.bucket_width = a.bucket_width;
        out.bucket_origin = a.bucket_origin;
        out.histogram = a.histogram;
        for (const auto &[bucket, f] : b.histogram)
            out.histogram[bucket] += f;
        return out;
    }

    void MetricRegistry::record(const std::string &metric, double value)
    {
        auto &acc = metrics_[metric];
        if (acc.count == 0)
        {
            acc.min = value;
            acc.max = value;
        }
        else
        {
            acc.min = std::min(acc.min, value);
            acc.max = std::max(acc.max, value);
        }
        ++acc.count;
        acc.total.add(value);

        const bool integral_value = std::nearbyint(value) == value && std::abs(value) < 9.0e15;
        if (acc.integral && !integral_value)
        {
            acc.integral = false;
            for (const auto &[bucket, f] : acc.int_hist)
                acc.raw.insert(acc.raw.end(), f, static_cast<double>(bucket));
            acc.int_hist.clear();
        }
        if (acc.integral)
            ++acc.int_hist[static_cast<std::int64_t>(value)];
        else
            acc.raw.push_back(value);
    }

    MetricSummary MetricRegistry::finalize(const std::string &name, const Accumulator &acc)
    {
        MetricSummary s;
        s.name = name;
        s.count = acc.count;
        s.min = acc.min;
        s.max = acc.max;
        s.total = acc.total;
        s.mean = acc.count ? acc.total.value() / static_cast<double>(acc.count) : 0.0;
        // Compensated rounding can land a hair outside [min, max].
        s.mean = std::clamp(s.mean, s.min, s.max);
        s.integral = acc.integral;
        if (acc.integral)
        {
            s.histogram = acc.int_hist;
            return s;
        }
        s.bucket_origin = acc.min;
        s.bucket_width = acc.max > acc.min ? (acc.max - acc.min) / kRealBuckets : 1.0;
        for (double v : acc.raw)
        {
            auto b = static_cast<std::int64_t>(std::floor((v - s.bucket_origin) / s.bucket_width));
            b = std::clamp<std::int64_t>(b, 0, kRealBuckets - 1);
            ++s.histogram[b];
        }
        return s;
    }

    MetricSummary MetricRegistry::summary(const std::string &metric) const
    {
        auto it = metrics_.find(metric);
        if (it == metrics_.end())
            throw UnknownMetric("unknown metric '" + metric + "'");
        return finalize(it->first, it->second);
    }

    std::vector<MetricSummary> MetricRegistry::summaries() const
    {
        std::vector<MetricSummary> out;
        out.reserve(metrics_.size());
        for (const auto &[name, acc] : metrics_)
            out.push_back(finalize(name, acc));
        return out;
    }

    std::vector<std::string> MetricRegistry::names() const
    {
        std::vector<std::string> out;
        for (const auto &[name, _] : metrics_)
            out.push_back(name);
        return out;
    }

    std::vector<MetricSummary> merge_stats(const std::vector<std::vector<MetricSummary>> &partials)
    {
        std::map<std::string, MetricSummary> merged;
        for (const auto &set : partials)
        {
            for (const auto &s : set)
            {
                auto [it, inserted] = merged.try_emplace(s.name, s);
                if (!inserted)
                    it->second = merge(it->second, s);
            }
        }
        std::vector<MetricSummary> out;
        for (auto &[_, s] : merged)
            out.push_back(std::move(s));
        return out;
    }

    std::string export_csv(const std::vector<MetricSummary> &summaries)
    {
        std::string out = "metric,count,min,max,mean\n";
        for (const auto &s : summaries)
        {
            out += s.name + ',' + std::to_string(s.count) + ',' + format_double(s.min) + ',' + format_double(s.max) +
                   ',' + format_double(s.mean) + '\n';
        }
        return out;
    }

    std::string export_histogram_csv(const std::vector<MetricSummary> &summaries)
    {
        std::string out = "metric,bucket,frequency\n";
        for (const auto &s : summaries)
            for (const auto &[bucket, f] : s.histogram)
                out += s.name + ',' + std::to_string(bucket) + ',' + std::to_string(f) + '\n';
        return out;
    }

    std::string export_json_lines(const std::vector<MetricSummary> &summaries)
    {
        std::string out;
        for (const auto &s : summaries)
        {
            nlohmann::json hist = nlohmann::json::array();
            for (const auto &[bucket, f] : s.histogram)
                hist.push_back({bucket, f});
            nlohmann::json j = {
                {"metric", s.name},
                {"count", s.count},
                {"min", s.min},
                {"max", s.max},
                {"mean", s.mean},
                {"integral", s.integral},
                {"bucket_width", s.bucket_width},
                {"bucket_origin", s.bucket_origin},
                {"histogram", hist},
            };
            out += j.dump() + '\n';
        }
        return out;
    }

    namespace
    {
        void restore_total(MetricSummary &s)
        {
            s.total = {};
            s.total.add(s.mean * static_cast<double>(s.count));
        }
    } // namespace

    std::vector<MetricSummary> import_csv(const std::string &summary_csv, const std::string &histogram_csv)
    {
        auto rows = lines_of(summary_csv);
        if (rows.empty() || rows.front() != "metric,count,min,max,mean")
            throw IoFailure("summary CSV lacks the metric,count,min,max,mean header");
        std::map<std::string, MetricSummary> by_name;
        for (std::size_t i = 1; i < rows.size(); ++i)
        {
            auto f = split(rows[i], ',');
            if (f.size() != 5)
                throw IoFailure("summary CSV row " + std::to_string(i) + " has " + std::to_string(f.size()) + " fields");
            MetricSummary s;
            s.name = std::string(f[0]);
            s.count = parse_int<std::uint64_t>(f[1]);
            s.min = parse_double(f[2]);
            s.max = parse_double(f[3]);
            s.mean = parse_double(f[4]);
            restore_total(s);
            by_name[s.name] = std::move(s);
        }
        auto hrows = lines_of(histogram_csv);
        if (hrows.empty() || hrows.front() != "metric,bucket,frequency")
            throw IoFailure("histogram CSV lacks the metric,bucket,frequency header");
        for (std::size_t i = 1; i < hrows.size(); ++i)
        {
            auto f = split(hrows[i], ',');
            if (f.size() != 3)
                throw IoFailure("histogram CSV row " + std::to_string(i) + " malformed");
            auto it = by_name.find(std::string(f[0]));
            if (it == by_name.end())
                throw IoFailure("histogram row for unknown metric '" + std::string(f[0]) + "'");
            it->second.histogram[parse_int<std::int64_t>(f[1])] = parse_int<std::uint64_t>(f[2]);
        }
        std::vector<MetricSummary> out;
        for (auto &[_, s] : by_name)
        {
            // CSV does not carry bucket geometry; integral metrics have bucket keys equal to values.
            s.integral = std::nearbyint(s.min) == s.min && std::nearbyint(s.max) == s.max &&
                         s.histogram.size() <= static_cast<std::size_t>(s.max - s.min + 1) &&
                         (s.histogram.empty() || (s.histogram.begin()->first == static_cast<std::int64_t>(s.min) &&
                                                  s.histogram.rbegin()->first == static_cast<std::int64_t>(s.max)));
            if (!s.integral)
            {
                s.bucket_origin = s.min;
                s.bucket_width = s.max > s.min ? (s.max - s.min) / kRealBuckets : 1.0;
            }
            out.push_back(std::move(s));
        }
        return out;
    }

    std::vector<MetricSummary> import_json_lines(const std::string &text)
    {
        std::vector<MetricSummary> out;
        for (auto line : lines_of(text))
        {
            auto j = nlohmann::json::parse(line, nullptr, false);
            if (j.is_discarded())
                throw IoFailure("malformed JSON line in stats export");
            MetricSummary s;
            s.name = j.at("metric").get<std::string>();
            s.count = j.at("count").get<std::uint64_t>();
            s.min = j.at("min").get<double>();
            s.max = j.at("max").get<double>();
            s.mean = j.at("mean").get<double>();
            s.integral = j.value("integral", true);
            s.bucket_width = j.value("bucket_width", 1.0);
            s.bucket_origin = j.value("bucket_origin", 0.0);
            for (const auto &entry : j.value("histogram", nlohmann::json::array()))
                s.histogram[entry.at(0).get<std::int64_t>()] = entry.at(1).get<std::uint64_t>();
            restore_total(s);
            out.push_back(std::move(s));
        }
        return out;
    }

    void write_stats_files(const std::vector<MetricSummary> &summaries, const std::string &stem)
    {
        auto write = [](const std::string &path, const std::string &body) {
            std::ofstream f(path, std::ios::binary);
            if (!f)
                throw IoFailure("cannot open '" + path + "' for writing");
            f << body;
            if (!f)
                throw IoFailure("write to '" + path + "' failed");
        };
        write(stem + ".csv", export_csv(summaries));
        write(stem + "_histograms.csv", export_histogram_csv(summaries));
        write(stem + ".jsonl", export_json_lines(summaries));
    }
} // namespace dpsim
