#include "dpsim/config.hpp"

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>

#include <charconv>
#include <fstream>
#include <regex>
#include <sstream>

namespace dpsim
{
    using nlohmann::json;

    std::string_view workload_kind_name(MessageKind kind)
    {
        switch (kind)
        {
        case MessageKind::INSERT:
            return "insert";
        case MessageKind::DELETE:
            return "delete";
        case MessageKind::RANGE:
            return "range";
        default:
            return "lookup";
        }
    }

    std::optional<MessageKind> parse_workload_kind(std::string_view name)
    {
        if (name == "lookup" || name == "search")
            return MessageKind::SEARCH;
        if (name == "insert")
            return MessageKind::INSERT;
        if (name == "delete")
            return MessageKind::DELETE;
        if (name == "range")
            return MessageKind::RANGE;
        return std::nullopt;
    }

    namespace
    {
        // Element name of each kind inside <distribution>.
        std::string block_name(DistributionKind k)
        {
            return k == DistributionKind::powerlaw ? "powerLaw" : std::string(to_string(k));
        }

        // Read-side cursor carrying the element path for error messages.
        class Node
        {
        public:
            Node(const json &j, std::string path) : j_(j), path_(std::move(path)) {}

            const std::string &path() const { return path_; }
            const json &raw() const { return j_; }

            [[noreturn]] void fail(const std::string &what) const { throw SchemaError(path_, what); }

            bool has(const std::string &key) const { return j_.is_object() && j_.contains(key); }

            Node at(const std::string &key) const
            {
                if (!has(key))
                    throw SchemaError(join(key), "missing element");
                return Node(j_.at(key), join(key));
            }

            // Repeated element: a single occurrence comes through as a scalar or object.
            std::vector<Node> list(const std::string &key) const
            {
                std::vector<Node> out;
                if (!has(key))
                    return out;
                const json &v = j_.at(key);
                if (v.is_array())
                    for (std::size_t i = 0; i < v.size(); ++i)
                        out.emplace_back(v[i], join(key) + "[" + std::to_string(i) + "]");
                else
                    out.emplace_back(v, join(key));
                return out;
            }

            void only(std::initializer_list<const char *> keys) const
            {
                if (j_.is_null() || (j_.is_string() && j_.get<std::string>().empty()))
                    return; // <empty/>
                if (!j_.is_object())
                    fail("expected child elements");
                for (const auto &[k, _] : j_.items())
                {
                    bool known = false;
                    for (const char *allowed : keys)
                        known = known || k == allowed;
                    if (!known)
                        throw SchemaError(join(k), "unknown element");
                }
            }

            std::string text() const
            {
                if (j_.is_string())
                    return j_.get<std::string>();
                if (j_.is_number() || j_.is_boolean())
                    return j_.dump();
                fail("expected a value");
            }

            std::uint64_t u64() const
            {
                if (j_.is_number_unsigned())
                    return j_.get<std::uint64_t>();
                if (j_.is_number_integer())
                    fail("must not be negative");
                const std::string s = trim(text());
                std::uint64_t v = 0;
                auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
                if (ec != std::errc{} || p != s.data() + s.size())
                    fail("expected an unsigned integer, got '" + s + "'");
                return v;
            }

            double real() const
            {
                if (j_.is_number())
                    return j_.get<double>();
                const std::string s = trim(text());
                double v = 0;
                auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
                if (ec != std::errc{} || p != s.data() + s.size())
                    fail("expected a number, got '" + s + "'");
                return v;
            }

            bool boolean() const
            {
                if (j_.is_boolean())
                    return j_.get<bool>();
                const std::string s = trim(text());
                if (s == "true" || s == "1")
                    return true;
                if (s == "false" || s == "0")
                    return false;
                fail("expected true or false, got '" + s + "'");
            }

            std::string str() const { return trim(text()); }

        private:
            static std::string trim(const std::string &s)
            {
                const auto a = s.find_first_not_of(" \t\r\n");
                if (a == std::string::npos)
                    return {};
                const auto b = s.find_last_not_of(" \t\r\n");
                return s.substr(a, b - a + 1);
            }

            std::string join(const std::string &key) const { return path_.empty() ? key : path_ + "/" + key; }

            const json &j_;
            std::string path_;
        };

        std::map<std::string, double> read_params(const Node &n, DistributionKind kind)
        {
            const auto defaults = default_params(kind);
            std::map<std::string, double> out;
            if (!n.raw().is_object())
            {
                n.only({});
                return out;
            }
            for (const auto &[k, _] : n.raw().items())
            {
                if (!defaults.contains(k))
                    throw SchemaError(n.path() + "/" + k, "unknown parameter");
                const double v = n.at(k).real();
                auto params = defaults;
                params[k] = v;
                try
                {
                    validate(DistributionSpec{kind, params, 1});
                }
                catch (const InvalidParams &e)
                {
                    throw SchemaError(n.path() + "/" + k, e.what());
                }
                out[k] = v;
            }
            try
            {
                auto params = defaults;
                for (auto &[k, v] : out)
                    params[k] = v;
                validate(DistributionSpec{kind, params, 1});
            }
            catch (const InvalidParams &e)
            {
                n.fail(e.what());
            }
            return out;
        }

        void read_distribution_block(const Node &n, ExperimentConfig &c)
        {
            if (!n.raw().is_object())
            {
                n.only({});
                return;
            }
            for (const auto &[k, _] : n.raw().items())
            {
                if (k == "random")
                {
                    Node r = n.at("random");
                    r.only({"seed"});
                    if (r.has("seed"))
                        c.distribution_seed = r.at("seed").u64();
                    continue;
                }
                auto kind = parse_distribution_kind(k);
                if (!kind)
                    throw SchemaError(n.path() + "/" + k, "unknown distribution");
                c.distributions[*kind] = read_params(n.at(k), *kind);
            }
        }

        void check_distribution_name(const Node &n)
        {
            if (!parse_distribution_kind(n.str()))
                n.fail("unknown distribution '" + n.str() + "'");
        }

        ExperimentConfig read_config(const Node &root)
        {
            ExperimentConfig c;
            root.only({"name", "seed", "protocol", "networkSize", "distribution", "idDistribution", "network",
                       "workload", "churn", "resistance", "shards", "output"});
            if (root.has("name"))
                c.name = root.at("name").str();
            if (root.has("seed"))
                c.seed = root.at("seed").u64();

            Node proto = root.at("protocol");
            proto.only({"name", "fanout", "keyBits"});
            c.protocol.name = proto.at("name").str();
            if (proto.has("fanout"))
                c.protocol.fanout = static_cast<unsigned>(proto.at("fanout").u64());
            if (proto.has("keyBits"))
                c.protocol.key_bits = static_cast<unsigned>(proto.at("keyBits").u64());
            try
            {
                c.protocol.validate();
            }
            catch (const SimError &e)
            {
                proto.fail(e.what());
            }

            c.network_size = root.at("networkSize").u64();

            if (root.has("distribution"))
                read_distribution_block(root.at("distribution"), c);
            if (root.has("idDistribution"))
            {
                check_distribution_name(root.at("idDistribution"));
                c.id_distribution = root.at("idDistribution").str();
            }

            if (root.has("network"))
            {
                Node net = root.at("network");
                net.only({"baseLatency", "backgroundRate", "queueCap", "nodeStep"});
                if (net.has("baseLatency"))
                    c.network.base_latency = net.at("baseLatency").u64();
                if (net.has("backgroundRate"))
                    c.network.background_traffic_rate = net.at("backgroundRate").real();
                if (net.has("queueCap"))
                    c.network.queue_cap = net.at("queueCap").u64();
                for (const Node &s : net.list("nodeStep"))
                {
                    s.only({"node", "step"});
                    c.network.per_node_step[NodeId{s.at("node").u64()}] = s.at("step").u64();
                }
            }

            if (root.has("workload"))
            {
                Node w = root.at("workload");
                w.only({"operation"});
                for (const Node &op : w.list("operation"))
                {
                    op.only({"kind", "count", "keys", "span"});
                    WorkloadItem item;
                    auto kind = parse_workload_kind(op.at("kind").str());
                    if (!kind)
                        op.at("kind").fail("unknown operation kind '" + op.at("kind").str() + "'");
                    item.kind = *kind;
                    item.count = op.at("count").u64();
                    if (op.has("keys"))
                    {
                        check_distribution_name(op.at("keys"));
                        item.keys = op.at("keys").str();
                    }
                    if (op.has("span"))
                        item.span = op.at("span").u64();
                    c.workload.push_back(item);
                }
            }

            if (root.has("churn"))
            {
                Node ch = root.at("churn");
                ch.only({"event"});
                for (const Node &ev : ch.list("event"))
                {
                    ev.only({"tick", "kind", "mode", "fraction", "distribution", "node"});
                    ChurnTrigger t;
                    t.tick = ev.at("tick").u64();
                    const std::string kind = ev.at("kind").str();
                    if (kind == "failure")
                        t.plan.kind = ChurnPlan::Kind::failure;
                    else if (kind == "departure")
                        t.plan.kind = ChurnPlan::Kind::departure;
                    else
                        ev.at("kind").fail("expected failure or departure");
                    if (ev.has("mode"))
                    {
                        const std::string mode = ev.at("mode").str();
                        if (mode == "concurrent")
                            t.plan.mode = ChurnPlan::Mode::concurrent;
                        else if (mode == "sequential")
                            t.plan.mode = ChurnPlan::Mode::sequential;
                        else
                            ev.at("mode").fail("expected concurrent or sequential");
                    }
                    if (ev.has("fraction"))
                        t.plan.fraction = ev.at("fraction").real();
                    if (ev.has("distribution"))
                    {
                        check_distribution_name(ev.at("distribution"));
                        t.distribution = ev.at("distribution").str();
                    }
                    for (const Node &n : ev.list("node"))
                        t.plan.ids.emplace_back(n.u64());
                    if (!t.plan.fraction && t.plan.ids.empty())
                        ev.fail("needs a fraction or node ids");
                    try
                    {
                        t.plan.validate();
                    }
                    catch (const InvalidPlan &e)
                    {
                        ev.fail(e.what());
                    }
                    c.churn.push_back(t);
                }
            }

            if (root.has("resistance"))
            {
                Node r = root.at("resistance");
                r.only({"initial", "increment"});
                ResistanceSpec spec;
                if (r.has("initial"))
                    spec.initial = r.at("initial").real();
                if (r.has("increment"))
                    spec.increment = r.at("increment").real();
                c.resistance = spec;
            }

            if (root.has("shards"))
            {
                Node s = root.at("shards");
                s.only({"count", "worker"});
                if (s.has("count"))
                    c.shard_count = static_cast<std::uint32_t>(s.at("count").u64());
                for (const Node &w : s.list("worker"))
                    c.workers.push_back(w.str());
            }

            if (root.has("output"))
            {
                Node o = root.at("output");
                o.only({"path", "log"});
                if (o.has("path"))
                    c.output_path = o.at("path").str();
                if (o.has("log"))
                    c.write_log = o.at("log").boolean();
            }
            c.validate(root.path());
            return c;
        }

        // Generic element tree to JSON: text-only elements become strings, repeated names arrays.
        json tree_to_json(const boost::property_tree::ptree &t)
        {
            bool has_children = false;
            for (const auto &[k, _] : t)
                has_children = has_children || (k != "<xmlattr>" && k != "<xmlcomment>");
            if (!has_children)
                return t.data();
            json out = json::object();
            for (const auto &[k, child] : t)
            {
                if (k == "<xmlattr>" || k == "<xmlcomment>")
                    continue;
                json v = tree_to_json(child);
                if (!out.contains(k))
                    out[k] = std::move(v);
                else
                {
                    if (!out[k].is_array())
                        out[k] = json::array({out[k]});
                    out[k].push_back(std::move(v));
                }
            }
            return out;
        }

        std::string num(double v)
        {
            char buf[64];
            auto r = std::to_chars(buf, buf + sizeof buf, v);
            return std::string(buf, r.ptr);
        }

        void json_to_tree(const json &j, boost::property_tree::ptree &t)
        {
            for (const auto &[k, v] : j.items())
            {
                auto emit = [&](const json &item) {
                    boost::property_tree::ptree child;
                    if (item.is_object())
                        json_to_tree(item, child);
                    else if (item.is_string())
                        child.put_value(item.get<std::string>());
                    else if (item.is_number_float())
                        child.put_value(num(item.get<double>()));
                    else
                        child.put_value(item.dump());
                    t.add_child(k, child);
                };
                if (v.is_array())
                    for (const auto &item : v)
                        emit(item);
                else
                    emit(v);
            }
        }
    } // namespace

    DistributionSpec ExperimentConfig::distribution(const std::string &name, std::uint64_t stream) const
    {
        auto kind = parse_distribution_kind(name);
        if (!kind)
            throw SchemaError("", "unknown distribution '" + name + "'");
        auto params = default_params(*kind);
        if (auto it = distributions.find(*kind); it != distributions.end())
            for (const auto &[k, v] : it->second)
                params[k] = v;
        return DistributionSpec{*kind, params, derive_seed(distribution_seed.value_or(seed), stream)};
    }

    void ExperimentConfig::validate(const std::string &prefix) const
    {
        auto at = [&](const std::string &rel) { return prefix.empty() ? rel : prefix + "/" + rel; };
        if (network_size < 1)
            throw SchemaError(at("networkSize"), "must be at least 1");
        if (network_size > key_space(protocol.key_bits))
            throw SchemaError(at("networkSize"), "exceeds the key space");
        try
        {
            network.validate();
        }
        catch (const SimError &e)
        {
            throw SchemaError(at("network"), e.what());
        }
        for (std::size_t i = 1; i < churn.size(); ++i)
            if (churn[i].tick < churn[i - 1].tick)
                throw SchemaError(at("churn/event[" + std::to_string(i) + "]/tick"), "triggers must be sorted ascending");
        if (resistance)
        {
            if (!(resistance->initial > 0.0 && resistance->initial < 1.0))
                throw SchemaError(at("resistance/initial"), "must lie in (0, 1)");
            if (!(resistance->increment > 0.0 && resistance->increment <= 1.0))
                throw SchemaError(at("resistance/increment"), "must lie in (0, 1]");
        }
        if (shard_count < 1)
            throw SchemaError(at("shards/count"), "must be at least 1");
        for (std::size_t i = 0; i < workload.size(); ++i)
            if (workload[i].kind == MessageKind::RANGE && protocol.name != "baton_star")
                throw SchemaError(at("workload/operation[" + std::to_string(i) + "]/kind"),
                                  "range queries need baton_star");
    }

    ExperimentConfig config_from_json(const json &j)
    {
        if (!j.is_object())
            throw SchemaError("", "configuration must be an object");
        // Same trees as XML: the root is either the experiment or a bare distribution block.
        if (j.contains("experiment"))
            return read_config(Node(j.at("experiment"), "experiment"));
        if (j.size() == 1 && j.contains("distribution"))
        {
            ExperimentConfig c;
            read_distribution_block(Node(j.at("distribution"), "distribution"), c);
            return c;
        }
        return read_config(Node(j, ""));
    }

    ExperimentConfig parse_config(const std::string &xml)
    {
        // Tolerate whitespace after '<' and '</' as printed in hand-written snippets.
        const std::string text = std::regex_replace(xml, std::regex(R"(<(/?)\s+)"), "<$1");
        boost::property_tree::ptree tree;
        std::istringstream in(text);
        try
        {
            boost::property_tree::read_xml(in, tree, boost::property_tree::xml_parser::trim_whitespace);
        }
        catch (const boost::property_tree::xml_parser_error &e)
        {
            throw SchemaError("", std::string("malformed XML: ") + e.message() + " at line " +
                                      std::to_string(e.line()));
        }
        json j = tree_to_json(tree);
        if (!j.is_object() || j.size() != 1)
            throw SchemaError("", "expected a single <experiment> or <distribution> root element");
        return config_from_json(j);
    }

    ExperimentConfig parse_config_file(const std::string &path)
    {
        std::ifstream f(path, std::ios::binary);
        if (!f)
            throw IoFailure("cannot open '" + path + "'");
        std::ostringstream buf;
        buf << f.rdbuf();
        if (path.size() >= 5 && path.substr(path.size() - 5) == ".json")
        {
            auto j = json::parse(buf.str(), nullptr, false);
            if (j.is_discarded())
                throw SchemaError("", "malformed JSON in '" + path + "'");
            return config_from_json(j);
        }
        return parse_config(buf.str());
    }

    json to_json(const ExperimentConfig &c)
    {
        json e;
        e["name"] = c.name;
        e["seed"] = c.seed;
        e["protocol"] = {{"name", c.protocol.name}, {"fanout", c.protocol.fanout}, {"keyBits", c.protocol.key_bits}};
        e["networkSize"] = c.network_size;
        json dist = json::object();
        if (c.distribution_seed)
            dist["random"] = {{"seed", *c.distribution_seed}};
        for (const auto &[kind, params] : c.distributions)
        {
            json p = json::object();
            for (const auto &[k, v] : params)
                p[k] = v;
            dist[block_name(kind)] = p.empty() ? json("") : p;
        }
        if (!dist.empty())
            e["distribution"] = dist;
        e["idDistribution"] = c.id_distribution;
        json net = {{"baseLatency", c.network.base_latency},
                    {"backgroundRate", c.network.background_traffic_rate},
                    {"queueCap", c.network.queue_cap}};
        if (!c.network.per_node_step.empty())
        {
            json steps = json::array();
            for (const auto &[id, step] : c.network.per_node_step)
                steps.push_back({{"node", id.value}, {"step", step}});
            net["nodeStep"] = steps;
        }
        e["network"] = net;
        if (!c.workload.empty())
        {
            json ops = json::array();
            for (const auto &w : c.workload)
            {
                json op = {{"kind", workload_kind_name(w.kind)}, {"count", w.count}, {"keys", w.keys}};
                if (w.span)
                    op["span"] = w.span;
                ops.push_back(op);
            }
            e["workload"] = {{"operation", ops}};
        }
        if (!c.churn.empty())
        {
            json events = json::array();
            for (const auto &t : c.churn)
            {
                json ev = {{"tick", t.tick},
                           {"kind", t.plan.kind == ChurnPlan::Kind::failure ? "failure" : "departure"},
                           {"mode", t.plan.mode == ChurnPlan::Mode::concurrent ? "concurrent" : "sequential"},
                           {"distribution", t.distribution}};
                if (t.plan.fraction)
                    ev["fraction"] = *t.plan.fraction;
                if (!t.plan.ids.empty())
                {
                    json nodes = json::array();
                    for (NodeId id : t.plan.ids)
                        nodes.push_back(id.value);
                    ev["node"] = nodes;
                }
                events.push_back(ev);
            }
            e["churn"] = {{"event", events}};
        }
        if (c.resistance)
            e["resistance"] = {{"initial", c.resistance->initial}, {"increment", c.resistance->increment}};
        json shards = {{"count", c.shard_count}};
        if (!c.workers.empty())
            shards["worker"] = c.workers;
        e["shards"] = shards;
        e["output"] = {{"path", c.output_path}, {"log", c.write_log}};
        return {{"experiment", e}};
    }

    std::string to_xml(const ExperimentConfig &c)
    {
        boost::property_tree::ptree tree;
        json_to_tree(to_json(c), tree);
        std::ostringstream out;
        boost::property_tree::write_xml(out, tree, boost::property_tree::xml_writer_make_settings<std::string>(' ', 2));
        return out.str();
    }
} // namespace dpsim
