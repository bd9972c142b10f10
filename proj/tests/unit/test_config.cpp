#include "dpsim/config.hpp"

#include <catch_amalgamated.hpp>

using namespace dpsim;

namespace
{
    // As printed, including the stray blanks inside the tags.
    const char *kSnippet = R"(< distribution>
  < random>
    < seed>1</seed >
  </random>
  < beta>
    < alpha>2.0</alpha >
    < beta>4.0</beta >
  </beta>
  < powerLaw>
    < alpha>0.5</alpha >
    < beta>1.0</beta >
  </powerLaw>
</distribution>
)";

    std::string schema_path(const std::string &xml)
    {
        try
        {
            parse_config(xml);
        }
        catch (const SchemaError &e)
        {
            return e.path();
        }
        return "<no error>";
    }

    ExperimentConfig full_config()
    {
        ExperimentConfig c;
        c.name = "sweep";
        c.seed = 42;
        c.protocol = {"baton_star", 4, 40};
        c.network_size = 5000;
        c.distributions[DistributionKind::beta] = {{"alpha", 2.5}, {"beta", 0.75}};
        c.distributions[DistributionKind::weibull] = {};
        c.distribution_seed = 9;
        c.id_distribution = "normal";
        c.network.base_latency = 2;
        c.network.background_traffic_rate = 0.125;
        c.network.queue_cap = 1000;
        c.network.per_node_step[NodeId{17}] = 3;
        c.workload = {{MessageKind::SEARCH, 300, "beta", 0}, {MessageKind::RANGE, 10, "uniform", 4096}};
        ChurnTrigger t1;
        t1.tick = 10;
        t1.plan.fraction = 0.1;
        t1.distribution = "weibull";
        ChurnTrigger t2;
        t2.tick = 20;
        t2.plan.kind = ChurnPlan::Kind::departure;
        t2.plan.mode = ChurnPlan::Mode::sequential;
        t2.plan.ids = {NodeId{5}, NodeId{6}};
        c.churn = {t1, t2};
        c.resistance = ResistanceSpec{0.1, 0.01};
        c.shard_count = 3;
        c.workers = {"127.0.0.1:7001", "127.0.0.1:7002"};
        c.output_path = "out/run1";
        c.write_log = true;
        return c;
    }
} // namespace

TEST_CASE("distribution snippet parses verbatim", "[config]")
{
    auto c = parse_config(kSnippet);
    REQUIRE(c.distribution_seed);
    CHECK(*c.distribution_seed == 1);
    CHECK(c.distributions.at(DistributionKind::beta) == std::map<std::string, double>{{"alpha", 2.0}, {"beta", 4.0}});
    CHECK(c.distributions.at(DistributionKind::powerlaw) ==
          std::map<std::string, double>{{"alpha", 0.5}, {"beta", 1.0}});
    auto beta = c.distribution("beta", 0);
    CHECK(beta.kind == DistributionKind::beta);
    CHECK(beta.param("alpha") == 2.0);
    CHECK(beta.param("beta") == 4.0);
    auto pl = c.distribution("powerLaw", 0);
    CHECK(pl.kind == DistributionKind::powerlaw);
    CHECK(pl.param("alpha") == 0.5);
    CHECK(pl.param("beta") == 1.0);
}

TEST_CASE("minimal config takes defaults", "[config]")
{
    auto c = parse_config("<experiment><protocol><name>chord</name></protocol><networkSize>64</networkSize>"
                          "</experiment>");
    ExperimentConfig d;
    CHECK(c.protocol.name == "chord");
    CHECK(c.protocol.key_bits == 32);
    CHECK(c.network_size == 64);
    CHECK(c.seed == d.seed);
    CHECK(c.network == d.network);
    CHECK(c.workload.empty());
    CHECK(c.churn.empty());
    CHECK(c.shard_count == 1);
    CHECK(c.id_distribution == "uniform");
}

TEST_CASE("schema errors carry the element path", "[config]")
{
    const std::string proto = "<protocol><name>baton_star</name></protocol><networkSize>10</networkSize>";
    CHECK(schema_path("<experiment>" + proto +
                      "<distribution><beta><alpha>-1</alpha></beta></distribution></experiment>") ==
          "experiment/distribution/beta/alpha");
    CHECK(schema_path(R"(<distribution><beta><alpha>-1</alpha></beta></distribution>)") == "distribution/beta/alpha");
    CHECK(schema_path("<experiment><networkSize>10</networkSize></experiment>") == "experiment/protocol");
    CHECK(schema_path("<experiment>" + proto + "<bogus>1</bogus></experiment>") == "experiment/bogus");
    CHECK(schema_path("<experiment><protocol><name>baton_star</name><fanout>11</fanout></protocol>"
                      "<networkSize>10</networkSize></experiment>") == "experiment/protocol");
    CHECK(schema_path("<experiment>" + proto + "<workload><operation><kind>jump</kind><count>1</count>"
                                               "</operation></workload></experiment>") ==
          "experiment/workload/operation/kind");
    CHECK(schema_path("<experiment>" + proto +
                      "<churn><event><tick>5</tick><kind>failure</kind><fraction>0.1</fraction></event>"
                      "<event><tick>2</tick><kind>failure</kind><fraction>0.1</fraction></event></churn>"
                      "</experiment>") == "experiment/churn/event[1]/tick");
    CHECK(schema_path("<experiment>" + proto + "<seed>abc</seed></experiment>") == "experiment/seed");
    CHECK(schema_path("<experiment><protocol>") == "");
}

TEST_CASE("XML round trip is the identity", "[config]")
{
    const auto c = full_config();
    const auto xml = to_xml(c);
    const auto back = parse_config(xml);
    CHECK(back == c);
    CHECK(to_xml(back) == xml);
}

TEST_CASE("JSON form round trips and matches XML", "[config]")
{
    const auto c = full_config();
    const auto j = to_json(c);
    CHECK(config_from_json(j) == c);
    CHECK(config_from_json(nlohmann::json::parse(j.dump())) == c);
    CHECK(parse_config(to_xml(c)) == config_from_json(j));
}

TEST_CASE("default config round trips", "[config]")
{
    ExperimentConfig c;
    CHECK(parse_config(to_xml(c)) == c);
    CHECK(config_from_json(to_json(c)) == c);
}

TEST_CASE("named distributions take block parameters and a derived seed", "[config]")
{
    auto c = full_config();
    auto a = c.distribution("beta", 1);
    auto b = c.distribution("beta", 2);
    CHECK(a.param("alpha") == 2.5);
    CHECK(a.seed != b.seed);
    CHECK(c.distribution("normal", 1).param("mu") == 0.5);
    CHECK_THROWS_AS(c.distribution("zipf", 1), SchemaError);
}
