// dpsim: run experiments, serve shards, run batches, start the control API.
//
//   dpsim run <config.xml> [--workers host:port,...] [--output dir]
//   dpsim worker --listen host:port
//   dpsim batch <dir>
//   dpsim serve --port p [--host h] [--capacity n] [--static dir]
//
// Exit codes: 0 complete, 2 degraded, 3 aborted, 4 config error.

#include "dpsim/api.hpp"
#include "dpsim/dist.hpp"
#include "dpsim/experiment.hpp"

#include <CLI11.hpp>

#include <csignal>
#include <iostream>

using namespace dpsim;

namespace
{
    constexpr int kConfigError = 4;

    void print(const ExperimentResult &r)
    {
        std::cout << r.config.name << ": " << to_string(r.status) << " digest=" << r.digest << " ticks=" << r.ticks
                  << " ops=" << r.operations << " wall=" << r.wall_time << "s";
        if (r.resistance)
            std::cout << " resistance=" << r.resistance->fraction;
        if (!r.error.empty())
            std::cout << " error=\"" << r.error << '"';
        std::cout << '\n';
        for (const auto &s : r.summaries)
            std::cout << "  " << s.name << " count=" << s.count << " mean=" << s.mean << " min=" << s.min
                      << " max=" << s.max << '\n';
    }

    ApiServer *g_server = nullptr;
    WorkerServer *g_worker = nullptr;

    void on_signal(int)
    {
        if (g_server)
            g_server->stop();
        if (g_worker)
            g_worker->stop();
    }
} // namespace

int main(int argc, char **argv)
{
    CLI::App app{"Discrete-event P2P overlay simulator"};
    app.require_subcommand(1);

    std::string config_path, workers, output;
    auto *run_cmd = app.add_subcommand("run", "Run one experiment");
    run_cmd->add_option("config", config_path, "Experiment config (.xml or .json)")->required();
    run_cmd->add_option("--workers", workers, "Comma-separated worker addresses (host:port)");
    run_cmd->add_option("--output", output, "Output directory, overrides the config");

    std::string listen;
    auto *worker_cmd = app.add_subcommand("worker", "Host one shard for a coordinator");
    worker_cmd->add_option("--listen", listen, "host:port to listen on")->required();

    std::string batch_dir;
    auto *batch_cmd = app.add_subcommand("batch", "Run every config of a directory in name order");
    batch_cmd->add_option("dir", batch_dir, "Directory of configs")->required()->check(CLI::ExistingDirectory);

    int port = 8080;
    std::string host = "0.0.0.0";
    ApiOptions api;
    auto *serve_cmd = app.add_subcommand("serve", "Start the control API");
    serve_cmd->add_option("--port", port, "Port")->required();
    serve_cmd->add_option("--host", host, "Bind address");
    serve_cmd->add_option("--capacity", api.capacity, "Concurrent unfinished sessions");
    serve_cmd->add_option("--event-interval", api.event_interval_ms, "Minimum milliseconds between events");
    serve_cmd->add_option("--static", api.static_dir, "Static assets served at /");

    CLI11_PARSE(app, argc, argv);

    if (*run_cmd)
    {
        ExperimentConfig config;
        try
        {
            config = parse_config_file(config_path);
            if (!workers.empty())
            {
                config.workers.clear();
                std::stringstream in(workers);
                for (std::string w; std::getline(in, w, ',');)
                    if (!w.empty())
                        config.workers.push_back(w);
            }
            if (!output.empty())
                config.output_path = output;
            config.validate("experiment");
        }
        catch (const std::exception &e)
        {
            std::cerr << "config error: " << e.what() << '\n';
            return kConfigError;
        }
        const auto r = run(config);
        print(r);
        return exit_code(r.status);
    }

    if (*worker_cmd)
    {
        try
        {
            WorkerServer server(listen);
            g_worker = &server;
            std::signal(SIGINT, on_signal);
            std::signal(SIGTERM, on_signal);
            std::cerr << "worker listening on port " << server.port() << '\n';
            server.run();
            g_worker = nullptr;
        }
        catch (const std::exception &e)
        {
            std::cerr << "worker: " << e.what() << '\n';
            return 1;
        }
        return 0;
    }

    if (*batch_cmd)
    {
        const auto results = schedule_directory(batch_dir);
        int code = 0;
        for (const auto &r : results)
        {
            print(r);
            code = std::max(code, exit_code(r.status));
        }
        return code;
    }

    if (*serve_cmd)
    {
        ApiServer server(api);
        g_server = &server;
        std::signal(SIGINT, on_signal);
        std::signal(SIGTERM, on_signal);
        std::cerr << "control API on " << host << ":" << port << '\n';
        const bool ok = server.listen(host, port);
        g_server = nullptr;
        return ok ? 0 : 1;
    }
    return 0;
}
