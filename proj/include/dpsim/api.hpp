// HTTP control surface: experiment sessions, churn injection, partition checks, live stats.
//
// Each session runs its Experiment on its own thread. The thread holds the session lock for one
// unit of work at a time (a join while building, a workload tick while running), so every
// request observes and mutates the run at a tick boundary. Endpoints are listed in docs/api.md.

#pragma once

#include "dpsim/experiment.hpp"

#include <json.hpp>

#include <atomic>
#include <condition_variable>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace httplib
{
    class Server;
}

namespace dpsim
{
    struct ApiOptions
    {
        std::size_t capacity = 1; // sessions not yet finished
        int event_interval_ms = 100; // minimum spacing of tick-batch events; 0 = every unit
        std::string static_dir;      // served at / when set
    };

    enum class SessionState : std::uint8_t
    {
        building,
        running,
        paused,
        finished,
    };

    std::string_view to_string(SessionState s);

    // Request body of POST /experiments/{id}/churn. `distribution` names a config distribution.
    struct ChurnRequest
    {
        ChurnPlan plan;
        std::string distribution = "uniform";
    };

    ChurnRequest churn_request_from_json(const nlohmann::json &j); // throws InvalidPlan
    nlohmann::json to_json(const SeparationReport &r);

    class Session
    {
    public:
        Session(std::string id, ExperimentConfig config, int event_interval_ms, bool hold, bool autostart);
        ~Session();

        const std::string &id() const noexcept { return id_; }
        SessionState state() const;
        nlohmann::json handle() const;

        void start();
        // Each returns the HTTP status to answer with; `body` receives the response.
        int churn(const ChurnRequest &req, nlohmann::json &body);
        int pause(nlohmann::json &body);
        int resume(nlohmann::json &body);
        int finish(nlohmann::json &body);
        nlohmann::json stats();
        nlohmann::json partitioned();

        // Events with index >= from, waiting up to `wait_ms` for one to appear. `closed` is set
        // once the finish event has been handed out.
        std::vector<nlohmann::json> events_since(std::size_t from, int wait_ms, bool &closed);

        void stop(); // ends the worker thread without finishing the run

    private:
        void loop();
        void drain_churn();
        void emit(bool force, std::optional<nlohmann::json> extra = std::nullopt);
        void set_state(SessionState s);

        std::string id_;
        ExperimentConfig config_;
        int event_interval_ms_;
        bool hold_;

        friend class Turn;

        mutable std::mutex mu_;
        std::condition_variable cv_;     // control changes, and request threads leaving mu_
        std::atomic<int> waiting_{0};    // request threads queued on mu_; the run yields to them
        mutable std::mutex ev_mu_;       // guards events_ and events_closed_; taken after mu_
        std::condition_variable events_cv_;
        std::unique_ptr<Experiment> experiment_;
        SessionState state_ = SessionState::building;
        bool started_ = false;
        bool finish_requested_ = false;
        bool stopping_ = false;
        std::deque<ChurnPlan> churn_queue_;
        std::uint64_t churn_seq_ = 0;
        std::vector<nlohmann::json> events_;
        bool events_closed_ = false;
        double last_event_ = 0.0;
        std::uint64_t delivered_at_last_event_ = 0;
        std::optional<ExperimentResult> result_;
        std::string error_;
        std::thread thread_;
    };

    class ApiServer
    {
    public:
        explicit ApiServer(ApiOptions options = {});
        ~ApiServer();
        ApiServer(const ApiServer &) = delete;
        ApiServer &operator=(const ApiServer &) = delete;

        // Binds and serves on a background thread; port 0 picks a free port. Returns the port.
        int start(const std::string &host, int port);
        // Binds and serves on the calling thread until stop().
        bool listen(const std::string &host, int port);
        void stop();

        std::shared_ptr<Session> session(const std::string &id);

    private:
        void routes();

        ApiOptions options_;
        std::unique_ptr<httplib::Server> http_;
        std::thread thread_;
        std::mutex mu_;
        std::map<std::string, std::shared_ptr<Session>> sessions_;
        std::uint64_t next_id_ = 1;
    };
} // namespace dpsim
