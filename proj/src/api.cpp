#include "dpsim/api.hpp"

#include "dpsim/wire.hpp"

#include <httplib.h>

#include <charconv>

#include <chrono>

namespace dpsim
{
    using nlohmann::json;

    // Request-side lock on a session. The run thread checks waiting_ after every unit of work and
    // steps aside, so requests are not starved by a busy run.
    class Turn
    {
    public:
        explicit Turn(const Session &s) : s_(const_cast<Session &>(s))
        {
            ++s_.waiting_;
            lk_ = std::unique_lock<std::mutex>(s_.mu_);
            --s_.waiting_;
        }
        ~Turn()
        {
            lk_.unlock();
            s_.cv_.notify_all();
        }

    private:
        Session &s_;
        std::unique_lock<std::mutex> lk_;
    };

    namespace
    {
        constexpr std::uint64_t kApiChurnStream = 300;

        double wall_seconds()
        {
            using namespace std::chrono;
            return duration<double>(steady_clock::now().time_since_epoch()).count();
        }

        json summaries_json(const std::vector<MetricSummary> &summaries)
        {
            json out = json::array();
            for (const auto &s : summaries)
                out.push_back(to_json(s));
            return out;
        }

        json report_json(const ChurnReport &r)
        {
            json nodes = json::array();
            for (auto id : r.nodes)
                nodes.push_back(id.value);
            return {{"tick", r.tick},
                    {"nodes", nodes},
                    {"replacements", r.replacements},
                    {"substitutes_not_found", r.substitutes_not_found}};
        }

        json error_body(const std::string &what, const std::string &path = "")
        {
            json j = {{"error", what}};
            if (!path.empty())
                j["path"] = path;
            return j;
        }

        void reply(httplib::Response &res, int status, const json &body)
        {
            res.status = status;
            res.set_content(body.dump(), "application/json");
        }
    } // namespace

    std::string_view to_string(SessionState s)
    {
        switch (s)
        {
        case SessionState::building:
            return "building";
        case SessionState::running:
            return "running";
        case SessionState::paused:
            return "paused";
        case SessionState::finished:
            return "finished";
        }
        return "finished";
    }

    ChurnRequest churn_request_from_json(const json &j)
    {
        if (!j.is_object())
            throw InvalidPlan("churn plan must be a JSON object");
        for (const auto &[k, v] : j.items())
            if (k != "kind" && k != "mode" && k != "ids" && k != "fraction" && k != "distribution")
                throw InvalidPlan("unknown churn plan field '" + k + "'");
        ChurnRequest r;
        try
        {
            const std::string kind = j.value("kind", "failure");
            if (kind == "failure")
                r.plan.kind = ChurnPlan::Kind::failure;
            else if (kind == "departure")
                r.plan.kind = ChurnPlan::Kind::departure;
            else
                throw InvalidPlan("kind must be 'failure' or 'departure'");
            const std::string mode = j.value("mode", "concurrent");
            if (mode == "concurrent")
                r.plan.mode = ChurnPlan::Mode::concurrent;
            else if (mode == "sequential")
                r.plan.mode = ChurnPlan::Mode::sequential;
            else
                throw InvalidPlan("mode must be 'concurrent' or 'sequential'");
            if (j.contains("ids"))
                for (const auto &id : j.at("ids"))
                    r.plan.ids.emplace_back(id.get<std::uint64_t>());
            if (j.contains("fraction"))
                r.plan.fraction = j.at("fraction").get<double>();
            r.distribution = j.value("distribution", "uniform");
        }
        catch (const json::exception &e)
        {
            throw InvalidPlan(std::string("malformed churn plan: ") + e.what());
        }
        if (r.plan.ids.empty() && !r.plan.fraction)
            throw InvalidPlan("churn plan needs ids or a fraction");
        return r;
    }

    json to_json(const SeparationReport &r)
    {
        json comps = json::array(), sizes = json::array();
        for (const auto &c : r.components)
        {
            json ids = json::array();
            for (auto id : c)
                ids.push_back(id.value);
            comps.push_back(std::move(ids));
            sizes.push_back(c.size());
        }
        return {{"partitioned", r.partitioned},
                {"component_count", r.components.size()},
                {"component_sizes", sizes},
                {"components", comps},
                {"s_values", r.s_values}};
    }

    // -------------------------------------------------------------------------------- Session

    Session::Session(std::string id, ExperimentConfig config, int event_interval_ms, bool hold, bool autostart)
        : id_(std::move(id)), config_(std::move(config)), event_interval_ms_(event_interval_ms), hold_(hold),
          started_(autostart)
    {
        thread_ = std::thread([this] { loop(); });
    }

    Session::~Session() { stop(); }

    void Session::stop()
    {
        {
            std::lock_guard lk(mu_);
            stopping_ = true;
        }
        cv_.notify_all();
        if (thread_.joinable())
            thread_.join();
        {
            std::lock_guard lk(ev_mu_);
            events_closed_ = true;
        }
        events_cv_.notify_all();
    }

    SessionState Session::state() const
    {
        Turn t(*this);
        return state_;
    }

    void Session::set_state(SessionState s)
    {
        state_ = s;
        cv_.notify_all();
    }

    json Session::handle() const
    {
        Turn t(*this);
        json j = {{"id", id_}, {"state", to_string(state_)}, {"name", config_.name}, {"started", started_}};
        if (experiment_)
        {
            j["tick"] = experiment_->cluster().now();
            j["joined"] = experiment_->joined();
            j["operations"] = experiment_->operations_issued();
            j["operations_total"] = experiment_->operations_total();
        }
        if (result_)
        {
            j["status"] = to_string(result_->status);
            j["result"] = to_json(*result_);
        }
        if (!error_.empty())
            j["error"] = error_;
        return j;
    }

    void Session::start()
    {
        {
            Turn t(*this);
            started_ = true;
        }
        cv_.notify_all();
    }

    void Session::emit(bool force, std::optional<json> extra)
    {
        const double now = wall_seconds();
        if (!force && (now - last_event_) * 1000.0 < event_interval_ms_)
            return;
        last_event_ = now;
        json ev = {{"state", to_string(state_)}};
        if (experiment_ && !(result_ && result_->status != RunStatus::complete))
        {
            Cluster &c = experiment_->cluster();
            const std::uint64_t delivered = c.counters().delivered;
            ev["tick"] = c.now();
            ev["delivered"] = delivered - delivered_at_last_event_;
            ev["delivered_total"] = delivered;
            ev["live"] = c.view().working_members().size();
            ev["joined"] = experiment_->joined();
            ev["operations"] = experiment_->operations_issued();
            ev["summaries"] = summaries_json(result_ ? result_->summaries : c.stats());
            delivered_at_last_event_ = delivered;
        }
        if (extra)
            ev.update(*extra);
        {
            std::lock_guard lk(ev_mu_);
            ev["seq"] = events_.size();
            events_.push_back(std::move(ev));
        }
        events_cv_.notify_all();
    }

    void Session::drain_churn()
    {
        while (!churn_queue_.empty())
        {
            const ChurnPlan plan = churn_queue_.front();
            churn_queue_.pop_front();
            try
            {
                const ChurnReport r = experiment_->apply_plan(plan);
                emit(true, json{{"churn", report_json(r)}});
            }
            catch (const InvalidPlan &e)
            {
                emit(true, json{{"churn_error", e.what()}});
            }
            catch (const NoEligibleNode &e)
            {
                emit(true, json{{"churn_error", e.what()}});
            }
        }
    }

    void Session::loop()
    {
        std::unique_lock lk(mu_);
        cv_.wait(lk, [&] { return started_ || stopping_; });
        if (stopping_)
            return;
        auto yield = [&] {
            if (waiting_ > 0)
                cv_.wait(lk, [&] { return waiting_ == 0; });
        };
        RunStatus failed = RunStatus::complete;
        try
        {
            experiment_ = std::make_unique<Experiment>(config_);
            emit(true);
            bool idle_reported = false;
            for (;;)
            {
                yield();
                drain_churn();
                if (stopping_)
                    return;
                if (finish_requested_)
                    break;
                if (state_ == SessionState::paused)
                {
                    cv_.wait(lk, [&] {
                        return state_ != SessionState::paused || finish_requested_ || stopping_ ||
                               !churn_queue_.empty();
                    });
                    continue;
                }
                if (state_ == SessionState::building)
                {
                    experiment_->advance();
                    if (experiment_->phase() == Experiment::Phase::running)
                    {
                        set_state(SessionState::running);
                        emit(true);
                    }
                    else
                        emit(false);
                    continue;
                }
                if (experiment_->advance())
                {
                    emit(false);
                    continue;
                }
                if (!hold_)
                    break;
                if (!idle_reported)
                {
                    emit(true, json{{"workload_done", true}});
                    idle_reported = true;
                }
                cv_.wait(lk, [&] {
                    return finish_requested_ || stopping_ || !churn_queue_.empty() ||
                           state_ == SessionState::paused;
                });
            }
            result_ = experiment_->finish();
        }
        catch (const WorkerUnreachable &e)
        {
            failed = RunStatus::degraded;
            error_ = e.what();
        }
        catch (const TickTimeout &e)
        {
            failed = RunStatus::degraded;
            error_ = e.what();
        }
        catch (const std::exception &e)
        {
            failed = RunStatus::aborted;
            error_ = e.what();
        }
        if (failed != RunStatus::complete)
        {
            ExperimentResult r;
            r.config = config_;
            r.status = failed;
            r.error = error_;
            result_ = std::move(r);
        }
        set_state(SessionState::finished);
        emit(true, json{{"finished", true}, {"status", to_string(result_->status)}});
        {
            std::lock_guard elk(ev_mu_);
            events_closed_ = true;
        }
        events_cv_.notify_all();
    }

    int Session::churn(const ChurnRequest &req, json &body)
    {
        {
            Turn t(*this);
            if (state_ != SessionState::running && state_ != SessionState::paused)
            {
                body = error_body("session is " + std::string(to_string(state_)));
                return 409;
            }
            ChurnPlan plan = req.plan;
            try
            {
                plan.distribution = config_.distribution(req.distribution, kApiChurnStream + churn_seq_);
                experiment_->check_plan(plan);
            }
            catch (const SchemaError &e)
            {
                body = error_body(e.what());
                return 422;
            }
            catch (const InvalidPlan &e)
            {
                body = error_body(e.what());
                return 422;
            }
            catch (const NoEligibleNode &e)
            {
                body = error_body(e.what());
                return 422;
            }
            ++churn_seq_;
            churn_queue_.push_back(std::move(plan));
            body = {{"accepted", true}, {"tick", experiment_->cluster().now()}, {"queued", churn_queue_.size()}};
        }
        return 202;
    }

    int Session::pause(json &body)
    {
        Turn t(*this);
        if (state_ != SessionState::running)
        {
            body = error_body("session is " + std::string(to_string(state_)));
            return 409;
        }
        set_state(SessionState::paused);
        body = {{"state", "paused"}, {"tick", experiment_->cluster().now()}};
        return 200;
    }

    int Session::resume(json &body)
    {
        Turn t(*this);
        if (state_ != SessionState::paused)
        {
            body = error_body("session is " + std::string(to_string(state_)));
            return 409;
        }
        set_state(SessionState::running);
        body = {{"state", "running"}, {"tick", experiment_->cluster().now()}};
        return 200;
    }

    int Session::finish(json &body)
    {
        Turn t(*this);
        if (state_ == SessionState::finished)
        {
            body = error_body("session is finished");
            return 409;
        }
        finish_requested_ = true;
        started_ = true;
        body = {{"state", to_string(state_)}, {"finishing", true}};
        return 202;
    }

    json Session::stats()
    {
        Turn t(*this);
        json j = {{"state", to_string(state_)}, {"tick", 0}, {"summaries", json::array()}};
        if (result_)
            j["summaries"] = summaries_json(result_->summaries);
        else if (experiment_)
            j["summaries"] = summaries_json(experiment_->cluster().stats());
        if (experiment_ && !(result_ && result_->status != RunStatus::complete))
            j["tick"] = experiment_->cluster().now();
        return j;
    }

    json Session::partitioned()
    {
        Turn t(*this);
        json j = experiment_ ? to_json(is_partitioned(experiment_->cluster().view())) : to_json(SeparationReport{});
        j["tick"] = experiment_ ? experiment_->cluster().now() : 0;
        return j;
    }

    std::vector<json> Session::events_since(std::size_t from, int wait_ms, bool &closed)
    {
        std::unique_lock lk(ev_mu_);
        events_cv_.wait_for(lk, std::chrono::milliseconds(wait_ms),
                            [&] { return events_.size() > from || events_closed_; });
        std::vector<json> out;
        for (std::size_t i = from; i < events_.size(); ++i)
            out.push_back(events_[i]);
        closed = events_closed_;
        return out;
    }

    // ------------------------------------------------------------------------------ ApiServer

    ApiServer::ApiServer(ApiOptions options) : options_(std::move(options)), http_(std::make_unique<httplib::Server>())
    {
        routes();
    }

    ApiServer::~ApiServer() { stop(); }

    std::shared_ptr<Session> ApiServer::session(const std::string &id)
    {
        std::lock_guard lk(mu_);
        auto it = sessions_.find(id);
        return it == sessions_.end() ? nullptr : it->second;
    }

    int ApiServer::start(const std::string &host, int port)
    {
        int bound = port == 0 ? http_->bind_to_any_port(host) : (http_->bind_to_port(host, port) ? port : -1);
        if (bound < 0)
            throw IoFailure("cannot bind " + host + ":" + std::to_string(port));
        thread_ = std::thread([this] { http_->listen_after_bind(); });
        http_->wait_until_ready();
        return bound;
    }

    bool ApiServer::listen(const std::string &host, int port) { return http_->listen(host, port); }

    void ApiServer::stop()
    {
        std::map<std::string, std::shared_ptr<Session>> sessions;
        {
            std::lock_guard lk(mu_);
            sessions = sessions_;
        }
        for (auto &[id, s] : sessions)
            s->stop();
        if (http_)
            http_->stop();
        if (thread_.joinable())
            thread_.join();
    }

    void ApiServer::routes()
    {
        auto &http = *http_;
        if (!options_.static_dir.empty())
            http.set_mount_point("/", options_.static_dir);

        // Looks up :id or answers 404.
        auto with_session = [this](const httplib::Request &req, httplib::Response &res) -> std::shared_ptr<Session> {
            auto s = session(req.path_params.at("id"));
            if (!s)
                reply(res, 404, error_body("unknown session '" + req.path_params.at("id") + "'"));
            return s;
        };

        http.Post("/experiments", [this](const httplib::Request &req, httplib::Response &res) {
            ExperimentConfig config;
            try
            {
                const bool is_json = req.get_header_value("Content-Type").find("json") != std::string::npos ||
                                     req.body.find_first_not_of(" \t\r\n") == req.body.find('{');
                config = is_json ? config_from_json(json::parse(req.body)) : parse_config(req.body);
                config.validate("experiment");
            }
            catch (const SchemaError &e)
            {
                return reply(res, 400, error_body(e.what(), e.path()));
            }
            catch (const std::exception &e)
            {
                return reply(res, 400, error_body(e.what()));
            }
            const bool hold = req.get_param_value("hold") == "true";
            const bool autostart = req.get_param_value("autostart") != "false";
            std::shared_ptr<Session> s;
            {
                std::lock_guard lk(mu_);
                std::size_t active = 0;
                for (const auto &[id, other] : sessions_)
                    if (other->state() != SessionState::finished)
                        ++active;
                if (active >= options_.capacity)
                    return reply(res, 409, error_body("capacity of " + std::to_string(options_.capacity) +
                                                      " running session(s) reached"));
                const std::string id = "s" + std::to_string(next_id_++);
                s = std::make_shared<Session>(id, std::move(config), options_.event_interval_ms, hold, autostart);
                sessions_[id] = s;
            }
            reply(res, 201, s->handle());
        });

        http.Get("/experiments", [this](const httplib::Request &, httplib::Response &res) {
            std::vector<std::shared_ptr<Session>> all;
            {
                std::lock_guard lk(mu_);
                for (const auto &[id, s] : sessions_)
                    all.push_back(s);
            }
            json out = json::array();
            for (const auto &s : all)
                out.push_back(s->handle());
            reply(res, 200, out);
        });

        http.Get("/experiments/:id", [=](const httplib::Request &req, httplib::Response &res) {
            if (auto s = with_session(req, res))
                reply(res, 200, s->handle());
        });

        http.Delete("/experiments/:id", [this](const httplib::Request &req, httplib::Response &res) {
            std::shared_ptr<Session> s;
            {
                std::lock_guard lk(mu_);
                auto it = sessions_.find(req.path_params.at("id"));
                if (it == sessions_.end())
                    return reply(res, 404, error_body("unknown session"));
                s = it->second;
                sessions_.erase(it);
            }
            s->stop();
            res.status = 204;
        });

        http.Post("/experiments/:id/start", [=](const httplib::Request &req, httplib::Response &res) {
            if (auto s = with_session(req, res))
            {
                if (s->handle().at("started").get<bool>())
                    return reply(res, 409, error_body("session already started"));
                s->start();
                reply(res, 202, s->handle());
            }
        });

        http.Post("/experiments/:id/churn", [=](const httplib::Request &req, httplib::Response &res) {
            auto s = with_session(req, res);
            if (!s)
                return;
            json body = json::parse(req.body, nullptr, false);
            if (body.is_discarded())
                return reply(res, 400, error_body("body is not valid JSON"));
            ChurnRequest churn;
            try
            {
                churn = churn_request_from_json(body);
            }
            catch (const InvalidPlan &e)
            {
                return reply(res, 422, error_body(e.what()));
            }
            json out;
            const int status = s->churn(churn, out);
            reply(res, status, out);
        });

        auto control = [=](int (Session::*op)(json &)) {
            return [=](const httplib::Request &req, httplib::Response &res) {
                if (auto s = with_session(req, res))
                {
                    json out;
                    const int status = ((*s).*op)(out);
                    reply(res, status, out);
                }
            };
        };
        http.Post("/experiments/:id/pause", control(&Session::pause));
        http.Post("/experiments/:id/resume", control(&Session::resume));
        http.Post("/experiments/:id/finish", control(&Session::finish));

        http.Get("/experiments/:id/partitioned", [=](const httplib::Request &req, httplib::Response &res) {
            if (auto s = with_session(req, res))
                reply(res, 200, s->partitioned());
        });

        http.Get("/experiments/:id/stats", [=](const httplib::Request &req, httplib::Response &res) {
            if (auto s = with_session(req, res))
                reply(res, 200, s->stats());
        });

        http.Get("/experiments/:id/events", [=](const httplib::Request &req, httplib::Response &res) {
            auto s = with_session(req, res);
            if (!s)
                return;
            Tick from_tick = 0;
            if (req.has_param("from_tick"))
            {
                const std::string v = req.get_param_value("from_tick");
                const auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), from_tick);
                if (ec != std::errc{} || end != v.data() + v.size())
                    return reply(res, 400, error_body("from_tick must be a non-negative integer"));
            }
            res.set_header("Cache-Control", "no-cache");
            std::size_t next = 0;
            res.set_chunked_content_provider(
                "text/event-stream", [s, next, from_tick](std::size_t, httplib::DataSink &sink) mutable {
                    bool closed = false;
                    auto events = s->events_since(next, 250, closed);
                    for (const auto &ev : events)
                    {
                        ++next;
                        if (ev.contains("tick") && ev.at("tick").get<Tick>() < from_tick && !ev.contains("finished"))
                            continue;
                        const std::string line = "data: " + ev.dump() + "\n\n";
                        if (!sink.write(line.data(), line.size()))
                            return false;
                    }
                    // The finish event is appended before the close flag, so it was in this batch.
                    if (closed)
                        sink.done();
                    return true;
                });
        });
    }
} // namespace dpsim
