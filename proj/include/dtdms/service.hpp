#pragma once

#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "httplib.h"

#include "dtdms/city.hpp"
#include "dtdms/decision.hpp"
#include "dtdms/ingest.hpp"
#include "dtdms/quake.hpp"
#include "dtdms/snapshot.hpp"

namespace dtdms {

enum class Mode { education, estimating };

inline std::string_view to_string(Mode m) { return m == Mode::education ? "education" : "estimating"; }

inline std::optional<Mode> parse_mode(std::string_view s) {
  if (s == "education") return Mode::education;
  if (s == "estimating") return Mode::estimating;
  return std::nullopt;
}

/// Request-level failure with an HTTP status.
class ServiceError : public Error {
 public:
  ServiceError(int status, const std::string& message) : Error(message), status_(status) {}
  int status() const noexcept { return status_; }

 private:
  int status_;
};

struct SessionOptions {
  PlanLimits limits;
  std::size_t offered_plans = 3;
  double horizon_s = 72.0 * 3600.0;
  double staleness_tolerance = 0.0;
};

struct AppliedDecision {
  std::string plan_id;
  OutcomeReport report;
};

/// One operator session: a city, at most one active scenario, its timeline,
/// and the offer/decision cycle. Queries take a shared lock; scenario loads,
/// decisions and ingestion take the exclusive lock, so a reader sees either
/// the whole effect of a decision or none of it.
class Session {
 public:
  Session(CityGraph city, Mode mode, SessionOptions options = {})
      : mode_(mode),
        options_(options),
        twin_(std::move(city), options.staleness_tolerance),
        timeline_(std::make_shared<Timeline>(pre_disaster_snapshot(twin_.city()))) {}

  Mode mode() const { return mode_; }

  /// Applies a scenario and starts a fresh timeline. In estimating mode the
  /// best plan is applied immediately.
  void load_scenario(const DisasterScenario& sc) {
    std::unique_lock lock(mu_);
    sc.validate();
    scenario_ = sc;
    const TwinSnapshot& t0 = twin_.apply_scenario(sc);
    auto timeline = std::make_shared<Timeline>(pre_disaster_snapshot(twin_.city()));
    timeline->append(t0);
    timeline_ = std::move(timeline);
    offered_.clear();
    decisions_.clear();
    ++generation_;
    if (mode_ == Mode::estimating) auto_decide_locked();
  }

  bool initialized() const {
    std::shared_lock lock(mu_);
    return scenario_.has_value();
  }

  std::shared_ptr<const Timeline> timeline() const {
    std::shared_lock lock(mu_);
    return timeline_;
  }

  std::uint64_t generation() const {
    std::shared_lock lock(mu_);
    return generation_;
  }

  /// Snapshot view at t (latest snapshot at or before t) plus static geometry.
  OrderedJson handle_state_query(std::optional<double> t) const {
    std::shared_lock lock(mu_);
    require_initialized();
    const auto snap = t ? timeline_->at(*t) : timeline_->back();
    OrderedJson out;
    out["t"] = t ? OrderedJson(*t) : OrderedJson(snap->t);
    out["pre_disaster"] = snap == timeline_->pre_disaster();
    out["snapshot"] = snapshot_to_json(*snap);
    out["city"] = city_to_json(twin_.city());
    return out;
  }

  OrderedJson handle_infrastructure_query(InfraLayer layer, std::optional<double> t) const {
    std::shared_lock lock(mu_);
    require_initialized();
    const auto snap = t ? timeline_->at(*t) : timeline_->back();
    const auto& city = twin_.city();
    OrderedJson assets = OrderedJson::array();
    if (auto it = city.infrastructure.find(layer); it != city.infrastructure.end())
      for (const auto& a : it->second) {
        const auto pos = city.position_of(a.node_ref);
        assets.push_back({{"id", a.id},
                          {"node_ref", a.node_ref},
                          {"lat", pos.lat},
                          {"lon", pos.lon},
                          {"status", to_string(snap->infra_status.at(a.id))}});
      }
    return {{"layer", to_string(layer)}, {"t", snap->t}, {"assets", assets}};
  }

  /// Education mode: ranks plans on the latest snapshot and offers the top few.
  OrderedJson handle_plan_request() {
    std::unique_lock lock(mu_);
    require_initialized();
    if (mode_ != Mode::education) throw ServiceError(409, "plans are only offered in education mode");
    require_open();
    const auto head = timeline_->back();
    auto rec = recommend(twin_.city(), *scenario_, *head, options_.limits, options_.offered_plans);
    offered_.clear();
    OrderedJson plans = OrderedJson::array();
    for (auto& rp : rec.ranked) {
      OrderedJson p = plan_to_json(rp.plan);
      p["success_rate"] = rp.report.success_rate;
      p["total_saved"] = rp.report.total_saved;
      p["report"] = report_to_json(rp.report);
      plans.push_back(std::move(p));
      offered_.emplace(rp.plan.plan_id, std::move(rp));
    }
    return {{"t", head->t}, {"greedy", rec.greedy}, {"plans", plans},
            {"baseline", report_to_json(rec.baseline)}};
  }

  /// Applies an offered plan verbatim and extends the timeline through every
  /// rescue completion.
  OutcomeReport handle_decision(const std::string& plan_id) {
    std::unique_lock lock(mu_);
    require_initialized();
    if (offered_.empty()) throw ServiceError(409, "no plans are currently offered");
    auto it = offered_.find(plan_id);
    if (it == offered_.end()) throw ServiceError(404, "plan '" + plan_id + "' was not offered");
    DispatchPlan plan = it->second.plan;
    return apply_plan_locked(plan);
  }

  /// Estimating mode: recommends and applies the top plan (or nothing).
  OutcomeReport auto_decide() {
    std::unique_lock lock(mu_);
    require_initialized();
    return auto_decide_locked();
  }

  /// Latest decision's report, or the no-action outcome on the current head.
  OutcomeReport current_report() const {
    std::shared_lock lock(mu_);
    require_initialized();
    if (!decisions_.empty()) return decisions_.back().report;
    return evaluate_plan(twin_.city(), *scenario_, *timeline_->back(), DispatchPlan{});
  }

  std::vector<AppliedDecision> applied_decisions() const {
    std::shared_lock lock(mu_);
    return decisions_;
  }

  /// Applies one sensor reading. Accepted post-disaster changes publish a new
  /// snapshot and invalidate any pending offer.
  ApplyOutcome ingest(const SensorReading& r) {
    std::unique_lock lock(mu_);
    const auto outcome = twin_.apply(r);
    if (outcome == ApplyOutcome::applied && twin_.post_disaster() && scenario_) {
      TwinSnapshot next = twin_.head();
      next.t = std::max(std::ceil(next.t), timeline_->back()->t);
      if (!(next == *timeline_->back())) {
        timeline_->append(next);
        twin_.set_head(std::move(next));
        offered_.clear();
      }
    }
    return outcome;
  }

  const LiveTwin& twin() const { return twin_; }

  bool ended() const {
    std::shared_lock lock(mu_);
    return scenario_ && timeline_->back()->t >= options_.horizon_s;
  }

  /// Hash over everything a request could change.
  std::uint64_t state_hash() const {
    std::shared_lock lock(mu_);
    OrderedJson j;
    j["mode"] = to_string(mode_);
    j["scenario"] = scenario_ ? scenario_to_json(*scenario_) : OrderedJson(nullptr);
    OrderedJson tl = OrderedJson::array();
    for (std::size_t i = 0; i < timeline_->size(); ++i) tl.push_back(snapshot_to_json(*(*timeline_)[i]));
    j["timeline"] = tl;
    OrderedJson offers = OrderedJson::array();
    for (const auto& [id, _] : offered_) offers.push_back(id);
    j["offers"] = offers;
    OrderedJson decisions = OrderedJson::array();
    for (const auto& d : decisions_) decisions.push_back(report_to_json(d.report));
    j["decisions"] = decisions;
    j["twin"] = twin_.state_json();
    return fnv1a64(j.dump());
  }

 private:
  void require_initialized() const {
    if (!scenario_) throw ServiceError(409, "no scenario loaded");
  }
  void require_open() const {
    if (timeline_->back()->t >= options_.horizon_s)
      throw ServiceError(409, "session horizon reached");
  }

  OutcomeReport auto_decide_locked() {
    require_open();
    const auto head = timeline_->back();
    auto rec = recommend(twin_.city(), *scenario_, *head, options_.limits, 1);
    if (rec.ranked.empty()) return rec.baseline;
    return apply_plan_locked(rec.ranked.front().plan);
  }

  OutcomeReport apply_plan_locked(const DispatchPlan& plan) {
    require_open();
    const auto& city = twin_.city();
    const auto& params = scenario_->params;
    const auto head = timeline_->back();
    OutcomeReport report = evaluate_plan(city, *scenario_, *head, plan);

    // Group completions by the whole second at which they become visible.
    std::map<double, std::vector<RescueCompletion>> by_second;
    for (auto& ev : completions_of(params, plan)) by_second[std::ceil(ev.t_done)].push_back(ev);

    TwinSnapshot cur = *head;
    for (const auto& [t, events] : by_second) {
      if (t <= cur.t) throw Error("rescue completion does not lie after the current snapshot");
      cur = advance(city, params, cur, t - cur.t, events);
      timeline_->append(cur);
    }
    twin_.set_head(cur);
    decisions_.push_back({plan.plan_id, report});
    offered_.clear();
    return report;
  }

  mutable std::shared_mutex mu_;
  Mode mode_;
  SessionOptions options_;
  LiveTwin twin_;
  std::optional<DisasterScenario> scenario_;
  std::shared_ptr<Timeline> timeline_;
  std::map<std::string, RankedPlan> offered_;
  std::vector<AppliedDecision> decisions_;
  std::uint64_t generation_ = 0;
};

/// HTTP + event-stream front end for a Session.
class ApiServer {
 public:
  explicit ApiServer(Session& session) : session_(session) { routes(); }
  ~ApiServer() { stop(); }

  ApiServer(const ApiServer&) = delete;
  ApiServer& operator=(const ApiServer&) = delete;

  /// Binds; returns the bound port (ephemeral when `port` is 0).
  int bind(const std::string& host, int port) {
    if (port == 0) return http_.bind_to_any_port(host);
    if (!http_.bind_to_port(host, port)) throw Error("cannot bind " + host + ":" + std::to_string(port));
    return port;
  }

  /// Serves until stop(). Call after bind().
  void run() { http_.listen_after_bind(); }

  void stop() {
    stopping_ = true;
    http_.stop();
  }

  bool running() const { return http_.is_running(); }
  void wait_until_ready() const { http_.wait_until_ready(); }

 private:
  static std::optional<double> time_param(const httplib::Request& req) {
    if (!req.has_param("t")) return std::nullopt;
    const std::string v = req.get_param_value("t");
    try {
      std::size_t used = 0;
      const long long t = std::stoll(v, &used);
      if (used != v.size()) throw std::invalid_argument(v);
      return static_cast<double>(t);
    } catch (const std::exception&) {
      throw ServiceError(400, "t must be an integer number of seconds");
    }
  }

  static void send_json(httplib::Response& res, const OrderedJson& body, int status = 200) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  template <class Fn>
  httplib::Server::Handler guarded(Fn fn) {
    return [fn](const httplib::Request& req, httplib::Response& res) {
      try {
        fn(req, res);
      } catch (const ServiceError& e) {
        send_json(res, {{"error", e.what()}}, e.status());
      } catch (const Error& e) {
        send_json(res, {{"error", e.what()}}, 400);
      } catch (const std::exception& e) {
        send_json(res, {{"error", e.what()}}, 500);
      }
    };
  }

  void routes() {
    http_.Get("/api/state", guarded([this](const auto& req, auto& res) {
                send_json(res, session_.handle_state_query(time_param(req)));
              }));
    http_.Get("/api/infrastructure", guarded([this](const auto& req, auto& res) {
                auto layer = parse_infra_layer(req.get_param_value("layer"));
                if (!layer) throw ServiceError(400, "layer must be water|electricity|telecom|gas");
                send_json(res, session_.handle_infrastructure_query(*layer, time_param(req)));
              }));
    http_.Post("/api/scenario", guarded([this](const auto& req, auto& res) {
                 session_.load_scenario(parse_scenario(req.body));
                 send_json(res, {{"ok", true}, {"t", session_.timeline()->back()->t}});
               }));
    http_.Get("/api/plans", guarded([this](const auto&, auto& res) {
                send_json(res, session_.handle_plan_request());
              }));
    http_.Post("/api/decision", guarded([this](const auto& req, auto& res) {
                 Json body = detail::parse_json_text(req.body);
                 if (!body.is_object() || !body.contains("plan_id") || !body["plan_id"].is_string())
                   throw ServiceError(400, "body must be {\"plan_id\": \"...\"}");
                 send_json(res, report_to_json(session_.handle_decision(body["plan_id"].get<std::string>())));
               }));
    http_.Get("/api/report", guarded([this](const auto&, auto& res) {
                send_json(res, report_to_json(session_.current_report()));
              }));
    http_.Get("/api/events", [this](const httplib::Request&, httplib::Response& res) {
      auto cursor = std::make_shared<std::pair<std::uint64_t, std::size_t>>(session_.generation(), 0);
      res.set_header("Cache-Control", "no-cache");
      res.set_chunked_content_provider(
          "text/event-stream", [this, cursor](std::size_t, httplib::DataSink& sink) {
            if (stopping_) return false;
            if (cursor->first != session_.generation()) *cursor = {session_.generation(), 0};
            const auto timeline = session_.timeline();
            const std::size_t n = timeline->wait_beyond(cursor->second, std::chrono::milliseconds(250));
            if (n == cursor->second) {
              static constexpr char keepalive[] = ": keepalive\n\n";
              return sink.write(keepalive, sizeof keepalive - 1);
            }
            for (; cursor->second < n; ++cursor->second) {
              const OrderedJson data{{"t", (*timeline)[cursor->second]->t}};
              const std::string ev = "event: snapshot\ndata: " + data.dump() + "\n\n";
              if (!sink.write(ev.data(), ev.size())) return false;
            }
            return true;
          });
    });
  }

  Session& session_;
  httplib::Server http_;
  std::atomic<bool> stopping_{false};
};

/// Estimating-mode batch run: applies the scenario, auto-applies the best
/// plan and writes its report. Returns a process exit status; on failure the
/// output file is not created.
inline int run_estimate(const std::filesystem::path& city_file,
                        const std::filesystem::path& scenario_file, const std::filesystem::path& out,
                        std::ostream& err = std::cerr, SessionOptions options = {}) {
  try {
    Session session(load_city(city_file), Mode::estimating, options);
    session.load_scenario(load_scenario(scenario_file));
    const std::string body = report_to_json(session.current_report()).dump(2) + "\n";

    const auto tmp = std::filesystem::path(out.string() + ".tmp");
    {
      std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
      if (!f) throw Error("cannot write '" + tmp.string() + "'");
      f << body;
      if (!f.flush()) throw Error("cannot write '" + tmp.string() + "'");
    }
    std::filesystem::rename(tmp, out);
    return 0;
  } catch (const std::exception& e) {
    err << "estimate: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace dtdms
