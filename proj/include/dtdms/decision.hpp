#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "dtdms/city.hpp"
#include "dtdms/quake.hpp"
#include "dtdms/routing.hpp"
#include "dtdms/snapshot.hpp"

namespace dtdms {

struct Assignment {
  std::string team_id;
  std::string building_id;
  Path route;
  double depart = 0.0;

  bool operator==(const Assignment&) const = default;
};

/// Injective team -> collapsed-building assignment.
struct DispatchPlan {
  std::string plan_id;
  std::vector<Assignment> assignments;  // ordered by team id
  bool greedy = false;                   // produced by the greedy fallback

  double total_route_cost() const {
    double c = 0.0;
    for (const auto& a : assignments) c += a.route.cost;
    return c;
  }

  bool operator==(const DispatchPlan&) const = default;
};

struct PlanLimits {
  std::size_t max_targets = 6;
  std::size_t max_plans = 10'000;
  bool force_exhaustive = false;  // never fall back to greedy
};

struct DecisionLogEntry {
  std::string team_id;
  TeamKind team_kind = TeamKind::search;
  std::string building_id;
  double depart = 0.0;
  double travel_s = 0.0;
  double t_done = 0.0;
  double route_cost = 0.0;
  std::int64_t trapped = 0;
  std::int64_t saved = 0;

  bool operator==(const DecisionLogEntry&) const = default;
};

struct InfraTally {
  std::int64_t up = 0;
  std::int64_t down = 0;
  bool operator==(const InfraTally&) const = default;
};

struct OutcomeReport {
  std::string scenario_ref;
  std::string plan_ref;  // empty for the no-action baseline
  std::int64_t total_trapped = 0;
  std::int64_t total_saved = 0;
  std::int64_t casualties = 0;
  std::map<Damage, std::int64_t> buildings;
  std::map<InfraLayer, InfraTally> infra;
  std::vector<DecisionLogEntry> decisions_log;
  double total_route_cost = 0.0;
  double success_rate = 1.0;

  bool operator==(const OutcomeReport&) const = default;
};

/// Builds the canonical plan id "team>building,team>building" in team-id order.
inline std::string make_plan_id(const std::vector<Assignment>& assignments) {
  std::string id;
  for (const auto& a : assignments) {
    if (!id.empty()) id += ',';
    id += a.team_id + '>' + a.building_id;
  }
  return id;
}

/// Collapsed buildings nobody has been saved from yet, by trapped desc then id.
inline std::vector<std::string> rescue_targets(const TwinSnapshot& snap, std::size_t max_targets) {
  std::vector<std::pair<std::int64_t, std::string>> ranked;
  for (const auto& [id, st] : snap.building_state)
    if (st.damage == Damage::collapsed && st.saved == 0) ranked.emplace_back(st.trapped, id);
  std::sort(ranked.begin(), ranked.end(), [](const auto& x, const auto& y) {
    return x.first != y.first ? x.first > y.first : x.second < y.second;
  });
  if (ranked.size() > max_targets) ranked.resize(max_targets);
  std::vector<std::string> out;
  for (auto& [_, id] : ranked) out.push_back(std::move(id));
  return out;
}

/// Teams with busy_until <= snapshot.t, in id order.
inline std::vector<std::string> idle_teams(const TwinSnapshot& snap) {
  std::vector<std::string> out;
  for (const auto& [id, ts] : snap.team_state)
    if (ts.busy_until <= snap.t) out.push_back(id);
  return out;
}

/// Number of non-empty partial injective maps of `teams` into `targets`:
/// sum over j of C(teams, j) * P(targets, j). Saturates at `cap + 1`.
inline std::uint64_t count_partial_injections(std::size_t teams, std::size_t targets,
                                              std::uint64_t cap) {
  std::uint64_t total = 0;
  std::uint64_t choose = 1;  // C(teams, j)
  std::uint64_t perm = 1;    // P(targets, j)
  for (std::size_t j = 1; j <= std::min(teams, targets); ++j) {
    choose = choose * (teams - j + 1) / j;
    perm *= targets - j + 1;
    if (perm > cap || choose > cap) return cap + 1;
    const unsigned __int128 term = static_cast<unsigned __int128>(choose) * perm;
    if (term > cap) return cap + 1;
    total += static_cast<std::uint64_t>(term);
    if (total > cap) return cap + 1;
  }
  return total;
}

/// Seconds from departure to extraction finished.
inline double rescue_duration(const QuakeParams& p, double route_cost_m) {
  return route_cost_m / (p.speed_kmh / 3.6) + p.setup_hours * 3600.0;
}

namespace detail {

struct Leg {
  std::optional<Path> route;
  std::int64_t expected_saved = 0;
};

struct LegTable {
  std::vector<std::string> teams;
  std::vector<std::string> targets;
  std::vector<std::vector<Leg>> legs;  // [team][target]
};

inline LegTable build_legs(const CityGraph& city, const QuakeParams& p, const TwinSnapshot& snap,
                           const PlanLimits& limits) {
  LegTable tab;
  tab.teams = idle_teams(snap);
  tab.targets = rescue_targets(snap, limits.max_targets);
  const RoadGraph graph(city);
  tab.legs.assign(tab.teams.size(), std::vector<Leg>(tab.targets.size()));
  for (std::size_t i = 0; i < tab.teams.size(); ++i) {
    const std::string& from = snap.team_state.at(tab.teams[i]).at;
    for (std::size_t k = 0; k < tab.targets.size(); ++k) {
      const Building* b = city.find_building(tab.targets[k]);
      if (!b) throw ReferenceError("building", tab.targets[k]);
      Leg& leg = tab.legs[i][k];
      leg.route = ucs_route(graph, snap, from, b->node_ref);
      if (leg.route) {
        const double t_done = snap.t + rescue_duration(p, leg.route->cost);
        leg.expected_saved = round_persons(
            static_cast<double>(snap.building_state.at(tab.targets[k]).trapped) *
            survival_fraction(p, t_done));
      }
    }
  }
  return tab;
}

inline void enumerate_exhaustive(const LegTable& tab, double depart, std::size_t team,
                                 std::vector<bool>& used, std::vector<Assignment>& current,
                                 std::vector<DispatchPlan>& out) {
  if (team == tab.teams.size()) {
    if (!current.empty()) out.push_back({make_plan_id(current), current, false});
    return;
  }
  enumerate_exhaustive(tab, depart, team + 1, used, current, out);
  for (std::size_t k = 0; k < tab.targets.size(); ++k) {
    if (used[k] || !tab.legs[team][k].route) continue;
    used[k] = true;
    current.push_back({tab.teams[team], tab.targets[k], *tab.legs[team][k].route, depart});
    enumerate_exhaustive(tab, depart, team + 1, used, current, out);
    current.pop_back();
    used[k] = false;
  }
}

inline DispatchPlan greedy_plan(const LegTable& tab, double depart) {
  std::vector<bool> team_used(tab.teams.size(), false);
  std::vector<bool> target_used(tab.targets.size(), false);
  std::vector<Assignment> picked;
  for (;;) {
    std::optional<std::pair<std::size_t, std::size_t>> best;
    for (std::size_t i = 0; i < tab.teams.size(); ++i) {
      if (team_used[i]) continue;
      for (std::size_t k = 0; k < tab.targets.size(); ++k) {
        const Leg& leg = tab.legs[i][k];
        if (target_used[k] || !leg.route) continue;
        if (!best) {
          best = {i, k};
          continue;
        }
        const Leg& cur = tab.legs[best->first][best->second];
        // Loops run in (team id, target rank) order, so only strictly
        // better legs replace the incumbent.
        if (leg.expected_saved > cur.expected_saved ||
            (leg.expected_saved == cur.expected_saved && leg.route->cost < cur.route->cost))
          best = {i, k};
      }
    }
    if (!best) break;
    team_used[best->first] = true;
    target_used[best->second] = true;
    picked.push_back({tab.teams[best->first], tab.targets[best->second],
                      *tab.legs[best->first][best->second].route, depart});
  }
  std::sort(picked.begin(), picked.end(),
            [](const Assignment& x, const Assignment& y) { return x.team_id < y.team_id; });
  return {make_plan_id(picked), std::move(picked), true};
}

}  // namespace detail

/// Candidate dispatch plans for `snap`. Every non-empty partial injective map
/// of idle teams onto ranked targets when that count fits in max_plans,
/// otherwise a single greedy plan (flagged `greedy`). Plans needing an
/// unroutable leg are dropped. Routes are UCS from the team's node.
inline std::vector<DispatchPlan> enumerate_plans(const CityGraph& city, const QuakeParams& params,
                                                 const TwinSnapshot& snap,
                                                 const PlanLimits& limits = {}) {
  const auto tab = detail::build_legs(city, params, snap, limits);
  std::vector<DispatchPlan> out;
  if (tab.teams.empty() || tab.targets.empty()) return out;

  const auto count = count_partial_injections(tab.teams.size(), tab.targets.size(), limits.max_plans);
  if (count <= limits.max_plans || limits.force_exhaustive) {
    std::vector<bool> used(tab.targets.size(), false);
    std::vector<Assignment> current;
    detail::enumerate_exhaustive(tab, snap.t, 0, used, current, out);
  } else {
    auto plan = detail::greedy_plan(tab, snap.t);
    if (!plan.assignments.empty()) out.push_back(std::move(plan));
  }
  return out;
}

/// Simulates `plan` against `snap` in closed form. Throws ReferenceError when
/// the plan names ids missing from the snapshot, ValueError when a team is
/// used twice.
inline OutcomeReport evaluate_plan(const CityGraph& city, const DisasterScenario& scenario,
                                   const TwinSnapshot& snap, const DispatchPlan& plan) {
  const auto& p = scenario.params;
  OutcomeReport r;
  r.scenario_ref = scenario_ref(scenario);
  r.plan_ref = plan.plan_id;

  std::map<std::string, std::int64_t> saved;
  for (const auto& [id, st] : snap.building_state) saved[id] = st.saved;

  std::set<std::string> teams_seen;
  for (const auto& a : plan.assignments) {
    auto bit = snap.building_state.find(a.building_id);
    if (bit == snap.building_state.end()) throw ReferenceError("building", a.building_id);
    if (!snap.team_state.contains(a.team_id)) throw ReferenceError("team", a.team_id);
    const Team* team = city.find_team(a.team_id);
    if (!team) throw ReferenceError("team", a.team_id);
    if (!teams_seen.insert(a.team_id).second)
      throw ValueError("team '" + a.team_id + "' appears twice in plan " + plan.plan_id);

    DecisionLogEntry e;
    e.team_id = a.team_id;
    e.team_kind = team->kind;
    e.building_id = a.building_id;
    e.depart = a.depart;
    e.route_cost = a.route.cost;
    e.travel_s = a.route.cost / (p.speed_kmh / 3.6);
    e.t_done = a.depart + rescue_duration(p, a.route.cost);
    e.trapped = bit->second.trapped;
    const std::int64_t before = saved[a.building_id];
    const std::int64_t got =
        round_persons(static_cast<double>(e.trapped) * survival_fraction(p, e.t_done));
    saved[a.building_id] = std::min(e.trapped, before + got);
    e.saved = saved[a.building_id] - before;
    r.total_route_cost += a.route.cost;
    r.decisions_log.push_back(std::move(e));
  }

  for (auto d : {Damage::intact, Damage::damaged, Damage::collapsed}) r.buildings[d] = 0;
  for (const auto& [id, st] : snap.building_state) {
    r.total_trapped += st.trapped;
    r.total_saved += saved[id];
    ++r.buildings[st.damage];
  }
  r.casualties = r.total_trapped - r.total_saved;
  r.success_rate = r.total_trapped == 0 ? 1.0
                                        : static_cast<double>(r.total_saved) /
                                              static_cast<double>(r.total_trapped);

  for (auto l : kInfraLayers) r.infra[l] = {};
  for (const auto& [layer, assets] : city.infrastructure)
    for (const auto& a : assets) {
      auto it = snap.infra_status.find(a.id);
      if (it == snap.infra_status.end()) throw ReferenceError("infrastructure", a.id);
      (it->second == InfraStatus::up ? r.infra[layer].up : r.infra[layer].down) += 1;
    }
  return r;
}

/// Ranking order: more saved first, then cheaper total route, then plan id.
inline bool ranks_before(const DispatchPlan& pa, const OutcomeReport& ra, const DispatchPlan& pb,
                         const OutcomeReport& rb) {
  if (ra.total_saved != rb.total_saved) return ra.total_saved > rb.total_saved;
  if (ra.total_route_cost != rb.total_route_cost) return ra.total_route_cost < rb.total_route_cost;
  return pa.plan_id < pb.plan_id;
}

struct RankedPlan {
  DispatchPlan plan;
  OutcomeReport report;
};

struct Recommendation {
  std::vector<RankedPlan> ranked;  // best first, at most top_n
  OutcomeReport baseline;          // outcome if nobody is dispatched
  bool greedy = false;
};

/// Evaluates every candidate plan and returns the best `top_n` (0 = all).
inline Recommendation recommend(const CityGraph& city, const DisasterScenario& scenario,
                                const TwinSnapshot& snap, const PlanLimits& limits = {},
                                std::size_t top_n = 3) {
  Recommendation rec;
  rec.baseline = evaluate_plan(city, scenario, snap, DispatchPlan{});
  for (auto& plan : enumerate_plans(city, scenario.params, snap, limits)) {
    rec.greedy = rec.greedy || plan.greedy;
    auto report = evaluate_plan(city, scenario, snap, plan);
    rec.ranked.push_back({std::move(plan), std::move(report)});
  }
  std::sort(rec.ranked.begin(), rec.ranked.end(), [](const RankedPlan& x, const RankedPlan& y) {
    return ranks_before(x.plan, x.report, y.plan, y.report);
  });
  if (top_n != 0 && rec.ranked.size() > top_n) rec.ranked.resize(top_n);
  return rec;
}

/// Completion events a plan would generate, for feeding `advance`.
inline std::vector<RescueCompletion> completions_of(const QuakeParams& p, const DispatchPlan& plan) {
  std::vector<RescueCompletion> out;
  for (const auto& a : plan.assignments)
    out.push_back({a.team_id, a.building_id, a.depart + rescue_duration(p, a.route.cost)});
  return out;
}

inline OrderedJson plan_to_json(const DispatchPlan& plan) {
  OrderedJson assignments = OrderedJson::array();
  for (const auto& a : plan.assignments)
    assignments.push_back({{"team_id", a.team_id},
                           {"building_id", a.building_id},
                           {"route", path_to_json(a.route)},
                           {"depart", a.depart}});
  return {{"plan_id", plan.plan_id}, {"greedy", plan.greedy}, {"assignments", assignments}};
}

inline OrderedJson report_to_json(const OutcomeReport& r) {
  OrderedJson buildings = OrderedJson::object();
  for (const auto& [d, n] : r.buildings) buildings[std::string(to_string(d))] = n;
  OrderedJson infra = OrderedJson::object();
  for (const auto& [l, tally] : r.infra)
    infra[std::string(to_string(l))] = {{"up", tally.up}, {"down", tally.down}};
  OrderedJson log = OrderedJson::array();
  for (const auto& e : r.decisions_log)
    log.push_back({{"team_id", e.team_id},
                   {"team_kind", to_string(e.team_kind)},
                   {"building_id", e.building_id},
                   {"depart", e.depart},
                   {"travel_s", e.travel_s},
                   {"t_done", e.t_done},
                   {"route_cost", e.route_cost},
                   {"trapped", e.trapped},
                   {"saved", e.saved}});
  OrderedJson out;
  out["scenario"] = r.scenario_ref;
  out["plan"] = r.plan_ref.empty() ? OrderedJson(nullptr) : OrderedJson(r.plan_ref);
  out["total_trapped"] = r.total_trapped;
  out["total_saved"] = r.total_saved;
  out["casualties"] = r.casualties;
  out["buildings"] = buildings;
  out["infra"] = infra;
  out["decisions_log"] = log;
  out["total_route_cost"] = r.total_route_cost;
  out["success_rate"] = r.success_rate;
  return out;
}

}  // namespace dtdms
