#pragma once

#include <condition_variable>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <vector>

#include "dtdms/city.hpp"

namespace dtdms {

enum class Damage { intact, damaged, collapsed };

inline std::string_view to_string(Damage d) {
  switch (d) {
    case Damage::intact: return "intact";
    case Damage::damaged: return "damaged";
    case Damage::collapsed: return "collapsed";
  }
  return "intact";
}

inline std::optional<Damage> parse_damage(std::string_view s) {
  if (s == "intact") return Damage::intact;
  if (s == "damaged") return Damage::damaged;
  if (s == "collapsed") return Damage::collapsed;
  return std::nullopt;
}

struct BuildingState {
  Damage damage = Damage::intact;
  std::int64_t trapped = 0;
  std::int64_t saved = 0;
  bool operator==(const BuildingState&) const = default;
};

struct TeamState {
  std::string at;          // node id
  double busy_until = 0.0;  // seconds since origin
  bool operator==(const TeamState&) const = default;
};

/// Display-only marker from an unverified social-media report.
struct ReportMarker {
  std::string zone;
  std::int64_t count = 0;
  bool operator==(const ReportMarker&) const = default;
};

/// Full twin state at one instant. Ordered maps keep serialization stable.
struct TwinSnapshot {
  double t = 0.0;
  std::map<std::string, BuildingState> building_state;
  std::map<std::string, bool> edge_passable;
  std::map<std::string, InfraStatus> infra_status;
  std::map<std::string, TeamState> team_state;
  std::vector<ReportMarker> reports;

  bool operator==(const TwinSnapshot&) const = default;

  std::int64_t count(Damage d) const {
    std::int64_t n = 0;
    for (const auto& [_, s] : building_state) n += s.damage == d;
    return n;
  }

  /// Persons still trapped and not yet saved.
  std::int64_t unsaved() const {
    std::int64_t n = 0;
    for (const auto& [_, s] : building_state) n += s.trapped - s.saved;
    return n;
  }
};

/// The synthesized state before any shock: all intact, passable, up, teams home.
inline TwinSnapshot pre_disaster_snapshot(const CityGraph& city) {
  TwinSnapshot s;
  s.t = 0.0;
  for (const auto& b : city.buildings) s.building_state[b.id] = {};
  for (const auto& e : city.edges) s.edge_passable[e.id] = true;
  for (const auto& [_, assets] : city.infrastructure)
    for (const auto& a : assets) s.infra_status[a.id] = InfraStatus::up;
  for (const auto& c : city.rescue_centers)
    for (const auto& team : c.teams) s.team_state[team.team_id] = {c.node_ref, 0.0};
  return s;
}

inline OrderedJson snapshot_to_json(const TwinSnapshot& s) {
  OrderedJson out;
  out["t"] = s.t;
  OrderedJson buildings = OrderedJson::object();
  for (const auto& [id, b] : s.building_state)
    buildings[id] = {{"damage", to_string(b.damage)}, {"trapped", b.trapped}, {"saved", b.saved}};
  OrderedJson edges = OrderedJson::object();
  for (const auto& [id, p] : s.edge_passable) edges[id] = p;
  OrderedJson infra = OrderedJson::object();
  for (const auto& [id, st] : s.infra_status) infra[id] = to_string(st);
  OrderedJson teams = OrderedJson::object();
  for (const auto& [id, ts] : s.team_state) teams[id] = {{"at", ts.at}, {"busy_until", ts.busy_until}};
  OrderedJson reports = OrderedJson::array();
  for (const auto& r : s.reports) reports.push_back({{"zone", r.zone}, {"count", r.count}});
  out["building_state"] = buildings;
  out["edge_passable"] = edges;
  out["infra_status"] = infra;
  out["team_state"] = teams;
  out["reports"] = reports;
  return out;
}

/// Returns every id in `s` that does not resolve in `city` (empty = closed).
inline std::vector<std::string> dangling_ids(const CityGraph& city, const TwinSnapshot& s) {
  std::vector<std::string> bad;
  for (const auto& [id, _] : s.building_state)
    if (!city.find_building(id)) bad.push_back(id);
  for (const auto& [id, _] : s.edge_passable)
    if (!city.find_edge(id)) bad.push_back(id);
  for (const auto& [id, _] : s.infra_status)
    if (!city.find_infra(id)) bad.push_back(id);
  for (const auto& [id, ts] : s.team_state) {
    if (!city.center_of_team(id)) bad.push_back(id);
    if (!city.find_node(ts.at)) bad.push_back(ts.at);
  }
  return bad;
}

/// Latest snapshot with t' <= t; `pre_disaster` when t precedes the first one.
/// `timeline` must be non-empty and ordered by t.
inline const TwinSnapshot& snapshot_at(std::span<const TwinSnapshot> timeline,
                                       const TwinSnapshot& pre_disaster, double t) {
  if (timeline.empty() || t < timeline.front().t) return pre_disaster;
  auto it = std::upper_bound(timeline.begin(), timeline.end(), t,
                             [](double v, const TwinSnapshot& s) { return v < s.t; });
  return *std::prev(it);
}

/// Append-only sequence of immutable snapshots.
///
/// One writer appends; readers hold shared_ptrs to published snapshots and
/// never see one under construction.
class Timeline {
 public:
  using Ptr = std::shared_ptr<const TwinSnapshot>;

  explicit Timeline(TwinSnapshot pre_disaster)
      : pre_(std::make_shared<const TwinSnapshot>(std::move(pre_disaster))) {}

  /// Publishes a completed snapshot. Throws ValueError if it goes back in time.
  void append(TwinSnapshot s) {
    auto ptr = std::make_shared<const TwinSnapshot>(std::move(s));
    {
      std::unique_lock lock(mu_);
      if (ptr->t < 0.0) throw ValueError("snapshot time must be >= 0");
      if (!snaps_.empty() && ptr->t < snaps_.back()->t)
        throw ValueError("timeline is append-only in time order");
      snaps_.push_back(std::move(ptr));
    }
    cv_.notify_all();
  }

  Ptr at(double t) const {
    std::shared_lock lock(mu_);
    if (snaps_.empty() || t < snaps_.front()->t) return pre_;
    auto it = std::upper_bound(snaps_.begin(), snaps_.end(), t,
                               [](double v, const Ptr& s) { return v < s->t; });
    return *std::prev(it);
  }

  /// Last published snapshot, or the pre-disaster one when empty.
  Ptr back() const {
    std::shared_lock lock(mu_);
    return snaps_.empty() ? pre_ : snaps_.back();
  }

  Ptr pre_disaster() const { return pre_; }

  std::size_t size() const {
    std::shared_lock lock(mu_);
    return snaps_.size();
  }

  Ptr operator[](std::size_t i) const {
    std::shared_lock lock(mu_);
    return snaps_.at(i);
  }

  /// Blocks until more than `seen` snapshots exist or `timeout` elapses.
  template <class Duration>
  std::size_t wait_beyond(std::size_t seen, Duration timeout) const {
    std::shared_lock lock(mu_);
    cv_.wait_for(lock, timeout, [&] { return snaps_.size() > seen; });
    return snaps_.size();
  }

 private:
  Ptr pre_;
  std::vector<Ptr> snaps_;
  mutable std::shared_mutex mu_;
  mutable std::condition_variable_any cv_;
};

}  // namespace dtdms
