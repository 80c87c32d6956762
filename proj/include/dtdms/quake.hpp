#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "dtdms/city.hpp"
#include "dtdms/snapshot.hpp"
#include "dtdms/util.hpp"

namespace dtdms {

/// Tunables of the damage and survival model.
struct QuakeParams {
  double i0 = 4.0;   // magnitude at which damage starts
  double i1 = 9.0;   // magnitude of total damage
  double atten = 1.5;
  double jitter_amp = 0.2;
  double collapse_thresh = 0.7;
  double damage_thresh = 0.35;
  double road_block_thresh = 0.6;
  double infra_down_thresh = 0.5;
  double tau_hours = 72.0;
  double speed_kmh = 30.0;
  double setup_hours = 0.5;

  void validate() const {
    if (!(i0 < i1)) throw ValueError("params: i0 must be < i1");
    for (double th : {collapse_thresh, damage_thresh, road_block_thresh, infra_down_thresh})
      if (!(th > 0.0 && th < 1.0)) throw ValueError("params: thresholds must lie in (0,1)");
    if (!(tau_hours > 0.0)) throw ValueError("params: tau_hours must be > 0");
    if (!(speed_kmh > 0.0)) throw ValueError("params: speed_kmh must be > 0");
    if (!(setup_hours >= 0.0)) throw ValueError("params: setup_hours must be >= 0");
    if (!(jitter_amp >= 0.0)) throw ValueError("params: jitter_amp must be >= 0");
  }
};

struct DisasterScenario {
  LatLon epicenter;
  double magnitude = 0.0;
  double origin_time = 0.0;
  std::uint64_t seed = 0;
  QuakeParams params;

  void validate() const {
    if (!(magnitude >= 0.0)) throw ValueError("scenario: magnitude must be >= 0");
    params.validate();
  }
};

/// Default jitter: hash of (seed, asset id) mapped to [0,1).
struct HashJitter {
  double operator()(std::uint64_t seed, std::string_view asset_id) const {
    return unit_interval(hash64(seed, asset_id));
  }
};

/// Fixed jitter draw, for desk checks that need the base curve.
struct PinnedJitter {
  double u = 0.5;
  double operator()(std::uint64_t, std::string_view) const { return u; }
};

/// Severity before jitter: linear ramp between i0 and i1 of the attenuated magnitude.
inline double base_severity(const DisasterScenario& sc, LatLon location) {
  const auto& p = sc.params;
  const double d_km = haversine_km(location, sc.epicenter);
  return clamp01((sc.magnitude - p.atten * std::log10(1.0 + d_km) - p.i0) / (p.i1 - p.i0));
}

/// Per-asset damage scalar in [0,1]. Deterministic in (scenario, location, asset_id).
template <class Jitter = HashJitter>
double severity(const DisasterScenario& sc, LatLon location, std::string_view asset_id,
                const Jitter& jitter = {}) {
  const double u = jitter(sc.seed, asset_id);
  return clamp01(base_severity(sc, location) + sc.params.jitter_amp * (u - 0.5));
}

/// Building severity after resilience: s * (1 - 0.5 * resilience).
template <class Jitter = HashJitter>
double building_severity(const CityGraph& city, const DisasterScenario& sc, const Building& b,
                         const Jitter& jitter = {}) {
  const double s = severity(sc, city.position_of(b.node_ref), b.id, jitter);
  return clamp01(s * (1.0 - 0.5 * b.resilience));
}

inline LatLon edge_midpoint(const CityGraph& city, const RoadSegment& e) {
  const LatLon a = city.position_of(e.a);
  const LatLon b = city.position_of(e.b);
  return {(a.lat + b.lat) / 2.0, (a.lon + b.lon) / 2.0};
}

inline Damage classify_damage(const QuakeParams& p, double s) {
  if (s >= p.collapse_thresh) return Damage::collapsed;
  if (s >= p.damage_thresh) return Damage::damaged;
  return Damage::intact;
}

/// Applies the shock to an intact city and returns the snapshot at t = 0.
template <class Jitter = HashJitter>
TwinSnapshot apply_earthquake(const CityGraph& city, const DisasterScenario& sc,
                              const Jitter& jitter = {}) {
  const auto& p = sc.params;
  TwinSnapshot s = pre_disaster_snapshot(city);
  s.t = 0.0;
  for (const auto& b : city.buildings) {
    const double sb = building_severity(city, sc, b, jitter);
    BuildingState& st = s.building_state[b.id];
    st.damage = classify_damage(p, sb);
    st.trapped = st.damage == Damage::collapsed
                     ? round_persons(static_cast<double>(b.occupancy) * sb)
                     : 0;
    st.saved = 0;
  }
  for (const auto& e : city.edges)
    s.edge_passable[e.id] = severity(sc, edge_midpoint(city, e), e.id, jitter) < p.road_block_thresh;
  for (const auto& [_, assets] : city.infrastructure)
    for (const auto& a : assets)
      s.infra_status[a.id] = severity(sc, city.position_of(a.node_ref), a.id, jitter) >=
                                     p.infra_down_thresh
                                 ? InfraStatus::down
                                 : InfraStatus::up;
  return s;
}

/// exp(-dt / tau). Throws ValueError for negative dt.
inline double survival_fraction(const QuakeParams& p, double dt_seconds) {
  if (!(dt_seconds >= 0.0)) throw ValueError("survival_fraction: dt must be >= 0");
  return std::exp(-dt_seconds / (p.tau_hours * 3600.0));
}

/// A team finished extracting people from a building at t_done.
struct RescueCompletion {
  std::string team_id;
  std::string building_id;
  double t_done = 0.0;
};

/// Evolves `s` by dt seconds, applying every completion in (s.t, s.t + dt].
/// Completions outside the window are ignored; unknown ids throw ReferenceError.
inline TwinSnapshot advance(const CityGraph& city, const QuakeParams& p, const TwinSnapshot& s,
                            double dt, const std::vector<RescueCompletion>& events) {
  if (!(dt > 0.0)) throw ValueError("advance: dt must be > 0");
  TwinSnapshot next = s;
  next.t = s.t + dt;
  for (const auto& ev : events) {
    auto bit = next.building_state.find(ev.building_id);
    const Building* b = city.find_building(ev.building_id);
    if (bit == next.building_state.end() || !b) throw ReferenceError("building", ev.building_id);
    auto tit = next.team_state.find(ev.team_id);
    if (tit == next.team_state.end() || !city.center_of_team(ev.team_id))
      throw ReferenceError("team", ev.team_id);
    if (!(ev.t_done > s.t && ev.t_done <= next.t)) continue;

    BuildingState& st = bit->second;
    const std::int64_t got =
        round_persons(static_cast<double>(st.trapped) * survival_fraction(p, ev.t_done));
    st.saved = std::min(st.trapped, st.saved + got);
    tit->second.at = b->node_ref;
    tit->second.busy_until = std::max(tit->second.busy_until, ev.t_done);
  }
  return next;
}

inline DisasterScenario scenario_from_json(const Json& root) {
  detail::Fields f(root, "");
  DisasterScenario sc;
  const Json& epi = f.array("epicenter");
  if (epi.size() != 2 || !epi[0].is_number() || !epi[1].is_number())
    throw ParseError("expected [lat, lon]", 0, "epicenter");
  sc.epicenter = {epi[0].get<double>(), epi[1].get<double>()};
  sc.magnitude = f.number("magnitude");
  const Json& seed = f.required("seed");
  if (!seed.is_number_unsigned() && !(seed.is_number_integer() && seed.get<std::int64_t>() >= 0))
    throw ParseError("expected an unsigned 64-bit integer", 0, "seed");
  sc.seed = seed.get<std::uint64_t>();

  if (root.contains("params")) {
    const Json& params = root["params"];
    if (!params.is_object()) throw ParseError("expected an object", 0, "params");
    auto& p = sc.params;
    const std::pair<const char*, double*> slots[] = {
        {"i0", &p.i0},
        {"i1", &p.i1},
        {"atten", &p.atten},
        {"jitter_amp", &p.jitter_amp},
        {"collapse_thresh", &p.collapse_thresh},
        {"damage_thresh", &p.damage_thresh},
        {"road_block_thresh", &p.road_block_thresh},
        {"infra_down_thresh", &p.infra_down_thresh},
        {"tau_hours", &p.tau_hours},
        {"speed_kmh", &p.speed_kmh},
        {"setup_hours", &p.setup_hours},
    };
    std::set<std::string> known;
    for (const auto& [name, dst] : slots) {
      known.insert(name);
      if (auto it = params.find(name); it != params.end()) {
        if (!it->is_number()) throw ParseError("expected a number", 0, std::string("params.") + name);
        *dst = it->get<double>();
      }
    }
    for (auto it = params.begin(); it != params.end(); ++it)
      if (!known.contains(it.key())) throw ParseError("unknown parameter", 0, "params." + it.key());
  }
  sc.validate();
  return sc;
}

inline DisasterScenario parse_scenario(std::string_view text) {
  return scenario_from_json(detail::parse_json_text(text));
}

inline DisasterScenario load_scenario(const std::filesystem::path& file) {
  return parse_scenario(detail::read_file(file));
}

inline OrderedJson scenario_to_json(const DisasterScenario& sc) {
  const auto& p = sc.params;
  return {{"epicenter", {sc.epicenter.lat, sc.epicenter.lon}},
          {"magnitude", sc.magnitude},
          {"seed", sc.seed},
          {"params",
           {{"i0", p.i0},
            {"i1", p.i1},
            {"atten", p.atten},
            {"jitter_amp", p.jitter_amp},
            {"collapse_thresh", p.collapse_thresh},
            {"damage_thresh", p.damage_thresh},
            {"road_block_thresh", p.road_block_thresh},
            {"infra_down_thresh", p.infra_down_thresh},
            {"tau_hours", p.tau_hours},
            {"speed_kmh", p.speed_kmh},
            {"setup_hours", p.setup_hours}}}};
}

/// Short stable reference for a scenario: hex of hash64 over its canonical JSON.
inline std::string scenario_ref(const DisasterScenario& sc) {
  const std::uint64_t h = hash64(sc.seed, scenario_to_json(sc).dump());
  static constexpr char hex[] = "0123456789abcdef";
  std::string out = "scn-";
  for (int shift = 60; shift >= 0; shift -= 4) out += hex[(h >> shift) & 0xF];
  return out;
}

}  // namespace dtdms
