#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "dtdms/error.hpp"
#include "dtdms/util.hpp"

namespace dtdms {

using Json = nlohmann::json;
using OrderedJson = nlohmann::ordered_json;

struct Node {
  std::string id;
  double lat = 0.0;
  double lon = 0.0;

  LatLon position() const { return {lat, lon}; }
};

/// Undirected road segment between two distinct nodes.
struct RoadSegment {
  std::string id;
  std::string a;
  std::string b;
  double length_m = 0.0;
};

struct Building {
  std::string id;
  std::string node_ref;
  std::int64_t occupancy = 0;
  double resilience = 0.0;  // 0 = fragile, 1 = fully resilient
};

enum class TeamKind { search, medical, heavy };

struct Team {
  std::string team_id;
  TeamKind kind = TeamKind::search;
};

struct RescueCenter {
  std::string id;
  std::string node_ref;
  std::vector<Team> teams;
};

enum class InfraLayer { water, electricity, telecom, gas };
inline constexpr std::array<InfraLayer, 4> kInfraLayers = {
    InfraLayer::water, InfraLayer::electricity, InfraLayer::telecom, InfraLayer::gas};

enum class InfraStatus { up, down };

struct InfraAsset {
  std::string id;
  std::string node_ref;
  InfraStatus status = InfraStatus::up;
};

inline std::string_view to_string(TeamKind k) {
  switch (k) {
    case TeamKind::search: return "search";
    case TeamKind::medical: return "medical";
    case TeamKind::heavy: return "heavy";
  }
  return "search";
}

inline std::string_view to_string(InfraLayer l) {
  switch (l) {
    case InfraLayer::water: return "water";
    case InfraLayer::electricity: return "electricity";
    case InfraLayer::telecom: return "telecom";
    case InfraLayer::gas: return "gas";
  }
  return "water";
}

inline std::string_view to_string(InfraStatus s) { return s == InfraStatus::up ? "up" : "down"; }

inline std::optional<TeamKind> parse_team_kind(std::string_view s) {
  if (s == "search") return TeamKind::search;
  if (s == "medical") return TeamKind::medical;
  if (s == "heavy") return TeamKind::heavy;
  return std::nullopt;
}

inline std::optional<InfraLayer> parse_infra_layer(std::string_view s) {
  for (auto l : kInfraLayers)
    if (to_string(l) == s) return l;
  return std::nullopt;
}

inline std::optional<InfraStatus> parse_infra_status(std::string_view s) {
  if (s == "up") return InfraStatus::up;
  if (s == "down") return InfraStatus::down;
  return std::nullopt;
}

/// Static city model. Fill the public vectors, then call `index()` once; the
/// lookup helpers are only valid after a successful `index()`, and any later
/// mutation of the vectors' ids requires re-indexing.
struct CityGraph {
  std::vector<Node> nodes;
  std::vector<RoadSegment> edges;
  std::vector<Building> buildings;
  std::vector<RescueCenter> rescue_centers;
  std::map<InfraLayer, std::vector<InfraAsset>> infrastructure;

  /// Validates every invariant and builds id lookups.
  /// Throws DuplicateIdError, ReferenceError or ValueError.
  void index();

  const Node* find_node(std::string_view id) const { return lookup(node_ix_, nodes, id); }
  const RoadSegment* find_edge(std::string_view id) const { return lookup(edge_ix_, edges, id); }
  const Building* find_building(std::string_view id) const {
    return lookup(building_ix_, buildings, id);
  }
  const RescueCenter* find_center(std::string_view id) const {
    return lookup(center_ix_, rescue_centers, id);
  }
  Building* find_building_mut(std::string_view id) {
    auto it = building_ix_.find(id);
    return it == building_ix_.end() ? nullptr : &buildings[it->second];
  }

  /// Team id -> owning center.
  const RescueCenter* center_of_team(std::string_view team_id) const {
    auto it = team_center_.find(team_id);
    return it == team_center_.end() ? nullptr : &rescue_centers[it->second];
  }
  const Team* find_team(std::string_view team_id) const {
    const RescueCenter* c = center_of_team(team_id);
    if (!c) return nullptr;
    for (const auto& t : c->teams)
      if (t.team_id == team_id) return &t;
    return nullptr;
  }

  struct InfraRef {
    InfraLayer layer;
    const InfraAsset* asset;
  };
  std::optional<InfraRef> find_infra(std::string_view id) const {
    auto it = infra_ix_.find(id);
    if (it == infra_ix_.end()) return std::nullopt;
    return InfraRef{it->second.first, &infrastructure.at(it->second.first)[it->second.second]};
  }

  std::size_t infra_count() const {
    std::size_t n = 0;
    for (const auto& [_, v] : infrastructure) n += v.size();
    return n;
  }

  LatLon position_of(std::string_view node_id) const {
    const Node* n = find_node(node_id);
    if (!n) throw ReferenceError("node", std::string(node_id));
    return n->position();
  }

 private:
  using Index = std::map<std::string, std::size_t, std::less<>>;

  template <class T>
  static const T* lookup(const Index& ix, const std::vector<T>& v, std::string_view id) {
    auto it = ix.find(id);
    return it == ix.end() ? nullptr : &v[it->second];
  }

  Index node_ix_, edge_ix_, building_ix_, center_ix_, team_center_;
  std::map<std::string, std::pair<InfraLayer, std::size_t>, std::less<>> infra_ix_;
};

inline void CityGraph::index() {
  node_ix_.clear();
  edge_ix_.clear();
  building_ix_.clear();
  center_ix_.clear();
  team_center_.clear();
  infra_ix_.clear();

  for (std::size_t i = 0; i < nodes.size(); ++i)
    if (!node_ix_.emplace(nodes[i].id, i).second) throw DuplicateIdError("node", nodes[i].id);

  auto require_node = [&](const std::string& id) {
    if (!node_ix_.contains(id)) throw ReferenceError("node", id);
  };

  for (std::size_t i = 0; i < edges.size(); ++i) {
    const auto& e = edges[i];
    if (!edge_ix_.emplace(e.id, i).second) throw DuplicateIdError("edge", e.id);
    require_node(e.a);
    require_node(e.b);
    if (e.a == e.b) throw ValueError("edge '" + e.id + "' is a self-loop");
    if (!(e.length_m > 0.0)) throw ValueError("edge '" + e.id + "' must have length_m > 0");
  }
  for (std::size_t i = 0; i < buildings.size(); ++i) {
    const auto& b = buildings[i];
    if (!building_ix_.emplace(b.id, i).second) throw DuplicateIdError("building", b.id);
    require_node(b.node_ref);
    if (b.occupancy < 0) throw ValueError("building '" + b.id + "' has negative occupancy");
    if (!(b.resilience >= 0.0 && b.resilience <= 1.0))
      throw ValueError("building '" + b.id + "' resilience outside [0,1]");
  }
  for (std::size_t i = 0; i < rescue_centers.size(); ++i) {
    const auto& c = rescue_centers[i];
    if (!center_ix_.emplace(c.id, i).second) throw DuplicateIdError("rescue center", c.id);
    require_node(c.node_ref);
    for (const auto& t : c.teams)
      if (!team_center_.emplace(t.team_id, i).second) throw DuplicateIdError("team", t.team_id);
  }
  for (const auto& [layer, assets] : infrastructure) {
    for (std::size_t i = 0; i < assets.size(); ++i) {
      if (!infra_ix_.emplace(assets[i].id, std::pair{layer, i}).second)
        throw DuplicateIdError("infrastructure", assets[i].id);
      require_node(assets[i].node_ref);
    }
  }
}

namespace detail {

inline std::size_t line_of_byte(std::string_view text, std::size_t byte) {
  std::size_t line = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i)
    if (text[i] == '\n') ++line;
  return line;
}

/// Parses JSON text, converting syntax errors into ParseError with a line.
inline Json parse_json_text(std::string_view text) {
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    std::size_t byte = e.byte == 0 ? 0 : e.byte - 1;
    throw ParseError("malformed JSON", line_of_byte(text, byte));
  }
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Typed field access with path-qualified error messages.
class Fields {
 public:
  Fields(const Json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) throw ParseError("expected an object", 0, path_);
  }

  const Json& required(const char* key) const {
    auto it = obj_.find(key);
    if (it == obj_.end()) throw ParseError("missing field", 0, sub(key));
    return *it;
  }

  std::string string(const char* key) const {
    const Json& v = required(key);
    if (!v.is_string()) throw ParseError("expected a string", 0, sub(key));
    return v.get<std::string>();
  }

  double number(const char* key) const {
    const Json& v = required(key);
    if (!v.is_number()) throw ParseError("expected a number", 0, sub(key));
    return v.get<double>();
  }

  std::int64_t integer(const char* key) const {
    const Json& v = required(key);
    if (v.is_number_integer()) return v.get<std::int64_t>();
    if (v.is_number_float()) {
      double d = v.get<double>();
      if (d == std::floor(d)) return static_cast<std::int64_t>(d);
    }
    throw ParseError("expected an integer", 0, sub(key));
  }

  const Json& array(const char* key) const {
    const Json& v = required(key);
    if (!v.is_array()) throw ParseError("expected an array", 0, sub(key));
    return v;
  }

  std::string sub(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

 private:
  const Json& obj_;
  std::string path_;
};

inline std::string at_index(const std::string& path, std::size_t i) {
  return path + "[" + std::to_string(i) + "]";
}

}  // namespace detail

/// Builds and validates a CityGraph from the parsed city JSON object.
inline CityGraph city_from_json(const Json& root) {
  using detail::at_index;
  using detail::Fields;
  Fields top(root, "");
  CityGraph city;

  const Json& nodes = top.array("nodes");
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    Fields f(nodes[i], at_index("nodes", i));
    city.nodes.push_back({f.string("id"), f.number("lat"), f.number("lon")});
  }
  const Json& edges = top.array("edges");
  for (std::size_t i = 0; i < edges.size(); ++i) {
    Fields f(edges[i], at_index("edges", i));
    city.edges.push_back({f.string("id"), f.string("a"), f.string("b"), f.number("length_m")});
  }
  const Json& buildings = top.array("buildings");
  for (std::size_t i = 0; i < buildings.size(); ++i) {
    Fields f(buildings[i], at_index("buildings", i));
    city.buildings.push_back(
        {f.string("id"), f.string("node_ref"), f.integer("occupancy"), f.number("resilience")});
  }
  const Json& centers = top.array("rescue_centers");
  for (std::size_t i = 0; i < centers.size(); ++i) {
    const std::string path = at_index("rescue_centers", i);
    Fields f(centers[i], path);
    RescueCenter c{f.string("id"), f.string("node_ref"), {}};
    const Json& teams = f.array("teams");
    for (std::size_t j = 0; j < teams.size(); ++j) {
      Fields tf(teams[j], at_index(path + ".teams", j));
      auto kind = parse_team_kind(tf.string("kind"));
      if (!kind) throw ParseError("kind must be search|medical|heavy", 0, tf.sub("kind"));
      c.teams.push_back({tf.string("team_id"), *kind});
    }
    city.rescue_centers.push_back(std::move(c));
  }

  const Json& infra = top.required("infrastructure");
  if (!infra.is_object()) throw ParseError("expected an object", 0, "infrastructure");
  for (auto it = infra.begin(); it != infra.end(); ++it) {
    auto layer = parse_infra_layer(it.key());
    if (!layer) throw ParseError("unknown infrastructure layer", 0, "infrastructure." + it.key());
    const std::string path = "infrastructure." + it.key();
    if (!it->is_array()) throw ParseError("expected an array", 0, path);
    auto& list = city.infrastructure[*layer];
    for (std::size_t i = 0; i < it->size(); ++i) {
      Fields f((*it)[i], at_index(path, i));
      InfraStatus status = InfraStatus::up;
      if ((*it)[i].contains("status")) {
        auto s = parse_infra_status(f.string("status"));
        if (!s) throw ParseError("status must be up|down", 0, f.sub("status"));
        status = *s;
      }
      list.push_back({f.string("id"), f.string("node_ref"), status});
    }
  }
  for (auto l : kInfraLayers) city.infrastructure[l];

  city.index();
  return city;
}

inline CityGraph parse_city(std::string_view text) {
  return city_from_json(detail::parse_json_text(text));
}

/// Reads, parses and validates a city file.
inline CityGraph load_city(const std::filesystem::path& city_file) {
  return parse_city(detail::read_file(city_file));
}

/// Static geometry view served alongside snapshots.
inline OrderedJson city_to_json(const CityGraph& city) {
  OrderedJson out;
  OrderedJson nodes = OrderedJson::array();
  for (const auto& n : city.nodes) nodes.push_back({{"id", n.id}, {"lat", n.lat}, {"lon", n.lon}});
  OrderedJson edges = OrderedJson::array();
  for (const auto& e : city.edges)
    edges.push_back({{"id", e.id}, {"a", e.a}, {"b", e.b}, {"length_m", e.length_m}});
  OrderedJson buildings = OrderedJson::array();
  for (const auto& b : city.buildings)
    buildings.push_back({{"id", b.id},
                         {"node_ref", b.node_ref},
                         {"occupancy", b.occupancy},
                         {"resilience", b.resilience}});
  OrderedJson centers = OrderedJson::array();
  for (const auto& c : city.rescue_centers) {
    OrderedJson teams = OrderedJson::array();
    for (const auto& t : c.teams) teams.push_back({{"team_id", t.team_id}, {"kind", to_string(t.kind)}});
    centers.push_back({{"id", c.id}, {"node_ref", c.node_ref}, {"teams", teams}});
  }
  OrderedJson infra = OrderedJson::object();
  for (auto l : kInfraLayers) {
    OrderedJson list = OrderedJson::array();
    if (auto it = city.infrastructure.find(l); it != city.infrastructure.end())
      for (const auto& a : it->second)
        list.push_back({{"id", a.id}, {"node_ref", a.node_ref}, {"status", to_string(a.status)}});
    infra[std::string(to_string(l))] = list;
  }
  out["nodes"] = nodes;
  out["edges"] = edges;
  out["buildings"] = buildings;
  out["rescue_centers"] = centers;
  out["infrastructure"] = infra;
  return out;
}

}  // namespace dtdms
