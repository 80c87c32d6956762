#pragma once

#include <algorithm>
#include <deque>
#include <functional>
#include <limits>
#include <optional>
#include <queue>
#include <string>
#include <string_view>
#include <vector>

#include "dtdms/city.hpp"
#include "dtdms/snapshot.hpp"

namespace dtdms {

struct Path {
  std::vector<std::string> nodes;
  std::vector<std::string> edges;
  double cost = 0.0;
  std::size_t hops = 0;

  bool operator==(const Path&) const = default;
};

/// Damage-aware edge weighting: length times a risk multiplier, or nullopt
/// (blocked) when the snapshot marks the segment impassable.
struct DamageAwareCost {
  double risk_multiplier = 1.0;

  std::optional<double> operator()(const RoadSegment& seg, const TwinSnapshot& snap) const {
    auto it = snap.edge_passable.find(seg.id);
    if (it == snap.edge_passable.end()) throw ReferenceError("edge", seg.id);
    if (!it->second) return std::nullopt;
    return seg.length_m * risk_multiplier;
  }
};

/// Every passable edge costs 1.
struct UnitCost {
  std::optional<double> operator()(const RoadSegment& seg, const TwinSnapshot& snap) const {
    auto it = snap.edge_passable.find(seg.id);
    if (it == snap.edge_passable.end()) throw ReferenceError("edge", seg.id);
    if (!it->second) return std::nullopt;
    return 1.0;
  }
};

/// Cost of one segment by id. nullopt means Blocked.
inline std::optional<double> edge_cost(const CityGraph& city, std::string_view edge_id,
                                       const TwinSnapshot& snap) {
  const RoadSegment* seg = city.find_edge(edge_id);
  if (!seg) throw ReferenceError("edge", std::string(edge_id));
  return DamageAwareCost{}(*seg, snap);
}

/// Adjacency view of a city. Node indices follow sorted node-id order, so
/// comparing indices compares ids; each adjacency list is sorted by edge id.
class RoadGraph {
 public:
  struct Arc {
    std::size_t edge;  // index into city.edges
    std::size_t to;    // node index
  };

  explicit RoadGraph(const CityGraph& city) : city_(city) {
    ids_.reserve(city.nodes.size());
    for (const auto& n : city.nodes) ids_.push_back(n.id);
    std::sort(ids_.begin(), ids_.end());
    adj_.resize(ids_.size());
    for (std::size_t e = 0; e < city.edges.size(); ++e) {
      const auto& seg = city.edges[e];
      const std::size_t a = index_of(seg.a);
      const std::size_t b = index_of(seg.b);
      adj_[a].push_back({e, b});
      adj_[b].push_back({e, a});
    }
    for (auto& list : adj_)
      std::sort(list.begin(), list.end(), [&](const Arc& x, const Arc& y) {
        return city.edges[x.edge].id < city.edges[y.edge].id;
      });
  }

  std::size_t index_of(std::string_view id) const {
    auto it = std::lower_bound(ids_.begin(), ids_.end(), id);
    if (it == ids_.end() || *it != id) throw ReferenceError("node", std::string(id));
    return static_cast<std::size_t>(it - ids_.begin());
  }

  const std::string& id_of(std::size_t i) const { return ids_[i]; }
  const std::vector<Arc>& arcs(std::size_t i) const { return adj_[i]; }
  std::size_t size() const { return ids_.size(); }
  const CityGraph& city() const { return city_; }

 private:
  const CityGraph& city_;
  std::vector<std::string> ids_;
  std::vector<std::vector<Arc>> adj_;
};

namespace detail {

inline constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();

struct Parent {
  std::size_t node = kNone;
  std::size_t edge = kNone;
};

template <class CostFn>
Path build_path(const RoadGraph& g, const TwinSnapshot& snap, std::size_t src, std::size_t dst,
                const std::vector<Parent>& parent, const CostFn& cost) {
  std::vector<std::size_t> node_chain{dst};
  std::vector<std::size_t> edge_chain;
  for (std::size_t v = dst; v != src; v = parent[v].node) {
    edge_chain.push_back(parent[v].edge);
    node_chain.push_back(parent[v].node);
  }
  std::reverse(node_chain.begin(), node_chain.end());
  std::reverse(edge_chain.begin(), edge_chain.end());

  Path p;
  for (auto v : node_chain) p.nodes.push_back(g.id_of(v));
  for (auto e : edge_chain) {
    const auto& seg = g.city().edges[e];
    p.edges.push_back(seg.id);
    p.cost += *cost(seg, snap);
  }
  p.hops = p.edges.size();
  return p;
}

}  // namespace detail

/// Minimum-hop route over passable edges; nullopt when disconnected.
/// FIFO frontier, neighbours expanded in edge-id order.
template <class CostFn = DamageAwareCost>
std::optional<Path> bfs_route(const RoadGraph& g, const TwinSnapshot& snap, std::string_view src,
                              std::string_view dst, const CostFn& cost = {}) {
  const std::size_t s = g.index_of(src);
  const std::size_t d = g.index_of(dst);
  std::vector<detail::Parent> parent(g.size());
  std::vector<bool> seen(g.size(), false);
  std::deque<std::size_t> frontier{s};
  seen[s] = true;
  while (!frontier.empty() && !seen[d]) {
    const std::size_t v = frontier.front();
    frontier.pop_front();
    for (const auto& arc : g.arcs(v)) {
      if (seen[arc.to] || !cost(g.city().edges[arc.edge], snap)) continue;
      seen[arc.to] = true;
      parent[arc.to] = {v, arc.edge};
      frontier.push_back(arc.to);
    }
  }
  if (!seen[d]) return std::nullopt;
  return detail::build_path(g, snap, s, d, parent, cost);
}

/// Minimum-cost route over passable edges; nullopt when disconnected.
/// Frontier ordered by (cost, node id); only strict improvements relax a node.
template <class CostFn = DamageAwareCost>
std::optional<Path> ucs_route(const RoadGraph& g, const TwinSnapshot& snap, std::string_view src,
                              std::string_view dst, const CostFn& cost = {}) {
  const std::size_t s = g.index_of(src);
  const std::size_t d = g.index_of(dst);
  constexpr double inf = std::numeric_limits<double>::infinity();
  std::vector<double> dist(g.size(), inf);
  std::vector<detail::Parent> parent(g.size());
  std::vector<bool> done(g.size(), false);

  using Entry = std::pair<double, std::size_t>;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> frontier;
  dist[s] = 0.0;
  frontier.push({0.0, s});
  while (!frontier.empty()) {
    const auto [dv, v] = frontier.top();
    frontier.pop();
    if (done[v]) continue;
    done[v] = true;
    if (v == d) break;
    for (const auto& arc : g.arcs(v)) {
      if (done[arc.to]) continue;
      const auto c = cost(g.city().edges[arc.edge], snap);
      if (!c) continue;
      const double nd = dv + *c;
      if (nd < dist[arc.to]) {
        dist[arc.to] = nd;
        parent[arc.to] = {v, arc.edge};
        frontier.push({nd, arc.to});
      }
    }
  }
  if (!done[d]) return std::nullopt;
  return detail::build_path(g, snap, s, d, parent, cost);
}

template <class CostFn = DamageAwareCost>
std::optional<Path> bfs_route(const CityGraph& city, const TwinSnapshot& snap, std::string_view src,
                              std::string_view dst, const CostFn& cost = {}) {
  return bfs_route(RoadGraph(city), snap, src, dst, cost);
}

template <class CostFn = DamageAwareCost>
std::optional<Path> ucs_route(const CityGraph& city, const TwinSnapshot& snap, std::string_view src,
                              std::string_view dst, const CostFn& cost = {}) {
  return ucs_route(RoadGraph(city), snap, src, dst, cost);
}

inline OrderedJson path_to_json(const Path& p) {
  return {{"nodes", p.nodes}, {"edges", p.edges}, {"cost", p.cost}, {"hops", p.hops}};
}

}  // namespace dtdms
