#pragma once

#include <algorithm>
#include <bit>
#include <cstddef>
#include <cstdint>
#include <iterator>
#include <limits>
#include <map>
#include <numeric>
#include <queue>
#include <tuple>
#include <utility>
#include <vector>

#include "spectok/graph.hpp"
#include "spectok/tensor.hpp"

namespace spectok {

/// Clique attribute codes: 0 bond, 1 isolated atom, 2+k ring system of k basis cycles.
inline constexpr int kEdgeClique = 0;
inline constexpr int kSingletonClique = 1;
inline constexpr int kRingCliqueBase = 2;

/// Junction-tree style contraction of a graph: cliques become tree nodes and
/// `assignment` (m×n, 0/1) maps them back to graph nodes.
struct CoarseGraph {
  std::size_t m = 0;
  std::vector<std::vector<std::size_t>> cliques;
  std::vector<std::pair<std::size_t, std::size_t>> tree_edges;
  std::vector<int> clique_attrs;
  Tensor assignment;

  /// The tree as a Graph (clique codes as node attributes).
  Graph tree_graph() const {
    Graph t;
    t.n = m;
    t.node_attrs = clique_attrs;
    for (const auto& [a, b] : tree_edges) t.edges.push_back(Edge{a, b, 0});
    return t;
  }
};

namespace detail {

class DisjointSets {
 public:
  explicit DisjointSets(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), std::size_t{0}); }
  std::size_t find(std::size_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }
  bool unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    if (b < a) std::swap(a, b);
    parent_[b] = a;
    return true;
  }

 private:
  std::vector<std::size_t> parent_;
};

using EdgeSet = std::vector<std::uint64_t>;

inline bool edge_set_empty(const EdgeSet& s) {
  return std::all_of(s.begin(), s.end(), [](std::uint64_t w) { return w == 0; });
}

inline std::size_t lowest_bit(const EdgeSet& s) {
  for (std::size_t w = 0; w < s.size(); ++w)
    if (s[w]) return w * 64 + static_cast<std::size_t>(std::countr_zero(s[w]));
  return std::numeric_limits<std::size_t>::max();
}

inline std::size_t connected_components(const Graph& g) {
  DisjointSets ds(g.n);
  std::size_t c = g.n;
  for (const Edge& e : g.edges)
    if (ds.unite(e.u, e.v)) --c;
  return c;
}

/// Color refinement over node and edge codes. Colors are ranks of sorted
/// signatures, so they do not depend on node numbering.
inline std::vector<std::size_t> refine_colors(const Graph& g) {
  std::vector<std::vector<std::pair<int, std::size_t>>> nbrs(g.n);
  std::vector<std::size_t> color(g.n);
  {
    std::vector<int> codes = g.node_attrs;
    std::sort(codes.begin(), codes.end());
    codes.erase(std::unique(codes.begin(), codes.end()), codes.end());
    for (std::size_t i = 0; i < g.n; ++i)
      color[i] = static_cast<std::size_t>(std::lower_bound(codes.begin(), codes.end(), g.node_attrs[i]) - codes.begin());
  }
  std::size_t classes = 0;
  for (std::size_t round = 0; round <= g.n; ++round) {
    using Signature = std::pair<std::size_t, std::vector<std::pair<int, std::size_t>>>;
    std::vector<Signature> sig(g.n);
    for (std::size_t i = 0; i < g.n; ++i) sig[i].first = color[i];
    for (const Edge& e : g.edges) {
      sig[e.u].second.emplace_back(e.code, color[e.v]);
      sig[e.v].second.emplace_back(e.code, color[e.u]);
    }
    for (auto& s : sig) std::sort(s.second.begin(), s.second.end());
    std::vector<Signature> uniq = sig;
    std::sort(uniq.begin(), uniq.end());
    uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
    for (std::size_t i = 0; i < g.n; ++i)
      color[i] = static_cast<std::size_t>(std::lower_bound(uniq.begin(), uniq.end(), sig[i]) - uniq.begin());
    if (uniq.size() == classes) break;
    classes = uniq.size();
  }
  return color;
}

}  // namespace detail

/// Minimum cycle basis (Horton candidates + GF(2) elimination). Each cycle is
/// returned as its sorted node set.
inline std::vector<std::vector<std::size_t>> minimum_cycle_basis(const Graph& g) {
  const std::size_t n = g.n, ecount = g.edges.size();
  const std::size_t rank = ecount + detail::connected_components(g) - n;
  if (rank == 0) return {};

  std::vector<std::vector<std::pair<std::size_t, std::size_t>>> adj(n);  // (neighbor, edge id)
  for (std::size_t i = 0; i < ecount; ++i) {
    adj[g.edges[i].u].emplace_back(g.edges[i].v, i);
    adj[g.edges[i].v].emplace_back(g.edges[i].u, i);
  }
  for (auto& a : adj) std::sort(a.begin(), a.end());

  const std::size_t words = (ecount + 63) / 64;
  constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();
  struct Candidate {
    std::size_t length;
    detail::EdgeSet edges;
  };
  std::vector<Candidate> candidates;

  std::vector<std::size_t> dist(n), via_edge(n), parent(n);
  std::vector<char> on_path(n);
  for (std::size_t root = 0; root < n; ++root) {
    std::fill(dist.begin(), dist.end(), kNone);
    std::fill(via_edge.begin(), via_edge.end(), kNone);
    std::fill(parent.begin(), parent.end(), kNone);
    std::queue<std::size_t> bfs;
    dist[root] = 0;
    bfs.push(root);
    while (!bfs.empty()) {
      const std::size_t x = bfs.front();
      bfs.pop();
      for (const auto& [y, e] : adj[x]) {
        if (dist[y] != kNone) continue;
        dist[y] = dist[x] + 1;
        parent[y] = x;
        via_edge[y] = e;
        bfs.push(y);
      }
    }
    for (std::size_t e = 0; e < ecount; ++e) {
      const std::size_t x = g.edges[e].u, y = g.edges[e].v;
      if (dist[x] == kNone || dist[y] == kNone) continue;
      if (via_edge[x] == e || via_edge[y] == e) continue;
      std::fill(on_path.begin(), on_path.end(), 0);
      for (std::size_t w = x; w != kNone; w = parent[w]) on_path[w] = 1;
      bool disjoint = true;
      for (std::size_t w = y; w != root && w != kNone; w = parent[w]) {
        if (on_path[w]) {
          disjoint = false;
          break;
        }
      }
      if (!disjoint) continue;
      detail::EdgeSet set(words, 0);
      auto flip = [&](std::size_t id) { set[id / 64] ^= std::uint64_t{1} << (id % 64); };
      flip(e);
      for (std::size_t w = x; w != root; w = parent[w]) flip(via_edge[w]);
      for (std::size_t w = y; w != root; w = parent[w]) flip(via_edge[w]);
      candidates.push_back({dist[x] + dist[y] + 1, std::move(set)});
    }
  }
  std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
    return std::tie(a.length, a.edges) < std::tie(b.length, b.edges);
  });

  std::map<std::size_t, detail::EdgeSet> pivots;
  std::vector<std::vector<std::size_t>> basis;
  for (const Candidate& c : candidates) {
    if (basis.size() == rank) break;
    detail::EdgeSet reduced = c.edges;
    while (!detail::edge_set_empty(reduced)) {
      const std::size_t bit = detail::lowest_bit(reduced);
      auto it = pivots.find(bit);
      if (it == pivots.end()) break;
      for (std::size_t w = 0; w < words; ++w) reduced[w] ^= it->second[w];
    }
    if (detail::edge_set_empty(reduced)) continue;
    pivots.emplace(detail::lowest_bit(reduced), reduced);
    std::vector<std::size_t> nodes;
    for (std::size_t e = 0; e < ecount; ++e) {
      if (c.edges[e / 64] >> (e % 64) & 1U) {
        nodes.push_back(g.edges[e].u);
        nodes.push_back(g.edges[e].v);
      }
    }
    std::sort(nodes.begin(), nodes.end());
    nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());
    basis.push_back(std::move(nodes));
  }
  return basis;
}

/// Decomposes `g` into ring systems (basis cycles merged when they share two or
/// more nodes), leftover bonds and isolated atoms, then links cliques by a
/// maximum-weight spanning forest over shared-node counts.
///
/// Cliques are numbered by a refinement-color key before the spanning forest
/// is built, so the lowest-index tie-break does not depend on node numbering.
inline CoarseGraph decompose(const Graph& g) {
  struct Clique {
    std::vector<std::size_t> nodes;
    int attr;
  };
  std::vector<Clique> found;

  const auto cycles = minimum_cycle_basis(g);
  detail::DisjointSets merge(cycles.size());
  for (std::size_t i = 0; i < cycles.size(); ++i) {
    for (std::size_t j = i + 1; j < cycles.size(); ++j) {
      std::vector<std::size_t> shared;
      std::set_intersection(cycles[i].begin(), cycles[i].end(), cycles[j].begin(), cycles[j].end(),
                            std::back_inserter(shared));
      if (shared.size() > 1) merge.unite(i, j);
    }
  }
  std::map<std::size_t, std::pair<std::vector<std::size_t>, int>> rings;
  for (std::size_t i = 0; i < cycles.size(); ++i) {
    auto& [nodes, count] = rings[merge.find(i)];
    nodes.insert(nodes.end(), cycles[i].begin(), cycles[i].end());
    ++count;
  }
  std::vector<std::vector<std::size_t>> ring_of_node(g.n);
  for (auto& [root, ring] : rings) {
    auto& nodes = ring.first;
    std::sort(nodes.begin(), nodes.end());
    nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());
    for (std::size_t v : nodes) ring_of_node[v].push_back(found.size());
    found.push_back({nodes, kRingCliqueBase + ring.second});
  }
  for (const Edge& e : g.edges) {
    const auto& ru = ring_of_node[e.u];
    const auto& rv = ring_of_node[e.v];
    const bool covered = std::any_of(ru.begin(), ru.end(),
                                     [&](std::size_t r) { return std::find(rv.begin(), rv.end(), r) != rv.end(); });
    if (!covered) found.push_back({{std::min(e.u, e.v), std::max(e.u, e.v)}, kEdgeClique});
  }
  const auto deg = degrees(g);
  for (std::size_t v = 0; v < g.n; ++v)
    if (deg[v] == 0) found.push_back({{v}, kSingletonClique});

  // Canonical clique numbering.
  const auto color = detail::refine_colors(g);
  using Key = std::tuple<int, std::size_t, std::vector<std::size_t>>;
  std::vector<Key> keys;
  for (const Clique& c : found) {
    std::vector<std::size_t> colors;
    for (std::size_t v : c.nodes) colors.push_back(color[v]);
    std::sort(colors.begin(), colors.end());
    keys.emplace_back(c.attr, c.nodes.size(), std::move(colors));
  }
  std::vector<std::size_t> order(found.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return keys[a] < keys[b]; });

  CoarseGraph cg;
  cg.m = found.size();
  for (std::size_t idx : order) {
    cg.cliques.push_back(found[idx].nodes);
    cg.clique_attrs.push_back(found[idx].attr);
  }

  std::vector<std::vector<std::size_t>> member_of(g.n);
  for (std::size_t c = 0; c < cg.m; ++c)
    for (std::size_t v : cg.cliques[c]) member_of[v].push_back(c);
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> shared;
  for (std::size_t v = 0; v < g.n; ++v) {
    const auto& ms = member_of[v];
    for (std::size_t i = 0; i < ms.size(); ++i)
      for (std::size_t j = i + 1; j < ms.size(); ++j) ++shared[{std::min(ms[i], ms[j]), std::max(ms[i], ms[j])}];
  }
  std::vector<std::tuple<std::size_t, std::size_t, std::size_t>> candidates;  // (weight, a, b)
  for (const auto& [pair, w] : shared) candidates.emplace_back(w, pair.first, pair.second);
  std::stable_sort(candidates.begin(), candidates.end(), [](const auto& x, const auto& y) {
    if (std::get<0>(x) != std::get<0>(y)) return std::get<0>(x) > std::get<0>(y);
    return std::tie(std::get<1>(x), std::get<2>(x)) < std::tie(std::get<1>(y), std::get<2>(y));
  });
  detail::DisjointSets forest(cg.m);
  for (const auto& [w, a, b] : candidates)
    if (forest.unite(a, b)) cg.tree_edges.emplace_back(a, b);

  cg.assignment = Tensor(Shape{cg.m, g.n});
  for (std::size_t c = 0; c < cg.m; ++c)
    for (std::size_t v : cg.cliques[c]) cg.assignment(c, v) = 1.0;
  return cg;
}

/// Normalized Laplacian of the clique tree.
inline SymmetricMatrix coarse_laplacian(const CoarseGraph& cg) { return normalized_laplacian(cg.tree_graph()); }

}  // namespace spectok
