#pragma once

// Hand-rolled generators shared by the property tests.

#include <cstddef>
#include <numeric>
#include <vector>

#include "spectok/graph.hpp"
#include "spectok/random.hpp"

namespace spectok::testing {

inline std::vector<std::size_t> random_permutation(std::size_t n, Rng& rng) {
  std::vector<std::size_t> p(n);
  std::iota(p.begin(), p.end(), std::size_t{0});
  rng.shuffle(p.begin(), p.end());
  return p;
}

/// Uniform random labeled tree via random parent attachment.
inline Graph random_tree(std::size_t n, Rng& rng) {
  Graph g;
  g.n = n;
  for (std::size_t i = 1; i < n; ++i) g.edges.push_back({rng.below(i), i, static_cast<int>(rng.below(4))});
  for (std::size_t i = 0; i < n; ++i) g.node_attrs.push_back(static_cast<int>(rng.below(8)));
  return g;
}

/// Erdős–Rényi G(n, p); may contain isolated nodes and several components.
inline Graph random_graph(std::size_t n, double p, Rng& rng) {
  Graph g;
  g.n = n;
  for (std::size_t u = 0; u < n; ++u)
    for (std::size_t v = u + 1; v < n; ++v)
      if (rng.bernoulli(p)) g.edges.push_back({u, v, static_cast<int>(rng.below(4))});
  for (std::size_t i = 0; i < n; ++i) g.node_attrs.push_back(static_cast<int>(rng.below(8)));
  return g;
}

inline Graph path_graph(std::size_t n) {
  Graph g;
  g.n = n;
  g.node_attrs.assign(n, 0);
  for (std::size_t i = 0; i + 1 < n; ++i) g.edges.push_back({i, i + 1, 0});
  return g;
}

inline Graph cycle_graph(std::size_t n) {
  Graph g = path_graph(n);
  g.edges.push_back({0, n - 1, 0});
  return g;
}

inline Graph complete_graph(std::size_t n) {
  Graph g;
  g.n = n;
  g.node_attrs.assign(n, 0);
  for (std::size_t u = 0; u < n; ++u)
    for (std::size_t v = u + 1; v < n; ++v) g.edges.push_back({u, v, 0});
  return g;
}

/// Disjoint union; b's nodes are shifted by a.n.
inline Graph disjoint_union(const Graph& a, const Graph& b) {
  Graph g = a;
  g.n = a.n + b.n;
  for (const Edge& e : b.edges) g.edges.push_back({e.u + a.n, e.v + a.n, e.code});
  g.node_attrs.insert(g.node_attrs.end(), b.node_attrs.begin(), b.node_attrs.end());
  return g;
}

}  // namespace spectok::testing
