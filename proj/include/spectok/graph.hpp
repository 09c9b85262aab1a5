#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "spectok/errors.hpp"

namespace spectok {

struct Edge {
  std::size_t u = 0;
  std::size_t v = 0;
  int code = 0;

  friend bool operator==(const Edge&, const Edge&) = default;
};

/// Sparse undirected graph with integer node/edge attribute codes and float
/// targets (NaN marks a missing label).
struct Graph {
  std::size_t n = 0;
  std::vector<Edge> edges;
  std::vector<int> node_attrs;
  std::vector<double> targets;

  /// Throws ValidationError on self-loops, duplicate edges, out-of-range
  /// endpoints or a node attribute list of the wrong length.
  void validate(std::size_t line = 0) const {
    if (node_attrs.size() != n) {
      throw ValidationError(line, "node attribute count " + std::to_string(node_attrs.size()) +
                                      " does not match node count " + std::to_string(n));
    }
    std::vector<std::pair<std::size_t, std::size_t>> seen;
    seen.reserve(edges.size());
    for (const Edge& e : edges) {
      if (e.u >= n || e.v >= n) {
        throw ValidationError(line, "edge (" + std::to_string(e.u) + "," + std::to_string(e.v) +
                                        ") references a node outside [0," + std::to_string(n) + ")");
      }
      if (e.u == e.v) throw ValidationError(line, "self-loop on node " + std::to_string(e.u));
      seen.emplace_back(std::min(e.u, e.v), std::max(e.u, e.v));
    }
    std::sort(seen.begin(), seen.end());
    const auto dup = std::adjacent_find(seen.begin(), seen.end());
    if (dup != seen.end()) {
      throw ValidationError(line, "duplicate edge (" + std::to_string(dup->first) + "," +
                                      std::to_string(dup->second) + ")");
    }
  }

  /// Neighbor lists, each sorted ascending.
  std::vector<std::vector<std::size_t>> adjacency() const {
    std::vector<std::vector<std::size_t>> adj(n);
    for (const Edge& e : edges) {
      adj[e.u].push_back(e.v);
      adj[e.v].push_back(e.u);
    }
    for (auto& a : adj) std::sort(a.begin(), a.end());
    return adj;
  }

  friend bool operator==(const Graph& a, const Graph& b) {
    if (a.n != b.n || a.edges != b.edges || a.node_attrs != b.node_attrs ||
        a.targets.size() != b.targets.size()) {
      return false;
    }
    for (std::size_t i = 0; i < a.targets.size(); ++i) {
      const bool na = std::isnan(a.targets[i]), nb = std::isnan(b.targets[i]);
      if (na != nb || (!na && a.targets[i] != b.targets[i])) return false;
    }
    return true;
  }
};

/// Dense symmetric matrix; writes go through `set`, which mirrors the entry.
class SymmetricMatrix {
 public:
  SymmetricMatrix() = default;
  explicit SymmetricMatrix(std::size_t dim) : dim_(dim), data_(dim * dim, 0.0) {}

  /// From row-major data; throws ContractError unless exactly symmetric.
  static SymmetricMatrix from_dense(std::size_t dim, std::vector<double> data) {
    if (data.size() != dim * dim) throw DimensionError("symmetric matrix data has wrong length");
    for (std::size_t i = 0; i < dim; ++i)
      for (std::size_t j = i + 1; j < dim; ++j)
        if (data[i * dim + j] != data[j * dim + i]) throw ContractError("matrix is not symmetric");
    SymmetricMatrix m;
    m.dim_ = dim;
    m.data_ = std::move(data);
    return m;
  }

  std::size_t dim() const noexcept { return dim_; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * dim_ + j]; }
  void set(std::size_t i, std::size_t j, double v) {
    data_[i * dim_ + j] = v;
    data_[j * dim_ + i] = v;
  }
  const std::vector<double>& data() const noexcept { return data_; }

 private:
  std::size_t dim_ = 0;
  std::vector<double> data_;
};

/// Number of incident edges per node.
inline std::vector<std::size_t> degrees(const Graph& g) {
  std::vector<std::size_t> deg(g.n, 0);
  for (const Edge& e : g.edges) {
    ++deg[e.u];
    ++deg[e.v];
  }
  return deg;
}

/// L = I − D^(−1/2) A D^(−1/2). Rows and columns of isolated nodes are zero.
inline SymmetricMatrix normalized_laplacian(const Graph& g) {
  const auto deg = degrees(g);
  SymmetricMatrix lap(g.n);
  for (std::size_t i = 0; i < g.n; ++i) lap.set(i, i, deg[i] > 0 ? 1.0 : 0.0);
  for (const Edge& e : g.edges) {
    lap.set(e.u, e.v, -1.0 / std::sqrt(static_cast<double>(deg[e.u]) * static_cast<double>(deg[e.v])));
  }
  return lap;
}

/// Copy of `g` with node i renamed perm[i].
inline Graph permute_nodes(const Graph& g, const std::vector<std::size_t>& perm) {
  Graph out;
  out.n = g.n;
  out.targets = g.targets;
  out.node_attrs.assign(g.n, 0);
  for (std::size_t i = 0; i < g.n; ++i) out.node_attrs[perm[i]] = g.node_attrs[i];
  for (const Edge& e : g.edges) out.edges.push_back(Edge{perm[e.u], perm[e.v], e.code});
  return out;
}

}  // namespace spectok
