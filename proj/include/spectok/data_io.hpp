#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "spectok/eigen.hpp"
#include "spectok/errors.hpp"
#include "spectok/graph.hpp"
#include "spectok/random.hpp"

namespace spectok {

using Dataset = std::vector<Graph>;

namespace detail {

inline long long json_int(const nlohmann::json& j, std::size_t line, const std::string& what) {
  if (!j.is_number_integer()) throw ParseError(line, what + " must be an integer");
  return j.get<long long>();
}

inline std::size_t json_index(const nlohmann::json& j, std::size_t line, const std::string& what) {
  const long long v = json_int(j, line, what);
  if (v < 0) throw ValidationError(line, what + " must be non-negative");
  return static_cast<std::size_t>(v);
}

}  // namespace detail

/// Parses one record `{"nodes":[..],"edges":[[u,v,code],..],"targets":[..]}`.
/// `null` targets become NaN. The graph is validated before returning.
inline Graph parse_record(const std::string& text, std::size_t line = 0) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(line, std::string("malformed JSON: ") + e.what());
  }
  if (!j.is_object()) throw ParseError(line, "record must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (key != "nodes" && key != "edges" && key != "targets") throw ParseError(line, "unknown field '" + key + "'");
  }
  if (!j.contains("nodes") || !j["nodes"].is_array()) throw ParseError(line, "'nodes' must be an array");
  Graph g;
  for (const auto& c : j["nodes"]) {
    const long long code = detail::json_int(c, line, "node code");
    if (code < 0 || code > std::numeric_limits<int>::max()) {
      throw ValidationError(line, "node code " + std::to_string(code) + " out of range");
    }
    g.node_attrs.push_back(static_cast<int>(code));
  }
  g.n = g.node_attrs.size();
  if (j.contains("edges")) {
    if (!j["edges"].is_array()) throw ParseError(line, "'edges' must be an array");
    for (const auto& e : j["edges"]) {
      if (!e.is_array() || e.size() < 2 || e.size() > 3) {
        throw ParseError(line, "each edge must be [u, v] or [u, v, code]");
      }
      Edge edge{detail::json_index(e[0], line, "edge endpoint"), detail::json_index(e[1], line, "edge endpoint"), 0};
      if (e.size() == 3) {
        const long long code = detail::json_int(e[2], line, "edge code");
        if (code < 0 || code > std::numeric_limits<int>::max()) {
          throw ValidationError(line, "edge code " + std::to_string(code) + " out of range");
        }
        edge.code = static_cast<int>(code);
      }
      g.edges.push_back(edge);
    }
  }
  if (j.contains("targets")) {
    if (!j["targets"].is_array()) throw ParseError(line, "'targets' must be an array");
    for (const auto& t : j["targets"]) {
      if (t.is_null()) {
        g.targets.push_back(std::numeric_limits<double>::quiet_NaN());
      } else if (t.is_number()) {
        g.targets.push_back(t.get<double>());
      } else {
        throw ParseError(line, "targets must be numbers or null");
      }
    }
  }
  g.validate(line);
  return g;
}

/// One record per non-blank line; errors carry the 1-based line number.
inline Dataset parse_dataset(std::istream& in) {
  Dataset out;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    out.push_back(parse_record(text, line));
  }
  return out;
}

inline Dataset parse_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError(0, "cannot open dataset '" + path + "'");
  return parse_dataset(in);
}

inline std::string serialize_record(const Graph& g) {
  nlohmann::json j;
  j["nodes"] = g.node_attrs;
  j["edges"] = nlohmann::json::array();
  for (const Edge& e : g.edges) j["edges"].push_back({e.u, e.v, e.code});
  j["targets"] = nlohmann::json::array();
  for (double t : g.targets) {
    if (std::isnan(t)) {
      j["targets"].push_back(nullptr);
    } else {
      j["targets"].push_back(t);
    }
  }
  return j.dump();
}

inline void write_dataset(std::ostream& out, const Dataset& data) {
  for (const Graph& g : data) out << serialize_record(g) << '\n';
}

// ---------------------------------------------------------------------------
// Synthetic molecule-like graphs
// ---------------------------------------------------------------------------

inline constexpr std::size_t kSyntheticMaxDegree = 4;
inline constexpr double kRingProbability = 0.3;
inline constexpr int kSyntheticNodeCodes = 8;
inline constexpr int kSyntheticEdgeCodes = 4;

/// Sum of the three smallest normalized-Laplacian eigenvalues above 1e-8
/// (fewer if fewer exist; 0 for a singleton).
inline double spectral_target(const Graph& g) {
  const Spectrum s = sym_eigh(normalized_laplacian(g));
  double total = 0.0;
  int taken = 0;
  for (double l : s.eigenvalues) {
    if (l > 1e-8 && taken < 3) {
      total += l;
      ++taken;
    }
  }
  return total;
}

/// Random tree (degree ≤ 4) where each node, with probability 0.3, closes a
/// ring to a node 2–5 hops away that still has spare degree.
inline Graph random_molecule(std::size_t n, Rng& rng) {
  Graph g;
  g.n = n;
  std::vector<std::size_t> deg(n, 0);
  for (std::size_t i = 1; i < n; ++i) {
    std::vector<std::size_t> open;
    for (std::size_t j = 0; j < i; ++j)
      if (deg[j] < kSyntheticMaxDegree) open.push_back(j);
    const std::size_t parent = open[rng.below(open.size())];
    g.edges.push_back({parent, i, static_cast<int>(rng.below(kSyntheticEdgeCodes))});
    ++deg[parent];
    ++deg[i];
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!rng.bernoulli(kRingProbability) || deg[i] >= kSyntheticMaxDegree) continue;
    const auto adj = g.adjacency();
    std::vector<std::size_t> dist(n, n + 1), queue{i};
    dist[i] = 0;
    for (std::size_t q = 0; q < queue.size(); ++q) {
      for (std::size_t w : adj[queue[q]]) {
        if (dist[w] > n) {
          dist[w] = dist[queue[q]] + 1;
          queue.push_back(w);
        }
      }
    }
    std::vector<std::size_t> candidates;
    for (std::size_t j = 0; j < n; ++j)
      if (dist[j] >= 2 && dist[j] <= 5 && deg[j] < kSyntheticMaxDegree) candidates.push_back(j);
    if (candidates.empty()) continue;
    const std::size_t j = candidates[rng.below(candidates.size())];
    g.edges.push_back({std::min(i, j), std::max(i, j), static_cast<int>(rng.below(kSyntheticEdgeCodes))});
    ++deg[i];
    ++deg[j];
  }
  for (std::size_t i = 0; i < n; ++i) g.node_attrs.push_back(static_cast<int>(rng.below(kSyntheticNodeCodes)));
  g.targets = {spectral_target(g)};
  return g;
}

/// `count` graphs with sizes uniform in [min_size, max_size]; graph i uses its
/// own derived stream, so the output is a pure function of the arguments.
inline Dataset generate_synthetic(std::size_t count, std::size_t min_size, std::size_t max_size,
                                  std::uint64_t seed) {
  if (min_size < 1 || max_size > 64 || min_size > max_size) {
    throw ContractError("synthetic sizes must satisfy 1 <= min <= max <= 64");
  }
  const Rng root(seed);
  Dataset out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Rng rng = root.derive(i);
    const std::size_t n = min_size + rng.below(max_size - min_size + 1);
    out.push_back(random_molecule(n, rng));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Splits
// ---------------------------------------------------------------------------

struct SplitRatios {
  double train = 0.8;
  double valid = 0.1;
  double test = 0.1;
};

struct SplitIndices {
  std::vector<std::size_t> train, valid, test;
};

/// Seeded shuffle, then contiguous slices: ⌊n·valid⌋ and ⌊n·test⌋ graphs for
/// validation and test, the remainder for training. A split with a positive
/// ratio that comes out empty is a ContractError.
inline SplitIndices split_indices(std::size_t n, const SplitRatios& r, std::uint64_t seed) {
  if (r.train < 0 || r.valid < 0 || r.test < 0 || std::abs(r.train + r.valid + r.test - 1.0) > 1e-9) {
    throw ContractError("split ratios must be non-negative and sum to 1");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(order.begin(), order.end());
  const auto nv = static_cast<std::size_t>(std::floor(static_cast<double>(n) * r.valid + 1e-9));
  const auto nt = static_cast<std::size_t>(std::floor(static_cast<double>(n) * r.test + 1e-9));
  SplitIndices s;
  s.valid.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(nv));
  s.test.assign(order.begin() + static_cast<std::ptrdiff_t>(nv), order.begin() + static_cast<std::ptrdiff_t>(nv + nt));
  s.train.assign(order.begin() + static_cast<std::ptrdiff_t>(nv + nt), order.end());
  auto check = [](double ratio, const std::vector<std::size_t>& part, const char* name) {
    if (ratio > 0 && part.empty()) {
      throw ContractError(std::string("dataset too small: ") + name + " split is empty");
    }
  };
  check(r.train, s.train, "train");
  check(r.valid, s.valid, "valid");
  check(r.test, s.test, "test");
  return s;
}

struct DatasetSplit {
  Dataset train, valid, test;
};

inline DatasetSplit split(const Dataset& data, const SplitRatios& r, std::uint64_t seed) {
  const SplitIndices idx = split_indices(data.size(), r, seed);
  DatasetSplit out;
  for (auto i : idx.train) out.train.push_back(data[i]);
  for (auto i : idx.valid) out.valid.push_back(data[i]);
  for (auto i : idx.test) out.test.push_back(data[i]);
  return out;
}

}  // namespace spectok
