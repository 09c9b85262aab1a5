#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "spectok/autodiff.hpp"
#include "spectok/random.hpp"
#include "spectok/tensor.hpp"

namespace spectok {

/// Builds a scalar on `tape`, reading parameters through `tape.param(...)`.
using ScalarFn = std::function<Var(Tape&)>;

struct GradCheckEntry {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  /// Coordinates whose ±h probe crossed a relu-style kink and were moved.
  std::size_t nudged = 0;
};

namespace detail {

struct Probe {
  double value;
  std::uint64_t signature;
};

inline Probe probe(const ScalarFn& f) {
  Tape tape;
  const Var out = f(tape);
  return {out.value().item(), tape.kink_signature()};
}

inline Probe analytic(const ScalarFn& f, const std::vector<Tensor*>& params) {
  for (Tensor* p : params) {
    p->ensure_grad();
    p->zero_grad();
  }
  Tape tape;
  const Var out = f(tape);
  tape.backward(out);
  return {out.value().item(), tape.kink_signature()};
}

inline double relative_error(double analytic_grad, double numeric_grad) {
  return std::abs(analytic_grad - numeric_grad) / std::max(1.0, std::abs(numeric_grad));
}

}  // namespace detail

/// Compares analytic gradients of `f` with central differences for every
/// named tensor. At most `max_coords` coordinates per tensor are probed (all
/// of them when 0), sampled with `rng`. A coordinate whose ±h probes change the
/// kink signature is shifted away from the kink and re-probed.
inline std::vector<GradCheckEntry> grad_check_params(const ScalarFn& f,
                                                     const std::vector<std::pair<std::string, Tensor*>>& params,
                                                     double h, std::size_t max_coords, Rng& rng) {
  std::vector<Tensor*> all;
  for (const auto& [name, t] : params) all.push_back(t);
  const detail::Probe base = detail::analytic(f, all);
  std::vector<std::vector<double>> grads;
  for (Tensor* t : all) grads.emplace_back(t->grad().begin(), t->grad().end());

  std::vector<GradCheckEntry> report;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor& t = *params[pi].second;
    GradCheckEntry entry{params[pi].first};
    std::vector<std::size_t> coords(t.size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (max_coords != 0 && coords.size() > max_coords) {
      rng.shuffle(coords.begin(), coords.end());
      coords.resize(max_coords);
      std::sort(coords.begin(), coords.end());
    }
    for (std::size_t c : coords) {
      const double original = t[c];
      double g = grads[pi][c];
      std::uint64_t sig = base.signature;
      bool settled = false;
      for (int attempt = 0; attempt < 6 && !settled; ++attempt) {
        const double center = t[c];
        // Steps are measured after rounding so the divisor is exact.
        t[c] = center + h;
        const double up = t[c] - center;
        const auto plus = detail::probe(f);
        t[c] = center - h;
        const double down = center - t[c];
        const auto minus = detail::probe(f);
        t[c] = center;
        if (plus.signature == sig && minus.signature == sig) {
          const double numeric = (plus.value - minus.value) / (up + down);
          entry.max_rel_error = std::max(entry.max_rel_error, detail::relative_error(g, numeric));
          ++entry.checked;
          settled = true;
          break;
        }
        ++entry.nudged;
        t[c] = original + (attempt % 2 == 0 ? 1.0 : -1.0) * 37.0 * h * (attempt / 2 + 1);
        const auto moved = detail::analytic(f, all);
        sig = moved.signature;
        g = t.grad()[c];
      }
      t[c] = original;
    }
    report.push_back(entry);
  }
  // Leave gradients as they were at the unperturbed point.
  detail::analytic(f, all);
  return report;
}

/// Max relative error |analytic − central difference| / max(1, |central difference|)
/// of `f` at `x`, over every coordinate.
inline double grad_check(const std::function<Var(Tape&, Var)>& f, const Tensor& x, double h = 1e-5) {
  Tensor point = x;
  Rng rng(0);
  const ScalarFn wrapped = [&](Tape& tape) { return f(tape, tape.param(point)); };
  const auto report = grad_check_params(wrapped, {{"x", &point}}, h, 0, rng);
  return report.front().max_rel_error;
}

}  // namespace spectok
