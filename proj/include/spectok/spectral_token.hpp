#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "spectok/autodiff.hpp"
#include "spectok/eigen.hpp"
#include "spectok/errors.hpp"
#include "spectok/random.hpp"
#include "spectok/tensor.hpp"

namespace spectok {

enum class KernelKind { mexican_hat, heat, gaussian };

inline std::string to_string(KernelKind k) {
  switch (k) {
    case KernelKind::mexican_hat: return "mexican_hat";
    case KernelKind::heat: return "heat";
    case KernelKind::gaussian: return "gaussian";
  }
  return "?";
}

inline KernelKind kernel_from_string(const std::string& s) {
  if (s == "mexican_hat") return KernelKind::mexican_hat;
  if (s == "heat") return KernelKind::heat;
  if (s == "gaussian") return KernelKind::gaussian;
  throw std::invalid_argument("unknown kernel '" + s + "'");
}

/// 2 / (√3 · π^¼), the Mexican hat normalization.
inline const double kMexicanHatScale = 2.0 / (std::sqrt(3.0) * std::pow(std::numbers::pi, 0.25));

/// g(θ·λ) for the chosen kernel.
inline double spectral_kernel(double lambda, double theta, KernelKind kind) {
  const double x = theta * lambda;
  switch (kind) {
    case KernelKind::mexican_hat: return kMexicanHatScale * (1.0 - x * x) * std::exp(-0.5 * x * x);
    case KernelKind::heat: return std::exp(-x);
    case KernelKind::gaussian: return std::exp(-0.5 * x * x);
  }
  return 0.0;
}

/// dg/dx at x = θ·λ.
inline double spectral_kernel_slope(double x, KernelKind kind) {
  switch (kind) {
    case KernelKind::mexican_hat: return kMexicanHatScale * x * (x * x - 3.0) * std::exp(-0.5 * x * x);
    case KernelKind::heat: return -std::exp(-x);
    case KernelKind::gaussian: return -x * std::exp(-0.5 * x * x);
  }
  return 0.0;
}

/// Learnable weights of the spectral token: time constants θ (t), the
/// attention logit head (t×1) and the value head (t×d).
struct SpectralTokenParams {
  Tensor thetas;
  Tensor logit_head;
  Tensor value_head;
  KernelKind kind = KernelKind::mexican_hat;

  std::size_t channels() const { return thetas.size(); }
  std::size_t width() const { return value_head.cols(); }

  /// θ log-uniform in [0.5, 4]; both heads uniform in ±1/√t.
  static SpectralTokenParams init(std::size_t channels, std::size_t width, KernelKind kind, Rng& rng) {
    if (channels == 0 || width == 0) throw ContractError("spectral token needs t >= 1 and d >= 1");
    SpectralTokenParams p;
    p.kind = kind;
    p.thetas = Tensor(Shape{channels});
    for (double& v : p.thetas.data()) v = std::exp(rng.uniform(std::log(0.5), std::log(4.0)));
    const double bound = 1.0 / std::sqrt(static_cast<double>(channels));
    p.logit_head = Tensor(Shape{channels, 1});
    for (double& v : p.logit_head.data()) v = rng.uniform(-bound, bound);
    p.value_head = Tensor(Shape{channels, width});
    for (double& v : p.value_head.data()) v = rng.uniform(-bound, bound);
    return p;
  }
};

/// Concatenated eigenvalues, tree segment first.
struct SpectrumVector {
  std::vector<double> values;
  std::size_t k_tree = 0;
  std::size_t k_graph = 0;
};

namespace detail {
inline void append_segment(std::vector<double>& out, const std::vector<double>& eigenvalues, std::size_t k) {
  for (std::size_t i = 0; i < k; ++i) out.push_back(i < eigenvalues.size() ? eigenvalues[i] : 0.0);
}
}  // namespace detail

/// Keeps the k smallest eigenvalues of each spectrum (zero-padded) and
/// concatenates tree then graph. A zero count drops that segment.
inline SpectrumVector build_spectrum_vector(const Spectrum& tree, const Spectrum& graph, std::size_t k_tree,
                                            std::size_t k_graph) {
  if (k_tree + k_graph == 0) throw ContractError("spectrum vector needs at least one retained eigenvalue");
  SpectrumVector sv;
  sv.k_tree = k_tree;
  sv.k_graph = k_graph;
  detail::append_segment(sv.values, tree.eigenvalues, k_tree);
  detail::append_segment(sv.values, graph.eigenvalues, k_graph);
  return sv;
}

/// G[i][j] = g(λᵢ θⱼ) as a k×t tensor, differentiable in θ.
inline Var kernel_features(const SpectrumVector& sv, Var thetas, KernelKind kind) {
  const Tensor& th = thetas.value();
  const std::size_t k = sv.values.size(), t = th.size();
  Tensor out(Shape{k, t});
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < t; ++j) out(i, j) = spectral_kernel(sv.values[i], th[j], kind);
  return thetas.tape->record(std::move(out), {thetas.id}, [lambdas = sv.values, kind](Tape& tape, std::size_t self) {
    const std::size_t ti = tape.parents(self)[0];
    const Tensor& th = tape.value(ti);
    const std::size_t t = th.size();
    const auto g = tape.grad(self);
    auto gt = tape.grad(ti);
    for (std::size_t i = 0; i < lambdas.size(); ++i)
      for (std::size_t j = 0; j < t; ++j)
        gt[j] += g[i * t + j] * lambdas[i] * spectral_kernel_slope(lambdas[i] * th[j], kind);
  });
}

/// s = softmax over the k eigenvalue positions of features·W₁; shape [k].
inline Var spectral_attention(Var features, Var logit_head) {
  const Var logits = matmul(features, logit_head);  // k×1
  const std::size_t k = logits.value().dim(0);
  return softmax(reshape(logits, Shape{k}), 0);
}

/// z₀ = Σᵢ sᵢ · Vᵢ with V = features·W₂: attention-weighted pooling of the
/// per-eigenvalue value embeddings. Shape [d].
inline Var init_spectral_token(const SpectrumVector& sv, Var thetas, Var logit_head, Var value_head,
                               KernelKind kind) {
  const Var features = kernel_features(sv, thetas, kind);
  const Var weights = spectral_attention(features, logit_head);
  const Var values = matmul(features, value_head);  // k×d
  const std::size_t k = sv.values.size();
  const Var pooled = matmul(reshape(weights, Shape{1, k}), values);
  return reshape(pooled, Shape{values.value().dim(1)});
}

inline Var init_spectral_token(Tape& tape, const SpectrumVector& sv, SpectralTokenParams& params) {
  return init_spectral_token(sv, tape.param(params.thetas), tape.param(params.logit_head),
                             tape.param(params.value_head), params.kind);
}

}  // namespace spectok
