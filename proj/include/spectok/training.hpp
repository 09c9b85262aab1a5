#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "spectok/autodiff.hpp"
#include "spectok/errors.hpp"
#include "spectok/model.hpp"
#include "spectok/random.hpp"
#include "spectok/tensor.hpp"

namespace spectok {

enum class Scheduler { cosine, reduce_on_plateau, none };
enum class Metric { mae, roc_auc, avg_precision };

inline std::string to_string(Scheduler s) {
  switch (s) {
    case Scheduler::cosine: return "cosine";
    case Scheduler::reduce_on_plateau: return "reduce_on_plateau";
    case Scheduler::none: return "none";
  }
  return "?";
}

inline std::string to_string(Metric m) {
  switch (m) {
    case Metric::mae: return "mae";
    case Metric::roc_auc: return "roc_auc";
    case Metric::avg_precision: return "avg_precision";
  }
  return "?";
}

/// Lower is better only for MAE.
inline bool lower_is_better(Metric m) { return m == Metric::mae; }

struct TrainConfig {
  std::size_t epochs = 950;
  std::size_t warmup_epochs = 50;
  double lr = 1e-3;
  std::string optimizer = "adamw";
  double weight_decay = 0.01;
  Scheduler scheduler = Scheduler::cosine;
  std::size_t batch_size = 32;
  std::uint64_t seed = 42;
  double rop_factor = 0.5;
  std::size_t rop_patience = 10;
  double grad_clip = 5.0;
  Metric metric = Metric::mae;
  std::size_t threads = 1;

  void validate() const {
    if (warmup_epochs > epochs) throw ConfigError("train.warmup_epochs: must not exceed train.epochs");
    if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("train.lr: must be > 0");
    if (optimizer != "adamw") throw ConfigError("train.optimizer: only 'adamw' is supported");
    if (weight_decay < 0.0) throw ConfigError("train.weight_decay: must be >= 0");
    if (batch_size == 0) throw ConfigError("train.batch_size: must be >= 1");
    if (!(rop_factor > 0.0 && rop_factor < 1.0)) throw ConfigError("train.rop_factor: must be in (0, 1)");
    if (grad_clip < 0.0) throw ConfigError("train.grad_clip: must be >= 0 (0 disables)");
    if (threads == 0) throw ConfigError("train.threads: must be >= 1");
  }
};

// ---------------------------------------------------------------------------
// Optimizer
// ---------------------------------------------------------------------------

struct AdamWOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamWState {
  std::vector<std::vector<double>> m, v;
  std::size_t step = 0;
};

/// One AdamW update using each tensor's accumulated gradient. Weight decay is
/// decoupled: p ← p·(1 − lr·wd) before the bias-corrected Adam step.
inline void adamw_step(std::span<Tensor* const> params, AdamWState& state, double lr, double weight_decay,
                       const AdamWOptions& opt = {}) {
  for (const Tensor* p : params) {
    if (!p->has_grad()) continue;
    for (double g : p->grad()) {
      if (!std::isfinite(g)) throw NumericError("non-finite gradient in optimizer step");
    }
  }
  if (state.m.empty()) {
    for (const Tensor* p : params) {
      state.m.emplace_back(p->size(), 0.0);
      state.v.emplace_back(p->size(), 0.0);
    }
  }
  if (state.m.size() != params.size()) throw ContractError("optimizer state does not match parameter list");
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(opt.beta1, t);
  const double c2 = 1.0 - std::pow(opt.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    auto& m = state.m[i];
    auto& v = state.v[i];
    const bool has = p.has_grad();
    for (std::size_t j = 0; j < p.size(); ++j) {
      const double g = has ? p.grad()[j] : 0.0;
      p[j] *= 1.0 - lr * weight_decay;
      m[j] = opt.beta1 * m[j] + (1.0 - opt.beta1) * g;
      v[j] = opt.beta2 * v[j] + (1.0 - opt.beta2) * g * g;
      p[j] -= lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + opt.eps);
    }
  }
}

/// Scales all gradients so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
inline double clip_grad_norm(std::span<Tensor* const> params, double max_norm) {
  double sq = 0.0;
  for (const Tensor* p : params) {
    if (!p->has_grad()) continue;
    for (double g : p->grad()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double f = max_norm / norm;
    for (Tensor* p : params) {
      if (!p->has_grad()) continue;
      for (double& g : p->grad()) g *= f;
    }
  }
  return norm;
}

// ---------------------------------------------------------------------------
// Learning-rate schedule
// ---------------------------------------------------------------------------

/// Learning rate as a function of (fractional) epoch. Linear warmup from 0,
/// then cosine decay to 0 at `epochs`, a constant, or reduce-on-plateau.
class LrSchedule {
 public:
  explicit LrSchedule(const TrainConfig& cfg) : cfg_(cfg) {}

  double at(double epoch) const {
    const double warm = static_cast<double>(cfg_.warmup_epochs);
    if (epoch < warm) return cfg_.lr * epoch / warm;
    switch (cfg_.scheduler) {
      case Scheduler::cosine: {
        const double span = static_cast<double>(cfg_.epochs) - warm;
        if (span <= 0.0) return cfg_.lr;
        const double progress = std::min(1.0, (epoch - warm) / span);
        return 0.5 * cfg_.lr * (1.0 + std::cos(std::numbers::pi * progress));
      }
      case Scheduler::reduce_on_plateau: return cfg_.lr * scale_;
      case Scheduler::none: return cfg_.lr;
    }
    return cfg_.lr;
  }

  /// Feeds one validation loss to reduce-on-plateau; after `rop_patience`
  /// consecutive epochs without improvement the rate is multiplied by
  /// `rop_factor`. No effect for other schedulers.
  void observe(double valid_loss) {
    if (cfg_.scheduler != Scheduler::reduce_on_plateau) return;
    if (valid_loss < best_) {
      best_ = valid_loss;
      bad_ = 0;
      return;
    }
    if (++bad_ >= cfg_.rop_patience) {
      scale_ *= cfg_.rop_factor;
      bad_ = 0;
    }
  }

 private:
  TrainConfig cfg_;
  double best_ = std::numeric_limits<double>::infinity();
  std::size_t bad_ = 0;
  double scale_ = 1.0;
};

inline double lr_schedule(double epoch, const TrainConfig& cfg) { return LrSchedule(cfg).at(epoch); }

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

inline std::size_t count_present(std::span<const double> target) {
  return static_cast<std::size_t>(std::count_if(target.begin(), target.end(), [](double t) { return !std::isnan(t); }));
}

/// Sum of per-entry losses over non-NaN targets: |p − t| for regression,
/// sigmoid cross-entropy on logits for multilabel. Result shape [1].
inline Var masked_loss_sum(Var pred, std::span<const double> target, TaskKind kind) {
  const Tensor& pv = pred.value();
  if (pv.size() != target.size()) {
    throw DimensionError("loss: prediction has " + std::to_string(pv.size()) + " entries, target " +
                         std::to_string(target.size()));
  }
  std::vector<double> t(target.begin(), target.end());
  double total = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (std::isnan(t[i])) continue;
    const double x = pv[i];
    if (kind == TaskKind::regression) {
      total += std::abs(x - t[i]);
    } else {
      total += std::max(x, 0.0) - x * t[i] + std::log1p(std::exp(-std::abs(x)));
    }
  }
  return pred.tape->record(Tensor(Shape{1}, total), {pred.id}, [t = std::move(t), kind](Tape& tape, std::size_t self) {
    const std::size_t pi = tape.parents(self)[0];
    const Tensor& pv = tape.value(pi);
    const double g = tape.grad(self)[0];
    auto gp = tape.grad(pi);
    for (std::size_t i = 0; i < t.size(); ++i) {
      if (std::isnan(t[i])) continue;
      const double x = pv[i];
      if (kind == TaskKind::regression) {
        tape.note_kink(x - t[i]);
        gp[i] += g * (x > t[i] ? 1.0 : (x < t[i] ? -1.0 : 0.0));
      } else {
        gp[i] += g * (1.0 / (1.0 + std::exp(-x)) - t[i]);
      }
    }
  });
}

/// Mean loss over present targets. Throws ContractError when none are present.
inline Var loss(Var pred, std::span<const double> target, TaskKind kind) {
  const std::size_t n = count_present(target);
  if (n == 0) throw ContractError("loss: every target is missing");
  return scale(masked_loss_sum(pred, target, kind), 1.0 / static_cast<double>(n));
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

/// Mean absolute error over non-NaN targets (NaN when none are present).
inline double mean_absolute_error(std::span<const double> pred, std::span<const double> target) {
  double s = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (std::isnan(target[i])) continue;
    s += std::abs(pred[i] - target[i]);
    ++n;
  }
  return n == 0 ? std::numeric_limits<double>::quiet_NaN() : s / static_cast<double>(n);
}

namespace detail {
inline std::vector<std::size_t> order_by_score_desc(std::span<const double> scores) {
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return idx;
}
}  // namespace detail

/// Probability that a random positive outranks a random negative, ties
/// counting ½. Empty when only one class is present.
inline std::optional<double> roc_auc(std::span<const double> scores, std::span<const int> labels) {
  const auto idx = detail::order_by_score_desc(scores);
  double pos = 0, neg = 0, concordant = 0;
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    double gp = 0, gn = 0;
    while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) {
      (labels[idx[j]] != 0 ? gp : gn) += 1;
      ++j;
    }
    // Negatives in this group are beaten by every earlier positive and tie with the group's.
    concordant += gn * pos + 0.5 * gn * gp;
    pos += gp;
    neg += gn;
    i = j;
  }
  if (pos == 0 || neg == 0) return std::nullopt;
  return concordant / (pos * neg);
}

/// Σ (ΔRecall · Precision) over the descending-score sweep, equal scores
/// forming one threshold. Empty when there are no positives.
inline std::optional<double> avg_precision(std::span<const double> scores, std::span<const int> labels) {
  const auto idx = detail::order_by_score_desc(scores);
  double total_pos = 0;
  for (int l : labels) total_pos += l != 0 ? 1 : 0;
  if (total_pos == 0 || total_pos == static_cast<double>(labels.size())) return std::nullopt;
  double tp = 0, fp = 0, ap = 0;
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    double gp = 0;
    while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) {
      if (labels[idx[j]] != 0) {
        gp += 1;
        tp += 1;
      } else {
        fp += 1;
      }
      ++j;
    }
    if (gp > 0) ap += (gp / total_pos) * (tp / (tp + fp));
    i = j;
  }
  return ap;
}

/// Task metric over a dataset. `preds` and `targets` are row-major
/// samples × tasks. Classification metrics are averaged over tasks where they
/// are defined; NaN targets are skipped. NaN if no task qualifies.
inline double evaluate_metric(Metric metric, const std::vector<std::vector<double>>& preds,
                              const std::vector<std::vector<double>>& targets) {
  if (metric == Metric::mae) {
    double s = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
      for (std::size_t k = 0; k < preds[i].size(); ++k) {
        if (std::isnan(targets[i][k])) continue;
        s += std::abs(preds[i][k] - targets[i][k]);
        ++n;
      }
    }
    return n == 0 ? std::numeric_limits<double>::quiet_NaN() : s / static_cast<double>(n);
  }
  const std::size_t tasks = preds.empty() ? 0 : preds.front().size();
  double s = 0.0;
  std::size_t defined = 0;
  for (std::size_t k = 0; k < tasks; ++k) {
    std::vector<double> sc;
    std::vector<int> lb;
    for (std::size_t i = 0; i < preds.size(); ++i) {
      if (std::isnan(targets[i][k])) continue;
      sc.push_back(preds[i][k]);
      lb.push_back(targets[i][k] > 0.5 ? 1 : 0);
    }
    const auto v = metric == Metric::roc_auc ? roc_auc(sc, lb) : avg_precision(sc, lb);
    if (v) {
      s += *v;
      ++defined;
    }
  }
  return defined == 0 ? std::numeric_limits<double>::quiet_NaN() : s / static_cast<double>(defined);
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double valid_loss = 0.0;
  double valid_metric = 0.0;
  double lr = 0.0;

  bool operator==(const EpochRecord&) const = default;
};

/// One metric-log line: `epoch\ttrain_loss\tvalid_loss\tvalid_metric\tlr`.
inline std::string format_log_line(const EpochRecord& r) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%zu\t%.17g\t%.17g\t%.17g\t%.17g", r.epoch, r.train_loss, r.valid_loss,
                r.valid_metric, r.lr);
  return buf;
}

struct MetricReport {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  double best_valid_metric = std::numeric_limits<double>::quiet_NaN();
  /// Parameter values at the best validation epoch, in `ModelParams::named()` order.
  std::vector<Tensor> best_params;
};

struct Evaluation {
  double loss = std::numeric_limits<double>::quiet_NaN();
  double metric = std::numeric_limits<double>::quiet_NaN();
  std::vector<std::vector<double>> predictions;
};

namespace detail {

template <class F>
void parallel_for(std::size_t n, std::size_t threads, F&& f) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) f(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(threads);
  for (std::size_t w = 0; w < threads; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += threads) f(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace detail

/// Inference-mode loss (mean over present targets) and metric on `samples`.
inline Evaluation evaluate(const std::vector<Sample>& samples, const ModelConfig& cfg, ModelParams& params,
                           Metric metric, std::size_t threads = 1) {
  Evaluation ev;
  ev.predictions.resize(samples.size());
  detail::parallel_for(samples.size(), threads,
                       [&](std::size_t i) { ev.predictions[i] = predict(samples[i], cfg, params); });
  std::vector<std::vector<double>> targets;
  double total = 0.0;
  std::size_t present = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    targets.push_back(samples[i].graph.targets);
    Tape tape;
    const Var p = tape.constant(Tensor(Shape{ev.predictions[i].size()}, ev.predictions[i]));
    total += masked_loss_sum(p, samples[i].graph.targets, cfg.task_kind).value()[0];
    present += count_present(samples[i].graph.targets);
  }
  if (present > 0) ev.loss = total / static_cast<double>(present);
  ev.metric = evaluate_metric(metric, ev.predictions, targets);
  return ev;
}

namespace detail {
inline bool improves(double candidate, double best, Metric m) {
  if (std::isnan(candidate)) return false;
  if (std::isnan(best)) return true;
  return lower_is_better(m) ? candidate < best : candidate > best;
}
}  // namespace detail

/// Mini-batch AdamW training. Epoch 0 of the report is the evaluation before
/// any update; each later row holds the mean training loss over that epoch's
/// batches, validation loss and metric, and the last learning rate used.
/// Per-sample gradients are reduced in sample order, so results do not depend
/// on `tc.threads`. Lines are written to `log` as they are produced.
inline MetricReport train_loop(const ModelConfig& cfg, ModelParams& params, const std::vector<Sample>& train,
                               const std::vector<Sample>& valid, const TrainConfig& tc, std::ostream* log = nullptr) {
  tc.validate();
  if (train.empty()) throw ContractError("train_loop: empty training set");
  const auto named = params.named();
  std::vector<Tensor*> tensors;
  for (const auto& [name, t] : named) tensors.push_back(t);

  MetricReport report;
  auto snapshot = [&] {
    report.best_params.clear();
    for (const Tensor* t : tensors) report.best_params.push_back(Tensor(t->shape(), t->storage()));
  };
  auto emit = [&](const EpochRecord& r) {
    report.epochs.push_back(r);
    if (log) *log << format_log_line(r) << '\n' << std::flush;
  };
  const std::vector<Sample>& monitor = valid.empty() ? train : valid;

  {
    const Evaluation tr = evaluate(train, cfg, params, tc.metric, tc.threads);
    const Evaluation va = evaluate(monitor, cfg, params, tc.metric, tc.threads);
    emit({0, tr.loss, va.loss, va.metric, 0.0});
    report.best_epoch = 0;
    report.best_valid_metric = va.metric;
    snapshot();
  }

  LrSchedule schedule(tc);
  AdamWState state;
  const Rng root(tc.seed);
  const std::size_t batches = (train.size() + tc.batch_size - 1) / tc.batch_size;
  std::vector<std::size_t> order(train.size());

  for (std::size_t epoch = 1; epoch <= tc.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle_rng = root.derive(2 * epoch);
    shuffle_rng.shuffle(order.begin(), order.end());
    const Rng dropout_root = root.derive(2 * epoch + 1);

    double loss_total = 0.0;
    std::size_t loss_count = 0;
    double lr = 0.0;
    for (std::size_t b = 0; b < batches; ++b) {
      const std::size_t lo = b * tc.batch_size, hi = std::min(train.size(), lo + tc.batch_size);
      std::size_t present = 0;
      for (std::size_t i = lo; i < hi; ++i) present += count_present(train[order[i]].graph.targets);
      if (present == 0) continue;
      const double inv = 1.0 / static_cast<double>(present);

      std::vector<Tape> tapes(hi - lo);
      std::vector<double> sums(hi - lo, 0.0);
      detail::parallel_for(hi - lo, tc.threads, [&](std::size_t k) {
        const Sample& s = train[order[lo + k]];
        Rng drop = dropout_root.derive(lo + k);
        Tape& tape = tapes[k];
        const Var pred = forward(tape, s, cfg, params, true, drop);
        const Var sum_loss = masked_loss_sum(pred, s.graph.targets, cfg.task_kind);
        sums[k] = sum_loss.value()[0];
        tape.backward(scale(sum_loss, inv), false);
      });
      for (Tensor* t : tensors) {
        t->ensure_grad();
        t->zero_grad();
      }
      for (Tape& tape : tapes) tape.flush_grads();
      for (double s : sums) loss_total += s;
      loss_count += present;

      clip_grad_norm(tensors, tc.grad_clip);
      lr = schedule.at(static_cast<double>(epoch - 1) + static_cast<double>(b) / static_cast<double>(batches));
      adamw_step(tensors, state, lr, tc.weight_decay);
    }

    const Evaluation va = evaluate(monitor, cfg, params, tc.metric, tc.threads);
    schedule.observe(va.loss);
    const double train_loss =
        loss_count == 0 ? std::numeric_limits<double>::quiet_NaN() : loss_total / static_cast<double>(loss_count);
    emit({epoch, train_loss, va.loss, va.metric, lr});
    if (detail::improves(va.metric, report.best_valid_metric, tc.metric)) {
      report.best_epoch = epoch;
      report.best_valid_metric = va.metric;
      snapshot();
    }
  }
  return report;
}

/// Copies a `MetricReport::best_params` snapshot back into `params`.
inline void restore(ModelParams& params, const std::vector<Tensor>& values) {
  const auto named = params.named();
  if (named.size() != values.size()) throw ContractError("restore: parameter count mismatch");
  for (std::size_t i = 0; i < named.size(); ++i) {
    Tensor& t = *named[i].second;
    if (t.shape() != values[i].shape()) throw DimensionError("restore: shape mismatch for " + named[i].first);
    std::copy(values[i].storage().begin(), values[i].storage().end(), t.data().begin());
  }
}

}  // namespace spectok
