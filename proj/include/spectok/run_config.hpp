#pragma once

#include <cstddef>
#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "spectok/data_io.hpp"
#include "spectok/errors.hpp"
#include "spectok/model.hpp"
#include "spectok/spectral_token.hpp"
#include "spectok/training.hpp"

namespace spectok {

struct DataConfig {
  std::string path;
  SplitRatios split;
};

/// Everything a run needs: `{"model": {...}, "train": {...}, "data": {...}}`.
/// Missing keys keep their defaults; unknown keys are rejected.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  DataConfig data;
};

namespace detail {

template <class E>
struct EnumName {
  E value;
  const char* name;
};

inline const std::vector<EnumName<Variant>> kVariants = {{Variant::subformer_spec, "subformer_spec"},
                                                         {Variant::graphtrans_spec, "graphtrans_spec"}};
inline const std::vector<EnumName<Activation>> kActivations = {{Activation::relu, "relu"},
                                                               {Activation::gelu, "gelu"}};
inline const std::vector<EnumName<EpeMode>> kEpeModes = {{EpeMode::linear, "linear"}, {EpeMode::signnet, "signnet"}};
inline const std::vector<EnumName<TaskKind>> kTaskKinds = {{TaskKind::regression, "regression"},
                                                           {TaskKind::multilabel, "multilabel"}};
inline const std::vector<EnumName<TokenMode>> kTokenModes = {{TokenMode::learned, "learned"},
                                                             {TokenMode::frozen_random, "frozen_random"}};
inline const std::vector<EnumName<KernelKind>> kKernels = {
    {KernelKind::mexican_hat, "mexican_hat"}, {KernelKind::heat, "heat"}, {KernelKind::gaussian, "gaussian"}};
inline const std::vector<EnumName<Scheduler>> kSchedulers = {{Scheduler::cosine, "cosine"},
                                                             {Scheduler::reduce_on_plateau, "reduce_on_plateau"},
                                                             {Scheduler::none, "none"}};
inline const std::vector<EnumName<Metric>> kMetrics = {
    {Metric::mae, "mae"}, {Metric::roc_auc, "roc_auc"}, {Metric::avg_precision, "avg_precision"}};

template <class E>
const char* enum_name(E v, const std::vector<EnumName<E>>& table) {
  for (const auto& e : table)
    if (e.value == v) return e.name;
  return "?";
}

/// Reads one section, tracking which keys were consumed.
class SectionReader {
 public:
  SectionReader(const nlohmann::json& j, std::string section) : j_(j), section_(std::move(section)) {
    if (!j_.is_object()) throw ConfigError(section_ + ": must be an object");
  }

  void size(const char* key, std::size_t& out) {
    if (const auto* v = find(key)) {
      if (!v->is_number_unsigned()) fail(key, "expected a non-negative integer");
      out = v->get<std::size_t>();
    }
  }
  void u64(const char* key, std::uint64_t& out) {
    if (const auto* v = find(key)) {
      if (!v->is_number_unsigned()) fail(key, "expected a non-negative integer");
      out = v->get<std::uint64_t>();
    }
  }
  void real(const char* key, double& out) {
    if (const auto* v = find(key)) {
      if (!v->is_number()) fail(key, "expected a number");
      out = v->get<double>();
    }
  }
  void flag(const char* key, bool& out) {
    if (const auto* v = find(key)) {
      if (!v->is_boolean()) fail(key, "expected true or false");
      out = v->get<bool>();
    }
  }
  void text(const char* key, std::string& out) {
    if (const auto* v = find(key)) {
      if (!v->is_string()) fail(key, "expected a string");
      out = v->get<std::string>();
    }
  }
  template <class E>
  void choice(const char* key, E& out, const std::vector<EnumName<E>>& table) {
    if (const auto* v = find(key)) {
      if (v->is_string()) {
        for (const auto& e : table) {
          if (v->get<std::string>() == e.name) {
            out = e.value;
            return;
          }
        }
      }
      std::string names;
      for (const auto& e : table) names += std::string(names.empty() ? "" : ", ") + e.name;
      fail(key, "expected one of: " + names);
    }
  }

  const nlohmann::json* find(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  [[noreturn]] void fail(const std::string& key, const std::string& msg) const {
    throw ConfigError(section_ + "." + key + ": " + msg);
  }

  void reject_unknown() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.count(key)) throw ConfigError(section_ + "." + key + ": unknown key");
    }
  }

 private:
  const nlohmann::json& j_;
  std::string section_;
  std::set<std::string> seen_;
};

}  // namespace detail

inline RunConfig parse_run_config(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config: top level must be an object");
  for (const auto& [key, value] : j.items()) {
    if (key != "model" && key != "train" && key != "data") throw ConfigError(key + ": unknown section");
  }
  RunConfig rc;
  const nlohmann::json empty = nlohmann::json::object();
  {
    detail::SectionReader r(j.contains("model") ? j.at("model") : empty, "model");
    ModelConfig& m = rc.model;
    r.choice("variant", m.variant, detail::kVariants);
    r.size("mp_layers", m.mp_layers);
    r.size("mp_hidden", m.mp_hidden);
    r.text("mp_type", m.mp_type);
    r.real("mp_dropout", m.mp_dropout);
    r.size("d_model", m.d_model);
    r.size("ffn_hidden", m.ffn_hidden);
    r.size("n_layers", m.n_layers);
    r.size("n_heads", m.n_heads);
    r.real("dropout", m.dropout);
    r.choice("activation", m.activation, detail::kActivations);
    r.flag("use_epe", m.use_epe);
    r.choice("epe_mode", m.epe_mode, detail::kEpeModes);
    r.size("pe_dim", m.pe_dim);
    r.size("signnet_hidden", m.signnet_hidden);
    r.size("max_degree", m.max_degree);
    r.size("k_tree", m.k_tree);
    r.size("k_graph", m.k_graph);
    r.size("t", m.channels);
    r.choice("kernel", m.kernel, detail::kKernels);
    r.choice("spectral_token", m.spectral_token, detail::kTokenModes);
    r.size("readout_hidden", m.readout_hidden);
    r.choice("readout_activation", m.readout_activation, detail::kActivations);
    r.size("n_tasks", m.n_tasks);
    r.choice("task_kind", m.task_kind, detail::kTaskKinds);
    r.size("node_vocab", m.node_vocab);
    r.size("edge_vocab", m.edge_vocab);
    r.size("clique_vocab", m.clique_vocab);
    r.reject_unknown();
  }
  {
    detail::SectionReader r(j.contains("train") ? j.at("train") : empty, "train");
    TrainConfig& t = rc.train;
    r.size("epochs", t.epochs);
    r.size("warmup_epochs", t.warmup_epochs);
    r.real("lr", t.lr);
    r.text("optimizer", t.optimizer);
    r.real("weight_decay", t.weight_decay);
    r.choice("scheduler", t.scheduler, detail::kSchedulers);
    r.size("batch_size", t.batch_size);
    r.u64("seed", t.seed);
    r.real("rop_factor", t.rop_factor);
    r.size("rop_patience", t.rop_patience);
    r.real("grad_clip", t.grad_clip);
    r.choice("metric", t.metric, detail::kMetrics);
    r.reject_unknown();
  }
  {
    detail::SectionReader r(j.contains("data") ? j.at("data") : empty, "data");
    r.text("path", rc.data.path);
    if (const auto* s = r.find("split")) {
      if (!s->is_array() || s->size() != 3) r.fail("split", "expected [train, valid, test] ratios");
      for (const auto& x : *s)
        if (!x.is_number()) r.fail("split", "ratios must be numbers");
      rc.data.split = {(*s)[0].get<double>(), (*s)[1].get<double>(), (*s)[2].get<double>()};
      const auto& sp = rc.data.split;
      if (sp.train < 0 || sp.valid < 0 || sp.test < 0 || std::abs(sp.train + sp.valid + sp.test - 1.0) > 1e-9) {
        r.fail("split", "ratios must be non-negative and sum to 1");
      }
    }
    r.reject_unknown();
  }
  rc.model.validate();
  rc.train.validate();
  if (rc.train.metric == Metric::mae && rc.model.task_kind != TaskKind::regression) {
    throw ConfigError("train.metric: mae requires model.task_kind = regression");
  }
  if (rc.train.metric != Metric::mae && rc.model.task_kind != TaskKind::multilabel) {
    throw ConfigError("train.metric: classification metrics require model.task_kind = multilabel");
  }
  return rc;
}

inline RunConfig parse_run_config_text(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config: malformed JSON: ") + e.what());
  }
  return parse_run_config(j);
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config_text(ss.str());
}

/// Full config with every key spelled out; parse_run_config(to_json(c)) == c.
inline nlohmann::json to_json(const RunConfig& rc) {
  using detail::enum_name;
  const ModelConfig& m = rc.model;
  const TrainConfig& t = rc.train;
  nlohmann::json j;
  j["model"] = {{"variant", enum_name(m.variant, detail::kVariants)},
                {"mp_layers", m.mp_layers},
                {"mp_hidden", m.mp_hidden},
                {"mp_type", m.mp_type},
                {"mp_dropout", m.mp_dropout},
                {"d_model", m.d_model},
                {"ffn_hidden", m.ffn_hidden},
                {"n_layers", m.n_layers},
                {"n_heads", m.n_heads},
                {"dropout", m.dropout},
                {"activation", enum_name(m.activation, detail::kActivations)},
                {"use_epe", m.use_epe},
                {"epe_mode", enum_name(m.epe_mode, detail::kEpeModes)},
                {"pe_dim", m.pe_dim},
                {"signnet_hidden", m.signnet_hidden},
                {"max_degree", m.max_degree},
                {"k_tree", m.k_tree},
                {"k_graph", m.k_graph},
                {"t", m.channels},
                {"kernel", enum_name(m.kernel, detail::kKernels)},
                {"spectral_token", enum_name(m.spectral_token, detail::kTokenModes)},
                {"readout_hidden", m.readout_hidden},
                {"readout_activation", enum_name(m.readout_activation, detail::kActivations)},
                {"n_tasks", m.n_tasks},
                {"task_kind", enum_name(m.task_kind, detail::kTaskKinds)},
                {"node_vocab", m.node_vocab},
                {"edge_vocab", m.edge_vocab},
                {"clique_vocab", m.clique_vocab}};
  j["train"] = {{"epochs", t.epochs},
                {"warmup_epochs", t.warmup_epochs},
                {"lr", t.lr},
                {"optimizer", t.optimizer},
                {"weight_decay", t.weight_decay},
                {"scheduler", enum_name(t.scheduler, detail::kSchedulers)},
                {"batch_size", t.batch_size},
                {"seed", t.seed},
                {"rop_factor", t.rop_factor},
                {"rop_patience", t.rop_patience},
                {"grad_clip", t.grad_clip},
                {"metric", enum_name(t.metric, detail::kMetrics)}};
  j["data"] = {{"path", rc.data.path},
               {"split", {rc.data.split.train, rc.data.split.valid, rc.data.split.test}}};
  return j;
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Hash of the canonical (sorted-key, compact) config document. The dataset
/// path is left out so the same run can be pointed at a moved file.
inline std::string config_hash(const RunConfig& rc) {
  nlohmann::json j = to_json(rc);
  j["data"].erase("path");
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(j.dump())));
  return buf;
}

}  // namespace spectok
