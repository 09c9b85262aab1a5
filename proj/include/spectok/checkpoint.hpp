#pragma once

#include <cstddef>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "spectok/errors.hpp"
#include "spectok/model.hpp"
#include "spectok/run_config.hpp"

namespace spectok {

struct Checkpoint {
  RunConfig config;
  std::size_t epoch = 0;
  double valid_metric = 0.0;
  ModelParams params;
};

/// JSON document with the full config, its hash, and every parameter tensor
/// (name, shape, row-major data). Doubles are written in round-trip form.
inline nlohmann::json checkpoint_json(const RunConfig& rc, ModelParams& params, std::size_t epoch,
                                      double valid_metric) {
  nlohmann::json j;
  j["config"] = to_json(rc);
  j["config_hash"] = config_hash(rc);
  j["epoch"] = epoch;
  j["valid_metric"] = std::isnan(valid_metric) ? nlohmann::json(nullptr) : nlohmann::json(valid_metric);
  j["params"] = nlohmann::json::array();
  params.visit(
      [&](const std::string& name, Tensor& t) {
        j["params"].push_back({{"name", name}, {"shape", t.shape()}, {"data", t.storage()}});
      },
      true);
  return j;
}

inline void save_checkpoint(const std::string& path, const RunConfig& rc, ModelParams& params, std::size_t epoch,
                            double valid_metric) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write checkpoint '" + path + "'");
  out << checkpoint_json(rc, params, epoch, valid_metric).dump() << '\n';
}

/// Rebuilds the model from the embedded config and loads every tensor.
/// Throws ConfigError when the stored hash does not match the stored config
/// or when names/shapes disagree with that config.
inline Checkpoint parse_checkpoint(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("config") || !j.contains("config_hash") || !j.contains("params")) {
    throw ConfigError("checkpoint: missing config, config_hash or params");
  }
  Checkpoint ck;
  ck.config = parse_run_config(j.at("config"));
  if (j.at("config_hash") != config_hash(ck.config)) {
    throw ConfigError("checkpoint: config hash mismatch (file edited or corrupted)");
  }
  ck.epoch = j.value("epoch", std::size_t{0});
  const auto& vm = j.value("valid_metric", nlohmann::json(nullptr));
  ck.valid_metric = vm.is_number() ? vm.get<double>() : std::numeric_limits<double>::quiet_NaN();
  Rng rng(ck.config.train.seed);
  ck.params = ModelParams::init(ck.config.model, rng);
  const auto named = ck.params.named(true);
  const auto& stored = j.at("params");
  if (!stored.is_array() || stored.size() != named.size()) {
    throw ConfigError("checkpoint: parameter count does not match config");
  }
  for (std::size_t i = 0; i < named.size(); ++i) {
    const auto& e = stored[i];
    Tensor& t = *named[i].second;
    if (e.at("name") != named[i].first) {
      throw ConfigError("checkpoint: expected parameter '" + named[i].first + "'");
    }
    if (e.at("shape").get<Shape>() != t.shape()) {
      throw ConfigError("checkpoint: shape mismatch for '" + named[i].first + "'");
    }
    const auto data = e.at("data").get<std::vector<double>>();
    if (data.size() != t.size()) throw ConfigError("checkpoint: data length mismatch for '" + named[i].first + "'");
    std::copy(data.begin(), data.end(), t.data().begin());
  }
  return ck;
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("checkpoint: cannot open '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("checkpoint: malformed JSON: ") + e.what());
  }
  return parse_checkpoint(j);
}

}  // namespace spectok
