// spectok command-line tool: generate, spectrum, train, eval, gradcheck.

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "spectok/checkpoint.hpp"
#include "spectok/data_io.hpp"
#include "spectok/grad_check.hpp"
#include "spectok/model.hpp"
#include "spectok/run_config.hpp"
#include "spectok/spectral_token.hpp"
#include "spectok/training.hpp"

namespace fs = std::filesystem;
using namespace spectok;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitVerify = 4;

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Fixed precision with tiny magnitudes snapped to 0, so records from
// relabeled copies of a graph print identically.
std::string fixed(double v) {
  if (std::abs(v) < 5e-11) v = 0.0;
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10f", v);
  return buf;
}

std::string fixed_list(const std::vector<double>& values) {
  std::string out = "[";
  for (std::size_t i = 0; i < values.size(); ++i) out += (i ? "," : "") + fixed(values[i]);
  return out + "]";
}

std::string full(double v) {
  if (std::isnan(v)) return "null";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<Sample> prepare_all(const Dataset& data, const ModelConfig& cfg) {
  std::vector<Sample> out;
  out.reserve(data.size());
  for (const Graph& g : data) {
    if (g.targets.size() != cfg.n_tasks) {
      throw ContractError("graph has " + std::to_string(g.targets.size()) + " targets, model expects " +
                          std::to_string(cfg.n_tasks));
    }
    out.push_back(prepare_sample(g, cfg));
  }
  return out;
}

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path + "'");
  return out;
}

struct GenerateArgs {
  std::string out;
  std::size_t n = 64;
  std::size_t min_size = 8;
  std::size_t max_size = 24;
  std::uint64_t seed = 0;
};

int cmd_generate(const GenerateArgs& a) {
  if (a.min_size > a.max_size) throw ConfigError("--min-size must not exceed --max-size");
  const Dataset data = generate_synthetic(a.n, a.min_size, a.max_size, a.seed);
  if (a.out.empty() || a.out == "-") {
    write_dataset(std::cout, data);
  } else {
    auto out = open_output(a.out);
    write_dataset(out, data);
  }
  return kExitOk;
}

struct SpectrumArgs {
  std::string data;
  std::string out;
  std::size_t k_graph = 16;
  std::size_t k_tree = 16;
  std::size_t channels = 16;
  std::size_t width = 16;
  std::string kernel = "mexican_hat";
  std::uint64_t seed = 0;
};

int cmd_spectrum(const SpectrumArgs& a) {
  const Dataset data = parse_dataset(a.data);
  Rng rng(a.seed);
  SpectralTokenParams token = SpectralTokenParams::init(a.channels, a.width, kernel_from_string(a.kernel), rng);
  std::ofstream file;
  if (!a.out.empty() && a.out != "-") file = open_output(a.out);
  std::ostream& out = file.is_open() ? static_cast<std::ostream&>(file) : std::cout;
  for (const Graph& g : data) {
    const Spectrum gs = sym_eigh(normalized_laplacian(g));
    const Spectrum ts = sym_eigh(coarse_laplacian(decompose(g)));
    const SpectrumVector sv = build_spectrum_vector(ts, gs, a.k_tree, a.k_graph);
    Tape tape;
    const Tensor z0 = init_spectral_token(tape, sv, token).value();
    auto head = [](const std::vector<double>& v, std::size_t k) {
      return std::vector<double>(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(std::min(k, v.size())));
    };
    out << "{\"graph_eigenvalues\":" << fixed_list(head(gs.eigenvalues, a.k_graph))
        << ",\"tree_eigenvalues\":" << fixed_list(head(ts.eigenvalues, a.k_tree))
        << ",\"z0\":" << fixed_list(z0.storage()) << "}\n";
  }
  return kExitOk;
}

struct TrainArgs {
  std::string config;
  std::string data;
  std::string out_dir;
  std::size_t threads = 1;
};

int cmd_train(const TrainArgs& a) {
  RunConfig rc = a.config.empty() ? parse_run_config(nlohmann::json::object()) : load_run_config(a.config);
  if (!a.data.empty()) rc.data.path = a.data;
  if (rc.data.path.empty()) throw ConfigError("data.path: no dataset given (use --data or data.path)");
  rc.train.threads = a.threads;

  const Dataset data = parse_dataset(rc.data.path);
  const DatasetSplit parts = split(data, rc.data.split, rc.train.seed);
  const auto train = prepare_all(parts.train, rc.model);
  const auto valid = prepare_all(parts.valid, rc.model);
  const auto test = prepare_all(parts.test, rc.model);

  fs::create_directories(a.out_dir);
  Rng init_rng(rc.train.seed);
  ModelParams params = ModelParams::init(rc.model, init_rng);
  auto log = open_output((fs::path(a.out_dir) / "metrics.tsv").string());
  const MetricReport report = train_loop(rc.model, params, train, valid, rc.train, &log);

  restore(params, report.best_params);
  save_checkpoint((fs::path(a.out_dir) / "checkpoint.json").string(), rc, params, report.best_epoch,
                  report.best_valid_metric);
  const Evaluation train_ev = evaluate(train, rc.model, params, rc.train.metric, a.threads);
  std::optional<Evaluation> test_ev;
  if (!test.empty()) test_ev = evaluate(test, rc.model, params, rc.train.metric, a.threads);

  std::ostringstream rep;
  rep << "{\"config_hash\":\"" << config_hash(rc) << "\",\"metric\":\"" << to_string(rc.train.metric)
      << "\",\"epochs\":" << rc.train.epochs << ",\"best_epoch\":" << report.best_epoch
      << ",\"best_valid_metric\":" << full(report.best_valid_metric) << ",\"train_loss\":" << full(train_ev.loss)
      << ",\"train_metric\":" << full(train_ev.metric)
      << ",\"test_loss\":" << full(test_ev ? test_ev->loss : std::nan(""))
      << ",\"test_metric\":" << full(test_ev ? test_ev->metric : std::nan("")) << ",\"sizes\":{\"train\":"
      << train.size() << ",\"valid\":" << valid.size() << ",\"test\":" << test.size() << "}}";
  open_output((fs::path(a.out_dir) / "report.json").string()) << rep.str() << '\n';
  std::cout << rep.str() << '\n';
  return kExitOk;
}

struct EvalArgs {
  std::string checkpoint;
  std::string data;
  std::string config;
  std::string split = "all";
  std::size_t threads = 1;
};

int cmd_eval(const EvalArgs& a) {
  Checkpoint ck = load_checkpoint(a.checkpoint);
  if (!a.config.empty() && config_hash(load_run_config(a.config)) != config_hash(ck.config)) {
    throw ConfigError("checkpoint/config hash mismatch: checkpoint was trained with a different config");
  }
  const std::string path = a.data.empty() ? ck.config.data.path : a.data;
  if (path.empty()) throw ConfigError("data.path: no dataset given (use --data)");
  Dataset data = parse_dataset(path);
  if (a.split != "all") {
    DatasetSplit parts = split(data, ck.config.data.split, ck.config.train.seed);
    data = a.split == "train" ? parts.train : a.split == "valid" ? parts.valid : parts.test;
  }
  const auto samples = prepare_all(data, ck.config.model);
  const Evaluation ev = evaluate(samples, ck.config.model, ck.params, ck.config.train.metric, a.threads);
  std::cout << "{\"split\":\"" << a.split << "\",\"count\":" << samples.size() << ",\"loss\":" << full(ev.loss)
            << ",\"metric\":\"" << to_string(ck.config.train.metric) << "\",\"value\":" << full(ev.metric)
            << ",\"checkpoint_epoch\":" << ck.epoch << "}\n";
  return kExitOk;
}

struct GradcheckArgs {
  std::string config;
  std::uint64_t seed = 0;
  std::size_t max_coords = 32;
  bool with_dropout = false;
  double tolerance = 1e-4;
};

int cmd_gradcheck(const GradcheckArgs& a) {
  RunConfig rc = a.config.empty() ? parse_run_config(nlohmann::json::object()) : load_run_config(a.config);
  if (a.with_dropout) {
    std::cerr << "gradcheck: refusing to run with dropout; sampled masks are not differentiable and change "
                 "between probes\n";
    return kExitConfig;
  }
  rc.model.dropout = 0.0;
  rc.model.mp_dropout = 0.0;

  Rng rng(a.seed);
  Graph g = random_molecule(6, rng);
  g.targets.assign(rc.model.n_tasks, 0.0);
  const Sample s = prepare_sample(g, rc.model);
  ModelParams params = ModelParams::init(rc.model, rng);
  Tensor weights(Shape{rc.model.n_tasks});
  for (double& w : weights.data()) w = rng.uniform(-1.0, 1.0);

  const ScalarFn f = [&](Tape& tape) {
    Rng unused(0);
    return sum(mul(forward(tape, s, rc.model, params, false, unused), tape.constant(weights)));
  };
  Rng sample_rng = rng.derive(1);
  const auto report = grad_check_params(f, params.named(), 1e-5, a.max_coords, sample_rng);
  double worst = 0.0;
  for (const auto& e : report) {
    std::printf("%-40s %.3e  (%zu coords%s)\n", e.name.c_str(), e.max_rel_error, e.checked,
                e.nudged ? ", kink-nudged" : "");
    worst = std::max(worst, e.max_rel_error);
  }
  const bool ok = worst <= a.tolerance;
  std::printf("max relative error %.3e: %s\n", worst, ok ? "PASS" : "FAIL");
  return ok ? kExitOk : kExitVerify;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Graph spectral token models: data generation, spectra, training and verification"};
  app.require_subcommand(1);

  GenerateArgs gen;
  auto* g = app.add_subcommand("generate", "Write a synthetic molecule-like dataset");
  g->add_option("--out", gen.out, "Output file ('-' for stdout)");
  g->add_option("--n", gen.n, "Number of graphs");
  g->add_option("--min-size", gen.min_size, "Smallest graph")->check(CLI::Range(1, 64));
  g->add_option("--max-size", gen.max_size, "Largest graph")->check(CLI::Range(1, 64));
  g->add_option("--seed", gen.seed, "Random seed");

  SpectrumArgs spec;
  auto* sp = app.add_subcommand("spectrum", "Print graph/tree eigenvalues and the seeded spectral token per graph");
  sp->add_option("--data", spec.data, "Dataset file")->required();
  sp->add_option("--out", spec.out, "Output file ('-' for stdout)");
  sp->add_option("--k-graph", spec.k_graph, "Graph eigenvalues kept");
  sp->add_option("--k-tree", spec.k_tree, "Tree eigenvalues kept");
  sp->add_option("--t", spec.channels, "Kernel channels")->check(CLI::PositiveNumber);
  sp->add_option("--width", spec.width, "Token width")->check(CLI::PositiveNumber);
  sp->add_option("--kernel", spec.kernel, "mexican_hat | heat | gaussian")
      ->check(CLI::IsMember({"mexican_hat", "heat", "gaussian"}));
  sp->add_option("--seed", spec.seed, "Seed for the token weights");

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train a model; writes metrics.tsv, checkpoint.json, report.json");
  t->add_option("--config", tr.config, "Run config (JSON)");
  t->add_option("--data", tr.data, "Dataset file (overrides data.path)");
  t->add_option("--out-dir", tr.out_dir, "Output directory")->required();
  t->add_option("--threads", tr.threads, "Worker threads for per-sample gradients")->check(CLI::PositiveNumber);

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
  e->add_option("--checkpoint", ev.checkpoint, "Checkpoint file")->required();
  e->add_option("--data", ev.data, "Dataset file (defaults to the checkpoint's data.path)");
  e->add_option("--config", ev.config, "Config that must match the checkpoint's hash");
  e->add_option("--split", ev.split, "all | train | valid | test (recomputed from the checkpoint config)")
      ->check(CLI::IsMember({"all", "train", "valid", "test"}));
  e->add_option("--threads", ev.threads, "Worker threads")->check(CLI::PositiveNumber);

  GradcheckArgs gc;
  auto* c = app.add_subcommand("gradcheck", "Finite-difference check of every parameter on a random 6-node graph");
  c->add_option("--config", gc.config, "Run config (JSON)");
  c->add_option("--seed", gc.seed, "Seed for graph and weights");
  c->add_option("--max-coords", gc.max_coords, "Coordinates probed per tensor (0 = all)");
  c->add_option("--tolerance", gc.tolerance, "Largest acceptable relative error");
  c->add_flag("--with-dropout", gc.with_dropout, "Keep dropout on (refused)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*g) return cmd_generate(gen);
    if (*sp) return cmd_spectrum(spec);
    if (*t) return cmd_train(tr);
    if (*e) return cmd_eval(ev);
    if (*c) return cmd_gradcheck(gc);
  } catch (const ConfigError& err) {
    std::cerr << "config error: " << err.what() << '\n';
    return kExitConfig;
  } catch (const DataError& err) {
    std::cerr << "data error: " << err.what() << '\n';
    return kExitData;
  } catch (const VocabularyError& err) {
    std::cerr << "data error: " << err.what() << '\n';
    return kExitData;
  } catch (const ContractError& err) {
    std::cerr << "data error: " << err.what() << '\n';
    return kExitData;
  } catch (const IoError& err) {
    std::cerr << "io error: " << err.what() << '\n';
    return kExitData;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << '\n';
    return 1;
  }
  return kExitOk;
}
