#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "spectok/autodiff.hpp"
#include "spectok/coarse_grain.hpp"
#include "spectok/eigen.hpp"
#include "spectok/errors.hpp"
#include "spectok/graph.hpp"
#include "spectok/random.hpp"
#include "spectok/spectral_token.hpp"
#include "spectok/tensor.hpp"

namespace spectok {

enum class Variant { subformer_spec, graphtrans_spec };
enum class Activation { relu, gelu };
enum class EpeMode { linear, signnet };
enum class TaskKind { regression, multilabel };
/// `frozen_random` replaces z₀ with a fixed random vector (ablation).
enum class TokenMode { learned, frozen_random };

struct ModelConfig {
  Variant variant = Variant::subformer_spec;
  std::size_t mp_layers = 2;
  std::size_t mp_hidden = 64;
  std::string mp_type = "gine";
  double mp_dropout = 0.0;
  std::size_t d_model = 128;
  std::size_t ffn_hidden = 128;
  std::size_t n_layers = 3;
  std::size_t n_heads = 8;
  double dropout = 0.1;
  Activation activation = Activation::relu;
  bool use_epe = true;
  EpeMode epe_mode = EpeMode::linear;
  std::size_t pe_dim = 10;
  std::size_t signnet_hidden = 8;
  std::size_t max_degree = 16;
  std::size_t k_tree = 16;
  std::size_t k_graph = 16;
  std::size_t channels = 16;
  KernelKind kernel = KernelKind::mexican_hat;
  TokenMode spectral_token = TokenMode::learned;
  std::size_t readout_hidden = 192;
  Activation readout_activation = Activation::relu;
  std::size_t n_tasks = 1;
  TaskKind task_kind = TaskKind::regression;
  std::size_t node_vocab = 32;
  std::size_t edge_vocab = 4;
  std::size_t clique_vocab = 16;

  /// Tree eigenvalues retained in the spectrum vector (none without coarse-graining).
  std::size_t effective_k_tree() const { return variant == Variant::graphtrans_spec ? 0 : k_tree; }

  void validate() const {
    auto positive = [](std::size_t v, const char* key) {
      if (v == 0) throw ConfigError(std::string("model.") + key + ": must be >= 1");
    };
    positive(mp_hidden, "mp_hidden");
    positive(d_model, "d_model");
    positive(ffn_hidden, "ffn_hidden");
    positive(n_heads, "n_heads");
    positive(pe_dim, "pe_dim");
    positive(signnet_hidden, "signnet_hidden");
    positive(channels, "t");
    positive(readout_hidden, "readout_hidden");
    positive(n_tasks, "n_tasks");
    positive(node_vocab, "node_vocab");
    positive(edge_vocab, "edge_vocab");
    positive(clique_vocab, "clique_vocab");
    positive(k_graph, "k_graph");
    if (variant == Variant::subformer_spec) positive(k_tree, "k_tree");
    if (d_model % n_heads != 0) throw ConfigError("model.n_heads: d_model must be divisible by n_heads");
    if (mp_type != "gine") throw ConfigError("model.mp_type: only 'gine' is supported");
    if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("model.dropout: must be in [0, 1)");
    if (mp_dropout < 0.0 || mp_dropout >= 1.0) throw ConfigError("model.mp_dropout: must be in [0, 1)");
  }
};

inline Var activate(Var x, Activation a) { return a == Activation::relu ? relu(x) : gelu(x); }

/// Fully-connected layer, weight in×out.
struct Linear {
  Tensor weight;
  Tensor bias;

  static Linear init(std::size_t in, std::size_t out, Rng& rng) {
    Linear l{Tensor(Shape{in, out}), Tensor(Shape{out})};
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    for (double& v : l.weight.data()) v = rng.uniform(-bound, bound);
    return l;
  }

  Var operator()(Tape& tape, Var x) { return linear(x, tape.param(weight), tape.param(bias)); }

  template <class F>
  void visit(const std::string& prefix, F&& f) {
    f(prefix + ".weight", weight);
    f(prefix + ".bias", bias);
  }
};

struct GineLayer {
  Tensor edge_table;
  Tensor eps;
  Linear mlp_in;
  Linear mlp_out;
};

/// Tree↔graph exchange weights for one message-passing layer.
struct ExchangeLayer {
  Tensor expand_weight;
  Linear expand_ffl;
  Tensor compress_weight;
  Linear compress_ffl;
};

/// Φ(V) = ρ(φ(V) + φ(−V)) with φ applied to every eigenvector entry.
struct SignNet {
  Linear phi_in;
  Linear phi_out;
  Linear rho;
};

struct EncoderLayer {
  Tensor attn_norm_gain, attn_norm_shift;
  Linear qkv;
  Linear attn_out;
  Tensor ffn_norm_gain, ffn_norm_shift;
  Linear ffn_in;
  Linear ffn_out;
};

struct ModelParams {
  Tensor node_table;
  Tensor clique_table;
  std::vector<GineLayer> gine;
  std::vector<ExchangeLayer> exchange;
  Tensor degree_table;
  Linear dpe_merge;
  Linear tree_pe_map, graph_pe_map;
  SignNet tree_signnet, graph_signnet;
  Linear epe_merge;
  SpectralTokenParams spectral;
  Tensor frozen_token;
  std::vector<EncoderLayer> encoder;
  Linear readout_in, readout_mid, readout_out;

  static ModelParams init(const ModelConfig& cfg, Rng& rng) {
    cfg.validate();
    ModelParams p;
    const std::size_t h = cfg.mp_hidden, d = cfg.d_model, pe = cfg.pe_dim;
    auto normal_table = [&](std::size_t rows, std::size_t cols) {
      Tensor t(Shape{rows, cols});
      for (double& v : t.data()) v = rng.normal();
      return t;
    };
    p.node_table = normal_table(cfg.node_vocab, h);
    if (cfg.variant == Variant::subformer_spec) p.clique_table = normal_table(cfg.clique_vocab, h);
    for (std::size_t l = 0; l < cfg.mp_layers; ++l) {
      GineLayer g;
      g.edge_table = normal_table(cfg.edge_vocab, h);
      g.eps = Tensor(Shape{1});
      g.mlp_in = Linear::init(h, h, rng);
      g.mlp_out = Linear::init(h, h, rng);
      p.gine.push_back(std::move(g));
      if (cfg.variant == Variant::subformer_spec) {
        ExchangeLayer x;
        const double bound = 1.0 / std::sqrt(static_cast<double>(h));
        x.expand_weight = Tensor(Shape{h, h});
        for (double& v : x.expand_weight.data()) v = rng.uniform(-bound, bound);
        x.expand_ffl = Linear::init(h, h, rng);
        x.compress_weight = Tensor(Shape{h, h});
        for (double& v : x.compress_weight.data()) v = rng.uniform(-bound, bound);
        x.compress_ffl = Linear::init(h, h, rng);
        p.exchange.push_back(std::move(x));
      }
    }
    p.degree_table = normal_table(cfg.max_degree + 1, pe);
    p.dpe_merge = Linear::init(h + pe, d, rng);
    if (cfg.use_epe) {
      if (cfg.epe_mode == EpeMode::linear) {
        p.tree_pe_map = Linear::init(pe, pe, rng);
        p.graph_pe_map = Linear::init(pe, pe, rng);
      } else {
        for (SignNet* s : {&p.tree_signnet, &p.graph_signnet}) {
          s->phi_in = Linear::init(1, cfg.signnet_hidden, rng);
          s->phi_out = Linear::init(cfg.signnet_hidden, cfg.signnet_hidden, rng);
          s->rho = Linear::init(pe * cfg.signnet_hidden, pe, rng);
        }
      }
      p.epe_merge = Linear::init(d + 2 * pe, d, rng);
    }
    if (cfg.spectral_token == TokenMode::learned) {
      p.spectral = SpectralTokenParams::init(cfg.channels, d, cfg.kernel, rng);
    } else {
      p.frozen_token = Tensor(Shape{d});
      for (double& v : p.frozen_token.data()) v = rng.normal();
    }
    for (std::size_t l = 0; l < cfg.n_layers; ++l) {
      EncoderLayer e;
      e.attn_norm_gain = Tensor(Shape{d}, 1.0);
      e.attn_norm_shift = Tensor(Shape{d});
      e.qkv = Linear::init(d, 3 * d, rng);
      e.attn_out = Linear::init(d, d, rng);
      e.ffn_norm_gain = Tensor(Shape{d}, 1.0);
      e.ffn_norm_shift = Tensor(Shape{d});
      e.ffn_in = Linear::init(d, cfg.ffn_hidden, rng);
      e.ffn_out = Linear::init(cfg.ffn_hidden, d, rng);
      p.encoder.push_back(std::move(e));
    }
    p.readout_in = Linear::init(d, cfg.readout_hidden, rng);
    p.readout_mid = Linear::init(cfg.readout_hidden, cfg.readout_hidden, rng);
    p.readout_out = Linear::init(cfg.readout_hidden, cfg.n_tasks, rng);
    return p;
  }

  /// Calls f(name, tensor) for every allocated tensor in a fixed order.
  /// Frozen tensors (the ablation token) are included only on request.
  template <class F>
  void visit(F&& f, bool include_frozen = false) {
    auto maybe = [&](const std::string& name, Tensor& t) {
      if (t.size() > 0) f(name, t);
    };
    auto lin = [&](const std::string& name, Linear& l) {
      maybe(name + ".weight", l.weight);
      maybe(name + ".bias", l.bias);
    };
    maybe("node_table", node_table);
    maybe("clique_table", clique_table);
    for (std::size_t l = 0; l < gine.size(); ++l) {
      const std::string pre = "mp." + std::to_string(l);
      maybe(pre + ".edge_table", gine[l].edge_table);
      maybe(pre + ".eps", gine[l].eps);
      lin(pre + ".mlp_in", gine[l].mlp_in);
      lin(pre + ".mlp_out", gine[l].mlp_out);
    }
    for (std::size_t l = 0; l < exchange.size(); ++l) {
      const std::string pre = "exchange." + std::to_string(l);
      maybe(pre + ".expand_weight", exchange[l].expand_weight);
      lin(pre + ".expand_ffl", exchange[l].expand_ffl);
      maybe(pre + ".compress_weight", exchange[l].compress_weight);
      lin(pre + ".compress_ffl", exchange[l].compress_ffl);
    }
    maybe("degree_table", degree_table);
    lin("dpe_merge", dpe_merge);
    lin("epe.tree_map", tree_pe_map);
    lin("epe.graph_map", graph_pe_map);
    for (auto [name, s] : {std::pair<const char*, SignNet*>{"epe.tree_signnet", &tree_signnet},
                           std::pair<const char*, SignNet*>{"epe.graph_signnet", &graph_signnet}}) {
      lin(std::string(name) + ".phi_in", s->phi_in);
      lin(std::string(name) + ".phi_out", s->phi_out);
      lin(std::string(name) + ".rho", s->rho);
    }
    lin("epe_merge", epe_merge);
    maybe("spectral.thetas", spectral.thetas);
    maybe("spectral.logit_head", spectral.logit_head);
    maybe("spectral.value_head", spectral.value_head);
    if (include_frozen) maybe("spectral.frozen_token", frozen_token);
    for (std::size_t l = 0; l < encoder.size(); ++l) {
      const std::string pre = "encoder." + std::to_string(l);
      EncoderLayer& e = encoder[l];
      maybe(pre + ".attn_norm_gain", e.attn_norm_gain);
      maybe(pre + ".attn_norm_shift", e.attn_norm_shift);
      lin(pre + ".qkv", e.qkv);
      lin(pre + ".attn_out", e.attn_out);
      maybe(pre + ".ffn_norm_gain", e.ffn_norm_gain);
      maybe(pre + ".ffn_norm_shift", e.ffn_norm_shift);
      lin(pre + ".ffn_in", e.ffn_in);
      lin(pre + ".ffn_out", e.ffn_out);
    }
    lin("readout.0", readout_in);
    lin("readout.1", readout_mid);
    lin("readout.2", readout_out);
  }

  std::vector<std::pair<std::string, Tensor*>> named(bool include_frozen = false) {
    std::vector<std::pair<std::string, Tensor*>> out;
    visit([&](const std::string& n, Tensor& t) { out.emplace_back(n, &t); }, include_frozen);
    return out;
  }

  void zero_grad() {
    visit([](const std::string&, Tensor& t) {
      t.ensure_grad();
      t.zero_grad();
    });
  }
};

/// Per-graph inputs that do not depend on parameters: the coarse-grained tree
/// (the graph itself for graphtrans_spec), both spectra, and tree degrees.
struct Sample {
  Graph graph;
  CoarseGraph coarse;
  Spectrum graph_spectrum;
  Spectrum tree_spectrum;
  SpectrumVector spectrum;
  std::vector<std::size_t> token_degrees;

  std::size_t token_count() const { return coarse.m + 1; }
};

/// Identity coarse-graining: every node its own clique, tree = graph.
inline CoarseGraph identity_coarse_graph(const Graph& g) {
  CoarseGraph cg;
  cg.m = g.n;
  for (std::size_t i = 0; i < g.n; ++i) cg.cliques.push_back({i});
  cg.clique_attrs = g.node_attrs;
  for (const Edge& e : g.edges) cg.tree_edges.emplace_back(e.u, e.v);
  cg.assignment = Tensor::identity(g.n);
  return cg;
}

inline Sample prepare_sample(const Graph& g, const ModelConfig& cfg) {
  Sample s;
  s.graph = g;
  s.graph_spectrum = sym_eigh(normalized_laplacian(g));
  if (cfg.variant == Variant::subformer_spec) {
    s.coarse = decompose(g);
    s.tree_spectrum = sym_eigh(coarse_laplacian(s.coarse));
  } else {
    s.coarse = identity_coarse_graph(g);
    s.tree_spectrum = s.graph_spectrum;
  }
  s.spectrum = build_spectrum_vector(s.tree_spectrum, s.graph_spectrum, cfg.effective_k_tree(), cfg.k_graph);
  s.token_degrees = degrees(s.coarse.tree_graph());
  return s;
}

// ---------------------------------------------------------------------------
// Stages
// ---------------------------------------------------------------------------

/// Node and clique embedding lookups. Clique codes past the table clamp to its
/// last row; node codes must fit.
inline std::pair<Var, Var> embed_inputs(Tape& tape, const Graph& g, const CoarseGraph& cg, Tensor& node_table,
                                        Tensor& clique_table) {
  std::vector<std::size_t> nodes, cliques;
  for (int c : g.node_attrs) {
    if (c < 0 || static_cast<std::size_t>(c) >= node_table.dim(0)) {
      throw VocabularyError("node code " + std::to_string(c) + " outside vocabulary of " +
                            std::to_string(node_table.dim(0)));
    }
    nodes.push_back(static_cast<std::size_t>(c));
  }
  const std::size_t top = clique_table.dim(0) - 1;
  for (int c : cg.clique_attrs) cliques.push_back(std::min(static_cast<std::size_t>(std::max(c, 0)), top));
  return {gather_rows(tape.param(node_table), std::move(nodes)),
          gather_rows(tape.param(clique_table), std::move(cliques))};
}

/// X'ᵢ = MLP((1+ε)·Xᵢ + Σ_{j∈N(i)} relu(Xⱼ + e_ij)), MLP = Linear-ReLU-Linear.
inline Var gine_layer(Tape& tape, Var x, const Graph& g, GineLayer& p) {
  const std::size_t n = x.value().dim(0);
  Var combined = add(x, scale_by(x, tape.param(p.eps)));
  if (!g.edges.empty()) {
    std::vector<std::size_t> src, dst, codes;
    for (const Edge& e : g.edges) {
      src.push_back(e.u);
      dst.push_back(e.v);
      src.push_back(e.v);
      dst.push_back(e.u);
      codes.push_back(static_cast<std::size_t>(e.code < 0 ? p.edge_table.dim(0) : e.code));
      codes.push_back(codes.back());
    }
    const Var messages = relu(add(gather_rows(x, std::move(src)), gather_rows(tape.param(p.edge_table), std::move(codes))));
    combined = add(combined, scatter_add_rows(messages, std::move(dst), n));
  }
  return p.mlp_out(tape, relu(p.mlp_in(tape, combined)));
}

/// X' + FFL(Sᵀ·Z·W₂), FFL = LeakyReLU(Linear).
inline Var expand_tree_to_graph(Tape& tape, Var x, Var z, const Tensor& assignment, ExchangeLayer& p) {
  const Var st = transpose(tape.constant(assignment));
  const Var lifted = matmul(matmul(st, z), tape.param(p.expand_weight));
  return add(x, leaky_relu(p.expand_ffl(tape, lifted)));
}

/// Z + FFL(S·X_next·W₃).
inline Var compress_graph_to_tree(Tape& tape, Var z, Var x_next, const Tensor& assignment, ExchangeLayer& p) {
  const Var pooled = matmul(matmul(tape.constant(assignment), x_next), tape.param(p.compress_weight));
  return add(z, leaky_relu(p.compress_ffl(tape, pooled)));
}

/// Degree embedding per token; degrees above the table clamp to its last row.
inline Var build_dpe(Tape& tape, const std::vector<std::size_t>& token_degrees, Tensor& degree_table) {
  const std::size_t top = degree_table.dim(0) - 1;
  std::vector<std::size_t> idx;
  for (std::size_t d : token_degrees) idx.push_back(std::min(d, top));
  return gather_rows(tape.param(degree_table), std::move(idx));
}

/// First `cols` eigenvector columns (smallest eigenvalues), zero-padded.
inline Tensor leading_eigenvectors(const Spectrum& s, std::size_t cols) {
  const std::size_t n = s.dim();
  Tensor out(Shape{n, cols});
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < std::min(cols, n); ++c) out(r, c) = s.eigenvectors(r, c);
  return out;
}

inline Var apply_signnet(Tape& tape, Var v, SignNet& net) {
  const std::size_t rows = v.value().dim(0), cols = v.value().dim(1);
  const Var entries = reshape(v, Shape{rows * cols, 1});
  auto phi = [&](Var e) { return net.phi_out(tape, relu(net.phi_in(tape, e))); };
  const Var even = add(phi(entries), phi(scale(entries, -1.0)));
  const std::size_t hidden = even.value().dim(1);
  return net.rho(tape, reshape(even, Shape{rows, cols * hidden}));
}

/// U = [Φ₁(U_T), Φ₂(S·U_G)], each branch pe_dim wide.
inline Var build_epe(Tape& tape, const Spectrum& tree, const Spectrum& graph, const Tensor& assignment,
                     EpeMode mode, std::size_t pe_dim, ModelParams& p) {
  const Tensor ut = leading_eigenvectors(tree, pe_dim);
  const Tensor ug = leading_eigenvectors(graph, pe_dim);
  const Var tree_in = tape.constant(ut);
  const Var graph_in = matmul(tape.constant(assignment), tape.constant(ug));
  if (mode == EpeMode::linear) {
    return concat({p.tree_pe_map(tape, tree_in), p.graph_pe_map(tape, graph_in)}, 1);
  }
  return concat({apply_signnet(tape, tree_in, p.tree_signnet), apply_signnet(tape, graph_in, p.graph_signnet)}, 1);
}

/// Z⁰ = Linear([Linear([Z, D_T]), U]) (second merge only with EPE), with the
/// spectral token prepended as row 0.
inline Var assemble_tokens(Tape& tape, Var z, Var dpe, std::optional<Var> epe, Var z0, ModelParams& p) {
  Var tokens = p.dpe_merge(tape, concat({z, dpe}, 1));
  if (epe) tokens = p.epe_merge(tape, concat({tokens, *epe}, 1));
  const std::size_t d = z0.value().size();
  if (tokens.value().dim(1) != d) throw DimensionError("assemble_tokens: spectral token width differs from d_model");
  return concat({reshape(z0, Shape{1, d}), tokens}, 0);
}

/// Multi-head self-attention over all tokens, no masking.
inline Var self_attention(Tape& tape, Var x, EncoderLayer& layer, std::size_t heads) {
  const std::size_t d = x.value().dim(1), hd = d / heads;
  const Var qkv = layer.qkv(tape, x);
  const double scale_factor = 1.0 / std::sqrt(static_cast<double>(hd));
  std::vector<Var> outs;
  for (std::size_t h = 0; h < heads; ++h) {
    const Var q = slice(qkv, 1, h * hd, hd);
    const Var k = slice(qkv, 1, d + h * hd, hd);
    const Var v = slice(qkv, 1, 2 * d + h * hd, hd);
    const Var att = softmax(scale(matmul(q, transpose(k)), scale_factor), 1);
    outs.push_back(matmul(att, v));
  }
  return layer.attn_out(tape, heads == 1 ? outs.front() : concat(outs, 1));
}

/// Pre-norm encoder: x += MHA(LN(x)); x += FFN(LN(x)) per layer.
inline Var transformer_encoder(Tape& tape, Var tokens, std::vector<EncoderLayer>& layers, const ModelConfig& cfg,
                               bool train, Rng& rng) {
  Var x = tokens;
  for (EncoderLayer& layer : layers) {
    const Var normed = layer_norm(x, tape.param(layer.attn_norm_gain), tape.param(layer.attn_norm_shift));
    x = add(x, dropout(self_attention(tape, normed, layer, cfg.n_heads), cfg.dropout, train, rng));
    const Var normed2 = layer_norm(x, tape.param(layer.ffn_norm_gain), tape.param(layer.ffn_norm_shift));
    const Var ffn = layer.ffn_out(tape, activate(layer.ffn_in(tape, normed2), cfg.activation));
    x = add(x, dropout(ffn, cfg.dropout, train, rng));
  }
  return x;
}

/// Three-layer MLP on token 0; shape [n_tasks].
inline Var readout(Tape& tape, Var tokens, ModelParams& p, Activation act) {
  const Var cls = slice(tokens, 0, 0, 1);
  const Var h1 = activate(p.readout_in(tape, cls), act);
  const Var h2 = activate(p.readout_mid(tape, h1), act);
  const Var out = p.readout_out(tape, h2);
  return reshape(out, Shape{out.value().dim(1)});
}

/// Spectral token z₀ (or the frozen ablation vector).
inline Var spectral_token(Tape& tape, const Sample& s, const ModelConfig& cfg, ModelParams& p) {
  if (cfg.spectral_token == TokenMode::frozen_random) return tape.constant(p.frozen_token);
  return init_spectral_token(tape, s.spectrum, p.spectral);
}

/// Encoder output (token_count × d_model) before the readout.
inline Var encode(Tape& tape, const Sample& s, const ModelConfig& cfg, ModelParams& p, bool train, Rng& rng) {
  Var x, z;
  if (cfg.variant == Variant::subformer_spec) {
    std::tie(x, z) = embed_inputs(tape, s.graph, s.coarse, p.node_table, p.clique_table);
    for (std::size_t l = 0; l < cfg.mp_layers; ++l) {
      const Var xp = dropout(relu(gine_layer(tape, x, s.graph, p.gine[l])), cfg.mp_dropout, train, rng);
      x = expand_tree_to_graph(tape, xp, z, s.coarse.assignment, p.exchange[l]);
      z = compress_graph_to_tree(tape, z, x, s.coarse.assignment, p.exchange[l]);
    }
  } else {
    std::vector<std::size_t> nodes;
    for (int c : s.graph.node_attrs) {
      if (c < 0 || static_cast<std::size_t>(c) >= p.node_table.dim(0)) {
        throw VocabularyError("node code " + std::to_string(c) + " outside vocabulary of " +
                              std::to_string(p.node_table.dim(0)));
      }
      nodes.push_back(static_cast<std::size_t>(c));
    }
    x = gather_rows(tape.param(p.node_table), std::move(nodes));
    for (std::size_t l = 0; l < cfg.mp_layers; ++l) {
      x = dropout(relu(gine_layer(tape, x, s.graph, p.gine[l])), cfg.mp_dropout, train, rng);
    }
    z = x;
  }
  const Var dpe = build_dpe(tape, s.token_degrees, p.degree_table);
  std::optional<Var> epe;
  if (cfg.use_epe) {
    epe = build_epe(tape, s.tree_spectrum, s.graph_spectrum, s.coarse.assignment, cfg.epe_mode, cfg.pe_dim, p);
  }
  const Var z0 = spectral_token(tape, s, cfg, p);
  const Var tokens = assemble_tokens(tape, z, dpe, epe, z0, p);
  return transformer_encoder(tape, tokens, p.encoder, cfg, train, rng);
}

/// End-to-end prediction, shape [n_tasks].
inline Var forward(Tape& tape, const Sample& s, const ModelConfig& cfg, ModelParams& p, bool train, Rng& rng) {
  return readout(tape, encode(tape, s, cfg, p, train, rng), p, cfg.readout_activation);
}

/// Inference-mode prediction (dropout off).
inline std::vector<double> predict(const Sample& s, const ModelConfig& cfg, ModelParams& p) {
  Tape tape;
  Rng rng(0);
  const Var out = forward(tape, s, cfg, p, false, rng);
  return out.value().storage();
}

}  // namespace spectok
