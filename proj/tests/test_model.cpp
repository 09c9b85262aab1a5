#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "spectok/data_io.hpp"
#include "spectok/grad_check.hpp"
#include "spectok/model.hpp"
#include "support.hpp"

using namespace spectok;
using namespace spectok::testing;

namespace {

ModelConfig small_config(Variant v = Variant::subformer_spec) {
  ModelConfig c;
  c.variant = v;
  c.mp_hidden = 6;
  c.d_model = 8;
  c.ffn_hidden = 10;
  c.n_layers = 2;
  c.n_heads = 2;
  c.dropout = 0.0;
  c.pe_dim = 3;
  c.signnet_hidden = 4;
  c.k_tree = 4;
  c.k_graph = 4;
  c.channels = 4;
  c.readout_hidden = 5;
  return c;
}

Linear identity_linear(std::size_t n) { return Linear{Tensor::identity(n), Tensor(Shape{n})}; }

void zero_all(ModelParams& p) {
  p.visit([](const std::string&, Tensor& t) { t.fill(0.0); }, true);
}

bool simple_spectrum(const Spectrum& s) {
  for (std::size_t i = 1; i < s.eigenvalues.size(); ++i)
    if (s.eigenvalues[i] - s.eigenvalues[i - 1] < 1e-4) return false;
  return true;
}

double max_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

}  // namespace

TEST(ModelConfig, Validation) {
  ModelConfig c = small_config();
  EXPECT_NO_THROW(c.validate());
  c.n_heads = 3;
  EXPECT_THROW(c.validate(), ConfigError);
  c = small_config();
  c.dropout = 1.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = small_config();
  c.mp_type = "gcn";
  EXPECT_THROW(c.validate(), ConfigError);
  c = small_config(Variant::graphtrans_spec);
  c.k_tree = 0;
  EXPECT_NO_THROW(c.validate());
  EXPECT_EQ(c.effective_k_tree(), 0u);
}

TEST(EmbedInputs, Lookups) {
  Tensor nodes = Tensor::matrix({{1, 2}, {3, 4}, {5, 6}});
  Tensor cliques = Tensor::matrix({{0, 0}, {0, 0}, {7, 8}, {9, 9}});
  Graph one = path_graph(1);
  one.node_attrs = {2};
  Tape tape;
  auto [x, z] = embed_inputs(tape, one, decompose(one), nodes, cliques);
  EXPECT_EQ(x.value(), Tensor::matrix({{5, 6}}));

  Graph ring = cycle_graph(6);
  const auto cg = decompose(ring);
  auto [x6, z6] = embed_inputs(tape, ring, cg, nodes, cliques);
  EXPECT_EQ(z6.value(), Tensor::matrix({{9, 9}}));  // ring code 3 → row 3

  Tensor zeros(Shape{4, 3});
  auto [xz, zz] = embed_inputs(tape, ring, cg, zeros, zeros);
  for (double v : xz.value().data()) EXPECT_EQ(v, 0.0);

  one.node_attrs = {3};
  EXPECT_THROW(embed_inputs(tape, one, decompose(one), nodes, cliques), VocabularyError);
}

TEST(Gine, K2HandExample) {
  GineLayer p{Tensor(Shape{1, 1}), Tensor(Shape{1}), identity_linear(1), identity_linear(1)};
  Tape tape;
  const Tensor out = gine_layer(tape, tape.constant(Tensor::matrix({{1}, {2}})), complete_graph(2), p).value();
  EXPECT_EQ(out, Tensor::matrix({{3}, {3}}));
}

TEST(Gine, IsolatedNodeAndZeroMlp) {
  GineLayer p{Tensor(Shape{1, 2}), Tensor::vector({0.5}), identity_linear(2), identity_linear(2)};
  Tape tape;
  const Tensor iso = gine_layer(tape, tape.constant(Tensor::matrix({{2, 4}})), path_graph(1), p).value();
  EXPECT_EQ(iso, Tensor::matrix({{3, 6}}));
  GineLayer zero{Tensor(Shape{1, 2}, 1.0), Tensor(Shape{1}), Linear{Tensor(Shape{2, 2}), Tensor(Shape{2})},
                 Linear{Tensor(Shape{2, 2}), Tensor(Shape{2})}};
  const Tensor z = gine_layer(tape, tape.constant(Tensor::matrix({{1, 2}, {3, 4}})), complete_graph(2), zero).value();
  for (double v : z.data()) EXPECT_EQ(v, 0.0);
}

TEST(Gine, EdgeEmbeddingEntersMessage) {
  // Node 0 receives relu(x1 + e) = relu(-3 + 5) = 2; node 1 receives relu(1 + 5) = 6.
  GineLayer p{Tensor::matrix({{0}, {5}}), Tensor(Shape{1}), identity_linear(1), identity_linear(1)};
  Graph g = complete_graph(2);
  g.edges[0].code = 1;
  Tape tape;
  EXPECT_EQ(gine_layer(tape, tape.constant(Tensor::matrix({{1}, {-3}})), g, p).value(), Tensor::matrix({{3}, {3}}));
}

TEST(Exchange, ExpandExamples) {
  ExchangeLayer ex{Tensor::identity(2), identity_linear(2), Tensor::identity(2), identity_linear(2)};
  Tape tape;
  const Tensor x = Tensor::matrix({{1, 2}, {3, 4}});
  const Tensor z = Tensor::matrix({{0.5, 1}, {2, 0.25}});
  EXPECT_EQ(expand_tree_to_graph(tape, tape.constant(x), tape.constant(z), Tensor::identity(2), ex).value(),
            Tensor::matrix({{1.5, 3}, {5, 4.25}}));
  EXPECT_EQ(expand_tree_to_graph(tape, tape.constant(x), tape.constant(Tensor(Shape{2, 2})), Tensor::identity(2), ex)
                .value(),
            x);
  ExchangeLayer zero{Tensor(Shape{2, 2}), Linear{Tensor(Shape{2, 2}), Tensor(Shape{2})}, Tensor(Shape{2, 2}),
                     Linear{Tensor(Shape{2, 2}), Tensor(Shape{2})}};
  EXPECT_EQ(expand_tree_to_graph(tape, tape.constant(x), tape.constant(z), Tensor::identity(2), zero).value(), x);
}

TEST(Exchange, CompressSumsCliqueRows) {
  ExchangeLayer ex{Tensor::identity(1), identity_linear(1), Tensor::identity(1), identity_linear(1)};
  Tape tape;
  const Tensor s = Tensor::matrix({{1, 1, 1}});
  const Tensor out = compress_graph_to_tree(tape, tape.constant(Tensor::matrix({{10}})),
                                            tape.constant(Tensor::matrix({{1}, {2}, {4}})), s, ex)
                         .value();
  EXPECT_EQ(out, Tensor::matrix({{17}}));
  const Tensor same = compress_graph_to_tree(tape, tape.constant(Tensor::matrix({{10}})),
                                             tape.constant(Tensor(Shape{3, 1})), s, ex)
                          .value();
  EXPECT_EQ(same, Tensor::matrix({{10}}));
}

TEST(Exchange, NegativeInputsUseLeakySlope) {
  ExchangeLayer ex{Tensor::identity(1), identity_linear(1), Tensor::identity(1), identity_linear(1)};
  Tape tape;
  const Tensor out = expand_tree_to_graph(tape, tape.constant(Tensor::matrix({{0}})),
                                          tape.constant(Tensor::matrix({{-2}})), Tensor::identity(1), ex)
                         .value();
  EXPECT_DOUBLE_EQ(out(0, 0), -2 * kLeakySlope);
}

TEST(Dpe, DegreeRowsAndClamp) {
  Tensor table(Shape{4, 1});
  for (std::size_t i = 0; i < 4; ++i) table(i, 0) = static_cast<double>(i);
  Tape tape;
  EXPECT_EQ(build_dpe(tape, {0}, table).value(), Tensor::matrix({{0}}));
  EXPECT_EQ(build_dpe(tape, {1, 2, 1}, table).value(), Tensor::matrix({{1}, {2}, {1}}));
  EXPECT_EQ(build_dpe(tape, {5}, table).value(), Tensor::matrix({{3}}));
}

TEST(Epe, SignNetIgnoresColumnSigns) {
  ModelConfig cfg = small_config();
  cfg.use_epe = true;
  cfg.epe_mode = EpeMode::signnet;
  Rng rng(3);
  ModelParams p = ModelParams::init(cfg, rng);
  const Graph g = random_molecule(9, rng);
  const Sample s = prepare_sample(g, cfg);
  Tape tape;
  const Tensor base =
      build_epe(tape, s.tree_spectrum, s.graph_spectrum, s.coarse.assignment, cfg.epe_mode, cfg.pe_dim, p).value();
  for (int trial = 0; trial < 20; ++trial) {
    Spectrum gs = s.graph_spectrum, ts = s.tree_spectrum;
    for (Spectrum* sp : {&gs, &ts})
      for (std::size_t c = 0; c < sp->dim(); ++c)
        if (rng.bernoulli(0.5))
          for (std::size_t r = 0; r < sp->dim(); ++r) sp->eigenvectors(r, c) = -sp->eigenvectors(r, c);
    EXPECT_EQ(build_epe(tape, ts, gs, s.coarse.assignment, cfg.epe_mode, cfg.pe_dim, p).value(), base);
  }
}

TEST(Epe, ZeroEigenvectorsGiveConstantRows) {
  ModelConfig cfg = small_config();
  cfg.epe_mode = EpeMode::signnet;
  Rng rng(4);
  ModelParams p = ModelParams::init(cfg, rng);
  Spectrum zero;
  zero.eigenvalues.assign(3, 0.0);
  zero.eigenvectors = Tensor(Shape{3, 3});
  Tape tape;
  const Tensor out = build_epe(tape, zero, zero, Tensor::identity(3), EpeMode::signnet, cfg.pe_dim, p).value();
  for (std::size_t r = 1; r < 3; ++r)
    for (std::size_t c = 0; c < out.cols(); ++c) EXPECT_EQ(out(r, c), out(0, c));
}

TEST(Epe, LinearIdentityConcatenatesEigenvectors) {
  ModelConfig cfg = small_config();
  cfg.pe_dim = 2;
  Rng rng(5);
  ModelParams p = ModelParams::init(cfg, rng);
  p.tree_pe_map = identity_linear(2);
  p.graph_pe_map = identity_linear(2);
  const Spectrum k2 = sym_eigh(normalized_laplacian(complete_graph(2)));
  const Tensor s = Tensor::matrix({{1, 0}, {0, 1}});
  Tape tape;
  const Tensor out = build_epe(tape, k2, k2, s, EpeMode::linear, 2, p).value();
  ASSERT_EQ(out.shape(), (Shape{2, 4}));
  for (std::size_t r = 0; r < 2; ++r)
    for (std::size_t c = 0; c < 2; ++c) {
      EXPECT_EQ(out(r, c), k2.eigenvectors(r, c));
      EXPECT_EQ(out(r, c + 2), k2.eigenvectors(r, c));
    }
  EXPECT_NEAR(std::abs(out(0, 0)), 1 / std::sqrt(2.0), 1e-12);
}

TEST(AssembleTokens, ShapesAndZeroInputs) {
  ModelConfig cfg = small_config();
  Rng rng(6);
  ModelParams p = ModelParams::init(cfg, rng);
  Tape tape;
  const Var z0 = tape.constant(Tensor::vector({1, 2, 3, 4, 5, 6, 7, 8}));
  const Var z = tape.constant(Tensor(Shape{1, cfg.mp_hidden}));
  const Var dpe = tape.constant(Tensor(Shape{1, cfg.pe_dim}));
  const Tensor two = assemble_tokens(tape, z, dpe, std::nullopt, z0, p).value();
  ASSERT_EQ(two.shape(), (Shape{2, 8}));
  for (std::size_t c = 0; c < 8; ++c) {
    EXPECT_EQ(two(0, c), static_cast<double>(c + 1));
    EXPECT_EQ(two(1, c), p.dpe_merge.bias[c]);
  }
  for (double& b : p.dpe_merge.bias.data()) b = 0.25;
  const Var epe = tape.constant(Tensor(Shape{1, 2 * cfg.pe_dim}));
  const Tensor with = assemble_tokens(tape, z, dpe, epe, z0, p).value();
  for (std::size_t c = 0; c < 8; ++c) {
    double expect = p.epe_merge.bias[c];
    for (std::size_t k = 0; k < 8; ++k) expect += 0.25 * p.epe_merge.weight(k, c);
    EXPECT_NEAR(with(1, c), expect, 1e-15);
  }
  EXPECT_THROW(assemble_tokens(tape, z, dpe, std::nullopt, tape.constant(Tensor(Shape{3})), p), DimensionError);
}

TEST(Encoder, SingleTokenAttentionIsValueProjection) {
  ModelConfig cfg = small_config();
  Rng rng(7);
  ModelParams p = ModelParams::init(cfg, rng);
  EncoderLayer& layer = p.encoder[0];
  Tape tape;
  Tensor x(Shape{1, 8});
  for (double& v : x.data()) v = rng.normal();
  const Var xv = tape.constant(x);
  const Tensor att = self_attention(tape, xv, layer, cfg.n_heads).value();
  const Var qkv = layer.qkv(tape, xv);
  const Tensor expect = layer.attn_out(tape, slice(qkv, 1, 16, 8)).value();
  for (std::size_t c = 0; c < 8; ++c) EXPECT_NEAR(att(0, c), expect(0, c), 1e-14);
}

TEST(Encoder, ZeroWeightsAreIdentityAndTwinsStayTwins) {
  ModelConfig cfg = small_config();
  Rng rng(8);
  ModelParams p = ModelParams::init(cfg, rng);
  Tensor x(Shape{3, 8});
  for (double& v : x.data()) v = rng.normal();
  for (std::size_t c = 0; c < 8; ++c) x(2, c) = x(1, c);
  Tape tape;
  const Tensor twins = transformer_encoder(tape, tape.constant(x), p.encoder, cfg, false, rng).value();
  for (std::size_t c = 0; c < 8; ++c) EXPECT_EQ(twins(1, c), twins(2, c));

  for (EncoderLayer& e : p.encoder)
    for (Linear* l : {&e.qkv, &e.attn_out, &e.ffn_in, &e.ffn_out}) {
      l->weight.fill(0.0);
      l->bias.fill(0.0);
    }
  EXPECT_EQ(transformer_encoder(tape, tape.constant(x), p.encoder, cfg, false, rng).value(), x);
}

TEST(Readout, ZeroMlpGivesBias) {
  ModelConfig cfg = small_config();
  cfg.n_tasks = 3;
  Rng rng(9);
  ModelParams p = ModelParams::init(cfg, rng);
  for (Linear* l : {&p.readout_in, &p.readout_mid, &p.readout_out}) l->weight.fill(0.0);
  p.readout_out.bias = Tensor::vector({0.5, -1, 2});
  Tape tape;
  Tensor tokens(Shape{4, 8}, 3.0);
  EXPECT_EQ(readout(tape, tape.constant(tokens), p, Activation::relu).value(), Tensor::vector({0.5, -1, 2}));
}

TEST(Forward, AllZeroParametersYieldReadoutBias) {
  for (Variant v : {Variant::subformer_spec, Variant::graphtrans_spec}) {
    ModelConfig cfg = small_config(v);
    cfg.n_tasks = 2;
    Rng rng(10);
    ModelParams p = ModelParams::init(cfg, rng);
    zero_all(p);
    p.readout_out.bias = Tensor::vector({1.25, -0.5});
    const Sample s = prepare_sample(random_molecule(7, rng), cfg);
    EXPECT_EQ(predict(s, cfg, p), (std::vector<double>{1.25, -0.5}));
  }
}

TEST(Forward, TokenCounts) {
  Rng rng(11);
  const Graph g = random_molecule(10, rng);
  const Sample sub = prepare_sample(g, small_config());
  EXPECT_EQ(sub.token_count(), sub.coarse.m + 1);
  const Sample gt = prepare_sample(g, small_config(Variant::graphtrans_spec));
  EXPECT_EQ(gt.token_count(), g.n + 1);
  EXPECT_EQ(gt.spectrum.values.size(), 4u);
  EXPECT_EQ(sub.spectrum.values.size(), 8u);
  EXPECT_EQ(prepare_sample(cycle_graph(6), small_config()).token_count(), 2u);
}

TEST(Forward, DeterministicAndFiniteMultilabel) {
  ModelConfig cfg = small_config();
  cfg.n_tasks = 12;
  cfg.task_kind = TaskKind::multilabel;
  Rng a(12), b(12);
  ModelParams pa = ModelParams::init(cfg, a), pb = ModelParams::init(cfg, b);
  const Sample s = prepare_sample(random_molecule(12, a), cfg);
  const auto out = predict(s, cfg, pa);
  ASSERT_EQ(out.size(), 12u);
  for (double v : out) EXPECT_TRUE(std::isfinite(v));
  EXPECT_EQ(out, predict(s, cfg, pb));
}

TEST(Forward, GradientReachesSpectralToken) {
  ModelConfig cfg = small_config();
  Rng rng(13);
  ModelParams p = ModelParams::init(cfg, rng);
  const Sample s = prepare_sample(random_molecule(8, rng), cfg);
  p.zero_grad();
  Tape tape;
  tape.backward(sum(forward(tape, s, cfg, p, false, rng)));
  for (Tensor* t : {&p.spectral.thetas, &p.spectral.logit_head, &p.spectral.value_head}) {
    double norm = 0.0;
    for (double g : t->grad()) norm += std::abs(g);
    EXPECT_GT(norm, 0.0);
  }
}

TEST(Forward, FrozenTokenIsNotTrained) {
  ModelConfig cfg = small_config();
  cfg.spectral_token = TokenMode::frozen_random;
  Rng rng(14);
  ModelParams p = ModelParams::init(cfg, rng);
  EXPECT_EQ(p.spectral.thetas.size(), 0u);
  for (const auto& [name, t] : p.named()) EXPECT_NE(name, "spectral.frozen_token");
  bool found = false;
  for (const auto& [name, t] : p.named(true)) found = found || name == "spectral.frozen_token";
  EXPECT_TRUE(found);
}

TEST(Forward, PermutationInvariant) {
  Rng rng(15);
  for (Variant v : {Variant::subformer_spec, Variant::graphtrans_spec}) {
    for (EpeMode mode : {EpeMode::linear, EpeMode::signnet}) {
      ModelConfig cfg = small_config(v);
      cfg.use_epe = mode == EpeMode::signnet;
      cfg.epe_mode = mode;
      ModelParams p = ModelParams::init(cfg, rng);
      for (int trial = 0; trial < 15; ++trial) {
        const Graph g = random_molecule(4 + rng.below(14), rng);
        const Sample s = prepare_sample(g, cfg);
        // Sign-invariant EPE is still basis-dependent under repeated eigenvalues.
        if (cfg.use_epe && !(simple_spectrum(s.graph_spectrum) && simple_spectrum(s.tree_spectrum))) continue;
        const auto base = predict(s, cfg, p);
        const auto perm = random_permutation(g.n, rng);
        EXPECT_LT(max_diff(base, predict(prepare_sample(permute_nodes(g, perm), cfg), cfg, p)), 1e-9);
      }
    }
  }
}

TEST(Forward, SignNetPredictionsIgnoreEigenvectorSigns) {
  ModelConfig cfg = small_config();
  cfg.epe_mode = EpeMode::signnet;
  Rng rng(16);
  ModelParams p = ModelParams::init(cfg, rng);
  const Sample s = prepare_sample(random_molecule(11, rng), cfg);
  const auto base = predict(s, cfg, p);
  for (int trial = 0; trial < 10; ++trial) {
    Sample flipped = s;
    for (Spectrum* sp : {&flipped.graph_spectrum, &flipped.tree_spectrum})
      for (std::size_t c = 0; c < sp->dim(); ++c)
        if (rng.bernoulli(0.5))
          for (std::size_t r = 0; r < sp->dim(); ++r) sp->eigenvectors(r, c) = -sp->eigenvectors(r, c);
    EXPECT_EQ(predict(flipped, cfg, p), base);
  }
}

TEST(Forward, EndToEndGradCheck) {
  for (Variant v : {Variant::subformer_spec, Variant::graphtrans_spec}) {
    for (EpeMode mode : {EpeMode::linear, EpeMode::signnet}) {
      ModelConfig cfg = small_config(v);
      cfg.epe_mode = mode;
      cfg.activation = mode == EpeMode::linear ? Activation::relu : Activation::gelu;
      Rng rng(17);
      ModelParams p = ModelParams::init(cfg, rng);
      const Sample s = prepare_sample(random_molecule(6, rng), cfg);
      const ScalarFn f = [&](Tape& tape) {
        Rng unused(0);
        return sum(forward(tape, s, cfg, p, false, unused));
      };
      const auto report = grad_check_params(f, p.named(), 1e-5, 0, rng);
      for (const auto& e : report) EXPECT_LT(e.max_rel_error, 1e-4) << e.name;
    }
  }
}

TEST(Forward, DropoutOnlyInTraining) {
  ModelConfig cfg = small_config();
  cfg.dropout = 0.5;
  Rng rng(18);
  ModelParams p = ModelParams::init(cfg, rng);
  const Sample s = prepare_sample(random_molecule(8, rng), cfg);
  const auto eval = predict(s, cfg, p);
  Tape tape;
  Rng a(1);
  const Tensor train = forward(tape, s, cfg, p, true, a).value();
  EXPECT_NE(train.storage(), eval);
  EXPECT_EQ(predict(s, cfg, p), eval);
}
