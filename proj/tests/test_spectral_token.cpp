#include <gtest/gtest.h>

#include <boost/math/constants/constants.hpp>
#include <boost/multiprecision/cpp_bin_float.hpp>
#include <cmath>
#include <numbers>
#include <vector>

#include "spectok/grad_check.hpp"
#include "spectok/spectral_token.hpp"

using namespace spectok;
using HighPrecision = boost::multiprecision::cpp_bin_float_50;

namespace {

double mexican_hat_oracle(double x) {
  const HighPrecision hx = x;
  const HighPrecision pi = boost::math::constants::pi<HighPrecision>();
  const HighPrecision c = HighPrecision(2) / (sqrt(HighPrecision(3)) * pow(pi, HighPrecision(0.25)));
  return static_cast<double>(c * (1 - hx * hx) * exp(-hx * hx / 2));
}

Spectrum spectrum_of(std::vector<double> values) {
  Spectrum s;
  s.eigenvalues = std::move(values);
  return s;
}

SpectralTokenParams make_params(std::size_t t, std::size_t d, std::uint64_t seed,
                                KernelKind kind = KernelKind::mexican_hat) {
  Rng rng(seed);
  return SpectralTokenParams::init(t, d, kind, rng);
}

}  // namespace

TEST(SpectralKernel, MexicanHatClosedForms) {
  EXPECT_NEAR(spectral_kernel(0.0, 1.0, KernelKind::mexican_hat), 0.8673250706, 1e-10);
  EXPECT_NEAR(spectral_kernel(1.0, 1.0, KernelKind::mexican_hat), 0.0, 1e-15);
  EXPECT_NEAR(spectral_kernel(-1.0, 1.0, KernelKind::mexican_hat), 0.0, 1e-15);
  EXPECT_NEAR(spectral_kernel(3.0, 1.0, KernelKind::mexican_hat), mexican_hat_oracle(3.0), 1e-15);
  EXPECT_NEAR(spectral_kernel(1.5, 2.0, KernelKind::mexican_hat), kMexicanHatScale * -8.0 * std::exp(-4.5), 1e-15);
}

TEST(SpectralKernel, MexicanHatMatchesHighPrecision) {
  Rng rng(2);
  for (int i = 0; i < 1000; ++i) {
    const double x = rng.uniform(-5.0, 5.0);
    EXPECT_NEAR(spectral_kernel(x, 1.0, KernelKind::mexican_hat), mexican_hat_oracle(x), 1e-12) << x;
  }
}

TEST(SpectralKernel, HeatAndGaussian) {
  EXPECT_DOUBLE_EQ(spectral_kernel(2.0, 0.5, KernelKind::heat), std::exp(-1.0));
  EXPECT_DOUBLE_EQ(spectral_kernel(2.0, 1.0, KernelKind::gaussian), std::exp(-2.0));
  EXPECT_EQ(spectral_kernel(1.7, 0.0, KernelKind::heat), 1.0);
  EXPECT_EQ(spectral_kernel(1.7, 0.0, KernelKind::gaussian), 1.0);
}

TEST(SpectralKernel, SlopeMatchesCentralDifference) {
  for (KernelKind kind : {KernelKind::mexican_hat, KernelKind::heat, KernelKind::gaussian}) {
    for (double x = -3.0; x <= 3.0; x += 0.37) {
      const double h = 1e-6;
      const double numeric = (spectral_kernel(x + h, 1.0, kind) - spectral_kernel(x - h, 1.0, kind)) / (2 * h);
      EXPECT_NEAR(spectral_kernel_slope(x, kind), numeric, 1e-8);
    }
  }
}

TEST(KernelKind, NamesRoundTrip) {
  for (KernelKind k : {KernelKind::mexican_hat, KernelKind::heat, KernelKind::gaussian})
    EXPECT_EQ(kernel_from_string(to_string(k)), k);
  EXPECT_THROW(kernel_from_string("laplace"), std::invalid_argument);
}

TEST(SpectrumVector, CopyPadAndTruncate) {
  const auto sv = build_spectrum_vector(spectrum_of({0, 2}), spectrum_of({0, 1, 2}), 2, 3);
  EXPECT_EQ(sv.values, (std::vector<double>{0, 2, 0, 1, 2}));
  EXPECT_EQ(build_spectrum_vector(spectrum_of({0}), spectrum_of({0}), 4, 1).values,
            (std::vector<double>{0, 0, 0, 0, 0}));
  EXPECT_EQ(build_spectrum_vector(spectrum_of({5}), spectrum_of({0, 1, 2}), 1, 2).values,
            (std::vector<double>{5, 0, 1}));
  EXPECT_THROW(build_spectrum_vector(spectrum_of({0}), spectrum_of({0}), 0, 0), ContractError);
}

TEST(KernelFeatures, Examples) {
  Tape tape;
  SpectrumVector zeros{{0, 0, 0}, 0, 3};
  const Tensor g = kernel_features(zeros, tape.constant(Tensor::vector({0.5, 1, 3})), KernelKind::mexican_hat).value();
  for (double v : g.data()) EXPECT_NEAR(v, 0.8673250706, 1e-10);

  SpectrumVector any{{0.3, 1.1, 1.9}, 0, 3};
  const Tensor c = kernel_features(any, tape.constant(Tensor::vector({0})), KernelKind::mexican_hat).value();
  for (double v : c.data()) EXPECT_EQ(v, kMexicanHatScale);

  SpectrumVector two{{0, 1}, 0, 2};
  const Tensor t = kernel_features(two, tape.constant(Tensor::vector({1})), KernelKind::mexican_hat).value();
  EXPECT_EQ(t.shape(), (Shape{2, 1}));
  EXPECT_NEAR(t(0, 0), 0.86733, 1e-5);
  EXPECT_NEAR(t(1, 0), 0.0, 1e-15);
}

TEST(SpectralAttention, Examples) {
  Tape tape;
  const Var same = tape.constant(Tensor::matrix({{1, 2}, {1, 2}, {1, 2}}));
  for (double v : spectral_attention(same, tape.constant(Tensor::matrix({{0.3}, {-0.7}}))).value().data())
    EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
  const Var varied = tape.constant(Tensor::matrix({{1, 2}, {-4, 0.5}}));
  for (double v : spectral_attention(varied, tape.constant(Tensor(Shape{2, 1}))).value().data())
    EXPECT_EQ(v, 0.5);
  const Tensor s = spectral_attention(tape.constant(Tensor::matrix({{std::numbers::ln2}, {0}})),
                                      tape.constant(Tensor::matrix({{1}})))
                       .value();
  EXPECT_NEAR(s[0], 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(s[1], 1.0 / 3.0, 1e-15);
}

TEST(SpectralAttention, HeatAtZeroThetaIsUniform) {
  Tape tape;
  SpectrumVector sv{{0, 0.4, 1.2, 1.9}, 2, 2};
  for (KernelKind kind : {KernelKind::heat, KernelKind::gaussian}) {
    const Var f = kernel_features(sv, tape.constant(Tensor(Shape{3})), kind);
    for (double v : f.value().data()) EXPECT_EQ(v, 1.0);
    for (double v : spectral_attention(f, tape.constant(Tensor::matrix({{0.2}, {1.0}, {-3.0}}))).value().data())
      EXPECT_NEAR(v, 0.25, 1e-15);
  }
}

TEST(InitSpectralToken, OneHotSelectsAndUniformAverages) {
  // Large logit gap makes s numerically one-hot on position 0.
  Tape tape;
  SpectrumVector sv{{0, 1}, 0, 2};
  const Var theta = tape.constant(Tensor::vector({1}));
  const Var w2 = tape.constant(Tensor::matrix({{2, -1, 0.5}}));
  const Tensor z = init_spectral_token(sv, theta, tape.constant(Tensor::matrix({{1000}})), w2,
                                       KernelKind::mexican_hat)
                       .value();
  const double g0 = kMexicanHatScale;
  EXPECT_NEAR(z[0], 2 * g0, 1e-12);
  EXPECT_NEAR(z[1], -g0, 1e-12);
  EXPECT_NEAR(z[2], 0.5 * g0, 1e-12);

  SpectrumVector pair{{0.2, 1.7}, 0, 2};
  const Tensor avg = init_spectral_token(pair, theta, tape.constant(Tensor::matrix({{0}})), w2,
                                         KernelKind::mexican_hat)
                         .value();
  const double g1 = spectral_kernel(0.2, 1, KernelKind::mexican_hat);
  const double g2 = spectral_kernel(1.7, 1, KernelKind::mexican_hat);
  EXPECT_NEAR(avg[0], (2 * g1 + 2 * g2) / 2, 1e-15);
  EXPECT_NEAR(avg[1], (-g1 - g2) / 2, 1e-15);
}

TEST(InitSpectralToken, InvariantToReorderingPositions) {
  auto params = make_params(5, 7, 3);
  Rng rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    SpectrumVector sv{{}, 3, 5};
    for (int i = 0; i < 8; ++i) sv.values.push_back(rng.uniform(0.0, 2.0));
    Tape tape;
    const Tensor a = init_spectral_token(tape, sv, params).value();
    rng.shuffle(sv.values.begin(), sv.values.end());
    const Tensor b = init_spectral_token(tape, sv, params).value();
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-12);
  }
}

TEST(InitSpectralToken, InitRangesAndShapes) {
  const auto p = make_params(16, 8, 1);
  EXPECT_EQ(p.channels(), 16u);
  EXPECT_EQ(p.width(), 8u);
  EXPECT_EQ(p.logit_head.shape(), (Shape{16, 1}));
  for (double th : p.thetas.data()) {
    EXPECT_GE(th, 0.5);
    EXPECT_LE(th, 4.0);
  }
  for (double w : p.value_head.data()) EXPECT_LE(std::abs(w), 0.25);
  Rng rng(0);
  EXPECT_THROW(SpectralTokenParams::init(0, 4, KernelKind::heat, rng), ContractError);
}

TEST(InitSpectralToken, GradientsPassCheck) {
  for (KernelKind kind : {KernelKind::mexican_hat, KernelKind::heat, KernelKind::gaussian}) {
    auto params = make_params(6, 5, 11, kind);
    SpectrumVector sv{{0.0, 0.35, 1.2, 0.0, 0.8, 1.5, 2.0}, 3, 4};
    Tensor w = Tensor::vector({0.3, -1.1, 0.7, 0.2, -0.4});
    const ScalarFn f = [&](Tape& tape) { return sum(mul(init_spectral_token(tape, sv, params), tape.constant(w))); };
    Rng rng(0);
    const auto report = grad_check_params(
        f, {{"thetas", &params.thetas}, {"logit_head", &params.logit_head}, {"value_head", &params.value_head}},
        1e-5, 0, rng);
    for (const auto& e : report) EXPECT_LT(e.max_rel_error, 1e-5) << to_string(kind) << " " << e.name;
  }
}
