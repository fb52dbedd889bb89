#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "rankkd/error.hpp"
#include "rankkd/losses.hpp"
#include "rankkd/nn.hpp"
#include "test_util.hpp"

using namespace rankkd;

namespace {

// Naive oracle: explicit triple loop over layers, outputs and inputs.
std::vector<double> reference_forward(const MlpParams& m, const std::vector<double>& x) {
  std::vector<double> cur = x;
  for (const auto& l : m.layers) {
    std::vector<double> next(l.spec.output_dim);
    for (std::size_t o = 0; o < l.spec.output_dim; ++o) {
      double s = l.bias[o];
      for (std::size_t i = 0; i < l.spec.input_dim; ++i) s += cur[i] * l.weights[i * l.spec.output_dim + o];
      next[o] = l.spec.activation == Activation::ReLU ? std::max(0.0, s) : s;
    }
    cur = next;
  }
  return cur;
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("rankkd_nn_" + name);
}

}  // namespace

TEST(Architecture, Validation) {
  EXPECT_NO_THROW(validate_architecture(mlp_architecture(4, {}, 3)));
  EXPECT_THROW(validate_architecture({}), ConfigError);
  EXPECT_THROW(validate_architecture({{4, 5, Activation::ReLU}, {6, 3, Activation::Identity}}), ConfigError);
  EXPECT_THROW(validate_architecture({{4, 3, Activation::ReLU}}), ConfigError);
  EXPECT_THROW(validate_architecture({{0, 3, Activation::Identity}}), ConfigError);
}

TEST(InitMlp, DeterministicAndSeedSensitive) {
  const auto arch = mlp_architecture(8, {16, 16}, 5);
  const auto a = init_mlp(arch, 42);
  const auto b = init_mlp(arch, 42);
  const auto c = init_mlp(arch, 43);
  EXPECT_TRUE(a.same_parameters(b));
  EXPECT_FALSE(a.same_parameters(c));
  EXPECT_EQ(a.parameter_count(), 8u * 16 + 16 + 16 * 16 + 16 + 16 * 5 + 5);
}

TEST(InitMlp, WeightMeanWithinThreeSigma) {
  const auto m = init_mlp(mlp_architecture(100, {}, 100), 9);
  const auto& w = m.layers[0].weights;
  ASSERT_EQ(w.size(), 10000u);
  double mean = 0.0;
  for (double v : w) mean += v;
  mean /= static_cast<double>(w.size());
  // U(-b, b) has std b/sqrt(3); the sample mean has std b/sqrt(3 n).
  const double bound = std::sqrt(6.0 / 100.0);
  const double sigma = bound / std::sqrt(3.0 * 10000.0);
  EXPECT_LT(std::abs(mean), 3.0 * sigma);
  for (double v : w) EXPECT_LE(std::abs(v), bound);
}

TEST(Forward, IdentityLayerAndZeroNetwork) {
  auto m = init_mlp(mlp_architecture(3, {}, 3), 1);
  auto& l = m.layers[0];
  std::fill(l.weights.begin(), l.weights.end(), 0.0);
  for (std::size_t i = 0; i < 3; ++i) l.weights[i * 3 + i] = 1.0;
  const std::vector<double> x{0.5, -2.0, 7.0};
  EXPECT_EQ(forward(m, x).logits, x);

  auto z = init_mlp(mlp_architecture(3, {4}, 2), 1);
  for (auto& layer : z.layers) {
    std::fill(layer.weights.begin(), layer.weights.end(), 0.0);
    std::fill(layer.bias.begin(), layer.bias.end(), 0.0);
  }
  for (double v : forward(z, x).logits) EXPECT_EQ(v, 0.0);
  EXPECT_THROW(forward(z, std::vector<double>{1.0}), ShapeError);
}

TEST(Forward, MatchesNaiveOracle) {
  Rng rng(2);
  const auto m = init_mlp(mlp_architecture(6, {9, 7}, 4), 77);
  for (int trial = 0; trial < 50; ++trial) {
    const auto x = test::random_logits(rng, 6, 2.0);
    const auto got = forward(m, x).logits;
    const auto want = reference_forward(m, x);
    for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(got[i], want[i], 1e-12);
    EXPECT_EQ(predict(m, x), got);
  }
}

TEST(Backward, ZeroUpstreamGivesZeroGrads) {
  const auto m = init_mlp(mlp_architecture(3, {5}, 4), 3);
  const auto fr = forward(m, std::vector<double>{0.1, 0.2, -0.3});
  for (double g : backward(m, fr.cache, std::vector<double>(4, 0.0)).flatten()) EXPECT_EQ(g, 0.0);
}

TEST(Backward, Linearity) {
  const auto m = init_mlp(mlp_architecture(3, {5}, 4), 3);
  const auto fr = forward(m, std::vector<double>{0.1, 0.2, -0.3});
  const std::vector<double> d{0.3, -1.0, 0.25, 2.0};
  std::vector<double> d2(d);
  for (double& v : d2) v *= 2.0;
  const auto g1 = backward(m, fr.cache, d).flatten();
  const auto g2 = backward(m, fr.cache, d2).flatten();
  for (std::size_t i = 0; i < g1.size(); ++i) EXPECT_EQ(g2[i], 2.0 * g1[i]);
}

TEST(Backward, StaleCacheRejected) {
  auto m = init_mlp(mlp_architecture(2, {3}, 2), 3);
  const auto fr = forward(m, std::vector<double>{0.1, 0.2});
  const SgdConfig cfg;
  SgdState state;
  sgd_step(m, MlpGrads::zeros_like(m), cfg, state);
  EXPECT_THROW(backward(m, fr.cache, std::vector<double>{1.0, 0.0}), UsageError);
  const auto other = init_mlp(mlp_architecture(2, {3}, 2), 3);
  const auto fr2 = forward(m, std::vector<double>{0.1, 0.2});
  EXPECT_THROW(backward(other, fr2.cache, std::vector<double>{1.0, 0.0}), UsageError);
}

TEST(Backward, FullPipelineMatchesFiniteDifferences) {
  // Tiny 2-4-3 net, combined distillation loss on top.
  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    auto m = init_mlp(mlp_architecture(2, {4}, 3), 100 + trial);
    for (auto& l : m.layers) for (double& b : l.bias) b = 0.1 * rng.normal();
    const auto x = test::random_logits(rng, 2);
    const LogitVector zt(test::random_logits(rng, 3, 2.0));
    const std::size_t label = rng.below(3);
    const LossWeights w{0.9, 0.1, 0.9, 4.0, true};
    const RankingConfig cfg;

    const auto fr = forward(m, x);
    const auto dlogits = combined_gradient(zt, LogitVector(fr.logits), label, w, cfg);
    const auto analytic = backward(m, fr.cache, dlogits).flatten();

    const auto p0 = flatten_parameters(m);
    auto f = [&](std::span<const double> p) {
      MlpParams probe = m;
      assign_parameters(probe, p);
      return combined_loss(zt, LogitVector(predict(probe, x)), label, w, cfg).total;
    };
    const auto numeric = finite_difference_gradient(f, p0, 1e-4);
    EXPECT_LT(max_relative_error(analytic, numeric), 1e-4);
  }
}

TEST(Sgd, ZeroGradientIsNoop) {
  auto m = init_mlp(mlp_architecture(3, {4}, 2), 5);
  const auto before = m;
  SgdConfig cfg;
  cfg.weight_decay = 0.0;
  SgdState state;
  sgd_step(m, MlpGrads::zeros_like(m), cfg, state);
  EXPECT_TRUE(m.same_parameters(before));
}

namespace {

// One scalar weight w; the network is a single 1x1 identity layer.
MlpParams scalar_model(double w) {
  MlpParams m;
  m.layers.push_back({{1, 1, Activation::Identity}, {w}, {0.0}});
  return m;
}

MlpGrads scalar_grad(double g) {
  MlpGrads out;
  out.weights = {{g}};
  out.bias = {{0.0}};
  return out;
}

}  // namespace

TEST(Sgd, OneStepOnQuadratic) {
  auto m = scalar_model(1.0);
  SgdConfig cfg{0.1, 0.0, 0.0, 1, 1, 0};
  SgdState state;
  sgd_step(m, scalar_grad(2.0 * 1.0), cfg, state);  // f = w^2
  EXPECT_NEAR(m.layers[0].weights[0], 0.8, 1e-15);
}

TEST(Sgd, MomentumTrajectoryMatchesRecurrence) {
  auto m = scalar_model(1.0);
  SgdConfig cfg{0.1, 0.9, 0.0, 1, 1, 0};
  SgdState state;
  // Recurrence: v1 = 2 w0 = 2, w1 = 1 - 0.2 = 0.8; v2 = 0.9*2 + 1.6 = 3.4, w2 = 0.8 - 0.34 = 0.46.
  double w = 1.0, v = 0.0;
  for (int step = 0; step < 2; ++step) {
    const double g = 2.0 * m.layers[0].weights[0];
    sgd_step(m, scalar_grad(g), cfg, state);
    v = 0.9 * v + 2.0 * w;
    w -= 0.1 * v;
    EXPECT_NEAR(m.layers[0].weights[0], w, 1e-15);
  }
  EXPECT_NEAR(w, 0.46, 1e-15);
}

TEST(Sgd, WeightDecay) {
  auto m = scalar_model(2.0);
  SgdConfig cfg{0.5, 0.0, 0.1, 1, 1, 0};
  SgdState state;
  sgd_step(m, scalar_grad(0.0), cfg, state);
  EXPECT_NEAR(m.layers[0].weights[0], 2.0 - 0.5 * 0.1 * 2.0, 1e-15);
}

TEST(Sgd, ShapeMismatch) {
  auto m = init_mlp(mlp_architecture(3, {4}, 2), 5);
  SgdState state;
  EXPECT_THROW(sgd_step(m, scalar_grad(1.0), SgdConfig{}, state), UsageError);
}

TEST(Training, LinearlySeparableReachesFullAccuracy) {
  Rng rng(6);
  std::vector<std::vector<double>> xs;
  std::vector<std::size_t> ys;
  for (int i = 0; i < 100; ++i) {
    const std::size_t y = i % 2;
    xs.push_back({rng.normal() + (y ? 3.0 : -3.0), rng.normal()});
    ys.push_back(y);
  }
  auto m = init_mlp(mlp_architecture(2, {}, 2), 8);
  SgdConfig cfg{0.1, 0.9, 0.0, 1, 1, 0};
  SgdState state;
  for (int step = 0; step < 200; ++step) {
    auto grads = MlpGrads::zeros_like(m);
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const auto fr = forward(m, xs[i]);
      auto g = ce_gradient(LogitVector(fr.logits), ys[i]);
      for (double& v : g) v /= static_cast<double>(xs.size());
      backward_accumulate(m, fr.cache, g, grads);
    }
    sgd_step(m, grads, cfg, state);
  }
  std::size_t correct = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const auto z = predict(m, xs[i]);
    correct += (z[1] > z[0]) == (ys[i] == 1);
  }
  EXPECT_EQ(correct, xs.size());
}

TEST(Checkpoint, BitExactRoundTrip) {
  Rng rng(7);
  auto m = init_mlp(mlp_architecture(5, {7, 3}, 4), 0xDEADBEEFCAFEULL);
  for (auto& l : m.layers) for (double& b : l.bias) b = rng.normal() * 1e-300;
  m.layers[0].weights[0] = -0.0;
  const auto path = temp_path("roundtrip.ckpt");
  save_checkpoint(m, path);
  const auto back = load_checkpoint(path);
  EXPECT_TRUE(back.same_parameters(m));
  EXPECT_EQ(back.seed, m.seed);
  EXPECT_TRUE(std::signbit(back.layers[0].weights[0]));
  const auto again = temp_path("roundtrip2.ckpt");
  save_checkpoint(back, again);
  std::ifstream a(path, std::ios::binary), b(again, std::ios::binary);
  std::string sa((std::istreambuf_iterator<char>(a)), {}), sb((std::istreambuf_iterator<char>(b)), {});
  EXPECT_EQ(sa, sb);
  EXPECT_EQ(sa.substr(0, 6), "RKDMLP");
}

TEST(Checkpoint, RejectsCorruptFiles) {
  const auto path = temp_path("bad.ckpt");
  {
    std::ofstream os(path, std::ios::binary);
    os << "not a checkpoint at all";
  }
  EXPECT_THROW(load_checkpoint(path), CheckpointError);
  EXPECT_THROW(load_checkpoint(temp_path("missing.ckpt")), CheckpointError);

  const auto m = init_mlp(mlp_architecture(3, {4}, 2), 1);
  const auto good = temp_path("trunc.ckpt");
  save_checkpoint(m, good);
  std::filesystem::resize_file(good, std::filesystem::file_size(good) - 8);
  EXPECT_THROW(load_checkpoint(good), CheckpointError);
}
