#include <gtest/gtest.h>

#include <cmath>

#include "cfcl/model.hpp"

using namespace cfcl;

namespace {

// Straight-line forward pass written independently of the library.
Vector naive_forward(const EncoderModel& m, const Vector& x) {
  const auto& dims = m.layer_dims();
  const auto p = m.params();
  std::size_t off = 0;
  Vector a = x;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const std::size_t in = dims[l], out = dims[l + 1];
    Vector z(out, 0.0);
    for (std::size_t r = 0; r < out; ++r) {
      z[r] = p[off + in * out + r];
      for (std::size_t c = 0; c < in; ++c) z[r] += p[off + r * in + c] * a[c];
    }
    off += in * out + out;
    if (l + 2 < dims.size())
      for (double& v : z) v = v > 0 ? v : 0.0;
    a = z;
  }
  return a;
}

double loss_at(const EncoderModel& m, const Triplet& t, double margin) {
  return triplet_loss(embed(m, t.anchor), embed(m, t.positive), embed(m, t.negative), margin);
}

Vector random_vector(std::size_t n, Rng& rng, double scale = 1.0) {
  Vector v(n);
  for (double& x : v) x = scale * standard_normal(rng);
  return v;
}

}  // namespace

TEST(Embed, IdentityLayer) {
  EncoderModel m({2, 2}, Activation::identity);
  m.weights(0)[0] = 1.0;
  m.weights(0)[3] = 1.0;
  EXPECT_EQ(embed(m, Vector{1.0, 2.0}), (Vector{1.0, 2.0}));
}

TEST(Embed, ZeroModelGivesZero) {
  EncoderModel m({3, 4, 2});
  EXPECT_EQ(embed(m, Vector{0.3, -1.0, 7.0}), (Vector{0.0, 0.0}));
}

TEST(Embed, MatchesNaiveForward) {
  for (std::uint64_t s = 0; s < 10; ++s) {
    Rng rng(s);
    auto m = EncoderModel::random({5, 7, 6, 3}, Activation::relu, rng);
    for (double& b : m.params()) b += 0.1 * standard_normal(rng);
    const Vector x = random_vector(5, rng);
    const Vector got = embed(m, x), want = naive_forward(m, x);
    ASSERT_EQ(got.size(), want.size());
    for (std::size_t k = 0; k < got.size(); ++k) EXPECT_NEAR(got[k], want[k], 1e-12);
    EXPECT_EQ(embed(m, x), got);
  }
}

TEST(Embed, DimensionMismatchThrows) {
  EncoderModel m({3, 2});
  EXPECT_THROW(embed(m, Vector{1.0, 2.0}), ShapeError);
}

TEST(Model, ParameterCount) {
  EncoderModel m({784, 128, 64});
  EXPECT_EQ(m.parameter_count(), 784u * 128 + 128 + 128 * 64 + 64);
  EXPECT_THROW(EncoderModel({5}), ShapeError);
  EXPECT_THROW(EncoderModel({5, 0}), ShapeError);
}

TEST(Model, MidpointCommutesWithElementwiseArithmetic) {
  Rng rng(3);
  auto a = EncoderModel::random({4, 3, 2}, Activation::relu, rng);
  auto b = EncoderModel::random({4, 3, 2}, Activation::relu, rng);
  const auto mid = (a + b) * 0.5;
  for (std::size_t k = 0; k < a.parameter_count(); ++k)
    EXPECT_DOUBLE_EQ(mid.params()[k], 0.5 * (a.params()[k] + b.params()[k]));
  EXPECT_THROW(a += EncoderModel({4, 2}), ShapeError);
}

TEST(TripletLoss, Examples) {
  EXPECT_DOUBLE_EQ(triplet_loss(Vector{0, 0}, Vector{0, 0}, Vector{1, 0}, 0.5), 0.0);
  EXPECT_DOUBLE_EQ(triplet_loss(Vector{0, 0}, Vector{1, 0}, Vector{0, 0}, 0.5), 1.5);
  EXPECT_DOUBLE_EQ(triplet_loss(Vector{0, 0}, Vector{0, 1}, Vector{2, 0}, 1.0), 0.0);
  EXPECT_THROW(triplet_loss(Vector{0, 0}, Vector{0}, Vector{0, 0}, 1.0), ShapeError);
}

TEST(TripletLoss, NonNegativeAndZeroBeyondMargin) {
  Rng rng(11);
  for (int k = 0; k < 200; ++k) {
    const Vector a = random_vector(3, rng), p = random_vector(3, rng), n = random_vector(3, rng);
    const double m = uniform01(rng) * 2.0;
    const double l = triplet_loss(a, p, n, m);
    EXPECT_GE(l, 0.0);
    if (squared_distance(a, n) >= squared_distance(a, p) + m) {
      EXPECT_EQ(l, 0.0);
    }
  }
}

TEST(TripletGradient, InactiveHingeIsZero) {
  Rng rng(5);
  auto m = EncoderModel::random({2, 4, 2}, Activation::relu, rng);
  Triplet t{{1.0, 1.0}, {1.0, 1.0}, {-50.0, 40.0}};
  ASSERT_EQ(loss_at(m, t, 0.1), 0.0);
  for (double g : triplet_gradient(m, t, 0.1)) EXPECT_EQ(g, 0.0);
}

TEST(TripletGradient, MatchesCentralDifferences) {
  for (std::uint64_t s = 0; s < 20; ++s) {
    Rng rng(100 + s);
    const auto act = s % 2 ? Activation::tanh : Activation::relu;
    auto m = EncoderModel::random({4, 6, 5, 3}, act, rng);
    for (double& v : m.params()) v += 0.05 * standard_normal(rng);
    Triplet t{random_vector(4, rng), random_vector(4, rng), random_vector(4, rng)};
    const double margin = 0.5 + uniform01(rng) * 5.0;
    if (loss_at(m, t, margin) <= 0.0) continue;
    const Vector g = triplet_gradient(m, t, margin);
    const double h = 1e-5;
    for (std::size_t k = 0; k < m.parameter_count(); ++k) {
      EncoderModel up = m, down = m;
      up.params()[k] += h;
      down.params()[k] -= h;
      const double fd = (loss_at(up, t, margin) - loss_at(down, t, margin)) / (2 * h);
      EXPECT_LT(std::abs(g[k] - fd) / std::max(1.0, std::abs(fd)), 1e-4) << "seed " << s << " param " << k;
    }
  }
}

TEST(TripletGradient, BatchGradientIsMeanOfPerTriplet) {
  Rng rng(8);
  auto m = EncoderModel::random({3, 4, 2}, Activation::relu, rng);
  std::vector<Triplet> batch;
  for (int k = 0; k < 5; ++k) batch.push_back({random_vector(3, rng), random_vector(3, rng), random_vector(3, rng)});
  Vector mean(m.parameter_count(), 0.0);
  for (const auto& t : batch) {
    const auto g = triplet_gradient(m, t, 2.0);
    for (std::size_t k = 0; k < mean.size(); ++k) mean[k] += g[k] / 5.0;
  }
  Vector got(m.parameter_count(), 0.0);
  batch_gradient(m, batch, 2.0, got);
  for (std::size_t k = 0; k < mean.size(); ++k) EXPECT_NEAR(got[k], mean[k], 1e-12);
}

TEST(SgdStep, ScalarToy) {
  // One identity weight w and bias b; embeddings are w*x + b.
  EncoderModel m({1, 1}, Activation::identity);
  m.params()[0] = 1.0;
  // a=1, p=1.5, n=1 with margin 0: loss = w^2/4 (all weights equal 1)
  // dL/dw = 2*(en-ep)*xa + -2*(ea-ep)*xp + 2*(ea-en)*xn = 2*(-0.5)*1 + 1*1.5 + 0 = 0.5
  std::vector<Triplet> batch{{{1.0}, {1.5}, {1.0}}};
  const auto next = sgd_step(m, batch, 0.1, 0.0);
  EXPECT_NEAR(next.params()[0], 0.95, 1e-15);
  EXPECT_NEAR(next.params()[1], 0.0, 1e-15);
}

TEST(SgdStep, UnchangedWhenInactiveOrZeroRate) {
  Rng rng(4);
  auto m = EncoderModel::random({2, 3, 2}, Activation::relu, rng);
  std::vector<Triplet> batch{{{0.0, 0.0}, {0.0, 0.0}, {100.0, -100.0}}};
  EXPECT_EQ(sgd_step(m, batch, 0.5, 0.1), m);
  std::vector<Triplet> active{{{0.0, 1.0}, {3.0, 2.0}, {0.0, 1.0}}};
  EXPECT_EQ(sgd_step(m, active, 0.0, 1.0), m);
  EXPECT_THROW(sgd_step(m, std::vector<Triplet>{}, 0.1, 1.0), std::invalid_argument);
}

TEST(SgdStep, MeanNormalization) {
  Rng rng(9);
  auto m = EncoderModel::random({2, 3, 2}, Activation::relu, rng);
  std::vector<Triplet> b;
  for (int k = 0; k < 4; ++k) b.push_back({random_vector(2, rng), random_vector(2, rng), random_vector(2, rng)});
  std::vector<Triplet> doubled = b;
  doubled.insert(doubled.end(), b.begin(), b.end());
  // A batch repeated twice has the same mean gradient as the batch itself.
  const auto once = sgd_step(m, b, 0.1, 1.0), twice = sgd_step(m, doubled, 0.1, 1.0);
  for (std::size_t k = 0; k < m.parameter_count(); ++k) EXPECT_NEAR(once.params()[k], twice.params()[k], 1e-14);
}

TEST(Augment, DegenerateSpecsLeaveInputUnchanged) {
  Rng rng(1);
  const Vector x{1.0, -2.0, 3.5};
  EXPECT_EQ(apply_augmentation(x, AugmentationSpec::noise(0.0), rng), x);
  EXPECT_EQ(apply_augmentation(x, AugmentationSpec::scaling(1.0, 1.0), rng), x);
  EXPECT_EQ(apply_augmentation(x, AugmentationSpec::masking(0.0), rng), x);
}

TEST(Augment, DeterministicGivenSeed) {
  const std::vector<AugmentationSpec> fam{AugmentationSpec::noise(0.3), AugmentationSpec::scaling(0.8, 1.2),
                                          AugmentationSpec::masking(0.5)};
  const Vector x{1.0, 2.0, 3.0, 4.0};
  for (std::uint64_t s = 0; s < 20; ++s) {
    Rng a(s), b(s);
    EXPECT_EQ(augment(x, fam, a), augment(x, fam, b));
  }
}

TEST(Augment, MaskingZeroesRoundedFraction) {
  Rng rng(2);
  const Vector x(10, 1.0);
  const auto y = apply_augmentation(x, AugmentationSpec::masking(0.3), rng);
  EXPECT_EQ(std::count(y.begin(), y.end(), 0.0), 3);
}

TEST(Augment, InvalidSpecsRejected) {
  EXPECT_THROW(AugmentationSpec::noise(-1.0).validate(), ConfigError);
  EXPECT_THROW(AugmentationSpec::scaling(0.0, 1.0).validate(), ConfigError);
  EXPECT_THROW(AugmentationSpec::scaling(1.2, 0.8).validate(), ConfigError);
  EXPECT_THROW(AugmentationSpec::masking(1.5).validate(), ConfigError);
  Rng rng(0);
  EXPECT_THROW(augment(Vector{1.0}, std::vector<AugmentationSpec>{}, rng), std::invalid_argument);
}
