#include <gtest/gtest.h>

#include <cmath>

#include "cfcl/metrics.hpp"
#include "cfcl/model.hpp"

using namespace cfcl;

namespace {

struct Blobs {
  std::vector<Vector> x;
  std::vector<int> y;
};

Blobs two_blobs(std::size_t per_class, double gap, double sigma, Rng& rng) {
  Blobs b;
  for (int c = 0; c < 2; ++c)
    for (std::size_t k = 0; k < per_class; ++k) {
      b.x.push_back({(c ? gap : -gap) + sigma * standard_normal(rng), 0.5 * gap + sigma * standard_normal(rng)});
      b.y.push_back(c);
    }
  return b;
}

// Full-batch gradient descent on the binary logistic loss, raw features.
double logistic_oracle_accuracy(const Blobs& train, const Blobs& test) {
  double w0 = 0, w1 = 0, b = 0;
  for (int it = 0; it < 2000; ++it) {
    double g0 = 0, g1 = 0, gb = 0;
    for (std::size_t i = 0; i < train.x.size(); ++i) {
      const double z = w0 * train.x[i][0] + w1 * train.x[i][1] + b;
      const double r = 1.0 / (1.0 + std::exp(-z)) - train.y[i];
      g0 += r * train.x[i][0];
      g1 += r * train.x[i][1];
      gb += r;
    }
    const double n = static_cast<double>(train.x.size());
    w0 -= 0.5 * g0 / n;
    w1 -= 0.5 * g1 / n;
    b -= 0.5 * gb / n;
  }
  std::size_t ok = 0;
  for (std::size_t i = 0; i < test.x.size(); ++i)
    ok += ((w0 * test.x[i][0] + w1 * test.x[i][1] + b) > 0) == (test.y[i] == 1);
  return static_cast<double>(ok) / static_cast<double>(test.x.size());
}

}  // namespace

TEST(Probe, ConstantEmbeddingsGiveChance) {
  std::vector<Vector> x(400, Vector{1.0, 1.0});
  std::vector<int> y(400);
  for (std::size_t k = 0; k < y.size(); ++k) y[k] = static_cast<int>(k % 2);
  Rng rng(1);
  EXPECT_NEAR(linear_probe(x, y, x, y, rng).accuracy, 0.5, 0.05);
}

TEST(Probe, OneHotEmbeddingsAreSeparable) {
  std::vector<Vector> x;
  std::vector<int> y;
  for (int k = 0; k < 300; ++k) {
    Vector v(5, 0.0);
    v[k % 5] = 1.0;
    x.push_back(v);
    y.push_back(k % 5);
  }
  Rng rng(2);
  EXPECT_GE(linear_probe(x, y, x, y, rng).accuracy, 0.99);
}

TEST(Probe, AgreesWithLogisticRegressionOracle) {
  for (std::uint64_t s = 0; s < 3; ++s) {
    Rng rng(10 + s);
    const auto train = two_blobs(200, 1.0, 0.8, rng), test = two_blobs(200, 1.0, 0.8, rng);
    Rng prng(s);
    const double got = linear_probe(train.x, train.y, test.x, test.y, prng).accuracy;
    EXPECT_NEAR(got, logistic_oracle_accuracy(train, test), 0.02);
  }
}

TEST(Probe, LeavesEncoderUntouched) {
  Rng rng(3);
  const auto model = EncoderModel::random({2, 4, 3}, Activation::relu, rng);
  const auto before = model;
  const auto blobs = two_blobs(50, 2.0, 0.5, rng);
  std::vector<Vector> emb;
  for (const auto& x : blobs.x) emb.push_back(embed(model, x));
  linear_probe(emb, blobs.y, emb, blobs.y, rng);
  EXPECT_EQ(model, before);
}

TEST(Probe, RejectsMismatchedInputs) {
  Rng rng(0);
  const std::vector<Vector> x{{1.0}, {2.0}};
  EXPECT_THROW(linear_probe(x, std::vector<int>{0}, x, std::vector<int>{0, 1}, rng), std::invalid_argument);
  EXPECT_THROW(linear_probe(x, std::vector<int>{0, 1}, std::vector<Vector>{{1.0, 2.0}}, std::vector<int>{0}, rng),
               ShapeError);
}

TEST(LabelVariance, Examples) {
  EXPECT_EQ(label_count_variance(std::vector<std::size_t>{4, 4, 4}), 0.0);
  EXPECT_EQ(label_count_variance(std::vector<std::size_t>{2, 0}), 1.0);
}

TEST(LabelVariance, MatchesDirectFormula) {
  Rng rng(5);
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<std::size_t> counts(7);
    for (auto& c : counts) c = uniform_index(rng, 50);
    double sum = 0, sq = 0;
    for (auto c : counts) sum += c, sq += static_cast<double>(c) * c;
    const double n = 7.0;
    EXPECT_NEAR(label_count_variance(counts), sq / n - (sum / n) * (sum / n), 1e-9);
  }
}

TEST(LabelVariance, NetworkMean) {
  const std::vector<std::vector<int>> devices{{0, 0}, {0, 1}};
  const auto v = label_count_variance(devices, 2);
  EXPECT_EQ(v.per_device, (Vector{1.0, 0.0}));
  EXPECT_EQ(v.mean, 0.5);
  EXPECT_THROW(label_count_variance(std::vector<std::vector<int>>{{}}, 2), std::invalid_argument);
  EXPECT_THROW(label_count_variance(std::vector<std::vector<int>>{{3}}, 2), std::invalid_argument);
}

TEST(Delay, UplinkAndDatapointUnits) {
  DelayParams p;
  p.param_count = 45433;
  p.elements_per_datapoint = 28 * 28;
  EXPECT_NEAR(p.uplink_seconds(), 45433.0 * 32.0 / 1e6, 1e-12);
  EXPECT_NEAR(p.uplink_seconds(), 1.453856, 1e-9);
  EXPECT_NEAR(p.uplink_seconds(), 1.4539, 0.5e-4);  // the rounded published figure
  EXPECT_NEAR(p.datapoint_seconds(), 0.006272, 1e-12);
}

TEST(Delay, AdditiveAndOverhead) {
  DelayParams p;
  p.param_count = 1000;
  p.elements_per_datapoint = 10;
  EXPECT_EQ(delay_of_run({}, p), 0.0);
  ExchangeCounters c;
  c.uplink_model_transfers = 3;
  c.datapoints_pushed = 5;
  c.datapoints_pulled = 7;
  c.pull_events = 2;
  c.measured_compute_s = 0.25;
  const double tx = 3 * 0.032 + 12 * 0.00008;
  EXPECT_NEAR(delay_of_run(c, p), tx, 1e-15);
  EXPECT_NEAR(delay_of_run(c, p, {OverheadModel::Kind::fixed, 0.5}), tx + 1.0, 1e-15);
  EXPECT_NEAR(delay_of_run(c, p, {OverheadModel::Kind::measured, 0.0}), tx + 0.25, 1e-15);
  EXPECT_THROW((DelayParams{0.0}.validate()), ConfigError);
}
