#pragma once

// Harness-side measurements: linear evaluation of frozen embeddings, label
// balance of device training sets, and the transmission-delay model.

#include <cmath>
#include <span>
#include <vector>

#include "cfcl/common.hpp"

namespace cfcl {

struct ProbeOptions {
  std::size_t iterations = 1000;
  double learning_rate = 0.1;
  std::size_t batch_size = 64;
};

struct ProbeResult {
  double accuracy = 0.0;
  std::size_t iterations = 0;
};

/// Multinomial logistic regression on frozen embeddings, trained with
/// mini-batch SGD on cross-entropy. Features are standardized with the
/// training-set mean and std before fitting.
inline ProbeResult linear_probe(std::span<const Vector> train_x, std::span<const int> train_y,
                                std::span<const Vector> test_x, std::span<const int> test_y, Rng& rng,
                                ProbeOptions opts = {}) {
  if (train_x.size() != train_y.size() || test_x.size() != test_y.size())
    throw std::invalid_argument("linear_probe: label/embedding count mismatch");
  if (train_x.empty() || test_x.empty()) throw std::invalid_argument("linear_probe: empty split");
  if (opts.iterations == 0 || opts.batch_size == 0) throw std::invalid_argument("linear_probe: iterations >= 1");
  const std::size_t dim = train_x.front().size();
  for (const auto& x : train_x)
    if (x.size() != dim) throw ShapeError("linear_probe: ragged train embeddings");
  for (const auto& x : test_x)
    if (x.size() != dim) throw ShapeError("linear_probe: test embedding dimension");
  int max_label = 0;
  for (int y : train_y) {
    if (y < 0) throw std::invalid_argument("linear_probe: negative label");
    max_label = std::max(max_label, y);
  }
  for (int y : test_y) max_label = std::max(max_label, y);
  const std::size_t classes = static_cast<std::size_t>(max_label) + 1;

  Vector mean(dim, 0.0), scale(dim, 0.0);
  for (const auto& x : train_x)
    for (std::size_t d = 0; d < dim; ++d) mean[d] += x[d];
  for (double& m : mean) m /= static_cast<double>(train_x.size());
  for (const auto& x : train_x)
    for (std::size_t d = 0; d < dim; ++d) scale[d] += (x[d] - mean[d]) * (x[d] - mean[d]);
  for (double& s : scale) {
    s = std::sqrt(s / static_cast<double>(train_x.size()));
    s = s > 1e-12 ? 1.0 / s : 0.0;
  }
  auto normalized = [&](const Vector& x) {
    Vector z(dim);
    for (std::size_t d = 0; d < dim; ++d) z[d] = (x[d] - mean[d]) * scale[d];
    return z;
  };
  std::vector<Vector> tx;
  tx.reserve(train_x.size());
  for (const auto& x : train_x) tx.push_back(normalized(x));

  // theta: classes x (dim + 1), bias in the last column.
  std::vector<Vector> theta(classes, Vector(dim + 1, 0.0));
  std::vector<Vector> grad(classes, Vector(dim + 1));
  Vector logits(classes);
  const std::size_t batch = std::min(opts.batch_size, tx.size());
  for (std::size_t it = 0; it < opts.iterations; ++it) {
    for (auto& g : grad) std::fill(g.begin(), g.end(), 0.0);
    for (auto idx : sample_without_replacement(tx.size(), batch, rng)) {
      const Vector& x = tx[idx];
      double hi = -std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < classes; ++c) {
        double s = theta[c][dim];
        for (std::size_t d = 0; d < dim; ++d) s += theta[c][d] * x[d];
        logits[c] = s;
        hi = std::max(hi, s);
      }
      double z = 0.0;
      for (double& l : logits) z += l = std::exp(l - hi);
      for (std::size_t c = 0; c < classes; ++c) {
        const double err = logits[c] / z - (static_cast<int>(c) == train_y[idx] ? 1.0 : 0.0);
        for (std::size_t d = 0; d < dim; ++d) grad[c][d] += err * x[d];
        grad[c][dim] += err;
      }
    }
    const double step = opts.learning_rate / static_cast<double>(batch);
    for (std::size_t c = 0; c < classes; ++c)
      for (std::size_t d = 0; d <= dim; ++d) theta[c][d] -= step * grad[c][d];
  }

  std::size_t correct = 0;
  for (std::size_t i = 0; i < test_x.size(); ++i) {
    const Vector x = normalized(test_x[i]);
    std::size_t best = 0;
    double bs = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < classes; ++c) {
      double s = theta[c][dim];
      for (std::size_t d = 0; d < dim; ++d) s += theta[c][d] * x[d];
      if (s > bs) {
        bs = s;
        best = c;
      }
    }
    if (static_cast<int>(best) == test_y[i]) ++correct;
  }
  return {static_cast<double>(correct) / static_cast<double>(test_x.size()), opts.iterations};
}

struct LabelVariance {
  Vector per_device;
  double mean = 0.0;
};

/// Population variance of per-label counts over the label universe.
inline double label_count_variance(std::span<const std::size_t> counts) {
  if (counts.empty()) throw std::invalid_argument("label_count_variance: empty label universe");
  double mean = 0.0;
  for (auto c : counts) mean += static_cast<double>(c);
  mean /= static_cast<double>(counts.size());
  double v = 0.0;
  for (auto c : counts) v += (static_cast<double>(c) - mean) * (static_cast<double>(c) - mean);
  return v / static_cast<double>(counts.size());
}

inline std::vector<std::size_t> label_counts(std::span<const int> labels, std::size_t class_count) {
  std::vector<std::size_t> counts(class_count, 0);
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= class_count)
      throw std::invalid_argument("label_counts: label outside the class range");
    ++counts[static_cast<std::size_t>(y)];
  }
  return counts;
}

/// Per-device variance of label counts and the network mean.
inline LabelVariance label_count_variance(std::span<const std::vector<int>> device_labels, std::size_t class_count) {
  if (device_labels.empty()) throw std::invalid_argument("label_count_variance: no devices");
  LabelVariance out;
  for (const auto& labels : device_labels) {
    if (labels.empty()) throw std::invalid_argument("label_count_variance: empty training set");
    out.per_device.push_back(label_count_variance(label_counts(labels, class_count)));
  }
  for (double v : out.per_device) out.mean += v;
  out.mean /= static_cast<double>(out.per_device.size());
  return out;
}

struct DelayParams {
  double rate_bps = 1e6;
  double bits_per_param = 32;
  double bits_per_element = 8;
  std::size_t param_count = 0;             // 0: taken from the encoder
  std::size_t elements_per_datapoint = 0;  // 0: taken from the input dimension

  void validate() const {
    if (!(rate_bps > 0) || !(bits_per_param > 0) || !(bits_per_element > 0))
      throw ConfigError("delay", "rate and bit widths must be positive");
  }

  double uplink_seconds() const { return static_cast<double>(param_count) * bits_per_param / rate_bps; }
  double datapoint_seconds() const {
    return static_cast<double>(elements_per_datapoint) * bits_per_element / rate_bps;
  }
};

/// Communication events accumulated over a run.
struct ExchangeCounters {
  std::size_t uplink_model_transfers = 0;
  std::size_t datapoints_pushed = 0;
  std::size_t datapoints_pulled = 0;
  std::size_t pull_events = 0;  // one per (receiver, transmitter) pull
  double measured_compute_s = 0.0;

  std::size_t datapoints_exchanged() const noexcept { return datapoints_pushed + datapoints_pulled; }
};

/// Computation charged per pull: nothing, a fixed cost, or the wall-clock
/// time measured while sampling.
struct OverheadModel {
  enum class Kind { none, fixed, measured };
  Kind kind = Kind::none;
  double seconds_per_pull = 0.0;

  double charge(const ExchangeCounters& c) const {
    switch (kind) {
      case Kind::none: return 0.0;
      case Kind::fixed: return seconds_per_pull * static_cast<double>(c.pull_events);
      case Kind::measured: return c.measured_compute_s;
    }
    return 0.0;
  }
};

inline double transmission_delay(const ExchangeCounters& c, const DelayParams& p) {
  return static_cast<double>(c.uplink_model_transfers) * p.uplink_seconds() +
         static_cast<double>(c.datapoints_exchanged()) * p.datapoint_seconds();
}

inline double delay_of_run(const ExchangeCounters& c, const DelayParams& p, const OverheadModel& overhead = {}) {
  return transmission_delay(c, p) + overhead.charge(c);
}

}  // namespace cfcl
