#pragma once

// Labeled datasets for the harness: synthetic Gaussian classes, IDX
// image/label pairs, held-out evaluation splits and the non-i.i.d. partitioner.
// Labels stay here; the federation receives points and ids only.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "cfcl/common.hpp"
#include "cfcl/io/idx.hpp"

namespace cfcl::io {

struct LabeledDataset {
  std::vector<Vector> points;
  std::vector<int> labels;
  std::size_t dim = 0;
  std::size_t class_count = 0;

  std::size_t size() const noexcept { return points.size(); }

  void validate() const {
    if (points.size() != labels.size()) throw std::invalid_argument("LabeledDataset: points/labels size mismatch");
    for (std::size_t k = 0; k < points.size(); ++k) {
      if (points[k].size() != dim) throw ShapeError("LabeledDataset: point dimension");
      if (labels[k] < 0 || static_cast<std::size_t>(labels[k]) >= class_count)
        throw std::invalid_argument("LabeledDataset: label outside [0, class_count)");
    }
  }

  void append(const LabeledDataset& o) {
    points.insert(points.end(), o.points.begin(), o.points.end());
    labels.insert(labels.end(), o.labels.begin(), o.labels.end());
  }
};

/// Isotropic Gaussian classes around fixed means.
class GaussianClasses {
 public:
  /// Means are drawn on the sphere of radius `separation` (a pair of points in
  /// one dimension) by rejection until all pairwise distances reach
  /// `separation`.
  GaussianClasses(std::size_t class_count, std::size_t dim, double sigma, double separation, Rng& rng)
      : dim_(dim), sigma_(sigma) {
    if (class_count == 0 || dim == 0) throw std::invalid_argument("synth_generate: sizes must be positive");
    if (!(sigma >= 0.0)) throw std::invalid_argument("synth_generate: sigma must be >= 0");
    if (!(separation >= 0.0)) throw std::invalid_argument("synth_generate: separation must be >= 0");
    constexpr std::size_t kRestarts = 50, kTries = 2000;
    for (std::size_t restart = 0; restart < kRestarts; ++restart) {
      means_.clear();
      for (std::size_t c = 0; c < class_count; ++c) {
        bool placed = false;
        for (std::size_t attempt = 0; attempt < kTries && !placed; ++attempt) {
          Vector m(dim);
          double norm = 0.0;
          for (double& v : m) {
            v = standard_normal(rng);
            norm += v * v;
          }
          norm = std::sqrt(norm);
          if (norm == 0.0) continue;
          for (double& v : m) v *= separation / norm;
          placed = true;
          for (const auto& o : means_)
            if (squared_distance(m, o) < separation * separation * (1.0 - 1e-12)) {
              placed = false;
              break;
            }
          if (placed) means_.push_back(std::move(m));
        }
        if (!placed) break;
      }
      if (means_.size() == class_count) return;
    }
    throw std::invalid_argument("synth_generate: cannot place " + std::to_string(class_count) +
                                " class means at separation " + std::to_string(separation) + " in dimension " +
                                std::to_string(dim));
  }

  const std::vector<Vector>& means() const noexcept { return means_; }

  /// per_class points of each class, class-major order.
  LabeledDataset sample(std::size_t per_class, Rng& rng) const {
    LabeledDataset ds;
    ds.dim = dim_;
    ds.class_count = means_.size();
    for (std::size_t c = 0; c < means_.size(); ++c)
      for (std::size_t k = 0; k < per_class; ++k) {
        Vector x = means_[c];
        for (double& v : x) v += sigma_ * standard_normal(rng);
        ds.points.push_back(std::move(x));
        ds.labels.push_back(static_cast<int>(c));
      }
    return ds;
  }

 private:
  std::size_t dim_;
  double sigma_;
  std::vector<Vector> means_;
};

inline LabeledDataset synth_generate(std::size_t class_count, std::size_t per_class, std::size_t dim, double sigma,
                                     double separation, Rng& rng) {
  if (per_class == 0) throw std::invalid_argument("synth_generate: per_class must be positive");
  GaussianClasses gen(class_count, dim, sigma, separation, rng);
  return gen.sample(per_class, rng);
}

/// Image/label IDX pair to a dataset. Pixels are scaled to [0,1].
inline LabeledDataset dataset_from_idx(const IdxTensor& images, const IdxTensor& labels) {
  if (images.dims.empty() || labels.dims.size() != 1)
    throw std::invalid_argument("dataset_from_idx: need an N x ... image tensor and an N label vector");
  if (images.dims.front() != labels.dims.front())
    throw std::invalid_argument("dataset_from_idx: image and label counts differ");
  LabeledDataset ds;
  ds.dim = images.item_size();
  const std::size_t n = images.dims.front();
  int max_label = -1;
  for (std::size_t k = 0; k < n; ++k) {
    Vector x(ds.dim);
    for (std::size_t d = 0; d < ds.dim; ++d) x[d] = images.data[k * ds.dim + d] / 255.0;
    ds.points.push_back(std::move(x));
    ds.labels.push_back(labels.data[k]);
    max_label = std::max(max_label, static_cast<int>(labels.data[k]));
  }
  ds.class_count = static_cast<std::size_t>(max_label + 1);
  return ds;
}

/// Quantizes a dataset into an IDX image tensor (N x 1 x dim) and label
/// vector. Values are min-max scaled to 0..255 over the whole dataset.
inline std::pair<IdxTensor, IdxTensor> dataset_to_idx(const LabeledDataset& ds) {
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto& x : ds.points)
    for (double v : x) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  const double span = hi > lo ? hi - lo : 1.0;
  IdxTensor images{{static_cast<std::uint32_t>(ds.size()), 1, static_cast<std::uint32_t>(ds.dim)}, {}};
  IdxTensor labels{{static_cast<std::uint32_t>(ds.size())}, {}};
  images.data.reserve(ds.size() * ds.dim);
  for (std::size_t k = 0; k < ds.size(); ++k) {
    for (double v : ds.points[k]) images.data.push_back(static_cast<std::uint8_t>(std::lround((v - lo) / span * 255.0)));
    if (ds.labels[k] < 0 || ds.labels[k] > 255) throw std::invalid_argument("dataset_to_idx: label outside 0..255");
    labels.data.push_back(static_cast<std::uint8_t>(ds.labels[k]));
  }
  return {std::move(images), std::move(labels)};
}

struct HoldoutSplit {
  LabeledDataset train;       // federated training pool
  LabeledDataset probe_train; // linear-probe fit set
  LabeledDataset probe_test;  // linear-probe accuracy set
};

/// Moves `probe_train + probe_test` points of every class out of `ds`.
inline HoldoutSplit split_holdout(const LabeledDataset& ds, std::size_t probe_train_per_class,
                                  std::size_t probe_test_per_class, Rng& rng) {
  HoldoutSplit s;
  for (auto* part : {&s.train, &s.probe_train, &s.probe_test}) {
    part->dim = ds.dim;
    part->class_count = ds.class_count;
  }
  std::vector<std::size_t> order(ds.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  shuffle(order, rng);
  std::vector<std::size_t> taken(ds.class_count, 0);
  for (auto k : order) {
    const auto c = static_cast<std::size_t>(ds.labels[k]);
    LabeledDataset* dst = &s.train;
    if (taken[c] < probe_train_per_class)
      dst = &s.probe_train;
    else if (taken[c] < probe_train_per_class + probe_test_per_class)
      dst = &s.probe_test;
    ++taken[c];
    dst->points.push_back(ds.points[k]);
    dst->labels.push_back(ds.labels[k]);
  }
  for (std::size_t c = 0; c < ds.class_count; ++c)
    if (taken[c] < probe_train_per_class + probe_test_per_class)
      throw std::invalid_argument("split_holdout: class " + std::to_string(c) + " too small for the probe split");
  return s;
}

struct Partition {
  std::vector<std::vector<PointId>> device_points;  // indices into the dataset
  std::vector<std::vector<int>> device_labels;       // labels assigned to each device
};

/// Each device gets `labels_per_device` distinct labels dealt in order from a
/// label stream made of independently shuffled passes over all labels, so
/// every label is used as evenly as possible. A label the device already holds
/// is swapped with the next usable one further down the stream. Each device
/// then draws `per_device_size` points without replacement from those labels'
/// pools (split as evenly as possible). Device datasets are disjoint.
inline Partition partition_noniid(const LabeledDataset& ds, std::size_t device_count, std::size_t labels_per_device,
                                  std::size_t per_device_size, Rng& rng) {
  if (device_count == 0) throw std::invalid_argument("partition_noniid: need at least one device");
  if (labels_per_device == 0 || labels_per_device > ds.class_count)
    throw std::invalid_argument("partition_noniid: labels_per_device must lie in [1, class_count]");
  if (per_device_size < labels_per_device)
    throw std::invalid_argument("partition_noniid: per_device_size smaller than labels_per_device");

  const std::size_t slots = device_count * labels_per_device;
  std::vector<int> stream;
  while (stream.size() < slots + ds.class_count) {
    std::vector<int> pass(ds.class_count);
    std::iota(pass.begin(), pass.end(), 0);
    shuffle(pass, rng);
    stream.insert(stream.end(), pass.begin(), pass.end());
  }

  Partition p;
  p.device_labels.resize(device_count);
  std::vector<std::vector<std::size_t>> quota(device_count);
  std::vector<std::size_t> demand(ds.class_count, 0);
  std::size_t pos = 0;
  for (std::size_t d = 0; d < device_count; ++d) {
    auto& mine = p.device_labels[d];
    for (std::size_t k = 0; k < labels_per_device; ++k, ++pos) {
      std::size_t q = pos;
      while (std::find(mine.begin(), mine.end(), stream[q]) != mine.end()) ++q;
      std::swap(stream[pos], stream[q]);
      mine.push_back(stream[pos]);
    }
    for (std::size_t k = 0; k < labels_per_device; ++k) {
      const std::size_t q = per_device_size / labels_per_device + (k < per_device_size % labels_per_device ? 1 : 0);
      quota[d].push_back(q);
      demand[static_cast<std::size_t>(mine[k])] += q;
    }
  }

  std::vector<std::vector<PointId>> pools(ds.class_count);
  for (std::size_t k = 0; k < ds.size(); ++k) pools[static_cast<std::size_t>(ds.labels[k])].push_back(k);
  for (std::size_t c = 0; c < ds.class_count; ++c) {
    if (demand[c] > pools[c].size())
      throw std::invalid_argument("partition_noniid: label " + std::to_string(c) + " needs " +
                                  std::to_string(demand[c]) + " points, has " + std::to_string(pools[c].size()));
    shuffle(pools[c], rng);
  }

  std::vector<std::size_t> cursor(ds.class_count, 0);
  p.device_points.resize(device_count);
  for (std::size_t d = 0; d < device_count; ++d)
    for (std::size_t k = 0; k < labels_per_device; ++k) {
      const auto c = static_cast<std::size_t>(p.device_labels[d][k]);
      for (std::size_t q = 0; q < quota[d][k]; ++q) p.device_points[d].push_back(pools[c][cursor[c]++]);
    }
  return p;
}

}  // namespace cfcl::io
