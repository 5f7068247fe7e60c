#pragma once

// Harness wiring: builds the labeled data, the non-i.i.d. split and the
// topology from a RunConfig, strips labels, runs the federation, and measures
// label balance and probe accuracy through a RunObserver.

#include <optional>
#include <vector>

#include "cfcl/federation.hpp"
#include "cfcl/io/config.hpp"
#include "cfcl/io/dataset.hpp"
#include "cfcl/metrics.hpp"
#include "cfcl/topology.hpp"

namespace cfcl {

struct Experiment {
  io::LabeledDataset pool;         // federated training points; index = PointId
  io::LabeledDataset probe_train;  // held out, never seen by devices
  io::LabeledDataset probe_test;
  io::Partition partition;
  Topology topology;
  FederationOptions fed;           // augmentations resolved against the data scale
};

/// Mean over dimensions of the per-dimension population std.
inline double mean_feature_std(const io::LabeledDataset& ds) {
  if (ds.points.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t d = 0; d < ds.dim; ++d) {
    double m = 0.0, v = 0.0;
    for (const auto& x : ds.points) m += x[d];
    m /= static_cast<double>(ds.size());
    for (const auto& x : ds.points) v += (x[d] - m) * (x[d] - m);
    total += std::sqrt(v / static_cast<double>(ds.size()));
  }
  return total / static_cast<double>(ds.dim);
}

inline Experiment prepare_experiment(const io::RunConfig& cfg) {
  Experiment ex;
  const auto seed = cfg.fed.seed;
  const auto& dc = cfg.dataset;
  if (dc.source == "synthetic") {
    Rng means_rng = derive_rng(seed, {stream::data, 0});
    io::GaussianClasses gen(dc.classes, dc.dim, dc.sigma, dc.separation, means_rng);
    Rng r1 = derive_rng(seed, {stream::data, 1}), r2 = derive_rng(seed, {stream::data, 2}),
        r3 = derive_rng(seed, {stream::data, 3});
    ex.pool = gen.sample(dc.per_class, r1);
    ex.probe_train = gen.sample(dc.probe_train_per_class, r2);
    ex.probe_test = gen.sample(dc.probe_test_per_class, r3);
  } else {
    const auto full = io::dataset_from_idx(io::read_idx_file(dc.images_path), io::read_idx_file(dc.labels_path));
    Rng r = derive_rng(seed, {stream::data, 4});
    auto split = io::split_holdout(full, dc.probe_train_per_class, dc.probe_test_per_class, r);
    ex.pool = std::move(split.train);
    ex.probe_train = std::move(split.probe_train);
    ex.probe_test = std::move(split.probe_test);
  }
  ex.pool.validate();

  Rng prng = derive_rng(seed, {stream::partition});
  ex.partition = io::partition_noniid(ex.pool, cfg.devices, dc.labels_per_device, dc.per_device, prng);

  if (cfg.topology.kind == "explicit") {
    ex.topology = Topology::from_adjacency(cfg.topology.adjacency);
  } else if (cfg.devices == 1) {
    ex.topology = Topology(1, {});
  } else {
    Rng trng = derive_rng(seed, {stream::topology});
    ex.topology = generate_rgg(cfg.devices, cfg.topology.avg_degree, trng,
                               {cfg.topology.tolerance, cfg.topology.max_retries, true});
  }

  ex.fed = cfg.fed;
  const double scale = mean_feature_std(ex.pool);
  ex.fed.augmentations.clear();
  for (const auto& a : cfg.augmentations) {
    AugmentationSpec s = a.spec;
    if (a.sigma_relative) s.sigma *= scale;
    ex.fed.augmentations.push_back(s);
  }
  if (ex.fed.layer_dims.front() != ex.pool.dim)
    throw ConfigError("training.layer_dims", "first entry must equal the data dimension " + std::to_string(ex.pool.dim));
  return ex;
}

/// Label-aware measurements. Only this class maps PointIds to labels.
class HarnessObserver : public RunObserver {
 public:
  HarnessObserver(const Experiment& ex, const io::EvalConfig& eval, std::uint64_t seed)
      : ex_(ex), eval_(eval), seed_(seed) {}

  void after_step(std::size_t /*t*/, std::span<const DeviceState> devices) override {
    std::vector<std::vector<int>> labels(devices.size());
    for (std::size_t d = 0; d < devices.size(); ++d) {
      labels[d].reserve(devices[d].training_size());
      for (std::size_t k = 0; k < devices[d].training_size(); ++k)
        labels[d].push_back(ex_.pool.labels[devices[d].training_point(k)]);
    }
    variance_by_step_.push_back(label_count_variance(labels, ex_.pool.class_count).mean);
  }

  EvalOutcome at_aggregation(std::size_t gamma, std::size_t /*t*/, const EncoderModel& global,
                             std::span<const DeviceState> /*devices*/) override {
    EvalOutcome out;
    if (!variance_by_step_.empty()) out.label_variance_mean = variance_by_step_.back();
    if (eval_.enabled && gamma % eval_.stride == 0) out.accuracy = probe_accuracy(global, gamma);
    return out;
  }

  double probe_accuracy(const EncoderModel& model, std::size_t gamma) const {
    std::vector<Vector> tr, te;
    for (const auto& x : ex_.probe_train.points) tr.push_back(embed(model, x));
    for (const auto& x : ex_.probe_test.points) te.push_back(embed(model, x));
    Rng rng = derive_rng(seed_, {stream::probe, gamma});
    return linear_probe(tr, ex_.probe_train.labels, te, ex_.probe_test.labels, rng, eval_.probe).accuracy;
  }

  const std::vector<double>& label_variance_by_step() const noexcept { return variance_by_step_; }

 private:
  const Experiment& ex_;
  io::EvalConfig eval_;
  std::uint64_t seed_;
  std::vector<double> variance_by_step_;
};

struct RunReport {
  RunHistory history;
  std::vector<double> label_variance_by_step;
  double time_averaged_label_variance = 0.0;
  double transmission_delay_s = 0.0;
  double delay_with_measured_overhead_s = 0.0;
  std::size_t parameter_count = 0;
};

inline RunReport run_experiment(const Experiment& ex, const io::RunConfig& cfg) {
  Federation fed(ex.pool.points, ex.partition.device_points, ex.topology, ex.fed);
  HarnessObserver obs(ex, cfg.eval, cfg.fed.seed);
  RunReport rep;
  rep.history = fed.run(&obs);
  rep.label_variance_by_step = obs.label_variance_by_step();
  double s = 0.0;
  for (double v : rep.label_variance_by_step) s += v;
  if (!rep.label_variance_by_step.empty()) s /= static_cast<double>(rep.label_variance_by_step.size());
  rep.time_averaged_label_variance = s;
  const auto& delay = fed.options().delay;
  rep.transmission_delay_s = transmission_delay(rep.history.counters, delay);
  rep.delay_with_measured_overhead_s =
      delay_of_run(rep.history.counters, delay, {OverheadModel::Kind::measured, 0.0});
  rep.parameter_count = fed.global_model().parameter_count();
  return rep;
}

inline RunReport run_simulation(const io::RunConfig& cfg) {
  const Experiment ex = prepare_experiment(cfg);
  return run_experiment(ex, cfg);
}

}  // namespace cfcl
