#pragma once

// Run configuration: a JSON document whose every key is optional and
// defaults to the reference experiment setup. Unknown keys are rejected so
// typos fail loudly.

#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cfcl/federation.hpp"
#include "cfcl/metrics.hpp"

namespace cfcl::io {

struct AugmentationConfig {
  AugmentationSpec spec;
  /// For gaussian noise: sigma is a fraction of the mean per-dimension data std.
  bool sigma_relative = false;
};

struct DatasetConfig {
  std::string source = "synthetic";  // synthetic | idx
  std::size_t classes = 10;
  std::size_t per_class = 6000;
  std::size_t dim = 16;
  double sigma = 1.0;
  double separation = 4.0;
  std::string images_path;
  std::string labels_path;
  std::size_t labels_per_device = 2;
  std::size_t per_device = 6000;
  std::size_t probe_train_per_class = 100;
  std::size_t probe_test_per_class = 100;
};

struct TopologyConfig {
  std::string kind = "rgg";  // rgg | explicit
  double avg_degree = 3.0;
  double tolerance = 0.5;
  std::size_t max_retries = 100;
  std::vector<std::vector<DeviceId>> adjacency;
};

struct EvalConfig {
  bool enabled = true;
  std::size_t stride = 1;  // probe every stride-th aggregation
  ProbeOptions probe{};
};

struct RunConfig {
  FederationOptions fed;
  std::vector<AugmentationConfig> augmentations{
      {AugmentationSpec::noise(0.1), true}, {AugmentationSpec::scaling(0.8, 1.2), false},
      {AugmentationSpec::masking(0.1), false}};
  std::size_t devices = 10;
  TopologyConfig topology;
  DatasetConfig dataset;
  EvalConfig eval;

  RunConfig() {
    fed.layer_dims = {16, 32, 8};
  }
};

namespace detail {

/// Reads keys from one JSON object, remembering which were consumed.
class Section {
 public:
  Section(const nlohmann::json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "expected an object");
  }

  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      out = it->template get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(field(key), std::string("wrong type: ") + e.what());
    }
  }

  bool has(const char* key) const { return j_.contains(key); }
  const nlohmann::json* child(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }
  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.contains(it.key())) throw ConfigError(field(it.key()), "unknown key");
  }

 private:
  const nlohmann::json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

}  // namespace detail

inline AugmentationConfig parse_augmentation(const nlohmann::json& j, const std::string& path) {
  detail::Section s(j, path);
  std::string kind;
  s.get("kind", kind);
  AugmentationConfig a;
  if (kind == "noise") {
    double sigma = -1, frac = -1;
    s.get("sigma", sigma);
    s.get("sigma_fraction", frac);
    if ((sigma >= 0) == (frac >= 0)) throw ConfigError(path, "noise needs exactly one of sigma, sigma_fraction");
    a.spec = AugmentationSpec::noise(sigma >= 0 ? sigma : frac);
    a.sigma_relative = frac >= 0;
  } else if (kind == "scaling") {
    double lo = 0.8, hi = 1.2;
    s.get("low", lo);
    s.get("high", hi);
    a.spec = AugmentationSpec::scaling(lo, hi);
  } else if (kind == "masking") {
    double f = 0.1;
    s.get("fraction", f);
    a.spec = AugmentationSpec::masking(f);
  } else {
    throw ConfigError(s.field("kind"), "expected noise | scaling | masking");
  }
  s.finish();
  try {
    a.spec.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(path, e.what());
  }
  return a;
}

inline void validate(const RunConfig& c) {
  c.fed.schedule.validate();
  if (c.devices < 1) throw ConfigError("devices", "must be >= 1");
  const auto& d = c.dataset;
  if (d.source != "synthetic" && d.source != "idx") throw ConfigError("dataset.source", "expected synthetic | idx");
  if (d.source == "synthetic") {
    if (d.classes < 1) throw ConfigError("dataset.classes", "must be >= 1");
    if (d.dim < 1) throw ConfigError("dataset.dim", "must be >= 1");
    if (!(d.sigma >= 0)) throw ConfigError("dataset.sigma", "must be >= 0");
    if (c.fed.layer_dims.front() != d.dim) throw ConfigError("training.layer_dims", "first entry must equal dataset.dim");
    if (d.labels_per_device > d.classes) throw ConfigError("dataset.labels_per_device", "exceeds class count");
  } else if (d.images_path.empty() || d.labels_path.empty()) {
    throw ConfigError("dataset.images", "idx source needs images and labels paths");
  }
  if (d.labels_per_device < 1) throw ConfigError("dataset.labels_per_device", "must be >= 1");
  if (d.per_device < 2) throw ConfigError("dataset.per_device", "must be >= 2");
  const auto& f = c.fed;
  if (f.strategy != Strategy::fedavg) {
    if (f.k_reserve < 1 || f.k_reserve > d.per_device)
      throw ConfigError("exchange.k_reserve", "must lie in [1, dataset.per_device]");
  }
  if (f.k_approx < 1) throw ConfigError("exchange.k_approx", "must be >= 1");
  if (f.budget > f.k_approx) throw ConfigError("exchange.budget", "must not exceed exchange.k_approx");
  if (f.cluster_count < 1) throw ConfigError("exchange.clusters", "must be >= 1");
  if (f.batch_size < 1) throw ConfigError("training.batch_size", "must be >= 1");
  if (!(f.learning_rate >= 0)) throw ConfigError("training.learning_rate", "must be >= 0");
  if (!(f.margin >= 0)) throw ConfigError("training.margin", "must be >= 0");
  if (f.layer_dims.size() < 2) throw ConfigError("training.layer_dims", "need input and output dims");
  for (auto x : f.layer_dims)
    if (x == 0) throw ConfigError("training.layer_dims", "dims must be positive");
  if (c.augmentations.empty()) throw ConfigError("augmentations", "need at least one augmentation");
  if (c.topology.kind == "rgg") {
    if (c.devices >= 2 && (!(c.topology.avg_degree > 0) || c.topology.avg_degree > static_cast<double>(c.devices - 1)))
      throw ConfigError("topology.avg_degree", "must lie in (0, devices-1]");
  } else if (c.topology.kind == "explicit") {
    if (c.topology.adjacency.size() != c.devices)
      throw ConfigError("topology.adjacency", "need one neighbor list per device");
    for (const auto& lst : c.topology.adjacency)
      for (auto j : lst)
        if (j >= c.devices) throw ConfigError("topology.adjacency", "neighbor id out of range");
  } else {
    throw ConfigError("topology.kind", "expected rgg | explicit");
  }
  if (c.eval.stride < 1) throw ConfigError("evaluation.stride", "must be >= 1");
  if (c.eval.probe.iterations < 1) throw ConfigError("evaluation.probe_iterations", "must be >= 1");
  c.fed.delay.validate();
}

inline RunConfig parse_config(const nlohmann::json& root) {
  RunConfig c;
  detail::Section s(root, "");
  std::uint64_t seed = c.fed.seed;
  s.get("seed", seed);
  c.fed.seed = seed;
  std::string strategy{to_string(c.fed.strategy)};
  s.get("strategy", strategy);
  c.fed.strategy = parse_strategy(strategy);
  s.get("devices", c.devices);

  if (const auto* j = s.child("schedule")) {
    detail::Section t(*j, "schedule");
    t.get("T", c.fed.schedule.total_steps);
    t.get("T_a", c.fed.schedule.aggregation_interval);
    t.get("T_p", c.fed.schedule.pull_interval);
    t.get("lambda_slope", c.fed.schedule.lambda_slope);
    t.get("lambda_offset", c.fed.schedule.lambda_offset);
    t.finish();
  }
  if (const auto* j = s.child("topology")) {
    detail::Section t(*j, "topology");
    t.get("kind", c.topology.kind);
    t.get("avg_degree", c.topology.avg_degree);
    t.get("tolerance", c.topology.tolerance);
    t.get("max_retries", c.topology.max_retries);
    t.get("adjacency", c.topology.adjacency);
    t.finish();
  }
  if (const auto* j = s.child("exchange")) {
    detail::Section t(*j, "exchange");
    t.get("k_reserve", c.fed.k_reserve);
    t.get("k_approx", c.fed.k_approx);
    t.get("clusters", c.fed.cluster_count);
    t.get("budget", c.fed.budget);
    std::string reserve = c.fed.reserve_selection == ReserveSelection::kmeans ? "kmeans" : "random";
    t.get("reserve_selection", reserve);
    if (reserve == "kmeans")
      c.fed.reserve_selection = ReserveSelection::kmeans;
    else if (reserve == "random")
      c.fed.reserve_selection = ReserveSelection::random;
    else
      throw ConfigError("exchange.reserve_selection", "expected kmeans | random");
    std::string buffer = c.fed.buffer == BufferMode::limited ? "limited" : "unlimited";
    t.get("buffer", buffer);
    if (buffer == "limited")
      c.fed.buffer = BufferMode::limited;
    else if (buffer == "unlimited")
      c.fed.buffer = BufferMode::unlimited;
    else
      throw ConfigError("exchange.buffer", "expected limited | unlimited");
    t.get("kmeans_max_iters", c.fed.kmeans.max_iters);
    t.get("kmeans_tol", c.fed.kmeans.tol);
    t.get("record_candidates", c.fed.record_candidates);
    t.finish();
  }
  if (const auto* j = s.child("training")) {
    detail::Section t(*j, "training");
    t.get("margin", c.fed.margin);
    t.get("learning_rate", c.fed.learning_rate);
    t.get("batch_size", c.fed.batch_size);
    t.get("layer_dims", c.fed.layer_dims);
    std::string act{to_string(c.fed.activation)};
    t.get("activation", act);
    c.fed.activation = parse_activation(act);
    t.get("monitor_triplets", c.fed.monitor_triplets);
    t.finish();
  }
  if (const auto* j = s.child("augmentations")) {
    if (!j->is_array()) throw ConfigError("augmentations", "expected an array");
    c.augmentations.clear();
    for (std::size_t k = 0; k < j->size(); ++k)
      c.augmentations.push_back(parse_augmentation((*j)[k], "augmentations[" + std::to_string(k) + "]"));
  }
  if (const auto* j = s.child("dataset")) {
    detail::Section t(*j, "dataset");
    auto& d = c.dataset;
    t.get("source", d.source);
    t.get("classes", d.classes);
    t.get("per_class", d.per_class);
    t.get("dim", d.dim);
    t.get("sigma", d.sigma);
    t.get("separation", d.separation);
    t.get("images", d.images_path);
    t.get("labels", d.labels_path);
    t.get("labels_per_device", d.labels_per_device);
    t.get("per_device", d.per_device);
    t.get("probe_train_per_class", d.probe_train_per_class);
    t.get("probe_test_per_class", d.probe_test_per_class);
    t.finish();
  }
  if (const auto* j = s.child("evaluation")) {
    detail::Section t(*j, "evaluation");
    t.get("enabled", c.eval.enabled);
    t.get("stride", c.eval.stride);
    t.get("probe_iterations", c.eval.probe.iterations);
    t.get("probe_learning_rate", c.eval.probe.learning_rate);
    t.get("probe_batch", c.eval.probe.batch_size);
    t.finish();
  }
  if (const auto* j = s.child("delay")) {
    detail::Section t(*j, "delay");
    t.get("rate_bps", c.fed.delay.rate_bps);
    t.get("bits_per_param", c.fed.delay.bits_per_param);
    t.get("bits_per_element", c.fed.delay.bits_per_element);
    t.get("param_count", c.fed.delay.param_count);
    t.get("elements_per_datapoint", c.fed.delay.elements_per_datapoint);
    std::string overhead = "none";
    t.get("overhead", overhead);
    if (overhead == "none")
      c.fed.overhead.kind = OverheadModel::Kind::none;
    else if (overhead == "fixed")
      c.fed.overhead.kind = OverheadModel::Kind::fixed;
    else if (overhead == "measured")
      c.fed.overhead.kind = OverheadModel::Kind::measured;
    else
      throw ConfigError("delay.overhead", "expected none | fixed | measured");
    t.get("overhead_s_per_pull", c.fed.overhead.seconds_per_pull);
    t.finish();
  }
  s.finish();
  const bool dims_given = root.contains("training") && root["training"].contains("layer_dims");
  if (c.dataset.source == "synthetic" && !dims_given) c.fed.layer_dims.front() = c.dataset.dim;
  validate(c);
  return c;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config", "cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config", std::string("parse error: ") + e.what());
  }
  return parse_config(j);
}

}  // namespace cfcl::io
