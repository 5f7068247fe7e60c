#pragma once

// Device procedure and server loop: one-time reserve push, periodic
// purge-then-pull exchange, one local SGD step per device per time step,
// periodic cardinality-weighted aggregation and broadcast.
//
// The federation only ever sees unlabeled points (a pool indexed by PointId).
// Anything label-aware lives behind RunObserver.

#include <chrono>
#include <cmath>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "cfcl/clustering.hpp"
#include "cfcl/common.hpp"
#include "cfcl/exchange.hpp"
#include "cfcl/metrics.hpp"
#include "cfcl/model.hpp"
#include "cfcl/topology.hpp"

namespace cfcl {

enum class Strategy { cf_cl, uniform, fedavg, cf_cl_localmodel };
enum class BufferMode { limited, unlimited };
enum class ReserveSelection { kmeans, random };

inline std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::cf_cl: return "cf-cl";
    case Strategy::uniform: return "uniform";
    case Strategy::fedavg: return "fedavg";
    case Strategy::cf_cl_localmodel: return "cf-cl-localmodel";
  }
  return "cf-cl";
}

inline Strategy parse_strategy(std::string_view s) {
  if (s == "cf-cl") return Strategy::cf_cl;
  if (s == "uniform") return Strategy::uniform;
  if (s == "fedavg") return Strategy::fedavg;
  if (s == "cf-cl-localmodel") return Strategy::cf_cl_localmodel;
  throw ConfigError("strategy", "unknown strategy '" + std::string(s) + "'");
}

struct Schedule {
  std::size_t total_steps = 2500;   // T
  std::size_t aggregation_interval = 50;  // T_a
  std::size_t pull_interval = 10;   // T_p
  double lambda_slope = 6.0;
  double lambda_offset = 4.0;

  /// Selection temperature lambda_t = slope * t / T + offset.
  double temperature(std::size_t t) const {
    return lambda_slope * static_cast<double>(t) / static_cast<double>(total_steps) + lambda_offset;
  }
  bool is_pull_step(std::size_t t) const { return t % pull_interval == 0; }
  bool is_aggregation_step(std::size_t t) const { return t % aggregation_interval == 0; }

  void validate() const {
    if (total_steps < 1) throw ConfigError("schedule.T", "must be >= 1");
    if (aggregation_interval < 1) throw ConfigError("schedule.T_a", "must be >= 1");
    if (pull_interval < 1) throw ConfigError("schedule.T_p", "must be >= 1");
    if (!std::isfinite(lambda_slope) || !std::isfinite(lambda_offset))
      throw ConfigError("schedule.lambda", "must be finite");
  }
};

struct FederationOptions {
  Schedule schedule;
  Strategy strategy = Strategy::cf_cl;
  BufferMode buffer = BufferMode::limited;
  ReserveSelection reserve_selection = ReserveSelection::kmeans;
  std::size_t k_reserve = 500;
  std::size_t k_approx = 1000;
  std::size_t cluster_count = 4;
  std::size_t budget = 100;  // n_{i<-j}, same for every ordered pair
  double margin = 1.0;
  double learning_rate = 0.05;
  std::size_t batch_size = 32;
  std::vector<std::size_t> layer_dims{784, 128, 64};
  Activation activation = Activation::relu;
  std::vector<AugmentationSpec> augmentations{AugmentationSpec::noise(0.1), AugmentationSpec::scaling(0.8, 1.2),
                                              AugmentationSpec::masking(0.1)};
  KMeansOptions kmeans{};
  DelayParams delay{};
  OverheadModel overhead{};
  std::uint64_t seed = 1;
  std::size_t monitor_triplets = 256;  // sample size of the global loss estimate
  bool record_candidates = true;       // per-candidate exchange log rows
};

struct DeviceState {
  DeviceId id = 0;
  std::vector<PointId> initial_data;
  std::vector<PointId> pulled_buffer;
  /// Reserve points pushed to this device, keyed by the pushing neighbor.
  std::map<DeviceId, ReserveStore> reserve_stores;
  EncoderModel model;
  Rng rng;
  std::vector<std::size_t> cardinality_history;  // entry t-1 is |D_i^t|
  /// Transmitter-side candidate pool, refreshed at every aggregation.
  std::vector<PointId> approx_set;

  std::size_t training_size() const noexcept { return initial_data.size() + pulled_buffer.size(); }
  PointId training_point(std::size_t k) const {
    return k < initial_data.size() ? initial_data[k] : pulled_buffer[k - initial_data.size()];
  }
  std::vector<PointId> training_set() const {
    std::vector<PointId> out(initial_data);
    out.insert(out.end(), pulled_buffer.begin(), pulled_buffer.end());
    return out;
  }
};

struct StepLoss {
  std::size_t t;
  DeviceId device;
  double loss;
};

struct CandidateRecord {
  std::size_t t;
  DeviceId receiver;
  DeviceId transmitter;
  PointId candidate;
  double probability;
  bool chosen;
};

struct PullRecord {
  std::size_t t;
  DeviceId receiver;
  DeviceId transmitter;
  std::size_t n;
  Vector macro_probs;  // empty for the uniform strategy
  double entropy;      // of the single-draw candidate distribution
};

struct AggregationRecord {
  std::size_t gamma;
  std::size_t t;
  std::optional<double> accuracy;
  std::optional<double> label_variance_mean;
  double cumulative_delay_s;
  double global_loss;
};

struct RunHistory {
  std::vector<StepLoss> step_losses;
  std::vector<PullRecord> pulls;
  std::vector<CandidateRecord> candidates;
  std::vector<AggregationRecord> aggregations;
  ExchangeCounters counters;
  EncoderModel final_model;
};

struct EvalOutcome {
  std::optional<double> accuracy;
  std::optional<double> label_variance_mean;
};

/// Hooks for label-aware measurement. The federation passes only unlabeled
/// state; the observer maps PointIds to whatever it knows.
class RunObserver {
 public:
  virtual ~RunObserver() = default;
  virtual void after_step(std::size_t /*t*/, std::span<const DeviceState> /*devices*/) {}
  virtual EvalOutcome at_aggregation(std::size_t /*gamma*/, std::size_t /*t*/, const EncoderModel& /*global*/,
                                     std::span<const DeviceState> /*devices*/) {
    return {};
  }
};

/// Weighted elementwise mean; weights are normalized to sum 1.
inline EncoderModel aggregate(std::span<const EncoderModel> models, std::span<const double> weights) {
  if (models.empty()) throw std::invalid_argument("aggregate: no models");
  if (models.size() != weights.size()) throw std::invalid_argument("aggregate: one weight per model");
  double total = 0.0;
  for (double w : weights) {
    if (!(w > 0.0) || !std::isfinite(w)) throw std::invalid_argument("aggregate: weights must be positive");
    total += w;
  }
  EncoderModel out = models.front();
  out *= weights.front() / total;
  for (std::size_t i = 1; i < models.size(); ++i) {
    models.front().require_same_shape(models[i]);
    const double w = weights[i] / total;
    auto dst = out.params();
    const auto src = models[i].params();
    for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += w * src[k];
  }
  return out;
}

/// Mean of |D_i^t| over t in [(gamma-1) T_a + 1, gamma T_a].
inline double average_cardinality(std::span<const std::size_t> history, std::size_t gamma,
                                  std::size_t aggregation_interval) {
  if (gamma == 0 || aggregation_interval == 0) throw std::invalid_argument("average_cardinality: gamma, T_a >= 1");
  const std::size_t end = gamma * aggregation_interval;
  if (history.size() < end) throw std::invalid_argument("average_cardinality: history does not cover the window");
  double s = 0.0;
  for (std::size_t k = end - aggregation_interval; k < end; ++k) s += static_cast<double>(history[k]);
  return s / static_cast<double>(aggregation_interval);
}

/// Mean triplet loss of `model` over a sample of triplets.
inline double global_loss_estimate(const EncoderModel& model, std::span<const Triplet> sample, double margin) {
  if (sample.empty()) throw std::invalid_argument("global_loss_estimate: empty sample");
  double s = 0.0;
  for (const auto& tr : sample)
    s += triplet_loss(embed(model, tr.anchor), embed(model, tr.positive), embed(model, tr.negative), margin);
  return s / static_cast<double>(sample.size());
}

/// Local mini-batch: anchors uniform without replacement, one augmented
/// positive each, and one negative uniform over the training set excluding
/// the anchor's identity.
inline std::vector<Triplet> make_batch(std::span<const Vector> pool, const DeviceState& dev, std::size_t batch_size,
                                       std::span<const AugmentationSpec> augmentations, Rng& rng) {
  const std::size_t n = dev.training_size();
  if (n < 2) throw std::invalid_argument("make_batch: need at least two training points");
  std::vector<Triplet> batch;
  const auto anchors = sample_without_replacement(n, std::min(batch_size, n), rng);
  batch.reserve(anchors.size());
  for (auto a : anchors) {
    const PointId aid = dev.training_point(a);
    Triplet tr;
    tr.anchor = pool[aid];
    tr.positive = augment(pool[aid], augmentations, rng);
    PointId nid = aid;
    for (std::size_t tries = 0; nid == aid; ++tries) {
      if (tries > 64 * n) throw std::invalid_argument("make_batch: no negative with a distinct identity");
      nid = dev.training_point(uniform_index(rng, n));
    }
    tr.negative = pool[nid];
    batch.push_back(std::move(tr));
  }
  return batch;
}

class Federation {
 public:
  Federation(std::span<const Vector> pool, std::vector<std::vector<PointId>> device_data, Topology topology,
             FederationOptions opts)
      : pool_(pool), topology_(std::move(topology)), opts_(std::move(opts)) {
    validate(device_data);
    Rng init = derive_rng(opts_.seed, {stream::init});
    global_ = EncoderModel::random(opts_.layer_dims, opts_.activation, init);
    devices_.resize(device_data.size());
    for (DeviceId i = 0; i < devices_.size(); ++i) {
      auto& d = devices_[i];
      d.id = i;
      d.initial_data = std::move(device_data[i]);
      d.model = global_;
      d.rng = derive_rng(opts_.seed, {stream::sgd, i});
    }
    if (opts_.delay.param_count == 0) opts_.delay.param_count = global_.parameter_count();
    if (opts_.delay.elements_per_datapoint == 0) opts_.delay.elements_per_datapoint = opts_.layer_dims.front();
  }

  const std::vector<DeviceState>& devices() const noexcept { return devices_; }
  const EncoderModel& global_model() const noexcept { return global_; }
  const Topology& topology() const noexcept { return topology_; }
  const FederationOptions& options() const noexcept { return opts_; }

  bool exchanges_data() const noexcept {
    return opts_.strategy != Strategy::fedavg &&
           opts_.schedule.pull_interval < opts_.schedule.total_steps;
  }

  RunHistory run(RunObserver* observer = nullptr) {
    RunHistory h;
    const auto& sch = opts_.schedule;
    if (exchanges_data()) {
      push_reserves(h);
      refresh_approximations(0);
    }
    for (std::size_t t = 1; t <= sch.total_steps; ++t) {
      local_step(t, h);
      if (observer) observer->after_step(t, devices_);
      if (sch.is_aggregation_step(t)) {
        aggregate_and_broadcast(t, h);
        if (exchanges_data()) refresh_approximations(t);
        record_aggregation(t, h, observer);
      }
      // The pull at step t fills the buffer used from step t+1 on, after any
      // aggregation at t, so it always scores with the freshest global model.
      if (exchanges_data() && sch.is_pull_step(t) && t < sch.total_steps) pull_event(t, h);
    }
    h.final_model = global_;
    return h;
  }

 private:
  void validate(const std::vector<std::vector<PointId>>& data) const {
    opts_.schedule.validate();
    if (data.empty()) throw ConfigError("devices", "need at least one device");
    if (topology_.size() != data.size()) throw ConfigError("topology", "device count does not match topology");
    if (opts_.layer_dims.size() < 2) throw ConfigError("training.layer_dims", "need input and output dims");
    for (auto d : opts_.layer_dims)
      if (d == 0) throw ConfigError("training.layer_dims", "dims must be positive");
    if (opts_.batch_size < 1) throw ConfigError("training.batch_size", "must be >= 1");
    if (!(opts_.learning_rate >= 0.0)) throw ConfigError("training.learning_rate", "must be >= 0");
    if (!(opts_.margin >= 0.0)) throw ConfigError("training.margin", "must be >= 0");
    if (opts_.augmentations.empty()) throw ConfigError("augmentations", "need at least one augmentation");
    for (const auto& a : opts_.augmentations) a.validate();
    if (opts_.k_approx < 1) throw ConfigError("exchange.k_approx", "must be >= 1");
    if (opts_.budget > opts_.k_approx) throw ConfigError("exchange.budget", "must not exceed k_approx");
    if (opts_.cluster_count < 1) throw ConfigError("exchange.clusters", "must be >= 1");
    for (const auto& dev : data) {
      if (dev.size() < 2) throw ConfigError("dataset", "every device needs at least two points");
      for (auto id : dev) {
        if (id >= pool_.size()) throw ConfigError("dataset", "point id outside the pool");
        if (pool_[id].size() != opts_.layer_dims.front())
          throw ConfigError("training.layer_dims", "input dim does not match the data dimension");
      }
      if (opts_.strategy != Strategy::fedavg && (opts_.k_reserve < 1 || opts_.k_reserve > dev.size()))
        throw ConfigError("exchange.k_reserve", "must lie in [1, local dataset size]");
    }
  }

  void push_reserves(RunHistory& h) {
    for (auto& dev : devices_) {
      const auto& nbrs = topology_.neighbors(dev.id);
      if (nbrs.empty()) continue;
      Rng rng = derive_rng(opts_.seed, {stream::push, dev.id});
      std::vector<std::size_t> picked;
      if (opts_.reserve_selection == ReserveSelection::kmeans) {
        std::vector<Vector> pts;
        pts.reserve(dev.initial_data.size());
        for (auto id : dev.initial_data) pts.push_back(pool_[id]);
        picked = select_reserve(pts, opts_.k_reserve, rng, opts_.kmeans);
      } else {
        picked = select_reserve_random(dev.initial_data.size(), opts_.k_reserve, rng);
      }
      ReserveStore store{dev.id, 0, {}};
      for (auto k : picked) store.points.push_back(dev.initial_data[k]);
      for (auto j : nbrs) {
        store.holder = j;
        devices_[j].reserve_stores[dev.id] = store;
        h.counters.datapoints_pushed += store.points.size();
      }
    }
  }

  void refresh_approximations(std::size_t t) {
    for (auto& dev : devices_) {
      Rng rng = derive_rng(opts_.seed, {stream::approx, t, dev.id});
      const auto train = dev.training_set();
      dev.approx_set = approximate_dataset(train, opts_.k_approx, rng);
    }
  }

  void local_step(std::size_t t, RunHistory& h) {
    for (auto& dev : devices_) {
      dev.cardinality_history.push_back(dev.training_size());
      const auto batch = make_batch(pool_, dev, opts_.batch_size, opts_.augmentations, dev.rng);
      const double loss = apply_sgd_step(dev.model, batch, opts_.learning_rate, opts_.margin);
      h.step_losses.push_back({t, dev.id, loss});
    }
  }

  void aggregate_and_broadcast(std::size_t t, RunHistory& h) {
    const std::size_t gamma = t / opts_.schedule.aggregation_interval;
    std::vector<EncoderModel> models;
    std::vector<double> weights;
    for (const auto& dev : devices_) {
      models.push_back(dev.model);
      weights.push_back(average_cardinality(dev.cardinality_history, gamma, opts_.schedule.aggregation_interval));
    }
    global_ = aggregate(models, weights);
    for (auto& dev : devices_) dev.model = global_;
    h.counters.uplink_model_transfers += devices_.size();
  }

  void record_aggregation(std::size_t t, RunHistory& h, RunObserver* observer) {
    const std::size_t gamma = t / opts_.schedule.aggregation_interval;
    EvalOutcome eval;
    if (observer) eval = observer->at_aggregation(gamma, t, global_, devices_);
    Rng rng = derive_rng(opts_.seed, {stream::monitor, t});
    h.aggregations.push_back({gamma, t, eval.accuracy, eval.label_variance_mean,
                              delay_of_run(h.counters, opts_.delay, opts_.overhead), monitor_loss(rng)});
  }

  double monitor_loss(Rng& rng) const {
    // Triplets drawn from the union of initial datasets.
    std::size_t total = 0;
    for (const auto& d : devices_) total += d.initial_data.size();
    auto point_at = [&](std::size_t k) {
      for (const auto& d : devices_) {
        if (k < d.initial_data.size()) return d.initial_data[k];
        k -= d.initial_data.size();
      }
      return PointId{0};
    };
    std::vector<Triplet> sample;
    for (std::size_t s = 0; s < opts_.monitor_triplets; ++s) {
      const PointId a = point_at(uniform_index(rng, total));
      PointId n = a;
      while (n == a) n = point_at(uniform_index(rng, total));
      sample.push_back({pool_[a], augment(pool_[a], opts_.augmentations, rng), pool_[n]});
    }
    return sample.empty() ? 0.0 : global_loss_estimate(global_, sample, opts_.margin);
  }

  void pull_event(std::size_t t, RunHistory& h) {
    std::vector<std::vector<PointId>> next(devices_.size());
    for (auto& dev : devices_) {
      const DeviceId i = dev.id;
      if (opts_.buffer == BufferMode::unlimited) next[i] = dev.pulled_buffer;
      for (auto j : topology_.neighbors(i)) {
        const auto& tx = devices_[j];
        // Points either side already pushed to the other are never candidates.
        std::unordered_set<PointId> excluded;
        if (auto it = tx.reserve_stores.find(i); it != tx.reserve_stores.end())
          excluded.insert(it->second.points.begin(), it->second.points.end());
        if (auto it = dev.reserve_stores.find(j); it != dev.reserve_stores.end())
          excluded.insert(it->second.points.begin(), it->second.points.end());
        std::vector<PointId> candidates;
        for (auto id : tx.approx_set)
          if (!excluded.contains(id)) candidates.push_back(id);
        if (candidates.empty()) continue;
        const std::size_t n = std::min(opts_.budget, candidates.size());

        Rng rng = derive_rng(opts_.seed, {stream::pull, t, i, j});
        const auto start = std::chrono::steady_clock::now();
        std::vector<PointId> chosen;
        PullRecord rec{t, i, j, n, {}, 0.0};
        if (opts_.strategy == Strategy::uniform) {
          chosen = uniform_pull(candidates, n, rng);
          rec.entropy = std::log(static_cast<double>(candidates.size()));
          if (opts_.record_candidates) {
            std::unordered_set<PointId> picked(chosen.begin(), chosen.end());
            const double p = 1.0 / static_cast<double>(candidates.size());
            for (auto id : candidates) h.candidates.push_back({t, i, j, id, p, picked.contains(id)});
          }
        } else {
          const auto& reserve = tx.reserve_stores.at(i).points;
          const EncoderModel& scorer = opts_.strategy == Strategy::cf_cl_localmodel ? dev.model : global_;
          PullRequest req{pool_, candidates, reserve, n, opts_.schedule.temperature(t), opts_.cluster_count,
                          opts_.augmentations, opts_.margin, opts_.kmeans};
          auto res = pull_sample(req, scorer, rng);
          chosen = std::move(res.chosen);
          rec.macro_probs = res.plan.macro_probs;
          rec.entropy = entropy(res.plan.composed);
          if (opts_.record_candidates) {
            std::unordered_set<PointId> picked(chosen.begin(), chosen.end());
            for (std::size_t c = 0; c < candidates.size(); ++c)
              h.candidates.push_back({t, i, j, candidates[c], res.plan.composed[c], picked.contains(candidates[c])});
          }
        }
        h.counters.measured_compute_s +=
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        h.counters.datapoints_pulled += chosen.size();
        ++h.counters.pull_events;
        h.pulls.push_back(std::move(rec));
        next[i].insert(next[i].end(), chosen.begin(), chosen.end());
      }
    }
    for (auto& dev : devices_) dev.pulled_buffer = std::move(next[dev.id]);
  }

  std::span<const Vector> pool_;
  Topology topology_;
  FederationOptions opts_;
  EncoderModel global_;
  std::vector<DeviceState> devices_;
};

}  // namespace cfcl
