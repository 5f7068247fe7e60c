#pragma once

// Push-pull datapoint exchange: reserve selection (push), dataset
// approximation, and the two-stage macro/micro importance sampler used by a
// transmitter to answer a pull request.

#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "cfcl/clustering.hpp"
#include "cfcl/common.hpp"
#include "cfcl/model.hpp"

namespace cfcl {

/// Points pushed once by `owner` and held by `holder` for importance scoring.
struct ReserveStore {
  DeviceId owner = 0;
  DeviceId holder = 0;
  std::vector<PointId> points;
};

/// Picks K representative members of `dataset`: K-means with K clusters on the
/// raw points, then the nearest distinct member to each centroid. Returns
/// indices into `dataset`.
inline std::vector<std::size_t> select_reserve(std::span<const Vector> dataset, std::size_t k_reserve, Rng& rng,
                                               KMeansOptions opts = {}) {
  if (k_reserve == 0 || k_reserve > dataset.size())
    throw std::invalid_argument("select_reserve: need 1 <= K_reserve <= dataset size");
  if (k_reserve == dataset.size()) {
    std::vector<std::size_t> all(dataset.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    return all;
  }
  const auto clusters = kmeans(dataset, k_reserve, rng, opts);
  return nearest_points_to_centroids(dataset, clusters.centroids);
}

/// Uniform reserve selection without replacement (ablation baseline).
inline std::vector<std::size_t> select_reserve_random(std::size_t dataset_size, std::size_t k_reserve, Rng& rng) {
  if (k_reserve == 0 || k_reserve > dataset_size)
    throw std::invalid_argument("select_reserve_random: need 1 <= K_reserve <= dataset size");
  return sample_without_replacement(dataset_size, k_reserve, rng);
}

/// Uniform subsample of min(K, |dataset|) ids, without replacement.
inline std::vector<PointId> approximate_dataset(std::span<const PointId> dataset, std::size_t k_approx, Rng& rng) {
  if (dataset.empty()) throw std::invalid_argument("approximate_dataset: empty dataset");
  if (k_approx == 0) throw std::invalid_argument("approximate_dataset: K_approx must be positive");
  if (k_approx >= dataset.size()) return {dataset.begin(), dataset.end()};
  std::vector<PointId> out;
  out.reserve(k_approx);
  for (auto i : sample_without_replacement(dataset.size(), k_approx, rng)) out.push_back(dataset[i]);
  return out;
}

struct ClusterCounts {
  std::size_t approx = 0;  // candidates in the cluster
  std::size_t push = 0;    // receiver's reserve points in the cluster
};

/// X(l) = approx / (approx + push), P(l) = X(l) / sum X. Clusters without
/// candidates get zero probability.
inline Vector macro_probabilities(std::span<const ClusterCounts> counts) {
  Vector x(counts.size(), 0.0);
  double total = 0.0;
  for (std::size_t l = 0; l < counts.size(); ++l) {
    if (counts[l].approx == 0) continue;
    x[l] = static_cast<double>(counts[l].approx) / static_cast<double>(counts[l].approx + counts[l].push);
    total += x[l];
  }
  if (!(total > 0.0)) throw std::invalid_argument("macro_probabilities: no cluster holds a candidate");
  for (double& v : x) v /= total;
  return x;
}

/// softmax(lambda * loss) with max subtraction.
inline Vector micro_probabilities(std::span<const double> losses, double temperature) {
  if (losses.empty()) throw std::invalid_argument("micro_probabilities: empty cluster");
  if (!std::isfinite(temperature)) throw std::invalid_argument("micro_probabilities: non-finite temperature");
  double hi = -std::numeric_limits<double>::infinity();
  for (double l : losses) hi = std::max(hi, temperature * l);
  Vector p(losses.size());
  double z = 0.0;
  for (std::size_t k = 0; k < losses.size(); ++k) z += p[k] = std::exp(temperature * losses[k] - hi);
  for (double& v : p) v /= z;
  return p;
}

/// Scores candidate negatives against a fixed set of reserve anchors. The
/// anchors' augmented positives are drawn once at construction (one draw per
/// anchor, in reserve order) and shared by every candidate scored.
class ReserveScorer {
 public:
  ReserveScorer(const EncoderModel& model, std::span<const Vector> reserve,
                std::span<const AugmentationSpec> augmentations, double margin, Rng& rng)
      : margin_(margin) {
    if (reserve.empty()) throw std::invalid_argument("expected_negative_loss: empty reserve");
    anchors_.reserve(reserve.size());
    positives_.reserve(reserve.size());
    for (const auto& d : reserve) {
      anchors_.push_back(embed(model, d));
      positives_.push_back(embed(model, augment(d, augmentations, rng)));
    }
  }

  std::size_t size() const noexcept { return anchors_.size(); }
  const std::vector<Vector>& anchor_embeddings() const noexcept { return anchors_; }

  /// Mean triplet loss with the candidate (given as an embedding) as negative.
  double expected_loss(std::span<const double> candidate_embedding) const {
    double s = 0.0;
    for (std::size_t k = 0; k < anchors_.size(); ++k)
      s += triplet_loss(anchors_[k], positives_[k], candidate_embedding, margin_);
    return s / static_cast<double>(anchors_.size());
  }

 private:
  double margin_;
  std::vector<Vector> anchors_;
  std::vector<Vector> positives_;
};

inline double expected_negative_loss(const EncoderModel& model, std::span<const Vector> reserve,
                                     std::span<const double> candidate, std::span<const AugmentationSpec> augmentations,
                                     double margin, Rng& rng) {
  ReserveScorer scorer(model, reserve, augmentations, margin, rng);
  return scorer.expected_loss(embed(model, candidate));
}

struct SamplingPlan {
  ClusterResult clusters;                  // over reserve embeddings followed by candidate embeddings
  std::vector<ClusterCounts> cluster_counts;
  Vector macro_probs;                      // per cluster
  std::vector<PointId> candidate_ids;
  std::vector<std::size_t> candidate_cluster;
  Vector expected_losses;                  // per candidate
  Vector micro_probs;                      // per candidate, normalized within its cluster
  Vector composed;                         // per candidate, micro * macro
};

/// Fills the macro, micro and composed fields of `plan` from the candidate
/// cluster labels, per-cluster counts and expected losses already present.
inline void compose_plan(SamplingPlan& plan, double temperature) {
  const std::size_t n = plan.candidate_ids.size();
  if (plan.candidate_cluster.size() != n || plan.expected_losses.size() != n)
    throw ShapeError("compose_plan: candidate arrays disagree in length");
  plan.macro_probs = macro_probabilities(plan.cluster_counts);
  plan.micro_probs.assign(n, 0.0);
  plan.composed.assign(n, 0.0);
  for (std::size_t l = 0; l < plan.cluster_counts.size(); ++l) {
    std::vector<std::size_t> members;
    Vector losses;
    for (std::size_t c = 0; c < n; ++c)
      if (plan.candidate_cluster[c] == l) {
        members.push_back(c);
        losses.push_back(plan.expected_losses[c]);
      }
    if (members.empty()) continue;
    const Vector p = micro_probabilities(losses, temperature);
    for (std::size_t k = 0; k < members.size(); ++k) {
      plan.micro_probs[members[k]] = p[k];
      plan.composed[members[k]] = p[k] * plan.macro_probs[l];
    }
  }
}

/// n sequential draws without replacement, renormalizing over the remaining
/// candidates after each draw. Returns positions into `probs` in draw order.
inline std::vector<std::size_t> draw_without_replacement(std::span<const double> probs, std::size_t n, Rng& rng) {
  if (n > probs.size()) throw std::invalid_argument("pull_sample: budget exceeds candidate count");
  Vector w(probs.begin(), probs.end());
  std::vector<char> removed(w.size(), 0);
  std::vector<std::size_t> out;
  out.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    double total = 0.0;
    for (double v : w) total += v;
    std::size_t pick;
    if (total > 0.0) {
      pick = draw_weighted(w, rng);
    } else {
      // Remaining candidates all carry zero probability; take them uniformly.
      std::vector<std::size_t> rest;
      for (std::size_t i = 0; i < w.size(); ++i)
        if (!removed[i]) rest.push_back(i);
      pick = rest[uniform_index(rng, rest.size())];
    }
    out.push_back(pick);
    removed[pick] = 1;
    w[pick] = 0.0;
  }
  return out;
}

/// Shannon entropy (nats) of a probability vector.
inline double entropy(std::span<const double> p) {
  double h = 0.0;
  for (double v : p)
    if (v > 0.0) h -= v * std::log(v);
  return h;
}

struct PullRequest {
  std::span<const Vector> pool;            // datapoint storage indexed by PointId
  std::span<const PointId> candidates;     // transmitter's approximation set (minus exclusions)
  std::span<const PointId> reserve;        // receiver's points held by the transmitter
  std::size_t budget = 0;
  double temperature = 0.0;
  std::size_t cluster_count = 4;
  std::span<const AugmentationSpec> augmentations;
  double margin = 1.0;
  KMeansOptions kmeans{};
};

struct PullResult {
  std::vector<PointId> chosen;
  SamplingPlan plan;
};

/// Importance-sampled answer to a pull request. `model` scores the candidates
/// (the latest global model, or the receiver's local model in that variant).
inline PullResult pull_sample(const PullRequest& req, const EncoderModel& model, Rng& rng) {
  if (req.reserve.empty()) throw std::invalid_argument("pull_sample: empty reserve");
  if (req.candidates.empty()) throw std::invalid_argument("pull_sample: no candidates");
  if (req.budget > req.candidates.size()) throw std::invalid_argument("pull_sample: budget exceeds candidate count");
  if (req.cluster_count == 0) throw std::invalid_argument("pull_sample: cluster_count must be positive");

  std::vector<Vector> reserve_points;
  reserve_points.reserve(req.reserve.size());
  for (auto id : req.reserve) reserve_points.push_back(req.pool[id]);
  const ReserveScorer scorer(model, reserve_points, req.augmentations, req.margin, rng);

  PullResult out;
  SamplingPlan& plan = out.plan;
  plan.candidate_ids.assign(req.candidates.begin(), req.candidates.end());

  std::vector<Vector> embeddings = scorer.anchor_embeddings();
  const std::size_t r = embeddings.size();
  for (auto id : req.candidates) embeddings.push_back(embed(model, req.pool[id]));

  const std::size_t k = std::min(req.cluster_count, embeddings.size());
  plan.clusters = kmeans(embeddings, k, rng, req.kmeans);
  plan.cluster_counts.assign(k, {});
  for (std::size_t i = 0; i < r; ++i) ++plan.cluster_counts[plan.clusters.assignments[i]].push;
  plan.candidate_cluster.resize(req.candidates.size());
  plan.expected_losses.resize(req.candidates.size());
  for (std::size_t c = 0; c < req.candidates.size(); ++c) {
    const std::size_t l = plan.clusters.assignments[r + c];
    plan.candidate_cluster[c] = l;
    ++plan.cluster_counts[l].approx;
    plan.expected_losses[c] = scorer.expected_loss(embeddings[r + c]);
  }
  compose_plan(plan, req.temperature);

  for (auto pos : draw_without_replacement(plan.composed, req.budget, rng)) out.chosen.push_back(plan.candidate_ids[pos]);
  return out;
}

/// Baseline: `budget` candidates uniformly without replacement.
inline std::vector<PointId> uniform_pull(std::span<const PointId> candidates, std::size_t budget, Rng& rng) {
  if (budget > candidates.size()) throw std::invalid_argument("uniform_pull: budget exceeds candidate count");
  std::vector<PointId> out;
  for (auto i : sample_without_replacement(candidates.size(), budget, rng)) out.push_back(candidates[i]);
  return out;
}

}  // namespace cfcl
