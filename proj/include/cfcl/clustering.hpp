#pragma once

// K-means++ seeding, Lloyd iterations and nearest-point selection.
// Distances are squared Euclidean throughout.

#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "cfcl/common.hpp"

namespace cfcl {

struct ClusterResult {
  std::vector<Vector> centroids;
  std::vector<std::size_t> assignments;
  double inertia = 0.0;
  std::size_t iterations = 0;
  /// Inertia after each assignment step, first entry from the seed.
  std::vector<double> inertia_trace;
};

struct KMeansOptions {
  std::size_t max_iters = 100;
  double tol = 1e-6;
};

namespace detail {
inline void check_points(std::span<const Vector> points, std::size_t k, const char* who) {
  if (points.empty()) throw std::invalid_argument(std::string(who) + ": empty point set");
  if (k == 0 || k > points.size())
    throw std::invalid_argument(std::string(who) + ": need 1 <= K <= number of points");
  for (const auto& p : points)
    if (p.size() != points.front().size()) throw ShapeError(std::string(who) + ": ragged points");
}

inline std::size_t nearest_centroid(std::span<const double> p, std::span<const Vector> centroids, double* dist) {
  std::size_t best = 0;
  double bd = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centroids.size(); ++c) {
    const double d = squared_distance(p, centroids[c]);
    if (d < bd) {
      bd = d;
      best = c;
    }
  }
  if (dist) *dist = bd;
  return best;
}
}  // namespace detail

/// K-means++ seeding with a caller-chosen first centroid index. Returns the
/// indices of the chosen points in draw order.
inline std::vector<std::size_t> kmeanspp_seed_indices(std::span<const Vector> points, std::size_t k,
                                                      std::size_t first, Rng& rng) {
  detail::check_points(points, k, "kmeanspp_seed");
  if (first >= points.size()) throw std::out_of_range("kmeanspp_seed: first index out of range");
  std::vector<std::size_t> chosen{first};
  std::vector<char> taken(points.size(), 0);
  taken[first] = 1;
  std::vector<double> d2(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) d2[i] = squared_distance(points[i], points[first]);
  while (chosen.size() < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i)
      if (!taken[i]) total += d2[i];
    std::size_t pick;
    if (total > 0.0) {
      std::vector<double> w(points.size(), 0.0);
      for (std::size_t i = 0; i < points.size(); ++i)
        if (!taken[i]) w[i] = d2[i];
      pick = draw_weighted(w, rng);
    } else {
      // Remaining points coincide with chosen centroids: pick uniformly among unused.
      std::vector<std::size_t> rest;
      for (std::size_t i = 0; i < points.size(); ++i)
        if (!taken[i]) rest.push_back(i);
      pick = rest[uniform_index(rng, rest.size())];
    }
    chosen.push_back(pick);
    taken[pick] = 1;
    for (std::size_t i = 0; i < points.size(); ++i)
      d2[i] = std::min(d2[i], squared_distance(points[i], points[pick]));
  }
  return chosen;
}

inline std::vector<Vector> kmeanspp_seed(std::span<const Vector> points, std::size_t k, Rng& rng) {
  detail::check_points(points, k, "kmeanspp_seed");
  const std::size_t first = uniform_index(rng, points.size());
  std::vector<Vector> out;
  for (auto i : kmeanspp_seed_indices(points, k, first, rng)) out.push_back(points[i]);
  return out;
}

/// Assigns every point to its nearest centroid (ties to the lowest index).
/// Returns the inertia.
inline double assign_points(std::span<const Vector> points, std::span<const Vector> centroids,
                            std::vector<std::size_t>& assignments) {
  assignments.resize(points.size());
  double inertia = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    double d;
    assignments[i] = detail::nearest_centroid(points[i], centroids, &d);
    inertia += d;
  }
  return inertia;
}

/// Lloyd iterations from a K-means++ seed.
inline ClusterResult kmeans(std::span<const Vector> points, std::size_t k, Rng& rng, KMeansOptions opts = {}) {
  detail::check_points(points, k, "kmeans");
  const std::size_t dim = points.front().size();
  ClusterResult res;
  res.centroids = kmeanspp_seed(points, k, rng);
  res.inertia = assign_points(points, res.centroids, res.assignments);
  res.inertia_trace.push_back(res.inertia);

  for (std::size_t it = 0; it < opts.max_iters; ++it) {
    std::vector<Vector> next(k, Vector(dim, 0.0));
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < points.size(); ++i) {
      auto& c = next[res.assignments[i]];
      for (std::size_t d = 0; d < dim; ++d) c[d] += points[i][d];
      ++counts[res.assignments[i]];
    }
    std::vector<char> reused(points.size(), 0);
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] > 0) {
        for (double& v : next[c]) v /= static_cast<double>(counts[c]);
        continue;
      }
      // Empty cluster: move it onto the point farthest from its current centroid.
      std::size_t far = 0;
      double fd = -1.0;
      for (std::size_t i = 0; i < points.size(); ++i) {
        if (reused[i]) continue;
        const double d = squared_distance(points[i], res.centroids[res.assignments[i]]);
        if (d > fd) {
          fd = d;
          far = i;
        }
      }
      reused[far] = 1;
      next[c] = points[far];
    }
    double shift = 0.0;
    for (std::size_t c = 0; c < k; ++c) shift = std::max(shift, std::sqrt(squared_distance(next[c], res.centroids[c])));
    res.centroids = std::move(next);
    res.inertia = assign_points(points, res.centroids, res.assignments);
    res.inertia_trace.push_back(res.inertia);
    res.iterations = it + 1;
    if (shift < opts.tol) break;
  }
  return res;
}

/// For each centroid in order, the index of the nearest point not already
/// taken by an earlier centroid. Ties go to the lowest index.
inline std::vector<std::size_t> nearest_points_to_centroids(std::span<const Vector> points,
                                                            std::span<const Vector> centroids) {
  if (points.empty() || centroids.empty()) throw std::invalid_argument("nearest_points_to_centroids: empty input");
  if (centroids.size() > points.size())
    throw std::invalid_argument("nearest_points_to_centroids: more centroids than points");
  std::vector<char> used(points.size(), 0);
  std::vector<std::size_t> out;
  out.reserve(centroids.size());
  for (const auto& c : centroids) {
    std::size_t best = points.size();
    double bd = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < points.size(); ++i) {
      if (used[i]) continue;
      const double d = squared_distance(points[i], c);
      if (d < bd) {
        bd = d;
        best = i;
      }
    }
    used[best] = 1;
    out.push_back(best);
  }
  return out;
}

}  // namespace cfcl
