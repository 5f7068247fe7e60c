#pragma once

// Device-to-device communication graph: random geometric graphs in the unit
// square tuned to a target average degree, or an explicit adjacency list.

#include <array>
#include <cmath>
#include <ostream>
#include <set>
#include <vector>

#include "cfcl/common.hpp"

namespace cfcl {

class TopologyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Topology {
 public:
  Topology() = default;

  /// Graph from explicit undirected edges. Self-loops are rejected and
  /// duplicate edges collapse.
  Topology(std::size_t n, const std::vector<std::pair<DeviceId, DeviceId>>& edges) : adj_(n) {
    for (auto [a, b] : edges) add_edge(a, b);
  }

  static Topology from_adjacency(const std::vector<std::vector<DeviceId>>& lists) {
    Topology t;
    t.adj_.resize(lists.size());
    for (DeviceId i = 0; i < lists.size(); ++i)
      for (auto j : lists[i]) t.add_edge(i, j);
    return t;
  }

  /// Connects every pair within `radius` (inclusive).
  static Topology geometric(std::vector<std::array<double, 2>> positions, double radius) {
    Topology t;
    t.adj_.resize(positions.size());
    for (DeviceId i = 0; i < positions.size(); ++i)
      for (DeviceId j = i + 1; j < positions.size(); ++j)
        if (distance(positions[i], positions[j]) <= radius) t.add_edge(i, j);
    t.positions_ = std::move(positions);
    t.radius_ = radius;
    return t;
  }

  std::size_t size() const noexcept { return adj_.size(); }
  const std::vector<std::array<double, 2>>& positions() const noexcept { return positions_; }
  double radius() const noexcept { return radius_; }

  const std::set<DeviceId>& neighbors(DeviceId i) const {
    if (i >= adj_.size()) throw std::out_of_range("neighbors: invalid device id " + std::to_string(i));
    return adj_[i];
  }

  bool has_edge(DeviceId i, DeviceId j) const { return neighbors(i).contains(j); }

  std::size_t edge_count() const noexcept {
    std::size_t m = 0;
    for (const auto& s : adj_) m += s.size();
    return m / 2;
  }

  double average_degree() const noexcept {
    return adj_.empty() ? 0.0 : 2.0 * static_cast<double>(edge_count()) / static_cast<double>(adj_.size());
  }

  bool connected() const {
    if (adj_.empty()) return true;
    std::vector<char> seen(adj_.size(), 0);
    std::vector<DeviceId> stack{0};
    seen[0] = 1;
    std::size_t count = 1;
    while (!stack.empty()) {
      const auto v = stack.back();
      stack.pop_back();
      for (auto w : adj_[v])
        if (!seen[w]) {
          seen[w] = 1;
          ++count;
          stack.push_back(w);
        }
    }
    return count == adj_.size();
  }

  std::vector<std::pair<DeviceId, DeviceId>> edges() const {
    std::vector<std::pair<DeviceId, DeviceId>> out;
    for (DeviceId i = 0; i < adj_.size(); ++i)
      for (auto j : adj_[i])
        if (i < j) out.emplace_back(i, j);
    return out;
  }

  /// CSV dump, one undirected edge per row.
  void write_edges_csv(std::ostream& os) const {
    os << "i,j\n";
    for (auto [i, j] : edges()) os << i << ',' << j << '\n';
  }

  static double distance(const std::array<double, 2>& a, const std::array<double, 2>& b) {
    return std::hypot(a[0] - b[0], a[1] - b[1]);
  }

 private:
  void add_edge(DeviceId a, DeviceId b) {
    if (a >= adj_.size() || b >= adj_.size()) throw TopologyError("edge endpoint out of range");
    if (a == b) throw TopologyError("self-loop on device " + std::to_string(a));
    adj_[a].insert(b);
    adj_[b].insert(a);
  }

  std::vector<std::set<DeviceId>> adj_;
  std::vector<std::array<double, 2>> positions_;
  double radius_ = 0.0;
};

struct RggOptions {
  double tolerance = 0.5;
  std::size_t max_retries = 100;
  bool require_connected = true;
};

/// Random geometric graph whose realized average degree is within
/// `tolerance` of the target. Positions are uniform in the unit square; the
/// radius is the smallest sorted pairwise distance (found by bisection) that
/// reaches the target band. If that graph is disconnected, larger radii still
/// inside the band are tried before the positions are resampled.
inline Topology generate_rgg(std::size_t n, double target_avg_degree, Rng& rng, RggOptions opts = {}) {
  if (n < 2) throw std::invalid_argument("generate_rgg: need at least 2 devices");
  if (!(target_avg_degree > 0.0) || target_avg_degree > static_cast<double>(n - 1))
    throw std::invalid_argument("generate_rgg: need 0 < target average degree <= n-1");

  const double nd = static_cast<double>(n);
  for (std::size_t attempt = 0; attempt < opts.max_retries; ++attempt) {
    std::vector<std::array<double, 2>> pos(n);
    for (auto& p : pos) p = {uniform01(rng), uniform01(rng)};
    std::vector<double> dist;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) dist.push_back(Topology::distance(pos[i], pos[j]));
    std::sort(dist.begin(), dist.end());

    // Average degree with radius dist[k] is at least 2(k+1)/n (ties can add more).
    auto degree_at = [&](std::size_t k) {
      const auto last = std::upper_bound(dist.begin(), dist.end(), dist[k]);
      return 2.0 * static_cast<double>(last - dist.begin()) / nd;
    };
    std::size_t lo = 0, hi = dist.size() - 1;
    if (degree_at(hi) < target_avg_degree - opts.tolerance) continue;
    while (lo < hi) {
      const std::size_t mid = lo + (hi - lo) / 2;
      if (degree_at(mid) >= target_avg_degree - opts.tolerance)
        hi = mid;
      else
        lo = mid + 1;
    }
    for (std::size_t k = lo; k < dist.size(); ++k) {
      const double deg = degree_at(k);
      if (deg > target_avg_degree + opts.tolerance) break;
      auto topo = Topology::geometric(pos, dist[k]);
      if (!opts.require_connected || topo.connected()) return topo;
    }
  }
  throw TopologyError("generate_rgg: retry budget exhausted for target average degree " +
                      std::to_string(target_avg_degree));
}

}  // namespace cfcl
