#pragma once

// Zero-tolerance contract sweeps over random instances: per-realization
// duality and monotone coupling on graphical windows, the martingale sign
// conditions, and the threshold-bound calculator.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "wbtree/analysis.hpp"
#include "wbtree/configs.hpp"
#include "wbtree/graphical.hpp"
#include "wbtree/random.hpp"
#include "wbtree/tree.hpp"

namespace wbtree {

// ---------------------------------------------------------------------------
// Random instances

inline VertexAddr random_vertex(RandomStream& rng, const TreeParams& params, std::uint32_t max_k,
                                std::size_t max_len) {
  const auto k = static_cast<std::uint32_t>(rng.below(max_k + 1));
  const auto len = rng.below(max_len + 1);
  VertexAddr::Word w;
  for (std::uint64_t i = 0; i < len; ++i) {
    const auto lo = (k > 0 && i == 0) ? 1u : 0u;
    const auto span = static_cast<std::uint64_t>(params.d() - 1) - lo;
    w.push_back(static_cast<std::uint8_t>(lo + rng.below(span)));
  }
  return VertexAddr(k, std::move(w));
}

/// Connected set of up to `size` vertices inside Ball(0, radius), grown from a
/// uniform ball vertex by random frontier picks.
inline std::vector<VertexAddr> random_connected_in_ball(RandomStream& rng,
                                                        const TreeParams& params,
                                                        std::uint32_t radius, std::size_t size) {
  const auto ball = enumerate_region(params, Ball{VertexAddr::origin(), radius});
  const VertexAddr root = ball[rng.below(ball.size())];
  std::vector<VertexAddr> members{root};
  VertexSet in{root};
  std::vector<VertexAddr> frontier;
  auto push = [&](const VertexAddr& v) {
    for (auto& n : neighbors(params, v)) {
      if (!in.contains(n) && n.depth() <= radius) frontier.push_back(std::move(n));
    }
  };
  push(root);
  while (members.size() < size && !frontier.empty()) {
    const auto i = rng.below(frontier.size());
    VertexAddr v = frontier[i];
    frontier[i] = frontier.back();
    frontier.pop_back();
    if (in.contains(v)) continue;
    in.insert(v);
    members.push_back(v);
    push(v);
  }
  std::sort(members.begin(), members.end());
  return members;
}

inline Configuration random_subset(RandomStream& rng, const std::vector<VertexAddr>& from,
                                   double p) {
  Configuration c;
  for (const auto& x : from) {
    if (rng.uniform() < p) c.insert(x);
  }
  return c;
}

// ---------------------------------------------------------------------------
// Sweeps

struct ContractSweep {
  std::string name;
  int d = 3;
  double lambda = 0.0;  // 0 when lambda is drawn per case
  std::uint64_t cases = 0;
  std::uint64_t passed = 0;
  /// Cases where the checked relation was not trivially satisfied.
  std::uint64_t nontrivial = 0;
  /// Worst observed value of the checked quantity, when it is numeric.
  double worst = 0.0;
  std::string note;

  [[nodiscard]] bool ok() const noexcept { return passed == cases; }
};

/// Random windows inside Ball(0, 4), random A, B, lambda <= lambda_max and t <= T.
inline ContractSweep duality_sweep(int d, std::uint64_t cases, std::uint64_t seed) {
  const TreeParams params(d);
  RandomStream rng(StreamKey(seed).derive("duality"));
  ContractSweep s;
  s.name = "duality";
  s.d = d;
  for (std::uint64_t i = 0; i < cases; ++i) {
    const auto w = random_connected_in_ball(rng, params, 4, 1 + rng.below(20));
    const double T = 0.1 + 1.9 * rng.uniform();
    const double lmax = 1 + 4 * rng.uniform();
    const auto ep = sample_window(Window(params, w, T, lmax), StreamKey(seed).derive("window", i));
    const auto A = random_subset(rng, w, 0.3), B = random_subset(rng, w, 0.3);
    const double lambda = 1 + (lmax - 1) * rng.uniform();
    const double t = T * rng.uniform();
    ++s.cases;
    if (check_duality(ep, A, B, lambda, t)) ++s.passed;
    if (forward_reach(ep, A, lambda, t).intersects(B)) ++s.nontrivial;
  }
  return s;
}

/// A subset of A', lambda <= lambda' on a common window: forward sets nest.
inline ContractSweep monotone_sweep(int d, std::uint64_t cases, std::uint64_t seed) {
  const TreeParams params(d);
  RandomStream rng(StreamKey(seed).derive("monotone"));
  ContractSweep s;
  s.name = "monotone_coupling";
  s.d = d;
  for (std::uint64_t i = 0; i < cases; ++i) {
    const auto w = random_connected_in_ball(rng, params, 4, 1 + rng.below(20));
    const double T = 0.1 + 1.9 * rng.uniform();
    const double lmax = 1 + 4 * rng.uniform();
    const auto ep = sample_window(Window(params, w, T, lmax), StreamKey(seed).derive("window", i));
    const auto A2 = random_subset(rng, w, 0.5);
    Configuration A;
    for (const auto& x : A2.sorted()) {
      if (rng.uniform() < 0.5) A.insert(x);
    }
    double l1 = 1 + (lmax - 1) * rng.uniform(), l2 = 1 + (lmax - 1) * rng.uniform();
    if (l1 > l2) std::swap(l1, l2);
    const double t = T * rng.uniform();
    ++s.cases;
    if (check_monotone(ep, A, A2, l1, l2, t)) ++s.passed;
    if (forward_reach(ep, A, l1, t) != forward_reach(ep, A2, l2, t)) ++s.nontrivial;
  }
  return s;
}

/// radial_drift >= -1e-12 |boundary| for random finite configurations and
/// alpha uniform in [1/lambda, lambda]. `worst` is the smallest drift seen.
inline ContractSweep radial_drift_sweep(int d, double lambda, std::uint64_t cases,
                                        std::uint64_t seed) {
  const TreeParams params(d);
  RandomStream rng(StreamKey(seed).derive("radial", static_cast<std::uint64_t>(d)));
  ContractSweep s;
  s.name = "radial_drift";
  s.d = d;
  s.lambda = lambda;
  s.worst = std::numeric_limits<double>::infinity();
  for (std::uint64_t i = 0; i < cases; ++i) {
    Configuration c;
    const auto n = 1 + rng.below(20);
    while (c.size() < n) c.insert(random_vertex(rng, params, 4, 5));
    const double alpha = 1 / lambda + (lambda - 1 / lambda) * rng.uniform();
    const double drift = radial_drift(c, alpha, lambda, params);
    const auto edges = boundary_edges(params, c.sorted()).size();
    ++s.cases;
    if (drift >= -1e-12 * static_cast<double>(edges)) ++s.passed;
    if (drift > 1e-12) ++s.nontrivial;
    s.worst = std::min(s.worst, drift);
  }
  return s;
}

/// boundary_sum_height <= 1e-9 for random connected U and alpha in the alpha
/// window. An empty window leaves nothing to check; the sweep then reports
/// zero cases and says so in `note`. `worst` is the largest sum seen.
inline ContractSweep boundary_sum_sweep(int d, double lambda, std::uint64_t cases,
                                        std::uint64_t seed) {
  const TreeParams params(d);
  ContractSweep s;
  s.name = "boundary_sum_height";
  s.d = d;
  s.lambda = lambda;
  const auto w = alpha_window(d, lambda);
  if (!w) {
    s.note = "alpha window empty: lambda exceeds d / (2 sqrt(d - 1))";
    return s;
  }
  RandomStream rng(StreamKey(seed).derive("height", static_cast<std::uint64_t>(d)));
  s.worst = -std::numeric_limits<double>::infinity();
  for (std::uint64_t i = 0; i < cases; ++i) {
    const auto U = random_connected_in_ball(rng, params, 4, 1 + rng.below(40));
    const double alpha = w->first + (w->second - w->first) * rng.uniform();
    const double sum = boundary_sum_height(U, alpha, lambda, params);
    ++s.cases;
    if (sum <= 1e-9) ++s.passed;
    if (sum < -1e-9) ++s.nontrivial;
    s.worst = std::max(s.worst, sum);
  }
  return s;
}

/// Fixed values at d = 3 and d = 18, and lower <= upper for 3 <= d <= 100.
inline ContractSweep bounds_sweep() {
  ContractSweep s;
  s.name = "prop_bounds";
  auto check = [&](bool ok) {
    ++s.cases;
    if (ok) ++s.passed;
  };
  const auto b3 = prop_bounds(3);
  check(std::abs(b3.lambda_l_lower - 3.0 / (2.0 * std::sqrt(2.0))) <= 1e-12);
  check(std::abs(b3.lambda_l_upper - 6.0) <= 1e-12);
  check(std::abs(b3.lambda_c_upper - 6.0) <= 1e-12);
  check(std::abs(prop_bounds(18).lambda_l_upper - 36.0) <= 1e-12);
  for (int d = 3; d <= 100; ++d) {
    const auto b = prop_bounds(d);
    check(b.lambda_l_lower <= b.lambda_l_upper && b.lambda_l_upper <= b.lambda_c_upper);
  }
  return s;
}

}  // namespace wbtree
