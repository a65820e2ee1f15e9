#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>

#include "wbtree/error.hpp"

namespace wbtree {

inline constexpr double kZ95 = 1.959963984540054;

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  friend bool operator==(const Interval&, const Interval&) = default;
};

/// Wilson score interval for k successes out of n.
inline Interval wilson_interval(std::uint64_t k, std::uint64_t n, double z = kZ95) {
  if (n == 0) return {0.0, 1.0};
  const double nn = static_cast<double>(n);
  const double ph = static_cast<double>(k) / nn;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / nn;
  const double center = (ph + z2 / (2 * nn)) / denom;
  const double half = z * std::sqrt(ph * (1 - ph) / nn + z2 / (4 * nn * nn)) / denom;
  // The Wilson interval always contains ph; clamp so float noise cannot undo that.
  return {std::min(std::max(0.0, center - half), ph), std::max(std::min(1.0, center + half), ph)};
}

/// Mergeable mean/variance accumulator (Chan et al. pairwise update).
struct Moments {
  std::uint64_t n = 0;
  double mean = 0.0;
  double m2 = 0.0;

  void add(double x) {
    ++n;
    const double delta = x - mean;
    mean += delta / static_cast<double>(n);
    m2 += delta * (x - mean);
  }

  void merge(const Moments& o) {
    if (o.n == 0) return;
    if (n == 0) {
      *this = o;
      return;
    }
    const double na = static_cast<double>(n), nb = static_cast<double>(o.n);
    const double delta = o.mean - mean;
    const double total = na + nb;
    mean += delta * nb / total;
    m2 += o.m2 + delta * delta * na * nb / total;
    n += o.n;
  }

  [[nodiscard]] double variance() const {
    return n > 1 ? m2 / static_cast<double>(n - 1) : 0.0;
  }
  [[nodiscard]] double stderr_of_mean() const {
    return n > 0 ? std::sqrt(variance() / static_cast<double>(n)) : 0.0;
  }
};

inline double chi_square_upper_tail(double statistic, int dof) {
  if (dof <= 0) return 1.0;
  if (!(statistic > 0.0)) return 1.0;
  const boost::math::chi_squared dist(dof);
  return boost::math::cdf(boost::math::complement(dist, statistic));
}

namespace detail {

/// Groups cell indices so that every group has weight >= min_weight (when the
/// total allows). Small cells are pooled in ascending weight order; a pool that
/// stays light is merged into the lightest remaining group.
inline std::vector<std::vector<std::size_t>> pool_cells(std::span<const double> weight,
                                                        double min_weight) {
  std::vector<std::size_t> order(weight.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return weight[a] < weight[b]; });
  std::vector<std::vector<std::size_t>> groups;
  std::vector<std::size_t> pool;
  double pool_w = 0.0;
  for (auto i : order) {
    if (weight[i] >= min_weight) {
      groups.push_back({i});
      continue;
    }
    pool.push_back(i);
    pool_w += weight[i];
    if (pool_w >= min_weight) {
      groups.push_back(std::move(pool));
      pool.clear();
      pool_w = 0.0;
    }
  }
  if (!pool.empty()) {
    if (groups.empty()) {
      groups.push_back(std::move(pool));
    } else {
      // groups[0] is the lightest: groups are formed in ascending weight order.
      groups[0].insert(groups[0].end(), pool.begin(), pool.end());
    }
  }
  return groups;
}

}  // namespace detail

struct ChiSquareResult {
  double statistic = 0.0;
  int dof = 0;
  double p_value = 1.0;
  std::size_t cells_before_pooling = 0;
  std::size_t cells_after_pooling = 0;
};

/// Goodness of fit of `observed` counts to cell probabilities `probs`.
inline ChiSquareResult chi_square_gof(std::span<const std::uint64_t> observed,
                                      std::span<const double> probs) {
  if (observed.size() != probs.size()) {
    throw Error(ErrorCode::InvalidArgument, "observed and probability vectors differ in size");
  }
  const double n = static_cast<double>(std::accumulate(observed.begin(), observed.end(),
                                                       std::uint64_t{0}));
  std::vector<double> expected(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i) expected[i] = n * probs[i];
  const auto groups = detail::pool_cells(expected, 5.0);
  ChiSquareResult r;
  r.cells_before_pooling = observed.size();
  r.cells_after_pooling = groups.size();
  for (const auto& g : groups) {
    double o = 0, e = 0;
    for (auto i : g) {
      o += static_cast<double>(observed[i]);
      e += expected[i];
    }
    if (e > 0) {
      r.statistic += (o - e) * (o - e) / e;
    } else if (o > 0) {
      r.statistic = std::numeric_limits<double>::infinity();
    }
  }
  r.dof = static_cast<int>(groups.size()) - 1;
  r.p_value = std::isinf(r.statistic) ? 0.0 : chi_square_upper_tail(r.statistic, r.dof);
  return r;
}

/// Two-sample chi-square test of homogeneity on categorical outcomes.
struct TwoSampleReport {
  std::string statistic = "chi_square_homogeneity";
  std::map<std::string, std::pair<std::uint64_t, std::uint64_t>> cells;
  double chi_square = 0.0;
  int dof = 0;
  double p_value = 1.0;
  /// Both samples put all their mass on one and the same cell.
  bool exact_match = false;
  std::size_t pooled_cells = 0;
};

inline TwoSampleReport chi_square_two_sample(const std::map<std::string, std::uint64_t>& a,
                                             const std::map<std::string, std::uint64_t>& b) {
  TwoSampleReport rep;
  for (const auto& [k, c] : a) rep.cells[k].first += c;
  for (const auto& [k, c] : b) rep.cells[k].second += c;
  std::uint64_t na = 0, nb = 0;
  for (const auto& [k, c] : rep.cells) {
    na += c.first;
    nb += c.second;
  }
  if (na == 0 || nb == 0) {
    throw Error(ErrorCode::InvalidArgument, "two-sample test needs two nonempty samples");
  }
  const double total = static_cast<double>(na + nb);
  const double small = static_cast<double>(std::min(na, nb)) / total;
  std::vector<double> weight;
  std::vector<std::pair<double, double>> counts;
  for (const auto& [k, c] : rep.cells) {
    const double row = static_cast<double>(c.first + c.second);
    weight.push_back(row * small);
    counts.emplace_back(static_cast<double>(c.first), static_cast<double>(c.second));
  }
  const auto groups = detail::pool_cells(weight, 5.0);
  rep.pooled_cells = groups.size();
  if (rep.cells.size() == 1) {
    rep.exact_match = true;
    return rep;
  }
  for (const auto& g : groups) {
    double oa = 0, ob = 0;
    for (auto i : g) {
      oa += counts[i].first;
      ob += counts[i].second;
    }
    const double row = oa + ob;
    const double ea = row * static_cast<double>(na) / total;
    const double eb = row * static_cast<double>(nb) / total;
    rep.chi_square += (oa - ea) * (oa - ea) / ea + (ob - eb) * (ob - eb) / eb;
  }
  rep.dof = static_cast<int>(groups.size()) - 1;
  rep.p_value = chi_square_upper_tail(rep.chi_square, rep.dof);
  return rep;
}

}  // namespace wbtree
