#pragma once

// Deterministic calculators: threshold bounds on T^d, the radial and height
// weight functionals with their one-step drifts, and ruin probabilities of the
// embedded +-1 size walk.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <utility>
#include <span>

#include "wbtree/configs.hpp"
#include "wbtree/error.hpp"
#include "wbtree/tree.hpp"

namespace wbtree {

struct Bounds {
  double lambda_l_lower = 0.0;
  double lambda_l_upper = 0.0;
  double lambda_c_upper = 0.0;
};

/// lambda_l in [d / (2 sqrt(d-1)), min(2d, 4d / ((sqrt(d-1) - 4) v 0))] and
/// lambda_c <= (d-1) v lambda_l_upper. x / 0 is +inf.
inline Bounds prop_bounds(int d) {
  if (d < 3) throw Error(ErrorCode::DegreeTooSmall, "degree must be at least 3");
  const double dd = d;
  const double s = std::sqrt(dd - 1.0);
  Bounds b;
  b.lambda_l_lower = dd / (2.0 * s);
  const double gap = std::max(s - 4.0, 0.0);
  const double contact = gap > 0.0 ? 4.0 * dd / gap : std::numeric_limits<double>::infinity();
  b.lambda_l_upper = std::min(2.0 * dd, contact);
  b.lambda_c_upper = std::max(dd - 1.0, b.lambda_l_upper);
  return b;
}

/// f(xi) = sum over x in xi of alpha^rho(0, x).
inline double radial_weight(const Configuration& c, double alpha) {
  double s = 0.0;
  for (const auto& x : c.sorted()) s += std::pow(alpha, static_cast<double>(x.depth()));
  return s;
}

/// Generator of the WB process (no boundary) applied to radial_weight: each
/// discordant pair (u infected, v healthy) adds lambda alpha^rho(v) - alpha^rho(u).
inline double radial_drift(const Configuration& c, double alpha, double lambda,
                           const TreeParams& params) {
  double s = 0.0;
  for (const auto& u : c.sorted()) {
    const double fu = std::pow(alpha, static_cast<double>(u.depth()));
    for (const auto& v : neighbors(params, u)) {
      if (!c.contains(v)) s += lambda * std::pow(alpha, static_cast<double>(v.depth())) - fu;
    }
  }
  return s;
}

/// sum over u in U of alpha^h(u).
inline double height_weight(std::span<const VertexAddr> U, double alpha) {
  double s = 0.0;
  for (const auto& u : U) s += std::pow(alpha, static_cast<double>(height(u)));
  return s;
}

/// sum over edges v in U, u not in U, u ~ v of lambda f(u) - f(v), f = alpha^h.
inline double boundary_sum_height(std::span<const VertexAddr> U, double alpha, double lambda,
                                  const TreeParams& params) {
  double s = 0.0;
  for (const auto& [v, u] : boundary_edges(params, U)) {
    s += lambda * std::pow(alpha, static_cast<double>(height(u))) -
         std::pow(alpha, static_cast<double>(height(v)));
  }
  return s;
}

/// lambda (d-1) alpha^2 - d alpha + lambda <= 0.
inline bool quad_condition(int d, double lambda, double alpha) {
  const double dd = d;
  return lambda * (dd - 1.0) * alpha * alpha - dd * alpha + lambda <= 0.0;
}

/// The alpha interval where quad_condition holds, if nonempty.
inline std::optional<std::pair<double, double>> alpha_window(int d, double lambda) {
  if (d < 3) throw Error(ErrorCode::DegreeTooSmall, "degree must be at least 3");
  const double dd = d;
  const double disc = dd * dd - 4.0 * lambda * lambda * (dd - 1.0);
  if (disc < 0.0) return std::nullopt;
  const double r = std::sqrt(disc);
  const double denom = 2.0 * lambda * (dd - 1.0);
  return std::pair{(dd - r) / denom, (dd + r) / denom};
}

/// Probability that the +-1 walk with up-probability lambda / (lambda + 1),
/// started at k, hits 0 before N (N empty: never reaches infinity).
inline double gambler_ruin_absorb(double lambda, std::uint64_t k,
                                  std::optional<std::uint64_t> N = std::nullopt) {
  if (!(lambda >= 1.0)) throw Error(ErrorCode::InvalidArgument, "lambda must be >= 1");
  if (k < 1) throw Error(ErrorCode::InvalidArgument, "k must be >= 1");
  if (N && *N <= k) throw Error(ErrorCode::InvalidArgument, "N must exceed k");
  const double kk = static_cast<double>(k);
  if (!N) return lambda == 1.0 ? 1.0 : std::pow(lambda, -kk);
  const double nn = static_cast<double>(*N);
  if (lambda == 1.0) return (nn - kk) / nn;
  const double ln = std::pow(lambda, -nn);
  return (std::pow(lambda, -kk) - ln) / (1.0 - ln);
}

}  // namespace wbtree
