#pragma once

// Harris graphical representation on a finite space-time window W x (0, T].
//
// For every ordered pair (u, v) with v in W and u a neighbor of v there are two
// Poisson streams: circ arrows at rate 1 (v copies u, with a hole at v) and
// bullet arrows at rate lambda_max - 1 (u infects v). Bullet points carry uniform
// marks; the effective bullet set at lambda keeps marks below
// (lambda - 1) / (lambda_max - 1), so one realization couples every lambda.
// Vertices outside W are - (the graph is W^-), which is why arrows out of the
// outer layer are sampled too: their circ arrows kill.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <utility>
#include <vector>

#include "wbtree/configs.hpp"
#include "wbtree/error.hpp"
#include "wbtree/random.hpp"
#include "wbtree/tree.hpp"

namespace wbtree {

struct Window {
  TreeParams params{3};
  std::vector<VertexAddr> vertices;
  double horizon = 1.0;
  double lambda_max = 1.0;

  Window() = default;
  Window(TreeParams p, std::vector<VertexAddr> w, double T, double lmax)
      : params(p), vertices(std::move(w)), horizon(T), lambda_max(lmax) {
    std::sort(vertices.begin(), vertices.end());
    vertices.erase(std::unique(vertices.begin(), vertices.end()), vertices.end());
    validate();
  }

  void validate() const {
    if (!(horizon > 0.0) || !std::isfinite(horizon)) {
      throw Error(ErrorCode::InvalidArgument, "window horizon must be a finite T > 0");
    }
    if (!(lambda_max >= 1.0) || !std::isfinite(lambda_max)) {
      throw Error(ErrorCode::InvalidArgument, "lambda_max must be a finite real >= 1");
    }
  }
};

enum class ArrowKind : std::uint8_t { Circ, Bullet };

inline constexpr std::string_view to_string(ArrowKind k) noexcept {
  return k == ArrowKind::Circ ? "circ" : "bullet";
}

/// One arrow u -> v in local vertex indices. Circ arrows have mark 0.
struct Arrow {
  double time = 0.0;
  std::uint32_t u = 0;
  std::uint32_t v = 0;
  ArrowKind kind = ArrowKind::Circ;
  double mark = 0.0;
};

struct EdgeArrows {
  std::uint32_t u = 0;
  std::uint32_t v = 0;
  std::vector<double> circ_times;
  std::vector<std::pair<double, double>> bullet_marked;
};

/// A realized window. Local indices follow canonical vertex order over W plus
/// its outer neighbor layer, so they double as the tie-break order.
class EdgeProcesses {
 public:
  [[nodiscard]] const Window& window() const noexcept { return window_; }
  [[nodiscard]] std::span<const VertexAddr> sites() const noexcept { return sites_; }
  [[nodiscard]] bool inside(std::uint32_t i) const { return inside_[i] != 0; }
  [[nodiscard]] std::span<const EdgeArrows> edges() const noexcept { return edges_; }
  /// All arrows sorted by (time, u, v, kind).
  [[nodiscard]] std::span<const Arrow> arrows() const noexcept { return arrows_; }

  [[nodiscard]] std::uint32_t index_of(const VertexAddr& x) const {
    auto it = std::lower_bound(sites_.begin(), sites_.end(), x);
    if (it == sites_.end() || *it != x) {
      throw Error(ErrorCode::InvalidArgument, "vertex " + format_address(x) + " is not in the window");
    }
    return static_cast<std::uint32_t>(it - sites_.begin());
  }

  /// Mark threshold for the effective bullet set at lambda.
  [[nodiscard]] double bullet_threshold(double lambda) const {
    if (!(lambda >= 1.0)) throw Error(ErrorCode::InvalidArgument, "lambda must be >= 1");
    if (lambda > window_.lambda_max) {
      throw Error(ErrorCode::LambdaExceedsWindow, "lambda exceeds the window's lambda_max");
    }
    if (window_.lambda_max == 1.0) return 0.0;
    return (lambda - 1.0) / (window_.lambda_max - 1.0);
  }

  [[nodiscard]] bool effective(const Arrow& a, double threshold) const noexcept {
    return a.kind == ArrowKind::Circ || a.mark < threshold;
  }

  /// Membership mask over sites() for a set that must lie inside W.
  [[nodiscard]] std::vector<std::uint8_t> mask_of(const Configuration& c) const {
    std::vector<std::uint8_t> m(sites_.size(), 0);
    for (const auto& x : c.set()) {
      const auto i = index_of(x);
      if (!inside(i)) {
        throw Error(ErrorCode::InvalidArgument, "vertex " + format_address(x) + " lies outside W");
      }
      m[i] = 1;
    }
    return m;
  }

  [[nodiscard]] Configuration config_of(std::span<const std::uint8_t> mask) const {
    Configuration c;
    for (std::size_t i = 0; i < mask.size(); ++i) {
      if (mask[i]) c.insert(sites_[i]);
    }
    return c;
  }

  /// Hand-built realization: arrows given as (u, v, kind, time, mark), each
  /// with v in W and u a neighbor of v.
  struct ManualArrow {
    VertexAddr u;
    VertexAddr v;
    ArrowKind kind = ArrowKind::Circ;
    double time = 0.0;
    double mark = 0.0;
  };
  static EdgeProcesses from_arrows(const Window& w, std::span<const ManualArrow> list) {
    EdgeProcesses ep;
    ep.init_sites(w);
    for (const auto& m : list) {
      const auto ui = ep.index_of(m.u), vi = ep.index_of(m.v);
      if (!ep.inside(vi) || distance(m.u, m.v) != 1) {
        throw Error(ErrorCode::InvalidArgument, "arrow must point from a neighbor into W");
      }
      if (!(m.time > 0.0) || m.time > w.horizon) {
        throw Error(ErrorCode::InvalidArgument, "arrow time must lie in (0, T]");
      }
      ep.arrows_.push_back({m.time, ui, vi, m.kind, m.kind == ArrowKind::Circ ? 0.0 : m.mark});
    }
    ep.finalize();
    return ep;
  }

 private:
  friend EdgeProcesses sample_window(const Window& w, StreamKey seed);

  void init_sites(const Window& w) {
    w.validate();
    window_ = w;
    VertexSet all(w.vertices.begin(), w.vertices.end());
    for (const auto& v : w.vertices) {
      for (auto& u : neighbors(w.params, v)) all.insert(std::move(u));
    }
    sites_.assign(all.begin(), all.end());
    std::sort(sites_.begin(), sites_.end());
    inside_.assign(sites_.size(), 0);
    for (const auto& v : w.vertices) inside_[index_of(v)] = 1;
  }

  void finalize() {
    std::sort(arrows_.begin(), arrows_.end(), [](const Arrow& a, const Arrow& b) {
      return std::tie(a.time, a.u, a.v, a.kind) < std::tie(b.time, b.u, b.v, b.kind);
    });
    if (edges_.empty()) {
      // Rebuild per-edge lists from the merged list (hand-built windows).
      std::map<std::pair<std::uint32_t, std::uint32_t>, EdgeArrows> by_edge;
      for (const auto& a : arrows_) {
        auto& e = by_edge[{a.v, a.u}];
        e.u = a.u;
        e.v = a.v;
        if (a.kind == ArrowKind::Circ) {
          e.circ_times.push_back(a.time);
        } else {
          e.bullet_marked.emplace_back(a.time, a.mark);
        }
      }
      for (auto& [k, e] : by_edge) edges_.push_back(std::move(e));
    }
  }

  Window window_;
  std::vector<VertexAddr> sites_;
  std::vector<std::uint8_t> inside_;
  std::vector<EdgeArrows> edges_;
  std::vector<Arrow> arrows_;
};

namespace detail {

inline StreamKey edge_key(StreamKey seed, const VertexAddr& u, const VertexAddr& v,
                          ArrowKind kind) {
  return seed.derive("edge")
      .absorb(u.k())
      .absorb(u.word())
      .absorb(v.k())
      .absorb(v.word())
      .absorb(static_cast<std::uint64_t>(kind));
}

}  // namespace detail

/// Samples every arrow stream of the window. Each (u, v, kind) stream is its own
/// generator, so a larger W or T extends the realization without resampling.
inline EdgeProcesses sample_window(const Window& w, StreamKey seed) {
  EdgeProcesses ep;
  ep.init_sites(w);

  const double T = w.horizon;
  const double bullet_rate = w.lambda_max - 1.0;
  for (const auto& v : w.vertices) {
    const auto vi = ep.index_of(v);
    auto nb = neighbors(w.params, v);
    std::sort(nb.begin(), nb.end());
    for (const auto& u : nb) {
      EdgeArrows e;
      e.u = ep.index_of(u);
      e.v = vi;
      RandomStream circ(detail::edge_key(seed, u, v, ArrowKind::Circ));
      for (double t = circ.exponential(1.0); t <= T; t += circ.exponential(1.0)) {
        e.circ_times.push_back(t);
      }
      if (bullet_rate > 0.0) {
        RandomStream bullet(detail::edge_key(seed, u, v, ArrowKind::Bullet));
        for (double t = bullet.exponential(bullet_rate); t <= T;
             t += bullet.exponential(bullet_rate)) {
          e.bullet_marked.emplace_back(t, bullet.uniform());
        }
      }
      for (double t : e.circ_times) ep.arrows_.push_back({t, e.u, e.v, ArrowKind::Circ, 0.0});
      for (auto [t, m] : e.bullet_marked) {
        ep.arrows_.push_back({t, e.u, e.v, ArrowKind::Bullet, m});
      }
      ep.edges_.push_back(std::move(e));
    }
  }
  ep.finalize();
  return ep;
}

namespace detail {

inline void check_time(const EdgeProcesses& ep, double t) {
  if (!(t >= 0.0) || t > ep.window().horizon) {
    throw Error(ErrorCode::InvalidArgument, "t must lie in [0, T]");
  }
}

/// Forward sweep on masks. `fixed[i]` = 1 pins site i to the value in `reach`.
inline void sweep_forward(const EdgeProcesses& ep, std::vector<std::uint8_t>& reach,
                          std::span<const std::uint8_t> fixed, double lambda, double t) {
  const double thr = ep.bullet_threshold(lambda);
  for (const auto& a : ep.arrows()) {
    if (a.time > t) break;
    if (fixed[a.v] || !ep.effective(a, thr)) continue;
    if (a.kind == ArrowKind::Circ) {
      reach[a.v] = reach[a.u];
    } else {
      reach[a.v] = reach[a.v] | reach[a.u];
    }
  }
}

}  // namespace detail

/// xi_t^{A, W^-, lambda}: forward sweep from A with the outer layer held at -.
inline std::vector<std::uint8_t> forward_reach_mask(const EdgeProcesses& ep,
                                                    std::vector<std::uint8_t> reach,
                                                    double lambda, double t) {
  detail::check_time(ep, t);
  std::vector<std::uint8_t> fixed(ep.sites().size());
  for (std::uint32_t i = 0; i < fixed.size(); ++i) fixed[i] = ep.inside(i) ? 0 : 1;
  detail::sweep_forward(ep, reach, fixed, lambda, t);
  return reach;
}

inline Configuration forward_reach(const EdgeProcesses& ep, const Configuration& A, double lambda,
                                   double t) {
  return ep.config_of(forward_reach_mask(ep, ep.mask_of(A), lambda, t));
}

/// xi-hat_t^{B, W^-, lambda}: the sites u with a path (u, 0) -> (v, t), v in B.
/// Sets `exited` when some path left through the outer layer.
inline std::vector<std::uint8_t> backward_reach_mask(const EdgeProcesses& ep,
                                                     std::vector<std::uint8_t> set, double lambda,
                                                     double t, bool* exited = nullptr) {
  detail::check_time(ep, t);
  const double thr = ep.bullet_threshold(lambda);
  const auto arrows = ep.arrows();
  auto it = std::upper_bound(arrows.begin(), arrows.end(), t,
                             [](double x, const Arrow& a) { return x < a.time; });
  bool left = false;
  while (it != arrows.begin()) {
    const Arrow& a = *--it;
    if (!set[a.v] || !ep.effective(a, thr)) continue;
    if (a.kind == ArrowKind::Circ) set[a.v] = 0;
    if (ep.inside(a.u)) {
      set[a.u] = 1;
    } else {
      left = true;
    }
  }
  if (exited) *exited = left;
  return set;
}

inline Configuration backward_reach(const EdgeProcesses& ep, const Configuration& B, double lambda,
                                    double t) {
  return ep.config_of(backward_reach_mask(ep, ep.mask_of(B), lambda, t));
}

/// Forward sweep under boundary conditions zeta. Frozen sites keep their sign;
/// outer-layer sites that zeta leaves free are treated as - (the window edge).
inline Configuration forward_reach_bc(const EdgeProcesses& ep, const Configuration& A,
                                      const BoundarySpec& zeta, double lambda, double t) {
  detail::check_time(ep, t);
  auto reach = ep.mask_of(A);
  const auto sites = ep.sites();
  std::vector<std::uint8_t> fixed(sites.size(), 0);
  for (std::uint32_t i = 0; i < sites.size(); ++i) {
    const SiteKind k = zeta.site(sites[i]);
    if (k == SiteKind::Free && ep.inside(i)) continue;
    if (reach[i]) {
      throw Error(ErrorCode::InvalidArgument,
                  "initial set contains frozen vertex " + format_address(sites[i]));
    }
    fixed[i] = 1;
    reach[i] = k == SiteKind::FrozenPlus ? 1 : 0;
  }
  detail::sweep_forward(ep, reach, fixed, lambda, t);
  Configuration out;
  for (std::uint32_t i = 0; i < sites.size(); ++i) {
    if (reach[i] && !fixed[i]) out.insert(sites[i]);
  }
  return out;
}

/// [xi_t^A meets B] == [xi-hat_t^B meets A] on this realization.
inline bool check_duality(const EdgeProcesses& ep, const Configuration& A, const Configuration& B,
                          double lambda, double t) {
  return forward_reach(ep, A, lambda, t).intersects(B) ==
         backward_reach(ep, B, lambda, t).intersects(A);
}

/// xi_t^{A, lambda} is contained in xi_t^{A', lambda'} on this realization.
inline bool check_monotone(const EdgeProcesses& ep, const Configuration& A,
                           const Configuration& A2, double lambda, double lambda2, double t) {
  return forward_reach(ep, A, lambda, t).subset_of(forward_reach(ep, A2, lambda2, t));
}

/// Debug dump: `u,v,kind,time,mark` sorted by time.
inline void write_window_csv(std::ostream& os, const EdgeProcesses& ep) {
  os << "u,v,kind,time,mark\n";
  char buf[64];
  for (const auto& a : ep.arrows()) {
    os << format_address(ep.sites()[a.u]) << ',' << format_address(ep.sites()[a.v]) << ','
       << to_string(a.kind) << ',';
    std::snprintf(buf, sizeof buf, "%.17g", a.time);
    os << buf << ',';
    std::snprintf(buf, sizeof buf, "%.17g", a.mark);
    os << buf << '\n';
  }
}

}  // namespace wbtree
