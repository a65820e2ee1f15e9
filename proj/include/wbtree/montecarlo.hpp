#pragma once

// Replica orchestration and the Monte Carlo experiments.
//
// Replica i always draws from StreamKey(seed).derive("replica", i), and results
// are stored by replica index and reduced in index order, so estimates do not
// depend on the number of workers or on scheduling.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include "wbtree/analysis.hpp"
#include "wbtree/arena.hpp"
#include "wbtree/configs.hpp"
#include "wbtree/dynamics.hpp"
#include "wbtree/error.hpp"
#include "wbtree/graphical.hpp"
#include "wbtree/random.hpp"
#include "wbtree/stats.hpp"
#include "wbtree/tree.hpp"

namespace wbtree {

// ---------------------------------------------------------------------------
// Estimators

struct EstimatorResult {
  /// Replicas run, including truncated ones.
  std::uint64_t n = 0;
  /// Replicas that entered the estimate.
  std::uint64_t used = 0;
  double mean = 0.0;
  double std_error = 0.0;
  Interval ci95{0.0, 0.0};
  std::uint64_t truncated_count = 0;
  bool proportion = false;

  static EstimatorResult from_counts(std::uint64_t successes, std::uint64_t used,
                                     std::uint64_t truncated) {
    EstimatorResult r;
    r.n = used + truncated;
    r.used = used;
    r.truncated_count = truncated;
    r.proportion = true;
    if (used > 0) {
      r.mean = static_cast<double>(successes) / static_cast<double>(used);
      r.std_error = std::sqrt(r.mean * (1.0 - r.mean) / static_cast<double>(used));
    }
    r.ci95 = wilson_interval(successes, used);
    return r;
  }

  static EstimatorResult from_moments(const Moments& m, std::uint64_t truncated) {
    EstimatorResult r;
    r.n = m.n + truncated;
    r.used = m.n;
    r.truncated_count = truncated;
    r.mean = m.mean;
    r.std_error = m.stderr_of_mean();
    r.ci95 = {r.mean - kZ95 * r.std_error, r.mean + kZ95 * r.std_error};
    return r;
  }
};

/// Counts for a proportion. Integer fields make merging exact and
/// order-independent.
struct ProportionCounter {
  std::uint64_t successes = 0;
  std::uint64_t used = 0;
  std::uint64_t truncated = 0;

  /// -1 marks a truncated replica, otherwise 0 / 1.
  void add(std::int8_t outcome) {
    if (outcome < 0) {
      ++truncated;
    } else {
      ++used;
      successes += static_cast<std::uint64_t>(outcome);
    }
  }
  void merge(const ProportionCounter& o) {
    successes += o.successes;
    used += o.used;
    truncated += o.truncated;
  }
  [[nodiscard]] EstimatorResult result() const {
    if (used == 0 && truncated > 0) {
      throw Error(ErrorCode::AllTruncated, "every replica hit max_events");
    }
    return EstimatorResult::from_counts(successes, used, truncated);
  }
};

// ---------------------------------------------------------------------------
// Replica runner

inline StreamKey replica_key(std::uint64_t seed, std::uint64_t i) {
  return StreamKey(seed).derive("replica", i);
}

/// Runs fn(ctx, i) for i in [0, n) on `workers` threads, each with its own
/// context from make_ctx(). Results come back indexed by replica.
template <class Result, class MakeCtx, class Fn>
std::vector<Result> run_ordered(std::uint64_t n, unsigned workers, MakeCtx&& make_ctx, Fn&& fn) {
  std::vector<Result> out(n);
  if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
  workers = static_cast<unsigned>(std::min<std::uint64_t>(workers, std::max<std::uint64_t>(n, 1)));
  if (workers <= 1) {
    auto ctx = make_ctx();
    for (std::uint64_t i = 0; i < n; ++i) out[i] = fn(ctx, i);
    return out;
  }
  constexpr std::uint64_t kChunk = 64;
  std::atomic<std::uint64_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto work = [&] {
    try {
      auto ctx = make_ctx();
      for (;;) {
        const std::uint64_t begin = next.fetch_add(kChunk);
        if (begin >= n) break;
        const std::uint64_t end = std::min(n, begin + kChunk);
        for (std::uint64_t i = begin; i < end; ++i) out[i] = fn(ctx, i);
      }
    } catch (...) {
      std::lock_guard lock(error_mutex);
      if (!error) error = std::current_exception();
      next = n;
    }
  };
  std::vector<std::thread> threads;
  for (unsigned w = 1; w < workers; ++w) threads.emplace_back(work);
  work();
  for (auto& t : threads) t.join();
  if (error) std::rethrow_exception(error);
  return out;
}

/// Advances an engine to time t. Returns false if max_events ran out first.
template <class Engine>
bool advance_to(Engine& e, RandomStream& rng, double t, std::uint64_t& events,
                std::uint64_t max_events, const std::function<void(const EngineEvent&)>& on = {}) {
  while (e.has_transition()) {
    if (events >= max_events) return false;
    auto ev = e.step_before(rng, t);
    if (!ev) return true;
    ++events;
    if (on) on(*ev);
  }
  return true;
}

// ---------------------------------------------------------------------------
// Generic runs

struct RunSpec {
  ProcessKind process = ProcessKind::WB;
  int d = 3;
  double lambda = 2.0;
  InitSpec init = OriginInit{};
  BoundarySpec boundary;
  StopCondition stop;
  RunOptions options;

  void validate() const {
    (void)TreeParams(d);
    check_lambda(lambda);
    wbtree::validate(init);
    stop.validate();
  }
};

struct ReplicaContext {
  TreeArena arena;
  InitSampler sampler;
  explicit ReplicaContext(const RunSpec& s)
      : arena(TreeParams(s.d), s.boundary), sampler(TreeParams(s.d), s.init) {}
};

inline Trajectory run_replica(const RunSpec& spec, ReplicaContext& ctx, std::uint64_t seed,
                              std::uint64_t i) {
  const StreamKey key = replica_key(seed, i);
  RandomStream init_rng(key.derive("init"));
  const auto init = ctx.sampler.draw(init_rng).sorted();
  RandomStream rng(key.derive("dynamics"));
  if (spec.process == ProcessKind::WB) {
    return wb_run(ctx.arena, init, spec.lambda, spec.stop, rng, spec.options);
  }
  return bcrw_run(ctx.arena, init, spec.lambda, spec.stop, rng, spec.options);
}

using TrajectoryPredicate = std::function<bool(const Trajectory&)>;

/// Proportion of replicas satisfying `pred`; truncated replicas are excluded.
inline EstimatorResult estimate(const RunSpec& spec, const TrajectoryPredicate& pred,
                                std::uint64_t n, std::uint64_t seed, unsigned workers = 1) {
  if (n < 1) throw Error(ErrorCode::InvalidArgument, "estimate needs n >= 1");
  spec.validate();
  const auto out = run_ordered<std::int8_t>(
      n, workers, [&] { return ReplicaContext(spec); },
      [&](ReplicaContext& ctx, std::uint64_t i) -> std::int8_t {
        const auto tr = run_replica(spec, ctx, seed, i);
        if (tr.truncated()) return -1;
        return pred(tr) ? 1 : 0;
      });
  ProportionCounter c;
  for (auto o : out) c.add(o);
  return c.result();
}

// ---------------------------------------------------------------------------
// Survival proxies

struct ExtinctBeforeSize {
  std::size_t N = 20;
};
struct OriginOccupiedAt {
  double T = 30.0;
};
struct OriginReinfections {
  double T = 30.0;
  std::uint64_t threshold = 1;
};
struct IncludesSetBy {
  std::vector<VertexAddr> U;
  double T = 10.0;
};

using SurvivalProxy =
    std::variant<ExtinctBeforeSize, OriginOccupiedAt, OriginReinfections, IncludesSetBy>;

inline std::string proxy_name(const SurvivalProxy& p) {
  return std::visit(
      [](const auto& x) -> std::string {
        using P = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<P, ExtinctBeforeSize>) return "extinct_before_size";
        if constexpr (std::is_same_v<P, OriginOccupiedAt>) return "origin_occupied_at";
        if constexpr (std::is_same_v<P, OriginReinfections>) return "origin_reinfections";
        return "includes_set_by";
      },
      p);
}

/// ExtinctBeforeSize measures death; the others measure survival.
inline bool proxy_is_survival(const SurvivalProxy& p) {
  return !std::holds_alternative<ExtinctBeforeSize>(p);
}

inline StopCondition proxy_stop(const SurvivalProxy& p) {
  StopCondition s;
  std::visit(
      [&](const auto& x) {
        using P = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<P, ExtinctBeforeSize>) {
          s.extinction = true;
          s.size_reaches = x.N;
        } else if constexpr (std::is_same_v<P, IncludesSetBy>) {
          s.t_max = x.T;
          s.includes_set = x.U;
        } else {
          s.t_max = x.T;
          s.extinction = true;
        }
      },
      p);
  return s;
}

inline TrajectoryPredicate proxy_predicate(const SurvivalProxy& p) {
  return std::visit(
      [](const auto& x) -> TrajectoryPredicate {
        using P = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<P, ExtinctBeforeSize>) {
          return [](const Trajectory& tr) { return tr.reason == StopReason::Extinction; };
        } else if constexpr (std::is_same_v<P, OriginOccupiedAt>) {
          return [](const Trajectory& tr) {
            return tr.final_state.contains(VertexAddr::origin());
          };
        } else if constexpr (std::is_same_v<P, OriginReinfections>) {
          const std::uint64_t k = x.threshold;
          return [k](const Trajectory& tr) {
            std::uint64_t hits = 0;
            for (const auto& e : tr.events) {
              const bool arrives = e.kind == EventKind::Infect || e.kind == EventKind::Move ||
                                   e.kind == EventKind::Branch;
              if (arrives && e.v.is_origin()) ++hits;
            }
            return hits >= k;
          };
        } else {
          return [](const Trajectory& tr) { return tr.reason == StopReason::SetIncluded; };
        }
      },
      p);
}

// ---------------------------------------------------------------------------
// Threshold scan

struct ScanPoint {
  double lambda = 1.0;
  EstimatorResult value;
};

struct ScanReport {
  std::string proxy;
  bool survival_oriented = true;
  std::vector<ScanPoint> points;
  Bounds bounds;
  /// Every adjacent pair respects the coupling order up to 3 combined stderr.
  bool monotone = true;
  /// First grid lambda whose survival-oriented CI lies above 0.01.
  std::optional<double> first_positive_lambda;
};

/// Survival-oriented monotonicity: values may dip by at most 3 combined stderr.
inline bool nondecreasing_within_noise(const std::vector<ScanPoint>& pts, bool survival) {
  for (std::size_t i = 1; i < pts.size(); ++i) {
    const auto& a = pts[i - 1].value;
    const auto& b = pts[i].value;
    const double drop = survival ? a.mean - b.mean : b.mean - a.mean;
    const double se = std::sqrt(a.std_error * a.std_error + b.std_error * b.std_error);
    if (drop > 3 * se) return false;
  }
  return true;
}

inline ScanReport threshold_scan(RunSpec base, std::vector<double> lambda_grid,
                                 const SurvivalProxy& proxy, std::uint64_t n, std::uint64_t seed,
                                 unsigned workers = 1) {
  const Bounds b = prop_bounds(base.d);
  std::sort(lambda_grid.begin(), lambda_grid.end());
  for (double l : lambda_grid) {
    if (!(l >= 1.0) || l > 2 * b.lambda_l_upper) {
      throw Error(ErrorCode::InvalidArgument, "scan grid must lie in [1, 2 lambda_l_upper]");
    }
  }
  base.stop = proxy_stop(proxy);
  base.options.record_events = std::holds_alternative<OriginReinfections>(proxy);
  const auto pred = proxy_predicate(proxy);
  ScanReport rep;
  rep.proxy = proxy_name(proxy);
  rep.survival_oriented = proxy_is_survival(proxy);
  rep.bounds = b;
  for (double l : lambda_grid) {
    base.lambda = l;
    rep.points.push_back({l, estimate(base, pred, n, seed, workers)});
  }
  rep.monotone = nondecreasing_within_noise(rep.points, rep.survival_oriented);
  for (const auto& p : rep.points) {
    const double lo = rep.survival_oriented ? p.value.ci95.lo : 1.0 - p.value.ci95.hi;
    if (lo > 0.01) {
      rep.first_positive_lambda = p.lambda;
      break;
    }
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Embedded drift

struct DriftReport {
  double lambda = 1.0;
  double target = 0.0;
  EstimatorResult increment;
  std::uint64_t transitions = 0;
  std::uint64_t restarts = 0;
  bool within_3se = false;
};

/// Mean increment of the embedded size walk of WB from {0} without boundary.
/// Increments are i.i.d. signs, so the chain restarts from {0} on extinction
/// and runs for a fixed total number of transitions.
inline DriftReport drift_check(int d, double lambda, std::uint64_t n_steps, std::uint64_t seed,
                               unsigned workers = 1, std::uint64_t chunk = 1000) {
  check_lambda(lambda);
  const TreeParams params(d);
  if (n_steps == 0) throw Error(ErrorCode::InvalidArgument, "n_steps must be positive");
  const std::uint64_t chunks = (n_steps + chunk - 1) / chunk;
  struct Part {
    std::uint64_t up = 0, steps = 0, restarts = 0;
  };
  const auto parts = run_ordered<Part>(
      chunks, workers, [&] { return TreeArena(params, BoundarySpec::none()); },
      [&](TreeArena& arena, std::uint64_t c) {
        Part part;
        const std::uint64_t quota = std::min(chunk, n_steps - c * chunk);
        RandomStream rng(replica_key(seed, c).derive("dynamics"));
        const std::vector<VertexAddr> init{VertexAddr::origin()};
        while (part.steps < quota) {
          StopCondition s;
          s.extinction = true;
          s.max_events = quota - part.steps;
          const auto tr = wb_run(arena, init, lambda, s, rng);
          const auto walk = embedded_size_walk(tr);
          for (std::size_t i = 1; i < walk.size(); ++i) {
            part.up += walk[i] > walk[i - 1] ? 1 : 0;
          }
          part.steps += walk.size() - 1;
          if (tr.reason == StopReason::Extinction && part.steps < quota) ++part.restarts;
        }
        return part;
      });
  std::uint64_t up = 0, steps = 0, restarts = 0;
  for (const auto& p : parts) {
    up += p.up;
    steps += p.steps;
    restarts += p.restarts;
  }
  DriftReport rep;
  rep.lambda = lambda;
  rep.target = (lambda - 1) / (lambda + 1);
  rep.transitions = steps;
  rep.restarts = restarts;
  // Increment = 2 B - 1 with B ~ Bernoulli: rescale the proportion estimate.
  const auto prop = EstimatorResult::from_counts(up, steps, 0);
  rep.increment = prop;
  rep.increment.proportion = false;
  rep.increment.mean = 2 * prop.mean - 1;
  rep.increment.std_error = 2 * prop.std_error;
  rep.increment.ci95 = {2 * prop.ci95.lo - 1, 2 * prop.ci95.hi - 1};
  rep.within_3se = std::abs(rep.increment.mean - rep.target) <= 3 * rep.increment.std_error;
  return rep;
}

// ---------------------------------------------------------------------------
// Occupancy patterns on Ball(0, 1)

namespace detail {

/// Bit i set iff the i-th vertex of `cells` (canonical order) is in the set.
template <class InSet>
std::string pattern_key(std::span<const VertexAddr> cells, InSet&& in) {
  std::string key(cells.size(), '0');
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (in(cells[i])) key[i] = '1';
  }
  return key;
}

inline std::map<std::string, std::uint64_t> tally(const std::vector<std::string>& keys) {
  std::map<std::string, std::uint64_t> m;
  for (const auto& k : keys) {
    if (!k.empty()) ++m[k];
  }
  return m;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Thinning identity

struct DoublingCheck {
  std::uint32_t radius = 0;
  double stat_r = 0.0;
  double stat_2r = 0.0;
  double std_error = 0.0;
  bool ok = true;
};

struct ThinningReport {
  double p = 0.0;
  std::uint64_t n = 0;
  TwoSampleReport test;
  std::string verdict;
  DoublingCheck doubling;
  std::uint64_t truncated_bcrw = 0;
  std::uint64_t truncated_wb = 0;
};

/// Compares BCRW from thin(xi0, p) with thin(WB from xi0, p) at time t, both on
/// Ball(0, R) with - boundary, through Ball(0, 1) occupancy patterns. The radius
/// is validated by rerunning the WB side on Ball(0, 2R) with the same streams.
inline ThinningReport thinning_two_sample(int d, double lambda, const Configuration& xi0, double t,
                                          std::uint32_t R, std::uint64_t n, std::uint64_t seed,
                                          unsigned workers = 1) {
  if (!(lambda > 1.0)) throw Error(ErrorCode::InvalidArgument, "thinning needs lambda > 1");
  const TreeParams params(d);
  for (const auto& x : xi0.set()) {
    if (2 * x.depth() > std::uint64_t{R}) {
      throw Error(ErrorCode::InvalidArgument, "initial set must lie in Ball(0, R/2)");
    }
  }
  ThinningReport rep;
  rep.p = 1 - 1 / lambda;
  rep.n = n;
  const auto cells = enumerate_region(params, Ball{VertexAddr::origin(), 1});
  const auto init = xi0.sorted();
  if (xi0.empty()) {
    rep.test.cells["0000"] = {n, n};
    rep.test.exact_match = true;
    rep.verdict = "ExactMatch";
    return rep;
  }

  auto bcrw_side = [&](std::uint32_t radius) {
    const auto boundary = BoundarySpec::minus(Ball{VertexAddr::origin(), radius});
    return run_ordered<std::string>(
        n, workers, [&] { return TreeArena(params, boundary); },
        [&](TreeArena& arena, std::uint64_t i) -> std::string {
          const StreamKey key = replica_key(seed, i).derive("bcrw");
          const auto start = thin(xi0, rep.p, key.derive("thin")).sorted();
          BCRWEngine e(arena, lambda);
          e.reset(start);
          RandomStream rng(key.derive("dynamics"));
          std::uint64_t events = 0;
          if (!advance_to(e, rng, t, events, kDefaultMaxEvents)) return {};
          return detail::pattern_key(cells, [&](const VertexAddr& x) {
            const auto id = arena.find(x);
            return id != kNoVertex && e.is_occupied(id);
          });
        });
  };
  auto wb_side = [&](std::uint32_t radius) {
    const auto boundary = BoundarySpec::minus(Ball{VertexAddr::origin(), radius});
    return run_ordered<std::string>(
        n, workers, [&] { return TreeArena(params, boundary); },
        [&](TreeArena& arena, std::uint64_t i) -> std::string {
          const StreamKey key = replica_key(seed, i).derive("wb");
          WBEngine e(arena, lambda);
          e.reset(init);
          RandomStream rng(key.derive("dynamics"));
          std::uint64_t events = 0;
          if (!advance_to(e, rng, t, events, kDefaultMaxEvents)) return {};
          const StreamKey marks = key.derive("thin").derive("thin");
          return detail::pattern_key(cells, [&](const VertexAddr& x) {
            const auto id = arena.find(x);
            return id != kNoVertex && e.is_plus(id) && vertex_mark(marks, x) < rep.p;
          });
        });
  };

  const auto a = bcrw_side(R);
  const auto b = wb_side(R);
  rep.truncated_bcrw = static_cast<std::uint64_t>(std::count(a.begin(), a.end(), std::string{}));
  rep.truncated_wb = static_cast<std::uint64_t>(std::count(b.begin(), b.end(), std::string{}));
  if (rep.truncated_bcrw == n || rep.truncated_wb == n) {
    throw Error(ErrorCode::AllTruncated, "every replica hit max_events");
  }
  rep.test = chi_square_two_sample(detail::tally(a), detail::tally(b));
  rep.verdict = rep.test.exact_match ? "ExactMatch" : (rep.test.p_value > 0.01 ? "Pass" : "Fail");

  // Doubling check on P(thinned WB pattern nonempty), common random numbers.
  const auto b2 = wb_side(2 * R);
  auto nonempty = [](const std::vector<std::string>& v) {
    ProportionCounter c;
    for (const auto& k : v) {
      c.add(k.empty() ? std::int8_t{-1} : static_cast<std::int8_t>(k.find('1') != std::string::npos));
    }
    return c.result();
  };
  const auto sr = nonempty(b), s2r = nonempty(b2);
  rep.doubling = {R, sr.mean, s2r.mean, sr.std_error,
                  std::abs(sr.mean - s2r.mean) <= sr.std_error};
  if (!rep.doubling.ok) {
    throw Error(ErrorCode::RadiusTooSmall,
                "statistic moved by more than one stderr between R and 2R; increase R");
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Derivative identity d rho / dt = d (lambda - 1) delta

struct RhoDeltaReport {
  double p = 0.0;
  double h = 0.0;
  std::uint64_t n = 0;
  std::uint64_t truncated = 0;
  double rho0_hat = 0.0;
  double rho_h_hat = 0.0;
  double delta0_hat = 0.0;
  /// (rho_h_hat - p) / h.
  double lhs = 0.0;
  double lhs_se = 0.0;
  /// (rho_h_hat - rho0_hat) / h with per-replica pairing.
  double lhs_paired = 0.0;
  double lhs_paired_se = 0.0;
  double rhs = 0.0;
  /// Fraction of dual walks from the origin that reached the boundary by h.
  double dual_exit_fraction = 0.0;
};

namespace detail {

/// Per-worker state for Bernoulli(p) starts on Ball(0, R) with - boundary.
struct BallContext {
  TreeArena arena;
  InitSampler sampler;
  std::vector<VertexId> ids;
  std::vector<std::uint32_t> drawn;
  std::vector<VertexId> start;
  BallContext(const TreeParams& params, double p, std::uint32_t R)
      : arena(params, BoundarySpec::minus(Ball{VertexAddr::origin(), R})),
        sampler(params, BernoulliBallInit{p, R}) {
    for (const auto& x : sampler.support()) ids.push_back(arena.intern(x));
  }
  std::span<const VertexId> draw(RandomStream& rng) {
    sampler.draw_indices(rng, drawn);
    start.clear();
    for (auto i : drawn) start.push_back(ids[i]);
    return start;
  }
};

/// Fraction of n BCRW runs from `from` on Ball(0, R)^- that exited by time t.
inline double dual_exit_fraction(const TreeParams& params, double lambda,
                                 const std::vector<VertexAddr>& from, double t, std::uint32_t R,
                                 std::uint64_t n, std::uint64_t seed, unsigned workers) {
  const auto boundary = BoundarySpec::minus(Ball{VertexAddr::origin(), R});
  const auto out = run_ordered<std::int8_t>(
      n, workers, [&] { return TreeArena(params, boundary); },
      [&](TreeArena& arena, std::uint64_t i) -> std::int8_t {
        BCRWEngine e(arena, lambda);
        e.reset(from);
        RandomStream rng(replica_key(seed, i).derive("dual"));
        std::uint64_t events = 0;
        if (!advance_to(e, rng, t, events, kDefaultMaxEvents)) return -1;
        return e.exited() ? 1 : 0;
      });
  ProportionCounter c;
  for (auto o : out) c.add(o);
  return c.result().mean;
}

}  // namespace detail

inline RhoDeltaReport rho_delta_derivative(int d, double lambda, double p, double h,
                                           std::uint32_t R, std::uint64_t n, std::uint64_t seed,
                                           unsigned workers = 1) {
  check_lambda(lambda);
  if (!(p > 0.0 && p < 1.0)) throw Error(ErrorCode::InvalidArgument, "p must lie in (0, 1)");
  if (!(h > 0.0)) throw Error(ErrorCode::InvalidArgument, "h must be positive");
  const TreeParams params(d);
  struct Out {
    std::int8_t x0 = 0, xh = 0, disc0 = 0;
  };
  const auto out = run_ordered<Out>(
      n, workers, [&] { return detail::BallContext(params, p, R); },
      [&](detail::BallContext& ctx, std::uint64_t i) -> Out {
        const StreamKey key = replica_key(seed, i);
        RandomStream init_rng(key.derive("init"));
        const auto start = ctx.draw(init_rng);
        WBEngine e(ctx.arena, lambda);
        e.reset_ids(start);
        const VertexId o = ctx.arena.find(VertexAddr::origin());
        const VertexId par = ctx.arena.find(VertexAddr::ray(1));
        Out r;
        r.x0 = e.is_plus(o) ? 1 : 0;
        r.disc0 = (e.is_plus(o) && !e.is_plus(par)) ? 1 : 0;
        RandomStream rng(key.derive("dynamics"));
        std::uint64_t events = 0;
        if (!advance_to(e, rng, h, events, kDefaultMaxEvents)) {
          r.xh = -1;
          return r;
        }
        r.xh = e.is_plus(o) ? 1 : 0;
        return r;
      });
  RhoDeltaReport rep;
  rep.p = p;
  rep.h = h;
  rep.n = n;
  Moments x0, xh, diff, disc;
  for (const auto& r : out) {
    if (r.xh < 0) {
      ++rep.truncated;
      continue;
    }
    x0.add(r.x0);
    xh.add(r.xh);
    diff.add(r.xh - r.x0);
    disc.add(r.disc0);
  }
  if (x0.n == 0) throw Error(ErrorCode::AllTruncated, "every replica hit max_events");
  rep.rho0_hat = x0.mean;
  rep.rho_h_hat = xh.mean;
  rep.delta0_hat = disc.mean;
  rep.lhs = (rep.rho_h_hat - p) / h;
  rep.lhs_se = xh.stderr_of_mean() / h;
  rep.lhs_paired = diff.mean / h;
  rep.lhs_paired_se = diff.stderr_of_mean() / h;
  rep.rhs = d * (lambda - 1) * p * (1 - p);
  rep.dual_exit_fraction = detail::dual_exit_fraction(
      params, lambda, {VertexAddr::origin()}, h, R, std::min<std::uint64_t>(n, 10000), seed,
      workers);
  return rep;
}

// ---------------------------------------------------------------------------
// Event counts on the center edge

struct EventRateReport {
  double lambda = 1.0;
  int d = 3;
  std::uint64_t n = 0;
  std::uint64_t truncated = 0;
  /// Mean number of infections of parent(0) by 0.
  EstimatorResult e_plus;
  /// Mean number of healings of 0 by parent(0).
  EstimatorResult e_minus_rev;
  double ratio = 0.0;
  /// Mean of e_plus - lambda e_minus_rev per replica.
  EstimatorResult identity_gap;
  bool identity_ok = false;
  double bound_lhs = 0.0;
  double bound_rhs = 0.0;
  double bound_se = 0.0;
  bool bound_check = false;
  double dual_exit_fraction = 0.0;
};

inline EventRateReport event_rate_ratio(int d, double lambda, double p, double T, std::uint32_t R,
                                        std::uint64_t n, std::uint64_t seed, unsigned workers = 1) {
  check_lambda(lambda);
  if (!(p >= 0.0 && p <= 1.0)) throw Error(ErrorCode::InvalidArgument, "p must lie in [0, 1]");
  const TreeParams params(d);
  struct Out {
    std::uint32_t plus = 0, minus = 0;
    bool truncated = false;
  };
  const auto out = run_ordered<Out>(
      n, workers, [&] { return detail::BallContext(params, p, R); },
      [&](detail::BallContext& ctx, std::uint64_t i) -> Out {
        const StreamKey key = replica_key(seed, i);
        RandomStream init_rng(key.derive("init"));
        const auto start = ctx.draw(init_rng);
        WBEngine e(ctx.arena, lambda);
        e.reset_ids(start);
        const VertexId o = ctx.arena.find(VertexAddr::origin());
        const VertexId par = ctx.arena.find(VertexAddr::ray(1));
        Out r;
        RandomStream rng(key.derive("dynamics"));
        std::uint64_t events = 0;
        r.truncated = !advance_to(e, rng, T, events, kDefaultMaxEvents, [&](const EngineEvent& ev) {
          if (ev.kind == EventKind::Infect && ev.u == o && ev.v == par) ++r.plus;
          if (ev.kind == EventKind::Heal && ev.u == par && ev.v == o) ++r.minus;
        });
        return r;
      });
  EventRateReport rep;
  rep.lambda = lambda;
  rep.d = d;
  rep.n = n;
  Moments plus, minus, gap;
  for (const auto& r : out) {
    if (r.truncated) {
      ++rep.truncated;
      continue;
    }
    plus.add(r.plus);
    minus.add(r.minus);
    gap.add(r.plus - lambda * r.minus);
  }
  if (plus.n == 0) throw Error(ErrorCode::AllTruncated, "every replica hit max_events");
  rep.e_plus = EstimatorResult::from_moments(plus, rep.truncated);
  rep.e_minus_rev = EstimatorResult::from_moments(minus, rep.truncated);
  rep.identity_gap = EstimatorResult::from_moments(gap, rep.truncated);
  rep.ratio = minus.mean > 0 ? plus.mean / minus.mean : std::numeric_limits<double>::quiet_NaN();
  rep.identity_ok = std::abs(gap.mean) <= 3 * rep.identity_gap.std_error;
  rep.bound_lhs = (1 - 1 / lambda) * plus.mean;
  rep.bound_rhs = 1.0 / d;
  rep.bound_se = (1 - 1 / lambda) * rep.e_plus.std_error;
  rep.bound_check = rep.bound_lhs <= rep.bound_rhs + 3 * rep.bound_se;
  if (p > 0.0) {
    rep.dual_exit_fraction = detail::dual_exit_fraction(
        params, lambda, {VertexAddr::origin(), VertexAddr::ray(1)}, T, R,
        std::min<std::uint64_t>(n, 2000), seed, workers);
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Exploratory curves

struct CurvePoint {
  double t = 0.0;
  EstimatorResult value;
};

namespace detail {

/// Runs BCRW from `from` on the given boundary and records at each grid time
/// whether `observe(engine)` holds. Truncated replicas drop out of later times.
template <class Observe>
std::vector<CurvePoint> bcrw_curve(const TreeParams& params, const BoundarySpec& boundary,
                                   double lambda, const std::vector<VertexAddr>& from,
                                   std::vector<double> grid, std::uint64_t n, std::uint64_t seed,
                                   unsigned workers, std::uint64_t max_events, Observe observe) {
  std::sort(grid.begin(), grid.end());
  const auto out = run_ordered<std::vector<std::int8_t>>(
      n, workers, [&] { return TreeArena(params, boundary); },
      [&](TreeArena& arena, std::uint64_t i) {
        BCRWEngine e(arena, lambda);
        e.reset(from);
        RandomStream rng(replica_key(seed, i).derive("dynamics"));
        std::uint64_t events = 0;
        std::vector<std::int8_t> row(grid.size(), -1);
        for (std::size_t g = 0; g < grid.size(); ++g) {
          if (!advance_to(e, rng, grid[g], events, max_events)) break;
          row[g] = observe(arena, e) ? 1 : 0;
        }
        return row;
      });
  std::vector<CurvePoint> curve;
  for (std::size_t g = 0; g < grid.size(); ++g) {
    ProportionCounter c;
    for (const auto& row : out) c.add(row[g]);
    curve.push_back({grid[g], c.result()});
  }
  return curve;
}

}  // namespace detail

/// P(0 occupied at t) for BCRW from {0} on T_0 with - boundary, truncated at depth R.
inline std::vector<CurvePoint> occupancy_curve(int d, double lambda, const std::vector<double>& t_grid,
                                               std::uint64_t n, std::uint64_t seed,
                                               std::uint32_t R = 6, unsigned workers = 1,
                                               std::uint64_t max_events = kDefaultMaxEvents) {
  check_lambda(lambda);
  const TreeParams params(d);
  const auto boundary = BoundarySpec::minus(Subtree{VertexAddr::origin(), R});
  return detail::bcrw_curve(params, boundary, lambda, {VertexAddr::origin()}, t_grid, n, seed,
                            workers, max_events, [](TreeArena& arena, const BCRWEngine& e) {
                              return e.is_occupied(arena.find(VertexAddr::origin()));
                            });
}

struct InclusionTailReport {
  std::vector<CurvePoint> tail;
  /// Local slopes -d log P / d log t between consecutive positive grid points.
  std::vector<double> slopes;
  bool nonincreasing = true;
  bool slopes_increasing = true;
};

/// P(tau_y > t) for the BCRW from {x = 0} hitting y = parent(0), on Ball(0, R)^-.
inline InclusionTailReport inclusion_tail(int d, double lambda, const std::vector<double>& t_grid,
                                          std::uint64_t n, std::uint64_t seed,
                                          std::uint32_t R = 8, unsigned workers = 1,
                                          std::uint64_t max_events = kDefaultMaxEvents) {
  check_lambda(lambda);
  const TreeParams params(d);
  const auto boundary = BoundarySpec::minus(Ball{VertexAddr::origin(), R});
  const VertexAddr y = VertexAddr::ray(1);
  std::vector<double> grid = t_grid;
  std::sort(grid.begin(), grid.end());
  const auto out = run_ordered<std::vector<std::int8_t>>(
      n, workers, [&] { return TreeArena(params, boundary); },
      [&](TreeArena& arena, std::uint64_t i) {
        BCRWEngine e(arena, lambda);
        const std::vector<VertexAddr> from{VertexAddr::origin()};
        e.reset(from);
        const VertexId yid = arena.intern(y);
        RandomStream rng(replica_key(seed, i).derive("dynamics"));
        std::uint64_t events = 0;
        std::vector<std::int8_t> row(grid.size(), -1);
        bool hit = false;
        std::size_t g = 0;
        for (; g < grid.size() && grid[g] <= 0.0; ++g) row[g] = 1;
        while (g < grid.size()) {
          if (hit || !e.has_transition()) {
            row[g++] = hit ? 0 : 1;
            continue;
          }
          if (events >= max_events) break;
          auto ev = e.step_before(rng, grid[g]);
          if (!ev) {
            row[g++] = 1;
            continue;
          }
          ++events;
          if (e.is_occupied(yid)) hit = true;
        }
        return row;
      });
  InclusionTailReport rep;
  for (std::size_t g = 0; g < grid.size(); ++g) {
    ProportionCounter c;
    for (const auto& row : out) c.add(row[g]);
    rep.tail.push_back({grid[g], c.result()});
  }
  for (std::size_t g = 1; g < rep.tail.size(); ++g) {
    if (rep.tail[g].value.mean > rep.tail[g - 1].value.mean) rep.nonincreasing = false;
    const double t0 = rep.tail[g - 1].t, t1 = rep.tail[g].t;
    const double p0 = rep.tail[g - 1].value.mean, p1 = rep.tail[g].value.mean;
    if (t0 > 0 && p0 > 0 && p1 > 0) {
      rep.slopes.push_back(-(std::log(p1) - std::log(p0)) / (std::log(t1) - std::log(t0)));
    }
  }
  for (std::size_t i = 1; i < rep.slopes.size(); ++i) {
    if (rep.slopes[i] < rep.slopes[i - 1]) rep.slopes_increasing = false;
  }
  return rep;
}

struct GrowthReport {
  std::vector<double> t;
  std::vector<double> mean_max_distance;
  std::vector<double> mean_log_size;
  /// mean_max_distance / t per grid point.
  std::vector<double> speed;
  double log_size_slope = 0.0;
  double log_size_r2 = 0.0;
  std::uint64_t truncated = 0;
};

/// BCRW from {0} without boundary: spread and size growth.
inline GrowthReport growth_curve(int d, double lambda, std::vector<double> t_grid, std::uint64_t n,
                                 std::uint64_t seed, unsigned workers = 1,
                                 std::uint64_t max_events = 2'000'000) {
  check_lambda(lambda);
  const TreeParams params(d);
  std::sort(t_grid.begin(), t_grid.end());
  struct Row {
    std::vector<double> dist, logsize;
    bool truncated = false;
  };
  const auto out = run_ordered<Row>(
      n, workers, [&] { return TreeArena(params, BoundarySpec::none()); },
      [&](TreeArena& arena, std::uint64_t i) {
        BCRWEngine e(arena, lambda);
        const std::vector<VertexAddr> from{VertexAddr::origin()};
        e.reset(from);
        RandomStream rng(replica_key(seed, i).derive("dynamics"));
        std::uint64_t events = 0;
        Row row;
        for (double t : t_grid) {
          if (!advance_to(e, rng, t, events, max_events)) {
            row.truncated = true;
            break;
          }
          std::uint64_t far = 0;
          for (auto id : e.occupied_ids()) far = std::max(far, arena.addr(id).depth());
          row.dist.push_back(far);
          row.logsize.push_back(std::log(static_cast<double>(e.size())));
        }
        return row;
      });
  GrowthReport rep;
  rep.t = t_grid;
  std::vector<Moments> dist(t_grid.size()), logsize(t_grid.size());
  for (const auto& row : out) {
    if (row.truncated) {
      ++rep.truncated;
      continue;
    }
    for (std::size_t g = 0; g < t_grid.size(); ++g) {
      dist[g].add(row.dist[g]);
      logsize[g].add(row.logsize[g]);
    }
  }
  for (std::size_t g = 0; g < t_grid.size(); ++g) {
    rep.mean_max_distance.push_back(dist[g].mean);
    rep.mean_log_size.push_back(logsize[g].mean);
    rep.speed.push_back(t_grid[g] > 0 ? dist[g].mean / t_grid[g] : 0.0);
  }
  // Least-squares line through (t, mean log size).
  const double m = static_cast<double>(t_grid.size());
  if (m >= 2) {
    double st = 0, sy = 0, stt = 0, sty = 0, syy = 0;
    for (std::size_t g = 0; g < t_grid.size(); ++g) {
      const double x = t_grid[g], y = rep.mean_log_size[g];
      st += x;
      sy += y;
      stt += x * x;
      sty += x * y;
      syy += y * y;
    }
    const double cov = sty - st * sy / m, vt = stt - st * st / m, vy = syy - sy * sy / m;
    rep.log_size_slope = vt > 0 ? cov / vt : 0.0;
    rep.log_size_r2 = (vt > 0 && vy > 0) ? cov * cov / (vt * vy) : 0.0;
  }
  return rep;
}

/// P(tau_y <= u) for BCRW from {x} on Ball(x, r)^-, x = 0, y = parent(0), over
/// a grid of radii and horizons. Rows follow radii, columns follow horizons.
inline std::vector<std::vector<EstimatorResult>> local_inclusion_grid(
    int d, double lambda, const std::vector<std::uint32_t>& radii, std::vector<double> u_grid,
    std::uint64_t n, std::uint64_t seed, unsigned workers = 1) {
  check_lambda(lambda);
  const TreeParams params(d);
  std::sort(u_grid.begin(), u_grid.end());
  std::vector<std::vector<EstimatorResult>> out;
  for (auto r : radii) {
    if (r < 1) throw Error(ErrorCode::InvalidArgument, "radius must be >= 1 to contain y");
    const auto tail = [&] {
      const auto boundary = BoundarySpec::minus(Ball{VertexAddr::origin(), r});
      const VertexAddr y = VertexAddr::ray(1);
      return run_ordered<std::vector<std::int8_t>>(
          n, workers, [&] { return TreeArena(params, boundary); },
          [&](TreeArena& arena, std::uint64_t i) {
            BCRWEngine e(arena, lambda);
            const std::vector<VertexAddr> from{VertexAddr::origin()};
            e.reset(from);
            const VertexId yid = arena.intern(y);
            RandomStream rng(replica_key(seed, i).derive("dynamics"));
            std::vector<std::int8_t> row(u_grid.size(), 0);
            std::uint64_t events = 0;
            double hit = std::numeric_limits<double>::infinity();
            const double horizon = u_grid.empty() ? 0.0 : u_grid.back();
            while (e.has_transition() && events < kDefaultMaxEvents) {
              auto ev = e.step_before(rng, horizon);
              if (!ev) break;
              ++events;
              if (e.is_occupied(yid)) {
                hit = ev->time;
                break;
              }
            }
            for (std::size_t g = 0; g < u_grid.size(); ++g) row[g] = hit <= u_grid[g] ? 1 : 0;
            return row;
          });
    }();
    std::vector<EstimatorResult> row;
    for (std::size_t g = 0; g < u_grid.size(); ++g) {
      ProportionCounter c;
      for (const auto& r2 : tail) c.add(r2[g]);
      row.push_back(c.result());
    }
    out.push_back(std::move(row));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Cross-implementation law agreement and statistical duality

struct LawAgreementReport {
  TwoSampleReport wb_vs_forward;
  TwoSampleReport bcrw_vs_backward;
};

/// On W = Ball(0, radius) with - outside: law of WB from A at t (dynamics) vs
/// forward_reach (graphical), and BCRW from B vs backward_reach, compared on
/// Ball(0, 1) occupancy patterns.
inline LawAgreementReport law_agreement(int d, double lambda, std::uint32_t radius,
                                        const Configuration& A, const Configuration& B, double t,
                                        std::uint64_t n, std::uint64_t seed, unsigned workers = 1) {
  check_lambda(lambda);
  const TreeParams params(d);
  const auto W = enumerate_region(params, Ball{VertexAddr::origin(), radius});
  const auto cells = enumerate_region(params, Ball{VertexAddr::origin(), 1});
  const auto boundary = BoundarySpec::minus(Ball{VertexAddr::origin(), radius});
  const Window window(params, W, t, lambda);
  const auto a0 = A.sorted(), b0 = B.sorted();

  auto dyn = [&](bool forward) {
    return run_ordered<std::string>(
        n, workers, [&] { return TreeArena(params, boundary); },
        [&](TreeArena& arena, std::uint64_t i) -> std::string {
          RandomStream rng(replica_key(seed, i).derive(forward ? "wb" : "bcrw"));
          std::uint64_t events = 0;
          auto occupied = [&](auto& e, auto&& in) {
            return detail::pattern_key(cells, [&](const VertexAddr& x) {
              const auto id = arena.find(x);
              return id != kNoVertex && in(e, id);
            });
          };
          if (forward) {
            WBEngine e(arena, lambda);
            e.reset(a0);
            if (!advance_to(e, rng, t, events, kDefaultMaxEvents)) return {};
            return occupied(e, [](const WBEngine& en, VertexId id) { return en.is_plus(id); });
          }
          BCRWEngine e(arena, lambda);
          e.reset(b0);
          if (!advance_to(e, rng, t, events, kDefaultMaxEvents)) return {};
          return occupied(e, [](const BCRWEngine& en, VertexId id) { return en.is_occupied(id); });
        });
  };
  auto graph = [&](bool forward) {
    return run_ordered<std::string>(
        n, workers, [] { return 0; },
        [&](int, std::uint64_t i) -> std::string {
          const auto ep = sample_window(window, replica_key(seed, i).derive("window"));
          const auto mask = forward ? forward_reach_mask(ep, ep.mask_of(A), lambda, t)
                                    : backward_reach_mask(ep, ep.mask_of(B), lambda, t);
          return detail::pattern_key(
              cells, [&](const VertexAddr& x) { return mask[ep.index_of(x)] != 0; });
        });
  };
  LawAgreementReport rep;
  rep.wb_vs_forward = chi_square_two_sample(detail::tally(dyn(true)), detail::tally(graph(true)));
  rep.bcrw_vs_backward =
      chi_square_two_sample(detail::tally(dyn(false)), detail::tally(graph(false)));
  return rep;
}

struct DualityReport {
  EstimatorResult forward;
  EstimatorResult backward;
  TwoSampleReport test;
};

/// P(xi_t^{A, G^zeta} meets B) vs P(xi-hat_t^{B, G^zeta} meets A, or some dual
/// particle left G), each from independent dynamics runs.
inline DualityReport duality_statistical(int d, double lambda, const BoundarySpec& zeta,
                                         const Configuration& A, const Configuration& B, double t,
                                         std::uint64_t n, std::uint64_t seed,
                                         unsigned workers = 1) {
  check_lambda(lambda);
  const TreeParams params(d);
  const auto a0 = A.sorted(), b0 = B.sorted();
  const bool plus = zeta.kind() == BoundarySpec::Kind::Plus;
  const auto fwd = run_ordered<std::int8_t>(
      n, workers, [&] { return TreeArena(params, zeta); },
      [&](TreeArena& arena, std::uint64_t i) -> std::int8_t {
        WBEngine e(arena, lambda);
        e.reset(a0);
        RandomStream rng(replica_key(seed, i).derive("wb"));
        std::uint64_t events = 0;
        if (!advance_to(e, rng, t, events, kDefaultMaxEvents)) return -1;
        for (const auto& x : b0) {
          const auto id = arena.find(x);
          if (id != kNoVertex && e.is_plus(id)) return 1;
        }
        return 0;
      });
  const auto bwd = run_ordered<std::int8_t>(
      n, workers, [&] { return TreeArena(params, zeta); },
      [&](TreeArena& arena, std::uint64_t i) -> std::int8_t {
        BCRWEngine e(arena, lambda);
        e.reset(b0);
        RandomStream rng(replica_key(seed, i).derive("bcrw"));
        std::uint64_t events = 0;
        if (!advance_to(e, rng, t, events, kDefaultMaxEvents)) return -1;
        if (plus && e.exited()) return 1;
        for (const auto& x : a0) {
          const auto id = arena.find(x);
          if (id != kNoVertex && e.is_occupied(id)) return 1;
        }
        return 0;
      });
  ProportionCounter cf, cb;
  std::map<std::string, std::uint64_t> tf, tb;
  for (auto o : fwd) {
    cf.add(o);
    if (o >= 0) ++tf[o ? "1" : "0"];
  }
  for (auto o : bwd) {
    cb.add(o);
    if (o >= 0) ++tb[o ? "1" : "0"];
  }
  DualityReport rep;
  rep.forward = cf.result();
  rep.backward = cb.result();
  rep.test = chi_square_two_sample(tf, tb);
  return rep;
}

}  // namespace wbtree
