#pragma once

// Exact event-driven simulation of the Williams-Bjerknes process and of its
// dual branching coalescing random walk, with optional frozen boundaries.
//
// Both engines use the Gillespie direct method. The WB engine keeps the
// discordant edges in three swap-remove sets split by rate mass (both ends
// free: lambda + 1; only the healthy end free: lambda; only the infected end
// free: 1), so selection is O(1) and a flip costs O(d).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "wbtree/arena.hpp"
#include "wbtree/configs.hpp"
#include "wbtree/error.hpp"
#include "wbtree/random.hpp"
#include "wbtree/tree.hpp"

namespace wbtree {

enum class EventKind : std::uint8_t { Infect, Heal, Move, Branch, Coalesce, Exit, Absorb };

inline constexpr std::string_view to_string(EventKind k) noexcept {
  switch (k) {
    case EventKind::Infect: return "Infect";
    case EventKind::Heal: return "Heal";
    case EventKind::Move: return "Move";
    case EventKind::Branch: return "Branch";
    case EventKind::Coalesce: return "Coalesce";
    case EventKind::Exit: return "Exit";
    case EventKind::Absorb: return "Absorb";
  }
  return "?";
}

/// One transition in engine ids. (u, v) is always (actor, affected vertex):
/// Infect: u infects v. Heal: u heals v. BCRW kinds: particle at u acts on v.
/// source_vacated is set when the BCRW particle left u.
struct EngineEvent {
  double time = 0.0;
  EventKind kind = EventKind::Infect;
  VertexId u = kNoVertex;
  VertexId v = kNoVertex;
  bool source_vacated = false;
};

struct NoHook {
  void operator()(double) const noexcept {}
};

inline void check_lambda(double lambda) {
  if (!(lambda >= 1.0) || !std::isfinite(lambda)) {
    throw Error(ErrorCode::InvalidArgument, "lambda must be a finite real >= 1");
  }
}

// ---------------------------------------------------------------------------

class WBEngine {
 public:
  WBEngine(TreeArena& arena, double lambda) : arena_(&arena), lambda_(lambda) {
    check_lambda(lambda);
    const auto& b = arena.boundary();
    if (b.kind() == BoundarySpec::Kind::Plus) {
      for (const auto& [inside, outside] : region_boundary(arena.params(), b.region())) {
        (void)outside;
        plus_frontier_.push_back(arena.intern(inside));
      }
    }
  }

  [[nodiscard]] TreeArena& arena() noexcept { return *arena_; }
  [[nodiscard]] double lambda() const noexcept { return lambda_; }
  [[nodiscard]] double time() const noexcept { return time_; }
  /// Number of free infected vertices.
  [[nodiscard]] std::size_t size() const noexcept { return plus_.size(); }
  [[nodiscard]] std::span<const VertexId> plus_ids() const noexcept { return plus_.items(); }
  [[nodiscard]] bool frozen_participated() const noexcept { return frozen_participated_; }

  [[nodiscard]] double total_rate() const noexcept {
    return (lambda_ + 1.0) * static_cast<double>(edges_[0].size()) +
           lambda_ * static_cast<double>(edges_[1].size()) +
           static_cast<double>(edges_[2].size());
  }
  [[nodiscard]] bool has_transition() const noexcept { return total_rate() > 0.0; }

  /// Sign including frozen vertices.
  [[nodiscard]] bool is_plus(VertexId id) const noexcept {
    switch (arena_->kind(id)) {
      case SiteKind::FrozenPlus: return true;
      case SiteKind::FrozenMinus: return false;
      case SiteKind::Free: return plus_.contains(id);
    }
    return false;
  }

  void reset(std::span<const VertexAddr> init, double time = 0.0) {
    std::vector<VertexId> ids;
    ids.reserve(init.size());
    for (const auto& x : init) ids.push_back(arena_->intern(x));
    reset_ids(ids, time);
  }

  /// Ids must be free vertices; order fixes the internal set order.
  void reset_ids(std::span<const VertexId> init, double time = 0.0) {
    for (auto& s : edges_) {
      for (auto key : s.items()) edge_class_[key] = kNone;
      s.clear();
    }
    plus_.clear();
    time_ = time;
    frozen_participated_ = false;
    for (auto id : init) {
      if (!arena_->is_free(id)) {
        throw Error(ErrorCode::InvalidArgument,
                    "initial configuration contains a frozen vertex " +
                        format_address(arena_->addr(id)));
      }
      plus_.insert(id);
    }
    for (auto id : init) rescan(id);
    for (auto id : plus_frontier_) rescan(id);
  }

  /// Advances by one transition unless the next one falls after `limit`, in
  /// which case the clock is set to `limit` and nothing happens.
  /// `before(t)` runs once the jump time t is known but before the state changes.
  template <class Before = NoHook>
  std::optional<EngineEvent> step_before(RandomStream& rng, double limit, Before&& before = {}) {
    const double total = total_rate();
    if (total <= 0.0) throw Error(ErrorCode::Deadlock, "no discordant edge");
    const double dt = rng.exponential(total);
    if (time_ + dt > limit) {
      time_ = limit;
      return std::nullopt;
    }
    before(time_ + dt);
    time_ += dt;

    const double massA = (lambda_ + 1.0) * static_cast<double>(edges_[0].size());
    const double massB = lambda_ * static_cast<double>(edges_[1].size());
    const double r = rng.uniform() * total;
    int cls = 2;
    if (r < massA) {
      cls = 0;
    } else if (r < massA + massB) {
      cls = 1;
    }
    while (edges_[cls].empty()) cls = (cls + 2) % 3;  // rounding at class borders
    const VertexId key = edges_[cls].at(rng.below(edges_[cls].size()));
    bool infect;
    if (cls == 0) {
      infect = rng.uniform() * (lambda_ + 1.0) < lambda_;
    } else {
      infect = (cls == 1);
    }
    const VertexId par = arena_->known_parent(key);
    const VertexId infected = is_plus(key) ? key : par;
    const VertexId healthy = infected == key ? par : key;

    EngineEvent ev;
    ev.time = time_;
    VertexId flipped;
    if (infect) {
      ev.kind = EventKind::Infect;
      ev.u = infected;
      ev.v = healthy;
      plus_.insert(healthy);
      flipped = healthy;
    } else {
      ev.kind = EventKind::Heal;
      ev.u = healthy;
      ev.v = infected;
      plus_.erase(infected);
      flipped = infected;
    }
    if (!arena_->is_free(ev.u)) frozen_participated_ = true;
    rescan(flipped);
    return ev;
  }

  EngineEvent step(RandomStream& rng) {
    return *step_before(rng, std::numeric_limits<double>::infinity());
  }

  /// Discordant (infected, healthy) pairs with at least one free endpoint,
  /// in canonical order.
  [[nodiscard]] std::vector<DirectedEdge> discordant_pairs() const {
    std::vector<DirectedEdge> out;
    for (const auto& s : edges_) {
      for (auto key : s.items()) {
        const VertexId par = arena_->known_parent(key);
        if (is_plus(key)) {
          out.emplace_back(arena_->addr(key), arena_->addr(par));
        } else {
          out.emplace_back(arena_->addr(par), arena_->addr(key));
        }
      }
    }
    std::sort(out.begin(), out.end());
    return out;
  }

  [[nodiscard]] Configuration configuration() const {
    Configuration c;
    for (auto id : plus_.items()) c.insert(arena_->addr(id));
    return c;
  }

 private:
  static constexpr std::uint8_t kNone = 3;

  void ensure(VertexId id) {
    if (id >= edge_class_.size()) edge_class_.resize(arena_->size(), kNone);
  }

  // Re-derives the classes of the d edges at x (keyed by their child endpoint).
  void rescan(VertexId x) {
    auto nb = arena_->neighbors(x);
    ensure(static_cast<VertexId>(arena_->size() - 1));
    classify(x);
    for (std::size_t i = 1; i < nb.size(); ++i) classify(nb[i]);
  }

  void classify(VertexId key) {
    const VertexId par = arena_->known_parent(key);
    std::uint8_t cls = kNone;
    const bool a = is_plus(key), b = is_plus(par);
    if (a != b) {
      const VertexId infected = a ? key : par;
      const VertexId healthy = a ? par : key;
      const bool hf = arena_->is_free(healthy), inf = arena_->is_free(infected);
      if (hf && inf) {
        cls = 0;
      } else if (hf) {
        cls = 1;
      } else if (inf) {
        cls = 2;
      }
    }
    const std::uint8_t old = edge_class_[key];
    if (old == cls) return;
    if (old != kNone) edges_[old].erase(key);
    if (cls != kNone) edges_[cls].insert(key);
    edge_class_[key] = cls;
  }

  TreeArena* arena_;
  double lambda_;
  double time_ = 0.0;
  bool frozen_participated_ = false;
  IndexedIdSet plus_;
  IndexedIdSet edges_[3];
  std::vector<std::uint8_t> edge_class_;
  std::vector<VertexId> plus_frontier_;
};

// ---------------------------------------------------------------------------

class BCRWEngine {
 public:
  BCRWEngine(TreeArena& arena, double lambda) : arena_(&arena), lambda_(lambda) {
    check_lambda(lambda);
  }

  [[nodiscard]] TreeArena& arena() noexcept { return *arena_; }
  [[nodiscard]] double lambda() const noexcept { return lambda_; }
  [[nodiscard]] double time() const noexcept { return time_; }
  [[nodiscard]] std::size_t size() const noexcept { return occupied_.size(); }
  [[nodiscard]] std::span<const VertexId> occupied_ids() const noexcept {
    return occupied_.items();
  }
  [[nodiscard]] std::span<const VertexId> absorbed_ids() const noexcept {
    return absorbed_.items();
  }
  [[nodiscard]] bool exited() const noexcept { return exited_; }
  [[nodiscard]] bool is_occupied(VertexId id) const noexcept { return occupied_.contains(id); }
  /// Occupied or holding an absorbed particle.
  [[nodiscard]] bool in_state(VertexId id) const noexcept {
    return occupied_.contains(id) || absorbed_.contains(id);
  }

  [[nodiscard]] double total_rate() const noexcept {
    return static_cast<double>(arena_->degree()) * lambda_ *
           static_cast<double>(occupied_.size());
  }
  [[nodiscard]] bool has_transition() const noexcept { return !occupied_.empty(); }

  void reset(std::span<const VertexAddr> init, double time = 0.0) {
    std::vector<VertexId> ids;
    ids.reserve(init.size());
    for (const auto& x : init) ids.push_back(arena_->intern(x));
    reset_ids(ids, time);
  }

  void reset_ids(std::span<const VertexId> init, double time = 0.0) {
    occupied_.clear();
    absorbed_.clear();
    exited_ = false;
    time_ = time;
    for (auto id : init) {
      if (!arena_->is_free(id)) {
        throw Error(ErrorCode::InvalidArgument, "no particle may start on a frozen vertex " +
                                                    format_address(arena_->addr(id)));
      }
      occupied_.insert(id);
    }
  }

  template <class Before = NoHook>
  std::optional<EngineEvent> step_before(RandomStream& rng, double limit, Before&& before = {}) {
    const double total = total_rate();
    if (total <= 0.0) throw Error(ErrorCode::Deadlock, "no particle left to move");
    const double dt = rng.exponential(total);
    if (time_ + dt > limit) {
      time_ = limit;
      return std::nullopt;
    }
    before(time_ + dt);
    time_ += dt;

    const VertexId src = occupied_.at(rng.below(occupied_.size()));
    auto nb = arena_->neighbors(src);
    const VertexId dst = nb[rng.below(nb.size())];
    const bool move = rng.uniform() * lambda_ < 1.0;

    EngineEvent ev;
    ev.time = time_;
    ev.u = src;
    ev.v = dst;
    switch (arena_->kind(dst)) {
      case SiteKind::Free:
        if (move) {
          occupied_.erase(src);
          ev.source_vacated = true;
          ev.kind = occupied_.insert(dst) ? EventKind::Move : EventKind::Coalesce;
        } else {
          occupied_.insert(dst);
          ev.kind = EventKind::Branch;
        }
        break;
      case SiteKind::FrozenMinus:
        if (move) {
          occupied_.erase(src);
          ev.source_vacated = true;
        }
        exited_ = true;
        ev.kind = EventKind::Exit;
        break;
      case SiteKind::FrozenPlus:
        if (move) {
          occupied_.erase(src);
          ev.source_vacated = true;
        }
        absorbed_.insert(dst);
        exited_ = true;
        ev.kind = EventKind::Absorb;
        break;
    }
    return ev;
  }

  EngineEvent step(RandomStream& rng) {
    return *step_before(rng, std::numeric_limits<double>::infinity());
  }

  [[nodiscard]] Configuration configuration() const {
    Configuration c;
    for (auto id : occupied_.items()) c.insert(arena_->addr(id));
    return c;
  }
  [[nodiscard]] Configuration absorbed_configuration() const {
    Configuration c;
    for (auto id : absorbed_.items()) c.insert(arena_->addr(id));
    return c;
  }

 private:
  TreeArena* arena_;
  double lambda_;
  double time_ = 0.0;
  bool exited_ = false;
  IndexedIdSet occupied_;
  IndexedIdSet absorbed_;
};

// ---------------------------------------------------------------------------
// Runs and trajectories

enum class ProcessKind : std::uint8_t { WB, BCRW };

enum class StopReason : std::uint8_t {
  Extinction,
  SizeReached,
  SetIncluded,
  TimeLimit,
  EventLimit,
  Absorbed,
};

inline constexpr std::string_view to_string(StopReason r) noexcept {
  switch (r) {
    case StopReason::Extinction: return "extinction";
    case StopReason::SizeReached: return "size_reached";
    case StopReason::SetIncluded: return "set_included";
    case StopReason::TimeLimit: return "time_limit";
    case StopReason::EventLimit: return "event_limit";
    case StopReason::Absorbed: return "absorbed";
  }
  return "?";
}

inline constexpr std::uint64_t kDefaultMaxEvents = 10'000'000;

struct StopCondition {
  std::optional<double> t_max;
  std::optional<std::uint64_t> max_events = kDefaultMaxEvents;
  bool extinction = false;
  std::optional<std::size_t> size_reaches;
  std::optional<std::vector<VertexAddr>> includes_set;

  void validate() const {
    if (!t_max && !max_events) {
      throw Error(ErrorCode::InvalidArgument, "a stop condition needs t_max or max_events");
    }
    if (t_max && !(*t_max >= 0.0)) {
      throw Error(ErrorCode::InvalidArgument, "t_max must be nonnegative");
    }
  }
};

struct RunOptions {
  bool record_events = true;
  /// Times at which to record the state; must be sorted.
  std::vector<double> snapshot_times;
};

struct Event {
  double time = 0.0;
  EventKind kind = EventKind::Infect;
  VertexAddr u;
  VertexAddr v;
  bool source_vacated = false;

  friend bool operator==(const Event&, const Event&) = default;
};

struct Snapshot {
  double time = 0.0;
  Configuration state;
};

struct Trajectory {
  ProcessKind process = ProcessKind::WB;
  Configuration initial;
  bool events_recorded = true;
  std::vector<Event> events;
  std::vector<Snapshot> snapshots;
  Configuration final_state;
  /// BCRW only: particles parked on frozen + vertices.
  Configuration absorbed_plus;
  /// BCRW only: some particle tried to leave the free region.
  bool exited = false;
  /// WB only: a frozen vertex infected or healed a free one.
  bool frozen_participated = false;
  double final_time = 0.0;
  std::uint64_t event_count = 0;
  StopReason reason = StopReason::TimeLimit;
  /// Set when the includes_set stop fired.
  std::optional<double> inclusion_time;

  [[nodiscard]] bool truncated() const noexcept { return reason == StopReason::EventLimit; }
};

namespace detail {

template <class Engine>
bool in_run_state(const Engine& e, VertexId id) {
  if constexpr (std::is_same_v<Engine, WBEngine>) {
    return e.is_plus(id);
  } else {
    return e.in_state(id);
  }
}

template <class Engine>
bool run_state_empty(const Engine& e) {
  if constexpr (std::is_same_v<Engine, WBEngine>) {
    return e.size() == 0;
  } else {
    return e.size() == 0 && e.absorbed_ids().empty();
  }
}

template <class Engine>
Trajectory run_engine(Engine& engine, std::span<const VertexAddr> init, const StopCondition& stop,
                      const RunOptions& options, RandomStream& rng) {
  stop.validate();
  TreeArena& arena = engine.arena();
  std::vector<VertexAddr> start(init.begin(), init.end());
  std::sort(start.begin(), start.end());
  start.erase(std::unique(start.begin(), start.end()), start.end());
  engine.reset(start);

  Trajectory tr;
  tr.process = std::is_same_v<Engine, WBEngine> ? ProcessKind::WB : ProcessKind::BCRW;
  tr.initial = Configuration(std::span<const VertexAddr>(start));
  tr.events_recorded = options.record_events;

  std::vector<VertexId> target;
  if (stop.includes_set) {
    for (const auto& x : *stop.includes_set) target.push_back(arena.intern(x));
    std::sort(target.begin(), target.end());
    target.erase(std::unique(target.begin(), target.end()), target.end());
  }
  auto included = [&] {
    return std::all_of(target.begin(), target.end(),
                       [&](VertexId id) { return in_run_state(engine, id); });
  };

  const double limit = stop.t_max ? *stop.t_max : std::numeric_limits<double>::infinity();
  std::size_t next_snapshot = 0;
  auto take_snapshots_before = [&](double t, bool inclusive) {
    while (next_snapshot < options.snapshot_times.size()) {
      const double s = options.snapshot_times[next_snapshot];
      if (inclusive ? s > t : s >= t) break;
      tr.snapshots.push_back({s, engine.configuration()});
      ++next_snapshot;
    }
  };

  auto check_stops = [&]() -> std::optional<StopReason> {
    if (stop.extinction && run_state_empty(engine)) return StopReason::Extinction;
    if (stop.size_reaches && engine.size() >= *stop.size_reaches) return StopReason::SizeReached;
    if (stop.includes_set && included()) {
      tr.inclusion_time = engine.time();
      return StopReason::SetIncluded;
    }
    return std::nullopt;
  };

  std::optional<StopReason> reason = check_stops();
  while (!reason) {
    if (!engine.has_transition()) {
      reason = run_state_empty(engine) ? StopReason::Extinction : StopReason::Absorbed;
      break;
    }
    if (stop.max_events && tr.event_count >= *stop.max_events) {
      reason = StopReason::EventLimit;
      break;
    }
    auto ev = engine.step_before(rng, limit, [&](double t) { take_snapshots_before(t, false); });
    if (!ev) {
      reason = StopReason::TimeLimit;
      break;
    }
    ++tr.event_count;
    if (options.record_events) {
      tr.events.push_back({ev->time, ev->kind, arena.addr(ev->u), arena.addr(ev->v),
                           ev->source_vacated});
    }
    reason = check_stops();
  }

  tr.reason = *reason;
  tr.final_time = engine.time();
  // The state is frozen after absorption, so later snapshot times are known too.
  const bool absorbing = tr.reason == StopReason::Absorbed || !engine.has_transition();
  take_snapshots_before(absorbing ? std::numeric_limits<double>::infinity() : tr.final_time,
                        true);
  tr.final_state = engine.configuration();
  if constexpr (std::is_same_v<Engine, BCRWEngine>) {
    tr.absorbed_plus = engine.absorbed_configuration();
    tr.exited = engine.exited();
  } else {
    tr.frozen_participated = engine.frozen_participated();
  }
  return tr;
}

}  // namespace detail

/// WB run reusing an existing arena (its boundary applies).
inline Trajectory wb_run(TreeArena& arena, std::span<const VertexAddr> init, double lambda,
                         const StopCondition& stop, RandomStream& rng,
                         const RunOptions& options = {}) {
  WBEngine engine(arena, lambda);
  return detail::run_engine(engine, init, stop, options, rng);
}

inline Trajectory wb_run(const TreeParams& params, const Configuration& init,
                         const BoundarySpec& boundary, double lambda, const StopCondition& stop,
                         RandomStream& rng, const RunOptions& options = {}) {
  TreeArena arena(params, boundary);
  const auto start = init.sorted();
  return wb_run(arena, start, lambda, stop, rng, options);
}

inline Trajectory bcrw_run(TreeArena& arena, std::span<const VertexAddr> init, double lambda,
                           const StopCondition& stop, RandomStream& rng,
                           const RunOptions& options = {}) {
  BCRWEngine engine(arena, lambda);
  return detail::run_engine(engine, init, stop, options, rng);
}

inline Trajectory bcrw_run(const TreeParams& params, const Configuration& init,
                           const BoundarySpec& boundary, double lambda,
                           const StopCondition& stop, RandomStream& rng,
                           const RunOptions& options = {}) {
  TreeArena arena(params, boundary);
  const auto start = init.sorted();
  return bcrw_run(arena, start, lambda, stop, rng, options);
}

// ---------------------------------------------------------------------------
// Trajectory analysis

namespace detail {

inline void require_events(const Trajectory& tr) {
  if (!tr.events_recorded && tr.event_count > 0) {
    throw Error(ErrorCode::InvalidArgument, "trajectory was run without an event log");
  }
}

/// Applies one logged event to (state, absorbed).
inline void apply_event(ProcessKind process, const Event& e, Configuration& state,
                        Configuration& absorbed) {
  if (process == ProcessKind::WB) {
    if (e.kind == EventKind::Infect) {
      state.insert(e.v);
    } else {
      state.erase(e.v);
    }
    return;
  }
  if (e.source_vacated) state.erase(e.u);
  switch (e.kind) {
    case EventKind::Move:
    case EventKind::Branch:
      state.insert(e.v);
      break;
    case EventKind::Absorb:
      absorbed.insert(e.v);
      break;
    default:
      break;
  }
}

}  // namespace detail

/// Replays the event log from the initial state; returns (state, absorbed).
inline std::pair<Configuration, Configuration> replay(const Trajectory& tr) {
  detail::require_events(tr);
  Configuration state = tr.initial, absorbed;
  for (const auto& e : tr.events) detail::apply_event(tr.process, e, state, absorbed);
  return {std::move(state), std::move(absorbed)};
}

/// First time the state (occupied + absorbed for BCRW) contains U.
inline std::optional<double> inclusion_time(const Trajectory& tr,
                                            std::span<const VertexAddr> U) {
  if (U.empty()) return 0.0;
  detail::require_events(tr);
  Configuration state = tr.initial, absorbed;
  auto holds = [&] {
    return std::all_of(U.begin(), U.end(), [&](const VertexAddr& x) {
      return state.contains(x) || absorbed.contains(x);
    });
  };
  if (holds()) return 0.0;
  for (const auto& e : tr.events) {
    detail::apply_event(tr.process, e, state, absorbed);
    if (holds()) return e.time;
  }
  return std::nullopt;
}

/// |xi| at every transition, starting with |xi_0|.
inline std::vector<std::int64_t> embedded_size_walk(const Trajectory& tr) {
  if (tr.process != ProcessKind::WB) {
    throw Error(ErrorCode::InvalidArgument, "embedded size walk is defined for WB runs");
  }
  if (tr.frozen_participated) {
    throw Error(ErrorCode::InvalidForBoundary, "a frozen vertex took part in a transition");
  }
  detail::require_events(tr);
  std::vector<std::int64_t> sizes;
  sizes.reserve(tr.events.size() + 1);
  auto n = static_cast<std::int64_t>(tr.initial.size());
  sizes.push_back(n);
  for (const auto& e : tr.events) {
    n += e.kind == EventKind::Infect ? 1 : -1;
    sizes.push_back(n);
  }
  return sizes;
}

/// Discordant pairs (infected, healthy) with at least one free endpoint,
/// recomputed from scratch. Canonical order.
inline std::vector<DirectedEdge> recompute_discordant(const TreeParams& params,
                                                      const BoundarySpec& boundary,
                                                      const Configuration& config) {
  auto plus = [&](const VertexAddr& x) {
    const SiteKind s = boundary.site(x);
    return s == SiteKind::FrozenPlus || (s == SiteKind::Free && config.contains(x));
  };
  std::vector<DirectedEdge> out;
  for (const auto& x : config.sorted()) {
    for (auto& y : neighbors(params, x)) {
      if (!plus(y)) out.emplace_back(x, std::move(y));
    }
  }
  if (boundary.kind() == BoundarySpec::Kind::Plus) {
    for (auto& [inside, outside] : region_boundary(params, boundary.region())) {
      if (!config.contains(inside)) out.emplace_back(std::move(outside), std::move(inside));
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace wbtree
