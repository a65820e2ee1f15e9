#pragma once

#include <algorithm>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <tuple>
#include <variant>
#include <vector>

#include "wbtree/error.hpp"
#include "wbtree/random.hpp"
#include "wbtree/tree.hpp"

namespace wbtree {

/// Finite set of + (infected / occupied) vertices; every other vertex is -.
class Configuration {
 public:
  Configuration() = default;
  Configuration(std::initializer_list<VertexAddr> vs) : plus_(vs.begin(), vs.end()) {}
  explicit Configuration(std::span<const VertexAddr> vs) : plus_(vs.begin(), vs.end()) {}
  explicit Configuration(VertexSet vs) : plus_(std::move(vs)) {}

  [[nodiscard]] bool contains(const VertexAddr& x) const { return plus_.contains(x); }
  [[nodiscard]] std::size_t size() const noexcept { return plus_.size(); }
  [[nodiscard]] bool empty() const noexcept { return plus_.empty(); }
  [[nodiscard]] const VertexSet& set() const noexcept { return plus_; }

  void insert(const VertexAddr& x) { plus_.insert(x); }
  void erase(const VertexAddr& x) { plus_.erase(x); }

  /// Members in canonical order.
  [[nodiscard]] std::vector<VertexAddr> sorted() const {
    std::vector<VertexAddr> v(plus_.begin(), plus_.end());
    std::sort(v.begin(), v.end());
    return v;
  }

  [[nodiscard]] bool subset_of(const Configuration& other) const {
    return std::all_of(plus_.begin(), plus_.end(),
                       [&](const VertexAddr& x) { return other.contains(x); });
  }

  [[nodiscard]] bool intersects(const Configuration& other) const {
    const auto& [small, large] =
        size() <= other.size() ? std::tie(*this, other) : std::tie(other, *this);
    return std::any_of(small.plus_.begin(), small.plus_.end(),
                       [&](const VertexAddr& x) { return large.contains(x); });
  }

  friend bool operator==(const Configuration& a, const Configuration& b) {
    return a.plus_ == b.plus_;
  }

 private:
  VertexSet plus_;
};

/// xi^x: the configuration with the sign at x toggled.
inline Configuration flip(Configuration c, const VertexAddr& x) {
  if (c.contains(x)) {
    c.erase(x);
  } else {
    c.insert(x);
  }
  return c;
}

/// Uniform mark u_x in [0, 1) attached to vertex x under `key`. Thinning keeps x
/// iff u_x < p, so thinnings at different p from one key are nested.
inline double vertex_mark(StreamKey key, const VertexAddr& x) {
  StreamKey k = key.absorb(x.k()).absorb(x.word());
  return RandomStream(k).uniform();
}

/// p-thinning: each + vertex kept independently with probability p.
inline Configuration thin(const Configuration& c, double p, StreamKey key) {
  if (!(p >= 0.0 && p <= 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "thinning probability must lie in [0, 1]");
  }
  const StreamKey marks = key.derive("thin");
  Configuration out;
  for (const auto& x : c.set()) {
    if (vertex_mark(marks, x) < p) out.insert(x);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Boundary conditions

enum class SiteKind : std::uint8_t { Free, FrozenPlus, FrozenMinus };

/// Vertices outside `region` are frozen with the given sign.
class BoundarySpec {
 public:
  enum class Kind { None, Plus, Minus };

  BoundarySpec() = default;
  static BoundarySpec none() { return {}; }
  static BoundarySpec plus(Region g) { return BoundarySpec(Kind::Plus, std::move(g)); }
  static BoundarySpec minus(Region g) { return BoundarySpec(Kind::Minus, std::move(g)); }

  [[nodiscard]] Kind kind() const noexcept { return kind_; }
  [[nodiscard]] const Region& region() const noexcept { return region_; }

  [[nodiscard]] SiteKind site(const VertexAddr& x) const {
    if (kind_ == Kind::None || region_.contains(x)) return SiteKind::Free;
    return kind_ == Kind::Plus ? SiteKind::FrozenPlus : SiteKind::FrozenMinus;
  }
  [[nodiscard]] bool is_free(const VertexAddr& x) const { return site(x) == SiteKind::Free; }

  friend bool operator==(const BoundarySpec&, const BoundarySpec&) = default;

 private:
  BoundarySpec(Kind k, Region g) : kind_(k), region_(std::move(g)) {}

  Kind kind_ = Kind::None;
  Region region_{};
};

// ---------------------------------------------------------------------------
// Initial conditions

struct OriginInit {
  friend bool operator==(const OriginInit&, const OriginInit&) = default;
};
struct ExplicitInit {
  std::vector<VertexAddr> vertices;
  friend bool operator==(const ExplicitInit&, const ExplicitInit&) = default;
};
/// Bernoulli(p) product measure restricted to Ball(origin, radius).
struct BernoulliBallInit {
  double p = 0.0;
  std::uint32_t radius = 0;
  friend bool operator==(const BernoulliBallInit&, const BernoulliBallInit&) = default;
};

using InitSpec = std::variant<OriginInit, ExplicitInit, BernoulliBallInit>;

inline void validate(const InitSpec& spec) {
  if (const auto* b = std::get_if<BernoulliBallInit>(&spec)) {
    if (!(b->p >= 0.0 && b->p <= 1.0)) {
      throw Error(ErrorCode::InvalidArgument, "Bernoulli init probability must lie in [0, 1]");
    }
  }
}

/// Draws initial configurations. The ball is enumerated once, and signs are
/// drawn in canonical vertex order from the given stream.
class InitSampler {
 public:
  InitSampler(const TreeParams& params, InitSpec spec) : spec_(std::move(spec)) {
    validate(spec_);
    if (const auto* b = std::get_if<BernoulliBallInit>(&spec_)) {
      ball_ = enumerate_region(params, Ball{VertexAddr::origin(), b->radius});
    }
  }

  [[nodiscard]] const InitSpec& spec() const noexcept { return spec_; }
  /// Vertices of the Bernoulli support (empty for other kinds).
  [[nodiscard]] const std::vector<VertexAddr>& support() const noexcept { return ball_; }

  /// Indices into support() that came up +; Bernoulli kind only.
  void draw_indices(RandomStream& stream, std::vector<std::uint32_t>& out) const {
    out.clear();
    const double p = std::get<BernoulliBallInit>(spec_).p;
    for (std::uint32_t i = 0; i < ball_.size(); ++i) {
      if (stream.uniform() < p) out.push_back(i);
    }
  }

  [[nodiscard]] Configuration draw(RandomStream& stream) const {
    return std::visit(
        [&](const auto& s) -> Configuration {
          using S = std::decay_t<decltype(s)>;
          if constexpr (std::is_same_v<S, OriginInit>) {
            return Configuration{VertexAddr::origin()};
          } else if constexpr (std::is_same_v<S, ExplicitInit>) {
            return Configuration(std::span<const VertexAddr>(s.vertices));
          } else {
            std::vector<std::uint32_t> idx;
            draw_indices(stream, idx);
            Configuration c;
            for (auto i : idx) c.insert(ball_[i]);
            return c;
          }
        },
        spec_);
  }

 private:
  InitSpec spec_;
  std::vector<VertexAddr> ball_;
};

inline Configuration realize_init(const InitSpec& spec, const TreeParams& params,
                                  RandomStream& stream) {
  return InitSampler(params, spec).draw(stream);
}

}  // namespace wbtree
