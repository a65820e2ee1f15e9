#pragma once

// The d-regular tree with a distinguished origin and a fixed end.
//
// A vertex is addressed canonically by (k, w): climb k steps from the origin
// along the ray toward the fixed end to the ancestor a(k), then descend by the
// child indices in w (each in [0, d-2]). Child 0 of a ray vertex a(k), k >= 1,
// is a(k-1), so a word hanging off a(k) with k > 0 must not start with 0.

#include <algorithm>
#include <charconv>
#include <compare>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <utility>
#include <variant>
#include <vector>

#include "wbtree/error.hpp"

namespace wbtree {

class TreeParams {
 public:
  static constexpr int kMinDegree = 3;
  static constexpr int kMaxDegree = 64;

  explicit TreeParams(int d) : d_(d) {
    if (d < kMinDegree) {
      throw Error(ErrorCode::DegreeTooSmall, "degree must be at least 3, got " + std::to_string(d));
    }
    if (d > kMaxDegree) {
      throw Error(ErrorCode::InvalidArgument, "degree is capped at 64, got " + std::to_string(d));
    }
  }

  [[nodiscard]] int d() const noexcept { return d_; }
  [[nodiscard]] int child_count() const noexcept { return d_ - 1; }

  friend bool operator==(const TreeParams&, const TreeParams&) = default;

 private:
  int d_;
};

class VertexAddr {
 public:
  using Word = std::vector<std::uint8_t>;

  /// The origin.
  VertexAddr() = default;

  VertexAddr(std::uint32_t k, Word w) : k_(k), w_(std::move(w)) {
    if (k_ > 0 && !w_.empty() && w_.front() == 0) {
      throw Error(ErrorCode::InvalidAddress,
                  "non-canonical address: word below a(k), k > 0, starts with child 0");
    }
  }

  static VertexAddr origin() { return {}; }
  static VertexAddr ray(std::uint32_t k) { return VertexAddr(k, {}); }

  [[nodiscard]] std::uint32_t k() const noexcept { return k_; }
  [[nodiscard]] const Word& word() const noexcept { return w_; }
  [[nodiscard]] bool is_origin() const noexcept { return k_ == 0 && w_.empty(); }
  [[nodiscard]] bool on_ray() const noexcept { return w_.empty(); }

  /// rho(0, x)
  [[nodiscard]] std::uint64_t depth() const noexcept { return k_ + w_.size(); }

  friend bool operator==(const VertexAddr&, const VertexAddr&) = default;

  // Canonical order: (rho(0, .), k, w) lexicographic.
  friend std::strong_ordering operator<=>(const VertexAddr& a, const VertexAddr& b) {
    if (auto c = a.depth() <=> b.depth(); c != 0) return c;
    if (auto c = a.k_ <=> b.k_; c != 0) return c;
    return std::lexicographical_compare_three_way(a.w_.begin(), a.w_.end(), b.w_.begin(),
                                                  b.w_.end());
  }

 private:
  friend VertexAddr parent(const VertexAddr& x);
  friend std::vector<VertexAddr> children(const TreeParams& params, const VertexAddr& x);

  struct Unchecked {};
  VertexAddr(Unchecked, std::uint32_t k, Word w) : k_(k), w_(std::move(w)) {}

  std::uint32_t k_ = 0;
  Word w_;
};

struct VertexAddrHash {
  std::size_t operator()(const VertexAddr& x) const noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL ^ x.k();
    h *= 0x100000001b3ULL;
    for (auto c : x.word()) {
      h ^= c + 1u;
      h *= 0x100000001b3ULL;
    }
    h ^= h >> 29;
    return static_cast<std::size_t>(h);
  }
};

using VertexSet = std::unordered_set<VertexAddr, VertexAddrHash>;

inline VertexAddr parent(const VertexAddr& x) {
  if (x.w_.empty()) return VertexAddr(VertexAddr::Unchecked{}, x.k_ + 1, {});
  VertexAddr::Word w(x.w_.begin(), x.w_.end() - 1);
  return VertexAddr(VertexAddr::Unchecked{}, x.k_, std::move(w));
}

/// The d-1 children in local-index order; child 0 of a(k), k >= 1, is a(k-1).
inline std::vector<VertexAddr> children(const TreeParams& params, const VertexAddr& x) {
  std::vector<VertexAddr> out;
  out.reserve(static_cast<std::size_t>(params.child_count()));
  for (int i = 0; i < params.child_count(); ++i) {
    if (x.k_ > 0 && x.w_.empty() && i == 0) {
      out.push_back(VertexAddr(VertexAddr::Unchecked{}, x.k_ - 1, {}));
      continue;
    }
    VertexAddr::Word w = x.w_;
    w.push_back(static_cast<std::uint8_t>(i));
    out.push_back(VertexAddr(VertexAddr::Unchecked{}, x.k_, std::move(w)));
  }
  return out;
}

/// Parent first, then children in local-index order.
inline std::vector<VertexAddr> neighbors(const TreeParams& params, const VertexAddr& x) {
  std::vector<VertexAddr> out;
  out.reserve(static_cast<std::size_t>(params.d()));
  out.push_back(parent(x));
  auto ch = children(params, x);
  std::move(ch.begin(), ch.end(), std::back_inserter(out));
  return out;
}

namespace detail {

// View of an address as a descent word from a(K), K >= k: 0^{K-k} followed by w.
struct LiftedWord {
  const VertexAddr* x;
  std::uint32_t pad;

  LiftedWord(const VertexAddr& v, std::uint32_t K) : x(&v), pad(K - v.k()) {}
  [[nodiscard]] std::size_t size() const noexcept { return pad + x->word().size(); }
  [[nodiscard]] std::uint8_t operator[](std::size_t i) const noexcept {
    return i < pad ? std::uint8_t{0} : x->word()[i - pad];
  }
};

inline std::size_t common_prefix(const LiftedWord& a, const LiftedWord& b) noexcept {
  const std::size_t n = std::min(a.size(), b.size());
  std::size_t i = 0;
  while (i < n && a[i] == b[i]) ++i;
  return i;
}

}  // namespace detail

inline std::uint64_t distance(const VertexAddr& x, const VertexAddr& y) {
  const std::uint32_t K = std::max(x.k(), y.k());
  const detail::LiftedWord a(x, K), b(y, K);
  const std::size_t lcp = detail::common_prefix(a, b);
  return a.size() + b.size() - 2 * lcp;
}

/// Signed depth relative to the origin through the fixed end: |w| - k.
inline std::int64_t height(const VertexAddr& x) noexcept {
  return static_cast<std::int64_t>(x.word().size()) - static_cast<std::int64_t>(x.k());
}

/// True iff x lies in the subtree T_root (root included).
inline bool in_subtree(const VertexAddr& x, const VertexAddr& root) {
  const std::uint32_t K = std::max(x.k(), root.k());
  const detail::LiftedWord a(x, K), r(root, K);
  return r.size() <= a.size() && detail::common_prefix(a, r) == r.size();
}

// ---------------------------------------------------------------------------
// Regions

struct WholeTree {
  friend bool operator==(const WholeTree&, const WholeTree&) = default;
};

struct Ball {
  VertexAddr center;
  std::uint32_t radius = 0;
  friend bool operator==(const Ball&, const Ball&) = default;
};

/// T_root, optionally capped at distance `depth` below the root.
struct Subtree {
  VertexAddr root;
  std::optional<std::uint32_t> depth;
  friend bool operator==(const Subtree&, const Subtree&) = default;
};

/// T_xy = (T_x \ T_y) + {y}, optionally capped at distance `depth` below x.
struct SubtreeMinusBelow {
  VertexAddr top;
  VertexAddr bottom;
  std::optional<std::uint32_t> depth;
  friend bool operator==(const SubtreeMinusBelow&, const SubtreeMinusBelow&) = default;
};

/// A finite vertex set, stored sorted in canonical order without duplicates.
struct ExplicitSet {
  std::vector<VertexAddr> vertices;
  friend bool operator==(const ExplicitSet&, const ExplicitSet&) = default;
};

class Region {
 public:
  using Kind = std::variant<WholeTree, Ball, Subtree, SubtreeMinusBelow, ExplicitSet>;

  Region() = default;
  Region(WholeTree w) : kind_(w) {}
  Region(Ball b) : kind_(std::move(b)) {}
  Region(Subtree s) : kind_(std::move(s)) {}
  Region(SubtreeMinusBelow s) : kind_(std::move(s)) {
    const auto& t = std::get<SubtreeMinusBelow>(kind_);
    if (!in_subtree(t.bottom, t.top)) {
      throw Error(ErrorCode::InvalidArgument, "T_xy requires y in T_x");
    }
  }
  Region(ExplicitSet e) : kind_(std::move(e)) {
    auto& v = std::get<ExplicitSet>(kind_).vertices;
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
  }

  static Region explicit_set(std::vector<VertexAddr> vertices) {
    return Region(ExplicitSet{std::move(vertices)});
  }

  [[nodiscard]] const Kind& kind() const noexcept { return kind_; }

  [[nodiscard]] bool contains(const VertexAddr& x) const {
    return std::visit(
        [&](const auto& r) -> bool {
          using R = std::decay_t<decltype(r)>;
          if constexpr (std::is_same_v<R, WholeTree>) {
            return true;
          } else if constexpr (std::is_same_v<R, Ball>) {
            return distance(r.center, x) <= r.radius;
          } else if constexpr (std::is_same_v<R, Subtree>) {
            if (!in_subtree(x, r.root)) return false;
            return !r.depth || distance(r.root, x) <= *r.depth;
          } else if constexpr (std::is_same_v<R, SubtreeMinusBelow>) {
            if (!in_subtree(x, r.top)) return false;
            if (x != r.bottom && in_subtree(x, r.bottom)) return false;
            return !r.depth || distance(r.top, x) <= *r.depth;
          } else {
            return std::binary_search(r.vertices.begin(), r.vertices.end(), x);
          }
        },
        kind_);
  }

  [[nodiscard]] bool is_finite() const noexcept {
    return std::visit(
        [](const auto& r) -> bool {
          using R = std::decay_t<decltype(r)>;
          if constexpr (std::is_same_v<R, WholeTree>) {
            return false;
          } else if constexpr (std::is_same_v<R, Subtree>) {
            return r.depth.has_value();
          } else if constexpr (std::is_same_v<R, SubtreeMinusBelow>) {
            return r.depth.has_value() || r.top == r.bottom;
          } else {
            return true;
          }
        },
        kind_);
  }

  friend bool operator==(const Region&, const Region&) = default;

 private:
  Kind kind_{WholeTree{}};
};

namespace detail {

// Collects every vertex of T_top reachable by descending at most `depth` steps,
// without descending below `stop` (if given).
inline void descend(const TreeParams& params, const VertexAddr& top, std::uint32_t depth,
                    const VertexAddr* stop, std::vector<VertexAddr>& out) {
  std::vector<std::pair<VertexAddr, std::uint32_t>> stack{{top, 0}};
  while (!stack.empty()) {
    auto [v, dist] = std::move(stack.back());
    stack.pop_back();
    const bool expand = dist < depth && !(stop && v == *stop);
    if (expand) {
      for (auto& c : children(params, v)) stack.emplace_back(std::move(c), dist + 1);
    }
    out.push_back(std::move(v));
  }
}

}  // namespace detail

/// All vertices of a finite region, sorted in canonical order.
inline std::vector<VertexAddr> enumerate_region(const TreeParams& params, const Region& region) {
  if (!region.is_finite()) {
    throw Error(ErrorCode::InfiniteRegion, "region is not finite");
  }
  std::vector<VertexAddr> out;
  std::visit(
      [&](const auto& r) {
        using R = std::decay_t<decltype(r)>;
        if constexpr (std::is_same_v<R, Ball>) {
          // Tree search from the center that never steps back to where it came from.
          struct Item {
            VertexAddr v;
            std::optional<VertexAddr> from;
            std::uint32_t dist;
          };
          std::vector<Item> stack{{r.center, std::nullopt, 0}};
          while (!stack.empty()) {
            Item it = std::move(stack.back());
            stack.pop_back();
            if (it.dist < r.radius) {
              for (auto& n : neighbors(params, it.v)) {
                if (it.from && n == *it.from) continue;
                stack.push_back({std::move(n), it.v, it.dist + 1});
              }
            }
            out.push_back(std::move(it.v));
          }
        } else if constexpr (std::is_same_v<R, Subtree>) {
          detail::descend(params, r.root, *r.depth, nullptr, out);
        } else if constexpr (std::is_same_v<R, SubtreeMinusBelow>) {
          const std::uint32_t cap = r.depth ? *r.depth : 0;
          detail::descend(params, r.top, cap, &r.bottom, out);
        } else if constexpr (std::is_same_v<R, ExplicitSet>) {
          out = r.vertices;
        }
      },
      region.kind());
  std::sort(out.begin(), out.end());
  return out;
}

inline std::vector<VertexAddr> sphere(const TreeParams& params, const VertexAddr& center,
                                      std::uint32_t r) {
  auto ball = enumerate_region(params, Ball{center, r});
  std::erase_if(ball, [&](const VertexAddr& v) { return distance(center, v) != r; });
  return ball;
}

using DirectedEdge = std::pair<VertexAddr, VertexAddr>;

/// Edges with exactly one endpoint in U, as (inside, outside) pairs.
/// Ordered by the inside vertex (canonical), then parent before children.
inline std::vector<DirectedEdge> boundary_edges(const TreeParams& params,
                                                std::span<const VertexAddr> U) {
  VertexSet members(U.begin(), U.end());
  std::vector<VertexAddr> sorted(members.begin(), members.end());
  std::sort(sorted.begin(), sorted.end());
  std::vector<DirectedEdge> out;
  for (const auto& u : sorted) {
    for (auto& v : neighbors(params, u)) {
      if (!members.contains(v)) out.emplace_back(u, std::move(v));
    }
  }
  return out;
}

/// Boundary edges (inside, outside) of a region whose boundary is finite.
/// Every region kind has a finite edge boundary; WholeTree has none.
inline std::vector<DirectedEdge> region_boundary(const TreeParams& params, const Region& region) {
  if (region.is_finite()) {
    auto vs = enumerate_region(params, region);
    return boundary_edges(params, vs);
  }
  std::vector<DirectedEdge> out;
  if (const auto* s = std::get_if<Subtree>(&region.kind())) {
    out.emplace_back(s->root, parent(s->root));
  } else if (const auto* t = std::get_if<SubtreeMinusBelow>(&region.kind())) {
    out.emplace_back(t->top, parent(t->top));
    for (auto& c : children(params, t->bottom)) out.emplace_back(t->bottom, std::move(c));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Textual addresses: "o" is the origin, otherwise "u<k>" optionally followed by
// "/" and dot-separated child indices, e.g. "u2/1.0" = (k=2, w=[1,0]).

inline std::string format_address(const VertexAddr& x) {
  if (x.is_origin()) return "o";
  std::string s = "u" + std::to_string(x.k());
  for (std::size_t i = 0; i < x.word().size(); ++i) {
    s += (i == 0) ? '/' : '.';
    s += std::to_string(x.word()[i]);
  }
  return s;
}

inline VertexAddr parse_address(std::string_view text, const TreeParams& params) {
  auto fail = [&](const std::string& why) -> VertexAddr {
    throw Error(ErrorCode::InvalidAddress, "'" + std::string(text) + "': " + why);
  };
  if (text == "o") return VertexAddr::origin();
  if (text.size() < 2 || text.front() != 'u') return fail("expected 'o' or 'u<k>[/i.j...]'");

  auto parse_uint = [&](std::string_view digits, std::uint64_t limit) -> std::uint64_t {
    if (digits.empty()) fail("empty number");
    if (digits.size() > 1 && digits.front() == '0') fail("leading zero");
    std::uint64_t value = 0;
    auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), value);
    if (ec != std::errc{} || ptr != digits.data() + digits.size()) fail("bad number");
    if (value > limit) fail("number out of range");
    return value;
  };

  const std::string_view rest = text.substr(1);
  const auto slash = rest.find('/');
  const auto k = static_cast<std::uint32_t>(
      parse_uint(rest.substr(0, slash), std::numeric_limits<std::uint32_t>::max()));
  VertexAddr::Word w;
  if (slash != std::string_view::npos) {
    std::string_view letters = rest.substr(slash + 1);
    if (letters.empty()) fail("empty descent word");
    while (true) {
      const auto dot = letters.find('.');
      w.push_back(static_cast<std::uint8_t>(
          parse_uint(letters.substr(0, dot), static_cast<std::uint64_t>(params.d() - 2))));
      if (dot == std::string_view::npos) break;
      letters = letters.substr(dot + 1);
    }
  }
  if (k > 0 && !w.empty() && w.front() == 0) {
    fail("non-canonical: a word below a(k), k > 0, cannot start with 0");
  }
  return VertexAddr(k, std::move(w));
}

}  // namespace wbtree
