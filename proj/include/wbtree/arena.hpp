#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <unordered_map>
#include <vector>

#include "wbtree/configs.hpp"
#include "wbtree/tree.hpp"

namespace wbtree {

using VertexId = std::uint32_t;
inline constexpr VertexId kNoVertex = std::numeric_limits<VertexId>::max();

/// Lazily interned view of the tree under fixed boundary conditions. Vertices
/// get dense ids on first touch; neighbor lists are materialized on demand.
/// Ids are a cache detail: nothing observable depends on their values.
class TreeArena {
 public:
  TreeArena(TreeParams params, BoundarySpec boundary)
      : params_(params), boundary_(std::move(boundary)) {}

  [[nodiscard]] const TreeParams& params() const noexcept { return params_; }
  [[nodiscard]] const BoundarySpec& boundary() const noexcept { return boundary_; }
  [[nodiscard]] int degree() const noexcept { return params_.d(); }
  [[nodiscard]] std::size_t size() const noexcept { return addrs_.size(); }

  VertexId intern(const VertexAddr& x) {
    auto [it, inserted] = index_.try_emplace(x, static_cast<VertexId>(addrs_.size()));
    if (inserted) {
      addrs_.push_back(x);
      kinds_.push_back(boundary_.site(x));
      parent_.push_back(kNoVertex);
      expanded_.push_back(0);
      nbrs_.resize(nbrs_.size() + static_cast<std::size_t>(params_.d()), kNoVertex);
    }
    return it->second;
  }

  [[nodiscard]] VertexId find(const VertexAddr& x) const {
    auto it = index_.find(x);
    return it == index_.end() ? kNoVertex : it->second;
  }

  [[nodiscard]] const VertexAddr& addr(VertexId id) const { return addrs_[id]; }
  [[nodiscard]] SiteKind kind(VertexId id) const { return kinds_[id]; }
  [[nodiscard]] bool is_free(VertexId id) const { return kinds_[id] == SiteKind::Free; }

  /// Parent first, then children in local-index order.
  std::span<const VertexId> neighbors(VertexId id) {
    const std::size_t d = static_cast<std::size_t>(params_.d());
    if (!expanded_[id]) {
      const VertexAddr x = addrs_[id];  // copy: interning may reallocate addrs_
      const VertexId p = intern(parent(x));
      nbrs_[id * d] = p;
      parent_[id] = p;
      auto ch = children(params_, x);
      for (std::size_t i = 0; i < ch.size(); ++i) {
        const VertexId c = intern(ch[i]);
        nbrs_[id * d + 1 + i] = c;
        parent_[c] = id;
      }
      expanded_[id] = 1;
    }
    return {nbrs_.data() + id * d, d};
  }

  /// Parent id if already known (the vertex or its parent was expanded).
  [[nodiscard]] VertexId known_parent(VertexId id) const { return parent_[id]; }

 private:
  TreeParams params_;
  BoundarySpec boundary_;
  std::vector<VertexAddr> addrs_;
  std::vector<SiteKind> kinds_;
  std::vector<VertexId> parent_;
  std::vector<std::uint8_t> expanded_;
  std::vector<VertexId> nbrs_;
  std::unordered_map<VertexAddr, VertexId, VertexAddrHash> index_;
};

/// Set of ids with O(1) insert, erase and uniform sampling by position.
class IndexedIdSet {
 public:
  static constexpr std::uint32_t kAbsent = std::numeric_limits<std::uint32_t>::max();

  [[nodiscard]] std::size_t size() const noexcept { return items_.size(); }
  [[nodiscard]] bool empty() const noexcept { return items_.empty(); }
  [[nodiscard]] bool contains(VertexId id) const noexcept {
    return id < pos_.size() && pos_[id] != kAbsent;
  }
  [[nodiscard]] VertexId at(std::size_t i) const noexcept { return items_[i]; }
  [[nodiscard]] std::span<const VertexId> items() const noexcept { return items_; }

  bool insert(VertexId id) {
    if (id >= pos_.size()) pos_.resize(static_cast<std::size_t>(id) + 1, kAbsent);
    if (pos_[id] != kAbsent) return false;
    pos_[id] = static_cast<std::uint32_t>(items_.size());
    items_.push_back(id);
    return true;
  }

  bool erase(VertexId id) {
    if (!contains(id)) return false;
    const std::uint32_t p = pos_[id];
    const VertexId last = items_.back();
    items_[p] = last;
    pos_[last] = p;
    items_.pop_back();
    pos_[id] = kAbsent;
    return true;
  }

  void clear() {
    for (auto id : items_) pos_[id] = kAbsent;
    items_.clear();
  }

 private:
  std::vector<VertexId> items_;
  std::vector<std::uint32_t> pos_;
};

}  // namespace wbtree
