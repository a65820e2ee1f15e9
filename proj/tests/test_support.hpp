#pragma once

// Shared helpers for the unit suites: random addresses and sets, and brute-force
// oracles that only use parent/children adjacency.

#include <deque>
#include <map>
#include <vector>

#include "wbtree/random.hpp"
#include "wbtree/tree.hpp"

namespace wbtree::testing {

inline VertexAddr random_address(RandomStream& rng, const TreeParams& params,
                                 std::uint32_t max_k = 5, std::size_t max_len = 6) {
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

/// Connected vertex set of the given size grown by randomized BFS from `root`.
inline std::vector<VertexAddr> random_connected_set(RandomStream& rng, const TreeParams& params,
                                                    const VertexAddr& root, std::size_t size) {
  std::vector<VertexAddr> members{root};
  VertexSet in{root};
  std::vector<VertexAddr> frontier = neighbors(params, root);
  while (members.size() < size && !frontier.empty()) {
    const auto i = rng.below(frontier.size());
    VertexAddr v = frontier[i];
    frontier[i] = frontier.back();
    frontier.pop_back();
    if (in.contains(v)) continue;
    in.insert(v);
    members.push_back(v);
    for (auto& n : neighbors(params, v)) {
      if (!in.contains(n)) frontier.push_back(std::move(n));
    }
  }
  return members;
}

/// Same as above but every vertex stays within Ball(origin, radius).
inline std::vector<VertexAddr> random_connected_set_in_ball(RandomStream& rng,
                                                            const TreeParams& params,
                                                            std::uint32_t radius,
                                                            std::size_t size) {
  auto ball = enumerate_region(params, Ball{VertexAddr::origin(), radius});
  const VertexAddr root = ball[rng.below(ball.size())];
  std::vector<VertexAddr> members{root};
  VertexSet in{root};
  std::vector<VertexAddr> frontier;
  auto push = [&](const VertexAddr& v) {
    for (auto& n : neighbors(params, v)) {
      if (!in.contains(n) && n.depth() <= radius) {
        frontier.push_back(std::move(n));
      }
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
  return members;
}

/// Breadth-first distances from `source` over the subgraph induced by `vertices`.
inline std::map<VertexAddr, std::uint64_t> bfs_distances(const TreeParams& params,
                                                         const std::vector<VertexAddr>& vertices,
                                                         const VertexAddr& source) {
  VertexSet allowed(vertices.begin(), vertices.end());
  std::map<VertexAddr, std::uint64_t> dist{{source, 0}};
  std::deque<VertexAddr> queue{source};
  while (!queue.empty()) {
    VertexAddr v = queue.front();
    queue.pop_front();
    for (auto& n : neighbors(params, v)) {
      if (!allowed.contains(n) || dist.contains(n)) continue;
      dist[n] = dist[v] + 1;
      queue.push_back(n);
    }
  }
  return dist;
}

}  // namespace wbtree::testing
