#include <gtest/gtest.h>

#include <algorithm>

#include "test_support.hpp"
#include "wbtree/tree.hpp"

namespace wbtree {
namespace {

using testing::bfs_distances;
using testing::random_address;
using testing::random_connected_set;

const TreeParams kD3(3);

VertexAddr A(std::uint32_t k, VertexAddr::Word w = {}) { return VertexAddr(k, std::move(w)); }

TEST(TreeParamsTest, DegreeLimits) {
  EXPECT_THROW(TreeParams(2), Error);
  try {
    TreeParams p(2);
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DegreeTooSmall);
  }
  EXPECT_NO_THROW(TreeParams(64));
  EXPECT_THROW(TreeParams(65), Error);
}

TEST(VertexAddrTest, RejectsNonCanonicalWord) {
  EXPECT_THROW(A(2, {0, 1}), Error);
  EXPECT_NO_THROW(A(0, {0, 1}));
  EXPECT_NO_THROW(A(2, {1, 0}));
}

TEST(TreeTest, ParentExamples) {
  EXPECT_EQ(parent(VertexAddr::origin()), A(1));
  EXPECT_EQ(parent(A(0, {0, 1})), A(0, {0}));
  EXPECT_EQ(parent(A(2, {1})), A(2));
}

TEST(TreeTest, ChildrenExamples) {
  EXPECT_EQ(children(kD3, VertexAddr::origin()), (std::vector{A(0, {0}), A(0, {1})}));
  EXPECT_EQ(children(kD3, A(1)), (std::vector{VertexAddr::origin(), A(1, {1})}));
  EXPECT_EQ(children(kD3, A(0, {1})), (std::vector{A(0, {1, 0}), A(0, {1, 1})}));
}

TEST(TreeTest, DistanceExamples) {
  const auto x = A(2, {1});
  EXPECT_EQ(distance(x, x), 0u);
  EXPECT_EQ(distance(VertexAddr::origin(), A(0, {0})), 1u);

  // BFS over the tree truncated to rho(0, .) <= 6.
  auto ball = enumerate_region(kD3, Ball{VertexAddr::origin(), 6});
  auto dist = bfs_distances(kD3, ball, x);
  ASSERT_TRUE(dist.contains(A(0, {0, 1})));
  EXPECT_EQ(dist[A(0, {0, 1})], 5u);
  EXPECT_EQ(distance(x, A(0, {0, 1})), 5u);
}

TEST(TreeTest, HeightExamples) {
  EXPECT_EQ(height(VertexAddr::origin()), 0);
  EXPECT_EQ(height(A(2, {1})), -1);
  EXPECT_EQ(height(A(0, {0, 1, 0})), 3);
}

TEST(TreeTest, HeightMatchesCommonAncestorDefinition) {
  RandomStream rng(StreamKey(11));
  const auto o = VertexAddr::origin();
  for (int i = 0; i < 2000; ++i) {
    const auto x = random_address(rng, kD3);
    // First common ancestor: climb from x until the origin is in its subtree.
    VertexAddr w = x;
    while (!in_subtree(o, w)) w = parent(w);
    const auto expected =
        static_cast<std::int64_t>(distance(w, x)) - static_cast<std::int64_t>(distance(w, o));
    EXPECT_EQ(height(x), expected);
    EXPECT_EQ(height(parent(x)), height(x) - 1);
  }
}

TEST(RegionTest, EnumerateBalls) {
  EXPECT_EQ(enumerate_region(kD3, Ball{VertexAddr::origin(), 1}).size(), 4u);
  auto ball2 = enumerate_region(kD3, Ball{VertexAddr::origin(), 2});
  EXPECT_EQ(ball2.size(), 10u);
  EXPECT_EQ(bfs_distances(kD3, ball2, VertexAddr::origin()).size(), 10u);
  const auto x = A(3, {1, 1});
  EXPECT_EQ(enumerate_region(kD3, Ball{x, 0}), std::vector{x});
}

TEST(RegionTest, EnumerationIsSortedAndUnique) {
  const TreeParams d4(4);
  auto vs = enumerate_region(d4, Ball{A(1, {2}), 3});
  EXPECT_TRUE(std::is_sorted(vs.begin(), vs.end()));
  EXPECT_EQ(std::adjacent_find(vs.begin(), vs.end()), vs.end());
  EXPECT_EQ(vs.size(), 1u + 4u + 12u + 36u);
}

TEST(RegionTest, InfiniteRegionsAreNotEnumerable) {
  auto expect_infinite = [](const Region& r) {
    try {
      (void)enumerate_region(kD3, r);
      FAIL() << "expected InfiniteRegion";
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::InfiniteRegion);
    }
  };
  expect_infinite(WholeTree{});
  expect_infinite(Subtree{VertexAddr::origin(), std::nullopt});
  expect_infinite(SubtreeMinusBelow{VertexAddr::origin(), A(0, {1}), std::nullopt});
  EXPECT_EQ(enumerate_region(kD3, Subtree{VertexAddr::origin(), 2}).size(), 7u);
}

TEST(RegionTest, SubtreeMinusBelowMembership) {
  const auto x = VertexAddr::origin();
  const auto y = A(0, {1});
  const Region txy(SubtreeMinusBelow{x, y, std::nullopt});
  EXPECT_TRUE(txy.contains(x));
  EXPECT_TRUE(txy.contains(y));
  EXPECT_FALSE(txy.contains(A(0, {1, 0})));
  EXPECT_TRUE(txy.contains(A(0, {0, 1, 1})));
  EXPECT_FALSE(txy.contains(A(1)));
  EXPECT_THROW(Region(SubtreeMinusBelow{y, x, std::nullopt}), Error);

  const Region capped(SubtreeMinusBelow{x, y, 2});
  auto vs = enumerate_region(kD3, capped);
  // T_0 to depth 2 has 7 vertices; the two below y are removed.
  EXPECT_EQ(vs.size(), 5u);
  for (const auto& v : vs) EXPECT_TRUE(txy.contains(v));
}

TEST(RegionTest, RegionBoundaryOfInfiniteRegions) {
  auto sub = region_boundary(kD3, Subtree{VertexAddr::origin(), std::nullopt});
  ASSERT_EQ(sub.size(), 1u);
  EXPECT_EQ(sub[0], (DirectedEdge{VertexAddr::origin(), A(1)}));
  auto txy = region_boundary(kD3, SubtreeMinusBelow{VertexAddr::origin(), A(0, {1}), std::nullopt});
  EXPECT_EQ(txy.size(), 3u);
  EXPECT_TRUE(region_boundary(kD3, WholeTree{}).empty());
}

TEST(BoundaryEdgesTest, Examples) {
  const std::vector single{VertexAddr::origin()};
  EXPECT_EQ(boundary_edges(kD3, single).size(), 3u);
  const std::vector pair{VertexAddr::origin(), A(0, {0})};
  EXPECT_EQ(boundary_edges(kD3, pair).size(), 4u);
  EXPECT_TRUE(boundary_edges(kD3, std::vector<VertexAddr>{}).empty());
}

TEST(TreePropertyTest, ParentChildCanonicality) {
  for (int d : {3, 4, 7}) {
    const TreeParams params(d);
    RandomStream rng(StreamKey(100 + d));
    for (int i = 0; i < 100000 / 3; ++i) {
      const auto x = random_address(rng, params);
      const auto ch = children(params, x);
      ASSERT_EQ(ch.size(), static_cast<std::size_t>(d - 1));
      for (const auto& c : ch) ASSERT_EQ(parent(c), x);
      const auto siblings = children(params, parent(x));
      ASSERT_NE(std::find(siblings.begin(), siblings.end(), x), siblings.end());
    }
  }
}

TEST(TreePropertyTest, MetricAxioms) {
  RandomStream rng(StreamKey(5));
  for (int i = 0; i < 20000; ++i) {
    const auto x = random_address(rng, kD3), y = random_address(rng, kD3),
               z = random_address(rng, kD3);
    ASSERT_EQ(distance(x, y), distance(y, x));
    ASSERT_LE(distance(x, z), distance(x, y) + distance(y, z));
    ASSERT_EQ(distance(x, parent(x)), 1u);
    ASSERT_EQ(distance(VertexAddr::origin(), x), x.depth());
  }
}

TEST(TreePropertyTest, DistanceAgreesWithBfsInBall) {
  for (int d : {3, 4, 5}) {
    const TreeParams params(d);
    auto ball = enumerate_region(params, Ball{VertexAddr::origin(), 5});
    for (const auto& x : ball) {
      auto dist = bfs_distances(params, ball, x);
      ASSERT_EQ(dist.size(), ball.size());
      for (const auto& [y, dxy] : dist) ASSERT_EQ(distance(x, y), dxy) << d;
    }
  }
}

TEST(TreePropertyTest, Isoperimetry) {
  for (int d : {3, 4, 6}) {
    const TreeParams params(d);
    RandomStream rng(StreamKey(200 + d));
    for (int i = 0; i < 10000 / 3; ++i) {
      const auto root = random_address(rng, params);
      const auto U = random_connected_set(rng, params, root, 1 + rng.below(40));
      const auto edges = boundary_edges(params, U);
      ASSERT_GE(edges.size(), static_cast<std::size_t>(d - 2) * U.size());
      for (const auto& [u, v] : edges) ASSERT_EQ(distance(u, v), 1u);
    }
  }
}

TEST(TreePropertyTest, SphereSizes) {
  for (int d : {3, 4, 5}) {
    const TreeParams params(d);
    RandomStream rng(StreamKey(300 + d));
    const auto x = random_address(rng, params);
    std::size_t expected = static_cast<std::size_t>(d);
    for (std::uint32_t r = 1; r <= 4; ++r) {
      EXPECT_EQ(sphere(params, x, r).size(), expected);
      expected *= static_cast<std::size_t>(d - 1);
    }
  }
}

TEST(TreePropertyTest, InSubtreeMatchesAncestorWalk) {
  RandomStream rng(StreamKey(17));
  for (int i = 0; i < 5000; ++i) {
    const auto x = random_address(rng, kD3, 3, 4);
    auto root = random_address(rng, kD3, 3, 3);
    if (i % 3 == 0) {
      root = x;
      for (auto steps = rng.below(4); steps > 0; --steps) root = parent(root);
    }
    bool ancestor = false;
    VertexAddr w = x;
    for (int s = 0; s < 16 && !ancestor; ++s, w = parent(w)) ancestor = (w == root);
    ASSERT_EQ(in_subtree(x, root), ancestor) << format_address(x) << " " << format_address(root);
  }
}

TEST(AddressGrammarTest, ParseAndFormat) {
  EXPECT_EQ(parse_address("o", kD3), VertexAddr::origin());
  EXPECT_EQ(parse_address("u2/1.0", kD3), A(2, {1, 0}));
  EXPECT_EQ(parse_address("u0/0.1", kD3), A(0, {0, 1}));
  EXPECT_EQ(parse_address("u0", kD3), VertexAddr::origin());
  EXPECT_EQ(format_address(A(2, {1, 0})), "u2/1.0");
  EXPECT_EQ(format_address(VertexAddr::origin()), "o");
  EXPECT_EQ(format_address(A(3)), "u3");

  const TreeParams d20(20);
  EXPECT_EQ(parse_address("u1/18.0.7", d20), A(1, {18, 0, 7}));
}

TEST(AddressGrammarTest, RejectsMalformed) {
  for (const char* bad : {"u2/0.1", "", "x", "u", "u-1", "u1/", "u1/2", "u01", "u1/1..0",
                          "u1/1.", "o/1", "u1/1.a"}) {
    try {
      (void)parse_address(bad, kD3);
      ADD_FAILURE() << "accepted " << bad;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::InvalidAddress) << bad;
    }
  }
}

TEST(AddressGrammarTest, RoundTrip) {
  const TreeParams d12(12);
  RandomStream rng(StreamKey(23));
  for (int i = 0; i < 5000; ++i) {
    const auto x = random_address(rng, d12, 40, 8);
    ASSERT_EQ(parse_address(format_address(x), d12), x);
  }
}

}  // namespace
}  // namespace wbtree
