#include <gtest/gtest.h>

#include <cmath>

#include "test_support.hpp"
#include "wbtree/configs.hpp"

namespace wbtree {
namespace {

const TreeParams kD3(3);
const VertexAddr kO = VertexAddr::origin();

Configuration random_config(RandomStream& rng, std::size_t n) {
  Configuration c;
  while (c.size() < n) c.insert(testing::random_address(rng, kD3, 6, 8));
  return c;
}

TEST(FlipTest, Examples) {
  EXPECT_EQ(flip(Configuration{}, kO), Configuration{kO});
  EXPECT_EQ(flip(Configuration{kO}, kO), Configuration{});
}

TEST(FlipTest, Involution) {
  RandomStream rng(StreamKey(1));
  for (int i = 0; i < 500; ++i) {
    const auto c = random_config(rng, rng.below(20));
    const auto x = testing::random_address(rng, kD3);
    const auto once = flip(c, x);
    EXPECT_NE(once.contains(x), c.contains(x));
    EXPECT_EQ(flip(once, x), c);
  }
}

TEST(ThinTest, Extremes) {
  RandomStream rng(StreamKey(2));
  const auto c = random_config(rng, 50);
  EXPECT_EQ(thin(c, 1.0, StreamKey(9)), c);
  EXPECT_TRUE(thin(c, 0.0, StreamKey(9)).empty());
  EXPECT_THROW((void)thin(c, 1.5, StreamKey(9)), Error);
}

TEST(ThinTest, BinomialMean) {
  RandomStream rng(StreamKey(3));
  const auto c = random_config(rng, 1000);
  const double p = 0.25;
  const int n = 400;
  double sum = 0;
  for (int i = 0; i < n; ++i) {
    const auto t = thin(c, p, StreamKey(1000 + i));
    ASSERT_TRUE(t.subset_of(c));
    sum += static_cast<double>(t.size());
  }
  EXPECT_NEAR(sum / n, 250.0, 3 * std::sqrt(1000 * p * (1 - p)) / std::sqrt(n));
}

TEST(ThinTest, MonotoneInPUnderSharedMarks) {
  RandomStream rng(StreamKey(4));
  for (int i = 0; i < 200; ++i) {
    const auto c = random_config(rng, 30);
    const double p = rng.uniform(), q = rng.uniform();
    const StreamKey key(77 + i);
    const auto lo = thin(c, std::min(p, q), key), hi = thin(c, std::max(p, q), key);
    EXPECT_TRUE(lo.subset_of(hi));
  }
}

TEST(BoundarySpecTest, SiteKinds) {
  const auto minus = BoundarySpec::minus(Ball{kO, 1});
  EXPECT_EQ(minus.site(kO), SiteKind::Free);
  EXPECT_EQ(minus.site(VertexAddr(0, {0, 0})), SiteKind::FrozenMinus);
  const auto plus = BoundarySpec::plus(Subtree{kO, std::nullopt});
  EXPECT_EQ(plus.site(VertexAddr(0, {1, 1, 0})), SiteKind::Free);
  EXPECT_EQ(plus.site(VertexAddr::ray(1)), SiteKind::FrozenPlus);
  EXPECT_EQ(BoundarySpec::none().site(VertexAddr::ray(9)), SiteKind::Free);
}

TEST(RealizeInitTest, Examples) {
  RandomStream rng(StreamKey(5));
  EXPECT_EQ(realize_init(OriginInit{}, kD3, rng), Configuration{kO});
  const std::vector vs{kO, VertexAddr::ray(1)};
  EXPECT_EQ(realize_init(ExplicitInit{vs}, kD3, rng), Configuration(std::span(vs)));
  EXPECT_TRUE(realize_init(BernoulliBallInit{0.0, 3}, kD3, rng).empty());
  EXPECT_EQ(realize_init(BernoulliBallInit{1.0, 2}, kD3, rng).size(), 10u);
  EXPECT_THROW((void)realize_init(BernoulliBallInit{-0.1, 2}, kD3, rng), Error);
}

TEST(RealizeInitTest, BernoulliBallMean) {
  // 0.5 x |Ball(0, 2)| = 0.5 x 10; per-draw variance 10 x 0.25.
  const InitSampler sampler(kD3, BernoulliBallInit{0.5, 2});
  RandomStream rng(StreamKey(6));
  const int n = 20000;
  double sum = 0;
  for (int i = 0; i < n; ++i) {
    const auto c = sampler.draw(rng);
    for (const auto& x : c.set()) ASSERT_LE(x.depth(), 2u);
    sum += static_cast<double>(c.size());
  }
  EXPECT_NEAR(sum / n, 5.0, 3 * std::sqrt(2.5 / n));
}

}  // namespace
}  // namespace wbtree
