#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "test_support.hpp"
#include "wbtree/graphical.hpp"

namespace wbtree {
namespace {

using Manual = EdgeProcesses::ManualArrow;

const TreeParams kD3(3);
const VertexAddr kO = VertexAddr::origin();
const VertexAddr kA1 = VertexAddr::ray(1);

std::vector<VertexAddr> ball(std::uint32_t r) { return enumerate_region(kD3, Ball{kO, r}); }

Configuration random_subset(RandomStream& rng, std::span<const VertexAddr> w, double p) {
  Configuration c;
  for (const auto& x : w) {
    if (rng.uniform() < p) c.insert(x);
  }
  return c;
}

TEST(SampleWindowTest, NoBulletsAtLambdaOne) {
  const auto ep = sample_window(Window(kD3, ball(2), 3.0, 1.0), StreamKey(1));
  for (const auto& e : ep.edges()) EXPECT_TRUE(e.bullet_marked.empty());
  EXPECT_FALSE(ep.arrows().empty());
}

TEST(SampleWindowTest, CircCountsArePoisson) {
  const double T = 2.0;
  const Window w(kD3, ball(4), T, 2.0);
  double sum = 0;
  std::size_t n = 0;
  for (std::uint64_t s = 0; n < 10000; ++s) {
    const auto ep = sample_window(w, StreamKey(s));
    for (const auto& e : ep.edges()) {
      sum += static_cast<double>(e.circ_times.size());
      for (std::size_t i = 0; i < e.circ_times.size(); ++i) {
        ASSERT_GT(e.circ_times[i], i ? e.circ_times[i - 1] : 0.0);
        ASSERT_LE(e.circ_times[i], T);
      }
      ++n;
    }
  }
  EXPECT_NEAR(sum / static_cast<double>(n), T, 3 * std::sqrt(T / static_cast<double>(n)));
}

TEST(SampleWindowTest, EdgeSetCoversNeighborsOfW) {
  const auto w = ball(2);
  const auto ep = sample_window(Window(kD3, w, 1.0, 2.0), StreamKey(2));
  EXPECT_EQ(ep.edges().size(), w.size() * 3);
  EXPECT_EQ(ep.sites().size(), ball(3).size());
}

TEST(SampleWindowTest, LongerHorizonAndLargerWindowExtend) {
  const auto a = sample_window(Window(kD3, ball(1), 1.0, 3.0), StreamKey(3));
  const auto b = sample_window(Window(kD3, ball(2), 2.0, 3.0), StreamKey(3));
  for (const auto& e : a.edges()) {
    const auto u = a.sites()[e.u], v = a.sites()[e.v];
    const auto it = std::find_if(b.edges().begin(), b.edges().end(), [&](const EdgeArrows& f) {
      return b.sites()[f.u] == u && b.sites()[f.v] == v;
    });
    ASSERT_NE(it, b.edges().end());
    ASSERT_LE(e.circ_times.size(), it->circ_times.size());
    for (std::size_t i = 0; i < e.circ_times.size(); ++i) {
      EXPECT_EQ(e.circ_times[i], it->circ_times[i]);
    }
    ASSERT_LE(e.bullet_marked.size(), it->bullet_marked.size());
    for (std::size_t i = 0; i < e.bullet_marked.size(); ++i) {
      EXPECT_EQ(e.bullet_marked[i], it->bullet_marked[i]);
    }
    EXPECT_TRUE(it->circ_times.size() == e.circ_times.size() || it->circ_times[e.circ_times.size()] > 1.0);
  }
}

TEST(SampleWindowTest, ArrowsSortedAndDumpIsStable) {
  const Window w(kD3, ball(1), 1.0, 2.0);
  const auto ep = sample_window(w, StreamKey(4));
  for (std::size_t i = 1; i < ep.arrows().size(); ++i) {
    EXPECT_LE(ep.arrows()[i - 1].time, ep.arrows()[i].time);
  }
  std::ostringstream a, b;
  write_window_csv(a, ep);
  write_window_csv(b, sample_window(w, StreamKey(4)));
  EXPECT_EQ(a.str(), b.str());
  EXPECT_EQ(a.str().substr(0, 19), "u,v,kind,time,mark\n");
}

TEST(ForwardReachTest, HandSweeps) {
  const Window w(kD3, {kO, kA1}, 1.0, 2.0);
  const auto none = EdgeProcesses::from_arrows(w, {});
  EXPECT_EQ(forward_reach(none, Configuration{kO}, 2.0, 1.0), Configuration{kO});

  const std::vector<Manual> circ{{kO, kA1, ArrowKind::Circ, 0.5, 0.0}};
  const auto ep = EdgeProcesses::from_arrows(w, circ);
  EXPECT_EQ(forward_reach(ep, Configuration{kO}, 2.0, 1.0), (Configuration{kO, kA1}));
  EXPECT_EQ(forward_reach(ep, Configuration{kA1}, 2.0, 1.0), Configuration{});
  // Before the arrow nothing has happened.
  EXPECT_EQ(forward_reach(ep, Configuration{kA1}, 2.0, 0.4), Configuration{kA1});
}

TEST(ForwardReachTest, BulletThresholdAndOuterLayer) {
  const Window w(kD3, {kO, kA1}, 1.0, 3.0);
  // Mark 0.6 is effective only when (lambda - 1) / 2 > 0.6, i.e. lambda > 2.2.
  const std::vector<Manual> bullet{{kO, kA1, ArrowKind::Bullet, 0.5, 0.6}};
  const auto ep = EdgeProcesses::from_arrows(w, bullet);
  EXPECT_EQ(forward_reach(ep, Configuration{kO}, 2.0, 1.0), Configuration{kO});
  EXPECT_EQ(forward_reach(ep, Configuration{kO}, 3.0, 1.0), (Configuration{kO, kA1}));
  EXPECT_EQ(forward_reach(ep, Configuration{kA1}, 3.0, 1.0), Configuration{kA1});
  try {
    (void)forward_reach(ep, Configuration{kO}, 3.5, 1.0);
    FAIL() << "expected LambdaExceedsWindow";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::LambdaExceedsWindow);
  }
  // A circ arrow from the outer layer carries its - sign in.
  const std::vector<Manual> kill{{VertexAddr(0, {0}), kO, ArrowKind::Circ, 0.5, 0.0}};
  EXPECT_EQ(forward_reach(EdgeProcesses::from_arrows(w, kill), Configuration{kO}, 3.0, 1.0),
            Configuration{});
  EXPECT_THROW((void)forward_reach(ep, Configuration{VertexAddr(0, {0})}, 2.0, 1.0), Error);
}

TEST(BackwardReachTest, HandSweeps) {
  const Window w(kD3, {kO, kA1}, 1.0, 2.0);
  EXPECT_EQ(backward_reach(EdgeProcesses::from_arrows(w, {}), Configuration{kA1}, 2.0, 1.0),
            Configuration{kA1});
  const std::vector<Manual> circ{{kO, kA1, ArrowKind::Circ, 0.5, 0.0}};
  EXPECT_EQ(backward_reach(EdgeProcesses::from_arrows(w, circ), Configuration{kA1}, 2.0, 1.0),
            Configuration{kO});
  const std::vector<Manual> bullet{{kO, kA1, ArrowKind::Bullet, 0.5, 0.1}};
  EXPECT_EQ(backward_reach(EdgeProcesses::from_arrows(w, bullet), Configuration{kA1}, 2.0, 1.0),
            (Configuration{kO, kA1}));
  const std::vector<Manual> out{{VertexAddr(0, {0}), kO, ArrowKind::Circ, 0.5, 0.0}};
  bool exited = false;
  const auto ep = EdgeProcesses::from_arrows(w, out);
  const auto m = backward_reach_mask(ep, ep.mask_of(Configuration{kO}), 2.0, 1.0, &exited);
  EXPECT_EQ(ep.config_of(m), Configuration{});
  EXPECT_TRUE(exited);
}

TEST(ForwardReachBcTest, Examples) {
  // x = origin free, all three neighbors frozen +: the first effective arrow
  // into x infects it, so P(x in xi_t) = 1 - exp(-d lambda t).
  const double lambda = 2.0, t = 0.2;
  const Window w(kD3, {kO}, t, lambda);
  const auto plus = BoundarySpec::plus(Ball{kO, 0});
  const auto minus = BoundarySpec::minus(Ball{kO, 0});
  const int n = 20000;
  int hit = 0;
  for (int i = 0; i < n; ++i) {
    const auto ep = sample_window(w, StreamKey(5).derive("replica", static_cast<std::uint64_t>(i)));
    const auto up = forward_reach_bc(ep, Configuration{}, plus, lambda, t);
    const auto down = forward_reach_bc(ep, Configuration{}, minus, lambda, t);
    ASSERT_TRUE(down.subset_of(up));
    hit += up.contains(kO) ? 1 : 0;
  }
  const double want = 1 - std::exp(-3 * lambda * t);
  EXPECT_NEAR(static_cast<double>(hit) / n, want, 4 * std::sqrt(want * (1 - want) / n));

  const auto none = EdgeProcesses::from_arrows(w, {});
  EXPECT_EQ(forward_reach_bc(none, Configuration{kO}, minus, lambda, t), Configuration{kO});
  EXPECT_THROW((void)forward_reach_bc(none, Configuration{kA1}, minus, lambda, t), Error);
}

TEST(ForwardReachBcTest, MinusOutsideWindowIsPlainForwardReach) {
  RandomStream rng(StreamKey(6));
  for (int i = 0; i < 500; ++i) {
    const auto w = testing::random_connected_set_in_ball(rng, kD3, 3, 1 + rng.below(12));
    const Window win(kD3, w, 1.5, 3.0);
    const auto ep = sample_window(win, StreamKey(600 + i));
    const auto A = random_subset(rng, win.vertices, 0.5);
    const double lambda = 1 + 2 * rng.uniform();
    const auto zeta = BoundarySpec::minus(Region::explicit_set(win.vertices));
    EXPECT_EQ(forward_reach(ep, A, lambda, 1.5), forward_reach_bc(ep, A, zeta, lambda, 1.5));
  }
}

TEST(ForwardReachBcTest, PlusDominatesMinus) {
  RandomStream rng(StreamKey(7));
  for (int i = 0; i < 500; ++i) {
    const auto w = testing::random_connected_set_in_ball(rng, kD3, 3, 1 + rng.below(12));
    const Window win(kD3, w, 1.0, 2.5);
    const auto ep = sample_window(win, StreamKey(700 + i));
    const auto A = random_subset(rng, win.vertices, 0.3);
    const auto g = Region::explicit_set(win.vertices);
    EXPECT_TRUE(forward_reach_bc(ep, A, BoundarySpec::minus(g), 2.0, 1.0)
                    .subset_of(forward_reach_bc(ep, A, BoundarySpec::plus(g), 2.0, 1.0)));
  }
}

TEST(DualityTest, TrivialCases) {
  const Window w(kD3, ball(1), 1.0, 2.0);
  const auto ep = sample_window(w, StreamKey(8));
  EXPECT_TRUE(check_duality(ep, Configuration{}, Configuration{kO}, 2.0, 1.0));
  const auto none = EdgeProcesses::from_arrows(w, {});
  EXPECT_TRUE(forward_reach(none, Configuration{kO}, 2.0, 1.0).intersects(Configuration{kO}));
  EXPECT_TRUE(check_duality(none, Configuration{kO}, Configuration{kO}, 2.0, 1.0));
}

TEST(DualityTest, RandomWindows) {
  RandomStream rng(StreamKey(9));
  int nontrivial = 0;
  for (int i = 0; i < 3000; ++i) {
    const auto w = testing::random_connected_set_in_ball(rng, kD3, 4, 1 + rng.below(20));
    const double T = 0.1 + 1.9 * rng.uniform();
    const double lmax = 1 + 4 * rng.uniform();
    const auto ep = sample_window(Window(kD3, w, T, lmax), StreamKey(900 + i));
    const auto A = random_subset(rng, w, 0.3), B = random_subset(rng, w, 0.3);
    const double lambda = 1 + (lmax - 1) * rng.uniform();
    const double t = T * rng.uniform();
    ASSERT_TRUE(check_duality(ep, A, B, lambda, t)) << "case " << i;
    nontrivial += forward_reach(ep, A, lambda, t).intersects(B) ? 1 : 0;
  }
  EXPECT_GT(nontrivial, 100);
}

TEST(MonotoneTest, TrivialCases) {
  const auto ep = sample_window(Window(kD3, ball(2), 1.0, 3.0), StreamKey(10));
  const Configuration A{kO, kA1};
  EXPECT_TRUE(check_monotone(ep, A, A, 2.0, 2.0, 1.0));
  EXPECT_EQ(forward_reach(ep, A, 2.0, 1.0), forward_reach(ep, A, 2.0, 1.0));
  EXPECT_TRUE(check_monotone(ep, Configuration{}, A, 2.0, 2.0, 1.0));
}

TEST(MonotoneTest, RandomCoupledInstances) {
  RandomStream rng(StreamKey(11));
  for (int i = 0; i < 3000; ++i) {
    const auto w = testing::random_connected_set_in_ball(rng, kD3, 4, 1 + rng.below(20));
    const double T = 0.1 + 1.9 * rng.uniform();
    const double lmax = 1 + 4 * rng.uniform();
    const auto ep = sample_window(Window(kD3, w, T, lmax), StreamKey(1100 + i));
    const auto A2 = random_subset(rng, w, 0.5);
    Configuration A;
    for (const auto& x : A2.set()) {
      if (rng.uniform() < 0.5) A.insert(x);
    }
    double l1 = 1 + (lmax - 1) * rng.uniform(), l2 = 1 + (lmax - 1) * rng.uniform();
    if (l1 > l2) std::swap(l1, l2);
    ASSERT_TRUE(check_monotone(ep, A, A2, l1, l2, T * rng.uniform())) << "case " << i;
  }
}

TEST(MonotoneTest, EffectiveBulletsNestInLambda) {
  const auto ep = sample_window(Window(kD3, ball(2), 2.0, 5.0), StreamKey(12));
  const double t1 = ep.bullet_threshold(2.0), t2 = ep.bullet_threshold(3.5);
  int n1 = 0, n2 = 0;
  for (const auto& a : ep.arrows()) {
    if (a.kind != ArrowKind::Bullet) continue;
    if (ep.effective(a, t1)) {
      ++n1;
      EXPECT_TRUE(ep.effective(a, t2));
    }
    n2 += ep.effective(a, t2) ? 1 : 0;
  }
  EXPECT_LE(n1, n2);
  EXPECT_GT(n2, 0);
  EXPECT_EQ(ep.bullet_threshold(5.0), 1.0);
  EXPECT_EQ(ep.bullet_threshold(1.0), 0.0);
}

}  // namespace
}  // namespace wbtree
