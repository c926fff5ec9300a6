#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include <boost/math/distributions/normal.hpp>

#include "logfield/extremes.hpp"

using namespace logfield;

namespace {

CovMatrix single_point(double var) {
  return CovMatrix{PointSet(1, {0.5}), Eigen::MatrixXd::Constant(1, 1, var), "one"};
}

}  // namespace

TEST(MaxStatistic, Examples) {
  std::vector<double> z(5, 0.0);
  auto a = max_statistic(z);
  EXPECT_EQ(a.value, 0.0);
  EXPECT_EQ(a.index, 0u);
  std::vector<double> one{-2.5};
  EXPECT_EQ(max_statistic(one).value, -2.5);
  std::vector<double> tie{1.0, 3.0, 3.0};
  auto t = max_statistic(tie);
  EXPECT_EQ(t.value, 3.0);
  EXPECT_EQ(t.index, 1u);
  EXPECT_THROW(max_statistic(std::vector<double>{}), DomainError);
}

TEST(MaxStatistic, PermutationInvariance) {
  Mbrw m{2, 1.0 / 8};
  CholeskySampler s(kernel_matrix(m, m.lattice().points()));
  std::vector<std::size_t> perm(s.size());
  std::iota(perm.begin(), perm.end(), 0);
  Stream st(SeedSpec{9, 0, "perm"});
  for (std::size_t i = perm.size() - 1; i > 0; --i) std::swap(perm[i], perm[st.below(i + 1)]);
  for (std::uint64_t r = 0; r < 50; ++r) {
    auto x = s.sample(SeedSpec{9, r, "f"}).values;
    // a few forced ties
    if (r % 5 == 0) x[perm[3]] = x[perm[7]] = *std::max_element(x.begin(), x.end()) + 1.0;
    std::vector<double> y(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[perm[i]];
    auto a = max_statistic(x), b = max_statistic(y);
    EXPECT_EQ(a.value, b.value);
    EXPECT_EQ(x[perm[b.index]], a.value);
    // lowest permuted index among the tied maxima
    std::size_t want = y.size();
    for (std::size_t i = 0; i < y.size() && want == y.size(); ++i)
      if (y[i] == a.value) want = i;
    EXPECT_EQ(b.index, want);
    if (r % 5 != 0) {
      EXPECT_EQ(perm[b.index], a.index);
    }
  }
}

TEST(Wilson, KnownValues) {
  auto w = wilson(5, 10);
  EXPECT_NEAR(w.lo, 0.2366, 1e-4);
  EXPECT_NEAR(w.hi, 0.7634, 1e-4);
  auto z = wilson(0, 100);
  EXPECT_EQ(z.lo, 0.0);
  EXPECT_GT(z.hi, 0.0);
  auto f = wilson(100, 100);
  EXPECT_EQ(f.hi, 1.0);
  for (std::size_t k = 0; k <= 40; ++k) {
    auto c = wilson(k, 40);
    double p = k / 40.0;
    EXPECT_LE(c.lo, p);
    EXPECT_GE(c.hi, p);
  }
}

TEST(Isotonic, PoolsViolators) {
  EXPECT_EQ(isotonic_nonincreasing({1, 3, 2}), (std::vector<double>{2, 2, 2}));
  EXPECT_EQ(isotonic_nonincreasing({3, 1, 2}), (std::vector<double>{3, 1.5, 1.5}));
  std::vector<double> mono{5, 4, 4, 1};
  EXPECT_EQ(isotonic_nonincreasing(mono), mono);
  Stream st(SeedSpec{1, 0, "iso"});
  for (int t = 0; t < 200; ++t) {
    std::vector<double> y(1 + st.below(20));
    for (double& v : y) v = st.uniform();
    auto z = isotonic_nonincreasing(y);
    ASSERT_EQ(z.size(), y.size());
    for (std::size_t i = 1; i < z.size(); ++i) EXPECT_LE(z[i], z[i - 1] + 1e-15);
    EXPECT_NEAR(std::accumulate(z.begin(), z.end(), 0.0), std::accumulate(y.begin(), y.end(), 0.0), 1e-12);
  }
}

TEST(Tail, RecoversExponentialRate) {
  // max - m_ref ~ Exp(2): P(delta >= lambda) = exp(-2 lambda)
  const std::size_t M = 20000;
  std::vector<double> mx(M);
  Stream st(SeedSpec{3, 0, "exp"});
  for (double& x : mx) x = 1.0 - 0.5 * std::log(st.uniform_pos());
  std::vector<double> grid;
  for (int k = 0; k <= 30; ++k) grid.push_back(0.1 * k);
  auto te = tail_from_maxima(mx, 1.0, grid);
  ASSERT_TRUE(te.right_rate.ok);
  EXPECT_LE(te.right_rate.ci_lo, 2.0);
  EXPECT_GE(te.right_rate.ci_hi, 2.0);
  EXPECT_NEAR(te.right_rate.rate, 2.0, 0.2);
  EXPECT_GE(te.right_rate.lambda_lo, 0.8);  // P <= 0.2 starts near lambda = 0.8
  // nothing below m_ref
  EXPECT_EQ(te.left.count[1], 0u);
  EXPECT_FALSE(te.left_rate.ok);
}

TEST(Tail, CurvesAreProbabilitiesWithinIntervals) {
  Mbrw m{1, 1.0 / 16};
  std::vector<double> grid{0, 0.25, 0.5, 1, 1.5, 2};
  auto te = tail_estimate(m, {}, 1000, grid, SeedSpec{4, 0, "t"});
  EXPECT_EQ(te.recentering, "m_eps");
  EXPECT_EQ(te.replicas, 1000u);
  for (const TailCurve* c : {&te.right, &te.left})
    for (std::size_t j = 0; j < grid.size(); ++j) {
      EXPECT_GE(c->raw[j], 0.0);
      EXPECT_LE(c->raw[j], 1.0);
      EXPECT_LE(c->lo[j], c->raw[j]);
      EXPECT_GE(c->hi[j], c->raw[j]);
      if (j) {
        EXPECT_LE(c->raw[j], c->raw[j - 1]);
        EXPECT_LE(c->iso[j], c->iso[j - 1]);
      }
    }
}

TEST(Tail, LambdaZeroColumnsAreComplementary) {
  Mbrw m{1, 1.0 / 64};
  const std::size_t M = 10000;
  auto te = tail_estimate(m, {}, M, {0.0, 0.5}, SeedSpec{5, 0, "t"});
  EXPECT_NEAR(te.right.raw[0] + te.left.raw[0], 1.0, 2.0 / std::sqrt(double(M)));
}

TEST(Tail, SinglePointMatchesGaussianTail) {
  const double var = 2.0;
  CholeskySampler s(single_point(var));
  Recentering rec = recentering(Mbrw{1, 1.0 / 64});
  rec.value = 0.5;  // keep the tail inside what M = 100 resolves
  auto run = run_maxima(s, rec, 100, SeedSpec{6, 0, "g"});
  std::vector<double> grid{0, 0.25, 0.5, 0.75, 1.0, 1.5};
  auto te = tail_from_maxima(run.maxima, rec.value, grid);
  boost::math::normal_distribution<double> nd(0.0, std::sqrt(var));
  for (std::size_t j = 0; j < grid.size(); ++j) {
    double want = boost::math::cdf(boost::math::complement(nd, rec.value + grid[j]));
    EXPECT_GE(want, te.right.lo[j]) << grid[j];
    EXPECT_LE(want, te.right.hi[j]) << grid[j];
  }
}

TEST(Tail, MbrwBothRatesPositive) {
  Mbrw m{1, 1.0 / 64};
  auto te = tail_estimate(m, {}, 10000, {}, SeedSpec{7, 0, "t"});
  EXPECT_TRUE(te.right_rate.excludes_zero()) << te.right_rate.ci_lo;
  EXPECT_TRUE(te.left_rate.excludes_zero()) << te.left_rate.ci_lo;
  EXPECT_GE(te.right_rate.points, 3u);
  EXPECT_EQ(te.right.flagged, 0u);
}

TEST(Tail, Errors) {
  Mbrw m{1, 1.0 / 16};
  EXPECT_THROW(tail_estimate(m, {}, 99, {0.0}, SeedSpec{}), DomainError);
  std::vector<double> mx(200, 0.0);
  EXPECT_THROW(tail_from_maxima(mx, 0.0, {0.5, 0.2}), DomainError);
  EXPECT_THROW(tail_from_maxima(mx, 0.0, {-0.1, 0.2}), DomainError);
  // every replica equals m_ref: lambda = 5 is beyond 1/M resolution
  EXPECT_THROW(tail_from_maxima(mx, 0.0, {0.0, 5.0}), DomainError);
  TailOptions o;
  o.force = true;
  EXPECT_NO_THROW(tail_from_maxima(mx, 0.0, {0.0, 5.0}, o));
  EXPECT_THROW(tail_estimate(Brw{3, 1}, SamplerChoice{Method::hierarchical}, 100, {0.0}, SeedSpec{}), DomainError);
}

TEST(LowerBound, MatchesTailAtLambdaZero) {
  Mbrw m{1, 1.0 / 32};
  SeedSpec seed{8, 0, "lb"};
  auto lb = lower_bound_check(m, {}, 2000, seed);
  auto te = tail_estimate(m, {}, 2000, {0.0}, seed);
  EXPECT_EQ(lb.count, te.right.count[0]);
  EXPECT_EQ(lb.p, te.right.raw[0]);
  EXPECT_EQ(lb.ci.lo, te.right.lo[0]);
  EXPECT_EQ(lb.ci.hi, te.right.hi[0]);
}

TEST(LowerBound, MbrwD1Eps6) {
  auto lb = lower_bound_check(Mbrw{1, 1.0 / 64}, {}, 10000, SeedSpec{9, 0, "lb"});
  EXPECT_TRUE(lb.ok()) << lb.ci.lo;
  EXPECT_GT(lb.p, 0.01);
  EXPECT_LE(lb.p, 1.0);
  EXPECT_GT(lb.ci.lo, 0.0);
  EXPECT_THROW(lower_bound_check(Brw{4, 1}, {}, 100, SeedSpec{}), DomainError);
}

TEST(Gap, SinglePointIsMinusRecentering) {
  CholeskySampler s(single_point(1.0));
  Recentering rec = recentering(Mbrw{1, 1.0 / 64});
  auto run = run_maxima(s, rec, 4000, SeedSpec{10, 0, "g"});
  GapEntry g = gap_entry(run.maxima, rec);
  EXPECT_GT(g.se, 0.0);
  EXPECT_NEAR(g.gap, -rec.value, 3 * g.se);
  EXPECT_NEAR(g.se, 1.0 / std::sqrt(4000.0), 0.1 / std::sqrt(4000.0));
}

TEST(Gap, DoublingReplicasShrinksSE) {
  Mbrw m{1, 1.0 / 16};
  auto a = run_maxima(m, {}, 2000, SeedSpec{11, 0, "g"});
  auto b = run_maxima(m, {}, 4000, SeedSpec{11, 0, "g"});
  double ratio = gap_entry(b.maxima, b.rec).se / gap_entry(a.maxima, a.rec).se;
  EXPECT_NEAR(ratio, 1.0 / std::sqrt(2.0), 0.2 / std::sqrt(2.0));
}

TEST(Gap, SummarySortsAndBounds) {
  std::vector<GapEntry> g{{0.25, 0, 0.1, 0, -1.0}, {0.5, 0, 0.1, 0, -0.5}, {0.125, 0, 0.1, 0, -1.2}};
  auto s = summarize_gaps(g, 1.0);
  ASSERT_EQ(s.sweep.size(), 3u);
  EXPECT_EQ(s.sweep[0].eps, 0.5);
  EXPECT_EQ(s.sweep[2].eps, 0.125);
  EXPECT_DOUBLE_EQ(s.bounded_lhs, 1.2);
  EXPECT_DOUBLE_EQ(s.bounded_rhs, 0.5 + 0.3 + 1.0);
  EXPECT_TRUE(s.bounded);
  EXPECT_NEAR(s.band, 0.7, 1e-12);
  EXPECT_TRUE(s.flat);
  g.push_back({0.0625, 0, 0.1, 0, -3.0});
  auto t = summarize_gaps(g, 1.0);
  EXPECT_FALSE(t.bounded);
  EXPECT_FALSE(t.flat);
  EXPECT_THROW(summarize_gaps({}), DomainError);
}

TEST(Gap, BrwSweepStaysBounded) {
  std::vector<KernelSpec> sweep;
  for (int n = 4; n <= 8; ++n) sweep.push_back(Brw{n, 1});
  auto s = expectation_gap(sweep, SamplerChoice{Method::tree}, 4000, SeedSpec{12, 0, "gap"});
  ASSERT_EQ(s.sweep.size(), 5u);
  for (std::size_t i = 1; i < s.sweep.size(); ++i) EXPECT_GT(s.sweep[i - 1].eps, s.sweep[i].eps);
  for (const auto& e : s.sweep) EXPECT_GT(e.se, 0.0);
  EXPECT_TRUE(s.bounded) << s.bounded_lhs << " > " << s.bounded_rhs;
  const auto &first = s.sweep.front(), &last = s.sweep.back();
  EXPECT_LE(std::abs(last.gap) - std::abs(first.gap), 1.0 + 3 * std::hypot(first.se, last.se));
}

TEST(Barrier, ShortHorizonStrictlyInside) {
  auto b = barrier_probability(1.0, 8, 10000, SeedSpec{13, 0, "b"});
  EXPECT_GT(b.p, 0.0);
  EXPECT_LT(b.p, 1.0);
  EXPECT_LE(b.ci.lo, b.p);
  EXPECT_GE(b.ci.hi, b.p);
  EXPECT_DOUBLE_EQ(b.scaled, b.p);
}

TEST(Barrier, StableUnderStepRefinement) {
  auto a = barrier_probability(16.0, 8, 100000, SeedSpec{14, 0, "b"});
  auto b = barrier_probability(16.0, 16, 100000, SeedSpec{14, 0, "b"});
  EXPECT_LE(std::abs(a.p - b.p), 3 * std::hypot(a.se, b.se) + 0.1 * b.p) << a.p << " vs " << b.p;
  EXPECT_NEAR(b.scaled, 64.0 * b.p, 1e-12);
}

TEST(Barrier, Errors) {
  EXPECT_THROW(barrier_probability(0.0, 8, 10, SeedSpec{}), DomainError);
  EXPECT_THROW(barrier_probability(1.0, 0, 10, SeedSpec{}), DomainError);
  EXPECT_THROW(barrier_probability(1.0, 8, 0, SeedSpec{}), DomainError);
}

TEST(Determinism, MaximaIndependentOfThreads) {
  Mbrw m{2, 1.0 / 8};
  auto a = run_maxima(m, {}, 500, SeedSpec{15, 0, "d"}, 1);
  auto b = run_maxima(m, {}, 500, SeedSpec{15, 0, "d"}, 3);
  EXPECT_EQ(a.maxima, b.maxima);
  EXPECT_EQ(a.argmax, b.argmax);
  auto c = barrier_probability(8.0, 8, 3000, SeedSpec{15, 0, "b"}, 1);
  auto d = barrier_probability(8.0, 8, 3000, SeedSpec{15, 0, "b"}, 4);
  EXPECT_EQ(c.hits, d.hits);
}

TEST(Recentering, Rules) {
  auto r = recentering(Mbrw{2, 1.0 / 32});
  EXPECT_EQ(r.rule, "m_eps");
  EXPECT_EQ(r.value, m_eps(2, 1.0 / 32));
  auto b = recentering(Brw{5, 1});
  EXPECT_EQ(b.value, m_eps(1, 1.0 / 32));
  Mgff g;
  g.mollifier.eps = 1.0 / 64;
  auto q = recentering(g);
  EXPECT_EQ(q.rule, "sqrt(2/pi)*m_eps");
  EXPECT_EQ(q.eps, 1.0 / 32);
  EXPECT_NEAR(q.value, std::sqrt(2.0 / std::numbers::pi) * m_eps(2, 1.0 / 32), 1e-15);
  EXPECT_EQ(field_points(g).size(), 1024u);
}
