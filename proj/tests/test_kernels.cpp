#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <map>
#include <numbers>
#include <vector>

#include <boost/multiprecision/cpp_bin_float.hpp>

#include "logfield/kernels.hpp"
#include "logfield/matrix.hpp"
#include "oracles.hpp"

using namespace logfield;
using namespace logfield::testing;

TEST(MEps, ClosedFormValues) {
  EXPECT_NEAR(m_eps(2, std::exp(-10.0)), 20.0 - 0.75 * std::log(10.0), 1e-12);
  EXPECT_NEAR(m_eps(2, std::exp(-10.0)), 18.2730612, 1e-7);
  EXPECT_NEAR(m_eps(2, std::exp(-std::numbers::e)), 2 * std::numbers::e - 0.75, 1e-12);
}

TEST(MEps, HighPrecisionOracle) {
  using big = boost::multiprecision::cpp_bin_float_50;
  big L = 8 * boost::multiprecision::log(big(2));
  big ref = boost::multiprecision::sqrt(big(2)) * L - big(3) / (2 * boost::multiprecision::sqrt(big(2))) * boost::multiprecision::log(L);
  EXPECT_NEAR(m_eps(1, std::ldexp(1.0, -8)), static_cast<double>(ref), 1e-12);
}

TEST(MEps, DomainErrors) {
  EXPECT_THROW(m_eps(1, 0.0), DomainError);
  EXPECT_THROW(m_eps(1, -0.1), DomainError);
  EXPECT_THROW(m_eps(1, 1.0 / std::numbers::e), DomainError);
  EXPECT_THROW(m_eps(1, 0.5), DomainError);
  EXPECT_THROW(m_eps(0, 0.01), DomainError);
}

TEST(MEps, BelowLeadingTermAndIncreasing) {
  for (int d = 1; d <= 3; ++d) {
    double prev = -1e300;
    // eps from e^-2 down to e^-40
    for (double L = 2.01; L < 40; L += 0.05) {
      double v = m_eps(d, std::exp(-L));
      EXPECT_LT(v, std::sqrt(2.0 * d) * L);
      EXPECT_GT(v, prev) << "d=" << d << " L=" << L;
      prev = v;
    }
  }
}

TEST(Lattice, SizeAndMembership) {
  Lattice L(2, 3);
  PointSet p = L.points();
  ASSERT_EQ(p.size(), 64u);
  for (std::size_t i = 0; i < p.size(); ++i) {
    EXPECT_TRUE(L.contains(p[i]));
    auto c = L.floor_map(p[i]);
    EXPECT_EQ(c[0], p[i][0]);
    EXPECT_EQ(c[1], p[i][1]);
    EXPECT_EQ(L.box_index(p[i]), i);
  }
  double x[2] = {0.3, 0.99};
  auto c = L.floor_map(x);
  EXPECT_DOUBLE_EQ(c[0], 0.25);
  EXPECT_DOUBLE_EQ(c[1], 0.875);
  double out[2] = {1.0, 0.2};
  EXPECT_THROW(L.floor_map(out), DomainError);
  EXPECT_THROW(dyadic_exponent(0.3), DomainError);
  EXPECT_EQ(dyadic_exponent(1.0 / 32), 5);
}

TEST(MbrwCov, VarianceIsTime) {
  Mbrw m{2, 1.0 / 16};
  double v[2] = {0.25, 0.5};
  for (double t : {0.0, 0.3, 1.0, m.horizon()}) EXPECT_EQ(mbrw_cov(m, v, v, t, t), t);
  EXPECT_NEAR(mbrw_cov(m, v, v), std::log(16.0), 1e-12);
}

TEST(MbrwCov, HalfOffsetAgainstQuadrature) {
  Mbrw m{1, 1.0 / 4};
  double v[1] = {0.0}, u[1] = {0.5};
  double want = mbrw_oracle({0.5}, m.horizon(), m.horizon());
  EXPECT_NEAR(mbrw_cov(m, v, u), want, 1e-12);
  EXPECT_NEAR(mbrw_cov(m, v, u), 0.1931471805599453, 1e-12);
}

TEST(MbrwCov, ZeroTime) {
  Mbrw m{2, 1.0 / 8};
  double v[2] = {0.0, 0.125}, u[2] = {0.5, 0.75};
  EXPECT_EQ(mbrw_cov(m, v, u, 0.0, 1.0), 0.0);
  EXPECT_EQ(mbrw_cov(m, v, v, 0.0, 0.0), 0.0);
}

TEST(MbrwCov, DomainErrors) {
  Mbrw m{1, 1.0 / 8};
  double v[1] = {0.0}, off[1] = {0.1}, out[1] = {1.0};
  EXPECT_THROW(mbrw_cov(m, v, off), DomainError);
  EXPECT_THROW(mbrw_cov(m, v, out), DomainError);
  EXPECT_THROW(mbrw_cov(m, v, v, -0.1, 1.0), DomainError);
  EXPECT_THROW(mbrw_cov(m, v, v, 1.0, m.horizon() + 0.1), DomainError);
}

TEST(MbrwCov, SymmetryInPointsAndTimes) {
  Mbrw m{2, 1.0 / 8};
  PointSet P = m.lattice().points();
  for (std::size_t i = 0; i < P.size(); i += 5)
    for (std::size_t j = 0; j < P.size(); j += 3) {
      EXPECT_EQ(mbrw_cov(m, P[i], P[j]), mbrw_cov(m, P[j], P[i]));
      EXPECT_EQ(mbrw_cov(m, P[i], P[j], 0.7, 1.3), mbrw_cov(m, P[j], P[i], 1.3, 0.7));
    }
}

// exhaustive pairs for d = 1, 2; quadrature cached per offset vector
TEST(MbrwCov, ClosedFormMatchesQuadratureExhaustive) {
  for (int d = 1; d <= 2; ++d) {
    Mbrw m{d, 1.0 / 32};
    PointSet P = m.lattice().points();
    std::map<std::vector<double>, double> oracle;
    double worst = 0.0;
    for (std::size_t i = 0; i < P.size(); ++i)
      for (std::size_t j = 0; j <= i; ++j) {
        auto a = offsets(P[i], P[j]);
        auto it = oracle.find(a);
        if (it == oracle.end()) it = oracle.emplace(a, mbrw_oracle(a, m.horizon(), m.horizon())).first;
        worst = std::max(worst, std::abs(mbrw_cov(m, P[i], P[j]) - it->second));
      }
    EXPECT_LE(worst, 1e-9) << "d=" << d;
  }
}

// d = 3: covariance depends on the pair only through its offsets, so every
// offset vector of V_eps covers every pair class
TEST(MbrwCov, ClosedFormMatchesQuadratureAllOffsetsD3) {
  Mbrw m{3, 1.0 / 32};
  PointSet P = m.lattice().points();
  const double zero[3] = {0, 0, 0};
  std::map<std::vector<double>, double> oracle;
  double worst = 0.0;
  for (std::size_t i = 0; i < P.size(); ++i) {
    auto a = offsets(zero, P[i]);
    auto it = oracle.find(a);
    if (it == oracle.end()) it = oracle.emplace(a, mbrw_oracle(a, m.horizon(), m.horizon())).first;
    worst = std::max(worst, std::abs(mbrw_cov(m, zero, P[i]) - it->second));
  }
  EXPECT_LE(worst, 1e-9);
}

TEST(MbrwCov, IntermediateTimesMatchQuadrature) {
  Mbrw m{2, 1.0 / 16};
  double v[2] = {0.125, 0.0625}, u[2] = {0.25, 0.5};
  for (double t : {0.2, 1.0, 1.9, 2.5})
    for (double s : {0.5, 2.0, m.horizon()})
      EXPECT_NEAR(mbrw_cov(m, v, u, t, s), mbrw_oracle(offsets(v, u), t, s), 1e-10);
}

TEST(Sandwich, ConstantValues) {
  EXPECT_DOUBLE_EQ(sandwich_constant(1), 1.0);
  EXPECT_DOUBLE_EQ(sandwich_constant(2), 2.5);
  EXPECT_NEAR(sandwich_constant(3), 3 + 1.5 + 1.0 / 3, 1e-15);
}

TEST(Sandwich, ExhaustiveD1Eps64) {
  Mbrw m{1, 1.0 / 64};
  PointSet P = m.lattice().points();
  double up = -1e300, lo = -1e300;
  for (std::size_t i = 0; i < P.size(); ++i)
    for (std::size_t j = 0; j < i; ++j) {
      auto s = mbrw_cov_bounds_check(m, P[i], P[j]);
      up = std::max(up, s.upper_violation);
      lo = std::max(lo, s.lower_violation);
    }
  EXPECT_LE(up, 1.0);
  EXPECT_LE(lo, 0.0);
}

TEST(Sandwich, ExhaustiveD2Eps32) {
  Mbrw m{2, 1.0 / 32};
  PointSet P = m.lattice().points();
  double up = -1e300, lo = -1e300;
  for (std::size_t i = 0; i < P.size(); ++i)
    for (std::size_t j = 0; j < i; ++j) {
      auto s = mbrw_cov_bounds_check(m, P[i], P[j]);
      up = std::max(up, s.upper_violation);
      lo = std::max(lo, s.lower_violation);
    }
  EXPECT_TRUE(std::isfinite(up));
  EXPECT_LE(up, 2.5);
  EXPECT_LE(lo, 0.0);
}

TEST(Sandwich, RejectsEqualPoints) {
  Mbrw m{1, 1.0 / 8};
  double v[1] = {0.25};
  EXPECT_THROW(mbrw_cov_bounds_check(m, v, v), DomainError);
}

namespace {
// first level k at which v and u fall in different dyadic boxes of side 2^-k
int level_by_boxes(std::span<const double> v, std::span<const double> u, int n) {
  for (int k = 0; k <= n; ++k) {
    double side = std::ldexp(1.0, -k);
    for (std::size_t i = 0; i < v.size(); ++i)
      if (std::floor(v[i] / side) != std::floor(u[i] / side)) return k;
  }
  return n + 1;
}
}  // namespace

TEST(BrwLevel, Examples) {
  double a[1] = {0.0}, b[1] = {0.5}, c[1] = {0.125};
  EXPECT_EQ(brw_level(a, b, 3), 1);
  EXPECT_EQ(brw_level(a, c, 3), 3);
  EXPECT_EQ(brw_level(a, a, 3), 4);
  double off[1] = {0.1};
  EXPECT_THROW(brw_level(a, off, 3), DomainError);
}

TEST(BrwLevel, MatchesBoxEnumeration) {
  for (int d = 1; d <= 2; ++d) {
    int n = d == 1 ? 6 : 4;
    PointSet P = Lattice(d, n).points();
    for (std::size_t i = 0; i < P.size(); ++i)
      for (std::size_t j = 0; j < P.size(); ++j) ASSERT_EQ(brw_level(P[i], P[j], n), level_by_boxes(P[i], P[j], n));
  }
}

TEST(BrwCov, ExamplesAndValueSet) {
  Brw b{3, 1};
  double a[1] = {0.0}, h[1] = {0.5};
  EXPECT_NEAR(brw_cov(b, a, h), std::numbers::ln2, 1e-15);
  EXPECT_NEAR(brw_cov(b, a, a), 3 * std::numbers::ln2, 1e-15);
  EXPECT_EQ(brw_cov(b, a, h, 0.0, 1.0), 0.0);
  Brw b2{4, 2};
  PointSet P = b2.lattice().points();
  for (std::size_t i = 0; i < P.size(); ++i)
    for (std::size_t j = 0; j < P.size(); ++j) {
      double k = brw_cov(b2, P[i], P[j]) / std::numbers::ln2;
      EXPECT_NEAR(k, std::round(k), 1e-12);
      EXPECT_GE(k, 0.0);
      EXPECT_LE(k, 4.0 + 1e-12);
      EXPECT_EQ(brw_cov(b2, P[i], P[j]), brw_cov(b2, P[j], P[i]));
    }
}

TEST(BsheetCov, Examples) {
  BrownianSheet s1{1.0 / 4, 3.0, 2};
  double corner[2] = {0.25, 0.5};
  EXPECT_DOUBLE_EQ(bsheet_cov(s1, corner, corner), 9.0);
  BrownianSheet s2{1.0 / 4, 2.0, 2};
  double centre[2] = {0.125, 0.625};
  EXPECT_DOUBLE_EQ(bsheet_cov(s2, centre, centre), 9.0);
  double other[2] = {0.3, 0.6};
  EXPECT_EQ(bsheet_cov(s2, centre, other), 0.0);
  double out[2] = {1.0, 0.1};
  EXPECT_THROW(bsheet_cov(s2, centre, out), DomainError);
}

TEST(BsheetCov, ProductFormulaInsideBox) {
  BrownianSheet s{1.0 / 8, 2.0, 2};
  double x[2] = {0.13, 0.26}, y[2] = {0.2, 0.251};
  double lx0 = 2 + 2 * (0.13 - 0.125) * 8, ly0 = 2 + 2 * (0.2 - 0.125) * 8;
  double lx1 = 2 + 2 * (0.26 - 0.25) * 8, ly1 = 2 + 2 * (0.251 - 0.25) * 8;
  EXPECT_NEAR(bsheet_cov(s, x, y), std::min(lx0, ly0) * std::min(lx1, ly1), 1e-12);
  EXPECT_EQ(bsheet_cov(s, x, y), bsheet_cov(s, y, x));
}

TEST(KernelMatrix, SinglePointAndSmallMbrw) {
  Mbrw m{1, 1.0 / 4};
  PointSet one(1, {0.5});
  auto c1 = kernel_matrix(m, one);
  ASSERT_EQ(c1.size(), 1u);
  EXPECT_NEAR(c1.m(0, 0), std::log(4.0), 1e-15);

  auto c = kernel_matrix(m, m.lattice().points());
  ASSERT_EQ(c.size(), 4u);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) {
      auto a = offsets(c.points[i], c.points[j]);
      EXPECT_NEAR(c.m(i, j), mbrw_oracle(a, std::log(4.0), std::log(4.0)), 1e-12);
      EXPECT_EQ(c.m(i, j), c.m(j, i));
    }
}

TEST(KernelMatrix, SheetAcrossBlocksIsZero) {
  BrownianSheet s{1.0 / 2, 1.0, 1};
  PointSet P(1, {0.1, 0.7});
  auto c = kernel_matrix(s, P);
  EXPECT_EQ(c.m(0, 1), 0.0);
  EXPECT_GT(c.m(0, 0), 0.0);
}

TEST(KernelMatrix, Errors) {
  Mbrw m{1, 1.0 / 16};
  EXPECT_THROW(kernel_matrix(m, PointSet(1)), DomainError);
  EXPECT_THROW(kernel_matrix(m, m.lattice().points(), 1, 8), SizeError);
  EXPECT_THROW(kernel_matrix(m, Lattice(2, 2).points()), DomainError);
}

TEST(KernelMatrix, ThreadCountDoesNotChangeBits) {
  Mbrw m{2, 1.0 / 8};
  auto a = kernel_matrix(m, m.lattice().points(), 1);
  auto b = kernel_matrix(m, m.lattice().points(), 4);
  EXPECT_EQ(std::memcmp(a.m.data(), b.m.data(), sizeof(double) * a.m.size()), 0);
}

TEST(KernelMatrix, PositiveSemidefiniteAllKernels) {
  for (auto& [name, c] : all_kernel_matrices()) {
    ASSERT_LE(c.size(), 256u);
    double lam = min_eigenvalue(c.m);
    EXPECT_GE(lam, -1e-8 * c.trace() / c.size()) << name;
  }
}

TEST(Factorize, JitterLadder) {
  Eigen::MatrixXd z = Eigen::MatrixXd::Zero(3, 3);
  EXPECT_EQ(factorize(z).L.norm(), 0.0);
  Eigen::MatrixXd rank1 = Eigen::MatrixXd::Ones(3, 3);
  auto f = factorize(rank1);
  EXPECT_GT(f.jitter, 0.0);
  EXPECT_LE(f.jitter, 1e-6 * rank1.trace() / 3 * (1 + 1e-9));
  Eigen::MatrixXd bad(2, 2);
  bad << 1, 0, 0, -1;
  EXPECT_THROW(factorize(bad), FactorizationError);
}
