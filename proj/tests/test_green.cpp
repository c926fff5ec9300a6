#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "logfield/extremes.hpp"
#include "logfield/green.hpp"
#include "logfield/matrix.hpp"
#include "logfield/rng.hpp"

using namespace logfield;

namespace {

std::vector<std::array<double, 4>> random_bulk_pairs(std::size_t n, double k, std::uint64_t seed) {
  Stream st(SeedSpec{seed, 0, "green_test"});
  std::vector<std::array<double, 4>> out;
  const double w = 1.0 - 2 * k;
  for (std::size_t i = 0; i < n; ++i)
    out.push_back({k + w * st.uniform(), k + w * st.uniform(), k + w * st.uniform(), k + w * st.uniform()});
  return out;
}

// mean of log|z - w| over z in D(0,1), w in D(s,1), polar Gauss-Legendre x trapezoid
double brute_double_disk_log(double s, int R, int A) {
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(R, R);
  for (int i = 1; i < R; ++i) J(i, i - 1) = J(i - 1, i) = i / std::sqrt(4.0 * i * i - 1.0);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
  std::vector<double> x, y, w;
  for (int i = 0; i < R; ++i) {
    double t = 0.5 * (es.eigenvalues()[i] + 1.0);
    double wt = es.eigenvectors()(0, i) * es.eigenvectors()(0, i);
    for (int j = 0; j < A; ++j) {
      double th = 2 * std::numbers::pi * (j + 0.5) / A;
      x.push_back(t * std::cos(th));
      y.push_back(t * std::sin(th));
      w.push_back(wt * 2 * t / A);
    }
  }
  double total = 0.0;
  for (std::size_t a = 0; a < x.size(); ++a)
    for (std::size_t b = 0; b < x.size(); ++b)
      total += w[a] * w[b] * 0.5 * std::log((x[a] - x[b] - s) * (x[a] - x[b] - s) + (y[a] - y[b]) * (y[a] - y[b]));
  return total;
}

}  // namespace

TEST(GreenSeries, BoundaryIsExactlyZero) {
  for (int N : {1, 7, 400}) {
    GreenSeries g;
    g.N = N;
    double u[2] = {0.3, 0.6};
    double b1[2] = {0.0, 0.4}, b2[2] = {1.0, 0.2}, b3[2] = {0.5, 1.0};
    EXPECT_EQ(g(u, b1), 0.0);
    EXPECT_EQ(g(b2, u), 0.0);
    EXPECT_EQ(g(u, b3), 0.0);
  }
}

TEST(GreenSeries, TruncationStable) {
  GreenSeries a, b;
  b.N = 800;
  double u[2] = {0.25, 0.25}, v[2] = {0.75, 0.75};
  EXPECT_NEAR(a(u, v), b(u, v), 1e-6);
}

TEST(GreenSeries, SymmetricExactly) {
  GreenSeries g;
  for (auto p : random_bulk_pairs(20, 0.05, 3)) {
    double u[2] = {p[0], p[1]}, v[2] = {p[2], p[3]};
    EXPECT_EQ(g(u, v), g(v, u));
  }
}

TEST(GreenSeries, MatchesImageSum) {
  GreenSeries g;
  g.N = 800;
  for (auto p : random_bulk_pairs(20, 0.1, 4)) {
    double u[2] = {p[0], p[1]}, v[2] = {p[2], p[3]};
    if (detail::dist2(u, v) < 0.1) continue;
    EXPECT_NEAR(g(u, v), green_image(u, v), 1e-4);
  }
}

TEST(GreenSeries, NonnegativeUpToTruncation) {
  GreenSeries g;
  for (auto p : random_bulk_pairs(50, 0.01, 5)) {
    double u[2] = {p[0], p[1]}, v[2] = {p[2], p[3]};
    EXPECT_GE(g(u, v), -g.tail_estimate());
  }
}

TEST(GreenSeries, WarnsNearDiagonal) {
  GreenSeries g;
  double u[2] = {0.5, 0.5}, v[2] = {0.5 + 1.0 / 400, 0.5};
  auto e = g.eval(u, v);
  ASSERT_TRUE(e.warning.has_value());
  EXPECT_LT(e.warning->distance, e.warning->threshold);
  double w[2] = {0.7, 0.5};
  EXPECT_FALSE(g.eval(u, w).warning.has_value());
  double out[2] = {1.1, 0.5};
  EXPECT_THROW(g(u, out), DomainError);
}

TEST(Gamma, Values) {
  double o[2] = {0.0, 0.0}, one[2] = {0.6, 0.8};
  EXPECT_EQ(gamma_eval(o, one), 0.0);
  double r = std::exp(-std::numbers::pi / 2);
  double p[2] = {r, 0.0};
  EXPECT_NEAR(gamma_eval(o, p), 1.0, 1e-15);
  double h[2] = {0.3, 0.4};
  EXPECT_NEAR(gamma_eval(o, h), (2 / std::numbers::pi) * std::log(2.0), 1e-15);
  EXPECT_NEAR(gamma_eval(o, h), 0.4412712, 1e-7);
  EXPECT_THROW(gamma_eval(o, o), DomainError);
}

TEST(DiskAverages, PlaneWaveWeightMatchesQuadrature) {
  // mean of cos(z u_1) over the unit disk
  for (double z : {0.0, 0.5, 3.0, 17.0}) {
    const int R = 200, A = 400;
    double total = 0.0;
    for (int i = 0; i < R; ++i) {
      double t = (i + 0.5) / R;
      for (int j = 0; j < A; ++j) {
        double th = 2 * std::numbers::pi * j / A;
        total += std::cos(z * t * std::cos(th)) * 2 * t / (R * A);
      }
    }
    EXPECT_NEAR(disk_plane_wave_weight(z), total, 1e-4) << z;
  }
}

TEST(DiskAverages, DoubleDiskLogMatchesBruteQuadrature) {
  for (double s : {0.5, 1.0, 1.5, 2.5}) EXPECT_NEAR(double_disk_log_average(s), brute_double_disk_log(s, 48, 96), 2e-3) << s;
  // mean-value property beyond touching distance
  EXPECT_NEAR(double_disk_log_average(3.0), std::log(3.0), 1e-14);
  EXPECT_NEAR(double_disk_log_average(2.0 - 1e-9), std::log(2.0), 1e-7);
}

TEST(Mollified, AnalyticMatchesQuadratureRoute) {
  GreenSeries s;
  s.N = 100;
  MollifierSpec an{1.0 / 8, MollifierRoute::analytic};
  MollifierSpec qu{1.0 / 8, MollifierRoute::quadrature, 96, 192};
  MollifiedGreen A(s, an), Q(s, qu);
  for (auto p : random_bulk_pairs(5, 0.25, 6)) {
    double x[2] = {p[0], p[1]}, y[2] = {p[2], p[3]};
    EXPECT_NEAR(A(x, y), Q(x, y), 1e-6);
  }
}

TEST(Mollified, SplitMatchesAnalyticSeries) {
  GreenSeries s;
  MollifiedGreen S(s, MollifierSpec{1.0 / 32}), A(s, MollifierSpec{1.0 / 32, MollifierRoute::analytic});
  for (auto p : random_bulk_pairs(10, 0.25, 7)) {
    double x[2] = {p[0], p[1]}, y[2] = {p[2], p[3]};
    EXPECT_NEAR(S(x, y), A(x, y), 2e-3);
    EXPECT_NEAR(S(x, x), A(x, x), 2e-3);
  }
}

TEST(Mollified, Symmetric) {
  for (auto route : {MollifierRoute::split, MollifierRoute::analytic}) {
    MollifiedGreen g(GreenSeries{}, MollifierSpec{1.0 / 16, route});
    for (auto p : random_bulk_pairs(10, 0.25, 8)) {
      double x[2] = {p[0], p[1]}, y[2] = {p[2], p[3]};
      EXPECT_NEAR(g(x, y), g(y, x), 1e-12);
    }
  }
}

TEST(Mollified, DiagonalNearLogScale) {
  MollifiedGreen g(GreenSeries{}, MollifierSpec{1.0 / 64});
  double x[2] = {0.5, 0.5};
  double dev = std::abs(g(x, x) + (2 / std::numbers::pi) * std::log(1.0 / 64));
  EXPECT_LT(dev, 1.0);
}

TEST(Mollified, PreconditionsEnforced) {
  MollifiedGreen g(GreenSeries{}, MollifierSpec{1.0 / 8});
  double edge[2] = {0.05, 0.5}, in[2] = {0.5, 0.5};
  EXPECT_THROW(g(edge, in), DomainError);
  MollifierSpec bad{1.0 / 8, MollifierRoute::quadrature, 2, 64};
  EXPECT_THROW(MollifiedGreen(GreenSeries{}, bad), DomainError);
  MollifierSpec clip{1.0 / 8};
  clip.clip = true;
  EXPECT_THROW(MollifiedGreen(GreenSeries{}, clip), DomainError);
  MollifierSpec clipq{1.0 / 8, MollifierRoute::quadrature, 8, 16};
  clipq.clip = true;
  MollifiedGreen c(GreenSeries{.N = 50}, clipq);
  EXPECT_TRUE(std::isfinite(c(edge, in)));
}

TEST(Mollified, BulkMatrixPositiveSemidefinite) {
  for (double r : {1.0 / 16, 1.0 / 64}) {
    Mgff k;
    k.mollifier.eps = r;
    auto c = kernel_matrix(k, bulk_points(1.0 / 16));
    ASSERT_EQ(c.size(), 256u);
    EXPECT_GE(min_eigenvalue(c.m), -1e-7 * c.trace() / c.size());
  }
}

TEST(Scaling, ResidualAtExamplePair) {
  GreenSeries s;
  double u[2] = {0.3, 0.4}, v[2] = {0.7, 0.6};
  EXPECT_LE(scaling_identity_residual(s, u, v), 1e-8);
  EXPECT_EQ(scaling_identity_residual(s, u, v), scaling_identity_residual(s, v, u));
}

TEST(Scaling, ResidualWithinTailOnRandomPairs) {
  GreenSeries s;
  for (auto p : random_bulk_pairs(20, 0.05, 9)) {
    double u[2] = {p[0], p[1]}, v[2] = {p[2], p[3]};
    EXPECT_LE(scaling_identity_residual(s, u, v), 10 * s.tail_estimate());
  }
}

TEST(Scaling, WarnsNearDiagonal) {
  GreenSeries s;
  double u[2] = {0.4, 0.4}, v[2] = {0.401, 0.4};
  EXPECT_TRUE(scaling_identity_check(s, u, v).warning.has_value());
}

TEST(Harmonic, BoundOnBulkGrid) {
  GreenSeries s;
  PointSet grid = bulk_points(1.0 / 8);
  ASSERT_EQ(grid.size(), 64u);
  auto hb = harmonic_correction_bound(s, 0.25, grid);
  EXPECT_TRUE(hb.ok);
  EXPECT_NEAR(hb.bound, (2 / std::numbers::pi) * std::log(8.0) + 0.01, 1e-12);
  EXPECT_EQ(hb.pairs, 64u * 63u / 2);
}

TEST(Harmonic, StableUnderDoubledTruncation) {
  GreenSeries a, b;
  b.N = 800;
  PointSet grid = bulk_points(1.0 / 8);
  EXPECT_NEAR(harmonic_correction_bound(a, 0.25, grid).sup, harmonic_correction_bound(b, 0.25, grid).sup, 1e-4);
}

TEST(Harmonic, RejectsMarginViolation) {
  PointSet grid(2, {0.1, 0.5, 0.5, 0.5});
  EXPECT_THROW(harmonic_correction_bound(GreenSeries{}, 0.25, grid), DomainError);
}

TEST(Harmonic, RegularPartIsGammaMinusG) {
  for (auto p : random_bulk_pairs(10, 0.1, 10)) {
    double u[2] = {p[0], p[1]}, v[2] = {p[2], p[3]};
    EXPECT_NEAR(green_regular_part(u, v), gamma_eval(u, v) - green_image(u, v), 1e-12);
  }
}

TEST(Moments, CoincidentAndBoundaryDistance) {
  const double e = 1.0 / 32;
  MollifiedGreen g(GreenSeries{}, MollifierSpec{e});
  PointPairs pairs{{{0.5, 0.5}, {0.5, 0.5}}, {{0.4, 0.5}, {0.4 + e, 0.5}}};
  auto rep = moment_bound_check(g, 0.25, pairs);
  ASSERT_EQ(rep.rows.size(), 2u);
  EXPECT_TRUE(std::isfinite(rep.rows[0].deviation));
  EXPECT_LT(rep.rows[0].ratio, 0.0);
  // |x-y| = eps: both clauses active and max{eps,|x-y|} is eps
  EXPECT_GE(rep.rows[1].ratio, 0.0);
  EXPECT_NEAR(rep.rows[1].deviation, std::abs(rep.rows[1].cov + (2 / std::numbers::pi) * std::log(e)), 1e-15);
  PointPairs out{{{0.1, 0.5}, {0.5, 0.5}}};
  EXPECT_THROW(moment_bound_check(g, 0.25, out), DomainError);
}

TEST(Moments, DiagonalDeviationStabilizes) {
  std::vector<double> dev;
  for (int k = 3; k <= 7; ++k) {
    MollifiedGreen g(GreenSeries{}, MollifierSpec{std::ldexp(1.0, -k)});
    double x[2] = {0.45, 0.55};
    PointPairs p{{{x[0], x[1]}, {x[0], x[1]}}};
    dev.push_back(moment_bound_check(g, 0.25, p).max_deviation);
  }
  for (std::size_t i = 2; i + 1 < dev.size(); ++i) EXPECT_LT(std::abs(dev[i + 1] - dev[i]), 0.05);
}

TEST(Moments, SweepDeterministic) {
  std::vector<double> radii{1.0 / 8, 1.0 / 16};
  auto a = moment_sweep(GreenSeries{}, MollifierSpec{}, radii, 0.25, 10, 42);
  auto b = moment_sweep(GreenSeries{}, MollifierSpec{}, radii, 0.25, 10, 42);
  ASSERT_EQ(a.size(), 2u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].max_deviation, b[i].max_deviation);
    EXPECT_EQ(a[i].pairs, 30u);
  }
}
