#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>

#include "logfield/lattice.hpp"
#include "logfield/rng.hpp"

namespace logfield {

// Overall scale of the Dirichlet Green function of (0,1)^2.
//   standard: G = (4/pi^2) sum sin.../(n^2+m^2), singular part (1/2pi) log(1/r)
//   matched:  4x standard, singular part (2/pi) log(1/r), same as gamma_eval
enum class GreenScale { matched, standard };

inline double green_prefactor(GreenScale s) {
  constexpr double pi2 = std::numbers::pi * std::numbers::pi;
  return s == GreenScale::matched ? 16.0 / pi2 : 4.0 / pi2;
}
inline double green_scale_factor(GreenScale s) { return s == GreenScale::matched ? 4.0 : 1.0; }

struct AccuracyWarning {
  double distance;
  double threshold;
  std::string message;
};

struct GreenEval {
  double value = 0.0;
  std::optional<AccuracyWarning> warning;
};

namespace detail {

inline double dist2(std::span<const double> x, std::span<const double> y) {
  double dx = x[0] - y[0], dy = x[1] - y[1];
  return std::hypot(dx, dy);
}

inline void require2(std::span<const double> x, const char* what) {
  if (x.size() != 2) throw DomainError(std::string(what) + ": point must be two-dimensional");
}

}  // namespace detail

// Truncated eigenfunction series on the square (0,L)^2.
struct GreenSeries {
  int N = 400;
  double side = 1.0;
  GreenScale scale = GreenScale::matched;

  void validate() const {
    if (N < 1) throw DomainError("GreenSeries: N must be >= 1");
    if (!(side > 0.0)) throw DomainError("GreenSeries: side must be positive");
  }

  double tail_estimate() const {
    return green_prefactor(scale) * std::numbers::pi / static_cast<double>(N);
  }

  double warn_threshold() const { return 3.0 * side / static_cast<double>(N); }

  GreenEval eval(std::span<const double> u, std::span<const double> v) const {
    validate();
    detail::require2(u, "green_eval");
    detail::require2(v, "green_eval");
    GreenEval out;
    for (int i = 0; i < 2; ++i) {
      if (u[i] < 0.0 || u[i] > side || v[i] < 0.0 || v[i] > side)
        throw DomainError("green_eval: point outside the closed square");
    }
    double r = detail::dist2(u, v);
    if (r < warn_threshold())
      out.warning = AccuracyWarning{r, warn_threshold(), "points closer than 3L/N; series tail not negligible"};
    for (int i = 0; i < 2; ++i)
      if (u[i] == 0.0 || u[i] == side || v[i] == 0.0 || v[i] == side) return out;

    const double w = std::numbers::pi / side;
    std::vector<double> a(N + 1), b(N + 1);
    for (int n = 1; n <= N; ++n) {
      a[n] = std::sin(n * w * u[0]) * std::sin(n * w * v[0]);
      b[n] = std::sin(n * w * u[1]) * std::sin(n * w * v[1]);
    }
    double total = 0.0;
    for (int n = 1; n <= N; ++n) {
      const double n2 = static_cast<double>(n) * n;
      double row = 0.0;
      for (int m = 1; m <= N; ++m) row += b[m] / (n2 + static_cast<double>(m) * m);
      total += a[n] * row;
    }
    out.value = green_prefactor(scale) * total;
    return out;
  }

  double operator()(std::span<const double> u, std::span<const double> v) const { return eval(u, v).value; }
};

inline double gamma_eval(std::span<const double> x, std::span<const double> y) {
  detail::require2(x, "gamma_eval");
  detail::require2(y, "gamma_eval");
  double r = detail::dist2(x, y);
  if (r == 0.0) throw DomainError("gamma_eval: x == y");
  return (2.0 / std::numbers::pi) * std::log(1.0 / r);
}

inline double gamma_of_distance(double r) { return (2.0 / std::numbers::pi) * std::log(1.0 / r); }

namespace detail {

// (1 - e^-tau)^2 + 4 e^-tau sin^2(theta/2) = |1 - e^{-tau + i theta}|^2
inline double image_factor(double tau, double theta) {
  double em = std::expm1(-tau);
  double s = std::sin(0.5 * theta);
  return em * em + 4.0 * std::exp(-tau) * s * s;
}

inline constexpr int kImageTerms = 7;

// Sum of image terms of the standard Green function, optionally without
// the singular (k=0, s=|a-b|, difference) term. Returns the bracket sum
// so that G_std = sum / (4 pi).
inline double image_sum(double x1, double x2, double y1, double y2, bool drop_singular) {
  const double pi = std::numbers::pi;
  const double a = x2, b = y2;
  const double dif = pi * (x1 - y1), sum = pi * (x1 + y1);
  const double sh[4] = {std::abs(a - b), 2.0 - std::abs(a - b), a + b, 2.0 - a - b};
  const double sg[4] = {1.0, 1.0, -1.0, -1.0};
  double total = 0.0;
  for (int k = 0; k < kImageTerms; ++k) {
    for (int j = 0; j < 4; ++j) {
      double tau = pi * (sh[j] + 2.0 * k);
      double t = std::log(image_factor(tau, sum));
      if (!(drop_singular && k == 0 && j == 0)) t -= std::log(image_factor(tau, dif));
      total += sg[j] * t;
    }
  }
  return total;
}

}  // namespace detail

// Closed-form Green function of (0,1)^2 by the method of images (rapidly
// convergent; independent of any truncation order).
inline double green_image(std::span<const double> x, std::span<const double> y,
                          GreenScale scale = GreenScale::matched) {
  detail::require2(x, "green_image");
  detail::require2(y, "green_image");
  for (int i = 0; i < 2; ++i) {
    if (x[i] < 0.0 || x[i] > 1.0 || y[i] < 0.0 || y[i] > 1.0)
      throw DomainError("green_image: point outside the closed unit square");
    if (x[i] == 0.0 || x[i] == 1.0 || y[i] == 0.0 || y[i] == 1.0) return 0.0;
  }
  if (x[0] == y[0] && x[1] == y[1]) throw DomainError("green_image: x == y");
  double g = detail::image_sum(x[0], x[1], y[0], y[1], false) / (4.0 * std::numbers::pi);
  return green_scale_factor(scale) * g;
}

// Regular part h = Gamma - G (matched scale), harmonic in each variable on
// the open square and finite on the diagonal.
inline double green_regular_part(std::span<const double> x, std::span<const double> y) {
  detail::require2(x, "green_regular_part");
  detail::require2(y, "green_regular_part");
  for (int i = 0; i < 2; ++i)
    if (!(x[i] > 0.0 && x[i] < 1.0 && y[i] > 0.0 && y[i] < 1.0))
      throw DomainError("green_regular_part: points must lie in the open unit square");
  const double pi = std::numbers::pi;
  double d1 = x[0] - y[0], d2 = x[1] - y[1];
  double r2 = d1 * d1 + d2 * d2;
  double q = r2 == 0.0 ? pi * pi : detail::image_factor(pi * std::abs(d2), pi * d1) / r2;
  double rest = detail::image_sum(x[0], x[1], y[0], y[1], true);
  return (std::log(q) - rest) / pi;
}

// Average of log|z - w| over w in the unit disk, as a function of |z|.
inline double unit_disk_log_average(double rho) {
  return rho >= 1.0 ? std::log(rho) : 0.5 * (rho * rho - 1.0);
}

// Average of log|z - w| over z, w in two unit disks whose centers are sigma apart.
inline double double_disk_log_average(double sigma) {
  if (sigma < 0.0) throw DomainError("double_disk_log_average: negative separation");
  if (sigma >= 2.0) return std::log(sigma);
  const double pi = std::numbers::pi;
  double total = unit_disk_log_average(sigma);
  auto g1 = [](double r) { return -std::log(r) - 0.5 * (1.0 - r * r); };
  if (sigma < 1.0) {
    double R = 1.0 - sigma;
    double inner = R > 0.0 ? -0.5 * R * R * std::log(R) + 0.125 * R * R * R * R : 0.0;
    total += 2.0 * inner;
  }
  if (sigma > 0.0) {
    double lo = std::abs(1.0 - sigma);
    auto f = [&](double r) {
      if (r <= 0.0) return 0.0;
      double c = (r * r + sigma * sigma - 1.0) / (2.0 * r * sigma);
      c = std::clamp(c, -1.0, 1.0);
      return g1(r) * 2.0 * std::acos(c) * r;
    };
    const double half = 0.5 * (1.0 - lo);
    if (half > 0.0) {
      auto g = [&](double t) { return f(lo + half * (1.0 + t)); };
      boost::math::quadrature::tanh_sinh<double> ts;
      total += half * ts.integrate(g, -1.0, 1.0, 1e-13) / pi;
    }
  }
  return total;
}

// Double average of Gamma over D(x,eps) x D(y,eps) for |x-y| = s.
inline double gamma_disk_average(double s, double eps) {
  if (!(eps > 0.0)) throw DomainError("gamma_disk_average: eps must be positive");
  if (s >= 2.0 * eps) return gamma_of_distance(s);
  return (2.0 / std::numbers::pi) * (std::log(1.0 / eps) - double_disk_log_average(s / eps));
}

enum class MollifierRoute { split, analytic, quadrature };

struct MollifierSpec {
  double eps = 1.0 / 64;
  MollifierRoute route = MollifierRoute::split;
  int radial_nodes = 32;
  int angular_nodes = 64;
  bool clip = false;

  void validate() const {
    if (!(eps > 0.0)) throw DomainError("MollifierSpec: eps must be positive");
    if (route == MollifierRoute::quadrature && (radial_nodes < 4 || angular_nodes < 4))
      throw DomainError("MollifierSpec: node counts must be >= 4");
    if (clip && route != MollifierRoute::quadrature)
      throw DomainError("MollifierSpec: clip requires the quadrature route");
  }
};

inline const char* to_string(MollifierRoute r) {
  switch (r) {
    case MollifierRoute::split: return "split";
    case MollifierRoute::analytic: return "analytic";
    case MollifierRoute::quadrature: return "quadrature";
  }
  return "?";
}

// Plane-wave disk average weight: mean of exp(i k.u) over D(0,eps) is w(|k| eps).
inline double disk_plane_wave_weight(double z) {
  if (z < 1e-8) return 1.0 - z * z / 8.0;
  return 2.0 * std::cyl_bessel_j(1.0, z) / z;
}

// Covariance of the mollified field: double disk average of G.
class MollifiedGreen {
 public:
  MollifiedGreen(GreenSeries series, MollifierSpec moll) : series_(series), moll_(moll) {
    series_.validate();
    moll_.validate();
    if (series_.side != 1.0) throw DomainError("MollifiedGreen: series must be on the unit square");
    if (moll_.route == MollifierRoute::analytic) build_analytic_table();
    if (moll_.route == MollifierRoute::quadrature) build_nodes();
  }

  const GreenSeries& series() const { return series_; }
  const MollifierSpec& mollifier() const { return moll_; }

  bool disk_inside(std::span<const double> x) const {
    const double e = moll_.eps;
    return x[0] - e >= 0.0 && x[0] + e <= 1.0 && x[1] - e >= 0.0 && x[1] + e <= 1.0;
  }

  double operator()(std::span<const double> x, std::span<const double> y) const {
    detail::require2(x, "mollified_green");
    detail::require2(y, "mollified_green");
    for (int i = 0; i < 2; ++i)
      if (x[i] < 0.0 || x[i] > 1.0 || y[i] < 0.0 || y[i] > 1.0)
        throw DomainError("mollified_green: point outside [0,1]^2");
    if (!moll_.clip && (!disk_inside(x) || !disk_inside(y)))
      throw DomainError("mollified_green: disk crosses the boundary and clip is off");
    switch (moll_.route) {
      case MollifierRoute::split: return split(x, y);
      case MollifierRoute::analytic: return analytic(x, y);
      case MollifierRoute::quadrature: return quadrature(x, y);
    }
    return 0.0;
  }

  // Mode coefficients of the disk average around x (quadrature route),
  // P(n-1, m-1) = avg over D(x,eps) of sin(n pi u1) sin(m pi u2).
  Eigen::MatrixXd quadrature_modes(std::span<const double> x) const {
    const int N = series_.N;
    const std::size_t K = node_dx_.size();
    Eigen::MatrixXd S1(N, K), S2(N, K);
    Eigen::VectorXd w(K);
    const double pi = std::numbers::pi;
    for (std::size_t k = 0; k < K; ++k) {
      double u1 = x[0] + node_dx_[k], u2 = x[1] + node_dy_[k];
      bool in = u1 > 0.0 && u1 < 1.0 && u2 > 0.0 && u2 < 1.0;
      w[static_cast<Eigen::Index>(k)] = in ? node_w_[k] : 0.0;
      for (int n = 1; n <= N; ++n) {
        S1(n - 1, static_cast<Eigen::Index>(k)) = std::sin(n * pi * u1);
        S2(n - 1, static_cast<Eigen::Index>(k)) = std::sin(n * pi * u2);
      }
    }
    return S1 * w.asDiagonal() * S2.transpose();
  }

  double modes_dot(const Eigen::MatrixXd& P, const Eigen::MatrixXd& R) const {
    const int N = series_.N;
    double total = 0.0;
    for (int n = 1; n <= N; ++n)
      for (int m = 1; m <= N; ++m)
        total += P(n - 1, m - 1) * R(n - 1, m - 1) / (static_cast<double>(n) * n + static_cast<double>(m) * m);
    return green_prefactor(series_.scale) * total;
  }

 private:
  double split(std::span<const double> x, std::span<const double> y) const {
    double s = detail::dist2(x, y);
    double c = gamma_disk_average(s, moll_.eps) - green_regular_part(x, y);
    return c / green_scale_factor(GreenScale::matched) * green_scale_factor(series_.scale);
  }

  void build_analytic_table() {
    const int N = series_.N;
    weights_.resize(static_cast<std::size_t>(N) * N);
    const double pi = std::numbers::pi;
    for (int n = 1; n <= N; ++n)
      for (int m = 1; m <= N; ++m) {
        double q = static_cast<double>(n) * n + static_cast<double>(m) * m;
        double w = disk_plane_wave_weight(moll_.eps * pi * std::sqrt(q));
        weights_[static_cast<std::size_t>(n - 1) * N + (m - 1)] = w * w / q;
      }
  }

  double analytic(std::span<const double> x, std::span<const double> y) const {
    const int N = series_.N;
    const double pi = std::numbers::pi;
    std::vector<double> a(N), b(N);
    for (int n = 1; n <= N; ++n) {
      a[n - 1] = std::sin(n * pi * x[0]) * std::sin(n * pi * y[0]);
      b[n - 1] = std::sin(n * pi * x[1]) * std::sin(n * pi * y[1]);
    }
    double total = 0.0;
    for (int n = 0; n < N; ++n) {
      const double* wr = weights_.data() + static_cast<std::size_t>(n) * N;
      double row = 0.0;
      for (int m = 0; m < N; ++m) row += wr[m] * b[m];
      total += a[n] * row;
    }
    return green_prefactor(series_.scale) * total;
  }

  void build_nodes() {
    const int R = moll_.radial_nodes, A = moll_.angular_nodes;
    const double pi = std::numbers::pi, e = moll_.eps;
    // Gauss-Legendre on [0,1] via Golub-Welsch
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(R, R);
    for (int i = 1; i < R; ++i) {
      double b = i / std::sqrt(4.0 * i * i - 1.0);
      J(i, i - 1) = J(i - 1, i) = b;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
    for (int i = 0; i < R; ++i) {
      double t = 0.5 * (es.eigenvalues()[i] + 1.0);
      double wt = es.eigenvectors()(0, i) * es.eigenvectors()(0, i);  // sums to 1 over [0,1]
      double r = e * t;
      for (int j = 0; j < A; ++j) {
        double th = 2.0 * pi * j / A;
        node_dx_.push_back(r * std::cos(th));
        node_dy_.push_back(r * std::sin(th));
        // (1/(pi e^2)) * (e dt r) * (2 pi / A)  with dt-weight wt
        node_w_.push_back(wt * 2.0 * t / A);
      }
    }
  }

  double quadrature(std::span<const double> x, std::span<const double> y) const {
    Eigen::MatrixXd P = quadrature_modes(x);
    if (x[0] == y[0] && x[1] == y[1]) return modes_dot(P, P);
    return modes_dot(P, quadrature_modes(y));
  }

  GreenSeries series_;
  MollifierSpec moll_;
  std::vector<double> weights_;
  std::vector<double> node_dx_, node_dy_, node_w_;
};

inline double scaling_identity_residual(const GreenSeries& series, std::span<const double> u,
                                        std::span<const double> v) {
  GreenSeries full = series;
  full.side = 1.0;
  GreenSeries half = series;
  half.side = 0.5;
  const double uh[2] = {u[0] / 2, u[1] / 2}, vh[2] = {v[0] / 2, v[1] / 2};
  return std::abs(half(uh, vh) - full(u, v));
}

struct ScalingCheck {
  double residual = 0.0;
  std::optional<AccuracyWarning> warning;
};

inline ScalingCheck scaling_identity_check(const GreenSeries& series, std::span<const double> u,
                                           std::span<const double> v) {
  GreenSeries full = series;
  full.side = 1.0;
  ScalingCheck c;
  c.warning = full.eval(u, v).warning;
  c.residual = scaling_identity_residual(series, u, v);
  return c;
}

inline double margin_of(std::span<const double> x) {
  return std::min({x[0], 1.0 - x[0], x[1], 1.0 - x[1]});
}

struct HarmonicBound {
  double sup = 0.0;
  double bound = 0.0;  // Gamma(k/2) + slack
  bool ok = false;
  std::size_t pairs = 0;
};

inline HarmonicBound harmonic_correction_bound(const GreenSeries& series, double k_margin,
                                               const PointSet& grid, double slack = 0.01) {
  if (!(k_margin > 0.0)) throw DomainError("harmonic_correction_bound: margin must be positive");
  if (grid.d != 2) throw DomainError("harmonic_correction_bound: grid must be two-dimensional");
  for (std::size_t i = 0; i < grid.size(); ++i)
    if (margin_of(grid[i]) < k_margin - 1e-12)
      throw DomainError("harmonic_correction_bound: grid point violates the margin");
  HarmonicBound hb;
  for (std::size_t i = 0; i < grid.size(); ++i)
    for (std::size_t j = i + 1; j < grid.size(); ++j) {
      if (detail::dist2(grid[i], grid[j]) == 0.0) continue;
      double diff = std::abs(series(grid[i], grid[j]) - gamma_eval(grid[i], grid[j]));
      hb.sup = std::max(hb.sup, diff);
      ++hb.pairs;
    }
  hb.bound = gamma_of_distance(k_margin / 2) + slack;
  hb.ok = hb.sup <= hb.bound;
  return hb;
}

struct MomentRow {
  double distance = 0.0;
  double cov = 0.0;
  double m2 = -1.0;  // E(X^x - X^y)^2, only when |x-y| <= eps
  double deviation = 0.0;
  double ratio = -1.0;  // < 0 when |x-y| > eps
};

struct MomentReport {
  double max_deviation = 0.0;
  double max_ratio = 0.0;
  std::vector<MomentRow> rows;
};

inline MomentReport moment_bound_check(const MollifiedGreen& cov, double k_margin,
                                       const std::vector<std::pair<std::vector<double>, std::vector<double>>>& pairs) {
  const double eps = cov.mollifier().eps;
  MomentReport rep;
  for (const auto& [x, y] : pairs) {
    if (margin_of(x) < k_margin - 1e-12 || margin_of(y) < k_margin - 1e-12)
      throw DomainError("moment_bound_check: pair outside the bulk");
    MomentRow row;
    row.distance = detail::dist2(x, y);
    double cxy = cov(x, y);
    row.cov = cxy;
    row.deviation = std::abs(cxy + (2.0 / std::numbers::pi) * std::log(std::max(eps, row.distance)));
    if (row.distance <= eps && row.distance > 0.0) {
      double m2 = cov(x, x) + cov(y, y) - 2.0 * cxy;
      row.m2 = m2;
      row.ratio = m2 * eps / row.distance;
      rep.max_ratio = std::max(rep.max_ratio, row.ratio);
    }
    rep.max_deviation = std::max(rep.max_deviation, row.deviation);
    rep.rows.push_back(row);
  }
  return rep;
}

using PointPairs = std::vector<std::pair<std::vector<double>, std::vector<double>>>;

// Bulk pairs in [k, 1-k]^2: per_kind uniform pairs, per_kind pairs at
// distance in (0, eps] and per_kind coincident pairs.
inline PointPairs bulk_pairs(double eps, double k_margin, std::size_t per_kind, std::uint64_t seed,
                             std::uint64_t tag) {
  if (!(k_margin > 0.0 && k_margin < 0.5)) throw DomainError("bulk_pairs: margin must lie in (0, 1/2)");
  if (!(eps > 0.0 && 2.0 * eps < 1.0 - 2.0 * k_margin)) throw DomainError("bulk_pairs: eps too large for the bulk");
  Stream st(SeedSpec{seed, tag, "bulk_pairs"});
  const double w = 1.0 - 2.0 * k_margin;
  PointPairs out;
  for (std::size_t i = 0; i < per_kind; ++i) {
    double x0 = k_margin + w * st.uniform(), x1 = k_margin + w * st.uniform();
    double y0 = k_margin + w * st.uniform(), y1 = k_margin + w * st.uniform();
    out.push_back({{x0, x1}, {y0, y1}});
    double r = eps * st.uniform_pos(), th = 2.0 * std::numbers::pi * st.uniform();
    double c0 = std::clamp(x0, k_margin + r, 1.0 - k_margin - r), c1 = std::clamp(x1, k_margin + r, 1.0 - k_margin - r);
    out.push_back({{c0, c1}, {c0 + r * std::cos(th), c1 + r * std::sin(th)}});
    out.push_back({{y0, y1}, {y0, y1}});
  }
  return out;
}

struct MomentSweepRow {
  double eps = 0.0;
  double max_deviation = 0.0;
  double max_ratio = 0.0;
  std::size_t pairs = 0;
};

// moment_bound_check at each mollifier radius on fresh bulk pairs (tag = scale index)
inline std::vector<MomentSweepRow> moment_sweep(const GreenSeries& series, MollifierSpec moll,
                                                const std::vector<double>& radii, double k_margin,
                                                std::size_t per_kind, std::uint64_t seed) {
  std::vector<MomentSweepRow> out;
  for (std::size_t s = 0; s < radii.size(); ++s) {
    moll.eps = radii[s];
    MollifiedGreen g(series, moll);
    MomentReport rep = moment_bound_check(g, k_margin, bulk_pairs(radii[s], k_margin, per_kind, seed, s));
    out.push_back({radii[s], rep.max_deviation, rep.max_ratio, rep.rows.size()});
  }
  return out;
}

}  // namespace logfield
