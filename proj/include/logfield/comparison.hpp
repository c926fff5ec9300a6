#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "logfield/green.hpp"
#include "logfield/kernels.hpp"
#include "logfield/lattice.hpp"
#include "logfield/parallel.hpp"
#include "logfield/rng.hpp"

namespace logfield {

enum class CyProvenance { assumed, measured };

inline const char* to_string(CyProvenance p) { return p == CyProvenance::assumed ? "assumed" : "measured-from-MGFF"; }

struct FieldClassParams {
  double C_Y = 0.0;
  int d = 1;
  CyProvenance provenance = CyProvenance::assumed;
};

// Continuous-index MBRW kernel: Cov(Y_e^x, Y_e^y) = int_0^{log 1/e} prod (1 - e^r |x_i - y_i|)_+ dr.
struct SyntheticMbrw {
  int d = 1;
};

// sqrt(pi/2) X_{e/2} at 1/4 + x/2, so that Cov ~ -log max(e, |x-y|) on [0,1]^2.
struct MgffFamily {
  GreenSeries series{};
};

using YFamily = std::variant<SyntheticMbrw, MgffFamily>;

inline int family_dim(const YFamily& f) {
  if (auto* s = std::get_if<SyntheticMbrw>(&f)) return s->d;
  return 2;
}

inline std::string family_name(const YFamily& f) { return f.index() == 0 ? "synthetic" : "mgff"; }

// Analytic constant of the synthetic kernel: |Cov + log max(e,|x-y|)| <= C_d + log(sqrt d)
// and E(dY)^2 <= 2 |x-y|_1 / e <= 2 sqrt(d) |x-y| / e.
inline double synthetic_cy(int d) {
  return std::max(sandwich_constant(d) + 0.5 * std::log(static_cast<double>(d)), 2.0 * std::sqrt(static_cast<double>(d)));
}

// Y at a fixed scale e.
class FamilyEval {
 public:
  FamilyEval(const YFamily& f, double e) : fam_(f), e_(e) {
    if (!(e > 0.0 && e < 1.0)) throw DomainError("family: scale must lie in (0,1)");
    if (auto* g = std::get_if<MgffFamily>(&f)) {
      if (e > 0.5) throw DomainError("mgff family: scale must be <= 1/2");
      mg_.emplace(g->series, MollifierSpec{e / 2});
    }
  }

  double operator()(std::span<const double> x, std::span<const double> y) const {
    if (mg_) {
      const double qx[2] = {0.25 + 0.5 * x[0], 0.25 + 0.5 * x[1]};
      const double qy[2] = {0.25 + 0.5 * y[0], 0.25 + 0.5 * y[1]};
      return 0.5 * std::numbers::pi * (*mg_)(qx, qy);
    }
    double a[kMaxDim];
    const std::size_t d = x.size();
    for (std::size_t i = 0; i < d; ++i) a[i] = std::abs(x[i] - y[i]);
    const double T = std::log(1.0 / e_);
    return mbrw_cov_offsets<double>({a, d}, T, T);
  }

  double scale() const { return e_; }

 private:
  YFamily fam_;
  double e_;
  std::optional<MollifiedGreen> mg_;
};

struct CyMeasurement {
  double C_Y = 0.0;
  double max_deviation = 0.0;  // |Cov + log max(e, |x-y|)|
  double max_ratio = 0.0;      // E(dY)^2 e / |x-y| for |x-y| <= e
  std::size_t pairs = 0;
  std::vector<double> scales;
};

// Measures C_Y of the MGFF family through the bulk moment check on X at
// radius e/2: Cov Y + log max(e,|x-y|) = (pi/2) Cov X + log max(r, |q-q'|) + log 2,
// and the increment ratio scales by pi/2.
inline CyMeasurement measure_cy(const MgffFamily& f, const std::vector<double>& scales, std::size_t pairs_per_kind,
                                std::uint64_t seed) {
  CyMeasurement m;
  m.scales = scales;
  const double half_pi = 0.5 * std::numbers::pi;
  for (std::size_t s = 0; s < scales.size(); ++s) {
    const double e = scales[s];
    MollifiedGreen g(f.series, MollifierSpec{e / 2});
    MomentReport rep = moment_bound_check(g, 0.25, bulk_pairs(e / 2, 0.25, pairs_per_kind, seed, s));
    for (const MomentRow& row : rep.rows) {
      double dist = 2.0 * row.distance;
      double dev = std::abs(half_pi * row.cov + std::log(std::max(e, dist)));
      m.max_deviation = std::max(m.max_deviation, dev);
      if (row.ratio >= 0.0) m.max_ratio = std::max(m.max_ratio, half_pi * row.ratio);
    }
    m.pairs += rep.rows.size();
  }
  m.C_Y = std::max(m.max_deviation, m.max_ratio);
  return m;
}

struct AValue {
  bool feasible = false;
  double radicand = 0.0;  // Var Y - Var psi
  double value = 0.0;
};

inline AValue a_of_x(const YFamily& f, std::span<const double> x, double eps, double delta, double p) {
  const int d = family_dim(f);
  if (static_cast<int>(x.size()) != d) throw DomainError("a_of_x: dimension mismatch");
  if (!(delta > 0.0 && delta <= 1.0)) throw DomainError("a_of_x: delta must lie in (0,1]");
  FamilyEval Y(f, delta * eps);
  double dx[kMaxDim];
  for (int i = 0; i < d; ++i) dx[i] = delta * x[i];
  std::span<const double> sx(dx, static_cast<std::size_t>(d));
  AValue a;
  a.radicand = Y(sx, sx) - bsheet_cov(BrownianSheet{eps, p, d}, x, x);
  a.feasible = a.radicand >= 0.0;
  if (a.feasible) a.value = std::sqrt(a.radicand / std::log(1.0 / eps));
  return a;
}

struct BValue {
  double value = 0.0;
  bool in_range = false;  // 1 <= b <= 2
};

inline BValue b_of_u(const YFamily& f, std::span<const double> u, double eps, double delta) {
  if (!(delta > 0.0 && delta <= 1.0)) throw DomainError("b_of_u: delta must lie in (0,1]");
  FamilyEval Y(f, delta * eps);
  BValue b;
  b.value = std::sqrt(Y(u, u) / std::log(1.0 / eps));
  b.in_range = b.value >= 1.0 && b.value <= 2.0;
  return b;
}

enum class Side { right, left };

inline const char* to_string(Side s) { return s == Side::right ? "right" : "left"; }

// direct: the covariance/increment hypotheses compared head-on.
// chain: the intermediate bounds used to establish them.
// range: bookkeeping bounds outside the comparison itself.
enum class Role { direct, chain, range };

inline const char* to_string(Role r) {
  switch (r) {
    case Role::direct: return "direct";
    case Role::chain: return "chain";
    case Role::range: return "range";
  }
  return "?";
}

enum class Kind {
  // right
  delta_condition,
  p_condition,
  radicand,
  a_le_1,
  same_box_increment,
  y_increment,
  norm_step,
  sheet_increment,
  cross_box_cov,
  mbrw_upper,
  grid_step,
  y_logcorr_lower,
  // left
  b_ge_1,
  b_le_2,
  left_cov,
  y_logcorr_upper,
  left_shrink,
  mbrw_lower
};

inline const char* to_string(Kind k) {
  static const char* names[] = {"delta_condition", "p_condition",     "radicand",      "a_le_1",
                                "same_box_increment", "y_increment",  "norm_step",     "sheet_increment",
                                "cross_box_cov",   "mbrw_upper",      "grid_step",     "y_logcorr_lower",
                                "b_ge_1",          "b_le_2",          "left_cov",      "y_logcorr_upper",
                                "left_shrink",     "mbrw_lower"};
  return names[static_cast<int>(k)];
}

inline Role role_of(Kind k) {
  switch (k) {
    case Kind::radicand:
    case Kind::a_le_1:
    case Kind::same_box_increment:
    case Kind::cross_box_cov:
    case Kind::left_cov: return Role::direct;
    case Kind::b_le_2: return Role::range;
    default: return Role::chain;
  }
}

// lhs <= rhs is required
struct Inequality {
  Kind kind;
  std::uint32_t eps_index = 0;
  std::int64_t i = -1, j = -1;
  double lhs = 0.0, rhs = 0.0;
  double margin() const { return rhs - lhs; }
  double tolerance() const { return kMarginTol * std::max({1.0, std::abs(lhs), std::abs(rhs)}); }
  bool holds() const { return margin() >= -tolerance(); }
  static constexpr double kMarginTol = 1e-12;
};

struct ComparisonCertificate {
  Side side = Side::right;
  std::string family;
  FieldClassParams params;
  double delta = 0.0;
  double p_or_rho = 0.0;
  int resolution = 0;  // sub-box points per axis, right side only
  std::vector<double> eps_tested;
  std::vector<PointSet> point_sets;  // one per eps
  std::size_t points = 0, pairs = 0;
  bool exhaustive = true;
  bool degenerate = false;
  bool valid = false;         // every ledger inequality holds
  bool valid_direct = false;  // every direct inequality holds
  double min_margin = std::numeric_limits<double>::infinity();
  double min_margin_direct = std::numeric_limits<double>::infinity();
  std::size_t violations = 0;
  std::size_t candidates_scanned = 0;
  std::vector<Inequality> ledger;

  bool usable() const { return valid && !degenerate; }
};

struct CertifyOptions {
  std::vector<double> delta_grid;   // default {1, 1/2, ..., 2^-8}
  std::vector<double> second_grid;  // p: {1..8}; rho: {1, 1/2, ..., 2^-8}
  int resolution = 4;
  std::size_t pair_budget = 100000;
  std::uint64_t seed = 1;
  int threads = 1;
};

inline std::vector<double> dyadic_grid(int depth) {
  std::vector<double> g;
  for (int k = 0; k <= depth; ++k) g.push_back(std::ldexp(1.0, -k));
  return g;
}

namespace detail {

struct PairList {
  std::vector<std::pair<std::uint32_t, std::uint32_t>> pairs;
  bool exhaustive = true;
};

// Exhaustive when cheap (<= 64 points or all pairs within budget); otherwise
// half the budget from pairs sharing a group (same eps-box) and half uniform.
inline PairList choose_pairs(std::size_t n, const std::vector<std::size_t>& group, std::size_t budget,
                             std::uint64_t seed, std::uint64_t tag) {
  PairList pl;
  const std::size_t total = n * (n - 1) / 2;
  if (n <= 64 || total <= budget) {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) pl.pairs.emplace_back(i, j);
    return pl;
  }
  pl.exhaustive = false;
  Stream st(SeedSpec{seed, tag, "pairs"});
  std::vector<std::vector<std::uint32_t>> members;
  if (!group.empty()) {
    std::size_t ng = *std::max_element(group.begin(), group.end()) + 1;
    members.resize(ng);
    for (std::size_t i = 0; i < n; ++i) members[group[i]].push_back(static_cast<std::uint32_t>(i));
  }
  std::size_t same = members.empty() ? 0 : budget / 2;
  for (std::size_t k = 0; k < same; ++k) {
    const auto& m = members[st.below(members.size())];
    if (m.size() < 2) continue;
    auto a = st.below(m.size()), b = st.below(m.size() - 1);
    if (b >= a) ++b;
    pl.pairs.emplace_back(std::min(m[a], m[b]), std::max(m[a], m[b]));
  }
  while (pl.pairs.size() < budget) {
    auto a = st.below(n), b = st.below(n - 1);
    if (b >= a) ++b;
    pl.pairs.emplace_back(static_cast<std::uint32_t>(std::min(a, b)), static_cast<std::uint32_t>(std::max(a, b)));
  }
  return pl;
}

inline double norm2(std::span<const double> x, std::span<const double> y) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += (x[i] - y[i]) * (x[i] - y[i]);
  return std::sqrt(s);
}

inline double norm1(std::span<const double> x, std::span<const double> y) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += std::abs(x[i] - y[i]);
  return s;
}

inline void finalize(ComparisonCertificate& c) {
  c.valid = true;
  c.valid_direct = true;
  c.violations = 0;
  c.min_margin = c.min_margin_direct = std::numeric_limits<double>::infinity();
  for (const Inequality& q : c.ledger) {
    c.min_margin = std::min(c.min_margin, q.margin());
    bool ok = q.holds();
    if (!ok) {
      c.valid = false;
      ++c.violations;
    }
    if (role_of(q.kind) == Role::direct) {
      c.min_margin_direct = std::min(c.min_margin_direct, q.margin());
      if (!ok) c.valid_direct = false;
    }
  }
  c.degenerate = c.pairs == 0;
}

// sub-box points v + eps*j/res, row-major over the fine grid
inline PointSet subbox_points(int d, double eps, int res) {
  const int k = res > 0 ? static_cast<int>(std::lround(std::log2(res))) : -1;
  if (k < 0 || std::ldexp(1.0, k) != res) throw DomainError("certify: resolution must be a power of two");
  return Lattice(d, dyadic_exponent(eps) + k).points();
}

// scoring for the best invalid candidate: fewest violations, then largest min margin
inline bool better_invalid(const ComparisonCertificate& a, const ComparisonCertificate& b) {
  if (a.violations != b.violations) return a.violations < b.violations;
  return a.min_margin > b.min_margin;
}

}  // namespace detail

namespace detail {

// Everything on the right side that depends on eps alone.
struct RightGeometry {
  double eps = 0.0;
  Lattice lat{1, 0};
  PointSet pts;
  std::vector<std::size_t> box;
  PairList pl;
  std::vector<double> cxi, li;  // cross-box pairs: Cov xi([x],[y]) and -log|[x]-[y]|_inf
};

inline RightGeometry right_geometry(int d, double eps, std::size_t ei, const CertifyOptions& opt) {
  RightGeometry g;
  g.eps = eps;
  g.lat = Lattice(d, dyadic_exponent(eps));
  g.pts = subbox_points(d, eps, opt.resolution);
  const std::size_t n = g.pts.size();
  g.box.resize(n);
  for (std::size_t i = 0; i < n; ++i) g.box[i] = g.lat.box_index(g.pts[i]);
  g.pl = choose_pairs(n, g.box, opt.pair_budget, opt.seed, ei);
  g.cxi.assign(g.pl.pairs.size(), 0.0);
  g.li.assign(g.pl.pairs.size(), 0.0);
  Mbrw xi{d, eps};
  parallel_for(g.pl.pairs.size(), resolve_threads(opt.threads), [&](std::size_t k) {
    auto [i, j] = g.pl.pairs[k];
    if (g.box[i] == g.box[j]) return;
    auto vi = g.lat.floor_map(g.pts[i]), vj = g.lat.floor_map(g.pts[j]);
    g.cxi[k] = mbrw_cov(xi, vi, vj);
    g.li[k] = -std::log(sup_norm_distance(vi, vj));
  });
  return g;
}

struct YValues {
  std::vector<double> var;  // per point
  std::vector<double> cov;  // per pair
};

// Y at scale delta*eps; points are multiplied by `point_scale` first.
inline YValues y_values(const YFamily& f, double e, const PointSet& pts, const PairList& pl, double point_scale,
                        int threads) {
  FamilyEval Y(f, e);
  std::vector<double> sc(pts.coords);
  for (double& v : sc) v *= point_scale;
  PointSet dp(pts.d, std::move(sc));
  YValues out;
  out.var.resize(dp.size());
  out.cov.resize(pl.pairs.size());
  const int t = resolve_threads(threads);
  parallel_for(dp.size(), t, [&](std::size_t i) { out.var[i] = Y(dp[i], dp[i]); });
  parallel_for(pl.pairs.size(), t, [&](std::size_t k) { out.cov[k] = Y(dp[pl.pairs[k].first], dp[pl.pairs[k].second]); });
  return out;
}

inline void right_ledger(ComparisonCertificate& c, const RightGeometry& g, std::uint32_t ei, const YValues& y,
                         int threads) {
  const int d = g.pts.d;
  const double eps = g.eps, delta = c.delta, p = c.p_or_rho, pd = std::pow(p, d);
  const double L = std::log(1.0 / eps);
  const double c_grid = std::log(2.0 * std::sqrt(static_cast<double>(d)));
  const double CY = c.params.C_Y;
  const std::size_t n = g.pts.size();
  BrownianSheet sheet{eps, p, d};
  std::vector<double> varPsi(n), a(n);
  for (std::size_t i = 0; i < n; ++i) {
    varPsi[i] = bsheet_cov(sheet, g.pts[i], g.pts[i]);
    auto ii = static_cast<std::int64_t>(i);
    double rad = y.var[i] - varPsi[i];
    c.ledger.push_back({Kind::radicand, ei, ii, -1, varPsi[i], y.var[i]});
    a[i] = rad >= 0.0 ? std::sqrt(rad / L) : 0.0;
    if (rad >= 0.0) c.ledger.push_back({Kind::a_le_1, ei, ii, -1, rad / L, 1.0});
  }
  std::vector<std::array<Inequality, 4>> per(g.pl.pairs.size());
  std::vector<std::uint8_t> cnt(g.pl.pairs.size());
  parallel_for(g.pl.pairs.size(), resolve_threads(threads), [&](std::size_t k) {
    auto [i, j] = g.pl.pairs[k];
    auto ii = static_cast<std::int64_t>(i), jj = static_cast<std::int64_t>(j);
    double cy = y.cov[k];
    double r2 = norm2(g.pts[i], g.pts[j]);
    auto& out = per[k];
    std::uint8_t m = 0;
    if (g.box[i] == g.box[j]) {
      double dy2 = y.var[i] + y.var[j] - 2.0 * cy;
      double dpsi2 = varPsi[i] + varPsi[j] - 2.0 * bsheet_cov(sheet, g.pts[i], g.pts[j]);
      double r1 = norm1(g.pts[i], g.pts[j]);
      out[m++] = {Kind::same_box_increment, ei, ii, jj, dy2, (a[i] - a[j]) * (a[i] - a[j]) * L + dpsi2};
      if (r2 <= eps) out[m++] = {Kind::y_increment, ei, ii, jj, dy2, CY * r2 / eps};
      out[m++] = {Kind::norm_step, ei, ii, jj, CY * r2, pd * r1};
      out[m++] = {Kind::sheet_increment, ei, ii, jj, pd * r1 / eps, dpsi2};
    } else {
      out[m++] = {Kind::cross_box_cov, ei, ii, jj, a[i] * a[j] * g.cxi[k], cy};
      out[m++] = {Kind::mbrw_upper, ei, ii, jj, g.cxi[k], g.li[k]};
      out[m++] = {Kind::grid_step, ei, ii, jj, g.li[k], -std::log(std::max(eps, r2)) + c_grid};
      out[m++] = {Kind::y_logcorr_lower, ei, ii, jj, -std::log(delta * std::max(eps, r2)) - CY, cy};
    }
    cnt[k] = m;
  });
  for (std::size_t k = 0; k < per.size(); ++k) c.ledger.insert(c.ledger.end(), per[k].begin(), per[k].begin() + cnt[k]);
}

inline ComparisonCertificate right_shell(const FieldClassParams& params, const YFamily& f,
                                         const std::vector<double>& eps_list, double delta, double p,
                                         const CertifyOptions& opt) {
  ComparisonCertificate c;
  c.side = Side::right;
  c.family = family_name(f);
  c.params = params;
  c.delta = delta;
  c.p_or_rho = p;
  c.resolution = opt.resolution;
  c.eps_tested = eps_list;
  const int d = params.d;
  c.ledger.push_back({Kind::delta_condition, 0, -1, -1, std::log(2.0 * std::sqrt(double(d))) + params.C_Y,
                      std::log(1.0 / delta)});
  c.ledger.push_back({Kind::p_condition, 0, -1, -1, params.C_Y, std::pow(p, d)});
  return c;
}

// Everything on the left side that depends on (eps, rho) alone.
struct LeftGeometry {
  double eps = 0.0;
  PointSet pts;
  PairList pl;
  std::vector<double> cxi, up_log, lo;  // Cov xi(rho u, rho v), -log|u-v|, -log|rho(u-v)|_inf - C_d
};

inline LeftGeometry left_geometry(int d, double eps, double rho, std::size_t ei, const CertifyOptions& opt) {
  const int ne = dyadic_exponent(eps), nr = dyadic_exponent(rho);
  if (nr > ne) throw DomainError("certify_left: rho must be >= eps");
  LeftGeometry g;
  g.eps = eps;
  g.pts = Lattice(d, ne - nr).points();
  g.pl = choose_pairs(g.pts.size(), {}, opt.pair_budget, opt.seed, 1000 + ei);
  const std::size_t m = g.pl.pairs.size();
  g.cxi.resize(m);
  g.up_log.resize(m);
  g.lo.resize(m);
  Mbrw xi{d, eps};
  const double Cd = sandwich_constant(d);
  parallel_for(m, resolve_threads(opt.threads), [&](std::size_t k) {
    auto [i, j] = g.pl.pairs[k];
    double ru[kMaxDim], rv[kMaxDim];
    for (int t = 0; t < d; ++t) {
      ru[t] = rho * g.pts[i][t];
      rv[t] = rho * g.pts[j][t];
    }
    std::span<const double> su(ru, d), sv(rv, d);
    g.cxi[k] = mbrw_cov(xi, su, sv);
    g.up_log[k] = -std::log(norm2(g.pts[i], g.pts[j]));
    g.lo[k] = -std::log(sup_norm_distance(su, sv)) - Cd;
  });
  return g;
}

inline void left_ledger(ComparisonCertificate& c, const LeftGeometry& g, std::uint32_t ei, const YValues& y) {
  const double L = std::log(1.0 / g.eps);
  const double CY = c.params.C_Y;
  std::vector<double> b(g.pts.size());
  for (std::size_t i = 0; i < b.size(); ++i) {
    b[i] = std::sqrt(y.var[i] / L);
    auto ii = static_cast<std::int64_t>(i);
    c.ledger.push_back({Kind::b_ge_1, ei, ii, -1, 1.0, b[i]});
    c.ledger.push_back({Kind::b_le_2, ei, ii, -1, b[i], 2.0});
  }
  for (std::size_t k = 0; k < g.pl.pairs.size(); ++k) {
    auto [i, j] = g.pl.pairs[k];
    auto ii = static_cast<std::int64_t>(i), jj = static_cast<std::int64_t>(j);
    double up = g.up_log[k] + CY;
    c.ledger.push_back({Kind::left_cov, ei, ii, jj, y.cov[k], b[i] * b[j] * g.cxi[k]});
    c.ledger.push_back({Kind::y_logcorr_upper, ei, ii, jj, y.cov[k], up});
    c.ledger.push_back({Kind::left_shrink, ei, ii, jj, up, g.lo[k]});
    c.ledger.push_back({Kind::mbrw_lower, ei, ii, jj, g.lo[k], g.cxi[k]});
  }
}

inline ComparisonCertificate left_shell(const FieldClassParams& params, const YFamily& f,
                                        const std::vector<double>& eps_list, double delta, double rho) {
  ComparisonCertificate c;
  c.side = Side::left;
  c.family = family_name(f);
  c.params = params;
  c.delta = delta;
  c.p_or_rho = rho;
  c.eps_tested = eps_list;
  return c;
}

inline void check_params(const FieldClassParams& params, const YFamily& f, const char* what) {
  if (params.d != family_dim(f)) throw DomainError(std::string(what) + ": params.d does not match the family");
  if (!(params.C_Y >= 0.0)) throw DomainError(std::string(what) + ": C_Y must be non-negative");
}

// Keeps the first usable certificate, else the first degenerate valid one,
// else the least-violating one.
struct Search {
  std::optional<ComparisonCertificate> found, degenerate, best;
  std::size_t scanned = 0;

  bool offer(ComparisonCertificate&& c) {
    ++scanned;
    if (c.usable()) {
      found = std::move(c);
      return true;
    }
    if (c.valid) {
      if (!degenerate) degenerate = std::move(c);
    } else if (!best || better_invalid(c, *best)) {
      best = std::move(c);
    }
    return false;
  }

  ComparisonCertificate result() {
    ComparisonCertificate out = found ? std::move(*found)
                                : degenerate ? std::move(*degenerate)
                                : best ? std::move(*best)
                                       : ComparisonCertificate{};
    out.candidates_scanned = scanned;
    return out;
  }
};

}  // namespace detail

// Right-side certificate for a fixed (delta, p).
inline ComparisonCertificate evaluate_right(const FieldClassParams& params, const YFamily& f,
                                            const std::vector<double>& eps_list, double delta, double p,
                                            const CertifyOptions& opt) {
  detail::check_params(params, f, "certify_right");
  auto c = detail::right_shell(params, f, eps_list, delta, p, opt);
  for (std::size_t ei = 0; ei < eps_list.size(); ++ei) {
    auto g = detail::right_geometry(params.d, eps_list[ei], ei, opt);
    auto y = detail::y_values(f, delta * g.eps, g.pts, g.pl, delta, opt.threads);
    detail::right_ledger(c, g, static_cast<std::uint32_t>(ei), y, opt.threads);
    c.exhaustive = c.exhaustive && g.pl.exhaustive;
    c.points += g.pts.size();
    c.pairs += g.pl.pairs.size();
    c.point_sets.push_back(g.pts);
  }
  detail::finalize(c);
  return c;
}

// Left-side certificate for a fixed (delta, rho): points u in V_{eps/rho}.
inline ComparisonCertificate evaluate_left(const FieldClassParams& params, const YFamily& f,
                                           const std::vector<double>& eps_list, double delta, double rho,
                                           const CertifyOptions& opt) {
  detail::check_params(params, f, "certify_left");
  auto c = detail::left_shell(params, f, eps_list, delta, rho);
  for (std::size_t ei = 0; ei < eps_list.size(); ++ei) {
    auto g = detail::left_geometry(params.d, eps_list[ei], rho, ei, opt);
    auto y = detail::y_values(f, delta * g.eps, g.pts, g.pl, 1.0, opt.threads);
    detail::left_ledger(c, g, static_cast<std::uint32_t>(ei), y);
    c.exhaustive = c.exhaustive && g.pl.exhaustive;
    c.points += g.pts.size();
    c.pairs += g.pl.pairs.size();
    c.point_sets.push_back(g.pts);
  }
  detail::finalize(c);
  return c;
}

// Scans delta descending, then p ascending; returns the first usable
// certificate, else a degenerate valid one, else the least-violating one.
inline ComparisonCertificate certify_right(const FieldClassParams& params, const YFamily& f,
                                           const std::vector<double>& eps_list, CertifyOptions opt = {}) {
  if (eps_list.empty()) throw DomainError("certify_right: empty eps list");
  detail::check_params(params, f, "certify_right");
  if (opt.delta_grid.empty()) opt.delta_grid = dyadic_grid(8);
  if (opt.second_grid.empty()) opt.second_grid = {1, 2, 3, 4, 5, 6, 7, 8};
  std::sort(opt.delta_grid.begin(), opt.delta_grid.end(), std::greater<>());
  std::sort(opt.second_grid.begin(), opt.second_grid.end());
  std::vector<detail::RightGeometry> geo;
  for (std::size_t ei = 0; ei < eps_list.size(); ++ei) geo.push_back(detail::right_geometry(params.d, eps_list[ei], ei, opt));
  detail::Search s;
  for (double delta : opt.delta_grid) {
    std::vector<detail::YValues> ys;
    for (const auto& g : geo) ys.push_back(detail::y_values(f, delta * g.eps, g.pts, g.pl, delta, opt.threads));
    for (double p : opt.second_grid) {
      auto c = detail::right_shell(params, f, eps_list, delta, p, opt);
      for (std::size_t ei = 0; ei < geo.size(); ++ei) {
        detail::right_ledger(c, geo[ei], static_cast<std::uint32_t>(ei), ys[ei], opt.threads);
        c.exhaustive = c.exhaustive && geo[ei].pl.exhaustive;
        c.points += geo[ei].pts.size();
        c.pairs += geo[ei].pl.pairs.size();
        c.point_sets.push_back(geo[ei].pts);
      }
      detail::finalize(c);
      if (s.offer(std::move(c))) return s.result();
    }
  }
  return s.result();
}

// Scans delta descending, then rho descending; rho < eps is skipped.
inline ComparisonCertificate certify_left(const FieldClassParams& params, const YFamily& f,
                                          const std::vector<double>& eps_list, CertifyOptions opt = {}) {
  if (eps_list.empty()) throw DomainError("certify_left: empty eps list");
  detail::check_params(params, f, "certify_left");
  if (opt.delta_grid.empty()) opt.delta_grid = dyadic_grid(8);
  if (opt.second_grid.empty()) opt.second_grid = dyadic_grid(8);
  std::sort(opt.delta_grid.begin(), opt.delta_grid.end(), std::greater<>());
  std::sort(opt.second_grid.begin(), opt.second_grid.end(), std::greater<>());
  const double eps_min = *std::min_element(eps_list.begin(), eps_list.end());
  std::vector<double> rhos;
  for (double r : opt.second_grid)
    if (r >= eps_min) rhos.push_back(r);
  std::vector<std::vector<detail::LeftGeometry>> geo(rhos.size());
  detail::Search s;
  for (double delta : opt.delta_grid)
    for (std::size_t ri = 0; ri < rhos.size(); ++ri) {
      if (geo[ri].empty())
        for (std::size_t ei = 0; ei < eps_list.size(); ++ei)
          geo[ri].push_back(detail::left_geometry(params.d, eps_list[ei], rhos[ri], ei, opt));
      auto c = detail::left_shell(params, f, eps_list, delta, rhos[ri]);
      for (std::size_t ei = 0; ei < eps_list.size(); ++ei) {
        const auto& g = geo[ri][ei];
        auto y = detail::y_values(f, delta * g.eps, g.pts, g.pl, 1.0, opt.threads);
        detail::left_ledger(c, g, static_cast<std::uint32_t>(ei), y);
        c.exhaustive = c.exhaustive && g.pl.exhaustive;
        c.points += g.pts.size();
        c.pairs += g.pl.pairs.size();
        c.point_sets.push_back(g.pts);
      }
      detail::finalize(c);
      if (s.offer(std::move(c))) return s.result();
    }
  return s.result();
}

inline std::vector<Inequality> worst_offenders(const ComparisonCertificate& c, std::size_t k) {
  std::vector<Inequality> v = c.ledger;
  std::size_t m = std::min(k, v.size());
  std::partial_sort(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(m), v.end(),
                    [](const Inequality& a, const Inequality& b) { return a.margin() < b.margin(); });
  v.resize(m);
  return v;
}

// ---- independent re-evaluation ----

struct ReevalReport {
  std::size_t entries = 0, checked = 0, skipped = 0;
  std::size_t failures = 0;    // recomputed lhs or rhs disagrees with the ledger
  std::size_t violations = 0;  // recomputed inequality does not hold
  double max_abs_diff = 0.0;  // |lhs - lhs'| and |rhs - rhs'| over checked entries
  double min_margin = std::numeric_limits<double>::infinity();
  double tolerance = 0.0;
  bool agrees() const { return failures == 0 && skipped == 0; }
  bool holds() const { return agrees() && violations == 0; }
};

namespace detail {

// int_0^{min(T, -log max a)} prod (1 - e^r a_i) dr by Gauss-Kronrod
inline double mbrw_quadrature(std::span<const double> x, std::span<const double> y, double T) {
  double amax = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) amax = std::max(amax, std::abs(x[i] - y[i]));
  double top = amax > 0.0 ? std::min(T, -std::log(amax)) : T;
  if (!(top > 0.0)) return 0.0;
  auto f = [&](double r) {
    double prod = 1.0, er = std::exp(r);
    for (std::size_t i = 0; i < x.size(); ++i) prod *= std::max(0.0, 1.0 - er * std::abs(x[i] - y[i]));
    return prod;
  };
  return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, 0.0, top, 15, 1e-14);
}

// Brownian sheet quantities straight from the block map l(x) = p + p (x - [x]) / eps
inline double sheet_ref(std::span<const double> x, std::span<const double> y, double eps, double p) {
  double prod = 1.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double bx = std::floor(x[i] / eps + 1e-9) * eps, by = std::floor(y[i] / eps + 1e-9) * eps;
    if (std::abs(bx - by) > 0.5 * eps) return 0.0;
    double lx = p * (1.0 + (x[i] - bx) / eps), ly = p * (1.0 + (y[i] - by) / eps);
    prod *= lx < ly ? lx : ly;
  }
  return prod;
}

}  // namespace detail

// Smallest disk radius the N=400 analytic series resolves to ~2e-4 near the diagonal.
inline constexpr double kReevalMinRadius = 1.0 / 128;

// Recomputes every ledger inequality with separate numerics: Gauss-Kronrod
// quadrature for the synthetic and MBRW covariances, the analytic Bessel
// series for MGFF (radii below kReevalMinRadius are counted as skipped),
// and the sheet block map evaluated directly. MGFF entries get an absolute
// allowance `mgff_tol` for series truncation.
inline ReevalReport reevaluate(const ComparisonCertificate& c, const YFamily& f, double tol = 1e-9,
                               double mgff_tol = 1e-3) {
  ReevalReport r;
  r.tolerance = tol;
  r.entries = c.ledger.size();
  const int d = family_dim(f);
  const double delta = c.delta;
  const bool mgff = std::holds_alternative<MgffFamily>(f);
  const bool right = c.side == Side::right;
  const double Cd = sandwich_constant(d);
  const double CY = c.params.C_Y;
  const double p = c.p_or_rho, rho = c.p_or_rho;
  const double pd = std::pow(p, d);
  const double c_grid = std::log(2.0 * std::sqrt(static_cast<double>(d)));
  using Key = std::pair<std::int64_t, std::int64_t>;
  for (std::size_t ei = 0; ei < c.eps_tested.size(); ++ei) {
    const double eps = c.eps_tested[ei];
    const double e = delta * eps;
    const double L = std::log(1.0 / eps);
    const PointSet& pts = c.point_sets[ei];
    std::optional<MollifiedGreen> mg;
    const bool resolvable = !mgff || e / 2 >= kReevalMinRadius;
    if (mgff && resolvable) {
      MollifierSpec m{e / 2};
      m.route = MollifierRoute::analytic;
      mg.emplace(std::get<MgffFamily>(f).series, m);
    }
    const double point_scale = right ? delta : 1.0;
    std::map<Key, double> cov_cache, xi_cache;
    auto covY = [&](std::int64_t i, std::int64_t j) {
      auto [it, fresh] = cov_cache.try_emplace({i, j}, 0.0);
      if (!fresh) return it->second;
      std::vector<double> sx(pts[i].begin(), pts[i].end()), sy(pts[j].begin(), pts[j].end());
      for (int t = 0; t < d; ++t) {
        sx[t] *= point_scale;
        sy[t] *= point_scale;
      }
      if (mg) {
        double qx[2] = {0.25 + 0.5 * sx[0], 0.25 + 0.5 * sx[1]}, qy[2] = {0.25 + 0.5 * sy[0], 0.25 + 0.5 * sy[1]};
        it->second = 0.5 * std::numbers::pi * (*mg)(qx, qy);
      } else {
        it->second = detail::mbrw_quadrature(sx, sy, std::log(1.0 / e));
      }
      return it->second;
    };
    auto corner = [&](std::span<const double> x) {
      std::vector<double> v(x.size());
      for (std::size_t t = 0; t < x.size(); ++t) v[t] = std::floor(x[t] / eps + 1e-9) * eps;
      return v;
    };
    // Cov xi at the box corners (right) or at the rho-shrunk points (left)
    auto covXi = [&](std::int64_t i, std::int64_t j) {
      auto [it, fresh] = xi_cache.try_emplace({i, j}, 0.0);
      if (!fresh) return it->second;
      std::vector<double> u, v;
      if (right) {
        u = corner(pts[i]);
        v = corner(pts[j]);
      } else {
        u.assign(pts[i].begin(), pts[i].end());
        v.assign(pts[j].begin(), pts[j].end());
        for (int t = 0; t < d; ++t) {
          u[t] *= rho;
          v[t] *= rho;
        }
      }
      it->second = detail::mbrw_quadrature(u, v, L);
      return it->second;
    };
    auto psi = [&](std::int64_t i, std::int64_t j) { return detail::sheet_ref(pts[i], pts[j], eps, p); };
    auto a_of = [&](std::int64_t k) {
      double rad = covY(k, k) - psi(k, k);
      return rad >= 0.0 ? std::sqrt(rad / L) : 0.0;
    };
    auto uses_y = [](Kind k) {
      switch (k) {
        case Kind::radicand:
        case Kind::a_le_1:
        case Kind::same_box_increment:
        case Kind::y_increment:
        case Kind::cross_box_cov:
        case Kind::y_logcorr_lower:
        case Kind::b_ge_1:
        case Kind::b_le_2:
        case Kind::left_cov:
        case Kind::y_logcorr_upper: return true;
        default: return false;
      }
    };
    for (const Inequality& q : c.ledger) {
      if (q.eps_index != ei) continue;
      if (!resolvable && uses_y(q.kind)) {
        ++r.skipped;
        continue;
      }
      const std::int64_t i = q.i, j = q.j;
      double lhs = 0.0, rhs = 0.0;
      switch (q.kind) {
        case Kind::delta_condition:
          if (ei != 0) continue;
          lhs = c_grid + CY;
          rhs = -std::log(delta);
          break;
        case Kind::p_condition:
          if (ei != 0) continue;
          lhs = CY;
          rhs = pd;
          break;
        case Kind::radicand:
          lhs = psi(i, i);
          rhs = covY(i, i);
          break;
        case Kind::a_le_1:
          lhs = (covY(i, i) - psi(i, i)) / L;
          rhs = 1.0;
          break;
        case Kind::same_box_increment: {
          double ai = a_of(i), aj = a_of(j);
          lhs = covY(i, i) + covY(j, j) - 2.0 * covY(i, j);
          rhs = (ai - aj) * (ai - aj) * L + psi(i, i) + psi(j, j) - 2.0 * psi(i, j);
          break;
        }
        case Kind::y_increment:
          lhs = covY(i, i) + covY(j, j) - 2.0 * covY(i, j);
          rhs = CY * detail::norm2(pts[i], pts[j]) / eps;
          break;
        case Kind::norm_step:
          lhs = CY * detail::norm2(pts[i], pts[j]);
          rhs = pd * detail::norm1(pts[i], pts[j]);
          break;
        case Kind::sheet_increment:
          lhs = pd * detail::norm1(pts[i], pts[j]) / eps;
          rhs = psi(i, i) + psi(j, j) - 2.0 * psi(i, j);
          break;
        case Kind::cross_box_cov:
          lhs = a_of(i) * a_of(j) * covXi(i, j);
          rhs = covY(i, j);
          break;
        case Kind::mbrw_upper:
          lhs = covXi(i, j);
          rhs = -std::log(sup_norm_distance(corner(pts[i]), corner(pts[j])));
          break;
        case Kind::grid_step:
          lhs = -std::log(sup_norm_distance(corner(pts[i]), corner(pts[j])));
          rhs = -std::log(std::max(eps, detail::norm2(pts[i], pts[j]))) + c_grid;
          break;
        case Kind::y_logcorr_lower:
          lhs = -std::log(delta * std::max(eps, detail::norm2(pts[i], pts[j]))) - CY;
          rhs = covY(i, j);
          break;
        case Kind::b_ge_1:
          lhs = 1.0;
          rhs = std::sqrt(covY(i, i) / L);
          break;
        case Kind::b_le_2:
          lhs = std::sqrt(covY(i, i) / L);
          rhs = 2.0;
          break;
        case Kind::left_cov:
          lhs = covY(i, j);
          rhs = std::sqrt(covY(i, i) / L) * std::sqrt(covY(j, j) / L) * covXi(i, j);
          break;
        case Kind::y_logcorr_upper:
          lhs = covY(i, j);
          rhs = -std::log(detail::norm2(pts[i], pts[j])) + CY;
          break;
        case Kind::left_shrink:
          lhs = -std::log(detail::norm2(pts[i], pts[j])) + CY;
          rhs = -std::log(rho * sup_norm_distance(pts[i], pts[j])) - Cd;
          break;
        case Kind::mbrw_lower:
          lhs = -std::log(rho * sup_norm_distance(pts[i], pts[j])) - Cd;
          rhs = covXi(i, j);
          break;
      }
      ++r.checked;
      r.max_abs_diff = std::max({r.max_abs_diff, std::abs(lhs - q.lhs), std::abs(rhs - q.rhs)});
      double m = rhs - lhs;
      r.min_margin = std::min(r.min_margin, m);
      double allow = tol * std::max({1.0, std::abs(lhs), std::abs(rhs)}) + (mgff && uses_y(q.kind) ? mgff_tol : 0.0);
      if (std::max(std::abs(lhs - q.lhs), std::abs(rhs - q.rhs)) > allow) ++r.failures;
      if (m < -allow) ++r.violations;
    }
  }
  return r;
}

}  // namespace logfield
