#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <numbers>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "logfield/kernels.hpp"
#include "logfield/matrix.hpp"
#include "logfield/rng.hpp"
#include "logfield/samplers.hpp"

namespace logfield {

struct MaxStat {
  double value = 0.0;
  std::size_t index = 0;
};

// ties go to the lowest index
inline MaxStat max_statistic(std::span<const double> v) {
  if (v.empty()) throw DomainError("max_statistic: empty sample");
  MaxStat m{v[0], 0};
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > m.value) m = {v[i], i};
  return m;
}

inline MaxStat max_statistic(const FieldSample& s) { return max_statistic(s.values); }

struct Recentering {
  double value = 0.0;
  double eps = 0.0;  // scale fed to m_eps
  int d = 1;
  double factor = 1.0;
  std::string rule;  // "m_eps" or "sqrt(2/pi)*m_eps"
};

// MGFF and whole-plane fields are indexed by the bulk square [1/4, 3/4)^2:
// point 1/4 + x/2 for x in V_eps, disk radius eps/2. The kernel carries the
// radius, so eps = 2 * radius here.
inline double bulk_field_eps(const KernelSpec& k) {
  if (auto* g = std::get_if<Mgff>(&k)) return 2.0 * g->mollifier.eps;
  if (auto* w = std::get_if<WholePlaneLog>(&k)) return 2.0 * w->eps;
  throw DomainError("bulk_field_eps: kernel is not indexed by the bulk square");
}

inline PointSet bulk_points(double eps) {
  Lattice lat(2, dyadic_exponent(eps));
  PointSet p = lat.points();
  for (double& c : p.coords) c = 0.25 + 0.5 * c;
  return p;
}

inline Recentering recentering(const KernelSpec& k) {
  Recentering r;
  std::visit(
      [&](const auto& s) {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, Mgff> || std::is_same_v<T, WholePlaneLog>) {
          r.eps = bulk_field_eps(k);
          r.d = 2;
          r.factor = std::sqrt(2.0 / std::numbers::pi);
          r.rule = "sqrt(2/pi)*m_eps";
        } else if constexpr (std::is_same_v<T, Brw>) {
          r.eps = s.eps();
          r.d = s.d;
          r.rule = "m_eps";
        } else {
          r.eps = s.eps;
          r.d = s.d;
          r.rule = "m_eps";
        }
      },
      k);
  r.value = r.factor * m_eps(r.d, r.eps);
  return r;
}

// Points on which the maximum is taken.
inline PointSet field_points(const KernelSpec& k) {
  return std::visit(
      [&](const auto& s) -> PointSet {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, Mgff> || std::is_same_v<T, WholePlaneLog>) return bulk_points(bulk_field_eps(k));
        else return s.lattice().points();
      },
      k);
}

struct SamplerChoice {
  Method method = Method::cholesky;
  HierarchicalConfig hierarchical{};
  int sheet_resolution = 2;
};

inline std::unique_ptr<FieldSampler> make_sampler(const KernelSpec& k, const SamplerChoice& c, int threads = 1) {
  switch (c.method) {
    case Method::cholesky:
      return std::make_unique<CholeskySampler>(kernel_matrix(k, field_points(k), threads));
    case Method::tree:
      if (auto* b = std::get_if<Brw>(&k)) return std::make_unique<BrwTreeSampler>(b->n, b->d);
      throw DomainError("tree sampler requires the brw kernel");
    case Method::hierarchical:
      if (auto* m = std::get_if<Mbrw>(&k)) return std::make_unique<HierarchicalMbrwSampler>(*m, c.hierarchical);
      throw DomainError("hierarchical sampler requires the mbrw kernel");
    case Method::sheet_grid:
      if (auto* b = std::get_if<BrownianSheet>(&k))
        return std::make_unique<BrownianSheetSampler>(*b, c.sheet_resolution);
      throw DomainError("sheet_grid sampler requires the bsheet kernel");
  }
  throw DomainError("unknown sampler method");
}

struct MaximaRun {
  std::vector<double> maxima;
  std::vector<std::size_t> argmax;
  Recentering rec;
  Method method = Method::cholesky;
  std::size_t points = 0;
};

// Replica r uses SeedSpec{master, first + r, label}.
inline MaximaRun run_maxima(const FieldSampler& s, const Recentering& rec, std::size_t M, const SeedSpec& seed,
                            int threads = 1) {
  MaximaRun out;
  out.maxima.resize(M);
  out.argmax.resize(M);
  out.rec = rec;
  out.method = s.method();
  out.points = s.size();
  const std::uint64_t first = seed.replica_index;
  // draw_batch indexes replicas from `first`; shift through a wrapper range
  const std::size_t w = s.batch_width(), n = s.size();
  const std::size_t nb = (M + w - 1) / w;
  parallel_for(nb, resolve_threads(threads), [&](std::size_t b) {
    std::size_t lo = b * w, count = std::min(w, M - lo);
    std::vector<double> buf(n * count);
    s.draw_batch(seed.master_seed, seed.stream_label, first + lo, count, buf.data());
    for (std::size_t c = 0; c < count; ++c) {
      MaxStat m = max_statistic(std::span<const double>(buf.data() + c * n, n));
      out.maxima[lo + c] = m.value;
      out.argmax[lo + c] = m.index;
    }
  });
  return out;
}

inline MaximaRun run_maxima(const KernelSpec& k, const SamplerChoice& c, std::size_t M, const SeedSpec& seed,
                            int threads = 1) {
  auto s = make_sampler(k, c, threads);
  return run_maxima(*s, recentering(k), M, seed, threads);
}

// ---- binomial intervals, isotonic projection, rate fit ----

struct Interval {
  double lo = 0.0, hi = 1.0;
};

inline constexpr double kZ95 = 1.959963984540054;

inline Interval wilson(std::size_t k, std::size_t n, double z = kZ95) {
  if (n == 0) return {0.0, 1.0};
  const double nn = static_cast<double>(n), p = static_cast<double>(k) / nn, z2 = z * z;
  const double denom = 1.0 + z2 / nn;
  const double centre = (p + z2 / (2 * nn)) / denom;
  const double half = z / denom * std::sqrt(p * (1 - p) / nn + z2 / (4 * nn * nn));
  // the endpoints are exact at k = 0 and k = n; do not leave rounding residue
  return {k == 0 ? 0.0 : std::max(0.0, centre - half), k == n ? 1.0 : std::min(1.0, centre + half)};
}

// Least-squares nonincreasing fit (pool adjacent violators, equal weights).
inline std::vector<double> isotonic_nonincreasing(const std::vector<double>& y) {
  struct Block {
    double sum;
    std::size_t n;
  };
  std::vector<Block> st;
  for (double v : y) {
    st.push_back({v, 1});
    while (st.size() > 1) {
      auto& a = st[st.size() - 2];
      auto& b = st.back();
      if (a.sum / a.n >= b.sum / b.n) break;
      a.sum += b.sum;
      a.n += b.n;
      st.pop_back();
    }
  }
  std::vector<double> out;
  out.reserve(y.size());
  for (auto& b : st) out.insert(out.end(), b.n, b.sum / b.n);
  return out;
}

struct LineFit {
  double slope = 0.0, intercept = 0.0;
};

inline LineFit ols(std::span<const double> x, std::span<const double> y) {
  const std::size_t n = x.size();
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  LineFit f;
  f.slope = sxx > 0 ? sxy / sxx : 0.0;
  f.intercept = my - f.slope * mx;
  return f;
}

struct TailCurve {
  std::vector<std::size_t> count;
  std::vector<double> raw;  // count / M
  std::vector<double> iso;  // nonincreasing projection of raw
  std::vector<double> lo, hi;
  std::size_t flagged = 0;  // projection moved a fitted-window value by more than its CI half-width
};

struct RateFit {
  bool ok = false;
  double rate = 0.0;  // -slope of log P against lambda
  double intercept = 0.0;
  double ci_lo = 0.0, ci_hi = 0.0;
  std::size_t points = 0;
  double lambda_lo = 0.0, lambda_hi = 0.0;
  bool excludes_zero() const { return ok && ci_lo > 0.0; }
};

struct TailOptions {
  std::size_t bootstrap = 400;
  std::uint64_t bootstrap_seed = 0x5eed;
  double window_lo_count = 10.0;  // window lower end is this many replicas over M
  double window_hi = 0.2;
  bool force = false;  // allow lambda beyond the observed range
};

struct TailEstimate {
  std::vector<double> lambda_grid;
  TailCurve right, left;
  RateFit right_rate, left_rate;
  double m_ref = 0.0;
  std::string recentering;
  std::size_t replicas = 0;
};

// step 0.1 from 0 to the largest |max - m_ref| observed
inline std::vector<double> auto_lambda_grid(std::span<const double> maxima, double m_ref, double step = 0.1) {
  double top = 0.0;
  for (double x : maxima) top = std::max(top, std::abs(x - m_ref));
  std::vector<double> g;
  for (int k = 0; k * step <= top; ++k) g.push_back(k * step);
  return g;
}

namespace detail {

inline std::vector<std::size_t> tail_counts(std::span<const double> delta, const std::vector<double>& lambda, bool right) {
  std::vector<std::size_t> c(lambda.size(), 0);
  for (double x : delta)
    for (std::size_t j = 0; j < lambda.size(); ++j)
      if (right ? x >= lambda[j] : x <= -lambda[j]) ++c[j];
  return c;
}

inline TailCurve build_curve(std::span<const double> delta, const std::vector<double>& lambda, bool right) {
  TailCurve t;
  const std::size_t M = delta.size();
  t.count = tail_counts(delta, lambda, right);
  for (std::size_t c : t.count) {
    t.raw.push_back(static_cast<double>(c) / M);
    Interval w = wilson(c, M);
    t.lo.push_back(w.lo);
    t.hi.push_back(w.hi);
  }
  t.iso = isotonic_nonincreasing(t.raw);
  return t;
}

inline std::vector<std::size_t> fit_window(const TailCurve& t, std::size_t M, const TailOptions& o) {
  std::vector<std::size_t> idx;
  const double lo = o.window_lo_count / static_cast<double>(M);
  for (std::size_t j = 0; j < t.iso.size(); ++j)
    if (t.iso[j] >= lo && t.iso[j] <= o.window_hi && t.iso[j] > 0.0) idx.push_back(j);
  return idx;
}

inline double window_rate(const std::vector<double>& lambda, const std::vector<std::size_t>& win,
                          const std::vector<double>& iso, std::size_t M) {
  std::vector<double> x, y;
  const double floor = 0.5 / static_cast<double>(M);
  for (std::size_t j : win) {
    x.push_back(lambda[j]);
    y.push_back(std::log(std::max(iso[j], floor)));
  }
  return -ols(x, y).slope;
}

inline double quantile_sorted(const std::vector<double>& v, double q) {
  if (v.empty()) return 0.0;
  double pos = q * static_cast<double>(v.size() - 1);
  auto i = static_cast<std::size_t>(std::floor(pos));
  double f = pos - static_cast<double>(i);
  if (i + 1 >= v.size()) return v.back();
  return v[i] * (1 - f) + v[i + 1] * f;
}

}  // namespace detail

// Tail curves and fitted exponential rates from recentered maxima. Rate CIs
// come from a percentile bootstrap over replicas with the window held fixed.
inline TailEstimate tail_from_maxima(std::span<const double> maxima, double m_ref, std::vector<double> lambda,
                                     const TailOptions& opt = {}) {
  const std::size_t M = maxima.size();
  if (M < 100) throw DomainError("tail_estimate: need at least 100 replicas");
  if (lambda.empty()) lambda = auto_lambda_grid(maxima, m_ref);
  for (std::size_t j = 0; j < lambda.size(); ++j) {
    if (lambda[j] < 0.0) throw DomainError("tail_estimate: lambda must be nonnegative");
    if (j && !(lambda[j] > lambda[j - 1])) throw DomainError("tail_estimate: lambda grid must be increasing");
  }
  std::vector<double> delta(M);
  for (std::size_t i = 0; i < M; ++i) delta[i] = maxima[i] - m_ref;
  TailEstimate te;
  te.lambda_grid = lambda;
  te.m_ref = m_ref;
  te.replicas = M;
  te.right = detail::build_curve(delta, lambda, true);
  te.left = detail::build_curve(delta, lambda, false);
  if (!opt.force && te.right.count.back() == 0 && te.left.count.back() == 0)
    throw DomainError("tail_estimate: lambda grid extends beyond resolvable probabilities (< 1/M); pass force");

  auto fit = [&](TailCurve& t, bool right) {
    RateFit rf;
    auto win = detail::fit_window(t, M, opt);
    for (std::size_t j : win)
      if (std::abs(t.iso[j] - t.raw[j]) > 0.5 * (t.hi[j] - t.lo[j])) ++t.flagged;
    rf.points = win.size();
    if (win.size() < 3) return rf;
    rf.lambda_lo = lambda[win.front()];
    rf.lambda_hi = lambda[win.back()];
    {
      std::vector<double> x, y;
      for (std::size_t j : win) {
        x.push_back(lambda[j]);
        y.push_back(std::log(t.iso[j]));
      }
      LineFit f = ols(x, y);
      rf.rate = -f.slope;
      rf.intercept = f.intercept;
    }
    std::vector<double> wl;
    for (std::size_t j : win) wl.push_back(lambda[j]);
    std::vector<double> rates;
    std::vector<double> res(M);
    for (std::size_t b = 0; b < opt.bootstrap; ++b) {
      Stream st(SeedSpec{opt.bootstrap_seed, b, right ? "boot_right" : "boot_left"});
      for (std::size_t i = 0; i < M; ++i) res[i] = delta[st.below(M)];
      auto c = detail::tail_counts(res, wl, right);
      std::vector<double> p(c.size());
      for (std::size_t j = 0; j < c.size(); ++j) p[j] = static_cast<double>(c[j]) / M;
      p = isotonic_nonincreasing(p);
      std::vector<std::size_t> all(p.size());
      std::iota(all.begin(), all.end(), 0);
      rates.push_back(detail::window_rate(wl, all, p, M));
    }
    std::sort(rates.begin(), rates.end());
    rf.ci_lo = detail::quantile_sorted(rates, 0.025);
    rf.ci_hi = detail::quantile_sorted(rates, 0.975);
    rf.ok = true;
    return rf;
  };
  te.right_rate = fit(te.right, true);
  te.left_rate = fit(te.left, false);
  return te;
}

inline TailEstimate tail_estimate(const KernelSpec& k, const SamplerChoice& c, std::size_t M,
                                  const std::vector<double>& lambda, const SeedSpec& seed, int threads = 1,
                                  const TailOptions& opt = {}) {
  if (M < 100) throw DomainError("tail_estimate: need at least 100 replicas");
  MaximaRun run = run_maxima(k, c, M, seed, threads);
  TailEstimate te = tail_from_maxima(run.maxima, run.rec.value, lambda, opt);
  te.recentering = run.rec.rule;
  return te;
}

struct LowerBound {
  double p = 0.0;
  Interval ci;
  std::size_t count = 0, replicas = 0;
  double floor = 0.01;
  bool ok() const { return ci.lo > floor; }
};

inline LowerBound lower_bound_from_maxima(std::span<const double> maxima, double m_ref, double floor = 0.01) {
  LowerBound lb;
  lb.replicas = maxima.size();
  lb.floor = floor;
  for (double x : maxima)
    if (x - m_ref >= 0.0) ++lb.count;
  lb.p = lb.replicas ? static_cast<double>(lb.count) / lb.replicas : 0.0;
  lb.ci = wilson(lb.count, lb.replicas);
  return lb;
}

inline LowerBound lower_bound_check(const KernelSpec& k, const SamplerChoice& c, std::size_t M, const SeedSpec& seed,
                                    int threads = 1) {
  if (!std::holds_alternative<Mbrw>(k)) throw DomainError("lower_bound_check: kernel must be mbrw");
  MaximaRun run = run_maxima(k, c, M, seed, threads);
  return lower_bound_from_maxima(run.maxima, run.rec.value);
}

struct MeanSE {
  double mean = 0.0, se = 0.0;
};

inline MeanSE mean_se(std::span<const double> x) {
  const std::size_t n = x.size();
  if (n < 2) throw DomainError("mean_se: need at least 2 values");
  double m = 0.0;
  for (double v : x) m += v;
  m /= n;
  double ss = 0.0;
  for (double v : x) ss += (v - m) * (v - m);
  return {m, std::sqrt(ss / (n - 1) / n)};
}

struct GapEntry {
  double eps = 0.0;
  double mean_max = 0.0, se = 0.0;
  double m_ref = 0.0;
  double gap = 0.0;  // mean_max - m_ref
};

struct MaxSummary {
  std::vector<GapEntry> sweep;  // decreasing eps
  double slack = 1.0;
  // max |gap| <= |gap(coarsest)| + 3 * pooled SE + slack
  double bounded_lhs = 0.0, bounded_rhs = 0.0;
  bool bounded = false;
  // band: max |gap| - min |gap| <= slack + 3 * SE of that difference
  double band = 0.0, band_limit = 0.0;
  bool flat = false;
};

inline MaxSummary summarize_gaps(std::vector<GapEntry> sweep, double slack = 1.0) {
  if (sweep.empty()) throw DomainError("expectation_gap: empty sweep");
  std::stable_sort(sweep.begin(), sweep.end(), [](const GapEntry& a, const GapEntry& b) { return a.eps > b.eps; });
  MaxSummary s;
  s.sweep = sweep;
  s.slack = slack;
  double pooled = 0.0;
  std::size_t imax = 0, imin = 0;
  for (std::size_t i = 0; i < sweep.size(); ++i) {
    pooled += sweep[i].se * sweep[i].se;
    if (std::abs(sweep[i].gap) > std::abs(sweep[imax].gap)) imax = i;
    if (std::abs(sweep[i].gap) < std::abs(sweep[imin].gap)) imin = i;
  }
  pooled = std::sqrt(pooled / sweep.size());
  s.bounded_lhs = std::abs(sweep[imax].gap);
  s.bounded_rhs = std::abs(sweep.front().gap) + 3.0 * pooled + slack;
  s.bounded = s.bounded_lhs <= s.bounded_rhs;
  s.band = std::abs(sweep[imax].gap) - std::abs(sweep[imin].gap);
  s.band_limit = slack + 3.0 * std::hypot(sweep[imax].se, sweep[imin].se);
  s.flat = s.band <= s.band_limit;
  return s;
}

inline GapEntry gap_entry(std::span<const double> maxima, const Recentering& rec) {
  MeanSE ms = mean_se(maxima);
  return {rec.eps, ms.mean, ms.se, rec.value, ms.mean - rec.value};
}

inline MaxSummary expectation_gap(const std::vector<KernelSpec>& sweep, const SamplerChoice& c, std::size_t M,
                                  const SeedSpec& seed, int threads = 1, double slack = 1.0) {
  std::vector<GapEntry> g;
  for (const auto& k : sweep) {
    MaximaRun run = run_maxima(k, c, M, seed, threads);
    g.push_back(gap_entry(run.maxima, run.rec));
  }
  return summarize_gaps(std::move(g), slack);
}

struct BarrierEstimate {
  double T = 0.0;
  int steps_per_unit = 0;
  std::size_t replicas = 0, hits = 0;
  double p = 0.0, se = 0.0;
  Interval ci;
  double scaled = 0.0;  // T^{3/2} p
};

// P(W_t <= 1 at every grid time t <= T, W_T >= 0) for a random walk with
// N(0, 1/steps_per_unit) steps.
inline BarrierEstimate barrier_probability(double T, int steps_per_unit, std::size_t M, const SeedSpec& seed,
                                           int threads = 1) {
  if (!(T > 0.0)) throw DomainError("barrier_probability: T must be positive");
  if (steps_per_unit < 1) throw DomainError("barrier_probability: steps_per_unit must be >= 1");
  if (M == 0) throw DomainError("barrier_probability: M must be positive");
  const auto steps = static_cast<std::size_t>(std::llround(T * steps_per_unit));
  const double sd = std::sqrt(1.0 / steps_per_unit);
  constexpr std::size_t kChunk = 1024;
  const std::size_t nc = (M + kChunk - 1) / kChunk;
  std::vector<std::size_t> hits(nc, 0);
  parallel_for(nc, resolve_threads(threads), [&](std::size_t c) {
    std::size_t lo = c * kChunk, hi = std::min(M, lo + kChunk), h = 0;
    for (std::size_t r = lo; r < hi; ++r) {
      Stream st(SeedSpec{seed.master_seed, seed.replica_index + r, seed.stream_label});
      double w = 0.0;
      bool alive = true;
      for (std::size_t k = 0; k < steps && alive; ++k) {
        w += sd * st.normal();
        alive = w <= 1.0;
      }
      if (alive && w >= 0.0) ++h;
    }
    hits[c] = h;
  });
  BarrierEstimate b;
  b.T = T;
  b.steps_per_unit = steps_per_unit;
  b.replicas = M;
  b.hits = std::accumulate(hits.begin(), hits.end(), std::size_t{0});
  b.p = static_cast<double>(b.hits) / M;
  b.se = std::sqrt(b.p * (1 - b.p) / M);
  b.ci = wilson(b.hits, M);
  b.scaled = std::pow(T, 1.5) * b.p;
  return b;
}

}  // namespace logfield
