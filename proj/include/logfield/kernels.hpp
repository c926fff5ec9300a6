#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <variant>

#include "logfield/green.hpp"
#include "logfield/lattice.hpp"

namespace logfield {

// m_eps = sqrt(2d) log(1/eps) - 3/(2 sqrt(2d)) log log(1/eps)
template <class Real = double>
Real m_eps(int d, Real eps) {
  using std::log;
  using std::sqrt;
  if (d < 1) throw DomainError("m_eps: d must be >= 1");
  if (!(eps > Real(0)) || !(eps < Real(1) / std::numbers::e_v<double>))
    throw DomainError("m_eps: eps must lie in (0, 1/e)");
  Real L = log(Real(1) / eps);
  Real s = sqrt(Real(2 * d));
  return s * L - Real(3) / (Real(2) * s) * log(L);
}

// C_d = sum_{k=1}^d binom(d,k)/k
inline double sandwich_constant(int d) {
  double c = 0.0, binom = 1.0;
  for (int k = 1; k <= d; ++k) {
    binom = binom * (d - k + 1) / k;
    c += binom / k;
  }
  return c;
}

// Covariance of the MBRW from per-coordinate offsets a_i = |v_i - u_i|:
// integral over [0, min(t,s)] of prod_i (1 - e^r a_i)_+ dr, evaluated by
// the subset expansion.
template <class Real = double>
Real mbrw_cov_offsets(std::span<const Real> a, Real t, Real s) {
  using std::expm1;
  using std::log;
  const int d = static_cast<int>(a.size());
  if (d < 1 || d > kMaxDim) throw DomainError("mbrw_cov: d must be in [1, 6]");
  Real amax = 0;
  for (const Real& ai : a) amax = std::max(amax, ai);
  Real r = std::min(t, s);
  if (amax > Real(0)) r = std::min(r, -log(amax));
  if (!(r > Real(0))) return Real(0);
  Real phi[kMaxDim + 1];
  phi[0] = r;
  for (int k = 1; k <= d; ++k) phi[k] = expm1(Real(k) * r) / Real(k);
  Real total = 0;
  for (unsigned mask = 0; mask < (1u << d); ++mask) {
    Real prod = 1;
    for (int i = 0; i < d; ++i)
      if (mask & (1u << i)) prod *= a[i];
    int k = std::popcount(mask);
    total += (k % 2 ? -prod : prod) * phi[k];
  }
  return total;
}

struct Mbrw {
  int d = 1;
  double eps = 1.0 / 16;
  double horizon() const { return std::log(1.0 / eps); }
  Lattice lattice() const { return Lattice(d, dyadic_exponent(eps)); }
};

struct Brw {
  int n = 4;
  int d = 1;
  double eps() const { return std::ldexp(1.0, -n); }
  double horizon() const { return n * std::numbers::ln2; }
  Lattice lattice() const { return Lattice(d, n); }
};

struct BrownianSheet {
  double eps = 1.0 / 16;
  double p = 1.0;
  int d = 1;
  Lattice lattice() const { return Lattice(d, dyadic_exponent(eps)); }
};

// Mollified GFF on (0,1)^2: covariance is the double disk average of G.
struct Mgff {
  MollifierSpec mollifier{};  // mollifier.eps is the disk radius
  GreenSeries series{};
  double eps() const { return mollifier.eps; }
};

// Whole-plane log kernel Gamma, disk-averaged at radius eps so that the
// diagonal is finite, plus a constant (2/pi) log R.
struct WholePlaneLog {
  double eps = 1.0 / 64;
  double R = 1.0;
};

using KernelSpec = std::variant<Mbrw, Brw, BrownianSheet, Mgff, WholePlaneLog>;

inline std::string kernel_name(const KernelSpec& k) {
  static const char* names[] = {"mbrw", "brw", "bsheet", "mgff", "wplog"};
  return names[k.index()];
}

inline int kernel_dim(const KernelSpec& k) {
  return std::visit(
      [](const auto& s) -> int {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, Mgff> || std::is_same_v<T, WholePlaneLog>) return 2;
        else return s.d;
      },
      k);
}

namespace detail {

inline void check_time(double t, double T, const char* what) {
  if (!(t >= 0.0 && t <= T * (1.0 + 1e-12))) throw DomainError(std::string(what) + ": time out of range");
}

inline void check_on_lattice(const Lattice& L, std::span<const double> p, const char* what) {
  if (!L.contains(p)) throw DomainError(std::string(what) + ": point not on the lattice");
}

}  // namespace detail

inline double mbrw_cov(const Mbrw& spec, std::span<const double> v, std::span<const double> u, double t,
                       double s) {
  const double T = spec.horizon();
  if (!(spec.eps > 0.0 && spec.eps < 1.0)) throw DomainError("mbrw_cov: eps must lie in (0,1)");
  detail::check_time(t, T, "mbrw_cov");
  detail::check_time(s, T, "mbrw_cov");
  Lattice L = spec.lattice();
  detail::check_on_lattice(L, v, "mbrw_cov");
  detail::check_on_lattice(L, u, "mbrw_cov");
  double a[kMaxDim];
  for (int i = 0; i < spec.d; ++i) a[i] = std::abs(v[i] - u[i]);
  return mbrw_cov_offsets<double>({a, static_cast<std::size_t>(spec.d)}, std::min(t, T), std::min(s, T));
}

inline double mbrw_cov(const Mbrw& spec, std::span<const double> v, std::span<const double> u) {
  return mbrw_cov(spec, v, u, spec.horizon(), spec.horizon());
}

inline double sup_norm_distance(std::span<const double> v, std::span<const double> u) {
  double m = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) m = std::max(m, std::abs(v[i] - u[i]));
  return m;
}

struct SandwichViolation {
  double lower_violation;  // Cov - (-log|v-u|_inf), must be <= 0
  double upper_violation;  // (-log|v-u|_inf) - Cov, must be <= C_d
};

inline SandwichViolation mbrw_cov_bounds_check(const Mbrw& spec, std::span<const double> v,
                                               std::span<const double> u) {
  double dist = sup_norm_distance(v, u);
  if (dist == 0.0) throw DomainError("mbrw_cov_bounds_check: v == u");
  double c = mbrw_cov(spec, v, u);
  double ref = -std::log(dist);
  return {c - ref, ref - c};
}

inline int brw_level(std::span<const double> v, std::span<const double> u, int n) {
  if (v.size() != u.size() || v.empty()) throw DomainError("brw_level: dimension mismatch");
  Lattice L(static_cast<int>(v.size()), n);
  detail::check_on_lattice(L, v, "brw_level");
  detail::check_on_lattice(L, u, "brw_level");
  const double scale = std::ldexp(1.0, n);
  int top = -1;
  for (std::size_t i = 0; i < v.size(); ++i) {
    auto kv = static_cast<std::uint64_t>(std::llround(v[i] * scale));
    auto ku = static_cast<std::uint64_t>(std::llround(u[i] * scale));
    std::uint64_t x = kv ^ ku;
    if (x) top = std::max(top, static_cast<int>(std::bit_width(x)) - 1);
  }
  return top < 0 ? n + 1 : n - top;
}

inline double brw_cov(const Brw& spec, std::span<const double> v, std::span<const double> u, double t,
                      double s) {
  const double T = spec.horizon();
  detail::check_time(t, T, "brw_cov");
  detail::check_time(s, T, "brw_cov");
  int k = brw_level(v, u, spec.n);
  double m = std::min(std::min(t, T), std::min(s, T));
  if (k > spec.n) return m;
  return std::min(m, k * std::numbers::ln2);
}

inline double brw_cov(const Brw& spec, std::span<const double> v, std::span<const double> u) {
  return brw_cov(spec, v, u, spec.horizon(), spec.horizon());
}

inline double bsheet_cov(const BrownianSheet& spec, std::span<const double> x, std::span<const double> y) {
  if (!(spec.p >= 1.0)) throw DomainError("bsheet_cov: p must be >= 1");
  Lattice L = spec.lattice();
  if (static_cast<int>(x.size()) != spec.d || static_cast<int>(y.size()) != spec.d)
    throw DomainError("bsheet_cov: dimension mismatch");
  std::vector<double> vx = L.floor_map(x), vy = L.floor_map(y);
  if (vx != vy) return 0.0;
  double prod = 1.0;
  for (int i = 0; i < spec.d; ++i) {
    double lx = spec.p + spec.p * (x[i] - vx[i]) / spec.eps;
    double ly = spec.p + spec.p * (y[i] - vy[i]) / spec.eps;
    prod *= std::min(lx, ly);
  }
  return prod;
}

inline double wplog_cov(const WholePlaneLog& spec, std::span<const double> x, std::span<const double> y) {
  detail::require2(x, "wplog_cov");
  detail::require2(y, "wplog_cov");
  if (!(spec.R > 0.0)) throw DomainError("wplog_cov: R must be positive");
  return gamma_disk_average(detail::dist2(x, y), spec.eps) + (2.0 / std::numbers::pi) * std::log(spec.R);
}

}  // namespace logfield
