#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace logfield {

struct DomainError : std::domain_error {
  using std::domain_error::domain_error;
};
struct SizeError : std::length_error {
  using std::length_error::length_error;
};
struct BudgetError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct FactorizationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline constexpr int kMaxDim = 6;
inline constexpr double kLatticeTol = 1e-12;

// Flat list of points in R^d, row-major (point i occupies [i*d, i*d+d)).
struct PointSet {
  int d = 1;
  std::vector<double> coords;

  PointSet() = default;
  explicit PointSet(int dim) : d(dim) {}
  PointSet(int dim, std::vector<double> c) : d(dim), coords(std::move(c)) {
    if (dim < 1 || coords.size() % static_cast<std::size_t>(dim) != 0)
      throw DomainError("PointSet: coordinate count not a multiple of d");
  }

  std::size_t size() const { return coords.size() / static_cast<std::size_t>(d); }
  bool empty() const { return coords.empty(); }
  std::span<const double> operator[](std::size_t i) const {
    return {coords.data() + i * d, static_cast<std::size_t>(d)};
  }
  void push(std::span<const double> p) {
    if (static_cast<int>(p.size()) != d) throw DomainError("PointSet: dimension mismatch");
    coords.insert(coords.end(), p.begin(), p.end());
  }
};

// V_eps = (eps Z^d) cap [0,1)^d with eps = 2^-n, enumerated row-major
// (last coordinate fastest).
class Lattice {
 public:
  Lattice(int d, int n) : d_(d), n_(n) {
    if (d < 1 || d > kMaxDim) throw DomainError("Lattice: d must be in [1, 6]");
    if (n < 0 || n > 30) throw DomainError("Lattice: n must be in [0, 30]");
    if (static_cast<double>(n) * d > 40) throw SizeError("Lattice: too many points");
    side_ = std::size_t{1} << n;
    size_ = 1;
    for (int i = 0; i < d; ++i) size_ *= side_;
    eps_ = std::ldexp(1.0, -n);
  }

  int d() const { return d_; }
  int n() const { return n_; }
  double eps() const { return eps_; }
  std::size_t side() const { return side_; }
  std::size_t size() const { return size_; }

  void index_to_digits(std::size_t idx, std::span<std::size_t> k) const {
    for (int i = d_ - 1; i >= 0; --i) {
      k[i] = idx % side_;
      idx /= side_;
    }
  }

  std::vector<double> point(std::size_t idx) const {
    std::vector<double> p(d_);
    std::size_t k[kMaxDim];
    index_to_digits(idx, {k, static_cast<std::size_t>(d_)});
    for (int i = 0; i < d_; ++i) p[i] = static_cast<double>(k[i]) * eps_;
    return p;
  }

  PointSet points() const {
    PointSet ps(d_);
    ps.coords.resize(size_ * d_);
    std::size_t k[kMaxDim];
    for (std::size_t idx = 0; idx < size_; ++idx) {
      index_to_digits(idx, {k, static_cast<std::size_t>(d_)});
      for (int i = 0; i < d_; ++i) ps.coords[idx * d_ + i] = static_cast<double>(k[i]) * eps_;
    }
    return ps;
  }

  bool contains(std::span<const double> p) const {
    if (static_cast<int>(p.size()) != d_) return false;
    for (double x : p) {
      if (!(x >= 0.0 && x < 1.0)) return false;
      double q = x / eps_;
      if (std::abs(q - std::round(q)) > kLatticeTol * std::max(1.0, q)) return false;
    }
    return true;
  }

  // Corner [x] of the eps-box containing x in [0,1)^d.
  std::vector<double> floor_map(std::span<const double> x) const {
    std::vector<double> v(d_);
    for (int i = 0; i < d_; ++i) {
      if (!(x[i] >= 0.0 && x[i] < 1.0)) throw DomainError("floor_map: point outside [0,1)^d");
      v[i] = box_corner(x[i]);
    }
    return v;
  }

  std::size_t box_index(std::span<const double> x) const {
    std::size_t idx = 0;
    for (int i = 0; i < d_; ++i) {
      if (!(x[i] >= 0.0 && x[i] < 1.0)) throw DomainError("box_index: point outside [0,1)^d");
      idx = idx * side_ + static_cast<std::size_t>(box_corner(x[i]) / eps_ + 0.5);
    }
    return idx;
  }

 private:
  double box_corner(double x) const {
    // snap coordinates within tolerance of a grid line onto it
    double q = x / eps_;
    double r = std::round(q);
    double k = std::abs(q - r) <= kLatticeTol * std::max(1.0, q) ? r : std::floor(q);
    return k * eps_;
  }

  int d_;
  int n_;
  std::size_t side_ = 1;
  std::size_t size_ = 1;
  double eps_ = 1.0;
};

inline int dyadic_exponent(double eps) {
  if (!(eps > 0.0 && eps <= 1.0)) throw DomainError("eps must lie in (0,1]");
  int e = 0;
  double m = std::frexp(eps, &e);
  if (m != 0.5) throw DomainError("eps must be a power of two");
  return 1 - e;
}

}  // namespace logfield
