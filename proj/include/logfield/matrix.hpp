#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "logfield/green.hpp"
#include "logfield/kernels.hpp"
#include "logfield/parallel.hpp"

namespace logfield {

struct CovMatrix {
  PointSet points;
  Eigen::MatrixXd m;  // both triangles filled
  std::string kernel;

  std::size_t size() const { return static_cast<std::size_t>(m.rows()); }
  double trace() const { return m.trace(); }
};

inline constexpr std::size_t kDefaultMatrixCap = 8192;

// Pairwise covariance callable for a kernel at terminal time.
class KernelEvaluator {
 public:
  explicit KernelEvaluator(const KernelSpec& spec) : spec_(spec) {
    if (auto* g = std::get_if<Mgff>(&spec_)) mgff_.emplace(g->series, g->mollifier);
    if (auto* w = std::get_if<WholePlaneLog>(&spec_))
      if (!(w->eps > 0.0)) throw DomainError("WholePlaneLog: eps must be positive");
  }

  double operator()(std::span<const double> x, std::span<const double> y) const {
    return std::visit(
        [&](const auto& s) -> double {
          using T = std::decay_t<decltype(s)>;
          if constexpr (std::is_same_v<T, Mbrw>) return mbrw_cov(s, x, y);
          else if constexpr (std::is_same_v<T, Brw>) return brw_cov(s, x, y);
          else if constexpr (std::is_same_v<T, BrownianSheet>) return bsheet_cov(s, x, y);
          else if constexpr (std::is_same_v<T, Mgff>) return (*mgff_)(x, y);
          else return wplog_cov(s, x, y);
        },
        spec_);
  }

  const KernelSpec& spec() const { return spec_; }

 private:
  KernelSpec spec_;
  std::optional<MollifiedGreen> mgff_;
};

inline CovMatrix kernel_matrix(const KernelSpec& spec, const PointSet& pts, int threads = 1,
                               std::size_t cap = kDefaultMatrixCap) {
  const std::size_t n = pts.size();
  if (n == 0) throw DomainError("kernel_matrix: empty point list");
  if (n > cap) throw SizeError("kernel_matrix: " + std::to_string(n) + " points exceeds cap " + std::to_string(cap));
  if (pts.d != kernel_dim(spec)) throw DomainError("kernel_matrix: point dimension does not match the kernel");
  KernelEvaluator ev(spec);
  CovMatrix out{pts, Eigen::MatrixXd(n, n), kernel_name(spec)};
  parallel_for(n, resolve_threads(threads), [&](std::size_t i) {
    for (std::size_t j = 0; j <= i; ++j) out.m(i, j) = ev(pts[i], pts[j]);
  });
  for (std::size_t i = 0; i < n; ++i) {
    if (!(out.m(i, i) > 0.0)) throw DomainError("kernel_matrix: non-positive variance at point " + std::to_string(i));
    for (std::size_t j = 0; j < i; ++j) out.m(j, i) = out.m(i, j);
  }
  return out;
}

inline double min_eigenvalue(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

struct CholeskyFactor {
  Eigen::MatrixXd L;  // lower triangular
  double jitter = 0.0;
};

// Diagonal jitter escalation: 0, then 1e-12*tr/n multiplied by 10 up to 1e-6*tr/n.
inline CholeskyFactor factorize(const Eigen::MatrixXd& a) {
  const Eigen::Index n = a.rows();
  if (n != a.cols()) throw DomainError("factorize: matrix not square");
  CholeskyFactor f;
  if (a.isZero(0.0)) {
    f.L = Eigen::MatrixXd::Zero(n, n);
    return f;
  }
  const double scale = a.trace() / static_cast<double>(n);
  if (!(scale > 0.0)) throw FactorizationError("factorize: non-positive trace");
  std::vector<double> ladder{0.0};
  for (double j = 1e-12; j <= 1e-6 * (1 + 1e-9); j *= 10) ladder.push_back(j * scale);
  for (double jit : ladder) {
    Eigen::MatrixXd b = a;
    b.diagonal().array() += jit;
    Eigen::LLT<Eigen::MatrixXd> llt(b);
    if (llt.info() == Eigen::Success) {
      Eigen::MatrixXd L = llt.matrixL();
      if (L.allFinite()) {
        f.L = std::move(L);
        f.jitter = jit;
        return f;
      }
    }
  }
  throw FactorizationError("factorize: matrix not positive semidefinite within jitter 1e-6*trace/n");
}

}  // namespace logfield
