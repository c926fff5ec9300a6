#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "logfield/kernels.hpp"
#include "logfield/lattice.hpp"
#include "logfield/matrix.hpp"
#include "logfield/parallel.hpp"
#include "logfield/rng.hpp"

namespace logfield {

enum class Method { cholesky, tree, hierarchical, sheet_grid };

inline const char* to_string(Method m) {
  switch (m) {
    case Method::cholesky: return "cholesky";
    case Method::tree: return "tree";
    case Method::hierarchical: return "hierarchical";
    case Method::sheet_grid: return "sheet_grid";
  }
  return "?";
}

struct FieldSample {
  std::shared_ptr<const PointSet> points;
  std::vector<double> values;
  SeedSpec seed;
  std::string kernel;
  Method method = Method::cholesky;
};

// A sampler produces replicas in batches; replica r depends only on
// (master_seed, r, label), never on the batch it was drawn in.
class FieldSampler {
 public:
  virtual ~FieldSampler() = default;
  virtual const PointSet& points() const = 0;
  virtual std::shared_ptr<const PointSet> shared_points() const = 0;
  virtual Method method() const = 0;
  virtual std::string kernel() const = 0;
  virtual std::size_t batch_width() const { return 1; }
  // out is column-major size() x count; count <= batch_width()
  virtual void draw_batch(std::uint64_t master, const std::string& label, std::uint64_t first, std::size_t count,
                          double* out) const = 0;

  std::size_t size() const { return points().size(); }

  FieldSample sample(const SeedSpec& seed) const {
    FieldSample fs;
    fs.points = shared_points();
    fs.values.resize(size());
    fs.seed = seed;
    fs.kernel = kernel();
    fs.method = method();
    draw_batch(seed.master_seed, seed.stream_label, seed.replica_index, 1, fs.values.data());
    return fs;
  }
};

// Calls fn(replica, values) for replicas [0, M). Batches run in parallel;
// fn must only touch state owned by its replica index.
template <class Fn>
void for_each_replica(const FieldSampler& s, std::uint64_t master, const std::string& label, std::size_t M,
                      int threads, Fn&& fn) {
  const std::size_t w = s.batch_width();
  const std::size_t nb = (M + w - 1) / w;
  const std::size_t n = s.size();
  parallel_for(nb, resolve_threads(threads), [&](std::size_t b) {
    std::size_t first = b * w, count = std::min(w, M - first);
    std::vector<double> buf(n * count);
    s.draw_batch(master, label, first, count, buf.data());
    for (std::size_t c = 0; c < count; ++c) fn(first + c, std::span<const double>(buf.data() + c * n, n));
  });
}

// n x M matrix of replicas
inline Eigen::MatrixXd draw_replicas(const FieldSampler& s, std::uint64_t master, const std::string& label,
                                     std::size_t M, int threads = 1) {
  Eigen::MatrixXd X(static_cast<Eigen::Index>(s.size()), static_cast<Eigen::Index>(M));
  for_each_replica(s, master, label, M, threads, [&](std::size_t r, std::span<const double> v) {
    std::copy(v.begin(), v.end(), X.col(static_cast<Eigen::Index>(r)).data());
  });
  return X;
}

class CholeskySampler : public FieldSampler {
 public:
  static constexpr std::size_t kBatch = 64;

  explicit CholeskySampler(const CovMatrix& cov)
      : points_(std::make_shared<PointSet>(cov.points)), kernel_(cov.kernel), factor_(factorize(cov.m)) {
    if (cov.size() > kDefaultMatrixCap) throw SizeError("sample_cholesky: matrix larger than 8192");
  }

  const PointSet& points() const override { return *points_; }
  std::shared_ptr<const PointSet> shared_points() const override { return points_; }
  Method method() const override { return Method::cholesky; }
  std::string kernel() const override { return kernel_; }
  std::size_t batch_width() const override { return kBatch; }
  double jitter() const { return factor_.jitter; }
  const Eigen::MatrixXd& lower() const { return factor_.L; }

  void draw_batch(std::uint64_t master, const std::string& label, std::uint64_t first, std::size_t count,
                  double* out) const override {
    const Eigen::Index n = factor_.L.rows();
    // fixed width so every column goes through an identical product schedule
    Eigen::MatrixXd Z = Eigen::MatrixXd::Zero(n, static_cast<Eigen::Index>(kBatch));
    for (std::size_t c = 0; c < count; ++c) {
      Stream st(SeedSpec{master, first + c, label});
      st.fill_normal(Z.col(static_cast<Eigen::Index>(c)).data(), static_cast<std::size_t>(n));
    }
    Eigen::MatrixXd Y = factor_.L.triangularView<Eigen::Lower>() * Z;
    std::copy(Y.data(), Y.data() + n * static_cast<Eigen::Index>(count), out);
  }

 private:
  std::shared_ptr<const PointSet> points_;
  std::string kernel_;
  CholeskyFactor factor_;
};

inline FieldSample sample_cholesky(const CovMatrix& m, const SeedSpec& seed) {
  return CholeskySampler(m).sample(seed);
}

// Tree sampler: one N(0, log 2) increment per box of side 2^-k, k = 0..n-1,
// shared by every leaf in that box.
class BrwTreeSampler : public FieldSampler {
 public:
  BrwTreeSampler(int n, int d) : n_(n), d_(d) {
    if (d < 1 || n < 0) throw DomainError("sample_brw_tree: need n >= 0, d >= 1");
    if (n * d > 24) throw SizeError("sample_brw_tree: n*d exceeds 24");
    points_ = std::make_shared<PointSet>(Lattice(d, n).points());
  }

  const PointSet& points() const override { return *points_; }
  std::shared_ptr<const PointSet> shared_points() const override { return points_; }
  Method method() const override { return Method::tree; }
  std::string kernel() const override { return "brw"; }

  void draw_batch(std::uint64_t master, const std::string& label, std::uint64_t first, std::size_t count,
                  double* out) const override {
    const std::size_t N = points_->size();
    for (std::size_t c = 0; c < count; ++c) draw_one(Stream(SeedSpec{master, first + c, label}), out + c * N);
  }

 private:
  void draw_one(Stream st, double* out) const {
    const std::size_t N = points_->size();
    if (n_ == 0) {
      out[0] = 0.0;
      return;
    }
    const double sd = std::sqrt(std::numbers::ln2);
    // partial sums over boxes at level k, row-major over 2^k per axis
    std::vector<double> cur{sd * st.normal()}, next;
    for (int k = 1; k < n_; ++k) {
      const std::size_t side = std::size_t{1} << k;
      std::size_t count = 1;
      for (int i = 0; i < d_; ++i) count *= side;
      next.assign(count, 0.0);
      std::size_t digits[kMaxDim];
      for (std::size_t b = 0; b < count; ++b) {
        std::size_t rem = b, parent = 0;
        for (int i = d_ - 1; i >= 0; --i) {
          digits[i] = rem % side;
          rem /= side;
        }
        for (int i = 0; i < d_; ++i) parent = parent * (side / 2) + digits[i] / 2;
        next[b] = cur[parent] + sd * st.normal();
      }
      cur.swap(next);
    }
    // leaves read their level-(n-1) box
    const std::size_t side = std::size_t{1} << n_;
    std::size_t digits[kMaxDim];
    for (std::size_t p = 0; p < N; ++p) {
      std::size_t rem = p, box = 0;
      for (int i = d_ - 1; i >= 0; --i) {
        digits[i] = rem % side;
        rem /= side;
      }
      for (int i = 0; i < d_; ++i) box = box * (side / 2) + digits[i] / 2;
      out[p] = cur[box];
    }
  }

  int n_, d_;
  std::shared_ptr<const PointSet> points_;
};

inline FieldSample sample_brw_tree(int n, int d, const SeedSpec& seed) { return BrwTreeSampler(n, d).sample(seed); }

// uniform: cells of side 1/z_resolution, fractional overlap weights.
// aligned: cell boundaries at the box edges, so each box is an exact union
// of cells and only the r-discretization remains (z_resolution unused).
enum class CellLayout { uniform, aligned };

inline const char* to_string(CellLayout c) { return c == CellLayout::uniform ? "uniform" : "aligned"; }

struct HierarchicalConfig {
  int levels_per_unit = 8;  // slabs per log 2 of the r-axis
  int z_resolution = 8;     // white-noise cells per unit length in z-space
  CellLayout layout = CellLayout::uniform;
  std::size_t cell_budget = 50'000'000;

  void validate() const {
    if (levels_per_unit < 1) throw DomainError("HierarchicalConfig: levels_per_unit must be >= 1");
    if (layout == CellLayout::uniform && z_resolution < 2) throw DomainError("HierarchicalConfig: fewer than 2 cells across a box");
  }
};

// Discretized white-noise representation of the MBRW: the r-axis is cut
// into n*L slabs; in slab j (midpoint r) the z-axis is covered by cells of
// side 1/z_resolution and point v collects the cells overlapping the unit
// box centred at e^r v, weighted by overlap fraction. Each point's slab
// contribution is renormalised to variance exactly dr. With the aligned
// layout the cells are the pieces cut by the box edges instead.
class HierarchicalMbrwSampler : public FieldSampler {
 public:
  struct Slab {
    double r = 0.0;
    std::size_t cells = 0;
    std::vector<std::size_t> c0, c1;  // first/last overlapping cell per point index along an axis
    std::vector<double> w0, w1;       // overlap fraction at c0 and c1
    std::vector<double> norm;         // 1/sqrt(sum of squared weights)
    std::vector<double> scale;        // sqrt of relative cell length
    std::vector<double> cum;          // prefix sums of scale^2
  };

  HierarchicalMbrwSampler(const Mbrw& spec, const HierarchicalConfig& cfg) : spec_(spec), cfg_(cfg) {
    cfg_.validate();
    n_ = dyadic_exponent(spec.eps);
    if (n_ < 1) throw DomainError("sample_mbrw_hier: eps must be < 1");
    Lattice lat(spec.d, n_);
    points_ = std::make_shared<PointSet>(lat.points());
    side_ = lat.side();
    const int S = n_ * cfg_.levels_per_unit;
    dr_ = spec.horizon() / S;
    const double h = 1.0 / cfg_.z_resolution;
    std::size_t total = 0;
    for (int j = 0; j < S; ++j) {
      Slab sl;
      sl.r = (j + 0.5) * dr_;
      const double er = std::exp(sl.r);
      sl.c0.resize(side_);
      sl.c1.resize(side_);
      sl.w0.resize(side_);
      sl.w1.resize(side_);
      sl.norm.resize(side_);
      if (cfg_.layout == CellLayout::uniform) build_uniform(sl, er, h);
      else build_aligned(sl, er);
      sl.cum.assign(sl.cells + 1, 0.0);
      for (std::size_t c = 0; c < sl.cells; ++c) sl.cum[c + 1] = sl.cum[c] + sl.scale[c] * sl.scale[c];
      for (std::size_t k = 0; k < side_; ++k) sl.norm[k] = 1.0 / std::sqrt(weighted_sq(sl, k));
      std::size_t cells_d = 1;
      for (int i = 0; i < spec.d; ++i) cells_d *= sl.cells;
      total += cells_d;
      slabs_.push_back(std::move(sl));
    }
    cells_per_replica_ = total;
    if (total > cfg_.cell_budget)
      throw BudgetError("sample_mbrw_hier: " + std::to_string(total) + " cells per replica exceeds budget");
  }

 private:
  void build_uniform(Slab& sl, double er, double h) const {
    const double z0 = -0.5;
    sl.cells = static_cast<std::size_t>(std::ceil((er * (1.0 - spec_.eps) + 1.0) / h - 1e-9));
    sl.scale.assign(sl.cells, 1.0);
    for (std::size_t k = 0; k < side_; ++k) {
      const double a = er * static_cast<double>(k) * spec_.eps - 0.5, b = a + 1.0;
      auto first = static_cast<std::size_t>(std::max(0.0, std::floor((a - z0) / h)));
      auto last = static_cast<std::size_t>(std::max(0.0, std::ceil((b - z0) / h) - 1.0));
      last = std::min(last, sl.cells - 1);
      auto frac = [&](std::size_t c) {
        double lo = z0 + static_cast<double>(c) * h, hi = lo + h;
        return std::max(0.0, std::min(b, hi) - std::max(a, lo)) / h;
      };
      sl.c0[k] = first;
      sl.c1[k] = last;
      sl.w0[k] = frac(first);
      sl.w1[k] = frac(last);
    }
  }

  void build_aligned(Slab& sl, double er) const {
    // breakpoints: left edges e^r k eps - 1/2 and right edges e^r k eps + 1/2, merged
    std::vector<double> bp;
    std::vector<std::size_t> left_pos(side_), right_pos(side_);
    bp.reserve(2 * side_);
    std::size_t i = 0, j = 0;
    auto left = [&](std::size_t k) { return er * static_cast<double>(k) * spec_.eps - 0.5; };
    auto right = [&](std::size_t k) { return er * static_cast<double>(k) * spec_.eps + 0.5; };
    while (i < side_ || j < side_) {
      bool take_left = i < side_ && (j >= side_ || left(i) <= right(j));
      double x = take_left ? left(i) : right(j);
      if (bp.empty() || x > bp.back()) bp.push_back(x);
      if (take_left) left_pos[i++] = bp.size() - 1;
      else right_pos[j++] = bp.size() - 1;
    }
    sl.cells = bp.size() - 1;
    sl.scale.resize(sl.cells);
    for (std::size_t c = 0; c < sl.cells; ++c) sl.scale[c] = std::sqrt(bp[c + 1] - bp[c]);
    for (std::size_t k = 0; k < side_; ++k) {
      sl.c0[k] = left_pos[k];
      sl.c1[k] = right_pos[k] - 1;
      sl.w0[k] = 1.0;
      sl.w1[k] = 1.0;
    }
  }

  // sum over cells of w_k(c)^2 scale(c)^2
  static double weighted_sq(const Slab& sl, std::size_t k) {
    std::size_t c0 = sl.c0[k], c1 = sl.c1[k];
    double s0 = sl.scale[c0] * sl.scale[c0], s1 = sl.scale[c1] * sl.scale[c1];
    if (c0 == c1) return sl.w0[k] * sl.w0[k] * s0;
    return sl.w0[k] * sl.w0[k] * s0 + sl.w1[k] * sl.w1[k] * s1 + (sl.cum[c1] - sl.cum[c0 + 1]);
  }

 public:
  const PointSet& points() const override { return *points_; }
  std::shared_ptr<const PointSet> shared_points() const override { return points_; }
  Method method() const override { return Method::hierarchical; }
  std::string kernel() const override { return "mbrw"; }
  std::size_t cells_per_replica() const { return cells_per_replica_; }
  const std::vector<Slab>& slabs() const { return slabs_; }
  double dr() const { return dr_; }

  void draw_batch(std::uint64_t master, const std::string& label, std::uint64_t first, std::size_t count,
                  double* out) const override {
    const std::size_t N = points_->size();
    std::vector<double> a, b, prefix;
    for (std::size_t c = 0; c < count; ++c) {
      Stream st(SeedSpec{master, first + c, label});
      double* o = out + c * N;
      std::fill(o, o + N, 0.0);
      const double sdr = std::sqrt(dr_);
      for (const Slab& sl : slabs_) {
        std::size_t len = 1;
        for (int i = 0; i < spec_.d; ++i) len *= sl.cells;
        a.resize(len);
        st.fill_normal(a.data(), len);
        // contract axes from last to first; dims[i] is cells or side_
        std::vector<std::size_t> dims(spec_.d, sl.cells);
        for (int ax = spec_.d - 1; ax >= 0; --ax) {
          contract(sl, a, b, dims, ax, prefix);
          a.swap(b);
          dims[ax] = side_;
        }
        for (std::size_t p = 0; p < N; ++p) o[p] += sdr * a[p];
      }
    }
  }

  // Covariance realised exactly by the discretization (no Monte Carlo).
  double implied_cov(std::span<const double> v, std::span<const double> u) const {
    std::size_t kv[kMaxDim], ku[kMaxDim];
    for (int i = 0; i < spec_.d; ++i) {
      kv[i] = static_cast<std::size_t>(std::llround(v[i] / spec_.eps));
      ku[i] = static_cast<std::size_t>(std::llround(u[i] / spec_.eps));
    }
    double total = 0.0;
    for (const Slab& sl : slabs_) {
      double prod = 1.0;
      for (int i = 0; i < spec_.d && prod != 0.0; ++i) prod *= axis_corr(sl, kv[i], ku[i]);
      total += dr_ * prod;
    }
    return total;
  }

  // 1D normalized overlap of the weight vectors of lattice indices k and l
  static double axis_corr(const Slab& sl, std::size_t k, std::size_t l) {
    if (sl.c1[k] < sl.c0[l] || sl.c1[l] < sl.c0[k]) return 0.0;
    std::size_t lo = std::max(sl.c0[k], sl.c0[l]), hi = std::min(sl.c1[k], sl.c1[l]);
    auto w = [&](std::size_t idx, std::size_t c) {
      if (c == sl.c0[idx]) return sl.w0[idx];
      if (c == sl.c1[idx]) return sl.w1[idx];
      return 1.0;
    };
    double s = sl.cum[hi + 1] - sl.cum[lo];
    std::size_t special[4] = {sl.c0[k], sl.c1[k], sl.c0[l], sl.c1[l]};
    for (int a = 0; a < 4; ++a) {
      std::size_t c = special[a];
      if (c < lo || c > hi) continue;
      bool seen = false;
      for (int b = 0; b < a; ++b) seen = seen || special[b] == c;
      if (seen) continue;
      s += (w(k, c) * w(l, c) - 1.0) * sl.scale[c] * sl.scale[c];
    }
    return s * sl.norm[k] * sl.norm[l];
  }

 private:
  void contract(const Slab& sl, const std::vector<double>& in, std::vector<double>& out,
                const std::vector<std::size_t>& dims, int ax, std::vector<double>& prefix) const {
    std::size_t outer = 1, inner = 1;
    for (int i = 0; i < ax; ++i) outer *= dims[i];
    for (int i = ax + 1; i < spec_.d; ++i) inner *= dims[i];
    const std::size_t nc = dims[ax];
    out.assign(outer * side_ * inner, 0.0);
    prefix.resize(nc + 1);
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t in_i = 0; in_i < inner; ++in_i) {
        const double* src = in.data() + o * nc * inner + in_i;
        const double* sc = sl.scale.data();
        prefix[0] = 0.0;
        for (std::size_t c = 0; c < nc; ++c) prefix[c + 1] = prefix[c] + sc[c] * src[c * inner];
        double* dst = out.data() + o * side_ * inner + in_i;
        for (std::size_t k = 0; k < side_; ++k) {
          std::size_t c0 = sl.c0[k], c1 = sl.c1[k];
          double val;
          if (c0 == c1) val = sl.w0[k] * sc[c0] * src[c0 * inner];
          else
            val = sl.w0[k] * sc[c0] * src[c0 * inner] + sl.w1[k] * sc[c1] * src[c1 * inner] +
                  (prefix[c1] - prefix[c0 + 1]);
          dst[k * inner] = sl.norm[k] * val;
        }
      }
    }
  }

  Mbrw spec_;
  HierarchicalConfig cfg_;
  int n_ = 0;
  std::size_t side_ = 0;
  double dr_ = 0.0;
  std::vector<Slab> slabs_;
  std::shared_ptr<const PointSet> points_;
  std::size_t cells_per_replica_ = 0;
};

inline FieldSample sample_mbrw_hier(const Mbrw& spec, const HierarchicalConfig& cfg, const SeedSpec& seed) {
  return HierarchicalMbrwSampler(spec, cfg).sample(seed);
}

// Per-box Brownian sheet on the mapped grid: points v + eps*j/res for
// j in {0..res-1}^d, ordered row-major on the fine grid of side eps/res.
class BrownianSheetSampler : public FieldSampler {
 public:
  BrownianSheetSampler(const BrownianSheet& spec, int resolution) : spec_(spec), res_(resolution) {
    if (resolution < 2) throw DomainError("sample_bsheet: resolution must be >= 2");
    if (!(spec.p >= 1.0)) throw DomainError("sample_bsheet: p must be >= 1");
    std::size_t local = 1;
    for (int i = 0; i < spec.d; ++i) local *= static_cast<std::size_t>(resolution);
    if (local > 4096) throw SizeError("sample_bsheet: resolution^d exceeds 4096");
    local_ = local;
    int n = dyadic_exponent(spec.eps);
    Lattice lat(spec.d, n);
    boxes_ = lat.size();
    side_ = lat.side() * static_cast<std::size_t>(resolution);
    const std::size_t N = boxes_ * local_;
    auto pts = std::make_shared<PointSet>(spec.d);
    pts->coords.resize(N * spec.d);
    box_of_.resize(N);
    local_of_.resize(N);
    const double step = spec.eps / resolution;
    for (std::size_t p = 0; p < N; ++p) {
      std::size_t rem = p, box = 0, loc = 0;
      std::size_t digits[kMaxDim];
      for (int i = spec.d - 1; i >= 0; --i) {
        digits[i] = rem % side_;
        rem /= side_;
      }
      for (int i = 0; i < spec.d; ++i) {
        pts->coords[p * spec.d + i] = static_cast<double>(digits[i]) * step;
        box = box * lat.side() + digits[i] / resolution;
        loc = loc * resolution + digits[i] % resolution;
      }
      box_of_[p] = box;
      local_of_[p] = loc;
    }
    points_ = pts;
    // local covariance prod_i min(l_i, l'_i), l = p + p*j/res
    Eigen::MatrixXd C(static_cast<Eigen::Index>(local_), static_cast<Eigen::Index>(local_));
    for (std::size_t a = 0; a < local_; ++a)
      for (std::size_t b = 0; b < local_; ++b) {
        std::size_t ra = a, rb = b;
        double prod = 1.0;
        for (int i = 0; i < spec.d; ++i) {
          double la = spec.p + spec.p * static_cast<double>(ra % res_) / res_;
          double lb = spec.p + spec.p * static_cast<double>(rb % res_) / res_;
          prod *= std::min(la, lb);
          ra /= res_;
          rb /= res_;
        }
        C(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = prod;
      }
    local_cov_ = C;
    factor_ = factorize(C);
  }

  const PointSet& points() const override { return *points_; }
  std::shared_ptr<const PointSet> shared_points() const override { return points_; }
  Method method() const override { return Method::sheet_grid; }
  std::string kernel() const override { return "bsheet"; }
  const Eigen::MatrixXd& local_cov() const { return local_cov_; }

  void draw_batch(std::uint64_t master, const std::string& label, std::uint64_t first, std::size_t count,
                  double* out) const override {
    const std::size_t N = points_->size();
    const auto L = static_cast<Eigen::Index>(local_);
    Eigen::MatrixXd Z(L, static_cast<Eigen::Index>(boxes_));
    for (std::size_t c = 0; c < count; ++c) {
      Stream st(SeedSpec{master, first + c, label});
      st.fill_normal(Z.data(), local_ * boxes_);
      Eigen::MatrixXd Y = factor_.L.triangularView<Eigen::Lower>() * Z;
      double* o = out + c * N;
      for (std::size_t p = 0; p < N; ++p)
        o[p] = Y(static_cast<Eigen::Index>(local_of_[p]), static_cast<Eigen::Index>(box_of_[p]));
    }
  }

 private:
  BrownianSheet spec_;
  int res_;
  std::size_t local_ = 0, boxes_ = 0, side_ = 0;
  std::vector<std::size_t> box_of_, local_of_;
  std::shared_ptr<const PointSet> points_;
  Eigen::MatrixXd local_cov_;
  CholeskyFactor factor_;
};

inline FieldSample sample_bsheet(const BrownianSheet& spec, int resolution, const SeedSpec& seed) {
  return BrownianSheetSampler(spec, resolution).sample(seed);
}

struct EmpiricalCov {
  Eigen::MatrixXd cov;
  Eigen::MatrixXd se;
  Eigen::VectorXd mean;
  std::size_t replicas = 0;
};

// SE_ij = s_i s_j sqrt((1 + r_ij^2) / M) from the empirical moments
inline EmpiricalCov empirical_cov(const Eigen::MatrixXd& X) {
  const Eigen::Index M = X.cols();
  if (M < 2) throw DomainError("empirical_cov: need at least 2 replicas");
  EmpiricalCov e;
  e.replicas = static_cast<std::size_t>(M);
  e.mean = X.rowwise().mean();
  Eigen::MatrixXd C = X.colwise() - e.mean;
  e.cov = (C * C.transpose()) / static_cast<double>(M - 1);
  const Eigen::Index n = X.rows();
  e.se.resize(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) {
      double si = std::sqrt(std::max(0.0, e.cov(i, i))), sj = std::sqrt(std::max(0.0, e.cov(j, j)));
      double rho = si > 0 && sj > 0 ? e.cov(i, j) / (si * sj) : 0.0;
      e.se(i, j) = si * sj * std::sqrt((1.0 + rho * rho) / static_cast<double>(M));
    }
  return e;
}

inline EmpiricalCov empirical_cov(const std::vector<FieldSample>& samples) {
  if (samples.size() < 2) throw DomainError("empirical_cov: need at least 2 replicas");
  const std::size_t n = samples.front().values.size();
  Eigen::MatrixXd X(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(samples.size()));
  for (std::size_t r = 0; r < samples.size(); ++r) {
    const auto& s = samples[r];
    if (s.values.size() != n || s.kernel != samples.front().kernel ||
        (s.points && samples.front().points && s.points->coords != samples.front().points->coords))
      throw DomainError("empirical_cov: mismatched point sets");
    std::copy(s.values.begin(), s.values.end(), X.col(static_cast<Eigen::Index>(r)).data());
  }
  return empirical_cov(X);
}

// SE of an empirical covariance under a reference covariance matrix
inline Eigen::MatrixXd reference_se(const Eigen::MatrixXd& ref, std::size_t M) {
  const Eigen::Index n = ref.rows();
  Eigen::MatrixXd se(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) {
      double si = std::sqrt(ref(i, i)), sj = std::sqrt(ref(j, j));
      double rho = si > 0 && sj > 0 ? ref(i, j) / (si * sj) : 0.0;
      se(i, j) = si * sj * std::sqrt((1.0 + rho * rho) / static_cast<double>(M));
    }
  return se;
}

}  // namespace logfield
