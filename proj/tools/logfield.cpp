// logfield: experiment runner for the log-correlated field library.
//
//   logfield cov --kernel mbrw --d 1 --eps 2^-4
//   logfield extremes --kernel brw --d 1 --n 6 --M 1000 --seed 7
//   logfield certify --side left --kernel mgff --eps 2^-5
//   logfield validate-golden goldens/goldens.json
//
// Every run writes config.json (the resolved options), its results and
// manifest.json into --out. Exit status: 0 ok, 2 a required check failed,
// 1 error.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "logfield/golden.hpp"

namespace lf = logfield;
using lf::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitCheck = 2;

struct Options {
  std::string config;
  std::string out = "out";
  int threads = 0;
  bool timestamps = false;

  // kernel
  std::string kernel = "mbrw";
  int d = 1;
  std::string eps = "2^-4";
  int n = 0;
  double p = 1.0;
  int N = 400;
  std::string route = "split";
  std::string green_scale = "matched";
  double R = 1.0;

  // seeds and budgets
  std::uint64_t seed = 1;
  std::string label = "main";
  std::uint64_t first = 0;
  std::size_t M = 10;
  std::string method = "cholesky";
  int levels = 8;
  int zres = 8;
  std::string layout = "uniform";
  int sheet_res = 2;
  std::size_t cap = lf::kDefaultMatrixCap;
  bool min_eig = false;

  // extremes
  double lambda_step = 0.1;
  std::size_t bootstrap = 400;
  double floor = 0.01;
  double slack = 1.0;
  bool require = false;

  // certify
  std::string side = "right";
  std::string family = "synthetic";
  std::string cert_eps = "2^-5";
  double cy = -1.0;
  std::size_t cy_pairs = 50;
  std::size_t pair_budget = 100000;
  int resolution = 4;
  int delta_depth = 8;
  int p_max = 8;
  int rho_depth = 8;
  bool no_reeval = false;
  bool require_valid = false;

  // green-check
  std::size_t pairs = 20;
  double k_margin = 0.25;
  std::size_t per_kind = 40;
  std::string radii = "2^-3..2^-7";

  // golden
  std::string golden = "goldens/goldens.json";
  double tolerance = -1.0;
};

// "2^-k" or a decimal; must be a power of two in (0,1].
double parse_scale(const std::string& s) {
  double v;
  auto pos = s.find("^");
  if (pos != std::string::npos) {
    if (s.substr(0, pos) != "2") throw lf::DomainError("scale '" + s + "': only base 2 is accepted");
    v = std::ldexp(1.0, std::stoi(s.substr(pos + 1)));
  } else {
    std::size_t used = 0;
    v = std::stod(s, &used);
    if (used != s.size()) throw lf::DomainError("scale '" + s + "': trailing characters");
  }
  lf::dyadic_exponent(v);
  return v;
}

// "2^-4,2^-5" or "2^-4..2^-7"
std::vector<double> parse_scales(const std::string& s) {
  std::vector<double> out;
  auto dots = s.find("..");
  if (dots != std::string::npos) {
    int a = lf::dyadic_exponent(parse_scale(s.substr(0, dots)));
    int b = lf::dyadic_exponent(parse_scale(s.substr(dots + 2)));
    for (int k = a; a <= b ? k <= b : k >= b; k += a <= b ? 1 : -1) out.push_back(std::ldexp(1.0, -k));
    return out;
  }
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(parse_scale(item));
  if (out.empty()) throw lf::DomainError("empty scale list");
  return out;
}

lf::KernelSpec build_kernel(const Options& o, double eps) {
  if (o.kernel == "mbrw") return lf::Mbrw{o.d, eps};
  if (o.kernel == "brw") return lf::Brw{lf::dyadic_exponent(eps), o.d};
  if (o.kernel == "bsheet") return lf::BrownianSheet{eps, o.p, o.d};
  if (o.kernel == "mgff") {
    lf::Mgff g;
    g.mollifier.eps = eps / 2;
    if (o.route == "split") g.mollifier.route = lf::MollifierRoute::split;
    else if (o.route == "analytic") g.mollifier.route = lf::MollifierRoute::analytic;
    else if (o.route == "quadrature") g.mollifier.route = lf::MollifierRoute::quadrature;
    else throw lf::DomainError("unknown route '" + o.route + "'");
    g.series.N = o.N;
    if (o.green_scale == "standard") g.series.scale = lf::GreenScale::standard;
    else if (o.green_scale != "matched") throw lf::DomainError("unknown green-scale '" + o.green_scale + "'");
    return g;
  }
  if (o.kernel == "wplog") return lf::WholePlaneLog{eps / 2, o.R};
  throw lf::DomainError("unknown kernel '" + o.kernel + "'");
}

std::vector<double> kernel_scales(const Options& o) {
  if (o.n > 0) return {std::ldexp(1.0, -o.n)};
  return parse_scales(o.eps);
}

lf::SamplerChoice sampler_choice(const Options& o) {
  lf::SamplerChoice c;
  if (o.method == "cholesky") c.method = lf::Method::cholesky;
  else if (o.method == "tree") c.method = lf::Method::tree;
  else if (o.method == "hierarchical") c.method = lf::Method::hierarchical;
  else if (o.method == "sheet_grid") c.method = lf::Method::sheet_grid;
  else throw lf::DomainError("unknown method '" + o.method + "'");
  c.hierarchical.levels_per_unit = o.levels;
  c.hierarchical.z_resolution = o.zres;
  if (o.layout == "aligned") c.hierarchical.layout = lf::CellLayout::aligned;
  else if (o.layout != "uniform") throw lf::DomainError("unknown layout '" + o.layout + "'");
  c.sheet_resolution = o.sheet_res;
  return c;
}

std::string now_iso() {
  std::time_t t = std::time(nullptr);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

// ---- commands ----

int run_cov(const Options& o, lf::Artifacts& art) {
  double eps = kernel_scales(o).front();
  lf::KernelSpec k = build_kernel(o, eps);
  lf::CovMatrix m = lf::kernel_matrix(k, lf::field_points(k), o.threads, o.cap);
  art.write("cov.csv", lf::matrix_csv(m.m));
  art.write("points.csv", lf::points_csv(m.points));
  json j{{"schema_version", lf::kSchemaVersion}, {"kernel", lf::to_json(k)}, {"size", m.size()}, {"trace", m.trace()}};
  if (o.min_eig) j["min_eigenvalue"] = lf::min_eigenvalue(m.m);
  art.write_json("cov.json", j);
  return kExitOk;
}

int run_sample(const Options& o, lf::Artifacts& art) {
  double eps = kernel_scales(o).front();
  lf::KernelSpec k = build_kernel(o, eps);
  lf::SamplerChoice c = sampler_choice(o);
  std::string started = now_iso();
  auto s = lf::make_sampler(k, c, o.threads);
  const std::size_t n = s->size(), w = s->batch_width(), nb = (o.M + w - 1) / w;
  Eigen::MatrixXd X(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(o.M));
  lf::parallel_for(nb, lf::resolve_threads(o.threads), [&](std::size_t b) {
    std::size_t lo = b * w, count = std::min(w, o.M - lo);
    s->draw_batch(o.seed, o.label, o.first + lo, count, X.col(static_cast<Eigen::Index>(lo)).data());
  });
  art.write("samples.csv", lf::samples_csv(s->points(), X, o.first));
  json side{{"schema_version", lf::kSchemaVersion},
            {"kernel", lf::to_json(k)},
            {"seed", lf::to_json(lf::SeedSpec{o.seed, o.first, o.label})},
            {"replicas", o.M},
            {"points", n},
            {"method", lf::to_json(c)},
            {"columns", "replica,point_index,coord_1..coord_d,value"}};
  side["timestamps"] = o.timestamps ? json{{"started", started}, {"finished", now_iso()}} : json(nullptr);
  art.write_json("samples.json", side);
  return kExitOk;
}

int run_extremes(const Options& o, lf::Artifacts& art) {
  std::vector<double> scales = kernel_scales(o);
  lf::SamplerChoice c = sampler_choice(o);
  lf::TailOptions topt;
  topt.bootstrap = o.bootstrap;
  json per = json::array();
  std::vector<lf::GapEntry> gaps;
  bool pass = true;
  for (double eps : scales) {
    lf::KernelSpec k = build_kernel(o, eps);
    lf::SeedSpec seed{o.seed, o.first, o.label};
    lf::MaximaRun run = lf::run_maxima(k, c, o.M, seed, o.threads);
    std::string tag = std::to_string(lf::dyadic_exponent(eps));
    std::string csv = scales.size() == 1 ? "maxima.csv" : "maxima_eps2^-" + tag + ".csv";
    art.write(csv, lf::maxima_csv(run, o.first));
    json r{{"kernel", lf::to_json(k)},
           {"sampler", lf::to_json(c)},
           {"seed", lf::to_json(seed)},
           {"replicas", o.M},
           {"points", run.points},
           {"recentering", {{"rule", run.rec.rule}, {"value", run.rec.value}, {"eps", run.rec.eps}}},
           {"maxima_csv", csv}};
    auto grid = lf::auto_lambda_grid(run.maxima, run.rec.value, o.lambda_step);
    lf::TailEstimate te = lf::tail_from_maxima(run.maxima, run.rec.value, grid, topt);
    te.recentering = run.rec.rule;
    r["tail"] = lf::to_json(te);
    lf::LowerBound lb = lf::lower_bound_from_maxima(run.maxima, run.rec.value, o.floor);
    r["lower_bound"] = lf::to_json(lb);
    lf::GapEntry g = lf::gap_entry(run.maxima, run.rec);
    r["gap"] = lf::to_json(g);
    gaps.push_back(g);
    pass = pass && te.right_rate.excludes_zero() && te.left_rate.excludes_zero() && lb.ok();
    per.push_back(r);
  }
  json j{{"schema_version", lf::kSchemaVersion}, {"scales", per}};
  lf::MaxSummary sum = lf::summarize_gaps(gaps, o.slack);
  j["expectation_gap"] = lf::to_json(sum);
  if (scales.size() > 1) pass = pass && sum.flat;
  j["checks_pass"] = pass;
  art.write_json("extremes.json", j);
  return o.require && !pass ? kExitCheck : kExitOk;
}

int run_certify(const Options& o, lf::Artifacts& art) {
  std::vector<double> scales = parse_scales(o.cert_eps);
  lf::CertifyOptions copt;
  copt.delta_grid = lf::dyadic_grid(o.delta_depth);
  if (o.side == "right")
    for (int p = 1; p <= o.p_max; ++p) copt.second_grid.push_back(p);
  else if (o.side == "left")
    copt.second_grid = lf::dyadic_grid(o.rho_depth);
  else
    throw lf::DomainError("unknown side '" + o.side + "'");
  copt.resolution = o.resolution;
  copt.pair_budget = o.pair_budget;
  copt.seed = o.seed;
  copt.threads = o.threads;
  lf::YFamily fam;
  lf::FieldClassParams params;
  json j{{"schema_version", lf::kSchemaVersion}};
  if (o.family == "synthetic") {
    fam = lf::SyntheticMbrw{o.d};
    params = {o.cy >= 0.0 ? o.cy : lf::synthetic_cy(o.d), o.d, lf::CyProvenance::assumed};
  } else if (o.family == "mgff") {
    lf::MgffFamily g;
    g.series.N = o.N;
    fam = g;
    std::vector<double> cs;
    for (double e : scales)
      for (double dl : copt.delta_grid) cs.push_back(dl * e);
    std::sort(cs.begin(), cs.end(), std::greater<>());
    cs.erase(std::unique(cs.begin(), cs.end()), cs.end());
    lf::CyMeasurement m = lf::measure_cy(g, cs, o.cy_pairs, o.seed);
    params = {m.C_Y, 2, lf::CyProvenance::measured};
    j["cy_measurement"] = lf::to_json(m);
  } else {
    throw lf::DomainError("certify: kernel must be synthetic or mgff");
  }
  lf::ComparisonCertificate cert = o.side == "right" ? lf::certify_right(params, fam, scales, copt)
                                                     : lf::certify_left(params, fam, scales, copt);
  j["certificate"] = lf::to_json(cert);
  bool ok = cert.usable();
  if (!o.no_reeval) {
    lf::ReevalReport r = lf::reevaluate(cert, fam);
    j["reevaluation"] = lf::to_json(r);
    ok = ok && r.agrees();
  }
  art.write_json("certificate.json", j);
  return o.require_valid && !ok ? kExitCheck : kExitOk;
}

int run_green_check(const Options& o, lf::Artifacts& art) {
  lf::GreenSeries s;
  s.N = o.N;
  lf::Stream st(lf::SeedSpec{o.seed, 0, "green_check"});
  json sc = json::array();
  double worst = 0.0;
  for (std::size_t i = 0; i < o.pairs; ++i) {
    double u[2] = {0.1 + 0.8 * st.uniform(), 0.1 + 0.8 * st.uniform()};
    double v[2] = {0.1 + 0.8 * st.uniform(), 0.1 + 0.8 * st.uniform()};
    auto c = lf::scaling_identity_check(s, u, v);
    worst = std::max(worst, c.residual);
    sc.push_back({{"u", {u[0], u[1]}}, {"v", {v[0], v[1]}}, {"residual", c.residual}, {"warning", c.warning.has_value()}});
  }
  lf::HarmonicBound hb = lf::harmonic_correction_bound(s, o.k_margin, lf::bulk_points(0.125));
  std::vector<double> radii = parse_scales(o.radii);
  auto rows = lf::moment_sweep(s, lf::MollifierSpec{}, radii, o.k_margin, o.per_kind, o.seed);
  json mom = json::array();
  for (const auto& r : rows)
    mom.push_back({{"eps", r.eps}, {"max_deviation", r.max_deviation}, {"max_ratio", r.max_ratio}, {"pairs", r.pairs}});
  bool pass = worst <= 1e-8 && hb.ok;
  json j{{"schema_version", lf::kSchemaVersion},
         {"series", lf::to_json(s)},
         {"scaling_identity", {{"pairs", sc}, {"max_residual", worst}, {"threshold", 1e-8}}},
         {"harmonic_bound", {{"sup", hb.sup}, {"bound", hb.bound}, {"pairs", hb.pairs}, {"ok", hb.ok}}},
         {"moment_sweep", mom},
         {"checks_pass", pass}};
  art.write_json("green.json", j);
  return o.require && !pass ? kExitCheck : kExitOk;
}

int run_validate_golden(const Options& o, std::optional<lf::Artifacts>& art) {
  lf::GoldenFile g = lf::load_golden(o.golden);
  if (o.tolerance >= 0.0)
    for (auto& e : g.entries) e.tolerance = o.tolerance;
  auto checks = lf::validate_golden(g, o.threads);
  json rows = json::array();
  std::size_t failed = 0;
  for (const auto& c : checks) {
    std::printf("%-32s %s value=%.6g recomputed=%.6g diff=%.3g tol=%.3g\n", c.name.c_str(), c.ok ? "ok  " : "FAIL",
                c.value, c.recomputed, c.diff, c.tolerance);
    rows.push_back({{"name", c.name}, {"value", c.value}, {"recomputed", c.recomputed}, {"diff", c.diff},
                    {"tolerance", c.tolerance}, {"ok", c.ok}});
    if (!c.ok) ++failed;
  }
  if (failed) {
    std::fprintf(stderr, "golden mismatch in %zu entr%s:", failed, failed == 1 ? "y" : "ies");
    for (const auto& c : checks)
      if (!c.ok) std::fprintf(stderr, " %s", c.name.c_str());
    std::fprintf(stderr, "\n");
  }
  if (art) art->write_json("golden_check.json", {{"schema_version", lf::kSchemaVersion}, {"entries", rows}});
  return failed ? kExitCheck : kExitOk;
}

// ---- config file ----

struct ConfigFile {
  std::vector<std::pair<std::string, std::string>> kv;
  std::vector<std::string> problems;
};

std::string trim(std::string s) {
  auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

// key = value lines; '#' comments; quoted strings; [a, b] lists become "a,b"
ConfigFile read_config(const std::string& path) {
  ConfigFile cf;
  std::ifstream in(path);
  if (!in) {
    cf.problems.push_back(path + ": cannot open");
    return cf;
  }
  std::string line;
  for (int no = 1; std::getline(in, line); ++no) {
    std::string s;
    bool quoted = false;
    for (char ch : line) {
      if (ch == '"') quoted = !quoted;
      if (ch == '#' && !quoted) break;
      s += ch;
    }
    s = trim(s);
    if (s.empty()) continue;
    auto eq = s.find('=');
    if (eq == std::string::npos) {
      cf.problems.push_back(path + ":" + std::to_string(no) + ": expected key = value");
      continue;
    }
    std::string key = trim(s.substr(0, eq)), val = trim(s.substr(eq + 1));
    if (val.size() >= 2 && val.front() == '"' && val.back() == '"') val = val.substr(1, val.size() - 2);
    if (val.size() >= 2 && val.front() == '[' && val.back() == ']') {
      std::string inner = val.substr(1, val.size() - 2), joined;
      std::stringstream ss(inner);
      std::string item;
      while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.size() >= 2 && item.front() == '"' && item.back() == '"') item = item.substr(1, item.size() - 2);
        joined += (joined.empty() ? "" : ",") + item;
      }
      val = joined;
    }
    std::replace(key.begin(), key.end(), '_', '-');
    cf.kv.emplace_back(key, val);
  }
  return cf;
}

json resolved_config(const std::string& command, CLI::App* sub) {
  json opts = json::object();
  for (const CLI::Option* opt : sub->get_options()) {
    std::string name = opt->get_single_name();
    if (name == "help" || name == "config" || name == "out" || name == "threads") continue;
    std::string v = opt->count() ? opt->results().back() : opt->get_default_str();
    opts[name] = v;
  }
  return {{"schema_version", lf::kSchemaVersion}, {"command", command}, {"options", opts}};
}

}  // namespace

int main(int argc, char** argv) {
  Options o;
  CLI::App app{"Experiments on log-correlated Gaussian fields"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

  auto common = [&](CLI::App* s) {
    s->add_option("--config", o.config, "TOML-style key = value file; flags win");
    s->add_option("--out", o.out, "output directory");
    s->add_option("--threads", o.threads, "worker threads (0: LOGFIELD_THREADS or 1)");
    s->add_option("--seed", o.seed, "master seed");
  };
  auto kernel = [&](CLI::App* s) {
    s->add_option("--kernel", o.kernel, "mbrw | brw | bsheet | mgff | wplog");
    s->add_option("--d", o.d, "dimension");
    s->add_option("--eps", o.eps, "scale 2^-k (lists: a,b or a..b)");
    s->add_option("--n", o.n, "scale exponent; overrides --eps when > 0");
    s->add_option("--p", o.p, "Brownian sheet p");
    s->add_option("--N", o.N, "Green series truncation");
    s->add_option("--route", o.route, "mgff mollifier route: split | analytic | quadrature");
    s->add_option("--green-scale", o.green_scale, "matched | standard");
    s->add_option("--R", o.R, "wplog radius constant");
  };
  auto sampler = [&](CLI::App* s) {
    s->add_option("--method", o.method, "cholesky | tree | hierarchical | sheet_grid");
    s->add_option("--levels", o.levels, "hierarchical slabs per log 2");
    s->add_option("--zres", o.zres, "hierarchical cells per unit length");
    s->add_option("--layout", o.layout, "hierarchical cell layout: uniform | aligned");
    s->add_option("--sheet-res", o.sheet_res, "sheet_grid points per box side");
    s->add_option("--M", o.M, "replicas");
    s->add_option("--first", o.first, "first replica index");
    s->add_option("--label", o.label, "stream label");
  };

  auto* cov = app.add_subcommand("cov", "covariance matrix of a kernel on its lattice");
  common(cov);
  kernel(cov);
  cov->add_option("--cap", o.cap, "maximum points");
  cov->add_flag("--min-eig", o.min_eig, "also report the minimum eigenvalue");

  auto* sample = app.add_subcommand("sample", "draw field replicas");
  common(sample);
  kernel(sample);
  sampler(sample);
  sample->add_flag("--timestamps", o.timestamps, "record wall-clock times in the sidecar");

  auto* ext = app.add_subcommand("extremes", "maxima, tails, lower bound and expectation gap");
  common(ext);
  kernel(ext);
  sampler(ext);
  ext->add_option("--lambda-step", o.lambda_step, "tail grid step");
  ext->add_option("--bootstrap", o.bootstrap, "bootstrap resamples for rate CIs");
  ext->add_option("--floor", o.floor, "lower-bound floor");
  ext->add_option("--slack", o.slack, "expectation-gap slack");
  ext->add_flag("--require", o.require, "exit 2 when a check fails");

  auto* cert = app.add_subcommand("certify", "comparison certificates");
  common(cert);
  cert->add_option("--side", o.side, "right | left");
  cert->add_option("--kernel", o.family, "synthetic | mgff");
  cert->add_option("--d", o.d, "dimension (synthetic)");
  cert->add_option("--eps", o.cert_eps, "scales 2^-k (lists: a,b or a..b)");
  cert->add_option("--N", o.N, "Green series truncation (mgff)");
  cert->add_option("--cy", o.cy, "C_Y for the synthetic kernel (negative: analytic value)");
  cert->add_option("--cy-pairs", o.cy_pairs, "pairs per kind per scale when measuring C_Y");
  cert->add_option("--pair-budget", o.pair_budget, "sampled pairs per scale");
  cert->add_option("--resolution", o.resolution, "points per box side (right)");
  cert->add_option("--delta-depth", o.delta_depth, "delta grid 1..2^-k");
  cert->add_option("--p-max", o.p_max, "p grid 1..p_max");
  cert->add_option("--rho-depth", o.rho_depth, "rho grid 1..2^-k");
  cert->add_flag("--no-reeval", o.no_reeval, "skip the independent re-evaluation");
  cert->add_flag("--require-valid", o.require_valid, "exit 2 unless a usable certificate is found");

  auto* green = app.add_subcommand("green-check", "Green function identities and moment bounds");
  common(green);
  green->add_option("--N", o.N, "series truncation");
  green->add_option("--pairs", o.pairs, "random pairs for the scaling identity");
  green->add_option("--k-margin", o.k_margin, "bulk margin");
  green->add_option("--eps", o.radii, "mollifier radii for the moment sweep");
  green->add_option("--per-kind", o.per_kind, "moment pairs per kind per radius");
  green->add_flag("--require", o.require, "exit 2 when a check fails");

  auto* vg = app.add_subcommand("validate-golden", "re-run golden experiments at reduced budget");
  vg->add_option("golden", o.golden, "golden-values file");
  vg->add_option("--config", o.config, "TOML-style key = value file; flags win");
  vg->add_option("--out", o.out, "output directory (optional)");
  vg->add_option("--threads", o.threads, "worker threads");
  vg->add_option("--tolerance", o.tolerance, "override every tolerance (negative: use the file)");

  auto* cal = app.add_subcommand("calibrate-golden", "run the calibration and write a golden-values file");
  cal->add_option("--write", o.golden, "destination");
  cal->add_option("--threads", o.threads, "worker threads");

  // splice config entries in front of the command-line flags so flags win
  std::vector<std::string> args(argv + 1, argv + argc);
  if (!args.empty()) {
    CLI::App* sub = nullptr;
    for (auto* s : app.get_subcommands({}))
      if (s->get_name() == args[0]) sub = s;
    std::string cfg;
    for (std::size_t i = 1; i < args.size(); ++i) {
      if (args[i] == "--config" && i + 1 < args.size()) cfg = args[i + 1];
      else if (args[i].rfind("--config=", 0) == 0) cfg = args[i].substr(9);
    }
    if (sub && !cfg.empty()) {
      ConfigFile cf = read_config(cfg);
      for (const auto& [k, v] : cf.kv) {
        const CLI::Option* opt = sub->get_option_no_throw("--" + k);
        if (!opt || k == "config") cf.problems.push_back(cfg + ": unknown key '" + k + "' for " + sub->get_name());
      }
      if (!cf.problems.empty()) {
        std::fprintf(stderr, "config errors (%zu):\n", cf.problems.size());
        for (const auto& p : cf.problems) std::fprintf(stderr, "  %s\n", p.c_str());
        return kExitError;
      }
      std::vector<std::string> spliced{args[0]};
      for (const auto& [k, v] : cf.kv) spliced.push_back("--" + k + "=" + v);
      spliced.insert(spliced.end(), args.begin() + 1, args.end());
      args = std::move(spliced);
    }
  }
  std::reverse(args.begin(), args.end());
  try {
    app.parse(args);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitError;
  }

  CLI::App* sub = app.get_subcommands().front();
  const std::string cmd = sub->get_name();
  try {
    if (cmd == "calibrate-golden") {
      lf::GoldenFile g = lf::calibrate_golden(o.threads);
      std::ofstream out(o.golden);
      out << lf::golden_to_json(g).dump(2) << "\n";
      if (!out) throw std::runtime_error("cannot write " + o.golden);
      return kExitOk;
    }
    std::optional<lf::Artifacts> art;
    if (cmd != "validate-golden" || sub->get_option("--out")->count()) {
      art.emplace(o.out);
      art->write_json("config.json", resolved_config(cmd, sub));
    }
    int rc = kExitOk;
    if (cmd == "cov") rc = run_cov(o, *art);
    else if (cmd == "sample") rc = run_sample(o, *art);
    else if (cmd == "extremes") rc = run_extremes(o, *art);
    else if (cmd == "certify") rc = run_certify(o, *art);
    else if (cmd == "green-check") rc = run_green_check(o, *art);
    else if (cmd == "validate-golden") rc = run_validate_golden(o, art);
    if (art) art->finish();
    return rc;
  } catch (const lf::GoldenParseError& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return kExitError;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitError;
  }
}
