#pragma once

#include <cmath>
#include <filesystem>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "logfield/comparison.hpp"
#include "logfield/extremes.hpp"
#include "logfield/green.hpp"
#include "logfield/io.hpp"
#include "logfield/matrix.hpp"
#include "logfield/samplers.hpp"

namespace logfield {

// Golden values: calibrated constants with their generating seeds. Each
// entry re-runs at a (possibly reduced) budget and must land within
// `tolerance` of `value`.

struct GoldenParseError : std::runtime_error {
  std::vector<std::string> problems;
  explicit GoldenParseError(std::vector<std::string> p)
      : std::runtime_error(join(p)), problems(std::move(p)) {}

  static std::string join(const std::vector<std::string>& p) {
    std::string s = "golden file: " + std::to_string(p.size()) + " problem(s)";
    for (const auto& x : p) s += "\n  " + x;
    return s;
  }
};

struct GoldenEntry {
  std::string name;
  std::string kind;
  json params;
  std::uint64_t seed = 0;
  double value = 0.0;
  double tolerance = 0.0;
};

struct GoldenFile {
  int schema_version = kSchemaVersion;
  json constants;
  std::vector<GoldenEntry> entries;

  const GoldenEntry& at(const std::string& name) const {
    for (const auto& e : entries)
      if (e.name == name) return e;
    throw std::out_of_range("golden entry not found: " + name);
  }
  double constant(const std::string& key) const { return constants.at(key).get<double>(); }
};

inline const std::map<std::string, std::vector<std::string>>& golden_kinds() {
  static const std::map<std::string, std::vector<std::string>> k{
      {"hier_discrepancy", {"d", "n", "levels", "zres", "layout"}},
      {"moment_deviation", {"radius_exponents", "k_margin", "per_kind"}},
      {"moment_ratio", {"radius_exponents", "k_margin", "per_kind"}},
      {"harmonic_sup", {"N", "k_margin", "grid_exponent"}},
      {"lower_bound", {"d", "n", "M", "M_reduced"}},
      {"expectation_gap", {"d", "n", "M", "M_reduced"}},
      {"barrier_scaled", {"T", "steps_per_unit", "M", "M_reduced"}},
      {"mgff_cy", {"eps_exponent", "delta_depth", "per_kind"}},
  };
  return k;
}

inline GoldenFile parse_golden(const json& j) {
  std::vector<std::string> bad;
  GoldenFile g;
  if (!j.is_object()) throw GoldenParseError({"top level: expected an object"});
  if (!j.contains("schema_version") || !j["schema_version"].is_number_integer())
    bad.push_back("schema_version: missing or not an integer");
  else if (j["schema_version"].get<int>() != kSchemaVersion)
    bad.push_back("schema_version: unsupported value " + j["schema_version"].dump());
  if (!j.contains("constants") || !j["constants"].is_object())
    bad.push_back("constants: missing or not an object");
  else
    g.constants = j["constants"];
  if (!j.contains("entries") || !j["entries"].is_array()) {
    bad.push_back("entries: missing or not an array");
    throw GoldenParseError(bad);
  }
  std::set<std::string> names;
  for (std::size_t i = 0; i < j["entries"].size(); ++i) {
    const json& e = j["entries"][i];
    const std::string at = "entries[" + std::to_string(i) + "]";
    if (!e.is_object()) {
      bad.push_back(at + ": expected an object");
      continue;
    }
    GoldenEntry ge;
    auto need = [&](const char* key, auto pred, const char* what) {
      if (!e.contains(key) || !pred(e[key])) {
        bad.push_back(at + "." + key + ": missing or not " + what);
        return false;
      }
      return true;
    };
    auto is_str = [](const json& v) { return v.is_string(); };
    auto is_num = [](const json& v) { return v.is_number(); };
    auto is_uint = [](const json& v) { return v.is_number_unsigned() || (v.is_number_integer() && v.get<long long>() >= 0); };
    auto is_obj = [](const json& v) { return v.is_object(); };
    if (need("name", is_str, "a string")) ge.name = e["name"];
    if (need("kind", is_str, "a string")) ge.kind = e["kind"];
    if (need("params", is_obj, "an object")) ge.params = e["params"];
    if (need("seed", is_uint, "a non-negative integer")) ge.seed = e["seed"].get<std::uint64_t>();
    if (need("value", is_num, "a number")) ge.value = e["value"];
    if (need("tolerance", is_num, "a number")) {
      ge.tolerance = e["tolerance"];
      if (ge.tolerance < 0.0) bad.push_back(at + ".tolerance: negative");
    }
    if (!ge.name.empty() && !names.insert(ge.name).second) bad.push_back(at + ".name: duplicate '" + ge.name + "'");
    if (!ge.kind.empty()) {
      auto it = golden_kinds().find(ge.kind);
      if (it == golden_kinds().end()) {
        bad.push_back(at + ".kind: unknown '" + ge.kind + "'");
      } else if (ge.params.is_object()) {
        for (const auto& key : it->second)
          if (!ge.params.contains(key)) bad.push_back(at + ".params." + key + ": missing");
      }
    }
    g.entries.push_back(std::move(ge));
  }
  if (!bad.empty()) throw GoldenParseError(bad);
  return g;
}

inline GoldenFile load_golden(const std::filesystem::path& p) {
  json j;
  try {
    j = json::parse(read_file(p));
  } catch (const json::parse_error& e) {
    throw GoldenParseError({p.string() + ": " + e.what()});
  }
  return parse_golden(j);
}

inline json golden_to_json(const GoldenFile& g) {
  json j;
  j["schema_version"] = g.schema_version;
  j["constants"] = g.constants;
  j["entries"] = json::array();
  for (const auto& e : g.entries)
    j["entries"].push_back({{"name", e.name},
                            {"kind", e.kind},
                            {"params", e.params},
                            {"seed", e.seed},
                            {"value", e.value},
                            {"tolerance", e.tolerance}});
  return j;
}

// ---- experiments behind each kind ----

inline double hier_discrepancy(int d, int n, const HierarchicalConfig& cfg, int threads = 1) {
  Mbrw m{d, std::ldexp(1.0, -n)};
  HierarchicalMbrwSampler s(m, cfg);
  PointSet P = m.lattice().points();
  std::vector<double> row(P.size(), 0.0);
  parallel_for(P.size(), resolve_threads(threads), [&](std::size_t i) {
    for (std::size_t j = 0; j <= i; ++j)
      row[i] = std::max(row[i], std::abs(s.implied_cov(P[i], P[j]) - mbrw_cov(m, P[i], P[j])));
  });
  return *std::max_element(row.begin(), row.end());
}

inline std::vector<double> radii_from_exponents(const json& ex) {
  std::vector<double> r;
  for (const auto& k : ex) r.push_back(std::ldexp(1.0, -k.get<int>()));
  return r;
}

inline double harmonic_sup(int N, double k_margin, int grid_exponent) {
  GreenSeries s;
  s.N = N;
  return harmonic_correction_bound(s, k_margin, bulk_points(std::ldexp(1.0, -grid_exponent))).sup;
}

inline std::vector<double> mgff_cy_scales(int eps_exponent, int delta_depth) {
  std::vector<double> sc;
  for (int k = 0; k <= delta_depth; ++k) sc.push_back(std::ldexp(1.0, -eps_exponent - k));
  return sc;
}

inline MaximaRun golden_maxima(const GoldenEntry& e, bool reduced, int threads) {
  const json& p = e.params;
  std::size_t M = reduced ? p.at("M_reduced").get<std::size_t>() : p.at("M").get<std::size_t>();
  Mbrw k{p.at("d").get<int>(), std::ldexp(1.0, -p.at("n").get<int>())};
  return run_maxima(KernelSpec{k}, SamplerChoice{}, M, SeedSpec{e.seed, 0, e.name}, threads);
}

inline double run_golden(const GoldenEntry& e, bool reduced, int threads = 1) {
  const json& p = e.params;
  if (e.kind == "hier_discrepancy") {
    HierarchicalConfig c;
    c.levels_per_unit = p.at("levels");
    c.z_resolution = p.at("zres");
    c.layout = p.at("layout").get<std::string>() == "aligned" ? CellLayout::aligned : CellLayout::uniform;
    return hier_discrepancy(p.at("d"), p.at("n"), c, threads);
  }
  if (e.kind == "moment_deviation" || e.kind == "moment_ratio") {
    auto rows = moment_sweep(GreenSeries{}, MollifierSpec{}, radii_from_exponents(p.at("radius_exponents")),
                             p.at("k_margin"), p.at("per_kind"), e.seed);
    double v = 0.0;
    for (const auto& r : rows) v = std::max(v, e.kind == "moment_deviation" ? r.max_deviation : r.max_ratio);
    return v;
  }
  if (e.kind == "harmonic_sup") return harmonic_sup(p.at("N"), p.at("k_margin"), p.at("grid_exponent"));
  if (e.kind == "lower_bound") {
    MaximaRun run = golden_maxima(e, reduced, threads);
    return lower_bound_from_maxima(run.maxima, run.rec.value).p;
  }
  if (e.kind == "expectation_gap") {
    MaximaRun run = golden_maxima(e, reduced, threads);
    return gap_entry(run.maxima, run.rec).gap;
  }
  if (e.kind == "barrier_scaled") {
    std::size_t M = reduced ? p.at("M_reduced").get<std::size_t>() : p.at("M").get<std::size_t>();
    return barrier_probability(p.at("T"), p.at("steps_per_unit"), M, SeedSpec{e.seed, 0, e.name}, threads).scaled;
  }
  if (e.kind == "mgff_cy")
    return measure_cy(MgffFamily{}, mgff_cy_scales(p.at("eps_exponent"), p.at("delta_depth")), p.at("per_kind"), e.seed)
        .C_Y;
  throw DomainError("golden: unknown kind " + e.kind);
}

struct GoldenCheck {
  std::string name;
  double value = 0.0, recomputed = 0.0, diff = 0.0, tolerance = 0.0;
  bool ok = false;
};

inline std::vector<GoldenCheck> validate_golden(const GoldenFile& g, int threads = 1) {
  std::vector<GoldenCheck> out;
  for (const auto& e : g.entries) {
    GoldenCheck c;
    c.name = e.name;
    c.value = e.value;
    c.tolerance = e.tolerance;
    c.recomputed = run_golden(e, true, threads);
    c.diff = std::abs(c.recomputed - e.value);
    c.ok = c.diff <= e.tolerance;
    out.push_back(c);
  }
  return out;
}

inline constexpr std::uint64_t kCalibrationSeed = 20261016;

// Entry definitions with their tolerances; values are filled by calibrate_golden.
inline GoldenFile golden_template() {
  GoldenFile g;
  g.constants = {{"lower_bound_floor", 0.01}, {"expectation_slack", 1.0}, {"calibration_seed", kCalibrationSeed}};
  auto add = [&](std::string name, std::string kind, json params, double tol) {
    g.entries.push_back({std::move(name), std::move(kind), std::move(params), kCalibrationSeed, 0.0, tol});
  };
  add("hier_mbrw_d1_n6_L8_z8", "hier_discrepancy", {{"d", 1}, {"n", 6}, {"levels", 8}, {"zres", 8}, {"layout", "uniform"}},
      0.005);
  add("hier_mbrw_d2_n5_L8_z8", "hier_discrepancy", {{"d", 2}, {"n", 5}, {"levels", 8}, {"zres", 8}, {"layout", "uniform"}},
      0.005);
  json sweep{{"radius_exponents", {3, 4, 5, 6, 7}}, {"k_margin", 0.25}, {"per_kind", 40}};
  add("mgff_moment_deviation", "moment_deviation", sweep, 0.02);
  add("mgff_moment_ratio", "moment_ratio", sweep, 0.02);
  add("green_harmonic_sup", "harmonic_sup", {{"N", 400}, {"k_margin", 0.25}, {"grid_exponent", 3}}, 1e-6);
  json mc{{"d", 1}, {"n", 6}, {"M", 10000}, {"M_reduced", 2000}};
  add("mbrw_d1_n6_lower_bound", "lower_bound", mc, 0.06);
  add("mbrw_d1_n6_expectation_gap", "expectation_gap", mc, 0.12);
  add("barrier_T16", "barrier_scaled", {{"T", 16}, {"steps_per_unit", 16}, {"M", 100000}, {"M_reduced", 20000}}, 0.15);
  add("mgff_cy_eps5", "mgff_cy", {{"eps_exponent", 5}, {"delta_depth", 8}, {"per_kind", 50}}, 0.02);
  return g;
}

inline GoldenFile calibrate_golden(int threads = 1) {
  GoldenFile g = golden_template();
  for (auto& e : g.entries) e.value = run_golden(e, false, threads);
  return g;
}

}  // namespace logfield
