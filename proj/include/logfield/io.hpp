#pragma once

#include <array>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <openssl/evp.h>

#include <json.hpp>

#include "logfield/comparison.hpp"
#include "logfield/extremes.hpp"
#include "logfield/samplers.hpp"

namespace logfield {

using json = nlohmann::ordered_json;

inline constexpr int kSchemaVersion = 1;

// Shortest decimal that parses back to the same double.
inline std::string format_double(double x) {
  std::array<char, 32> buf;
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), x);
  if (ec != std::errc()) throw std::runtime_error("format_double: conversion failed");
  return std::string(buf.data(), end);
}

inline std::string sha256_hex(std::string_view data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("sha256: digest failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 15];
  }
  return out;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Output directory whose manifest is written before anything else and
// rewritten after every file, so a crash leaves complete=false plus a hash
// for each file already on disk.
class Artifacts {
 public:
  explicit Artifacts(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::filesystem::create_directories(dir_);
    flush();
  }

  const std::filesystem::path& dir() const { return dir_; }

  void write(const std::string& name, std::string_view content) {
    if (name == kManifest) throw std::invalid_argument("artifact name is reserved: " + name);
    std::ofstream out(dir_ / name, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + (dir_ / name).string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.close();
    if (!out) throw std::runtime_error("write failed: " + (dir_ / name).string());
    for (auto& f : files_)
      if (f.name == name) {
        f = {name, content.size(), sha256_hex(content)};
        flush();
        return;
      }
    files_.push_back({name, content.size(), sha256_hex(content)});
    flush();
  }

  void write_json(const std::string& name, const json& j) { write(name, j.dump(2) + "\n"); }

  void finish() {
    complete_ = true;
    flush();
  }

  json manifest() const {
    json j;
    j["schema_version"] = kSchemaVersion;
    j["complete"] = complete_;
    j["files"] = json::array();
    for (const auto& f : files_) j["files"].push_back({{"name", f.name}, {"bytes", f.bytes}, {"sha256", f.sha}});
    return j;
  }

  static constexpr const char* kManifest = "manifest.json";

 private:
  struct Entry {
    std::string name;
    std::size_t bytes;
    std::string sha;
  };

  void flush() const {
    std::ofstream out(dir_ / kManifest, std::ios::binary | std::ios::trunc);
    out << manifest().dump(2) << "\n";
    if (!out) throw std::runtime_error("cannot write manifest in " + dir_.string());
  }

  std::filesystem::path dir_;
  std::vector<Entry> files_;
  bool complete_ = false;
};

// ---- CSV ----

inline std::string matrix_csv(const Eigen::MatrixXd& m) {
  std::string s;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j) s += ',';
      s += format_double(m(i, j));
    }
    s += '\n';
  }
  return s;
}

inline std::string points_csv(const PointSet& p) {
  std::string s = "point_index";
  for (int i = 1; i <= p.d; ++i) s += ",coord_" + std::to_string(i);
  s += '\n';
  for (std::size_t k = 0; k < p.size(); ++k) {
    s += std::to_string(k);
    for (double c : p[k]) s += ',' + format_double(c);
    s += '\n';
  }
  return s;
}

// columns: replica, point_index, coord_1..coord_d, value
inline std::string samples_csv(const PointSet& p, const Eigen::MatrixXd& X, std::uint64_t first_replica) {
  std::string s = "replica,point_index";
  for (int i = 1; i <= p.d; ++i) s += ",coord_" + std::to_string(i);
  s += ",value\n";
  std::vector<std::string> coords(p.size());
  for (std::size_t k = 0; k < p.size(); ++k)
    for (double c : p[k]) coords[k] += ',' + format_double(c);
  for (Eigen::Index r = 0; r < X.cols(); ++r)
    for (std::size_t k = 0; k < p.size(); ++k) {
      s += std::to_string(first_replica + static_cast<std::uint64_t>(r));
      s += ',';
      s += std::to_string(k);
      s += coords[k];
      s += ',';
      s += format_double(X(static_cast<Eigen::Index>(k), r));
      s += '\n';
    }
  return s;
}

inline std::string maxima_csv(const MaximaRun& run, std::uint64_t first_replica) {
  std::string s = "replica,max,argmax,max_minus_m\n";
  for (std::size_t r = 0; r < run.maxima.size(); ++r)
    s += std::to_string(first_replica + r) + ',' + format_double(run.maxima[r]) + ',' + std::to_string(run.argmax[r]) +
         ',' + format_double(run.maxima[r] - run.rec.value) + '\n';
  return s;
}

// ---- JSON ----

inline json to_json(const SeedSpec& s) {
  return {{"master_seed", s.master_seed}, {"replica_index", s.replica_index}, {"stream_label", s.stream_label}};
}

inline const char* to_string(GreenScale s) { return s == GreenScale::matched ? "matched" : "standard"; }

inline json to_json(const GreenSeries& g) { return {{"N", g.N}, {"side", g.side}, {"scale", to_string(g.scale)}}; }

inline json to_json(const MollifierSpec& m) {
  return {{"eps", m.eps},
          {"route", to_string(m.route)},
          {"radial_nodes", m.radial_nodes},
          {"angular_nodes", m.angular_nodes},
          {"clip", m.clip}};
}

inline json to_json(const KernelSpec& k) {
  json j;
  j["kernel"] = kernel_name(k);
  std::visit(
      [&](const auto& s) {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, Mbrw>) {
          j["d"] = s.d;
          j["eps"] = s.eps;
        } else if constexpr (std::is_same_v<T, Brw>) {
          j["d"] = s.d;
          j["n"] = s.n;
        } else if constexpr (std::is_same_v<T, BrownianSheet>) {
          j["d"] = s.d;
          j["eps"] = s.eps;
          j["p"] = s.p;
        } else if constexpr (std::is_same_v<T, Mgff>) {
          j["mollifier"] = to_json(s.mollifier);
          j["series"] = to_json(s.series);
        } else {
          j["eps"] = s.eps;
          j["R"] = s.R;
        }
      },
      k);
  return j;
}

inline json to_json(const HierarchicalConfig& c) {
  return {{"levels_per_unit", c.levels_per_unit},
          {"z_resolution", c.z_resolution},
          {"layout", to_string(c.layout)},
          {"cell_budget", c.cell_budget}};
}

inline json to_json(const SamplerChoice& c) {
  json j{{"method", to_string(c.method)}};
  if (c.method == Method::hierarchical) j["hierarchical"] = to_json(c.hierarchical);
  if (c.method == Method::sheet_grid) j["sheet_resolution"] = c.sheet_resolution;
  return j;
}

inline json to_json(const Interval& i) { return {{"lo", i.lo}, {"hi", i.hi}}; }

inline json to_json(const TailCurve& c) {
  return {{"count", c.count}, {"raw", c.raw}, {"iso", c.iso}, {"lo", c.lo}, {"hi", c.hi}, {"flagged", c.flagged}};
}

inline json to_json(const RateFit& r) {
  return {{"ok", r.ok},         {"rate", r.rate},           {"intercept", r.intercept},
          {"ci_lo", r.ci_lo},   {"ci_hi", r.ci_hi},         {"points", r.points},
          {"lambda_lo", r.lambda_lo}, {"lambda_hi", r.lambda_hi}, {"excludes_zero", r.excludes_zero()}};
}

inline json to_json(const TailEstimate& t) {
  return {{"replicas", t.replicas},       {"m_ref", t.m_ref},          {"recentering", t.recentering},
          {"lambda_grid", t.lambda_grid}, {"right", to_json(t.right)}, {"left", to_json(t.left)},
          {"right_rate", to_json(t.right_rate)}, {"left_rate", to_json(t.left_rate)}};
}

inline json to_json(const LowerBound& b) {
  return {{"p", b.p}, {"ci", to_json(b.ci)}, {"count", b.count}, {"replicas", b.replicas}, {"floor", b.floor},
          {"ok", b.ok()}};
}

inline json to_json(const GapEntry& g) {
  return {{"eps", g.eps}, {"mean_max", g.mean_max}, {"se", g.se}, {"m_ref", g.m_ref}, {"gap", g.gap}};
}

inline json to_json(const MaxSummary& s) {
  json sw = json::array();
  for (const auto& g : s.sweep) sw.push_back(to_json(g));
  return {{"sweep", sw},       {"slack", s.slack}, {"bounded_lhs", s.bounded_lhs}, {"bounded_rhs", s.bounded_rhs},
          {"bounded", s.bounded}, {"band", s.band}, {"band_limit", s.band_limit},   {"flat", s.flat}};
}

inline json to_json(const FieldClassParams& p) {
  return {{"C_Y", p.C_Y}, {"d", p.d}, {"provenance", to_string(p.provenance)}};
}

inline json to_json(const Inequality& q, const ComparisonCertificate& c) {
  json j{{"kind", to_string(q.kind)}, {"role", to_string(role_of(q.kind))}, {"eps_index", q.eps_index},
         {"lhs", q.lhs},             {"rhs", q.rhs},                        {"margin", q.margin()}};
  auto pt = [&](std::int64_t i) -> json {
    if (i < 0 || q.eps_index >= c.point_sets.size()) return nullptr;
    auto s = c.point_sets[q.eps_index][static_cast<std::size_t>(i)];
    return std::vector<double>(s.begin(), s.end());
  };
  j["x"] = pt(q.i);
  j["y"] = pt(q.j);
  return j;
}

inline json to_json(const ComparisonCertificate& c, std::size_t worst = 20) {
  json j;
  j["side"] = to_string(c.side);
  j["family"] = c.family;
  j["params"] = to_json(c.params);
  j["delta"] = c.delta;
  j[c.side == Side::right ? "p" : "rho"] = c.p_or_rho;
  if (c.side == Side::right) j["resolution"] = c.resolution;
  j["eps_tested"] = c.eps_tested;
  j["grid"] = {{"points", c.points}, {"pairs", c.pairs}, {"exhaustive", c.exhaustive}};
  j["valid"] = c.valid;
  j["valid_direct"] = c.valid_direct;
  j["degenerate"] = c.degenerate;
  j["min_margin"] = c.min_margin;
  j["min_margin_direct"] = c.min_margin_direct;
  j["violations"] = c.violations;
  j["inequalities"] = c.ledger.size();
  j["candidates_scanned"] = c.candidates_scanned;
  j["margin_tolerance"] = Inequality::kMarginTol;
  json w = json::array();
  for (const auto& q : worst_offenders(c, worst)) w.push_back(to_json(q, c));
  j["worst_offenders"] = w;
  return j;
}

inline json to_json(const ReevalReport& r) {
  return {{"entries", r.entries},     {"checked", r.checked},         {"skipped", r.skipped},
          {"failures", r.failures},   {"violations", r.violations},   {"max_abs_diff", r.max_abs_diff},
          {"min_margin", r.min_margin}, {"tolerance", r.tolerance}, {"agrees", r.agrees()}};
}

inline json to_json(const CyMeasurement& m) {
  return {{"C_Y", m.C_Y}, {"max_deviation", m.max_deviation}, {"max_ratio", m.max_ratio}, {"pairs", m.pairs},
          {"scales", m.scales}};
}

inline json to_json(const BarrierEstimate& b) {
  return {{"T", b.T},     {"steps_per_unit", b.steps_per_unit}, {"replicas", b.replicas}, {"hits", b.hits},
          {"p", b.p},     {"se", b.se},                         {"ci", to_json(b.ci)},    {"scaled", b.scaled}};
}

}  // namespace logfield
