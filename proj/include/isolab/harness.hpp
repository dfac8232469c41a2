#ifndef ISOLAB_HARNESS_HPP
#define ISOLAB_HARNESS_HPP

#include <Eigen/Dense>
#include <algorithm>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "isolab/error.hpp"
#include "isolab/isotropy.hpp"
#include "isolab/kernels.hpp"
#include "isolab/losses.hpp"
#include "isolab/optimize.hpp"

namespace isolab {

using Json = nlohmann::ordered_json;

inline constexpr const char* kVersion = "1.0.0";

struct RunPhase {
  OptimizerSettings settings;
  std::size_t start_count = 0;
  bool newton_polish = false;  // GD phases: finish each run with Newton
};

struct IsotropyOptions {
  double tol = kDefaultIsotropyTol;
  double symmetrize_tol = 3e-2;  // 0 disables symmetrize_polish
  bool edge = true;
};

struct OrbitOptions {
  ContinuousSymmetry mode = ContinuousSymmetry::None;
  double tol = 1e-4;
  bool count_members = false;
};

struct CensusOptions {
  std::vector<double> known_losses;
  double loss_tol = 1e-2;
  int probe_trials = 16;
  double probe_radius = 1e-2;
};

struct ExperimentConfig {
  std::string name;
  Json instance;
  std::vector<RunPhase> phases;
  std::uint64_t base_seed = 0;
  IsotropyOptions isotropy;
  OrbitOptions orbits;
  CensusOptions census;
  bool keep_records = true;
  std::string results_path;
  std::string report_path;
  std::filesystem::path base_dir;  // relative data files resolve against this
  Json source;                     // the config as given, echoed into results

  std::size_t start_count() const {
    std::size_t n = 0;
    for (const auto& p : phases) n += p.start_count;
    return n;
  }
};

namespace detail {

inline std::string join_path(const std::string& base, const std::string& key) {
  return base.empty() ? key : base + "." + key;
}

inline void expect_object(const Json& j, const std::string& path) {
  if (!j.is_object()) throw ConfigError(path.empty() ? "<root>" : path, "expected an object");
}

inline void expect_keys(const Json& j, const std::string& path, std::initializer_list<const char*> allowed) {
  expect_object(j, path);
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || it.key() == a;
    if (!ok) throw ConfigError(join_path(path, it.key()), "unknown field");
  }
}

inline const Json& require(const Json& j, const std::string& path, const char* key) {
  if (!j.contains(key)) throw ConfigError(join_path(path, key), "missing required field");
  return j.at(key);
}

inline double get_number(const Json& j, const std::string& path, const char* key, std::optional<double> def = {}) {
  if (!j.contains(key)) {
    if (def) return *def;
    throw ConfigError(join_path(path, key), "missing required field");
  }
  const Json& v = j.at(key);
  if (!v.is_number()) throw ConfigError(join_path(path, key), "expected a number");
  return v.get<double>();
}

inline long long get_int(const Json& j, const std::string& path, const char* key, std::optional<long long> def = {}) {
  if (!j.contains(key)) {
    if (def) return *def;
    throw ConfigError(join_path(path, key), "missing required field");
  }
  const Json& v = j.at(key);
  if (!v.is_number_integer()) throw ConfigError(join_path(path, key), "expected an integer");
  return v.get<long long>();
}

inline bool get_bool(const Json& j, const std::string& path, const char* key, bool def) {
  if (!j.contains(key)) return def;
  const Json& v = j.at(key);
  if (!v.is_boolean()) throw ConfigError(join_path(path, key), "expected true or false");
  return v.get<bool>();
}

inline std::string get_string(const Json& j, const std::string& path, const char* key,
                              std::optional<std::string> def = {}) {
  if (!j.contains(key)) {
    if (def) return *def;
    throw ConfigError(join_path(path, key), "missing required field");
  }
  const Json& v = j.at(key);
  if (!v.is_string()) throw ConfigError(join_path(path, key), "expected a string");
  return v.get<std::string>();
}

inline std::vector<Monomial> parse_terms(const Json& terms, const std::string& path) {
  if (!terms.is_array()) throw ConfigError(path, "expected an array of [coeff, [e1, e2, e3, e4]]");
  std::vector<Monomial> out;
  for (std::size_t i = 0; i < terms.size(); ++i) {
    const std::string p = path + "[" + std::to_string(i) + "]";
    const Json& t = terms[i];
    if (!t.is_array() || t.size() != 2 || !t[0].is_number() || !t[1].is_array() || t[1].size() != 4) {
      throw ConfigError(p, "expected [coeff, [e1, e2, e3, e4]]");
    }
    Monomial m;
    m.coeff = t[0].get<double>();
    for (int k = 0; k < 4; ++k) {
      if (!t[1][k].is_number_integer() || t[1][k].get<int>() < 0) {
        throw ConfigError(p + "[1][" + std::to_string(k) + "]", "exponent must be a nonnegative integer");
      }
      m.exps[k] = t[1][k].get<int>();
    }
    out.push_back(m);
  }
  return out;
}

inline Json read_json_file(const std::filesystem::path& file, const std::string& path) {
  std::ifstream in(file);
  if (!in) throw ConfigError(path, "cannot open " + file.string());
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ConfigError(path, std::string("invalid JSON in ") + file.string() + ": " + e.what());
  }
}

}  // namespace detail

inline Kernel parse_kernel(const Json& j, const std::string& path, const std::filesystem::path& base_dir = {}) {
  detail::expect_object(j, path);
  const std::string family = detail::get_string(j, path, "family");
  Kernel k;
  if (family == "inner_power") {
    detail::expect_keys(j, path, {"family", "d"});
    k = InnerPower{static_cast<int>(detail::get_int(j, path, "d"))};
  } else if (family == "inner_power_pair") {
    detail::expect_keys(j, path, {"family", "d", "qexp", "c"});
    k = InnerPowerPair{static_cast<int>(detail::get_int(j, path, "d")),
                       static_cast<int>(detail::get_int(j, path, "qexp")), detail::get_number(j, path, "c")};
  } else if (family == "distance_power") {
    detail::expect_keys(j, path, {"family", "p", "qexp", "c"});
    k = DistancePower{static_cast<int>(detail::get_int(j, path, "p")),
                      static_cast<int>(detail::get_int(j, path, "qexp")), detail::get_number(j, path, "c")};
  } else if (family == "repulsive") {
    detail::expect_keys(j, path, {"family"});
    k = Repulsive{};
  } else if (family == "sparse_poly") {
    detail::expect_keys(j, path, {"family", "terms", "file", "random"});
    const int sources = static_cast<int>(j.contains("terms")) + static_cast<int>(j.contains("file")) +
                        static_cast<int>(j.contains("random"));
    if (sources != 1) throw ConfigError(path, "sparse_poly needs exactly one of terms, file, random");
    if (j.contains("terms")) {
      k = SparsePoly(detail::parse_terms(j.at("terms"), detail::join_path(path, "terms")));
    } else if (j.contains("file")) {
      const std::string fp = detail::join_path(path, "file");
      std::filesystem::path file = detail::get_string(j, path, "file");
      if (file.is_relative()) file = base_dir / file;
      const Json data = detail::read_json_file(file, fp);
      const Json& terms = data.is_object() && data.contains("terms") ? data.at("terms") : data;
      k = SparsePoly(detail::parse_terms(terms, fp));
    } else {
      const std::string rp = detail::join_path(path, "random");
      const Json& r = j.at("random");
      detail::expect_keys(r, rp, {"seed", "monomials"});
      try {
        k = random_sparse_poly(static_cast<std::uint64_t>(detail::get_int(r, rp, "seed")),
                               static_cast<int>(detail::get_int(r, rp, "monomials")));
      } catch (const InvalidArgument& e) {
        throw ConfigError(detail::join_path(rp, "monomials"), e.what());
      }
    }
  } else {
    throw ConfigError(detail::join_path(path, "family"), "unknown kernel family '" + family + "'");
  }
  try {
    validate(k);
  } catch (const InvalidArgument& e) {
    throw ConfigError(path, e.what());
  }
  return k;
}

inline Json kernel_to_json(const Kernel& k) {
  Json j;
  j["family"] = family_name(k);
  std::visit(
      [&](const auto& v) {
        using K = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<K, InnerPower>) {
          j["d"] = v.d;
        } else if constexpr (std::is_same_v<K, InnerPowerPair>) {
          j["d"] = v.d;
          j["qexp"] = v.qexp;
          j["c"] = v.c;
        } else if constexpr (std::is_same_v<K, DistancePower>) {
          j["p"] = v.p;
          j["qexp"] = v.qexp;
          j["c"] = v.c;
        } else if constexpr (std::is_same_v<K, SparsePoly>) {
          Json terms = Json::array();
          for (const auto& m : v.terms) terms.push_back(Json::array({m.coeff, m.exps}));
          j["terms"] = terms;
        }
      },
      k);
  return j;
}

namespace detail {

inline std::vector<std::pair<int, int>> parse_graph(const Json& g, const std::string& path, int& vertices) {
  if (g.is_string()) {
    const std::string name = g.get<std::string>();
    if (name == "octahedral") {
      vertices = 6;
      return presets::octahedral_edges();
    }
    if (name == "perfect_matching") {
      vertices = 6;
      return presets::perfect_matching_edges();
    }
    if (name.rfind("complete:", 0) == 0) {
      vertices = std::atoi(name.c_str() + 9);
      if (vertices < 2 || vertices > kMaxAutomorphismVertices) throw ConfigError(path, "bad complete graph size");
      return presets::complete_graph_edges(vertices);
    }
    throw ConfigError(path, "unknown graph preset '" + name + "'");
  }
  expect_keys(g, path, {"vertices", "edges"});
  vertices = static_cast<int>(get_int(g, path, "vertices"));
  const Json& e = require(g, path, "edges");
  if (!e.is_array()) throw ConfigError(join_path(path, "edges"), "expected an array of [u, v]");
  std::vector<std::pair<int, int>> edges;
  for (std::size_t i = 0; i < e.size(); ++i) {
    const std::string p = join_path(path, "edges") + "[" + std::to_string(i) + "]";
    if (!e[i].is_array() || e[i].size() != 2 || !e[i][0].is_number_integer() || !e[i][1].is_number_integer()) {
      throw ConfigError(p, "expected [u, v]");
    }
    const int a = e[i][0].get<int>(), b = e[i][1].get<int>();
    if (a < 0 || b < 0 || a >= vertices || b >= vertices) throw ConfigError(p, "vertex out of range");
    edges.emplace_back(a, b);
  }
  return edges;
}

}  // namespace detail

/// Builds the loss instance described by an "instance" config block.
inline LossInstance build_instance(const Json& j, const std::string& path = "instance",
                                   const std::filesystem::path& base_dir = {}) {
  detail::expect_object(j, path);
  const std::string family = detail::get_string(j, path, "family");
  try {
    if (family == "projective_target" || family == "projective_free") {
      try {
        PrimeField(static_cast<int>(detail::get_int(j, path, "q")));
      } catch (const InvalidArgument& e) {
        throw ConfigError(detail::join_path(path, "q"), e.what());
      }
    }
    if (family == "projective_target") {
      detail::expect_keys(j, path, {"family", "n", "q", "d", "raw_group_sum"});
      return LossInstance::projective_target(static_cast<int>(detail::get_int(j, path, "n")),
                                             static_cast<int>(detail::get_int(j, path, "q")),
                                             static_cast<int>(detail::get_int(j, path, "d")),
                                             !detail::get_bool(j, path, "raw_group_sum", false));
    }
    if (family == "projective_free") {
      detail::expect_keys(j, path, {"family", "n", "q", "kernel", "raw_group_sum"});
      const std::string kp = detail::join_path(path, "kernel");
      Kernel k = parse_kernel(detail::require(j, path, "kernel"), kp, base_dir);
      const auto* pp = std::get_if<InnerPowerPair>(&k);
      if (!pp) throw ConfigError(kp, "projective_free needs an inner_power_pair kernel");
      return LossInstance::projective_free(static_cast<int>(detail::get_int(j, path, "n")),
                                           static_cast<int>(detail::get_int(j, path, "q")), *pp,
                                           !detail::get_bool(j, path, "raw_group_sum", false));
    }
    if (family == "graph_edge_pairs") {
      detail::expect_keys(j, path, {"family", "graph", "kernel"});
      int vertices = 0;
      auto edges = detail::parse_graph(detail::require(j, path, "graph"), detail::join_path(path, "graph"), vertices);
      return LossInstance::graph_edge_pairs(
          vertices, edges,
          parse_kernel(detail::require(j, path, "kernel"), detail::join_path(path, "kernel"), base_dir));
    }
    if (family == "particle_pairs") {
      detail::expect_keys(j, path, {"family", "n", "kernel", "include_diagonal", "gauge"});
      const std::string gauge = detail::get_string(j, path, "gauge", "none");
      if (gauge != "none" && gauge != "fix_y_of_first") {
        throw ConfigError(detail::join_path(path, "gauge"), "expected none or fix_y_of_first");
      }
      return LossInstance::particle_pairs(
          static_cast<int>(detail::get_int(j, path, "n")),
          parse_kernel(detail::require(j, path, "kernel"), detail::join_path(path, "kernel"), base_dir),
          detail::get_bool(j, path, "include_diagonal", true), gauge == "fix_y_of_first");
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(path, e.what());
  }
  throw ConfigError(detail::join_path(path, "family"), "unknown loss family '" + family + "'");
}

namespace detail {

inline RunPhase parse_phase(const Json& opt, std::size_t start_count, const std::string& path) {
  expect_keys(opt, path, {"method", "gd_step", "max_iters", "grad_tol", "init_scale", "step_tol", "overflow_norm",
                          "check_monotone", "newton_polish"});
  const std::string method = get_string(opt, path, "method");
  RunPhase ph;
  if (method == "gd") {
    ph.settings = OptimizerSettings::gd();
  } else if (method == "newton") {
    ph.settings = OptimizerSettings::newton();
  } else {
    throw ConfigError(join_path(path, "method"), "expected gd or newton");
  }
  auto& s = ph.settings;
  s.gd_step = get_number(opt, path, "gd_step", s.gd_step);
  s.max_iters = static_cast<int>(get_int(opt, path, "max_iters", s.max_iters));
  s.grad_tol = get_number(opt, path, "grad_tol", s.grad_tol);
  s.init_scale = get_number(opt, path, "init_scale", s.init_scale);
  s.step_tol = get_number(opt, path, "step_tol", s.step_tol);
  s.overflow_norm = get_number(opt, path, "overflow_norm", s.overflow_norm);
  s.check_monotone = get_bool(opt, path, "check_monotone", false);
  ph.newton_polish = get_bool(opt, path, "newton_polish", false);
  if (s.max_iters < 1) throw ConfigError(join_path(path, "max_iters"), "must be >= 1");
  for (auto [key, v] : {std::pair{"gd_step", s.gd_step}, {"grad_tol", s.grad_tol}, {"step_tol", s.step_tol},
                        {"init_scale", s.init_scale}, {"overflow_norm", s.overflow_norm}}) {
    if (!(v > 0)) throw ConfigError(join_path(path, key), "must be positive");
  }
  if (ph.newton_polish && s.method != Method::GD) {
    throw ConfigError(join_path(path, "newton_polish"), "only gradient-descent phases can be polished");
  }
  try {
    s.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(path, e.what());
  }
  ph.start_count = start_count;
  return ph;
}

inline std::size_t get_count(const Json& j, const std::string& path, const char* key) {
  const long long n = get_int(j, path, key);
  if (n < 0) throw ConfigError(join_path(path, key), "must be >= 0");
  return static_cast<std::size_t>(n);
}

inline ContinuousSymmetry parse_mode(const std::string& s, const std::string& path) {
  if (s == "none") return ContinuousSymmetry::None;
  if (s == "planar_isometry") return ContinuousSymmetry::PlanarIsometry;
  if (s == "sign_flips_and_gauge") return ContinuousSymmetry::SignFlipsAndGauge;
  if (s == "global_sign") return ContinuousSymmetry::GlobalSign;
  throw ConfigError(path, "expected none, planar_isometry, sign_flips_and_gauge or global_sign");
}

}  // namespace detail

/// Validates a config document. Instance construction is checked as well so
/// every error surfaces before any run starts.
inline ExperimentConfig parse_config(const Json& j, const std::filesystem::path& base_dir = {}) {
  using namespace detail;
  expect_keys(j, "", {"name", "instance", "start_count", "optimizer", "runs", "base_seed", "isotropy", "orbits",
                      "census", "keep_records", "output"});
  ExperimentConfig c;
  c.source = j;
  c.base_dir = base_dir;
  c.name = get_string(j, "", "name", "experiment");
  c.instance = require(j, "", "instance");
  build_instance(c.instance, "instance", base_dir);
  const long long seed = get_int(j, "", "base_seed", 0);
  if (seed < 0) throw ConfigError("base_seed", "must be >= 0");
  c.base_seed = static_cast<std::uint64_t>(seed);

  if (j.contains("runs")) {
    if (j.contains("optimizer") || j.contains("start_count")) {
      throw ConfigError("runs", "use either runs or start_count + optimizer, not both");
    }
    const Json& runs = j.at("runs");
    if (!runs.is_array()) throw ConfigError("runs", "expected an array");
    for (std::size_t i = 0; i < runs.size(); ++i) {
      const std::string p = "runs[" + std::to_string(i) + "]";
      expect_keys(runs[i], p, {"start_count", "optimizer"});
      c.phases.push_back(
          parse_phase(require(runs[i], p, "optimizer"), get_count(runs[i], p, "start_count"), p + ".optimizer"));
    }
  } else {
    c.phases.push_back(parse_phase(require(j, "", "optimizer"), get_count(j, "", "start_count"), "optimizer"));
  }

  if (j.contains("isotropy")) {
    const Json& iso = j.at("isotropy");
    expect_keys(iso, "isotropy", {"tol", "symmetrize_tol", "edge"});
    c.isotropy.tol = get_number(iso, "isotropy", "tol", c.isotropy.tol);
    c.isotropy.symmetrize_tol = get_number(iso, "isotropy", "symmetrize_tol", c.isotropy.symmetrize_tol);
    c.isotropy.edge = get_bool(iso, "isotropy", "edge", true);
    if (!(c.isotropy.tol > 0)) throw ConfigError("isotropy.tol", "must be positive");
    if (c.isotropy.symmetrize_tol < 0) throw ConfigError("isotropy.symmetrize_tol", "must be >= 0");
  }
  if (j.contains("orbits")) {
    const Json& o = j.at("orbits");
    expect_keys(o, "orbits", {"mode", "tol", "count_members"});
    c.orbits.mode = parse_mode(get_string(o, "orbits", "mode", "none"), "orbits.mode");
    c.orbits.tol = get_number(o, "orbits", "tol", c.orbits.tol);
    c.orbits.count_members = get_bool(o, "orbits", "count_members", false);
    if (!(c.orbits.tol > 0)) throw ConfigError("orbits.tol", "must be positive");
  }
  if (j.contains("census")) {
    const Json& cs = j.at("census");
    expect_keys(cs, "census", {"known_losses", "loss_tol", "probe_trials", "probe_radius"});
    if (cs.contains("known_losses")) {
      const Json& kl = cs.at("known_losses");
      if (!kl.is_array()) throw ConfigError("census.known_losses", "expected an array of numbers");
      for (std::size_t i = 0; i < kl.size(); ++i) {
        if (!kl[i].is_number()) throw ConfigError("census.known_losses[" + std::to_string(i) + "]", "expected a number");
        c.census.known_losses.push_back(kl[i].get<double>());
      }
    }
    c.census.loss_tol = get_number(cs, "census", "loss_tol", c.census.loss_tol);
    const long long pt = get_int(cs, "census", "probe_trials", c.census.probe_trials);
    if (pt < 0) throw ConfigError("census.probe_trials", "must be >= 0");
    c.census.probe_trials = static_cast<int>(pt);
    c.census.probe_radius = get_number(cs, "census", "probe_radius", c.census.probe_radius);
    if (!(c.census.probe_radius > 0)) throw ConfigError("census.probe_radius", "must be positive");
  }
  c.keep_records = get_bool(j, "", "keep_records", true);
  if (j.contains("output")) {
    const Json& o = j.at("output");
    expect_keys(o, "output", {"results", "report"});
    c.results_path = get_string(o, "output", "results", "");
    c.report_path = get_string(o, "output", "report", "");
  }
  return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& file) {
  return parse_config(detail::read_json_file(file, "<file>"), file.parent_path());
}

struct IsotropySummary {
  std::size_t order = 0;
  std::string label;
  bool exact = false;
  double tolerance = 0.0;
  bool flagged = false;
  std::vector<double> witness_violations;
};

inline IsotropySummary summarize(const IsotropyReport& r) {
  return {r.group.order(), r.name.label, r.name.exact, r.tolerance_used, r.flagged, r.witness_violations};
}

struct RunRecord {
  CriticalPointRecord record;
  std::string method;  // gd, newton, or gd+newton
  IsotropySummary iv;
  std::optional<IsotropySummary> ie;
  bool symmetrized = false;
  bool iv_in_ie = true;
};

struct RunFailure {
  std::uint64_t seed = 0;
  std::string method;
  std::string status;
};

struct RunCounts {
  std::size_t converged = 0;
  std::size_t nonconverged = 0;
  std::size_t overflow = 0;
  std::size_t singular_hessian = 0;
  std::size_t near_singularity = 0;
  std::size_t containment_violations = 0;  // records with I_V not inside I_E

  std::size_t total() const { return converged + nonconverged + overflow + singular_hessian + near_singularity; }
};

/// One orbit representative in report form.
struct CatalogRow {
  double loss = 0.0;
  std::size_t iv_order = 0;
  std::string iv_name;
  std::optional<std::size_t> ie_order;
  std::string ie_name;
  std::string classification;
  int null_count = 0;
  std::vector<std::vector<double>> sites;
  std::size_t multiplicity = 0;
  std::optional<std::size_t> members;
  std::uint64_t seed = 0;
};

struct ResultSet {
  std::string name;
  std::string version = kVersion;
  Json config;
  std::uint64_t base_seed = 0;
  std::size_t start_count = 0;
  RunCounts counts;
  std::vector<RunRecord> records;
  std::vector<RunFailure> failures;
  std::vector<CatalogRow> catalog;
  std::string orbit_mode = "none";
  double orbit_tol = 0.0;
  double wall_seconds = 0.0;  // not serialized
};

/// Worker count from ISOLAB_THREADS, else the hardware concurrency.
inline unsigned thread_count() {
  unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("ISOLAB_THREADS")) {
    const int v = std::atoi(env);
    if (v >= 1) return static_cast<unsigned>(v);
  }
  return hw;
}

namespace detail {

struct RunSlot {
  std::optional<RunRecord> record;
  std::optional<RunFailure> failure;
  RunStatus status = RunStatus::NonConvergence;
  bool near_singular = false;
};

inline RunSlot run_one(const LossInstance& inst, const RunPhase& phase, std::uint64_t seed,
                       const IsotropyOptions& iso) {
  RunSlot slot;
  std::string method = to_string(phase.settings.method);
  try {
    Eigen::VectorXd x0 = random_start(inst.dimension(), seed, phase.settings.init_scale);
    OptimizeOutcome out = optimize(inst, std::move(x0), phase.settings, seed);
    if (phase.newton_polish && out.status != RunStatus::NumericOverflow) {
      const int gd_iters = out.record.iterations;
      out = newton(inst, out.record.config.values, OptimizerSettings::newton(), seed);
      out.record.iterations += gd_iters;
      out.record.method = Method::GD;
      method = "gd+newton";
    }
    slot.status = out.status;
    if (out.status != RunStatus::Converged) {
      slot.failure = RunFailure{seed, method, to_string(out.status)};
      return slot;
    }
    RunRecord rr;
    rr.method = method;
    rr.record = std::move(out.record);
    if (iso.symmetrize_tol > 0) {
      if (auto better = symmetrize_polish(inst, rr.record, iso.symmetrize_tol, OptimizerSettings::newton(), iso.tol)) {
        rr.record = std::move(*better);
        rr.symmetrized = true;
      }
    }
    const IsotropyReport iv = vertex_isotropy(inst, rr.record.config.values, iso.tol);
    rr.iv = summarize(iv);
    const bool has_edges = inst.family() == LossFamily::GraphEdgePairs || inst.family() == LossFamily::ParticlePairs;
    if (iso.edge && has_edges) {
      const IsotropyReport ie = edge_isotropy(inst, rr.record.config.values, iso.tol);
      rr.ie = summarize(ie);
      rr.iv_in_ie = std::all_of(iv.group.elements().begin(), iv.group.elements().end(),
                                [&](const Permutation& p) { return ie.group.contains(p); });
    }
    slot.record = std::move(rr);
  } catch (const NearSingularity&) {
    slot.near_singular = true;
    slot.failure = RunFailure{seed, method, "near_singularity"};
  }
  return slot;
}

inline bool record_less(const RunRecord& a, const RunRecord& b) {
  if (a.record.loss != b.record.loss) return a.record.loss < b.record.loss;
  const auto& x = a.record.config.values;
  const auto& y = b.record.config.values;
  for (Eigen::Index i = 0; i < std::min(x.size(), y.size()); ++i) {
    if (x[i] != y[i]) return x[i] < y[i];
  }
  return a.record.seed < b.record.seed;
}

}  // namespace detail

/// Runs every start of every phase, in parallel over run indices, then
/// classifies, measures isotropy and clusters orbits. Run i (counted across
/// phases) starts from the normal stream seeded with base_seed + i. The
/// output does not depend on the number of workers.
inline ResultSet run_experiment(const ExperimentConfig& cfg, unsigned threads = 0) {
  const auto t0 = std::chrono::steady_clock::now();
  const LossInstance inst = build_instance(cfg.instance, "instance", cfg.base_dir);
  ResultSet rs;
  rs.name = cfg.name;
  rs.config = cfg.source;
  rs.base_seed = cfg.base_seed;
  rs.start_count = cfg.start_count();
  rs.orbit_mode = to_string(cfg.orbits.mode);
  rs.orbit_tol = cfg.orbits.tol;

  std::vector<std::pair<const RunPhase*, std::uint64_t>> jobs;
  for (const auto& ph : cfg.phases) {
    for (std::size_t k = 0; k < ph.start_count; ++k) jobs.emplace_back(&ph, cfg.base_seed + jobs.size());
  }
  std::vector<detail::RunSlot> slots(jobs.size());
  if (threads == 0) threads = thread_count();
  threads = static_cast<unsigned>(std::max<std::size_t>(1, std::min<std::size_t>(threads, jobs.size())));
  std::vector<std::exception_ptr> errors(threads);
  auto work = [&](unsigned t) {
    try {
      for (std::size_t i = t; i < jobs.size(); i += threads) {
        slots[i] = detail::run_one(inst, *jobs[i].first, jobs[i].second, cfg.isotropy);
      }
    } catch (...) {
      errors[t] = std::current_exception();
    }
  };
  if (threads == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(work, t);
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  for (auto& s : slots) {
    if (s.record) {
      ++rs.counts.converged;
      if (!s.record->iv_in_ie) ++rs.counts.containment_violations;
      rs.records.push_back(std::move(*s.record));
    } else {
      if (s.near_singular) {
        ++rs.counts.near_singularity;
      } else if (s.status == RunStatus::NumericOverflow) {
        ++rs.counts.overflow;
      } else if (s.status == RunStatus::SingularHessian) {
        ++rs.counts.singular_hessian;
      } else {
        ++rs.counts.nonconverged;
      }
      rs.failures.push_back(std::move(*s.failure));
    }
  }
  std::sort(rs.records.begin(), rs.records.end(), detail::record_less);

  std::vector<CriticalPointRecord> plain;
  plain.reserve(rs.records.size());
  for (const auto& r : rs.records) plain.push_back(r.record);
  const OrbitCatalog cat = dedup_orbits(plain, inst.symmetry_group(), cfg.orbits.mode, cfg.orbits.tol);
  for (std::size_t k = 0; k < cat.indices.size(); ++k) {
    const RunRecord& r = rs.records[cat.indices[k]];
    CatalogRow row;
    row.loss = r.record.loss;
    row.iv_order = r.iv.order;
    row.iv_name = r.iv.label;
    if (r.ie) {
      row.ie_order = r.ie->order;
      row.ie_name = r.ie->label;
    }
    row.classification = to_string(r.record.classification);
    row.null_count = r.record.null_count;
    row.sites = site_values(r.record.config.geometry, r.record.config.values);
    row.multiplicity = cat.multiplicities[k];
    row.seed = r.record.seed;
    if (cfg.orbits.count_members) {
      row.members = count_orbit_members(r.record.config.geometry, r.record.config.values, inst.symmetry_group(),
                                        cfg.orbits.mode, cfg.orbits.tol);
    }
    rs.catalog.push_back(std::move(row));
  }
  if (!cfg.keep_records) rs.records.clear();
  rs.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rs;
}

namespace detail {

inline Json iso_to_json(const IsotropySummary& s) {
  Json j;
  j["order"] = s.order;
  j["label"] = s.label;
  j["exact"] = s.exact;
  j["tolerance"] = s.tolerance;
  j["flagged"] = s.flagged;
  j["witness_violations"] = s.witness_violations;
  return j;
}

inline Json row_to_json(const CatalogRow& r) {
  Json j;
  j["loss"] = r.loss;
  j["iv_order"] = r.iv_order;
  j["iv_name"] = r.iv_name;
  j["ie_order"] = r.ie_order ? Json(*r.ie_order) : Json(nullptr);
  j["ie_name"] = r.ie_order ? Json(r.ie_name) : Json(nullptr);
  j["classification"] = r.classification;
  j["null_count"] = r.null_count;
  j["positions"] = r.sites;
  j["multiplicity"] = r.multiplicity;
  j["members"] = r.members ? Json(*r.members) : Json(nullptr);
  j["seed"] = r.seed;
  return j;
}

inline CatalogRow row_from_json(const Json& j) {
  CatalogRow r;
  r.loss = j.at("loss").get<double>();
  r.iv_order = j.at("iv_order").get<std::size_t>();
  r.iv_name = j.at("iv_name").get<std::string>();
  if (!j.at("ie_order").is_null()) {
    r.ie_order = j.at("ie_order").get<std::size_t>();
    r.ie_name = j.at("ie_name").get<std::string>();
  }
  r.classification = j.at("classification").get<std::string>();
  if (j.contains("null_count")) r.null_count = j.at("null_count").get<int>();
  r.sites = j.at("positions").get<std::vector<std::vector<double>>>();
  r.multiplicity = j.at("multiplicity").get<std::size_t>();
  if (j.contains("members") && !j.at("members").is_null()) r.members = j.at("members").get<std::size_t>();
  if (j.contains("seed")) r.seed = j.at("seed").get<std::uint64_t>();
  return r;
}

}  // namespace detail

/// Results document. Wall time is left out so identical configs give
/// byte-identical output.
inline Json to_json(const ResultSet& rs) {
  Json j;
  j["name"] = rs.name;
  j["version"] = rs.version;
  j["base_seed"] = rs.base_seed;
  j["start_count"] = rs.start_count;
  j["seed_rule"] = "run i (0-based across phases) uses SplitMix64(base_seed + i)";
  Json counts;
  counts["converged"] = rs.counts.converged;
  counts["nonconverged"] = rs.counts.nonconverged;
  counts["overflow"] = rs.counts.overflow;
  counts["singular_hessian"] = rs.counts.singular_hessian;
  counts["near_singularity"] = rs.counts.near_singularity;
  counts["containment_violations"] = rs.counts.containment_violations;
  j["counts"] = counts;
  j["orbit_mode"] = rs.orbit_mode;
  j["orbit_tol"] = rs.orbit_tol;
  Json cat = Json::array();
  for (const auto& r : rs.catalog) cat.push_back(detail::row_to_json(r));
  j["catalog"] = cat;
  Json recs = Json::array();
  for (const auto& r : rs.records) {
    Json e;
    e["seed"] = r.record.seed;
    e["method"] = r.method;
    e["iterations"] = r.record.iterations;
    e["loss"] = r.record.loss;
    e["grad_norm"] = r.record.grad_norm;
    e["values"] = std::vector<double>(r.record.config.values.data(),
                                      r.record.config.values.data() + r.record.config.values.size());
    e["classification"] = to_string(r.record.classification);
    e["null_count"] = r.record.null_count;
    e["hess_spectrum"] = r.record.hess_spectrum;
    e["symmetrized"] = r.symmetrized;
    e["iv"] = detail::iso_to_json(r.iv);
    e["ie"] = r.ie ? detail::iso_to_json(*r.ie) : Json(nullptr);
    e["iv_in_ie"] = r.iv_in_ie;
    recs.push_back(std::move(e));
  }
  j["records"] = recs;
  Json fails = Json::array();
  for (const auto& f : rs.failures) fails.push_back(Json{{"seed", f.seed}, {"method", f.method}, {"status", f.status}});
  j["failures"] = fails;
  j["config"] = rs.config;
  return j;
}

/// Catalog rows of a results document.
inline std::vector<CatalogRow> catalog_from_json(const Json& j) {
  if (!j.is_object() || !j.contains("catalog") || !j.at("catalog").is_array()) {
    throw InvalidArgument("results document has no catalog array");
  }
  std::vector<CatalogRow> rows;
  try {
    for (const auto& r : j.at("catalog")) rows.push_back(detail::row_from_json(r));
  } catch (const Json::exception& e) {
    throw InvalidArgument(std::string("malformed catalog row: ") + e.what());
  }
  return rows;
}

enum class ReportFormat { Csv, Json, Table };

inline ReportFormat parse_report_format(const std::string& s) {
  if (s == "csv") return ReportFormat::Csv;
  if (s == "json") return ReportFormat::Json;
  if (s == "table") return ReportFormat::Table;
  throw InvalidArgument("unsupported report format '" + s + "' (expected csv, json or table)");
}

namespace detail {

inline std::string fmt(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

inline std::string positions_text(const std::vector<std::vector<double>>& sites) {
  std::string out;
  for (std::size_t i = 0; i < sites.size(); ++i) {
    if (i) out += ';';
    for (std::size_t c = 0; c < sites[i].size(); ++c) {
      if (c) out += ' ';
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.5f", sites[i][c] == 0.0 ? 0.0 : sites[i][c]);
      out += buf;
    }
  }
  return out;
}

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char ch : s) {
    if (ch == '"') q += '"';
    q += ch;
  }
  return q + "\"";
}

}  // namespace detail

inline constexpr const char* kCsvHeader = "loss,iv_order,iv_name,ie_order,ie_name,minimum,positions";

/// One row per orbit representative, ascending loss.
inline std::string render_report(std::vector<CatalogRow> rows, ReportFormat format) {
  std::stable_sort(rows.begin(), rows.end(), [](const CatalogRow& a, const CatalogRow& b) { return a.loss < b.loss; });
  std::ostringstream os;
  if (format == ReportFormat::Csv) {
    os << kCsvHeader << '\n';
    for (const auto& r : rows) {
      os << detail::fmt(r.loss, 10) << ',' << r.iv_order << ',' << detail::csv_field(r.iv_name) << ','
         << (r.ie_order ? std::to_string(*r.ie_order) : "") << ',' << detail::csv_field(r.ie_name) << ','
         << (r.classification == "minimum" ? "yes" : "no") << ',' << detail::csv_field(detail::positions_text(r.sites))
         << '\n';
    }
  } else if (format == ReportFormat::Json) {
    Json arr = Json::array();
    for (const auto& r : rows) arr.push_back(detail::row_to_json(r));
    os << arr.dump(2) << '\n';
  } else {
    const std::vector<std::string> head{"Loss", "I_V Group Name", "I_V Order", "I_E Group Name",
                                        "I_E Order", "Minimum?", "Runs"};
    std::vector<std::vector<std::string>> cells{head};
    for (const auto& r : rows) {
      cells.push_back({detail::fmt(r.loss, 8), r.iv_name, std::to_string(r.iv_order), r.ie_order ? r.ie_name : "-",
                       r.ie_order ? std::to_string(*r.ie_order) : "-",
                       r.classification == "minimum" ? "Yes" : (r.classification == "saddle" ? "No" : "Degenerate"),
                       std::to_string(r.multiplicity)});
    }
    std::vector<std::size_t> w(head.size(), 0);
    for (const auto& row : cells) {
      for (std::size_t c = 0; c < row.size(); ++c) w[c] = std::max(w[c], row[c].size());
    }
    for (std::size_t i = 0; i < cells.size(); ++i) {
      for (std::size_t c = 0; c < cells[i].size(); ++c) {
        if (c) os << " | ";
        os << cells[i][c] << std::string(w[c] - cells[i][c].size(), ' ');
      }
      os << '\n';
      if (i == 0) {
        for (std::size_t c = 0; c < w.size(); ++c) os << (c ? "-+-" : "") << std::string(w[c], '-');
        os << '\n';
      }
    }
  }
  return os.str();
}

inline std::string render_report(const ResultSet& rs, ReportFormat format) { return render_report(rs.catalog, format); }

struct CensusRow {
  double loss = 0.0;
  std::size_t basin_count = 0;
  std::optional<std::size_t> members;
  std::string iv_name;
  std::size_t iv_order = 0;
  std::string classification;
  int null_count = 0;
  bool escapes = false;  // a perturbation probe descended below this point
  bool known = true;
};

struct CensusResult {
  std::vector<CensusRow> rows;
  RunCounts counts;
  std::size_t start_count = 0;
  std::size_t minimum_types = 0;
  std::size_t escapable = 0;
  std::size_t novel = 0;
};

/// Histogram of converged orbit types. Minimum rows whose Hessian has null
/// modes are probed with survives_perturbation, which exposes degenerate
/// saddles that GD converges to or stalls at. Minimum rows whose loss matches
/// no entry of census.known_losses (within loss_tol max(1, |L|)) are novel;
/// without a known list nothing is novel.
inline CensusResult census(const ExperimentConfig& cfg, unsigned threads = 0) {
  ExperimentConfig c = cfg;
  c.keep_records = false;
  c.orbits.count_members = true;
  const ResultSet rs = run_experiment(c, threads);
  const LossInstance inst = build_instance(cfg.instance, "instance", cfg.base_dir);
  OptimizerSettings probe_gd = OptimizerSettings::gd();
  probe_gd.max_iters = 2000;
  for (const auto& ph : cfg.phases) {
    if (ph.settings.method == Method::GD) probe_gd = ph.settings;
  }
  CensusResult out;
  out.counts = rs.counts;
  out.start_count = rs.start_count;
  for (const auto& r : rs.catalog) {
    CensusRow row;
    row.loss = r.loss;
    row.basin_count = r.multiplicity;
    row.members = r.members;
    row.iv_name = r.iv_name;
    row.iv_order = r.iv_order;
    row.classification = r.classification;
    row.null_count = r.null_count;
    const bool minimum = r.classification == "minimum";
    if (minimum && r.null_count > 0 && cfg.census.probe_trials > 0) {
      CriticalPointRecord rec;
      rec.config = Configuration{from_site_values(inst.geometry(), r.sites), inst.geometry()};
      rec.loss = inst.loss(rec.config.values);
      rec.seed = r.seed;
      row.escapes = !survives_perturbation(inst, rec, cfg.census.probe_trials, cfg.census.probe_radius, probe_gd);
    }
    if (!cfg.census.known_losses.empty()) {
      row.known = std::any_of(cfg.census.known_losses.begin(), cfg.census.known_losses.end(), [&](double k) {
        return std::abs(k - r.loss) <= cfg.census.loss_tol * std::max(1.0, std::abs(k));
      });
    }
    if (minimum) {
      ++out.minimum_types;
      if (row.escapes) ++out.escapable;
      if (!row.known) ++out.novel;
    }
    out.rows.push_back(row);
  }
  return out;
}

inline Json to_json(const CensusResult& c) {
  Json j;
  j["start_count"] = c.start_count;
  j["converged"] = c.counts.converged;
  j["not_converged"] = c.counts.total() - c.counts.converged;
  j["orbit_types"] = c.rows.size();
  j["minimum_types"] = c.minimum_types;
  j["escapable_minimum_types"] = c.escapable;
  j["novel"] = c.novel;
  Json rows = Json::array();
  for (const auto& r : c.rows) {
    rows.push_back(Json{{"loss", r.loss},
                        {"basin_count", r.basin_count},
                        {"members", r.members ? Json(*r.members) : Json(nullptr)},
                        {"iv_name", r.iv_name},
                        {"iv_order", r.iv_order},
                        {"classification", r.classification},
                        {"null_count", r.null_count},
                        {"escapes", r.escapes},
                        {"known", r.known}});
  }
  j["orbits"] = rows;
  return j;
}

inline void write_text(const std::string& path, const std::string& text) {
  const std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  out << text;
}

}  // namespace isolab

#endif  // ISOLAB_HARNESS_HPP
