#if __has_include(<CLI11.hpp>)
#include <CLI11.hpp>
#else
#include <CLI/CLI.hpp>
#endif
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "isolab/isolab.hpp"

using namespace isolab;

namespace {

Json read_json(const std::string& path) {
  if (path == "-") {
    std::ostringstream buf;
    buf << std::cin.rdbuf();
    return Json::parse(buf.str());
  }
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  return Json::parse(in);
}

int cmd_run(const std::string& config_path, const std::string& out, bool raw, const std::string& format) {
  Json doc = read_json(config_path);
  if (raw && doc.contains("instance") && doc["instance"].is_object()) doc["instance"]["raw_group_sum"] = true;
  const ExperimentConfig cfg = parse_config(doc, std::filesystem::path(config_path).parent_path());
  const ResultSet rs = run_experiment(cfg);
  const std::string results = out.empty() ? cfg.results_path : out;
  if (!results.empty()) write_text(results, to_json(rs).dump(2) + "\n");
  const ReportFormat fmt = parse_report_format(format);
  if (!cfg.report_path.empty()) write_text(cfg.report_path, render_report(rs, fmt));
  std::cout << render_report(rs, fmt);
  std::fprintf(stderr, "%s: %zu starts, %zu converged, %zu nonconverged, %zu overflow, %zu singular, %zu near-singular; %.2f s\n",
               rs.name.c_str(), rs.start_count, rs.counts.converged, rs.counts.nonconverged, rs.counts.overflow,
               rs.counts.singular_hessian, rs.counts.near_singularity, rs.wall_seconds);
  if (rs.counts.containment_violations) {
    std::fprintf(stderr, "warning: %zu records with I_V not contained in I_E\n", rs.counts.containment_violations);
  }
  return 0;
}

int cmd_report(const std::string& path, const std::string& format) {
  std::cout << render_report(catalog_from_json(read_json(path)), parse_report_format(format));
  return 0;
}

int cmd_census(const std::string& config_path, bool closed_world, const std::string& out) {
  const ExperimentConfig cfg = load_config(config_path);
  const CensusResult c = census(cfg);
  std::printf("%-12s | %-8s | %-8s | %-10s | %-11s | %-5s | %-7s | %s\n", "Loss", "Basin", "Members", "I_V", "Type",
              "Null", "Escapes", "Known");
  std::size_t member_total = 0;
  for (const auto& r : c.rows) {
    const bool minimum = r.classification == "minimum";
    std::printf("%-12.6g | %-8zu | %-8s | %-10s | %-11s | %-5d | %-7s | %s\n", r.loss, r.basin_count,
                r.members ? std::to_string(*r.members).c_str() : "-", r.iv_name.c_str(), r.classification.c_str(),
                r.null_count, r.escapes ? "yes" : "no", !minimum ? "-" : r.known ? "yes" : "NOVEL");
    if (minimum && r.members) member_total += *r.members;
  }
  std::printf("%zu orbit types, %zu minimum types with %zu observable minima (%zu escapable), %zu/%zu runs converged\n",
              c.rows.size(), c.minimum_types, member_total, c.escapable, c.counts.converged, c.start_count);
  if (!out.empty()) write_text(out, to_json(c).dump(2) + "\n");
  if (c.novel > 0) {
    std::fprintf(stderr, "NOVEL ORBITS: %zu orbit types outside the known list\n", c.novel);
    if (closed_world) return 2;
  }
  return 0;
}

int cmd_enumerate(int n, int q, bool dedup, const std::string& dump) {
  const ProjectiveAtlas big = enumerate_atlas(n, q);
  const ProjectiveAtlas small(n - 1, PrimeField(q));
  const auto group = enumerate_pgl(big);
  const auto maps = restriction_maps(big, small, group, dedup);
  const std::size_t k = hyperplane_pointwise_stabilizer_order(big, small, group);
  std::printf("points %zu\npgl_order %zu\nhyperplane_stabilizer %zu\nrestriction_maps %zu (%s)\n", big.size(),
              group.size(), k, maps.size(), dedup ? "dedup" : "raw");
  if (!dump.empty()) {
    const int dim = n + 1;
    Json arr = Json::array();
    for (const auto& g : group) {
      Json m = Json::array();
      for (int r = 0; r < dim; ++r) {
        m.push_back(std::vector<int>(g.matrix.begin() + r * dim, g.matrix.begin() + (r + 1) * dim));
      }
      arr.push_back(m);
    }
    if (dump == "-") {
      std::cout << arr.dump() << '\n';
    } else {
      write_text(dump, arr.dump() + "\n");
    }
  }
  return 0;
}

int cmd_name_group(const std::string& path) {
  const Json j = read_json(path);
  if (!j.is_array() || j.empty()) throw InvalidArgument("expected a nonempty JSON array of permutations");
  std::vector<Permutation> gens;
  for (const auto& p : j) gens.emplace_back(p.get<std::vector<int>>());
  const int degree = gens.front().degree();
  for (const auto& g : gens) {
    if (g.degree() != degree) throw InvalidArgument("permutations of different degrees");
  }
  const PermutationGroup group = closure(degree, gens);
  const GroupName name = name_group(group);
  std::printf("order %zu\nlabel %s\nexact %s\n", group.order(), name.label.c_str(), name.exact ? "true" : "false");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"isolab: isotropy of critical points of group-invariant losses"};
  app.require_subcommand(1);

  std::string config, out, format = "table";
  bool raw = false;
  auto* run = app.add_subcommand("run", "run an experiment config");
  run->add_option("config", config, "experiment config (JSON)")->required();
  run->add_option("--out", out, "results JSON path (overrides output.results)");
  run->add_flag("--raw-group-sum", raw, "sum over all group elements instead of distinct restriction maps");
  run->add_option("--format", format, "report printed to stdout: csv, json or table");

  std::string results;
  auto* report = app.add_subcommand("report", "render a results file");
  report->add_option("results", results, "results JSON")->required();
  report->add_option("--format", format, "csv, json or table");

  bool closed_world = false;
  std::string census_out;
  auto* cen = app.add_subcommand("census", "orbit histogram over many starts");
  cen->add_option("config", config, "experiment config (JSON)")->required();
  cen->add_flag("--assert-closed-world", closed_world, "exit with status 2 if a minimum is outside census.known_losses");
  cen->add_option("--out", census_out, "write the histogram as JSON");

  int n = 2, q = 2;
  bool dedup = false;
  std::string dump;
  auto* en = app.add_subcommand("enumerate", "enumerate P^n(F_q), PGL(n+1, F_q) and restriction maps");
  en->add_option("--n", n, "projective dimension")->required();
  en->add_option("--q", q, "prime field size")->required();
  en->add_flag("--dedup", dedup, "count distinct restriction maps");
  en->add_option("--dump-group", dump, "write the group as a JSON array of matrices ('-' for stdout)");

  std::string perms;
  auto* ng = app.add_subcommand("name-group", "name the group generated by a JSON list of permutations");
  ng->add_option("file", perms, "JSON array of image lists ('-' for stdin)")->required();

  CLI11_PARSE(app, argc, argv);
  try {
    if (*run) return cmd_run(config, out, raw, format);
    if (*report) return cmd_report(results, format);
    if (*cen) return cmd_census(config, closed_world, census_out);
    if (*en) return cmd_enumerate(n, q, dedup, dump);
    if (*ng) return cmd_name_group(perms);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error at %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
