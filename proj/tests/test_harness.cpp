#include <gtest/gtest.h>

#include <cstdlib>

#include "isolab/harness.hpp"
#include "test_util.hpp"

using namespace isolab;

namespace {

Json small_config() {
  return Json::parse(R"({
    "name": "small",
    "instance": {"family": "graph_edge_pairs", "graph": "octahedral",
                 "kernel": {"family": "inner_power_pair", "d": 6, "qexp": 4, "c": 7}},
    "start_count": 12,
    "optimizer": {"method": "newton"},
    "base_seed": 5,
    "orbits": {"mode": "global_sign"}
  })");
}

std::string config_error_path(const Json& j) {
  try {
    parse_config(j);
  } catch (const ConfigError& e) {
    return e.path();
  }
  return "<no error>";
}

}  // namespace

TEST(Config, ParsesPresets) {
  for (const auto& entry : std::filesystem::directory_iterator(test::source_dir() / "data" / "presets")) {
    const auto cfg = load_config(entry.path());
    EXPECT_FALSE(cfg.phases.empty()) << entry.path();
    EXPECT_GT(cfg.start_count(), 0u) << entry.path();
  }
}

TEST(Config, ErrorsCarryFieldPaths) {
  Json j = small_config();
  j["optimizer"]["gd_stepp"] = 0.1;
  EXPECT_EQ(config_error_path(j), "optimizer.gd_stepp");

  j = small_config();
  j["optimizer"]["method"] = "lbfgs";
  EXPECT_EQ(config_error_path(j), "optimizer.method");

  j = small_config();
  j["instance"]["kernel"]["d"] = "six";
  EXPECT_EQ(config_error_path(j), "instance.kernel.d");

  j = small_config();
  j["instance"]["kernel"]["family"] = "gaussian";
  EXPECT_EQ(config_error_path(j), "instance.kernel.family");

  j = small_config();
  j["start_count"] = -3;
  EXPECT_EQ(config_error_path(j), "start_count");

  j = small_config();
  j["orbits"]["mode"] = "affine";
  EXPECT_EQ(config_error_path(j), "orbits.mode");

  j = small_config();
  j.erase("instance");
  EXPECT_EQ(config_error_path(j), "instance");

  j = small_config();
  j["bogus"] = 1;
  EXPECT_EQ(config_error_path(j), "bogus");

  j = small_config();
  j["instance"] = Json::parse(R"({"family": "projective_target", "n": 2, "q": 4, "d": 8})");
  EXPECT_EQ(config_error_path(j), "instance.q");

  j = small_config();
  j.erase("start_count");
  j.erase("optimizer");
  j["runs"] = Json::parse(R"([{"start_count": 2, "optimizer": {"method": "gd", "max_iters": 0}}])");
  EXPECT_EQ(config_error_path(j), "runs[0].optimizer.max_iters");

  j = small_config();
  j["instance"]["kernel"] = Json::parse(R"({"family": "sparse_poly", "terms": [[1.0, [1, 0, 0]]]})");
  EXPECT_EQ(config_error_path(j), "instance.kernel.terms[0]");
}

TEST(Config, MissingSparsePolyFile) {
  Json j = small_config();
  j["instance"]["kernel"] = Json::parse(R"({"family": "sparse_poly", "file": "does_not_exist.json"})");
  EXPECT_EQ(config_error_path(j), "instance.kernel.file");
}

TEST(Config, KernelJsonRoundTrip) {
  for (const Kernel& k : std::vector<Kernel>{InnerPower{8}, InnerPowerPair{6, 4, 7.0}, DistancePower{6, 4, 1.0},
                                             Repulsive{}, random_sparse_poly(4, 10)}) {
    const Json j = kernel_to_json(k);
    EXPECT_EQ(kernel_to_json(parse_kernel(j, "kernel")), j);
  }
}

TEST(Harness, EmptyStartCountGivesHeaderOnlyCsv) {
  Json j = small_config();
  j["start_count"] = 0;
  const auto rs = run_experiment(parse_config(j), 1);
  EXPECT_EQ(rs.counts.total(), 0u);
  EXPECT_TRUE(rs.catalog.empty());
  EXPECT_EQ(render_report(rs, ReportFormat::Csv), std::string(kCsvHeader) + "\n");
  EXPECT_EQ(render_report(rs, ReportFormat::Json), "[]\n");
}

TEST(Harness, DeterministicAcrossThreadCounts) {
  const auto cfg = parse_config(small_config());
  const std::string a = to_json(run_experiment(cfg, 1)).dump();
  const std::string b = to_json(run_experiment(cfg, 1)).dump();
  const std::string c = to_json(run_experiment(cfg, 3)).dump();
  EXPECT_EQ(a, b);
  EXPECT_EQ(a, c);
}

TEST(Harness, SeedRuleAndCounts) {
  const auto cfg = parse_config(small_config());
  const auto rs = run_experiment(cfg, 1);
  EXPECT_EQ(rs.start_count, 12u);
  EXPECT_EQ(rs.counts.total(), 12u);
  EXPECT_EQ(rs.counts.converged, rs.records.size());
  EXPECT_EQ(rs.counts.containment_violations, 0u);
  std::set<std::uint64_t> seeds;
  for (const auto& r : rs.records) seeds.insert(r.record.seed);
  for (const auto& f : rs.failures) seeds.insert(f.seed);
  EXPECT_EQ(seeds.size(), 12u);
  EXPECT_EQ(*seeds.begin(), 5u);
  EXPECT_EQ(*seeds.rbegin(), 16u);
  std::size_t runs = 0;
  for (const auto& row : rs.catalog) runs += row.multiplicity;
  EXPECT_EQ(runs, rs.records.size());
  for (std::size_t i = 1; i < rs.catalog.size(); ++i) EXPECT_LE(rs.catalog[i - 1].loss, rs.catalog[i].loss);
}

TEST(Harness, ThreadEnvironmentVariable) {
  setenv("ISOLAB_THREADS", "2", 1);
  EXPECT_EQ(thread_count(), 2u);
  setenv("ISOLAB_THREADS", "junk", 1);
  EXPECT_GE(thread_count(), 1u);
  unsetenv("ISOLAB_THREADS");
}

TEST(Reports, CsvJsonTableAndRoundTrip) {
  const auto rs = run_experiment(parse_config(small_config()), 1);
  const std::string csv = render_report(rs, ReportFormat::Csv);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "loss,iv_order,iv_name,ie_order,ie_name,minimum,positions");
  const std::size_t lines = std::count(csv.begin(), csv.end(), '\n');
  EXPECT_EQ(lines, rs.catalog.size() + 1);
  const Json arr = Json::parse(render_report(rs, ReportFormat::Json));
  EXPECT_EQ(arr.size(), rs.catalog.size());
  const std::string table = render_report(rs, ReportFormat::Table);
  EXPECT_NE(table.find("I_V Group Name"), std::string::npos);
  // results JSON round-trips to the same catalog and report
  const auto rows = catalog_from_json(Json::parse(to_json(rs).dump()));
  EXPECT_EQ(render_report(rows, ReportFormat::Csv), csv);
  EXPECT_THROW(parse_report_format("xml"), InvalidArgument);
}

TEST(Reports, CsvRowLayout) {
  CatalogRow r;
  r.loss = -1.5;
  r.iv_order = 4;
  r.iv_name = "C2^2";
  r.ie_order = 8;
  r.ie_name = "?order=8,exp=4";
  r.classification = "minimum";
  r.sites = {{1.0, 2.0}, {3.0, 4.0}};
  const std::string csv = render_report(std::vector<CatalogRow>{r}, ReportFormat::Csv);
  const std::string row = csv.substr(csv.find('\n') + 1);
  EXPECT_EQ(row, "-1.5,4,C2^2,8,\"?order=8,exp=4\",yes,1.00000 2.00000;3.00000 4.00000\n");
}

TEST(Census, HistogramAndNovelty) {
  Json j = small_config();
  j["start_count"] = 30;
  j["census"] = Json::parse(R"({"known_losses": [-29269.33]})");
  const auto c = census(parse_config(j), 1);
  std::size_t basins = 0;
  for (const auto& r : c.rows) basins += r.basin_count;
  EXPECT_EQ(basins, c.counts.converged);
  std::size_t unknown = 0, minima = 0;
  for (const auto& r : c.rows) {
    const bool minimum = r.classification == "minimum";
    unknown += minimum && !r.known;
    minima += minimum;
    if (!minimum) {
      EXPECT_FALSE(r.escapes);
    }
  }
  EXPECT_EQ(unknown, c.novel);
  EXPECT_EQ(minima, c.minimum_types);
  EXPECT_GT(c.novel, 0u);
}
