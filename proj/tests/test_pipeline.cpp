// Pipeline orchestration: stage composition writes the same bytes as the
// one-shot run, reruns are deterministic, the manifest tracks run identity,
// and the failure modes surface as typed errors.
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <catch2/catch_amalgamated.hpp>

#include "propensity/config.hpp"
#include "propensity/pipeline.hpp"

using namespace propensity;
using Catch::Matchers::ContainsSubstring;

namespace {

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const char* tag) {
    path = std::filesystem::temp_directory_path() /
           (std::string("propensity_pipe_") + tag + "_" +
            std::to_string(::getpid()));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  std::string file(const char* name) const { return (path / name).string(); }
};

config::RunConfig small_run_config(std::uint64_t seed) {
  config::RunConfig cfg;
  cfg.seed = seed;
  cfg.synth.n_buildings = 2000;
  cfg.synth.n_block_groups = 40;
  cfg.model.n_trees = 60;
  return cfg;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

nlohmann::json read_json(const std::filesystem::path& p) {
  std::ifstream in(p);
  REQUIRE(in.good());
  nlohmann::json j;
  in >> j;
  return j;
}

void write_text(const std::filesystem::path& p, const std::string& body) {
  std::ofstream out(p, std::ios::binary);
  out << body;
}

// A miniature hand-written dataset: six buildings, complaints observed in
// two seasons, violations only in the target season. Training labels are
// then uniformly negative.
void write_degenerate_dataset(const TempDir& dir) {
  std::ostringstream b;
  b << "bbl,x,y,block_group_id,value_per_sqft,units,area_per_unit,"
       "residential_ratio,width,depth,building_age,basement_code,"
       "proximity_code,ownership_type,has_super,boiler_type,boiler_age\n";
  for (int i = 0; i < 6; ++i)
    b << "b" << i << "," << (100 + i) << ",200,bg_1,180.5," << (4 + i)
      << ",850,0.9,30,60," << (40 + 10 * i)
      << ",full_or_partial,attached,corp,true,gas,15\n";
  write_text(dir.path / "buildings.csv", b.str());
  write_text(dir.path / "complaints.csv",
             "bbl,timestamp\n"
             "b0,2015-12-01T10:00:00\n"
             "b1,2016-12-01T10:00:00\n"
             "b2,2017-01-05T08:30:00\n");
  write_text(dir.path / "violations.csv",
             "bbl,timestamp\n"
             "b3,2017-01-15T09:00:00\n");
  std::ostringstream g;
  g << "block_group_id,population,median_rent,vacancy_rate,pct_minority,"
       "median_income,pct_limited_english,pct_married,unemployment_rate,"
       "pct_over70,pct_white,pct_bachelor_plus,pct_female,pct_living_alone,"
       "race_share_white,race_share_black,race_share_hispanic,"
       "race_share_other\n"
    << "bg_1,1000,1500,0.08,0.45,60000,0.12,0.5,0.06,0.1,0.55,0.3,0.51,0.28,"
       "0.55,0.2,0.15,0.1\n";
  write_text(dir.path / "blockgroups.csv", g.str());
}

}  // namespace

TEST_CASE("pipeline: standalone stages compose to the one-shot run, byte "
          "for byte") {
  const auto cfg = small_run_config(7);

  TempDir dir_a("oneshot");
  pipeline::StageContext ctx_a = pipeline::make_context(cfg, dir_a.path.string());
  pipeline::run_pipeline(ctx_a);

  TempDir dir_b("staged");
  pipeline::StageContext ctx_b = pipeline::make_context(cfg, dir_b.path.string());
  pipeline::run_synth(ctx_b);
  pipeline::run_train(ctx_b);
  pipeline::run_classify(ctx_b);
  pipeline::run_hotspot(ctx_b);
  pipeline::run_compare(ctx_b);

  const char* files[] = {
      "buildings.csv",    "blockgroups.csv",       "complaints.csv",
      "violations.csv",   "truth.json",            "attach_report.json",
      "model.json",       "metrics.json",          "classified.csv",
      "summary.json",     "rates.csv",             "ttests.csv",
      "surface_under.csv", "surface_over.csv",
      "hotspots_under.geojson", "hotspots_over.geojson"};
  for (const char* name : files) {
    INFO("file: " << name);
    REQUIRE(std::filesystem::exists(dir_a.path / name));
    REQUIRE(std::filesystem::exists(dir_b.path / name));
    REQUIRE(slurp(dir_a.path / name) == slurp(dir_b.path / name));
  }

  // Manifest carries run identity and the canonical stage order. wall_ms is
  // timing noise, so it is checked structurally rather than byte-compared.
  const nlohmann::json m = read_json(dir_a.path / "manifest.json");
  REQUIRE(m["seed"] == "7");
  REQUIRE(m["config_hash"] == ctx_a.config_hash);
  std::vector<std::string> names;
  for (const auto& s : m["stages"]) {
    names.push_back(s["name"]);
    REQUIRE(s["status"] == "ok");
    REQUIRE(double(s["wall_ms"]) >= 0.0);
    REQUIRE(s["outputs"].is_array());
  }
  REQUIRE(names == std::vector<std::string>{"synth", "ingest", "train",
                                            "classify", "hotspot", "compare"});
  const nlohmann::json& inputs = m["inputs"];
  for (const char* name : {"buildings.csv", "complaints.csv", "violations.csv",
                           "blockgroups.csv"}) {
    REQUIRE(inputs.contains(name));
    REQUIRE(inputs[name].get<std::string>().size() == 16);  // fnv1a64 hex
  }

  // Classification summary bookkeeping.
  const nlohmann::json summary = read_json(dir_a.path / "summary.json");
  REQUIRE(summary["seed"] == "7");
  REQUIRE(summary["season"] == 2016);
  const long long total = summary["total"];
  REQUIRE(total == 2000);
  long long count_sum = 0;
  double share_sum = 0.0;
  for (const char* t : {"type1", "type2", "type3", "type4"}) {
    count_sum += summary["counts"][t].get<long long>();
    share_sum += summary["shares"][t].get<double>();
  }
  REQUIRE(count_sum == total);
  REQUIRE(share_sum == Catch::Approx(1.0).margin(1e-9));
  const double threshold = summary["threshold"];
  REQUIRE(threshold > 0.0);
  REQUIRE(threshold < 1.0);

  // Training metrics: deviance must descend from its intercept-only start.
  const nlohmann::json metrics = read_json(dir_a.path / "metrics.json");
  const auto deviance = metrics["train"]["deviance"].get<std::vector<double>>();
  REQUIRE(deviance.size() == 61);  // base entry + one per tree
  REQUIRE(deviance.back() < deviance.front());
  const double ba = metrics["eval_natural"]["balanced_accuracy"];
  REQUIRE(ba > 0.0);
  REQUIRE(ba <= 1.0);

  // Comparison output: one row per demographic feature.
  csv::Table t = csv::read_file(dir_a.file("ttests.csv"));
  REQUIRE(t.rows.size() == kProfileFeatureNames.size());
  std::set<std::string> seen;
  const auto feature_col = (std::size_t)std::distance(
      t.header.begin(),
      std::find(t.header.begin(), t.header.end(), "feature"));
  REQUIRE(feature_col < t.header.size());
  for (const auto& row : t.rows) seen.insert(row[feature_col]);
  for (auto name : kProfileFeatureNames)
    REQUIRE(seen.count(std::string(name)) == 1);

  // Per-block-group complaint rates cover every block group.
  csv::Table rates = csv::read_file(dir_a.file("rates.csv"));
  REQUIRE(rates.rows.size() == 40);
}

TEST_CASE("pipeline: manifest resets when the run identity changes") {
  const auto cfg = small_run_config(7);
  TempDir dir("identity");
  pipeline::StageContext ctx = pipeline::make_context(cfg, dir.path.string());
  pipeline::run_pipeline(ctx);

  // Re-running one stage under the same identity preserves the others.
  pipeline::run_train(ctx);
  nlohmann::json m = read_json(dir.path / "manifest.json");
  REQUIRE(m["stages"].size() == 6);

  // A different seed is a different run: stale stage records drop out.
  auto cfg2 = cfg;
  cfg2.seed = 8;
  pipeline::StageContext ctx2 = pipeline::make_context(cfg2, dir.path.string());
  pipeline::run_compare(ctx2);
  m = read_json(dir.path / "manifest.json");
  REQUIRE(m["seed"] == "8");
  std::vector<std::string> names;
  for (const auto& s : m["stages"]) names.push_back(s["name"]);
  REQUIRE(names == std::vector<std::string>{"ingest", "compare"});
}

TEST_CASE("pipeline: classify refuses a model trained for another season") {
  auto cfg = small_run_config(11);
  TempDir dir("mismatch");
  pipeline::StageContext ctx = pipeline::make_context(cfg, dir.path.string());
  pipeline::run_synth(ctx);
  pipeline::run_train(ctx);  // targets the latest season, 2016

  auto cfg2 = cfg;
  cfg2.target_season = 2015;
  pipeline::StageContext ctx2 = pipeline::make_context(cfg2, dir.path.string());
  REQUIRE_THROWS_MATCHES(pipeline::run_classify(ctx2), ConfigError,
                         Catch::Matchers::MessageMatches(ContainsSubstring("2015")));
}

TEST_CASE("pipeline: classify without a trained model is a data error") {
  auto cfg = small_run_config(12);
  TempDir dir("nomodel");
  pipeline::StageContext ctx = pipeline::make_context(cfg, dir.path.string());
  pipeline::run_synth(ctx);
  REQUIRE_THROWS_MATCHES(pipeline::run_classify(ctx), DataError,
                         Catch::Matchers::MessageMatches(ContainsSubstring("model.json")));
}

TEST_CASE("pipeline: unobserved target season is a data error") {
  auto cfg = small_run_config(13);
  TempDir dir("badseason");
  pipeline::StageContext ctx = pipeline::make_context(cfg, dir.path.string());
  pipeline::run_synth(ctx);
  auto cfg2 = cfg;
  cfg2.target_season = 1999;
  pipeline::StageContext ctx2 = pipeline::make_context(cfg2, dir.path.string());
  REQUIRE_THROWS_MATCHES(pipeline::run_train(ctx2), DataError,
                         Catch::Matchers::MessageMatches(ContainsSubstring("1999")));
}

TEST_CASE("pipeline: all-negative training labels fail as degenerate") {
  TempDir dir("degenerate");
  write_degenerate_dataset(dir);
  config::RunConfig cfg;
  cfg.seed = 3;
  cfg.data_dir = dir.path.string();
  TempDir out("degenerate_out");
  pipeline::StageContext ctx = pipeline::make_context(cfg, out.path.string());
  REQUIRE_THROWS_MATCHES(pipeline::run_train(ctx), NumericError,
                         Catch::Matchers::MessageMatches(ContainsSubstring("degenerate_labels")));
}

TEST_CASE("pipeline: training needs a season before the target") {
  TempDir dir("noprior");
  write_degenerate_dataset(dir);
  // Rewrite events so the only observed season is the target itself.
  write_text(dir.path / "complaints.csv",
             "bbl,timestamp\n"
             "b0,2016-12-01T10:00:00\n");
  write_text(dir.path / "violations.csv",
             "bbl,timestamp\n"
             "b3,2017-01-15T09:00:00\n");
  config::RunConfig cfg;
  cfg.data_dir = dir.path.string();
  TempDir out("noprior_out");
  pipeline::StageContext ctx = pipeline::make_context(cfg, out.path.string());
  REQUIRE_THROWS_MATCHES(pipeline::run_train(ctx), DataError,
                         Catch::Matchers::MessageMatches(ContainsSubstring("prior")));
}
