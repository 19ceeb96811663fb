// propensity: quantify socio-spatial bias in 311 heat-complaint reporting.
//
// Subcommands wire the library stages into reproducible seeded runs:
//   synth    generate the synthetic city dataset
//   train    fit the violation predictor and tune its threshold
//   classify label every building Type 1-4 (predicted vs complained)
//   hotspot  KDE surfaces + hotspot polygons for the mismatched types
//   compare  Welch t-tests over block-group demographics
//   pipeline all of the above in order, with a run manifest

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "propensity/config.hpp"
#include "propensity/errors.hpp"
#include "propensity/pipeline.hpp"
#include "propensity/version.hpp"

namespace {

struct CommonOpts {
  std::string config_path;
  std::string out_dir = "out";
  std::optional<std::uint64_t> seed;
  std::optional<std::string> threshold_objective;
  std::optional<double> bandwidth;
  std::optional<std::string> test_level;
};

void add_common_flags(CLI::App* sub, CommonOpts& o) {
  sub->add_option("--config", o.config_path,
                  "JSON config file (defaults apply when omitted)")
      ->check(CLI::ExistingFile);
  sub->add_option("--out", o.out_dir, "output directory")
      ->capture_default_str();
  sub->add_option("--seed", o.seed, "root seed (overrides config)");
  sub->add_option("--threshold-objective", o.threshold_objective,
                  "threshold tuning objective (overrides config)")
      ->check(CLI::IsMember({"youden", "f1", "balanced"}));
  sub->add_option("--bandwidth", o.bandwidth,
                  "KDE bandwidth in meters (overrides Silverman's rule)")
      ->check(CLI::PositiveNumber);
  sub->add_option("--test-level", o.test_level,
                  "t-test unit of analysis (overrides config)")
      ->check(CLI::IsMember({"building", "blockgroup"}));
}

propensity::config::RunConfig effective_config(const CommonOpts& o) {
  propensity::config::RunConfig cfg =
      o.config_path.empty() ? propensity::config::RunConfig{}
                            : propensity::config::RunConfig::load(o.config_path);
  if (o.seed) cfg.seed = *o.seed;
  if (o.threshold_objective)
    cfg.threshold_objective =
        propensity::gbdt::parse_objective(*o.threshold_objective);
  if (o.bandwidth) cfg.kde.bandwidth = *o.bandwidth;
  if (o.test_level)
    cfg.stats_cfg.level = propensity::stats::parse_test_level(*o.test_level);
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "propensity " + std::string(propensity::kVersion) +
      " — socio-spatial reporting-bias pipeline for 311 heat complaints"};
  app.set_version_flag("--version", std::string(propensity::kVersion));
  app.require_subcommand(1);

  CommonOpts opts;
  const char* commands[] = {"synth",   "train",   "classify",
                            "hotspot", "compare", "pipeline"};
  const char* blurbs[] = {
      "generate the synthetic city dataset",
      "fit the violation predictor and tune its decision threshold",
      "classify buildings by predicted vs observed complaints",
      "kernel-density hotspot surfaces for under/over-reporting",
      "Welch t-tests comparing block-group demographics",
      "run every stage in order and write a manifest"};
  for (int i = 0; i < 6; ++i)
    add_common_flags(app.add_subcommand(commands[i], blurbs[i]), opts);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);  // help text, exit 0
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;  // any usage problem maps to the config/usage exit code
  }

  try {
    const propensity::config::RunConfig cfg = effective_config(opts);
    const propensity::pipeline::StageContext ctx =
        propensity::pipeline::make_context(cfg, opts.out_dir);
    if (app.got_subcommand("synth")) propensity::pipeline::run_synth(ctx);
    else if (app.got_subcommand("train")) propensity::pipeline::run_train(ctx);
    else if (app.got_subcommand("classify"))
      propensity::pipeline::run_classify(ctx);
    else if (app.got_subcommand("hotspot"))
      propensity::pipeline::run_hotspot(ctx);
    else if (app.got_subcommand("compare"))
      propensity::pipeline::run_compare(ctx);
    else propensity::pipeline::run_pipeline(ctx);
    return 0;
  } catch (const propensity::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return propensity::ConfigError::exit_code;
  } catch (const propensity::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return propensity::DataError::exit_code;
  } catch (const propensity::NumericError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return propensity::NumericError::exit_code;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
