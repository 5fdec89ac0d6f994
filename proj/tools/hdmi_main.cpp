#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include "hdmi/amputation.hpp"
#include "hdmi/cohortgen.hpp"
#include "hdmi/error.hpp"
#include "hdmi/features.hpp"
#include "hdmi/simharness.hpp"
#include "hdmi/tabular.hpp"

namespace {

// Output directory precedence: HDMI_OUT_DIR, then --out, then the config.
std::string resolve_out(const std::string& flag_value, const std::string& config_value) {
  if (const char* env = std::getenv("HDMI_OUT_DIR"); env != nullptr && *env != '\0') return env;
  if (!flag_value.empty()) return flag_value;
  return config_value;
}

std::vector<hdmi::features::ModelKind> parse_models(const std::string& csv) {
  std::vector<hdmi::features::ModelKind> kinds;
  std::string token;
  for (std::size_t i = 0; i <= csv.size(); ++i) {
    if (i == csv.size() || csv[i] == ',') {
      if (!token.empty()) kinds.push_back(hdmi::features::model_kind_from_string(token));
      token.clear();
    } else {
      token.push_back(csv[i]);
    }
  }
  if (kinds.empty()) throw hdmi::ConfigError("--models needs at least one model name");
  return kinds;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Plasmode survival simulation with high-dimensional multiple imputation"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_flag;
  std::string cohort_path;
  std::string models_flag;
  std::uint64_t seed = 0;
  int jobs = 0;

  CLI::App* generate = app.add_subcommand("generate", "Draw the synthetic base cohort");
  generate->add_option("--config", config_path, "Scenario config (json)")->required();
  CLI::Option* gen_seed = generate->add_option("--seed", seed, "Override the base cohort seed");
  generate->add_option("--out", out_flag, "Output directory");

  CLI::App* ampute = app.add_subcommand("ampute", "Mask z2 in a cohort under the missingness model");
  ampute->add_option("--config", config_path, "Scenario config (json)")->required();
  ampute->add_option("--cohort", cohort_path, "Cohort csv (default: config base_path, else synthesized)");
  CLI::Option* amp_seed = ampute->add_option("--seed", seed, "Override the amputation seed");
  ampute->add_option("--out", out_flag, "Output directory");

  CLI::App* run = app.add_subcommand("run", "Run the Monte Carlo scenario");
  run->add_option("--config", config_path, "Scenario config (json)")->required();
  CLI::Option* run_seed = run->add_option("--seed", seed, "Override the master seed");
  CLI::Option* run_jobs = run->add_option("--jobs", jobs, "Worker threads over replicates");
  run->add_option("--out", out_flag, "Output directory");
  run->add_option("--models", models_flag, "Comma-separated model subset");

  CLI::App* report = app.add_subcommand("report", "Render report.txt and panel csvs from a run");
  report->add_option("--config", config_path, "Scenario config (json), for its out_dir");
  report->add_option("--out", out_flag, "Scenario output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (generate->parsed()) {
      hdmi::simharness::ScenarioConfig cfg = hdmi::simharness::load_scenario_config(config_path);
      if (gen_seed->count() > 0) cfg.base.seed = seed;
      const hdmi::tabular::Cohort cohort = hdmi::cohortgen::generate_synthetic_base(cfg.base);
      const std::string dir = resolve_out(out_flag, cfg.out_dir);
      std::filesystem::create_directories(dir);
      const std::string path = dir + "/cohort.csv";
      hdmi::tabular::save_cohort(cohort, path);
      std::printf("cohort of %lld patients written to %s\n",
                  static_cast<long long>(cohort.n()), path.c_str());
      return 0;
    }

    if (ampute->parsed()) {
      hdmi::simharness::ScenarioConfig cfg = hdmi::simharness::load_scenario_config(config_path);
      const std::string source = !cohort_path.empty() ? cohort_path : cfg.base_path;
      const hdmi::tabular::Cohort cohort = source.empty()
                                               ? hdmi::cohortgen::generate_synthetic_base(cfg.base)
                                               : hdmi::tabular::load_cohort(source);
      hdmi::amputation::AmputationSpec spec = cfg.amputation;
      if (amp_seed->count() > 0) spec.seed = seed;
      const hdmi::tabular::Cohort amputed = hdmi::amputation::ampute(cohort, spec);
      const std::string dir = resolve_out(out_flag, cfg.out_dir);
      std::filesystem::create_directories(dir);
      const std::string path = dir + "/amputed.csv";
      hdmi::tabular::save_cohort(amputed, path);
      std::printf("amputed cohort (%d of %lld z2 masked) written to %s\n", amputed.mz2.sum(),
                  static_cast<long long>(amputed.n()), path.c_str());
      return 0;
    }

    if (run->parsed()) {
      hdmi::simharness::ScenarioConfig cfg = hdmi::simharness::load_scenario_config(config_path);
      if (run_seed->count() > 0) cfg.seed = seed;
      if (run_jobs->count() > 0) cfg.jobs = jobs;
      if (!models_flag.empty()) cfg.models = parse_models(models_flag);
      cfg.out_dir = resolve_out(out_flag, cfg.out_dir);
      const hdmi::simharness::ScenarioResult res = hdmi::simharness::run_scenario(cfg);

      std::printf("%-22s %6s %6s %10s %10s %10s %10s\n", "model", "used", "degen", "rmse", "bias",
                  "variance", "coverage");
      for (const auto& s : res.summary) {
        std::printf("%-22s %6d %6d %10.4f %10.4f %10.4f %10.4f\n", s.model.c_str(), s.n_used,
                    s.n_degenerate, s.rmse.value, s.bias.value, s.variance.value,
                    s.coverage.value);
      }
      std::printf("outputs written to %s\n", cfg.out_dir.c_str());
      if (res.n_failed_replicates == cfg.n_replicates) {
        std::fprintf(stderr, "error: every replicate failed\n");
        return 1;
      }
      return 0;
    }

    // report
    std::string dir = resolve_out(out_flag, "");
    if (dir.empty() && !config_path.empty()) {
      dir = hdmi::simharness::load_scenario_config(config_path).out_dir;
    }
    if (dir.empty()) {
      std::fprintf(stderr, "error: report needs --out, --config, or HDMI_OUT_DIR\n");
      return 1;
    }
    hdmi::simharness::write_report(dir);
    std::printf("report written to %s/report.txt\n", dir.c_str());
    return 0;
  } catch (const hdmi::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
