#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "hdmi/amputation.hpp"
#include "hdmi/causal.hpp"
#include "hdmi/cohortgen.hpp"
#include "hdmi/features.hpp"
#include "hdmi/tabular.hpp"

namespace hdmi::simharness {

// Full recipe for one Monte Carlo scenario: where the base cohort comes
// from, how each replicate is degraded, and which comparators run on it.
struct ScenarioConfig {
  cohortgen::SynthConfig base;  // synthetic base recipe, used when base_path is empty
  std::string base_path;        // nonempty: load the base cohort from disk instead

  int n_replicates = 100;
  amputation::AmputationSpec amputation;
  std::vector<features::ModelKind> models;
  double hr_true = 1.0;  // exposure effect injected into every replicate
  std::uint64_t seed = 0;
  std::string out_dir = "hdmi-out";
  int jobs = 1;
  bool resample = true;  // bootstrap patients per replicate

  int m = 10;            // imputations per multiply-imputed comparator
  int k = 5;             // predictive mean matching donor pool
  double caliper = 0.2;
  causal::CaliperMode caliper_mode = causal::CaliperMode::logit_sd;

  void validate() const;
};

ScenarioConfig scenario_config_from_json(const std::string& text);
ScenarioConfig load_scenario_config(const std::string& path);

// One comparator's estimate on one replicate, with enough diagnostics to
// audit the variable-selection pipeline from the per-replicate output alone.
struct ModelResult {
  double log_hr = 0.0;
  double ci_lower = 0.0;
  double ci_upper = 0.0;
  bool degenerate = false;  // no usable estimate; numeric fields are meaningless
  std::string note;         // why degenerate, empty otherwise

  double within = 0.0;   // Rubin W (multiply-imputed comparators only)
  double between = 0.0;  // Rubin B
  Eigen::Index matched_pairs = 0;  // pairs in the first analysis

  std::vector<std::string> imputation_predictors;
  std::size_t n_z2_parent = 0;   // size of the z2 model's selected set
  std::size_t n_mz2_parent = 0;  // size of the missingness model's selected set
  std::vector<std::string> ps_covariates;
};

// Runs one comparator on one degraded replicate. All randomness derives from
// `seed`, so the result is independent of scheduling. Data-driven fitting
// failures come back flagged degenerate; configuration errors throw.
ModelResult run_model(const tabular::Cohort& amputed, features::ModelKind kind,
                      const ScenarioConfig& cfg, std::uint64_t seed);

struct MetricValue {
  double value = 0.0;
  double mcse = 0.0;  // Monte Carlo standard error
  double lo = 0.0;    // 95% interval
  double hi = 0.0;
};

struct MetricsSummary {
  std::string model;
  int n_used = 0;        // replicates entering the metric denominators
  int n_degenerate = 0;  // replicates without a usable estimate
  MetricValue rmse;
  MetricValue bias;
  MetricValue variance;
  MetricValue coverage;
};

// Performance metrics on the log hazard ratio scale against
// theta_true = log(hr_true). Pass usable replicates only; fewer than two is
// an error. Interval endpoints are clamped to each metric's support.
MetricsSummary compute_metrics(const Eigen::VectorXd& estimates, const Eigen::VectorXd& ci_lower,
                               const Eigen::VectorXd& ci_upper, double theta_true);

struct ReplicateRecord {
  int replicate = 0;
  features::ModelKind model = features::ModelKind::unadjusted;
  ModelResult result;
  bool failed = false;  // replicate-level pipeline failure, before any model ran
  std::string error;
};

struct ScenarioResult {
  std::vector<MetricsSummary> summary;      // one entry per configured model
  std::vector<ReplicateRecord> replicates;  // replicate-major, models in configured order
  int n_failed_replicates = 0;
  std::string out_dir;
};

// Full Monte Carlo loop: per replicate, draw a plasmode cohort, degrade it,
// run every configured comparator, then summarize. Writes replicates.csv,
// summary.csv and manifest.json under cfg.out_dir. Output bytes depend only
// on the configuration, never on cfg.jobs or thread scheduling. Replicate
// failures are recorded and counted; the scenario continues.
ScenarioResult run_scenario(const ScenarioConfig& cfg);

// Renders report.txt and one plot-ready panel CSV per metric from a scenario
// output directory. Pure function of summary.csv; missing inputs throw.
void write_report(const std::string& out_dir);

}  // namespace hdmi::simharness
