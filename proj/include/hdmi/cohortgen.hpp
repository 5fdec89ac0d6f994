#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "hdmi/regfit.hpp"
#include "hdmi/tabular.hpp"

namespace hdmi::cohortgen {

// Which columns enter the outcome (and censoring) Cox model, plus the
// investigator-chosen true hazard ratio imposed on the exposure.
struct OutcomeModelSpec {
  bool include_x = true;
  bool include_z2 = true;
  bool include_u = true;
  bool include_z1 = true;
  double hr_true = 1.0;

  void validate() const;  // hr_true must be positive
};

struct FittedModel {
  regfit::CoxModel model;
  regfit::BaselineHazard baseline;
};

// One synthetic auxiliary block. The first `informative` columns load on the
// standardized (U, Z2) pair through a latent factor; the rest are pure noise.
// Binary blocks threshold the latent score at the prevalence quantile,
// continuous blocks keep the score itself.
struct ProxyBlockConfig {
  std::string name = "claims";
  tabular::BlockKind kind = tabular::BlockKind::binary_sparse;
  int columns = 50;
  int informative = 10;
  double corr_u = 0.3;
  double corr_z2 = 0.3;
  double prevalence = 0.2;  // binary blocks only

  void validate() const;
};

// Stand-in for the proprietary base cohort: every distribution is explicit
// and seeded. Exposure follows a logistic model on (Z1, Z2, U); event and
// censoring times are exponential with the configured log-hazard terms.
struct SynthConfig {
  Eigen::Index n = 2000;
  std::uint64_t seed = 0;

  std::vector<double> z1_prevalence;  // binary investigator covariates
  double u_prevalence = 0.3;
  double z2_mean = 0.0;
  double z2_sd = 1.0;
  double z2_u_shift = 1.0;  // z2 = mean + shift * u + sd * noise

  double exposure_intercept = 0.0;
  std::vector<double> exposure_z1;
  double exposure_z2 = 0.3;
  double exposure_u = 0.4;

  double event_rate = 0.1;  // exponential baseline hazard for the outcome
  std::vector<double> outcome_z1;
  double outcome_z2 = 0.3;
  double outcome_u = 0.4;
  double hr_true = 1.0;

  double censoring_rate = 0.05;  // covariate-independent exponential
  double admin_censor_time = 20.0;

  std::vector<ProxyBlockConfig> blocks;

  void validate() const;
};

// 13 investigator covariates with varied prevalences.
std::vector<double> default_z1_prevalence();

SynthConfig load_synth_config(const std::string& path);
SynthConfig synth_config_from_json(const std::string& text);

tabular::Cohort generate_synthetic_base(const SynthConfig& cfg);

// Dense design for the named columns: "x", "z2", "u", or a z1 column name.
Eigen::MatrixXd named_design(const tabular::Cohort& cohort, const std::vector<std::string>& names);

// Columns implied by the spec, in the order x, z2, u, z1...
std::vector<std::string> outcome_design_names(const tabular::Cohort& cohort,
                                              const OutcomeModelSpec& spec);

FittedModel fit_outcome_model(const tabular::Cohort& cohort, const OutcomeModelSpec& spec);

// Same fit with the event indicator inverted: censoring is the event.
FittedModel fit_censoring_model(const tabular::Cohort& cohort, const OutcomeModelSpec& spec);

// Smallest event time whose cumulative hazard reaches h; +infinity when h
// exceeds the final value ("beyond follow-up").
double invert_cumhaz(const regfit::BaselineHazard& bh, double h);

// Multiplies cumhaz by the scalar kappa > 0 at which the expected event count
// sum_i (1 - exp(-kappa * cumhaz(tau_i) * exp(lp_i))) hits target_events
// (tau_i = patient i's follow-up horizon). Bisection to |expected - target|
// <= 1e-6. Throws CalibrationError with the achievable range when the target
// cannot be reached.
regfit::BaselineHazard calibrate_event_rate(const regfit::BaselineHazard& bh,
                                            const tabular::Cohort& cohort,
                                            const regfit::CoxModel& model, double target_events);

// One plasmode replicate: patients resampled with replacement (or reused in
// order when resample = false), the outcome model's x coefficient replaced by
// log(hr_true), event and censoring times drawn by inverting the fitted
// cumulative hazards, administrative censoring at the base cohort's maximum
// follow-up. Same seed, same replicate.
tabular::Cohort generate_plasmode(const tabular::Cohort& base, const FittedModel& outcome,
                                  const FittedModel& censor, double hr_true, std::uint64_t seed,
                                  bool resample = true);

}  // namespace hdmi::cohortgen
