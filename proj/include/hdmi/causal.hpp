#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "hdmi/design.hpp"
#include "hdmi/tabular.hpp"

namespace hdmi::causal {

// Scale on which nearest-neighbor distances and the caliper are measured.
// logit_sd: distances on logit(ps), caliper = multiple x SD(logit ps).
// absolute: distances on ps itself, caliper = the multiple as given.
enum class CaliperMode { logit_sd, absolute };

struct MatchResult {
  std::vector<std::pair<Eigen::Index, Eigen::Index>> pairs;  // (treated, comparator)
  double caliper = 0.0;             // on the matching scale
  Eigen::Index unmatched_treated = 0;
};

struct EffectEstimate {
  double log_hr = 0.0;
  double variance = 0.0;   // cluster-robust, pairs as clusters
  bool degenerate = false;  // no usable fit; log_hr/variance are meaningless
  std::string note;
};

struct PooledEstimate {
  int m = 0;
  double estimate = 0.0;   // pooled log hazard ratio
  double within = 0.0;     // W
  double between = 0.0;    // B
  double total = 0.0;      // T = W + (1 + 1/m) B
  double df = 0.0;         // +inf when B = 0
  double ci_lower = 0.0;   // log scale
  double ci_upper = 0.0;
  double hr = 0.0;
  double hr_lower = 0.0;
  double hr_upper = 0.0;
};

// Cox lasso of (time, event) on exposure plus candidates, exposure forced.
// Returns the selected candidate names (never the exposure) with "z2"
// appended unconditionally.
std::vector<std::string> select_ps_covariates(const tabular::Cohort& cohort,
                                              const DesignMatrix& candidates, std::uint64_t seed);

// Fitted probabilities from a logistic regression of exposure on the named
// columns. An empty name list gives the intercept-only model.
Eigen::VectorXd estimate_ps(const tabular::Cohort& cohort, const std::vector<std::string>& names);

// Greedy 1:1 nearest-neighbor matching without replacement. Treated units
// are processed in seeded-random order; distance ties are broken by a seeded
// draw. Throws when no pair lands within the caliper.
MatchResult match_1to1(const Eigen::VectorXd& ps, const Eigen::VectorXi& exposure,
                       double caliper_multiple = 0.2, std::uint64_t seed = 0,
                       CaliperMode mode = CaliperMode::logit_sd);

// Marginal Cox effect of exposure on the matched sample with pair-clustered
// robust variance. Unfittable samples come back flagged, not thrown.
EffectEstimate marginal_effect(const tabular::Cohort& cohort, const MatchResult& matches);

PooledEstimate rubin_pool(const Eigen::VectorXd& estimates, const Eigen::VectorXd& variances);

}  // namespace hdmi::causal
