#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <vector>

#include "hdmi/tabular.hpp"

namespace hdmi::amputation {

// MNAR mechanism for z2: each patient's missingness risk is a weighted sum
// of the unmeasured confounder and z2 itself, patients are grouped into
// equal quantiles of the scaled score, and each group's missingness
// probability is proportional to its odds weight with overall mean `prop`.
struct AmputationSpec {
  double weight_u = 0.8;
  double weight_z2 = 0.2;
  double prop = 0.5;  // target overall missingness proportion, in (0, 1)
  int n_quantiles = 4;
  std::vector<double> odds = {1.0, 2.0, 3.0, 4.0};
  std::uint64_t seed = 0;

  // Throws ConfigError when a derived per-quantile probability leaves [0, 1],
  // naming the offending quantile.
  void validate() const;
};

// wss_i = weight_u * u_i + weight_z2 * z2_i.
Eigen::VectorXd weighted_sum_score(const Eigen::VectorXi& u, const Eigen::VectorXd& z2,
                                   const AmputationSpec& spec);

// Centers and scales to sample mean 0 and sample sd 1 (divisor n - 1).
// Throws FitError when the scores are constant.
Eigen::VectorXd scale_scores(const Eigen::VectorXd& wss);

// Per-quantile probabilities p_q = odds_q * prop * Q / sum(odds); their mean
// is `prop` exactly.
Eigen::VectorXd group_probabilities(const AmputationSpec& spec);

// Ascending quantile group index of each patient, stable in (score, patient
// index). When n is not divisible by n_quantiles the oversized groups are
// filled bottom-up at indices 0, 2, 4, ... then 1, 3, 5, ...
Eigen::VectorXi quantile_groups(const Eigen::VectorXd& scaled, int n_quantiles);

// Per-patient missingness probability: the group probability of the
// patient's scaled-score quantile.
Eigen::VectorXd quantile_probabilities(const Eigen::VectorXd& scaled, const AmputationSpec& spec);

// Copy of the cohort with mz2 redrawn Bernoulli(p_i). z2 values are left in
// place, the mask alone encodes missingness until the cohort is written out.
// Requires fully observed z2 on input.
tabular::Cohort ampute(const tabular::Cohort& cohort, const AmputationSpec& spec);

}  // namespace hdmi::amputation
