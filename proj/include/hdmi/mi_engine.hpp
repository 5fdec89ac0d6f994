#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "hdmi/design.hpp"
#include "hdmi/tabular.hpp"

namespace hdmi::mi_engine {

// Names of the columns forced into every imputation model: the exposure and
// the outcome representation (event indicator plus Nelson-Aalen cumulative
// hazard at each patient's follow-up time).
extern const std::vector<std::string> kForcedPredictors;

struct ImputationPlan {
  int m = 10;
  int k = 5;
  std::vector<std::string> predictors;  // forced first, then the intersection
  std::vector<std::string> forced;
  // Candidate names selected by each parent model; the auxiliary part of
  // `predictors` is their intersection.
  std::vector<std::string> z2_selected;
  std::vector<std::string> mz2_selected;
  std::uint64_t seed = 0;
  std::vector<std::string> warnings;

  void validate() const;  // m >= 2, k >= 1, forced contained in predictors
};

// Dense matrix for the named predictors: "x", "event", "na_cumhaz", a z1
// column, or "<block>.<column>".
Eigen::MatrixXd imputation_design(const tabular::Cohort& cohort,
                                  const std::vector<std::string>& names);

// Runs the two selection fits (gaussian for z2 on complete cases, binomial
// for the missingness mask on all rows), both with the forced columns at
// penalty 0, and intersects their selected sets. An empty intersection falls
// back to the forced columns with a warning on the plan.
ImputationPlan select_imputation_predictors(const tabular::Cohort& cohort,
                                            const DesignMatrix& candidates, std::uint64_t seed);

struct ImputationResult {
  std::vector<tabular::Cohort> completed;  // m cohorts, mz2 all zero
  Eigen::VectorXi imputed;                 // 1 where z2 was filled in
  std::vector<std::string> warnings;
};

// Type-1 predictive mean matching: per imputation, (beta*, sigma*) are drawn
// from the normal-inverse-chi-square posterior around the complete-case
// least-squares fit; donors are scored with the least-squares coefficients,
// recipients with the draw, and each recipient copies the observed z2 of one
// of its k nearest donors chosen uniformly.
ImputationResult pmm_impute(const tabular::Cohort& cohort, const ImputationPlan& plan);

}  // namespace hdmi::mi_engine
