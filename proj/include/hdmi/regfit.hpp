#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "hdmi/design.hpp"

namespace hdmi::regfit {

enum class Family { gaussian, binomial, cox };

struct ConvergenceReport {
  int iterations = 0;
  double gradient_norm = 0.0;
};

// Unpenalized Cox fit: Newton-Raphson maximum of the Breslow-ties partial
// likelihood.
struct CoxModel {
  std::vector<std::string> names;
  Eigen::VectorXd coefficients;
  double loglik = 0.0;             // log partial likelihood at the optimum
  Eigen::MatrixXd information;     // observed information (not inverted)
  ConvergenceReport convergence;

  // Model-based covariance, information inverse.
  Eigen::MatrixXd covariance() const;
};

CoxModel fit_cox(const Eigen::MatrixXd& design, const std::vector<std::string>& names,
                 const Eigen::VectorXd& time, const Eigen::VectorXi& event);

// Step-function cumulative baseline hazard.
struct BaselineHazard {
  Eigen::VectorXd times;    // distinct event times, ascending
  Eigen::VectorXd cumhaz;   // value at and after times[k], before times[k+1]

  double value(double t) const;  // 0 before the first event time
};

// Breslow estimator at the model's linear predictor; lp = design * beta.
BaselineHazard breslow_cumhaz(const Eigen::VectorXd& lp, const Eigen::VectorXd& time,
                              const Eigen::VectorXi& event);

// Breslow-ties log partial likelihood at a fixed linear predictor.
double cox_partial_loglik(const Eigen::VectorXd& lp, const Eigen::VectorXd& time,
                          const Eigen::VectorXi& event);

// Lin-Wei sandwich: I^-1 (sum_c g_c g_c^T) I^-1, g_c the within-cluster sum
// of score residuals.
Eigen::MatrixXd cluster_robust_variance(const CoxModel& model, const Eigen::MatrixXd& design,
                                        const Eigen::VectorXd& time, const Eigen::VectorXi& event,
                                        const std::vector<int>& clusters);

// Unpenalized logistic MLE (Newton with step-halving). Separation surfaces
// as a divergence error once a coefficient passes the same bound as Cox.
struct LogisticModel {
  std::vector<std::string> names;  // first entry is the intercept
  Eigen::VectorXd coefficients;
  double loglik = 0.0;
  Eigen::MatrixXd covariance;      // inverse observed information
  ConvergenceReport convergence;

  Eigen::VectorXd predict_linear(const Eigen::MatrixXd& design) const;
};

LogisticModel fit_logistic(const Eigen::MatrixXd& design, const std::vector<std::string>& names,
                           const Eigen::VectorXi& y);

// Response container for the one lasso entry point. Gaussian and binomial
// use y; cox uses (time, event).
struct Response {
  Eigen::VectorXd y;
  Eigen::VectorXd time;
  Eigen::VectorXi event;

  static Response gaussian(Eigen::VectorXd y);
  static Response binomial(const Eigen::VectorXi& y);
  static Response cox(Eigen::VectorXd time, Eigen::VectorXi event);
};

struct LassoOptions {
  int n_folds = 5;                // 0 disables cross-validation
  std::uint64_t seed = 0;
  int path_length = 100;
  Eigen::VectorXd user_lambda;    // overrides the computed path when nonempty
};

struct LassoFit {
  Family family = Family::gaussian;
  std::vector<std::string> names;
  Eigen::VectorXd lambda;          // decreasing positive path
  Eigen::MatrixXd coefficients;    // p x path length, original scale
  Eigen::VectorXd intercepts;      // per lambda; zero for cox
  Eigen::VectorXd penalty_factors;
  std::vector<int> fold_assignments;  // empty when n_folds = 0
  Eigen::VectorXd cv_error;           // mean CV error per lambda
  int chosen_index = 0;
  double chosen_lambda = 0.0;
  std::vector<std::string> selected;  // nonzero names at the chosen lambda
  std::vector<std::string> warnings;

  Eigen::VectorXd coef_at_chosen() const { return coefficients.col(chosen_index); }
  bool is_selected(const std::string& name) const;
};

// Coordinate-descent lasso over a log-spaced lambda path with internal
// standardization; coefficients are reported on the original scale. Penalty
// factor 0 forces a covariate into every solution. Constant columns are
// dropped from the fit with a warning and report coefficient 0.
LassoFit fit_lasso(Family family, const DesignMatrix& design, const Response& response,
                   const Eigen::VectorXd& penalty_factors, const LassoOptions& options = {});

// Largest absolute true-objective gradient over penalized coordinates at the
// forced-only solution, on the standardized scale. Exposed for tests.
double lasso_lambda_max(Family family, const DesignMatrix& design, const Response& response,
                        const Eigen::VectorXd& penalty_factors);

}  // namespace hdmi::regfit
