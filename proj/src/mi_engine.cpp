#include "hdmi/mi_engine.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <unordered_set>

#include "hdmi/error.hpp"
#include "hdmi/regfit.hpp"
#include "hdmi/rng.hpp"

namespace hdmi::mi_engine {

const std::vector<std::string> kForcedPredictors = {"x", "event", "na_cumhaz"};

void ImputationPlan::validate() const {
  if (m < 2) throw ConfigError("imputation count m must be at least 2");
  if (k < 1) throw ConfigError("donor pool size k must be at least 1");
  for (const auto& name : forced) {
    if (std::find(predictors.begin(), predictors.end(), name) == predictors.end())
      throw ConfigError("forced predictor '" + name + "' missing from the plan");
  }
}

namespace {

Eigen::VectorXd nelson_aalen_at_followup(const tabular::Cohort& cohort) {
  const regfit::BaselineHazard na =
      regfit::breslow_cumhaz(Eigen::VectorXd::Zero(cohort.n()), cohort.time, cohort.event);
  Eigen::VectorXd out(cohort.n());
  for (Eigen::Index i = 0; i < cohort.n(); ++i) out[i] = na.value(cohort.time[i]);
  return out;
}

Eigen::MatrixXd forced_columns(const tabular::Cohort& cohort) {
  Eigen::MatrixXd f(cohort.n(), 3);
  f.col(0) = cohort.exposure.cast<double>();
  f.col(1) = cohort.event.cast<double>();
  f.col(2) = nelson_aalen_at_followup(cohort);
  return f;
}

}  // namespace

Eigen::MatrixXd imputation_design(const tabular::Cohort& cohort,
                                  const std::vector<std::string>& names) {
  Eigen::MatrixXd design(cohort.n(), static_cast<Eigen::Index>(names.size()));
  Eigen::VectorXd na_cumhaz;  // computed on first use
  for (std::size_t j = 0; j < names.size(); ++j) {
    const std::string& name = names[j];
    const Eigen::Index col = static_cast<Eigen::Index>(j);
    if (name == "x") {
      design.col(col) = cohort.exposure.cast<double>();
      continue;
    }
    if (name == "event") {
      design.col(col) = cohort.event.cast<double>();
      continue;
    }
    if (name == "na_cumhaz") {
      if (na_cumhaz.size() == 0) na_cumhaz = nelson_aalen_at_followup(cohort);
      design.col(col) = na_cumhaz;
      continue;
    }
    if (name == "z2") {
      if (cohort.mz2.sum() != 0)
        throw ConfigError("predictor 'z2' requires a completed cohort (no missing z2)");
      design.col(col) = cohort.z2;
      continue;
    }
    bool found = false;
    for (Eigen::Index z = 0; z < cohort.z1.cols(); ++z) {
      if (cohort.z1_cols[static_cast<std::size_t>(z)].name == name) {
        design.col(col) = cohort.z1.col(z);
        found = true;
        break;
      }
    }
    if (found) continue;
    const auto dot = name.find('.');
    if (dot == std::string::npos)
      throw ConfigError("unknown imputation predictor '" + name + "'");
    const auto& block = cohort.block(name.substr(0, dot));
    const std::string col_name = name.substr(dot + 1);
    const auto it = std::find(block.columns.begin(), block.columns.end(), col_name);
    if (it == block.columns.end())
      throw ConfigError("unknown imputation predictor '" + name + "'");
    const Eigen::Index idx = it - block.columns.begin();
    if (block.kind == tabular::BlockKind::binary_sparse)
      design.col(col) = Eigen::VectorXd(block.sparse.col(idx));
    else
      design.col(col) = block.dense.col(idx);
  }
  return design;
}

ImputationPlan select_imputation_predictors(const tabular::Cohort& cohort,
                                            const DesignMatrix& candidates, std::uint64_t seed) {
  cohort.validate();
  if (candidates.rows() != 0 && candidates.rows() != cohort.n())
    throw ConfigError("candidate matrix row count does not match the cohort");

  ImputationPlan plan;
  plan.forced = kForcedPredictors;
  plan.predictors = kForcedPredictors;
  plan.seed = seed;

  const std::vector<Eigen::Index> complete = cohort.complete_rows();
  if (complete.empty()) throw FitError("imputation selection needs at least one complete case");
  if (cohort.mz2.sum() == 0) {
    plan.warnings.push_back("no missing z2 values; selection skipped, forced predictors only");
    return plan;
  }

  DesignMatrix design = DesignMatrix::from_dense(forced_columns(cohort), kForcedPredictors);
  design.append(candidates);
  Eigen::VectorXd penalties = Eigen::VectorXd::Ones(design.cols());
  penalties.head(3).setZero();

  regfit::LassoOptions options;
  options.seed = derive_seed(seed, hash_label("lasso-z2"));
  const regfit::LassoFit fit_z2 =
      regfit::fit_lasso(regfit::Family::gaussian, design.select_rows(complete),
                        regfit::Response::gaussian(cohort.z2_observed()), penalties, options);

  options.seed = derive_seed(seed, hash_label("lasso-mz2"));
  const regfit::LassoFit fit_mz2 = regfit::fit_lasso(
      regfit::Family::binomial, design, regfit::Response::binomial(cohort.mz2), penalties, options);

  const std::unordered_set<std::string> in_mz2(fit_mz2.selected.begin(), fit_mz2.selected.end());
  bool any_candidate = false;
  for (const auto& name : candidates.names()) {
    const bool in_z2 = fit_z2.is_selected(name);
    if (in_z2) plan.z2_selected.push_back(name);
    if (in_mz2.count(name) > 0) plan.mz2_selected.push_back(name);
    if (in_z2 && in_mz2.count(name) > 0) {
      plan.predictors.push_back(name);
      any_candidate = true;
    }
  }
  if (!any_candidate)
    plan.warnings.push_back(
        "no auxiliary covariate was selected by both models; forced predictors only");
  for (const auto& w : fit_z2.warnings) plan.warnings.push_back("z2 model: " + w);
  for (const auto& w : fit_mz2.warnings) plan.warnings.push_back("missingness model: " + w);
  return plan;
}

namespace {

// k nearest donors to value v among sorted donor means; ties toward the
// smaller mean. Returns indices into the sorted array.
std::vector<Eigen::Index> nearest_donors(const std::vector<double>& sorted_means, double v,
                                         int k) {
  const Eigen::Index n = static_cast<Eigen::Index>(sorted_means.size());
  Eigen::Index right = std::lower_bound(sorted_means.begin(), sorted_means.end(), v) -
                       sorted_means.begin();
  Eigen::Index left = right - 1;
  std::vector<Eigen::Index> picked;
  picked.reserve(static_cast<std::size_t>(k));
  while (static_cast<int>(picked.size()) < k) {
    if (left < 0) {
      picked.push_back(right++);
    } else if (right >= n) {
      picked.push_back(left--);
    } else if (v - sorted_means[static_cast<std::size_t>(left)] <=
               sorted_means[static_cast<std::size_t>(right)] - v) {
      picked.push_back(left--);
    } else {
      picked.push_back(right++);
    }
  }
  return picked;
}

}  // namespace

ImputationResult pmm_impute(const tabular::Cohort& cohort, const ImputationPlan& plan) {
  cohort.validate();
  plan.validate();

  ImputationResult result;
  result.imputed = cohort.mz2;
  if (cohort.mz2.sum() == 0) {
    result.completed.assign(static_cast<std::size_t>(plan.m), cohort);
    return result;
  }

  const std::vector<Eigen::Index> complete = cohort.complete_rows();
  const Eigen::Index n_cc = static_cast<Eigen::Index>(complete.size());
  std::vector<Eigen::Index> missing;
  for (Eigen::Index i = 0; i < cohort.n(); ++i)
    if (cohort.mz2[i] == 1) missing.push_back(i);

  const Eigen::MatrixXd predictors = imputation_design(cohort, plan.predictors);
  const Eigen::Index q = predictors.cols() + 1;  // intercept included
  if (n_cc < q + 2) {
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "%lld complete cases cannot support %lld imputation predictors; "
                  "reduce the predictor set",
                  static_cast<long long>(n_cc), static_cast<long long>(q));
    throw FitError(buf);
  }
  if (n_cc < plan.k) throw FitError("fewer complete cases than the donor pool size k");

  Eigen::MatrixXd x_cc(n_cc, q);
  Eigen::VectorXd y_cc(n_cc);
  for (Eigen::Index r = 0; r < n_cc; ++r) {
    x_cc(r, 0) = 1.0;
    x_cc.row(r).tail(q - 1) = predictors.row(complete[static_cast<std::size_t>(r)]);
    y_cc[r] = cohort.z2[complete[static_cast<std::size_t>(r)]];
  }

  Eigen::MatrixXd xtx = x_cc.transpose() * x_cc;
  const Eigen::VectorXd xty = x_cc.transpose() * y_cc;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(xtx);
  auto solvable = [&] {
    return ldlt.info() == Eigen::Success && ldlt.isPositive() &&
           (ldlt.vectorD().array() > 0).all();
  };
  if (!solvable()) {
    xtx.diagonal().array() += 1e-8;
    ldlt.compute(xtx);
    result.warnings.push_back(
        "complete-case design is singular; 1e-8 ridge added to the normal equations");
    if (!solvable()) throw SingularityError("imputation design remains singular after ridge");
  }
  const Eigen::VectorXd beta_hat = ldlt.solve(xty);
  const double rss = (y_cc - x_cc * beta_hat).squaredNorm();
  const Eigen::MatrixXd xtx_inv =
      ldlt.solve(Eigen::MatrixXd::Identity(q, q));
  const Eigen::MatrixXd chol_l =
      Eigen::LLT<Eigen::MatrixXd>(
          (xtx_inv + xtx_inv.transpose()) / 2.0 +
          Eigen::MatrixXd::Identity(q, q) * 1e-14)
          .matrixL();

  // Donor means use the least-squares fit and stay fixed across imputations.
  std::vector<std::pair<double, Eigen::Index>> donors(static_cast<std::size_t>(n_cc));
  for (Eigen::Index r = 0; r < n_cc; ++r)
    donors[static_cast<std::size_t>(r)] = {x_cc.row(r) * beta_hat,
                                           complete[static_cast<std::size_t>(r)]};
  std::sort(donors.begin(), donors.end());
  std::vector<double> donor_means(donors.size());
  for (std::size_t r = 0; r < donors.size(); ++r) donor_means[r] = donors[r].first;

  const double df = static_cast<double>(n_cc - q);
  result.completed.reserve(static_cast<std::size_t>(plan.m));
  for (int t = 0; t < plan.m; ++t) {
    Rng rng(derive_seed(plan.seed, static_cast<std::uint64_t>(t), hash_label("pmm")));
    const double sigma2 = rss / rng.chi_square(df);
    Eigen::VectorXd z(q);
    for (Eigen::Index j = 0; j < q; ++j) z[j] = rng.normal();
    const Eigen::VectorXd beta_star = beta_hat + std::sqrt(sigma2) * (chol_l * z);

    tabular::Cohort filled = cohort;
    for (const Eigen::Index row : missing) {
      const double mean_star =
          beta_star[0] + predictors.row(row).dot(beta_star.tail(q - 1));
      const std::vector<Eigen::Index> pool = nearest_donors(donor_means, mean_star, plan.k);
      const Eigen::Index pick = pool[rng.uniform_int(static_cast<std::uint64_t>(plan.k))];
      filled.z2[row] = cohort.z2[donors[static_cast<std::size_t>(pick)].second];
    }
    filled.mz2.setZero();
    result.completed.push_back(std::move(filled));
  }
  return result;
}

}  // namespace hdmi::mi_engine
