#include "hdmi/causal.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "hdmi/error.hpp"
#include "hdmi/mi_engine.hpp"
#include "hdmi/regfit.hpp"
#include "hdmi/rng.hpp"
#include "hdmi/stats.hpp"

namespace hdmi::causal {

std::vector<std::string> select_ps_covariates(const tabular::Cohort& cohort,
                                              const DesignMatrix& candidates,
                                              std::uint64_t seed) {
  cohort.validate();
  if (cohort.mz2.sum() != 0)
    throw ConfigError("propensity selection requires a completed cohort (no missing z2)");
  for (const auto& name : candidates.names()) {
    if (name == "x" || name == "z2")
      throw ConfigError("candidate set must not contain '" + name + "'");
  }
  if (candidates.cols() > 0 && candidates.rows() != cohort.n())
    throw ConfigError("candidate matrix row count does not match the cohort");

  DesignMatrix design =
      DesignMatrix::from_dense(cohort.exposure.cast<double>(), {"x"});
  design.append(candidates);
  Eigen::VectorXd penalties = Eigen::VectorXd::Ones(design.cols());
  penalties[0] = 0.0;

  regfit::LassoOptions options;
  options.seed = derive_seed(seed, hash_label("lasso-ps"));
  const regfit::LassoFit fit =
      regfit::fit_lasso(regfit::Family::cox, design,
                        regfit::Response::cox(cohort.time, cohort.event), penalties, options);

  std::vector<std::string> names;
  for (const auto& name : fit.selected) {
    if (name != "x") names.push_back(name);
  }
  names.push_back("z2");
  return names;
}

Eigen::VectorXd estimate_ps(const tabular::Cohort& cohort,
                            const std::vector<std::string>& names) {
  cohort.validate();
  if (cohort.mz2.sum() != 0)
    throw ConfigError("propensity estimation requires a completed cohort (no missing z2)");
  const Eigen::MatrixXd design = mi_engine::imputation_design(cohort, names);
  regfit::LogisticModel model;
  try {
    model = regfit::fit_logistic(design, names, cohort.exposure);
  } catch (const DivergenceError& e) {
    throw DivergenceError(std::string(e.what()) + "; review the propensity covariate set");
  }
  const Eigen::VectorXd lp = model.predict_linear(design);
  Eigen::VectorXd ps(lp.size());
  for (Eigen::Index i = 0; i < lp.size(); ++i) ps[i] = 1.0 / (1.0 + std::exp(-lp[i]));
  return ps;
}

MatchResult match_1to1(const Eigen::VectorXd& ps, const Eigen::VectorXi& exposure,
                       double caliper_multiple, std::uint64_t seed, CaliperMode mode) {
  const Eigen::Index n = ps.size();
  if (exposure.size() != n) throw ConfigError("matching inputs disagree on length");
  if (!(caliper_multiple > 0.0)) throw ConfigError("caliper multiple must be positive");
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!(ps[i] > 0.0 && ps[i] < 1.0))
      throw ConfigError("propensity scores must lie strictly inside (0, 1)");
  }

  Eigen::VectorXd scale(n);
  if (mode == CaliperMode::logit_sd) {
    for (Eigen::Index i = 0; i < n; ++i) scale[i] = std::log(ps[i] / (1.0 - ps[i]));
  } else {
    scale = ps;
  }

  std::vector<Eigen::Index> treated;
  std::set<std::pair<double, Eigen::Index>> pool;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (exposure[i] == 1) {
      treated.push_back(i);
    } else {
      pool.insert({scale[i], i});
    }
  }
  if (treated.empty() || pool.empty()) throw ConfigError("matching needs both arms nonempty");

  MatchResult result;
  result.caliper = mode == CaliperMode::logit_sd ? caliper_multiple * stats::sample_sd(scale)
                                                 : caliper_multiple;

  Rng rng(derive_seed(seed, hash_label("match")));
  rng.shuffle(treated);

  constexpr Eigen::Index kLow = std::numeric_limits<Eigen::Index>::min();
  for (const Eigen::Index t : treated) {
    if (pool.empty()) {
      ++result.unmatched_treated;
      continue;
    }
    const double v = scale[t];
    auto right = pool.lower_bound({v, kLow});
    auto best = pool.end();
    if (right == pool.begin()) {
      best = right;
    } else if (right == pool.end()) {
      best = std::prev(right);
    } else {
      auto left = std::prev(right);
      const double dl = v - left->first;
      const double dr = right->first - v;
      if (dl < dr) {
        best = left;
      } else if (dr < dl) {
        best = right;
      } else {
        best = rng.uniform_int(2) == 0 ? left : right;
      }
    }
    if (std::abs(best->first - v) <= result.caliper) {
      result.pairs.emplace_back(t, best->second);
      pool.erase(best);
    } else {
      ++result.unmatched_treated;
    }
  }
  if (result.pairs.empty())
    throw FitError("no matched pairs within the caliper; replicate cannot proceed");
  return result;
}

EffectEstimate marginal_effect(const tabular::Cohort& cohort, const MatchResult& matches) {
  if (matches.pairs.empty()) throw ConfigError("marginal effect needs at least one pair");
  const Eigen::Index n_m = 2 * static_cast<Eigen::Index>(matches.pairs.size());
  Eigen::MatrixXd design(n_m, 1);
  Eigen::VectorXd time(n_m);
  Eigen::VectorXi event(n_m);
  std::vector<int> clusters(static_cast<std::size_t>(n_m));
  Eigen::Index row = 0;
  int pair_id = 0;
  for (const auto& [t, c] : matches.pairs) {
    if (cohort.exposure[t] != 1 || cohort.exposure[c] != 0)
      throw ConfigError("matched pair indices do not split by arm");
    for (const Eigen::Index idx : {t, c}) {
      design(row, 0) = cohort.exposure[idx];
      time[row] = cohort.time[idx];
      event[row] = cohort.event[idx];
      clusters[static_cast<std::size_t>(row)] = pair_id;
      ++row;
    }
    ++pair_id;
  }

  EffectEstimate out;
  if (event.sum() == 0) {
    out.degenerate = true;
    out.note = "no events in the matched sample";
    return out;
  }
  try {
    const regfit::CoxModel model = regfit::fit_cox(design, {"x"}, time, event);
    const Eigen::MatrixXd robust =
        regfit::cluster_robust_variance(model, design, time, event, clusters);
    out.log_hr = model.coefficients[0];
    out.variance = robust(0, 0);
  } catch (const FitError& e) {
    out.degenerate = true;
    out.note = e.what();
  }
  return out;
}

PooledEstimate rubin_pool(const Eigen::VectorXd& estimates, const Eigen::VectorXd& variances) {
  const Eigen::Index m = estimates.size();
  if (variances.size() != m) throw ConfigError("pooling inputs disagree on length");
  if (m < 2) throw ConfigError("pooling needs at least two imputations");
  for (Eigen::Index i = 0; i < m; ++i) {
    if (!std::isfinite(estimates[i]) || !std::isfinite(variances[i]) || variances[i] < 0.0)
      throw ConfigError("imputation " + std::to_string(i + 1) + " contributed a non-finite value");
  }

  PooledEstimate out;
  out.m = static_cast<int>(m);
  out.estimate = stats::mean(estimates);
  out.within = stats::mean(variances);
  out.between = stats::sample_variance(estimates);
  const double md = static_cast<double>(m);
  const double b_scaled = (1.0 + 1.0 / md) * out.between;
  out.total = out.within + b_scaled;
  double q;
  if (out.between > 0.0) {
    const double r = out.within / b_scaled;
    out.df = (md - 1.0) * (1.0 + r) * (1.0 + r);
    q = stats::student_t_quantile(0.975, out.df);
  } else {
    out.df = std::numeric_limits<double>::infinity();
    q = stats::normal_quantile(0.975);
  }
  const double half = q * std::sqrt(out.total);
  out.ci_lower = out.estimate - half;
  out.ci_upper = out.estimate + half;
  out.hr = std::exp(out.estimate);
  out.hr_lower = std::exp(out.ci_lower);
  out.hr_upper = std::exp(out.ci_upper);
  return out;
}

}  // namespace hdmi::causal
