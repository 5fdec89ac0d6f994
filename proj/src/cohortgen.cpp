#include "hdmi/cohortgen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "hdmi/error.hpp"
#include "hdmi/rng.hpp"
#include "hdmi/stats.hpp"

namespace hdmi::cohortgen {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void check_probability(double p, const char* what) {
  if (!(p > 0.0 && p < 1.0)) {
    throw ConfigError(std::string(what) + " must lie in (0, 1), got " + std::to_string(p));
  }
}

}  // namespace

void OutcomeModelSpec::validate() const {
  if (!(hr_true > 0.0)) throw ConfigError("hr_true must be positive");
}

void ProxyBlockConfig::validate() const {
  if (name.empty()) throw ConfigError("proxy block needs a name");
  if (columns < 1) throw ConfigError("proxy block " + name + " needs at least one column");
  if (informative < 0 || informative > columns) {
    throw ConfigError("proxy block " + name + ": informative count outside [0, columns]");
  }
  if (!(std::fabs(corr_u) < 1.0) || !(std::fabs(corr_z2) < 1.0)) {
    throw ConfigError("proxy block " + name + ": correlations must lie in (-1, 1)");
  }
  if (corr_u * corr_u + corr_z2 * corr_z2 > 1.0) {
    throw ConfigError("proxy block " + name + ": corr_u^2 + corr_z2^2 exceeds 1");
  }
  if (kind == tabular::BlockKind::binary_sparse) check_probability(prevalence, "proxy prevalence");
}

void SynthConfig::validate() const {
  if (n < 2) throw ConfigError("cohort size must be at least 2");
  check_probability(u_prevalence, "u prevalence");
  for (double p : z1_prevalence) check_probability(p, "z1 prevalence");
  if (!(z2_sd > 0.0)) throw ConfigError("z2 sd must be positive");
  if (exposure_z1.size() != z1_prevalence.size() || outcome_z1.size() != z1_prevalence.size()) {
    throw ConfigError("z1 coefficient vectors must match the z1 covariate count");
  }
  if (!(event_rate > 0.0)) throw ConfigError("degenerate config: event hazard is zero");
  if (!(hr_true > 0.0)) throw ConfigError("hr_true must be positive");
  if (censoring_rate < 0.0) throw ConfigError("censoring rate must be nonnegative");
  if (!(admin_censor_time > 0.0)) throw ConfigError("administrative censoring time must be positive");
  for (const auto& b : blocks) b.validate();
}

std::vector<double> default_z1_prevalence() {
  return {0.45, 0.40, 0.35, 0.30, 0.30, 0.25, 0.25, 0.20, 0.20, 0.15, 0.15, 0.10, 0.10};
}

namespace {

using nlohmann::json;

std::vector<double> read_vector(const json& j, const std::string& key, std::vector<double> fallback) {
  if (!j.contains(key)) return fallback;
  return j.at(key).get<std::vector<double>>();
}

}  // namespace

SynthConfig synth_config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(std::string("synthetic config: ") + e.what());
  }

  SynthConfig cfg;
  try {
    cfg.n = j.value("n", 2000);
    cfg.seed = j.value("seed", std::uint64_t{0});
    cfg.u_prevalence = j.value("u_prevalence", cfg.u_prevalence);
    cfg.z1_prevalence = read_vector(j, "z1_prevalence", default_z1_prevalence());
    const std::size_t k = cfg.z1_prevalence.size();

    if (j.contains("z2")) {
      const json& z = j.at("z2");
      cfg.z2_mean = z.value("mean", cfg.z2_mean);
      cfg.z2_sd = z.value("sd", cfg.z2_sd);
      cfg.z2_u_shift = z.value("u_shift", cfg.z2_u_shift);
    }
    if (j.contains("exposure")) {
      const json& e = j.at("exposure");
      cfg.exposure_intercept = e.value("intercept", cfg.exposure_intercept);
      cfg.exposure_z1 = read_vector(e, "z1", std::vector<double>(k, 0.0));
      cfg.exposure_z2 = e.value("z2", cfg.exposure_z2);
      cfg.exposure_u = e.value("u", cfg.exposure_u);
    } else {
      cfg.exposure_z1.assign(k, 0.0);
    }
    if (j.contains("outcome")) {
      const json& o = j.at("outcome");
      cfg.event_rate = o.value("event_rate", cfg.event_rate);
      cfg.outcome_z1 = read_vector(o, "z1", std::vector<double>(k, 0.0));
      cfg.outcome_z2 = o.value("z2", cfg.outcome_z2);
      cfg.outcome_u = o.value("u", cfg.outcome_u);
      cfg.hr_true = o.value("hr_true", cfg.hr_true);
    } else {
      cfg.outcome_z1.assign(k, 0.0);
    }
    cfg.censoring_rate = j.value("censoring_rate", cfg.censoring_rate);
    cfg.admin_censor_time = j.value("admin_censor_time", cfg.admin_censor_time);

    if (j.contains("blocks")) {
      for (const json& bj : j.at("blocks")) {
        ProxyBlockConfig b;
        b.name = bj.value("name", b.name);
        const std::string kind = bj.value("kind", std::string("binary_sparse"));
        if (kind == "binary_sparse") {
          b.kind = tabular::BlockKind::binary_sparse;
        } else if (kind == "continuous_dense") {
          b.kind = tabular::BlockKind::continuous_dense;
        } else {
          throw ConfigError("unknown block kind '" + kind + "'");
        }
        b.columns = bj.value("columns", b.columns);
        b.informative = bj.value("informative", b.informative);
        b.corr_u = bj.value("corr_u", b.corr_u);
        b.corr_z2 = bj.value("corr_z2", b.corr_z2);
        b.prevalence = bj.value("prevalence", b.prevalence);
        cfg.blocks.push_back(std::move(b));
      }
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("synthetic config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

SynthConfig load_synth_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return synth_config_from_json(buf.str());
}

tabular::Cohort generate_synthetic_base(const SynthConfig& cfg) {
  cfg.validate();
  const Eigen::Index n = cfg.n;
  const Eigen::Index k = static_cast<Eigen::Index>(cfg.z1_prevalence.size());
  Rng rng(derive_seed(cfg.seed, hash_label("synthetic-base")));

  tabular::Cohort c;
  c.u.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) c.u[i] = rng.bernoulli(cfg.u_prevalence) ? 1 : 0;

  c.z1.resize(n, k);
  for (Eigen::Index j = 0; j < k; ++j) {
    const double p = cfg.z1_prevalence[static_cast<std::size_t>(j)];
    for (Eigen::Index i = 0; i < n; ++i) c.z1(i, j) = rng.bernoulli(p) ? 1.0 : 0.0;
    c.z1_cols.push_back({"z1_" + std::to_string(j + 1), true});
  }

  c.z2.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    c.z2[i] = cfg.z2_mean + cfg.z2_u_shift * c.u[i] + cfg.z2_sd * rng.normal();
  }
  c.mz2 = Eigen::VectorXi::Zero(n);

  c.exposure.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double lp = cfg.exposure_intercept + cfg.exposure_z2 * c.z2[i] + cfg.exposure_u * c.u[i];
    for (Eigen::Index j = 0; j < k; ++j) lp += cfg.exposure_z1[static_cast<std::size_t>(j)] * c.z1(i, j);
    c.exposure[i] = rng.bernoulli(1.0 / (1.0 + std::exp(-lp))) ? 1 : 0;
  }

  c.time.resize(n);
  c.event.resize(n);
  const double log_hr = std::log(cfg.hr_true);
  for (Eigen::Index i = 0; i < n; ++i) {
    double lp = log_hr * c.exposure[i] + cfg.outcome_z2 * c.z2[i] + cfg.outcome_u * c.u[i];
    for (Eigen::Index j = 0; j < k; ++j) lp += cfg.outcome_z1[static_cast<std::size_t>(j)] * c.z1(i, j);
    const double t_event = rng.exponential(cfg.event_rate * std::exp(lp));
    const double t_censor = cfg.censoring_rate > 0.0 ? rng.exponential(cfg.censoring_rate) : kInf;
    const double horizon = std::min(t_censor, cfg.admin_censor_time);
    c.time[i] = std::min(t_event, horizon);
    c.event[i] = t_event <= horizon ? 1 : 0;
  }

  // Standardized drivers of the proxy latent scores.
  const double su_sd = std::sqrt(cfg.u_prevalence * (1.0 - cfg.u_prevalence));
  const double z2_marg_mean = cfg.z2_mean + cfg.z2_u_shift * cfg.u_prevalence;
  const double z2_marg_sd =
      std::sqrt(cfg.z2_sd * cfg.z2_sd + cfg.z2_u_shift * cfg.z2_u_shift * su_sd * su_sd);
  Eigen::VectorXd su(n), sz(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    su[i] = (c.u[i] - cfg.u_prevalence) / su_sd;
    sz[i] = (c.z2[i] - z2_marg_mean) / z2_marg_sd;
  }

  for (const auto& bc : cfg.blocks) {
    const double resid = std::sqrt(1.0 - bc.corr_u * bc.corr_u - bc.corr_z2 * bc.corr_z2);
    std::vector<std::string> columns;
    columns.reserve(static_cast<std::size_t>(bc.columns));
    const char* stem = bc.kind == tabular::BlockKind::binary_sparse ? "c" : "e";
    for (int j = 0; j < bc.columns; ++j) columns.push_back(stem + std::to_string(j + 1));

    if (bc.kind == tabular::BlockKind::binary_sparse) {
      const double threshold = stats::normal_quantile(1.0 - bc.prevalence);
      std::vector<Eigen::Triplet<double>> cells;
      for (int j = 0; j < bc.columns; ++j) {
        const bool load = j < bc.informative;
        for (Eigen::Index i = 0; i < n; ++i) {
          const double noise = rng.normal();
          const double latent =
              load ? bc.corr_u * su[i] + bc.corr_z2 * sz[i] + resid * noise : noise;
          if (latent > threshold) cells.emplace_back(static_cast<int>(i), j, 1.0);
        }
      }
      Eigen::SparseMatrix<double> values(n, bc.columns);
      values.setFromTriplets(cells.begin(), cells.end());
      c.blocks.push_back(tabular::CovariateBlock::binary(bc.name, std::move(values), columns));
    } else {
      Eigen::MatrixXd values(n, bc.columns);
      for (int j = 0; j < bc.columns; ++j) {
        const bool load = j < bc.informative;
        for (Eigen::Index i = 0; i < n; ++i) {
          const double noise = rng.normal();
          values(i, j) = load ? bc.corr_u * su[i] + bc.corr_z2 * sz[i] + resid * noise : noise;
        }
      }
      c.blocks.push_back(tabular::CovariateBlock::continuous(bc.name, std::move(values), columns));
    }
  }

  c.validate();
  return c;
}

Eigen::MatrixXd named_design(const tabular::Cohort& cohort,
                             const std::vector<std::string>& names) {
  const Eigen::Index n = cohort.n();
  Eigen::MatrixXd design(n, static_cast<Eigen::Index>(names.size()));
  for (std::size_t j = 0; j < names.size(); ++j) {
    const std::string& name = names[j];
    const Eigen::Index col = static_cast<Eigen::Index>(j);
    if (name == "x") {
      design.col(col) = cohort.exposure.cast<double>();
    } else if (name == "z2") {
      if (cohort.mz2.size() > 0 && cohort.mz2.maxCoeff() != 0) {
        throw ConfigError("design column z2 needs fully observed z2");
      }
      design.col(col) = cohort.z2;
    } else if (name == "u") {
      design.col(col) = cohort.u.cast<double>();
    } else {
      bool found = false;
      for (std::size_t z = 0; z < cohort.z1_cols.size(); ++z) {
        if (cohort.z1_cols[z].name == name) {
          design.col(col) = cohort.z1.col(static_cast<Eigen::Index>(z));
          found = true;
          break;
        }
      }
      if (!found) throw ConfigError("cohort has no design column named " + name);
    }
  }
  return design;
}

std::vector<std::string> outcome_design_names(const tabular::Cohort& cohort,
                                              const OutcomeModelSpec& spec) {
  std::vector<std::string> names;
  if (spec.include_x) names.push_back("x");
  if (spec.include_z2) names.push_back("z2");
  if (spec.include_u) names.push_back("u");
  if (spec.include_z1) {
    for (const auto& col : cohort.z1_cols) names.push_back(col.name);
  }
  if (names.empty()) throw ConfigError("outcome model has no columns");
  return names;
}

FittedModel fit_outcome_model(const tabular::Cohort& cohort, const OutcomeModelSpec& spec) {
  spec.validate();
  cohort.validate();
  const auto names = outcome_design_names(cohort, spec);
  const Eigen::MatrixXd design = named_design(cohort, names);

  FittedModel fitted;
  fitted.model = regfit::fit_cox(design, names, cohort.time, cohort.event);
  const Eigen::VectorXd lp = design * fitted.model.coefficients;
  fitted.baseline = regfit::breslow_cumhaz(lp, cohort.time, cohort.event);
  return fitted;
}

FittedModel fit_censoring_model(const tabular::Cohort& cohort, const OutcomeModelSpec& spec) {
  tabular::Cohort flipped = cohort;
  flipped.event = (1 - flipped.event.array()).matrix();
  return fit_outcome_model(flipped, spec);
}

double invert_cumhaz(const regfit::BaselineHazard& bh, double h) {
  const Eigen::Index m = bh.times.size();
  if (m == 0) return kInf;
  const double* begin = bh.cumhaz.data();
  const double* it = std::lower_bound(begin, begin + m, h);
  if (it == begin + m) return kInf;
  return bh.times[it - begin];
}

regfit::BaselineHazard calibrate_event_rate(const regfit::BaselineHazard& bh,
                                            const tabular::Cohort& cohort,
                                            const regfit::CoxModel& model, double target_events) {
  const Eigen::Index n = cohort.n();
  if (!(target_events > 0.0 && target_events < static_cast<double>(n))) {
    throw CalibrationError("target event count must lie in (0, n)");
  }
  const Eigen::MatrixXd design = named_design(cohort, model.names);
  const Eigen::VectorXd risk = (design * model.coefficients).array().exp();
  Eigen::VectorXd horizon_cumhaz(n);
  for (Eigen::Index i = 0; i < n; ++i) horizon_cumhaz[i] = bh.value(cohort.time[i]);

  auto expected_events = [&](double kappa) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      total += 1.0 - std::exp(-kappa * horizon_cumhaz[i] * risk[i]);
    }
    return total;
  };

  constexpr double kTol = 1e-6;
  constexpr double kKappaCap = 1e15;
  double hi = 1.0;
  while (expected_events(hi) < target_events) {
    hi *= 2.0;
    if (hi > kKappaCap) {
      throw CalibrationError("target of " + std::to_string(target_events) +
                             " events unattainable; achievable expected events at most " +
                             std::to_string(expected_events(kKappaCap)));
    }
  }
  double lo = 0.0;
  double kappa = hi;
  for (int it = 0; it < 500; ++it) {
    kappa = 0.5 * (lo + hi);
    const double e = expected_events(kappa);
    if (std::fabs(e - target_events) <= kTol) break;
    if (e < target_events) {
      lo = kappa;
    } else {
      hi = kappa;
    }
  }
  if (std::fabs(expected_events(kappa) - target_events) > kTol) {
    throw CalibrationError("event-rate calibration failed to converge");
  }

  regfit::BaselineHazard scaled = bh;
  scaled.cumhaz *= kappa;
  return scaled;
}

tabular::Cohort generate_plasmode(const tabular::Cohort& base, const FittedModel& outcome,
                                  const FittedModel& censor, double hr_true, std::uint64_t seed,
                                  bool resample) {
  if (!(hr_true > 0.0)) throw ConfigError("hr_true must be positive");
  const Eigen::Index n = base.n();
  if (n == 0) throw ConfigError("empty base cohort");

  const auto x_slot = std::find(outcome.model.names.begin(), outcome.model.names.end(), "x");
  if (x_slot == outcome.model.names.end()) {
    throw ConfigError("outcome model does not include the exposure");
  }

  Rng rng(derive_seed(seed, hash_label("plasmode")));
  std::vector<Eigen::Index> rows(static_cast<std::size_t>(n));
  if (resample) {
    for (auto& r : rows) r = static_cast<Eigen::Index>(rng.uniform_int(static_cast<std::uint64_t>(n)));
  } else {
    std::iota(rows.begin(), rows.end(), Eigen::Index{0});
  }
  tabular::Cohort rep = base.select_rows(rows);

  Eigen::VectorXd beta = outcome.model.coefficients;
  beta[x_slot - outcome.model.names.begin()] = std::log(hr_true);
  const Eigen::VectorXd lp_event = named_design(rep, outcome.model.names) * beta;
  const Eigen::VectorXd lp_censor = named_design(rep, censor.model.names) * censor.model.coefficients;

  const double admin = base.time.maxCoeff();
  for (Eigen::Index i = 0; i < n; ++i) {
    const double h_event = -std::log(rng.uniform_pos()) / std::exp(lp_event[i]);
    const double h_censor = -std::log(rng.uniform_pos()) / std::exp(lp_censor[i]);
    const double t_event = invert_cumhaz(outcome.baseline, h_event);
    const double t_censor = std::min(invert_cumhaz(censor.baseline, h_censor), admin);
    rep.time[i] = std::min(t_event, t_censor);
    rep.event[i] = t_event <= t_censor ? 1 : 0;
  }
  return rep;
}

}  // namespace hdmi::cohortgen
