#include "hdmi/simharness.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <limits>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "hdmi/csv.hpp"
#include "hdmi/error.hpp"
#include "hdmi/mi_engine.hpp"
#include "hdmi/regfit.hpp"
#include "hdmi/rng.hpp"
#include "hdmi/stats.hpp"

namespace hdmi::simharness {

namespace {

constexpr const char* kEngineVersion = "0.1.0";

using nlohmann::json;

causal::CaliperMode caliper_mode_from_string(const std::string& s) {
  if (s == "logit_sd") return causal::CaliperMode::logit_sd;
  if (s == "absolute") return causal::CaliperMode::absolute;
  throw ConfigError("unknown caliper mode '" + s + "'");
}

const char* caliper_mode_name(causal::CaliperMode mode) {
  return mode == causal::CaliperMode::logit_sd ? "logit_sd" : "absolute";
}

json synth_to_json(const cohortgen::SynthConfig& cfg) {
  json j;
  j["n"] = cfg.n;
  j["seed"] = cfg.seed;
  j["z1_prevalence"] = cfg.z1_prevalence;
  j["u_prevalence"] = cfg.u_prevalence;
  j["z2"] = {{"mean", cfg.z2_mean}, {"sd", cfg.z2_sd}, {"u_shift", cfg.z2_u_shift}};
  j["exposure"] = {{"intercept", cfg.exposure_intercept},
                   {"z1", cfg.exposure_z1},
                   {"z2", cfg.exposure_z2},
                   {"u", cfg.exposure_u}};
  j["outcome"] = {{"event_rate", cfg.event_rate},
                  {"z1", cfg.outcome_z1},
                  {"z2", cfg.outcome_z2},
                  {"u", cfg.outcome_u},
                  {"hr_true", cfg.hr_true}};
  j["censoring_rate"] = cfg.censoring_rate;
  j["admin_censor_time"] = cfg.admin_censor_time;
  json blocks = json::array();
  for (const auto& b : cfg.blocks) {
    blocks.push_back(
        {{"name", b.name},
         {"kind", b.kind == tabular::BlockKind::binary_sparse ? "binary_sparse" : "continuous_dense"},
         {"columns", b.columns},
         {"informative", b.informative},
         {"corr_u", b.corr_u},
         {"corr_z2", b.corr_z2},
         {"prevalence", b.prevalence}});
  }
  j["blocks"] = blocks;
  return j;
}

// Execution knobs (out_dir, jobs) never change results, so they stay out of
// the echoed config and its hash.
json scenario_to_json(const ScenarioConfig& cfg) {
  json j;
  if (cfg.base_path.empty()) {
    j["base"] = synth_to_json(cfg.base);
  } else {
    j["base_path"] = cfg.base_path;
  }
  j["n_replicates"] = cfg.n_replicates;
  j["amputation"] = {{"weight_u", cfg.amputation.weight_u},
                     {"weight_z2", cfg.amputation.weight_z2},
                     {"prop", cfg.amputation.prop},
                     {"n_quantiles", cfg.amputation.n_quantiles},
                     {"odds", cfg.amputation.odds}};
  json models = json::array();
  for (const auto kind : cfg.models) models.push_back(features::to_string(kind));
  j["models"] = models;
  j["hr_true"] = cfg.hr_true;
  j["seed"] = cfg.seed;
  j["resample"] = cfg.resample;
  j["m"] = cfg.m;
  j["k"] = cfg.k;
  j["caliper"] = cfg.caliper;
  j["caliper_mode"] = caliper_mode_name(cfg.caliper_mode);
  return j;
}

std::string join_pipe(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out.push_back('|');
    out += items[i];
  }
  return out;
}

// Notes travel in a CSV cell; the writer has no quoting.
std::string sanitize_cell(std::string s) {
  for (char& c : s) {
    if (c == ',' || c == '\n' || c == '\r') c = ';';
  }
  return s;
}

struct MatchedFit {
  causal::EffectEstimate effect;
  Eigen::Index pairs = 0;
};

MatchedFit ps_match_effect(const tabular::Cohort& completed,
                           const std::vector<std::string>& ps_names, const ScenarioConfig& cfg,
                           std::uint64_t seed) {
  const Eigen::VectorXd ps = causal::estimate_ps(completed, ps_names);
  const causal::MatchResult match =
      causal::match_1to1(ps, completed.exposure, cfg.caliper, seed, cfg.caliper_mode);
  MatchedFit out;
  out.effect = causal::marginal_effect(completed, match);
  out.pairs = static_cast<Eigen::Index>(match.pairs.size());
  return out;
}

void apply_effect(ModelResult& res, const causal::EffectEstimate& effect) {
  res.log_hr = effect.log_hr;
  const double half = stats::normal_quantile(0.975) * std::sqrt(effect.variance);
  res.ci_lower = effect.log_hr - half;
  res.ci_upper = effect.log_hr + half;
}

}  // namespace

void ScenarioConfig::validate() const {
  if (base_path.empty()) base.validate();
  if (n_replicates < 1) throw ConfigError("n_replicates must be at least 1");
  if (models.empty()) throw ConfigError("scenario needs at least one model");
  for (std::size_t i = 0; i < models.size(); ++i) {
    for (std::size_t j = i + 1; j < models.size(); ++j) {
      if (models[i] == models[j]) {
        throw ConfigError("duplicate model '" + std::string(features::to_string(models[i])) + "'");
      }
    }
  }
  amputation.validate();
  if (!(hr_true > 0.0)) throw ConfigError("hr_true must be positive");
  if (jobs < 1) throw ConfigError("jobs must be at least 1");
  if (m < 2) throw ConfigError("at least two imputations are required");
  if (k < 1) throw ConfigError("donor pool size must be at least 1");
  if (!(caliper > 0.0)) throw ConfigError("caliper must be positive");
  if (out_dir.empty()) throw ConfigError("output directory must not be empty");
}

ScenarioConfig scenario_config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(std::string("scenario config: ") + e.what());
  }

  ScenarioConfig cfg;
  try {
    if (j.contains("base")) cfg.base = cohortgen::synth_config_from_json(j.at("base").dump());
    cfg.base_path = j.value("base_path", cfg.base_path);
    cfg.n_replicates = j.value("n_replicates", cfg.n_replicates);
    if (j.contains("amputation")) {
      const json& a = j.at("amputation");
      cfg.amputation.weight_u = a.value("weight_u", cfg.amputation.weight_u);
      cfg.amputation.weight_z2 = a.value("weight_z2", cfg.amputation.weight_z2);
      cfg.amputation.prop = a.value("prop", cfg.amputation.prop);
      cfg.amputation.n_quantiles = a.value("n_quantiles", cfg.amputation.n_quantiles);
      if (a.contains("odds")) cfg.amputation.odds = a.at("odds").get<std::vector<double>>();
    }
    if (j.contains("models")) {
      cfg.models.clear();
      for (const json& mj : j.at("models")) {
        cfg.models.push_back(features::model_kind_from_string(mj.get<std::string>()));
      }
    } else {
      cfg.models = features::all_model_kinds();
    }
    cfg.hr_true = j.value("hr_true", cfg.hr_true);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.out_dir = j.value("out_dir", cfg.out_dir);
    cfg.jobs = j.value("jobs", cfg.jobs);
    cfg.resample = j.value("resample", cfg.resample);
    cfg.m = j.value("m", cfg.m);
    cfg.k = j.value("k", cfg.k);
    cfg.caliper = j.value("caliper", cfg.caliper);
    if (j.contains("caliper_mode")) {
      cfg.caliper_mode = caliper_mode_from_string(j.at("caliper_mode").get<std::string>());
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("scenario config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

ScenarioConfig load_scenario_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return scenario_config_from_json(buf.str());
}

ModelResult run_model(const tabular::Cohort& amputed, features::ModelKind kind,
                      const ScenarioConfig& cfg, std::uint64_t seed) {
  ModelResult res;
  try {
    if (kind == features::ModelKind::unadjusted) {
      Eigen::MatrixXd design(amputed.n(), 1);
      design.col(0) = amputed.exposure.cast<double>();
      const regfit::CoxModel fit = regfit::fit_cox(design, {"x"}, amputed.time, amputed.event);
      causal::EffectEstimate effect;
      effect.log_hr = fit.coefficients[0];
      effect.variance = fit.covariance()(0, 0);
      apply_effect(res, effect);
      return res;
    }

    if (kind == features::ModelKind::complete_case) {
      const std::vector<Eigen::Index> rows = amputed.complete_rows();
      if (rows.size() < 2) throw FitError("fewer than two complete cases");
      const tabular::Cohort sub = amputed.select_rows(rows);
      const DesignMatrix candidates = features::assemble_candidates(sub, kind);
      res.ps_covariates =
          causal::select_ps_covariates(sub, candidates, derive_seed(seed, hash_label("ps")));
      const MatchedFit fit =
          ps_match_effect(sub, res.ps_covariates, cfg, derive_seed(seed, hash_label("analysis")));
      if (fit.effect.degenerate) {
        res.degenerate = true;
        res.note = fit.effect.note;
        return res;
      }
      res.matched_pairs = fit.pairs;
      apply_effect(res, fit.effect);
      return res;
    }

    const DesignMatrix candidates = features::assemble_candidates(amputed, kind);
    mi_engine::ImputationPlan plan = mi_engine::select_imputation_predictors(
        amputed, candidates, derive_seed(seed, hash_label("select")));
    plan.m = cfg.m;
    plan.k = cfg.k;
    plan.seed = derive_seed(seed, hash_label("impute"));
    const mi_engine::ImputationResult imputed = mi_engine::pmm_impute(amputed, plan);
    res.imputation_predictors = plan.predictors;
    res.n_z2_parent = plan.z2_selected.size();
    res.n_mz2_parent = plan.mz2_selected.size();

    // The propensity lasso sees exposure, the candidate columns and the cox
    // response, none of which imputation touches, so its selection is solved
    // once and shared across the m completed cohorts.
    res.ps_covariates = causal::select_ps_covariates(imputed.completed.front(), candidates,
                                                     derive_seed(seed, hash_label("ps")));

    Eigen::VectorXd estimates(plan.m);
    Eigen::VectorXd variances(plan.m);
    for (int t = 0; t < plan.m; ++t) {
      const MatchedFit fit =
          ps_match_effect(imputed.completed[static_cast<std::size_t>(t)], res.ps_covariates, cfg,
                          derive_seed(seed, static_cast<std::uint64_t>(t), "analysis"));
      if (fit.effect.degenerate) {
        res.degenerate = true;
        res.note = "imputation " + std::to_string(t + 1) + ": " + fit.effect.note;
        return res;
      }
      if (t == 0) res.matched_pairs = fit.pairs;
      estimates[t] = fit.effect.log_hr;
      variances[t] = fit.effect.variance;
    }
    const causal::PooledEstimate pooled = causal::rubin_pool(estimates, variances);
    res.log_hr = pooled.estimate;
    res.ci_lower = pooled.ci_lower;
    res.ci_upper = pooled.ci_upper;
    res.within = pooled.within;
    res.between = pooled.between;
    return res;
  } catch (const FitError& e) {
    res.degenerate = true;
    res.note = e.what();
    return res;
  }
}

MetricsSummary compute_metrics(const Eigen::VectorXd& estimates, const Eigen::VectorXd& ci_lower,
                               const Eigen::VectorXd& ci_upper, double theta_true) {
  const Eigen::Index n = estimates.size();
  if (ci_lower.size() != n || ci_upper.size() != n) {
    throw ConfigError("confidence limits must align with the estimates");
  }
  if (n < 2) throw FitError("metrics need at least two usable replicates");

  MetricsSummary s;
  s.n_used = static_cast<int>(n);
  const double nd = static_cast<double>(n);
  const double mean_est = estimates.mean();
  const Eigen::ArrayXd dev_true = estimates.array() - theta_true;
  const Eigen::ArrayXd sq = dev_true.square();

  const double mse = sq.mean();
  const double rmse = std::sqrt(mse);
  const double bias = mean_est - theta_true;
  const double variance = (estimates.array() - mean_est).square().sum() / (nd - 1.0);
  double covered = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (ci_lower[i] <= theta_true && theta_true <= ci_upper[i]) covered += 1.0;
  }
  const double coverage = covered / nd;

  const double z = stats::normal_quantile(0.975);
  const auto metric = [z](double value, double mcse) {
    return MetricValue{value, mcse, value - z * mcse, value + z * mcse};
  };

  // MCSE(MSE) by the delta method gives MCSE(RMSE) = MCSE(MSE) / (2 RMSE).
  const double mcse_mse = std::sqrt((sq - mse).square().sum() / (nd * (nd - 1.0)));
  s.rmse = metric(rmse, rmse > 0.0 ? mcse_mse / (2.0 * rmse) : 0.0);
  s.bias = metric(bias, std::sqrt(variance / nd));
  s.variance = metric(variance, variance * std::sqrt(2.0 / (nd - 1.0)));
  s.coverage = metric(coverage, std::sqrt(coverage * (1.0 - coverage) / nd));

  s.rmse.lo = std::max(0.0, s.rmse.lo);
  s.variance.lo = std::max(0.0, s.variance.lo);
  s.coverage.lo = std::clamp(s.coverage.lo, 0.0, 1.0);
  s.coverage.hi = std::clamp(s.coverage.hi, 0.0, 1.0);
  return s;
}

namespace {

void write_replicates_csv(const std::string& path, const ScenarioResult& result) {
  csv::Writer w(path);
  w.row({"replicate", "model", "status", "log_hr", "ci_lower", "ci_upper", "within", "between",
         "matched_pairs", "n_z2_parent", "n_mz2_parent", "imputation_predictors", "ps_covariates",
         "note"});
  for (const auto& row : result.replicates) {
    const ModelResult& r = row.result;
    const bool usable = !row.failed && !r.degenerate;
    std::vector<std::string> cells;
    cells.push_back(std::to_string(row.replicate));
    cells.push_back(features::to_string(row.model));
    cells.push_back(row.failed ? "failed" : (r.degenerate ? "degenerate" : "ok"));
    if (usable) {
      cells.push_back(csv::format_double(r.log_hr));
      cells.push_back(csv::format_double(r.ci_lower));
      cells.push_back(csv::format_double(r.ci_upper));
      cells.push_back(csv::format_double(r.within));
      cells.push_back(csv::format_double(r.between));
      cells.push_back(std::to_string(r.matched_pairs));
    } else {
      cells.insert(cells.end(), 6, "");
    }
    cells.push_back(std::to_string(r.n_z2_parent));
    cells.push_back(std::to_string(r.n_mz2_parent));
    cells.push_back(join_pipe(r.imputation_predictors));
    cells.push_back(join_pipe(r.ps_covariates));
    cells.push_back(sanitize_cell(row.failed ? row.error : r.note));
    w.row(cells);
  }
  w.close();
}

void write_summary_csv(const std::string& path, const std::vector<MetricsSummary>& summary) {
  csv::Writer w(path);
  std::vector<std::string> header{"model", "n_used", "n_degenerate"};
  for (const char* name : {"rmse", "bias", "variance", "coverage"}) {
    header.push_back(name);
    header.push_back(std::string(name) + "_mcse");
    header.push_back(std::string(name) + "_lo");
    header.push_back(std::string(name) + "_hi");
  }
  w.row(header);
  for (const auto& s : summary) {
    std::vector<std::string> cells{s.model, std::to_string(s.n_used),
                                   std::to_string(s.n_degenerate)};
    for (const MetricValue* v : {&s.rmse, &s.bias, &s.variance, &s.coverage}) {
      cells.push_back(csv::format_double(v->value));
      cells.push_back(csv::format_double(v->mcse));
      cells.push_back(csv::format_double(v->lo));
      cells.push_back(csv::format_double(v->hi));
    }
    w.row(cells);
  }
  w.close();
}

void write_manifest(const std::string& path, const ScenarioConfig& cfg,
                    const ScenarioResult& result) {
  const json config = scenario_to_json(cfg);
  char hash[17];
  std::snprintf(hash, sizeof(hash), "%016llx",
                static_cast<unsigned long long>(hash_label(config.dump())));

  json manifest;
  manifest["engine_version"] = kEngineVersion;
  manifest["eigen_version"] = std::to_string(EIGEN_WORLD_VERSION) + "." +
                              std::to_string(EIGEN_MAJOR_VERSION) + "." +
                              std::to_string(EIGEN_MINOR_VERSION);
  manifest["config"] = config;
  manifest["config_hash"] = hash;
  manifest["master_seed"] = cfg.seed;
  json rep_seeds = json::array();
  for (int r = 0; r < cfg.n_replicates; ++r) {
    rep_seeds.push_back(derive_seed(cfg.seed, static_cast<std::uint64_t>(r), "replicate"));
  }
  manifest["replicate_seeds"] = rep_seeds;
  manifest["n_failed_replicates"] = result.n_failed_replicates;
  manifest["outputs"] = {"replicates.csv", "summary.csv"};

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write file: " + path);
  out << manifest.dump(2) << '\n';
  out.close();
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace

ScenarioResult run_scenario(const ScenarioConfig& cfg) {
  cfg.validate();

  const tabular::Cohort base = cfg.base_path.empty() ? cohortgen::generate_synthetic_base(cfg.base)
                                                     : tabular::load_cohort(cfg.base_path);
  cohortgen::OutcomeModelSpec spec;
  spec.hr_true = cfg.hr_true;
  const cohortgen::FittedModel outcome = cohortgen::fit_outcome_model(base, spec);
  const cohortgen::FittedModel censor = cohortgen::fit_censoring_model(base, spec);

  const int n_models = static_cast<int>(cfg.models.size());
  std::vector<ReplicateRecord> rows(static_cast<std::size_t>(cfg.n_replicates) *
                                    static_cast<std::size_t>(n_models));

  std::atomic<int> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;

  const auto worker = [&]() {
    for (;;) {
      const int r = next.fetch_add(1);
      if (r >= cfg.n_replicates) return;
      const std::uint64_t rep_seed =
          derive_seed(cfg.seed, static_cast<std::uint64_t>(r), "replicate");

      tabular::Cohort amputed;
      bool pipeline_ok = true;
      std::string pipeline_error;
      try {
        const tabular::Cohort plasmode =
            cohortgen::generate_plasmode(base, outcome, censor, cfg.hr_true,
                                         derive_seed(rep_seed, hash_label("plasmode")),
                                         cfg.resample);
        amputation::AmputationSpec aspec = cfg.amputation;
        aspec.seed = derive_seed(rep_seed, hash_label("ampute"));
        amputed = amputation::ampute(plasmode, aspec);
      } catch (const FitError& e) {
        pipeline_ok = false;
        pipeline_error = e.what();
      }

      for (int mdl = 0; mdl < n_models; ++mdl) {
        ReplicateRecord& row =
            rows[static_cast<std::size_t>(r) * static_cast<std::size_t>(n_models) +
                 static_cast<std::size_t>(mdl)];
        row.replicate = r;
        row.model = cfg.models[static_cast<std::size_t>(mdl)];
        if (!pipeline_ok) {
          row.failed = true;
          row.error = pipeline_error;
          continue;
        }
        const std::uint64_t model_seed =
            derive_seed(rep_seed, hash_label(features::to_string(row.model)));
        try {
          row.result = run_model(amputed, row.model, cfg, model_seed);
        } catch (...) {
          const std::lock_guard<std::mutex> lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
          return;
        }
      }
    }
  };

  const int n_workers = std::min(cfg.jobs, cfg.n_replicates);
  if (n_workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(n_workers));
    for (int i = 0; i < n_workers; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (first_error) std::rethrow_exception(first_error);

  ScenarioResult out;
  out.replicates = std::move(rows);
  out.out_dir = cfg.out_dir;

  std::vector<std::string> failed_reason(static_cast<std::size_t>(cfg.n_replicates));
  std::vector<char> failed(static_cast<std::size_t>(cfg.n_replicates), 0);
  for (const auto& row : out.replicates) {
    if (row.failed && !failed[static_cast<std::size_t>(row.replicate)]) {
      failed[static_cast<std::size_t>(row.replicate)] = 1;
      failed_reason[static_cast<std::size_t>(row.replicate)] = row.error;
    }
  }
  for (int r = 0; r < cfg.n_replicates; ++r) {
    if (!failed[static_cast<std::size_t>(r)]) continue;
    ++out.n_failed_replicates;
    std::fprintf(stderr, "hdmi: replicate %d failed: %s\n", r,
                 failed_reason[static_cast<std::size_t>(r)].c_str());
  }

  const double theta_true = std::log(cfg.hr_true);
  for (int mdl = 0; mdl < n_models; ++mdl) {
    std::vector<double> est, lo, hi;
    for (int r = 0; r < cfg.n_replicates; ++r) {
      const ReplicateRecord& row =
          out.replicates[static_cast<std::size_t>(r) * static_cast<std::size_t>(n_models) +
                         static_cast<std::size_t>(mdl)];
      if (row.failed || row.result.degenerate) continue;
      est.push_back(row.result.log_hr);
      lo.push_back(row.result.ci_lower);
      hi.push_back(row.result.ci_upper);
    }
    MetricsSummary s;
    if (est.size() >= 2) {
      const Eigen::Map<const Eigen::VectorXd> e(est.data(), static_cast<Eigen::Index>(est.size()));
      const Eigen::Map<const Eigen::VectorXd> l(lo.data(), static_cast<Eigen::Index>(lo.size()));
      const Eigen::Map<const Eigen::VectorXd> h(hi.data(), static_cast<Eigen::Index>(hi.size()));
      s = compute_metrics(e, l, h, theta_true);
    } else {
      const double nan = std::numeric_limits<double>::quiet_NaN();
      s.rmse = s.bias = s.variance = s.coverage = MetricValue{nan, nan, nan, nan};
      s.n_used = static_cast<int>(est.size());
    }
    s.model = features::to_string(cfg.models[static_cast<std::size_t>(mdl)]);
    s.n_degenerate = cfg.n_replicates - static_cast<int>(est.size());
    out.summary.push_back(std::move(s));
  }

  std::filesystem::create_directories(cfg.out_dir);
  write_replicates_csv(cfg.out_dir + "/replicates.csv", out);
  write_summary_csv(cfg.out_dir + "/summary.csv", out.summary);
  write_manifest(cfg.out_dir + "/manifest.json", cfg, out);
  return out;
}

void write_report(const std::string& out_dir) {
  const csv::Table t = csv::read_table(out_dir + "/summary.csv");
  const int model_col = t.column("model");
  const int used_col = t.column("n_used");
  const int degen_col = t.column("n_degenerate");
  if (model_col < 0 || used_col < 0 || degen_col < 0) {
    throw ParseError("summary.csv is missing required columns");
  }

  const char* metrics[] = {"rmse", "bias", "variance", "coverage"};
  int value_col[4], mcse_col[4];
  for (int i = 0; i < 4; ++i) {
    const std::string name = metrics[i];
    value_col[i] = t.column(name);
    mcse_col[i] = t.column(name + "_mcse");
    const int lo = t.column(name + "_lo");
    const int hi = t.column(name + "_hi");
    if (value_col[i] < 0 || mcse_col[i] < 0 || lo < 0 || hi < 0) {
      throw ParseError("summary.csv is missing columns for metric '" + name + "'");
    }
    csv::Writer w(out_dir + "/panel_" + name + ".csv");
    w.row({"model", "value", "mcse", "lo", "hi"});
    for (const auto& row : t.rows) {
      w.row({row[static_cast<std::size_t>(model_col)], row[static_cast<std::size_t>(value_col[i])],
             row[static_cast<std::size_t>(mcse_col[i])], row[static_cast<std::size_t>(lo)],
             row[static_cast<std::size_t>(hi)]});
    }
    w.close();
  }

  std::ofstream rep(out_dir + "/report.txt", std::ios::binary);
  if (!rep) throw IoError("cannot write file: " + out_dir + "/report.txt");
  char line[320];
  std::snprintf(line, sizeof(line), "%-22s %6s %6s %20s %20s %20s %20s\n", "model", "used", "degen",
                "rmse (mcse)", "bias (mcse)", "variance (mcse)", "coverage (mcse)");
  rep << line;
  const auto fmt_pair = [](const std::vector<std::string>& row, int vc, int mc) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.4f (%.4f)",
                  csv::parse_double(row[static_cast<std::size_t>(vc)], "summary.csv"),
                  csv::parse_double(row[static_cast<std::size_t>(mc)], "summary.csv"));
    return std::string(buf);
  };
  for (const auto& row : t.rows) {
    std::snprintf(line, sizeof(line), "%-22s %6s %6s %20s %20s %20s %20s\n",
                  row[static_cast<std::size_t>(model_col)].c_str(),
                  row[static_cast<std::size_t>(used_col)].c_str(),
                  row[static_cast<std::size_t>(degen_col)].c_str(),
                  fmt_pair(row, value_col[0], mcse_col[0]).c_str(),
                  fmt_pair(row, value_col[1], mcse_col[1]).c_str(),
                  fmt_pair(row, value_col[2], mcse_col[2]).c_str(),
                  fmt_pair(row, value_col[3], mcse_col[3]).c_str());
    rep << line;
  }
  rep.close();
  if (!rep) throw IoError("write failed: " + out_dir + "/report.txt");
}

}  // namespace hdmi::simharness
