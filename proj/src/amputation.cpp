#include "hdmi/amputation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "hdmi/error.hpp"
#include "hdmi/rng.hpp"
#include "hdmi/stats.hpp"

namespace hdmi::amputation {

void AmputationSpec::validate() const {
  if (!(prop > 0.0 && prop < 1.0)) {
    throw ConfigError("amputation prop must lie in (0, 1), got " + std::to_string(prop));
  }
  if (n_quantiles < 1) throw ConfigError("amputation n_quantiles must be positive");
  if (static_cast<int>(odds.size()) != n_quantiles) {
    throw ConfigError("amputation odds length " + std::to_string(odds.size()) +
                      " does not match n_quantiles " + std::to_string(n_quantiles));
  }
  double total = 0.0;
  for (double o : odds) {
    if (!(o > 0.0)) throw ConfigError("amputation odds must all be positive");
    total += o;
  }
  int worst = 0;
  double worst_p = 0.0;
  for (int q = 0; q < n_quantiles; ++q) {
    const double p = odds[static_cast<std::size_t>(q)] * prop * n_quantiles / total;
    if (p > worst_p) {
      worst_p = p;
      worst = q;
    }
  }
  if (worst_p > 1.0) {
    throw ConfigError("infeasible amputation spec: quantile " + std::to_string(worst + 1) +
                      " missingness probability " + std::to_string(worst_p) + " exceeds 1");
  }
}

Eigen::VectorXd weighted_sum_score(const Eigen::VectorXi& u, const Eigen::VectorXd& z2,
                                   const AmputationSpec& spec) {
  if (u.size() != z2.size()) throw ConfigError("weighted sum score inputs differ in length");
  return spec.weight_u * u.cast<double>() + spec.weight_z2 * z2;
}

Eigen::VectorXd scale_scores(const Eigen::VectorXd& wss) {
  if (wss.size() < 2) throw ConfigError("scaling needs at least two scores");
  const double m = wss.mean();
  const double sd = stats::sample_sd(wss);
  if (!(sd > 0.0)) throw FitError("degenerate scores: every patient has the same missingness risk");
  return (wss.array() - m) / sd;
}

Eigen::VectorXd group_probabilities(const AmputationSpec& spec) {
  spec.validate();
  const double total = std::accumulate(spec.odds.begin(), spec.odds.end(), 0.0);
  Eigen::VectorXd p(spec.n_quantiles);
  for (int q = 0; q < spec.n_quantiles; ++q) {
    p[q] = spec.odds[static_cast<std::size_t>(q)] * spec.prop * spec.n_quantiles / total;
  }
  return p;
}

Eigen::VectorXi quantile_groups(const Eigen::VectorXd& scaled, int n_quantiles) {
  const Eigen::Index n = scaled.size();
  if (n_quantiles < 1) throw ConfigError("n_quantiles must be positive");
  if (n < n_quantiles) throw ConfigError("fewer patients than quantile groups");

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return scaled[a] < scaled[b]; });

  // Group sizes differ by at most one; the extra patients land bottom-up in
  // groups 0, 2, 4, ... then 1, 3, 5, ...
  const Eigen::Index base = n / n_quantiles;
  Eigen::Index extra = n % n_quantiles;
  std::vector<Eigen::Index> size(static_cast<std::size_t>(n_quantiles), base);
  for (int parity = 0; parity < 2 && extra > 0; ++parity) {
    for (int q = parity; q < n_quantiles && extra > 0; q += 2) {
      ++size[static_cast<std::size_t>(q)];
      --extra;
    }
  }

  Eigen::VectorXi group(n);
  Eigen::Index k = 0;
  for (int q = 0; q < n_quantiles; ++q) {
    for (Eigen::Index j = 0; j < size[static_cast<std::size_t>(q)]; ++j, ++k) {
      group[order[static_cast<std::size_t>(k)]] = q;
    }
  }
  return group;
}

Eigen::VectorXd quantile_probabilities(const Eigen::VectorXd& scaled, const AmputationSpec& spec) {
  const Eigen::VectorXd p = group_probabilities(spec);
  const Eigen::VectorXi group = quantile_groups(scaled, spec.n_quantiles);
  Eigen::VectorXd out(scaled.size());
  for (Eigen::Index i = 0; i < scaled.size(); ++i) out[i] = p[group[i]];
  return out;
}

tabular::Cohort ampute(const tabular::Cohort& cohort, const AmputationSpec& spec) {
  cohort.validate();
  if (cohort.mz2.size() > 0 && cohort.mz2.maxCoeff() != 0) {
    throw ConfigError("amputation requires fully observed z2");
  }
  const Eigen::VectorXd wss = weighted_sum_score(cohort.u, cohort.z2, spec);
  const Eigen::VectorXd p = quantile_probabilities(scale_scores(wss), spec);

  tabular::Cohort out = cohort;
  Rng rng(derive_seed(spec.seed, hash_label("ampute")));
  for (Eigen::Index i = 0; i < out.n(); ++i) {
    out.mz2[i] = rng.bernoulli(p[i]) ? 1 : 0;
  }
  return out;
}

}  // namespace hdmi::amputation
