#include <doctest.h>

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "hdmi/amputation.hpp"
#include "hdmi/error.hpp"
#include "hdmi/rng.hpp"
#include "hdmi/stats.hpp"
#include "hdmi/tabular.hpp"

using namespace hdmi;
using namespace hdmi::amputation;

namespace {

tabular::Cohort uniform_cohort(Eigen::Index n, std::uint64_t seed) {
  Rng rng(seed);
  tabular::Cohort c;
  c.exposure.resize(n);
  c.time = Eigen::VectorXd::Constant(n, 1.0);
  c.event = Eigen::VectorXi::Zero(n);
  c.z1.resize(n, 0);
  c.z2.resize(n);
  c.mz2 = Eigen::VectorXi::Zero(n);
  c.u.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    c.exposure[i] = rng.bernoulli(0.5) ? 1 : 0;
    c.u[i] = rng.bernoulli(0.3) ? 1 : 0;
    c.z2[i] = rng.normal();
  }
  c.validate();
  return c;
}

std::vector<Eigen::Index> ascending_order(const Eigen::VectorXd& v) {
  std::vector<Eigen::Index> order(static_cast<std::size_t>(v.size()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return v[a] < v[b]; });
  return order;
}

}  // namespace

TEST_SUITE_BEGIN("amputation");

TEST_CASE("weighted sum score evaluates the linear combination") {
  AmputationSpec spec;
  Eigen::VectorXi u(3);
  u << 1, 0, 1;
  Eigen::VectorXd z2(3);
  z2 << 2.0, 0.0, -1.5;

  const Eigen::VectorXd wss = weighted_sum_score(u, z2, spec);
  CHECK(wss[0] == doctest::Approx(1.2).epsilon(1e-15));
  CHECK(wss[1] == 0.0);
  CHECK(wss[2] == doctest::Approx(0.8 - 0.3).epsilon(1e-15));

  AmputationSpec u_only = spec;
  u_only.weight_u = 1.0;
  u_only.weight_z2 = 0.0;
  const Eigen::VectorXd wu = weighted_sum_score(u, z2, u_only);
  for (Eigen::Index i = 0; i < 3; ++i) CHECK(wu[i] == static_cast<double>(u[i]));

  Eigen::VectorXi short_u(2);
  short_u << 0, 1;
  CHECK_THROWS_AS(weighted_sum_score(short_u, z2, spec), ConfigError);
}

TEST_CASE("scale_scores standardizes with divisor n-1") {
  Eigen::VectorXd two(2);
  two << 1.0, 3.0;
  const Eigen::VectorXd s = scale_scores(two);
  CHECK(s[0] == doctest::Approx(-std::sqrt(0.5)).epsilon(1e-14));
  CHECK(s[1] == doctest::Approx(std::sqrt(0.5)).epsilon(1e-14));
  CHECK(std::fabs(s[0] + 0.7071067811865475) < 1e-13);

  Rng rng(11);
  Eigen::VectorXd raw(40);
  for (Eigen::Index i = 0; i < raw.size(); ++i) raw[i] = 3.0 + 2.5 * rng.normal();
  const Eigen::VectorXd scaled = scale_scores(raw);
  CHECK(std::fabs(scaled.mean()) < 1e-12);
  CHECK(stats::sample_sd(scaled) == doctest::Approx(1.0).epsilon(1e-12));

  // Idempotent on already standardized input.
  const Eigen::VectorXd again = scale_scores(scaled);
  CHECK((again - scaled).cwiseAbs().maxCoeff() < 1e-12);

  CHECK_THROWS_AS(scale_scores(Eigen::VectorXd::Constant(5, 2.0)), FitError);
  CHECK_THROWS_AS(scale_scores(Eigen::VectorXd::Constant(1, 2.0)), ConfigError);
}

TEST_CASE("group probabilities follow the odds allocation") {
  AmputationSpec spec;
  const Eigen::VectorXd p = group_probabilities(spec);
  REQUIRE(p.size() == 4);
  CHECK(p[0] == doctest::Approx(0.2).epsilon(1e-15));
  CHECK(p[1] == doctest::Approx(0.4).epsilon(1e-15));
  CHECK(p[2] == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(p[3] == doctest::Approx(0.8).epsilon(1e-15));
  CHECK(p.mean() == doctest::Approx(spec.prop).epsilon(1e-12));
  CHECK(p[3] / p[0] == doctest::Approx(4.0).epsilon(1e-12));

  AmputationSpec mcar = spec;
  mcar.odds = {1.0, 1.0, 1.0, 1.0};
  const Eigen::VectorXd pm = group_probabilities(mcar);
  for (Eigen::Index q = 0; q < 4; ++q) CHECK(pm[q] == 0.5);

  // Mean equals prop for arbitrary positive odds.
  Rng rng(5);
  for (int rep = 0; rep < 20; ++rep) {
    AmputationSpec r = spec;
    r.n_quantiles = 3 + static_cast<int>(rng.uniform_int(5));
    r.prop = 0.05 + 0.3 * rng.uniform();
    r.odds.clear();
    for (int q = 0; q < r.n_quantiles; ++q) r.odds.push_back(0.2 + 2.0 * rng.uniform());
    const Eigen::VectorXd pr = group_probabilities(r);
    CHECK(std::fabs(pr.mean() - r.prop) < 1e-12);
  }
}

TEST_CASE("infeasible specs are rejected at validation") {
  AmputationSpec spec;
  spec.prop = 0.9;
  try {
    spec.validate();
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("quantile 4") != std::string::npos);
    CHECK(msg.find("1.44") != std::string::npos);
  }

  AmputationSpec bad = AmputationSpec{};
  bad.odds = {1.0, -2.0, 3.0, 4.0};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = AmputationSpec{};
  bad.odds = {1.0, 2.0};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = AmputationSpec{};
  bad.prop = 1.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = AmputationSpec{};
  bad.n_quantiles = 0;
  bad.odds = {};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("quantile groups split evenly with deterministic ties") {
  Eigen::VectorXd desc(8);
  desc << 8, 7, 6, 5, 4, 3, 2, 1;
  const Eigen::VectorXi g = quantile_groups(desc, 4);
  Eigen::VectorXi expect(8);
  expect << 3, 3, 2, 2, 1, 1, 0, 0;
  CHECK((g.array() == expect.array()).all());

  // Ties break by patient index, so the partition is stable.
  const Eigen::VectorXi tied = quantile_groups(Eigen::VectorXd::Zero(4), 2);
  CHECK(tied[0] == 0);
  CHECK(tied[1] == 0);
  CHECK(tied[2] == 1);
  CHECK(tied[3] == 1);

  auto sizes = [](const Eigen::VectorXi& groups, int q) {
    std::vector<int> s(static_cast<std::size_t>(q), 0);
    for (Eigen::Index i = 0; i < groups.size(); ++i) ++s[static_cast<std::size_t>(groups[i])];
    return s;
  };
  Rng rng(3);
  auto random_scores = [&](Eigen::Index n) {
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = rng.normal();
    return v;
  };
  CHECK(sizes(quantile_groups(random_scores(10), 4), 4) == std::vector<int>{3, 2, 3, 2});
  CHECK(sizes(quantile_groups(random_scores(9), 4), 4) == std::vector<int>{3, 2, 2, 2});
  CHECK(sizes(quantile_groups(random_scores(11), 4), 4) == std::vector<int>{3, 3, 3, 2});
  CHECK(sizes(quantile_groups(random_scores(37), 4), 4) == std::vector<int>{10, 9, 9, 9});

  CHECK_THROWS_AS(quantile_groups(desc, 9), ConfigError);
}

TEST_CASE("missingness probability is monotone in the score for monotone odds") {
  Rng rng(17);
  Eigen::VectorXd scores(37);
  for (Eigen::Index i = 0; i < scores.size(); ++i) scores[i] = rng.normal();

  AmputationSpec spec;
  spec.n_quantiles = 4;
  spec.odds = {1.0, 2.0, 2.0, 5.0};
  spec.prop = 0.4;
  const Eigen::VectorXd p = quantile_probabilities(scores, spec);

  const auto order = ascending_order(scores);
  for (std::size_t k = 1; k < order.size(); ++k) {
    CHECK(p[order[k]] >= p[order[k - 1]]);
  }
}

TEST_CASE("amputation hits the target rates at large n") {
  const Eigen::Index n = 100000;
  tabular::Cohort cohort = uniform_cohort(n, 42);
  AmputationSpec spec;
  spec.seed = 7;

  const tabular::Cohort amputed = ampute(cohort, spec);
  const double overall = amputed.mz2.cast<double>().mean();
  CHECK(std::fabs(overall - 0.5) < 0.005);

  // Quartiles recomputed directly from the raw scores.
  const Eigen::VectorXd wss = 0.8 * cohort.u.cast<double>() + 0.2 * cohort.z2;
  const auto order = ascending_order(wss);
  const double expected[4] = {0.2, 0.4, 0.6, 0.8};
  for (int q = 0; q < 4; ++q) {
    double hits = 0.0;
    for (Eigen::Index k = q * (n / 4); k < (q + 1) * (n / 4); ++k) {
      hits += amputed.mz2[order[static_cast<std::size_t>(k)]];
    }
    CHECK(std::fabs(hits / (n / 4) - expected[q]) < 0.01);
  }

  // z2 values and every other column are untouched.
  CHECK((amputed.z2.array() == cohort.z2.array()).all());
  CHECK((amputed.u.array() == cohort.u.array()).all());
  CHECK((amputed.exposure.array() == cohort.exposure.array()).all());
}

TEST_CASE("uniform odds with zero confounder weight gives MCAR") {
  const Eigen::Index n = 100000;
  tabular::Cohort cohort = uniform_cohort(n, 9);
  AmputationSpec spec;
  spec.weight_u = 0.0;
  spec.weight_z2 = 1.0;
  spec.odds = {1.0, 1.0, 1.0, 1.0};
  spec.seed = 13;
  const tabular::Cohort amputed = ampute(cohort, spec);

  // Chi-square independence of the mask against u (df 1, 1% critical value).
  double cell[2][2] = {{0, 0}, {0, 0}};
  for (Eigen::Index i = 0; i < n; ++i) cell[cohort.u[i]][amputed.mz2[i]] += 1.0;
  const double nn = static_cast<double>(n);
  double chi2 = 0.0;
  for (int a = 0; a < 2; ++a) {
    for (int b = 0; b < 2; ++b) {
      const double exp_ab = (cell[a][0] + cell[a][1]) * (cell[0][b] + cell[1][b]) / nn;
      chi2 += (cell[a][b] - exp_ab) * (cell[a][b] - exp_ab) / exp_ab;
    }
  }
  CHECK(chi2 < 6.635);

  // Same against z2 quartile (df 3, 1% critical value).
  const Eigen::VectorXi zq = quantile_groups(cohort.z2, 4);
  double zcell[4][2] = {};
  for (Eigen::Index i = 0; i < n; ++i) zcell[zq[i]][amputed.mz2[i]] += 1.0;
  double col[2] = {0, 0};
  for (int q = 0; q < 4; ++q) {
    col[0] += zcell[q][0];
    col[1] += zcell[q][1];
  }
  double chi2z = 0.0;
  for (int q = 0; q < 4; ++q) {
    const double rowsum = zcell[q][0] + zcell[q][1];
    for (int b = 0; b < 2; ++b) {
      const double exp_qb = rowsum * col[b] / nn;
      chi2z += (zcell[q][b] - exp_qb) * (zcell[q][b] - exp_qb) / exp_qb;
    }
  }
  CHECK(chi2z < 11.345);
}

TEST_CASE("amputation is deterministic in the seed") {
  tabular::Cohort cohort = uniform_cohort(1000, 21);
  AmputationSpec spec;
  spec.seed = 99;
  const tabular::Cohort a = ampute(cohort, spec);
  const tabular::Cohort b = ampute(cohort, spec);
  CHECK((a.mz2.array() == b.mz2.array()).all());

  spec.seed = 100;
  const tabular::Cohort c = ampute(cohort, spec);
  CHECK(!(a.mz2.array() == c.mz2.array()).all());
}

TEST_CASE("amputation refuses a cohort with existing missingness") {
  tabular::Cohort cohort = uniform_cohort(10, 1);
  cohort.mz2[3] = 1;
  CHECK_THROWS_AS(ampute(cohort, AmputationSpec{}), ConfigError);
}

TEST_SUITE_END();
