#include <algorithm>
#include <cmath>
#include <numeric>

#include "hdmi/error.hpp"
#include "hdmi/regfit.hpp"

namespace hdmi::regfit {

namespace {

constexpr double kDivergenceBound = 50.0;
constexpr double kLoglikRelTol = 1e-9;
constexpr double kGradientTol = 1e-8;
// Monotone likelihoods flatten while the Newton step keeps pushing outward,
// so convergence additionally requires the last accepted step to be small;
// otherwise iteration continues until the divergence bound trips.
constexpr double kStepTol = 1e-2;
constexpr int kMaxNewton = 100;
constexpr int kMaxHalvings = 40;

std::vector<Eigen::Index> time_order(const Eigen::VectorXd& time) {
  std::vector<Eigen::Index> order(static_cast<std::size_t>(time.size()));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return time[a] < time[b]; });
  return order;
}

void check_survival_inputs(Eigen::Index n, const Eigen::VectorXd& time,
                           const Eigen::VectorXi& event) {
  if (time.size() != n || event.size() != n) throw ConfigError("survival vectors disagree on length");
  if (event.sum() == 0) throw FitError("cox fit requires at least one event");
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!(time[i] > 0.0)) throw ConfigError("non-positive follow-up time at row " + std::to_string(i));
  }
}

void check_constant_columns(const Eigen::MatrixXd& x, const std::vector<std::string>& names,
                            Eigen::Index first) {
  for (Eigen::Index j = first; j < x.cols(); ++j) {
    if (x.col(j).maxCoeff() == x.col(j).minCoeff()) {
      throw SingularityError("constant design column: " + names[static_cast<std::size_t>(j)]);
    }
  }
}

void check_rank(const Eigen::MatrixXd& x, const std::vector<std::string>& names, bool center) {
  const Eigen::Index p = x.cols();
  if (p == 0) return;
  Eigen::MatrixXd m = x;
  if (center) m.rowwise() -= x.colwise().mean();
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(m);
  qr.setThreshold(1e-10);
  if (qr.rank() < p) {
    const auto perm = qr.colsPermutation().indices();
    const auto j = static_cast<std::size_t>(perm[qr.rank()]);
    throw SingularityError("rank-deficient design; dependent column: " + names[j]);
  }
}

// One pass over the Breslow partial likelihood: value, gradient, observed
// information. Rows are visited in descending time so the risk-set sums
// accumulate; ties enter the risk set together before their events count.
struct CoxEval {
  double loglik;
  Eigen::VectorXd grad;
  Eigen::MatrixXd info;
};

CoxEval cox_eval(const Eigen::MatrixXd& x, const Eigen::VectorXd& time,
                 const Eigen::VectorXi& event, const std::vector<Eigen::Index>& order,
                 const Eigen::VectorXd& beta, bool want_info) {
  const Eigen::Index n = time.size();
  const Eigen::Index p = x.cols();
  const Eigen::VectorXd lp = p > 0 ? Eigen::VectorXd(x * beta) : Eigen::VectorXd::Zero(n);

  CoxEval ev{0.0, Eigen::VectorXd::Zero(p), Eigen::MatrixXd::Zero(p, p)};
  double s0 = 0.0;
  Eigen::VectorXd s1 = Eigen::VectorXd::Zero(p);
  Eigen::MatrixXd s2 = Eigen::MatrixXd::Zero(p, p);

  Eigen::Index hi = n;
  while (hi > 0) {
    Eigen::Index lo = hi;
    const double t = time[order[static_cast<std::size_t>(hi - 1)]];
    while (lo > 0 && time[order[static_cast<std::size_t>(lo - 1)]] == t) --lo;

    double d = 0.0;
    double lp_events = 0.0;
    Eigen::VectorXd x_events = Eigen::VectorXd::Zero(p);
    for (Eigen::Index k = lo; k < hi; ++k) {
      const Eigen::Index i = order[static_cast<std::size_t>(k)];
      const double w = std::exp(lp[i]);
      s0 += w;
      if (p > 0) {
        s1.noalias() += w * x.row(i).transpose();
        if (want_info) s2.noalias() += w * x.row(i).transpose() * x.row(i);
      }
      if (event[i]) {
        d += 1.0;
        lp_events += lp[i];
        if (p > 0) x_events += x.row(i).transpose();
      }
    }
    if (d > 0.0) {
      ev.loglik += lp_events - d * std::log(s0);
      if (p > 0) {
        const Eigen::VectorXd xbar = s1 / s0;
        ev.grad += x_events - d * xbar;
        if (want_info) ev.info += d * (s2 / s0 - xbar * xbar.transpose());
      }
    }
    hi = lo;
  }
  return ev;
}

}  // namespace

Eigen::MatrixXd CoxModel::covariance() const {
  const Eigen::Index p = information.rows();
  if (p == 0) return Eigen::MatrixXd(0, 0);
  Eigen::LDLT<Eigen::MatrixXd> ldlt(information);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) {
    throw SingularityError("information matrix is not positive definite");
  }
  return ldlt.solve(Eigen::MatrixXd::Identity(p, p));
}

CoxModel fit_cox(const Eigen::MatrixXd& design, const std::vector<std::string>& names,
                 const Eigen::VectorXd& time, const Eigen::VectorXi& event) {
  const Eigen::Index n = design.rows();
  const Eigen::Index p = design.cols();
  if (static_cast<Eigen::Index>(names.size()) != p) {
    throw ConfigError("cox design name count mismatch");
  }
  check_survival_inputs(n, time, event);
  // The partial likelihood is invariant to constant shifts of a column, so
  // rank is judged on the centered design.
  check_constant_columns(design, names, 0);
  check_rank(design, names, /*center=*/true);

  const auto order = time_order(time);
  CoxModel model;
  model.names = names;
  model.coefficients = Eigen::VectorXd::Zero(p);

  CoxEval ev = cox_eval(design, time, event, order, model.coefficients, true);
  double ll_prev = ev.loglik;
  double last_step = 0.0;
  Eigen::VectorXd last_dir = Eigen::VectorXd::Zero(p);

  // The gradient of a monotone likelihood underflows to zero while the
  // Newton steps are still large. Walking on in the last direction tells a
  // numerically flat ridge (stays level out to the divergence bound) apart
  // from a genuine optimum (drops at once).
  auto stalled_on_ridge = [&]() {
    Eigen::VectorXd probe = model.coefficients;
    while (probe.cwiseAbs().maxCoeff() <= kDivergenceBound) {
      probe += last_dir;
      const double llp = cox_eval(design, time, event, order, probe, false).loglik;
      if (llp < ev.loglik - 1e-12 * (std::fabs(ev.loglik) + 1.0)) return false;
    }
    return true;
  };

  int iter = 0;
  for (; iter < kMaxNewton; ++iter) {
    const double gnorm = p > 0 ? ev.grad.cwiseAbs().maxCoeff() : 0.0;
    if (gnorm < kGradientTol) {
      if (last_step >= kStepTol && stalled_on_ridge()) {
        throw DivergenceError("cox coefficients diverging (monotone likelihood)");
      }
      break;
    }

    Eigen::LDLT<Eigen::MatrixXd> ldlt(ev.info);
    if (ldlt.info() != Eigen::Success) {
      throw SingularityError("singular information matrix during cox fit");
    }
    const Eigen::VectorXd step = ldlt.solve(ev.grad);
    if (!step.allFinite()) throw SingularityError("singular information matrix during cox fit");

    double scale = 1.0;
    Eigen::VectorXd cand;
    CoxEval ev_cand;
    for (int h = 0; h <= kMaxHalvings; ++h) {
      cand = model.coefficients + scale * step;
      ev_cand = cox_eval(design, time, event, order, cand, true);
      if (ev_cand.loglik >= ev.loglik || h == kMaxHalvings) break;
      scale *= 0.5;
    }
    model.coefficients = cand;
    ev = ev_cand;
    last_dir = scale * step;
    last_step = last_dir.cwiseAbs().maxCoeff();

    if (model.coefficients.cwiseAbs().maxCoeff() > kDivergenceBound) {
      throw DivergenceError("cox coefficients diverging (monotone likelihood)");
    }
    if (std::fabs(ev.loglik - ll_prev) < kLoglikRelTol * (std::fabs(ll_prev) + 1e-3)) {
      if (last_step >= kStepTol && stalled_on_ridge()) {
        throw DivergenceError("cox coefficients diverging (monotone likelihood)");
      }
      ++iter;
      break;
    }
    ll_prev = ev.loglik;
  }
  if (iter == kMaxNewton) throw FitError("cox fit failed to converge");

  model.loglik = ev.loglik;
  model.information = ev.info;
  model.convergence.iterations = iter;
  model.convergence.gradient_norm = p > 0 ? ev.grad.cwiseAbs().maxCoeff() : 0.0;
  return model;
}

double cox_partial_loglik(const Eigen::VectorXd& lp, const Eigen::VectorXd& time,
                          const Eigen::VectorXi& event) {
  const Eigen::Index n = time.size();
  if (lp.size() != n || event.size() != n) throw ConfigError("partial likelihood inputs disagree");
  const auto order = time_order(time);
  double ll = 0.0;
  double s0 = 0.0;
  Eigen::Index hi = n;
  while (hi > 0) {
    Eigen::Index lo = hi;
    const double t = time[order[static_cast<std::size_t>(hi - 1)]];
    while (lo > 0 && time[order[static_cast<std::size_t>(lo - 1)]] == t) --lo;
    double d = 0.0, lp_events = 0.0;
    for (Eigen::Index k = lo; k < hi; ++k) {
      const Eigen::Index i = order[static_cast<std::size_t>(k)];
      s0 += std::exp(lp[i]);
      if (event[i]) {
        d += 1.0;
        lp_events += lp[i];
      }
    }
    if (d > 0.0) ll += lp_events - d * std::log(s0);
    hi = lo;
  }
  return ll;
}

double BaselineHazard::value(double t) const {
  // Last event time <= t.
  const auto* begin = times.data();
  const auto* end = begin + times.size();
  const auto* it = std::upper_bound(begin, end, t);
  if (it == begin) return 0.0;
  return cumhaz[static_cast<Eigen::Index>(it - begin) - 1];
}

BaselineHazard breslow_cumhaz(const Eigen::VectorXd& lp, const Eigen::VectorXd& time,
                              const Eigen::VectorXi& event) {
  const Eigen::Index n = time.size();
  if (lp.size() != n || event.size() != n) throw ConfigError("breslow inputs disagree on length");
  const auto order = time_order(time);

  // Risk-set denominators accumulate from the largest time down; increments
  // are then emitted in ascending order.
  std::vector<double> times_out, haz_out;
  double s0 = 0.0;
  Eigen::Index hi = n;
  while (hi > 0) {
    Eigen::Index lo = hi;
    const double t = time[order[static_cast<std::size_t>(hi - 1)]];
    while (lo > 0 && time[order[static_cast<std::size_t>(lo - 1)]] == t) --lo;
    double d = 0.0;
    for (Eigen::Index k = lo; k < hi; ++k) {
      const Eigen::Index i = order[static_cast<std::size_t>(k)];
      s0 += std::exp(lp[i]);
      if (event[i]) d += 1.0;
    }
    if (d > 0.0) {
      times_out.push_back(t);
      haz_out.push_back(d / s0);
    }
    hi = lo;
  }
  std::reverse(times_out.begin(), times_out.end());
  std::reverse(haz_out.begin(), haz_out.end());

  BaselineHazard bh;
  bh.times = Eigen::Map<Eigen::VectorXd>(times_out.data(), static_cast<Eigen::Index>(times_out.size()));
  bh.cumhaz.resize(bh.times.size());
  double acc = 0.0;
  for (Eigen::Index k = 0; k < bh.times.size(); ++k) {
    acc += haz_out[static_cast<std::size_t>(k)];
    bh.cumhaz[k] = acc;
  }
  return bh;
}

Eigen::MatrixXd cluster_robust_variance(const CoxModel& model, const Eigen::MatrixXd& design,
                                        const Eigen::VectorXd& time, const Eigen::VectorXi& event,
                                        const std::vector<int>& clusters) {
  const Eigen::Index n = design.rows();
  const Eigen::Index p = design.cols();
  if (static_cast<Eigen::Index>(clusters.size()) != n) {
    throw ConfigError("cluster ids do not cover all rows");
  }
  const auto order = time_order(time);
  const Eigen::VectorXd lp = design * model.coefficients;

  // Backward sweep for the risk-set means at each distinct event time.
  struct EventBlock {
    double t;
    double d_over_s0;
    Eigen::VectorXd xbar;
  };
  std::vector<EventBlock> blocks;
  {
    double s0 = 0.0;
    Eigen::VectorXd s1 = Eigen::VectorXd::Zero(p);
    Eigen::Index hi = n;
    while (hi > 0) {
      Eigen::Index lo = hi;
      const double t = time[order[static_cast<std::size_t>(hi - 1)]];
      while (lo > 0 && time[order[static_cast<std::size_t>(lo - 1)]] == t) --lo;
      double d = 0.0;
      for (Eigen::Index k = lo; k < hi; ++k) {
        const Eigen::Index i = order[static_cast<std::size_t>(k)];
        const double w = std::exp(lp[i]);
        s0 += w;
        s1.noalias() += w * design.row(i).transpose();
        if (event[i]) d += 1.0;
      }
      if (d > 0.0) blocks.push_back({t, d / s0, s1 / s0});
      hi = lo;
    }
    std::reverse(blocks.begin(), blocks.end());
  }

  // Forward sweep: partial sums A(t) = sum d_k/S0_k and B(t) = sum
  // (d_k/S0_k) xbar_k over event times <= t give each row's score residual
  // U_i = delta_i (x_i - xbar(t_i)) - exp(lp_i) (x_i A(t_i) - B(t_i)).
  Eigen::MatrixXd score(n, p);
  {
    double a = 0.0;
    Eigen::VectorXd b = Eigen::VectorXd::Zero(p);
    std::size_t next_block = 0;
    Eigen::Index k = 0;
    while (k < n) {
      Eigen::Index k_hi = k;
      const double t = time[order[static_cast<std::size_t>(k)]];
      while (k_hi < n && time[order[static_cast<std::size_t>(k_hi)]] == t) ++k_hi;
      const EventBlock* blk = nullptr;
      if (next_block < blocks.size() && blocks[next_block].t == t) {
        blk = &blocks[next_block];
        a += blk->d_over_s0;
        b.noalias() += blk->d_over_s0 * blk->xbar;
        ++next_block;
      }
      for (Eigen::Index kk = k; kk < k_hi; ++kk) {
        const Eigen::Index i = order[static_cast<std::size_t>(kk)];
        Eigen::VectorXd u = -std::exp(lp[i]) * (design.row(i).transpose() * a - b);
        if (event[i]) {
          if (blk == nullptr) throw FitError("event time missing from baseline blocks");
          u += design.row(i).transpose() - blk->xbar;
        }
        score.row(i) = u.transpose();
      }
      k = k_hi;
    }
  }

  Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(p, p);
  {
    std::vector<std::pair<int, Eigen::Index>> by_cluster(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) by_cluster[static_cast<std::size_t>(i)] = {clusters[static_cast<std::size_t>(i)], i};
    std::sort(by_cluster.begin(), by_cluster.end());
    std::size_t k = 0;
    while (k < by_cluster.size()) {
      std::size_t k_hi = k;
      Eigen::VectorXd g = Eigen::VectorXd::Zero(p);
      while (k_hi < by_cluster.size() && by_cluster[k_hi].first == by_cluster[k].first) {
        g += score.row(by_cluster[k_hi].second).transpose();
        ++k_hi;
      }
      meat.noalias() += g * g.transpose();
      k = k_hi;
    }
  }

  Eigen::LDLT<Eigen::MatrixXd> ldlt(model.information);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) {
    throw SingularityError("singular information in robust variance");
  }
  const Eigen::MatrixXd bread = ldlt.solve(Eigen::MatrixXd::Identity(p, p));
  return bread * meat * bread;
}

Eigen::VectorXd LogisticModel::predict_linear(const Eigen::MatrixXd& design) const {
  if (design.cols() + 1 != coefficients.size()) {
    throw ConfigError("logistic prediction design width mismatch");
  }
  return (design * coefficients.tail(coefficients.size() - 1)).array() + coefficients[0];
}

LogisticModel fit_logistic(const Eigen::MatrixXd& design, const std::vector<std::string>& names,
                           const Eigen::VectorXi& y) {
  const Eigen::Index n = design.rows();
  if (static_cast<Eigen::Index>(names.size()) != design.cols()) {
    throw ConfigError("logistic design name count mismatch");
  }
  if (y.size() != n) throw ConfigError("logistic response length mismatch");
  const int ysum = y.sum();
  if (ysum == 0 || ysum == n) throw FitError("degenerate binary response (all 0 or all 1)");

  Eigen::MatrixXd x(n, design.cols() + 1);
  x.col(0).setOnes();
  x.rightCols(design.cols()) = design;
  std::vector<std::string> full_names = {"(intercept)"};
  full_names.insert(full_names.end(), names.begin(), names.end());
  check_constant_columns(x, full_names, 1);
  check_rank(x, full_names, /*center=*/false);

  const Eigen::Index p = x.cols();
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  const Eigen::VectorXd yd = y.cast<double>();

  auto loglik_at = [&](const Eigen::VectorXd& b) {
    const Eigen::VectorXd eta = x * b;
    // log(1 + e^eta) computed stably on both tails.
    double ll = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double e = eta[i];
      ll += yd[i] * e - (e > 0.0 ? e + std::log1p(std::exp(-e)) : std::log1p(std::exp(e)));
    }
    return ll;
  };

  double ll = loglik_at(beta);
  Eigen::MatrixXd info(p, p);
  Eigen::VectorXd grad(p);
  double last_step = 0.0;
  Eigen::VectorXd last_dir = Eigen::VectorXd::Zero(p);

  auto stalled_on_ridge = [&]() {
    Eigen::VectorXd probe = beta;
    while (probe.cwiseAbs().maxCoeff() <= kDivergenceBound) {
      probe += last_dir;
      if (loglik_at(probe) < ll - 1e-12 * (std::fabs(ll) + 1.0)) return false;
    }
    return true;
  };

  int iter = 0;
  for (; iter < kMaxNewton; ++iter) {
    const Eigen::VectorXd eta = x * beta;
    const Eigen::VectorXd prob = (1.0 / (1.0 + (-eta.array()).exp())).matrix();
    grad = x.transpose() * (yd - prob);
    if (grad.cwiseAbs().maxCoeff() < kGradientTol) {
      if (last_step >= kStepTol && stalled_on_ridge()) {
        throw DivergenceError("logistic coefficients diverging (separation)");
      }
      break;
    }
    const Eigen::VectorXd w = prob.array() * (1.0 - prob.array());
    info = x.transpose() * w.asDiagonal() * x;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
    if (ldlt.info() != Eigen::Success) throw SingularityError("singular information in logistic fit");
    const Eigen::VectorXd step = ldlt.solve(grad);
    if (!step.allFinite()) throw SingularityError("singular information in logistic fit");

    double scale = 1.0;
    Eigen::VectorXd cand;
    double ll_cand = ll;
    for (int h = 0; h <= kMaxHalvings; ++h) {
      cand = beta + scale * step;
      ll_cand = loglik_at(cand);
      if (ll_cand >= ll || h == kMaxHalvings) break;
      scale *= 0.5;
    }
    beta = cand;
    last_dir = scale * step;
    last_step = last_dir.cwiseAbs().maxCoeff();
    if (beta.cwiseAbs().maxCoeff() > kDivergenceBound) {
      throw DivergenceError("logistic coefficients diverging (separation)");
    }
    if (std::fabs(ll_cand - ll) < kLoglikRelTol * (std::fabs(ll) + 1e-3)) {
      ll = ll_cand;
      if (last_step >= kStepTol && stalled_on_ridge()) {
        throw DivergenceError("logistic coefficients diverging (separation)");
      }
      ++iter;
      break;
    }
    ll = ll_cand;
  }
  if (iter == kMaxNewton) throw FitError("logistic fit failed to converge");

  // Covariance at the final coefficients.
  const Eigen::VectorXd eta = x * beta;
  const Eigen::VectorXd prob = (1.0 / (1.0 + (-eta.array()).exp())).matrix();
  const Eigen::VectorXd w = prob.array() * (1.0 - prob.array());
  info = x.transpose() * w.asDiagonal() * x;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) {
    throw SingularityError("singular information in logistic fit");
  }

  LogisticModel model;
  model.names = std::move(full_names);
  model.coefficients = beta;
  model.loglik = ll;
  model.covariance = ldlt.solve(Eigen::MatrixXd::Identity(p, p));
  model.convergence.iterations = iter;
  model.convergence.gradient_norm = (x.transpose() * (yd - prob)).cwiseAbs().maxCoeff();
  return model;
}

}  // namespace hdmi::regfit
