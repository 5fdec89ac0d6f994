#include <algorithm>
#include <cmath>
#include <numeric>

#include "hdmi/error.hpp"
#include "hdmi/regfit.hpp"
#include "hdmi/rng.hpp"

namespace hdmi::regfit {

namespace {

constexpr double kKktTarget = 5e-9;  // internal bound, tighter than promised
constexpr double kCdTol = 1e-10;     // max weighted-scale move v_j*|delta_j| per sweep
constexpr int kMaxSweepRounds = 10000;
constexpr int kMaxIrls = 200;
constexpr double kMinWeight = 1e-5;
constexpr double kProbClip = 1e-10;
constexpr double kHugeLambda = 1e35;

double soft_threshold(double z, double t) {
  if (z > t) return z - t;
  if (z < -t) return z + t;
  return 0.0;
}

double sigmoid(double eta) { return 1.0 / (1.0 + std::exp(-eta)); }

std::vector<Eigen::Index> ascending_time_order(const Eigen::VectorXd& time) {
  std::vector<Eigen::Index> order(static_cast<std::size_t>(time.size()));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return time[a] < time[b]; });
  return order;
}

// Path solver for one (design, response, penalty) problem. Predictors are
// standardized implicitly (divisor-n variance) so sparse columns stay
// sparse; coefficients live on the standardized scale internally.
class Engine {
 public:
  Engine(Family family, const DesignMatrix& x, const Response& resp, Eigen::VectorXd pf)
      : family_(family), x_(x), pf_(std::move(pf)), n_(x.rows()) {
    if (pf_.size() != x_.cols()) throw ConfigError("penalty factor length mismatch");
    if (pf_.minCoeff() < 0.0) throw ConfigError("negative penalty factor");
    const double nd = static_cast<double>(n_);

    if (family_ == Family::cox) {
      time_ = resp.time;
      event_ = resp.event;
      if (time_.size() != n_ || event_.size() != n_) throw ConfigError("cox response length mismatch");
      if (event_.sum() == 0) throw FitError("cox lasso requires at least one event");
      order_ = ascending_time_order(time_);
    } else {
      y_ = resp.y;
      if (y_.size() != n_) throw ConfigError("response length mismatch");
      if (y_.maxCoeff() == y_.minCoeff()) throw FitError("constant response");
      if (family_ == Family::binomial) {
        for (Eigen::Index i = 0; i < n_; ++i) {
          if (y_[i] != 0.0 && y_[i] != 1.0) throw ConfigError("binomial response must be 0/1");
        }
      }
    }

    const Eigen::Index p = x_.cols();
    mean_.resize(p);
    scale_.resize(p);
    dropped_.assign(static_cast<std::size_t>(p), 0);
    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(n_);
    for (Eigen::Index j = 0; j < p; ++j) {
      const double m = x_.col_sum(j) / nd;
      const double ssq = x_.weighted_sumsq(j, ones) / nd;
      const double var = std::max(0.0, ssq - m * m);
      mean_[j] = m;
      if (var <= 1e-12 * std::max(1.0, m * m)) {
        dropped_[static_cast<std::size_t>(j)] = 1;
        scale_[j] = 1.0;
      } else {
        scale_[j] = std::sqrt(var);
      }
    }

    // Covariance updates beat residual tracking for gaussian fits; the
    // standardized design is materialized densely, so cap the footprint.
    covariance_mode_ =
        family_ == Family::gaussian && (!x_.has_sparse_cols() || n_ * p <= 8'000'000);
    c_ = Eigen::VectorXd::Zero(p);
    a0_ = 0.0;
    if (covariance_mode_) init_covariance();
  }

  const std::vector<char>& dropped() const { return dropped_; }

  bool is_forced(Eigen::Index j) const {
    return pf_[j] == 0.0 && !dropped_[static_cast<std::size_t>(j)];
  }

  // Largest |true gradient|/pf over penalized coordinates at the forced-only
  // solution.
  double lambda_max() {
    solve_lambda(kHugeLambda);
    const Eigen::VectorXd g = true_gradient();
    double lmax = 0.0;
    for (Eigen::Index j = 0; j < x_.cols(); ++j) {
      if (dropped_[static_cast<std::size_t>(j)] || pf_[j] == 0.0) continue;
      lmax = std::max(lmax, std::fabs(g[j]) / pf_[j]);
    }
    return lmax > 0.0 ? lmax : 1e-3;
  }

  // Solves the decreasing path with warm starts. first_is_lambda_max marks
  // an automatic path whose head must keep every penalized coefficient at
  // exactly zero.
  void solve_path(const Eigen::VectorXd& lambdas, bool first_is_lambda_max,
                  Eigen::MatrixXd& coef_std, Eigen::VectorXd& a0_out) {
    const Eigen::Index L = lambdas.size();
    coef_std.resize(x_.cols(), L);
    a0_out.resize(L);
    Eigen::Index start = 0;
    if (first_is_lambda_max) {
      solve_lambda(kHugeLambda);
      // The head solution holds at every lambda >= lambda_max, so its
      // gradient seeds the sequential strong rule anchored at lambdas[0].
      if (!covariance_mode_ && g_prev_.size() == x_.cols()) {
        lambda_prev_ = lambdas[0];
        have_gprev_ = true;
      }
      coef_std.col(0) = c_;
      a0_out[0] = a0_;
      start = 1;
    }
    for (Eigen::Index l = start; l < L; ++l) {
      solve_lambda(lambdas[l]);
      coef_std.col(l) = c_;
      a0_out[l] = a0_;
    }
  }

  void to_original(const Eigen::VectorXd& c, double a0, Eigen::VectorXd& b, double& b0) const {
    const Eigen::Index p = x_.cols();
    b.resize(p);
    double shift = 0.0;
    for (Eigen::Index j = 0; j < p; ++j) {
      b[j] = c[j] / scale_[j];
      shift += b[j] * mean_[j];
    }
    b0 = a0 - shift;
  }

 private:
  // ---- covariance mode (dense gaussian) ----
  void init_covariance() {
    const Eigen::Index p = x_.cols();
    u_.resize(n_, p);
    for (Eigen::Index j = 0; j < p; ++j) {
      u_.col(j) = (x_.col_dense(j).array() - mean_[j]) / scale_[j];
      if (dropped_[static_cast<std::size_t>(j)]) u_.col(j).setZero();
    }
    ymean_ = y_.mean();
    const Eigen::VectorXd yc = y_.array() - ymean_;
    xty_ = u_.transpose() * yc / static_cast<double>(n_);
    q_ = xty_;
    gram_index_.assign(static_cast<std::size_t>(p), -1);
    a0_ = ymean_;
  }

  void ensure_gram(Eigen::Index j) {
    if (gram_index_[static_cast<std::size_t>(j)] >= 0) return;
    gram_index_[static_cast<std::size_t>(j)] = static_cast<int>(gram_.size());
    gram_.emplace_back(u_.transpose() * u_.col(j) / static_cast<double>(n_));
  }

  void refresh_q() {
    q_ = xty_;
    for (Eigen::Index k = 0; k < x_.cols(); ++k) {
      if (c_[k] != 0.0) {
        ensure_gram(k);
        q_ -= c_[k] * gram_[static_cast<std::size_t>(gram_index_[static_cast<std::size_t>(k)])];
      }
    }
  }

  double sweep_cov(const std::vector<Eigen::Index>& cols, double lambda) {
    double max_delta = 0.0;
    for (Eigen::Index j : cols) {
      const double num = q_[j] + c_[j];
      const double c_new = soft_threshold(num, lambda * pf_[j]);
      const double delta = c_new - c_[j];
      if (delta != 0.0) {
        ensure_gram(j);
        q_ -= delta * gram_[static_cast<std::size_t>(gram_index_[static_cast<std::size_t>(j)])];
        c_[j] = c_new;
        max_delta = std::max(max_delta, std::fabs(delta));
      }
    }
    return max_delta;
  }

  // ---- naive weighted mode ----
  // Residual r = r_store + shift tracks z - a0 - sum_j c_j u_j; swr_ = <w, r>.
  // Stats are refreshed for the screened columns only; stale entries are
  // never read because sweeps stay inside the screen set.
  void refresh_weighted_stats(const std::vector<Eigen::Index>& cols) {
    const Eigen::Index p = x_.cols();
    if (xw_.size() != p) {
      xw_ = Eigen::VectorXd::Zero(p);
      xww_ = Eigen::VectorXd::Zero(p);
      v_ = Eigen::VectorXd::Ones(p);
    }
    wtotal_ = w_.sum();
    const double nd = static_cast<double>(n_);
    for (Eigen::Index j : cols) {
      xw_[j] = x_.weighted_sum(j, w_);
      xww_[j] = x_.weighted_sumsq(j, w_);
      v_[j] = (xww_[j] - 2.0 * mean_[j] * xw_[j] + mean_[j] * mean_[j] * wtotal_) /
              (scale_[j] * scale_[j] * nd);
      if (v_[j] <= 0.0) v_[j] = 1e-12;
    }
  }

  void rebuild_residual() {
    // eta on the standardized scale; computed column-wise from the raw
    // design so sparse columns cost their nonzeros only.
    Eigen::VectorXd eta = Eigen::VectorXd::Zero(n_);
    double base = a0_;
    for (Eigen::Index j = 0; j < x_.cols(); ++j) {
      if (c_[j] == 0.0) continue;
      const double bj = c_[j] / scale_[j];
      x_.axpy(j, bj, eta);
      base -= bj * mean_[j];
    }
    r_store_ = z_ - eta;
    shift_ = -base;
    swr_ = w_.dot(r_store_) + shift_ * wtotal_;
    eta_ = eta.array() + base;
  }

  void intercept_step() {
    if (family_ == Family::cox) return;
    const double delta = swr_ / wtotal_;
    a0_ += delta;
    shift_ -= delta;
    swr_ = 0.0;
  }

  double sweep_naive(const std::vector<Eigen::Index>& cols, double lambda) {
    const double nd = static_cast<double>(n_);
    double max_delta = 0.0;
    for (Eigen::Index j : cols) {
      const double dot = x_.weighted_dot(j, w_, r_store_) + shift_ * xw_[j] - mean_[j] * swr_;
      const double g = dot / (scale_[j] * nd);
      const double num = g + v_[j] * c_[j];
      const double c_new = soft_threshold(num, lambda * pf_[j]) / v_[j];
      const double delta = c_new - c_[j];
      if (delta != 0.0) {
        x_.axpy(j, -delta / scale_[j], r_store_);
        shift_ += delta * mean_[j] / scale_[j];
        swr_ -= delta * (xw_[j] - mean_[j] * wtotal_) / scale_[j];
        c_[j] = c_new;
        // Progress on the working-gradient scale, so low-weight problems
        // are not iterated to raw-coefficient precision they cannot reach.
        max_delta = std::max(max_delta, v_[j] * std::fabs(delta));
      }
    }
    return max_delta;
  }

  std::vector<Eigen::Index> all_columns() const {
    std::vector<Eigen::Index> cols;
    cols.reserve(static_cast<std::size_t>(x_.cols()));
    for (Eigen::Index j = 0; j < x_.cols(); ++j) {
      if (!dropped_[static_cast<std::size_t>(j)]) cols.push_back(j);
    }
    return cols;
  }

  std::vector<Eigen::Index> active_columns() const {
    std::vector<Eigen::Index> cols;
    for (Eigen::Index j = 0; j < x_.cols(); ++j) {
      if (dropped_[static_cast<std::size_t>(j)]) continue;
      if (c_[j] != 0.0 || pf_[j] == 0.0) cols.push_back(j);
    }
    return cols;
  }

  // Coordinate descent to convergence at fixed lambda and fixed weights,
  // restricted to the given candidate columns. tol is on the working
  // gradient scale; intermediate IRLS passes may solve loosely since the
  // final KKT check gates the result.
  void solve_wls(double lambda, const std::vector<Eigen::Index>& cand, double tol) {
    auto sweep = [&](const std::vector<Eigen::Index>& cols) {
      if (!covariance_mode_) {
        // Re-anchor the tracked weighted residual sum before a round.
        swr_ = w_.dot(r_store_) + shift_ * wtotal_;
        intercept_step();
        return sweep_naive(cols, lambda);
      }
      return sweep_cov(cols, lambda);
    };
    for (int round = 0; round < kMaxSweepRounds; ++round) {
      auto active = active_columns();
      for (int inner = 0; inner < kMaxSweepRounds; ++inner) {
        if (sweep(active) < tol) break;
      }
      if (sweep(cand) < tol) break;
    }
  }

  // Weights and working response from the current eta (naive mode).
  void compute_weights() {
    switch (family_) {
      case Family::gaussian:
        w_ = Eigen::VectorXd::Ones(n_);
        z_ = y_;
        break;
      case Family::binomial: {
        w_.resize(n_);
        z_.resize(n_);
        resid_true_.resize(n_);
        for (Eigen::Index i = 0; i < n_; ++i) {
          const double p = sigmoid(eta_[i]);
          const double w = std::max(p * (1.0 - p), kMinWeight);
          w_[i] = w;
          z_[i] = eta_[i] + (y_[i] - p) / w;
          resid_true_[i] = y_[i] - p;
        }
        break;
      }
      case Family::cox: {
        cox_working(eta_, w_, z_, resid_true_);
        break;
      }
    }
  }

  // Breslow working weights: w_i = e^eta A(t_i) - e^2eta C(t_i), working
  // response z_i = eta_i + M_i / w_i with M the martingale residual.
  void cox_working(const Eigen::VectorXd& eta, Eigen::VectorXd& w, Eigen::VectorXd& z,
                   Eigen::VectorXd& m_out) const {
    const Eigen::Index n = n_;
    Eigen::VectorXd ex = eta.array().exp();
    // Backward pass: d_k and S0_k per distinct time.
    std::vector<double> block_t, block_d_s0, block_d_s0sq;
    {
      double s0 = 0.0;
      Eigen::Index hi = n;
      while (hi > 0) {
        Eigen::Index lo = hi;
        const double t = time_[order_[static_cast<std::size_t>(hi - 1)]];
        while (lo > 0 && time_[order_[static_cast<std::size_t>(lo - 1)]] == t) --lo;
        double d = 0.0;
        for (Eigen::Index k = lo; k < hi; ++k) {
          const Eigen::Index i = order_[static_cast<std::size_t>(k)];
          s0 += ex[i];
          if (event_[i]) d += 1.0;
        }
        if (d > 0.0) {
          block_t.push_back(t);
          block_d_s0.push_back(d / s0);
          block_d_s0sq.push_back(d / (s0 * s0));
        }
        hi = lo;
      }
      std::reverse(block_t.begin(), block_t.end());
      std::reverse(block_d_s0.begin(), block_d_s0.end());
      std::reverse(block_d_s0sq.begin(), block_d_s0sq.end());
    }
    // Forward pass: A and C partial sums give each row's weight.
    w.resize(n);
    z.resize(n);
    m_out.resize(n);
    double a = 0.0, cc = 0.0;
    std::size_t next = 0;
    Eigen::Index k = 0;
    while (k < n) {
      Eigen::Index k_hi = k;
      const double t = time_[order_[static_cast<std::size_t>(k)]];
      while (k_hi < n && time_[order_[static_cast<std::size_t>(k_hi)]] == t) ++k_hi;
      if (next < block_t.size() && block_t[next] == t) {
        a += block_d_s0[next];
        cc += block_d_s0sq[next];
        ++next;
      }
      for (Eigen::Index kk = k; kk < k_hi; ++kk) {
        const Eigen::Index i = order_[static_cast<std::size_t>(kk)];
        const double m = (event_[i] ? 1.0 : 0.0) - ex[i] * a;
        const double h = ex[i] * a - ex[i] * ex[i] * cc;
        m_out[i] = m;
        w[i] = std::max(h, 1e-10);
        z[i] = eta[i] + (h > 1e-10 ? m / w[i] : 0.0);
      }
      k = k_hi;
    }
  }

  // Gradient of the true objective (negative mean loglik) sign-flipped:
  // G_j = <u_j, resid_true>/n. For gaussian the working residual is exact.
  Eigen::VectorXd true_gradient() {
    const Eigen::Index p = x_.cols();
    const double nd = static_cast<double>(n_);
    if (covariance_mode_) return q_;
    if (family_ == Family::gaussian) {
      resid_true_ = r_store_.array() + shift_;
    }
    const double rsum = resid_true_.sum();
    Eigen::VectorXd g = Eigen::VectorXd::Zero(p);
    for (Eigen::Index j = 0; j < p; ++j) {
      if (dropped_[static_cast<std::size_t>(j)]) continue;
      g[j] = (x_.dot(j, resid_true_) - mean_[j] * rsum) / (scale_[j] * nd);
    }
    return g;
  }

  // Largest violation of the subgradient conditions at the current point.
  double kkt_gap(const Eigen::VectorXd& g, double lambda) const {
    double gap = 0.0;
    for (Eigen::Index j = 0; j < x_.cols(); ++j) {
      if (dropped_[static_cast<std::size_t>(j)]) continue;
      const double bound = lambda >= kHugeLambda ? 0.0 : lambda * pf_[j];
      if (c_[j] != 0.0) {
        gap = std::max(gap, std::fabs(g[j] - bound * (c_[j] > 0.0 ? 1.0 : -1.0)));
      } else if (pf_[j] == 0.0) {
        gap = std::max(gap, std::fabs(g[j]));
      } else if (lambda < kHugeLambda) {
        gap = std::max(gap, std::fabs(g[j]) - bound);
      }
    }
    if (family_ != Family::cox) {
      gap = std::max(gap, std::fabs(resid_true_sum()) / static_cast<double>(n_));
    }
    return gap;
  }

  double resid_true_sum() const {
    if (covariance_mode_) return 0.0;  // centered predictors keep the mean at 0
    return resid_true_.sum();
  }

  // Candidate columns for one lambda: forced, currently nonzero, and the
  // sequential strong-rule survivors |g_prev_j| >= (2*lambda - lambda_prev)*pf_j.
  // Misses are caught by the full KKT check and re-entered, so screening
  // never changes the solution, only the sweep cost.
  std::vector<Eigen::Index> build_screen(double lambda, std::vector<char>& mask) const {
    const Eigen::Index p = x_.cols();
    const bool head = lambda >= kHugeLambda;
    mask.assign(static_cast<std::size_t>(p), 0);
    std::vector<Eigen::Index> cols;
    for (Eigen::Index j = 0; j < p; ++j) {
      if (dropped_[static_cast<std::size_t>(j)]) continue;
      bool keep = pf_[j] == 0.0 || c_[j] != 0.0;
      if (!keep && !head) {
        keep = !have_gprev_ ||
               std::fabs(g_prev_[j]) >= (2.0 * lambda - lambda_prev_) * pf_[j];
      }
      if (keep) {
        mask[static_cast<std::size_t>(j)] = 1;
        cols.push_back(j);
      }
    }
    return cols;
  }

  void solve_lambda(double lambda) {
    if (covariance_mode_) {
      if (++since_refresh_ > 20) {
        refresh_q();
        since_refresh_ = 0;
      }
      solve_wls(lambda, all_columns(), kCdTol);
      resid_true_.resize(0);
      return;
    }
    // eta from the current warm-start coefficients.
    Eigen::VectorXd eta = Eigen::VectorXd::Zero(n_);
    double base = a0_;
    for (Eigen::Index j = 0; j < x_.cols(); ++j) {
      if (c_[j] == 0.0) continue;
      const double bj = c_[j] / scale_[j];
      x_.axpy(j, bj, eta);
      base -= bj * mean_[j];
    }
    eta_ = eta.array() + base;

    std::vector<char> mask;
    std::vector<Eigen::Index> screen = build_screen(lambda, mask);
    double inner_tol = family_ == Family::gaussian ? kCdTol : 1e-5;
    for (int outer = 0; outer < kMaxIrls; ++outer) {
      compute_weights();
      refresh_weighted_stats(screen);
      rebuild_residual();
      solve_wls(lambda, screen, inner_tol);
      // Updated eta for the gradient check and the next pass.
      eta_ = z_ - (r_store_.array() + shift_).matrix();
      if (family_ != Family::gaussian) compute_weights_resid_only();
      const Eigen::VectorXd g = true_gradient();
      // Strong-rule misses re-enter the screen and re-solve within the
      // same outer budget, so screening never changes the solution.
      bool enlarged = false;
      for (Eigen::Index j = 0; j < x_.cols(); ++j) {
        if (mask[static_cast<std::size_t>(j)] || dropped_[static_cast<std::size_t>(j)]) continue;
        if (std::fabs(g[j]) > lambda * pf_[j] + kKktTarget) {
          mask[static_cast<std::size_t>(j)] = 1;
          screen.push_back(j);
          enlarged = true;
        }
      }
      const double gap = kkt_gap(g, lambda);
      if (!enlarged && gap <= kKktTarget) {
        g_prev_ = g;
        lambda_prev_ = lambda;
        have_gprev_ = lambda < kHugeLambda;
        return;
      }
      // Tighten the working solve as the true optimum approaches.
      inner_tol = std::max(kCdTol, std::min(inner_tol, gap / 50.0));
    }
    throw FitError("lasso inner solver failed to reach the KKT target");
  }

  // resid_true_ at the current eta without touching the working response.
  void compute_weights_resid_only() {
    if (family_ == Family::binomial) {
      resid_true_.resize(n_);
      for (Eigen::Index i = 0; i < n_; ++i) resid_true_[i] = y_[i] - sigmoid(eta_[i]);
    } else if (family_ == Family::cox) {
      Eigen::VectorXd w, z;
      cox_working(eta_, w, z, resid_true_);
    }
  }

  Family family_;
  const DesignMatrix& x_;
  Eigen::VectorXd pf_;
  Eigen::Index n_;

  Eigen::VectorXd y_, time_;
  Eigen::VectorXi event_;
  std::vector<Eigen::Index> order_;

  Eigen::VectorXd mean_, scale_;
  std::vector<char> dropped_;

  Eigen::VectorXd c_;
  double a0_ = 0.0;

  // naive mode state
  Eigen::VectorXd w_, z_, eta_, r_store_, resid_true_;
  double shift_ = 0.0, swr_ = 0.0, wtotal_ = 0.0;
  Eigen::VectorXd xw_, xww_, v_;

  // sequential strong-rule state: gradient at the previous path point
  Eigen::VectorXd g_prev_;
  double lambda_prev_ = 0.0;
  bool have_gprev_ = false;

  // covariance mode state
  bool covariance_mode_ = false;
  Eigen::MatrixXd u_;
  Eigen::VectorXd xty_, q_;
  double ymean_ = 0.0;
  std::vector<int> gram_index_;
  std::vector<Eigen::VectorXd> gram_;
  int since_refresh_ = 0;
};

Response subset_response(Family family, const Response& resp,
                         const std::vector<Eigen::Index>& rows) {
  Response out;
  const auto m = static_cast<Eigen::Index>(rows.size());
  if (family == Family::cox) {
    out.time.resize(m);
    out.event.resize(m);
    for (Eigen::Index i = 0; i < m; ++i) {
      out.time[i] = resp.time[rows[static_cast<std::size_t>(i)]];
      out.event[i] = resp.event[rows[static_cast<std::size_t>(i)]];
    }
  } else {
    out.y.resize(m);
    for (Eigen::Index i = 0; i < m; ++i) out.y[i] = resp.y[rows[static_cast<std::size_t>(i)]];
  }
  return out;
}

// Deterministic stratified fold assignment: strata are shuffled separately
// and dealt round-robin so binary outcomes and events spread evenly.
std::vector<int> assign_folds(Family family, const Response& resp, Eigen::Index n, int n_folds,
                              std::uint64_t seed) {
  std::vector<std::vector<Eigen::Index>> strata;
  if (family == Family::binomial) {
    strata.resize(2);
    for (Eigen::Index i = 0; i < n; ++i) strata[resp.y[i] == 1.0 ? 1 : 0].push_back(i);
  } else if (family == Family::cox) {
    strata.resize(2);
    for (Eigen::Index i = 0; i < n; ++i) strata[resp.event[i] ? 1 : 0].push_back(i);
  } else {
    strata.resize(1);
    for (Eigen::Index i = 0; i < n; ++i) strata[0].push_back(i);
  }
  Rng rng(derive_seed(seed, hash_label("cv-folds")));
  std::vector<int> fold(static_cast<std::size_t>(n), 0);
  for (auto& s : strata) {
    rng.shuffle(s);
    for (std::size_t k = 0; k < s.size(); ++k) {
      fold[static_cast<std::size_t>(s[k])] = static_cast<int>(k % static_cast<std::size_t>(n_folds));
    }
  }
  return fold;
}

Eigen::VectorXd linear_predictor(const DesignMatrix& x, const Eigen::VectorXd& b, double b0) {
  Eigen::VectorXd lp = Eigen::VectorXd::Constant(x.rows(), b0);
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    if (b[j] != 0.0) x.axpy(j, b[j], lp);
  }
  return lp;
}

}  // namespace

Response Response::gaussian(Eigen::VectorXd y) {
  Response r;
  r.y = std::move(y);
  return r;
}

Response Response::binomial(const Eigen::VectorXi& y) {
  Response r;
  r.y = y.cast<double>();
  return r;
}

Response Response::cox(Eigen::VectorXd time, Eigen::VectorXi event) {
  Response r;
  r.time = std::move(time);
  r.event = std::move(event);
  return r;
}

bool LassoFit::is_selected(const std::string& name) const {
  return std::find(selected.begin(), selected.end(), name) != selected.end();
}

double lasso_lambda_max(Family family, const DesignMatrix& design, const Response& response,
                        const Eigen::VectorXd& penalty_factors) {
  Engine engine(family, design, response, penalty_factors);
  return engine.lambda_max();
}

LassoFit fit_lasso(Family family, const DesignMatrix& design, const Response& response,
                   const Eigen::VectorXd& penalty_factors, const LassoOptions& options) {
  const Eigen::Index n = design.rows();
  const Eigen::Index p = design.cols();
  if (options.n_folds < 0) throw ConfigError("negative fold count");
  if (options.n_folds == 1) throw ConfigError("cross-validation needs at least 2 folds");
  if (options.n_folds > 0 && n < options.n_folds) throw ConfigError("fewer rows than folds");
  if (family == Family::cox && options.n_folds > 0 && response.event.sum() < 2) {
    throw FitError("cox cross-validation requires at least two events");
  }

  Engine engine(family, design, response, penalty_factors);

  bool auto_path = options.user_lambda.size() == 0;
  Eigen::VectorXd lambdas;
  if (auto_path) {
    if (options.path_length < 2) throw ConfigError("path length must be at least 2");
    const double lmax = engine.lambda_max();
    const double ratio = family == Family::cox ? 5e-2 : 1e-3;
    const Eigen::Index L = options.path_length;
    lambdas.resize(L);
    for (Eigen::Index l = 0; l < L; ++l) {
      lambdas[l] = lmax * std::pow(ratio, static_cast<double>(l) / static_cast<double>(L - 1));
    }
  } else {
    lambdas = options.user_lambda;
    for (Eigen::Index l = 0; l < lambdas.size(); ++l) {
      if (lambdas[l] < 0.0) throw ConfigError("negative lambda");
      if (l > 0 && lambdas[l] > lambdas[l - 1]) throw ConfigError("lambda path must decrease");
    }
  }
  const Eigen::Index L = lambdas.size();

  LassoFit fit;
  fit.family = family;
  fit.names = design.names();
  fit.lambda = lambdas;
  fit.penalty_factors = penalty_factors;

  // Cross-validation on the shared path.
  if (options.n_folds > 0) {
    fit.fold_assignments = assign_folds(family, response, n, options.n_folds, options.seed);
    Eigen::VectorXd err_sum = Eigen::VectorXd::Zero(L);
    const double nd = static_cast<double>(n);

    for (int k = 0; k < options.n_folds; ++k) {
      std::vector<Eigen::Index> train, heldout;
      for (Eigen::Index i = 0; i < n; ++i) {
        (fit.fold_assignments[static_cast<std::size_t>(i)] == k ? heldout : train).push_back(i);
      }
      const DesignMatrix x_train = design.select_rows(train);
      const Response r_train = subset_response(family, response, train);
      Engine fold_engine(family, x_train, r_train, penalty_factors);
      Eigen::MatrixXd cstd;
      Eigen::VectorXd a0s;
      fold_engine.solve_path(lambdas, false, cstd, a0s);

      if (family == Family::cox) {
        // Verweij-Van Houwelingen: deviance contribution of the held-out
        // fold is the full-data partial likelihood minus the training one.
        for (Eigen::Index l = 0; l < L; ++l) {
          Eigen::VectorXd b;
          double b0;
          fold_engine.to_original(cstd.col(l), a0s[l], b, b0);
          const Eigen::VectorXd lp_full = linear_predictor(design, b, 0.0);
          const Eigen::VectorXd lp_train = linear_predictor(x_train, b, 0.0);
          const double pl_full = cox_partial_loglik(lp_full, response.time, response.event);
          const double pl_train = cox_partial_loglik(lp_train, r_train.time, r_train.event);
          err_sum[l] += -2.0 * (pl_full - pl_train) / nd;
        }
      } else {
        const DesignMatrix x_ho = design.select_rows(heldout);
        const Response r_ho = subset_response(family, response, heldout);
        for (Eigen::Index l = 0; l < L; ++l) {
          Eigen::VectorXd b;
          double b0;
          fold_engine.to_original(cstd.col(l), a0s[l], b, b0);
          const Eigen::VectorXd lp = linear_predictor(x_ho, b, b0);
          double e = 0.0;
          for (Eigen::Index i = 0; i < lp.size(); ++i) {
            if (family == Family::gaussian) {
              const double d = r_ho.y[i] - lp[i];
              e += d * d;
            } else {
              double prob = sigmoid(lp[i]);
              prob = std::clamp(prob, kProbClip, 1.0 - kProbClip);
              e += -2.0 * (r_ho.y[i] * std::log(prob) + (1.0 - r_ho.y[i]) * std::log1p(-prob));
            }
          }
          err_sum[l] += e / nd;
        }
      }
    }
    fit.cv_error = err_sum;
    Eigen::Index best = 0;
    for (Eigen::Index l = 1; l < L; ++l) {
      if (fit.cv_error[l] < fit.cv_error[best]) best = l;
    }
    fit.chosen_index = static_cast<int>(best);
  } else {
    fit.chosen_index = static_cast<int>(L - 1);
  }

  // Full-data path.
  Eigen::MatrixXd cstd;
  Eigen::VectorXd a0s;
  engine.solve_path(lambdas, auto_path, cstd, a0s);
  fit.coefficients.resize(p, L);
  fit.intercepts.resize(L);
  for (Eigen::Index l = 0; l < L; ++l) {
    Eigen::VectorXd b;
    double b0;
    engine.to_original(cstd.col(l), a0s[l], b, b0);
    fit.coefficients.col(l) = b;
    fit.intercepts[l] = family == Family::cox ? 0.0 : b0;
  }
  fit.chosen_lambda = lambdas[fit.chosen_index];

  const auto& dropped = engine.dropped();
  for (Eigen::Index j = 0; j < p; ++j) {
    if (dropped[static_cast<std::size_t>(j)]) {
      fit.warnings.push_back("constant column dropped: " + fit.names[static_cast<std::size_t>(j)] +
                             (penalty_factors[j] == 0.0 ? " (forced)" : ""));
    }
  }
  for (Eigen::Index j = 0; j < p; ++j) {
    if (dropped[static_cast<std::size_t>(j)]) continue;
    if (fit.coefficients(j, fit.chosen_index) != 0.0 || penalty_factors[j] == 0.0) {
      fit.selected.push_back(fit.names[static_cast<std::size_t>(j)]);
    }
  }
  return fit;
}

}  // namespace hdmi::regfit
