#pragma once

#include <Eigen/Dense>

namespace hdmi::stats {

double normal_cdf(double x);

// Inverse standard normal CDF, accurate to ~1e-15 (rational approximation
// polished with one Halley step).
double normal_quantile(double p);

// Regularized incomplete beta I_x(a, b).
double incomplete_beta(double a, double b, double x);

double student_t_cdf(double t, double df);

// Inverse Student-t CDF; df may be non-integral (Rubin degrees of freedom).
// df = +inf falls back to the normal quantile.
double student_t_quantile(double p, double df);

// Sample mean / variance (divisor n-1) helpers used across modules.
double mean(const Eigen::Ref<const Eigen::VectorXd>& v);
double sample_variance(const Eigen::Ref<const Eigen::VectorXd>& v);
double sample_sd(const Eigen::Ref<const Eigen::VectorXd>& v);
double pearson_correlation(const Eigen::Ref<const Eigen::VectorXd>& a,
                           const Eigen::Ref<const Eigen::VectorXd>& b);

}  // namespace hdmi::stats
