#pragma once

#include <Eigen/Dense>
#include <functional>
#include <optional>
#include <span>
#include <vector>

namespace hintlab::stats {

double mean(std::span<const double> x);
double variance(std::span<const double> x);  // sample variance, n-1
double weighted_mean(std::span<const double> x, std::span<const double> w);
// frequency-weighted sample variance with (sum w - 1) denominator
double weighted_variance(std::span<const double> x, std::span<const double> w);

// type-7 empirical quantile (linear interpolation between order statistics)
double quantile(std::vector<double> x, double p);

// Kolmogorov-Smirnov distance between a sample and U(0,1)
double ks_uniform(std::vector<double> p);

double normal_cdf(double x);
double normal_quantile(double p);
double chisq_sf(double x, double df);  // upper tail
double student_t_quantile(double p, double df);

// Ordinary least squares with enough byproducts for the sandwich estimators.
struct OlsFit {
  Eigen::VectorXd beta;
  Eigen::VectorXd residuals;
  Eigen::VectorXd hat_diag;      // leverage h_ii
  Eigen::MatrixXd xtx_inv;
  double sigma2 = 0.0;           // SSR / (n - p)
  int df_resid = 0;
};

OlsFit ols(const Eigen::MatrixXd& X, const Eigen::VectorXd& y);

// weighted least squares via the sqrt(w)-transformed problem
OlsFit wls(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
           const Eigen::VectorXd& w);

struct MinimizeResult {
  Eigen::VectorXd x;
  double value = 0.0;
  int iterations = 0;
  bool converged = false;
};

// derivative-free Nelder-Mead simplex minimizer; stops when the spread of
// simplex values falls under tol * (1 + |best|)
MinimizeResult nelder_mead(const std::function<double(const Eigen::VectorXd&)>& f,
                           const Eigen::VectorXd& x0, double step, double tol,
                           int max_iter);

}  // namespace hintlab::stats
