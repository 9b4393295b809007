#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace hintlab::propensity {

// Natural cubic spline: boundary knots at the data range, interior knots at
// equally spaced quantiles, linear beyond the boundaries. df columns, no
// intercept column.
struct SplineBasis {
  Eigen::VectorXd knots;  // ascending, boundaries included, df+1 of them
  int df() const { return static_cast<int>(knots.size()) - 1; }
  Eigen::MatrixXd evaluate(const Eigen::VectorXd& x) const;
};

SplineBasis natural_spline_knots(const Eigen::VectorXd& x, int df);
Eigen::MatrixXd natural_spline_basis(const Eigen::VectorXd& x, int df);

// Logistic regression with independent random intercepts for each grouping
// level, estimated by Laplace-approximated maximum likelihood: penalized
// IRLS over (beta, b) inside, simplex search over the variance components
// outside.
struct MlogitLevel {
  std::string name;
  std::vector<std::string> labels;  // group labels, fit order
  Eigen::VectorXd values;           // predicted random intercepts
  double sigma2 = 0.0;
};

struct PropensityFit {
  std::vector<std::string> coef_names;
  Eigen::VectorXd beta;
  std::vector<MlogitLevel> levels;
  Eigen::VectorXd logit_pi;  // per fitted student
  double log_marginal = 0.0;
  int outer_iterations = 0;
  bool ridged = false;       // separation fallback applied
  std::string warning;

  // spline definition used for the pretest column block, when one was used
  SplineBasis spline;
  std::string spline_var;
};

struct MlogitOptions {
  int max_outer = 400;
  int max_inner = 60;
  double outer_tol = 1e-8;
  double inner_tol = 1e-10;
  double ridge = 1e-2;       // separation fallback penalty on beta
};

PropensityFit fit_mlogit(const Eigen::MatrixXd& X,
                         const std::vector<std::string>& coef_names,
                         const std::vector<int>& H,
                         const std::vector<std::vector<std::string>>& groups,
                         const std::vector<std::string>& level_names,
                         const MlogitOptions& opts = {});

struct Prediction {
  double logit_pi = 0.0;
  bool unseen_group = false;  // some level fell back to a zero intercept
};

Prediction predict_logit(const PropensityFit& fit, const Eigen::VectorXd& x,
                         const std::vector<std::string>& group_labels);

// max absolute component of the joint penalized-objective gradient over
// (beta, b) at the reported optimum; near zero when the inner step converged
double mlogit_gradient_norm(const Eigen::MatrixXd& X, const std::vector<int>& H,
                            const std::vector<std::vector<std::string>>& groups,
                            const PropensityFit& fit);

}  // namespace hintlab::propensity
