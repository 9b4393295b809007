#include "hintlab/propensity.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "hintlab/common.hpp"
#include "hintlab/stats.hpp"

namespace hintlab::propensity {

namespace {

// truncated-power pieces of the natural cubic spline (boundary-constrained
// cubic terms divided out so the tails stay linear)
double cube_plus(double v) { return v > 0.0 ? v * v * v : 0.0; }

double d_term(double x, double knot, double last) {
  return (cube_plus(x - knot) - cube_plus(x - last)) / (last - knot);
}

}  // namespace

SplineBasis natural_spline_knots(const Eigen::VectorXd& x, int df) {
  if (df < 1) throw Error("natural spline: df must be at least 1");
  std::vector<double> vals(x.data(), x.data() + x.size());
  std::sort(vals.begin(), vals.end());
  vals.erase(std::unique(vals.begin(), vals.end()), vals.end());
  if (static_cast<int>(vals.size()) < df + 1)
    throw Error("natural spline: need more distinct values than knots");

  SplineBasis basis;
  basis.knots.resize(df + 1);
  std::vector<double> sorted(x.data(), x.data() + x.size());
  std::sort(sorted.begin(), sorted.end());
  basis.knots[0] = sorted.front();
  for (int k = 1; k < df; ++k)
    basis.knots[k] =
        stats::quantile(sorted, static_cast<double>(k) / df);
  basis.knots[df] = sorted.back();
  for (int k = 0; k < df; ++k)
    if (!(basis.knots[k + 1] > basis.knots[k]))
      throw Error("natural spline: quantile knots are not distinct");
  return basis;
}

Eigen::MatrixXd SplineBasis::evaluate(const Eigen::VectorXd& x) const {
  const int k = static_cast<int>(knots.size());
  if (k < 2) throw Error("natural spline: basis has no knots");
  const int cols = k - 1;
  Eigen::MatrixXd out(x.size(), cols);
  const double last = knots[k - 1];
  const double second_last = knots[k - 2];
  for (int i = 0; i < x.size(); ++i) {
    out(i, 0) = x[i];
    for (int j = 1; j < cols; ++j)
      out(i, j) =
          d_term(x[i], knots[j - 1], last) - d_term(x[i], second_last, last);
  }
  return out;
}

Eigen::MatrixXd natural_spline_basis(const Eigen::VectorXd& x, int df) {
  return natural_spline_knots(x, df).evaluate(x);
}

namespace {

struct GroupIndex {
  std::vector<std::vector<int>> per_student;  // global RE index per level
  std::vector<int> level_of;                  // level of each RE coefficient
  std::vector<std::vector<std::string>> labels;
  int q = 0;
};

GroupIndex build_groups(const std::vector<std::vector<std::string>>& groups,
                        int n) {
  GroupIndex gi;
  const int L = static_cast<int>(groups.size());
  gi.per_student.assign(n, std::vector<int>(L, -1));
  gi.labels.resize(L);
  for (int l = 0; l < L; ++l) {
    if (static_cast<int>(groups[l].size()) != n)
      throw Error("fit_mlogit: group labels do not match the sample size");
    std::map<std::string, int> idx;
    for (int i = 0; i < n; ++i) {
      auto [it, fresh] = idx.try_emplace(groups[l][i], -1);
      if (fresh) {
        it->second = gi.q++;
        gi.labels[l].push_back(groups[l][i]);
        gi.level_of.push_back(l);
      }
      gi.per_student[i][l] = it->second;
    }
  }
  return gi;
}

struct InnerFit {
  Eigen::VectorXd beta;
  Eigen::VectorXd b;
  Eigen::VectorXd eta;
  double objective = 0.0;     // penalized log-likelihood at the mode
  double log_marginal = 0.0;  // Laplace approximation
  bool converged = false;
};

double penalized_loglik(const std::vector<int>& H, const Eigen::VectorXd& eta,
                        const Eigen::VectorXd& b,
                        const Eigen::VectorXd& pen_b,
                        const Eigen::VectorXd& beta, double ridge) {
  double lp = 0.0;
  for (int i = 0; i < eta.size(); ++i)
    lp += H[i] * eta[i] - log1p_exp(eta[i]);
  lp -= 0.5 * b.cwiseProduct(pen_b).dot(b);
  lp -= 0.5 * ridge * beta.squaredNorm();
  return lp;
}

// Newton steps on the joint (beta, b) penalized likelihood with the normal
// equations assembled directly; falls back to step halving when a full step
// overshoots
InnerFit inner_fit(const Eigen::MatrixXd& X, const std::vector<int>& H,
                   const GroupIndex& gi, const Eigen::VectorXd& sigma2,
                   double ridge, const MlogitOptions& opts) {
  const int n = static_cast<int>(X.rows());
  const int p = static_cast<int>(X.cols());
  const int q = gi.q;
  const int L = static_cast<int>(gi.labels.size());
  Eigen::VectorXd pen_b(q);
  for (int j = 0; j < q; ++j) pen_b[j] = 1.0 / sigma2[gi.level_of[j]];

  InnerFit fit;
  fit.beta = Eigen::VectorXd::Zero(p);
  fit.b = Eigen::VectorXd::Zero(q);
  fit.eta = Eigen::VectorXd::Zero(n);

  auto linear_predictor = [&](const Eigen::VectorXd& beta,
                              const Eigen::VectorXd& b) {
    Eigen::VectorXd eta = X * beta;
    for (int i = 0; i < n; ++i)
      for (int l = 0; l < L; ++l) eta[i] += b[gi.per_student[i][l]];
    return eta;
  };

  double cur = penalized_loglik(H, fit.eta, fit.b, pen_b, fit.beta, ridge);
  Eigen::MatrixXd hess(p + q, p + q);
  Eigen::VectorXd grad(p + q);
  for (int iter = 0; iter < opts.max_inner; ++iter) {
    Eigen::VectorXd pr(n), w(n);
    for (int i = 0; i < n; ++i) {
      pr[i] = inv_logit(fit.eta[i]);
      w[i] = std::max(pr[i] * (1.0 - pr[i]), 1e-10);
    }
    hess.setZero();
    grad.setZero();
    for (int i = 0; i < n; ++i) {
      double r = H[i] - pr[i];
      grad.head(p) += r * X.row(i).transpose();
      for (int l = 0; l < L; ++l) grad[p + gi.per_student[i][l]] += r;

      hess.topLeftCorner(p, p) +=
          w[i] * X.row(i).transpose() * X.row(i);
      for (int l = 0; l < L; ++l) {
        int j = p + gi.per_student[i][l];
        hess.col(j).head(p) += w[i] * X.row(i).transpose();
        for (int m = 0; m < L; ++m)
          hess(j, p + gi.per_student[i][m]) += w[i];
      }
    }
    hess.bottomLeftCorner(q, p) = hess.topRightCorner(p, q).transpose();
    grad.head(p) -= ridge * fit.beta;
    grad.tail(q) -= pen_b.cwiseProduct(fit.b);
    hess.topLeftCorner(p, p).diagonal().array() += ridge;
    hess.bottomRightCorner(q, q).diagonal() += pen_b;

    if (grad.cwiseAbs().maxCoeff() < opts.inner_tol) {
      fit.converged = true;
      break;
    }
    Eigen::VectorXd step = hess.ldlt().solve(grad);
    // Newton decrement: remaining improvement is below noise, stop here
    double decrement = grad.dot(step);
    if (decrement < 1e-17 * (1.0 + std::abs(cur))) {
      fit.converged = true;
      break;
    }
    double scale = 1.0;
    bool moved = false;
    for (int half = 0; half < 30 && !moved; ++half) {
      Eigen::VectorXd beta_try = fit.beta + scale * step.head(p);
      Eigen::VectorXd b_try = fit.b + scale * step.tail(q);
      Eigen::VectorXd eta_try = linear_predictor(beta_try, b_try);
      double val = penalized_loglik(H, eta_try, b_try, pen_b, beta_try, ridge);
      if (val > cur - 1e-12) {
        fit.beta = beta_try;
        fit.b = b_try;
        fit.eta = eta_try;
        cur = val;
        moved = true;
      }
      scale *= 0.5;
    }
    if (!moved) {
      fit.converged = grad.cwiseAbs().maxCoeff() < 1e-6;
      break;
    }
  }
  fit.objective = cur;

  // Laplace correction: log det of the b-block curvature and the prior
  // normalizer
  Eigen::MatrixXd qmat = Eigen::MatrixXd::Zero(q, q);
  for (int i = 0; i < n; ++i) {
    double pr = inv_logit(fit.eta[i]);
    double w = std::max(pr * (1.0 - pr), 1e-10);
    for (int l = 0; l < L; ++l)
      for (int m = 0; m < L; ++m)
        qmat(gi.per_student[i][l], gi.per_student[i][m]) += w;
  }
  qmat.diagonal() += pen_b;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(qmat);
  double logdet_q = ldlt.vectorD().array().log().sum();
  double logdet_d = 0.0;
  for (int j = 0; j < q; ++j) logdet_d += std::log(sigma2[gi.level_of[j]]);
  fit.log_marginal = cur - 0.5 * logdet_d - 0.5 * logdet_q;
  return fit;
}

bool separated(const InnerFit& fit) {
  return !fit.converged || fit.beta.cwiseAbs().maxCoeff() > 12.0 ||
         !fit.beta.allFinite();
}

}  // namespace

PropensityFit fit_mlogit(const Eigen::MatrixXd& X,
                         const std::vector<std::string>& coef_names,
                         const std::vector<int>& H,
                         const std::vector<std::vector<std::string>>& groups,
                         const std::vector<std::string>& level_names,
                         const MlogitOptions& opts) {
  const int n = static_cast<int>(X.rows());
  if (n == 0) throw Error("fit_mlogit: empty sample");
  if (static_cast<int>(H.size()) != n)
    throw Error("fit_mlogit: outcome length does not match the design");
  if (static_cast<int>(coef_names.size()) != X.cols())
    throw Error("fit_mlogit: coefficient names do not match the design");
  if (groups.size() != level_names.size())
    throw Error("fit_mlogit: level names do not match the grouping factors");
  for (int h : H)
    if (h != 0 && h != 1) throw Error("fit_mlogit: outcome must be 0/1");
  int ones = 0;
  for (int h : H) ones += h;
  if (ones == 0 || ones == n)
    throw Error("fit_mlogit: outcome is constant (complete separation)");

  GroupIndex gi = build_groups(groups, n);
  const int L = static_cast<int>(groups.size());

  // outer search over log standard deviations of the variance components
  double ridge = 0.0;
  bool ridged = false;
  auto criterion = [&](const Eigen::VectorXd& log_sd) {
    Eigen::VectorXd sigma2(L);
    for (int l = 0; l < L; ++l) {
      double ls = std::clamp(log_sd[l], -6.0, 3.0);
      sigma2[l] = std::exp(2.0 * ls);
    }
    return -inner_fit(X, H, gi, sigma2, ridge, opts).log_marginal;
  };

  // a quick separation probe with diffuse variance components
  {
    Eigen::VectorXd sigma2 = Eigen::VectorXd::Constant(std::max(L, 1), 1.0);
    InnerFit probe = inner_fit(X, H, gi, sigma2, 0.0, opts);
    if (separated(probe)) {
      ridge = opts.ridge;
      ridged = true;
    }
  }

  stats::MinimizeResult opt;
  if (L > 0) {
    Eigen::VectorXd start = Eigen::VectorXd::Constant(L, std::log(0.5));
    opt = stats::nelder_mead(criterion, start, 0.7, opts.outer_tol,
                             opts.max_outer);
    if (!opt.converged)
      throw Error("fit_mlogit: variance-component search did not converge");
  } else {
    opt.x = Eigen::VectorXd();
    opt.converged = true;
  }

  Eigen::VectorXd sigma2(L);
  for (int l = 0; l < L; ++l) {
    sigma2[l] = std::exp(2.0 * std::clamp(opt.x[l], -6.0, 3.0));
    // the criterion is flat as a component approaches zero; snap it there so
    // the fit collapses to the fixed-effects-only model exactly
    if (sigma2[l] < 1e-4) sigma2[l] = 1e-8;
  }
  InnerFit inner = inner_fit(X, H, gi, sigma2, ridge, opts);
  if (separated(inner) && !ridged) {
    ridge = opts.ridge;
    ridged = true;
    inner = inner_fit(X, H, gi, sigma2, ridge, opts);
  }
  if (!inner.converged)
    throw Error("fit_mlogit: inner optimization did not converge");

  PropensityFit fit;
  fit.coef_names = coef_names;
  fit.beta = inner.beta;
  fit.logit_pi = inner.eta;
  fit.log_marginal = inner.log_marginal;
  fit.outer_iterations = opt.iterations;
  fit.ridged = ridged;
  if (ridged)
    fit.warning = "separation detected; coefficients fit with a ridge penalty";
  fit.levels.resize(L);
  for (int l = 0; l < L; ++l) {
    fit.levels[l].name = level_names[l];
    fit.levels[l].labels = gi.labels[l];
    fit.levels[l].sigma2 = sigma2[l];
  }
  std::vector<int> offset(L, 0);
  for (int l = 0; l < L; ++l)
    fit.levels[l].values.resize(gi.labels[l].size());
  for (int j = 0; j < gi.q; ++j) {
    int l = gi.level_of[j];
    fit.levels[l].values[offset[l]++] = inner.b[j];
  }
  return fit;
}

Prediction predict_logit(const PropensityFit& fit, const Eigen::VectorXd& x,
                         const std::vector<std::string>& group_labels) {
  if (x.size() != fit.beta.size())
    throw Error("predict_logit: covariate length does not match the fit");
  if (group_labels.size() != fit.levels.size())
    throw Error("predict_logit: group labels do not match the fit levels");
  Prediction out;
  out.logit_pi = fit.beta.dot(x);
  for (std::size_t l = 0; l < fit.levels.size(); ++l) {
    const auto& lev = fit.levels[l];
    auto it = std::find(lev.labels.begin(), lev.labels.end(), group_labels[l]);
    if (it == lev.labels.end()) {
      out.unseen_group = true;
    } else {
      out.logit_pi += lev.values[it - lev.labels.begin()];
    }
  }
  return out;
}

double mlogit_gradient_norm(const Eigen::MatrixXd& X, const std::vector<int>& H,
                            const std::vector<std::vector<std::string>>& groups,
                            const PropensityFit& fit) {
  const int n = static_cast<int>(X.rows());
  const int L = static_cast<int>(groups.size());
  Eigen::VectorXd grad_beta = Eigen::VectorXd::Zero(fit.beta.size());
  std::vector<Eigen::VectorXd> grad_b(L);
  std::vector<std::map<std::string, int>> idx(L);
  for (int l = 0; l < L; ++l) {
    grad_b[l] = Eigen::VectorXd::Zero(fit.levels[l].labels.size());
    for (std::size_t j = 0; j < fit.levels[l].labels.size(); ++j)
      idx[l][fit.levels[l].labels[j]] = static_cast<int>(j);
  }
  double ridge = fit.ridged ? MlogitOptions{}.ridge : 0.0;
  for (int i = 0; i < n; ++i) {
    double eta = fit.beta.dot(X.row(i));
    std::vector<int> at(L);
    for (int l = 0; l < L; ++l) {
      at[l] = idx[l].at(groups[l][i]);
      eta += fit.levels[l].values[at[l]];
    }
    double r = H[i] - inv_logit(eta);
    grad_beta += r * X.row(i).transpose();
    for (int l = 0; l < L; ++l) grad_b[l][at[l]] += r;
  }
  grad_beta -= ridge * fit.beta;
  double worst = grad_beta.cwiseAbs().maxCoeff();
  for (int l = 0; l < L; ++l) {
    grad_b[l] -= fit.levels[l].values / fit.levels[l].sigma2;
    worst = std::max(worst, grad_b[l].cwiseAbs().maxCoeff());
  }
  return worst;
}

}  // namespace hintlab::propensity
