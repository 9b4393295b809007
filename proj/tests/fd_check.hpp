#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "hintlab/sampler.hpp"

// max over coordinates of |analytic - central difference| scaled by
// max(1, |analytic|)
inline double fd_gradient_gap(const hintlab::mcmc::Model& m,
                              const Eigen::VectorXd& x, double h = 1e-5) {
  Eigen::VectorXd g(x.size()), tmp(x.size());
  m.logp_grad(x, g);
  double worst = 0.0;
  for (int i = 0; i < x.size(); ++i) {
    Eigen::VectorXd xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    double fp = m.logp_grad(xp, tmp);
    double fm = m.logp_grad(xm, tmp);
    double fd = (fp - fm) / (2.0 * h);
    double gap = std::abs(fd - g[i]) / std::max(1.0, std::abs(g[i]));
    worst = std::max(worst, gap);
  }
  return worst;
}
