#include "hintlab/stats.hpp"

#include <algorithm>
#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <cmath>

#include "hintlab/common.hpp"

namespace hintlab::stats {

double mean(std::span<const double> x) {
  if (x.empty()) throw Error("mean: empty input");
  double s = 0.0;
  for (double v : x) s += v;
  return s / static_cast<double>(x.size());
}

double variance(std::span<const double> x) {
  if (x.size() < 2) throw Error("variance: need at least 2 values");
  double m = mean(x);
  double s = 0.0;
  for (double v : x) s += (v - m) * (v - m);
  return s / static_cast<double>(x.size() - 1);
}

double weighted_mean(std::span<const double> x, std::span<const double> w) {
  if (x.size() != w.size() || x.empty())
    throw Error("weighted_mean: size mismatch or empty");
  double sw = 0.0, sxw = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sw += w[i];
    sxw += w[i] * x[i];
  }
  if (sw <= 0.0) throw Error("weighted_mean: nonpositive total weight");
  return sxw / sw;
}

double weighted_variance(std::span<const double> x, std::span<const double> w) {
  double m = weighted_mean(x, w);
  double sw = 0.0, s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sw += w[i];
    s += w[i] * (x[i] - m) * (x[i] - m);
  }
  if (sw <= 1.0) throw Error("weighted_variance: total weight must exceed 1");
  return s / (sw - 1.0);
}

double quantile(std::vector<double> x, double p) {
  if (x.empty()) throw Error("quantile: empty input");
  if (p < 0.0 || p > 1.0) throw Error("quantile: p outside [0,1]");
  std::sort(x.begin(), x.end());
  const double h = (static_cast<double>(x.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, x.size() - 1);
  return x[lo] + (h - std::floor(h)) * (x[hi] - x[lo]);
}

double ks_uniform(std::vector<double> p) {
  if (p.empty()) throw Error("ks_uniform: empty input");
  std::sort(p.begin(), p.end());
  const double n = static_cast<double>(p.size());
  double d = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double cdf = p[i];
    d = std::max(d, std::abs((static_cast<double>(i) + 1.0) / n - cdf));
    d = std::max(d, std::abs(cdf - static_cast<double>(i) / n));
  }
  return d;
}

double normal_cdf(double x) {
  static const boost::math::normal_distribution<double> nd(0.0, 1.0);
  return boost::math::cdf(nd, x);
}

double normal_quantile(double p) {
  static const boost::math::normal_distribution<double> nd(0.0, 1.0);
  return boost::math::quantile(nd, p);
}

double chisq_sf(double x, double df) {
  if (x <= 0.0) return 1.0;
  boost::math::chi_squared_distribution<double> d(df);
  return boost::math::cdf(boost::math::complement(d, x));
}

double student_t_quantile(double p, double df) {
  boost::math::students_t_distribution<double> d(df);
  return boost::math::quantile(d, p);
}

OlsFit ols(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
  const int n = static_cast<int>(X.rows());
  const int p = static_cast<int>(X.cols());
  if (n != y.size()) throw Error("ols: row mismatch");
  if (n <= p) throw Error("ols: need more rows than columns");

  Eigen::MatrixXd xtx = X.transpose() * X;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(xtx);
  Eigen::VectorXd d = ldlt.vectorD();
  if (ldlt.info() != Eigen::Success || d.maxCoeff() <= 0.0 ||
      d.minCoeff() <= d.maxCoeff() * 1e-12)
    throw Error("ols: design matrix is rank deficient");

  OlsFit fit;
  fit.beta = ldlt.solve(X.transpose() * y);
  fit.residuals = y - X * fit.beta;
  fit.xtx_inv = ldlt.solve(Eigen::MatrixXd::Identity(p, p));
  fit.hat_diag.resize(n);
  for (int i = 0; i < n; ++i)
    fit.hat_diag[i] = X.row(i) * fit.xtx_inv * X.row(i).transpose();
  fit.df_resid = n - p;
  fit.sigma2 = fit.residuals.squaredNorm() / fit.df_resid;
  return fit;
}

OlsFit wls(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
           const Eigen::VectorXd& w) {
  if (w.size() != y.size()) throw Error("wls: weight length mismatch");
  if ((w.array() <= 0.0).any()) throw Error("wls: weights must be positive");
  Eigen::VectorXd sw = w.array().sqrt();
  Eigen::MatrixXd Xw = sw.asDiagonal() * X;
  Eigen::VectorXd yw = sw.asDiagonal() * y;
  OlsFit fit = ols(Xw, yw);
  // report residuals on the original scale
  fit.residuals = y - X * fit.beta;
  return fit;
}

MinimizeResult nelder_mead(
    const std::function<double(const Eigen::VectorXd&)>& f,
    const Eigen::VectorXd& x0, double step, double tol, int max_iter) {
  const int d = static_cast<int>(x0.size());
  if (d < 1) throw Error("nelder_mead: empty starting point");
  std::vector<Eigen::VectorXd> pts(d + 1, x0);
  std::vector<double> vals(d + 1);
  for (int j = 0; j < d; ++j) pts[j + 1][j] += step;
  for (int j = 0; j <= d; ++j) vals[j] = f(pts[j]);

  MinimizeResult res;
  auto order = [&]() {
    std::vector<int> idx(d + 1);
    for (int j = 0; j <= d; ++j) idx[j] = j;
    std::sort(idx.begin(), idx.end(),
              [&](int a, int b) { return vals[a] < vals[b]; });
    std::vector<Eigen::VectorXd> p2;
    std::vector<double> v2;
    for (int j : idx) {
      p2.push_back(pts[j]);
      v2.push_back(vals[j]);
    }
    pts = std::move(p2);
    vals = std::move(v2);
  };

  for (int it = 0; it < max_iter; ++it) {
    order();
    res.iterations = it;
    if (vals[d] - vals[0] < tol * (1.0 + std::abs(vals[0]))) {
      res.converged = true;
      break;
    }
    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(d);
    for (int j = 0; j < d; ++j) centroid += pts[j];
    centroid /= d;

    Eigen::VectorXd xr = centroid + (centroid - pts[d]);
    double fr = f(xr);
    if (fr < vals[0]) {
      Eigen::VectorXd xe = centroid + 2.0 * (centroid - pts[d]);
      double fe = f(xe);
      if (fe < fr) {
        pts[d] = xe;
        vals[d] = fe;
      } else {
        pts[d] = xr;
        vals[d] = fr;
      }
    } else if (fr < vals[d - 1]) {
      pts[d] = xr;
      vals[d] = fr;
    } else {
      Eigen::VectorXd xc = centroid + 0.5 * (pts[d] - centroid);
      double fc = f(xc);
      if (fc < vals[d]) {
        pts[d] = xc;
        vals[d] = fc;
      } else {
        for (int j = 1; j <= d; ++j) {
          pts[j] = pts[0] + 0.5 * (pts[j] - pts[0]);
          vals[j] = f(pts[j]);
        }
      }
    }
  }
  order();
  res.x = pts[0];
  res.value = vals[0];
  return res;
}

}  // namespace hintlab::stats
