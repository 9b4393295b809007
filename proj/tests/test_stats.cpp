#include "hintlab/stats.hpp"

#include <cmath>

#include "doctest.h"
#include "hintlab/common.hpp"

using namespace hintlab;

TEST_CASE("mean and variance match direct sums") {
  std::vector<double> x{1.0, 2.0, 4.0, 8.0};
  CHECK(stats::mean(x) == doctest::Approx(15.0 / 4.0));
  double m = 15.0 / 4.0;
  double v = ((1 - m) * (1 - m) + (2 - m) * (2 - m) + (4 - m) * (4 - m) +
              (8 - m) * (8 - m)) /
             3.0;
  CHECK(stats::variance(x) == doctest::Approx(v));
}

TEST_CASE("weighted mean/variance reduce to frequency expansion") {
  std::vector<double> x{2.0, 5.0, 7.0};
  std::vector<double> w{3.0, 1.0, 2.0};
  // expand each value w_i times and use the plain estimators
  std::vector<double> expanded{2, 2, 2, 5, 7, 7};
  CHECK(stats::weighted_mean(x, w) == doctest::Approx(stats::mean(expanded)));
  CHECK(stats::weighted_variance(x, w) ==
        doctest::Approx(stats::variance(expanded)));
}

TEST_CASE("quantile interpolates order statistics") {
  std::vector<double> x{10.0, 20.0, 30.0, 40.0};
  CHECK(stats::quantile(x, 0.0) == doctest::Approx(10.0));
  CHECK(stats::quantile(x, 1.0) == doctest::Approx(40.0));
  CHECK(stats::quantile(x, 0.5) == doctest::Approx(25.0));
  // h = p*(n-1): p=0.25 -> h=0.75 -> 10 + 0.75*10
  CHECK(stats::quantile(x, 0.25) == doctest::Approx(17.5));
  // permutation invariance
  std::vector<double> shuffled{40.0, 10.0, 30.0, 20.0};
  CHECK(stats::quantile(shuffled, 0.3) == doctest::Approx(stats::quantile(x, 0.3)));
}

TEST_CASE("ks distance against hand-computed case") {
  // sorted sample {0.1, 0.4, 0.8}: sup gap at i=2: max(|2/3-0.4|, |1/3-0.4|)
  std::vector<double> p{0.8, 0.1, 0.4};
  double d = stats::ks_uniform(p);
  CHECK(d == doctest::Approx(4.0 / 15.0));  // |2/3 - 0.4|
}

TEST_CASE("distribution helpers agree with known values") {
  CHECK(stats::normal_cdf(0.0) == doctest::Approx(0.5));
  CHECK(stats::normal_cdf(1.959963984540054) == doctest::Approx(0.975));
  CHECK(stats::normal_quantile(0.975) == doctest::Approx(1.959963984540054));
  CHECK(stats::normal_quantile(stats::normal_cdf(0.7)) == doctest::Approx(0.7));
  // chi^2(1) upper tail at z^2 equals two-sided normal p-value
  double z = 1.3;
  CHECK(stats::chisq_sf(z * z, 1.0) ==
        doctest::Approx(2.0 * (1.0 - stats::normal_cdf(z))));
  CHECK(stats::student_t_quantile(0.975, 10.0) == doctest::Approx(2.2281388519649385));
}

TEST_CASE("ols solves a tiny system exactly") {
  // y = 1 + 2 x fit through three points with one outlier-free config
  Eigen::MatrixXd X(3, 2);
  X << 1, 0, 1, 1, 1, 2;
  Eigen::VectorXd y(3);
  y << 1.0, 3.0, 5.0;
  auto fit = stats::ols(X, y);
  CHECK(fit.beta[0] == doctest::Approx(1.0));
  CHECK(fit.beta[1] == doctest::Approx(2.0));
  CHECK(fit.residuals.norm() == doctest::Approx(0.0));
  CHECK(fit.df_resid == 1);
}

TEST_CASE("ols byproducts match explicit matrix algebra") {
  Rng rng(7);
  int n = 40, p = 3;
  Eigen::MatrixXd X(n, p);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    X(i, 0) = 1.0;
    X(i, 1) = rng.normal();
    X(i, 2) = rng.uniform();
    y[i] = 0.5 + X(i, 1) - 2.0 * X(i, 2) + rng.normal();
  }
  auto fit = stats::ols(X, y);
  Eigen::MatrixXd xtx_inv = (X.transpose() * X).inverse();
  Eigen::VectorXd beta = xtx_inv * X.transpose() * y;
  CHECK((fit.beta - beta).norm() < 1e-10);
  CHECK((fit.xtx_inv - xtx_inv).norm() < 1e-10);
  Eigen::MatrixXd H = X * xtx_inv * X.transpose();
  for (int i = 0; i < n; ++i)
    CHECK(fit.hat_diag[i] == doctest::Approx(H(i, i)));
  Eigen::VectorXd resid = y - X * beta;
  CHECK(fit.sigma2 == doctest::Approx(resid.squaredNorm() / (n - p)));
}

TEST_CASE("wls equals ols on replicated rows for integer weights") {
  Eigen::MatrixXd X(3, 2);
  X << 1, 0, 1, 1, 1, 3;
  Eigen::VectorXd y(3);
  y << 0.0, 1.5, 2.0;
  Eigen::VectorXd w(3);
  w << 2, 1, 3;
  auto wfit = stats::wls(X, y, w);

  Eigen::MatrixXd Xe(6, 2);
  Eigen::VectorXd ye(6);
  int r = 0;
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < w[i]; ++k) {
      Xe.row(r) = X.row(i);
      ye[r] = y[i];
      ++r;
    }
  auto ofit = stats::ols(Xe, ye);
  CHECK((wfit.beta - ofit.beta).norm() < 1e-12);
}

TEST_CASE("ols rejects rank-deficient design") {
  Eigen::MatrixXd X(4, 2);
  X << 1, 2, 1, 2, 1, 2, 1, 2;  // second column collinear with intercept
  Eigen::VectorXd y(4);
  y << 1, 2, 3, 4;
  CHECK_THROWS_AS(stats::ols(X, y), Error);
}
