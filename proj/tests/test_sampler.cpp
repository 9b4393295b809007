#include "hintlab/sampler.hpp"

#include <cmath>

#include "doctest.h"
#include "fd_check.hpp"
#include "hintlab/common.hpp"
#include "hintlab/csv.hpp"

using namespace hintlab;
using namespace hintlab::mcmc;

namespace {

class GaussianTarget : public Model {
 public:
  GaussianTarget(Eigen::VectorXd mu, Eigen::MatrixXd cov)
      : mu_(std::move(mu)), prec_(cov.inverse()) {}
  int dim() const override { return static_cast<int>(mu_.size()); }
  double logp_grad(const Eigen::VectorXd& x,
                   Eigen::VectorXd& grad) const override {
    Eigen::VectorXd d = x - mu_;
    grad = -prec_ * d;
    return -0.5 * d.dot(prec_ * d);
  }

 private:
  Eigen::VectorXd mu_;
  Eigen::MatrixXd prec_;
};

GaussianTarget correlated_target() {
  Eigen::VectorXd mu(3);
  mu << -1.0, 0.5, 2.0;
  Eigen::MatrixXd cov(3, 3);
  cov << 1.0, 0.5, 0.2, 0.5, 2.0, -0.3, 0.2, -0.3, 0.5;
  return GaussianTarget(mu, cov);
}

}  // namespace

TEST_CASE("gradient of the test target is consistent") {
  auto t = correlated_target();
  Rng rng(3);
  Eigen::VectorXd x(3);
  for (int i = 0; i < 3; ++i) x[i] = rng.normal();
  CHECK(fd_gradient_gap(t, x) < 1e-6);
}

TEST_CASE("sampler recovers a correlated gaussian") {
  auto t = correlated_target();
  SamplerConfig cfg;
  cfg.chains = 2;
  cfg.warmup = 400;
  cfg.iters = 600;
  cfg.seed = 11;
  auto d = hmc_sample(t, cfg);
  REQUIRE(d.n_chains() == 2);
  REQUIRE(d.n_iters() == 600);
  REQUIRE(d.n_params() == 3);

  double mu_true[3] = {-1.0, 0.5, 2.0};
  double var_true[3] = {1.0, 2.0, 0.5};
  for (int j = 0; j < 3; ++j) {
    CHECK(std::abs(d.mean(j) - mu_true[j]) < 0.2);
    CHECK(d.sd(j) * d.sd(j) / var_true[j] == doctest::Approx(1.0).epsilon(0.3));
    auto r = rhat(d, j);
    REQUIRE(r.defined);
    CHECK(r.value < 1.02);
    auto e = ess(d, j);
    REQUIRE(e.defined);
    CHECK(e.value > 200.0);
  }
  CHECK(d.total_divergences() == 0);
  for (double a : d.accept_rates) {
    CHECK(a > 0.5);
    CHECK(a < 1.0);
  }
}

TEST_CASE("same seed gives bitwise identical draws") {
  auto t = correlated_target();
  SamplerConfig cfg;
  cfg.chains = 3;
  cfg.warmup = 150;
  cfg.iters = 100;
  cfg.seed = 42;
  auto a = hmc_sample(t, cfg);
  auto b = hmc_sample(t, cfg);
  for (int c = 0; c < 3; ++c) CHECK(a.chains[c] == b.chains[c]);
  SamplerConfig cfg2 = cfg;
  cfg2.seed = 43;
  auto c2 = hmc_sample(t, cfg2);
  CHECK(a.chains[0] != c2.chains[0]);
}

TEST_CASE("split rhat flags chains stuck in different places") {
  Rng rng(5);
  Eigen::MatrixXd good(200, 4), bad(200, 4);
  for (int c = 0; c < 4; ++c)
    for (int i = 0; i < 200; ++i) {
      good(i, c) = rng.normal();
      bad(i, c) = rng.normal() + (c == 0 ? 3.0 : 0.0);
    }
  auto rg = split_rhat(good);
  auto rb = split_rhat(bad);
  REQUIRE(rg.defined);
  REQUIRE(rb.defined);
  CHECK(rg.value < 1.05);
  CHECK(rb.value > 1.5);
}

TEST_CASE("rhat matches the direct formula on a tiny example") {
  // two chains of four draws; split into four half chains of two
  Eigen::MatrixXd d(4, 2);
  d << 1.0, 2.0, 3.0, 4.0, 0.0, 1.0, 2.0, 5.0;
  // halves: {1,3}, {0,2}, {2,4}, {1,5}
  double means[4] = {2.0, 1.0, 3.0, 3.0};
  double vars[4] = {2.0, 2.0, 2.0, 8.0};
  double w = (vars[0] + vars[1] + vars[2] + vars[3]) / 4.0;
  double grand = (means[0] + means[1] + means[2] + means[3]) / 4.0;
  double var_means = 0.0;
  for (double m : means) var_means += (m - grand) * (m - grand);
  var_means /= 3.0;
  double n = 2.0;
  double expected = std::sqrt(((n - 1.0) / n * w + var_means) / w);
  auto r = split_rhat(d);
  REQUIRE(r.defined);
  CHECK(r.value == doctest::Approx(expected));
}

TEST_CASE("diagnostics are undefined for constant draws") {
  Eigen::MatrixXd d = Eigen::MatrixXd::Constant(100, 4, 2.5);
  CHECK_FALSE(split_rhat(d).defined);
  CHECK_FALSE(bulk_ess(d).defined);
}

TEST_CASE("ess is near the draw count for independent draws") {
  Rng rng(9);
  Eigen::MatrixXd d(500, 4);
  for (int c = 0; c < 4; ++c)
    for (int i = 0; i < 500; ++i) d(i, c) = rng.normal();
  auto e = bulk_ess(d);
  REQUIRE(e.defined);
  CHECK(e.value > 1000.0);
  CHECK(e.value < 4000.0);
}

TEST_CASE("ess drops for autocorrelated draws") {
  Rng rng(13);
  Eigen::MatrixXd d(500, 4);
  for (int c = 0; c < 4; ++c) {
    double x = 0.0;
    for (int i = 0; i < 500; ++i) {
      x = 0.95 * x + std::sqrt(1 - 0.95 * 0.95) * rng.normal();
      d(i, c) = x;
    }
  }
  auto e = bulk_ess(d);
  REQUIRE(e.defined);
  CHECK(e.value < 400.0);
}

TEST_CASE("hdi picks the shortest covering window") {
  std::vector<double> draws{0.0, 1.0, 2.0, 3.0, 100.0};
  auto [lo, hi] = hdi(draws, 0.8);
  CHECK(lo == doctest::Approx(0.0));
  CHECK(hi == doctest::Approx(3.0));
  // count inside must reach the requested mass
  auto [l2, h2] = hdi(draws, 0.99);
  int inside = 0;
  for (double v : draws)
    if (v >= l2 && v <= h2) ++inside;
  CHECK(inside == 5);
  CHECK_THROWS_AS(hdi({}, 0.9), Error);
}

TEST_CASE("draw export includes chain and iteration columns") {
  auto t = correlated_target();
  SamplerConfig cfg;
  cfg.chains = 2;
  cfg.warmup = 100;
  cfg.iters = 20;
  cfg.seed = 3;
  auto d = hmc_sample(t, cfg);
  std::string path = "/tmp/hintlab_test_draws.csv";
  write_draws_csv(path, d);
  auto back = csv::read_file(path);
  CHECK(back.header.size() == 5);
  CHECK(back.header[0] == "chain");
  CHECK(back.rows.size() == 40);
  CHECK(csv::parse_double(back.rows[0][2], "p0") ==
        doctest::Approx(d.chains[0](0, 0)));
}
