#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "hintlab/common.hpp"

namespace hintlab::mcmc {

// Target density over unconstrained coordinates. Implementations fold their
// own constraint transforms (log, logit, ...) and Jacobian terms into
// logp_grad, and expose the constrained view through constrain().
class Model {
 public:
  virtual ~Model() = default;
  virtual int dim() const = 0;
  virtual double logp_grad(const Eigen::VectorXd& x,
                           Eigen::VectorXd& grad) const = 0;
  // constrained reporting space; may append transformed parameters
  virtual Eigen::VectorXd constrain(const Eigen::VectorXd& x) const;
  virtual std::vector<std::string> constrained_names() const;
  // number of trailing coordinates that get a dense mass-matrix block;
  // useful when a few global parameters are strongly correlated
  virtual int dense_tail() const { return 0; }
  // chain starting point in unconstrained coordinates; defaults to uniform
  // noise, models with spurious modes can seed the right basin instead
  virtual Eigen::VectorXd init_point(Rng& rng, double radius) const;
};

struct SamplerConfig {
  int chains = 4;
  int warmup = 1000;
  int iters = 1000;  // post-warmup draws per chain
  std::uint64_t seed = 1;
  int max_steps = 1024;             // cap on leapfrog steps per trajectory
  double target_accept = 0.8;
  double integration_time = 3.14;   // adapted step count targets this
  double init_radius = 2.0;
};

struct PosteriorDraws {
  std::vector<std::string> names;          // constrained parameter names
  std::vector<Eigen::MatrixXd> chains;     // each iters x names.size()
  std::vector<int> divergences;            // post-warmup, per chain
  std::vector<double> step_sizes;          // per chain, post-adaptation
  std::vector<double> accept_rates;        // post-warmup mean accept prob
  Eigen::VectorXd inv_mass_diag;           // adapted metric of chain 0

  int n_chains() const { return static_cast<int>(chains.size()); }
  int n_iters() const { return chains.empty() ? 0 : static_cast<int>(chains[0].rows()); }
  int n_params() const { return static_cast<int>(names.size()); }
  int index_of(const std::string& name) const;  // throws if absent

  // iters x chains matrix for one parameter
  Eigen::MatrixXd parameter(int j) const;
  std::vector<double> flat(int j) const;        // all chains concatenated
  double mean(int j) const;
  double sd(int j) const;
  int total_divergences() const;
};

PosteriorDraws hmc_sample(const Model& target, const SamplerConfig& cfg);

// Diagnostics that can be undefined (constant parameter) carry a flag
// instead of propagating NaN.
struct Diagnostic {
  double value = 0.0;
  bool defined = false;
};

// draws arranged iters x chains
Diagnostic split_rhat(const Eigen::MatrixXd& draws);
Diagnostic bulk_ess(const Eigen::MatrixXd& draws);

Diagnostic rhat(const PosteriorDraws& d, int param);
Diagnostic ess(const PosteriorDraws& d, int param);

// shortest interval containing `mass` of the draws
std::pair<double, double> hdi(std::vector<double> draws, double mass = 0.95);

void write_draws_csv(const std::string& path, const PosteriorDraws& d);

}  // namespace hintlab::mcmc
