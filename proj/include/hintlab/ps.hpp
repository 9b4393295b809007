#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "hintlab/sampler.hpp"

namespace hintlab::ps {

// Student-level analysis data plus the help-request records of the
// treatment arm. Indices are 0-based and dense.
struct PSData {
  std::vector<double> Y;
  std::vector<int> Z;
  Eigen::MatrixXd X;  // standardized covariates, pretest square included
  std::vector<int> teacher, school, pair;
  int n_teacher = 0, n_school = 0, n_pair = 0;

  std::vector<int> rec_student;  // one entry per worked section
  std::vector<int> rec_section;
  std::vector<int> rec_hint;  // 0/1
  int n_section = 0;

  int n_students() const { return static_cast<int>(Y.size()); }
  int n_records() const { return static_cast<int>(rec_student.size()); }
  void validate() const;  // throws Error on inconsistent shapes or indices
};

// Joint model: logit help propensity eta per student feeds both the
// record-level Bernoulli likelihood (treatment arm) and the outcome mean,
// where the offer effect is linear in eta. Random intercepts are
// non-centered; scales live on the log axis with half-normal(0,5) priors.
class PSModel : public mcmc::Model {
 public:
  explicit PSModel(const PSData& data);

  int dim() const override;
  double logp_grad(const Eigen::VectorXd& x,
                   Eigen::VectorXd& grad) const override;
  Eigen::VectorXd constrain(const Eigen::VectorXd& x) const override;
  std::vector<std::string> constrained_names() const override;
  Eigen::VectorXd init_point(Rng& rng, double radius) const override;

  // layout of the unconstrained vector
  int off_z() const { return 0; }
  int off_beta_u() const { return n_; }
  int off_beta_y() const { return n_ + k_; }
  int off_globals() const { return n_ + 2 * k_; }  // a1, b0, b1
  int off_tch_y() const { return off_globals() + 3; }
  int off_tch_u() const { return off_tch_y() + nt_; }
  int off_pair() const { return off_tch_u() + nt_; }
  int off_scl_u() const { return off_pair() + np_; }
  int off_scl_y() const { return off_scl_u() + ns_; }
  int off_delta() const { return off_scl_y() + ns_; }
  int off_log_scales() const { return off_delta() + nsec_; }
  // log-scale order: tchY, sclY, y0, y1, tchU, sclU, u

  // constrained order: eta, betaU, betaY, a1, b0, b1, teacherEffY,
  // teacherEffU, pairEffect, schoolEffU, schoolEffY, delta, seven scales

 private:
  const PSData& d_;
  int n_, k_, nt_, ns_, np_, nsec_;
};

struct PSFit {
  mcmc::PosteriorDraws draws;
  bool valid = false;
  double max_rhat = 0.0;
  std::vector<std::string> flagged;  // parameters that failed diagnostics
  int n_students = 0;
  int n_sections = 0;
  int col_eta = 0;    // first eta column
  int col_b0 = 0;     // a1 sits right before
  int col_b1 = 0;
  int col_delta = 0;
  int col_scales = 0;
};

// draws for the full parameter vector; the fit is valid only when split
// rhat stays under 1.01 for the effect parameters and all scales
PSFit fit_ps(const PSData& data, const mcmc::SamplerConfig& cfg);

struct PrincipalEffectCurve {
  std::vector<double> r;
  std::vector<double> mean;
  std::vector<double> lo, hi;  // pointwise 95% bands
  double p_b1_pos = 0.0;
  std::pair<double, double> b1_hdi{0.0, 0.0};
};

PrincipalEffectCurve principal_effect_curve(const PSFit& fit,
                                            const std::vector<double>& r_grid);

enum class Group { pooled, treatment, control };

// replicated-outcome density curves against the observed one
struct DensityCurves {
  std::vector<double> grid;
  std::vector<double> observed;
  Eigen::MatrixXd replicates;  // n_rep rows, one density per grid column
};

DensityCurves ppc_density(const PSFit& fit, const PSData& data, Group group,
                          int n_rep = 1000, int grid_size = 128,
                          std::uint64_t seed = 99);

struct ResidualTable {
  std::vector<int> student;
  std::vector<double> fitted;    // posterior mean of the outcome mean
  std::vector<double> residual;  // observed minus fitted
};

ResidualTable residual_table(const PSFit& fit, const PSData& data,
                             Group group);

struct BinnedResidualDraw {
  std::vector<double> predicted;  // mean predicted help probability per bin
  std::vector<double> gap;        // observed share minus predicted
  std::vector<int> count;
};

// record-level calibration check on a handful of posterior draws
std::vector<BinnedResidualDraw> binned_residuals(const PSFit& fit,
                                                 const PSData& data,
                                                 int n_bins, int n_draws = 9,
                                                 std::uint64_t seed = 7);

struct EffectSpec {
  enum class Kind { none, random, linear, quadratic };
  Kind kind = Kind::none;
  // random: mean c0, sd c1; linear: c0 + c1*r; quadratic: c0 + c1*r + c2*r^2
  double c0 = 0.0, c1 = 0.0, c2 = 0.0;
};

struct FakeData {
  PSData data;
  std::vector<double> true_tau;  // per treatment-copy student
};

// duplicates the treatment arm: each student appears once as treatment
// (keeping its help records) and once as control under fresh teacher and
// school labels; the specified effect, evaluated at the supplied eta, is
// added to the treatment copies' outcomes
FakeData fake_data_duplicate(const PSData& src, const std::vector<double>& eta,
                             const EffectSpec& spec, std::uint64_t seed);

}  // namespace hintlab::ps
