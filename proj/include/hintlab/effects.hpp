#pragma once

#include <Eigen/Dense>
#include <limits>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "hintlab/matching.hpp"

namespace hintlab::effects {

// ATE/TOT/OLS weight the per-set contrasts by set size, treated count, or
// precision; INDIRECT and DIRECT/DIRECT_ADJ are the mediation estimators
enum class Scheme { ATE, TOT, OLS, INDIRECT, DIRECT, DIRECT_ADJ };
const char* scheme_name(Scheme s);

struct EffectEstimate {
  Scheme scheme = Scheme::OLS;
  double estimate = 0.0;
  double std_error = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  // finite only for the cluster-robust direct estimators
  double df = std::numeric_limits<double>::infinity();
  // benchmark covariate name -> sensitivity interval
  std::map<std::string, std::pair<double, double>> sensitivity;
};

// outcomes of matched students split by H class, missing values dropped;
// sets left without an observed outcome in one class are excluded and listed
struct MatchedOutcomes {
  struct Set {
    std::string id;
    std::vector<double> y1;
    std::vector<double> y0;
  };
  std::vector<Set> sets;
  std::vector<std::string> dropped_sets;
};

MatchedOutcomes matched_outcomes(const matching::MatchAssignment& assignment,
                                 const std::vector<double>& Y,
                                 const std::vector<int>& H);

struct SetEffect {
  std::string set_id;
  double tau = 0.0;  // mean(y | H=1) - mean(y | H=0) within the set
  int n1 = 0;
  int n0 = 0;
};

std::vector<SetEffect> matched_set_effects(const MatchedOutcomes& mo);

// weighted mean of the per-set contrasts; the standard error comes from the
// equivalent weighted regression of Y on H plus set intercepts with an HC3
// sandwich, so scheme weights and uncertainty stay consistent
EffectEstimate weighted_effect(const MatchedOutcomes& mo, Scheme scheme);

// |weighted OLS-scheme estimate - coefficient on H in the regression with
// set intercepts|; the two agree up to floating point
double ols_equivalence_check(const MatchedOutcomes& mo);

// (X'X)^-1 X' diag(e_i^2 / (1-h_ii)^2) X (X'X)^-1
Eigen::MatrixXd hc3_vcov(const Eigen::MatrixXd& X,
                         const Eigen::VectorXd& residuals,
                         const Eigen::VectorXd& hat_diag);

// interval for the effect when an unobserved confounder with squared partial
// outcome correlation rho_sq and treatment-equation t-statistic t_z is
// conceded: estimate +/- (|t_z| sqrt(rho_sq) + 1.96) * SE. Either parameter
// at zero collapses it to the plain 95% CI; width grows in both.
std::pair<double, double> sensitivity_interval(const EffectEstimate& fit,
                                               double rho_sq, double t_z);

struct Benchmark {
  double rho_sq = 0.0;  // squared partial correlation of Y with the column
  double t_z = 0.0;     // t of the column in the H-on-covariates regression
};

// calibrates the sensitivity parameters against an observed covariate: how
// much would omitting something as strong as column `col` move the effect
Benchmark benchmark_covariate(const Eigen::VectorXd& y,
                              const std::vector<int>& H,
                              const Eigen::MatrixXd& X, int col);

enum class ImputeSource { observed, set_mean, none };

// counterfactual no-usage outcome per student: observed Y when H=0, the
// set's H=0 mean when H=1; students outside any set get none/NaN
struct ImputedOutcome {
  std::vector<double> y10;
  std::vector<ImputeSource> source;
};

ImputedOutcome impute_y10(const matching::MatchAssignment& assignment,
                          const std::vector<double>& Y,
                          const std::vector<int>& H);

// usage share of the offer effect: pr_h1 * TOT with pr_h1 held fixed
EffectEstimate indirect_effect(const EffectEstimate& tot, double pr_h1);

// coefficient on Z with a fixed intercept per randomization pair; standard
// error clustered by school with the CR2 small-sample adjustment and
// Satterthwaite degrees of freedom; X adds covariate adjustment
EffectEstimate direct_effect(const std::vector<double>& y_tilde,
                             const std::vector<int>& Z,
                             const std::vector<std::string>& pair_ids,
                             const std::vector<std::string>& school_ids,
                             const Eigen::MatrixXd* X = nullptr);

}  // namespace hintlab::effects
