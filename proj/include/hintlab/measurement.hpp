#pragma once

#include <span>
#include <string>
#include <vector>

#include "hintlab/data.hpp"
#include "hintlab/sampler.hpp"

namespace hintlab::measurement {

// one problem on which the student either asked for a hint or erred
struct ChallengeRecord {
  std::string student_id;
  std::string problem_id;
  std::string section_id;
  int hint_requested = 0;
};

std::vector<ChallengeRecord> challenge_filter(
    const std::vector<data::WorkedProblem>& problems);

// share of a single student's challenge problems with a hint request
double hint_rate(std::span<const ChallengeRecord> records);

struct HintRate {
  std::string student_id;
  double hbar = 0.0;
  int n_challenges = 0;
};

// grouped per student, sorted by student_id
std::vector<HintRate> hint_rates_by_student(
    const std::vector<ChallengeRecord>& records);

// Two-class mixture over student hint propensities with section effects:
// Pr(hint) = invlogit(eta_i + delta_s), eta_i drawn from a two-component
// normal mixture whose high-user mean is pinned so the overall mean is zero.
struct MixtureFit {
  mcmc::PosteriorDraws draws;
  std::vector<std::string> student_ids;  // order of eta parameters
  std::vector<std::string> section_ids;  // order of delta parameters

  double p0_mean = 0.0;  // low-user share
  double p1_mean = 0.0;
  double mu0_mean = 0.0;
  double mu1_mean = 0.0;
  double sigma0_mean = 0.0;
  double sigma1_mean = 0.0;
  std::vector<double> eta_mean;  // posterior mean propensity per student
  std::vector<double> pr_high;   // posterior mean responsibility per student

  double divergence_rate = 0.0;
  double max_rhat = 0.0;
  double min_ess = 0.0;
  bool valid = false;
  std::string flag_reason;

  std::string to_json() const;
};

MixtureFit fit_rasch_mixture(const std::vector<ChallengeRecord>& records,
                             const mcmc::SamplerConfig& config);

struct Dichotomization {
  double cutoff = 0.0;
  std::vector<std::string> student_ids;
  std::vector<double> hbar;
  std::vector<int> H;            // 1 when hbar > cutoff
  std::vector<double> pr_high;
  double agreement = 0.0;        // share where H matches the modal class
};

// cutoff is the empirical quantile of hbar at the posterior mean low-user
// share; ties at the cutoff go to H = 0
Dichotomization choose_cutoff(const MixtureFit& fit,
                              const std::vector<HintRate>& rates);

void write_dichotomization_csv(const std::string& path,
                               const Dichotomization& d);

// exposed for gradient tests
class RaschMixtureModel : public mcmc::Model {
 public:
  RaschMixtureModel(const std::vector<ChallengeRecord>& records,
                    std::vector<std::string>& student_ids_out,
                    std::vector<std::string>& section_ids_out);
  int dim() const override { return n_students_ + n_sections_ + 4; }
  double logp_grad(const Eigen::VectorXd& x,
                   Eigen::VectorXd& grad) const override;
  Eigen::VectorXd constrain(const Eigen::VectorXd& x) const override;
  std::vector<std::string> constrained_names() const override;
  // the four mixture parameters move together; give them a dense metric
  int dense_tail() const override { return 4; }
  // seeded from empirical hint rates so chains start in the two-class basin
  // rather than the spurious single-component mode
  Eigen::VectorXd init_point(Rng& rng, double radius) const override;

  int n_students() const { return n_students_; }
  int n_sections() const { return n_sections_; }

 private:
  int n_students_ = 0;
  int n_sections_ = 0;
  // aggregated bernoulli counts per (student, section) pair
  struct Cell {
    int student;
    int section;
    double hints;
    double total;
  };
  std::vector<Cell> cells_;           // grouped by student
  std::vector<int> student_begin_;    // cell range per student, size n+1
  std::vector<std::string> names_;
  double init_v_ = 0.0;               // empirical starting values, see above
  double init_u_ = 0.0;
  double init_a0_ = 0.0;
  double init_a1_ = 0.0;
};

}  // namespace hintlab::measurement
