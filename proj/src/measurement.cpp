#include "hintlab/measurement.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "hintlab/common.hpp"
#include "hintlab/csv.hpp"
#include "hintlab/stats.hpp"
#include "json.hpp"

namespace hintlab::measurement {

std::vector<ChallengeRecord> challenge_filter(
    const std::vector<data::WorkedProblem>& problems) {
  std::vector<ChallengeRecord> out;
  for (const auto& p : problems) {
    if (p.n_hints > 0 || p.n_errors > 0)
      out.push_back({p.student_id, p.problem_id, p.section_id,
                     p.n_hints > 0 ? 1 : 0});
  }
  return out;
}

double hint_rate(std::span<const ChallengeRecord> records) {
  if (records.empty())
    throw Error("hint_rate: student has no challenge problems");
  int hints = 0;
  for (const auto& r : records) {
    if (r.student_id != records.front().student_id)
      throw Error("hint_rate: records span multiple students");
    hints += r.hint_requested;
  }
  return static_cast<double>(hints) / static_cast<double>(records.size());
}

std::vector<HintRate> hint_rates_by_student(
    const std::vector<ChallengeRecord>& records) {
  std::map<std::string, std::pair<int, int>> acc;  // hints, total
  for (const auto& r : records) {
    auto& a = acc[r.student_id];
    a.first += r.hint_requested;
    ++a.second;
  }
  std::vector<HintRate> out;
  out.reserve(acc.size());
  for (const auto& [id, a] : acc)
    out.push_back({id, static_cast<double>(a.first) / a.second, a.second});
  return out;
}

RaschMixtureModel::RaschMixtureModel(
    const std::vector<ChallengeRecord>& records,
    std::vector<std::string>& student_ids_out,
    std::vector<std::string>& section_ids_out) {
  if (records.empty()) throw Error("mixture fit: no challenge records");
  std::set<std::string> students, sections;
  for (const auto& r : records) {
    students.insert(r.student_id);
    sections.insert(r.section_id);
  }
  if (students.size() < 2) throw Error("mixture fit: need at least 2 students");
  if (sections.size() < 2) throw Error("mixture fit: need at least 2 sections");
  student_ids_out.assign(students.begin(), students.end());
  section_ids_out.assign(sections.begin(), sections.end());
  n_students_ = static_cast<int>(students.size());
  n_sections_ = static_cast<int>(sections.size());

  std::map<std::string, int> sidx, cidx;
  for (int i = 0; i < n_students_; ++i) sidx[student_ids_out[i]] = i;
  for (int s = 0; s < n_sections_; ++s) cidx[section_ids_out[s]] = s;

  std::map<std::pair<int, int>, std::pair<double, double>> agg;
  for (const auto& r : records) {
    auto& a = agg[{sidx[r.student_id], cidx[r.section_id]}];
    a.first += r.hint_requested;
    a.second += 1.0;
  }
  cells_.reserve(agg.size());
  for (const auto& [key, a] : agg)
    cells_.push_back({key.first, key.second, a.first, a.second});

  // cells_ is grouped by student; record the range for each one
  student_begin_.assign(n_students_ + 1, 0);
  for (const auto& c : cells_) ++student_begin_[c.student + 1];
  for (int i = 0; i < n_students_; ++i)
    student_begin_[i + 1] += student_begin_[i];

  for (const auto& id : student_ids_out) names_.push_back("eta[" + id + "]");
  for (const auto& id : section_ids_out) names_.push_back("delta[" + id + "]");
  names_.insert(names_.end(),
                {"p0", "p1", "mu0", "mu1", "sigma0", "sigma1"});
  for (const auto& id : student_ids_out) names_.push_back("pr[" + id + "]");

  // smoothed per-student logit rates, split at zero, give crude starting
  // values for the class share, the low mean and the two spreads
  std::vector<double> hints(n_students_, 0.0), total(n_students_, 0.0);
  for (const auto& c : cells_) {
    hints[c.student] += c.hints;
    total[c.student] += c.total;
  }
  std::vector<double> low, high;
  for (int i = 0; i < n_students_; ++i)
    (logit((hints[i] + 0.5) / (total[i] + 1.0)) < 0.0 ? low : high)
        .push_back(logit((hints[i] + 0.5) / (total[i] + 1.0)));
  double p1g = std::clamp(
      static_cast<double>(high.size()) / n_students_, 0.05, 0.95);
  double mu0g = low.empty() ? -0.5 : std::min(stats::mean(low), -0.05);
  double s0g = low.size() < 2
                   ? 0.5
                   : std::clamp(std::sqrt(stats::variance(low)), 0.2, 2.0);
  double s1g = high.size() < 2
                   ? 0.5
                   : std::clamp(std::sqrt(stats::variance(high)), 0.2, 2.0);
  init_v_ = logit(p1g);
  init_u_ = std::log(-mu0g);
  init_a0_ = std::log(s0g);
  init_a1_ = std::log(s1g);
}

Eigen::VectorXd RaschMixtureModel::init_point(Rng& rng, double radius) const {
  const int n = n_students_, S = n_sections_;
  Eigen::VectorXd x(dim());
  double r = std::min(radius, 1.0);
  for (int i = 0; i < n; ++i) x[i] = rng.uniform(-r, r);
  for (int s = 0; s < S; ++s) x[n + s] = rng.uniform(-0.5 * r, 0.5 * r);
  x[n + S] = init_v_ + rng.uniform(-0.3, 0.3);
  x[n + S + 1] = init_u_ + rng.uniform(-0.3, 0.3);
  x[n + S + 2] = init_a0_ + rng.uniform(-0.3, 0.3);
  x[n + S + 3] = init_a1_ + rng.uniform(-0.3, 0.3);
  return x;
}

// unconstrained layout: z (n) with eta_i = mu_c + sigma_c * z_i per class,
// delta (S), v = logit(p1), u with mu0 = -exp(u), log sigma0, log sigma1.
// The class label is summed out per student, so z_i keeps a standard normal
// prior and the propensity scales never squeeze the latent geometry.
double RaschMixtureModel::logp_grad(const Eigen::VectorXd& x,
                                    Eigen::VectorXd& grad) const {
  const int n = n_students_, S = n_sections_;
  grad.setZero(x.size());
  const double v = x[n + S];
  const double u = x[n + S + 1];
  const double a0 = x[n + S + 2];
  const double a1 = x[n + S + 3];
  const double p1 = inv_logit(v);
  const double p0 = 1.0 - p1;
  const double mu0 = -std::exp(u);
  const double mu1 = -(1.0 - p1) / p1 * mu0;
  const double s0 = std::exp(a0);
  const double s1 = std::exp(a1);
  const double lw0 = std::log(p0), lw1 = std::log(p1);

  double lp = 0.0;
  double dmu0 = 0.0, dmu1 = 0.0, ds0 = 0.0, ds1 = 0.0, dp1 = 0.0;

  std::vector<double> P0(cells_.size()), P1(cells_.size());
  for (int i = 0; i < n; ++i) {
    const double z = x[i];
    const double e0 = mu0 + s0 * z, e1 = mu1 + s1 * z;
    double A0 = lw0, A1 = lw1;
    for (int j = student_begin_[i]; j < student_begin_[i + 1]; ++j) {
      const auto& c = cells_[j];
      double d = x[n + c.section];
      double t0 = e0 + d, t1 = e1 + d;
      A0 += c.hints * t0 - c.total * log1p_exp(t0);
      A1 += c.hints * t1 - c.total * log1p_exp(t1);
      P0[j] = inv_logit(t0);
      P1[j] = inv_logit(t1);
    }
    double M = log_sum_exp(A0, A1);
    lp += M;
    double r1 = std::exp(A1 - M);
    double r0 = 1.0 - r1;
    double D0 = 0.0, D1 = 0.0;
    for (int j = student_begin_[i]; j < student_begin_[i + 1]; ++j) {
      const auto& c = cells_[j];
      double d0 = c.hints - c.total * P0[j];
      double d1 = c.hints - c.total * P1[j];
      grad[n + c.section] += r0 * d0 + r1 * d1;
      D0 += d0;
      D1 += d1;
    }
    dmu0 += r0 * D0;
    dmu1 += r1 * D1;
    ds0 += r0 * D0 * z;
    ds1 += r1 * D1 * z;
    dp1 += r1 / p1 - r0 / p0;
    lp += -0.5 * z * z;
    grad[i] = r0 * s0 * D0 + r1 * s1 * D1 - z;
  }

  // section effects: normal(0, 3)
  for (int s = 0; s < S; ++s) {
    double d = x[n + s];
    lp += -0.5 * d * d / 9.0;
    grad[n + s] += -d / 9.0;
  }

  // priors: mu0 ~ normal(0,2) bounded above at 0; p1 ~ beta(2,2);
  // sigma ~ lognormal(0,2)
  lp += -mu0 * mu0 / 8.0;
  dmu0 += -mu0 / 4.0;
  lp += std::log(p1) + std::log(p0);
  dp1 += 1.0 / p1 - 1.0 / p0;
  lp += -a0 - a0 * a0 / 8.0;
  lp += -a1 - a1 * a1 / 8.0;
  ds0 += (-1.0 - a0 / 4.0) / s0;
  ds1 += (-1.0 - a1 / 4.0) / s1;

  // chain rule through mu1 = -(1-p1)/p1 * mu0
  double dmu0_total = dmu0 + dmu1 * (-(1.0 - p1) / p1);
  double dp1_total = dp1 + dmu1 * (mu0 / (p1 * p1));

  // to unconstrained coordinates, with log-jacobians
  grad[n + S] = dp1_total * p1 * p0 + (1.0 - 2.0 * p1);
  lp += std::log(p1) + std::log(p0);
  grad[n + S + 1] = dmu0_total * mu0 + 1.0;
  lp += u;
  grad[n + S + 2] = ds0 * s0 + 1.0;
  lp += a0;
  grad[n + S + 3] = ds1 * s1 + 1.0;
  lp += a1;
  return lp;
}

// reports eta_i as its class-weighted value E[eta_i | z_i, globals] and the
// high-class responsibility pr_i, both exact per draw
Eigen::VectorXd RaschMixtureModel::constrain(const Eigen::VectorXd& x) const {
  const int n = n_students_, S = n_sections_;
  Eigen::VectorXd out(2 * n + S + 6);
  out.segment(n, S) = x.segment(n, S);
  const double p1 = inv_logit(x[n + S]);
  const double mu0 = -std::exp(x[n + S + 1]);
  const double mu1 = -(1.0 - p1) / p1 * mu0;
  const double s0 = std::exp(x[n + S + 2]);
  const double s1 = std::exp(x[n + S + 3]);
  out[n + S] = 1.0 - p1;
  out[n + S + 1] = p1;
  out[n + S + 2] = mu0;
  out[n + S + 3] = mu1;
  out[n + S + 4] = s0;
  out[n + S + 5] = s1;
  const double lw0 = std::log(1.0 - p1), lw1 = std::log(p1);
  for (int i = 0; i < n; ++i) {
    const double z = x[i];
    const double e0 = mu0 + s0 * z, e1 = mu1 + s1 * z;
    double A0 = lw0, A1 = lw1;
    for (int j = student_begin_[i]; j < student_begin_[i + 1]; ++j) {
      const auto& c = cells_[j];
      double d = x[n + c.section];
      double t0 = e0 + d, t1 = e1 + d;
      A0 += c.hints * t0 - c.total * log1p_exp(t0);
      A1 += c.hints * t1 - c.total * log1p_exp(t1);
    }
    double r1 = std::exp(A1 - log_sum_exp(A0, A1));
    out[i] = (1.0 - r1) * e0 + r1 * e1;
    out[n + S + 6 + i] = r1;
  }
  return out;
}

std::vector<std::string> RaschMixtureModel::constrained_names() const {
  return names_;
}

namespace {

double posterior_mean(const mcmc::PosteriorDraws& d, const std::string& name) {
  return d.mean(d.index_of(name));
}

}  // namespace

MixtureFit fit_rasch_mixture(const std::vector<ChallengeRecord>& records,
                             const mcmc::SamplerConfig& config) {
  MixtureFit fit;
  RaschMixtureModel model(records, fit.student_ids, fit.section_ids);

  // degenerate inputs: identical response patterns cannot separate the
  // two classes, and constant responses leave the propensities unbounded
  {
    std::map<std::string, std::map<std::string, int>> pattern;
    bool all0 = true, all1 = true;
    for (const auto& r : records) {
      pattern[r.student_id][r.section_id + "/" + r.problem_id] =
          r.hint_requested;
      all0 &= r.hint_requested == 0;
      all1 &= r.hint_requested == 1;
    }
    bool identical = true;
    const auto& first = pattern.begin()->second;
    for (const auto& [id, pat] : pattern) identical &= pat == first;
    if (all0 || all1 || identical) {
      fit.valid = false;
      fit.flag_reason = all0 || all1
                            ? "constant hint responses"
                            : "identical response patterns across students";
      return fit;
    }
  }

  fit.draws = mcmc::hmc_sample(model, config);

  const int n = model.n_students();
  const int S = model.n_sections();
  fit.p0_mean = posterior_mean(fit.draws, "p0");
  fit.p1_mean = posterior_mean(fit.draws, "p1");
  fit.mu0_mean = posterior_mean(fit.draws, "mu0");
  fit.mu1_mean = posterior_mean(fit.draws, "mu1");
  fit.sigma0_mean = posterior_mean(fit.draws, "sigma0");
  fit.sigma1_mean = posterior_mean(fit.draws, "sigma1");

  fit.eta_mean.resize(n);
  fit.pr_high.resize(n);
  for (int i = 0; i < n; ++i) {
    fit.eta_mean[i] = fit.draws.mean(i);
    fit.pr_high[i] = fit.draws.mean(n + S + 6 + i);
  }

  long transitions =
      static_cast<long>(fit.draws.n_chains()) * fit.draws.n_iters();
  fit.divergence_rate =
      static_cast<double>(fit.draws.total_divergences()) / transitions;

  // convergence summaries over the six global parameters
  fit.max_rhat = 0.0;
  fit.min_ess = std::numeric_limits<double>::infinity();
  for (const char* nm : {"p1", "mu0", "mu1", "sigma0", "sigma1"}) {
    int j = fit.draws.index_of(nm);
    auto r = mcmc::rhat(fit.draws, j);
    auto e = mcmc::ess(fit.draws, j);
    if (r.defined) fit.max_rhat = std::max(fit.max_rhat, r.value);
    if (e.defined) fit.min_ess = std::min(fit.min_ess, e.value);
  }

  if (fit.divergence_rate > 0.05) {
    fit.valid = false;
    fit.flag_reason = "divergence rate above 5%";
  } else {
    fit.valid = true;
  }
  return fit;
}

std::string MixtureFit::to_json() const {
  nlohmann::json j;
  j["valid"] = valid;
  if (!flag_reason.empty()) j["flag_reason"] = flag_reason;
  j["p0"] = p0_mean;
  j["p1"] = p1_mean;
  j["mu0"] = mu0_mean;
  j["mu1"] = mu1_mean;
  j["sigma0"] = sigma0_mean;
  j["sigma1"] = sigma1_mean;
  j["n_students"] = static_cast<int>(student_ids.size());
  j["n_sections"] = static_cast<int>(section_ids.size());
  j["divergence_rate"] = divergence_rate;
  j["max_rhat"] = max_rhat;
  j["min_ess"] = min_ess;
  return j.dump(2);
}

Dichotomization choose_cutoff(const MixtureFit& fit,
                              const std::vector<HintRate>& rates) {
  if (!fit.valid) throw Error("choose_cutoff: mixture fit is flagged invalid");
  if (rates.empty()) throw Error("choose_cutoff: no hint rates");

  Dichotomization d;
  std::vector<double> hbar;
  hbar.reserve(rates.size());
  for (const auto& r : rates) hbar.push_back(r.hbar);
  d.cutoff = stats::quantile(hbar, fit.p0_mean);

  std::map<std::string, double> pr;
  for (std::size_t i = 0; i < fit.student_ids.size(); ++i)
    pr[fit.student_ids[i]] = fit.pr_high[i];

  int agree = 0;
  for (const auto& r : rates) {
    d.student_ids.push_back(r.student_id);
    d.hbar.push_back(r.hbar);
    int h = r.hbar > d.cutoff ? 1 : 0;
    d.H.push_back(h);
    auto it = pr.find(r.student_id);
    if (it == pr.end())
      throw Error("choose_cutoff: student " + r.student_id +
                  " missing from the fit");
    d.pr_high.push_back(it->second);
    int modal = it->second > 0.5 ? 1 : 0;
    agree += h == modal;
  }
  d.agreement = static_cast<double>(agree) / static_cast<double>(rates.size());
  return d;
}

void write_dichotomization_csv(const std::string& path,
                               const Dichotomization& d) {
  csv::Table t;
  t.header = {"student_id", "hbar", "H", "pr_high"};
  for (std::size_t i = 0; i < d.student_ids.size(); ++i)
    t.rows.push_back({d.student_ids[i], csv::format_double(d.hbar[i]),
                      std::to_string(d.H[i]), csv::format_double(d.pr_high[i])});
  csv::write_file(path, t);
}

}  // namespace hintlab::measurement
