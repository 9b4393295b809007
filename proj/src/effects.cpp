#include "hintlab/effects.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "hintlab/common.hpp"
#include "hintlab/stats.hpp"

namespace hintlab::effects {

namespace {

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

// unit regression weights that reproduce the scheme's set weights when Y is
// regressed on H plus set intercepts
void unit_weights(Scheme scheme, int n1, int n0, double& u1, double& u0) {
  switch (scheme) {
    case Scheme::ATE:
      u1 = static_cast<double>(n1 + n0) / (2.0 * n1);
      u0 = static_cast<double>(n1 + n0) / (2.0 * n0);
      break;
    case Scheme::TOT:
      u1 = 1.0;
      u0 = static_cast<double>(n1) / n0;
      break;
    case Scheme::OLS:
      u1 = 1.0;
      u0 = 1.0;
      break;
    default:
      throw Error("weighted_effect: scheme has no set weighting");
  }
}

double scheme_estimate(const MatchedOutcomes& mo, Scheme scheme) {
  double sw = 0.0, swt = 0.0;
  for (const auto& s : mo.sets) {
    int n1 = static_cast<int>(s.y1.size());
    int n0 = static_cast<int>(s.y0.size());
    double u1, u0;
    unit_weights(scheme, n1, n0, u1, u0);
    double W1 = n1 * u1, W0 = n0 * u0;
    double wm = W1 * W0 / (W1 + W0);
    sw += wm;
    swt += wm * (mean_of(s.y1) - mean_of(s.y0));
  }
  return swt / sw;
}

}  // namespace

const char* scheme_name(Scheme s) {
  switch (s) {
    case Scheme::ATE: return "ATE";
    case Scheme::TOT: return "TOT";
    case Scheme::OLS: return "OLS";
    case Scheme::INDIRECT: return "INDIRECT";
    case Scheme::DIRECT: return "DIRECT";
    case Scheme::DIRECT_ADJ: return "DIRECT_ADJ";
  }
  return "?";
}

MatchedOutcomes matched_outcomes(const matching::MatchAssignment& assignment,
                                 const std::vector<double>& Y,
                                 const std::vector<int>& H) {
  const std::size_t n = assignment.set_of.size();
  if (Y.size() != n || H.size() != n)
    throw Error("matched_outcomes: input lengths differ");
  MatchedOutcomes out;
  for (const auto& src : assignment.sets) {
    MatchedOutcomes::Set s;
    s.id = src.id;
    for (int m : src.members) {
      if (!std::isfinite(Y[m])) continue;
      (H[m] == 1 ? s.y1 : s.y0).push_back(Y[m]);
    }
    if (s.y1.empty() || s.y0.empty())
      out.dropped_sets.push_back(src.id);
    else
      out.sets.push_back(std::move(s));
  }
  return out;
}

std::vector<SetEffect> matched_set_effects(const MatchedOutcomes& mo) {
  std::vector<SetEffect> out;
  for (const auto& s : mo.sets) {
    SetEffect e;
    e.set_id = s.id;
    e.n1 = static_cast<int>(s.y1.size());
    e.n0 = static_cast<int>(s.y0.size());
    e.tau = mean_of(s.y1) - mean_of(s.y0);
    out.push_back(e);
  }
  return out;
}

EffectEstimate weighted_effect(const MatchedOutcomes& mo, Scheme scheme) {
  if (mo.sets.empty()) throw Error("weighted_effect: no usable matched sets");

  double sw = 0.0;
  std::vector<double> W1(mo.sets.size()), W0(mo.sets.size());
  for (std::size_t m = 0; m < mo.sets.size(); ++m) {
    const auto& s = mo.sets[m];
    int n1 = static_cast<int>(s.y1.size());
    int n0 = static_cast<int>(s.y0.size());
    double u1, u0;
    unit_weights(scheme, n1, n0, u1, u0);
    W1[m] = n1 * u1;
    W0[m] = n0 * u0;
    sw += W1[m] * W0[m] / (W1[m] + W0[m]);
  }
  double est = scheme_estimate(mo, scheme);

  // HC3 variance of the H coefficient in the weighted regression with set
  // intercepts, via the partialled-out form: with x. the within-set
  // weighted-demeaned H, var = sum x._i^2 e_i^2/(1-h_i)^2 / (sum x.^2)^2
  double meat = 0.0;
  for (std::size_t m = 0; m < mo.sets.size(); ++m) {
    const auto& s = mo.sets[m];
    int n1 = static_cast<int>(s.y1.size());
    int n0 = static_cast<int>(s.y0.size());
    double u1, u0;
    unit_weights(scheme, n1, n0, u1, u0);
    double Wm = W1[m] + W0[m];
    double hbar = W1[m] / Wm;
    double alpha =
        (W1[m] * (mean_of(s.y1) - est) + W0[m] * mean_of(s.y0)) / Wm;
    auto accumulate = [&](double y, double h, double u) {
      double e = std::sqrt(u) * (y - alpha - est * h);
      double xd = std::sqrt(u) * (h - hbar);
      double lev = u / Wm + xd * xd / sw;
      if (lev >= 1.0 - 1e-12)
        throw Error("weighted_effect: saturated observation, "
                    "too few sets for an HC3 error");
      double w = e / (1.0 - lev);
      meat += xd * xd * w * w;
    };
    for (double y : s.y1) accumulate(y, 1.0, u1);
    for (double y : s.y0) accumulate(y, 0.0, u0);
  }

  EffectEstimate out;
  out.scheme = scheme;
  out.estimate = est;
  out.std_error = std::sqrt(meat) / sw;
  out.ci_lo = est - 1.96 * out.std_error;
  out.ci_hi = est + 1.96 * out.std_error;
  return out;
}

double ols_equivalence_check(const MatchedOutcomes& mo) {
  if (mo.sets.empty())
    throw Error("ols_equivalence_check: no usable matched sets");
  int n = 0;
  for (const auto& s : mo.sets)
    n += static_cast<int>(s.y1.size() + s.y0.size());
  const int p = 1 + static_cast<int>(mo.sets.size());
  Eigen::MatrixXd X = Eigen::MatrixXd::Zero(n, p);
  Eigen::VectorXd y(n);
  int r = 0;
  for (std::size_t m = 0; m < mo.sets.size(); ++m) {
    for (double v : mo.sets[m].y1) {
      X(r, 0) = 1.0;
      X(r, 1 + static_cast<int>(m)) = 1.0;
      y[r++] = v;
    }
    for (double v : mo.sets[m].y0) {
      X(r, 1 + static_cast<int>(m)) = 1.0;
      y[r++] = v;
    }
  }
  stats::OlsFit fit = stats::ols(X, y);
  return std::abs(fit.beta[0] - scheme_estimate(mo, Scheme::OLS));
}

Eigen::MatrixXd hc3_vcov(const Eigen::MatrixXd& X,
                         const Eigen::VectorXd& residuals,
                         const Eigen::VectorXd& hat_diag) {
  const int n = static_cast<int>(X.rows());
  const int p = static_cast<int>(X.cols());
  if (residuals.size() != n || hat_diag.size() != n)
    throw Error("hc3_vcov: input lengths differ");
  Eigen::MatrixXd xtx = X.transpose() * X;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(xtx);
  if (ldlt.info() != Eigen::Success)
    throw Error("hc3_vcov: singular design");
  Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(p, p);
  for (int i = 0; i < n; ++i) {
    if (hat_diag[i] >= 1.0 - 1e-12)
      throw Error("hc3_vcov: leverage 1 at row " + std::to_string(i));
    double w = residuals[i] / (1.0 - hat_diag[i]);
    meat.noalias() += (w * w) * (X.row(i).transpose() * X.row(i));
  }
  Eigen::MatrixXd half = ldlt.solve(meat);
  return ldlt.solve(half.transpose()).transpose();
}

std::pair<double, double> sensitivity_interval(const EffectEstimate& fit,
                                               double rho_sq, double t_z) {
  if (!(rho_sq >= 0.0 && rho_sq < 1.0))
    throw Error("sensitivity_interval: rho_sq must lie in [0,1)");
  if (!std::isfinite(t_z))
    throw Error("sensitivity_interval: t_z must be finite");
  double half = (std::sqrt(rho_sq) * std::abs(t_z) + 1.96) * fit.std_error;
  return {fit.estimate - half, fit.estimate + half};
}

Benchmark benchmark_covariate(const Eigen::VectorXd& y,
                              const std::vector<int>& H,
                              const Eigen::MatrixXd& X, int col) {
  const int n = static_cast<int>(X.rows());
  const int k = static_cast<int>(X.cols());
  if (y.size() != n || static_cast<int>(H.size()) != n)
    throw Error("benchmark_covariate: input lengths differ");
  if (col < 0 || col >= k) throw Error("benchmark_covariate: no such column");

  Eigen::MatrixXd Xf(n, k + 1);
  Xf.col(0).setOnes();
  Xf.rightCols(k) = X;
  const int j = 1 + col;

  auto t_of = [&](const Eigen::VectorXd& target) {
    stats::OlsFit fit = stats::ols(Xf, target);
    double v = fit.sigma2 * fit.xtx_inv(j, j);
    if (!(v > 0.0) || !std::isfinite(v))
      throw Error("benchmark_covariate: collinear covariate");
    return std::make_pair(fit.beta[j] / std::sqrt(v), fit.df_resid);
  };

  auto [ty, dfy] = t_of(y);
  Eigen::VectorXd h(n);
  for (int i = 0; i < n; ++i) h[i] = H[i];
  auto [tz, dfz] = t_of(h);
  (void)dfz;

  Benchmark b;
  b.rho_sq = ty * ty / (ty * ty + dfy);
  b.t_z = tz;
  return b;
}

ImputedOutcome impute_y10(const matching::MatchAssignment& assignment,
                          const std::vector<double>& Y,
                          const std::vector<int>& H) {
  const std::size_t n = assignment.set_of.size();
  if (Y.size() != n || H.size() != n)
    throw Error("impute_y10: input lengths differ");
  ImputedOutcome out;
  out.y10.assign(n, std::numeric_limits<double>::quiet_NaN());
  out.source.assign(n, ImputeSource::none);

  // H=0 mean per set, over observed outcomes
  std::vector<double> set_mean(assignment.sets.size());
  for (std::size_t m = 0; m < assignment.sets.size(); ++m) {
    double s = 0.0;
    int cnt = 0, treated = 0;
    for (int r : assignment.sets[m].members) {
      if (H[r] == 1)
        ++treated;
      else if (std::isfinite(Y[r])) {
        s += Y[r];
        ++cnt;
      }
    }
    if (cnt == 0 && treated > 0)
      throw Error("impute_y10: set " + assignment.sets[m].id +
                  " has no observed control outcome");
    set_mean[m] = cnt > 0 ? s / cnt : 0.0;
  }

  for (std::size_t i = 0; i < n; ++i) {
    int m = assignment.set_of[i];
    if (m < 0) continue;
    if (H[i] == 0) {
      out.y10[i] = Y[i];
      out.source[i] = ImputeSource::observed;
    } else {
      out.y10[i] = set_mean[m];
      out.source[i] = ImputeSource::set_mean;
    }
  }
  return out;
}

EffectEstimate indirect_effect(const EffectEstimate& tot, double pr_h1) {
  if (!(pr_h1 >= 0.0 && pr_h1 <= 1.0))
    throw Error("indirect_effect: pr_h1 must lie in [0,1]");
  EffectEstimate out;
  out.scheme = Scheme::INDIRECT;
  out.estimate = pr_h1 * tot.estimate;
  out.std_error = pr_h1 * tot.std_error;
  out.ci_lo = out.estimate - 1.96 * out.std_error;
  out.ci_hi = out.estimate + 1.96 * out.std_error;
  return out;
}

EffectEstimate direct_effect(const std::vector<double>& y_tilde,
                             const std::vector<int>& Z,
                             const std::vector<std::string>& pair_ids,
                             const std::vector<std::string>& school_ids,
                             const Eigen::MatrixXd* X) {
  const int n = static_cast<int>(y_tilde.size());
  if (static_cast<int>(Z.size()) != n ||
      static_cast<int>(pair_ids.size()) != n ||
      static_cast<int>(school_ids.size()) != n)
    throw Error("direct_effect: input lengths differ");
  if (X && static_cast<int>(X->rows()) != n)
    throw Error("direct_effect: covariate rows do not match");
  for (int z : Z)
    if (z != 0 && z != 1) throw Error("direct_effect: Z must be 0/1");
  for (double v : y_tilde)
    if (!std::isfinite(v)) throw Error("direct_effect: outcome not finite");

  std::map<std::string, int> pair_idx, school_idx;
  for (int i = 0; i < n; ++i) {
    pair_idx.try_emplace(pair_ids[i], static_cast<int>(pair_idx.size()));
    school_idx.try_emplace(school_ids[i], static_cast<int>(school_idx.size()));
  }
  const int npair = static_cast<int>(pair_idx.size());
  const int nschool = static_cast<int>(school_idx.size());

  // every pair needs both arms, spread over more than one school
  std::vector<std::pair<bool, bool>> arms(npair, {false, false});
  std::vector<std::set<std::string>> pair_schools(npair);
  for (int i = 0; i < n; ++i) {
    int b = pair_idx[pair_ids[i]];
    (Z[i] == 1 ? arms[b].first : arms[b].second) = true;
    pair_schools[b].insert(school_ids[i]);
  }
  for (const auto& [name, b] : pair_idx) {
    if (!arms[b].first || !arms[b].second)
      throw Error("direct_effect: pair " + name + " is missing an arm");
    if (pair_schools[b].size() < 2)
      throw Error("direct_effect: pair " + name + " sits in a single school");
  }

  const int k = X ? static_cast<int>(X->cols()) : 0;
  const int p = 1 + npair + k;
  if (n <= p) throw Error("direct_effect: more parameters than students");
  Eigen::MatrixXd Xd = Eigen::MatrixXd::Zero(n, p);
  Eigen::VectorXd yv(n);
  for (int i = 0; i < n; ++i) {
    Xd(i, 0) = Z[i];
    Xd(i, 1 + pair_idx[pair_ids[i]]) = 1.0;
    if (X) Xd.row(i).tail(k) = X->row(i);
    yv[i] = y_tilde[i];
  }

  stats::OlsFit fit = stats::ols(Xd, yv);

  // CR2: per school g, variance contribution ((A_g X_g B l)' e_g)^2 where
  // A_g = (I - X_g B X_g')^{-1/2} (pseudo-inverse square root) and B=(X'X)^-1
  std::vector<std::vector<int>> clusters(nschool);
  for (int i = 0; i < n; ++i)
    clusters[school_idx[school_ids[i]]].push_back(i);

  Eigen::VectorXd bl = fit.xtx_inv.col(0);  // B l for the Z coefficient
  double var = 0.0;
  std::vector<double> pp(nschool);            // p_g' p_g
  Eigen::MatrixXd Q(p, nschool);               // q_g = X_g' p_g
  for (int g = 0; g < nschool; ++g) {
    const auto& idx = clusters[g];
    const int ng = static_cast<int>(idx.size());
    Eigen::MatrixXd Xg(ng, p);
    Eigen::VectorXd eg(ng);
    for (int r = 0; r < ng; ++r) {
      Xg.row(r) = Xd.row(idx[r]);
      eg[r] = fit.residuals[idx[r]];
    }
    Eigen::MatrixXd Hgg = Xg * fit.xtx_inv * Xg.transpose();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(
        Eigen::MatrixXd::Identity(ng, ng) - Hgg);
    if (es.info() != Eigen::Success)
      throw Error("direct_effect: cluster adjustment failed");
    Eigen::VectorXd lam = es.eigenvalues();
    double lmax = std::max(1.0, lam.maxCoeff());
    Eigen::VectorXd isqrt(ng);
    for (int r = 0; r < ng; ++r)
      isqrt[r] = lam[r] > 1e-10 * lmax ? 1.0 / std::sqrt(lam[r]) : 0.0;
    Eigen::VectorXd base = Xg * bl;
    Eigen::VectorXd pg = es.eigenvectors() *
                         (isqrt.asDiagonal() *
                          (es.eigenvectors().transpose() * base));
    double contrib = pg.dot(eg);
    var += contrib * contrib;
    pp[g] = pg.squaredNorm();
    Q.col(g) = Xg.transpose() * pg;
  }

  // Satterthwaite: df = tr(W)^2 / ||W||_F^2 with
  // W[g,h] = [g==h] p_g'p_g - q_g' B q_h
  Eigen::MatrixXd W = -Q.transpose() * fit.xtx_inv * Q;
  for (int g = 0; g < nschool; ++g) W(g, g) += pp[g];
  double tr = W.trace();
  double fro2 = W.squaredNorm();
  double df = fro2 > 0.0 ? tr * tr / fro2 : 1.0;

  EffectEstimate out;
  out.scheme = X ? Scheme::DIRECT_ADJ : Scheme::DIRECT;
  out.estimate = fit.beta[0];
  out.std_error = std::sqrt(var);
  out.df = df;
  double tq = stats::student_t_quantile(0.975, df);
  out.ci_lo = out.estimate - tq * out.std_error;
  out.ci_hi = out.estimate + tq * out.std_error;
  return out;
}

}  // namespace hintlab::effects
