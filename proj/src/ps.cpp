#include "hintlab/ps.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "hintlab/stats.hpp"

namespace hintlab::ps {

namespace {

void check_index(const std::vector<int>& idx, int n, int bound,
                 const char* what) {
  if (static_cast<int>(idx.size()) != n)
    throw Error(std::string("ps data: ") + what + " length mismatch");
  for (int v : idx)
    if (v < 0 || v >= bound)
      throw Error(std::string("ps data: ") + what + " index out of range");
}

std::string tag(const char* base, int i) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%s[%d]", base, i);
  return buf;
}

}  // namespace

void PSData::validate() const {
  const int n = n_students();
  if (n == 0) throw Error("ps data: no students");
  if (static_cast<int>(Z.size()) != n)
    throw Error("ps data: Z length mismatch");
  for (int z : Z)
    if (z != 0 && z != 1) throw Error("ps data: Z must be 0/1");
  if (X.rows() != n) throw Error("ps data: covariate rows mismatch");
  if (n_teacher <= 0 || n_school <= 0 || n_pair <= 0)
    throw Error("ps data: grouping counts must be positive");
  check_index(teacher, n, n_teacher, "teacher");
  check_index(school, n, n_school, "school");
  check_index(pair, n, n_pair, "pair");
  const int m = n_records();
  if (static_cast<int>(rec_section.size()) != m ||
      static_cast<int>(rec_hint.size()) != m)
    throw Error("ps data: record column length mismatch");
  if (m > 0 && n_section <= 0)
    throw Error("ps data: records present but no sections declared");
  check_index(rec_student, m, n, "record student");
  check_index(rec_section, m, std::max(n_section, 1), "record section");
  for (int h : rec_hint)
    if (h != 0 && h != 1) throw Error("ps data: hint must be 0/1");
  for (double y : Y)
    if (!std::isfinite(y)) throw Error("ps data: non-finite outcome");
}

PSModel::PSModel(const PSData& data) : d_(data) {
  d_.validate();
  n_ = d_.n_students();
  k_ = static_cast<int>(d_.X.cols());
  nt_ = d_.n_teacher;
  ns_ = d_.n_school;
  np_ = d_.n_pair;
  nsec_ = d_.n_section;
}

int PSModel::dim() const {
  return n_ + 2 * k_ + 3 + 2 * nt_ + np_ + 2 * ns_ + nsec_ + 7;
}

double PSModel::logp_grad(const Eigen::VectorXd& x,
                          Eigen::VectorXd& grad) const {
  grad.setZero(dim());

  const auto z = x.segment(off_z(), n_);
  const auto beta_u = x.segment(off_beta_u(), k_);
  const auto beta_y = x.segment(off_beta_y(), k_);
  const double a1 = x[off_globals() + 0];
  const double b0 = x[off_globals() + 1];
  const double b1 = x[off_globals() + 2];
  const auto tch_y_raw = x.segment(off_tch_y(), nt_);
  const auto tch_u_raw = x.segment(off_tch_u(), nt_);
  const auto pair_eff = x.segment(off_pair(), np_);
  const auto scl_u_raw = x.segment(off_scl_u(), ns_);
  const auto scl_y_raw = x.segment(off_scl_y(), ns_);
  const auto delta = x.segment(off_delta(), nsec_);
  const auto ls = x.segment(off_log_scales(), 7);
  const double s_tch_y = std::exp(ls[0]);
  const double s_scl_y = std::exp(ls[1]);
  const double s_y0 = std::exp(ls[2]);
  const double s_y1 = std::exp(ls[3]);
  const double s_tch_u = std::exp(ls[4]);
  const double s_scl_u = std::exp(ls[5]);
  const double s_u = std::exp(ls[6]);

  Eigen::VectorXd xbu = k_ > 0 ? (d_.X * beta_u).eval()
                               : Eigen::VectorXd::Zero(n_);
  Eigen::VectorXd xby = k_ > 0 ? (d_.X * beta_y).eval()
                               : Eigen::VectorXd::Zero(n_);

  double lp = 0.0;
  Eigen::VectorXd eta(n_), resid(n_);
  Eigen::VectorXd g_eta = Eigen::VectorXd::Zero(n_);
  for (int i = 0; i < n_; ++i) {
    eta[i] = s_tch_u * tch_u_raw[d_.teacher[i]] +
             s_scl_u * scl_u_raw[d_.school[i]] + xbu[i] + s_u * z[i];
  }

  // help-request records
  for (int j = 0; j < d_.n_records(); ++j) {
    const int i = d_.rec_student[j];
    const double lpj = delta[d_.rec_section[j]] + eta[i];
    lp += d_.rec_hint[j] * lpj - log1p_exp(lpj);
    const double gj = d_.rec_hint[j] - inv_logit(lpj);
    g_eta[i] += gj;
    grad[off_delta() + d_.rec_section[j]] += gj;
  }

  // outcomes
  double d_ls_y0 = 0.0, d_ls_y1 = 0.0;
  double da1 = 0.0, db0 = 0.0, db1 = 0.0;
  for (int i = 0; i < n_; ++i) {
    const double arm = d_.Z[i] ? b0 + b1 * eta[i] : 0.0;
    const double mu = s_tch_y * tch_y_raw[d_.teacher[i]] +
                      s_scl_y * scl_y_raw[d_.school[i]] +
                      pair_eff[d_.pair[i]] + a1 * eta[i] + arm + xby[i];
    const double sig = d_.Z[i] ? s_y1 : s_y0;
    const double e = d_.Y[i] - mu;
    resid[i] = e;
    const double std2 = e * e / (sig * sig);
    lp += -std::log(sig) - 0.5 * std2;
    const double r = e / (sig * sig);
    if (d_.Z[i]) {
      d_ls_y1 += -1.0 + std2;
      db0 += r;
      db1 += r * eta[i];
    } else {
      d_ls_y0 += -1.0 + std2;
    }
    da1 += r * eta[i];
    g_eta[i] += r * (a1 + (d_.Z[i] ? b1 : 0.0));
    grad[off_pair() + d_.pair[i]] += r;
    grad[off_tch_y() + d_.teacher[i]] += r * s_tch_y;
    grad[off_scl_y() + d_.school[i]] += r * s_scl_y;
    grad[off_log_scales() + 0] += r * s_tch_y * tch_y_raw[d_.teacher[i]];
    grad[off_log_scales() + 1] += r * s_scl_y * scl_y_raw[d_.school[i]];
    if (k_ > 0) grad.segment(off_beta_y(), k_) += r * d_.X.row(i).transpose();
  }

  // pull eta sensitivities back to its parents
  for (int i = 0; i < n_; ++i) {
    const double g = g_eta[i];
    grad[off_z() + i] += g * s_u;
    grad[off_tch_u() + d_.teacher[i]] += g * s_tch_u;
    grad[off_scl_u() + d_.school[i]] += g * s_scl_u;
    grad[off_log_scales() + 4] += g * s_tch_u * tch_u_raw[d_.teacher[i]];
    grad[off_log_scales() + 5] += g * s_scl_u * scl_u_raw[d_.school[i]];
    grad[off_log_scales() + 6] += g * s_u * z[i];
    if (k_ > 0) grad.segment(off_beta_u(), k_) += g * d_.X.row(i).transpose();
  }

  // priors; the standardized intercepts carry the N(0,1) term directly
  lp += -0.5 * z.squaredNorm() - 0.5 * tch_y_raw.squaredNorm() -
        0.5 * tch_u_raw.squaredNorm() - 0.5 * scl_u_raw.squaredNorm() -
        0.5 * scl_y_raw.squaredNorm();
  grad.segment(off_z(), n_) -= z;
  grad.segment(off_tch_y(), nt_) -= tch_y_raw;
  grad.segment(off_tch_u(), nt_) -= tch_u_raw;
  grad.segment(off_scl_u(), ns_) -= scl_u_raw;
  grad.segment(off_scl_y(), ns_) -= scl_y_raw;

  lp += -(beta_u.squaredNorm() + beta_y.squaredNorm() +
          pair_eff.squaredNorm()) / 8.0;
  grad.segment(off_beta_u(), k_) -= beta_u / 4.0;
  grad.segment(off_beta_y(), k_) -= beta_y / 4.0;
  grad.segment(off_pair(), np_) -= pair_eff / 4.0;

  lp += -0.5 * (a1 * a1 + b0 * b0 + b1 * b1);
  grad[off_globals() + 0] = da1 - a1;
  grad[off_globals() + 1] = db0 - b0;
  grad[off_globals() + 2] = db1 - b1;

  // half-normal(0,5) on each scale plus the log-transform Jacobian
  const double sigs[7] = {s_tch_y, s_scl_y, s_y0, s_y1,
                          s_tch_u, s_scl_u, s_u};
  grad[off_log_scales() + 2] += d_ls_y0;
  grad[off_log_scales() + 3] += d_ls_y1;
  for (int s = 0; s < 7; ++s) {
    lp += ls[s] - sigs[s] * sigs[s] / 50.0;
    grad[off_log_scales() + s] += 1.0 - sigs[s] * sigs[s] / 25.0;
  }
  return lp;
}

Eigen::VectorXd PSModel::constrain(const Eigen::VectorXd& x) const {
  const auto ls = x.segment(off_log_scales(), 7);
  const double s_tch_y = std::exp(ls[0]);
  const double s_scl_y = std::exp(ls[1]);
  const double s_tch_u = std::exp(ls[4]);
  const double s_scl_u = std::exp(ls[5]);
  const double s_u = std::exp(ls[6]);

  Eigen::VectorXd out(dim());
  for (int i = 0; i < n_; ++i) {
    double xb = k_ > 0 ? d_.X.row(i).dot(x.segment(off_beta_u(), k_)) : 0.0;
    out[i] = s_tch_u * x[off_tch_u() + d_.teacher[i]] +
             s_scl_u * x[off_scl_u() + d_.school[i]] + xb +
             s_u * x[off_z() + i];
  }
  int at = n_;
  out.segment(at, 2 * k_ + 3) = x.segment(off_beta_u(), 2 * k_ + 3);
  at += 2 * k_ + 3;
  out.segment(at, nt_) = s_tch_y * x.segment(off_tch_y(), nt_);
  at += nt_;
  out.segment(at, nt_) = s_tch_u * x.segment(off_tch_u(), nt_);
  at += nt_;
  out.segment(at, np_) = x.segment(off_pair(), np_);
  at += np_;
  out.segment(at, ns_) = s_scl_u * x.segment(off_scl_u(), ns_);
  at += ns_;
  out.segment(at, ns_) = s_scl_y * x.segment(off_scl_y(), ns_);
  at += ns_;
  out.segment(at, nsec_) = x.segment(off_delta(), nsec_);
  at += nsec_;
  out.segment(at, 7) = ls.array().exp();
  return out;
}

std::vector<std::string> PSModel::constrained_names() const {
  std::vector<std::string> names;
  names.reserve(dim());
  for (int i = 0; i < n_; ++i) names.push_back(tag("eta", i));
  for (int j = 0; j < k_; ++j) names.push_back(tag("betaU", j));
  for (int j = 0; j < k_; ++j) names.push_back(tag("betaY", j));
  names.push_back("a1");
  names.push_back("b0");
  names.push_back("b1");
  for (int t = 0; t < nt_; ++t) names.push_back(tag("teacherEffY", t));
  for (int t = 0; t < nt_; ++t) names.push_back(tag("teacherEffU", t));
  for (int p = 0; p < np_; ++p) names.push_back(tag("pairEffect", p));
  for (int s = 0; s < ns_; ++s) names.push_back(tag("schoolEffU", s));
  for (int s = 0; s < ns_; ++s) names.push_back(tag("schoolEffY", s));
  for (int s = 0; s < nsec_; ++s) names.push_back(tag("delta", s));
  const char* scale_names[7] = {"sigTchY", "sigSclY", "sigY0", "sigY1",
                                "sigTchU", "sigSclU", "sigU"};
  for (const char* s : scale_names) names.push_back(s);
  return names;
}

Eigen::VectorXd PSModel::init_point(Rng& rng, double radius) const {
  // standardized coordinates start near the prior bulk, scales below one;
  // wide uniform starts on thousands of z coordinates stall adaptation
  Eigen::VectorXd x(dim());
  const double r = std::min(radius, 2.0) / 2.0;
  for (int i = 0; i < dim(); ++i) x[i] = rng.uniform(-r, r);
  for (int s = 0; s < 7; ++s)
    x[off_log_scales() + s] = rng.uniform(-1.0, 0.0);
  return x;
}

PSFit fit_ps(const PSData& data, const mcmc::SamplerConfig& cfg) {
  PSModel model(data);
  PSFit fit;
  fit.draws = mcmc::hmc_sample(model, cfg);
  fit.n_students = data.n_students();
  fit.n_sections = data.n_section;
  const int n = data.n_students();
  const int k = static_cast<int>(data.X.cols());
  fit.col_eta = 0;
  fit.col_b0 = n + 2 * k + 1;
  fit.col_b1 = n + 2 * k + 2;
  fit.col_delta = n + 2 * k + 3 + 2 * data.n_teacher + data.n_pair +
                  2 * data.n_school;
  fit.col_scales = fit.col_delta + data.n_section;

  std::vector<int> watch = {fit.col_b0 - 1, fit.col_b0, fit.col_b1};
  for (int s = 0; s < 7; ++s) watch.push_back(fit.col_scales + s);
  fit.max_rhat = 0.0;
  for (int j : watch) {
    auto d = mcmc::rhat(fit.draws, j);
    if (!d.defined || d.value >= 1.01) fit.flagged.push_back(fit.draws.names[j]);
    if (d.defined) fit.max_rhat = std::max(fit.max_rhat, d.value);
  }
  fit.valid = fit.flagged.empty();
  return fit;
}

namespace {

// one posterior draw as a row of the constrained draw matrix
Eigen::RowVectorXd draw_row(const PSFit& fit, int d) {
  const int iters = fit.draws.n_iters();
  return fit.draws.chains[d / iters].row(d % iters);
}

int total_draws(const PSFit& fit) {
  return fit.draws.n_chains() * fit.draws.n_iters();
}

// outcome mean for every student under one draw
Eigen::VectorXd muy_from_row(const Eigen::RowVectorXd& row, const PSFit& fit,
                             const PSData& data) {
  const int n = data.n_students();
  const int k = static_cast<int>(data.X.cols());
  const int base = n + 2 * k + 3;
  const int at_tch_y = base;
  const int at_pair = base + 2 * data.n_teacher;
  const int at_scl_y = at_pair + data.n_pair + data.n_school;
  const double a1 = row[n + 2 * k];
  const double b0 = row[fit.col_b0];
  const double b1 = row[fit.col_b1];
  Eigen::VectorXd mu(n);
  for (int i = 0; i < n; ++i) {
    const double eta = row[i];
    double xb = 0.0;
    for (int j = 0; j < k; ++j) xb += data.X(i, j) * row[n + k + j];
    mu[i] = row[at_tch_y + data.teacher[i]] + row[at_scl_y + data.school[i]] +
            row[at_pair + data.pair[i]] + a1 * eta +
            (data.Z[i] ? b0 + b1 * eta : 0.0) + xb;
  }
  return mu;
}

bool in_group(Group g, int z) {
  return g == Group::pooled || (g == Group::treatment ? z == 1 : z == 0);
}

double silverman_bandwidth(const std::vector<double>& sample) {
  const int n = static_cast<int>(sample.size());
  double sd = n > 1 ? std::sqrt(stats::variance(sample)) : 0.0;
  double iqr = stats::quantile(sample, 0.75) - stats::quantile(sample, 0.25);
  double spread = sd;
  if (iqr > 0.0) spread = std::min(spread, iqr / 1.34);
  double h = 0.9 * spread * std::pow(std::max(n, 2), -0.2);
  return h > 0.0 ? h : 1e-3;
}

// Gaussian kernel density on a fixed grid with an explicit bandwidth; a
// shared bandwidth keeps group curves mixing exactly into the pooled one
std::vector<double> kde_curve(const std::vector<double>& sample,
                              const std::vector<double>& grid, double h) {
  const int n = static_cast<int>(sample.size());
  std::vector<double> out(grid.size(), 0.0);
  if (n == 0) return out;
  const double norm = 1.0 / (n * h * std::sqrt(2.0 * M_PI));
  for (std::size_t g = 0; g < grid.size(); ++g) {
    double acc = 0.0;
    for (double v : sample) {
      double u = (grid[g] - v) / h;
      acc += std::exp(-0.5 * u * u);
    }
    out[g] = acc * norm;
  }
  return out;
}

}  // namespace

PrincipalEffectCurve principal_effect_curve(
    const PSFit& fit, const std::vector<double>& r_grid) {
  if (r_grid.empty()) throw Error("effect curve: empty grid");
  const std::vector<double> b0 = fit.draws.flat(fit.col_b0);
  const std::vector<double> b1 = fit.draws.flat(fit.col_b1);
  const int nd = static_cast<int>(b0.size());
  PrincipalEffectCurve out;
  out.r = r_grid;
  out.mean.resize(r_grid.size());
  out.lo.resize(r_grid.size());
  out.hi.resize(r_grid.size());
  std::vector<double> tau(nd);
  for (std::size_t g = 0; g < r_grid.size(); ++g) {
    for (int d = 0; d < nd; ++d) tau[d] = b0[d] + b1[d] * r_grid[g];
    out.mean[g] = stats::mean(tau);
    out.lo[g] = stats::quantile(tau, 0.025);
    out.hi[g] = stats::quantile(tau, 0.975);
  }
  int pos = 0;
  for (double v : b1) pos += v > 0.0;
  out.p_b1_pos = static_cast<double>(pos) / nd;
  out.b1_hdi = mcmc::hdi(b1, 0.95);
  return out;
}

DensityCurves ppc_density(const PSFit& fit, const PSData& data, Group group,
                          int n_rep, int grid_size, std::uint64_t seed) {
  if (n_rep <= 0 || grid_size < 2) throw Error("ppc: bad configuration");
  const int n = data.n_students();
  std::vector<int> keep;
  for (int i = 0; i < n; ++i)
    if (in_group(group, data.Z[i])) keep.push_back(i);
  if (keep.empty()) throw Error("ppc: no students in requested group");

  // grid, bandwidth, and the replicate noise stream all come from the full
  // sample so the three group calls line up point for point
  const double h = silverman_bandwidth(data.Y);
  double lo = *std::min_element(data.Y.begin(), data.Y.end());
  double hi = *std::max_element(data.Y.begin(), data.Y.end());
  double pad = std::max(0.25 * (hi - lo), 3.5 * h) + 1e-6;
  DensityCurves out;
  out.grid.resize(grid_size);
  for (int g = 0; g < grid_size; ++g)
    out.grid[g] = lo - pad + (hi - lo + 2 * pad) * g / (grid_size - 1);
  std::vector<double> y_group;
  y_group.reserve(keep.size());
  for (int i : keep) y_group.push_back(data.Y[i]);
  out.observed = kde_curve(y_group, out.grid, h);

  Rng rng(seed);
  const int nd = total_draws(fit);
  out.replicates.resize(n_rep, grid_size);
  std::vector<double> y_all(n);
  for (int r = 0; r < n_rep; ++r) {
    const auto row = draw_row(fit, static_cast<int>(rng.uniform_int(0, nd - 1)));
    const Eigen::VectorXd mu = muy_from_row(row, fit, data);
    const double s0 = row[fit.col_scales + 2];
    const double s1 = row[fit.col_scales + 3];
    for (int i = 0; i < n; ++i)
      y_all[i] = rng.normal(mu[i], data.Z[i] ? s1 : s0);
    for (std::size_t q = 0; q < keep.size(); ++q)
      y_group[q] = y_all[keep[q]];
    auto curve = kde_curve(y_group, out.grid, h);
    for (int g = 0; g < grid_size; ++g) out.replicates(r, g) = curve[g];
  }
  return out;
}

ResidualTable residual_table(const PSFit& fit, const PSData& data,
                             Group group) {
  const int n = data.n_students();
  const int nd = total_draws(fit);
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(n);
  for (int d = 0; d < nd; ++d)
    acc += muy_from_row(draw_row(fit, d), fit, data);
  acc /= nd;
  ResidualTable out;
  for (int i = 0; i < n; ++i) {
    if (!in_group(group, data.Z[i])) continue;
    out.student.push_back(i);
    out.fitted.push_back(acc[i]);
    out.residual.push_back(data.Y[i] - acc[i]);
  }
  return out;
}

std::vector<BinnedResidualDraw> binned_residuals(const PSFit& fit,
                                                 const PSData& data,
                                                 int n_bins, int n_draws,
                                                 std::uint64_t seed) {
  const int m = data.n_records();
  if (m == 0) throw Error("binned residuals: no help records");
  if (n_bins < 1) throw Error("binned residuals: bad bin count");
  n_bins = std::min(n_bins, m);  // surplus bins would come out empty
  Rng rng(seed);
  const int nd = total_draws(fit);
  std::vector<BinnedResidualDraw> out;
  std::vector<int> order(m);
  std::vector<double> p(m);
  for (int d = 0; d < n_draws; ++d) {
    const auto row = draw_row(fit, static_cast<int>(rng.uniform_int(0, nd - 1)));
    for (int j = 0; j < m; ++j)
      p[j] = inv_logit(row[fit.col_delta + data.rec_section[j]] +
                       row[data.rec_student[j]]);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](int a, int b) { return p[a] < p[b]; });
    BinnedResidualDraw br;
    for (int b = 0; b < n_bins; ++b) {
      const int lo = b * m / n_bins, hi = (b + 1) * m / n_bins;
      if (lo == hi) continue;
      double pp = 0.0, oo = 0.0;
      for (int q = lo; q < hi; ++q) {
        pp += p[order[q]];
        oo += data.rec_hint[order[q]];
      }
      br.predicted.push_back(pp / (hi - lo));
      br.gap.push_back((oo - pp) / (hi - lo));
      br.count.push_back(hi - lo);
    }
    out.push_back(std::move(br));
  }
  return out;
}

FakeData fake_data_duplicate(const PSData& src, const std::vector<double>& eta,
                             const EffectSpec& spec, std::uint64_t seed) {
  src.validate();
  if (eta.size() != static_cast<std::size_t>(src.n_students()))
    throw Error("fake data: eta length mismatch");
  std::vector<int> arm;
  for (int i = 0; i < src.n_students(); ++i)
    if (src.Z[i] == 1) arm.push_back(i);
  const int n1 = static_cast<int>(arm.size());
  if (n1 == 0) throw Error("fake data: no treatment-arm students");

  // dense relabels over the ids the arm actually uses
  std::vector<int> tmap(src.n_teacher, -1), smap(src.n_school, -1),
      pmap(src.n_pair, -1);
  int nt = 0, ns = 0, np = 0;
  for (int i : arm) {
    if (tmap[src.teacher[i]] < 0) tmap[src.teacher[i]] = nt++;
    if (smap[src.school[i]] < 0) smap[src.school[i]] = ns++;
    if (pmap[src.pair[i]] < 0) pmap[src.pair[i]] = np++;
  }

  Rng rng(seed);
  FakeData fake;
  fake.true_tau.resize(n1);
  for (int q = 0; q < n1; ++q) {
    const double r = eta[arm[q]];
    switch (spec.kind) {
      case EffectSpec::Kind::none:
        fake.true_tau[q] = 0.0;
        break;
      case EffectSpec::Kind::random:
        fake.true_tau[q] = rng.normal(spec.c0, spec.c1);
        break;
      case EffectSpec::Kind::linear:
        fake.true_tau[q] = spec.c0 + spec.c1 * r;
        break;
      case EffectSpec::Kind::quadratic:
        fake.true_tau[q] = spec.c0 + spec.c1 * r + spec.c2 * r * r;
        break;
    }
  }

  PSData& d = fake.data;
  const int n2 = 2 * n1;
  d.Y.resize(n2);
  d.Z.resize(n2);
  d.X.resize(n2, src.X.cols());
  d.teacher.resize(n2);
  d.school.resize(n2);
  d.pair.resize(n2);
  // treatment copies first, then the control clones under fresh
  // teacher and school labels; pairs stay shared across the two copies
  for (int q = 0; q < n1; ++q) {
    const int i = arm[q];
    d.Y[q] = src.Y[i] + fake.true_tau[q];
    d.Z[q] = 1;
    d.X.row(q) = src.X.row(i);
    d.teacher[q] = tmap[src.teacher[i]];
    d.school[q] = smap[src.school[i]];
    d.pair[q] = pmap[src.pair[i]];
    d.Y[n1 + q] = src.Y[i];
    d.Z[n1 + q] = 0;
    d.X.row(n1 + q) = src.X.row(i);
    d.teacher[n1 + q] = nt + tmap[src.teacher[i]];
    d.school[n1 + q] = ns + smap[src.school[i]];
    d.pair[n1 + q] = pmap[src.pair[i]];
  }
  d.n_teacher = 2 * nt;
  d.n_school = 2 * ns;
  d.n_pair = np;

  std::vector<int> stud_pos(src.n_students(), -1);
  for (int q = 0; q < n1; ++q) stud_pos[arm[q]] = q;
  for (int j = 0; j < src.n_records(); ++j) {
    const int q = stud_pos[src.rec_student[j]];
    if (q < 0) continue;  // records of control students do not carry over
    d.rec_student.push_back(q);
    d.rec_section.push_back(src.rec_section[j]);
    d.rec_hint.push_back(src.rec_hint[j]);
  }
  d.n_section = src.n_section;
  d.validate();
  return fake;
}

}  // namespace hintlab::ps
