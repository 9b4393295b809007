#include "hintlab/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <thread>

#include "hintlab/common.hpp"
#include "hintlab/csv.hpp"
#include "hintlab/stats.hpp"

namespace hintlab::mcmc {

Eigen::VectorXd Model::constrain(const Eigen::VectorXd& x) const { return x; }

Eigen::VectorXd Model::init_point(Rng& rng, double radius) const {
  Eigen::VectorXd x(dim());
  for (int i = 0; i < x.size(); ++i) x[i] = rng.uniform(-radius, radius);
  return x;
}

std::vector<std::string> Model::constrained_names() const {
  std::vector<std::string> out;
  out.reserve(dim());
  for (int i = 0; i < dim(); ++i) out.push_back("p" + std::to_string(i));
  return out;
}

int PosteriorDraws::index_of(const std::string& name) const {
  for (std::size_t j = 0; j < names.size(); ++j)
    if (names[j] == name) return static_cast<int>(j);
  throw Error("unknown parameter name: " + name);
}

Eigen::MatrixXd PosteriorDraws::parameter(int j) const {
  Eigen::MatrixXd out(n_iters(), n_chains());
  for (int c = 0; c < n_chains(); ++c) out.col(c) = chains[c].col(j);
  return out;
}

std::vector<double> PosteriorDraws::flat(int j) const {
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(n_iters()) * n_chains());
  for (const auto& m : chains)
    for (int i = 0; i < m.rows(); ++i) out.push_back(m(i, j));
  return out;
}

double PosteriorDraws::mean(int j) const { return stats::mean(flat(j)); }

double PosteriorDraws::sd(int j) const {
  return std::sqrt(stats::variance(flat(j)));
}

int PosteriorDraws::total_divergences() const {
  int s = 0;
  for (int d : divergences) s += d;
  return s;
}

namespace {

constexpr double kDivergenceGap = 1000.0;

struct DualAverager {
  double mu = 0.0;
  double log_eps = 0.0;
  double log_eps_bar = 0.0;
  double h_bar = 0.0;
  int count = 0;
  static constexpr double gamma = 0.05;
  static constexpr double t0 = 10.0;
  static constexpr double kappa = 0.75;

  void restart(double eps) {
    mu = std::log(10.0 * eps);
    log_eps = std::log(eps);
    log_eps_bar = 0.0;
    h_bar = 0.0;
    count = 0;
  }
  void update(double accept_prob, double target) {
    ++count;
    double eta = 1.0 / (count + t0);
    h_bar = (1.0 - eta) * h_bar + eta * (target - accept_prob);
    log_eps = mu - std::sqrt(static_cast<double>(count)) / gamma * h_bar;
    double w = std::pow(static_cast<double>(count), -kappa);
    log_eps_bar = w * log_eps + (1.0 - w) * log_eps_bar;
  }
  double eps() const { return std::exp(log_eps); }
  double eps_bar() const { return std::exp(log_eps_bar); }
};

// warmup phases: stepsize-only buffer, doubling covariance windows, then a
// final stepsize-only buffer
struct AdaptSchedule {
  int init_buffer = 75;
  int term_buffer = 50;
  int base_window = 25;
  std::vector<int> window_ends;  // iteration indices closing a mass window
  int warmup = 0;

  explicit AdaptSchedule(int warmup_iters) : warmup(warmup_iters) {
    if (warmup < init_buffer + term_buffer + base_window) {
      init_buffer = std::max(1, warmup / 4);
      term_buffer = std::max(1, warmup / 10);
      base_window = warmup - init_buffer - term_buffer;
      if (base_window < 1) {
        init_buffer = warmup;
        term_buffer = 0;
        base_window = 0;
        return;
      }
    }
    int pos = init_buffer;
    int size = base_window;
    while (true) {
      int end = pos + size;
      // absorb a too-small trailing window into this one
      if (end + 2 * size > warmup - term_buffer) end = warmup - term_buffer;
      window_ends.push_back(end);
      if (end >= warmup - term_buffer) break;
      pos = end;
      size *= 2;
    }
  }
  bool in_mass_window(int it) const {
    return !window_ends.empty() && it >= init_buffer &&
           it < window_ends.back();
  }
  bool closes_window(int it) const {
    return std::find(window_ends.begin(), window_ends.end(), it + 1) !=
           window_ends.end();
  }
};

struct RunningVariance {
  Eigen::VectorXd m;
  Eigen::VectorXd s;
  Eigen::MatrixXd tail_c;  // cross moments for the trailing dense block
  int tail = 0;
  long n = 0;
  RunningVariance(int d, int tail_dim)
      : m(Eigen::VectorXd::Zero(d)),
        s(Eigen::VectorXd::Zero(d)),
        tail_c(Eigen::MatrixXd::Zero(tail_dim, tail_dim)),
        tail(tail_dim) {}
  void add(const Eigen::VectorXd& x) {
    ++n;
    Eigen::VectorXd delta = x - m;
    m += delta / static_cast<double>(n);
    Eigen::VectorXd delta2 = x - m;
    s += delta.cwiseProduct(delta2);
    if (tail > 0)
      tail_c += delta.tail(tail) * delta2.tail(tail).transpose();
  }
  // regularized sample variance, shrunk toward a small constant
  Eigen::VectorXd regularized() const {
    double nn = static_cast<double>(std::max<long>(n, 2));
    Eigen::VectorXd var = s / (nn - 1.0);
    double w = nn / (nn + 5.0);
    return w * var.array() + (1.0 - w) * 1e-3;
  }
  Eigen::MatrixXd regularized_tail() const {
    double nn = static_cast<double>(std::max<long>(n, 2));
    Eigen::MatrixXd cov = tail_c / (nn - 1.0);
    double w = nn / (nn + 5.0);
    return w * cov +
           (1.0 - w) * 1e-3 * Eigen::MatrixXd::Identity(tail, tail);
  }
  void reset() {
    m.setZero();
    s.setZero();
    tail_c.setZero();
    n = 0;
  }
};

struct ChainResult {
  Eigen::MatrixXd draws;  // iters x constrained dim
  int divergences = 0;
  double step_size = 0.0;
  double accept_rate = 0.0;
  Eigen::VectorXd inv_mass;
  std::string error;  // non-empty on failure
};

// diagonal metric, optionally with a dense block on the trailing coordinates
class Hamiltonian {
 public:
  Hamiltonian(const Model& model, int dim, int tail_dim)
      : model_(model),
        inv_mass_(Eigen::VectorXd::Ones(dim)),
        tail_(tail_dim),
        head_(dim - tail_dim) {
    if (tail_ > 0) set_tail(Eigen::MatrixXd::Identity(tail_, tail_));
  }

  void set_inv_mass(const Eigen::VectorXd& im) { inv_mass_ = im; }
  void set_tail(const Eigen::MatrixXd& minv) {
    Eigen::LLT<Eigen::MatrixXd> llt(minv);
    if (llt.info() != Eigen::Success) {
      // fall back to the diagonal for a non-positive-definite estimate
      Eigen::MatrixXd diag = minv.diagonal().asDiagonal();
      llt.compute(diag);
      minv_tail_ = diag;
    } else {
      minv_tail_ = minv;
    }
    tail_chol_ = llt.matrixL();
    inv_mass_.tail(tail_) = minv_tail_.diagonal();
  }
  const Eigen::VectorXd& inv_mass() const { return inv_mass_; }

  double kinetic(const Eigen::VectorXd& p) const {
    double k = 0.5 * p.head(head_)
                        .cwiseProduct(inv_mass_.head(head_))
                        .dot(p.head(head_));
    if (tail_ > 0) k += 0.5 * p.tail(tail_).dot(minv_tail_ * p.tail(tail_));
    return k;
  }
  Eigen::VectorXd sample_momentum(Rng& rng) const {
    Eigen::VectorXd p(inv_mass_.size());
    for (int i = 0; i < head_; ++i)
      p[i] = rng.normal() / std::sqrt(inv_mass_[i]);
    if (tail_ > 0) {
      Eigen::VectorXd z(tail_);
      for (int i = 0; i < tail_; ++i) z[i] = rng.normal();
      // cov(L^-T z) = (L L^T)^-1, the inverse of the tail inverse mass
      p.tail(tail_) =
          tail_chol_.transpose().triangularView<Eigen::Upper>().solve(z);
    }
    return p;
  }
  // one leapfrog step; returns logp at the new position
  double leapfrog(Eigen::VectorXd& q, Eigen::VectorXd& p, Eigen::VectorXd& grad,
                  double eps) const {
    p += 0.5 * eps * grad;
    q.head(head_) +=
        eps * inv_mass_.head(head_).cwiseProduct(p.head(head_));
    if (tail_ > 0) q.tail(tail_) += eps * (minv_tail_ * p.tail(tail_));
    double lp = model_.logp_grad(q, grad);
    p += 0.5 * eps * grad;
    return lp;
  }

 private:
  const Model& model_;
  Eigen::VectorXd inv_mass_;
  Eigen::MatrixXd minv_tail_;
  Eigen::MatrixXd tail_chol_;
  int tail_ = 0;
  int head_ = 0;
};

struct Trajectory {
  double accept_prob = 0.0;
  bool divergent = false;
  bool accepted = false;
};

Trajectory run_trajectory(const Hamiltonian& ham, const Model& model,
                          Eigen::VectorXd& q, double& logp, double eps,
                          int steps, Rng& rng) {
  Trajectory tr;
  Eigen::VectorXd p = ham.sample_momentum(rng);
  double h0 = -logp + ham.kinetic(p);
  Eigen::VectorXd q_new = q;
  Eigen::VectorXd grad(q.size());
  double lp = model.logp_grad(q_new, grad);
  for (int s = 0; s < steps; ++s) {
    lp = ham.leapfrog(q_new, p, grad, eps);
    double h = -lp + ham.kinetic(p);
    if (!std::isfinite(h) || h - h0 > kDivergenceGap) {
      tr.divergent = true;
      tr.accept_prob = 0.0;
      return tr;
    }
  }
  double h1 = -lp + ham.kinetic(p);
  tr.accept_prob = std::min(1.0, std::exp(h0 - h1));
  if (rng.uniform() < tr.accept_prob) {
    q = q_new;
    logp = lp;
    tr.accepted = true;
  }
  return tr;
}

double find_initial_step(const Hamiltonian& ham, const Model& model,
                         const Eigen::VectorXd& q0, double logp0, Rng& rng) {
  double eps = 1.0;
  Eigen::VectorXd p = ham.sample_momentum(rng);
  auto accept_of = [&](double e) {
    Eigen::VectorXd q = q0;
    Eigen::VectorXd pp = p;
    Eigen::VectorXd grad(q.size());
    model.logp_grad(q, grad);
    double h0 = -logp0 + ham.kinetic(pp);
    double lp = ham.leapfrog(q, pp, grad, e);
    double h1 = -lp + ham.kinetic(pp);
    if (!std::isfinite(h1)) return 0.0;
    return std::exp(h0 - h1);
  };
  double a = accept_of(eps);
  bool grow = a > 0.5;
  for (int i = 0; i < 60; ++i) {
    eps *= grow ? 2.0 : 0.5;
    a = accept_of(eps);
    if (grow ? (a <= 0.5) : (a >= 0.5)) break;
  }
  return std::clamp(eps, 1e-10, 1e3);
}

int steps_for(double integration_time, double eps, int max_steps) {
  int L = static_cast<int>(std::lround(integration_time / eps));
  return std::clamp(L, 1, max_steps);
}

ChainResult run_chain(const Model& model, const SamplerConfig& cfg,
                      int chain_id) {
  ChainResult res;
  const int d = model.dim();
  Rng rng(cfg.seed, static_cast<std::uint64_t>(chain_id));

  Eigen::VectorXd q(d), grad(d);
  double logp = -std::numeric_limits<double>::infinity();
  bool ok = false;
  for (int attempt = 0; attempt < 100 && !ok; ++attempt) {
    q = model.init_point(rng, cfg.init_radius);
    logp = model.logp_grad(q, grad);
    ok = std::isfinite(logp) && grad.allFinite();
  }
  if (!ok) {
    res.error = "could not find a finite starting point";
    return res;
  }

  const int tail = std::clamp(model.dense_tail(), 0, d);
  Hamiltonian ham(model, d, tail);
  DualAverager da;
  da.restart(find_initial_step(ham, model, q, logp, rng));
  AdaptSchedule sched(cfg.warmup);
  RunningVariance rv(d, tail);

  for (int it = 0; it < cfg.warmup; ++it) {
    double eps = da.eps();
    int max_L = steps_for(cfg.integration_time, eps, cfg.max_steps);
    int L = static_cast<int>(rng.uniform_int(1, max_L));
    Trajectory tr = run_trajectory(ham, model, q, logp, eps, L, rng);
    da.update(tr.accept_prob, cfg.target_accept);
    if (sched.in_mass_window(it)) rv.add(q);
    if (sched.closes_window(it)) {
      ham.set_inv_mass(rv.regularized());
      if (tail > 0) ham.set_tail(rv.regularized_tail());
      rv.reset();
      da.restart(da.eps_bar());
    }
  }

  double eps = cfg.warmup > 0 ? da.eps_bar() : da.eps();
  res.step_size = eps;
  res.inv_mass = ham.inv_mass();

  const auto names = model.constrained_names();
  res.draws.resize(cfg.iters, static_cast<int>(names.size()));
  double accept_sum = 0.0;
  for (int it = 0; it < cfg.iters; ++it) {
    int max_L = steps_for(cfg.integration_time, eps, cfg.max_steps);
    int L = static_cast<int>(rng.uniform_int(1, max_L));
    Trajectory tr = run_trajectory(ham, model, q, logp, eps, L, rng);
    if (tr.divergent) ++res.divergences;
    accept_sum += tr.accept_prob;
    res.draws.row(it) = model.constrain(q).transpose();
  }
  res.accept_rate = cfg.iters > 0 ? accept_sum / cfg.iters : 0.0;
  return res;
}

}  // namespace

PosteriorDraws hmc_sample(const Model& target, const SamplerConfig& cfg) {
  if (target.dim() <= 0) throw Error("sampler: model dimension must be positive");
  if (cfg.chains < 1) throw Error("sampler: need at least one chain");
  if (cfg.iters < 1) throw Error("sampler: need at least one draw");
  if (cfg.warmup < 0) throw Error("sampler: warmup must be nonnegative");

  std::vector<ChainResult> results(cfg.chains);
  std::vector<std::thread> workers;
  workers.reserve(cfg.chains);
  for (int c = 0; c < cfg.chains; ++c)
    workers.emplace_back(
        [&, c]() { results[c] = run_chain(target, cfg, c); });
  for (auto& w : workers) w.join();

  for (const auto& r : results)
    if (!r.error.empty()) throw Error("sampler: " + r.error);

  PosteriorDraws out;
  out.names = target.constrained_names();
  for (auto& r : results) {
    out.chains.push_back(std::move(r.draws));
    out.divergences.push_back(r.divergences);
    out.step_sizes.push_back(r.step_size);
    out.accept_rates.push_back(r.accept_rate);
  }
  out.inv_mass_diag = results.front().inv_mass;
  return out;
}

namespace {

// within/between pieces shared by rhat and ess, on split chains
struct SplitStats {
  Eigen::MatrixXd split;  // half-iters x 2*chains
  double w = 0.0;         // mean within-chain variance
  double b_over_n = 0.0;  // between-chain variance / n
  double var_plus = 0.0;
  bool defined = false;
};

SplitStats split_stats(const Eigen::MatrixXd& draws) {
  SplitStats st;
  const int n2 = static_cast<int>(draws.rows()) / 2;
  const int m = static_cast<int>(draws.cols());
  if (n2 < 2 || m < 1) return st;
  st.split.resize(n2, 2 * m);
  for (int c = 0; c < m; ++c) {
    st.split.col(2 * c) = draws.col(c).head(n2);
    st.split.col(2 * c + 1) = draws.col(c).segment(draws.rows() - n2, n2);
  }
  const int mm = 2 * m;
  Eigen::VectorXd means(mm), vars(mm);
  for (int c = 0; c < mm; ++c) {
    means[c] = st.split.col(c).mean();
    vars[c] = (st.split.col(c).array() - means[c]).square().sum() / (n2 - 1);
  }
  st.w = vars.mean();
  double grand = means.mean();
  double var_of_means =
      mm > 1 ? (means.array() - grand).square().sum() / (mm - 1) : 0.0;
  st.b_over_n = var_of_means;
  st.var_plus = st.w * (n2 - 1.0) / n2 + st.b_over_n;
  st.defined = st.w > 0.0 || st.b_over_n > 0.0;
  return st;
}

// fractional ranks mapped through the normal quantile function
Eigen::MatrixXd rank_normalize(const Eigen::MatrixXd& draws) {
  const int n = static_cast<int>(draws.rows());
  const int m = static_cast<int>(draws.cols());
  const int total = n * m;
  std::vector<std::pair<double, int>> vals;
  vals.reserve(total);
  for (int c = 0; c < m; ++c)
    for (int i = 0; i < n; ++i)
      vals.emplace_back(draws(i, c), c * n + i);
  std::sort(vals.begin(), vals.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<double> rank(total);
  int i = 0;
  while (i < total) {
    int j = i;
    while (j + 1 < total && vals[j + 1].first == vals[i].first) ++j;
    double avg = 0.5 * (i + j) + 1.0;  // average rank, 1-based
    for (int k = i; k <= j; ++k) rank[vals[k].second] = avg;
    i = j + 1;
  }
  Eigen::MatrixXd out(n, m);
  for (int c = 0; c < m; ++c)
    for (int r = 0; r < n; ++r) {
      double u = (rank[c * n + r] - 0.375) / (total + 0.25);
      out(r, c) = stats::normal_quantile(u);
    }
  return out;
}

}  // namespace

Diagnostic split_rhat(const Eigen::MatrixXd& draws) {
  SplitStats st = split_stats(draws);
  if (!st.defined || st.w <= 0.0) return {};
  const double n = static_cast<double>(st.split.rows());
  double v = (n - 1.0) / n * st.w + st.b_over_n;
  return {std::sqrt(v / st.w), true};
}

Diagnostic bulk_ess(const Eigen::MatrixXd& draws) {
  SplitStats st = split_stats(rank_normalize(draws));
  if (!st.defined || st.var_plus <= 0.0) return {};
  const int n = static_cast<int>(st.split.rows());
  const int m = static_cast<int>(st.split.cols());
  Eigen::VectorXd means(m);
  for (int c = 0; c < m; ++c) means[c] = st.split.col(c).mean();

  auto acov = [&](int lag) {
    double s = 0.0;
    for (int c = 0; c < m; ++c) {
      double a = 0.0;
      for (int i = 0; i + lag < n; ++i)
        a += (st.split(i, c) - means[c]) * (st.split(i + lag, c) - means[c]);
      s += a / n;
    }
    return s / m;
  };

  // Geyer initial monotone positive sequence over lag pairs
  double rho_prev_pair = 2.0;  // no constraint on the first pair
  double tau = 1.0;
  for (int t = 1; t + 1 < n; t += 2) {
    double pair = (st.var_plus - st.w + acov(t)) / st.var_plus +
                  (st.var_plus - st.w + acov(t + 1)) / st.var_plus;
    if (pair < 0.0) break;
    pair = std::min(pair, rho_prev_pair);
    tau += 2.0 * pair;
    rho_prev_pair = pair;
  }
  double ess = static_cast<double>(n) * m / tau;
  return {ess, true};
}

Diagnostic rhat(const PosteriorDraws& d, int param) {
  return split_rhat(d.parameter(param));
}

Diagnostic ess(const PosteriorDraws& d, int param) {
  return bulk_ess(d.parameter(param));
}

std::pair<double, double> hdi(std::vector<double> draws, double mass) {
  if (draws.empty()) throw Error("hdi: no draws");
  if (!(mass > 0.0 && mass <= 1.0)) throw Error("hdi: mass must be in (0, 1]");
  std::sort(draws.begin(), draws.end());
  const int n = static_cast<int>(draws.size());
  int k = std::clamp(static_cast<int>(std::ceil(mass * n)), 1, n);
  int best = 0;
  double best_width = std::numeric_limits<double>::infinity();
  for (int i = 0; i + k <= n; ++i) {
    double w = draws[i + k - 1] - draws[i];
    if (w < best_width) {
      best_width = w;
      best = i;
    }
  }
  return {draws[best], draws[best + k - 1]};
}

void write_draws_csv(const std::string& path, const PosteriorDraws& d) {
  csv::Table t;
  t.header = {"chain", "iter"};
  for (const auto& n : d.names) t.header.push_back(n);
  for (int c = 0; c < d.n_chains(); ++c)
    for (int i = 0; i < d.n_iters(); ++i) {
      std::vector<std::string> row;
      row.reserve(d.names.size() + 2);
      row.push_back(std::to_string(c));
      row.push_back(std::to_string(i));
      for (int j = 0; j < d.n_params(); ++j)
        row.push_back(csv::format_double(d.chains[c](i, j)));
      t.rows.push_back(std::move(row));
    }
  csv::write_file(path, t);
}

}  // namespace hintlab::mcmc
