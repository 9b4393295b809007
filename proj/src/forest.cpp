#include "hintlab/forest.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "hintlab/stats.hpp"

namespace hintlab::forest {

namespace {

struct Split {
  int feature = -1;
  double threshold = 0.0;
  double gain = 0.0;
};

// CART impurity scan over one feature within a node
Split best_split_for_feature(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                             const std::vector<int>& rows, int feature,
                             bool classify, int n_classes, int min_node) {
  Split best;
  best.feature = feature;
  std::vector<int> order = rows;
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    return X(a, feature) < X(b, feature);
  });
  const int n = static_cast<int>(order.size());

  if (classify) {
    std::vector<double> left(n_classes, 0.0), total(n_classes, 0.0);
    for (int i : order) total[static_cast<int>(y[i])] += 1.0;
    double parent = 0.0;
    for (double c : total) parent += c * c;
    parent = 1.0 - parent / (static_cast<double>(n) * n);  // gini
    double sl = 0.0;  // sum of squared left counts
    double st = 0.0;
    for (double c : total) st += c * c;
    int nl = 0;
    for (int k = 0; k + 1 < n; ++k) {
      int cls = static_cast<int>(y[order[k]]);
      sl += 2.0 * left[cls] + 1.0;
      st += -2.0 * total[cls] + 1.0;
      left[cls] += 1.0;
      total[cls] -= 1.0;
      ++nl;
      if (X(order[k + 1], feature) <= X(order[k], feature)) continue;
      int nr = n - nl;
      if (nl < min_node || nr < min_node) continue;
      double gini_l = 1.0 - sl / (static_cast<double>(nl) * nl);
      double gini_r = 1.0 - st / (static_cast<double>(nr) * nr);
      double child = (nl * gini_l + nr * gini_r) / n;
      double gain = parent - child;
      if (gain > best.gain) {
        best.gain = gain;
        best.threshold = 0.5 * (X(order[k], feature) + X(order[k + 1], feature));
      }
    }
  } else {
    double sum = 0.0, sum2 = 0.0;
    for (int i : order) {
      sum += y[i];
      sum2 += y[i] * y[i];
    }
    double parent_sse = sum2 - sum * sum / n;
    double ls = 0.0, ls2 = 0.0;
    int nl = 0;
    for (int k = 0; k + 1 < n; ++k) {
      double v = y[order[k]];
      ls += v;
      ls2 += v * v;
      ++nl;
      if (X(order[k + 1], feature) <= X(order[k], feature)) continue;
      int nr = n - nl;
      if (nl < min_node || nr < min_node) continue;
      double rs = sum - ls, rs2 = sum2 - ls2;
      double sse = (ls2 - ls * ls / nl) + (rs2 - rs * rs / nr);
      double gain = parent_sse - sse;
      if (gain > best.gain) {
        best.gain = gain;
        best.threshold = 0.5 * (X(order[k], feature) + X(order[k + 1], feature));
      }
    }
  }
  return best;
}

double leaf_value(const Eigen::VectorXd& y, const std::vector<int>& rows,
                  bool classify, int n_classes) {
  if (classify) {
    std::vector<int> counts(n_classes, 0);
    for (int i : rows) ++counts[static_cast<int>(y[i])];
    return static_cast<double>(std::max_element(counts.begin(), counts.end()) -
                               counts.begin());
  }
  double s = 0.0;
  for (int i : rows) s += y[i];
  return s / static_cast<double>(rows.size());
}

}  // namespace

void RandomForest::fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                       bool classify, int n_classes, const ForestConfig& cfg,
                       hintlab::Rng& rng) {
  const int n = static_cast<int>(X.rows());
  const int p = static_cast<int>(X.cols());
  if (n == 0 || p == 0) throw Error("forest: empty training data");
  classify_ = classify;
  n_classes_ = n_classes;
  trees_.clear();
  trees_.reserve(cfg.n_trees);
  int mtry = cfg.mtry > 0
                 ? std::min(cfg.mtry, p)
                 : std::max(1, static_cast<int>(std::sqrt(static_cast<double>(p))));

  std::vector<int> features(p);
  std::iota(features.begin(), features.end(), 0);

  for (int t = 0; t < cfg.n_trees; ++t) {
    std::vector<Node> tree;
    std::vector<int> boot(n);
    for (int i = 0; i < n; ++i)
      boot[i] = static_cast<int>(rng.uniform_int(0, n - 1));

    // explicit stack of (node index, rows)
    struct Work {
      int node;
      std::vector<int> rows;
    };
    tree.push_back({});
    std::vector<Work> stack;
    stack.push_back({0, boot});
    while (!stack.empty()) {
      Work w = std::move(stack.back());
      stack.pop_back();

      bool pure = true;
      for (std::size_t i = 1; i < w.rows.size() && pure; ++i)
        pure = y[w.rows[i]] == y[w.rows[0]];
      if (static_cast<int>(w.rows.size()) < 2 * cfg.min_node || pure) {
        tree[w.node].feature = -1;
        tree[w.node].value = leaf_value(y, w.rows, classify, n_classes);
        continue;
      }

      rng.shuffle(features);
      Split best;
      for (int k = 0; k < mtry; ++k) {
        Split s = best_split_for_feature(X, y, w.rows, features[k], classify,
                                         n_classes, cfg.min_node);
        if (s.gain > best.gain) best = s;
      }
      if (best.feature < 0 || best.gain <= 1e-12) {
        tree[w.node].feature = -1;
        tree[w.node].value = leaf_value(y, w.rows, classify, n_classes);
        continue;
      }

      std::vector<int> lrows, rrows;
      for (int i : w.rows)
        (X(i, best.feature) <= best.threshold ? lrows : rrows).push_back(i);
      // push_back may reallocate, so write through the index afterwards
      int left = static_cast<int>(tree.size());
      tree.push_back({});
      int right = static_cast<int>(tree.size());
      tree.push_back({});
      tree[w.node].feature = best.feature;
      tree[w.node].threshold = best.threshold;
      tree[w.node].left = left;
      tree[w.node].right = right;
      stack.push_back({left, std::move(lrows)});
      stack.push_back({right, std::move(rrows)});
    }
    trees_.push_back(std::move(tree));
  }
}

double RandomForest::predict(const Eigen::RowVectorXd& x) const {
  if (trees_.empty()) throw Error("forest: not fitted");
  if (classify_) {
    std::vector<int> votes(n_classes_, 0);
    for (const auto& tree : trees_) {
      int node = 0;
      while (tree[node].feature >= 0)
        node = x[tree[node].feature] <= tree[node].threshold ? tree[node].left
                                                             : tree[node].right;
      ++votes[static_cast<int>(tree[node].value)];
    }
    return static_cast<double>(
        std::max_element(votes.begin(), votes.end()) - votes.begin());
  }
  double s = 0.0;
  for (const auto& tree : trees_) {
    int node = 0;
    while (tree[node].feature >= 0)
      node = x[tree[node].feature] <= tree[node].threshold ? tree[node].left
                                                           : tree[node].right;
    s += tree[node].value;
  }
  return s / static_cast<double>(trees_.size());
}

namespace {

using data::Covariate;
using data::CovariateSet;
using data::VarType;

double observed_mean(const Covariate& v) {
  double s = 0.0;
  int n = 0;
  for (double x : v.values)
    if (!std::isnan(x)) {
      s += x;
      ++n;
    }
  if (n == 0) throw Error("covariate " + v.name + " is entirely missing");
  return s / n;
}

double observed_mode(const Covariate& v) {
  std::vector<int> counts(std::max<std::size_t>(v.levels.size(), 1), 0);
  int n = 0;
  for (double x : v.values)
    if (!std::isnan(x)) {
      ++counts[static_cast<int>(x)];
      ++n;
    }
  if (n == 0) throw Error("covariate " + v.name + " is entirely missing");
  return static_cast<double>(std::max_element(counts.begin(), counts.end()) -
                             counts.begin());
}

// one-hot encode every variable except `skip` as forest predictors
Eigen::MatrixXd encode_predictors(const CovariateSet& cov, int skip) {
  const int n = static_cast<int>(cov.n_rows());
  int p = 0;
  for (std::size_t j = 0; j < cov.vars.size(); ++j) {
    if (static_cast<int>(j) == skip) continue;
    p += cov.vars[j].type == VarType::numeric
             ? 1
             : std::max<int>(1, static_cast<int>(cov.vars[j].levels.size()));
  }
  Eigen::MatrixXd X = Eigen::MatrixXd::Zero(n, std::max(p, 1));
  int c = 0;
  for (std::size_t j = 0; j < cov.vars.size(); ++j) {
    if (static_cast<int>(j) == skip) continue;
    const auto& v = cov.vars[j];
    if (v.type == VarType::numeric) {
      for (int i = 0; i < n; ++i) X(i, c) = v.values[i];
      ++c;
    } else {
      int k = std::max<int>(1, static_cast<int>(v.levels.size()));
      for (int i = 0; i < n; ++i)
        X(i, c + static_cast<int>(v.values[i])) = 1.0;
      c += k;
    }
  }
  return X;
}

// single missForest-style pass; completed must start with no NaN
void impute_sweep(CovariateSet& completed,
                  const std::vector<std::vector<bool>>& missing,
                  const std::vector<int>& order, const ForestConfig& cfg,
                  hintlab::Rng& rng, double* delta_num, double* delta_cat) {
  double dn_num = 0.0, dd_num = 0.0;
  double changed_cat = 0.0, total_cat = 0.0;
  for (int j : order) {
    auto& v = completed.vars[j];
    const auto& miss = missing[j];
    int n = static_cast<int>(v.values.size());
    std::vector<int> obs_rows, mis_rows;
    for (int i = 0; i < n; ++i)
      (miss[i] ? mis_rows : obs_rows).push_back(i);
    if (mis_rows.empty()) continue;

    bool classify = v.type == VarType::categorical;
    int n_classes = classify ? std::max<int>(1, static_cast<int>(v.levels.size())) : 0;

    std::vector<double> pred(mis_rows.size());
    bool tiny = static_cast<int>(obs_rows.size()) < cfg.fallback_rows;
    bool constant = true;
    for (std::size_t k = 1; k < obs_rows.size() && constant; ++k)
      constant = v.values[obs_rows[k]] == v.values[obs_rows[0]];
    if (tiny || constant) {
      double fill = classify ? observed_mode(v) : observed_mean(v);
      std::fill(pred.begin(), pred.end(), fill);
    } else {
      Eigen::MatrixXd X = encode_predictors(completed, j);
      Eigen::MatrixXd Xo(obs_rows.size(), X.cols());
      Eigen::VectorXd yo(obs_rows.size());
      for (std::size_t k = 0; k < obs_rows.size(); ++k) {
        Xo.row(k) = X.row(obs_rows[k]);
        yo[k] = v.values[obs_rows[k]];
      }
      RandomForest rf;
      rf.fit(Xo, yo, classify, n_classes, cfg, rng);
      for (std::size_t k = 0; k < mis_rows.size(); ++k)
        pred[k] = rf.predict(X.row(mis_rows[k]));
    }

    for (std::size_t k = 0; k < mis_rows.size(); ++k) {
      double old = v.values[mis_rows[k]];
      double nw = pred[k];
      if (classify) {
        total_cat += 1.0;
        if (nw != old) changed_cat += 1.0;
      } else {
        dn_num += (nw - old) * (nw - old);
        dd_num += nw * nw;
      }
      v.values[mis_rows[k]] = nw;
    }
  }
  *delta_num = dd_num > 0.0 ? dn_num / dd_num : 0.0;
  *delta_cat = total_cat > 0.0 ? changed_cat / total_cat : 0.0;
}

CovariateSet run_imputation(const CovariateSet& input, std::uint64_t seed,
                            const ForestConfig& cfg) {
  CovariateSet completed = input;
  const int n = static_cast<int>(input.n_rows());
  const int p = static_cast<int>(input.vars.size());

  bool any_complete = false;
  for (const auto& v : input.vars) any_complete |= v.n_missing() == 0;
  if (!any_complete)
    throw Error("imputation needs at least one fully observed covariate");

  std::vector<std::vector<bool>> missing(p, std::vector<bool>(n, false));
  std::vector<int> order;
  for (int j = 0; j < p; ++j) {
    const auto& v = input.vars[j];
    if (v.n_missing() == n)
      throw Error("covariate " + v.name + " is entirely missing");
    for (int i = 0; i < n; ++i) missing[j][i] = v.missing(i);
    if (v.n_missing() > 0) order.push_back(j);
  }
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    int ma = input.vars[a].n_missing(), mb = input.vars[b].n_missing();
    return ma != mb ? ma < mb : a < b;
  });

  // starting values: mean for numeric, mode for categorical
  for (int j : order) {
    auto& v = completed.vars[j];
    double fill =
        v.type == VarType::numeric ? observed_mean(v) : observed_mode(v);
    for (int i = 0; i < n; ++i)
      if (missing[j][i]) v.values[i] = fill;
  }
  if (order.empty()) return completed;

  hintlab::Rng rng(seed);
  CovariateSet previous = completed;
  double prev_num = std::numeric_limits<double>::infinity();
  double prev_cat = std::numeric_limits<double>::infinity();
  for (int iter = 0; iter < cfg.max_iter; ++iter) {
    previous = completed;
    double dnum = 0.0, dcat = 0.0;
    impute_sweep(completed, missing, order, cfg, rng, &dnum, &dcat);
    // stop when the sweep no longer improves; keep the previous fill
    if (dnum >= prev_num && dcat >= prev_cat && iter > 0) return previous;
    prev_num = dnum;
    prev_cat = dcat;
    if (dnum == 0.0 && dcat == 0.0) break;
  }
  return completed;
}

}  // namespace

ImputeResult impute_missing(const CovariateSet& cov, std::uint64_t seed,
                            const std::vector<std::string>& indicator_vars,
                            const ForestConfig& cfg) {
  if (cov.vars.empty() || cov.n_rows() == 0)
    throw Error("imputation: empty covariate set");
  const int n = static_cast<int>(cov.n_rows());

  ImputeResult res;
  res.completed = run_imputation(cov, seed, cfg);

  // error report: mask a share of the observed cells of each variable and
  // re-impute, comparing against the held-out truth
  {
    hintlab::Rng rng(seed, 0xe77);
    CovariateSet masked = cov;
    // one fully observed variable stays unmasked so the re-imputation keeps
    // a complete anchor
    int anchor = -1;
    for (std::size_t j = 0; j < cov.vars.size() && anchor < 0; ++j)
      if (cov.vars[j].n_missing() == 0) anchor = static_cast<int>(j);
    std::vector<std::vector<int>> masked_rows(cov.vars.size());
    for (std::size_t j = 0; j < cov.vars.size(); ++j) {
      if (static_cast<int>(j) == anchor) continue;
      const auto& v = cov.vars[j];
      std::vector<int> obs;
      for (int i = 0; i < n; ++i)
        if (!v.missing(i)) obs.push_back(i);
      if (static_cast<int>(obs.size()) < 3) continue;
      int k = std::max(1, static_cast<int>(std::lround(cfg.mask_share * obs.size())));
      k = std::min<int>(k, static_cast<int>(obs.size()) - 2);
      rng.shuffle(obs);
      obs.resize(k);
      for (int i : obs) masked.vars[j].values[i] = std::nan("");
      masked_rows[j] = std::move(obs);
    }
    bool any_masked = false;
    for (const auto& m : masked_rows) any_masked |= !m.empty();
    if (any_masked) {
      CovariateSet recon = run_imputation(masked, seed ^ 0x51u, cfg);
      for (std::size_t j = 0; j < cov.vars.size(); ++j) {
        if (masked_rows[j].empty()) continue;
        const auto& truth = cov.vars[j];
        const auto& got = recon.vars[j];
        ImputeError e;
        e.name = truth.name;
        e.n_masked = static_cast<int>(masked_rows[j].size());
        if (truth.type == VarType::numeric) {
          double sse = 0.0;
          for (int i : masked_rows[j]) {
            double d = got.values[i] - truth.values[i];
            sse += d * d;
          }
          std::vector<double> obs_vals;
          for (int i = 0; i < n; ++i)
            if (!truth.missing(i)) obs_vals.push_back(truth.values[i]);
          double sd = obs_vals.size() > 1
                          ? std::sqrt(stats::variance(obs_vals))
                          : 1.0;
          e.error = std::sqrt(sse / e.n_masked) / (sd > 0.0 ? sd : 1.0);
        } else {
          int wrong = 0;
          for (int i : masked_rows[j])
            if (got.values[i] != truth.values[i]) ++wrong;
          e.error = static_cast<double>(wrong) / e.n_masked;
        }
        res.errors.push_back(std::move(e));
      }
    }
  }

  // design encoding: numeric columns, K-1 dummies, then missingness flags
  std::vector<std::pair<std::string, Eigen::VectorXd>> cols;
  for (const auto& v : res.completed.vars) {
    if (v.type == VarType::numeric) {
      Eigen::VectorXd c(n);
      for (int i = 0; i < n; ++i) c[i] = v.values[i];
      cols.emplace_back(v.name, std::move(c));
    } else {
      for (std::size_t k = 1; k < v.levels.size(); ++k) {
        Eigen::VectorXd c = Eigen::VectorXd::Zero(n);
        for (int i = 0; i < n; ++i)
          if (static_cast<std::size_t>(v.values[i]) == k) c[i] = 1.0;
        cols.emplace_back(v.name + "=" + v.levels[k], std::move(c));
      }
    }
  }
  for (const auto& name : indicator_vars) {
    if (!cov.has(name)) continue;
    const auto& v = cov.var(name);
    Eigen::VectorXd c = Eigen::VectorXd::Zero(n);
    for (int i = 0; i < n; ++i)
      if (v.missing(i)) c[i] = 1.0;
    std::string cname = "miss_" + name;
    res.indicator_names.push_back(cname);
    cols.emplace_back(std::move(cname), std::move(c));
  }

  res.matrix.resize(n, static_cast<int>(cols.size()));
  for (std::size_t c = 0; c < cols.size(); ++c) {
    res.column_names.push_back(cols[c].first);
    res.matrix.col(static_cast<int>(c)) = cols[c].second;
  }
  return res;
}

}  // namespace hintlab::forest
