#include "hintlab/matching.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <queue>
#include <set>

#include "hintlab/common.hpp"
#include "hintlab/csv.hpp"

namespace hintlab::matching {

namespace {

// min-cost flow by successive shortest paths with Johnson potentials; costs
// are nonnegative throughout, so Dijkstra applies from the start
class MinCostFlow {
 public:
  explicit MinCostFlow(int n) : g_(n), n_(n) {}

  void add_edge(int a, int b, int cap, double cost) {
    g_[a].push_back({b, static_cast<int>(g_[b].size()), cap, cost});
    g_[b].push_back({a, static_cast<int>(g_[a].size()) - 1, 0, -cost});
  }

  // pushes flow until the sink is unreachable; returns (flow, cost)
  std::pair<int, double> solve(int s, int t) {
    int flow = 0;
    double cost = 0.0;
    std::vector<double> pot(n_, 0.0);
    while (true) {
      const double inf = std::numeric_limits<double>::infinity();
      std::vector<double> dist(n_, inf);
      std::vector<int> pv(n_, -1), pe(n_, -1);
      using Item = std::pair<double, int>;
      std::priority_queue<Item, std::vector<Item>, std::greater<Item>> pq;
      dist[s] = 0.0;
      pq.push({0.0, s});
      while (!pq.empty()) {
        auto [d, v] = pq.top();
        pq.pop();
        if (d > dist[v] + 1e-12) continue;
        for (std::size_t k = 0; k < g_[v].size(); ++k) {
          const Arc& a = g_[v][k];
          if (a.cap <= 0) continue;
          double nd = dist[v] + a.cost + pot[v] - pot[a.to];
          if (nd < dist[a.to] - 1e-12) {
            dist[a.to] = nd;
            pv[a.to] = v;
            pe[a.to] = static_cast<int>(k);
            pq.push({nd, a.to});
          }
        }
      }
      if (pv[t] < 0) break;
      for (int v = 0; v < n_; ++v)
        if (dist[v] < inf) pot[v] += dist[v];
      int push = std::numeric_limits<int>::max();
      for (int v = t; v != s; v = pv[v])
        push = std::min(push, g_[pv[v]][pe[v]].cap);
      for (int v = t; v != s; v = pv[v]) {
        Arc& a = g_[pv[v]][pe[v]];
        a.cap -= push;
        g_[v][a.rev].cap += push;
        cost += push * a.cost;
      }
      flow += push;
    }
    return {flow, cost};
  }

  struct Arc {
    int to, rev, cap;
    double cost;
  };
  const std::vector<Arc>& arcs(int v) const { return g_[v]; }

 private:
  std::vector<std::vector<Arc>> g_;
  int n_;
};

struct StratumResult {
  // chosen cross-class links as (left local idx, right local idx)
  std::vector<std::pair<int, int>> edges;
};

// degree-bounded min-weight edge cover: every student keeps at least one
// opposite-class link, lower bounds handled with the usual supersource
// transform; "left"/"right" are the two H classes in a canonical order so
// that relabeling the classes rebuilds the identical network
StratumResult solve_stratum(const std::vector<double>& left_scores,
                            const std::vector<double>& right_scores,
                            int cap_l, int cap_r) {
  const int n1 = static_cast<int>(left_scores.size());
  const int n0 = static_cast<int>(right_scores.size());
  // nodes: S, T, left class, right class, SS, TT
  const int S = 0, T = 1;
  auto tre = [&](int i) { return 2 + i; };
  auto con = [&](int j) { return 2 + n1 + j; };
  const int SS = 2 + n1 + n0, TT = SS + 1;
  MinCostFlow mcf(TT + 1);

  for (int i = 0; i < n1; ++i) {
    mcf.add_edge(SS, tre(i), 1, 0.0);  // mandatory unit out of each member
    if (cap_l > 1) mcf.add_edge(S, tre(i), cap_l - 1, 0.0);
  }
  mcf.add_edge(S, TT, n1, 0.0);
  for (int j = 0; j < n0; ++j) {
    mcf.add_edge(con(j), TT, 1, 0.0);
    if (cap_r > 1) mcf.add_edge(con(j), T, cap_r - 1, 0.0);
  }
  mcf.add_edge(SS, T, n0, 0.0);
  mcf.add_edge(T, S, n1 * n0 + 1, 0.0);
  for (int i = 0; i < n1; ++i)
    for (int j = 0; j < n0; ++j)
      mcf.add_edge(tre(i), con(j), 1,
                   std::abs(left_scores[i] - right_scores[j]));

  auto [flow, cost] = mcf.solve(SS, TT);
  (void)cost;
  if (flow < n1 + n0)
    throw Error("full_match: infeasible under the given caps");

  StratumResult res;
  for (int i = 0; i < n1; ++i)
    for (const auto& a : mcf.arcs(tre(i)))
      if (a.to >= con(0) && a.to < con(0) + n0 && a.cap == 0 && a.cost >= 0.0)
        res.edges.push_back({i, a.to - con(0)});

  // split any non-star component; only zero-cost links can be redundant in
  // an optimal cover, so dropping them preserves the objective
  std::vector<int> deg_t(n1, 0), deg_c(n0, 0);
  for (auto& [i, j] : res.edges) {
    ++deg_t[i];
    ++deg_c[j];
  }
  bool changed = true;
  while (changed) {
    changed = false;
    for (std::size_t k = 0; k < res.edges.size(); ++k) {
      auto [i, j] = res.edges[k];
      if (deg_t[i] > 1 && deg_c[j] > 1) {
        --deg_t[i];
        --deg_c[j];
        res.edges.erase(res.edges.begin() + k);
        changed = true;
        break;
      }
    }
  }
  return res;
}

}  // namespace

double match_objective(const std::vector<MatchedSet>& sets,
                       const std::vector<double>& scores,
                       const std::vector<int>& H) {
  double total = 0.0;
  for (const auto& s : sets)
    for (std::size_t a = 0; a < s.members.size(); ++a)
      for (std::size_t b = a + 1; b < s.members.size(); ++b) {
        int i = s.members[a], j = s.members[b];
        if (H[i] != H[j]) total += std::abs(scores[i] - scores[j]);
      }
  return total;
}

MatchAssignment full_match(const std::vector<double>& logit_scores,
                           const std::vector<int>& H,
                           const std::vector<std::string>& school_of,
                           const std::vector<std::string>& student_ids,
                           const MatchCaps& caps) {
  const int n = static_cast<int>(logit_scores.size());
  if (n == 0) throw Error("full_match: no students");
  if (static_cast<int>(H.size()) != n ||
      static_cast<int>(school_of.size()) != n ||
      static_cast<int>(student_ids.size()) != n)
    throw Error("full_match: input lengths differ");
  for (int h : H)
    if (h != 0 && h != 1) throw Error("full_match: H must be 0/1");
  for (double s : logit_scores)
    if (!std::isfinite(s)) throw Error("full_match: scores must be finite");

  // group rows by school, ordering students by id for determinism
  std::map<std::string, std::vector<int>> schools;
  for (int i = 0; i < n; ++i) schools[school_of[i]].push_back(i);
  for (auto& [name, rows] : schools)
    std::sort(rows.begin(), rows.end(), [&](int a, int b) {
      return student_ids[a] < student_ids[b];
    });

  MatchAssignment out;
  out.set_of.assign(n, -1);
  for (auto& [school, rows] : schools) {
    // canonical orientation: the class holding the school's smallest id
    // goes on the left, so relabeling the classes cannot change the result
    const bool treated_first = H[rows.front()] == 1;
    std::vector<int> left, right;
    for (int r : rows)
      ((H[r] == 1) == treated_first ? left : right).push_back(r);
    if (left.empty() || right.empty()) {
      out.excluded_schools.push_back(school);
      out.n_excluded_students += static_cast<int>(rows.size());
      continue;
    }
    const int nl = static_cast<int>(left.size());
    const int nr = static_cast<int>(right.size());
    int cap_t = caps.max_per_treated > 0 ? caps.max_per_treated
                                         : (treated_first ? nr : nl);
    int cap_c = caps.max_per_control > 0 ? caps.max_per_control
                                         : (treated_first ? nl : nr);
    int cap_l = treated_first ? cap_t : cap_c;
    int cap_r = treated_first ? cap_c : cap_t;

    std::vector<double> sl(nl), sr(nr);
    for (int i = 0; i < nl; ++i) sl[i] = logit_scores[left[i]];
    for (int j = 0; j < nr; ++j) sr[j] = logit_scores[right[j]];
    StratumResult res = solve_stratum(sl, sr, cap_l, cap_r);

    // connected components of the chosen links become the matched sets
    std::vector<int> comp_l(nl, -1), comp_r(nr, -1);
    int n_comp = 0;
    for (int i = 0; i < nl; ++i) {
      if (comp_l[i] >= 0) continue;
      int c = n_comp++;
      std::vector<int> stack_l{i};
      std::vector<int> stack_r;
      comp_l[i] = c;
      while (!stack_l.empty() || !stack_r.empty()) {
        if (!stack_l.empty()) {
          int u = stack_l.back();
          stack_l.pop_back();
          for (auto& [a, b] : res.edges)
            if (a == u && comp_r[b] < 0) {
              comp_r[b] = c;
              stack_r.push_back(b);
            }
        } else {
          int v = stack_r.back();
          stack_r.pop_back();
          for (auto& [a, b] : res.edges)
            if (b == v && comp_l[a] < 0) {
              comp_l[a] = c;
              stack_l.push_back(a);
            }
        }
      }
    }

    std::vector<MatchedSet> sets(n_comp);
    auto place = [&](int row, int c) {
      sets[c].members.push_back(row);
      (H[row] == 1 ? sets[c].n1 : sets[c].n0) += 1;
    };
    for (int i = 0; i < nl; ++i) place(left[i], comp_l[i]);
    for (int j = 0; j < nr; ++j) place(right[j], comp_r[j]);
    // order by first member id and hand out per-school sequence numbers
    std::sort(sets.begin(), sets.end(),
              [&](const MatchedSet& a, const MatchedSet& b) {
                return student_ids[a.members.front()] <
                       student_ids[b.members.front()];
              });
    int seq = 0;
    for (auto& s : sets) {
      s.school = school;
      s.id = school + ":" + std::to_string(seq++);
      std::sort(s.members.begin(), s.members.end(), [&](int a, int b) {
        return student_ids[a] < student_ids[b];
      });
      std::vector<MatchedSet> one{s};
      s.distance = match_objective(one, logit_scores, H);
      for (int m : s.members)
        out.set_of[m] = static_cast<int>(out.sets.size());
      out.sets.push_back(s);
    }
  }
  if (out.sets.empty())
    throw Error("full_match: no school contains both H classes");
  out.total_distance = match_objective(out.sets, logit_scores, H);
  return out;
}

BalanceTable match_balance(const MatchAssignment& assignment,
                           const Eigen::MatrixXd& X,
                           const std::vector<std::string>& col_names,
                           const std::vector<int>& H,
                           const std::vector<std::string>& school_of) {
  const int n = static_cast<int>(X.rows());
  if (static_cast<int>(assignment.set_of.size()) != n ||
      static_cast<int>(H.size()) != n ||
      static_cast<int>(school_of.size()) != n)
    throw Error("match_balance: input lengths differ");
  if (static_cast<int>(col_names.size()) != X.cols())
    throw Error("match_balance: column names do not match the matrix");

  std::vector<int> rows;  // matched students only
  for (int i = 0; i < n; ++i)
    if (assignment.set_of[i] >= 0) rows.push_back(i);
  if (rows.empty()) throw Error("match_balance: empty assignment");

  // precision weights per set, split evenly within each class
  std::vector<double> weight(rows.size(), 0.0);
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const MatchedSet& s = assignment.sets[assignment.set_of[rows[k]]];
    double wm = 1.0 / (1.0 / s.n1 + 1.0 / s.n0);
    weight[k] = H[rows[k]] == 1 ? wm / s.n1 : wm / s.n0;
  }

  BalanceTable table;
  for (int j = 0; j < X.cols(); ++j) {
    std::vector<double> vals(rows.size());
    std::vector<int> flags(rows.size());
    for (std::size_t k = 0; k < rows.size(); ++k) {
      vals[k] = X(rows[k], j);
      flags[k] = H[rows[k]];
    }
    BalanceRow row;
    row.name = col_names[j];
    row.pre = data::standardized_difference(vals, flags);
    row.post = data::standardized_difference(vals, flags, &weight);
    table.rows.push_back(row);
  }

  Eigen::MatrixXd Xm(rows.size(), X.cols());
  std::vector<int> flags(rows.size()), pre_strata(rows.size()),
      post_strata(rows.size());
  std::map<std::string, int> school_idx;
  for (std::size_t k = 0; k < rows.size(); ++k) {
    Xm.row(k) = X.row(rows[k]);
    flags[k] = H[rows[k]];
    post_strata[k] = assignment.set_of[rows[k]];
    auto [it, fresh] =
        school_idx.try_emplace(school_of[rows[k]],
                               static_cast<int>(school_idx.size()));
    pre_strata[k] = it->second;
  }
  table.pre_test = data::omnibus_balance_test(Xm, flags, pre_strata);
  table.post_test = data::omnibus_balance_test(Xm, flags, post_strata);
  return table;
}

void write_assignment_csv(const std::string& path,
                          const MatchAssignment& assignment,
                          const std::vector<std::string>& student_ids) {
  csv::Table t;
  t.header = {"student_id", "match_id"};
  for (std::size_t i = 0; i < student_ids.size(); ++i) {
    int s = assignment.set_of[i];
    t.rows.push_back({student_ids[i], s >= 0 ? assignment.sets[s].id : ""});
  }
  csv::write_file(path, t);
}

void write_balance_csv(const std::string& path, const BalanceTable& table) {
  csv::Table t;
  t.header = {"covariate", "std_diff_pre", "std_diff_post"};
  for (const auto& r : table.rows)
    t.rows.push_back({r.name, csv::format_double(r.pre),
                      csv::format_double(r.post)});
  csv::write_file(path, t);
}

}  // namespace hintlab::matching
