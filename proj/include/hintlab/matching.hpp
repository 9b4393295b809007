#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "hintlab/data.hpp"

namespace hintlab::matching {

// One matched set: students from a single school, at least one of each
// H class; the distance is the sum over cross-class pairs of |score gaps|.
struct MatchedSet {
  std::string id;
  std::string school;
  std::vector<int> members;  // row indices into the matching input
  int n1 = 0;
  int n0 = 0;
  double distance = 0.0;
};

struct MatchCaps {
  int max_per_treated = 0;  // opposite-class links per H=1 student, 0 = none
  int max_per_control = 0;
};

struct MatchAssignment {
  std::vector<MatchedSet> sets;
  std::vector<int> set_of;  // row -> index into sets, -1 when excluded
  double total_distance = 0.0;
  std::vector<std::string> excluded_schools;  // schools missing an H class
  int n_excluded_students = 0;
};

// Optimal full matching within schools: minimizes total cross-pair distance
// over all partitions into valid sets, solved per school as a min-cost flow
// (degree-bounded bipartite edge cover). Students are processed in id order
// so distance ties resolve deterministically.
MatchAssignment full_match(const std::vector<double>& logit_scores,
                           const std::vector<int>& H,
                           const std::vector<std::string>& school_of,
                           const std::vector<std::string>& student_ids,
                           const MatchCaps& caps = {});

// canonical objective: per-set cross-pair distances summed in member order,
// used by the solver and by enumeration oracles so values compare exactly
double match_objective(const std::vector<MatchedSet>& sets,
                       const std::vector<double>& scores,
                       const std::vector<int>& H);

struct BalanceRow {
  std::string name;
  double pre = 0.0;   // standardized difference before matching
  double post = 0.0;  // matched-set weighted standardized difference
};

struct BalanceTable {
  std::vector<BalanceRow> rows;
  data::BalanceTest pre_test;   // omnibus within schools
  data::BalanceTest post_test;  // omnibus within matched sets
};

BalanceTable match_balance(const MatchAssignment& assignment,
                           const Eigen::MatrixXd& X,
                           const std::vector<std::string>& col_names,
                           const std::vector<int>& H,
                           const std::vector<std::string>& school_of);

void write_assignment_csv(const std::string& path,
                          const MatchAssignment& assignment,
                          const std::vector<std::string>& student_ids);

void write_balance_csv(const std::string& path, const BalanceTable& table);

}  // namespace hintlab::matching
