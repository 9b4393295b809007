#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <vector>

#include "doctest.h"
#include "hintlab/common.hpp"
#include "hintlab/csv.hpp"
#include "hintlab/matching.hpp"

using namespace hintlab;
using namespace hintlab::matching;

namespace {

std::vector<std::string> ids(int n) {
  std::vector<std::string> out;
  for (int i = 0; i < n; ++i) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "s%03d", i);
    out.push_back(buf);
  }
  return out;
}

std::vector<std::string> one_school(int n) {
  return std::vector<std::string>(n, "school");
}

// canonical partition signature for comparisons
std::set<std::vector<int>> partition_of(const MatchAssignment& a) {
  std::set<std::vector<int>> out;
  for (const auto& s : a.sets) {
    std::vector<int> m = s.members;
    std::sort(m.begin(), m.end());
    out.insert(m);
  }
  return out;
}

// enumerate every partition of 0..n-1 into blocks holding >=1 of each class,
// scoring each with the shared objective; the optimum is the oracle
struct BruteForce {
  const std::vector<double>& scores;
  const std::vector<int>& h;
  double best = std::numeric_limits<double>::infinity();

  void run() {
    std::vector<std::vector<int>> blocks;
    recurse(0, blocks);
  }
  void recurse(int i, std::vector<std::vector<int>>& blocks) {
    if (i == static_cast<int>(h.size())) {
      std::vector<MatchedSet> sets;
      for (const auto& b : blocks) {
        int n1 = 0, n0 = 0;
        for (int m : b) (h[m] == 1 ? n1 : n0) += 1;
        if (n1 == 0 || n0 == 0) return;
        MatchedSet s;
        s.members = b;
        sets.push_back(s);
      }
      best = std::min(best, match_objective(sets, scores, h));
      return;
    }
    // index loop: recursion grows and shrinks the block list underneath us
    std::size_t nb = blocks.size();
    for (std::size_t k = 0; k < nb; ++k) {
      blocks[k].push_back(i);
      recurse(i + 1, blocks);
      blocks[k].pop_back();
    }
    blocks.push_back({i});
    recurse(i + 1, blocks);
    blocks.pop_back();
  }
};

}  // namespace

TEST_CASE("single treated student absorbs every control") {
  std::vector<double> scores{0.3, 0.1, 0.5, 0.9};
  std::vector<int> h{1, 0, 0, 0};
  auto a = full_match(scores, h, one_school(4), ids(4));
  REQUIRE(a.sets.size() == 1);
  CHECK(a.sets[0].n1 == 1);
  CHECK(a.sets[0].n0 == 3);
  CHECK(a.sets[0].members.size() == 4);
}

TEST_CASE("well separated pairs match by proximity") {
  std::vector<double> scores{0.0, 10.0, 0.1, 9.9};
  std::vector<int> h{1, 1, 0, 0};
  auto a = full_match(scores, h, one_school(4), ids(4));
  REQUIRE(a.sets.size() == 2);
  auto part = partition_of(a);
  CHECK(part.count({0, 2}) == 1);
  CHECK(part.count({1, 3}) == 1);
  CHECK(a.total_distance == doctest::Approx(0.2).epsilon(1e-12));
}

TEST_CASE("solver matches exhaustive enumeration on small strata") {
  Rng rng(41);
  for (int trial = 0; trial < 40; ++trial) {
    int n = 4 + static_cast<int>(rng.uniform_int(0, 4));  // 4..8
    std::vector<double> scores(n);
    std::vector<int> h(n);
    int n1 = 0;
    for (int i = 0; i < n; ++i) {
      // grid scores keep every pair distance exactly representable
      scores[i] = static_cast<double>(rng.uniform_int(0, 32)) / 16.0;
      h[i] = rng.uniform() < 0.5 ? 1 : 0;
      n1 += h[i];
    }
    if (n1 == 0) h[0] = 1;
    if (n1 == n) h[0] = 0;

    auto a = full_match(scores, h, one_school(n), ids(n));
    BruteForce bf{scores, h};
    bf.run();
    CHECK(a.total_distance == bf.best);
  }
}

TEST_CASE("assignment beats random feasible partitions") {
  Rng rng(42);
  for (int trial = 0; trial < 5; ++trial) {
    int n = 12;
    std::vector<double> scores(n);
    std::vector<int> h(n);
    for (int i = 0; i < n; ++i) {
      scores[i] = rng.normal();
      h[i] = i < 5 ? 1 : 0;
    }
    auto a = full_match(scores, h, one_school(n), ids(n));
    for (int rep = 0; rep < 500; ++rep) {
      int k = 1 + static_cast<int>(rng.uniform_int(0, 4));
      std::vector<MatchedSet> sets(k);
      // first k of each class seed the sets, the rest spread at random
      int t_seen = 0, c_seen = 0;
      for (int i = 0; i < n; ++i) {
        int at;
        if (h[i] == 1)
          at = t_seen < k ? t_seen++
                          : static_cast<int>(rng.uniform_int(0, k - 1));
        else
          at = c_seen < k ? c_seen++
                          : static_cast<int>(rng.uniform_int(0, k - 1));
        sets[at].members.push_back(i);
      }
      double obj = match_objective(sets, scores, h);
      CHECK(a.total_distance <= obj + 1e-12);
    }
  }
}

TEST_CASE("shifting all scores leaves the partition unchanged") {
  Rng rng(43);
  int n = 10;
  std::vector<double> scores(n);
  std::vector<int> h(n);
  for (int i = 0; i < n; ++i) {
    scores[i] = rng.normal();
    h[i] = i % 3 == 0 ? 1 : 0;
  }
  auto a = full_match(scores, h, one_school(n), ids(n));
  std::vector<double> shifted = scores;
  for (double& s : shifted) s += 17.5;
  auto b = full_match(shifted, h, one_school(n), ids(n));
  CHECK(partition_of(a) == partition_of(b));
}

TEST_CASE("swapping class labels keeps the partition") {
  Rng rng(44);
  int n = 11;
  std::vector<double> scores(n);
  std::vector<int> h(n);
  for (int i = 0; i < n; ++i) {
    scores[i] = rng.normal();
    h[i] = i % 3 == 1 ? 1 : 0;
  }
  auto a = full_match(scores, h, one_school(n), ids(n));
  std::vector<int> swapped(n);
  for (int i = 0; i < n; ++i) swapped[i] = 1 - h[i];
  auto b = full_match(scores, swapped, one_school(n), ids(n));
  CHECK(partition_of(a) == partition_of(b));
  CHECK(a.total_distance == doctest::Approx(b.total_distance).epsilon(1e-12));
}

TEST_CASE("repeat runs are deterministic") {
  Rng rng(45);
  int n = 14;
  std::vector<double> scores(n);
  std::vector<int> h(n);
  std::vector<std::string> sch(n);
  for (int i = 0; i < n; ++i) {
    scores[i] = rng.normal();
    h[i] = i % 2;
    sch[i] = i < 7 ? "a" : "b";
  }
  auto a = full_match(scores, h, sch, ids(n));
  auto b = full_match(scores, h, sch, ids(n));
  CHECK(partition_of(a) == partition_of(b));
  CHECK(a.total_distance == b.total_distance);
  for (std::size_t i = 0; i < a.sets.size(); ++i)
    CHECK(a.sets[i].id == b.sets[i].id);
}

TEST_CASE("every set mixes classes and stays inside one school") {
  Rng rng(46);
  int n = 40;
  std::vector<double> scores(n);
  std::vector<int> h(n);
  std::vector<std::string> sch(n);
  for (int i = 0; i < n; ++i) {
    scores[i] = rng.normal();
    h[i] = rng.uniform() < 0.4 ? 1 : 0;
    sch[i] = "sch" + std::to_string(i % 4);
  }
  h[0] = h[1] = h[2] = h[3] = 1;  // every school has at least one of each
  h[4] = h[5] = h[6] = h[7] = 0;
  auto a = full_match(scores, h, sch, ids(n));
  for (const auto& s : a.sets) {
    CHECK(s.n1 >= 1);
    CHECK(s.n0 >= 1);
    for (int m : s.members) CHECK(sch[m] == s.school);
    CHECK(s.n1 + s.n0 == static_cast<int>(s.members.size()));
  }
  int assigned = 0;
  for (int v : a.set_of) assigned += v >= 0;
  CHECK(assigned == n);
}

TEST_CASE("schools missing a class are excluded with a report") {
  std::vector<double> scores{0.1, 0.2, 0.4, 0.5, 0.6};
  std::vector<int> h{1, 0, 0, 0, 0};
  std::vector<std::string> sch{"a", "a", "b", "b", "b"};
  auto a = full_match(scores, h, sch, ids(5));
  REQUIRE(a.excluded_schools.size() == 1);
  CHECK(a.excluded_schools[0] == "b");
  CHECK(a.n_excluded_students == 3);
  CHECK(a.set_of[2] == -1);
  CHECK(a.set_of[3] == -1);
  CHECK(a.set_of[4] == -1);

  std::vector<int> all_treated{1, 1, 1, 1, 1};
  CHECK_THROWS_AS(full_match(scores, all_treated, sch, ids(5)), Error);
}

TEST_CASE("caps bound set composition or fail loudly") {
  std::vector<double> scores{0.0, 1.0, 2.0, 3.0, 4.0, 5.0};
  std::vector<int> h{1, 0, 0, 0, 0, 0};
  MatchCaps caps;
  caps.max_per_treated = 3;
  CHECK_THROWS_AS(full_match(scores, h, one_school(6), ids(6), caps), Error);

  std::vector<int> h2{1, 1, 0, 0, 0, 0};
  caps.max_per_treated = 2;
  auto a = full_match(scores, h2, one_school(6), ids(6), caps);
  for (const auto& s : a.sets) CHECK(s.n0 <= 2);
}

TEST_CASE("balance table vanishes on identical matched pairs") {
  int n = 12;
  std::vector<double> scores(n);
  std::vector<int> h(n);
  std::vector<std::string> sch(n, "sch");
  Eigen::MatrixXd X(n, 2);
  Rng rng(47);
  for (int i = 0; i < n; i += 2) {
    double x1 = rng.normal(), x2 = rng.normal();
    double sc = rng.normal();
    scores[i] = scores[i + 1] = sc;
    h[i] = 1;
    h[i + 1] = 0;
    X(i, 0) = X(i + 1, 0) = x1;
    X(i, 1) = X(i + 1, 1) = x2;
  }
  auto a = full_match(scores, h, sch, ids(n));
  auto table = match_balance(a, X, {"x1", "x2"}, h, sch);
  REQUIRE(table.rows.size() == 2);
  for (const auto& r : table.rows) CHECK(std::abs(r.post) < 1e-9);
  CHECK(table.post_test.p_value >= 0.0);
  CHECK(table.post_test.p_value <= 1.0);
}

TEST_CASE("matching on a confounded score improves balance") {
  Rng rng(48);
  int n = 300;
  std::vector<double> scores(n);
  std::vector<int> h(n);
  std::vector<std::string> sch(n);
  Eigen::MatrixXd X(n, 1);
  for (int i = 0; i < n; ++i) {
    double x = rng.normal();
    X(i, 0) = x;
    double eta = 0.9 * x;
    h[i] = rng.uniform() < inv_logit(eta) ? 1 : 0;
    scores[i] = eta;
    sch[i] = i < 150 ? "a" : "b";
  }
  // guarantee feasibility
  h[0] = h[150] = 1;
  h[1] = h[151] = 0;
  auto a = full_match(scores, h, sch, ids(n));
  auto table = match_balance(a, X, {"x"}, h, sch);
  CHECK(std::abs(table.rows[0].post) < std::abs(table.rows[0].pre));
}

TEST_CASE("csv exports carry the documented columns") {
  std::vector<double> scores{0.0, 0.1, 5.0, 5.2};
  std::vector<int> h{1, 0, 1, 0};
  auto a = full_match(scores, h, one_school(4), ids(4));
  Eigen::MatrixXd X(4, 1);
  X << 1, 2, 3, 4;
  auto table = match_balance(a, X, {"x"}, h, one_school(4));

  write_assignment_csv("/tmp/hintlab_assign.csv", a, ids(4));
  write_balance_csv("/tmp/hintlab_balance.csv", table);
  auto t1 = csv::read_file("/tmp/hintlab_assign.csv");
  CHECK(t1.header == std::vector<std::string>{"student_id", "match_id"});
  CHECK(t1.rows.size() == 4);
  auto t2 = csv::read_file("/tmp/hintlab_balance.csv");
  CHECK(t2.header ==
        std::vector<std::string>{"covariate", "std_diff_pre", "std_diff_post"});
}
