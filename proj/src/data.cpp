#include "hintlab/data.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include "hintlab/common.hpp"
#include "hintlab/csv.hpp"
#include "hintlab/stats.hpp"
#include "json.hpp"

namespace hintlab::data {

namespace {

const std::vector<std::string> kNumericCovariates = {"pretest", "grade"};
const std::vector<std::string> kCategoricalCovariates = {"ell", "frl",
                                                         "ethnicity", "sex",
                                                         "sped"};

double code_for_level(Covariate& cov, const std::string& level) {
  for (std::size_t k = 0; k < cov.levels.size(); ++k)
    if (cov.levels[k] == level) return static_cast<double>(k);
  cov.levels.push_back(level);
  return static_cast<double>(cov.levels.size() - 1);
}

std::unordered_map<std::string, std::size_t> id_index(
    const std::vector<StudentRecord>& students) {
  std::unordered_map<std::string, std::size_t> m;
  m.reserve(students.size());
  for (std::size_t i = 0; i < students.size(); ++i)
    m.emplace(students[i].student_id, i);
  return m;
}

void fill_counts(AnalysisSet& set) {
  auto& r = set.report;
  r.n_students = static_cast<int>(set.students.size());
  r.n_treated = 0;
  r.n_missing_y = 0;
  std::set<std::string> blocks, schools, teachers, classes, states;
  for (const auto& s : set.students) {
    r.n_treated += s.z;
    if (!s.y.has_value()) ++r.n_missing_y;
    blocks.insert(s.block_id);
    schools.insert(s.school_id);
    teachers.insert(s.teacher_id);
    classes.insert(s.class_id);
    states.insert(s.state_id);
  }
  r.n_control = r.n_students - r.n_treated;
  r.n_blocks = static_cast<int>(blocks.size());
  r.n_schools = static_cast<int>(schools.size());
  r.n_teachers = static_cast<int>(teachers.size());
  r.n_classes = static_cast<int>(classes.size());
  r.n_states = static_cast<int>(states.size());
}

void check_blocks_two_armed(const AnalysisSet& set) {
  std::unordered_map<std::string, std::pair<bool, bool>> arms;
  for (const auto& s : set.students) {
    auto& a = arms[s.block_id];
    (s.z ? a.first : a.second) = true;
  }
  for (const auto& [block, a] : arms)
    if (!a.first || !a.second)
      throw Error("block " + block + " has only one arm");
}

}  // namespace

int Covariate::n_missing() const {
  int k = 0;
  for (double v : values)
    if (std::isnan(v)) ++k;
  return k;
}

const Covariate& CovariateSet::var(const std::string& name) const {
  for (const auto& v : vars)
    if (v.name == name) return v;
  throw Error("unknown covariate: " + name);
}

bool CovariateSet::has(const std::string& name) const {
  for (const auto& v : vars)
    if (v.name == name) return true;
  return false;
}

int AnalysisSet::index_of(const std::string& student_id) const {
  for (std::size_t i = 0; i < students.size(); ++i)
    if (students[i].student_id == student_id) return static_cast<int>(i);
  return -1;
}

std::vector<int> AnalysisSet::treated_indices() const {
  std::vector<int> out;
  for (std::size_t i = 0; i < students.size(); ++i)
    if (students[i].z == 1) out.push_back(static_cast<int>(i));
  return out;
}

std::string IngestReport::to_json() const {
  nlohmann::json j;
  j["students"] = {{"total", n_students}, {"treated", n_treated},
                   {"control", n_control}, {"missing_outcome", n_missing_y}};
  j["design"] = {{"blocks", n_blocks},   {"schools", n_schools},
                 {"teachers", n_teachers}, {"classes", n_classes},
                 {"states", n_states}};
  j["log"] = {{"rows_read", log_rows_read},
              {"rows_deduplicated", log_rows_deduped},
              {"rows_dropped_small_section", log_rows_dropped_small_section},
              {"sections_dropped", sections_dropped},
              {"sections_kept", sections_kept}};
  j["drops"] = {{"treatment_schools_missing_log", schools_dropped_missing_log},
                {"control_schools_in_dropped_blocks",
                 control_schools_dropped_with_block},
                {"students_in_dropped_blocks", students_dropped_in_dropped_blocks},
                {"treated_without_log", treated_dropped_no_log}};
  return j.dump(2);
}

AnalysisSet ingest_students(const std::string& covariate_file,
                            const std::string& outcome_file,
                            const std::string& design_file) {
  AnalysisSet set;

  csv::Table design = csv::read_file(design_file);
  int c_id = design.require_col("student_id");
  int c_z = design.require_col("z");
  int c_block = design.require_col("block_id");
  int c_school = design.require_col("school_id");
  int c_teacher = design.require_col("teacher_id");
  int c_class = design.require_col("class_id");
  int c_state = design.require_col("state_id");

  std::unordered_set<std::string> seen;
  for (std::size_t r = 0; r < design.rows.size(); ++r) {
    StudentRecord s;
    s.student_id = design.at(r, c_id);
    if (s.student_id.empty())
      throw Error("design row " + std::to_string(r + 2) + ": empty student_id");
    if (!seen.insert(s.student_id).second)
      throw Error("duplicate student_id " + s.student_id);
    long z = csv::parse_long(design.at(r, c_z), "z");
    if (z != 0 && z != 1)
      throw Error("design row " + std::to_string(r + 2) +
                  ": z must be 0 or 1, got " + design.at(r, c_z));
    s.z = static_cast<int>(z);
    s.block_id = design.at(r, c_block);
    s.school_id = design.at(r, c_school);
    s.teacher_id = design.at(r, c_teacher);
    s.class_id = design.at(r, c_class);
    s.state_id = design.at(r, c_state);
    if (s.block_id.empty() || s.school_id.empty() || s.teacher_id.empty() ||
        s.class_id.empty() || s.state_id.empty())
      throw Error("design row " + std::to_string(r + 2) +
                  ": empty design identifier");
    set.students.push_back(std::move(s));
  }
  if (set.students.empty()) throw Error("design file has no rows");

  auto index = id_index(set.students);

  {
    csv::Table outcome = outcome_file == design_file
                             ? design
                             : csv::read_file(outcome_file);
    int o_id = outcome.require_col("student_id");
    int o_y = outcome.require_col("y");
    std::unordered_set<std::string> got;
    for (std::size_t r = 0; r < outcome.rows.size(); ++r) {
      const std::string& id = outcome.at(r, o_id);
      auto it = index.find(id);
      if (it == index.end())
        throw Error("outcome row " + std::to_string(r + 2) +
                    ": unknown student " + id);
      if (!got.insert(id).second)
        throw Error("outcome file repeats student " + id);
      const std::string& ys = outcome.at(r, o_y);
      if (!ys.empty())
        set.students[it->second].y = csv::parse_double(ys, "y for " + id);
    }
    if (got.size() != set.students.size())
      throw Error("outcome file is missing students from the design file");
  }

  {
    csv::Table cov =
        covariate_file == design_file ? design : csv::read_file(covariate_file);
    int v_id = cov.require_col("student_id");
    const std::size_t n = set.students.size();

    for (const auto& name : kNumericCovariates) {
      Covariate c;
      c.name = name;
      c.type = VarType::numeric;
      c.values.assign(n, std::nan(""));
      set.covariates.vars.push_back(std::move(c));
    }
    for (const auto& name : kCategoricalCovariates) {
      Covariate c;
      c.name = name;
      c.type = VarType::categorical;
      c.values.assign(n, std::nan(""));
      set.covariates.vars.push_back(std::move(c));
    }

    std::vector<int> cols;
    for (auto& v : set.covariates.vars) {
      cols.push_back(cov.require_col(v.name));
    }
    std::unordered_set<std::string> got;
    for (std::size_t r = 0; r < cov.rows.size(); ++r) {
      const std::string& id = cov.at(r, v_id);
      auto it = index.find(id);
      if (it == index.end())
        throw Error("covariate row " + std::to_string(r + 2) +
                    ": unknown student " + id);
      if (!got.insert(id).second)
        throw Error("covariate file repeats student " + id);
      for (std::size_t k = 0; k < set.covariates.vars.size(); ++k) {
        auto& v = set.covariates.vars[k];
        const std::string& cell = cov.at(r, cols[k]);
        if (cell.empty()) continue;
        v.values[it->second] =
            v.type == VarType::numeric
                ? csv::parse_double(cell, v.name + " for " + id)
                : code_for_level(v, cell);
      }
    }
    if (got.size() != n)
      throw Error("covariate file is missing students from the design file");
  }

  check_blocks_two_armed(set);
  fill_counts(set);
  return set;
}

std::vector<WorkedProblem> ingest_log(const std::string& log_file,
                                      const AnalysisSet& set,
                                      int min_section_students,
                                      IngestReport* report) {
  if (min_section_students < 0)
    throw Error("min_section_students must be nonnegative");
  csv::Table t = csv::read_file(log_file);
  int c_id = t.require_col("student_id");
  int c_prob = t.require_col("problem_id");
  int c_sec = t.require_col("section_id");
  int c_hint = t.require_col("n_hints");
  int c_err = t.require_col("n_errors");
  int c_time = t.col("timestamp");

  auto index = id_index(set.students);

  // dedupe on (student, problem); conflicting duplicates resolve to the
  // max counts and earliest timestamp so the result is order independent
  std::map<std::pair<std::string, std::string>, WorkedProblem> uniq;
  long deduped = 0;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    WorkedProblem p;
    p.student_id = t.at(r, c_id);
    p.problem_id = t.at(r, c_prob);
    p.section_id = t.at(r, c_sec);
    auto it = index.find(p.student_id);
    if (it == index.end())
      throw Error("log row " + std::to_string(r + 2) + ": unknown student " +
                  p.student_id);
    if (set.students[it->second].z != 1)
      throw Error("log row " + std::to_string(r + 2) +
                  ": student " + p.student_id + " is in the control arm");
    long h = csv::parse_long(t.at(r, c_hint), "n_hints");
    long e = csv::parse_long(t.at(r, c_err), "n_errors");
    if (h < 0 || e < 0)
      throw Error("log row " + std::to_string(r + 2) +
                  ": negative hint or error count");
    p.n_hints = static_cast<int>(h);
    p.n_errors = static_cast<int>(e);
    if (c_time >= 0 && !t.at(r, c_time).empty())
      p.timestamp = csv::parse_double(t.at(r, c_time), "timestamp");

    auto key = std::make_pair(p.student_id, p.problem_id);
    auto [pos, inserted] = uniq.emplace(key, p);
    if (!inserted) {
      ++deduped;
      auto& q = pos->second;
      if (p.section_id != q.section_id)
        throw Error("problem " + p.problem_id + " of student " + p.student_id +
                    " appears in two sections");
      q.n_hints = std::max(q.n_hints, p.n_hints);
      q.n_errors = std::max(q.n_errors, p.n_errors);
      if (p.timestamp && (!q.timestamp || *p.timestamp < *q.timestamp))
        q.timestamp = p.timestamp;
    }
  }

  std::unordered_map<std::string, std::unordered_set<std::string>> sec_students;
  for (const auto& [key, p] : uniq) sec_students[p.section_id].insert(p.student_id);

  std::vector<WorkedProblem> out;
  long dropped_rows = 0;
  std::unordered_set<std::string> dropped_secs, kept_secs;
  for (auto& [key, p] : uniq) {
    if (static_cast<int>(sec_students[p.section_id].size()) <
        min_section_students) {
      ++dropped_rows;
      dropped_secs.insert(p.section_id);
    } else {
      kept_secs.insert(p.section_id);
      out.push_back(std::move(p));
    }
  }
  // std::map iteration already yields (student, problem) order
  if (report) {
    report->log_rows_read = static_cast<long>(t.rows.size());
    report->log_rows_deduped = deduped;
    report->log_rows_dropped_small_section = dropped_rows;
    report->sections_dropped = static_cast<int>(dropped_secs.size());
    report->sections_kept = static_cast<int>(kept_secs.size());
  }
  return out;
}

namespace {

AnalysisSet subset(const AnalysisSet& set, const std::vector<bool>& keep) {
  AnalysisSet out;
  out.report = set.report;
  std::unordered_set<std::string> kept_ids;
  for (std::size_t i = 0; i < set.students.size(); ++i)
    if (keep[i]) {
      out.students.push_back(set.students[i]);
      kept_ids.insert(set.students[i].student_id);
    }
  for (const auto& v : set.covariates.vars) {
    Covariate c;
    c.name = v.name;
    c.type = v.type;
    c.levels = v.levels;
    for (std::size_t i = 0; i < v.values.size(); ++i)
      if (keep[i]) c.values.push_back(v.values[i]);
    out.covariates.vars.push_back(std::move(c));
  }
  for (const auto& p : set.problems)
    if (kept_ids.count(p.student_id)) out.problems.push_back(p);
  return out;
}

}  // namespace

AnalysisSet apply_design_drops(const AnalysisSet& set,
                               double missing_log_threshold) {
  if (!(missing_log_threshold > 0.0 && missing_log_threshold <= 1.0))
    throw Error("missing_log_threshold must be in (0, 1]");

  std::unordered_set<std::string> has_log;
  for (const auto& p : set.problems) has_log.insert(p.student_id);

  // share of treated students without any log row, per school
  std::unordered_map<std::string, std::pair<int, int>> school_counts;
  std::unordered_map<std::string, std::string> school_block;
  for (const auto& s : set.students) {
    school_block[s.school_id] = s.block_id;
    if (s.z == 1) {
      auto& c = school_counts[s.school_id];
      ++c.first;
      if (!has_log.count(s.student_id)) ++c.second;
    }
  }

  std::unordered_set<std::string> bad_blocks;
  int schools_dropped = 0;
  for (const auto& [school, c] : school_counts) {
    if (c.first == 0) continue;
    double share = static_cast<double>(c.second) / c.first;
    if (share >= missing_log_threshold) {
      bad_blocks.insert(school_block[school]);
      ++schools_dropped;
    }
  }

  const std::size_t n = set.students.size();
  std::vector<bool> keep(n, true);
  int dropped_block_students = 0;
  std::unordered_set<std::string> dropped_control_schools;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& s = set.students[i];
    if (bad_blocks.count(s.block_id)) {
      keep[i] = false;
      ++dropped_block_students;
      if (s.z == 0) dropped_control_schools.insert(s.school_id);
    }
  }
  int treated_no_log = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!keep[i]) continue;
    const auto& s = set.students[i];
    if (s.z == 1 && !has_log.count(s.student_id)) {
      keep[i] = false;
      ++treated_no_log;
    }
  }
  // blocks that lost an entire arm go away as well
  std::unordered_map<std::string, std::pair<bool, bool>> arms;
  for (std::size_t i = 0; i < n; ++i)
    if (keep[i]) {
      auto& a = arms[set.students[i].block_id];
      (set.students[i].z ? a.first : a.second) = true;
    }
  for (std::size_t i = 0; i < n; ++i)
    if (keep[i]) {
      auto a = arms[set.students[i].block_id];
      if (!a.first || !a.second) {
        keep[i] = false;
        ++dropped_block_students;
      }
    }

  AnalysisSet out = subset(set, keep);
  out.report.schools_dropped_missing_log += schools_dropped;
  out.report.control_schools_dropped_with_block +=
      static_cast<int>(dropped_control_schools.size());
  out.report.students_dropped_in_dropped_blocks += dropped_block_students;
  out.report.treated_dropped_no_log += treated_no_log;
  fill_counts(out);
  return out;
}

double standardized_difference(const std::vector<double>& values,
                               const std::vector<int>& group_flag,
                               const std::vector<double>* weights) {
  if (values.size() != group_flag.size())
    throw Error("standardized_difference: length mismatch");
  if (weights && weights->size() != values.size())
    throw Error("standardized_difference: weight length mismatch");
  std::vector<double> x1, x0, w1, w0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    double w = weights ? (*weights)[i] : 1.0;
    if (w < 0.0) throw Error("standardized_difference: negative weight");
    if (w == 0.0) continue;
    if (group_flag[i] == 1) {
      x1.push_back(values[i]);
      w1.push_back(w);
    } else {
      x0.push_back(values[i]);
      w0.push_back(w);
    }
  }
  if (x1.empty() || x0.empty())
    throw Error("standardized_difference: a group is empty");
  double m1 = stats::weighted_mean(x1, w1);
  double m0 = stats::weighted_mean(x0, w0);
  // the denominator ignores the weights so weighted and unweighted values
  // share a scale; weight rescaling then cannot move the statistic
  double v1 = x1.size() > 1 ? stats::variance(x1) : 0.0;
  double v0 = x0.size() > 1 ? stats::variance(x0) : 0.0;
  double pooled = std::sqrt(0.5 * (v1 + v0));
  if (pooled <= 0.0)
    throw Error("standardized_difference: zero pooled standard deviation");
  return (m1 - m0) / pooled;
}

BalanceTest omnibus_balance_test(const Eigen::MatrixXd& X,
                                 const std::vector<int>& group_flag,
                                 const std::vector<int>& strata) {
  const int n = static_cast<int>(X.rows());
  const int p = static_cast<int>(X.cols());
  if (n != static_cast<int>(group_flag.size()) ||
      n != static_cast<int>(strata.size()))
    throw Error("omnibus_balance_test: length mismatch");
  if (n == 0 || p == 0) throw Error("omnibus_balance_test: empty input");

  std::map<int, std::vector<int>> by_stratum;
  for (int i = 0; i < n; ++i) by_stratum[strata[i]].push_back(i);

  Eigen::VectorXd D = Eigen::VectorXd::Zero(p);
  Eigen::MatrixXd V = Eigen::MatrixXd::Zero(p, p);
  for (const auto& [sid, idx] : by_stratum) {
    int ns = static_cast<int>(idx.size());
    int n1 = 0;
    for (int i : idx) n1 += group_flag[i] == 1;
    int n0 = ns - n1;
    if (n1 == 0 || n0 == 0)
      throw Error("omnibus_balance_test: stratum " + std::to_string(sid) +
                  " lacks one group");
    double pbar = static_cast<double>(n1) / ns;
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(p);
    for (int i : idx) mean += X.row(i).transpose();
    mean /= ns;
    Eigen::MatrixXd S = Eigen::MatrixXd::Zero(p, p);
    for (int i : idx) {
      Eigen::VectorXd c = X.row(i).transpose() - mean;
      D += (group_flag[i] == 1 ? 1.0 - pbar : -pbar) * X.row(i).transpose();
      if (ns > 1) S += c * c.transpose();
    }
    if (ns > 1) {
      S /= (ns - 1);
      V += (static_cast<double>(n1) * n0 / ns) * S;
    }
  }

  BalanceTest out;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(V);
  const auto& ev = es.eigenvalues();
  double lmax = ev.maxCoeff();
  if (lmax <= 0.0) {
    // covariates constant within every stratum: the permutation
    // distribution is a point mass at zero, so there is nothing to test
    out.rank = 0;
    out.reduced_rank = true;
    out.statistic = 0.0;
    out.p_value = 1.0;
    return out;
  }
  double tol = lmax * 1e-10;
  Eigen::VectorXd inv = Eigen::VectorXd::Zero(p);
  int rank = 0;
  for (int k = 0; k < p; ++k)
    if (ev[k] > tol) {
      inv[k] = 1.0 / ev[k];
      ++rank;
    }
  out.rank = rank;
  out.reduced_rank = rank < p;
  Eigen::VectorXd t = es.eigenvectors().transpose() * D;
  out.statistic = (t.array().square() * inv.array()).sum();
  out.p_value = stats::chisq_sf(out.statistic, rank);
  return out;
}

}  // namespace hintlab::data
