#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace hintlab::data {

struct WorkedProblem {
  std::string student_id;
  std::string problem_id;
  std::string section_id;
  int n_hints = 0;
  int n_errors = 0;
  std::optional<double> timestamp;
};

struct StudentRecord {
  std::string student_id;
  int z = 0;
  std::optional<double> y;
  std::string block_id;
  std::string school_id;
  std::string teacher_id;
  std::string class_id;
  std::string state_id;
};

enum class VarType { numeric, categorical };

// One covariate column, aligned with the student list. Missing entries are
// NaN; categorical values are codes into `levels`.
struct Covariate {
  std::string name;
  VarType type = VarType::numeric;
  std::vector<double> values;
  std::vector<std::string> levels;

  bool missing(std::size_t i) const { return std::isnan(values[i]); }
  int n_missing() const;
};

struct CovariateSet {
  std::vector<Covariate> vars;
  std::size_t n_rows() const {
    return vars.empty() ? 0 : vars.front().values.size();
  }
  const Covariate& var(const std::string& name) const;  // throws if absent
  bool has(const std::string& name) const;
};

struct IngestReport {
  int n_students = 0;
  int n_treated = 0;
  int n_control = 0;
  int n_blocks = 0;
  int n_schools = 0;
  int n_teachers = 0;
  int n_classes = 0;
  int n_states = 0;
  int n_missing_y = 0;
  // log ingestion
  long log_rows_read = 0;
  long log_rows_deduped = 0;
  long log_rows_dropped_small_section = 0;
  int sections_dropped = 0;
  int sections_kept = 0;
  // design drops
  int schools_dropped_missing_log = 0;
  int control_schools_dropped_with_block = 0;
  int students_dropped_in_dropped_blocks = 0;
  int treated_dropped_no_log = 0;

  std::string to_json() const;
};

struct AnalysisSet {
  std::vector<StudentRecord> students;
  CovariateSet covariates;  // columns aligned with students
  std::vector<WorkedProblem> problems;
  IngestReport report;

  int index_of(const std::string& student_id) const;  // -1 if absent
  std::vector<int> treated_indices() const;
};

// The three paths may point at one combined file or at separate files
// sharing the student_id key; each loader takes only the columns it owns.
AnalysisSet ingest_students(const std::string& covariate_file,
                            const std::string& outcome_file,
                            const std::string& design_file);

// Reads worked-problem rows, deduplicates (student, problem) pairs, and
// drops sections worked by fewer than min_section_students students.
std::vector<WorkedProblem> ingest_log(const std::string& log_file,
                                      const AnalysisSet& set,
                                      int min_section_students,
                                      IngestReport* report = nullptr);

// Removes treatment schools whose share of students without any log row is
// at or above the threshold, together with every school in their block;
// then removes remaining treated students without log rows.
AnalysisSet apply_design_drops(const AnalysisSet& set,
                               double missing_log_threshold);

// (mean1 - mean0) / sqrt((var1 + var0) / 2); weights shift the means only,
// the denominator always uses the unweighted group variances
double standardized_difference(const std::vector<double>& values,
                               const std::vector<int>& group_flag,
                               const std::vector<double>* weights = nullptr);

struct BalanceTest {
  double statistic = 0.0;
  int rank = 0;          // degrees of freedom actually used
  bool reduced_rank = false;
  double p_value = 1.0;
};

// Aggregates within-stratum covariate mean differences into a
// Mahalanobis-type chi-square statistic under the randomization null.
BalanceTest omnibus_balance_test(const Eigen::MatrixXd& X,
                                 const std::vector<int>& group_flag,
                                 const std::vector<int>& strata);

}  // namespace hintlab::data
