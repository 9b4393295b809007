#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "hintlab/common.hpp"
#include "hintlab/data.hpp"

namespace hintlab::forest {

struct ForestConfig {
  int n_trees = 100;
  int min_node = 5;
  int mtry = 0;        // 0 picks floor(sqrt(#predictors))
  int max_iter = 10;   // imputation sweeps
  int fallback_rows = 10;  // below this many observed rows use mean/mode
  double mask_share = 0.1;  // share of observed cells masked for the error report
};

// per-variable out-of-sample error: normalized RMSE for numeric variables,
// misclassification share for categorical ones
struct ImputeError {
  std::string name;
  double error = 0.0;
  int n_masked = 0;
};

struct ImputeResult {
  data::CovariateSet completed;   // same shape as input, no missing cells
  Eigen::MatrixXd matrix;         // numeric columns, dummies, indicators
  std::vector<std::string> column_names;
  std::vector<std::string> indicator_names;
  std::vector<ImputeError> errors;
};

ImputeResult impute_missing(
    const data::CovariateSet& cov, std::uint64_t seed,
    const std::vector<std::string>& indicator_vars = {"grade", "ethnicity",
                                                      "sex", "frl"},
    const ForestConfig& cfg = {});

// Bagged CART trees; exposed for direct testing.
class RandomForest {
 public:
  void fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
           bool classify, int n_classes, const ForestConfig& cfg,
           hintlab::Rng& rng);
  double predict(const Eigen::RowVectorXd& x) const;

 private:
  struct Node {
    int feature = -1;      // -1 marks a leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double value = 0.0;    // mean or majority class code
  };
  std::vector<std::vector<Node>> trees_;
  bool classify_ = false;
  int n_classes_ = 0;
};

}  // namespace hintlab::forest
