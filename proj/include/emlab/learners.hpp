#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "emlab/core.hpp"
#include "emlab/io.hpp"

namespace emlab::learn {

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double value = 0.0;  // leaf mean, or majority label for classifiers
};

struct ForestOptions {
  int n_trees = 200;
  int m_try = 0;  // 0 resolves to ceil(F/3) for regression, ceil(sqrt(F)) for labels
  int min_leaf = 5;
  int max_depth = 64;
  bool bootstrap = true;

  bool operator==(const ForestOptions&) const = default;
};

enum class ForestMode { Regression, Classification };

// CART ensemble: bootstrap-sampled trees with per-split feature subsampling.
// Splits minimize the residual sum of squares (regression) or the weighted
// Gini impurity (classification) over midpoints of sorted distinct values;
// ties resolve to the lowest feature index, then the lowest cutpoint.
class RandomForest {
 public:
  static RandomForest fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                          const ForestOptions& opts, std::uint64_t seed,
                          int workers = 1);
  static RandomForest fit_classifier(const Eigen::MatrixXd& x,
                                     const std::vector<int>& labels,
                                     int num_labels, const ForestOptions& opts,
                                     std::uint64_t seed, int workers = 1);

  double predict(const Eigen::RowVectorXd& row) const;
  Eigen::VectorXd predict_many(const Eigen::MatrixXd& x) const;
  std::size_t num_trees() const { return trees_.size(); }
  double predict_tree(std::size_t t, const Eigen::RowVectorXd& row) const;

  // Out-of-bag generalization estimate: MSE for regression, misclassification
  // rate for labels. Infinite when no sample was ever out of bag.
  double oob_error() const { return oob_error_; }
  // Split-criterion decrease per feature, averaged over trees.
  const Eigen::VectorXd& importance() const { return importance_; }
  ForestMode mode() const { return mode_; }
  const ForestOptions& options() const { return opts_; }
  int num_features() const { return num_features_; }
  int num_labels() const { return num_labels_; }
  bool constant() const;  // single-class training data

  void save(io::BlobWriter& out, const std::string& prefix) const;
  static RandomForest load(const io::BlobReader& in, const std::string& prefix);

 private:
  static RandomForest fit_internal(const Eigen::MatrixXd& x,
                                   const Eigen::VectorXd& y,
                                   const std::vector<int>* labels,
                                   int num_labels, const ForestOptions& opts,
                                   std::uint64_t seed, int workers,
                                   RandomForest&& shell);

  std::vector<std::vector<TreeNode>> trees_;
  ForestOptions opts_;
  ForestMode mode_ = ForestMode::Regression;
  double oob_error_ = 0.0;
  Eigen::VectorXd importance_;
  int num_features_ = 0;
  int num_labels_ = 0;
};

// Grid search minimizing the out-of-bag error; ties prefer the smaller model
// (fewer trees, then fewer candidate features per split, then larger leaves).
ForestOptions tune_forest(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                          const std::vector<ForestOptions>& grid,
                          std::uint64_t seed, int workers = 1);

struct LassoModel {
  double intercept = 0.0;
  Eigen::VectorXd coef;  // original feature scale
  double lambda = 0.0;
  bool converged = true;
  int sweeps = 0;
  Eigen::VectorXd feature_mean;
  Eigen::VectorXd feature_scale;  // 0 marks a constant (skipped) feature

  double predict(const Eigen::RowVectorXd& row) const {
    return intercept + row.dot(coef);
  }
  int nonzeros() const;

  void save(io::BlobWriter& out, const std::string& prefix) const;
  static LassoModel load(const io::BlobReader& in, const std::string& prefix);
};

// Coordinate descent on standardized features for
//   sum (y - b0 - X b)^2 + lambda * sum |b_j|,
// with an unpenalized intercept. Converged when the largest coefficient
// update in a sweep falls below tol.
LassoModel fit_lasso(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                     double lambda, double tol = 1.0e-8,
                     int max_sweeps = 100000);

// Log-spaced grid from the smallest lambda that zeroes every coefficient
// down to lambda_max * min_ratio.
std::vector<double> default_lambda_grid(const Eigen::MatrixXd& x,
                                        const Eigen::VectorXd& y, int count,
                                        double min_ratio);

struct CvLambdaResult {
  double best_lambda = 0.0;
  std::vector<double> grid;
  std::vector<double> cv_errors;  // mean held-out squared error per lambda
};

// Random k-fold cross validation; ties prefer the larger (sparser) lambda.
CvLambdaResult cv_lambda(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                         int k_folds, const std::vector<double>& lambda_grid,
                         std::uint64_t seed);

}  // namespace emlab::learn
