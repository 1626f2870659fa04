#include "emlab/learners.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace emlab::learn {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct SplitResult {
  bool found = false;
  int feature = -1;
  double threshold = 0.0;
  double score = kInf;  // total child impurity (RSS or weighted Gini counts)
};

std::vector<int> candidate_features(int num_features, int m_try, Rng& rng,
                                    std::vector<int>& scratch) {
  if (m_try <= 0 || m_try >= num_features) {
    scratch.resize(static_cast<std::size_t>(num_features));
    std::iota(scratch.begin(), scratch.end(), 0);
    return scratch;
  }
  scratch.resize(static_cast<std::size_t>(num_features));
  std::iota(scratch.begin(), scratch.end(), 0);
  for (int k = 0; k < m_try; ++k) {
    const auto j = static_cast<std::size_t>(
        rng.below(static_cast<std::uint64_t>(num_features - k)));
    std::swap(scratch[static_cast<std::size_t>(k)],
              scratch[static_cast<std::size_t>(k) + j]);
  }
  std::vector<int> out(scratch.begin(), scratch.begin() + m_try);
  std::sort(out.begin(), out.end());  // lowest feature index wins ties
  return out;
}

// Shared frame for recursive tree growth.
struct TreeBuilder {
  const Eigen::MatrixXd& x;
  const Eigen::VectorXd& y;          // responses, or labels cast to double
  const std::vector<int>* labels;    // non-null for classification
  int num_labels = 0;
  int min_leaf = 1;
  int max_depth = 64;
  int m_try = 0;
  Rng* rng = nullptr;
  std::vector<TreeNode> nodes;
  Eigen::VectorXd* importance = nullptr;
  std::vector<std::pair<double, int>> sorted;  // scratch: (value, sample)
  std::vector<int> feature_scratch;

  double node_rss(const std::vector<int>& idx) const {
    double sum = 0.0, sq = 0.0;
    for (int i : idx) {
      sum += y[i];
      sq += y[i] * y[i];
    }
    return sq - sum * sum / static_cast<double>(idx.size());
  }

  SplitResult best_regression_split(const std::vector<int>& idx) {
    SplitResult best;
    const auto n = static_cast<int>(idx.size());
    for (int j : candidate_features(static_cast<int>(x.cols()), m_try, *rng,
                                    feature_scratch)) {
      sorted.clear();
      for (int i : idx) sorted.emplace_back(x(i, j), i);
      std::sort(sorted.begin(), sorted.end(),
                [](const auto& a, const auto& b) { return a.first < b.first; });
      double left_sum = 0.0, left_sq = 0.0;
      double total_sum = 0.0, total_sq = 0.0;
      for (const auto& [v, i] : sorted) {
        total_sum += y[i];
        total_sq += y[i] * y[i];
      }
      for (int k = 1; k < n; ++k) {
        const double yk = y[sorted[static_cast<std::size_t>(k - 1)].second];
        left_sum += yk;
        left_sq += yk * yk;
        if (sorted[static_cast<std::size_t>(k - 1)].first ==
            sorted[static_cast<std::size_t>(k)].first)
          continue;  // split only between distinct values
        if (k < min_leaf || n - k < min_leaf) continue;
        const double right_sum = total_sum - left_sum;
        const double right_sq = total_sq - left_sq;
        const double rss =
            (left_sq - left_sum * left_sum / k) +
            (right_sq - right_sum * right_sum / (n - k));
        if (rss < best.score) {
          best.found = true;
          best.feature = j;
          best.threshold = 0.5 * (sorted[static_cast<std::size_t>(k - 1)].first +
                                  sorted[static_cast<std::size_t>(k)].first);
          best.score = rss;
        }
      }
    }
    return best;
  }

  double gini_count(const std::vector<int>& counts, int n) const {
    if (n == 0) return 0.0;
    double g = static_cast<double>(n);
    for (int c : counts)
      g -= static_cast<double>(c) * static_cast<double>(c) /
           static_cast<double>(n);
    return g;  // n * gini impurity
  }

  SplitResult best_gini_split(const std::vector<int>& idx) {
    SplitResult best;
    const auto n = static_cast<int>(idx.size());
    std::vector<int> left_counts(static_cast<std::size_t>(num_labels));
    std::vector<int> total_counts(static_cast<std::size_t>(num_labels));
    for (int j : candidate_features(static_cast<int>(x.cols()), m_try, *rng,
                                    feature_scratch)) {
      sorted.clear();
      for (int i : idx) sorted.emplace_back(x(i, j), i);
      std::sort(sorted.begin(), sorted.end(),
                [](const auto& a, const auto& b) { return a.first < b.first; });
      std::fill(left_counts.begin(), left_counts.end(), 0);
      std::fill(total_counts.begin(), total_counts.end(), 0);
      for (const auto& [v, i] : sorted)
        ++total_counts[static_cast<std::size_t>((*labels)[static_cast<std::size_t>(i)])];
      std::vector<int> right_counts = total_counts;
      for (int k = 1; k < n; ++k) {
        const int lab =
            (*labels)[static_cast<std::size_t>(sorted[static_cast<std::size_t>(k - 1)].second)];
        ++left_counts[static_cast<std::size_t>(lab)];
        --right_counts[static_cast<std::size_t>(lab)];
        if (sorted[static_cast<std::size_t>(k - 1)].first ==
            sorted[static_cast<std::size_t>(k)].first)
          continue;
        if (k < min_leaf || n - k < min_leaf) continue;
        const double score =
            gini_count(left_counts, k) + gini_count(right_counts, n - k);
        if (score < best.score) {
          best.found = true;
          best.feature = j;
          best.threshold = 0.5 * (sorted[static_cast<std::size_t>(k - 1)].first +
                                  sorted[static_cast<std::size_t>(k)].first);
          best.score = score;
        }
      }
    }
    return best;
  }

  double leaf_value(const std::vector<int>& idx) const {
    if (labels) {
      std::vector<int> counts(static_cast<std::size_t>(num_labels));
      for (int i : idx) ++counts[static_cast<std::size_t>((*labels)[static_cast<std::size_t>(i)])];
      int best = 0;
      for (int c = 1; c < num_labels; ++c)
        if (counts[static_cast<std::size_t>(c)] > counts[static_cast<std::size_t>(best)])
          best = c;  // ties keep the lexicographically smallest label
      return static_cast<double>(best);
    }
    double sum = 0.0;
    for (int i : idx) sum += y[i];
    return sum / static_cast<double>(idx.size());
  }

  bool pure(const std::vector<int>& idx) const {
    if (labels) {
      const int first = (*labels)[static_cast<std::size_t>(idx.front())];
      for (int i : idx)
        if ((*labels)[static_cast<std::size_t>(i)] != first) return false;
      return true;
    }
    const double first = y[idx.front()];
    for (int i : idx)
      if (y[i] != first) return false;
    return true;
  }

  int grow(std::vector<int>& idx, int depth) {
    const int node_id = static_cast<int>(nodes.size());
    nodes.emplace_back();
    nodes[static_cast<std::size_t>(node_id)].value = leaf_value(idx);
    if (static_cast<int>(idx.size()) < 2 * min_leaf || depth >= max_depth ||
        pure(idx))
      return node_id;

    const SplitResult split =
        labels ? best_gini_split(idx) : best_regression_split(idx);
    if (!split.found) return node_id;

    if (importance) {
      const double parent = labels
                                ? [&] {
                                    std::vector<int> counts(
                                        static_cast<std::size_t>(num_labels));
                                    for (int i : idx)
                                      ++counts[static_cast<std::size_t>(
                                          (*labels)[static_cast<std::size_t>(i)])];
                                    return gini_count(counts,
                                                      static_cast<int>(idx.size()));
                                  }()
                                : node_rss(idx);
      (*importance)[split.feature] += std::max(0.0, parent - split.score);
    }

    std::vector<int> left, right;
    left.reserve(idx.size());
    right.reserve(idx.size());
    for (int i : idx) {
      if (x(i, split.feature) < split.threshold)
        left.push_back(i);
      else
        right.push_back(i);
    }
    idx.clear();
    idx.shrink_to_fit();

    nodes[static_cast<std::size_t>(node_id)].feature = split.feature;
    nodes[static_cast<std::size_t>(node_id)].threshold = split.threshold;
    const int l = grow(left, depth + 1);
    nodes[static_cast<std::size_t>(node_id)].left = l;
    const int r = grow(right, depth + 1);
    nodes[static_cast<std::size_t>(node_id)].right = r;
    return node_id;
  }
};

double tree_predict(const std::vector<TreeNode>& nodes,
                    const Eigen::RowVectorXd& row) {
  int node = 0;
  while (nodes[static_cast<std::size_t>(node)].feature >= 0) {
    const auto& nd = nodes[static_cast<std::size_t>(node)];
    node = row[nd.feature] < nd.threshold ? nd.left : nd.right;
  }
  return nodes[static_cast<std::size_t>(node)].value;
}

int resolve_m_try(int m_try, int num_features, ForestMode mode) {
  if (m_try > 0) return std::min(m_try, num_features);
  if (mode == ForestMode::Regression)
    return std::max(1, static_cast<int>(
                           std::ceil(static_cast<double>(num_features) / 3.0)));
  return std::max(
      1, static_cast<int>(std::ceil(std::sqrt(static_cast<double>(num_features)))));
}

}  // namespace

bool RandomForest::constant() const {
  return mode_ == ForestMode::Classification && num_labels_ == 1;
}

RandomForest RandomForest::fit(const Eigen::MatrixXd& x,
                               const Eigen::VectorXd& y,
                               const ForestOptions& opts, std::uint64_t seed,
                               int workers) {
  if (x.rows() == 0 || x.rows() != y.size())
    throw std::invalid_argument("forest training data is empty or mismatched");
  RandomForest f;
  f.mode_ = ForestMode::Regression;
  return fit_internal(x, y, nullptr, 0, opts, seed, workers, std::move(f));
}

RandomForest RandomForest::fit_classifier(const Eigen::MatrixXd& x,
                                          const std::vector<int>& labels,
                                          int num_labels,
                                          const ForestOptions& opts,
                                          std::uint64_t seed, int workers) {
  if (x.rows() == 0 ||
      x.rows() != static_cast<Eigen::Index>(labels.size()))
    throw std::invalid_argument("classifier training data is empty or mismatched");
  for (int lab : labels)
    if (lab < 0 || lab >= num_labels)
      throw std::invalid_argument("label outside the declared range");
  RandomForest f;
  f.mode_ = ForestMode::Classification;
  f.num_labels_ = num_labels;
  Eigen::VectorXd y(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i)
    y[static_cast<Eigen::Index>(i)] = labels[i];
  return fit_internal(x, y, &labels, num_labels, opts, seed, workers,
                      std::move(f));
}

RandomForest RandomForest::fit_internal(const Eigen::MatrixXd& x,
                                        const Eigen::VectorXd& y,
                                        const std::vector<int>* labels,
                                        int num_labels,
                                        const ForestOptions& opts,
                                        std::uint64_t seed, int workers,
                                        RandomForest&& shell) {
  RandomForest f = std::move(shell);
  f.opts_ = opts;
  f.num_features_ = static_cast<int>(x.cols());
  const int n = static_cast<int>(x.rows());
  const int m_try = resolve_m_try(opts.m_try, f.num_features_, f.mode_);

  f.trees_.resize(static_cast<std::size_t>(opts.n_trees));
  std::vector<Eigen::VectorXd> tree_importance(
      static_cast<std::size_t>(opts.n_trees));
  std::vector<std::vector<bool>> in_bag(
      static_cast<std::size_t>(opts.n_trees),
      std::vector<bool>(static_cast<std::size_t>(n), false));

  parallel_for(static_cast<std::size_t>(opts.n_trees), workers, [&](std::size_t t) {
    Rng rng(derive_seed(seed, "tree", t));
    std::vector<int> idx;
    idx.reserve(static_cast<std::size_t>(n));
    if (opts.bootstrap) {
      for (int i = 0; i < n; ++i) {
        const int pick =
            static_cast<int>(rng.below(static_cast<std::uint64_t>(n)));
        idx.push_back(pick);
        in_bag[t][static_cast<std::size_t>(pick)] = true;
      }
    } else {
      for (int i = 0; i < n; ++i) {
        idx.push_back(i);
        in_bag[t][static_cast<std::size_t>(i)] = true;
      }
    }
    TreeBuilder builder{.x = x,
                        .y = y,
                        .labels = labels,
                        .num_labels = num_labels,
                        .min_leaf = opts.min_leaf,
                        .max_depth = opts.max_depth,
                        .m_try = m_try,
                        .rng = &rng};
    tree_importance[t] = Eigen::VectorXd::Zero(x.cols());
    builder.importance = &tree_importance[t];
    builder.grow(idx, 0);
    f.trees_[t] = std::move(builder.nodes);
  });

  f.importance_ = Eigen::VectorXd::Zero(x.cols());
  for (const auto& imp : tree_importance) f.importance_ += imp;
  f.importance_ /= static_cast<double>(opts.n_trees);

  // Out-of-bag error from trees that never saw the sample.
  int covered = 0;
  double err = 0.0;
  std::vector<double> votes(static_cast<std::size_t>(std::max(1, num_labels)));
  for (int i = 0; i < n; ++i) {
    double sum = 0.0;
    int cnt = 0;
    std::fill(votes.begin(), votes.end(), 0.0);
    for (std::size_t t = 0; t < f.trees_.size(); ++t) {
      if (in_bag[t][static_cast<std::size_t>(i)]) continue;
      const double p = tree_predict(f.trees_[t], x.row(i));
      if (labels)
        votes[static_cast<std::size_t>(p)] += 1.0;
      else
        sum += p;
      ++cnt;
    }
    if (cnt == 0) continue;
    ++covered;
    if (labels) {
      int best = 0;
      for (int c = 1; c < num_labels; ++c)
        if (votes[static_cast<std::size_t>(c)] > votes[static_cast<std::size_t>(best)])
          best = c;
      err += best == (*labels)[static_cast<std::size_t>(i)] ? 0.0 : 1.0;
    } else {
      const double resid = y[i] - sum / cnt;
      err += resid * resid;
    }
  }
  f.oob_error_ = covered > 0 ? err / covered : kInf;
  return f;
}

double RandomForest::predict(const Eigen::RowVectorXd& row) const {
  if (mode_ == ForestMode::Regression) {
    double sum = 0.0;
    for (const auto& tree : trees_) sum += tree_predict(tree, row);
    return sum / static_cast<double>(trees_.size());
  }
  std::vector<int> votes(static_cast<std::size_t>(num_labels_), 0);
  for (const auto& tree : trees_)
    ++votes[static_cast<std::size_t>(tree_predict(tree, row))];
  int best = 0;
  for (int c = 1; c < num_labels_; ++c)
    if (votes[static_cast<std::size_t>(c)] > votes[static_cast<std::size_t>(best)])
      best = c;
  return static_cast<double>(best);
}

Eigen::VectorXd RandomForest::predict_many(const Eigen::MatrixXd& x) const {
  Eigen::VectorXd out(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) out[i] = predict(x.row(i));
  return out;
}

double RandomForest::predict_tree(std::size_t t,
                                  const Eigen::RowVectorXd& row) const {
  return tree_predict(trees_.at(t), row);
}

void RandomForest::save(io::BlobWriter& out, const std::string& prefix) const {
  io::json meta{{"mode", mode_ == ForestMode::Regression ? "regression"
                                                         : "classification"},
                {"n_trees", opts_.n_trees},
                {"m_try", opts_.m_try},
                {"min_leaf", opts_.min_leaf},
                {"max_depth", opts_.max_depth},
                {"bootstrap", opts_.bootstrap},
                {"oob_error", oob_error_},
                {"num_features", num_features_},
                {"num_labels", num_labels_}};
  out.meta()[prefix] = meta;
  out.add(prefix + ".importance", std::vector<double>(
                                      importance_.data(),
                                      importance_.data() + importance_.size()));
  for (std::size_t t = 0; t < trees_.size(); ++t) {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(trees_[t].size()), 5);
    for (std::size_t k = 0; k < trees_[t].size(); ++k) {
      const TreeNode& nd = trees_[t][k];
      m(static_cast<Eigen::Index>(k), 0) = nd.feature;
      m(static_cast<Eigen::Index>(k), 1) = nd.threshold;
      m(static_cast<Eigen::Index>(k), 2) = nd.left;
      m(static_cast<Eigen::Index>(k), 3) = nd.right;
      m(static_cast<Eigen::Index>(k), 4) = nd.value;
    }
    out.add(prefix + ".tree" + std::to_string(t), m);
  }
}

RandomForest RandomForest::load(const io::BlobReader& in,
                                const std::string& prefix) {
  const io::json& meta = in.meta().at(prefix);
  RandomForest f;
  f.mode_ = meta.at("mode") == "regression" ? ForestMode::Regression
                                            : ForestMode::Classification;
  f.opts_.n_trees = meta.at("n_trees");
  f.opts_.m_try = meta.at("m_try");
  f.opts_.min_leaf = meta.at("min_leaf");
  f.opts_.max_depth = meta.at("max_depth");
  f.opts_.bootstrap = meta.at("bootstrap");
  f.oob_error_ = meta.at("oob_error");
  f.num_features_ = meta.at("num_features");
  f.num_labels_ = meta.at("num_labels");
  const std::vector<double> imp = in.vector(prefix + ".importance");
  f.importance_ =
      Eigen::Map<const Eigen::VectorXd>(imp.data(),
                                        static_cast<Eigen::Index>(imp.size()));
  f.trees_.resize(static_cast<std::size_t>(f.opts_.n_trees));
  for (std::size_t t = 0; t < f.trees_.size(); ++t) {
    const Eigen::MatrixXd m = in.matrix(prefix + ".tree" + std::to_string(t));
    f.trees_[t].resize(static_cast<std::size_t>(m.rows()));
    for (Eigen::Index k = 0; k < m.rows(); ++k) {
      TreeNode& nd = f.trees_[t][static_cast<std::size_t>(k)];
      nd.feature = static_cast<int>(m(k, 0));
      nd.threshold = m(k, 1);
      nd.left = static_cast<int>(m(k, 2));
      nd.right = static_cast<int>(m(k, 3));
      nd.value = m(k, 4);
    }
  }
  return f;
}

void LassoModel::save(io::BlobWriter& out, const std::string& prefix) const {
  out.meta()[prefix] = {{"intercept", intercept},
                       {"lambda", lambda},
                       {"converged", converged},
                       {"sweeps", sweeps}};
  out.add(prefix + ".coef", Eigen::MatrixXd(coef));
  out.add(prefix + ".mean", Eigen::MatrixXd(feature_mean));
  out.add(prefix + ".scale", Eigen::MatrixXd(feature_scale));
}

LassoModel LassoModel::load(const io::BlobReader& in,
                            const std::string& prefix) {
  LassoModel m;
  const auto& meta = in.meta().at(prefix);
  m.intercept = meta.at("intercept");
  m.lambda = meta.at("lambda");
  m.converged = meta.at("converged");
  m.sweeps = meta.at("sweeps");
  m.coef = in.matrix(prefix + ".coef");
  m.feature_mean = in.matrix(prefix + ".mean");
  m.feature_scale = in.matrix(prefix + ".scale");
  return m;
}

ForestOptions tune_forest(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                          const std::vector<ForestOptions>& grid,
                          std::uint64_t seed, int workers) {
  if (grid.empty()) throw std::invalid_argument("tuning grid is empty");
  auto model_size = [&](const ForestOptions& o) {
    return std::make_tuple(o.n_trees,
                           resolve_m_try(o.m_try, static_cast<int>(x.cols()),
                                         ForestMode::Regression),
                           -o.min_leaf);
  };
  std::vector<double> oob(grid.size());
  parallel_for(grid.size(), workers, [&](std::size_t g) {
    oob[g] =
        RandomForest::fit(x, y, grid[g], derive_seed(seed, "tune", g), 1)
            .oob_error();
  });
  std::size_t best = 0;
  for (std::size_t g = 1; g < grid.size(); ++g) {
    if (oob[g] < oob[best] ||
        (oob[g] == oob[best] && model_size(grid[g]) < model_size(grid[best])))
      best = g;
  }
  return grid[best];
}

int LassoModel::nonzeros() const {
  int count = 0;
  for (Eigen::Index j = 0; j < coef.size(); ++j)
    if (coef[j] != 0.0) ++count;
  return count;
}

LassoModel fit_lasso(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                     double lambda, double tol, int max_sweeps) {
  if (lambda < 0.0) throw std::invalid_argument("lambda must be >= 0");
  if (x.rows() != y.size() || x.rows() == 0)
    throw std::invalid_argument("lasso training data is empty or mismatched");
  const Eigen::Index n = x.rows();
  const Eigen::Index f = x.cols();

  LassoModel model;
  model.lambda = lambda;
  model.feature_mean = x.colwise().mean();
  model.feature_scale.resize(f);
  Eigen::MatrixXd xs(n, f);
  for (Eigen::Index j = 0; j < f; ++j) {
    const Eigen::VectorXd centered = x.col(j).array() - model.feature_mean[j];
    const double sd = std::sqrt(centered.squaredNorm() / static_cast<double>(n));
    model.feature_scale[j] = sd > 1.0e-300 ? sd : 0.0;
    xs.col(j) = model.feature_scale[j] > 0.0 ? (centered / sd).eval()
                                             : Eigen::VectorXd::Zero(n);
  }
  const double y_mean = y.mean();
  const Eigen::VectorXd yc = y.array() - y_mean;

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(f);
  Eigen::VectorXd resid = yc;
  const double col_sq = static_cast<double>(n);  // standardized columns

  model.converged = false;
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double max_change = 0.0;
    for (Eigen::Index j = 0; j < f; ++j) {
      if (model.feature_scale[j] == 0.0) continue;
      const double b_old = beta[j];
      const double c = xs.col(j).dot(resid) + col_sq * b_old;
      const double thresh = 0.5 * lambda;
      double b_new = 0.0;
      if (c > thresh)
        b_new = (c - thresh) / col_sq;
      else if (c < -thresh)
        b_new = (c + thresh) / col_sq;
      if (b_new != b_old) {
        resid += xs.col(j) * (b_old - b_new);
        beta[j] = b_new;
        max_change = std::max(max_change, std::abs(b_new - b_old));
      }
    }
    model.sweeps = sweep + 1;
    if (max_change < tol) {
      model.converged = true;
      break;
    }
  }

  model.coef.resize(f);
  for (Eigen::Index j = 0; j < f; ++j)
    model.coef[j] =
        model.feature_scale[j] > 0.0 ? beta[j] / model.feature_scale[j] : 0.0;
  model.intercept = y_mean - model.feature_mean.dot(model.coef);
  return model;
}

std::vector<double> default_lambda_grid(const Eigen::MatrixXd& x,
                                        const Eigen::VectorXd& y, int count,
                                        double min_ratio) {
  const Eigen::Index n = x.rows();
  const Eigen::VectorXd yc = y.array() - y.mean();
  double lambda_max = 0.0;
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const Eigen::VectorXd centered = x.col(j).array() - x.col(j).mean();
    const double sd = std::sqrt(centered.squaredNorm() / static_cast<double>(n));
    if (sd <= 1.0e-300) continue;
    lambda_max = std::max(lambda_max, 2.0 * std::abs(centered.dot(yc)) / sd);
  }
  if (lambda_max <= 0.0) lambda_max = 1.0;
  std::vector<double> grid;
  grid.reserve(static_cast<std::size_t>(count));
  for (int k = 0; k < count; ++k) {
    const double frac = count == 1 ? 0.0
                                   : static_cast<double>(k) /
                                         static_cast<double>(count - 1);
    grid.push_back(lambda_max * std::pow(min_ratio, frac));
  }
  return grid;
}

CvLambdaResult cv_lambda(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                         int k_folds, const std::vector<double>& lambda_grid,
                         std::uint64_t seed) {
  if (k_folds < 2) throw std::invalid_argument("k_folds must be >= 2");
  if (lambda_grid.empty()) throw std::invalid_argument("lambda grid is empty");
  const Eigen::Index n = x.rows();
  if (n < k_folds) throw std::invalid_argument("not enough samples for k folds");

  Rng rng(seed);
  const std::vector<std::size_t> perm = rng.permutation(static_cast<std::size_t>(n));
  std::vector<int> fold_of(static_cast<std::size_t>(n));
  for (std::size_t i = 0; i < perm.size(); ++i)
    fold_of[perm[i]] = static_cast<int>(i % static_cast<std::size_t>(k_folds));

  CvLambdaResult result;
  result.grid = lambda_grid;
  result.cv_errors.assign(lambda_grid.size(), 0.0);

  for (int fold = 0; fold < k_folds; ++fold) {
    std::vector<int> train, test;
    for (Eigen::Index i = 0; i < n; ++i) {
      (fold_of[static_cast<std::size_t>(i)] == fold ? test : train)
          .push_back(static_cast<int>(i));
    }
    Eigen::MatrixXd xtr(train.size(), x.cols());
    Eigen::VectorXd ytr(train.size());
    for (std::size_t i = 0; i < train.size(); ++i) {
      xtr.row(static_cast<Eigen::Index>(i)) = x.row(train[i]);
      ytr[static_cast<Eigen::Index>(i)] = y[train[i]];
    }
    for (std::size_t g = 0; g < lambda_grid.size(); ++g) {
      const LassoModel m = fit_lasso(xtr, ytr, lambda_grid[g]);
      double sse = 0.0;
      for (int i : test) {
        const double r = y[i] - m.predict(x.row(i));
        sse += r * r;
      }
      result.cv_errors[g] += sse;
    }
  }
  for (auto& e : result.cv_errors) e /= static_cast<double>(n);

  std::size_t best = 0;
  for (std::size_t g = 1; g < lambda_grid.size(); ++g) {
    const bool better = result.cv_errors[g] < result.cv_errors[best];
    const bool tie_sparser = result.cv_errors[g] == result.cv_errors[best] &&
                             lambda_grid[g] > lambda_grid[best];
    if (better || tie_sparser) best = g;
  }
  result.best_lambda = lambda_grid[best];
  return result;
}

}  // namespace emlab::learn
