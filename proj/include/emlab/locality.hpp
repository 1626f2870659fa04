#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "emlab/core.hpp"
#include "emlab/io.hpp"

namespace emlab::loc {

// Solution-stage categories for producer-well samples, keyed on the ROM and
// HFM well-block saturations.
enum class Category { A = 0, BPlus = 1, BMinus = 2, C = 3 };

constexpr int kNumCategories = 4;

std::string category_name(Category c);

// Total and deterministic assignment. Precedence: C when the HFM saturation
// exceeds eps_c; else A when both saturations are at most eps_a; else B+/B-
// by the sign of (S_hfm - S_rom). Restricted to the regions where the source
// definitions apply, this reproduces them exactly; the precedence covers the
// gaps they leave open.
Category assign_category(double s_rom, double s_hfm, double eps_a, double eps_c);

struct KMeansModel {
  int k = 0;
  Eigen::MatrixXd centers;  // standardized space, k x f
  Eigen::VectorXd mean;
  Eigen::VectorXd scale;  // 1 for constant input columns
  double inertia = 0.0;
  int iterations = 0;

  // Nearest center in the standardized space; ties go to the lower index.
  int assign(const Eigen::RowVectorXd& row) const;

  void save(io::BlobWriter& out, const std::string& prefix) const;
  static KMeansModel load(const io::BlobReader& in, const std::string& prefix);
};

// Lloyd iterations from k-means++ seeding until the assignment reaches a
// fixpoint; an emptied cluster is reseeded from the farthest point.
KMeansModel kmeans_fit(const Eigen::MatrixXd& points, int k, std::uint64_t seed,
                       int max_iter = 100);

// Inertia curve over k_range; picks the largest discrete second difference
// (ties and short ranges fall back to the smallest k).
int choose_k_elbow(const Eigen::MatrixXd& points, const std::vector<int>& k_range,
                   std::uint64_t seed);

// Standardize-then-project transform retaining the leading principal
// components that explain the requested variance fraction.
struct PcaTransform {
  Eigen::VectorXd mean;
  Eigen::VectorXd scale;
  Eigen::MatrixXd components;  // f x r

  Eigen::MatrixXd apply(const Eigen::MatrixXd& x) const;
  Eigen::RowVectorXd apply_row(const Eigen::RowVectorXd& row) const;

  void save(io::BlobWriter& out, const std::string& prefix) const;
  static PcaTransform load(const io::BlobReader& in, const std::string& prefix);
};

PcaTransform fit_pca(const Eigen::MatrixXd& x, double variance_fraction);

}  // namespace emlab::loc
