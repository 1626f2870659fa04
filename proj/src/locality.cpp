#include "emlab/locality.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace emlab::loc {

std::string category_name(Category c) {
  switch (c) {
    case Category::A: return "A";
    case Category::BPlus: return "B+";
    case Category::BMinus: return "B-";
    case Category::C: return "C";
  }
  return "?";
}

Category assign_category(double s_rom, double s_hfm, double eps_a,
                         double eps_c) {
  if (s_hfm > eps_c) return Category::C;
  if (s_rom <= eps_a && s_hfm <= eps_a) return Category::A;
  return s_rom <= s_hfm ? Category::BPlus : Category::BMinus;
}

namespace {

Eigen::MatrixXd standardize(const Eigen::MatrixXd& x, Eigen::VectorXd& mean,
                            Eigen::VectorXd& scale) {
  mean = x.colwise().mean();
  scale.resize(x.cols());
  Eigen::MatrixXd out(x.rows(), x.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const Eigen::VectorXd centered = x.col(j).array() - mean[j];
    const double sd =
        std::sqrt(centered.squaredNorm() / static_cast<double>(x.rows()));
    scale[j] = sd > 1.0e-300 ? sd : 1.0;
    out.col(j) = centered / scale[j];
  }
  return out;
}

int nearest_center(const Eigen::MatrixXd& centers,
                   const Eigen::RowVectorXd& p) {
  int best = 0;
  double best_d = (centers.row(0) - p).squaredNorm();
  for (int c = 1; c < centers.rows(); ++c) {
    const double d = (centers.row(c) - p).squaredNorm();
    if (d < best_d) {
      best = c;
      best_d = d;
    }
  }
  return best;
}

}  // namespace

int KMeansModel::assign(const Eigen::RowVectorXd& row) const {
  Eigen::RowVectorXd p = (row - mean.transpose()).cwiseQuotient(scale.transpose());
  return nearest_center(centers, p);
}

void KMeansModel::save(io::BlobWriter& out, const std::string& prefix) const {
  out.meta()[prefix] = {{"k", k}, {"inertia", inertia}, {"iterations", iterations}};
  out.add(prefix + ".centers", centers);
  out.add(prefix + ".mean", Eigen::MatrixXd(mean));
  out.add(prefix + ".scale", Eigen::MatrixXd(scale));
}

KMeansModel KMeansModel::load(const io::BlobReader& in,
                              const std::string& prefix) {
  KMeansModel m;
  m.k = in.meta().at(prefix).at("k");
  m.inertia = in.meta().at(prefix).at("inertia");
  m.iterations = in.meta().at(prefix).at("iterations");
  m.centers = in.matrix(prefix + ".centers");
  m.mean = in.matrix(prefix + ".mean");
  m.scale = in.matrix(prefix + ".scale");
  return m;
}

KMeansModel kmeans_fit(const Eigen::MatrixXd& points, int k, std::uint64_t seed,
                       int max_iter) {
  const auto n = static_cast<int>(points.rows());
  if (k < 1 || k > n)
    throw std::invalid_argument("k must lie in [1, #points]");

  KMeansModel model;
  model.k = k;
  const Eigen::MatrixXd x = standardize(points, model.mean, model.scale);

  Rng rng(seed);
  // k-means++ seeding.
  Eigen::MatrixXd centers(k, x.cols());
  centers.row(0) = x.row(static_cast<Eigen::Index>(rng.below(n)));
  Eigen::VectorXd d2(n);
  for (int c = 1; c < k; ++c) {
    for (int i = 0; i < n; ++i) {
      double best = (x.row(i) - centers.row(0)).squaredNorm();
      for (int q = 1; q < c; ++q)
        best = std::min(best, (x.row(i) - centers.row(q)).squaredNorm());
      d2[i] = best;
    }
    const double total = d2.sum();
    if (total <= 0.0) {
      centers.row(c) = x.row(static_cast<Eigen::Index>(rng.below(n)));
      continue;
    }
    double draw = rng.uniform() * total;
    int pick = n - 1;
    for (int i = 0; i < n; ++i) {
      draw -= d2[i];
      if (draw <= 0.0) {
        pick = i;
        break;
      }
    }
    centers.row(c) = x.row(pick);
  }

  std::vector<int> assign(static_cast<std::size_t>(n), -1);
  for (int iter = 1; iter <= max_iter; ++iter) {
    model.iterations = iter;
    bool changed = false;
    for (int i = 0; i < n; ++i) {
      const int c = nearest_center(centers, x.row(i));
      if (c != assign[static_cast<std::size_t>(i)]) {
        assign[static_cast<std::size_t>(i)] = c;
        changed = true;
      }
    }
    if (!changed) break;

    for (int c = 0; c < k; ++c) {
      Eigen::RowVectorXd sum = Eigen::RowVectorXd::Zero(x.cols());
      int count = 0;
      for (int i = 0; i < n; ++i)
        if (assign[static_cast<std::size_t>(i)] == c) {
          sum += x.row(i);
          ++count;
        }
      if (count > 0) {
        centers.row(c) = sum / count;
      } else {
        // Reseed an emptied cluster from the farthest point.
        int far = 0;
        double far_d = -1.0;
        for (int i = 0; i < n; ++i) {
          const double d =
              (x.row(i) - centers.row(assign[static_cast<std::size_t>(i)]))
                  .squaredNorm();
          if (d > far_d) {
            far = i;
            far_d = d;
          }
        }
        centers.row(c) = x.row(far);
        changed = true;
      }
    }
  }

  model.centers = centers;
  model.inertia = 0.0;
  for (int i = 0; i < n; ++i)
    model.inertia +=
        (x.row(i) - centers.row(assign[static_cast<std::size_t>(i)]))
            .squaredNorm();
  return model;
}

int choose_k_elbow(const Eigen::MatrixXd& points,
                   const std::vector<int>& k_range, std::uint64_t seed) {
  if (k_range.empty()) throw std::invalid_argument("k range is empty");
  std::vector<int> ks = k_range;
  std::sort(ks.begin(), ks.end());
  if (ks.size() < 3) return ks.front();

  std::vector<double> inertia;
  inertia.reserve(ks.size());
  for (std::size_t q = 0; q < ks.size(); ++q)
    inertia.push_back(kmeans_fit(points, ks[q], derive_seed(seed, "elbow", q))
                          .inertia);

  int best_k = ks.front();
  double best_curv = -std::numeric_limits<double>::infinity();
  for (std::size_t q = 1; q + 1 < ks.size(); ++q) {
    const double curv = inertia[q - 1] - 2.0 * inertia[q] + inertia[q + 1];
    if (curv > best_curv) {
      best_curv = curv;
      best_k = ks[q];
    }
  }
  return best_k;
}

Eigen::MatrixXd PcaTransform::apply(const Eigen::MatrixXd& x) const {
  Eigen::MatrixXd out(x.rows(), components.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) out.row(i) = apply_row(x.row(i));
  return out;
}

Eigen::RowVectorXd PcaTransform::apply_row(const Eigen::RowVectorXd& row) const {
  const Eigen::RowVectorXd std_row =
      (row - mean.transpose()).cwiseQuotient(scale.transpose());
  return std_row * components;
}

void PcaTransform::save(io::BlobWriter& out, const std::string& prefix) const {
  out.add(prefix + ".mean", Eigen::MatrixXd(mean));
  out.add(prefix + ".scale", Eigen::MatrixXd(scale));
  out.add(prefix + ".components", components);
}

PcaTransform PcaTransform::load(const io::BlobReader& in,
                                const std::string& prefix) {
  PcaTransform t;
  t.mean = in.matrix(prefix + ".mean");
  t.scale = in.matrix(prefix + ".scale");
  t.components = in.matrix(prefix + ".components");
  return t;
}

PcaTransform fit_pca(const Eigen::MatrixXd& x, double variance_fraction) {
  if (!(variance_fraction > 0.0 && variance_fraction <= 1.0))
    throw std::invalid_argument("variance fraction must lie in (0, 1]");
  PcaTransform t;
  const Eigen::MatrixXd xs = standardize(x, t.mean, t.scale);
  const Eigen::MatrixXd cov =
      xs.transpose() * xs / static_cast<double>(std::max<Eigen::Index>(1, x.rows()));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  const Eigen::VectorXd values = eig.eigenvalues().reverse();
  const double total = std::max(values.sum(), 1.0e-300);

  Eigen::Index keep = 0;
  double acc = 0.0;
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    acc += std::max(values[i], 0.0);
    ++keep;
    if (acc / total >= variance_fraction) break;
  }
  t.components.resize(x.cols(), keep);
  for (Eigen::Index i = 0; i < keep; ++i)
    t.components.col(i) = eig.eigenvectors().col(x.cols() - 1 - i);
  return t;
}

}  // namespace emlab::loc
