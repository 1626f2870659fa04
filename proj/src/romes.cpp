#include "emlab/romes.hpp"

#include <cmath>
#include <stdexcept>

namespace emlab::gp {

TimeIntegratedError time_integrated_error(const std::vector<double>& deltas,
                                          const std::vector<double>& rom_rates,
                                          const std::vector<double>& dts) {
  if (deltas.size() != rom_rates.size() || deltas.size() != dts.size())
    throw std::invalid_argument("time-integrated error inputs misaligned");
  double num = 0.0, den = 0.0, scale = 0.0;
  for (std::size_t n = 0; n < deltas.size(); ++n) {
    num += std::abs(deltas[n]) * dts[n];
    den += (rom_rates[n] + deltas[n]) * dts[n];
    scale += std::abs(rom_rates[n] + deltas[n]) * dts[n];
  }
  TimeIntegratedError out;
  if (std::abs(den) <= 1.0e-14 * std::max(scale, 1.0e-300) || den == 0.0) {
    out.degenerate = true;
    return out;
  }
  out.value = num / den;
  return out;
}

double averaged_error(const std::vector<double>& h_values) {
  if (h_values.empty())
    throw std::invalid_argument("averaged error over an empty QoI set");
  double sum = 0.0;
  for (double h : h_values) sum += h;
  return sum / static_cast<double>(h_values.size()) * 100.0;
}

namespace {

Eigen::MatrixXd correlation(const Eigen::VectorXd& x, double theta, double eta) {
  const Eigen::Index n = x.size();
  Eigen::MatrixXd r(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j <= i; ++j) {
      const double d = (x[i] - x[j]) / theta;
      r(i, j) = r(j, i) = std::exp(-0.5 * d * d);
    }
    r(i, i) += eta;
  }
  return r;
}

}  // namespace

GpModel GpModel::fit(const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                     const GpOptions& opts) {
  const Eigen::Index n = x.size();
  if (n < 3 || y.size() != n)
    throw std::invalid_argument("gp fit needs at least three aligned pairs");
  const double spread = x.maxCoeff() - x.minCoeff();
  if (!(spread > 0.0))
    throw std::domain_error("degenerate gp training set: identical indicators");

  std::vector<double> thetas = opts.length_scale_grid;
  if (thetas.empty()) {
    for (int k = 0; k < 24; ++k)
      thetas.push_back(spread *
                       std::pow(10.0, -1.5 + 2.0 * k / 23.0));  // 0.03..3 x spread
  }
  std::vector<double> etas = opts.nugget_grid;
  if (etas.empty())
    etas = {1.0e-10, 1.0e-8, 1.0e-6, 1.0e-4, 1.0e-3,
            1.0e-2,  3.0e-2, 1.0e-1, 3.0e-1, 1.0};

  GpModel best;
  best.log_marginal_ = -std::numeric_limits<double>::infinity();
  Eigen::MatrixXd f(n, 2);
  f.col(0).setOnes();
  f.col(1) = x;

  for (double theta : thetas) {
    for (double eta : etas) {
      if (eta < 1.0e-10) eta = 1.0e-10;  // nugget floor
      const Eigen::MatrixXd r = correlation(x, theta, eta);
      Eigen::LLT<Eigen::MatrixXd> llt(r);
      if (llt.info() != Eigen::Success) continue;

      // Generalized least squares for the polynomial trend.
      const Eigen::MatrixXd rinv_f = llt.solve(f);
      const Eigen::Matrix2d ftf = f.transpose() * rinv_f;
      const Eigen::Vector2d beta =
          ftf.ldlt().solve(f.transpose() * llt.solve(y));
      const Eigen::VectorXd resid = y - f * beta;
      const double sigma2 =
          resid.dot(llt.solve(resid)) / static_cast<double>(n);
      if (!(sigma2 > 0.0) || !std::isfinite(sigma2)) continue;

      double log_det = 0.0;
      for (Eigen::Index i = 0; i < n; ++i)
        log_det += 2.0 * std::log(llt.matrixL()(i, i));
      const double ll = -0.5 * (static_cast<double>(n) * std::log(sigma2) +
                                log_det + static_cast<double>(n));
      if (ll > best.log_marginal_) {
        best.log_marginal_ = ll;
        best.a_ = beta[0];
        best.b_ = beta[1];
        best.sigma2_ = sigma2;
        best.theta_ = theta;
        best.eta_ = eta;
      }
    }
  }
  if (!std::isfinite(best.log_marginal_))
    throw std::runtime_error("gp hyperparameter search failed");

  best.x_ = x;
  best.y_ = y;
  best.factorize();
  return best;
}

void GpModel::factorize() {
  const Eigen::Index n = x_.size();
  f_.resize(n, 2);
  f_.col(0).setOnes();
  f_.col(1) = x_;
  const Eigen::MatrixXd r = correlation(x_, theta_, eta_);
  chol_.compute(r);
  if (chol_.info() != Eigen::Success)
    throw std::runtime_error("gp correlation matrix is not positive definite");
  const Eigen::VectorXd resid = y_ - f_ * Eigen::Vector2d(a_, b_);
  alpha_ = chol_.solve(resid);
  // (F' K^-1 F)^{-1} with K = sigma2 * (R + eta I).
  const Eigen::Matrix2d fkf =
      f_.transpose() * chol_.solve(f_) / sigma2_;
  fkf_inv_ = fkf.inverse();
}

GpModel::Prediction GpModel::predict(double x_star) const {
  const Eigen::Index n = x_.size();
  Eigen::VectorXd r_star(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double d = (x_star - x_[i]) / theta_;
    r_star[i] = std::exp(-0.5 * d * d);
  }
  Prediction p;
  p.mean = a_ + b_ * x_star + r_star.dot(alpha_);

  // K^{-1} k_star with K = sigma2 (R + eta I), k_star = sigma2 r_star.
  const Eigen::VectorXd kinned = chol_.solve(r_star);
  const Eigen::Vector2d f_star(1.0, x_star);
  const Eigen::Vector2d u = f_star - f_.transpose() * kinned;
  p.variance = sigma2_ * (1.0 + eta_) - sigma2_ * r_star.dot(kinned) +
               u.dot(fkf_inv_ * u);
  if (p.variance < 0.0) p.variance = 0.0;
  return p;
}

void GpModel::save(io::BlobWriter& out, const std::string& prefix) const {
  out.meta()[prefix] = {{"a", a_},         {"b", b_},
                        {"sigma2", sigma2_}, {"theta", theta_},
                        {"eta", eta_},     {"log_marginal", log_marginal_}};
  out.add(prefix + ".x", Eigen::MatrixXd(x_));
  out.add(prefix + ".y", Eigen::MatrixXd(y_));
}

GpModel GpModel::load(const io::BlobReader& in, const std::string& prefix) {
  GpModel m;
  const auto& meta = in.meta().at(prefix);
  m.a_ = meta.at("a");
  m.b_ = meta.at("b");
  m.sigma2_ = meta.at("sigma2");
  m.theta_ = meta.at("theta");
  m.eta_ = meta.at("eta");
  m.log_marginal_ = meta.at("log_marginal");
  m.x_ = in.matrix(prefix + ".x");
  m.y_ = in.matrix(prefix + ".y");
  m.factorize();
  return m;
}

namespace {

double standard_normal_cdf(double z) {
  return 0.5 * std::erfc(-z / std::sqrt(2.0));
}

double normal_quantile(double p) {
  double lo = 0.0, hi = 10.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (standard_normal_cdf(mid) < p ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

std::pair<double, double> confidence_interval(double mean, double variance,
                                              double level) {
  if (!(level > 0.0 && level < 1.0))
    throw std::invalid_argument("confidence level must lie in (0,1)");
  const double z = std::abs(level - 0.90) < 1.0e-12
                       ? 1.6449
                       : normal_quantile(0.5 + 0.5 * level);
  const double half = z * std::sqrt(std::max(variance, 0.0));
  return {mean - half, mean + half};
}

}  // namespace emlab::gp
