#pragma once

#include <Eigen/Dense>
#include <vector>

#include "emlab/io.hpp"

namespace emlab::gp {

struct TimeIntegratedError {
  double value = 0.0;
  bool degenerate = false;  // vanishing time-integrated rate
};

// h = sum |delta^n| dt^n / sum (q_rom^n + delta^n) dt^n. With true errors the
// denominator is the time-integrated high-fidelity rate; with predicted
// errors it is the corrected estimate of it.
TimeIntegratedError time_integrated_error(const std::vector<double>& deltas,
                                          const std::vector<double>& rom_rates,
                                          const std::vector<double>& dts);

// Mean of h over a QoI set, in percent.
double averaged_error(const std::vector<double>& h_values);

struct GpOptions {
  std::vector<double> length_scale_grid;  // empty: log grid from the x spread
  std::vector<double> nugget_grid;        // relative nugget eta = sn2/sigma2
};

// Universal kriging in one dimension: first-order polynomial mean (a + b x),
// squared-exponential covariance, hyperparameters by profiled marginal
// likelihood over a log grid.
class GpModel {
 public:
  static GpModel fit(const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                     const GpOptions& opts = {});

  struct Prediction {
    double mean = 0.0;
    double variance = 0.0;
  };
  Prediction predict(double x_star) const;

  double mean_intercept() const { return a_; }
  double mean_slope() const { return b_; }
  double process_variance() const { return sigma2_; }
  double length_scale() const { return theta_; }
  double relative_nugget() const { return eta_; }
  double log_marginal() const { return log_marginal_; }

  void save(io::BlobWriter& out, const std::string& prefix) const;
  static GpModel load(const io::BlobReader& in, const std::string& prefix);

 private:
  void factorize();

  double a_ = 0.0;
  double b_ = 0.0;
  double sigma2_ = 1.0;
  double theta_ = 1.0;
  double eta_ = 1.0e-10;
  double log_marginal_ = 0.0;
  Eigen::VectorXd x_;
  Eigen::VectorXd y_;
  Eigen::LLT<Eigen::MatrixXd> chol_;  // of R + eta I
  Eigen::VectorXd alpha_;             // (R + eta I)^{-1} residual
  Eigen::MatrixXd f_;                 // [1 x]
  Eigen::Matrix2d fkf_inv_;           // (F' K^-1 F)^{-1}, K = sigma2 (R + eta I)
};

// Two-sided normal confidence interval; the 90% level uses the conventional
// 1.6449 multiplier.
std::pair<double, double> confidence_interval(double mean, double variance,
                                              double level = 0.90);

}  // namespace emlab::gp
