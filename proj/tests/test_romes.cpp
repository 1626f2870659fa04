#include "doctest.h"

#include <Eigen/Dense>
#include <cmath>

#include "emlab/core.hpp"
#include "emlab/romes.hpp"

using namespace emlab;
using namespace emlab::gp;

TEST_CASE("time-integrated error closed forms") {
  SUBCASE("zero errors give zero") {
    const auto h = time_integrated_error({0.0, 0.0, 0.0}, {5.0, 6.0, 7.0},
                                         {1.0, 2.0, 1.0});
    CHECK(h.value == 0.0);
    CHECK_FALSE(h.degenerate);
  }
  SUBCASE("constant ratio") {
    // |delta| = 1 and q_rom + delta = 10 at every step => h = 0.1.
    const auto h = time_integrated_error({1.0, 1.0}, {9.0, 9.0}, {3.0, 5.0});
    CHECK(h.value == doctest::Approx(0.1).epsilon(1e-14));
  }
  SUBCASE("random sequences match an independent summation") {
    Rng rng(derive_seed(3, "tie"));
    std::vector<double> d, q, dt;
    for (int n = 0; n < 25; ++n) {
      d.push_back(rng.uniform(-1.0, 1.0));
      q.push_back(rng.uniform(5.0, 10.0));
      dt.push_back(rng.uniform(0.5, 2.0));
    }
    double num = 0.0, den = 0.0;
    for (int n = 0; n < 25; ++n) {
      num += std::abs(d[static_cast<std::size_t>(n)]) * dt[static_cast<std::size_t>(n)];
      den += (q[static_cast<std::size_t>(n)] + d[static_cast<std::size_t>(n)]) *
             dt[static_cast<std::size_t>(n)];
    }
    const auto h = time_integrated_error(d, q, dt);
    CHECK(h.value == doctest::Approx(num / den).epsilon(1e-14));
  }
  SUBCASE("vanishing denominator is flagged") {
    const auto h = time_integrated_error({1.0}, {-1.0}, {2.0});
    CHECK(h.degenerate);
    CHECK(h.value == 0.0);
  }
}

TEST_CASE("averaged error is the mean in percent") {
  CHECK(averaged_error({0.07}) == doctest::Approx(7.0));
  CHECK(averaged_error({0.02, 0.04, 0.06}) == doctest::Approx(4.0));
}

TEST_CASE("gp interpolates noise-free linear data") {
  Eigen::VectorXd x(6), y(6);
  x << 0.0, 0.2, 0.4, 0.6, 0.8, 1.0;
  for (int i = 0; i < 6; ++i) y[i] = 2.0 * x[i] + 1.0;
  GpOptions opts;
  opts.nugget_grid = {1.0e-10};
  const GpModel gp = GpModel::fit(x, y, opts);
  for (int i = 0; i < 6; ++i) {
    const auto p = gp.predict(x[i]);
    CHECK(p.mean == doctest::Approx(y[i]).epsilon(1e-8));
    CHECK(p.variance < 1e-6 * gp.process_variance() + 1e-12);
  }
}

TEST_CASE("constant targets give a flat trend") {
  Eigen::VectorXd x(5), y(5);
  x << 0.0, 1.0, 2.0, 3.0, 4.0;
  y.setConstant(3.5);
  const GpModel gp = GpModel::fit(x, y);
  CHECK(std::abs(gp.mean_slope()) < 1e-8);
  CHECK(gp.predict(10.0).mean == doctest::Approx(3.5).epsilon(1e-6));
}

TEST_CASE("gp reverts to the polynomial trend far from the data") {
  Rng rng(derive_seed(4, "trend"));
  Eigen::VectorXd x(8), y(8);
  for (int i = 0; i < 8; ++i) {
    x[i] = 0.1 * i;
    y[i] = 1.0 + 0.5 * x[i] + 0.05 * rng.normal();
  }
  const GpModel gp = GpModel::fit(x, y);
  const double far = 100.0;
  const auto p = gp.predict(far);
  const double trend = gp.mean_intercept() + gp.mean_slope() * far;
  // Far from the data the correlation vector vanishes; the mean reverts to
  // the trend and the variance approaches the prior (plus the GLS term).
  CHECK(p.mean == doctest::Approx(trend).epsilon(1e-6));
  CHECK(p.variance >=
        gp.process_variance() * (1.0 + gp.relative_nugget()) * 0.99);
}

TEST_CASE("gp recovers a synthetic slope") {
  int hits = 0;
  for (int rep = 0; rep < 20; ++rep) {
    Rng rng(derive_seed(300 + rep, "slope"));
    const int n = 15;
    Eigen::VectorXd x(n), y(n);
    for (int i = 0; i < n; ++i) {
      x[i] = rng.uniform(0.0, 1.0);
      y[i] = 2.0 * x[i] + 0.05 * rng.normal();
    }
    const GpModel gp = GpModel::fit(x, y);
    if (std::abs(gp.mean_slope() - 2.0) < 0.5) ++hits;
  }
  CHECK(hits >= 18);  // >= 90/100 seeded runs
}

TEST_CASE("degenerate identical indicators are rejected") {
  Eigen::VectorXd x = Eigen::VectorXd::Constant(5, 1.0);
  Eigen::VectorXd y(5);
  y << 1.0, 2.0, 3.0, 4.0, 5.0;
  CHECK_THROWS_AS(GpModel::fit(x, y), std::domain_error);
}

TEST_CASE("confidence interval uses the pinned 90% multiplier") {
  const auto [lo, hi] = confidence_interval(10.0, 4.0, 0.90);
  CHECK(lo == doctest::Approx(10.0 - 1.6449 * 2.0));
  CHECK(hi == doctest::Approx(10.0 + 1.6449 * 2.0));
  const auto [lo95, hi95] = confidence_interval(0.0, 1.0, 0.95);
  CHECK(hi95 == doctest::Approx(1.959964).epsilon(1e-4));
  CHECK(lo95 == doctest::Approx(-hi95));
}

TEST_CASE("gp coverage on synthetic draws sits near the nominal level") {
  // Draw functions from a known GP, fit on 15 points, test on 5 held out;
  // aggregate CI coverage across replicates.
  int inside = 0, total = 0;
  for (int rep = 0; rep < 60; ++rep) {
    Rng rng(derive_seed(1234, "cov", static_cast<std::uint64_t>(rep)));
    const int n = 20;
    Eigen::VectorXd x(n);
    for (int i = 0; i < n; ++i) x[i] = rng.uniform(0.0, 1.0);

    // Sample y ~ GP(2x, K) with sigma2 = 0.04, theta = 0.25, noise 0.01^2.
    Eigen::MatrixXd k(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        const double d = (x[i] - x[j]) / 0.25;
        k(i, j) = 0.04 * std::exp(-0.5 * d * d);
      }
    k.diagonal().array() += 1.0e-4;
    const Eigen::MatrixXd l = k.llt().matrixL();
    Eigen::VectorXd draw(n);
    for (int i = 0; i < n; ++i) draw[i] = rng.normal();
    const Eigen::VectorXd y = 2.0 * x + l * draw;

    const GpModel gp = GpModel::fit(x.head(15), y.head(15));
    for (int i = 15; i < n; ++i) {
      const auto p = gp.predict(x[i]);
      const auto [lo, hi] = confidence_interval(p.mean, p.variance, 0.90);
      if (y[i] >= lo && y[i] <= hi) ++inside;
      ++total;
    }
  }
  const double coverage = static_cast<double>(inside) / total;
  CHECK(coverage > 0.82);
  CHECK(coverage < 0.98);
}

TEST_CASE("gp round-trips through the blob container") {
  Rng rng(derive_seed(10, "gp-io"));
  Eigen::VectorXd x(8), y(8);
  for (int i = 0; i < 8; ++i) {
    x[i] = 0.1 * i;
    y[i] = std::sin(x[i]) + 0.01 * rng.normal();
  }
  const GpModel gp = GpModel::fit(x, y);
  const auto dir = std::filesystem::temp_directory_path() / "emlab_gp_rt";
  io::BlobWriter w(dir / "gp");
  gp.save(w, "gp");
  w.finish();
  const GpModel g = GpModel::load(io::BlobReader(dir / "gp"), "gp");
  for (double probe : {0.05, 0.33, 0.71}) {
    CHECK(g.predict(probe).mean == doctest::Approx(gp.predict(probe).mean));
    CHECK(g.predict(probe).variance ==
          doctest::Approx(gp.predict(probe).variance));
  }
}
