#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "expuq/bandwidth.hpp"
#include "expuq/rng.hpp"
#include "oracles.hpp"

using namespace expuq;

namespace {

Eigen::VectorXd normal_sample(int m, std::uint64_t seed, double mu = 0.0, double sd = 1.0) {
  RandomSource rng(seed, 0);
  Eigen::VectorXd x(m);
  for (int i = 0; i < m; ++i) x[i] = mu + sd * rng.normal();
  return x;
}

// Leave-one-out least-squares cross-validation criterion for a Gaussian-kernel
// density estimate; minimized on a log-spaced grid. Test-side oracle only.
double lscv_optimal_bandwidth(const Eigen::VectorXd& x, double lo, double hi, int grid = 60) {
  const int m = static_cast<int>(x.size());
  double best_h = lo, best_score = std::numeric_limits<double>::infinity();
  for (int g = 0; g < grid; ++g) {
    const double h = lo * std::pow(hi / lo, static_cast<double>(g) / (grid - 1));
    double s_conv = 0.0, s_loo = 0.0;
    for (int i = 1; i < m; ++i) {
      for (int j = 0; j < i; ++j) {
        const double u = (x[i] - x[j]) / h;
        s_conv += std::exp(-0.25 * u * u);
        s_loo += std::exp(-0.5 * u * u);
      }
    }
    const double inv_sqrt_4pi = 0.28209479177387814;
    const double inv_sqrt_2pi = 0.3989422804014327;
    const double integral_fhat_sq =
        (2.0 * s_conv * inv_sqrt_4pi + m * inv_sqrt_4pi) / (m * static_cast<double>(m) * h);
    const double loo_mean = 2.0 * s_loo * inv_sqrt_2pi / (m * (m - 1.0) * h);
    const double score = integral_fhat_sq - 2.0 * loo_mean;
    if (score < best_score) {
      best_score = score;
      best_h = h;
    }
  }
  return best_h;
}

}  // namespace

TEST_CASE("silverman bandwidth") {
  SECTION("standard normal sample lands near 0.9 m^{-1/5}") {
    const int m = 10000;
    const Eigen::VectorXd x = normal_sample(m, 101);
    const auto st = bandwidth_silverman(x);
    // plug the sample's own stats into the formula
    const double sd = std::sqrt((x.array() - x.mean()).square().sum() / (m - 1));
    std::vector<double> sorted(x.data(), x.data() + m);
    std::sort(sorted.begin(), sorted.end());
    const double iqr = sorted[static_cast<int>(0.75 * (m - 1))] -
                       sorted[static_cast<int>(0.25 * (m - 1))];
    const double expected = 0.9 * std::min(sd, iqr / 1.34) * std::pow(m, -0.2);
    REQUIRE(st.h == Catch::Approx(expected).epsilon(1e-3));
    REQUIRE(st.h == Catch::Approx(0.9 * std::pow(m, -0.2)).epsilon(0.06));
  }

  SECTION("scale equivariance") {
    const Eigen::VectorXd x = normal_sample(500, 102);
    const double h1 = bandwidth_silverman(x).h;
    const double h10 = bandwidth_silverman(Eigen::VectorXd(10.0 * x)).h;
    REQUIRE(h10 == Catch::Approx(10.0 * h1).epsilon(1e-9));
    const double ht = bandwidth_silverman(Eigen::VectorXd(x.array() + 77.0)).h;
    REQUIRE(ht == Catch::Approx(h1).epsilon(1e-9));
  }

  SECTION("doubling m shrinks h by about 2^{-1/5}") {
    const Eigen::VectorXd a = normal_sample(20000, 103);
    const Eigen::VectorXd b = normal_sample(40000, 104);
    const double ratio = bandwidth_silverman(b).h / bandwidth_silverman(a).h;
    REQUIRE(ratio == Catch::Approx(std::pow(2.0, -0.2)).epsilon(0.03));
  }

  SECTION("constant samples are degenerate") {
    Eigen::VectorXd c = Eigen::VectorXd::Constant(50, 3.0);
    REQUIRE_THROWS_AS(bandwidth_silverman(c), DegenerateInputError);
    Eigen::VectorXd one(1);
    one << 1.0;
    REQUIRE_THROWS_AS(bandwidth_silverman(one), DegenerateInputError);
  }
}

TEST_CASE("sheather-jones bandwidth") {
  SECTION("standard normal sample: near the normal reference, corroborated by LSCV") {
    const int m = 3000;
    const Eigen::VectorXd x = normal_sample(m, 111);
    const auto sj = bandwidth_sheather_jones(x);
    REQUIRE_FALSE(sj.silverman_fallback);
    const double normal_ref = 1.06 * std::pow(m, -0.2);
    REQUIRE(sj.h > 0.7 * normal_ref);
    REQUIRE(sj.h < 1.3 * normal_ref);
    const double h_cv = lscv_optimal_bandwidth(x, normal_ref / 8.0, normal_ref * 4.0);
    REQUIRE(h_cv > 0.4 * normal_ref);  // oracle agrees about the scale
    REQUIRE(h_cv < 2.0 * normal_ref);
  }

  SECTION("affine equivariance") {
    const Eigen::VectorXd x = normal_sample(800, 112);
    const double h1 = bandwidth_sheather_jones(x).h;
    const double hc = bandwidth_sheather_jones(Eigen::VectorXd(3.5 * x.array() - 2.0)).h;
    REQUIRE(hc == Catch::Approx(3.5 * h1).epsilon(1e-6));
  }

  SECTION("bimodal mixture: SJ undersmooths relative to silverman") {
    const int m = 10000;
    RandomSource rng(113, 0);
    Eigen::VectorXd x(m);
    for (int i = 0; i < m; ++i)
      x[i] = (rng.uniform() < 0.5 ? -3.0 : 3.0) + rng.normal();
    const double h_sj = bandwidth_sheather_jones(x).h;
    const double h_silv = bandwidth_silverman(x).h;
    REQUIRE(h_sj < h_silv);
    // the LSCV oracle confirms the rule of thumb oversmooths here
    Eigen::VectorXd sub = x.head(2000);
    const double h_cv = lscv_optimal_bandwidth(sub, h_silv / 20.0, h_silv * 2.0);
    REQUIRE(h_cv < bandwidth_silverman(sub).h);
  }

  SECTION("sanity envelope against silverman on unimodal samples") {
    for (std::uint64_t seed : {114, 115, 116}) {
      const Eigen::VectorXd x = normal_sample(1200, seed);
      const double sj = bandwidth_sheather_jones(x).h;
      const double silv = bandwidth_silverman(x).h;
      REQUIRE(sj < 3.0 * silv);
      REQUIRE(sj > silv / 3.0);
    }
    RandomSource rng(117, 0);
    Eigen::VectorXd expo(1500);
    for (auto& v : expo) v = rng.exponential();
    const double sj = bandwidth_sheather_jones(expo).h;
    const double silv = bandwidth_silverman(expo).h;
    REQUIRE(sj < 3.0 * silv);
    REQUIRE(sj > silv / 3.0);
  }

  SECTION("constant samples are degenerate") {
    Eigen::VectorXd c = Eigen::VectorXd::Constant(100, -1.0);
    REQUIRE_THROWS_AS(bandwidth_sheather_jones(c), DegenerateInputError);
  }
}

TEST_CASE("scott bandwidth matrix") {
  SECTION("identity covariance at n=2, m=100") {
    const Eigen::MatrixXd sigma = Eigen::MatrixXd::Identity(2, 2);
    const BandwidthMatrix bm = bandwidth_scott_matrix(sigma, 100);
    const double expected = std::pow(100.0, -1.0 / 3.0);
    REQUIRE(bm.H(0, 0) == Catch::Approx(expected).epsilon(1e-6));
    REQUIRE(bm.H(1, 1) == Catch::Approx(expected).epsilon(1e-6));
    REQUIRE(bm.H(0, 1) == Catch::Approx(0.0).margin(1e-10));
    REQUIRE((bm.inv_H * bm.H - Eigen::MatrixXd::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-8);
    REQUIRE((bm.chol_H * bm.chol_H.transpose() - bm.H).cwiseAbs().maxCoeff() < 1e-12);
  }

  SECTION("determinism: identical input gives identical H") {
    Eigen::MatrixXd sigma(3, 3);
    sigma << 2.0, 0.3, 0.1, 0.3, 1.5, -0.2, 0.1, -0.2, 1.1;
    const BandwidthMatrix a = bandwidth_scott_matrix(sigma, 250);
    const BandwidthMatrix b = bandwidth_scott_matrix(sigma, 250);
    REQUIRE(a.H == b.H);
    REQUIRE(a.inv_H == b.inv_H);
  }

  SECTION("m=1 is degenerate, zero covariance is singular") {
    const Eigen::MatrixXd sigma = Eigen::MatrixXd::Identity(2, 2);
    REQUIRE_THROWS_AS(bandwidth_scott_matrix(sigma, 1), DegenerateInputError);
    const Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(2, 2);
    REQUIRE_THROWS_AS(bandwidth_scott_matrix(zero, 100), NumericalError);
  }
}
