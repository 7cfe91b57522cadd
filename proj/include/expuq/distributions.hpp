#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>

#include "expuq/common.hpp"
#include "expuq/rng.hpp"

namespace expuq {

// Arguments of the Polya-Gamma auxiliary laws PG(b, c): integer shape b >= 1
// and real tilt c.
struct PolyaGammaParams {
  int shape_b = 1;
  double tilt_c = 0.0;
};

namespace detail {

inline constexpr double kPi = 3.141592653589793238462643383279502884;
inline constexpr double kTwoOverPi = 0.636619772367581343075535053490057448;
inline constexpr double kPiSq = 9.869604401089358618834490999876151135;
inline constexpr double kLogPi = 1.144729885849400174143427351353058711;
inline constexpr double kLog2Pi = 1.837877066409345483560659472811235279;

inline double norm_cdf(double x) { return 0.5 * std::erfc(-x * 0.7071067811865475244); }

inline double log_norm_cdf(double x) {
  const double p = norm_cdf(x);
  if (p > 0.0) return std::log(p);
  return -std::numeric_limits<double>::infinity();
}

// Piecewise coefficients a_n(x) of the alternating-series density of J*(1, z),
// evaluated at the crossing point t = 2/pi.
inline double pg_aterm(int n, double x, double t) {
  const double np5 = n + 0.5;
  double logf;
  if (x <= t) {
    logf = kLogPi + std::log(np5) + 1.5 * (std::log(2.0) - kLogPi - std::log(x)) -
           2.0 * np5 * np5 / x;
  } else {
    logf = kLogPi + std::log(np5) - 0.5 * x * kPiSq * np5 * np5;
  }
  return std::exp(logf);
}

// Probability that the proposal for J*(1, z) comes from the truncated
// exponential (right tail) rather than the truncated inverse Gaussian.
inline double pg_mass_right(double z, double t, double K) {
  const double log_a = std::log(4.0) - kLogPi - z;
  const double log_k = std::log(K);
  const double kt = K * t;
  const double w = std::sqrt(0.5 * kPi);
  const double logf1 = log_a + log_norm_cdf(w * (t * z - 1.0)) + log_k + kt;
  const double logf2 = log_a + 2.0 * z + log_norm_cdf(-w * (t * z + 1.0)) + log_k + kt;
  const double q_over_p = std::exp(logf1) + std::exp(logf2);
  return 1.0 / (1.0 + q_over_p);
}

// Inverse Gaussian IG(mu, 1) via Michael-Schucany-Haas.
inline double rand_inv_gauss(double mu, RandomSource& rng) {
  const double u = rng.normal();
  const double v = u * u;
  double out = mu + 0.5 * mu * (mu * v - std::sqrt(4.0 * mu * v + mu * mu * v * v));
  if (rng.uniform() > mu / (mu + out)) out = mu * mu / out;
  return out;
}

// Gamma truncated to (pi/2, inf), used when IG mean exceeds the crossing point.
inline double rand_trunc_gamma(RandomSource& rng) {
  const double c = 0.5 * kPi;
  for (;;) {
    const double x = rng.exponential() * 2.0 + c;
    const double gx = std::sqrt(0.5 * kPi) / std::sqrt(x);
    if (rng.uniform() <= gx) return x;
  }
}

// Inverse Gaussian IG(1/z, 1) truncated to (0, t).
inline double rand_trunc_inv_gauss(double z, double t, RandomSource& rng) {
  const double mu = 1.0 / z;
  if (mu > t) {
    for (;;) {
      const double x = 1.0 / rand_trunc_gamma(rng);
      if (std::log(rng.uniform_pos()) < -0.5 * z * z * x) return x;
    }
  }
  for (;;) {
    const double x = rand_inv_gauss(mu, rng);
    if (x < t) return x;
  }
}

// One draw from PG(1, c). Exact rejection sampler for the exponentially
// tilted Jacobi law J*(1, |c|/2) with proposal crossing point t = 2/pi;
// the alternating series of a_n terms decides acceptance.
inline double pg_draw_one(double c, RandomSource& rng) {
  const double z = std::fabs(c) * 0.5;
  const double t = kTwoOverPi;
  const double K = 0.5 * z * z + 0.125 * kPiSq;
  const double mass_right = pg_mass_right(z, t, K);

  for (;;) {
    double x;
    if (rng.uniform() < mass_right)
      x = t + rng.exponential() / K;
    else
      x = rand_trunc_inv_gauss(z, t, rng);

    double s = pg_aterm(0, x, t);
    const double y = rng.uniform() * s;
    int n = 0;
    for (;;) {
      ++n;
      if (n % 2 == 1) {
        s -= pg_aterm(n, x, t);
        if (y <= s) return 0.25 * x;
      } else {
        s += pg_aterm(n, x, t);
        if (y > s) break;
      }
    }
  }
}

}  // namespace detail

// Draw from PG(b, c) for integer b >= 1: exact sum of b PG(1, c) draws.
inline double sample_polya_gamma(const PolyaGammaParams& params, RandomSource& rng) {
  if (params.shape_b < 1)
    throw InvalidParameterError("sample_polya_gamma: shape_b must be a positive integer");
  if (!std::isfinite(params.tilt_c))
    throw InvalidParameterError("sample_polya_gamma: tilt_c must be finite");
  double sum = 0.0;
  for (int k = 0; k < params.shape_b; ++k) sum += detail::pg_draw_one(params.tilt_c, rng);
  return sum;
}

// mean + L u with u standard normal; L a lower-triangular Cholesky factor.
inline Eigen::VectorXd sample_mvn(const Eigen::VectorXd& mean,
                                  const Eigen::MatrixXd& covariance_factor,
                                  RandomSource& rng) {
  const Eigen::Index n = mean.size();
  if (covariance_factor.rows() != n || covariance_factor.cols() != n)
    throw InvalidParameterError("sample_mvn: factor dimension mismatch");
  for (Eigen::Index i = 0; i < n; ++i)
    if (!(covariance_factor(i, i) > 0.0))
      throw NumericalError("sample_mvn: factor has non-positive diagonal");
  Eigen::VectorXd u(n);
  for (Eigen::Index i = 0; i < n; ++i) u[i] = rng.normal();
  return mean + covariance_factor.template triangularView<Eigen::Lower>() * u;
}

// Density proportional to x^{-shape-1} exp(-rate/x).
inline double sample_inverse_gamma(double shape, double rate, RandomSource& rng) {
  if (!(shape > 0.0) || !(rate > 0.0))
    throw InvalidParameterError("sample_inverse_gamma: shape and rate must be positive");
  return rate / rng.gamma(shape, 1.0);
}

// Index j with probability exp(logw_j - logsumexp(logw)); stable under
// uniform shifts of logw. Entries of -inf carry zero mass.
inline int sample_categorical_logweights(const Eigen::Ref<const Eigen::VectorXd>& logw,
                                         RandomSource& rng) {
  const Eigen::Index m = logw.size();
  if (m == 0) throw InvalidParameterError("sample_categorical_logweights: empty weights");
  double mx = -std::numeric_limits<double>::infinity();
  for (Eigen::Index j = 0; j < m; ++j) {
    if (std::isnan(logw[j]))
      throw InvalidParameterError("sample_categorical_logweights: NaN weight");
    mx = std::max(mx, logw[j]);
  }
  if (!std::isfinite(mx))
    throw DegenerateInputError("sample_categorical_logweights: all weights are -inf");
  double total = 0.0;
  for (Eigen::Index j = 0; j < m; ++j) total += std::exp(logw[j] - mx);
  const double u = rng.uniform() * total;
  double cum = 0.0;
  for (Eigen::Index j = 0; j < m; ++j) {
    cum += std::exp(logw[j] - mx);
    if (u < cum) return static_cast<int>(j);
  }
  return static_cast<int>(m - 1);
}

inline double log1p_exp(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

// log P(Y = y) for Y ~ NegativeBinomial(r, p) with logit(p) = psi, i.e.
// P(Y = y) = C(y+r-1, y) e^{y psi} / (1 + e^psi)^{y+r}, mean r e^psi.
inline double negbin_logpmf(long y, int r, double psi) {
  if (y < 0) throw InvalidParameterError("negbin_logpmf: y must be nonnegative");
  if (r < 1) throw InvalidParameterError("negbin_logpmf: r must be a positive integer");
  const double yd = static_cast<double>(y);
  const double rd = static_cast<double>(r);
  return std::lgamma(yd + rd) - std::lgamma(rd) - std::lgamma(yd + 1.0) + yd * psi -
         (yd + rd) * log1p_exp(psi);
}

}  // namespace expuq
