#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <vector>

#include "expuq/common.hpp"

namespace expuq {

// Kernel smoothing bandwidth for one data point's ppd samples.
struct UnivariateBandwidth {
  double h = 0.0;
  // set when the Sheather-Jones solver failed to bracket a root and the
  // rule-of-thumb value was substituted
  bool silverman_fallback = false;
};

namespace detail {

// Type-7 quantile (linear interpolation between order statistics).
inline double quantile_sorted(const std::vector<double>& sorted, double p) {
  const std::size_t n = sorted.size();
  if (n == 1) return sorted[0];
  const double idx = p * (n - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(idx));
  const std::size_t hi = std::min(lo + 1, n - 1);
  const double frac = idx - lo;
  return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
}

struct SampleStats {
  double sd;
  double iqr;
};

inline SampleStats sample_stats(const Eigen::Ref<const Eigen::VectorXd>& x) {
  const Eigen::Index m = x.size();
  const double mean = x.mean();
  const double var = (x.array() - mean).square().sum() / (m - 1);
  std::vector<double> sorted(x.data(), x.data() + m);
  std::sort(sorted.begin(), sorted.end());
  return {std::sqrt(var), quantile_sorted(sorted, 0.75) - quantile_sorted(sorted, 0.25)};
}

// Binned pairwise-distance counts shared by the Sheather-Jones kernel
// functional estimates; cnt[k] holds the number of pairs whose binned
// distance is k*delta.
struct PairBins {
  double delta;
  std::vector<double> cnt;
  int n;
};

inline PairBins bin_pair_distances(const Eigen::Ref<const Eigen::VectorXd>& x, int nb = 1000) {
  const int n = static_cast<int>(x.size());
  const double xmin = x.minCoeff();
  const double xmax = x.maxCoeff();
  const double range = (xmax - xmin) * 1.01;
  PairBins pb{range / nb, std::vector<double>(nb, 0.0), n};
  std::vector<int> bin(n);
  for (int i = 0; i < n; ++i)
    bin[i] = std::min(nb - 1, static_cast<int>((x[i] - xmin) / pb.delta));
  for (int i = 1; i < n; ++i)
    for (int j = 0; j < i; ++j) pb.cnt[std::abs(bin[i] - bin[j])] += 1.0;
  return pb;
}

inline constexpr double kInvSqrt2Pi = 0.398942280401432677939946059934381868;

// (1/(n(n-1) h^5)) sum_{i,j} phi4((x_i-x_j)/h), phi4(u) = (u^4-6u^2+3) phi(u);
// estimates the integrated squared second derivative of the density.
inline double sj_phi4_functional(const PairBins& pb, double h) {
  double sum = 0.0;
  for (std::size_t k = 0; k < pb.cnt.size(); ++k) {
    if (pb.cnt[k] == 0.0) continue;
    const double u = (pb.delta * k) / h;
    sum += pb.cnt[k] * std::exp(-0.5 * u * u) * (((u * u - 6.0) * u * u) + 3.0);
  }
  sum = 2.0 * sum + pb.n * 3.0;  // diagonal terms, phi4(0) = 3
  return sum / (static_cast<double>(pb.n) * (pb.n - 1) * std::pow(h, 5.0)) * kInvSqrt2Pi;
}

// Same with phi6(u) = (u^6 - 15u^4 + 45u^2 - 15) phi(u); phi6(0) = -15.
inline double sj_phi6_functional(const PairBins& pb, double h) {
  double sum = 0.0;
  for (std::size_t k = 0; k < pb.cnt.size(); ++k) {
    if (pb.cnt[k] == 0.0) continue;
    const double u = (pb.delta * k) / h;
    const double u2 = u * u;
    sum += pb.cnt[k] * std::exp(-0.5 * u2) * (((u2 - 15.0) * u2 + 45.0) * u2 - 15.0);
  }
  sum = 2.0 * sum - pb.n * 15.0;
  return sum / (static_cast<double>(pb.n) * (pb.n - 1) * std::pow(h, 7.0)) * kInvSqrt2Pi;
}

}  // namespace detail

// Rule-of-thumb bandwidth 0.9 min(sd, IQR/1.34) m^{-1/5}.
inline UnivariateBandwidth bandwidth_silverman(const Eigen::Ref<const Eigen::VectorXd>& samples) {
  const Eigen::Index m = samples.size();
  if (m < 2) throw DegenerateInputError("bandwidth_silverman: need at least 2 samples");
  const auto st = detail::sample_stats(samples);
  double spread = std::min(st.sd, st.iqr / 1.34);
  if (st.iqr == 0.0) spread = st.sd;  // heavily tied samples still have a scale
  if (!(spread > 0.0))
    throw DegenerateInputError("bandwidth_silverman: constant samples have no scale");
  return {0.9 * spread * std::pow(static_cast<double>(m), -0.2), false};
}

// Sheather-Jones solve-the-equation plug-in bandwidth with Gaussian kernel
// functional estimates: finds the root of
//   h - [ R(K) / (m sigma_K^4 SD(g(h))) ]^{1/5},
// with pilot g(h) calibrated through the phi4/phi6 functionals. The root is
// bracketed on [silverman/100, silverman*100] and bisected; if no sign change
// exists the Silverman value is returned with the fallback flag set.
inline UnivariateBandwidth bandwidth_sheather_jones(
    const Eigen::Ref<const Eigen::VectorXd>& samples) {
  const Eigen::Index m = samples.size();
  if (m < 10) throw DegenerateInputError("bandwidth_sheather_jones: need at least 10 samples");
  const UnivariateBandwidth silverman = bandwidth_silverman(samples);

  const auto st = detail::sample_stats(samples);
  const double scale = st.iqr > 0.0 ? std::min(st.sd, st.iqr / 1.349) : st.sd;
  const double md = static_cast<double>(m);
  const auto pb = detail::bin_pair_distances(samples);

  const double a = 1.24 * scale * std::pow(md, -1.0 / 7.0);
  const double b = 1.23 * scale * std::pow(md, -1.0 / 9.0);
  const double c1 = 1.0 / (2.0 * std::sqrt(3.141592653589793238462643) * md);
  const double td = -detail::sj_phi6_functional(pb, b);
  if (!std::isfinite(td) || td <= 0.0) return {silverman.h, true};
  const double alpha2 = 1.357 * std::pow(detail::sj_phi4_functional(pb, a) / td, 1.0 / 7.0);
  if (!std::isfinite(alpha2) || alpha2 <= 0.0) return {silverman.h, true};

  auto f = [&](double h) {
    const double sd_g = detail::sj_phi4_functional(pb, alpha2 * std::pow(h, 5.0 / 7.0));
    if (!(sd_g > 0.0)) return std::numeric_limits<double>::infinity();
    return std::pow(c1 / sd_g, 0.2) - h;
  };

  double lo = silverman.h / 100.0, hi = silverman.h * 100.0;
  double flo = f(lo), fhi = f(hi);
  if (!(flo > 0.0 && fhi < 0.0)) return {silverman.h, true};
  for (int it = 0; it < 60; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (f(mid) > 0.0)
      lo = mid;
    else
      hi = mid;
  }
  return {0.5 * (lo + hi), false};
}

// Symmetric positive-definite kernel bandwidth matrix with cached factor and
// inverse for the joint KDE prior.
struct BandwidthMatrix {
  Eigen::MatrixXd H;
  Eigen::MatrixXd chol_H;  // lower factor
  Eigen::MatrixXd inv_H;

  BandwidthMatrix() = default;

  explicit BandwidthMatrix(Eigen::MatrixXd h_matrix) : H(std::move(h_matrix)) {
    if (H.rows() != H.cols()) throw InvalidParameterError("BandwidthMatrix: must be square");
    if (!H.isApprox(H.transpose(), 1e-10))
      throw InvalidParameterError("BandwidthMatrix: must be symmetric");
    Eigen::LLT<Eigen::MatrixXd> llt(H);
    if (llt.info() != Eigen::Success)
      throw NumericalError("BandwidthMatrix: Cholesky factorization failed");
    chol_H = llt.matrixL();
    inv_H = llt.solve(Eigen::MatrixXd::Identity(H.rows(), H.cols()));
    const double resid =
        (inv_H * H - Eigen::MatrixXd::Identity(H.rows(), H.cols())).cwiseAbs().maxCoeff();
    if (resid > 1e-8)
      throw NumericalError("BandwidthMatrix: inverse residual " + std::to_string(resid));
  }
};

// Scott's rule H = m^{-2/(n+4)} Sigma_hat, with the sample covariance
// jittered by 1e-8 * mean(diag) * I ahead of factorization.
inline BandwidthMatrix bandwidth_scott_matrix(const Eigen::MatrixXd& sigma_hat, int m) {
  const Eigen::Index n = sigma_hat.rows();
  if (m < 2) throw DegenerateInputError("bandwidth_scott_matrix: covariance undefined for m < 2");
  const double jitter = 1e-8 * sigma_hat.diagonal().mean();
  Eigen::MatrixXd reg = sigma_hat;
  reg.diagonal().array() += jitter;
  const double factor = std::pow(static_cast<double>(m), -2.0 / (static_cast<double>(n) + 4.0));
  try {
    return BandwidthMatrix(factor * reg);
  } catch (const NumericalError&) {
    throw NumericalError("bandwidth_scott_matrix: singular bandwidth (rank-deficient ensemble)");
  }
}

}  // namespace expuq
