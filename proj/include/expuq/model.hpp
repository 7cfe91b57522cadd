#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <optional>
#include <utility>
#include <vector>

#include "expuq/bandwidth.hpp"
#include "expuq/common.hpp"
#include "expuq/distributions.hpp"
#include "expuq/rng.hpp"

namespace expuq {

enum class Family { gaussian_identity, bernoulli_logit, negbin_logit };
enum class SummaryT { median, mean };
enum class Method { PlugIn, MI, MIA, DU, MVN, UKDE, MKDE };
enum class BandwidthSelector { sheather_jones, silverman };
enum class CoefPrior { normal, flat };

inline const char* method_name(Method m) {
  switch (m) {
    case Method::PlugIn: return "PlugIn";
    case Method::MI: return "MI";
    case Method::MIA: return "MIA";
    case Method::DU: return "DU";
    case Method::MVN: return "MVN";
    case Method::UKDE: return "UKDE";
    case Method::MKDE: return "MKDE";
  }
  return "?";
}

inline const char* family_name(Family f) {
  switch (f) {
    case Family::gaussian_identity: return "gaussian_identity";
    case Family::bernoulli_logit: return "bernoulli_logit";
    case Family::negbin_logit: return "negbin_logit";
  }
  return "?";
}

// Which propagation method to run, with its method-specific options.
struct MethodSpec {
  Method method = Method::PlugIn;
  SummaryT summary = SummaryT::median;
  bool du_metropolis = false;
  BandwidthSelector ukde_bandwidth = BandwidthSelector::sheather_jones;
};

struct PriorSpec {
  CoefPrior coef_prior = CoefPrior::normal;
  double coef_sd = 100.0;
  double sigma2_shape = 0.01;
  double sigma2_rate = 0.01;
  int r_max = 100;  // discrete uniform prior support {1, ..., r_max}
};

namespace detail {

inline double row_summary(const Eigen::Ref<const Eigen::RowVectorXd>& row, SummaryT t) {
  if (t == SummaryT::mean) return row.mean();
  std::vector<double> sorted(row.data(), row.data() + row.size());
  std::sort(sorted.begin(), sorted.end());
  return quantile_sorted(sorted, 0.5);
}

}  // namespace detail

// The n-by-m matrix of posterior-predictive exposure draws (row i holds the
// ppd samples for data point i) plus the summaries derived from it. Summary
// caches fill on demand; call the prepare_* members before sharing a const
// reference across threads.
class ExposureEnsemble {
 public:
  explicit ExposureEnsemble(Eigen::MatrixXd z_star) : z_(std::move(z_star)) {
    if (z_.rows() < 1 || z_.cols() < 1)
      throw InvalidParameterError("ExposureEnsemble: empty draw matrix");
    if (!z_.allFinite())
      throw InvalidParameterError("ExposureEnsemble: draws must be finite");
    zbar_ = z_.rowwise().mean();
  }

  Eigen::Index n() const { return z_.rows(); }
  Eigen::Index m() const { return z_.cols(); }
  const Eigen::MatrixXd& draws() const { return z_; }
  Eigen::VectorXd column(Eigen::Index j) const { return z_.col(j); }

  // zbar: per-row mean across the m ppd draws
  const Eigen::VectorXd& col_mean() const { return zbar_; }

  // zhat: the configured summary T applied to each row
  const Eigen::VectorXd& summary(SummaryT t) {
    prepare_summary(t);
    return t == SummaryT::median ? *zhat_median_ : *zhat_mean_;
  }

  const Eigen::MatrixXd& sigma_hat() {
    prepare_sigma_hat();
    return *sigma_hat_;
  }

  // Per-row kernel bandwidths; any Sheather-Jones fallbacks are flagged.
  const std::vector<UnivariateBandwidth>& bandwidths(BandwidthSelector sel) {
    prepare_bandwidths(sel);
    return *bandwidths_;
  }

  const BandwidthMatrix& bandwidth_matrix() {
    prepare_bandwidth_matrix();
    return *bandwidth_matrix_;
  }

  void prepare_summary(SummaryT t) {
    auto& slot = (t == SummaryT::median) ? zhat_median_ : zhat_mean_;
    if (slot) return;
    Eigen::VectorXd s(n());
    for (Eigen::Index i = 0; i < n(); ++i) s[i] = detail::row_summary(z_.row(i), t);
    slot = std::move(s);
  }

  void prepare_sigma_hat() {
    if (sigma_hat_) return;
    if (m() < 2)
      throw DegenerateInputError("ExposureEnsemble: covariance undefined for m < 2");
    const Eigen::MatrixXd centered = z_.colwise() - zbar_;
    sigma_hat_ = (centered * centered.transpose()) / static_cast<double>(m() - 1);
  }

  // Installs externally supplied bandwidths (bypasses the selectors).
  void set_bandwidths(std::vector<UnivariateBandwidth> bw, BandwidthSelector tag) {
    if (static_cast<Eigen::Index>(bw.size()) != n())
      throw InvalidParameterError("set_bandwidths: need one bandwidth per data point");
    bandwidths_ = std::move(bw);
    bandwidth_selector_ = tag;
  }

  void prepare_bandwidths(BandwidthSelector sel) {
    if (bandwidths_ && bandwidth_selector_ == sel) return;
    std::vector<UnivariateBandwidth> bw(n());
    for (Eigen::Index i = 0; i < n(); ++i) {
      const Eigen::VectorXd row = z_.row(i).transpose();
      bw[i] = (sel == BandwidthSelector::sheather_jones) ? bandwidth_sheather_jones(row)
                                                         : bandwidth_silverman(row);
    }
    bandwidths_ = std::move(bw);
    bandwidth_selector_ = sel;
  }

  void prepare_bandwidth_matrix() {
    if (bandwidth_matrix_) return;
    prepare_sigma_hat();
    bandwidth_matrix_ = bandwidth_scott_matrix(*sigma_hat_, static_cast<int>(m()));
  }

 private:
  Eigen::MatrixXd z_;
  Eigen::VectorXd zbar_;
  std::optional<Eigen::VectorXd> zhat_median_;
  std::optional<Eigen::VectorXd> zhat_mean_;
  std::optional<Eigen::MatrixXd> sigma_hat_;
  std::optional<std::vector<UnivariateBandwidth>> bandwidths_;
  BandwidthSelector bandwidth_selector_ = BandwidthSelector::sheather_jones;
  std::optional<BandwidthMatrix> bandwidth_matrix_;
};

// Scott's rule applied to the ensemble's sample covariance.
inline BandwidthMatrix bandwidth_scott_matrix(ExposureEnsemble& ensemble) {
  if (ensemble.m() < 2)
    throw DegenerateInputError("bandwidth_scott_matrix: covariance undefined for m < 2");
  return bandwidth_scott_matrix(ensemble.sigma_hat(), static_cast<int>(ensemble.m()));
}

// Outcome vector, covariate matrix (leading intercept column), offsets, and
// the likelihood family tag.
struct HealthDataset {
  Eigen::VectorXd y;
  Eigen::MatrixXd X;
  Eigen::VectorXd offset;
  Family family = Family::gaussian_identity;

  Eigen::Index n() const { return y.size(); }
  Eigen::Index p() const { return X.cols(); }

  void validate() const {
    if (X.rows() != n()) throw InvalidParameterError("HealthDataset: X rows != length(y)");
    if (offset.size() != n())
      throw InvalidParameterError("HealthDataset: offset length != length(y)");
    if ((X.col(0).array() != 1.0).any())
      throw InvalidParameterError("HealthDataset: first column of X must be the intercept");
    if (!y.allFinite() || !X.allFinite() || !offset.allFinite())
      throw InvalidParameterError("HealthDataset: non-finite entries");
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
    if (qr.rank() < X.cols())
      throw InvalidParameterError("HealthDataset: X is rank deficient");
    if (family == Family::bernoulli_logit) {
      for (Eigen::Index i = 0; i < n(); ++i)
        if (y[i] != 0.0 && y[i] != 1.0)
          throw InvalidParameterError("HealthDataset: bernoulli outcomes must be 0/1");
    }
    if (family == Family::negbin_logit) {
      for (Eigen::Index i = 0; i < n(); ++i)
        if (y[i] < 0.0 || y[i] != std::floor(y[i]))
          throw InvalidParameterError("HealthDataset: negbin outcomes must be counts");
    }
  }
};

inline HealthDataset make_dataset(Eigen::VectorXd y, Eigen::MatrixXd x, Family family,
                                  std::optional<Eigen::VectorXd> offset = std::nullopt) {
  HealthDataset d;
  d.y = std::move(y);
  d.X = std::move(x);
  d.offset = offset ? std::move(*offset) : Eigen::VectorXd::Zero(d.y.size());
  d.family = family;
  d.validate();
  return d;
}

// Current values of one chain's parameters during a sweep.
struct ChainState {
  Eigen::VectorXd beta;
  double theta = 0.0;
  Eigen::VectorXd z;
  Eigen::VectorXd omega;
  double sigma2_eps = 1.0;  // gaussian family only
  int r = 10;               // negbin family only

  Eigen::VectorXd linear_predictor(const HealthDataset& data) const {
    return data.offset + data.X * beta + z * theta;
  }
};

// omega, Ytilde: the likelihood-specific augmentation shared by every
// exposure updater. Gaussian is deterministic; the logit families draw
// Polya-Gamma auxiliaries at the current linear predictor.
inline std::pair<Eigen::VectorXd, Eigen::VectorXd> augmentation_quantities(
    const ChainState& state, const HealthDataset& data, RandomSource& rng) {
  const Eigen::Index n = data.n();
  Eigen::VectorXd omega(n), ytilde(n);
  switch (data.family) {
    case Family::gaussian_identity: {
      if (!(state.sigma2_eps > 0.0))
        throw InvalidParameterError("augmentation_quantities: sigma2_eps must be positive");
      omega.setConstant(1.0 / state.sigma2_eps);
      ytilde = data.y;
      break;
    }
    case Family::bernoulli_logit: {
      const Eigen::VectorXd psi = state.linear_predictor(data);
      for (Eigen::Index i = 0; i < n; ++i) {
        omega[i] = std::max(sample_polya_gamma({1, psi[i]}, rng), 1e-300);
        ytilde[i] = (data.y[i] - 0.5) / omega[i];
      }
      break;
    }
    case Family::negbin_logit: {
      if (state.r < 1)
        throw InvalidParameterError("augmentation_quantities: dispersion r must be >= 1");
      const Eigen::VectorXd psi = state.linear_predictor(data);
      for (Eigen::Index i = 0; i < n; ++i) {
        const int b = state.r + static_cast<int>(data.y[i]);
        omega[i] = std::max(sample_polya_gamma({b, psi[i]}, rng), 1e-300);
        ytilde[i] = 0.5 * (data.y[i] - state.r) / omega[i];
      }
      break;
    }
  }
  return {std::move(omega), std::move(ytilde)};
}

// Ytilde - O - X beta, the common input to every exposure update.
inline Eigen::VectorXd whitened_residual_target(const ChainState& state,
                                                const HealthDataset& data,
                                                const Eigen::VectorXd& /*omega*/,
                                                const Eigen::VectorXd& ytilde) {
  if (ytilde.size() != data.n())
    throw InvalidParameterError("whitened_residual_target: size mismatch");
  return ytilde - data.offset - data.X * state.beta;
}

enum class StandardizeMode { global_mean_sd, median_iqr };

// Affine transform record so the truth vector and reported effect scales can
// use the identical transform as the ensemble.
struct AffineTransform {
  double location = 0.0;
  double scale = 1.0;
  double apply(double x) const { return (x - location) / scale; }
  double invert(double x) const { return x * scale + location; }
  Eigen::MatrixXd apply(const Eigen::MatrixXd& x) const {
    return (x.array() - location) / scale;
  }
  Eigen::VectorXd apply(const Eigen::VectorXd& x) const {
    return (x.array() - location) / scale;
  }
};

inline AffineTransform fit_standardize_transform(const Eigen::MatrixXd& z,
                                                 StandardizeMode mode) {
  AffineTransform t;
  const Eigen::Index total = z.size();
  if (mode == StandardizeMode::global_mean_sd) {
    t.location = z.mean();
    const double ss = (z.array() - t.location).square().sum();
    t.scale = std::sqrt(ss / static_cast<double>(total - 1));
  } else {
    std::vector<double> sorted(z.data(), z.data() + total);
    std::sort(sorted.begin(), sorted.end());
    t.location = detail::quantile_sorted(sorted, 0.5);
    t.scale = detail::quantile_sorted(sorted, 0.75) - detail::quantile_sorted(sorted, 0.25);
  }
  if (!(t.scale > 0.0) || !std::isfinite(t.scale))
    throw DegenerateInputError("standardize_ensemble: degenerate (zero-scale) ensemble");
  return t;
}

// Applies the chosen global affine standardization to every entry and returns
// the transform record alongside the standardized ensemble.
inline std::pair<ExposureEnsemble, AffineTransform> standardize_ensemble(
    const ExposureEnsemble& ensemble, StandardizeMode mode) {
  const AffineTransform t = fit_standardize_transform(ensemble.draws(), mode);
  return {ExposureEnsemble(t.apply(ensemble.draws())), t};
}

}  // namespace expuq
