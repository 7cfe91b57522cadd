#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "expuq/common.hpp"
#include "expuq/distributions.hpp"
#include "expuq/model.hpp"
#include "expuq/rng.hpp"

namespace expuq {

// Operation-count accounting used by the cost-scaling tests: weight_evals
// counts mixture-weight evaluations, factorizations counts per-call
// factorizations (or their spectral equivalents), triangular_solves counts
// per-column solves against the cached factor.
struct UpdaterStats {
  std::uint64_t weight_evals = 0;
  std::uint64_t factorizations = 0;
  std::uint64_t triangular_solves = 0;
};

// Per-chain caches for the exposure updaters. Static members (factors of
// Sigma_hat and H, transformed copies of Z*) live for the whole run; the
// per-call members (factor of the conditional precision, weight buffer) are
// rebuilt from the current (theta, Omega) on every sweep, so no stale factor
// can survive a parameter change. Never share one workspace between chains.
class UpdaterWorkspace {
 public:
  UpdaterWorkspace(ExposureEnsemble& ensemble, const MethodSpec& spec, Family family)
      : ensemble_(&ensemble), spec_(spec), family_(family) {
    const Eigen::Index n = ensemble.n();
    const Eigen::Index m = ensemble.m();
    logw_.resize(m);

    switch (spec.method) {
      case Method::MVN: {
        zhat_ = ensemble.summary(spec.summary);
        Eigen::MatrixXd sigma = ensemble.sigma_hat();
        sigma.diagonal().array() += 1e-8 * sigma.diagonal().mean();
        if (family == Family::gaussian_identity) {
          Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sigma);
          if (es.info() != Eigen::Success || es.eigenvalues().minCoeff() <= 0.0)
            throw NumericalError(
                "MVN updater: Sigma_hat not positive definite after jitter (min eigenvalue " +
                std::to_string(es.eigenvalues().minCoeff()) + ")");
          evecs_ = es.eigenvectors();
          evals_ = es.eigenvalues();
          zhat_spec_ = evecs_.transpose() * zhat_;
        } else {
          Eigen::LLT<Eigen::MatrixXd> llt(sigma);
          if (llt.info() != Eigen::Success)
            throw NumericalError("MVN updater: Cholesky of Sigma_hat failed after jitter");
          prior_chol_ = llt.matrixL();
          prior_whitened_mean_ = prior_chol_.triangularView<Eigen::Lower>().solve(zhat_);
        }
        break;
      }
      case Method::UKDE: {
        const auto& bw = ensemble.bandwidths(spec.ukde_bandwidth);
        h_.resize(n);
        for (Eigen::Index i = 0; i < n; ++i) h_[i] = bw[i].h;
        break;
      }
      case Method::MKDE: {
        const BandwidthMatrix& H = ensemble.bandwidth_matrix();
        if (family == Family::gaussian_identity) {
          Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(H.H);
          if (es.info() != Eigen::Success || es.eigenvalues().minCoeff() <= 0.0)
            throw NumericalError("MKDE updater: bandwidth matrix not positive definite");
          evecs_ = es.eigenvectors();
          evals_ = es.eigenvalues();
          zt_ = evecs_.transpose() * ensemble.draws();
          prior_scaled_cols_ = evals_.cwiseInverse().asDiagonal() * zt_;
          prior_quad_ = (zt_.array() * prior_scaled_cols_.array()).colwise().sum();
        } else {
          inv_h_ = H.inv_H;
          prior_scaled_cols_ = inv_h_ * ensemble.draws();
          prior_quad_ =
              (ensemble.draws().array() * prior_scaled_cols_.array()).colwise().sum();
        }
        break;
      }
      case Method::DU: {
        zsq_ = ensemble.draws().cwiseAbs2();
        break;
      }
      default:
        break;
    }
  }

  const ExposureEnsemble& ensemble() const { return *ensemble_; }
  const MethodSpec& spec() const { return spec_; }
  Family family() const { return family_; }

  UpdaterStats stats;

  // run-static caches
  Eigen::VectorXd zhat_;                 // MVN prior mean
  Eigen::MatrixXd evecs_;                // spectral basis of Sigma_hat or H
  Eigen::VectorXd evals_;
  Eigen::VectorXd zhat_spec_;            // Q^T zhat
  Eigen::MatrixXd prior_chol_;           // chol(Sigma_hat), general-Omega path
  Eigen::VectorXd prior_whitened_mean_;  // L^{-1} zhat
  Eigen::VectorXd h_;                    // UKDE per-row bandwidths
  Eigen::MatrixXd inv_h_;                // MKDE H^{-1}
  Eigen::MatrixXd zt_;                   // Q^T Z*
  Eigen::MatrixXd prior_scaled_cols_;    // H^{-1} Z* (spectral image for gaussian)
  Eigen::RowVectorXd prior_quad_;        // z_j^T H^{-1} z_j per column
  Eigen::MatrixXd zsq_;                  // DU: elementwise Z*^2

  // per-call state, valid only for the (theta, Omega) it was built from
  Eigen::VectorXd logw_;                 // c_ij / d_j buffer, length m
  Eigen::LLT<Eigen::MatrixXd> cond_llt_;   // factor of theta^2 Omega + H^{-1}
  Eigen::ArrayXd cond_prec_diag_;          // spectral diagonal of the same
  Eigen::VectorXd cond_shift_;             // theta Omega resid (basis-adjusted)

 private:
  ExposureEnsemble* ensemble_;
  MethodSpec spec_;
  Family family_;
};

// ---------------------------------------------------------------------------
// MVN prior: z | . ~ MVN(mu, S), S = (theta^2 Omega + Sigma_hat^{-1})^{-1},
// mu = S { theta Omega resid + Sigma_hat^{-1} zhat }. No explicit inverse of
// Sigma_hat is formed: the gaussian family works in the spectral basis of
// Sigma_hat; the general path solves through chol(Sigma_hat) using
// L^T A L = theta^2 L^T Omega L + I.
// ---------------------------------------------------------------------------
inline Eigen::VectorXd update_z_mvn(const ChainState& state, const HealthDataset& data,
                                    const Eigen::VectorXd& omega,
                                    const Eigen::VectorXd& ytilde, UpdaterWorkspace& ws,
                                    RandomSource& rng) {
  const Eigen::Index n = data.n();
  const Eigen::VectorXd resid = whitened_residual_target(state, data, omega, ytilde);
  const double theta = state.theta;

  if (ws.family() == Family::gaussian_identity) {
    const double w = omega[0];
    const double t2w = theta * theta * w;
    const Eigen::VectorXd rt = ws.evecs_.transpose() * (theta * w * resid);
    Eigen::VectorXd zt(n);
    for (Eigen::Index k = 0; k < n; ++k) {
      const double a = t2w + 1.0 / ws.evals_[k];
      const double mu = (rt[k] + ws.zhat_spec_[k] / ws.evals_[k]) / a;
      zt[k] = mu + rng.normal() / std::sqrt(a);
    }
    ws.stats.factorizations += 1;
    return ws.evecs_ * zt;
  }

  const auto& L = ws.prior_chol_;
  Eigen::MatrixXd M = theta * theta * (L.transpose() * omega.asDiagonal() * L);
  M.diagonal().array() += 1.0;
  Eigen::LLT<Eigen::MatrixXd> llt(M);
  if (llt.info() != Eigen::Success)
    throw NumericalError("update_z_mvn: factorization of the conditional precision failed");
  ws.stats.factorizations += 1;
  const Eigen::VectorXd v =
      L.transpose() * (theta * omega.cwiseProduct(resid)) + ws.prior_whitened_mean_;
  const Eigen::VectorXd mu_t = llt.solve(v);
  Eigen::VectorXd u(n);
  for (Eigen::Index k = 0; k < n; ++k) u[k] = rng.normal();
  const Eigen::VectorXd draw_t = mu_t + llt.matrixU().solve(u);
  ws.stats.triangular_solves += 1;
  return L.triangularView<Eigen::Lower>() * draw_t;
}

// ---------------------------------------------------------------------------
// UKDE prior: the full conditional of each z_i is an m-component normal
// mixture. Component log-weights follow the printed weight expression,
// evaluated in log space; the j-free terms cancel in the categorical draw.
// ---------------------------------------------------------------------------
inline void ukde_component_logweights(double resid, double omega_ii, double theta, double h,
                                      const Eigen::RowVectorXd& ppd_row,
                                      Eigen::VectorXd& out) {
  const double h2 = h * h;
  const double s = theta * theta * h2 * omega_ii + 1.0;
  const double a = resid * theta * h2 * omega_ii;
  const double r2term = resid * resid * h2 * omega_ii;
  out = (-0.5 * ((r2term + ppd_row.array().square()) / h2 -
                 (a + ppd_row.array()).square() / (h2 * s)))
            .transpose();
}

inline Eigen::VectorXd ukde_component_logweights(double resid, double omega_ii, double theta,
                                                 double h,
                                                 const Eigen::RowVectorXd& ppd_row) {
  Eigen::VectorXd out(ppd_row.size());
  ukde_component_logweights(resid, omega_ii, theta, h, ppd_row, out);
  return out;
}

inline Eigen::VectorXd update_z_ukde(const ChainState& state, const HealthDataset& data,
                                     const Eigen::VectorXd& omega,
                                     const Eigen::VectorXd& ytilde, UpdaterWorkspace& ws,
                                     RandomSource& rng) {
  const Eigen::Index n = data.n();
  const Eigen::Index m = ws.ensemble().m();
  const Eigen::VectorXd resid = whitened_residual_target(state, data, omega, ytilde);
  const double theta = state.theta;
  const auto& z = ws.ensemble().draws();

  Eigen::VectorXd out(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double h = ws.h_[i];
    const double h2 = h * h;
    const double s = theta * theta * h2 * omega[i] + 1.0;
    const double a = resid[i] * theta * h2 * omega[i];
    ukde_component_logweights(resid[i], omega[i], theta, h, z.row(i), ws.logw_);
    ws.stats.weight_evals += static_cast<std::uint64_t>(m);
    int jstar;
    try {
      jstar = sample_categorical_logweights(ws.logw_, rng);
    } catch (const DegenerateInputError&) {
      throw DegenerateInputError("update_z_ukde: degenerate mixture weights at data point " +
                                 std::to_string(i));
    }
    const double mean = (a + z(i, jstar)) / s;
    out[i] = mean + std::sqrt(h2 / s) * rng.normal();
  }
  return out;
}

// ---------------------------------------------------------------------------
// MKDE prior: the joint full conditional is an m-component multivariate
// normal mixture with shared precision A = theta^2 Omega + H^{-1}. A is
// factored once per call (spectrally for the gaussian family, where Omega is
// scalar); each column's weight costs one solve against that factor.
// ---------------------------------------------------------------------------
inline const Eigen::VectorXd& mkde_component_logweights(const ChainState& state,
                                                        const HealthDataset& data,
                                                        const Eigen::VectorXd& omega,
                                                        const Eigen::VectorXd& ytilde,
                                                        UpdaterWorkspace& ws) {
  const Eigen::Index n = data.n();
  const Eigen::Index m = ws.ensemble().m();
  const Eigen::VectorXd resid = whitened_residual_target(state, data, omega, ytilde);
  const double theta = state.theta;

  if (ws.family() == Family::gaussian_identity) {
    const double w = omega[0];
    ws.cond_prec_diag_ = theta * theta * w + ws.evals_.array().inverse();
    ws.cond_shift_ = ws.evecs_.transpose() * (theta * w * resid);
    ws.stats.factorizations += 1;
    Eigen::ArrayXd inv_a = ws.cond_prec_diag_.inverse();
    for (Eigen::Index j = 0; j < m; ++j) {
      const double* pc = ws.prior_scaled_cols_.col(j).data();
      double acc = 0.0;
      for (Eigen::Index k = 0; k < n; ++k) {
        const double b = ws.cond_shift_[k] + pc[k];
        acc += b * b * inv_a[k];
      }
      ws.logw_[j] = -0.5 * (ws.prior_quad_[j] - acc);
    }
    ws.stats.triangular_solves += static_cast<std::uint64_t>(m);
    return ws.logw_;
  }

  Eigen::MatrixXd a_mat = ws.inv_h_;
  a_mat.diagonal() += (theta * theta) * omega;
  ws.cond_llt_.compute(a_mat);
  if (ws.cond_llt_.info() != Eigen::Success)
    throw NumericalError("update_z_mkde: factorization of the conditional precision failed");
  ws.stats.factorizations += 1;
  ws.cond_shift_ = theta * omega.cwiseProduct(resid);
  Eigen::VectorXd t(n);
  for (Eigen::Index j = 0; j < m; ++j) {
    t = ws.cond_shift_ + ws.prior_scaled_cols_.col(j);
    ws.cond_llt_.matrixL().solveInPlace(t);
    ws.logw_[j] = -0.5 * (ws.prior_quad_[j] - t.squaredNorm());
    ws.stats.triangular_solves += 1;
  }
  return ws.logw_;
}

inline Eigen::VectorXd update_z_mkde(const ChainState& state, const HealthDataset& data,
                                     const Eigen::VectorXd& omega,
                                     const Eigen::VectorXd& ytilde, UpdaterWorkspace& ws,
                                     RandomSource& rng) {
  const Eigen::Index n = data.n();
  mkde_component_logweights(state, data, omega, ytilde, ws);
  const int jstar = sample_categorical_logweights(ws.logw_, rng);

  if (ws.family() == Family::gaussian_identity) {
    Eigen::VectorXd zt(n);
    for (Eigen::Index k = 0; k < n; ++k) {
      const double a = ws.cond_prec_diag_[k];
      const double b = ws.cond_shift_[k] + ws.prior_scaled_cols_(k, jstar);
      zt[k] = b / a + rng.normal() / std::sqrt(a);
    }
    return ws.evecs_ * zt;
  }

  const Eigen::VectorXd bstar = ws.cond_shift_ + ws.prior_scaled_cols_.col(jstar);
  const Eigen::VectorXd mu = ws.cond_llt_.solve(bstar);
  Eigen::VectorXd u(n);
  for (Eigen::Index k = 0; k < n; ++k) u[k] = rng.normal();
  return mu + ws.cond_llt_.matrixU().solve(u);
}

// ---------------------------------------------------------------------------
// DU prior: point mass 1/m on each ensemble column. Gibbs mode samples the
// exact categorical over columns; Metropolis mode proposes a uniform column
// and accepts on the likelihood ratio.
// ---------------------------------------------------------------------------
inline double du_column_logweight(const Eigen::VectorXd& zcol, const Eigen::VectorXd& e,
                                  const Eigen::VectorXd& omega, double theta) {
  return -0.5 * (e + theta * zcol).cwiseAbs2().dot(omega);
}

inline const Eigen::VectorXd& du_column_logweights(const ChainState& state,
                                                   const HealthDataset& data,
                                                   const Eigen::VectorXd& omega,
                                                   const Eigen::VectorXd& ytilde,
                                                   UpdaterWorkspace& ws) {
  // e = O + X beta - Ytilde; the j-free quadratic e' Omega e is dropped
  const Eigen::VectorXd e = -whitened_residual_target(state, data, omega, ytilde);
  const double theta = state.theta;
  const auto& z = ws.ensemble().draws();
  ws.logw_ = -0.5 * (2.0 * theta * (z.transpose() * omega.cwiseProduct(e)) +
                     theta * theta * (ws.zsq_.transpose() * omega));
  return ws.logw_;
}

inline Eigen::VectorXd update_z_du(const ChainState& state, const HealthDataset& data,
                                   const Eigen::VectorXd& omega, const Eigen::VectorXd& ytilde,
                                   UpdaterWorkspace& ws, RandomSource& rng) {
  const Eigen::Index m = ws.ensemble().m();
  if (ws.spec().du_metropolis) {
    const Eigen::VectorXd e = -whitened_residual_target(state, data, omega, ytilde);
    const int proposal = static_cast<int>(rng.uniform_below(static_cast<std::uint64_t>(m)));
    const double lw_cur = du_column_logweight(state.z, e, omega, state.theta);
    const double lw_prop =
        du_column_logweight(ws.ensemble().column(proposal), e, omega, state.theta);
    ws.stats.weight_evals += 2;
    if (std::log(rng.uniform_pos()) < lw_prop - lw_cur)
      return ws.ensemble().column(proposal);
    return state.z;
  }
  du_column_logweights(state, data, omega, ytilde, ws);
  ws.stats.weight_evals += static_cast<std::uint64_t>(m);
  const int jstar = sample_categorical_logweights(ws.logw_, rng);
  return ws.ensemble().column(jstar);
}

// Uniform column reassignment done at the top of every MIA sweep.
inline Eigen::VectorXd assign_z_mia(const ExposureEnsemble& ensemble, RandomSource& rng) {
  const auto j = rng.uniform_below(static_cast<std::uint64_t>(ensemble.m()));
  return ensemble.column(static_cast<Eigen::Index>(j));
}

// Fixed plug-in exposures zhat_i = T(z*_i.).
inline Eigen::VectorXd plugin_exposure(ExposureEnsemble& ensemble, SummaryT summary) {
  return ensemble.summary(summary);
}

// Column visit order for multiple imputation: one independent fit per column.
inline std::vector<int> mi_schedule(const ExposureEnsemble& ensemble) {
  std::vector<int> cols(static_cast<std::size_t>(ensemble.m()));
  for (std::size_t j = 0; j < cols.size(); ++j) cols[j] = static_cast<int>(j);
  return cols;
}

}  // namespace expuq
