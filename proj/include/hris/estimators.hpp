// Copyright 2026 The hris-sim Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <optional>
#include <vector>

#include "hris/common.hpp"
#include "hris/hris_params.hpp"
#include "hris/pilots.hpp"

namespace hris {

inline constexpr double kRankTolerance = 1e-10;  // relative to largest singular value

// Smallest pilot length (B*T) that keeps both channels identifiable without
// noise: N * max(1, K / N_r), rounded up.
inline long min_pilot_length(int elements, int users, int rf_chains) {
  require(elements >= 1 && users >= 1 && rf_chains >= 1,
          "min_pilot_length: dimensions must be >= 1");
  if (users <= rf_chains) return elements;
  const long long num = static_cast<long long>(elements) * users;
  return static_cast<long>((num + rf_chains - 1) / rf_chains);
}

namespace detail {

inline Eigen::Index svd_rank(const Eigen::JacobiSVD<CMat>& svd) {
  const auto& sv = svd.singularValues();
  if (sv.size() == 0 || !(sv(0) > 0.0)) return 0;
  const double tol = kRankTolerance * sv(0);
  Eigen::Index rank = 0;
  while (rank < sv.size() && sv(rank) > tol) ++rank;
  return rank;
}

}  // namespace detail

// Exact least-squares recovery of G from the sensing observation in the
// noise-free regime. The design matrix S^T (x) A_RC has full column rank iff
// A_RC has rank N (pilot rows are orthogonal by construction), and its
// pseudo-inverse factors so the solve reduces to A_RC^+ applied to the
// pilot-matched observation.
inline CMat recover_G_noisefree(const CMat& y_rc, const CMat& pilots, const CMat& a_rc,
                                double tx_amplitude = 1.0) {
  require(y_rc.rows() == a_rc.rows(), "recover_G_noisefree: row mismatch");
  require(y_rc.cols() == pilots.cols(), "recover_G_noisefree: slot mismatch");
  if (!(tx_amplitude > 0.0))
    throw std::domain_error("recover_G_noisefree: tx amplitude must be positive");
  Eigen::JacobiSVD<CMat> svd(a_rc, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::Index rank = detail::svd_rank(svd);
  if (rank < a_rc.cols())
    throw IdentifiabilityError("recover_G_noisefree: sensing matrix is rank deficient", rank,
                               a_rc.cols());
  const double t_slots = static_cast<double>(pilots.cols());
  const CMat matched = (1.0 / (t_slots * tx_amplitude)) * y_rc * pilots.adjoint();
  return svd.solve(matched);
}

// Exact least-squares recovery of H given known G; needs the stacked
// reflected excitation [Psi(b) G S] to span all N element dimensions
// (requires B*T >= N).
inline CMat recover_H_noisefree(const std::vector<CMat>& y_bs, const CMat& g,
                                const HrisParams& params, const CMat& pilots,
                                double tx_amplitude = 1.0) {
  params.check_shapes();
  require(static_cast<int>(y_bs.size()) == params.subframes(),
          "recover_H_noisefree: need one observation per sub-frame");
  require(g.rows() == params.elements(), "recover_H_noisefree: G row mismatch");
  require(g.cols() == pilots.rows(), "recover_H_noisefree: user count mismatch");
  if (!(tx_amplitude > 0.0))
    throw std::domain_error("recover_H_noisefree: tx amplitude must be positive");
  const int b_count = params.subframes();
  const Eigen::Index t_slots = pilots.cols();
  const Eigen::Index n = params.elements();
  CMat excitation(n, t_slots * b_count);  // [Psi(0) G S, ..., Psi(B-1) G S]
  CMat stacked_obs(y_bs.front().rows(), t_slots * b_count);
  for (int b = 0; b < b_count; ++b) {
    require(y_bs[static_cast<std::size_t>(b)].cols() == t_slots,
            "recover_H_noisefree: slot mismatch");
    excitation.middleCols(t_slots * b, t_slots) =
        reflection_diag(params, b).asDiagonal() * g * pilots;
    stacked_obs.middleCols(t_slots * b, t_slots) =
        y_bs[static_cast<std::size_t>(b)] / tx_amplitude;
  }
  Eigen::JacobiSVD<CMat> svd(excitation.adjoint(), Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::Index rank = detail::svd_rank(svd);
  if (rank < n)
    throw IdentifiabilityError("recover_H_noisefree: reflected excitation is rank deficient",
                               rank, n);
  return svd.solve(stacked_obs.adjoint()).adjoint();
}

// Bayesian estimate of G together with its second-order statistics:
// sigma = E[Ghat Ghat^H], r_err = E[(G - Ghat)(G - Ghat)^H].
struct GEstimate {
  CMat g_hat;  // N x K
  CMat sigma;  // N x N
  CMat r_err;  // N x N
  double eps_g() const { return r_err.trace().real(); }
};

// Error covariance (R_G^-1 + (T*Gamma/K) A^H A)^-1 of the linear MMSE map.
inline CMat lmmse_G_error_cov(const CMat& a_rc, const RVec& gammas, int slots,
                              double gamma_linear) {
  const double c = gammas.sum();
  if (!(c > 0.0)) throw std::domain_error("lmmse_G_error_cov: gammas must be positive");
  if (!(gamma_linear > 0.0)) throw std::domain_error("lmmse_G_error_cov: Gamma must be positive");
  const double omega = static_cast<double>(gammas.size()) / (slots * gamma_linear);
  const Eigen::Index n = a_rc.cols();
  CMat j = (1.0 / c) * CMat::Identity(n, n) + (1.0 / omega) * (a_rc.adjoint() * a_rc);
  j = 0.5 * (j + j.adjoint()).eval();
  return j.llt().solve(CMat::Identity(n, n));
}

// Linear MMSE estimate of G from the pilot-matched sensing observation.
// Ghat = R_G A^H (A R_G A^H + K/(T*Gamma) I)^-1 ytilde; sigma is computed
// from the same factorization, r_err independently in information form.
inline GEstimate lmmse_G(const CMat& ytilde_rc, const CMat& a_rc, const RVec& gammas, int slots,
                         double gamma_linear) {
  require(ytilde_rc.rows() == a_rc.rows(), "lmmse_G: observation rows must match A_RC");
  require(ytilde_rc.cols() == gammas.size(), "lmmse_G: one observation column per user");
  const double c = gammas.sum();
  if (!(c > 0.0)) throw std::domain_error("lmmse_G: gammas must be positive");
  if (!(gamma_linear > 0.0)) throw std::domain_error("lmmse_G: Gamma must be positive");
  const double omega = static_cast<double>(gammas.size()) / (slots * gamma_linear);
  const Eigen::Index rows = a_rc.rows();
  CMat w = c * (a_rc * a_rc.adjoint()) + omega * CMat::Identity(rows, rows);
  w = 0.5 * (w + w.adjoint()).eval();
  const auto llt = w.llt();
  GEstimate est;
  est.g_hat = c * a_rc.adjoint() * llt.solve(ytilde_rc);
  est.sigma = c * c * a_rc.adjoint() * llt.solve(a_rc);
  est.r_err = lmmse_G_error_cov(a_rc, gammas, slots, gamma_linear);
  return est;
}

inline double analytic_mse_G(const HrisParams& params, const RVec& gammas, int slots,
                             double gamma_linear) {
  return lmmse_G_error_cov(stack_reception(params), gammas, slots, gamma_linear)
      .trace()
      .real();
}

// Effective noise covariance at the BS after projection: D is (B*K) x (B*K)
// with scalar blocks, block (i,j) = block_scalars(i,j) * I_K. Captures the
// estimation-error interference plus thermal noise.
struct EffectiveNoiseCov {
  CMat block_scalars;  // B x B
  int users = 0;

  CMat full() const {
    const Eigen::Index b = block_scalars.rows();
    const Eigen::Index k = users;
    CMat d = CMat::Zero(b * k, b * k);
    for (Eigen::Index i = 0; i < b; ++i)
      for (Eigen::Index j = 0; j < b; ++j)
        d.block(i * k, j * k, k, k) = block_scalars(i, j) * CMat::Identity(k, k);
    return d;
  }
};

// Block (i,j) carries (beta/K) * Tr(Psi(j)^H Psi(i) R_err) plus thermal
// 1/(T*Gamma) on the diagonal; with diagonal Psi only diag(R_err) enters.
inline EffectiveNoiseCov noise_cov_D(const HrisParams& params, const CMat& r_err, double beta,
                                     int slots, double gamma_linear, int users) {
  params.check_shapes();
  require(r_err.rows() == params.elements() && r_err.cols() == params.elements(),
          "noise_cov_D: error covariance must be N x N");
  if (!(beta > 0.0)) throw std::domain_error("noise_cov_D: beta must be positive");
  const int b_count = params.subframes();
  const CMat profile = reflection_profile(params);  // B x N
  RVec r_diag(params.elements());
  for (int l = 0; l < params.elements(); ++l) r_diag(l) = r_err(l, l).real();
  EffectiveNoiseCov cov;
  cov.users = users;
  cov.block_scalars = (beta / users) *
                      (profile * r_diag.asDiagonal() * profile.adjoint());
  cov.block_scalars += (1.0 / (slots * gamma_linear)) * CMat::Identity(b_count, b_count);
  return cov;
}

namespace detail {

// K * sum_{i,j} Tr([D^-T]_{ij}) Psi(i) Sigma Psi(j)^H collapsed through the
// diagonal structure of Psi: equals K * Sigma .* (P^T Theta conj(P)) with
// Theta = K (Dbar^-1)^T.
inline CMat interference_information(const CMat& profile, const CMat& sigma,
                                     const EffectiveNoiseCov& cov) {
  const Eigen::Index b = cov.block_scalars.rows();
  CMat dbar = 0.5 * (cov.block_scalars + cov.block_scalars.adjoint());
  const CMat dbar_inv = dbar.llt().solve(CMat::Identity(b, b));
  const CMat theta = static_cast<double>(cov.users) * dbar_inv.transpose();
  const CMat xi = profile.transpose() * theta * profile.conjugate();
  return static_cast<double>(cov.users) * sigma.cwiseProduct(xi);
}

}  // namespace detail

// Bayesian lower bound on E||H - Hhat||_F^2. The (M*N)-dimensional form
// factors over receive antennas, leaving an N x N inverse scaled by M.
inline double analytic_mse_H(const HrisParams& params, const CMat& sigma,
                             const EffectiveNoiseCov& cov, double beta, int bs_antennas) {
  params.check_shapes();
  require(sigma.rows() == params.elements() && sigma.cols() == params.elements(),
          "analytic_mse_H: sigma must be N x N");
  if (!(beta > 0.0)) throw std::domain_error("analytic_mse_H: beta must be positive");
  const Eigen::Index n = params.elements();
  const CMat profile = reflection_profile(params);
  CMat z = (1.0 / beta) * CMat::Identity(n, n) +
           detail::interference_information(profile, sigma, cov);
  z = 0.5 * (z + z.adjoint()).eval();
  return bs_antennas * z.llt().solve(CMat::Identity(n, n)).trace().real();
}

struct HEstimate {
  CMat h_hat;  // M x N
  double mse_bound = 0.0;
};

// Linear MMSE estimate of H from the pilot-matched BS observations, treating
// the conveyed Ghat as the excitation and D as the effective noise.
// Kronecker structure reduces the map to hhat = Ytilde * (W^T)^-1 * Phat^H
// with W = beta * Phat^T conj(Phat) + D, never materializing anything larger
// than (K*B) x (K*B).
inline HEstimate lmmse_H(const std::vector<CMat>& ytilde_bs, const CMat& g_hat,
                         const HrisParams& params, const EffectiveNoiseCov& cov, double beta,
                         const std::optional<CMat>& sigma = std::nullopt) {
  params.check_shapes();
  const int b_count = params.subframes();
  require(static_cast<int>(ytilde_bs.size()) == b_count,
          "lmmse_H: need one projected block per sub-frame");
  require(g_hat.rows() == params.elements(), "lmmse_H: Ghat row mismatch");
  const Eigen::Index k = g_hat.cols();
  require(cov.users == k, "lmmse_H: noise covariance user count mismatch");
  if (!(beta > 0.0)) throw std::domain_error("lmmse_H: beta must be positive");

  const Eigen::Index m = ytilde_bs.front().rows();
  const Eigen::Index n = params.elements();
  CMat phat(n, k * b_count);
  CMat ytilde(m, k * b_count);
  for (int b = 0; b < b_count; ++b) {
    require(ytilde_bs[static_cast<std::size_t>(b)].rows() == m &&
                ytilde_bs[static_cast<std::size_t>(b)].cols() == k,
            "lmmse_H: projected block shape mismatch");
    phat.middleCols(k * b, k) = reflection_diag(params, b).asDiagonal() * g_hat;
    ytilde.middleCols(k * b, k) = ytilde_bs[static_cast<std::size_t>(b)];
  }
  CMat w_t = beta * (phat.adjoint() * phat) + cov.full().transpose();
  w_t = 0.5 * (w_t + w_t.adjoint()).eval();
  HEstimate est;
  est.h_hat = beta * ytilde * w_t.llt().solve(phat.adjoint());
  if (sigma.has_value())
    est.mse_bound = analytic_mse_H(params, *sigma, cov, beta, static_cast<int>(m));
  return est;
}

struct CascadedError {
  double num = 0.0;
  double den = 0.0;
};

// Frobenius error of the reconstructed per-user cascaded channels
// Hhat diag(ghat_k) vs H diag(g_k), and the reference energy.
inline CascadedError cascaded_error_terms(const CMat& h_hat, const CMat& g_hat, const CMat& h,
                                          const CMat& g) {
  require(h_hat.rows() == h.rows() && h_hat.cols() == h.cols(), "cascaded: H shape mismatch");
  require(g_hat.rows() == g.rows() && g_hat.cols() == g.cols(), "cascaded: G shape mismatch");
  require(h.cols() == g.rows(), "cascaded: inner dimensions must agree");
  CascadedError out;
  for (Eigen::Index k = 0; k < g.cols(); ++k) {
    out.num += (h_hat * g_hat.col(k).asDiagonal() - h * g.col(k).asDiagonal()).squaredNorm();
    out.den += (h * g.col(k).asDiagonal()).squaredNorm();
  }
  return out;
}

inline double cascaded_nmse(const CMat& h_hat, const CMat& g_hat, const CMat& h, const CMat& g) {
  const CascadedError terms = cascaded_error_terms(h_hat, g_hat, h, g);
  if (!(terms.den > 0.0)) throw std::domain_error("cascaded_nmse: reference energy is zero");
  return terms.num / terms.den;
}

}  // namespace hris
