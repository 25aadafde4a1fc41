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

#include <functional>

#include "hris/common.hpp"
#include "hris/hris_params.hpp"
#include "hris/optimizer.hpp"

namespace hris {

// Weighted sum of the two analytic estimation MSEs as a function of the flat
// surface parameter vector. The gradient is assembled by one reverse sweep
// through the matrix pipeline, so its cost does not grow with the parameter
// count; correctness is pinned down by the finite-difference tests.
class SumMseObjective {
 public:
  SumMseObjective(double beta, RVec gammas, int bs_antennas, int slots, double gamma_linear,
                  ParamLayout layout, double weight_g = 1.0, double weight_h = 1.0)
      : beta_(beta),
        gammas_(std::move(gammas)),
        bs_antennas_(bs_antennas),
        slots_(slots),
        gamma_linear_(gamma_linear),
        weight_g_(weight_g),
        weight_h_(weight_h),
        layout_(std::move(layout)) {
    if (!(beta_ > 0.0)) throw std::domain_error("SumMseObjective: beta must be positive");
    if (!(gammas_.minCoeff() > 0.0))
      throw std::domain_error("SumMseObjective: gammas must be positive");
    if (!(gamma_linear_ > 0.0)) throw std::domain_error("SumMseObjective: Gamma must be positive");
    require(bs_antennas_ >= 1 && slots_ >= 1, "SumMseObjective: dimensions must be >= 1");
  }

  struct Components {
    double eps_g = 0.0;
    double eps_h = 0.0;
  };

  const ParamLayout& layout() const { return layout_; }
  double weight_g() const { return weight_g_; }
  double weight_h() const { return weight_h_; }

  Components evaluate(const RVec& x) const { return forward(x).components(); }

  double value(const RVec& x) const {
    const Components c = evaluate(x);
    return weight_g_ * c.eps_g + weight_h_ * c.eps_h;
  }

  // Reverse sweep. Intermediate adjoints follow the convention
  // df = Re Tr(F^H dV) for each complex intermediate V.
  RVec gradient(const RVec& x) const {
    const Workspace w = forward(x);
    const auto k = static_cast<double>(gammas_.size());
    const double m = static_cast<double>(bs_antennas_);

    const CMat g_x = -weight_h_ * m * (w.y * w.y);
    const CMat g_xi = k * g_x.cwiseProduct(w.sigma.transpose());
    const CMat gamma_sigma = k * g_x.cwiseProduct(w.xi.transpose());
    const CMat g_theta = w.p.conjugate() * g_xi * w.p.transpose();
    const CMat q = w.dbar_inv * g_theta.conjugate() * w.dbar_inv;

    const CMat f_p = 2.0 * (w.theta * w.p.conjugate() * g_xi).conjugate() -
                     2.0 * beta_ * q * w.p * w.r_diag.asDiagonal();
    const RVec g_r = -beta_ * (w.p.adjoint() * q * w.p).diagonal().real();

    CMat gamma_rt = -gamma_sigma;
    gamma_rt.diagonal().array() += weight_g_;
    gamma_rt += CMat(g_r.cast<cxd>().asDiagonal());

    const CMat f_a = (-2.0 / w.omega) * w.a * w.r_tilde * gamma_rt * w.r_tilde;

    RVec grad = RVec::Zero(layout_.size());
    const int nr = layout_.rf_chains;
    for (int b = 0; b < layout_.subframes; ++b)
      for (int l = 0; l < layout_.elements; ++l) {
        const cxd fp = f_p(b, l);
        grad(layout_.psi_index(b, l)) = -std::imag(std::conj(fp) * w.p(b, l));
        double drho = std::real(std::conj(fp) * std::polar(1.0, w.params.psi(b, l)));
        for (int r = 0; r < nr; ++r)
          if (layout_.mask(r, l)) {
            const Eigen::Index row = static_cast<Eigen::Index>(b) * nr + r;
            drho -= std::real(
                std::conj(f_a(row, l)) *
                std::polar(1.0, w.params.phi[static_cast<std::size_t>(b)](r, l)));
          }
        grad(layout_.rho_index(b, l)) = drho;
      }
    for (int b = 0; b < layout_.subframes; ++b)
      for (std::size_t s = 0; s < layout_.phi_slots.size(); ++s) {
        const auto [r, l] = layout_.phi_slots[s];
        const Eigen::Index row = static_cast<Eigen::Index>(b) * nr + r;
        grad(layout_.phi_index(b, s)) = -std::imag(std::conj(f_a(row, l)) * w.a(row, l));
      }
    return grad;
  }

  std::function<double(const RVec&)> value_fn() const {
    return [this](const RVec& x) { return value(x); };
  }
  std::function<RVec(const RVec&)> gradient_fn() const {
    return [this](const RVec& x) { return gradient(x); };
  }

 private:
  struct Workspace {
    HrisParams params;
    CMat a;        // (N_r B) x N sensing stack
    CMat p;        // B x N reflection profile
    CMat r_tilde;  // error covariance of the G link
    CMat sigma;    // c I - r_tilde
    RVec r_diag;
    CMat dbar_inv;
    CMat theta;
    CMat xi;
    CMat y;  // (beta^-1 I + X)^-1
    double omega = 0.0;
    double eps_g = 0.0;
    double eps_h = 0.0;

    Components components() const { return {eps_g, eps_h}; }
  };

  Workspace forward(const RVec& x) const {
    if (!layout_.interior(x))
      throw std::domain_error("SumMseObjective: x must lie strictly inside the box");
    Workspace w;
    w.params = unpack(x, layout_);
    w.a = stack_reception(w.params);
    w.p = reflection_profile(w.params);

    const auto k = static_cast<double>(gammas_.size());
    const double c = gammas_.sum();
    w.omega = k / (slots_ * gamma_linear_);
    const Eigen::Index n = layout_.elements;

    CMat j = (1.0 / c) * CMat::Identity(n, n) + (1.0 / w.omega) * (w.a.adjoint() * w.a);
    j = 0.5 * (j + j.adjoint()).eval();
    w.r_tilde = j.llt().solve(CMat::Identity(n, n));
    w.r_tilde = 0.5 * (w.r_tilde + w.r_tilde.adjoint()).eval();
    w.eps_g = w.r_tilde.trace().real();

    w.sigma = -w.r_tilde;
    w.sigma.diagonal().array() += c;
    w.r_diag = w.r_tilde.diagonal().real();

    const Eigen::Index b = layout_.subframes;
    CMat dbar = (beta_ / k) * (w.p * w.r_diag.asDiagonal() * w.p.adjoint());
    dbar += (1.0 / (slots_ * gamma_linear_)) * CMat::Identity(b, b);
    dbar = 0.5 * (dbar + dbar.adjoint()).eval();
    w.dbar_inv = dbar.llt().solve(CMat::Identity(b, b));
    w.dbar_inv = 0.5 * (w.dbar_inv + w.dbar_inv.adjoint()).eval();

    w.theta = k * w.dbar_inv.transpose();
    w.xi = w.p.transpose() * w.theta * w.p.conjugate();
    CMat z = k * w.sigma.cwiseProduct(w.xi);
    z.diagonal().array() += 1.0 / beta_;
    z = 0.5 * (z + z.adjoint()).eval();
    w.y = z.llt().solve(CMat::Identity(n, n));
    w.y = 0.5 * (w.y + w.y.adjoint()).eval();
    w.eps_h = bs_antennas_ * w.y.trace().real();
    return w;
  }

  double beta_;
  RVec gammas_;
  int bs_antennas_;
  int slots_;
  double gamma_linear_;
  double weight_g_;
  double weight_h_;
  ParamLayout layout_;
};

}  // namespace hris
