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

#include <cmath>
#include <functional>
#include <utility>
#include <vector>

#include "hris/common.hpp"
#include "hris/hris_params.hpp"

namespace hris {

// Flat parameter layout [rho(0..B-1), psi(0..B-1), phi(0..B-1)]; within each
// sub-frame rho/psi run over elements, phi runs row-major over connected
// (chain, element) pairs. Masked-out phi entries are omitted.
struct ParamLayout {
  int subframes = 0;
  int elements = 0;
  int rf_chains = 0;
  BoolMask mask;
  std::vector<std::pair<int, int>> phi_slots;  // connected (r, l) in packing order

  static ParamLayout create(int subframes, int elements, int rf_chains,
                            const ConnectionTopology& topology) {
    ParamLayout layout;
    layout.subframes = subframes;
    layout.elements = elements;
    layout.rf_chains = rf_chains;
    layout.mask = topology.mask(rf_chains, elements);
    for (int r = 0; r < rf_chains; ++r)
      for (int l = 0; l < elements; ++l)
        if (layout.mask(r, l)) layout.phi_slots.emplace_back(r, l);
    return layout;
  }

  Eigen::Index rho_count() const {
    return static_cast<Eigen::Index>(subframes) * elements;
  }
  Eigen::Index phase_count() const {
    return rho_count() + static_cast<Eigen::Index>(subframes) * phi_slots.size();
  }
  Eigen::Index size() const { return rho_count() + phase_count(); }

  Eigen::Index rho_index(int b, int l) const {
    return static_cast<Eigen::Index>(b) * elements + l;
  }
  Eigen::Index psi_index(int b, int l) const { return rho_count() + rho_index(b, l); }
  Eigen::Index phi_index(int b, std::size_t slot) const {
    return 2 * rho_count() +
           static_cast<Eigen::Index>(b) * static_cast<Eigen::Index>(phi_slots.size()) +
           static_cast<Eigen::Index>(slot);
  }

  bool is_rho_coordinate(Eigen::Index i) const { return i < rho_count(); }

  double upper_bound(Eigen::Index i) const { return is_rho_coordinate(i) ? 1.0 : kTwoPi; }

  bool interior(const RVec& x) const {
    if (x.size() != size()) return false;
    for (Eigen::Index i = 0; i < x.size(); ++i)
      if (!(x(i) > 0.0) || !(x(i) < upper_bound(i)) || !std::isfinite(x(i))) return false;
    return true;
  }
};

inline RVec pack(const HrisParams& params, const ParamLayout& layout) {
  params.check_shapes();
  require(params.subframes() == layout.subframes && params.elements() == layout.elements &&
              params.rf_chains() == layout.rf_chains,
          "pack: parameter dimensions do not match layout");
  require((params.mask == layout.mask).all(), "pack: connection mask does not match layout");
  RVec x(layout.size());
  for (int b = 0; b < layout.subframes; ++b)
    for (int l = 0; l < layout.elements; ++l) {
      x(layout.rho_index(b, l)) = params.rho(b, l);
      x(layout.psi_index(b, l)) = params.psi(b, l);
    }
  for (int b = 0; b < layout.subframes; ++b)
    for (std::size_t s = 0; s < layout.phi_slots.size(); ++s)
      x(layout.phi_index(b, s)) =
          params.phi[static_cast<std::size_t>(b)](layout.phi_slots[s].first,
                                                  layout.phi_slots[s].second);
  for (Eigen::Index i = 0; i < x.size(); ++i)
    if (!(x(i) > 0.0) || !(x(i) < layout.upper_bound(i)))
      throw std::domain_error(
          "pack: coordinate " + std::to_string(i) +
          " lies on or outside its box; nudge it 1e-6 into the interior");
  return x;
}

inline HrisParams unpack(const RVec& x, const ParamLayout& layout) {
  require(x.size() == layout.size(), "unpack: wrong vector length");
  for (Eigen::Index i = 0; i < x.size(); ++i)
    require(std::isfinite(x(i)), "unpack: non-finite coordinate");
  HrisParams params;
  params.rho.resize(layout.subframes, layout.elements);
  params.psi.resize(layout.subframes, layout.elements);
  params.phi.assign(static_cast<std::size_t>(layout.subframes),
                    RMat::Zero(layout.rf_chains, layout.elements));
  params.mask = layout.mask;
  for (int b = 0; b < layout.subframes; ++b)
    for (int l = 0; l < layout.elements; ++l) {
      params.rho(b, l) = x(layout.rho_index(b, l));
      params.psi(b, l) = x(layout.psi_index(b, l));
    }
  for (int b = 0; b < layout.subframes; ++b)
    for (std::size_t s = 0; s < layout.phi_slots.size(); ++s)
      params.phi[static_cast<std::size_t>(b)](layout.phi_slots[s].first,
                                              layout.phi_slots[s].second) =
          x(layout.phi_index(b, s));
  return params;
}

// Reciprocal box barrier: sum over coordinates of 1/x + 1/(ub - x). Diverges
// at the box faces, keeping iterates strictly feasible.
inline double barrier_value(const RVec& x, const ParamLayout& layout) {
  require(x.size() == layout.size(), "barrier_value: wrong vector length");
  double total = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double ub = layout.upper_bound(i);
    if (!(x(i) > 0.0) || !(x(i) < ub))
      throw std::domain_error("barrier_value: coordinate " + std::to_string(i) +
                              " outside the open box");
    total += 1.0 / x(i) + 1.0 / (ub - x(i));
  }
  return total;
}

inline RVec barrier_gradient(const RVec& x, const ParamLayout& layout) {
  require(x.size() == layout.size(), "barrier_gradient: wrong vector length");
  RVec g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double ub = layout.upper_bound(i);
    if (!(x(i) > 0.0) || !(x(i) < ub))
      throw std::domain_error("barrier_gradient: coordinate " + std::to_string(i) +
                              " outside the open box");
    g(i) = -1.0 / (x(i) * x(i)) + 1.0 / ((ub - x(i)) * (ub - x(i)));
  }
  return g;
}

struct OptimizerSettings {
  double eta = 1e-2;             // initial trial step
  double lambda = -1.0;          // barrier weight; < 0 selects 1e-6 * f(x0) / B(x0)
  int max_iter = 100;
  double rel_tol = 1e-6;
  int flat_window = 10;          // consecutive near-flat iterations before stopping
  bool backtracking = true;
  double backtrack_factor = 0.5;
  double growth_factor = 2.0;    // accepted steps relax the next trial step
  double eta_min = 1e-18;
  double eta_max = 1e12;
  std::vector<Eigen::Index> frozen;  // coordinates held fixed (gradient zeroed)
};

struct TracePoint {
  int iteration = 0;
  double loss = 0.0;
  double objective = 0.0;
  double barrier = 0.0;
  double step = 0.0;
};

struct OptimizeResult {
  RVec x;
  std::vector<TracePoint> trace;
  bool converged = false;
  double lambda = 0.0;
};

// Projected-free barrier descent: x <- x - eta * (grad f + lambda * grad B).
// With backtracking every accepted step strictly decreases the loss, so the
// trace is non-increasing by construction; candidates outside the open box
// are rejected before evaluation.
inline OptimizeResult optimize(const std::function<double(const RVec&)>& objective_value,
                               const std::function<RVec(const RVec&)>& objective_gradient,
                               const ParamLayout& layout, const RVec& x0,
                               const OptimizerSettings& settings = {}) {
  require(layout.interior(x0), "optimize: x0 must lie strictly inside the box");
  OptimizeResult result;
  result.x = x0;

  const double f0 = objective_value(x0);
  const double b0 = barrier_value(x0, layout);
  result.lambda = settings.lambda >= 0.0 ? settings.lambda : 1e-6 * std::abs(f0) / b0;
  const double lambda = result.lambda;

  const auto loss_at = [&](const RVec& x) {
    return objective_value(x) + lambda * barrier_value(x, layout);
  };
  const auto grad_at = [&](const RVec& x) {
    RVec g = objective_gradient(x) + lambda * barrier_gradient(x, layout);
    for (const Eigen::Index i : settings.frozen) g(i) = 0.0;
    return g;
  };

  double loss = f0 + lambda * b0;
  result.trace.push_back({0, loss, f0, b0, 0.0});

  double eta = settings.eta;
  int flat_count = 0;
  for (int iter = 1; iter <= settings.max_iter; ++iter) {
    const RVec g = grad_at(result.x);
    double trial = eta;
    bool accepted = false;
    RVec candidate;
    double cand_loss = 0.0;
    while (trial >= settings.eta_min) {
      candidate = result.x - trial * g;
      if (layout.interior(candidate)) {
        cand_loss = loss_at(candidate);
        if (cand_loss < loss || !settings.backtracking) {
          accepted = true;
          break;
        }
      } else if (!settings.backtracking) {
        // A fixed-step run that leaves the box cannot continue.
        break;
      }
      trial *= settings.backtrack_factor;
    }
    if (!accepted) {
      result.converged = true;  // no descent direction at resolvable step size
      break;
    }
    const double rel_change = std::abs(loss - cand_loss) / std::max(std::abs(loss), 1e-300);
    result.x = candidate;
    loss = cand_loss;
    const double f = objective_value(result.x);
    result.trace.push_back({iter, loss, f, barrier_value(result.x, layout), trial});
    eta = std::min(trial * settings.growth_factor, settings.eta_max);
    flat_count = rel_change < settings.rel_tol ? flat_count + 1 : 0;
    if (flat_count >= settings.flat_window) {
      result.converged = true;
      break;
    }
  }
  return result;
}

}  // namespace hris
