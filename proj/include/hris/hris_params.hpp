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

#include <string>
#include <vector>

#include "hris/common.hpp"
#include "hris/rng.hpp"

namespace hris {

// Which sensing RF chains each element may feed. Fully-connected: every
// element reaches every chain. Partially-connected: exactly one chain per
// element (default: contiguous blocks of N/N_r elements).
struct ConnectionTopology {
  enum class Kind { kFullyConnected, kPartiallyConnected };

  Kind kind = Kind::kFullyConnected;
  std::vector<int> chain_of_element;  // used only for kPartiallyConnected

  static ConnectionTopology fully_connected() { return {}; }

  static ConnectionTopology partially_connected(int elements, int rf_chains) {
    require(elements >= 1 && rf_chains >= 1, "topology: dimensions must be >= 1");
    ConnectionTopology topo;
    topo.kind = Kind::kPartiallyConnected;
    topo.chain_of_element.resize(static_cast<std::size_t>(elements));
    for (int l = 0; l < elements; ++l)
      topo.chain_of_element[static_cast<std::size_t>(l)] =
          static_cast<int>((static_cast<long long>(l) * rf_chains) / elements);
    return topo;
  }

  static ConnectionTopology partially_connected(std::vector<int> assignment) {
    ConnectionTopology topo;
    topo.kind = Kind::kPartiallyConnected;
    topo.chain_of_element = std::move(assignment);
    return topo;
  }

  BoolMask mask(int rf_chains, int elements) const {
    BoolMask m(rf_chains, elements);
    if (kind == Kind::kFullyConnected) {
      m.setConstant(true);
      return m;
    }
    require(static_cast<int>(chain_of_element.size()) == elements,
            "topology: assignment size must equal element count");
    m.setConstant(false);
    for (int l = 0; l < elements; ++l) {
      const int r = chain_of_element[static_cast<std::size_t>(l)];
      require(r >= 0 && r < rf_chains, "topology: chain index out of range");
      m(r, l) = true;
    }
    return m;
  }

  std::string name() const {
    return kind == Kind::kFullyConnected ? "fully-connected" : "partially-connected";
  }
};

// Per-sub-frame hybrid surface configuration. rho(b,l) in [0,1] is the
// reflected fraction, psi(b,l) the reflection phase, phi[b](r,l) the sensing
// phase toward chain r; mask(r,l) marks realizable element-to-chain paths.
struct HrisParams {
  RMat rho;                // B x N
  RMat psi;                // B x N
  std::vector<RMat> phi;   // B entries, each N_r x N
  BoolMask mask;           // N_r x N

  int subframes() const { return static_cast<int>(rho.rows()); }
  int elements() const { return static_cast<int>(rho.cols()); }
  int rf_chains() const { return static_cast<int>(mask.rows()); }

  void check_shapes() const {
    require(rho.rows() >= 1 && rho.cols() >= 1, "HrisParams: empty parameter grid");
    require(psi.rows() == rho.rows() && psi.cols() == rho.cols(),
            "HrisParams: psi shape must match rho");
    require(static_cast<int>(phi.size()) == subframes(),
            "HrisParams: need one phi matrix per sub-frame");
    require(mask.cols() == rho.cols(), "HrisParams: mask columns must match elements");
    for (const auto& p : phi)
      require(p.rows() == mask.rows() && p.cols() == mask.cols(),
              "HrisParams: phi shape must match mask");
  }

  // Columns with no connected chain make the element-to-chain link
  // unobservable; reported as warnings, not errors.
  std::vector<std::string> validate() const {
    check_shapes();
    std::vector<std::string> warnings;
    for (int l = 0; l < elements(); ++l) {
      bool any = false;
      for (int r = 0; r < rf_chains(); ++r) any = any || mask(r, l);
      if (!any)
        warnings.push_back("element " + std::to_string(l) + " feeds no sensing chain");
    }
    for (int b = 0; b < subframes(); ++b)
      for (int l = 0; l < elements(); ++l)
        if (rho(b, l) < 0.0 || rho(b, l) > 1.0)
          warnings.push_back("rho out of [0,1] at sub-frame " + std::to_string(b) +
                             ", element " + std::to_string(l));
    return warnings;
  }
};

enum class ParamDraw {
  kInterior,  // rho in (0.3, 0.7), phases in (0.1, 2pi - 0.1): optimizer starts
  kFeasible,  // full box nudged 1e-6 off the boundary: random baselines
};

inline HrisParams random_params(int subframes, int elements, int rf_chains,
                                const ConnectionTopology& topology, std::uint64_t seed,
                                ParamDraw draw = ParamDraw::kFeasible,
                                std::uint64_t index = 0) {
  HrisParams p;
  p.rho.resize(subframes, elements);
  p.psi.resize(subframes, elements);
  p.phi.assign(static_cast<std::size_t>(subframes), RMat::Zero(rf_chains, elements));
  p.mask = topology.mask(rf_chains, elements);
  RngStream rng(seed, StreamPurpose::kHrisInit, index);
  const double rho_lo = draw == ParamDraw::kInterior ? 0.3 : 1e-6;
  const double rho_hi = draw == ParamDraw::kInterior ? 0.7 : 1.0 - 1e-6;
  const double ph_lo = draw == ParamDraw::kInterior ? 0.1 : 1e-6;
  const double ph_hi = draw == ParamDraw::kInterior ? kTwoPi - 0.1 : kTwoPi - 1e-6;
  for (int b = 0; b < subframes; ++b)
    for (int l = 0; l < elements; ++l) {
      p.rho(b, l) = rng.uniform(rho_lo, rho_hi);
      p.psi(b, l) = rng.uniform(ph_lo, ph_hi);
    }
  for (int b = 0; b < subframes; ++b)
    for (int r = 0; r < rf_chains; ++r)
      for (int l = 0; l < elements; ++l)
        if (p.mask(r, l)) p.phi[static_cast<std::size_t>(b)](r, l) = rng.uniform(ph_lo, ph_hi);
  return p;
}

// Diagonal of the reflection matrix for sub-frame b (0-based):
// rho(b,l) * exp(i psi(b,l)).
inline CVec reflection_diag(const HrisParams& params, int b) {
  require(b >= 0 && b < params.subframes(), "reflection_diag: sub-frame index out of range");
  const int n = params.elements();
  CVec d(n);
  for (int l = 0; l < n; ++l) d(l) = std::polar(params.rho(b, l), params.psi(b, l));
  return d;
}

inline CMat reflection_matrix(const HrisParams& params, int b) {
  return CMat(reflection_diag(params, b).asDiagonal());
}

// Reception matrix for sub-frame b: entry (r,l) = (1 - rho(b,l)) * exp(i phi)
// where connected, 0 elsewhere. No power division across chains.
inline CMat reception_matrix(const HrisParams& params, int b) {
  require(b >= 0 && b < params.subframes(), "reception_matrix: sub-frame index out of range");
  const int nr = params.rf_chains();
  const int n = params.elements();
  CMat phi_mat = CMat::Zero(nr, n);
  const RMat& ph = params.phi[static_cast<std::size_t>(b)];
  for (int r = 0; r < nr; ++r)
    for (int l = 0; l < n; ++l)
      if (params.mask(r, l)) phi_mat(r, l) = std::polar(1.0 - params.rho(b, l), ph(r, l));
  return phi_mat;
}

// Sensing matrices of all sub-frames stacked vertically: (N_r * B) x N.
inline CMat stack_reception(const HrisParams& params) {
  params.check_shapes();
  const int nr = params.rf_chains();
  const int b_count = params.subframes();
  CMat stacked(static_cast<Eigen::Index>(nr) * b_count, params.elements());
  for (int b = 0; b < b_count; ++b)
    stacked.middleRows(static_cast<Eigen::Index>(b) * nr, nr) = reception_matrix(params, b);
  return stacked;
}

// Reflection profile P with P(b,l) = rho(b,l) * exp(i psi(b,l)); row b is the
// diagonal of the sub-frame-b reflection matrix.
inline CMat reflection_profile(const HrisParams& params) {
  params.check_shapes();
  CMat profile(params.subframes(), params.elements());
  for (int b = 0; b < params.subframes(); ++b) profile.row(b) = reflection_diag(params, b).transpose();
  return profile;
}

}  // namespace hris
