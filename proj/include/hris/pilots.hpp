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

#include <vector>

#include "hris/channel.hpp"
#include "hris/common.hpp"
#include "hris/hris_params.hpp"
#include "hris/rng.hpp"

namespace hris {

// First K rows of the T-point DFT basis: S(k,t) = exp(-2*pi*i*k*t/T).
// Unit-modulus entries with S * S^H = T * I_K.
inline CMat generate_pilots(int users, int slots) {
  require(users >= 1 && slots >= 1, "generate_pilots: dimensions must be >= 1");
  require(users <= slots, "generate_pilots: orthogonality requires users <= slots");
  CMat s(users, slots);
  for (int k = 0; k < users; ++k)
    for (int t = 0; t < slots; ++t)
      s(k, t) = std::polar(1.0, -kTwoPi * static_cast<double>(k) * static_cast<double>(t) /
                                    static_cast<double>(slots));
  return s;
}

// Raw per-sub-frame sounding data. Sensing rows are stacked per sub-frame as
// in stack_reception; tx_amplitude scales every transmitted pilot symbol.
struct SoundingObservation {
  CMat y_rc;                // (N_r * B) x T
  std::vector<CMat> y_bs;   // B entries, each M x T
  double noise_variance = 1.0;
  double tx_amplitude = 1.0;
};

// One full sounding epoch: in sub-frame b the surface applies (Psi(b),
// Phi(b)) while all users repeat the same pilot block a*S. Per-user transmit
// power a^2 = Gamma * sigma^2, so the projected-domain noise level depends on
// Gamma alone.
inline SoundingObservation simulate_uplink(const ChannelRealization& channels,
                                           const HrisParams& params, const CMat& pilots,
                                           const SystemConfig& config, std::uint64_t seed,
                                           std::uint64_t trial = 0,
                                           double noise_variance = 1.0) {
  config.validate();
  params.check_shapes();
  require(channels.H.rows() == config.bs_antennas && channels.H.cols() == config.elements,
          "simulate_uplink: H shape mismatch");
  require(channels.G.rows() == config.elements && channels.G.cols() == config.users,
          "simulate_uplink: G shape mismatch");
  require(pilots.rows() == config.users && pilots.cols() == config.slots_per_subframe,
          "simulate_uplink: pilot shape mismatch");
  require(params.subframes() == config.subframes && params.elements() == config.elements &&
              params.rf_chains() == config.rf_chains,
          "simulate_uplink: surface parameters do not match config");
  if (!(noise_variance > 0.0))
    throw std::domain_error("simulate_uplink: noise variance must be positive");

  SoundingObservation obs;
  obs.noise_variance = noise_variance;
  obs.tx_amplitude = std::sqrt(config.gamma_linear() * noise_variance);

  const CMat tx = obs.tx_amplitude * pilots;  // K x T
  const int nr = config.rf_chains;
  obs.y_rc.resize(static_cast<Eigen::Index>(nr) * config.subframes, config.slots_per_subframe);
  obs.y_bs.reserve(static_cast<std::size_t>(config.subframes));
  RngStream rng_rc(seed, StreamPurpose::kNoiseRc, trial);
  RngStream rng_bs(seed, StreamPurpose::kNoiseBs, trial);
  for (int b = 0; b < config.subframes; ++b) {
    const CMat phi_b = reception_matrix(params, b);
    obs.y_rc.middleRows(static_cast<Eigen::Index>(b) * nr, nr) =
        phi_b * channels.G * tx +
        rng_rc.cnormal_matrix(nr, config.slots_per_subframe, noise_variance);
    const CVec psi_b = reflection_diag(params, b);
    obs.y_bs.push_back(channels.H * psi_b.asDiagonal() * channels.G * tx +
                       rng_bs.cnormal_matrix(config.bs_antennas, config.slots_per_subframe,
                                             noise_variance));
  }
  return obs;
}

// Pilot-matched observations: one column per user, noise variance 1/(T*Gamma)
// per entry at both receivers.
struct ProjectedObservation {
  CMat y_rc;               // (N_r * B) x K, equals A_RC * G + noise
  std::vector<CMat> y_bs;  // B entries, each M x K, equals H * Psi(b) * G + noise
};

inline ProjectedObservation project_pilots(const SoundingObservation& obs, const CMat& pilots) {
  const double t_slots = static_cast<double>(pilots.cols());
  if (!(obs.tx_amplitude > 0.0))
    throw std::domain_error("project_pilots: tx amplitude must be positive");
  const double scale = 1.0 / (t_slots * obs.tx_amplitude);
  ProjectedObservation out;
  require(obs.y_rc.cols() == pilots.cols(), "project_pilots: slot count mismatch");
  out.y_rc = scale * obs.y_rc * pilots.adjoint();
  out.y_bs.reserve(obs.y_bs.size());
  for (const auto& block : obs.y_bs) {
    require(block.cols() == pilots.cols(), "project_pilots: slot count mismatch");
    out.y_bs.push_back(scale * block * pilots.adjoint());
  }
  return out;
}

}  // namespace hris
