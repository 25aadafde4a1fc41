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

#include "hris/common.hpp"
#include "hris/rng.hpp"

namespace hris {

// Distance-law attenuation lambda0 * (d / d0)^(-alpha), all quantities linear.
inline double pathloss(double distance_m, double alpha, double lambda0, double d0_m = 1.0) {
  if (!(distance_m > 0.0)) throw std::domain_error("pathloss: distance must be positive");
  if (!(alpha > 0.0)) throw std::domain_error("pathloss: exponent must be positive");
  if (!(lambda0 > 0.0)) throw std::domain_error("pathloss: reference gain must be positive");
  if (!(d0_m > 0.0)) throw std::domain_error("pathloss: reference distance must be positive");
  return lambda0 * std::pow(distance_m / d0_m, -alpha);
}

struct PathlossModel {
  double lambda0 = 0.01;  // -20 dB reference gain at d0
  double alpha_surface_bs = 2.2;
  double alpha_user_surface = 2.1;
  double d0_m = 1.0;
};

struct Geometry {
  Eigen::Vector2d bs_m{0.0, 0.0};
  Eigen::Vector2d surface_m{0.0, 50.0};
  std::vector<Eigen::Vector2d> users_m;

  double surface_bs_distance() const { return (surface_m - bs_m).norm(); }
  double user_surface_distance(std::size_t k) const {
    return (users_m.at(k) - surface_m).norm();
  }
};

// Users drawn uniformly on a disc (area-uniform: r = R*sqrt(u)).
inline Geometry scenario_geometry(int n_users, double radius_m, const Eigen::Vector2d& center_m,
                                  std::uint64_t seed,
                                  const Eigen::Vector2d& bs_m = {0.0, 0.0},
                                  const Eigen::Vector2d& surface_m = {0.0, 50.0}) {
  require(n_users >= 1, "scenario_geometry: need at least one user");
  if (!(radius_m > 0.0)) throw std::domain_error("scenario_geometry: radius must be positive");
  Geometry geo;
  geo.bs_m = bs_m;
  geo.surface_m = surface_m;
  geo.users_m.reserve(static_cast<std::size_t>(n_users));
  RngStream rng(seed, StreamPurpose::kGeometry);
  for (int k = 0; k < n_users; ++k) {
    const double r = radius_m * std::sqrt(rng.uniform01());
    const double theta = kTwoPi * rng.uniform01();
    geo.users_m.emplace_back(center_m.x() + r * std::cos(theta),
                             center_m.y() + r * std::sin(theta));
  }
  return geo;
}

struct SystemConfig {
  int bs_antennas = 0;       // M
  int elements = 0;          // N
  int rf_chains = 0;         // N_r
  int users = 0;             // K
  int subframes = 0;         // B
  int slots_per_subframe = 0;  // T
  double gamma_db = 0.0;     // transmit SNR P_t / sigma^2
  double beta = 0.0;         // surface-to-BS link variance
  RVec gammas;               // per-user link variances, length K

  int pilot_length() const { return subframes * slots_per_subframe; }
  double gamma_linear() const { return db_to_linear(gamma_db); }
  double gamma_sum() const { return gammas.sum(); }

  void validate() const {
    require(bs_antennas >= 1 && elements >= 1 && rf_chains >= 1 && users >= 1 &&
                subframes >= 1 && slots_per_subframe >= 1,
            "SystemConfig: all dimensions must be >= 1");
    require(users <= slots_per_subframe,
            "SystemConfig: users must not exceed slots per sub-frame (pilot orthogonality)");
    require(gammas.size() == users, "SystemConfig: gammas must have one entry per user");
    if (!(beta > 0.0)) throw std::domain_error("SystemConfig: beta must be positive");
    for (Eigen::Index k = 0; k < gammas.size(); ++k)
      if (!(gammas(k) > 0.0)) throw std::domain_error("SystemConfig: gammas must be positive");
  }
};

// Fills beta / gammas from geometry; the surface-BS link uses the steeper
// exponent, user links the flatter one.
inline void apply_pathloss(SystemConfig& config, const Geometry& geo, const PathlossModel& model) {
  require(static_cast<int>(geo.users_m.size()) == config.users,
          "apply_pathloss: geometry users do not match config");
  config.beta = pathloss(geo.surface_bs_distance(), model.alpha_surface_bs, model.lambda0,
                         model.d0_m);
  config.gammas.resize(config.users);
  for (int k = 0; k < config.users; ++k)
    config.gammas(k) = pathloss(geo.user_surface_distance(static_cast<std::size_t>(k)),
                                model.alpha_user_surface, model.lambda0, model.d0_m);
}

struct ChannelRealization {
  CMat H;  // M x N, surface to BS
  CMat G;  // N x K, users to surface
};

// H entries iid CN(0, beta); column k of G iid CN(0, gamma_k).
inline ChannelRealization sample_channels(const SystemConfig& config, std::uint64_t seed,
                                          std::uint64_t trial = 0) {
  config.validate();
  ChannelRealization out;
  RngStream rng_h(seed, StreamPurpose::kChannelH, trial);
  out.H = rng_h.cnormal_matrix(config.bs_antennas, config.elements, config.beta);
  RngStream rng_g(seed, StreamPurpose::kChannelG, trial);
  out.G.resize(config.elements, config.users);
  for (int k = 0; k < config.users; ++k)
    out.G.col(k) = rng_g.cnormal_matrix(config.elements, 1, config.gammas(k));
  return out;
}

}  // namespace hris
