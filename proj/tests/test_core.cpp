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

#include <catch2/catch_amalgamated.hpp>

#include "hris/channel.hpp"
#include "hris/hris_params.hpp"
#include "hris/pilots.hpp"
#include "hris/rng.hpp"

using namespace hris;

TEST_CASE("rng streams are reproducible and keyed", "[core][rng]") {
  RngStream a(42, StreamPurpose::kChannelH, 7);
  RngStream b(42, StreamPurpose::kChannelH, 7);
  for (int i = 0; i < 100; ++i) REQUIRE(a.next_u64() == b.next_u64());

  RngStream c(42, StreamPurpose::kChannelH, 8);
  RngStream d(42, StreamPurpose::kChannelG, 7);
  RngStream e(43, StreamPurpose::kChannelH, 7);
  RngStream base(42, StreamPurpose::kChannelH, 7);
  const std::uint64_t first = base.next_u64();
  REQUIRE(c.next_u64() != first);
  REQUIRE(d.next_u64() != first);
  REQUIRE(e.next_u64() != first);
}

TEST_CASE("rng uniforms stay in (0,1] and normals have unit stats", "[core][rng]") {
  RngStream rng(1, StreamPurpose::kMisc);
  double mean = 0.0, sq = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform01();
    REQUIRE(u > 0.0);
    REQUIRE(u <= 1.0);
    mean += u;
    sq += u * u;
  }
  mean /= n;
  REQUIRE(std::abs(mean - 0.5) < 0.01);
  REQUIRE(std::abs(sq / n - 1.0 / 3.0) < 0.01);

  double nm = 0.0, nsq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double v = rng.normal();
    nm += v;
    nsq += v * v;
  }
  REQUIRE(std::abs(nm / n) < 0.02);
  REQUIRE(std::abs(nsq / n - 1.0) < 0.03);
}

TEST_CASE("complex normals carry the requested variance", "[core][rng]") {
  RngStream rng(5, StreamPurpose::kMisc);
  const double variance = 2.5;
  double power = 0.0, re = 0.0, im = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const cxd z = rng.cnormal(variance);
    power += std::norm(z);
    re += z.real();
    im += z.imag();
  }
  REQUIRE(std::abs(power / n / variance - 1.0) < 0.03);
  REQUIRE(std::abs(re / n) < 0.05);
  REQUIRE(std::abs(im / n) < 0.05);
}

TEST_CASE("pathloss follows the reference distance law", "[core][channel]") {
  // lambda0 = -20 dB, d = 50 m, exponent 2.2
  const double value = pathloss(50.0, 2.2, 0.01, 1.0);
  REQUIRE_THAT(value, Catch::Matchers::WithinRel(1.8313e-6, 0.01));

  // exact power-law ratio between two distances
  const double p1 = pathloss(10.0, 2.1, 0.01);
  const double p2 = pathloss(20.0, 2.1, 0.01);
  REQUIRE_THAT(p1 / p2, Catch::Matchers::WithinRel(std::pow(2.0, 2.1), 1e-12));

  RngStream rng(3, StreamPurpose::kMisc);
  for (int i = 0; i < 100; ++i) {
    const double alpha = rng.uniform(0.5, 4.0);
    const double lambda0 = rng.uniform(1e-4, 1.0);
    const double d1 = rng.uniform(1.0, 100.0);
    const double d2 = d1 + rng.uniform(0.1, 100.0);
    REQUIRE(pathloss(d1, alpha, lambda0) > pathloss(d2, alpha, lambda0));
  }

  REQUIRE_THROWS_AS(pathloss(0.0, 2.0, 0.01), std::domain_error);
  REQUIRE_THROWS_AS(pathloss(-1.0, 2.0, 0.01), std::domain_error);
  REQUIRE_THROWS_AS(pathloss(1.0, -2.0, 0.01), std::domain_error);
}

TEST_CASE("scenario geometry samples the user disc uniformly", "[core][channel]") {
  const Eigen::Vector2d center(30.0, 50.0);
  const Geometry geo = scenario_geometry(10000, 10.0, center, 11);
  REQUIRE(geo.bs_m == Eigen::Vector2d(0.0, 0.0));
  REQUIRE(geo.surface_m == Eigen::Vector2d(0.0, 50.0));
  REQUIRE(geo.users_m.size() == 10000);
  double mean_r = 0.0;
  for (const auto& u : geo.users_m) {
    const double r = (u - center).norm();
    REQUIRE(r <= 10.0 + 1e-12);
    mean_r += r;
  }
  mean_r /= static_cast<double>(geo.users_m.size());
  REQUIRE_THAT(mean_r, Catch::Matchers::WithinRel(2.0 * 10.0 / 3.0, 0.01));

  const Geometry again = scenario_geometry(5, 10.0, center, 11);
  const Geometry other = scenario_geometry(5, 10.0, center, 12);
  REQUIRE(again.users_m[0] == scenario_geometry(5, 10.0, center, 11).users_m[0]);
  REQUIRE(again.users_m[0] != other.users_m[0]);
}

namespace {

SystemConfig desk_config() {
  SystemConfig cfg;
  cfg.bs_antennas = 2;
  cfg.elements = 4;
  cfg.rf_chains = 2;
  cfg.users = 2;
  cfg.subframes = 4;
  cfg.slots_per_subframe = 2;
  cfg.gamma_db = 20.0;
  cfg.beta = pathloss(50.0, 2.2, 0.01);
  cfg.gammas = RVec(2);
  cfg.gammas << pathloss(28.0, 2.1, 0.01), pathloss(33.0, 2.1, 0.01);
  return cfg;
}

}  // namespace

TEST_CASE("config validation catches bad dimensions", "[core][channel]") {
  SystemConfig cfg = desk_config();
  REQUIRE_NOTHROW(cfg.validate());
  REQUIRE(cfg.pilot_length() == 8);

  SystemConfig bad = cfg;
  bad.users = 3;  // exceeds slots_per_subframe
  REQUIRE_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = cfg;
  bad.gammas = RVec::Zero(2);
  REQUIRE_THROWS_AS(bad.validate(), std::domain_error);
  bad = cfg;
  bad.subframes = 0;
  REQUIRE_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("channel draws match their prior statistics", "[core][channel]") {
  SystemConfig cfg = desk_config();
  double h_power = 0.0, g0_power = 0.0, g1_power = 0.0;
  const int trials = 4000;
  for (int t = 0; t < trials; ++t) {
    const ChannelRealization ch = sample_channels(cfg, 99, static_cast<std::uint64_t>(t));
    REQUIRE(ch.H.rows() == 2);
    REQUIRE(ch.H.cols() == 4);
    REQUIRE(ch.G.rows() == 4);
    REQUIRE(ch.G.cols() == 2);
    h_power += ch.H.squaredNorm();
    g0_power += ch.G.col(0).squaredNorm();
    g1_power += ch.G.col(1).squaredNorm();
  }
  const double denom_h = trials * 8.0 * cfg.beta;  // M*N entries of variance beta
  REQUIRE_THAT(h_power / denom_h, Catch::Matchers::WithinRel(1.0, 0.05));
  REQUIRE_THAT(g0_power / (trials * 4.0 * cfg.gammas(0)), Catch::Matchers::WithinRel(1.0, 0.05));
  REQUIRE_THAT(g1_power / (trials * 4.0 * cfg.gammas(1)), Catch::Matchers::WithinRel(1.0, 0.05));

  const ChannelRealization a = sample_channels(cfg, 7, 3);
  const ChannelRealization b = sample_channels(cfg, 7, 3);
  const ChannelRealization c = sample_channels(cfg, 7, 4);
  REQUIRE(a.H == b.H);
  REQUIRE(a.G == b.G);
  REQUIRE(a.H != c.H);
}

TEST_CASE("apply_pathloss wires geometry into the config", "[core][channel]") {
  SystemConfig cfg = desk_config();
  Geometry geo = scenario_geometry(2, 10.0, {30.0, 50.0}, 21);
  apply_pathloss(cfg, geo, PathlossModel{});
  REQUIRE_THAT(cfg.beta, Catch::Matchers::WithinRel(pathloss(50.0, 2.2, 0.01), 1e-12));
  for (int k = 0; k < 2; ++k)
    REQUIRE_THAT(cfg.gammas(k),
                 Catch::Matchers::WithinRel(
                     pathloss(geo.user_surface_distance(static_cast<std::size_t>(k)), 2.1, 0.01),
                     1e-12));
}

TEST_CASE("reflection matrix is diagonal with rho magnitudes", "[core][surface]") {
  const auto topo = ConnectionTopology::fully_connected();
  const HrisParams p = random_params(3, 4, 2, topo, 17);
  const CMat psi1 = reflection_matrix(p, 1);
  REQUIRE(psi1.rows() == 4);
  REQUIRE(psi1.cols() == 4);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) {
      if (i == j) {
        REQUIRE_THAT(std::abs(psi1(i, j)), Catch::Matchers::WithinRel(p.rho(1, i), 1e-12));
        // Compare as complex values: drawn phases may exceed pi, std::arg wraps.
        REQUIRE_THAT(std::abs(psi1(i, j) - std::polar(p.rho(1, i), p.psi(1, i))),
                     Catch::Matchers::WithinAbs(0.0, 1e-12));
      } else {
        REQUIRE(psi1(i, j) == cxd(0.0, 0.0));
      }
    }
  REQUIRE_THROWS_AS(reflection_matrix(p, 3), std::invalid_argument);
}

TEST_CASE("reception matrix respects the mask and has no power division", "[core][surface]") {
  const auto full = ConnectionTopology::fully_connected();
  const HrisParams pf = random_params(2, 4, 3, full, 18);
  const CMat phi0 = reception_matrix(pf, 0);
  for (int r = 0; r < 3; ++r)
    for (int l = 0; l < 4; ++l)
      REQUIRE_THAT(std::abs(phi0(r, l)),
                   Catch::Matchers::WithinRel(1.0 - pf.rho(0, l), 1e-12));

  const auto part = ConnectionTopology::partially_connected(4, 2);
  REQUIRE(part.chain_of_element == (std::vector<int>{0, 0, 1, 1}));
  const HrisParams pp = random_params(2, 4, 2, part, 19);
  const CMat phi_p = reception_matrix(pp, 1);
  int nnz = 0;
  for (int r = 0; r < 2; ++r)
    for (int l = 0; l < 4; ++l) {
      if (pp.mask(r, l)) {
        REQUIRE_THAT(std::abs(phi_p(r, l)),
                     Catch::Matchers::WithinRel(1.0 - pp.rho(1, l), 1e-12));
        ++nnz;
      } else {
        REQUIRE(phi_p(r, l) == cxd(0.0, 0.0));
      }
    }
  REQUIRE(nnz == 4);  // exactly one chain per element
}

TEST_CASE("stacked sensing matrix reproduces per-sub-frame blocks", "[core][surface]") {
  const auto part = ConnectionTopology::partially_connected(6, 2);
  const HrisParams p = random_params(3, 6, 2, part, 23);
  const CMat stacked = stack_reception(p);
  REQUIRE(stacked.rows() == 6);
  REQUIRE(stacked.cols() == 6);
  REQUIRE(stacked.middleRows(2, 2) == reception_matrix(p, 1));

  Eigen::Index nnz = 0;
  for (Eigen::Index i = 0; i < stacked.rows(); ++i)
    for (Eigen::Index j = 0; j < stacked.cols(); ++j)
      if (stacked(i, j) != cxd(0.0, 0.0)) ++nnz;
  REQUIRE(nnz == 3 * 6);  // B * (one connection per element)
}

TEST_CASE("validate flags unconnected elements as warnings", "[core][surface]") {
  HrisParams p = random_params(2, 3, 2, ConnectionTopology::fully_connected(), 29);
  p.mask.col(1).setConstant(false);
  const auto warnings = p.validate();
  REQUIRE(warnings.size() == 1);
  REQUIRE(warnings[0].find("element 1") != std::string::npos);
}

TEST_CASE("random params stay inside their draw boxes", "[core][surface]") {
  const auto topo = ConnectionTopology::fully_connected();
  const HrisParams interior = random_params(2, 5, 2, topo, 31, ParamDraw::kInterior);
  for (int b = 0; b < 2; ++b)
    for (int l = 0; l < 5; ++l) {
      REQUIRE(interior.rho(b, l) > 0.3);
      REQUIRE(interior.rho(b, l) < 0.7);
      REQUIRE(interior.psi(b, l) > 0.1);
      REQUIRE(interior.psi(b, l) < kTwoPi - 0.1);
    }
  const HrisParams a = random_params(2, 5, 2, topo, 31);
  const HrisParams b = random_params(2, 5, 2, topo, 31);
  REQUIRE(a.rho == b.rho);
  REQUIRE(a.phi[1] == b.phi[1]);
}

TEST_CASE("pilots form a scaled orthonormal row basis", "[core][pilots]") {
  for (const auto& [k, t] : std::vector<std::pair<int, int>>{{1, 1}, {2, 2}, {2, 4}, {8, 104}}) {
    const CMat s = generate_pilots(k, t);
    REQUIRE(s.rows() == k);
    REQUIRE(s.cols() == t);
    for (Eigen::Index i = 0; i < s.size(); ++i)
      REQUIRE_THAT(std::abs(s(i / t, i % t)), Catch::Matchers::WithinRel(1.0, 1e-12));
    const CMat gram = s * s.adjoint();
    const CMat expect = static_cast<double>(t) * CMat::Identity(k, k);
    REQUIRE((gram - expect).cwiseAbs().maxCoeff() < 1e-10 * t);
  }
  REQUIRE_THROWS_AS(generate_pilots(3, 2), std::invalid_argument);
}

TEST_CASE("uplink simulation is deterministic and correctly scaled", "[core][pilots]") {
  SystemConfig cfg = desk_config();
  const auto topo = ConnectionTopology::fully_connected();
  const HrisParams params = random_params(cfg.subframes, cfg.elements, cfg.rf_chains, topo, 37);
  const CMat pilots = generate_pilots(cfg.users, cfg.slots_per_subframe);
  const ChannelRealization ch = sample_channels(cfg, 41);

  const SoundingObservation a = simulate_uplink(ch, params, pilots, cfg, 43);
  const SoundingObservation b = simulate_uplink(ch, params, pilots, cfg, 43);
  REQUIRE(a.y_rc == b.y_rc);
  REQUIRE(a.y_bs[2] == b.y_bs[2]);
  REQUIRE_THAT(a.tx_amplitude,
               Catch::Matchers::WithinRel(std::sqrt(db_to_linear(20.0)), 1e-12));

  const SoundingObservation c = simulate_uplink(ch, params, pilots, cfg, 43, 1);
  REQUIRE(a.y_rc != c.y_rc);
}

TEST_CASE("received noise power matches sigma squared", "[core][pilots]") {
  SystemConfig cfg = desk_config();
  const auto topo = ConnectionTopology::fully_connected();
  const HrisParams params = random_params(cfg.subframes, cfg.elements, cfg.rf_chains, topo, 47);
  const CMat pilots = generate_pilots(cfg.users, cfg.slots_per_subframe);
  ChannelRealization silent;
  silent.H = CMat::Zero(cfg.bs_antennas, cfg.elements);
  silent.G = CMat::Zero(cfg.elements, cfg.users);

  double power = 0.0;
  long count = 0;
  for (int t = 0; t < 800; ++t) {
    const SoundingObservation obs =
        simulate_uplink(silent, params, pilots, cfg, 53, static_cast<std::uint64_t>(t));
    power += obs.y_rc.squaredNorm();
    count += obs.y_rc.size();
    for (const auto& blk : obs.y_bs) {
      power += blk.squaredNorm();
      count += blk.size();
    }
  }
  REQUIRE_THAT(power / static_cast<double>(count), Catch::Matchers::WithinRel(1.0, 0.03));
}

TEST_CASE("projection gives the matched-filter model exactly without noise", "[core][pilots]") {
  SystemConfig cfg = desk_config();
  const auto topo = ConnectionTopology::fully_connected();
  const HrisParams params = random_params(cfg.subframes, cfg.elements, cfg.rf_chains, topo, 59);
  const CMat pilots = generate_pilots(cfg.users, cfg.slots_per_subframe);
  const ChannelRealization ch = sample_channels(cfg, 61);

  // noise-free signal path: scale the noise down to zero by hand
  SoundingObservation obs;
  obs.tx_amplitude = std::sqrt(cfg.gamma_linear());
  const CMat tx = obs.tx_amplitude * pilots;
  obs.y_rc.resize(cfg.rf_chains * cfg.subframes, cfg.slots_per_subframe);
  for (int b = 0; b < cfg.subframes; ++b) {
    obs.y_rc.middleRows(b * cfg.rf_chains, cfg.rf_chains) =
        reception_matrix(params, b) * ch.G * tx;
    obs.y_bs.push_back(ch.H * reflection_diag(params, b).asDiagonal() * ch.G * tx);
  }

  const ProjectedObservation proj = project_pilots(obs, pilots);
  const CMat expected_rc = stack_reception(params) * ch.G;
  REQUIRE((proj.y_rc - expected_rc).cwiseAbs().maxCoeff() < 1e-12);
  for (int b = 0; b < cfg.subframes; ++b) {
    const CMat expected_bs = ch.H * reflection_diag(params, b).asDiagonal() * ch.G;
    REQUIRE((proj.y_bs[static_cast<std::size_t>(b)] - expected_bs).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("projected noise level depends only on Gamma", "[core][pilots]") {
  SystemConfig cfg = desk_config();
  const auto topo = ConnectionTopology::fully_connected();
  const HrisParams params = random_params(cfg.subframes, cfg.elements, cfg.rf_chains, topo, 67);
  const CMat pilots = generate_pilots(cfg.users, cfg.slots_per_subframe);
  ChannelRealization silent;
  silent.H = CMat::Zero(cfg.bs_antennas, cfg.elements);
  silent.G = CMat::Zero(cfg.elements, cfg.users);

  const double expected = 1.0 / (cfg.slots_per_subframe * cfg.gamma_linear());
  for (const double sigma2 : {1.0, 4.0}) {
    double power = 0.0;
    long count = 0;
    CMat gram = CMat::Zero(cfg.rf_chains * cfg.subframes, cfg.rf_chains * cfg.subframes);
    const int trials = 4000;
    for (int t = 0; t < trials; ++t) {
      const SoundingObservation obs = simulate_uplink(silent, params, pilots, cfg, 71,
                                                      static_cast<std::uint64_t>(t), sigma2);
      const ProjectedObservation proj = project_pilots(obs, pilots);
      power += proj.y_rc.squaredNorm();
      count += proj.y_rc.size();
      gram += proj.y_rc * proj.y_rc.adjoint();
    }
    REQUIRE_THAT(power / static_cast<double>(count), Catch::Matchers::WithinRel(expected, 0.03));
    // column-accumulated Gram approaches K/(T*Gamma) * I
    gram /= static_cast<double>(trials);
    const CMat target = cfg.users * expected *
                        CMat::Identity(gram.rows(), gram.cols());
    REQUIRE((gram - target).cwiseAbs().maxCoeff() < 0.1 * cfg.users * expected);
  }
}

TEST_CASE("projection is linear in the channel for a frozen noise draw", "[core][pilots]") {
  SystemConfig cfg = desk_config();
  const auto topo = ConnectionTopology::fully_connected();
  const HrisParams params = random_params(cfg.subframes, cfg.elements, cfg.rf_chains, topo, 73);
  const CMat pilots = generate_pilots(cfg.users, cfg.slots_per_subframe);
  const ChannelRealization ch1 = sample_channels(cfg, 79, 0);
  const ChannelRealization ch2 = sample_channels(cfg, 79, 1);
  ChannelRealization sum;
  sum.H = ch1.H + ch2.H;
  sum.G = ch1.G + ch2.G;
  ChannelRealization zero;
  zero.H = CMat::Zero(cfg.bs_antennas, cfg.elements);
  zero.G = CMat::Zero(cfg.elements, cfg.users);

  const auto proj = [&](const ChannelRealization& ch) {
    return project_pilots(simulate_uplink(ch, params, pilots, cfg, 83, 5), pilots);
  };
  const CMat lhs = proj(ch1).y_rc + proj(ch2).y_rc - proj(zero).y_rc;
  const CMat rhs = proj(sum).y_rc;
  REQUIRE((lhs - rhs).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("square pilot blocks satisfy the inverse consistency identity", "[core][pilots]") {
  SystemConfig cfg = desk_config();  // K = T = 2
  const auto topo = ConnectionTopology::fully_connected();
  const HrisParams params = random_params(cfg.subframes, cfg.elements, cfg.rf_chains, topo, 89);
  const CMat pilots = generate_pilots(2, 2);
  const ChannelRealization ch = sample_channels(cfg, 97);
  const SoundingObservation obs = simulate_uplink(ch, params, pilots, cfg, 101);
  const ProjectedObservation proj = project_pilots(obs, pilots);

  const CMat s_inv = pilots.inverse();
  const CMat alt = (1.0 / obs.tx_amplitude) * obs.y_rc * s_inv *
                   (pilots * pilots.adjoint() / 2.0);
  REQUIRE((proj.y_rc - alt).cwiseAbs().maxCoeff() < 1e-10);
}
