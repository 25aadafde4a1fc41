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

#include "hris/objective.hpp"
#include "hris/optimizer.hpp"
#include "hris/rng.hpp"

using namespace hris;

TEST_CASE("pack and unpack are mutual inverses on the interior", "[optimizer]") {
  const auto topo = ConnectionTopology::partially_connected(4, 2);
  const ParamLayout layout = ParamLayout::create(3, 4, 2, topo);
  REQUIRE(layout.size() == 2 * 3 * 4 + 3 * 4);  // one connection per element

  const HrisParams params = random_params(3, 4, 2, topo, 233, ParamDraw::kInterior);
  const RVec x = pack(params, layout);
  const HrisParams back = unpack(x, layout);
  REQUIRE((back.rho - params.rho).cwiseAbs().maxCoeff() == 0.0);
  REQUIRE((back.psi - params.psi).cwiseAbs().maxCoeff() == 0.0);
  for (int b = 0; b < 3; ++b)
    for (int r = 0; r < 2; ++r)
      for (int l = 0; l < 4; ++l) {
        if (params.mask(r, l)) {
          REQUIRE(back.phi[b](r, l) == params.phi[b](r, l));
        } else {
          REQUIRE(back.phi[b](r, l) == 0.0);  // unconnected phases are not coordinates
        }
      }
  REQUIRE((pack(back, layout) - x).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("pack rejects configurations on the box boundary", "[optimizer]") {
  const auto topo = ConnectionTopology::fully_connected();
  const ParamLayout layout = ParamLayout::create(2, 3, 2, topo);
  HrisParams params = random_params(2, 3, 2, topo, 239, ParamDraw::kInterior);
  params.rho(0, 0) = 0.0;
  REQUIRE_THROWS_AS(pack(params, layout), std::domain_error);
  params.rho(0, 0) = 1.0;
  REQUIRE_THROWS_AS(pack(params, layout), std::domain_error);
}

TEST_CASE("barrier takes its known values at box midpoints", "[optimizer]") {
  const auto topo = ConnectionTopology::fully_connected();
  const ParamLayout layout = ParamLayout::create(1, 1, 1, topo);
  REQUIRE(layout.size() == 3);  // rho, psi, phi

  RVec x(3);
  x << 0.5, kPi, kPi;
  const double expected = 4.0 + 2.0 / kPi + 2.0 / kPi;
  REQUIRE_THAT(barrier_value(x, layout), Catch::Matchers::WithinRel(expected, 1e-12));
  REQUIRE(barrier_gradient(x, layout).cwiseAbs().maxCoeff() < 1e-12);

  x(0) = 1e-9;
  REQUIRE(barrier_value(x, layout) > 1e9);

  x(0) = 1.0;  // closed boundary is outside the barrier domain
  REQUIRE_THROWS_AS(barrier_value(x, layout), std::domain_error);
  REQUIRE_THROWS_AS(barrier_gradient(x, layout), std::domain_error);
}

TEST_CASE("barrier gradient matches finite differences", "[optimizer]") {
  const auto topo = ConnectionTopology::fully_connected();
  const ParamLayout layout = ParamLayout::create(2, 3, 2, topo);
  const RVec x = pack(random_params(2, 3, 2, topo, 241, ParamDraw::kInterior), layout);
  const RVec g = barrier_gradient(x, layout);
  const double h = 1e-6;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    RVec xp = x, xm = x;
    xp(i) += h;
    xm(i) -= h;
    const double fd = (barrier_value(xp, layout) - barrier_value(xm, layout)) / (2.0 * h);
    REQUIRE_THAT(g(i), Catch::Matchers::WithinRel(fd, 1e-6));
  }
}

TEST_CASE("objective gradient matches central differences", "[optimizer]") {
  const auto topo = ConnectionTopology::fully_connected();
  const ParamLayout layout = ParamLayout::create(2, 4, 2, topo);
  RVec gammas(2);
  gammas << 0.8, 1.2;
  const SumMseObjective obj(0.5, gammas, 2, 2, db_to_linear(20.0), layout);

  const double h = 1e-5;
  for (int point = 0; point < 3; ++point) {
    const RVec x = pack(random_params(2, 4, 2, topo, 251, ParamDraw::kInterior,
                                      static_cast<std::uint64_t>(point)),
                        layout);
    const RVec g = obj.gradient(x);
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      RVec xp = x, xm = x;
      xp(i) += h;
      xm(i) -= h;
      const double fd = (obj.value(xp) - obj.value(xm)) / (2.0 * h);
      const double rel = std::abs(fd - g(i)) / std::max(std::abs(g(i)), 1e-8);
      INFO("point " << point << " coordinate " << i);
      REQUIRE(rel < 1e-5);
    }
  }
}

TEST_CASE("objective weights combine the two error terms", "[optimizer]") {
  const auto topo = ConnectionTopology::fully_connected();
  const ParamLayout layout = ParamLayout::create(2, 3, 2, topo);
  RVec gammas(2);
  gammas << 0.9, 1.1;
  const SumMseObjective obj(0.4, gammas, 3, 2, db_to_linear(15.0), layout, 2.0, 3.0);
  const RVec x = pack(random_params(2, 3, 2, topo, 257, ParamDraw::kInterior), layout);

  const auto parts = obj.evaluate(x);
  REQUIRE(parts.eps_g > 0.0);
  REQUIRE(parts.eps_h > 0.0);
  REQUIRE_THAT(obj.value(x),
               Catch::Matchers::WithinRel(2.0 * parts.eps_g + 3.0 * parts.eps_h, 1e-12));
  REQUIRE_THROWS_AS(obj.value(RVec::Zero(layout.size())), std::domain_error);
}

TEST_CASE("descent on a quadratic stub finds the interior target", "[optimizer]") {
  const auto topo = ConnectionTopology::fully_connected();
  const ParamLayout layout = ParamLayout::create(1, 2, 1, topo);  // 6 coordinates
  RVec target(6);
  target << 0.6, 0.4, 2.0, 4.0, 1.5, 3.0;

  const auto value = [&](const RVec& x) { return 1.0 + (x - target).squaredNorm(); };
  const auto grad = [&](const RVec& x) { return RVec(2.0 * (x - target)); };

  RVec x0(6);
  x0 << 0.3, 0.7, 1.0, 5.0, 3.0, 1.0;
  OptimizerSettings settings;
  settings.lambda = 0.0;  // pure objective, box enforced by the line search only
  const OptimizeResult res = optimize(value, grad, layout, x0, settings);

  REQUIRE(res.converged);
  REQUIRE(res.lambda == 0.0);
  REQUIRE((res.x - target).cwiseAbs().maxCoeff() < 1e-3);
  REQUIRE_THAT(res.trace.back().objective, Catch::Matchers::WithinAbs(1.0, 1e-4));
  REQUIRE(res.trace.front().iteration == 0);
  REQUIRE(res.trace.front().step == 0.0);
  for (std::size_t i = 1; i < res.trace.size(); ++i)
    REQUIRE(res.trace[i].loss <= res.trace[i - 1].loss);
}

TEST_CASE("optimizing the error objective descends and stays feasible", "[optimizer]") {
  const auto topo = ConnectionTopology::fully_connected();
  const ParamLayout layout = ParamLayout::create(2, 4, 2, topo);
  RVec gammas(2);
  gammas << 0.8, 1.2;
  const SumMseObjective obj(0.5, gammas, 2, 2, db_to_linear(20.0), layout);
  const RVec x0 = pack(random_params(2, 4, 2, topo, 263, ParamDraw::kInterior), layout);

  OptimizerSettings settings;
  settings.max_iter = 40;
  const OptimizeResult res = optimize(obj.value_fn(), obj.gradient_fn(), layout, x0, settings);

  const double f0 = obj.value(x0);
  const double b0 = barrier_value(x0, layout);
  REQUIRE_THAT(res.lambda, Catch::Matchers::WithinRel(1e-6 * f0 / b0, 1e-12));
  REQUIRE(layout.interior(res.x));
  REQUIRE(res.trace.back().loss <= res.trace.front().loss);
  REQUIRE(res.trace.back().objective < f0);
  for (std::size_t i = 1; i < res.trace.size(); ++i) {
    REQUIRE(res.trace[i].loss <= res.trace[i - 1].loss);
    REQUIRE(std::isfinite(res.trace[i].barrier));
  }

  const OptimizeResult res2 = optimize(obj.value_fn(), obj.gradient_fn(), layout, x0, settings);
  REQUIRE((res.x - res2.x).cwiseAbs().maxCoeff() == 0.0);
  REQUIRE(res.trace.size() == res2.trace.size());
}

TEST_CASE("frozen coordinates never move", "[optimizer]") {
  const auto topo = ConnectionTopology::fully_connected();
  const ParamLayout layout = ParamLayout::create(2, 4, 2, topo);
  RVec gammas(2);
  gammas << 0.8, 1.2;
  const SumMseObjective obj(0.5, gammas, 2, 2, db_to_linear(20.0), layout);
  const RVec x0 = pack(random_params(2, 4, 2, topo, 269, ParamDraw::kInterior), layout);

  OptimizerSettings settings;
  settings.max_iter = 15;
  for (int b = 0; b < 2; ++b)
    for (int l = 0; l < 4; ++l) settings.frozen.push_back(layout.rho_index(b, l));
  const OptimizeResult res = optimize(obj.value_fn(), obj.gradient_fn(), layout, x0, settings);

  for (const Eigen::Index i : settings.frozen) REQUIRE(res.x(i) == x0(i));
  bool any_moved = false;
  for (Eigen::Index i = 0; i < x0.size(); ++i)
    if (res.x(i) != x0(i)) any_moved = true;
  REQUIRE(any_moved);
}
