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

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "hris/channel.hpp"
#include "hris/common.hpp"
#include "hris/estimators.hpp"
#include "hris/hris_params.hpp"
#include "hris/objective.hpp"
#include "hris/optimizer.hpp"
#include "hris/pilots.hpp"
#include "hris/rng.hpp"

namespace hris {

enum class ExperimentKind { kValidate, kRhoSweep, kConvergence, kCurves };
enum class CurveAxis { kGammaDb, kPilotLength, kRfChains };
enum class BaselineKind { kOptimized, kRandomParams, kPartialConnection, kFixedRho };

inline std::string experiment_kind_name(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::kValidate: return "validate";
    case ExperimentKind::kRhoSweep: return "rho-sweep";
    case ExperimentKind::kConvergence: return "convergence";
    case ExperimentKind::kCurves: return "curves";
  }
  throw std::logic_error("experiment_kind_name: bad enum");
}

inline ExperimentKind experiment_kind_from(const std::string& name) {
  if (name == "validate") return ExperimentKind::kValidate;
  if (name == "rho-sweep") return ExperimentKind::kRhoSweep;
  if (name == "convergence") return ExperimentKind::kConvergence;
  if (name == "curves") return ExperimentKind::kCurves;
  throw std::invalid_argument("config: unknown kind '" + name + "'");
}

inline std::string curve_axis_name(CurveAxis axis) {
  switch (axis) {
    case CurveAxis::kGammaDb: return "gamma_db";
    case CurveAxis::kPilotLength: return "pilot_length";
    case CurveAxis::kRfChains: return "rf_chains";
  }
  throw std::logic_error("curve_axis_name: bad enum");
}

inline CurveAxis curve_axis_from(const std::string& name) {
  if (name == "gamma_db") return CurveAxis::kGammaDb;
  if (name == "pilot_length") return CurveAxis::kPilotLength;
  if (name == "rf_chains") return CurveAxis::kRfChains;
  throw std::invalid_argument("config: unknown axis '" + name + "'");
}

inline std::string baseline_name(BaselineKind kind) {
  switch (kind) {
    case BaselineKind::kOptimized: return "optimized";
    case BaselineKind::kRandomParams: return "random-params";
    case BaselineKind::kPartialConnection: return "partial-connection";
    case BaselineKind::kFixedRho: return "fixed-rho";
  }
  throw std::logic_error("baseline_name: bad enum");
}

inline BaselineKind baseline_from(const std::string& name) {
  if (name == "optimized") return BaselineKind::kOptimized;
  if (name == "random-params") return BaselineKind::kRandomParams;
  if (name == "partial-connection") return BaselineKind::kPartialConnection;
  if (name == "fixed-rho") return BaselineKind::kFixedRho;
  throw std::invalid_argument("config: unknown baseline '" + name + "'");
}

// Scenario description: array dimensions, link budget and user placement.
// beta_override / gammas_override bypass the distance law when set.
struct ScenarioSpec {
  int bs_antennas = 0;
  int elements = 0;
  int rf_chains = 0;
  int users = 0;
  int subframes = 0;
  int slots_per_subframe = 0;
  double gamma_db = 0.0;
  ConnectionTopology::Kind topology_kind = ConnectionTopology::Kind::kFullyConnected;
  PathlossModel pathloss;
  Eigen::Vector2d bs_m{0.0, 0.0};
  Eigen::Vector2d surface_m{0.0, 50.0};
  Eigen::Vector2d users_center_m{0.0, 45.0};
  double users_radius_m = 5.0;
  std::optional<double> beta_override;
  std::optional<RVec> gammas_override;

  ConnectionTopology topology(int rf) const {
    return topology_kind == ConnectionTopology::Kind::kFullyConnected
               ? ConnectionTopology::fully_connected()
               : ConnectionTopology::partially_connected(elements, rf);
  }

  Geometry geometry(std::uint64_t geo_seed) const {
    return scenario_geometry(users, users_radius_m, users_center_m, geo_seed, bs_m, surface_m);
  }

  SystemConfig config(std::uint64_t geo_seed) const {
    SystemConfig cfg;
    cfg.bs_antennas = bs_antennas;
    cfg.elements = elements;
    cfg.rf_chains = rf_chains;
    cfg.users = users;
    cfg.subframes = subframes;
    cfg.slots_per_subframe = slots_per_subframe;
    cfg.gamma_db = gamma_db;
    apply_pathloss(cfg, geometry(geo_seed), pathloss);
    if (beta_override) cfg.beta = *beta_override;
    if (gammas_override) cfg.gammas = *gammas_override;
    cfg.validate();
    return cfg;
  }
};

inline constexpr const char* kExperimentSchema = "hris-experiment-v1";
inline constexpr const char* kResultsSchema = "hris-results-v1";

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::kValidate;
  std::uint64_t seed = 1;
  int trials = 1000;
  bool redraw_users = false;
  ScenarioSpec scenario;
  std::vector<double> rho_grid;         // rho-sweep
  int inits = 5;                        // convergence
  CurveAxis axis = CurveAxis::kGammaDb; // curves
  std::vector<double> grid;             // curves
  std::vector<BaselineKind> baselines;  // curves
  double fixed_rho = 0.5;
  OptimizerSettings optimizer;

  void validate() const;
  static ExperimentConfig from_json(const nlohmann::json& j);
  static ExperimentConfig load(const std::string& path);
};

namespace detail {

inline void reject_unknown_keys(const nlohmann::json& j,
                                std::initializer_list<const char*> allowed, const char* where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const char* key : allowed) known = known || it.key() == key;
    if (!known)
      throw std::invalid_argument("config: unknown key '" + it.key() + "' in " + where);
  }
}

inline const nlohmann::json& member(const nlohmann::json& j, const char* key) {
  const auto it = j.find(key);
  if (it == j.end())
    throw std::invalid_argument(std::string("config: missing field '") + key + "'");
  return *it;
}

inline Eigen::Vector2d vec2_from(const nlohmann::json& j, const char* name) {
  if (!j.is_array() || j.size() != 2)
    throw std::invalid_argument(std::string("config: '") + name + "' must be a 2-element array");
  return {j[0].get<double>(), j[1].get<double>()};
}

inline bool strictly_ascending(const std::vector<double>& v) {
  for (std::size_t i = 1; i < v.size(); ++i)
    if (!(v[i] > v[i - 1])) return false;
  return true;
}

inline bool integer_valued(double v) { return std::floor(v) == v && std::isfinite(v); }

// Distinct deterministic seed per (seed, salt) pair, for per-trial user draws.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t state = seed ^ (salt * 0xd1342543de82ef95ULL);
  return splitmix64(state);
}

}  // namespace detail

inline ScenarioSpec scenario_from_json(const nlohmann::json& j) {
  detail::reject_unknown_keys(
      j,
      {"bs_antennas", "elements", "rf_chains", "users", "subframes", "slots_per_subframe",
       "gamma_db", "topology", "pathloss", "geometry", "beta_linear", "gammas_linear"},
      "scenario");
  ScenarioSpec s;
  s.bs_antennas = detail::member(j, "bs_antennas").get<int>();
  s.elements = detail::member(j, "elements").get<int>();
  s.rf_chains = detail::member(j, "rf_chains").get<int>();
  s.users = detail::member(j, "users").get<int>();
  s.subframes = detail::member(j, "subframes").get<int>();
  s.slots_per_subframe = detail::member(j, "slots_per_subframe").get<int>();
  s.gamma_db = detail::member(j, "gamma_db").get<double>();
  const std::string topo = j.value("topology", std::string("fully-connected"));
  if (topo == "fully-connected") {
    s.topology_kind = ConnectionTopology::Kind::kFullyConnected;
  } else if (topo == "partially-connected") {
    s.topology_kind = ConnectionTopology::Kind::kPartiallyConnected;
  } else {
    throw std::invalid_argument("config: unknown topology '" + topo + "'");
  }
  if (j.contains("pathloss")) {
    const auto& p = j.at("pathloss");
    detail::reject_unknown_keys(p, {"lambda0", "alpha_surface_bs", "alpha_user_surface", "d0_m"},
                                "pathloss");
    s.pathloss.lambda0 = p.value("lambda0", s.pathloss.lambda0);
    s.pathloss.alpha_surface_bs = p.value("alpha_surface_bs", s.pathloss.alpha_surface_bs);
    s.pathloss.alpha_user_surface = p.value("alpha_user_surface", s.pathloss.alpha_user_surface);
    s.pathloss.d0_m = p.value("d0_m", s.pathloss.d0_m);
  }
  if (j.contains("geometry")) {
    const auto& g = j.at("geometry");
    detail::reject_unknown_keys(g, {"bs_m", "surface_m", "users_center_m", "users_radius_m"},
                                "geometry");
    if (g.contains("bs_m")) s.bs_m = detail::vec2_from(g.at("bs_m"), "bs_m");
    if (g.contains("surface_m")) s.surface_m = detail::vec2_from(g.at("surface_m"), "surface_m");
    if (g.contains("users_center_m"))
      s.users_center_m = detail::vec2_from(g.at("users_center_m"), "users_center_m");
    s.users_radius_m = g.value("users_radius_m", s.users_radius_m);
  }
  if (j.contains("beta_linear")) s.beta_override = j.at("beta_linear").get<double>();
  if (j.contains("gammas_linear")) {
    const auto& arr = j.at("gammas_linear");
    if (!arr.is_array() || static_cast<int>(arr.size()) != s.users)
      throw std::invalid_argument("config: gammas_linear must list one value per user");
    RVec g(s.users);
    for (int k = 0; k < s.users; ++k) g(k) = arr[static_cast<std::size_t>(k)].get<double>();
    s.gammas_override = g;
  }
  return s;
}

inline OptimizerSettings optimizer_from_json(const nlohmann::json& j) {
  detail::reject_unknown_keys(
      j, {"eta", "lambda", "max_iter", "rel_tol", "flat_window", "backtracking"}, "optimizer");
  OptimizerSettings s;
  s.eta = j.value("eta", s.eta);
  s.lambda = j.value("lambda", s.lambda);  // < 0 keeps the automatic scaling
  s.max_iter = j.value("max_iter", s.max_iter);
  s.rel_tol = j.value("rel_tol", s.rel_tol);
  s.flat_window = j.value("flat_window", s.flat_window);
  s.backtracking = j.value("backtracking", s.backtracking);
  if (!(s.eta > 0.0)) throw std::invalid_argument("config: optimizer eta must be positive");
  if (s.max_iter < 1) throw std::invalid_argument("config: optimizer max_iter must be >= 1");
  if (!(s.rel_tol > 0.0)) throw std::invalid_argument("config: optimizer rel_tol must be positive");
  if (s.flat_window < 1)
    throw std::invalid_argument("config: optimizer flat_window must be >= 1");
  return s;
}

inline void ExperimentConfig::validate() const {
  require(trials >= 0, "config: trials must be >= 0");
  if (kind == ExperimentKind::kValidate)
    require(trials >= 1, "config: validate needs at least one trial");
  if (redraw_users && scenario.gammas_override)
    throw std::invalid_argument(
        "config: redraw_users_per_trial conflicts with fixed gammas_linear");
  if (kind == ExperimentKind::kRhoSweep) {
    require(!rho_grid.empty(), "config: rho-sweep needs a non-empty rho_grid");
    require(detail::strictly_ascending(rho_grid), "config: rho_grid must be strictly ascending");
    for (const double r : rho_grid)
      if (!(r > 0.0) || !(r < 1.0))
        throw std::invalid_argument("config: rho_grid values must lie strictly inside (0,1)");
  }
  if (kind == ExperimentKind::kConvergence)
    require(inits >= 2, "config: convergence needs at least two starts");
  if (kind == ExperimentKind::kCurves) {
    require(!grid.empty(), "config: curves needs a non-empty grid");
    require(detail::strictly_ascending(grid), "config: grid must be strictly ascending");
    require(!baselines.empty(), "config: curves needs at least one baseline");
    if (axis == CurveAxis::kPilotLength) {
      for (const double v : grid) {
        if (!detail::integer_valued(v) || v < scenario.slots_per_subframe ||
            std::llround(v) % scenario.slots_per_subframe != 0)
          throw std::invalid_argument(
              "config: pilot_length grid values must be positive multiples of "
              "slots_per_subframe");
      }
    }
    if (axis == CurveAxis::kRfChains) {
      for (const double v : grid)
        if (!detail::integer_valued(v) || v < 1.0 || v > scenario.elements)
          throw std::invalid_argument(
              "config: rf_chains grid values must be integers in [1, elements]");
    }
    for (const BaselineKind bk : baselines)
      if (bk == BaselineKind::kFixedRho && (!(fixed_rho > 0.0) || !(fixed_rho < 1.0)))
        throw std::invalid_argument("config: fixed_rho must lie strictly inside (0,1)");
  }
}

inline ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
  detail::reject_unknown_keys(
      j,
      {"schema", "kind", "seed", "trials", "redraw_users_per_trial", "scenario", "rho_grid",
       "inits", "axis", "grid", "baselines", "fixed_rho", "optimizer"},
      "top level");
  const std::string schema = detail::member(j, "schema").get<std::string>();
  if (schema != kExperimentSchema)
    throw std::invalid_argument("config: schema must be '" + std::string(kExperimentSchema) +
                                "', got '" + schema + "'");
  ExperimentConfig ec;
  ec.kind = experiment_kind_from(detail::member(j, "kind").get<std::string>());
  ec.seed = j.value("seed", std::uint64_t{1});
  ec.trials = j.value("trials", 1000);
  ec.redraw_users = j.value("redraw_users_per_trial", false);
  ec.scenario = scenario_from_json(detail::member(j, "scenario"));
  ec.rho_grid = j.value("rho_grid", std::vector<double>{});
  ec.inits = j.value("inits", 5);
  ec.axis = curve_axis_from(j.value("axis", std::string("gamma_db")));
  ec.grid = j.value("grid", std::vector<double>{});
  if (j.contains("baselines"))
    for (const auto& b : j.at("baselines"))
      ec.baselines.push_back(baseline_from(b.get<std::string>()));
  ec.fixed_rho = j.value("fixed_rho", 0.5);
  if (j.contains("optimizer")) ec.optimizer = optimizer_from_json(j.at("optimizer"));
  ec.validate();
  return ec;
}

inline ExperimentConfig ExperimentConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  nlohmann::json j;
  in >> j;
  return from_json(j);
}

// ---------------------------------------------------------------------------
// Result tables and writers
// ---------------------------------------------------------------------------

struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  void add_row(std::vector<std::string> cells) {
    require(cells.size() == columns.size(), "Table: cell count does not match header");
    rows.push_back(std::move(cells));
  }
};

struct RunResult {
  std::string sweep;
  Table table;
  std::vector<std::string> notes;
  int exit_code = 0;
};

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string format_int(long long v) { return std::to_string(v); }

inline std::string format_bool(bool v) { return v ? "true" : "false"; }

inline std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[24];
  std::strftime(buf, sizeof buf, "%Y%m%dT%H%M%SZ", &tm);
  return buf;
}

namespace detail {

inline std::string csv_cell(const std::string& cell) {
  if (cell.find_first_of(",\"\n") == std::string::npos) return cell;
  std::string quoted = "\"";
  for (const char c : cell) {
    if (c == '"') quoted += '"';
    quoted += c;
  }
  quoted += '"';
  return quoted;
}

}  // namespace detail

inline std::filesystem::path write_csv(const RunResult& result,
                                       const std::filesystem::path& out_dir,
                                       const std::string& timestamp) {
  std::filesystem::create_directories(out_dir);
  const auto path = out_dir / (result.sweep + "_" + timestamp + ".csv");
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open output file: " + path.string());
  f << "# " << kResultsSchema << " " << result.sweep << "\n";
  for (std::size_t i = 0; i < result.table.columns.size(); ++i)
    f << (i ? "," : "") << detail::csv_cell(result.table.columns[i]);
  f << "\n";
  for (const auto& row : result.table.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) f << (i ? "," : "") << detail::csv_cell(row[i]);
    f << "\n";
  }
  if (!f) throw std::runtime_error("write failed: " + path.string());
  return path;
}

inline std::filesystem::path write_json(const RunResult& result,
                                        const std::filesystem::path& out_dir,
                                        const std::string& timestamp) {
  std::filesystem::create_directories(out_dir);
  const auto path = out_dir / (result.sweep + "_" + timestamp + ".json");
  nlohmann::json j;
  j["schema"] = kResultsSchema;
  j["sweep"] = result.sweep;
  j["columns"] = result.table.columns;
  j["rows"] = result.table.rows;
  j["notes"] = result.notes;
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open output file: " + path.string());
  f << j.dump(2) << "\n";
  if (!f) throw std::runtime_error("write failed: " + path.string());
  return path;
}

// ---------------------------------------------------------------------------
// Monte Carlo engine
// ---------------------------------------------------------------------------

struct TrialStats {
  double g_sq = 0.0;
  double h_sq = 0.0;
  double num = 0.0;
  double den = 0.0;
};

struct McSummary {
  double mse_g = 0.0;
  double mse_g_se = 0.0;
  double mse_h = 0.0;
  double mse_h_se = 0.0;
  double nmse = 0.0;
  double nmse_se = 0.0;
  int trials = 0;
};

namespace detail {

template <typename Fn>
inline void parallel_for(int n, int threads, Fn&& body) {
  const int workers = std::min(threads, n);
  if (workers <= 1) {
    for (int i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int i; (i = next.fetch_add(1)) < n;) body(i);
  };
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (int t = 0; t < workers; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
}

}  // namespace detail

inline TrialStats run_single_trial(const SystemConfig& cfg, const HrisParams& params,
                                   const CMat& pilots, const CMat& a_rc, std::uint64_t seed,
                                   std::uint64_t trial) {
  const ChannelRealization ch = sample_channels(cfg, seed, trial);
  const SoundingObservation obs = simulate_uplink(ch, params, pilots, cfg, seed, trial);
  const ProjectedObservation proj = project_pilots(obs, pilots);
  const GEstimate gest =
      lmmse_G(proj.y_rc, a_rc, cfg.gammas, cfg.slots_per_subframe, cfg.gamma_linear());
  const EffectiveNoiseCov cov = noise_cov_D(params, gest.r_err, cfg.beta, cfg.slots_per_subframe,
                                            cfg.gamma_linear(), cfg.users);
  const HEstimate hest = lmmse_H(proj.y_bs, gest.g_hat, params, cov, cfg.beta);
  TrialStats out;
  out.g_sq = (ch.G - gest.g_hat).squaredNorm();
  out.h_sq = (ch.H - hest.h_hat).squaredNorm();
  const CascadedError terms = cascaded_error_terms(hest.h_hat, gest.g_hat, ch.H, ch.G);
  out.num = terms.num;
  out.den = terms.den;
  return out;
}

// Mean squared errors with standard errors of the mean; the cascaded NMSE is
// a ratio of averaged sums, so its spread uses the first-order delta method.
inline McSummary summarize_trials(const std::vector<TrialStats>& stats) {
  McSummary out;
  const int n = static_cast<int>(stats.size());
  out.trials = n;
  if (n == 0) return out;
  double sg = 0.0, sh = 0.0, sn = 0.0, sd = 0.0;
  for (const TrialStats& s : stats) {
    sg += s.g_sq;
    sh += s.h_sq;
    sn += s.num;
    sd += s.den;
  }
  if (!(sd > 0.0)) throw std::domain_error("summarize_trials: reference energy is zero");
  out.mse_g = sg / n;
  out.mse_h = sh / n;
  out.nmse = sn / sd;
  if (n < 2) return out;
  const double mn = sn / n;
  const double md = sd / n;
  double vg = 0.0, vh = 0.0, vn = 0.0, vd = 0.0, cnd = 0.0;
  for (const TrialStats& s : stats) {
    vg += (s.g_sq - out.mse_g) * (s.g_sq - out.mse_g);
    vh += (s.h_sq - out.mse_h) * (s.h_sq - out.mse_h);
    vn += (s.num - mn) * (s.num - mn);
    vd += (s.den - md) * (s.den - md);
    cnd += (s.num - mn) * (s.den - md);
  }
  const double bessel = 1.0 / (n - 1);
  vg *= bessel;
  vh *= bessel;
  vn *= bessel;
  vd *= bessel;
  cnd *= bessel;
  out.mse_g_se = std::sqrt(vg / n);
  out.mse_h_se = std::sqrt(vh / n);
  const double var_ratio =
      (vn / (md * md) + mn * mn * vd / (md * md * md * md) - 2.0 * mn * cnd / (md * md * md)) / n;
  out.nmse_se = std::sqrt(std::max(0.0, var_ratio));
  return out;
}

inline McSummary monte_carlo(const SystemConfig& cfg, const HrisParams& params, int trials,
                             std::uint64_t seed, int threads = 1,
                             const ScenarioSpec* redraw_scenario = nullptr) {
  if (trials <= 0) return {};
  const CMat pilots = generate_pilots(cfg.users, cfg.slots_per_subframe);
  const CMat a_rc = stack_reception(params);
  std::vector<TrialStats> stats(static_cast<std::size_t>(trials));
  detail::parallel_for(trials, threads, [&](int t) {
    const auto trial = static_cast<std::uint64_t>(t);
    if (redraw_scenario == nullptr) {
      stats[static_cast<std::size_t>(t)] = run_single_trial(cfg, params, pilots, a_rc, seed, trial);
      return;
    }
    SystemConfig cfg_t = cfg;
    apply_pathloss(cfg_t, redraw_scenario->geometry(detail::mix_seed(seed, trial + 1)),
                   redraw_scenario->pathloss);
    if (redraw_scenario->beta_override) cfg_t.beta = *redraw_scenario->beta_override;
    stats[static_cast<std::size_t>(t)] = run_single_trial(cfg_t, params, pilots, a_rc, seed, trial);
  });
  return summarize_trials(stats);
}

// ---------------------------------------------------------------------------
// Analytic per-point summary
// ---------------------------------------------------------------------------

struct AnalyticPoint {
  double eps_g = 0.0;
  double eps_h = 0.0;
  CMat r_err;
  CMat sigma;
  EffectiveNoiseCov cov;
};

inline AnalyticPoint analytic_point(const SystemConfig& cfg, const HrisParams& params) {
  AnalyticPoint out;
  const CMat a_rc = stack_reception(params);
  out.r_err = lmmse_G_error_cov(a_rc, cfg.gammas, cfg.slots_per_subframe, cfg.gamma_linear());
  out.eps_g = out.r_err.trace().real();
  out.sigma = cfg.gamma_sum() * CMat::Identity(cfg.elements, cfg.elements) - out.r_err;
  out.cov = noise_cov_D(params, out.r_err, cfg.beta, cfg.slots_per_subframe, cfg.gamma_linear(),
                        cfg.users);
  out.eps_h = analytic_mse_H(params, out.sigma, out.cov, cfg.beta, cfg.bs_antennas);
  return out;
}

class Stopwatch {
 public:
  double elapsed_ms() const {
    return std::chrono::duration<double, std::milli>(Clock::now() - start_).count();
  }

 private:
  using Clock = std::chrono::steady_clock;
  Clock::time_point start_ = Clock::now();
};

// ---------------------------------------------------------------------------
// Sweep helpers
// ---------------------------------------------------------------------------

inline std::vector<std::string> sweep_columns() {
  return {"sweep",
          "axis",
          "axis_value",
          "baseline",
          "topology",
          "pilot_length",
          "min_pilot_length",
          "feasible",
          "analytic_mse_g",
          "analytic_mse_h",
          "norm_mse_g",
          "norm_mse_h",
          "sum_norm_mse",
          "emp_norm_mse_g",
          "emp_norm_mse_g_se",
          "emp_norm_mse_h",
          "emp_norm_mse_h_se",
          "nmse_cascaded",
          "nmse_cascaded_se",
          "trials",
          "wall_time_ms"};
}

inline void append_sweep_row(Table& table, const std::string& sweep, const std::string& axis,
                             double axis_value, const std::string& baseline,
                             const std::string& topology, const SystemConfig& cfg,
                             const AnalyticPoint& an, double w_g, double w_h,
                             const std::optional<McSummary>& mc, double wall_ms) {
  const long min_tau = min_pilot_length(cfg.elements, cfg.users, cfg.rf_chains);
  const bool feasible = cfg.pilot_length() >= min_tau;
  std::vector<std::string> row{
      sweep,
      axis,
      format_double(axis_value),
      baseline,
      topology,
      format_int(cfg.pilot_length()),
      format_int(min_tau),
      format_bool(feasible),
      format_double(an.eps_g),
      format_double(an.eps_h),
      format_double(an.eps_g * w_g),
      format_double(an.eps_h * w_h),
      format_double(an.eps_g * w_g + an.eps_h * w_h),
  };
  if (mc && mc->trials > 0) {
    row.push_back(format_double(mc->mse_g * w_g));
    row.push_back(format_double(mc->mse_g_se * w_g));
    row.push_back(format_double(mc->mse_h * w_h));
    row.push_back(format_double(mc->mse_h_se * w_h));
    row.push_back(format_double(mc->nmse));
    row.push_back(format_double(mc->nmse_se));
    row.push_back(format_int(mc->trials));
  } else {
    for (int i = 0; i < 6; ++i) row.emplace_back();
    row.push_back(format_int(0));
  }
  row.push_back(format_double(wall_ms));
  table.add_row(std::move(row));
}

// Copies the overlapping block of an earlier (possibly smaller) parameter set
// onto a freshly drawn one, so a sweep can warm-start each grid point from
// the previous optimum while new sub-frames or chains keep random values.
inline HrisParams graft_params(const HrisParams& prev, const HrisParams& filler) {
  HrisParams out = filler;
  const int b0 = std::min(prev.subframes(), out.subframes());
  const int r0 = std::min(prev.rf_chains(), out.rf_chains());
  const int n = std::min(prev.elements(), out.elements());
  out.rho.topLeftCorner(b0, n) = prev.rho.topLeftCorner(b0, n);
  out.psi.topLeftCorner(b0, n) = prev.psi.topLeftCorner(b0, n);
  for (int b = 0; b < b0; ++b)
    for (int r = 0; r < r0; ++r)
      for (int l = 0; l < n; ++l)
        if (out.mask(r, l) && prev.mask(r, l))
          out.phi[static_cast<std::size_t>(b)](r, l) = prev.phi[static_cast<std::size_t>(b)](r, l);
  return out;
}

inline HrisParams slice_params(const HrisParams& master, int subframes, int rf_chains) {
  require(subframes >= 1 && subframes <= master.subframes() && rf_chains >= 1 &&
              rf_chains <= master.rf_chains(),
          "slice_params: slice exceeds master dimensions");
  HrisParams p;
  p.rho = master.rho.topRows(subframes);
  p.psi = master.psi.topRows(subframes);
  p.mask = master.mask.topRows(rf_chains);
  p.phi.reserve(static_cast<std::size_t>(subframes));
  for (int b = 0; b < subframes; ++b)
    p.phi.push_back(master.phi[static_cast<std::size_t>(b)].topRows(rf_chains));
  return p;
}

// Baseline starting points are nested across the grid: one master draw at the
// largest dimensions, every grid point takes a prefix slice. Adding
// sub-frames or chains then only appends information, which keeps the
// analytic errors monotone along pilot-length and chain-count sweeps.
inline HrisParams curve_start(BaselineKind bk, const SystemConfig& cfg,
                              const ConnectionTopology& topo, CurveAxis axis, int b_max,
                              int nr_max, std::uint64_t seed) {
  std::uint64_t index = 1;  // optimized shares the random-params draw
  if (bk == BaselineKind::kPartialConnection) index = 2;
  if (bk == BaselineKind::kFixedRho) index = 3;
  if (bk == BaselineKind::kPartialConnection && axis == CurveAxis::kRfChains) {
    // The one-chain-per-element mask is not nested across chain counts; draw
    // this point independently.
    return random_params(cfg.subframes, cfg.elements, cfg.rf_chains, topo, seed,
                         ParamDraw::kFeasible,
                         (index << 32) | static_cast<std::uint64_t>(cfg.rf_chains));
  }
  const ConnectionTopology master_topo =
      topo.kind == ConnectionTopology::Kind::kFullyConnected
          ? ConnectionTopology::fully_connected()
          : ConnectionTopology::partially_connected(cfg.elements, nr_max);
  const HrisParams master =
      random_params(b_max, cfg.elements, nr_max, master_topo, seed, ParamDraw::kFeasible, index);
  return slice_params(master, cfg.subframes, cfg.rf_chains);
}

// Warm-started descent along a sweep. Every accepted point is the best of
// (random start, previous optimum grafted onto the new dimensions, descent
// results from those starts), so the accepted objective never exceeds either
// candidate and optimized curves inherit the pointwise monotonicity of the
// analytic errors.
struct CurveChain {
  std::optional<HrisParams> prev;

  HrisParams advance(const SystemConfig& cfg, const ConnectionTopology& topo,
                     const HrisParams& start, const OptimizerSettings& settings, double w_g,
                     double w_h) {
    const ParamLayout layout =
        ParamLayout::create(cfg.subframes, cfg.elements, cfg.rf_chains, topo);
    SumMseObjective objective(cfg.beta, cfg.gammas, cfg.bs_antennas, cfg.slots_per_subframe,
                              cfg.gamma_linear(), layout, w_g, w_h);
    const auto value = objective.value_fn();
    const auto grad = objective.gradient_fn();

    HrisParams best = start;
    const double start_value = value(pack(start, layout));
    double best_value = start_value;
    auto consider = [&](const HrisParams& candidate) {
      const double v = value(pack(candidate, layout));
      if (v < best_value) {
        best_value = v;
        best = candidate;
      }
    };
    auto refine = [&](const HrisParams& from) {
      const OptimizeResult res = optimize(value, grad, layout, pack(from, layout), settings);
      consider(unpack(res.x, layout));
    };

    if (prev) {
      const HrisParams warm = graft_params(*prev, start);
      consider(warm);
      refine(warm);
    }
    if (!prev || !(best_value < start_value)) refine(start);
    prev = best;
    return best;
  }
};

// ---------------------------------------------------------------------------
// Runners
// ---------------------------------------------------------------------------

inline RunResult run_validate(const ExperimentConfig& ec, int threads) {
  RunResult out;
  out.sweep = "validate";
  out.table.columns = {"sweep",     "check", "observed", "expected",
                       "tolerance", "pass",  "trials",   "wall_time_ms"};
  const SystemConfig cfg = ec.scenario.config(ec.seed);
  if (cfg.elements > 16)
    out.notes.push_back("elements=" + std::to_string(cfg.elements) +
                        ": per-trial dense solves grow quickly; consider fewer trials");
  const ConnectionTopology topo = ec.scenario.topology(cfg.rf_chains);
  const HrisParams params = random_params(cfg.subframes, cfg.elements, cfg.rf_chains, topo,
                                          ec.seed, ParamDraw::kFeasible, 0);
  const ScenarioSpec* redraw = ec.redraw_users ? &ec.scenario : nullptr;

  auto add_check = [&](const std::string& name, double observed, double expected, double tol,
                       bool pass, double wall_ms) {
    out.table.add_row({out.sweep, name, format_double(observed), format_double(expected),
                       format_double(tol), format_bool(pass), format_int(ec.trials),
                       format_double(wall_ms)});
    if (!pass) out.exit_code = 2;
  };

  {
    Stopwatch watch;
    const AnalyticPoint an = analytic_point(cfg, params);
    const McSummary mc = monte_carlo(cfg, params, ec.trials, ec.seed, threads, redraw);
    const double ratio_g = mc.mse_g / an.eps_g;
    add_check("g-error-matches-prediction", ratio_g, 1.0, 0.03, std::abs(ratio_g - 1.0) < 0.03,
              watch.elapsed_ms());
    Stopwatch watch_h;
    const double ratio_h = mc.mse_h / an.eps_h;
    add_check("h-error-above-floor", ratio_h, 1.0, 0.03, mc.mse_h >= 0.97 * an.eps_h,
              watch_h.elapsed_ms());
  }
  {
    // A (near) fully reflective surface feeds almost nothing to the sensing
    // chains, so the estimator falls back to the prior: error approaches
    // elements * sum(gammas).
    Stopwatch watch;
    HrisParams opaque = params;
    opaque.rho.setConstant(1.0 - 1e-6);
    const McSummary mc = monte_carlo(cfg, opaque, ec.trials, ec.seed, threads, redraw);
    const double prior = cfg.elements * cfg.gamma_sum();
    const double ratio = mc.mse_g / prior;
    add_check("blind-sensing-returns-prior", ratio, 1.0, 0.03, std::abs(ratio - 1.0) < 0.03,
              watch.elapsed_ms());
  }
  return out;
}

inline RunResult run_rho_sweep(const ExperimentConfig& ec, int /*threads*/) {
  RunResult out;
  out.sweep = "rho-sweep";
  out.table.columns = sweep_columns();
  const SystemConfig cfg = ec.scenario.config(ec.seed);
  const ConnectionTopology topo = ec.scenario.topology(cfg.rf_chains);
  const ParamLayout layout =
      ParamLayout::create(cfg.subframes, cfg.elements, cfg.rf_chains, topo);
  const double w_g = 1.0 / (cfg.elements * cfg.gamma_sum());
  const double w_h = 1.0 / (cfg.beta * cfg.bs_antennas * cfg.elements);
  SumMseObjective objective(cfg.beta, cfg.gammas, cfg.bs_antennas, cfg.slots_per_subframe,
                            cfg.gamma_linear(), layout, w_g, w_h);
  const auto value = objective.value_fn();
  const auto grad = objective.gradient_fn();

  OptimizerSettings settings = ec.optimizer;
  settings.frozen.clear();
  for (Eigen::Index i = 0; i < layout.rho_count(); ++i) settings.frozen.push_back(i);

  // One shared phase draw: every grid point perturbs only the power split.
  const HrisParams master = random_params(cfg.subframes, cfg.elements, cfg.rf_chains, topo,
                                          ec.seed, ParamDraw::kFeasible, 0);
  for (const double rho_v : ec.rho_grid) {
    Stopwatch watch_r;
    HrisParams random_point = master;
    random_point.rho.setConstant(rho_v);
    append_sweep_row(out.table, out.sweep, "rho", rho_v, "random-phase", topo.name(), cfg,
                     analytic_point(cfg, random_point), w_g, w_h, std::nullopt,
                     watch_r.elapsed_ms());

    Stopwatch watch_o;
    const RVec x0 = pack(random_point, layout);
    const OptimizeResult res = optimize(value, grad, layout, x0, settings);
    HrisParams tuned = unpack(res.x, layout);
    if (!(value(res.x) <= value(x0))) {
      out.notes.push_back("rho=" + format_double(rho_v) +
                          ": descent did not improve on the start; kept the start");
      tuned = random_point;
    }
    append_sweep_row(out.table, out.sweep, "rho", rho_v, "optimized-phase", topo.name(), cfg,
                     analytic_point(cfg, tuned), w_g, w_h, std::nullopt, watch_o.elapsed_ms());
  }
  return out;
}

inline RunResult run_convergence(const ExperimentConfig& ec, int /*threads*/) {
  RunResult out;
  out.sweep = "convergence";
  out.table.columns = {"sweep",   "init",      "iteration", "loss",      "objective",
                       "barrier", "step_size", "lambda",    "converged", "wall_time_ms"};
  const SystemConfig cfg = ec.scenario.config(ec.seed);
  const ConnectionTopology topo = ec.scenario.topology(cfg.rf_chains);
  const ParamLayout layout =
      ParamLayout::create(cfg.subframes, cfg.elements, cfg.rf_chains, topo);
  const double w_g = 1.0 / (cfg.elements * cfg.gamma_sum());
  const double w_h = 1.0 / (cfg.beta * cfg.bs_antennas * cfg.elements);
  SumMseObjective objective(cfg.beta, cfg.gammas, cfg.bs_antennas, cfg.slots_per_subframe,
                            cfg.gamma_linear(), layout, w_g, w_h);
  const auto value = objective.value_fn();
  const auto grad = objective.gradient_fn();

  for (int init = 0; init < ec.inits; ++init) {
    Stopwatch watch;
    const HrisParams start =
        random_params(cfg.subframes, cfg.elements, cfg.rf_chains, topo, ec.seed,
                      ParamDraw::kInterior, static_cast<std::uint64_t>(init));
    const OptimizeResult res =
        optimize(value, grad, layout, pack(start, layout), ec.optimizer);
    const double wall_ms = watch.elapsed_ms();
    bool rose = false;
    for (std::size_t i = 1; i < res.trace.size(); ++i)
      rose = rose || res.trace[i].loss > res.trace[i - 1].loss;
    if (rose)
      out.notes.push_back("init " + std::to_string(init) +
                          ": loss increased along the trace (fixed step too large?)");
    if (!res.converged)
      out.notes.push_back("init " + std::to_string(init) +
                          ": flatness stop not reached within max_iter");
    for (const TracePoint& tp : res.trace)
      out.table.add_row({out.sweep, format_int(init), format_int(tp.iteration),
                         format_double(tp.loss), format_double(tp.objective),
                         format_double(tp.barrier), format_double(tp.step),
                         format_double(res.lambda), format_bool(res.converged),
                         format_double(wall_ms)});
  }
  return out;
}

inline RunResult run_curves(const ExperimentConfig& ec, int threads) {
  RunResult out;
  out.sweep = "curves";
  out.table.columns = sweep_columns();
  const SystemConfig base = ec.scenario.config(ec.seed);
  const double w_g = 1.0 / (base.elements * base.gamma_sum());
  const double w_h = 1.0 / (base.beta * base.bs_antennas * base.elements);
  const std::string axis = curve_axis_name(ec.axis);
  const ScenarioSpec* redraw = ec.redraw_users ? &ec.scenario : nullptr;

  int b_max = base.subframes;
  int nr_max = base.rf_chains;
  if (ec.axis == CurveAxis::kPilotLength)
    b_max = static_cast<int>(std::llround(ec.grid.back())) / base.slots_per_subframe;
  if (ec.axis == CurveAxis::kRfChains) nr_max = static_cast<int>(std::llround(ec.grid.back()));

  std::map<BaselineKind, CurveChain> chains;
  for (const double v : ec.grid) {
    SystemConfig cfg = base;
    if (ec.axis == CurveAxis::kGammaDb) cfg.gamma_db = v;
    if (ec.axis == CurveAxis::kPilotLength)
      cfg.subframes = static_cast<int>(std::llround(v)) / base.slots_per_subframe;
    if (ec.axis == CurveAxis::kRfChains) cfg.rf_chains = static_cast<int>(std::llround(v));
    cfg.validate();

    for (const BaselineKind bk : ec.baselines) {
      Stopwatch watch;
      const ConnectionTopology topo =
          bk == BaselineKind::kPartialConnection
              ? ConnectionTopology::partially_connected(cfg.elements, cfg.rf_chains)
              : ec.scenario.topology(cfg.rf_chains);
      const HrisParams start = curve_start(bk, cfg, topo, ec.axis, b_max, nr_max, ec.seed);
      HrisParams params = start;
      switch (bk) {
        case BaselineKind::kRandomParams:
          break;
        case BaselineKind::kFixedRho:
          params.rho.setConstant(ec.fixed_rho);
          break;
        case BaselineKind::kOptimized:
        case BaselineKind::kPartialConnection:
          params = chains[bk].advance(cfg, topo, start, ec.optimizer, w_g, w_h);
          break;
      }
      const AnalyticPoint an = analytic_point(cfg, params);
      std::optional<McSummary> mc;
      if (ec.trials > 0)
        mc = monte_carlo(cfg, params, ec.trials, ec.seed, threads, redraw);
      append_sweep_row(out.table, out.sweep, axis, v, baseline_name(bk), topo.name(), cfg, an,
                       w_g, w_h, mc, watch.elapsed_ms());
    }
  }
  return out;
}

inline RunResult run_experiment(const ExperimentConfig& ec, int threads = 0) {
  if (threads <= 0)
    threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  switch (ec.kind) {
    case ExperimentKind::kValidate: return run_validate(ec, threads);
    case ExperimentKind::kRhoSweep: return run_rho_sweep(ec, threads);
    case ExperimentKind::kConvergence: return run_convergence(ec, threads);
    case ExperimentKind::kCurves: return run_curves(ec, threads);
  }
  throw std::logic_error("run_experiment: bad enum");
}

}  // namespace hris
