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

#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "hris/experiment.hpp"

namespace {

struct CliOptions {
  std::string config_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  long long trials = -1;  // < 0: keep the config value
  bool json_mirror = false;
  int threads = 0;  // <= 0: one worker per hardware thread
};

int run(hris::ExperimentKind kind, const CliOptions& opt) {
  hris::ExperimentConfig ec = hris::ExperimentConfig::load(opt.config_path);
  if (ec.kind != kind)
    throw std::invalid_argument("config declares kind '" + hris::experiment_kind_name(ec.kind) +
                                "' but the subcommand is '" + hris::experiment_kind_name(kind) +
                                "'");
  ec.seed = opt.seed;
  if (opt.trials >= 0) ec.trials = static_cast<int>(opt.trials);
  ec.validate();

  const hris::RunResult result = hris::run_experiment(ec, opt.threads);
  const std::string stamp = hris::utc_timestamp();
  const auto csv_path = hris::write_csv(result, opt.out_dir, stamp);
  std::printf("wrote %s\n", csv_path.string().c_str());
  if (opt.json_mirror) {
    const auto json_path = hris::write_json(result, opt.out_dir, stamp);
    std::printf("wrote %s\n", json_path.string().c_str());
  }
  for (const auto& note : result.notes) std::printf("note: %s\n", note.c_str());
  if (kind == hris::ExperimentKind::kValidate) {
    for (const auto& row : result.table.rows)
      std::printf("%s %s: observed=%s expected=%s tolerance=%s\n",
                  row[5] == "true" ? "[PASS]" : "[FAIL]", row[1].c_str(), row[2].c_str(),
                  row[3].c_str(), row[4].c_str());
  }
  return result.exit_code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"channel estimation experiments for a hybrid reflecting/sensing surface"};
  app.require_subcommand(1);

  CliOptions opt;
  int rc = 0;
  const std::vector<std::pair<std::string, hris::ExperimentKind>> kinds = {
      {"validate", hris::ExperimentKind::kValidate},
      {"rho-sweep", hris::ExperimentKind::kRhoSweep},
      {"convergence", hris::ExperimentKind::kConvergence},
      {"curves", hris::ExperimentKind::kCurves},
  };
  for (const auto& [name, kind] : kinds) {
    CLI::App* sub = app.add_subcommand(name, name + " experiment");
    sub->add_option("--config", opt.config_path, "experiment config (JSON)")
        ->required()
        ->check(CLI::ExistingFile);
    sub->add_option("--out", opt.out_dir, "output directory for result files")->required();
    sub->add_option("--seed", opt.seed, "master seed for all random draws")->required();
    sub->add_option("--trials", opt.trials, "override the config trial count");
    sub->add_option("--threads", opt.threads, "worker threads (default: hardware)");
    sub->add_flag("--json", opt.json_mirror, "also write a JSON mirror of the CSV");
    sub->callback([&rc, &opt, kind = kind] { rc = run(kind, opt); });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return rc;
}
