// Copyright 2026 The binverdict Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Command-line front end. Exit codes: 0 ok, 1 internal, 2 config/usage,
// 3 data, 4 transport.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "binverdict/error.h"
#include "binverdict/pipeline.h"

namespace {

using namespace binverdict;

struct GlobalFlags {
  std::string config_path;
  std::string mode;
  std::optional<uint64_t> seed;
  std::optional<int> workers;
  std::string report_dir;
  std::string kb_path;
};

// defaults < config file < environment (URLs only) < flags
PipelineConfig ResolveConfig(const GlobalFlags& flags) {
  PipelineConfig config;
  if (!flags.config_path.empty()) {
    config = LoadPipelineConfig(flags.config_path);
  }
  ApplyEnvironment(config);
  if (!flags.mode.empty()) {
    auto mode = ParsePipelineMode(flags.mode);
    if (!mode) {
      throw Error(ErrorKind::kConfig, "--mode must be full|knn_only|zero_shot");
    }
    config.mode = *mode;
  }
  if (flags.seed) config.seed = *flags.seed;
  if (flags.workers) config.workers = *flags.workers;
  if (!flags.report_dir.empty()) config.report_dir = flags.report_dir;
  if (!flags.kb_path.empty()) config.kb_path = flags.kb_path;
  return config;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"binverdict: evidence-grounded function triage with a reject option"};
  app.require_subcommand(1);

  GlobalFlags flags;
  app.add_option("--config", flags.config_path, "JSON pipeline config")
      ->check(CLI::ExistingFile);
  app.add_option("--mode", flags.mode, "full | knn_only | zero_shot");
  app.add_option("--seed", flags.seed, "seed for mock and synthetic backends");
  app.add_option("--workers", flags.workers, "binaries processed concurrently");
  app.add_option("--report-dir", flags.report_dir, "output directory for reports");
  app.add_option("--kb", flags.kb_path, "knowledge base index path");

  std::string input;
  std::string grid_path;
  std::string objective = "min-error";
  double rejection_cap = 1.0;
  std::string out_path;
  SyntheticCorpusConfig synthetic;
  std::string out_dir;

  auto* build = app.add_subcommand("build-kb", "build the knowledge base index");
  build->add_option("corpus", input, "labelled JSONL corpus")->required();

  auto* classify = app.add_subcommand("classify", "classify functions");
  classify->add_option("input", input, "JSONL function records")->required();

  auto* evaluate = app.add_subcommand("evaluate", "classify a labelled set and report metrics");
  evaluate->add_option("input", input, "labelled JSONL records")->required();

  auto* calibrate = app.add_subcommand("calibrate", "grid-search thresholds on a validation set");
  calibrate->add_option("input", input, "labelled validation JSONL")->required();
  calibrate->add_option("--grid", grid_path, "JSON sweep grid (default: full sweep)");
  calibrate->add_option("--objective", objective, "min-error | max-f1")
      ->check(CLI::IsMember({"min-error", "max-f1"}));
  calibrate->add_option("--rejection-cap", rejection_cap,
                        "max rejection rate for min-error");

  auto* simulate = app.add_subcommand("simulate", "Monte-Carlo ensemble scenarios");
  simulate->add_option("scenarios", input, "JSON scenario file")->required();

  auto* export_cmd = app.add_subcommand("export-embeddings", "dump embeddings as CSV");
  export_cmd->add_option("corpus", input, "JSONL records")->required();
  export_cmd->add_option("--out", out_path, "CSV path (default: <report-dir>/embeddings.csv)");

  auto* synth = app.add_subcommand("gen-synthetic", "write a synthetic two-cluster corpus");
  synth->add_option("--out-dir", out_dir, "output directory")->required();
  synth->add_option("--kb-size", synthetic.kb_size);
  synth->add_option("--test-size", synthetic.test_size);
  synth->add_option("--validation-size", synthetic.validation_size);
  synth->add_option("--separation", synthetic.cluster_separation);
  synth->add_option("--ambiguous", synthetic.ambiguous_fraction);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    PipelineConfig config = ResolveConfig(flags);
    if (*build) {
      BuildReport r = CmdBuildKb(config, input);
      std::cout << "indexed " << r.indexed << " functions (" << r.malicious
                << " malicious, " << r.benign << " benign) -> "
                << config.kb_path << "\n";
    } else if (*classify) {
      ClassifyOutput out = CmdClassify(config, input);
      for (const auto& b : out.binaries) {
        std::cout << b.binary_id << "\t" << VerdictName(b.verdict) << "\n";
      }
    } else if (*evaluate) {
      ClassifyOutput out = CmdEvaluate(config, input);
      const Metrics m = ComputeMetrics(out.outcomes);
      std::cout << "functions " << m.total << "  accuracy " << m.accuracy
                << "  f1 " << m.f1 << "  rejection " << m.rejection_rate
                << "\n";
    } else if (*calibrate) {
      SweepGrid grid = grid_path.empty() ? SweepGrid{} : LoadSweepGrid(grid_path);
      CalibrationObjective obj;
      obj.kind = objective == "max-f1"
                     ? CalibrationObjective::Kind::kMaxF1
                     : CalibrationObjective::Kind::kMinErrorUnderRejectionCap;
      obj.rejection_cap = rejection_cap;
      auto rows = CmdCalibrate(config, input, grid, obj);
      const auto& best = rows.front();
      std::cout << rows.size() << " configurations; best k=" << best.upstream.k
                << " sigma=" << best.upstream.sigma_min
                << " N=" << best.upstream.n_agents
                << " T=" << best.upstream.temperature
                << " high=" << best.thresholds.delta_high
                << " low=" << best.thresholds.delta_low
                << " tau=" << best.thresholds.tau_stable << "\n";
    } else if (*simulate) {
      for (const auto& r : CmdSimulate(config, input)) {
        std::cout << "p=" << r.scenario.p_malicious
                  << " W=" << r.scenario.context_w << " mean_fes=" << r.mean_fes
                  << " mean_ecs=" << r.mean_ecs << " malicious=" << r.malicious
                  << " benign=" << r.benign << " uncertain=" << r.uncertain
                  << "\n";
      }
    } else if (*export_cmd) {
      std::cout << CmdExportEmbeddings(config, input, out_path) << " rows\n";
    } else if (*synth) {
      if (flags.seed) synthetic.seed = *flags.seed;
      CmdGenerateSynthetic(synthetic, out_dir);
    }
  } catch (const Error& e) {
    std::cerr << "error (" << ErrorKindName(e.kind()) << "): " << e.what()
              << "\n";
    return ExitCodeFor(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
