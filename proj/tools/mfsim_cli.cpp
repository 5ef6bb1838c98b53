// Copyright 2026 The mfsim Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Command-line front end.
//
// Exit codes: 0 success, 1 runtime failure, 2 config or usage error,
// 3 resource cap exceeded. MFSIM_OUT_DIR sets the simulate output directory
// when --out is absent.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <numbers>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "mfsim/mfsim.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;
constexpr int kExitResource = 3;

std::filesystem::path output_dir(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("MFSIM_OUT_DIR"); env && *env) return env;
  return "mfsim-out";
}

int cmd_simulate(const std::string& config, const std::string& out, const std::string& format) {
  const auto cfg = mfsim::load_config(config);
  const auto report = mfsim::run_ensemble(cfg);
  const auto fmt = format == "csv" ? mfsim::ReportFormat::Csv : mfsim::ReportFormat::Json;
  const auto files = mfsim::emit_report(report, fmt, output_dir(out), cfg.audit_rounds);
  nlohmann::json summary{{"trajectories", report.trajectories},
                         {"failed", report.failed},
                         {"mean_fidelity_vs_oracle",
                          report.fidelity_vs_oracle.count ? nlohmann::json(report.fidelity_vs_oracle.mean()) : nlohmann::json()},
                         {"mean_rounds_total", report.rounds_total.mean()},
                         {"files", nlohmann::json::array()}};
  for (const auto& f : files) summary["files"].push_back(f.string());
  std::cout << summary.dump(2) << '\n';
  return kExitOk;
}

int cmd_probe(double eps, std::size_t samples, std::uint64_t seed) {
  if (!(eps >= 0.0 && eps <= 1.0)) throw mfsim::UsageError("--eps must lie in [0, 1]");
  std::cout << mfsim::probe_to_json(mfsim::probe_rounds(eps, samples, seed)).dump(2) << '\n';
  return kExitOk;
}

int cmd_schedule(const std::string& config, double confidence) {
  const auto cfg = mfsim::load_config(config);
  auto plan = mfsim::compile(cfg.hamiltonian, cfg.t, cfg.n_steps);
  if (cfg.schedule == mfsim::ScheduleMode::Parallel && !plan.empty())
    plan = mfsim::schedule_parallel(plan, mfsim::InteractionGraph::from_hamiltonian(cfg.hamiltonian));
  nlohmann::json out{{"plan", plan}, {"budget", mfsim::round_budget(plan, cfg.policy, confidence)}};
  std::cout << out.dump(2) << '\n';
  return kExitOk;
}

int cmd_cnot(double p_loss, std::uint64_t seed) {
  mfsim::LossConfig loss;
  loss.p_loss = p_loss;
  loss.backup_enabled = p_loss > 0.0;
  mfsim::Rng rng(seed);
  const auto rep = mfsim::cnot_demo(mfsim::EpsilonPolicy{}, loss, rng);
  nlohmann::json out{{"angle", std::numbers::pi / 4},
                     {"p_loss", p_loss},
                     {"backup_enabled", loss.backup_enabled},
                     {"fidelities", rep.fidelities},
                     {"process_fidelity", rep.process_fidelity},
                     {"min_fidelity", rep.min_fidelity},
                     {"rounds_total", rep.rounds_total},
                     {"loss_retries", rep.loss_retries}};
  std::cout << out.dump(2) << '\n';
  return kExitOk;
}

int cmd_oracle(const std::string& config) {
  const auto cfg = mfsim::load_config(config);
  const auto ctx = mfsim::prepare_context(cfg);
  const mfsim::MatrixX exact = mfsim::exact_evolution(cfg.hamiltonian, cfg.t, cfg.qubit_cap);
  const mfsim::MatrixX planned = mfsim::plan_unitary(ctx.plan, cfg.qubit_cap);
  nlohmann::json out{{"n_qubits", cfg.hamiltonian.n_qubits},
                     {"t", cfg.t},
                     {"n_steps", cfg.n_steps},
                     {"rotations", ctx.plan.rotation_count()},
                     {"plan_fidelity_vs_oracle", mfsim::fidelity(ctx.plan_state, ctx.oracle_state)},
                     {"operator_norm_error", mfsim::operator_norm(planned - exact)}};
  std::cout << out.dump(2) << '\n';
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Measurement-and-feedback protocol simulator"};
  app.require_subcommand(1);

  std::string config, out, format = "json";
  double eps = 0.0, p_loss = 0.0, confidence = 0.99;
  std::size_t samples = 100000;
  std::uint64_t seed = 1;

  auto* simulate = app.add_subcommand("simulate", "Run an ensemble of trajectories and write reports");
  simulate->add_option("--config", config, "Protocol config (JSON)")->required();
  simulate->add_option("--out", out, "Output directory (default: $MFSIM_OUT_DIR or ./mfsim-out)");
  simulate->add_option("--format", format, "Aggregate format")->check(CLI::IsMember({"json", "csv"}));

  auto* probe = app.add_subcommand("probe-round", "Sample beam-splitter outcomes at fixed eps");
  probe->add_option("--eps", eps, "Emission parameter")->required();
  probe->add_option("--samples", samples, "Number of rounds")->required();
  probe->add_option("--seed", seed, "RNG seed");

  auto* schedule = app.add_subcommand("schedule", "Print the compiled plan and its round budget");
  schedule->add_option("--config", config, "Protocol config (JSON)")->required();
  schedule->add_option("--confidence", confidence, "Joint success confidence for the parallel depth");

  auto* cnot = app.add_subcommand("cnot-demo", "CNOT from a dressed exp(i pi/4 XX)");
  cnot->add_option("--p-loss", p_loss, "Photon loss probability (enables the backup protocol)");
  cnot->add_option("--seed", seed, "RNG seed");

  auto* oracle = app.add_subcommand("oracle", "Noiseless plan vs exact evolution");
  oracle->add_option("--config", config, "Protocol config (JSON)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*simulate) return cmd_simulate(config, out, format);
    if (*probe) return cmd_probe(eps, samples, seed);
    if (*schedule) return cmd_schedule(config, confidence);
    if (*cnot) return cmd_cnot(p_loss, seed);
    if (*oracle) return cmd_oracle(config);
  } catch (const mfsim::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const mfsim::UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const mfsim::ResourceError& e) {
    std::cerr << "resource error: " << e.what() << '\n';
    return kExitResource;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitRuntime;
}
