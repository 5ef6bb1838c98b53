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

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "mfsim/harness.hpp"
#include "oracles.hpp"

using namespace mfsim;
namespace fs = std::filesystem;

namespace {

ProtocolConfig chain_config(std::size_t n_steps, std::size_t trajectories) {
  auto c = parse_config(nlohmann::json::parse(R"json({
    "hamiltonian": {"n_qubits": 3, "terms": [
      {"sites": [0, 1], "axes": "XX", "coeff": 1.0},
      {"sites": [1, 2], "axes": "XX", "coeff": 1.0},
      {"sites": [0, 1], "axes": "ZZ", "coeff": 0.7},
      {"sites": [1, 2], "axes": "ZZ", "coeff": 0.7}]},
    "t": 0.5,
    "initial_state": "random(3)",
    "master_seed": 77
  })json"));
  c.n_steps = n_steps;
  c.trajectories = trajectories;
  return c;
}

ProtocolConfig xx_config(double t, std::size_t trajectories) {
  ProtocolConfig c;
  c.hamiltonian = HamiltonianSpec{2, {PairTerm{{0, 1}, {PauliAxis::X, PauliAxis::X}, 1.0}}};
  c.t = t;
  c.trajectories = trajectories;
  c.initial_state.kind = InitialState::Kind::Random;
  c.initial_state.seed = 9;
  c.master_seed = 5;
  return c;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("mfsim_test_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// The 24 single-qubit Cliffords up to phase, generated by H and S.
std::vector<Matrix2> clifford_group() {
  const Matrix2 h = conjugation_unitary(PauliAxis::Z);
  const Matrix2 s = conjugation_unitary(PauliAxis::Y);
  std::vector<Matrix2> group{Matrix2::Identity()};
  auto known = [&](const Matrix2& m) {
    for (const auto& g : group)
      if (oracle::phase_distance(m, g) < 1e-9) return true;
    return false;
  };
  for (std::size_t i = 0; i < group.size(); ++i)
    for (const Matrix2& gen : {h, s}) {
      const Matrix2 next = gen * group[i];
      if (!known(next)) group.push_back(next);
    }
  return group;
}

double process_fidelity_of(const Matrix4& u) {
  double sum = 0.0;
  const auto inputs = cnot_probe_inputs();
  for (const auto& in : inputs) sum += fidelity(VectorX(cnot_matrix() * in), VectorX(u * in));
  return sum / static_cast<double>(inputs.size());
}

}  // namespace

TEST(Config, ParsesEveryField) {
  const auto j = nlohmann::json::parse(R"({
    "hamiltonian": {"n_qubits": 2, "terms": [{"sites": [0, 1], "axes": "YZ", "coeff": -0.5}]},
    "t": 0.25, "n_steps": 3,
    "policy": {"mode": "aim_doubling", "max_rounds": 10, "max_loss_retries": 7},
    "loss": {"p_loss": 0.2, "encoding": "polarization", "backup_enabled": true},
    "initial_state": {"amplitudes": [[1, 0], [0, 1], [0, 0], [0, 0]]},
    "trajectories": 4, "master_seed": 123, "schedule": "serial", "audit_rounds": true,
    "qubit_cap": 10, "threads": 2
  })");
  const auto c = parse_config(j);
  EXPECT_EQ(c.hamiltonian.terms[0].axes[0], PauliAxis::Y);
  EXPECT_EQ(c.n_steps, 3u);
  EXPECT_EQ(c.policy.mode, EpsilonMode::AimDoubling);
  EXPECT_EQ(c.policy.max_rounds, 10u);
  EXPECT_EQ(c.policy.max_loss_retries, 7u);
  EXPECT_TRUE(c.loss.backup_enabled);
  EXPECT_EQ(c.initial_state.kind, InitialState::Kind::Amplitudes);
  EXPECT_EQ(c.master_seed, 123u);
  EXPECT_EQ(c.schedule, ScheduleMode::Serial);
  EXPECT_TRUE(c.audit_rounds);
  EXPECT_EQ(c.register_size(), 6u);
  const VectorX psi = c.initial_state.build(2);
  EXPECT_NEAR(psi.norm(), 1.0, 1e-15);
  EXPECT_NEAR(std::abs(psi[1]), 1.0 / std::sqrt(2.0), 1e-15);
  // Serialized config parses back to the same serialization.
  EXPECT_EQ(config_to_json(parse_config(config_to_json(c))).dump(), config_to_json(c).dump());
}

TEST(Config, ErrorsAreConfigErrors) {
  const auto base = config_to_json(xx_config(0.3, 1));
  auto with = [&](const char* key, nlohmann::json v) {
    auto j = base;
    j[key] = std::move(v);
    return j;
  };
  auto without = [&](const char* key) {
    auto j = base;
    j.erase(key);
    return j;
  };
  EXPECT_THROW(parse_config(without("t")), ConfigError);
  EXPECT_THROW(parse_config(without("hamiltonian")), ConfigError);
  EXPECT_THROW(parse_config(with("t", "soon")), ConfigError);
  EXPECT_THROW(parse_config(with("n_steps", 0)), ConfigError);
  EXPECT_THROW(parse_config(with("schedule", "diagonal")), ConfigError);
  EXPECT_THROW(parse_config(with("initial_state", "all-ones")), ConfigError);
  EXPECT_THROW(parse_config(with("initial_state", "random(x)")), ConfigError);
  EXPECT_THROW(parse_config(with("policy", {{"mode", "fast"}})), ConfigError);
  EXPECT_THROW(parse_config(with("loss", {{"p_loss", 2.0}})), ConfigError);
  EXPECT_THROW(parse_config(with("loss", {{"encoding", "occupation"}, {"backup_enabled", true}})), ConfigError);
  EXPECT_THROW(parse_config(with("hamiltonian", {{"n_qubits", 2}, {"terms", {{{"sites", {0, 5}}, {"axes", "XX"}, {"coeff", 1}}}}})),
               ConfigError);
  EXPECT_THROW(parse_config(with("hamiltonian", {{"n_qubits", 2}, {"terms", {{{"sites", {0, 1}}, {"axes", "XQ"}, {"coeff", 1}}}}})),
               ConfigError);
  auto amps = with("initial_state", {{"amplitudes", {{1, 0}}}});
  EXPECT_THROW(prepare_context(parse_config(amps)), ConfigError);
  EXPECT_THROW(load_config("/nonexistent/config.json"), ConfigError);
}

TEST(Config, RegisterCapIsAResourceError) {
  auto c = xx_config(0.3, 1);
  c.hamiltonian.n_qubits = 6;
  c.loss.backup_enabled = true;
  EXPECT_THROW(prepare_context(c), ResourceError);
  c.qubit_cap = 14;
  EXPECT_NO_THROW(prepare_context(c));
}

TEST(InitialState, Presets) {
  InitialState s;
  VectorX zeros = s.build(3);
  EXPECT_EQ(zeros[0], Complex(1.0));
  s.kind = InitialState::Kind::AllPlus;
  EXPECT_NEAR((s.build(3) - VectorX::Constant(8, 1 / std::sqrt(8.0))).cwiseAbs().maxCoeff(), 0.0, 1e-15);
  s.kind = InitialState::Kind::Random;
  s.seed = 4;
  EXPECT_NEAR(s.build(3).norm(), 1.0, 1e-14);
  EXPECT_EQ(s.build(3), s.build(3));
  InitialState other = s;
  other.seed = 5;
  EXPECT_LT(std::abs(s.build(3).dot(other.build(3))), 0.99);
}

TEST(RunTrajectory, ZeroTimeIsTrivial) {
  const auto stats = run_trajectory(xx_config(0.0, 1), 0);
  EXPECT_FALSE(stats.failed);
  EXPECT_EQ(stats.rounds_total, 0u);
  EXPECT_NEAR(stats.fidelity_vs_oracle, 1.0, 1e-12);
}

TEST(RunTrajectory, SingleTermIsExactEveryTrajectory) {
  const auto report = run_ensemble(xx_config(0.4, 200));
  EXPECT_EQ(report.failed, 0u);
  EXPECT_GE(report.fidelity_vs_oracle.min, 1 - 1e-9);
  for (const auto& st : report.trajectory_stats) {
    EXPECT_GE(st.fidelity_vs_oracle, 1 - 1e-9);
    EXPECT_LE(st.fidelity_vs_oracle, 1.0);
  }
}

TEST(RunTrajectory, ChainStaysInsideTheTrotterEnvelope) {
  const auto cfg = chain_config(32, 20);
  const auto ctx = prepare_context(cfg);
  const double plan_fid = fidelity(ctx.plan_state, ctx.oracle_state);
  EXPECT_LT(plan_fid, 1.0 - 1e-6);  // a real Trotter error exists
  const auto report = run_ensemble(cfg);
  EXPECT_EQ(report.failed, 0u);
  EXPECT_GE(report.fidelity_vs_plan.min, 1 - 1e-9);
  EXPECT_NEAR(report.fidelity_vs_oracle.mean(), plan_fid, 1e-9);
}

TEST(RunTrajectory, SeedIsAPureFunctionOfIndex) {
  const auto cfg = chain_config(4, 1);
  const auto a = run_trajectory(cfg, 3);
  const auto b = run_trajectory(cfg, 3);
  EXPECT_EQ(a.seed, derive_seed(cfg.master_seed, 3));
  EXPECT_EQ(trajectory_to_json(a, false).dump(), trajectory_to_json(b, false).dump());
  EXPECT_NE(trajectory_to_json(a, false).dump(), trajectory_to_json(run_trajectory(cfg, 4), false).dump());
}

TEST(RunTrajectory, FailuresAreRetainedWithDiagnostics) {
  auto cfg = chain_config(4, 40);
  cfg.policy.max_rounds = 1;
  const auto report = run_ensemble(cfg);
  EXPECT_GT(report.failed, 0u);
  EXPECT_EQ(report.trajectory_stats.size(), 40u);
  for (const auto& st : report.trajectory_stats) {
    if (!st.failed) continue;
    EXPECT_NE(st.failure.find("rotation"), std::string::npos);
    EXPECT_TRUE(std::isnan(st.fidelity_vs_oracle));
    EXPECT_TRUE(trajectory_to_json(st, false)["fidelity_vs_oracle"].is_null());
  }
  EXPECT_EQ(report.fidelity_vs_oracle.count + report.failed, 40u);
}

TEST(RunEnsemble, EmptyEnsemble) {
  const auto report = run_ensemble(xx_config(0.3, 0));
  EXPECT_EQ(report.trajectories, 0u);
  EXPECT_TRUE(report.trajectory_stats.empty());
  const auto dir = scratch("empty");
  const auto files = emit_report(report, ReportFormat::Json, dir);
  const auto j = nlohmann::json::parse(slurp(dir / "aggregate.json"));
  EXPECT_EQ(j["schema"], "mfsim.aggregate/1");
  EXPECT_EQ(j["trajectories"], 0);
  EXPECT_TRUE(j["fidelity_vs_oracle"]["mean"].is_null());
  EXPECT_TRUE(j["per_site"].is_array());
  EXPECT_EQ(slurp(dir / "trajectories.jsonl"), "");
  emit_report(report, ReportFormat::Csv, dir);
  EXPECT_EQ(slurp(dir / "aggregate.csv"), "position,site_x,site_y,axes,angle,samples,mean_rounds,mean_loss_retries\n");
}

TEST(RunEnsemble, ProbeFrequenciesAtPointTwo) {
  const auto probe = probe_rounds(0.2, 100000, 31);
  EXPECT_TRUE(probe.within(3.0));
  EXPECT_DOUBLE_EQ(probe.expected[0], 0.34);
  EXPECT_DOUBLE_EQ(probe.expected[2], 0.16);
  std::size_t total = 0;
  for (auto c : probe.counts) total += c;
  EXPECT_EQ(total, 100000u);
}

TEST(RunEnsemble, OutcomeFrequenciesMatchTheRecordedEpsLaw) {
  const auto report = run_ensemble(chain_config(8, 100));
  const auto j = aggregate_to_json(report);
  for (const char* o : {"plus", "minus", "HH", "VV"}) {
    const double z = j["outcomes"][o]["z_score"].get<double>();
    EXPECT_LT(std::abs(z), 4.0) << o;
  }
}

TEST(RunEnsemble, SmallAnglesAverageAtMostFourRounds) {
  const auto report = run_ensemble(chain_config(16, 50));
  EXPECT_LE(report.rounds_per_rotation.mean(), 4.0);
  ASSERT_EQ(report.per_site.size(), 4u);
  for (const auto& site : report.per_site) EXPECT_EQ(site.rounds.count, 50u * 16u);
}

TEST(RunEnsemble, IndependentOfThreadCount) {
  auto one = chain_config(4, 12);
  one.threads = 1;
  auto many = one;
  many.threads = 4;
  const auto a = run_ensemble(one);
  const auto b = run_ensemble(many);
  EXPECT_EQ(aggregate_to_json(a).dump(), aggregate_to_json(b).dump());
  for (std::size_t i = 0; i < a.trajectory_stats.size(); ++i)
    EXPECT_EQ(trajectory_to_json(a.trajectory_stats[i], false).dump(),
              trajectory_to_json(b.trajectory_stats[i], false).dump());
}

TEST(EmitReport, JsonRoundTripsAndCsvHasOneRowPerSite) {
  auto cfg = chain_config(4, 6);
  cfg.audit_rounds = true;
  const auto report = run_ensemble(cfg);
  const auto dir = scratch("emit");
  const auto files = emit_report(report, ReportFormat::Json, dir, true);
  ASSERT_EQ(files.size(), 2u);
  EXPECT_EQ(nlohmann::json::parse(slurp(dir / "aggregate.json")), aggregate_to_json(report));

  std::ifstream lines(dir / "trajectories.jsonl");
  std::string line;
  std::size_t count = 0;
  while (std::getline(lines, line)) {
    const auto j = nlohmann::json::parse(line);
    EXPECT_EQ(j["index"], count);
    EXPECT_EQ(j["rounds"].size(), j["rounds_total"].get<std::size_t>());
    ++count;
  }
  EXPECT_EQ(count, 6u);

  emit_report(report, ReportFormat::Csv, dir);
  std::ifstream csv(dir / "aggregate.csv");
  std::vector<std::string> rows;
  while (std::getline(csv, line)) rows.push_back(line);
  ASSERT_EQ(rows.size(), 1 + report.per_site.size());
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const double mean = std::stod(rows[i].substr(rows[i].rfind(',', rows[i].rfind(',') - 1) + 1));
    EXPECT_NEAR(mean, report.per_site[i - 1].rounds.mean(), 1e-12);
  }
}

TEST(EmitReport, IoFailureNamesThePath) {
  const auto dir = scratch("blocked");
  fs::create_directories(dir);
  std::ofstream(dir / "file") << "x";
  try {
    emit_report(run_ensemble(xx_config(0.3, 1)), ReportFormat::Json, dir / "file" / "sub");
    FAIL() << "expected an I/O error";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find((dir / "file").string()), std::string::npos) << e.what();
  }
}

TEST(Cnot, DressingIsFoundByCliffordSearch) {
  const auto group = clifford_group();
  ASSERT_EQ(group.size(), 24u);
  const Matrix4 target = cnot_matrix();
  const Matrix4 xx = kron_pair(pauli_matrix(PauliAxis::X), pauli_matrix(PauliAxis::X));
  const double h = 1.0 / std::sqrt(2.0);
  const Matrix4 v = h * Matrix4::Identity() + Complex(0, h) * xx;
  std::size_t solutions = 0;
  bool shipped_found = false;
  const auto shipped = cnot_dressing();
  for (const auto& b1 : group)
    for (const auto& b2 : group) {
      const Matrix4 right = v * kron_pair(b1, b2);
      for (const auto& a1 : group)
        for (const auto& a2 : group) {
          if (oracle::phase_distance(kron_pair(a1, a2) * right, target) > 1e-9) continue;
          ++solutions;
          shipped_found |= oracle::phase_distance(a1, shipped.after_first) < 1e-9 &&
                           oracle::phase_distance(a2, shipped.after_second) < 1e-9 &&
                           oracle::phase_distance(b1, shipped.before_first) < 1e-9 &&
                           oracle::phase_distance(b2, shipped.before_second) < 1e-9;
        }
    }
  EXPECT_GT(solutions, 0u);
  EXPECT_TRUE(shipped_found);
  EXPECT_LE(oracle::phase_distance(dressed_rotation(std::numbers::pi / 4), target), 1e-12);
}

TEST(Cnot, ZeroAngleDressingIsNotCnot) {
  const Matrix4 product = dressed_rotation(0.0);
  const auto d = cnot_dressing();
  EXPECT_LE((product - kron_pair(d.after_first * d.before_first, d.after_second * d.before_second)).cwiseAbs().maxCoeff(),
            1e-15);
  EXPECT_LT(process_fidelity_of(product), 0.9);
  EXPECT_NEAR(process_fidelity_of(dressed_rotation(std::numbers::pi / 4)), 1.0, 1e-12);
  // The literal half-turn is local and also misses.
  EXPECT_LT(process_fidelity_of(dressed_rotation(std::numbers::pi / 2)), 0.9);
}

TEST(Cnot, NoiselessAndLossyDemo) {
  std::size_t clean_rounds = 0, lossy_rounds = 0;
  LossConfig lossy;
  lossy.p_loss = 0.5;
  lossy.backup_enabled = true;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng r1(seed), r2(seed);
    const auto clean = cnot_demo(EpsilonPolicy{}, LossConfig{}, r1);
    const auto noisy = cnot_demo(EpsilonPolicy{}, lossy, r2);
    EXPECT_GE(clean.process_fidelity, 1 - 1e-8);
    EXPECT_GE(noisy.process_fidelity, 1 - 1e-8);
    EXPECT_EQ(clean.fidelities.size(), 6u);
    EXPECT_GT(noisy.loss_retries, 0u);
    clean_rounds += clean.rounds_total;
    lossy_rounds += noisy.rounds_total;
  }
  EXPECT_GT(lossy_rounds, clean_rounds);
}
