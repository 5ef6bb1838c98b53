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

// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero if any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "mfsim/mfsim.hpp"
#include "oracles.hpp"

using namespace mfsim;
namespace fs = std::filesystem;

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kExactFidelity = 1.0 - 1e-9;
constexpr double kCnotFidelity = 1.0 - 1e-8;
constexpr double kSigmas = 3.0;

struct Verdict {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) pass = false;
    if (!detail.empty()) detail += "; ";
    detail += (ok ? "" : "[x] ") + what;
  }
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

HamiltonianSpec chain3() {
  using A = PauliAxis;
  return HamiltonianSpec{3,
                         {PairTerm{{0, 1}, {A::X, A::X}, 1.0}, PairTerm{{1, 2}, {A::X, A::X}, 1.0},
                          PairTerm{{0, 1}, {A::Z, A::Z}, 0.7}, PairTerm{{1, 2}, {A::Z, A::Z}, 0.7}}};
}

// Open chain of m+1 qubits, bonds alternate XX and ZZ.
HamiltonianSpec chain_of_bonds(std::size_t m) {
  HamiltonianSpec h{m + 1, {}};
  for (std::size_t b = 0; b < m; ++b) {
    const PauliAxis a = b % 2 ? PauliAxis::Z : PauliAxis::X;
    h.terms.push_back(PairTerm{{b, b + 1}, {a, a}, 1.0});
  }
  return h;
}

// Least-squares slope of log y against log x.
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += std::log(x[i]);
    my += std::log(y[i]);
  }
  mx /= static_cast<double>(x.size());
  my /= static_cast<double>(x.size());
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (std::log(x[i]) - mx) * (std::log(y[i]) - my);
    sxx += (std::log(x[i]) - mx) * (std::log(x[i]) - mx);
  }
  return sxy / sxx;
}

// Residual sum of squares of the best fit y = c f(x).
double one_parameter_ssr(const std::vector<double>& f, const std::vector<double>& y) {
  double fy = 0, ff = 0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    fy += f[i] * y[i];
    ff += f[i] * f[i];
  }
  const double c = fy / ff;
  double ssr = 0;
  for (std::size_t i = 0; i < f.size(); ++i) ssr += (y[i] - c * f[i]) * (y[i] - c * f[i]);
  return ssr;
}

Verdict outcome_law() {
  Verdict v;
  const auto start = std::chrono::steady_clock::now();
  constexpr std::size_t kSamples = 100000;
  std::uint64_t seed = 1001;
  for (double eps : {0.1, 0.2, 0.5}) {
    const auto probe = probe_rounds(eps, kSamples, seed++);
    const double same = 0.5 * ((1 - eps) * (1 - eps) + eps * eps);
    const double diff = eps * (1 - eps);
    const double expected[4] = {same, same, diff, diff};
    double worst = 0.0;
    for (std::size_t i = 0; i < 4; ++i) {
      const double se = std::sqrt(expected[i] * (1 - expected[i]) / kSamples);
      worst = std::max(worst, std::abs(probe.frequency(i) - expected[i]) / se);
    }
    v.require(worst <= kSigmas, "eps=" + fmt("%.1f", eps) + " max |z|=" + fmt("%.2f", worst));
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  v.require(secs < 10.0, "runtime " + fmt("%.2f", secs) + " s");
  return v;
}

Verdict exact_rotation() {
  Verdict v;
  constexpr std::size_t kCalls = 10000;
  Rng rng(2002);
  const auto layout = RegisterLayout::cavities(2, false);
  const auto xx = PauliString::from_str("XX");
  double worst = 1.0;
  std::size_t rounds = 0;
  for (std::size_t i = 0; i < kCalls; ++i) {
    const double t = -kPi / 2 + kPi * rng.uniform();
    const VectorX psi = oracle::random_state(2, rng);
    StateVector st = embed_data(layout, psi);
    const auto res = realize_v(st, {0, 1}, t, EpsilonPolicy{}, ErrorFrame(2), rng);
    apply_frame_correction(st, res.frame);
    rounds += res.rounds.size();
    worst = std::min(worst, oracle::fidelity(oracle::pauli_rotation(xx, t) * psi, data_amplitudes(st)));
  }
  const double mean_rounds = static_cast<double>(rounds) / kCalls;
  v.require(worst >= kExactFidelity, "min fidelity " + fmt("%.15f", worst));
  v.require(mean_rounds <= 4.0, "mean rounds " + fmt("%.3f", mean_rounds));
  return v;
}

Verdict conjugated_rotations() {
  Verdict v;
  constexpr std::size_t kRunsPerPair = 200;
  constexpr std::size_t n = 3;
  Rng rng(3003);
  const auto layout = RegisterLayout::cavities(n, false);
  const PauliAxis axes[3] = {PauliAxis::X, PauliAxis::Y, PauliAxis::Z};
  double worst = 1.0;
  std::size_t with_frame = 0;
  for (auto k : axes)
    for (auto l : axes)
      for (std::size_t run = 0; run < kRunsPerPair; ++run) {
        const std::size_t q0 = rng.next_u64() % n;
        const std::size_t q1 = (q0 + 1 + rng.next_u64() % (n - 1)) % n;
        const double t = -kPi / 2 + kPi * rng.uniform();
        const PauliString gen = PauliString::two_site(n, q0, k, q1, l);
        ErrorFrame frame(n);
        if (run % 2) {
          PauliString f(n);
          do {
            std::vector<PauliAxis> ax(n);
            for (auto& a : ax) a = static_cast<PauliAxis>(rng.next_u64() % 4);
            f = PauliString(ax, 0);
          } while (commutes(f, gen));
          frame = ErrorFrame(f);
          ++with_frame;
        }
        const VectorX psi = oracle::random_state(n, rng);
        StateVector st = embed_data(layout, psi);
        apply_pauli(st, frame.byproduct());  // physical = frame * ideal
        const auto res = realize_v_kl(st, {q0, q1}, k, l, t, EpsilonPolicy{}, frame, rng);
        apply_frame_correction(st, res.frame);
        worst = std::min(worst, oracle::fidelity(oracle::pauli_rotation(gen, t) * psi, data_amplitudes(st)));
      }
  v.require(worst >= kExactFidelity, "9 axis pairs, " + std::to_string(with_frame) +
                                         " runs with anticommuting frame, min fidelity " + fmt("%.15f", worst));
  return v;
}

Verdict trotter_convergence() {
  Verdict v;
  const auto h = chain3();
  constexpr double t = 0.5;
  const MatrixX exact = exact_evolution(h, t);
  const double e16 = operator_norm(plan_unitary(compile(h, t, 16)) - exact);
  const double e32 = operator_norm(plan_unitary(compile(h, t, 32)) - exact);
  const double ratio = e16 / e32;
  v.require(ratio >= 1.5 && ratio <= 2.5, "error ratio n=16/n=32 " + fmt("%.4f", ratio));

  for (std::size_t n : {16, 32}) {
    ProtocolConfig cfg;
    cfg.hamiltonian = h;
    cfg.t = t;
    cfg.n_steps = n;
    cfg.trajectories = 200;
    cfg.master_seed = 4004;
    cfg.initial_state.kind = InitialState::Kind::Random;
    cfg.initial_state.seed = 7;
    const auto rep = run_ensemble(cfg);
    const double mean = rep.fidelity_vs_oracle.mean();
    const double tol = std::max(kSigmas * rep.fidelity_vs_oracle.std_error(), 1e-9);
    const bool ok = rep.failed == 0 && std::abs(mean - rep.plan_fidelity_vs_oracle) <= tol;
    v.require(ok, "n=" + std::to_string(n) + " mean fidelity " + fmt("%.12f", mean) + " vs plan " +
                      fmt("%.12f", rep.plan_fidelity_vs_oracle));
  }
  return v;
}

Verdict scaling_trends() {
  Verdict v;
  constexpr std::size_t kStepsPerBond = 2;  // n = 2 m
  constexpr double t = 1.0;
  constexpr double kConfidence = 0.99;
  const std::vector<std::size_t> ms{2, 4, 8};
  std::vector<double> x, simulated, law, depth;
  bool layers_ok = true, sim_matches_law = true;
  for (auto m : ms) {
    const auto h = chain_of_bonds(m);
    const std::size_t n = kStepsPerBond * m;
    const auto parallel = schedule_parallel(compile(h, t, n), InteractionGraph::from_hamiltonian(h));
    const auto budget = round_budget(parallel, EpsilonPolicy{}, kConfidence);
    layers_ok &= budget.layers_per_sweep == 2;

    ProtocolConfig cfg;
    cfg.hamiltonian = h;
    cfg.t = t;
    cfg.n_steps = n;
    cfg.trajectories = 40;
    cfg.master_seed = 5005 + m;
    cfg.schedule = ScheduleMode::Serial;
    const auto rep = run_ensemble(cfg);
    const double mean = rep.rounds_total.mean();
    sim_matches_law &= rep.failed == 0 && std::abs(mean - budget.serial_rounds) <= 4.0 * rep.rounds_total.std_error();

    x.push_back(static_cast<double>(m));
    simulated.push_back(mean);
    law.push_back(budget.serial_rounds);
    depth.push_back(static_cast<double>(budget.parallel_depth));
  }
  const double slope_sim = loglog_slope(x, simulated);
  const double slope_law = loglog_slope(x, law);
  v.require(std::abs(slope_sim - 2.0) <= 0.3, "simulated serial-round slope " + fmt("%.3f", slope_sim));
  v.require(std::abs(slope_law - 2.0) <= 0.3, "exact-law serial-round slope " + fmt("%.3f", slope_law));
  v.require(sim_matches_law, "simulated rounds agree with exact law within 4 SE");
  v.require(layers_ok, "2 layers per sweep for every m");

  std::vector<double> mlogm, msq;
  for (double m : x) {
    mlogm.push_back(m * std::log(m));
    msq.push_back(m * m);
  }
  const double ssr_log = one_parameter_ssr(mlogm, depth);
  const double ssr_sq = one_parameter_ssr(msq, depth);
  std::string depths;
  for (double d : depth) depths += (depths.empty() ? "" : ",") + std::to_string(static_cast<long>(d));
  v.require(ssr_log < ssr_sq, "parallel depth [" + depths + "] SSR m log m " + fmt("%.4g", ssr_log) + " < m^2 " +
                                  fmt("%.4g", ssr_sq));
  return v;
}

ProtocolConfig five_rotation_schedule() {
  using A = PauliAxis;
  ProtocolConfig cfg;
  cfg.hamiltonian = HamiltonianSpec{4,
                                    {PairTerm{{0, 1}, {A::X, A::X}, 0.9}, PairTerm{{0, 1}, {A::Y, A::Y}, 0.4},
                                     PairTerm{{0, 1}, {A::Z, A::Z}, -0.6}, PairTerm{{2, 3}, {A::X, A::X}, 0.5},
                                     PairTerm{{2, 3}, {A::Z, A::Z}, 1.1}}};
  cfg.t = 0.8;
  cfg.n_steps = 1;
  cfg.schedule = ScheduleMode::Serial;
  cfg.initial_state.kind = InitialState::Kind::Random;
  cfg.initial_state.seed = 11;
  return cfg;
}

Verdict loss_tolerance() {
  Verdict v;
  for (double p : {0.3, 0.6, 0.9}) {
    auto cfg = five_rotation_schedule();
    cfg.loss = LossConfig{p, PhotonEncoding::Polarization, true};
    cfg.trajectories = p < 0.85 ? 100 : 30;
    cfg.master_seed = 6006 + static_cast<std::uint64_t>(p * 10);
    const auto rep = run_ensemble(cfg);
    const double q = (1 - p) * (1 - p);
    const double expected = 1.0 / q;
    const auto& a = rep.attempts_per_detection;
    const double sigma = std::sqrt((1 - q) / (q * q) / static_cast<double>(a.count));
    const double completed = static_cast<double>(rep.fidelity_vs_oracle.count);
    v.require(completed > 0 && rep.fidelity_vs_oracle.min >= kExactFidelity,
              "p=" + fmt("%.1f", p) + " " + std::to_string(rep.fidelity_vs_oracle.count) + " completed, " +
                  std::to_string(rep.failed) + " failed, min fidelity " + fmt("%.12f", rep.fidelity_vs_oracle.min));
    v.require(std::abs(a.mean() - expected) <= kSigmas * sigma,
              "p=" + fmt("%.1f", p) + " attempts/detection " + fmt("%.3f", a.mean()) + " vs " + fmt("%.3f", expected) +
                  " (sigma " + fmt("%.3f", sigma) + ")");
  }
  auto control = five_rotation_schedule();
  control.loss = LossConfig{0.3, PhotonEncoding::Occupation, false};
  control.trajectories = 200;
  control.master_seed = 6666;
  const auto rep = run_ensemble(control);
  v.require(rep.fidelity_vs_oracle.mean() < 0.99 && rep.outcomes.silent_losses > 0,
            "occupation control mean fidelity " + fmt("%.4f", rep.fidelity_vs_oracle.mean()) + ", " +
                std::to_string(rep.outcomes.silent_losses) + " silent losses");
  return v;
}

Verdict cnot_construction() {
  Verdict v;
  Rng rng(7007);
  const auto clean = cnot_demo(EpsilonPolicy{}, LossConfig{}, rng);
  const auto lossy = cnot_demo(EpsilonPolicy{}, LossConfig{0.5, PhotonEncoding::Polarization, true}, rng);
  v.require(clean.min_fidelity >= kCnotFidelity, "noiseless min fidelity " + fmt("%.12f", clean.min_fidelity));
  v.require(lossy.min_fidelity >= kCnotFidelity, "p_loss=0.5 min fidelity " + fmt("%.12f", lossy.min_fidelity) + " with " +
                                                     std::to_string(lossy.loss_retries) + " loss retries");
  return v;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Verdict reproducibility() {
  Verdict v;
  auto cfg = five_rotation_schedule();
  cfg.loss = LossConfig{0.3, PhotonEncoding::Polarization, true};
  cfg.trajectories = 24;
  cfg.master_seed = 8008;
  cfg.audit_rounds = true;
  const fs::path root = fs::temp_directory_path() / "mfsim_acceptance_repro";
  fs::remove_all(root);
  std::vector<fs::path> dirs;
  for (std::size_t threads : {1, 1, 4}) {
    cfg.threads = threads;
    const fs::path dir = root / std::to_string(dirs.size());
    emit_report(run_ensemble(cfg), ReportFormat::Json, dir, true);
    dirs.push_back(dir);
  }
  for (const char* file : {"aggregate.json", "trajectories.jsonl"}) {
    const auto ref = slurp(dirs[0] / file);
    v.require(!ref.empty() && ref == slurp(dirs[1] / file), std::string(file) + " identical across runs");
    v.require(ref == slurp(dirs[2] / file), std::string(file) + " identical with 4 threads");
  }
  fs::remove_all(root);
  return v;
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Verdict()>>> criteria{
      {"outcome law", outcome_law},
      {"exact rotation modulo frame", exact_rotation},
      {"conjugated rotations", conjugated_rotations},
      {"trotter convergence", trotter_convergence},
      {"scaling trends", scaling_trends},
      {"loss tolerance", loss_tolerance},
      {"cnot construction", cnot_construction},
      {"reproducibility", reproducibility},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v.require(false, std::string("exception: ") + e.what());
    }
    std::printf("%s criterion %zu (%s): %s\n", v.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, v.detail.c_str());
    std::fflush(stdout);
    failures += v.pass ? 0 : 1;
  }
  return failures == 0 ? 0 : 1;
}
