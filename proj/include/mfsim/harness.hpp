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

#pragma once

// Trajectory execution, ensembles, the outcome probe, the CNOT
// demonstration, and report output.

#include <algorithm>
#include <array>
#include <atomic>
#include <chrono>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "mfsim/compiler.hpp"
#include "mfsim/emission.hpp"
#include "mfsim/errors.hpp"
#include "mfsim/feedback.hpp"
#include "mfsim/hamiltonian.hpp"
#include "mfsim/loss.hpp"
#include "mfsim/pauli.hpp"
#include "mfsim/rng.hpp"
#include "mfsim/statevec.hpp"

namespace mfsim {

/// Haar-random state on n qubits from normalized complex Gaussians.
inline VectorX haar_random_state(std::size_t n, Rng& rng) {
  VectorX v(Eigen::Index{1} << n);
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = Complex(rng.normal(), rng.normal());
  return v / v.norm();
}

struct InitialState {
  enum class Kind { AllZeros, AllPlus, Random, Amplitudes };
  Kind kind = Kind::AllZeros;
  std::uint64_t seed = 0;
  std::vector<Complex> amplitudes;

  VectorX build(std::size_t n) const {
    const Eigen::Index dim = Eigen::Index{1} << n;
    switch (kind) {
      case Kind::AllZeros: {
        VectorX v = VectorX::Zero(dim);
        v[0] = 1.0;
        return v;
      }
      case Kind::AllPlus: return VectorX::Constant(dim, 1.0 / std::sqrt(static_cast<double>(dim)));
      case Kind::Random: {
        Rng rng(seed);
        return haar_random_state(n, rng);
      }
      case Kind::Amplitudes: {
        if (static_cast<Eigen::Index>(amplitudes.size()) != dim)
          throw ConfigError("initial_state amplitudes must have 2^n_qubits entries");
        VectorX v(dim);
        for (Eigen::Index i = 0; i < dim; ++i) v[i] = amplitudes[static_cast<std::size_t>(i)];
        if (v.norm() == 0.0) throw ConfigError("initial_state amplitudes are all zero");
        return v / v.norm();
      }
    }
    return {};
  }

  std::string describe() const {
    switch (kind) {
      case Kind::AllZeros: return "all-zeros";
      case Kind::AllPlus: return "all-plus";
      case Kind::Random: return "random(" + std::to_string(seed) + ")";
      case Kind::Amplitudes: return "amplitudes";
    }
    return "?";
  }
};

enum class ScheduleMode { Serial, Parallel };

struct ProtocolConfig {
  HamiltonianSpec hamiltonian;
  double t = 0.0;
  std::size_t n_steps = 1;
  EpsilonPolicy policy;
  LossConfig loss;
  InitialState initial_state;
  std::size_t trajectories = 1;
  std::uint64_t master_seed = 0;
  ScheduleMode schedule = ScheduleMode::Parallel;
  bool audit_rounds = false;
  std::size_t qubit_cap = kDefaultQubitCap;
  std::size_t threads = 0;  // 0: hardware concurrency

  std::size_t register_size() const {
    return hamiltonian.n_qubits * (loss.backup_enabled ? 2 : 1) + 2;
  }

  void validate() const {
    try {
      hamiltonian.validate();
    } catch (const UsageError& e) {
      throw ConfigError(e.what());
    }
    if (hamiltonian.n_qubits < 2) throw ConfigError("hamiltonian needs at least two qubits");
    if (n_steps < 1) throw ConfigError("n_steps must be >= 1");
    if (!std::isfinite(t)) throw ConfigError("t must be finite");
    if (policy.max_rounds < 1) throw ConfigError("policy.max_rounds must be >= 1");
    loss.validate();
  }
};

inline void from_json(const nlohmann::json& j, InitialState& s) {
  if (j.is_string()) {
    const auto name = j.get<std::string>();
    if (name == "all-zeros") {
      s.kind = InitialState::Kind::AllZeros;
    } else if (name == "all-plus") {
      s.kind = InitialState::Kind::AllPlus;
    } else if (name.rfind("random(", 0) == 0 && name.back() == ')') {
      s.kind = InitialState::Kind::Random;
      try {
        s.seed = std::stoull(name.substr(7, name.size() - 8));
      } catch (const std::exception&) {
        throw ConfigError("bad random initial-state seed in '" + name + "'");
      }
    } else {
      throw ConfigError("unknown initial_state preset '" + name + "'");
    }
    return;
  }
  if (j.is_object() && j.contains("amplitudes")) {
    s.kind = InitialState::Kind::Amplitudes;
    s.amplitudes.clear();
    for (const auto& a : j.at("amplitudes")) {
      if (!a.is_array() || a.size() != 2) throw ConfigError("amplitudes entries must be [re, im]");
      s.amplitudes.emplace_back(a[0].get<double>(), a[1].get<double>());
    }
    return;
  }
  throw ConfigError("initial_state must be a preset name or {\"amplitudes\": [...]}");
}

inline void to_json(nlohmann::json& j, const InitialState& s) {
  if (s.kind != InitialState::Kind::Amplitudes) {
    j = s.describe();
    return;
  }
  nlohmann::json amps = nlohmann::json::array();
  for (const auto& a : s.amplitudes) amps.push_back({a.real(), a.imag()});
  j = nlohmann::json{{"amplitudes", amps}};
}

inline ProtocolConfig parse_config(const nlohmann::json& j) {
  ProtocolConfig cfg;
  try {
    cfg.hamiltonian = j.at("hamiltonian").get<HamiltonianSpec>();
    cfg.t = j.at("t").get<double>();
    cfg.n_steps = j.value("n_steps", std::size_t{1});
    if (j.contains("policy")) {
      const auto& p = j.at("policy");
      cfg.policy.mode = mode_from_name(p.value("mode", std::string("residual_exact")));
      cfg.policy.max_rounds = p.value("max_rounds", cfg.policy.max_rounds);
      cfg.policy.max_loss_retries = p.value("max_loss_retries", cfg.policy.max_loss_retries);
    }
    if (j.contains("loss")) {
      const auto& l = j.at("loss");
      cfg.loss.p_loss = l.value("p_loss", 0.0);
      cfg.loss.encoding = encoding_from_name(l.value("encoding", std::string("polarization")));
      cfg.loss.backup_enabled = l.value("backup_enabled", false);
    }
    if (j.contains("initial_state")) cfg.initial_state = j.at("initial_state").get<InitialState>();
    cfg.trajectories = j.value("trajectories", std::size_t{1});
    cfg.master_seed = j.value("master_seed", std::uint64_t{0});
    const auto sched = j.value("schedule", std::string("parallel"));
    if (sched == "parallel") {
      cfg.schedule = ScheduleMode::Parallel;
    } else if (sched == "serial") {
      cfg.schedule = ScheduleMode::Serial;
    } else {
      throw ConfigError("schedule must be 'serial' or 'parallel'");
    }
    cfg.audit_rounds = j.value("audit_rounds", false);
    cfg.qubit_cap = j.value("qubit_cap", kDefaultQubitCap);
    cfg.threads = j.value("threads", std::size_t{0});
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

inline ProtocolConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  return parse_config(j);
}

inline nlohmann::json config_to_json(const ProtocolConfig& c) {
  return nlohmann::json{
      {"hamiltonian", c.hamiltonian},
      {"t", c.t},
      {"n_steps", c.n_steps},
      {"policy",
       {{"mode", mode_name(c.policy.mode)},
        {"max_rounds", c.policy.max_rounds},
        {"max_loss_retries", c.policy.max_loss_retries}}},
      {"loss",
       {{"p_loss", c.loss.p_loss},
        {"encoding", encoding_name(c.loss.encoding)},
        {"backup_enabled", c.loss.backup_enabled}}},
      {"initial_state", c.initial_state},
      {"trajectories", c.trajectories},
      {"master_seed", c.master_seed},
      {"schedule", c.schedule == ScheduleMode::Parallel ? "parallel" : "serial"},
      {"audit_rounds", c.audit_rounds},
      {"qubit_cap", c.qubit_cap}};
}

/// Everything a trajectory needs that does not depend on its index.
struct ProtocolContext {
  TrotterPlan plan;
  RegisterLayout layout;
  VectorX initial;       // data qubits
  VectorX oracle_state;  // exp(i t H) |initial>
  VectorX plan_state;    // noiseless plan applied to |initial>
};

inline ProtocolContext prepare_context(const ProtocolConfig& cfg) {
  cfg.validate();
  if (cfg.register_size() > cfg.qubit_cap)
    throw ResourceError("register of " + std::to_string(cfg.register_size()) + " qubits exceeds cap of " +
                        std::to_string(cfg.qubit_cap));
  ProtocolContext ctx;
  const auto& h = cfg.hamiltonian;
  ctx.plan = compile(h, cfg.t, cfg.n_steps);
  if (cfg.schedule == ScheduleMode::Parallel && !ctx.plan.empty())
    ctx.plan = schedule_parallel(ctx.plan, InteractionGraph::from_hamiltonian(h));
  ctx.layout = RegisterLayout::cavities(h.n_qubits, cfg.loss.backup_enabled);
  ctx.initial = cfg.initial_state.build(h.n_qubits);
  ctx.oracle_state = exact_evolution(h, cfg.t, cfg.qubit_cap) * ctx.initial;
  StateVector s(RegisterLayout::data_only(h.n_qubits), ctx.initial);
  execute_noiseless(ctx.plan, s);
  ctx.plan_state = s.amplitudes();
  return ctx;
}

struct OutcomeHistogram {
  std::array<std::size_t, 4> counts{0, 0, 0, 0};  // BeamSplitterOutcome order
  std::size_t heralded_losses = 0;
  std::size_t silent_losses = 0;  // simulator-side truth; invisible to the protocol

  std::size_t detected() const { return counts[0] + counts[1] + counts[2] + counts[3]; }
};

struct TrajectoryStats {
  std::size_t index = 0;
  std::uint64_t seed = 0;
  bool failed = false;
  std::string failure;
  std::size_t rounds_total = 0;  // every emission round, including loss retries
  std::size_t feedback_rounds = 0;
  std::size_t loss_retries = 0;
  std::vector<std::size_t> rounds_per_rotation;
  std::vector<std::size_t> retries_per_rotation;
  std::vector<std::size_t> attempts_per_detection;  // emission attempts until both photons arrived
  OutcomeHistogram outcome_histogram;
  std::array<double, 4> expected_outcome_mass{0, 0, 0, 0};  // sum of analytic probabilities
  std::array<double, 4> expected_outcome_var{0, 0, 0, 0};
  PauliString final_frame;
  double fidelity_vs_oracle = std::numeric_limits<double>::quiet_NaN();
  double fidelity_vs_plan = std::numeric_limits<double>::quiet_NaN();
  double wall_time_seconds = 0.0;  // not part of serialized reports
  std::vector<RoundRecord> rounds;  // only with audit_rounds
};

inline TrajectoryStats run_trajectory(const ProtocolConfig& cfg, const ProtocolContext& ctx, std::size_t index) {
  const auto started = std::chrono::steady_clock::now();
  TrajectoryStats st;
  st.index = index;
  st.seed = derive_seed(cfg.master_seed, index);
  Rng rng(st.seed);
  const std::size_t n = cfg.hamiltonian.n_qubits;
  StateVector state = embed_data(ctx.layout, ctx.initial);
  ErrorFrame frame(n);
  std::size_t rotation_index = 0;
  std::size_t pending_attempts = 0;

  auto absorb = [&](const std::vector<RoundRecord>& rounds) {
    std::size_t emitted = 0;
    std::size_t retries = 0;
    for (const auto& r : rounds) {
      if (r.classical) continue;
      ++emitted;
      ++pending_attempts;
      if (r.outcome) {
        st.attempts_per_detection.push_back(pending_attempts);
        pending_attempts = 0;
        ++st.outcome_histogram.counts[static_cast<std::size_t>(*r.outcome)];
        const auto probs = analytic_outcome_probabilities(r.eps_used);
        for (std::size_t i = 0; i < 4; ++i) {
          st.expected_outcome_mass[i] += probs[i];
          st.expected_outcome_var[i] += probs[i] * (1 - probs[i]);
        }
        if (r.loss.any()) ++st.outcome_histogram.silent_losses;
      } else {
        ++retries;
        ++st.outcome_histogram.heralded_losses;
      }
    }
    st.rounds_per_rotation.push_back(emitted);
    st.retries_per_rotation.push_back(retries);
    st.rounds_total += emitted;
    st.loss_retries += retries;
    st.feedback_rounds += emitted - retries;
    if (cfg.audit_rounds) st.rounds.insert(st.rounds.end(), rounds.begin(), rounds.end());
  };

  try {
    ctx.plan.for_each_rotation([&](const Rotation& rot, std::size_t step, std::size_t) {
      try {
        auto res = realize_v_kl(state, rot.sites, rot.axes[0], rot.axes[1], rot.angle, cfg.policy, frame, rng, cfg.loss);
        frame = std::move(res.frame);
        absorb(res.rounds);
      } catch (const IncompleteRotationError& e) {
        frame = e.frame();
        absorb(e.rounds());
        throw IncompleteRotationError("rotation " + std::to_string(rotation_index) + " (step " + std::to_string(step) +
                                          "): " + e.what() + ", residual " + std::to_string(e.residual()),
                                      e.residual(), e.frame(), {});
      }
      ++rotation_index;
    });
  } catch (const IncompleteRotationError& e) {
    st.failed = true;
    st.failure = e.what();
  }
  st.final_frame = frame.byproduct();
  if (!st.failed) {
    apply_frame_correction(state, frame);
    const VectorX data = data_amplitudes(state);
    st.fidelity_vs_oracle = fidelity(ctx.oracle_state, data);
    st.fidelity_vs_plan = fidelity(ctx.plan_state, data);
  }
  st.wall_time_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return st;
}

inline TrajectoryStats run_trajectory(const ProtocolConfig& cfg, std::size_t index) {
  return run_trajectory(cfg, prepare_context(cfg), index);
}

struct RunningMoments {
  std::size_t count = 0;
  double sum = 0.0;
  double sum_sq = 0.0;
  double min = std::numeric_limits<double>::infinity();
  double max = -std::numeric_limits<double>::infinity();

  void add(double x) {
    ++count;
    sum += x;
    sum_sq += x * x;
    min = std::min(min, x);
    max = std::max(max, x);
  }
  double mean() const { return count ? sum / static_cast<double>(count) : 0.0; }
  /// Unbiased sample variance.
  double variance() const {
    if (count < 2) return 0.0;
    const double m = mean();
    return std::max(0.0, (sum_sq - static_cast<double>(count) * m * m) / static_cast<double>(count - 1));
  }
  double std_error() const { return count ? std::sqrt(variance() / static_cast<double>(count)) : 0.0; }
};

inline nlohmann::json to_json_moments(const RunningMoments& m) {
  if (m.count == 0) return nlohmann::json{{"count", 0}, {"mean", nullptr}, {"variance", nullptr}, {"min", nullptr}, {"max", nullptr}};
  return nlohmann::json{{"count", m.count}, {"mean", m.mean()}, {"variance", m.variance()}, {"min", m.min}, {"max", m.max}};
}

struct RotationSiteStats {
  Rotation rotation;
  RunningMoments rounds;
  RunningMoments loss_retries;
};

struct EnsembleReport {
  nlohmann::json config;
  std::size_t trajectories = 0;
  std::size_t failed = 0;
  RunningMoments fidelity_vs_oracle;
  RunningMoments fidelity_vs_plan;
  RunningMoments rounds_total;
  RunningMoments rounds_per_rotation;
  RunningMoments attempts_per_detection;
  double expected_attempts_per_detection = 1.0;
  OutcomeHistogram outcomes;
  std::array<double, 4> expected_outcome_mass{0, 0, 0, 0};
  std::array<double, 4> expected_outcome_var{0, 0, 0, 0};
  double plan_fidelity_vs_oracle = 1.0;
  std::vector<RotationSiteStats> per_site;
  std::vector<TrajectoryStats> trajectory_stats;
};

inline EnsembleReport run_ensemble(const ProtocolConfig& cfg) {
  EnsembleReport rep;
  rep.config = config_to_json(cfg);
  rep.trajectories = cfg.trajectories;
  const double arrive = (1.0 - cfg.loss.p_loss) * (1.0 - cfg.loss.p_loss);
  rep.expected_attempts_per_detection = arrive > 0 ? 1.0 / arrive : std::numeric_limits<double>::infinity();
  if (cfg.trajectories == 0) return rep;

  const ProtocolContext ctx = prepare_context(cfg);
  rep.plan_fidelity_vs_oracle = fidelity(ctx.plan_state, ctx.oracle_state);

  std::vector<TrajectoryStats> stats(cfg.trajectories);
  std::size_t workers = cfg.threads ? cfg.threads : std::max(1u, std::thread::hardware_concurrency());
  workers = std::min(workers, cfg.trajectories);
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < cfg.trajectories; i = next++) stats[i] = run_trajectory(cfg, ctx, i);
  };
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
  }

  // Ordered reduction by trajectory index.
  ctx.plan.for_each_rotation([&](const Rotation& rot, std::size_t step, std::size_t) {
    if (step == 0) rep.per_site.push_back({rot, {}, {}});
  });
  const std::size_t per_sweep = rep.per_site.size();
  for (const auto& st : stats) {
    if (st.failed) {
      ++rep.failed;
    } else {
      rep.fidelity_vs_oracle.add(st.fidelity_vs_oracle);
      rep.fidelity_vs_plan.add(st.fidelity_vs_plan);
    }
    rep.rounds_total.add(static_cast<double>(st.rounds_total));
    for (std::size_t i = 0; i < st.rounds_per_rotation.size(); ++i) {
      rep.rounds_per_rotation.add(static_cast<double>(st.rounds_per_rotation[i]));
      if (per_sweep) {
        rep.per_site[i % per_sweep].rounds.add(static_cast<double>(st.rounds_per_rotation[i]));
        rep.per_site[i % per_sweep].loss_retries.add(static_cast<double>(st.retries_per_rotation[i]));
      }
    }
    for (auto a : st.attempts_per_detection) rep.attempts_per_detection.add(static_cast<double>(a));
    for (std::size_t i = 0; i < 4; ++i) {
      rep.outcomes.counts[i] += st.outcome_histogram.counts[i];
      rep.expected_outcome_mass[i] += st.expected_outcome_mass[i];
      rep.expected_outcome_var[i] += st.expected_outcome_var[i];
    }
    rep.outcomes.heralded_losses += st.outcome_histogram.heralded_losses;
    rep.outcomes.silent_losses += st.outcome_histogram.silent_losses;
  }
  rep.trajectory_stats = std::move(stats);
  return rep;
}

inline nlohmann::json trajectory_to_json(const TrajectoryStats& st, bool with_rounds) {
  auto nullable = [](double x) { return std::isnan(x) ? nlohmann::json() : nlohmann::json(x); };
  nlohmann::json hist = nlohmann::json::object();
  for (auto o : kAllOutcomes)
    hist[std::string(outcome_name(o))] = st.outcome_histogram.counts[static_cast<std::size_t>(o)];
  hist["heralded_loss"] = st.outcome_histogram.heralded_losses;
  hist["silent_loss"] = st.outcome_histogram.silent_losses;
  nlohmann::json j{{"index", st.index},
                   {"seed", st.seed},
                   {"failed", st.failed},
                   {"failure", st.failed ? nlohmann::json(st.failure) : nlohmann::json()},
                   {"rounds_total", st.rounds_total},
                   {"feedback_rounds", st.feedback_rounds},
                   {"loss_retries", st.loss_retries},
                   {"rounds_per_rotation", st.rounds_per_rotation},
                   {"outcome_histogram", hist},
                   {"final_frame", st.final_frame.axes_str()},
                   {"fidelity_vs_oracle", nullable(st.fidelity_vs_oracle)},
                   {"fidelity_vs_plan", nullable(st.fidelity_vs_plan)}};
  if (with_rounds) j["rounds"] = st.rounds;
  return j;
}

/// Aggregate part of a report (no per-trajectory data, no timings).
inline nlohmann::json aggregate_to_json(const EnsembleReport& r) {
  nlohmann::json outcomes = nlohmann::json::object();
  const double detected = static_cast<double>(r.outcomes.detected());
  for (auto o : kAllOutcomes) {
    const auto i = static_cast<std::size_t>(o);
    const double sd = std::sqrt(r.expected_outcome_var[i]);
    outcomes[std::string(outcome_name(o))] = {
        {"count", r.outcomes.counts[i]},
        {"frequency", detected > 0 ? nlohmann::json(static_cast<double>(r.outcomes.counts[i]) / detected) : nlohmann::json()},
        {"expected_frequency", detected > 0 ? nlohmann::json(r.expected_outcome_mass[i] / detected) : nlohmann::json()},
        {"z_score", sd > 0 ? nlohmann::json((static_cast<double>(r.outcomes.counts[i]) - r.expected_outcome_mass[i]) / sd)
                           : nlohmann::json()}};
  }
  nlohmann::json sites = nlohmann::json::array();
  for (const auto& s : r.per_site)
    sites.push_back({{"rotation", s.rotation}, {"rounds", to_json_moments(s.rounds)},
                     {"loss_retries", to_json_moments(s.loss_retries)}});
  return nlohmann::json{
      {"schema", "mfsim.aggregate/1"},
      {"config", r.config},
      {"trajectories", r.trajectories},
      {"failed", r.failed},
      {"plan_fidelity_vs_oracle", r.plan_fidelity_vs_oracle},
      {"fidelity_vs_oracle", to_json_moments(r.fidelity_vs_oracle)},
      {"fidelity_vs_plan", to_json_moments(r.fidelity_vs_plan)},
      {"rounds_total", to_json_moments(r.rounds_total)},
      {"rounds_per_rotation", to_json_moments(r.rounds_per_rotation)},
      {"attempts_per_detection", to_json_moments(r.attempts_per_detection)},
      {"expected_attempts_per_detection",
       std::isfinite(r.expected_attempts_per_detection) ? nlohmann::json(r.expected_attempts_per_detection) : nlohmann::json()},
      {"outcomes", outcomes},
      {"heralded_losses", r.outcomes.heralded_losses},
      {"silent_losses", r.outcomes.silent_losses},
      {"per_site", sites}};
}

enum class ReportFormat { Json, Csv };

/// Writes aggregate.json or aggregate.csv plus trajectories.jsonl into `dir`.
/// Returns the files written.
inline std::vector<std::filesystem::path> emit_report(const EnsembleReport& r, ReportFormat format,
                                                      const std::filesystem::path& dir, bool with_rounds = false) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create output directory " + dir.string() + ": " + ec.message());

  auto open = [](const fs::path& p) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + p.string() + " for writing");
    return out;
  };
  auto close = [](std::ofstream& out, const fs::path& p) {
    out.flush();
    if (!out) throw std::runtime_error("write failed for " + p.string());
  };

  std::vector<fs::path> written;
  if (format == ReportFormat::Json) {
    const fs::path p = dir / "aggregate.json";
    auto out = open(p);
    out << aggregate_to_json(r).dump(2) << '\n';
    close(out, p);
    written.push_back(p);
  } else {
    const fs::path p = dir / "aggregate.csv";
    auto out = open(p);
    out << "position,site_x,site_y,axes,angle,samples,mean_rounds,mean_loss_retries\n";
    for (std::size_t i = 0; i < r.per_site.size(); ++i) {
      const auto& s = r.per_site[i];
      nlohmann::json angle = s.rotation.angle;  // shortest round-trip formatting
      out << i << ',' << s.rotation.sites[0] << ',' << s.rotation.sites[1] << ',' << axis_char(s.rotation.axes[0])
          << axis_char(s.rotation.axes[1]) << ',' << angle.dump() << ',' << s.rounds.count << ','
          << nlohmann::json(s.rounds.mean()).dump() << ',' << nlohmann::json(s.loss_retries.mean()).dump() << '\n';
    }
    close(out, p);
    written.push_back(p);
  }
  const fs::path tp = dir / "trajectories.jsonl";
  auto out = open(tp);
  for (const auto& st : r.trajectory_stats) out << trajectory_to_json(st, with_rounds).dump() << '\n';
  close(out, tp);
  written.push_back(tp);
  return written;
}

// ---------------------------------------------------------------------------
// Fixed-eps probe of the beam-splitter outcome law.

struct ProbeReport {
  double eps = 0.0;
  std::size_t samples = 0;
  std::array<std::size_t, 4> counts{0, 0, 0, 0};
  std::array<double, 4> expected{0, 0, 0, 0};

  double frequency(std::size_t i) const { return samples ? static_cast<double>(counts[i]) / static_cast<double>(samples) : 0.0; }
  double std_error(std::size_t i) const {
    return samples ? std::sqrt(expected[i] * (1 - expected[i]) / static_cast<double>(samples)) : 0.0;
  }
  /// |freq - expected| <= k standard errors for every outcome.
  bool within(double k) const {
    for (std::size_t i = 0; i < 4; ++i) {
      const double se = std_error(i);
      const double dev = std::abs(frequency(i) - expected[i]);
      if (se == 0.0 ? dev > 0.0 : dev > k * se) return false;
    }
    return true;
  }
};

/// Runs `samples` independent emission + beam-splitter rounds at fixed eps on
/// a Haar-random two-atom state.
inline ProbeReport probe_rounds(double eps, std::size_t samples, std::uint64_t seed) {
  ProbeReport rep;
  rep.eps = eps;
  rep.samples = samples;
  rep.expected = analytic_outcome_probabilities(eps);
  Rng rng(seed);
  const auto layout = RegisterLayout::cavities(2, false);
  const StateVector initial = embed_data(layout, haar_random_state(2, rng));
  const auto photons = layout.photon_ports();
  for (std::size_t s = 0; s < samples; ++s) {
    StateVector st = initial;
    joint_emission(st, {0, 1}, photons, eps);
    ++rep.counts[static_cast<std::size_t>(beamsplitter_measure(st, photons, rng).outcome)];
  }
  return rep;
}

inline nlohmann::json probe_to_json(const ProbeReport& p) {
  nlohmann::json outcomes = nlohmann::json::object();
  for (auto o : kAllOutcomes) {
    const auto i = static_cast<std::size_t>(o);
    outcomes[std::string(outcome_name(o))] = {{"count", p.counts[i]},
                                              {"frequency", p.frequency(i)},
                                              {"expected", p.expected[i]},
                                              {"std_error", p.std_error(i)}};
  }
  return {{"eps", p.eps}, {"samples", p.samples}, {"outcomes", outcomes}, {"within_3_sigma", p.within(3.0)}};
}

// ---------------------------------------------------------------------------
// CNOT from exp(i pi/4 X X) and single-qubit Cliffords.

struct CnotDressing {
  Matrix2 before_first;   // applied to the control before the rotation
  Matrix2 before_second;  // applied to the target before the rotation
  Matrix2 after_first;
  Matrix2 after_second;
};

/// CNOT(control 0, target 1) = (SH (x) HSH) exp(i pi/4 XX) (H (x) 1) up to a
/// global phase.
inline CnotDressing cnot_dressing() {
  const Matrix2 h = conjugation_unitary(PauliAxis::Z);
  const Matrix2 s = conjugation_unitary(PauliAxis::Y);
  return {h, Matrix2::Identity(), s * h, h * s * h};
}

/// CNOT with qubit 0 as control, in the apply_two_qubit convention.
inline Matrix4 cnot_matrix() {
  Matrix4 m = Matrix4::Zero();
  m(0, 0) = 1;
  m(3, 1) = 1;
  m(2, 2) = 1;
  m(1, 3) = 1;
  return m;
}

/// Dense (after) exp(i t XX) (before) in the apply_two_qubit convention.
inline Matrix4 dressed_rotation(double t, const CnotDressing& d = cnot_dressing()) {
  const Matrix4 xx = kron_pair(pauli_matrix(PauliAxis::X), pauli_matrix(PauliAxis::X));
  const Matrix4 v = std::cos(t) * Matrix4::Identity() + Complex(0, std::sin(t)) * xx;
  return kron_pair(d.after_first, d.after_second) * v * kron_pair(d.before_first, d.before_second);
}

/// Inputs used for process fidelity: four basis states, |+>|0>, |+i>|->.
inline std::vector<VectorX> cnot_probe_inputs() {
  std::vector<VectorX> in;
  for (int b = 0; b < 4; ++b) {
    VectorX v = VectorX::Zero(4);
    v[b] = 1.0;
    in.push_back(v);
  }
  const double h = 1.0 / std::sqrt(2.0);
  VectorX plus0 = VectorX::Zero(4);
  plus0[0] = h;  // |0>|0>
  plus0[1] = h;  // |1>|0>
  in.push_back(plus0);
  // (|0> + i|1>)/sqrt2 on qubit 0, (|0> - |1>)/sqrt2 on qubit 1.
  VectorX v(4);
  v[0] = 0.5;
  v[1] = Complex(0, 0.5);
  v[2] = -0.5;
  v[3] = Complex(0, -0.5);
  in.push_back(v);
  return in;
}

struct CnotReport {
  std::vector<double> fidelities;
  double process_fidelity = 0.0;  // mean over the probe inputs
  double min_fidelity = 0.0;
  std::size_t rounds_total = 0;
  std::size_t loss_retries = 0;
};

/// Runs the dressed exp(i pi/4 XX) through the feedback protocol for every
/// probe input and compares with CNOT.
inline CnotReport cnot_demo(const EpsilonPolicy& policy, const LossConfig& loss, Rng& rng) {
  loss.validate();
  const auto dress = cnot_dressing();
  const Matrix4 target = cnot_matrix();
  const auto layout = RegisterLayout::cavities(2, loss.backup_enabled);
  CnotReport rep;
  rep.min_fidelity = 1.0;
  for (const auto& in : cnot_probe_inputs()) {
    StateVector st = embed_data(layout, in);
    apply_local(st, 0, dress.before_first);
    apply_local(st, 1, dress.before_second);
    auto res = realize_v(st, {0, 1}, std::numbers::pi / 4, policy, ErrorFrame(2), rng, loss);
    apply_frame_correction(st, res.frame);
    apply_local(st, 0, dress.after_first);
    apply_local(st, 1, dress.after_second);
    const double f = fidelity(VectorX(target * in), data_amplitudes(st));
    rep.fidelities.push_back(f);
    rep.min_fidelity = std::min(rep.min_fidelity, f);
    rep.rounds_total += res.rounds.size();
    rep.loss_retries += res.loss_retries;
  }
  double sum = 0.0;
  for (double f : rep.fidelities) sum += f;
  rep.process_fidelity = sum / static_cast<double>(rep.fidelities.size());
  return rep;
}

}  // namespace mfsim
