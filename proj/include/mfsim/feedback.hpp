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

// Repeat-until-success controller for exp(i t sigma_k sigma_l) on an atom
// pair, with Pauli frame bookkeeping.
//
// Frame convention: the simulated state equals frame * ideal state up to a
// global phase. A physical rotation exp(i phi P) therefore advances the ideal
// state by exp(i d phi P), where d = frame_conjugate_direction(frame, P).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "mfsim/emission.hpp"
#include "mfsim/errors.hpp"
#include "mfsim/loss.hpp"
#include "mfsim/pauli.hpp"
#include "mfsim/rng.hpp"
#include "mfsim/statevec.hpp"

namespace mfsim {

enum class EpsilonMode {
  ResidualExact,  // aim the exact remaining angle every round
  AimDoubling,  // aim t, 2t, 4t, ... with eps = sin(aim); approximate
};

struct EpsilonPolicy {
  static constexpr double kAngleCap = std::numbers::pi / 2;

  EpsilonMode mode = EpsilonMode::ResidualExact;
  /// Cap on rounds in which both photons were detected.
  std::size_t max_rounds = 64;
  /// Cap on heralded-loss retries per rotation.
  std::size_t max_loss_retries = 10000;
};

inline std::string_view mode_name(EpsilonMode m) {
  return m == EpsilonMode::ResidualExact ? "residual_exact" : "aim_doubling";
}

inline EpsilonMode mode_from_name(std::string_view s) {
  if (s == "residual_exact") return EpsilonMode::ResidualExact;
  if (s == "aim_doubling") return EpsilonMode::AimDoubling;
  throw ConfigError("unknown epsilon policy mode '" + std::string(s) + "'");
}

/// Reduces an angle modulo pi into (-pi/2, pi/2]; exp(i pi P) = -1.
inline double reduce_angle(double a) {
  constexpr double pi = std::numbers::pi;
  double r = a - pi * std::round(a / pi);
  if (r <= -pi / 2) r += pi;
  if (r > pi / 2) r -= pi;
  return r;
}

/// Angle bookkeeping of one rotation, independent of the state simulation.
class AimTracker {
 public:
  static constexpr double kZeroTol = 1e-12;

  AimTracker(EpsilonMode mode, double target) : mode_(mode), residual_(reduce_angle(target)), aim_(residual_) {
    if (std::abs(residual_) <= kZeroTol) done_ = true;
  }

  bool done() const { return done_; }
  double residual() const { return residual_; }
  EpsilonMode mode() const { return mode_; }

  /// Effective signed angle the coming round tries to apply.
  double aim() const { return mode_ == EpsilonMode::ResidualExact ? residual_ : aim_; }

  double eps() const {
    const double a = std::min(std::abs(aim()), EpsilonPolicy::kAngleCap);
    if (mode_ == EpsilonMode::ResidualExact) return eps_for_angle(a);
    return std::clamp(std::sin(a), 0.0, 1.0);
  }

  /// Residual of exactly pi/2: exp(i pi/2 P) = i P is a Pauli and goes
  /// straight into the frame.
  bool is_half_turn() const {
    return mode_ == EpsilonMode::ResidualExact && !done_ &&
           std::abs(std::abs(residual_) - EpsilonPolicy::kAngleCap) <= kZeroTol;
  }

  void complete_half_turn() {
    residual_ = 0.0;
    done_ = true;
  }

  /// A rotation advanced the ideal state by `effective` radians.
  void on_rotation(double effective) {
    residual_ = reduce_angle(residual_ - effective);
    if (mode_ == EpsilonMode::ResidualExact) {
      if (std::abs(residual_) <= kZeroTol) {
        residual_ = 0.0;
        done_ = true;
      }
      return;
    }
    // Literal doubling: success when the time direction matched the aim,
    // otherwise double the aim. Pauli outcomes do not touch the aim.
    if ((effective > 0) == (aim_ > 0)) {
      done_ = true;
    } else {
      aim_ *= 2.0;
    }
  }

 private:
  EpsilonMode mode_;
  double residual_;
  double aim_;
  bool done_ = false;
};

struct RoundRecord {
  std::optional<BeamSplitterOutcome> outcome;
  LossPattern loss;
  RoundEffect effect;
  double eps_used = 0.0;
  double aimed_angle = 0.0;
  double applied_angle = 0.0;  // effective rotation of the ideal state
  PauliString frame_after;
  std::optional<std::array<int, 2>> b_bits;
  BackupBasis b_basis = BackupBasis::X;
  bool classical = false;  // half-turn folded into the frame, no photons

  bool heralded_loss() const { return !classical && !outcome.has_value(); }
};

inline void to_json(nlohmann::json& j, const RoundRecord& r) {
  std::string effect;
  switch (r.effect.kind) {
    case RoundEffectKind::Rotation: effect = r.effect.sign > 0 ? "rotation+" : "rotation-"; break;
    case RoundEffectKind::Pauli:
      effect = std::string("pauli:") + (r.effect.flips[0] ? 'X' : 'I') + (r.effect.flips[1] ? 'X' : 'I');
      break;
    case RoundEffectKind::Unknown: effect = "unknown"; break;
  }
  j = nlohmann::json{{"outcome", r.outcome ? nlohmann::json(std::string(outcome_name(*r.outcome))) : nlohmann::json()},
                     {"lost", {r.loss.lost[0], r.loss.lost[1]}},
                     {"detectable", r.loss.detectable},
                     {"effect", effect},
                     {"eps", r.eps_used},
                     {"aimed", r.aimed_angle},
                     {"applied", r.applied_angle},
                     {"frame", r.frame_after.axes_str()},
                     {"b_bits", r.b_bits ? nlohmann::json(*r.b_bits) : nlohmann::json()},
                     {"b_basis", r.b_basis == BackupBasis::X ? "X" : "Z"},
                     {"classical", r.classical}};
}

struct RotationResult {
  ErrorFrame frame;
  std::vector<RoundRecord> rounds;
  double residual = 0.0;
  std::size_t feedback_rounds = 0;  // rounds with both photons accounted for
  std::size_t loss_retries = 0;     // rounds lost to a heralded photon loss
};

/// Raised when a rotation runs out of rounds. The state has been rotated back
/// to the lab frame; `frame` and `residual` let a caller resume with
/// realize_v_kl(..., residual, ..., frame, ...).
class IncompleteRotationError : public std::runtime_error {
 public:
  IncompleteRotationError(const std::string& what, double residual, ErrorFrame frame, std::vector<RoundRecord> rounds)
      : std::runtime_error(what), residual_(residual), frame_(std::move(frame)), rounds_(std::move(rounds)) {}

  double residual() const { return residual_; }
  const ErrorFrame& frame() const { return frame_; }
  const std::vector<RoundRecord>& rounds() const { return rounds_; }

 private:
  double residual_;
  ErrorFrame frame_;
  std::vector<RoundRecord> rounds_;
};

/// Realizes exp(i t sigma_k(pair[0]) sigma_l(pair[1])) on the ideal state.
///
/// The pair is rotated so the generator becomes X X, rounds run until the
/// tracker is satisfied, and the pair is rotated back. Beam-splitter Paulis
/// are recorded in the lab frame as sigma_k 1 or 1 sigma_l.
inline RotationResult realize_v_kl(StateVector& state, std::array<std::size_t, 2> pair, PauliAxis k, PauliAxis l,
                                   double t, const EpsilonPolicy& policy, ErrorFrame frame, Rng& rng,
                                   const LossConfig& loss = {}) {
  const auto& layout = state.layout();
  if (k == PauliAxis::I || l == PauliAxis::I) throw UsageError("realize_v_kl: axes must be X, Y or Z");
  if (pair[0] == pair[1]) throw UsageError("realize_v_kl: pair must be two distinct qubits");
  for (auto q : pair)
    if (q >= layout.data_count()) throw UsageError("realize_v_kl: pair must be data qubits");
  if (frame.size() != layout.data_count()) throw UsageError("realize_v_kl: frame size must equal data qubit count");
  if (loss.backup_enabled && !layout.has_backup()) throw UsageError("backup enabled but layout has no backup qubits");
  const auto photons = layout.photon_ports();
  const std::size_t n = layout.data_count();
  const PauliString generator = PauliString::two_site(n, pair[0], k, pair[1], l);

  const Matrix2 uk = conjugation_unitary(k);
  const Matrix2 ul = conjugation_unitary(l);
  apply_local(state, pair[0], uk.adjoint());
  apply_local(state, pair[1], ul.adjoint());

  RotationResult result;
  AimTracker tracker(policy.mode, t);

  auto bail = [&](const std::string& why) {
    apply_local(state, pair[0], uk);
    apply_local(state, pair[1], ul);
    throw IncompleteRotationError(why, tracker.residual(), frame, std::move(result.rounds));
  };

  while (!tracker.done()) {
    RoundRecord rec;
    rec.aimed_angle = tracker.aim();
    if (tracker.is_half_turn()) {
      frame.push(generator);
      tracker.complete_half_turn();
      rec.classical = true;
      rec.effect = RoundEffect::pauli(true, true);
      rec.applied_angle = rec.aimed_angle;
      rec.frame_after = frame.byproduct();
      result.rounds.push_back(std::move(rec));
      break;
    }
    if (result.feedback_rounds >= policy.max_rounds)
      bail("rotation incomplete after " + std::to_string(policy.max_rounds) + " rounds");
    if (result.loss_retries >= policy.max_loss_retries)
      bail("rotation incomplete after " + std::to_string(policy.max_loss_retries) + " loss retries");

    const double eps = tracker.eps();
    RoundReport rep = loss.backup_enabled
                          ? backup_round(state, pair, {layout.backup_of(pair[0]), layout.backup_of(pair[1])},
                                         photons, eps, loss, rng)
                          : direct_round(state, pair, photons, eps, loss, rng);
    rec.eps_used = eps;
    rec.outcome = rep.outcome;
    rec.loss = rep.loss;
    rec.effect = rep.effect;
    rec.b_bits = rep.b_bits;
    rec.b_basis = rep.b_basis;

    if (rep.outcome) {
      ++result.feedback_rounds;
    } else {
      ++result.loss_retries;
    }
    switch (rep.effect.kind) {
      case RoundEffectKind::Rotation: {
        const int d = frame_conjugate_direction(frame, generator);
        rec.applied_angle = d * rep.effect.sign * rotation_angle(eps);
        tracker.on_rotation(rec.applied_angle);
        break;
      }
      case RoundEffectKind::Pauli: frame.push(effect_pauli(rep.effect, n, pair, k, l)); break;
      case RoundEffectKind::Unknown: break;
    }
    rec.frame_after = frame.byproduct();
    result.rounds.push_back(std::move(rec));
  }

  apply_local(state, pair[0], uk);
  apply_local(state, pair[1], ul);
  result.frame = std::move(frame);
  result.residual = tracker.residual();
  return result;
}

/// exp(i t X X) on the pair.
inline RotationResult realize_v(StateVector& state, std::array<std::size_t, 2> pair, double t,
                                const EpsilonPolicy& policy, ErrorFrame frame, Rng& rng, const LossConfig& loss = {}) {
  return realize_v_kl(state, pair, PauliAxis::X, PauliAxis::X, t, policy, std::move(frame), rng, loss);
}

/// Undo the recorded byproduct on the data qubits.
inline void apply_frame_correction(StateVector& state, const ErrorFrame& frame) {
  apply_pauli(state, frame.byproduct());
}

}  // namespace mfsim
