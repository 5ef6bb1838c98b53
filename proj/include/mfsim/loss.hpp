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

// Photon loss and the backup-qubit protocol.
//
// A lost photon is modelled as a hidden measurement of its mode in the
// {V, H} basis followed by a reset of the mode. Under the polarization
// encoding two photons are always emitted, so a missing click is noticed;
// under the occupation encoding a lost photon looks like an empty mode.
//
// All round executors in this header work in the frame where the rotation
// generator is X (x) X on the atom pair; the feedback controller maps their
// effects to other axes.

#include <array>
#include <cstddef>
#include <optional>
#include <string>

#include "mfsim/emission.hpp"
#include "mfsim/errors.hpp"
#include "mfsim/pauli.hpp"
#include "mfsim/rng.hpp"
#include "mfsim/statevec.hpp"

namespace mfsim {

struct LossPattern {
  std::array<bool, 2> lost{false, false};
  bool detectable = false;

  bool any() const { return lost[0] || lost[1]; }
  friend bool operator==(const LossPattern&, const LossPattern&) = default;
};

struct LossConfig {
  double p_loss = 0.0;
  PhotonEncoding encoding = PhotonEncoding::Polarization;
  bool backup_enabled = false;

  void validate() const {
    if (!(p_loss >= 0.0 && p_loss <= 1.0)) throw ConfigError("p_loss must lie in [0, 1]");
    if (backup_enabled && encoding != PhotonEncoding::Polarization)
      throw ConfigError("backup protocol requires the polarization encoding");
  }
};

enum class RoundEffectKind {
  Rotation,  // exp(i sign theta X X) on the pair
  Pauli,     // known flips on the pair
  Unknown,   // heralded loss without a backup: the branch is lost information
};

struct RoundEffect {
  RoundEffectKind kind = RoundEffectKind::Pauli;
  int sign = +1;
  std::array<bool, 2> flips{false, false};

  static RoundEffect rotation(int sign) { return {RoundEffectKind::Rotation, sign, {false, false}}; }
  static RoundEffect pauli(bool first, bool second) { return {RoundEffectKind::Pauli, +1, {first, second}}; }
  static RoundEffect unknown() { return {RoundEffectKind::Unknown, +1, {false, false}}; }

  friend bool operator==(const RoundEffect&, const RoundEffect&) = default;
};

enum class BackupBasis { X, Z };

/// What one emission/measurement round did.
struct RoundReport {
  std::optional<BeamSplitterOutcome> outcome;  // empty when a loss was heralded
  LossPattern loss;
  RoundEffect effect;
  std::optional<std::array<int, 2>> b_bits;  // backup readout: 0 = |0> or |+>, 1 = |1> or |->
  BackupBasis b_basis = BackupBasis::X;
};

/// Physical effect of a beam-splitter outcome in the X X frame.
inline RoundEffect effect_of(BeamSplitterOutcome o) {
  switch (o) {
    case BeamSplitterOutcome::Plus: return RoundEffect::rotation(+1);
    case BeamSplitterOutcome::Minus: return RoundEffect::rotation(-1);
    case BeamSplitterOutcome::HH: return RoundEffect::pauli(true, false);
    case BeamSplitterOutcome::VV: return RoundEffect::pauli(false, true);
  }
  return RoundEffect::unknown();
}

/// U_eps between a data atom and its backup atom (the backup plays the photon).
inline void backup_entangle(StateVector& state, std::size_t atom_a, std::size_t atom_b, double eps) {
  const Matrix4 u = emission_unitary(eps);
  if (excitation_probability(state, atom_b) > 1e-10)
    throw ProtocolError("backup qubit " + std::to_string(atom_b) + " is not reset");
  apply_two_qubit(state, atom_a, atom_b, u);
}

/// |0>_B|V> -> |0>_B|V>, |1>_B|V> -> |1>_B|H>.
inline void photon_copy(StateVector& state, std::size_t atom_b, std::size_t photon) {
  if (excitation_probability(state, photon) > 1e-10)
    throw ProtocolError("photon mode " + std::to_string(photon) + " is not in |V>");
  Matrix4 cnot = Matrix4::Zero();
  cnot(0, 0) = 1;
  cnot(3, 1) = 1;
  cnot(2, 2) = 1;
  cnot(1, 3) = 1;
  apply_two_qubit(state, atom_b, photon, cnot);
}

namespace detail {

inline VectorX basis_vector(std::size_t dim, std::size_t i) {
  VectorX v = VectorX::Zero(static_cast<Eigen::Index>(dim));
  v[static_cast<Eigen::Index>(i)] = 1.0;
  return v;
}

// Measures one qubit in the computational basis and resets it to |0>.
inline int measure_and_reset(StateVector& state, std::size_t q, Rng& rng) {
  static const auto proj = computational_projectors(1);
  const std::array<std::size_t, 1> qs{q};
  const auto r = measure(state, qs, proj, rng);
  release_qubits(state, qs, basis_vector(2, r.outcome));
  return static_cast<int>(r.outcome);
}

// Measures one qubit in the |+>, |-> basis and resets it to |0>.
inline int measure_x_and_reset(StateVector& state, std::size_t q, Rng& rng) {
  static const std::array<VectorX, 2> basis = [] {
    const double h = 1.0 / std::sqrt(2.0);
    VectorX plus(2), minus(2);
    plus << h, h;
    minus << h, -h;
    return std::array<VectorX, 2>{plus, minus};
  }();
  static const std::array<MatrixX, 2> proj{basis[0] * basis[0].adjoint(), basis[1] * basis[1].adjoint()};
  const std::array<std::size_t, 1> qs{q};
  const auto r = measure(state, qs, proj, rng);
  release_qubits(state, qs, basis[r.outcome]);
  return static_cast<int>(r.outcome);
}

}  // namespace detail

/// Each photon is independently lost with probability cfg.p_loss. A lost
/// mode is measured by the environment (outcome hidden) and emptied.
inline LossPattern loss_channel(StateVector& state, std::array<std::size_t, 2> photons, const LossConfig& cfg,
                                Rng& rng) {
  LossPattern pattern;
  for (std::size_t i = 0; i < 2; ++i) {
    pattern.lost[i] = rng.bernoulli(cfg.p_loss);
    if (pattern.lost[i]) detail::measure_and_reset(state, photons[i], rng);
  }
  pattern.detectable = cfg.encoding == PhotonEncoding::Polarization && pattern.any();
  return pattern;
}

/// One round without a backup copy: joint emission, loss, beam splitter.
///
/// A silent loss (occupation encoding) lets the beam-splitter readout run on
/// emptied modes, so the reported effect can be wrong; that is the failure
/// the backup protocol exists to prevent.
inline RoundReport direct_round(StateVector& state, std::array<std::size_t, 2> pair,
                                std::array<std::size_t, 2> photons, double eps, const LossConfig& cfg, Rng& rng) {
  joint_emission(state, pair, photons, eps);
  RoundReport report;
  report.loss = loss_channel(state, photons, cfg, rng);
  if (report.loss.detectable) {
    // Surviving photons still hit a detector.
    for (std::size_t i = 0; i < 2; ++i)
      if (!report.loss.lost[i]) detail::measure_and_reset(state, photons[i], rng);
    report.effect = RoundEffect::unknown();
    return report;
  }
  const auto bs = beamsplitter_measure(state, photons, rng);
  report.outcome = bs.outcome;
  report.effect = effect_of(bs.outcome);
  return report;
}

/// One round of the loss-tolerant protocol on atoms `pair_a` with backup
/// atoms `pair_b`.
///
/// Both photons detected: beam-splitter readout, then the backups are read in
/// the |+>, |-> basis; the product of their signs flips the time direction.
/// Any photon missing: the backups are read in the computational basis,
/// which pins the atoms to one known Pauli branch and no rotation happens.
inline RoundReport backup_round(StateVector& state, std::array<std::size_t, 2> pair_a,
                                std::array<std::size_t, 2> pair_b, std::array<std::size_t, 2> photons, double eps,
                                const LossConfig& cfg, Rng& rng) {
  if (!cfg.backup_enabled) throw ProtocolError("backup_round called with backup disabled");
  for (auto p : photons)
    if (excitation_probability(state, p) > 1e-10) throw ProtocolError("photon modes are not empty");

  backup_entangle(state, pair_a[0], pair_b[0], eps);
  backup_entangle(state, pair_a[1], pair_b[1], 1.0 - eps);
  apply_local(state, pair_a[1], pauli_matrix(PauliAxis::X));
  photon_copy(state, pair_b[0], photons[0]);
  photon_copy(state, pair_b[1], photons[1]);
  apply_local(state, photons[0], detail::phase_gate());

  RoundReport report;
  report.loss = loss_channel(state, photons, cfg, rng);

  if (!report.loss.any()) {
    const auto bs = beamsplitter_measure(state, photons, rng);
    const int s0 = detail::measure_x_and_reset(state, pair_b[0], rng);
    const int s1 = detail::measure_x_and_reset(state, pair_b[1], rng);
    report.outcome = bs.outcome;
    report.b_basis = BackupBasis::X;
    report.b_bits = std::array<int, 2>{s0, s1};
    report.effect = effect_of(bs.outcome);
    if (report.effect.kind == RoundEffectKind::Rotation && (s0 ^ s1)) report.effect.sign = -report.effect.sign;
    return report;
  }

  for (std::size_t i = 0; i < 2; ++i)
    if (!report.loss.lost[i]) detail::measure_and_reset(state, photons[i], rng);
  const int b0 = detail::measure_and_reset(state, pair_b[0], rng);
  const int b1 = detail::measure_and_reset(state, pair_b[1], rng);
  report.b_basis = BackupBasis::Z;
  report.b_bits = std::array<int, 2>{b0, b1};
  // (b0, b1) = (0,1): identity, (1,0): X X, (0,0): 1 X, (1,1): X 1.
  report.effect = RoundEffect::pauli(b0 == 1, b1 == 0);
  return report;
}

/// Pauli string for a RoundEffect's flips, embedded at `pair` with axes
/// (k, l): flips on the first qubit become sigma_k, on the second sigma_l.
inline PauliString effect_pauli(const RoundEffect& e, std::size_t n, std::array<std::size_t, 2> pair,
                                PauliAxis k = PauliAxis::X, PauliAxis l = PauliAxis::X) {
  std::vector<PauliAxis> axes(n, PauliAxis::I);
  if (e.flips[0]) axes.at(pair[0]) = k;
  if (e.flips[1]) axes.at(pair[1]) = l;
  return PauliString(std::move(axes));
}

/// backup_round with X X axes that folds Pauli effects straight into `frame`.
inline RoundReport backup_round(StateVector& state, std::array<std::size_t, 2> pair_a,
                                std::array<std::size_t, 2> pair_b, std::array<std::size_t, 2> photons, double eps,
                                ErrorFrame& frame, const LossConfig& cfg, Rng& rng) {
  auto report = backup_round(state, pair_a, pair_b, photons, eps, cfg, rng);
  if (report.effect.kind == RoundEffectKind::Pauli) frame.push(effect_pauli(report.effect, frame.size(), pair_a));
  return report;
}

enum class RoundClass { PlusRotation, MinusRotation, KnownPauli, Unresolved };

/// Test oracle: which candidate operation maps `before` to `after`?
/// Candidates are exp(+-i t X X) on `pair` and `frame_delta`.
inline RoundClass classify_round_effect(const StateVector& before, const StateVector& after,
                                        std::array<std::size_t, 2> pair, double t_round,
                                        const PauliString& frame_delta) {
  constexpr double kTol = 1e-9;
  const auto xx = PauliString::two_site(before.num_qubits(), pair[0], PauliAxis::X, pair[1], PauliAxis::X);
  StateVector plus = before;
  apply_pauli_rotation(plus, xx, t_round);
  if (fidelity(plus, after) >= 1.0 - kTol) return RoundClass::PlusRotation;
  StateVector minus = before;
  apply_pauli_rotation(minus, xx, -t_round);
  if (fidelity(minus, after) >= 1.0 - kTol) return RoundClass::MinusRotation;
  StateVector flipped = before;
  apply_pauli(flipped, frame_delta.without_phase());
  if (fidelity(flipped, after) >= 1.0 - kTol) return RoundClass::KnownPauli;
  return RoundClass::Unresolved;
}

}  // namespace mfsim
