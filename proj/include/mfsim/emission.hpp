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

// Photon emission map, joint two-atom emission and the four-outcome
// beam-splitter measurement.
//
// Photon modes are qubits with |V> = |0> and |H> = |1>. Under the occupation
// encoding V is the empty mode; under the polarization encoding it is a
// V-polarized photon.

#include <array>
#include <cmath>
#include <cstddef>
#include <string>
#include <string_view>

#include "mfsim/errors.hpp"
#include "mfsim/rng.hpp"
#include "mfsim/statevec.hpp"

namespace mfsim {

enum class PhotonEncoding { Occupation, Polarization };

/// Plus/Minus: (|HV> +/- |VH>)/sqrt2; HH, VV: product states.
enum class BeamSplitterOutcome { Plus = 0, Minus = 1, HH = 2, VV = 3 };

inline constexpr std::array<BeamSplitterOutcome, 4> kAllOutcomes{
    BeamSplitterOutcome::Plus, BeamSplitterOutcome::Minus, BeamSplitterOutcome::HH, BeamSplitterOutcome::VV};

constexpr std::string_view outcome_name(BeamSplitterOutcome o) {
  switch (o) {
    case BeamSplitterOutcome::Plus: return "plus";
    case BeamSplitterOutcome::Minus: return "minus";
    case BeamSplitterOutcome::HH: return "HH";
    case BeamSplitterOutcome::VV: return "VV";
  }
  return "?";
}

constexpr std::string_view encoding_name(PhotonEncoding e) {
  return e == PhotonEncoding::Occupation ? "occupation" : "polarization";
}

inline PhotonEncoding encoding_from_name(std::string_view s) {
  if (s == "occupation") return PhotonEncoding::Occupation;
  if (s == "polarization") return PhotonEncoding::Polarization;
  throw ConfigError("unknown photon encoding '" + std::string(s) + "'");
}

/// 4x4 unitary on (atom, photon) implementing
///   |a>|V> -> sqrt(1-eps)|a>|V> + sqrt(eps)|a^1>|H>
///   |a>|H> -> -sqrt(eps)|a^1>|V> + sqrt(1-eps)|a>|H>
/// in the apply_two_qubit convention (atom is the first qubit).
inline Matrix4 emission_unitary(double eps) {
  if (!(eps >= 0.0 && eps <= 1.0)) throw UsageError("eps must lie in [0, 1]");
  const double s = std::sqrt(1.0 - eps);
  const double e = std::sqrt(eps);
  Matrix4 u = Matrix4::Zero();
  // index = atom + 2 * photon
  u(0, 0) = s;  // |0V> -> s|0V>
  u(3, 0) = e;  //        + e|1H>
  u(1, 1) = s;  // |1V> -> s|1V>
  u(2, 1) = e;  //        + e|0H>
  u(1, 2) = -e; // |0H> -> -e|1V>
  u(2, 2) = s;  //        + s|0H>
  u(0, 3) = -e; // |1H> -> -e|0V>
  u(3, 3) = s;  //        + s|1H>
  return u;
}

namespace detail {

inline void require_empty_mode(const StateVector& state, std::size_t photon) {
  if (excitation_probability(state, photon) > 1e-10)
    throw ProtocolError("photon mode " + std::to_string(photon) + " is not in |V>");
}

inline Matrix2 phase_gate() {
  Matrix2 s;
  s << 1, 0, 0, Complex(0, 1);
  return s;
}

}  // namespace detail

inline void u_eps(StateVector& state, std::size_t atom, std::size_t photon, double eps) {
  const Matrix4 u = emission_unitary(eps);
  detail::require_empty_mode(state, photon);
  apply_two_qubit(state, atom, photon, u);
}

/// U_eps on atoms[0], U_(1-eps) then a bit flip on atoms[1], then an extra
/// phase i on the H component of photons[0]. Afterwards
///   (1-eps)|psi>|VH> + i eps (X X)|psi>|HV>
///   + sqrt(eps(1-eps)) (1 X)|psi>|VV> + i sqrt(eps(1-eps)) (X 1)|psi>|HH>
/// with photon order (photons[0], photons[1]).
inline void joint_emission(StateVector& state, std::array<std::size_t, 2> atoms, std::array<std::size_t, 2> photons,
                           double eps) {
  if (!(eps >= 0.0 && eps <= 1.0)) throw UsageError("eps must lie in [0, 1]");
  detail::require_empty_mode(state, photons[0]);
  detail::require_empty_mode(state, photons[1]);
  u_eps(state, atoms[0], photons[0], eps);
  u_eps(state, atoms[1], photons[1], 1.0 - eps);
  apply_local(state, atoms[1], pauli_matrix(PauliAxis::X));
  apply_local(state, photons[0], detail::phase_gate());
}

/// Two-photon states onto which the beam-splitter measurement projects, in
/// BeamSplitterOutcome order. Local index = bit(photon0) + 2*bit(photon1).
inline const std::array<VectorX, 4>& beamsplitter_basis() {
  static const std::array<VectorX, 4> basis = [] {
    const double h = 1.0 / std::sqrt(2.0);
    std::array<VectorX, 4> b;
    for (auto& v : b) v = VectorX::Zero(4);
    b[0][1] = h;  // Plus  = (|HV> + |VH>)/sqrt2
    b[0][2] = h;
    b[1][1] = h;  // Minus = (|HV> - |VH>)/sqrt2
    b[1][2] = -h;
    b[2][3] = 1;  // HH
    b[3][0] = 1;  // VV
    return b;
  }();
  return basis;
}

inline const std::array<MatrixX, 4>& beamsplitter_projectors() {
  static const std::array<MatrixX, 4> proj = [] {
    std::array<MatrixX, 4> p;
    for (std::size_t i = 0; i < 4; ++i) p[i] = beamsplitter_basis()[i] * beamsplitter_basis()[i].adjoint();
    return p;
  }();
  return proj;
}

struct BeamSplitterResult {
  BeamSplitterOutcome outcome = BeamSplitterOutcome::VV;
  double probability = 0.0;
};

/// Measures both photon modes in the beam-splitter basis and empties them.
inline BeamSplitterResult beamsplitter_measure(StateVector& state, std::array<std::size_t, 2> photons, Rng& rng) {
  const auto& proj = beamsplitter_projectors();
  const auto r = measure(state, photons, proj, rng);
  release_qubits(state, photons, beamsplitter_basis()[r.outcome]);
  return {static_cast<BeamSplitterOutcome>(r.outcome), r.probability};
}

/// Outcome probabilities for any input, in BeamSplitterOutcome order.
constexpr std::array<double, 4> analytic_outcome_probabilities(double eps) {
  const double pm = 0.5 * ((1.0 - eps) * (1.0 - eps) + eps * eps);
  const double mixed = eps * (1.0 - eps);
  return {pm, pm, mixed, mixed};
}

/// Rotation angle produced by a Plus outcome at emission parameter eps.
inline double rotation_angle(double eps) { return std::atan2(eps, 1.0 - eps); }

/// Inverse of rotation_angle for theta in [0, pi/2].
inline double eps_for_angle(double theta) {
  const double s = std::sin(theta);
  const double c = std::cos(theta);
  return s / (s + c);
}

}  // namespace mfsim
