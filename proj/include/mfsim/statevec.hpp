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

// Dense state-vector engine for small registers.
//
// Qubit ordering is little-endian everywhere: qubit q is bit q of the
// amplitude index. Two-qubit matrices passed to apply_two_qubit are indexed
// by bit(first) + 2 * bit(second).

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "mfsim/errors.hpp"
#include "mfsim/hamiltonian.hpp"
#include "mfsim/pauli.hpp"
#include "mfsim/rng.hpp"

namespace mfsim {

using Complex = std::complex<double>;
using Matrix4 = Eigen::Matrix4cd;
using MatrixX = Eigen::MatrixXcd;
using VectorX = Eigen::VectorXcd;

inline constexpr std::size_t kDefaultQubitCap = 12;

enum class QubitRole { DataA, BackupB, PhotonMode };

/// Assignment of roles to register qubits.
///
/// Data qubits always occupy the lowest indices, followed by one backup qubit
/// per data qubit (when present) and finally the photon modes. The photon
/// modes are the two input ports of the beam splitter: whichever two cavities
/// take part in a round emit into port 0 and port 1 respectively, and the
/// ports are emptied by every measurement.
class RegisterLayout {
 public:
  RegisterLayout() = default;

  static RegisterLayout data_only(std::size_t n) { return RegisterLayout(n, false, 0); }

  static RegisterLayout cavities(std::size_t n_data, bool with_backup, std::size_t photon_ports = 2) {
    return RegisterLayout(n_data, with_backup, photon_ports);
  }

  std::size_t total_qubits() const { return roles_.size(); }
  std::size_t data_count() const { return n_data_; }
  bool has_backup() const { return with_backup_; }
  QubitRole role(std::size_t q) const { return roles_.at(q); }

  std::size_t backup_of(std::size_t data_qubit) const {
    if (!with_backup_) throw UsageError("layout has no backup qubits");
    if (data_qubit >= n_data_) throw UsageError("backup_of: not a data qubit");
    return n_data_ + data_qubit;
  }

  std::array<std::size_t, 2> photon_ports() const {
    if (n_photons_ < 2) throw UsageError("layout has fewer than two photon modes");
    const std::size_t base = n_data_ * (with_backup_ ? 2 : 1);
    return {base, base + 1};
  }

  friend bool operator==(const RegisterLayout&, const RegisterLayout&) = default;

 private:
  RegisterLayout(std::size_t n_data, bool with_backup, std::size_t photons)
      : n_data_(n_data), n_photons_(photons), with_backup_(with_backup) {
    roles_.assign(n_data, QubitRole::DataA);
    if (with_backup) roles_.insert(roles_.end(), n_data, QubitRole::BackupB);
    roles_.insert(roles_.end(), photons, QubitRole::PhotonMode);
  }

  std::vector<QubitRole> roles_;
  std::size_t n_data_ = 0;
  std::size_t n_photons_ = 0;
  bool with_backup_ = false;
};

class StateVector {
 public:
  StateVector() = default;

  /// |0...0> on the given layout.
  explicit StateVector(RegisterLayout layout) : layout_(std::move(layout)) {
    amps_ = VectorX::Zero(std::size_t{1} << layout_.total_qubits());
    amps_[0] = 1.0;
  }

  /// Takes ownership of explicit amplitudes; they must already be normalized.
  StateVector(RegisterLayout layout, VectorX amps) : layout_(std::move(layout)), amps_(std::move(amps)) {
    if (static_cast<std::size_t>(amps_.size()) != (std::size_t{1} << layout_.total_qubits()))
      throw UsageError("amplitude count does not match layout");
    if (std::abs(amps_.squaredNorm() - 1.0) > 1e-10) throw UsageError("state is not normalized");
  }

  static StateVector basis(RegisterLayout layout, std::size_t index) {
    StateVector s(std::move(layout));
    if (index >= static_cast<std::size_t>(s.amps_.size())) throw UsageError("basis index out of range");
    s.amps_[0] = 0.0;
    s.amps_[static_cast<Eigen::Index>(index)] = 1.0;
    return s;
  }

  const RegisterLayout& layout() const { return layout_; }
  std::size_t num_qubits() const { return layout_.total_qubits(); }
  const VectorX& amplitudes() const { return amps_; }
  VectorX& mutable_amplitudes() { return amps_; }
  double norm_squared() const { return amps_.squaredNorm(); }

 private:
  RegisterLayout layout_;
  VectorX amps_;
};

namespace detail {

inline bool is_unitary(const MatrixX& u, double tol = 1e-10) {
  if (u.rows() != u.cols()) return false;
  return ((u.adjoint() * u) - MatrixX::Identity(u.rows(), u.cols())).cwiseAbs().maxCoeff() <= tol;
}

inline void check_qubit(const StateVector& s, std::size_t q) {
  if (q >= s.num_qubits()) throw UsageError("qubit index " + std::to_string(q) + " out of range");
}

// Applies a 2^k x 2^k matrix to the listed qubits (qubits[0] is the least
// significant bit of the local index).
inline void apply_on_subset(VectorX& amps, std::span<const std::size_t> qubits, const MatrixX& u) {
  const std::size_t k = qubits.size();
  const std::size_t local_dim = std::size_t{1} << k;
  std::size_t mask = 0;
  std::vector<std::size_t> offsets(local_dim, 0);
  for (std::size_t b = 0; b < k; ++b) mask |= std::size_t{1} << qubits[b];
  for (std::size_t j = 0; j < local_dim; ++j)
    for (std::size_t b = 0; b < k; ++b)
      if ((j >> b) & 1U) offsets[j] |= std::size_t{1} << qubits[b];

  VectorX in(static_cast<Eigen::Index>(local_dim));
  const std::size_t dim = static_cast<std::size_t>(amps.size());
  for (std::size_t base = 0; base < dim; ++base) {
    if (base & mask) continue;
    for (std::size_t j = 0; j < local_dim; ++j) in[static_cast<Eigen::Index>(j)] = amps[static_cast<Eigen::Index>(base | offsets[j])];
    const VectorX out = u * in;
    for (std::size_t j = 0; j < local_dim; ++j) amps[static_cast<Eigen::Index>(base | offsets[j])] = out[static_cast<Eigen::Index>(j)];
  }
}

}  // namespace detail

/// Matrix of a_first (on the first qubit) times b_second (on the second), in
/// the apply_two_qubit index convention.
inline Matrix4 kron_pair(const Matrix2& on_first, const Matrix2& on_second) {
  Matrix4 m;
  for (int r1 = 0; r1 < 2; ++r1)
    for (int r2 = 0; r2 < 2; ++r2)
      for (int c1 = 0; c1 < 2; ++c1)
        for (int c2 = 0; c2 < 2; ++c2) m(r1 + 2 * r2, c1 + 2 * c2) = on_first(r1, c1) * on_second(r2, c2);
  return m;
}

inline void apply_local(StateVector& state, std::size_t qubit, const Matrix2& u) {
  detail::check_qubit(state, qubit);
  if (!detail::is_unitary(u)) throw UsageError("apply_local: matrix is not unitary");
  auto& a = state.mutable_amplitudes();
  const std::size_t bit = std::size_t{1} << qubit;
  const std::size_t dim = static_cast<std::size_t>(a.size());
  for (std::size_t i = 0; i < dim; ++i) {
    if (i & bit) continue;
    const auto i0 = static_cast<Eigen::Index>(i);
    const auto i1 = static_cast<Eigen::Index>(i | bit);
    const Complex v0 = a[i0];
    const Complex v1 = a[i1];
    a[i0] = u(0, 0) * v0 + u(0, 1) * v1;
    a[i1] = u(1, 0) * v0 + u(1, 1) * v1;
  }
}

inline void apply_two_qubit(StateVector& state, std::size_t q0, std::size_t q1, const Matrix4& u) {
  detail::check_qubit(state, q0);
  detail::check_qubit(state, q1);
  if (q0 == q1) throw UsageError("apply_two_qubit: qubits must be distinct");
  if (!detail::is_unitary(u)) throw UsageError("apply_two_qubit: matrix is not unitary");
  auto& a = state.mutable_amplitudes();
  const std::size_t b0 = std::size_t{1} << q0;
  const std::size_t b1 = std::size_t{1} << q1;
  const std::size_t dim = static_cast<std::size_t>(a.size());
  for (std::size_t i = 0; i < dim; ++i) {
    if (i & (b0 | b1)) continue;
    const std::array<Eigen::Index, 4> idx{static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i | b0),
                                          static_cast<Eigen::Index>(i | b1),
                                          static_cast<Eigen::Index>(i | b0 | b1)};
    const std::array<Complex, 4> v{a[idx[0]], a[idx[1]], a[idx[2]], a[idx[3]]};
    for (int r = 0; r < 4; ++r) a[idx[r]] = u(r, 0) * v[0] + u(r, 1) * v[1] + u(r, 2) * v[2] + u(r, 3) * v[3];
  }
}

/// Where a Pauli string sends basis state |j>: returns (j', c) with P|j> = c|j'>.
inline std::pair<std::size_t, Complex> pauli_action(const PauliString& p, std::size_t j) {
  static constexpr std::array<Complex, 4> kIPow{Complex(1, 0), Complex(0, 1), Complex(-1, 0), Complex(0, -1)};
  int phase = p.phase_power();
  std::size_t out = j;
  for (std::size_t q = 0; q < p.size(); ++q) {
    const bool bit = (j >> q) & 1U;
    switch (p[q]) {
      case PauliAxis::I: break;
      case PauliAxis::X: out ^= std::size_t{1} << q; break;
      case PauliAxis::Y:
        out ^= std::size_t{1} << q;
        phase += bit ? 3 : 1;  // Y|0> = i|1>, Y|1> = -i|0>
        break;
      case PauliAxis::Z:
        if (bit) phase += 2;
        break;
    }
  }
  return {out, kIPow[static_cast<std::size_t>(phase % 4)]};
}

/// Applies a Pauli string (including its phase) to the first p.size() qubits.
inline void apply_pauli(StateVector& state, const PauliString& p) {
  if (p.size() > state.num_qubits()) throw UsageError("apply_pauli: string longer than register");
  const VectorX& in = state.amplitudes();
  VectorX out = VectorX::Zero(in.size());
  for (Eigen::Index j = 0; j < in.size(); ++j) {
    const auto [k, c] = pauli_action(p, static_cast<std::size_t>(j));
    out[static_cast<Eigen::Index>(k)] += c * in[j];
  }
  state.mutable_amplitudes() = std::move(out);
}

/// exp(i theta P) for a phase-free Pauli string P.
inline void apply_pauli_rotation(StateVector& state, const PauliString& p, double theta) {
  if (p.phase_power() != 0) throw UsageError("apply_pauli_rotation: Pauli must be Hermitian (phase 0)");
  StateVector flipped = state;
  apply_pauli(flipped, p);
  state.mutable_amplitudes() = std::cos(theta) * state.amplitudes() + Complex(0, std::sin(theta)) * flipped.amplitudes();
}

/// Probability that `qubit` reads 1.
inline double excitation_probability(const StateVector& state, std::size_t qubit) {
  detail::check_qubit(state, qubit);
  const std::size_t bit = std::size_t{1} << qubit;
  double p = 0.0;
  const auto& a = state.amplitudes();
  for (Eigen::Index i = 0; i < a.size(); ++i)
    if (static_cast<std::size_t>(i) & bit) p += std::norm(a[i]);
  return p;
}

struct MeasurementResult {
  std::size_t outcome = 0;
  double probability = 0.0;
};

/// Born probabilities of a projector set on `qubits` without collapsing.
inline std::vector<double> outcome_probabilities(const StateVector& state, std::span<const std::size_t> qubits,
                                                 std::span<const MatrixX> projectors) {
  std::vector<double> probs;
  probs.reserve(projectors.size());
  for (const auto& proj : projectors) {
    VectorX v = state.amplitudes();
    detail::apply_on_subset(v, qubits, proj);
    probs.push_back(v.squaredNorm());
  }
  return probs;
}

/// Projective measurement of `qubits` with a complete orthogonal projector
/// set. The state collapses and is renormalized in place.
inline MeasurementResult measure(StateVector& state, std::span<const std::size_t> qubits,
                                 std::span<const MatrixX> projectors, Rng& rng) {
  for (std::size_t i = 0; i < qubits.size(); ++i) {
    detail::check_qubit(state, qubits[i]);
    for (std::size_t j = 0; j < i; ++j)
      if (qubits[i] == qubits[j]) throw UsageError("measure: repeated qubit");
  }
  const Eigen::Index local_dim = Eigen::Index{1} << qubits.size();
  if (projectors.empty()) throw UsageError("measure: empty projector set");
  MatrixX sum = MatrixX::Zero(local_dim, local_dim);
  for (std::size_t i = 0; i < projectors.size(); ++i) {
    const auto& p = projectors[i];
    if (p.rows() != local_dim || p.cols() != local_dim) throw UsageError("measure: projector dimension mismatch");
    for (std::size_t j = 0; j <= i; ++j) {
      const MatrixX prod = p * projectors[j];
      const MatrixX expected = (i == j) ? p : MatrixX::Zero(local_dim, local_dim);
      if ((prod - expected).cwiseAbs().maxCoeff() > 1e-10)
        throw UsageError("measure: projectors are not mutually orthogonal projections");
    }
    sum += p;
  }
  if ((sum - MatrixX::Identity(local_dim, local_dim)).cwiseAbs().maxCoeff() > 1e-10)
    throw UsageError("measure: projectors do not sum to identity");

  const auto probs = outcome_probabilities(state, qubits, projectors);
  const double u = rng.uniform();
  double acc = 0.0;
  std::size_t chosen = projectors.size();
  std::size_t last_nonzero = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] > 0.0) last_nonzero = i;
    acc += probs[i];
    if (u < acc && probs[i] > 0.0) {
      chosen = i;
      break;
    }
  }
  if (chosen == projectors.size()) chosen = last_nonzero;  // u landed in rounding slack

  VectorX& amps = state.mutable_amplitudes();
  detail::apply_on_subset(amps, qubits, projectors[chosen]);
  amps /= std::sqrt(probs[chosen]);
  return {chosen, probs[chosen]};
}

/// Computational-basis projectors |b><b| for a k-qubit subset.
inline std::vector<MatrixX> computational_projectors(std::size_t k) {
  const Eigen::Index d = Eigen::Index{1} << k;
  std::vector<MatrixX> out;
  for (Eigen::Index b = 0; b < d; ++b) {
    MatrixX p = MatrixX::Zero(d, d);
    p(b, b) = 1.0;
    out.push_back(std::move(p));
  }
  return out;
}

/// Returns `qubits` to |0...0> given that they are known to be in the pure
/// product factor `local_state` (e.g. right after a rank-one projection).
/// Throws ProtocolError if they are not.
inline void release_qubits(StateVector& state, std::span<const std::size_t> qubits, const VectorX& local_state) {
  const std::size_t local_dim = std::size_t{1} << qubits.size();
  if (static_cast<std::size_t>(local_state.size()) != local_dim) throw UsageError("release_qubits: dimension mismatch");
  std::size_t mask = 0;
  std::vector<std::size_t> offsets(local_dim, 0);
  for (std::size_t b = 0; b < qubits.size(); ++b) {
    detail::check_qubit(state, qubits[b]);
    mask |= std::size_t{1} << qubits[b];
  }
  for (std::size_t j = 0; j < local_dim; ++j)
    for (std::size_t b = 0; b < qubits.size(); ++b)
      if ((j >> b) & 1U) offsets[j] |= std::size_t{1} << qubits[b];

  const VectorX& in = state.amplitudes();
  VectorX out = VectorX::Zero(in.size());
  for (std::size_t base = 0; base < static_cast<std::size_t>(in.size()); ++base) {
    if (base & mask) continue;
    Complex acc = 0.0;
    for (std::size_t j = 0; j < local_dim; ++j)
      acc += std::conj(local_state[static_cast<Eigen::Index>(j)]) * in[static_cast<Eigen::Index>(base | offsets[j])];
    out[static_cast<Eigen::Index>(base)] = acc;
  }
  if (std::abs(out.squaredNorm() - 1.0) > 1e-9)
    throw ProtocolError("release_qubits: qubits are not in the stated product state");
  state.mutable_amplitudes() = std::move(out);
}

/// Dense matrix of sum_j coeff_j P_j.
inline MatrixX hamiltonian_matrix(const HamiltonianSpec& h) {
  h.validate();
  const Eigen::Index dim = Eigen::Index{1} << h.n_qubits;
  MatrixX m = MatrixX::Zero(dim, dim);
  for (const auto& term : h.terms) {
    const PauliString p = term.pauli(h.n_qubits);
    for (Eigen::Index j = 0; j < dim; ++j) {
      const auto [k, c] = pauli_action(p, static_cast<std::size_t>(j));
      m(static_cast<Eigen::Index>(k), j) += term.coeff * c;
    }
  }
  return m;
}

/// exp(i t H) via Hermitian eigendecomposition.
inline MatrixX exact_evolution(const HamiltonianSpec& h, double t, std::size_t qubit_cap = kDefaultQubitCap) {
  if (h.n_qubits > qubit_cap)
    throw ResourceError("exact_evolution: " + std::to_string(h.n_qubits) + " qubits exceeds cap of " +
                        std::to_string(qubit_cap));
  const MatrixX hm = hamiltonian_matrix(h);
  Eigen::SelfAdjointEigenSolver<MatrixX> eig(hm);
  if (eig.info() != Eigen::Success) throw std::runtime_error("exact_evolution: eigendecomposition failed");
  const Eigen::VectorXd& w = eig.eigenvalues();
  VectorX phases(w.size());
  for (Eigen::Index i = 0; i < w.size(); ++i) phases[i] = std::exp(Complex(0, t * w[i]));
  return eig.eigenvectors() * phases.asDiagonal() * eig.eigenvectors().adjoint();
}

inline double fidelity(const VectorX& a, const VectorX& b) {
  if (a.size() != b.size()) throw UsageError("fidelity: dimension mismatch");
  return std::min(1.0, std::norm(a.dot(b)));
}

/// |<a|b>|^2, independent of the global phase of either argument.
inline double fidelity(const StateVector& a, const StateVector& b) {
  if (!(a.layout() == b.layout())) throw UsageError("fidelity: layout mismatch");
  return fidelity(a.amplitudes(), b.amplitudes());
}

/// Amplitudes of the data qubits, which must be unentangled from the rest
/// of the register, with every non-data qubit in |0>.
inline VectorX data_amplitudes(const StateVector& state, double tol = 1e-10) {
  const std::size_t n = state.layout().data_count();
  const Eigen::Index dim = Eigen::Index{1} << n;
  const auto& a = state.amplitudes();
  const VectorX head = a.head(dim);
  if (std::abs(head.squaredNorm() - 1.0) > tol) throw ProtocolError("data_amplitudes: ancilla qubits are not reset");
  return head;
}

/// Data-qubit state embedded in `layout` with all ancillas in |0>.
inline StateVector embed_data(const RegisterLayout& layout, const VectorX& data) {
  const Eigen::Index dim = Eigen::Index{1} << layout.data_count();
  if (data.size() != dim) throw UsageError("embed_data: dimension mismatch");
  VectorX amps = VectorX::Zero(Eigen::Index{1} << layout.total_qubits());
  amps.head(dim) = data;
  return StateVector(layout, std::move(amps));
}

/// Debug dump: [[index, re, im], ...], amplitudes below 1e-14 omitted.
inline nlohmann::json dump_state(const StateVector& state) {
  nlohmann::json out = nlohmann::json::array();
  const auto& a = state.amplitudes();
  for (Eigen::Index i = 0; i < a.size(); ++i)
    if (std::abs(a[i]) >= 1e-14) out.push_back({i, a[i].real(), a[i].imag()});
  return out;
}

}  // namespace mfsim
