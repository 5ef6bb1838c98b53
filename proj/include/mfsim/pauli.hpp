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

#include <array>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "mfsim/errors.hpp"

namespace mfsim {

enum class PauliAxis : std::uint8_t { I = 0, X = 1, Y = 2, Z = 3 };

constexpr char axis_char(PauliAxis a) { return "IXYZ"[static_cast<int>(a)]; }

inline PauliAxis axis_from_char(char c) {
  switch (c) {
    case 'I': return PauliAxis::I;
    case 'X': return PauliAxis::X;
    case 'Y': return PauliAxis::Y;
    case 'Z': return PauliAxis::Z;
    default: throw UsageError(std::string("invalid Pauli character '") + c + "'");
  }
}

namespace detail {

// Symplectic bits: X=(1,0), Y=(1,1), Z=(0,1).
constexpr bool x_bit(PauliAxis a) { return a == PauliAxis::X || a == PauliAxis::Y; }
constexpr bool z_bit(PauliAxis a) { return a == PauliAxis::Z || a == PauliAxis::Y; }

constexpr PauliAxis axis_from_bits(bool x, bool z) {
  if (x) return z ? PauliAxis::Y : PauliAxis::X;
  return z ? PauliAxis::Z : PauliAxis::I;
}

// Power of i picked up by a*b on a single qubit. XY=iZ, YZ=iX, ZX=iY; the
// reversed orders give -i.
constexpr int single_site_phase(PauliAxis a, PauliAxis b) {
  if (a == PauliAxis::I || b == PauliAxis::I || a == b) return 0;
  const int ia = static_cast<int>(a);
  const int ib = static_cast<int>(b);
  // X=1, Y=2, Z=3 is cyclic order.
  return ((ib - ia + 3) % 3 == 1) ? 1 : 3;
}

}  // namespace detail

/// Tensor product of single-qubit Paulis with a global factor i^phase_power.
/// Character/axis i of the string acts on register qubit i.
class PauliString {
 public:
  PauliString() = default;

  /// All-identity string on `n` qubits.
  explicit PauliString(std::size_t n) : axes_(n, PauliAxis::I) {}

  PauliString(std::vector<PauliAxis> axes, int phase_power = 0)
      : axes_(std::move(axes)), phase_power_(static_cast<std::uint8_t>(((phase_power % 4) + 4) % 4)) {}

  /// Parses e.g. "XIZ", "-XIZ", "iXY", "-iZ". Without a prefix the phase is +1.
  static PauliString from_str(std::string_view text) {
    int phase = 0;
    if (!text.empty() && (text.front() == '+' || text.front() == '-')) {
      if (text.front() == '-') phase = 2;
      text.remove_prefix(1);
    }
    if (!text.empty() && text.front() == 'i') {
      phase += 1;
      text.remove_prefix(1);
    }
    std::vector<PauliAxis> axes;
    axes.reserve(text.size());
    for (char c : text) axes.push_back(axis_from_char(c));
    return PauliString(std::move(axes), phase);
  }

  /// `a` on qubit `x` and `b` on qubit `y`, identity elsewhere.
  static PauliString two_site(std::size_t n, std::size_t x, PauliAxis a, std::size_t y, PauliAxis b) {
    if (x >= n || y >= n || x == y) throw UsageError("two_site: sites must be distinct and < n");
    PauliString p(n);
    p.axes_[x] = a;
    p.axes_[y] = b;
    return p;
  }

  std::size_t size() const { return axes_.size(); }
  int phase_power() const { return phase_power_; }
  PauliAxis operator[](std::size_t q) const { return axes_[q]; }
  const std::vector<PauliAxis>& axes() const { return axes_; }

  bool is_identity() const {
    for (auto a : axes_)
      if (a != PauliAxis::I) return false;
    return true;
  }

  /// Same string with phase_power forced to 0.
  PauliString without_phase() const { return PauliString(axes_, 0); }

  std::string str() const {
    std::string s;
    switch (phase_power_) {
      case 1: s = "i"; break;
      case 2: s = "-"; break;
      case 3: s = "-i"; break;
      default: break;
    }
    for (auto a : axes_) s.push_back(axis_char(a));
    return s;
  }

  /// Axes-only rendering, no phase prefix.
  std::string axes_str() const {
    std::string s;
    for (auto a : axes_) s.push_back(axis_char(a));
    return s;
  }

  friend bool operator==(const PauliString&, const PauliString&) = default;

 private:
  std::vector<PauliAxis> axes_;
  std::uint8_t phase_power_ = 0;
};

inline PauliString multiply(const PauliString& p, const PauliString& q) {
  if (p.size() != q.size()) throw UsageError("multiply: Pauli string length mismatch");
  std::vector<PauliAxis> axes(p.size());
  int phase = p.phase_power() + q.phase_power();
  for (std::size_t i = 0; i < p.size(); ++i) {
    phase += detail::single_site_phase(p[i], q[i]);
    axes[i] = detail::axis_from_bits(detail::x_bit(p[i]) != detail::x_bit(q[i]),
                                     detail::z_bit(p[i]) != detail::z_bit(q[i]));
  }
  return PauliString(std::move(axes), phase);
}

inline PauliString operator*(const PauliString& p, const PauliString& q) { return multiply(p, q); }

inline bool commutes(const PauliString& p, const PauliString& q) {
  if (p.size() != q.size()) throw UsageError("commutes: Pauli string length mismatch");
  std::size_t clashes = 0;
  for (std::size_t i = 0; i < p.size(); ++i)
    if (p[i] != PauliAxis::I && q[i] != PauliAxis::I && p[i] != q[i]) ++clashes;
  return clashes % 2 == 0;
}

/// Accumulated byproduct operator of a trajectory. Global phase is dropped:
/// the byproduct is always stored with phase_power 0.
class ErrorFrame {
 public:
  ErrorFrame() = default;
  explicit ErrorFrame(std::size_t n) : byproduct_(n) {}
  explicit ErrorFrame(const PauliString& p) : byproduct_(p.without_phase()) {}

  const PauliString& byproduct() const { return byproduct_; }
  std::size_t size() const { return byproduct_.size(); }

  /// Records that `p` was applied physically after everything already in the
  /// frame.
  void push(const PauliString& p) { byproduct_ = multiply(p, byproduct_).without_phase(); }

  friend bool operator==(const ErrorFrame&, const ErrorFrame&) = default;

 private:
  PauliString byproduct_;
};

/// +1 if a rotation about `target` passes through the frame unchanged, -1 if
/// the frame inverts its time direction (the two anticommute).
inline int frame_conjugate_direction(const ErrorFrame& frame, const PauliString& target) {
  return commutes(frame.byproduct(), target) ? +1 : -1;
}

using Matrix2 = Eigen::Matrix2cd;

inline Matrix2 pauli_matrix(PauliAxis a) {
  using C = std::complex<double>;
  Matrix2 m;
  switch (a) {
    case PauliAxis::I: m << 1, 0, 0, 1; break;
    case PauliAxis::X: m << 0, 1, 1, 0; break;
    case PauliAxis::Y: m << 0, C(0, -1), C(0, 1), 0; break;
    case PauliAxis::Z: m << 1, 0, 0, -1; break;
  }
  return m;
}

/// Single-qubit Clifford u with u X u^dagger = sigma_k: identity for X, the
/// phase gate diag(1, i) for Y, Hadamard for Z.
inline Matrix2 conjugation_unitary(PauliAxis k) {
  using C = std::complex<double>;
  Matrix2 u;
  switch (k) {
    case PauliAxis::X: u = Matrix2::Identity(); break;
    case PauliAxis::Y: u << 1, 0, 0, C(0, 1); break;
    case PauliAxis::Z: {
      const double h = 1.0 / std::sqrt(2.0);
      u << h, h, h, -h;
      break;
    }
    case PauliAxis::I: throw UsageError("conjugation_unitary: axis must be X, Y or Z");
  }
  return u;
}

}  // namespace mfsim
