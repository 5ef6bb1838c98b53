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
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include <json.hpp>

#include "mfsim/errors.hpp"
#include "mfsim/pauli.hpp"

namespace mfsim {

/// coeff * sigma_k(x) sigma_l(y).
struct PairTerm {
  std::array<std::size_t, 2> sites{0, 1};
  std::array<PauliAxis, 2> axes{PauliAxis::X, PauliAxis::X};
  double coeff = 1.0;

  PauliString pauli(std::size_t n_qubits) const {
    return PauliString::two_site(n_qubits, sites[0], axes[0], sites[1], axes[1]);
  }

  std::string axes_str() const { return {axis_char(axes[0]), axis_char(axes[1])}; }

  friend bool operator==(const PairTerm&, const PairTerm&) = default;
};

/// Weighted sum of two-qubit Pauli terms.
struct HamiltonianSpec {
  std::size_t n_qubits = 0;
  std::vector<PairTerm> terms;

  void validate() const {
    for (const auto& t : terms) {
      if (t.sites[0] >= n_qubits || t.sites[1] >= n_qubits)
        throw UsageError("Hamiltonian term site out of range");
      if (t.sites[0] == t.sites[1]) throw UsageError("Hamiltonian term sites must be distinct");
      if (t.axes[0] == PauliAxis::I || t.axes[1] == PauliAxis::I)
        throw UsageError("Hamiltonian term axes must be X, Y or Z");
      if (!std::isfinite(t.coeff)) throw UsageError("Hamiltonian coefficient must be finite");
    }
  }

  friend bool operator==(const HamiltonianSpec&, const HamiltonianSpec&) = default;
};

inline void to_json(nlohmann::json& j, const PairTerm& t) {
  j = nlohmann::json{{"sites", {t.sites[0], t.sites[1]}}, {"axes", t.axes_str()}, {"coeff", t.coeff}};
}

inline void from_json(const nlohmann::json& j, PairTerm& t) {
  try {
    const auto& s = j.at("sites");
    if (!s.is_array() || s.size() != 2) throw ConfigError("term 'sites' must be [x, y]");
    t.sites = {s[0].get<std::size_t>(), s[1].get<std::size_t>()};
    const auto axes = j.at("axes").get<std::string>();
    if (axes.size() != 2) throw ConfigError("term 'axes' must have two characters, e.g. \"XZ\"");
    t.axes = {axis_from_char(axes[0]), axis_from_char(axes[1])};
    t.coeff = j.at("coeff").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad Hamiltonian term: ") + e.what());
  } catch (const UsageError& e) {
    throw ConfigError(std::string("bad Hamiltonian term: ") + e.what());
  }
}

inline void to_json(nlohmann::json& j, const HamiltonianSpec& h) {
  j = nlohmann::json{{"n_qubits", h.n_qubits}, {"terms", h.terms}};
}

inline void from_json(const nlohmann::json& j, HamiltonianSpec& h) {
  try {
    h.n_qubits = j.at("n_qubits").get<std::size_t>();
    h.terms = j.at("terms").get<std::vector<PairTerm>>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad Hamiltonian: ") + e.what());
  }
  try {
    h.validate();
  } catch (const UsageError& e) {
    throw ConfigError(e.what());
  }
}

}  // namespace mfsim
