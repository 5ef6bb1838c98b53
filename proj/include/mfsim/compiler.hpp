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

// First-order Trotter compilation of two-qubit Pauli Hamiltonians into
// rotation schedules, parallel layering, and round-count estimates.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <map>
#include <numbers>
#include <set>
#include <utility>
#include <vector>

#include <json.hpp>

#include "mfsim/emission.hpp"
#include "mfsim/errors.hpp"
#include "mfsim/feedback.hpp"
#include "mfsim/hamiltonian.hpp"
#include "mfsim/pauli.hpp"
#include "mfsim/statevec.hpp"

namespace mfsim {

/// exp(i angle sigma_axes[0](sites[0]) sigma_axes[1](sites[1])).
struct Rotation {
  std::array<std::size_t, 2> sites{0, 1};
  std::array<PauliAxis, 2> axes{PauliAxis::X, PauliAxis::X};
  double angle = 0.0;
  std::size_t term = 0;  // index into HamiltonianSpec::terms

  PauliString generator(std::size_t n) const {
    return PauliString::two_site(n, sites[0], axes[0], sites[1], axes[1]);
  }
};

using Bond = std::array<std::size_t, 2>;

inline Bond bond_of(std::array<std::size_t, 2> sites) {
  return {std::min(sites[0], sites[1]), std::max(sites[0], sites[1])};
}

/// Rotations on one bond, executed in order.
struct BondBlock {
  Bond bond{0, 1};
  std::vector<Rotation> rotations;
};

/// Blocks on pairwise disjoint bonds.
using Layer = std::vector<BondBlock>;

/// One sweep of layers, repeated n_steps times.
struct TrotterPlan {
  std::size_t n_qubits = 0;
  std::size_t n_steps = 1;
  std::vector<Layer> sweep;

  std::size_t rotations_per_sweep() const {
    std::size_t c = 0;
    for (const auto& layer : sweep)
      for (const auto& block : layer) c += block.rotations.size();
    return c;
  }
  std::size_t rotation_count() const { return rotations_per_sweep() * n_steps; }
  bool empty() const { return rotations_per_sweep() == 0; }

  /// Calls f(rotation, step, position_in_sweep) in execution order.
  template <typename F>
  void for_each_rotation(F&& f) const {
    for (std::size_t step = 0; step < n_steps; ++step) {
      std::size_t pos = 0;
      for (const auto& layer : sweep)
        for (const auto& block : layer)
          for (const auto& rot : block.rotations) f(rot, step, pos++);
    }
  }
};

/// Structural check: layers site-disjoint, every term covered exactly once
/// per sweep.
inline void validate_plan(const TrotterPlan& plan, const HamiltonianSpec& h) {
  std::vector<std::size_t> seen(h.terms.size(), 0);
  for (const auto& layer : plan.sweep) {
    std::set<std::size_t> used;
    for (const auto& block : layer) {
      for (auto q : block.bond) {
        if (q >= plan.n_qubits) throw UsageError("plan: site out of range");
        if (!used.insert(q).second) throw UsageError("plan: qubit used twice in one layer");
      }
      for (const auto& rot : block.rotations) {
        if (bond_of(rot.sites) != block.bond) throw UsageError("plan: rotation outside its bond block");
        if (rot.term >= seen.size()) throw UsageError("plan: unknown term index");
        ++seen[rot.term];
      }
    }
  }
  for (auto c : seen)
    if (c != 1) throw UsageError("plan: a term is not covered exactly once per sweep");
}

/// First-order product formula: every term once per sweep with angle
/// t * coeff / n, in term-list order, one rotation per layer.
inline TrotterPlan compile(const HamiltonianSpec& h, double t, std::size_t n) {
  if (n < 1) throw UsageError("compile: n must be >= 1");
  h.validate();
  TrotterPlan plan;
  plan.n_qubits = h.n_qubits;
  plan.n_steps = n;
  for (std::size_t i = 0; i < h.terms.size(); ++i) {
    const auto& term = h.terms[i];
    Rotation rot{term.sites, term.axes, t * term.coeff / static_cast<double>(n), i};
    plan.sweep.push_back(Layer{BondBlock{bond_of(term.sites), {rot}}});
  }
  return plan;
}

struct InteractionGraph {
  std::size_t n_qubits = 0;
  std::vector<Bond> edges;

  /// Bonds in order of first appearance in the term list.
  static InteractionGraph from_hamiltonian(const HamiltonianSpec& h) {
    InteractionGraph g{h.n_qubits, {}};
    for (const auto& t : h.terms) {
      const Bond b = bond_of(t.sites);
      if (std::find(g.edges.begin(), g.edges.end(), b) == g.edges.end()) g.edges.push_back(b);
    }
    return g;
  }

  /// First-fit edge colouring in edge order.
  std::vector<std::size_t> greedy_edge_colouring() const {
    std::vector<std::size_t> colour(edges.size(), 0);
    for (std::size_t i = 0; i < edges.size(); ++i) {
      std::set<std::size_t> taken;
      for (std::size_t j = 0; j < i; ++j) {
        const bool touches = edges[j][0] == edges[i][0] || edges[j][0] == edges[i][1] ||
                             edges[j][1] == edges[i][0] || edges[j][1] == edges[i][1];
        if (touches) taken.insert(colour[j]);
      }
      std::size_t c = 0;
      while (taken.count(c)) ++c;
      colour[i] = c;
    }
    return colour;
  }
};

/// Groups the rotations of a serial plan into layers of site-disjoint bonds.
/// Rotations sharing a bond stay together, in their original order.
inline TrotterPlan schedule_parallel(const TrotterPlan& plan, const InteractionGraph& graph) {
  std::vector<Bond> bond_order;
  std::map<Bond, BondBlock> blocks;
  for (const auto& layer : plan.sweep) {
    if (layer.size() > 1) throw UsageError("schedule_parallel: plan is already layered");
    for (const auto& block : layer) {
      auto [it, inserted] = blocks.try_emplace(block.bond, BondBlock{block.bond, {}});
      if (inserted) bond_order.push_back(block.bond);
      it->second.rotations.insert(it->second.rotations.end(), block.rotations.begin(), block.rotations.end());
    }
  }
  const auto colour = graph.greedy_edge_colouring();
  std::map<Bond, std::size_t> colour_of;
  for (std::size_t i = 0; i < graph.edges.size(); ++i) colour_of[bond_of(graph.edges[i])] = colour[i];

  std::map<std::size_t, Layer> by_colour;
  for (const auto& b : bond_order) {
    const auto it = colour_of.find(b);
    if (it == colour_of.end()) throw UsageError("schedule_parallel: plan uses a bond missing from the graph");
    by_colour[it->second].push_back(std::move(blocks.at(b)));
  }
  TrotterPlan out;
  out.n_qubits = plan.n_qubits;
  out.n_steps = plan.n_steps;
  for (auto& [c, layer] : by_colour) out.sweep.push_back(std::move(layer));
  return out;
}

/// Noiseless dense execution of a plan on a data-only state.
inline void execute_noiseless(const TrotterPlan& plan, StateVector& state) {
  if (state.num_qubits() != plan.n_qubits) throw UsageError("execute_noiseless: register size mismatch");
  plan.for_each_rotation([&](const Rotation& rot, std::size_t, std::size_t) {
    apply_pauli_rotation(state, rot.generator(plan.n_qubits), rot.angle);
  });
}

/// Dense unitary of the noiseless plan.
inline MatrixX plan_unitary(const TrotterPlan& plan, std::size_t qubit_cap = kDefaultQubitCap) {
  if (plan.n_qubits > qubit_cap) throw ResourceError("plan_unitary: register exceeds cap");
  const std::size_t dim = std::size_t{1} << plan.n_qubits;
  MatrixX u(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
  const auto layout = RegisterLayout::data_only(plan.n_qubits);
  for (std::size_t c = 0; c < dim; ++c) {
    auto s = StateVector::basis(layout, c);
    execute_noiseless(plan, s);
    u.col(static_cast<Eigen::Index>(c)) = s.amplitudes();
  }
  return u;
}

/// Largest singular value.
inline double operator_norm(const MatrixX& m) {
  Eigen::JacobiSVD<MatrixX> svd(m);
  return svd.singularValues()(0);
}

// ---------------------------------------------------------------------------
// Round-count laws.

inline constexpr std::size_t kRoundHorizon = 256;

/// Mean of a geometric law with per-round success probability p.
inline double expected_rounds_geometric(double p) {
  if (!(p > 0.0 && p <= 1.0)) throw UsageError("success probability must lie in (0, 1]");
  return 1.0 / p;
}

/// pmf[k] = probability that realizing exp(i angle P) takes exactly k
/// photon-detected rounds (no loss), k = 0..horizon.
///
/// Per round with emission parameter eps, the time direction comes out right
/// or wrong with probability ((1-eps)^2 + eps^2)/2 each, and a Pauli outcome
/// (residual unchanged) with 2 eps (1-eps). A wrong direction doubles the
/// aim.
inline std::vector<double> rounds_pmf(EpsilonMode mode, double angle, std::size_t horizon = kRoundHorizon) {
  struct Level {
    bool terminal;
    double q_move;  // probability of each of the two directions
    double q_stay;
  };
  std::vector<Level> levels;
  levels.reserve(horizon + 2);
  if (mode == EpsilonMode::ResidualExact) {
    double a = reduce_angle(angle);
    for (std::size_t j = 0; j <= horizon + 1; ++j) {
      const bool terminal = std::abs(a) <= AimTracker::kZeroTol ||
                            std::abs(std::abs(a) - EpsilonPolicy::kAngleCap) <= AimTracker::kZeroTol;
      const double eps = terminal ? 0.0 : eps_for_angle(std::abs(a));
      levels.push_back({terminal, 0.5 * ((1 - eps) * (1 - eps) + eps * eps), 2 * eps * (1 - eps)});
      a = reduce_angle(2 * a);
    }
  } else {
    double a = reduce_angle(angle);
    const bool zero = std::abs(a) <= AimTracker::kZeroTol;
    for (std::size_t j = 0; j <= horizon + 1; ++j) {
      const double eps = std::clamp(std::sin(std::min(std::abs(a), EpsilonPolicy::kAngleCap)), 0.0, 1.0);
      levels.push_back({zero, 0.5 * ((1 - eps) * (1 - eps) + eps * eps), 2 * eps * (1 - eps)});
      a *= 2;
    }
  }
  // f[j][k]: probability of finishing in exactly k rounds from level j.
  const std::size_t nj = levels.size();
  std::vector<std::vector<double>> f(nj, std::vector<double>(horizon + 1, 0.0));
  for (std::size_t j = 0; j < nj; ++j) f[j][0] = levels[j].terminal ? 1.0 : 0.0;
  for (std::size_t k = 1; k <= horizon; ++k) {
    for (std::size_t j = 0; j < nj; ++j) {
      const auto& lv = levels[j];
      if (lv.terminal) continue;
      double p = lv.q_stay * f[j][k - 1];
      if (k == 1) p += lv.q_move;
      if (j + 1 < nj) p += lv.q_move * f[j + 1][k - 1];
      f[j][k] = p;
    }
  }
  return f[0];
}

inline double pmf_mean(const std::vector<double>& pmf) {
  double m = 0.0;
  for (std::size_t k = 0; k < pmf.size(); ++k) m += static_cast<double>(k) * pmf[k];
  return m;
}

inline std::vector<double> convolve_truncated(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> out(std::max(a.size(), b.size()), 0.0);
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; i + j < out.size() && j < b.size(); ++j) out[i + j] += a[i] * b[j];
  return out;
}

inline std::vector<double> pmf_cdf(const std::vector<double>& pmf) {
  std::vector<double> c(pmf.size());
  double acc = 0.0;
  for (std::size_t k = 0; k < pmf.size(); ++k) c[k] = (acc += pmf[k]);
  return c;
}

/// Smallest r with prod_g cdf_g(r) >= confidence, or the horizon.
inline std::size_t joint_allowance(const std::vector<std::vector<double>>& cdfs, double confidence) {
  if (cdfs.empty()) return 0;
  const std::size_t horizon = cdfs.front().size() - 1;
  for (std::size_t r = 0; r <= horizon; ++r) {
    double joint = 1.0;
    for (const auto& c : cdfs) joint *= c[r];
    if (joint >= confidence) return r;
  }
  return horizon;
}

/// Allowance under the simplified law where each gate independently finishes
/// within r rounds with probability 1 - 2^-r.
inline std::size_t halving_law_allowance(std::size_t gates, double confidence) {
  if (gates == 0) return 0;
  for (std::size_t r = 0;; ++r) {
    const double joint = std::pow(1.0 - std::pow(2.0, -static_cast<double>(r)), static_cast<double>(gates));
    if (joint >= confidence) return r;
  }
}

/// P(Binomial(trials, p) >= needed).
inline double binomial_tail(std::size_t trials, std::size_t needed, double p) {
  if (needed > trials) return 0.0;
  if (needed == 0) return 1.0;
  double total = 0.0;
  const double lp = std::log(p);
  const double lq = std::log1p(-p);
  for (std::size_t k = needed; k <= trials; ++k) {
    const double lc = std::lgamma(static_cast<double>(trials) + 1) - std::lgamma(static_cast<double>(k) + 1) -
                      std::lgamma(static_cast<double>(trials - k) + 1);
    total += std::exp(lc + static_cast<double>(k) * lp + static_cast<double>(trials - k) * lq);
  }
  return std::min(total, 1.0);
}

/// Probability that floor(2 m^2 + c m / 2) rounds at success 1/2 contain at
/// least m^2 successes.
inline double serial_budget_success_probability(std::size_t m, double c) {
  const double md = static_cast<double>(m);
  const auto trials = static_cast<std::size_t>(std::floor(2 * md * md + c * md / 2));
  return binomial_tail(trials, m * m, 0.5);
}

struct RoundBudget {
  std::size_t rotation_count = 0;
  double serial_rounds = 0.0;
  double mean_rounds_per_rotation = 0.0;
  std::size_t layers_per_sweep = 0;
  std::vector<std::size_t> layer_allowance;  // per layer of one sweep
  std::size_t parallel_depth = 0;
  double confidence = 0.0;
};

/// Expected serial rounds and a confidence-bounded parallel depth for a plan,
/// from the exact per-rotation round law of `policy`.
inline RoundBudget round_budget(const TrotterPlan& plan, const EpsilonPolicy& policy, double confidence) {
  if (!(confidence > 0.0 && confidence < 1.0)) throw UsageError("confidence must lie in (0, 1)");
  RoundBudget b;
  b.confidence = confidence;
  b.rotation_count = plan.rotation_count();
  b.layers_per_sweep = plan.sweep.size();
  if (plan.empty()) {
    b.layers_per_sweep = 0;
    return b;
  }
  std::map<double, std::vector<double>> pmf_cache;
  auto pmf_for = [&](double angle) -> const std::vector<double>& {
    auto it = pmf_cache.find(angle);
    if (it == pmf_cache.end()) it = pmf_cache.emplace(angle, rounds_pmf(policy.mode, angle)).first;
    return it->second;
  };
  double sweep_mean = 0.0;
  std::size_t sweep_allowance = 0;
  for (const auto& layer : plan.sweep) {
    std::vector<std::vector<double>> cdfs;
    for (const auto& block : layer) {
      std::vector<double> pmf(kRoundHorizon + 1, 0.0);
      pmf[0] = 1.0;
      for (const auto& rot : block.rotations) {
        const auto& p = pmf_for(rot.angle);
        sweep_mean += pmf_mean(p);
        pmf = convolve_truncated(pmf, p);
      }
      cdfs.push_back(pmf_cdf(pmf));
    }
    const auto allowance = joint_allowance(cdfs, confidence);
    b.layer_allowance.push_back(allowance);
    sweep_allowance += allowance;
  }
  b.serial_rounds = sweep_mean * static_cast<double>(plan.n_steps);
  b.mean_rounds_per_rotation = b.serial_rounds / static_cast<double>(b.rotation_count);
  b.parallel_depth = sweep_allowance * plan.n_steps;
  return b;
}

inline void to_json(nlohmann::json& j, const Rotation& r) {
  j = nlohmann::json{{"sites", {r.sites[0], r.sites[1]}},
                     {"axes", std::string{axis_char(r.axes[0]), axis_char(r.axes[1])}},
                     {"angle", r.angle},
                     {"term", r.term}};
}

inline void to_json(nlohmann::json& j, const TrotterPlan& p) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& layer : p.sweep) {
    nlohmann::json blocks = nlohmann::json::array();
    for (const auto& block : layer)
      blocks.push_back({{"bond", {block.bond[0], block.bond[1]}}, {"rotations", block.rotations}});
    layers.push_back({{"blocks", blocks}});
  }
  j = nlohmann::json{{"n_qubits", p.n_qubits}, {"n_steps", p.n_steps}, {"sweep", {{"layers", layers}}}};
}

inline void to_json(nlohmann::json& j, const RoundBudget& b) {
  j = nlohmann::json{{"rotation_count", b.rotation_count},
                     {"serial_rounds", b.serial_rounds},
                     {"mean_rounds_per_rotation", b.mean_rounds_per_rotation},
                     {"layers_per_sweep", b.layers_per_sweep},
                     {"layer_allowance", b.layer_allowance},
                     {"parallel_depth", b.parallel_depth},
                     {"confidence", b.confidence}};
}

}  // namespace mfsim
