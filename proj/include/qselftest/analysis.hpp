// Copyright 2026 The qselftest Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Soundness diagnostics for white-box devices: failure measures, (anti)commutator
// residuals, the swap isometry and the Bell-closeness report.

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "qselftest/device.hpp"
#include "qselftest/errors.hpp"
#include "qselftest/linalg.hpp"
#include "qselftest/matrix_json.hpp"
#include "qselftest/rng.hpp"

namespace qst {

inline constexpr double kDegenerateXiTrace = 1e-14;

inline constexpr std::array<const char*, 8> kTestTupleNames = {"Z1", "Zt1", "X1", "Xt1", "Z2", "Zt2", "X2", "Xt2"};
inline constexpr std::array<const char*, 2> kBellTupleNames = {"Zt1Xt2", "Xt1Zt2"};

struct GammaResult {
  double value = 0.0;
  std::vector<double> tuple;
};

namespace detail {

inline double projected_mass(const ComplexMatrix& obs, int bit, const DensityOperator& s) {
  return (projector_of(BinaryObservable(obs), bit).matrix() * s.matrix()).trace().real();
}

// Σ_{v1,v2} Tr[O^{(v_which)} σ^{(θ1,v1;θ2,v2)}]
inline double tuple_entry(const AbstractDevice& d, const ComplexMatrix& obs, int theta1, int theta2, int which) {
  double acc = 0.0;
  for (int v1 = 0; v1 < 2; ++v1)
    for (int v2 = 0; v2 < 2; ++v2)
      acc += projected_mass(obs, which == 0 ? v1 : v2, sigma_partial(d, theta1, v1, theta2, v2));
  return acc;
}

inline AbstractDevice prepared(const AbstractDevice& d) {
  require_valid(d);
  return expand_registers(d);
}

inline ComplexMatrix anticommutator(const ComplexMatrix& a, const ComplexMatrix& b) { return a * b + b * a; }
inline ComplexMatrix commutator(const ComplexMatrix& a, const ComplexMatrix& b) { return a * b - b * a; }

}  // namespace detail

/// γ_T with its 8-entry tuple, ordered as kTestTupleNames.
inline GammaResult gamma_T(const AbstractDevice& device) {
  const AbstractDevice d = detail::prepared(device);
  const ObservableSet o = marginal_observables(d);
  GammaResult r;
  r.tuple = {detail::tuple_entry(d, o.Z1, 0, 1, 0),  detail::tuple_entry(d, o.Zt1, 0, 1, 0),
             detail::tuple_entry(d, o.X1, 1, 0, 0),  detail::tuple_entry(d, o.Xt1, 1, 0, 0),
             detail::tuple_entry(d, o.Z2, 1, 0, 1),  detail::tuple_entry(d, o.Zt2, 1, 0, 1),
             detail::tuple_entry(d, o.X2, 0, 1, 1),  detail::tuple_entry(d, o.Xt2, 0, 1, 1)};
  r.value = std::clamp(1.0 - *std::min_element(r.tuple.begin(), r.tuple.end()), 0.0, 1.0);
  return r;
}

/// γ_B with its 2-entry tuple, ordered as kBellTupleNames.
inline GammaResult gamma_B(const AbstractDevice& device) {
  const AbstractDevice d = detail::prepared(device);
  const ObservableSet o = marginal_observables(d);
  auto product = [](const ComplexMatrix& a, const ComplexMatrix& b, const char* name) {
    try {
      return BinaryObservable(a * b).matrix();
    } catch (const ValidationError& e) {
      throw ValidationError(std::string("device error: product ") + name + " is not a binary observable: " + e.what());
    }
  };
  const ComplexMatrix zx = product(o.Zt1, o.Xt2, "Zt1*Xt2");
  const ComplexMatrix xz = product(o.Xt1, o.Zt2, "Xt1*Zt2");
  GammaResult r;
  double e1 = 0.0, e2 = 0.0;
  for (int s1 = 0; s1 < 2; ++s1)
    for (int s2 = 0; s2 < 2; ++s2) {
      const auto part = sigma_partial(d, 1, s1, 1, s2);
      e1 += detail::projected_mass(zx, s1, part);
      e2 += detail::projected_mass(xz, s2, part);
    }
  r.tuple = {e1, e2};
  r.value = std::clamp(1.0 - std::min(e1, e2), 0.0, 1.0);
  return r;
}

/// Tr[{Z_i, X_i}† {Z_i, X_i} σ^{(θ1,θ2)}]
inline double anticomm_residual(const AbstractDevice& device, int i, int theta1, int theta2) {
  if (i != 1 && i != 2) throw StructuralError("anticomm_residual: qubit index must be 1 or 2");
  const AbstractDevice d = detail::prepared(device);
  const ObservableSet o = marginal_observables(d);
  const ComplexMatrix ac = i == 1 ? detail::anticommutator(o.Z1, o.X1) : detail::anticommutator(o.Z2, o.X2);
  return state_dep_norm_sq(ac, ComplexMatrix::Zero(d.dim, d.dim), sigma(d, theta1, theta2));
}

enum class CommPair { Z1X2, Z2X1 };

inline const char* to_string(CommPair p) { return p == CommPair::Z1X2 ? "Z1X2" : "Z2X1"; }

/// Tr[[A, B]† [A, B] σ^{(θ1,θ2)}] for (A, B) = (Z1, X2) or (Z2, X1).
inline double comm_residual(const AbstractDevice& device, CommPair pair, int theta1, int theta2) {
  const AbstractDevice d = detail::prepared(device);
  const ObservableSet o = marginal_observables(d);
  const ComplexMatrix c = pair == CommPair::Z1X2 ? detail::commutator(o.Z1, o.X2) : detail::commutator(o.Z2, o.X1);
  return state_dep_norm_sq(c, ComplexMatrix::Zero(d.dim, d.dim), sigma(d, theta1, theta2));
}

// ---------------------------------------------------------------------------
// Swap isometry, C^2 ⊗ C^2 ancilla first: row index (a*2 + b)*n + k.

inline ComplexMatrix power(const ComplexMatrix& x, int e) { return e ? x : identity(x.rows()); }

/// V = (1/4) Σ_{a,b} |a,b⟩ ⊗ X2^b (1 + (−1)^b Z2) X1^a (1 + (−1)^a Z1)
inline ComplexMatrix swap_isometry(const ComplexMatrix& z1, const ComplexMatrix& x1, const ComplexMatrix& z2,
                                   const ComplexMatrix& x2) {
  for (const auto* m : {&z1, &x1, &z2, &x2}) (void)BinaryObservable(*m);
  require_same_shape(z1, x1, "swap_isometry");
  require_same_shape(z1, z2, "swap_isometry");
  require_same_shape(z1, x2, "swap_isometry");
  const Eigen::Index n = z1.rows();
  const ComplexMatrix id = identity(n);
  ComplexMatrix v(4 * n, n);
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b) {
      const double sa = a ? -1.0 : 1.0, sb = b ? -1.0 : 1.0;
      v.block((a * 2 + b) * n, 0, n, n) = 0.25 * power(x2, b) * (id + sb * z2) * power(x1, a) * (id + sa * z1);
    }
  return v;
}

inline ComplexMatrix swap_isometry(const ObservableSet& o) { return swap_isometry(o.Z1, o.X1, o.Z2, o.X2); }

// Pauli P on ancilla qubit `which` (1 or 2), lifted to C^4 ⊗ C^n.
inline ComplexMatrix ancilla_pauli(const ComplexMatrix& p, int which, Eigen::Index n) {
  const ComplexMatrix two = which == 1 ? tensor(p, identity(2)) : tensor(identity(2), p);
  return tensor(two, identity(n));
}

/// V†(P ⊗ I)V for a single-ancilla Pauli.
inline ComplexMatrix pulled_back(const ComplexMatrix& v, const ComplexMatrix& ancilla_op) {
  const Eigen::Index n = v.cols();
  return v.adjoint() * tensor(ancilla_op, identity(n)) * v;
}

// Closed forms of V†(P ⊗ I)V in terms of the device observables.
inline ComplexMatrix conj_formula_z_first(const ObservableSet& o) { return o.Z1; }

inline ComplexMatrix conj_formula_x_first(const ObservableSet& o) {
  const ComplexMatrix id = identity(o.dim());
  ComplexMatrix acc = ComplexMatrix::Zero(o.dim(), o.dim());
  for (int a = 0; a < 2; ++a) {
    const double sa = a ? -1.0 : 1.0;
    acc += (id - sa * o.Z1) * o.X1 * (id + sa * o.Z1);
  }
  return acc / 4.0;
}

inline ComplexMatrix conj_formula_z_second(const ObservableSet& o) {
  const ComplexMatrix id = identity(o.dim());
  ComplexMatrix acc = ComplexMatrix::Zero(o.dim(), o.dim());
  for (int a = 0; a < 2; ++a) {
    const double sa = a ? -1.0 : 1.0;
    const ComplexMatrix x1a = power(o.X1, a);
    acc += (id + sa * o.Z1) * x1a * o.Z2 * x1a * (id + sa * o.Z1);
  }
  return acc / 4.0;
}

inline ComplexMatrix conj_formula_x_second(const ObservableSet& o) {
  const ComplexMatrix id = identity(o.dim());
  ComplexMatrix acc = ComplexMatrix::Zero(o.dim(), o.dim());
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b) {
      const double sa = a ? -1.0 : 1.0, sb = b ? -1.0 : 1.0;
      const ComplexMatrix x1a = power(o.X1, a);
      acc += (id + sa * o.Z1) * x1a * (id - sb * o.Z2) * o.X2 * (id + sb * o.Z2) * x1a * (id + sa * o.Z1);
    }
  return acc / 16.0;
}

// ---------------------------------------------------------------------------
// Pauli rounding

struct RoundingTarget {
  const char* name;
  bool product;
};

inline constexpr std::array<RoundingTarget, 11> kRoundingTargets = {{{"X1", false},
                                                                     {"Z2", false},
                                                                     {"X2", false},
                                                                     {"Zt1", false},
                                                                     {"Xt1", false},
                                                                     {"Zt2", false},
                                                                     {"Xt2", false},
                                                                     {"Z1Z2", true},
                                                                     {"X1X2", true},
                                                                     {"Zt1Xt2", true},
                                                                     {"Xt1Zt2", true}}};

/// Residual per target and basis pair, keyed "<target>@<θ1θ2>".
/// Single observables use ‖V†(P⊗I)V − O‖²_σ; products use ‖V O V† − (P⊗P)⊗I‖²_{VσV†}.
inline std::map<std::string, double> pauli_rounding_report(const AbstractDevice& device) {
  const AbstractDevice d = detail::prepared(device);
  const ObservableSet o = marginal_observables(d);
  const Eigen::Index n = d.dim;
  const ComplexMatrix v = swap_isometry(o);
  const ComplexMatrix sx = pauli_x(), sz = pauli_z(), i2 = identity(2);

  const std::map<std::string, std::pair<ComplexMatrix, ComplexMatrix>> singles = {
      {"X1", {tensor(sx, i2), o.X1}},  {"Z2", {tensor(i2, sz), o.Z2}},  {"X2", {tensor(i2, sx), o.X2}},
      {"Zt1", {tensor(sz, i2), o.Zt1}}, {"Xt1", {tensor(sx, i2), o.Xt1}}, {"Zt2", {tensor(i2, sz), o.Zt2}},
      {"Xt2", {tensor(i2, sx), o.Xt2}}};
  const std::map<std::string, std::pair<ComplexMatrix, ComplexMatrix>> products = {
      {"Z1Z2", {tensor(sz, sz), o.Z1 * o.Z2}},
      {"X1X2", {tensor(sx, sx), o.X1 * o.X2}},
      {"Zt1Xt2", {tensor(sz, sx), o.Zt1 * o.Xt2}},
      {"Xt1Zt2", {tensor(sx, sz), o.Xt1 * o.Zt2}}};

  std::map<std::string, double> out;
  for (int th = 0; th < 4; ++th) {
    const auto s = sigma(d, th / 2, th % 2);
    const ComplexMatrix vsv = v * s.matrix() * v.adjoint();
    const std::string at = "@" + basis_key(th / 2, th % 2);
    for (const auto& [name, pr] : singles)
      out[name + at] = state_dep_norm_sq(pulled_back(v, pr.first), pr.second, s);
    for (const auto& [name, pr] : products)
      out[name + at] = state_dep_norm_sq(v * pr.second * v.adjoint(), tensor(pr.first, identity(n)), vsv);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Bell report

struct BellBranchReport {
  int s1 = 0, s2 = 0;
  double trace_distance = 0.0;
  std::map<std::string, double> measurement_distances;  // "q<q1q2>_a<a>b<b>"
  ComplexMatrix xi;
  double xi_weight = 0.0;  // trace before renormalization
  bool degenerate = false;
};

inline std::string measurement_key(int q1, int q2, int a, int b) {
  return "q" + basis_key(q1, q2) + "_a" + std::to_string(a) + "b" + std::to_string(b);
}

// (⟨φ| ⊗ I) M (|φ⟩ ⊗ I) for M on C^4 ⊗ C^n.
inline ComplexMatrix contract_ancilla(const ComplexMatrix& m, const StateVector& phi, Eigen::Index n) {
  const ComplexMatrix bra = tensor(ComplexMatrix(phi.adjoint()), identity(n));
  return bra * m * bra.adjoint();
}

inline std::vector<BellBranchReport> bell_report(const AbstractDevice& device, std::vector<std::string>* warnings = nullptr) {
  const AbstractDevice d = detail::prepared(device);
  const ObservableSet o = marginal_observables(d);
  const Eigen::Index n = d.dim;
  const ComplexMatrix v = swap_isometry(o);
  const ComplexMatrix total = v * sigma(d, 1, 1).matrix() * v.adjoint();
  std::vector<BellBranchReport> out;
  for (int s1 = 0; s1 < 2; ++s1)
    for (int s2 = 0; s2 < 2; ++s2) {
      BellBranchReport r;
      r.s1 = s1;
      r.s2 = s2;
      const StateVector phi = bell_state(s1, s2);
      const ComplexMatrix phi_proj = outer(phi);
      ComplexMatrix xi = contract_ancilla(total, phi, n);
      r.xi_weight = xi.trace().real();
      if (r.xi_weight < kDegenerateXiTrace) {
        r.degenerate = true;
        xi = ComplexMatrix::Zero(n, n);
        if (warnings)
          warnings->push_back("degenerate Bell branch (" + std::to_string(s1) + "," + std::to_string(s2) +
                              "): xi has trace below threshold, compared against the zero operator");
      } else {
        xi /= r.xi_weight;
      }
      r.xi = 0.5 * (xi + xi.adjoint());
      const ComplexMatrix part = sigma_partial(d, 1, s1, 1, s2).matrix();
      r.trace_distance = trace_norm(v * part * v.adjoint() - 0.25 * tensor(phi_proj, r.xi));
      for (int q1 = 0; q1 < 2; ++q1)
        for (int q2 = 0; q2 < 2; ++q2)
          for (int a = 0; a < 2; ++a)
            for (int b = 0; b < 2; ++b) {
              const ComplexMatrix& p = d.projector(q1, q2, a, b);
              const ComplexMatrix pi = product_projector(q1, q2, a, b);
              const ComplexMatrix lhs = v * p * part * p * v.adjoint();
              const ComplexMatrix rhs = 0.25 * tensor(ComplexMatrix(pi * phi_proj * pi), r.xi);
              r.measurement_distances[measurement_key(q1, q2, a, b)] = trace_norm(lhs - rhs);
            }
      out.push_back(std::move(r));
    }
  return out;
}

// ---------------------------------------------------------------------------
// Interferometric estimator

struct InterferometricEstimate {
  double plus = 0.0;   // frequency of outcome 0 (→ (1/4)‖U1 + U2‖²_ψ)
  double minus = 0.0;  // frequency of outcome 1 (→ (1/4)‖U1 − U2‖²_ψ)
  double exact_plus = 0.0;
  double exact_minus = 0.0;
};

/// Control qubit in |+⟩ selects U1 (|0⟩) or U2 (|1⟩); the control is then
/// read out in the Hadamard basis. Outcome probabilities come from the full
/// circuit density matrix, then `shots` Born-rule samples are drawn.
inline InterferometricEstimate interferometric_norm_estimate(const ComplexMatrix& u1, const ComplexMatrix& u2,
                                                             const DensityOperator& psi, std::size_t shots, Rng& rng) {
  if (!is_unitary(u1) || !is_unitary(u2)) throw ValidationError("interferometric estimator: inputs must be unitary");
  require_same_shape(u1, u2, "interferometric estimator");
  require_same_shape(u1, psi.matrix(), "interferometric estimator");
  if (shots == 0) throw ConfigError("interferometric estimator: shots must be positive");
  const Eigen::Index n = u1.rows();
  ComplexMatrix e0 = ComplexMatrix::Zero(2, 2), e1 = ComplexMatrix::Zero(2, 2);
  e0(0, 0) = 1.0;
  e1(1, 1) = 1.0;
  const ComplexMatrix controlled = tensor(e0, u1) + tensor(e1, u2);
  ComplexMatrix h(2, 2);
  h << 1, 1, 1, -1;
  h /= std::sqrt(2.0);
  const ComplexMatrix plus = outer(basis_state(0, 1));
  const ComplexMatrix circuit = tensor(h, identity(n)) * controlled;
  const ComplexMatrix out = circuit * tensor(plus, psi.matrix()) * circuit.adjoint();
  const double p0 = std::clamp(partial_trace(out, {2, n}, 1)(0, 0).real(), 0.0, 1.0);

  std::size_t zeros = 0;
  for (std::size_t k = 0; k < shots; ++k) zeros += rng.uniform() < p0 ? 1 : 0;
  InterferometricEstimate est;
  est.plus = static_cast<double>(zeros) / static_cast<double>(shots);
  est.minus = 1.0 - est.plus;
  est.exact_plus = p0;
  est.exact_minus = 1.0 - p0;
  return est;
}

// ---------------------------------------------------------------------------
// Full report

struct AnalysisReport {
  GammaResult gamma_T;
  GammaResult gamma_B;
  std::map<std::string, double> anticomm;  // "Z<i>X<i>@<θ1θ2>"
  std::map<std::string, double> comm;      // "<pair>@<θ1θ2>"
  std::map<std::string, double> pauli_residuals;
  std::vector<BellBranchReport> bell;
  std::vector<std::string> warnings;

  double max_bell_distance() const {
    double m = 0.0;
    for (const auto& b : bell) {
      m = std::max(m, b.trace_distance);
      for (const auto& [k, val] : b.measurement_distances) m = std::max(m, val);
    }
    return m;
  }

  double max_residual() const {
    double m = 0.0;
    for (const auto* mp : {&anticomm, &comm, &pauli_residuals})
      for (const auto& [k, val] : *mp) m = std::max(m, val);
    return m;
  }
};

inline AnalysisReport analyze(const AbstractDevice& device) {
  const AbstractDevice d = detail::prepared(device);
  AnalysisReport r;
  r.gamma_T = gamma_T(d);
  r.gamma_B = gamma_B(d);
  for (int th = 0; th < 4; ++th) {
    const int t1 = th / 2, t2 = th % 2;
    const std::string at = "@" + basis_key(t1, t2);
    r.anticomm["Z1X1" + at] = anticomm_residual(d, 1, t1, t2);
    r.anticomm["Z2X2" + at] = anticomm_residual(d, 2, t1, t2);
    for (auto pair : {CommPair::Z1X2, CommPair::Z2X1})
      r.comm[std::string(to_string(pair)) + at] = comm_residual(d, pair, t1, t2);
  }
  r.pauli_residuals = pauli_rounding_report(d);
  r.bell = bell_report(d, &r.warnings);
  return r;
}

inline nlohmann::json report_to_json(const AnalysisReport& r) {
  auto tuple_json = [](const GammaResult& g, const auto& names) {
    nlohmann::json t = nlohmann::json::object();
    for (std::size_t k = 0; k < g.tuple.size(); ++k) t[names[k]] = g.tuple[k];
    return t;
  };
  nlohmann::json bell = nlohmann::json::array();
  for (const auto& b : r.bell)
    bell.push_back({{"s", {b.s1, b.s2}},
                    {"trace_distance", b.trace_distance},
                    {"measurement_distances", b.measurement_distances},
                    {"xi_weight", b.xi_weight},
                    {"degenerate", b.degenerate},
                    {"xi", matrix_to_json(b.xi)}});
  return {{"gamma_T", r.gamma_T.value},
          {"gamma_B", r.gamma_B.value},
          {"T_tuple", tuple_json(r.gamma_T, kTestTupleNames)},
          {"B_tuple", tuple_json(r.gamma_B, kBellTupleNames)},
          {"anticomm", r.anticomm},
          {"comm", r.comm},
          {"pauli_residuals", r.pauli_residuals},
          {"bell", std::move(bell)},
          {"max_bell_distance", r.max_bell_distance()},
          {"max_residual", r.max_residual()},
          {"warnings", r.warnings}};
}

/// One "metric,value" row per scalar in the report.
inline std::string report_to_csv(const AnalysisReport& r) {
  std::ostringstream os;
  os.precision(17);
  os << "metric,value\n";
  os << "gamma_T," << r.gamma_T.value << "\n";
  os << "gamma_B," << r.gamma_B.value << "\n";
  for (std::size_t k = 0; k < r.gamma_T.tuple.size(); ++k) os << "T." << kTestTupleNames[k] << "," << r.gamma_T.tuple[k] << "\n";
  for (std::size_t k = 0; k < r.gamma_B.tuple.size(); ++k) os << "B." << kBellTupleNames[k] << "," << r.gamma_B.tuple[k] << "\n";
  for (const auto& [k, v] : r.anticomm) os << "anticomm." << k << "," << v << "\n";
  for (const auto& [k, v] : r.comm) os << "comm." << k << "," << v << "\n";
  for (const auto& [k, v] : r.pauli_residuals) os << "pauli." << k << "," << v << "\n";
  for (const auto& b : r.bell) {
    const std::string s = basis_key(b.s1, b.s2);
    os << "bell." << s << ".trace_distance," << b.trace_distance << "\n";
    for (const auto& [k, v] : b.measurement_distances) os << "bell." << s << "." << k << "," << v << "\n";
  }
  return os.str();
}

}  // namespace qst
