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

// White-box finite-dimensional devices.
//
// A device holds, for every basis pair (θ1, θ2), the post-image-measurement
// state split into branches labelled by the decoded targets, together with a
// four-outcome projective measurement for every question pair (q1, q2). The
// classical Y and R registers are compressed into the branch labels; a branch
// may additionally carry a register index selecting a label-conditioned
// measurement, which expand_registers() turns back into a global one on
// H_D ⊗ C^R.

#include <array>
#include <cmath>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "qselftest/errors.hpp"
#include "qselftest/linalg.hpp"
#include "qselftest/matrix_json.hpp"

namespace qst {

inline constexpr Eigen::Index kMaxDeviceDim = 64;

// [q1*2 + q2][v1*2 + v2]
using MeasurementSet = std::array<std::array<ComplexMatrix, 4>, 4>;

struct Branch {
  int t1 = 0, t2 = 0;
  double weight = 0.0;
  ComplexMatrix state;
  std::optional<int> reg;  // index into AbstractDevice::register_measurements
};

struct Violation {
  std::string what;
  double magnitude = 0.0;
};

struct AbstractDevice {
  Eigen::Index dim = 0;
  std::array<std::vector<Branch>, 4> branches;  // [θ1*2 + θ2]
  MeasurementSet measurements;
  std::vector<MeasurementSet> register_measurements;

  std::vector<Branch>& at(int theta1, int theta2) { return branches[theta1 * 2 + theta2]; }
  const std::vector<Branch>& at(int theta1, int theta2) const { return branches[theta1 * 2 + theta2]; }
  ComplexMatrix& projector(int q1, int q2, int v1, int v2) { return measurements[q1 * 2 + q2][v1 * 2 + v2]; }
  const ComplexMatrix& projector(int q1, int q2, int v1, int v2) const {
    return measurements[q1 * 2 + q2][v1 * 2 + v2];
  }
  bool has_registers() const { return !register_measurements.empty(); }
};

inline std::string basis_key(int a, int b) { return std::to_string(a) + std::to_string(b); }

namespace detail {

inline void check_measurement(const MeasurementSet& ms, Eigen::Index dim, const std::string& where,
                              std::vector<Violation>& out) {
  for (int qq = 0; qq < 4; ++qq) {
    const std::string tag = where + " measurement " + basis_key(qq / 2, qq % 2);
    ComplexMatrix total = ComplexMatrix::Zero(dim, dim);
    bool shapes_ok = true;
    for (int v = 0; v < 4; ++v) {
      const auto& p = ms[qq][v];
      if (p.rows() != dim || p.cols() != dim) {
        out.push_back({tag + " outcome " + basis_key(v / 2, v % 2) + ": wrong shape", 1.0});
        shapes_ok = false;
        continue;
      }
      if (!p.allFinite()) {
        out.push_back({tag + " outcome " + basis_key(v / 2, v % 2) + ": non-finite entries", 1.0});
        shapes_ok = false;
        continue;
      }
      if (const double h = hermiticity_defect(p); h > kValidationTol)
        out.push_back({tag + " outcome " + basis_key(v / 2, v % 2) + ": not Hermitian", h});
      if (const double i = max_abs(p * p - p); i > kValidationTol)
        out.push_back({tag + " outcome " + basis_key(v / 2, v % 2) + ": not idempotent", i});
      total += p;
    }
    if (!shapes_ok) continue;
    if (const double c = max_abs(total - identity(dim)); c > kValidationTol)
      out.push_back({tag + ": projectors do not sum to identity", c});
    double orth = 0.0;
    for (int a = 0; a < 4; ++a)
      for (int b = a + 1; b < 4; ++b) orth = std::max(orth, max_abs(ms[qq][a] * ms[qq][b]));
    if (orth > kValidationTol) out.push_back({tag + ": projectors not mutually orthogonal", orth});
  }
}

}  // namespace detail

/// Every violated invariant with its magnitude; empty iff the device is valid.
inline std::vector<Violation> validate(const AbstractDevice& d) {
  std::vector<Violation> out;
  if (d.dim < 1 || d.dim > kMaxDeviceDim) {
    out.push_back({"dimension must lie in [1, " + std::to_string(kMaxDeviceDim) + "]", static_cast<double>(d.dim)});
    return out;
  }
  for (int th = 0; th < 4; ++th) {
    const std::string tag = "basis " + basis_key(th / 2, th % 2);
    double mass = 0.0;
    for (std::size_t k = 0; k < d.branches[th].size(); ++k) {
      const auto& br = d.branches[th][k];
      const std::string bt = tag + " branch " + std::to_string(k);
      if ((br.t1 & ~1) || (br.t2 & ~1)) out.push_back({bt + ": labels must be bits", 1.0});
      if (!(br.weight >= 0.0 && br.weight <= 1.0 + kValidationTol))
        out.push_back({bt + ": weight outside [0, 1]", std::abs(br.weight)});
      if (br.reg && (*br.reg < 0 || *br.reg >= static_cast<int>(d.register_measurements.size())))
        out.push_back({bt + ": register index out of range", static_cast<double>(*br.reg)});
      if (br.state.rows() != d.dim || br.state.cols() != d.dim) {
        out.push_back({bt + ": state has wrong shape", 1.0});
        continue;
      }
      if (!br.state.allFinite()) {
        out.push_back({bt + ": state has non-finite entries", 1.0});
        continue;
      }
      if (const double h = hermiticity_defect(br.state); h > kValidationTol)
        out.push_back({bt + ": state not Hermitian", h});
      if (const double m = min_eigenvalue(br.state); m < -kValidationTol)
        out.push_back({bt + ": state not positive semidefinite", -m});
      const double tr = br.state.trace().real();
      if (tr > 1.0 + kValidationTol) out.push_back({bt + ": state trace exceeds 1", tr - 1.0});
      mass += br.weight * tr;
    }
    if (const double gap = std::abs(mass - 1.0); gap > kValidationTol)
      out.push_back({tag + ": branch weights times traces sum to " + std::to_string(mass), gap});
  }
  if (d.has_registers()) {
    for (std::size_t r = 0; r < d.register_measurements.size(); ++r)
      detail::check_measurement(d.register_measurements[r], d.dim, "register " + std::to_string(r), out);
    // Branches without a register use the global measurement.
    bool any_global = false;
    for (const auto& bs : d.branches)
      for (const auto& br : bs) any_global |= !br.reg.has_value();
    if (any_global) detail::check_measurement(d.measurements, d.dim, "global", out);
  } else {
    detail::check_measurement(d.measurements, d.dim, "global", out);
  }
  return out;
}

inline std::string format_violations(const std::vector<Violation>& vs) {
  std::ostringstream os;
  for (const auto& v : vs) os << "  " << v.what << " (magnitude " << v.magnitude << ")\n";
  return os.str();
}

inline void require_valid(const AbstractDevice& d) {
  const auto vs = validate(d);
  if (!vs.empty()) throw ValidationError("invalid device:\n" + format_violations(vs));
}

/// Equivalent device with a single global measurement: a register-carrying
/// branch ρ becomes ρ ⊗ |r⟩⟨r| and measurements become Σ_r P_r ⊗ |r⟩⟨r|.
/// Returns the device unchanged when it has no register measurements.
inline AbstractDevice expand_registers(const AbstractDevice& d) {
  if (!d.has_registers()) return d;
  const auto regs = static_cast<Eigen::Index>(d.register_measurements.size()) + 1;  // last slot: global
  AbstractDevice out;
  out.dim = d.dim * regs;
  for (int th = 0; th < 4; ++th)
    for (const auto& br : d.branches[th]) {
      const Eigen::Index r = br.reg ? *br.reg : regs - 1;
      ComplexMatrix e = ComplexMatrix::Zero(regs, regs);
      e(r, r) = 1.0;
      out.branches[th].push_back({br.t1, br.t2, br.weight, tensor(br.state, e), std::nullopt});
    }
  for (int qq = 0; qq < 4; ++qq)
    for (int v = 0; v < 4; ++v) {
      ComplexMatrix acc = ComplexMatrix::Zero(out.dim, out.dim);
      for (Eigen::Index r = 0; r < regs; ++r) {
        ComplexMatrix e = ComplexMatrix::Zero(regs, regs);
        e(r, r) = 1.0;
        const auto& p = r + 1 == regs ? d.measurements[qq][v] : d.register_measurements[r][qq][v];
        // An unused global measurement may be absent; identity on outcome 00 keeps the set projective.
        const ComplexMatrix local = p.size() ? p : (v == 0 ? identity(d.dim) : ComplexMatrix::Zero(d.dim, d.dim));
        acc += tensor(local, e);
      }
      out.measurements[qq][v] = acc;
    }
  return out;
}

/// σ^{(θ1,θ2)}: weighted sum of all branch states.
inline DensityOperator sigma(const AbstractDevice& d, int theta1, int theta2) {
  ComplexMatrix acc = ComplexMatrix::Zero(d.dim, d.dim);
  for (const auto& br : d.at(theta1, theta2)) acc += br.weight * br.state;
  return DensityOperator(acc, true);
}

/// σ^{(θ1,v1;θ2,v2)}: branches labelled (v1, v2) only.
inline DensityOperator sigma_partial(const AbstractDevice& d, int theta1, int v1, int theta2, int v2) {
  ComplexMatrix acc = ComplexMatrix::Zero(d.dim, d.dim);
  for (const auto& br : d.at(theta1, theta2))
    if (br.t1 == v1 && br.t2 == v2) acc += br.weight * br.state;
  return DensityOperator(acc, true);
}

struct ObservableSet {
  ComplexMatrix Z1, Z2, X1, X2;
  ComplexMatrix Zt1, Zt2, Xt1, Xt2;

  Eigen::Index dim() const { return Z1.rows(); }
};

/// Marginal binary observables of a device with global measurements.
inline ObservableSet marginal_observables(const AbstractDevice& dev) {
  if (dev.has_registers()) throw StructuralError("marginal_observables: expand register measurements first");
  auto marg = [&](int q1, int q2, int which) {
    ComplexMatrix o = ComplexMatrix::Zero(dev.dim, dev.dim);
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) {
        const double sign = ((which == 0 ? i : j) & 1) ? -1.0 : 1.0;
        o += sign * dev.projector(q1, q2, i, j);
      }
    return BinaryObservable(o).matrix();
  };
  ObservableSet s;
  s.Z1 = marg(0, 0, 0);
  s.Z2 = marg(0, 0, 1);
  s.X1 = marg(1, 1, 0);
  s.X2 = marg(1, 1, 1);
  s.Zt1 = marg(0, 1, 0);
  s.Xt2 = marg(0, 1, 1);
  s.Xt1 = marg(1, 0, 0);
  s.Zt2 = marg(1, 0, 1);
  return s;
}

/// Branch states of the honest prover, depolarized with probability p.
inline AbstractDevice from_honest(double p) {
  if (!(p >= 0.0 && p <= 1.0)) throw ValidationError("from_honest: p must lie in [0, 1]");
  AbstractDevice d;
  d.dim = 4;
  const ComplexMatrix mixed = identity(4) / 4.0;
  auto noisy = [&](const StateVector& v) { return ComplexMatrix((1.0 - p) * outer(v) + p * mixed); };
  for (int t1 = 0; t1 < 2; ++t1)
    for (int t2 = 0; t2 < 2; ++t2) {
      d.at(0, 0).push_back({t1, t2, 0.25, noisy(tensor(basis_state(t1, 0), basis_state(t2, 0))), std::nullopt});
      d.at(0, 1).push_back({t1, t2, 0.25, noisy(tensor(basis_state(t1, 0), basis_state(t2, 1))), std::nullopt});
      d.at(1, 0).push_back({t1, t2, 0.25, noisy(tensor(basis_state(t1, 1), basis_state(t2, 0))), std::nullopt});
      d.at(1, 1).push_back({t1, t2, 0.25, noisy(bell_state(t1, t2)), std::nullopt});
    }
  for (int q1 = 0; q1 < 2; ++q1)
    for (int q2 = 0; q2 < 2; ++q2)
      for (int v1 = 0; v1 < 2; ++v1)
        for (int v2 = 0; v2 < 2; ++v2) d.projector(q1, q2, v1, v2) = product_projector(q1, q2, v1, v2);
  return d;
}

// ---------------------------------------------------------------------------
// Transforms for building adversarial devices

/// Relabels the outcomes of measurement (q1, q2) so that reported bits are
/// XORed with (f1, f2).
inline AbstractDevice flip_outcomes(AbstractDevice d, int q1, int q2, int f1, int f2) {
  auto& ms = d.measurements[q1 * 2 + q2];
  std::array<ComplexMatrix, 4> flipped;
  for (int v1 = 0; v1 < 2; ++v1)
    for (int v2 = 0; v2 < 2; ++v2) flipped[(v1 ^ f1) * 2 + (v2 ^ f2)] = ms[v1 * 2 + v2];
  ms = flipped;
  return d;
}

inline AbstractDevice replace_measurement(AbstractDevice d, int q1, int q2, std::array<ComplexMatrix, 4> projectors) {
  d.measurements[q1 * 2 + q2] = std::move(projectors);
  return d;
}

/// Applies f to every branch state of basis pair (θ1, θ2).
template <class F>
AbstractDevice map_states(AbstractDevice d, int theta1, int theta2, F&& f) {
  for (auto& br : d.at(theta1, theta2)) br.state = f(br);
  return d;
}

// ---------------------------------------------------------------------------
// JSON

inline nlohmann::json measurement_to_json(const MeasurementSet& ms) {
  nlohmann::json j = nlohmann::json::object();
  for (int qq = 0; qq < 4; ++qq) {
    auto arr = nlohmann::json::array();
    for (int v = 0; v < 4; ++v) arr.push_back(matrix_to_json(ms[qq][v]));
    j[basis_key(qq / 2, qq % 2)] = std::move(arr);
  }
  return j;
}

inline MeasurementSet measurement_from_json(const nlohmann::json& j) {
  MeasurementSet ms;
  for (int qq = 0; qq < 4; ++qq) {
    const auto key = basis_key(qq / 2, qq % 2);
    if (!j.contains(key) || !j[key].is_array() || j[key].size() != 4)
      throw StructuralError("device measurements: '" + key + "' must list 4 projectors");
    for (int v = 0; v < 4; ++v) ms[qq][v] = matrix_from_json(j[key][v]);
  }
  return ms;
}

inline nlohmann::json device_to_json(const AbstractDevice& d) {
  nlohmann::json branches = nlohmann::json::object();
  for (int th = 0; th < 4; ++th) {
    auto arr = nlohmann::json::array();
    for (const auto& br : d.branches[th]) {
      nlohmann::json b = {{"label", {br.t1, br.t2}}, {"weight", br.weight}, {"state", matrix_to_json(br.state)}};
      if (br.reg) b["register"] = *br.reg;
      arr.push_back(std::move(b));
    }
    branches[basis_key(th / 2, th % 2)] = std::move(arr);
  }
  nlohmann::json j = {{"dim", d.dim}, {"branches", std::move(branches)}};
  bool global_used = !d.has_registers();
  for (const auto& bs : d.branches)
    for (const auto& br : bs) global_used |= !br.reg.has_value();
  if (global_used) j["measurements"] = measurement_to_json(d.measurements);
  if (d.has_registers()) {
    auto regs = nlohmann::json::array();
    for (const auto& ms : d.register_measurements) regs.push_back(measurement_to_json(ms));
    j["register_measurements"] = std::move(regs);
  }
  return j;
}

inline AbstractDevice device_from_json(const nlohmann::json& j) {
  try {
    AbstractDevice d;
    d.dim = j.at("dim").get<Eigen::Index>();
    const auto& bj = j.at("branches");
    for (int th = 0; th < 4; ++th) {
      const auto key = basis_key(th / 2, th % 2);
      if (!bj.contains(key)) throw StructuralError("device branches: missing basis pair '" + key + "'");
      for (const auto& b : bj[key]) {
        Branch br;
        br.t1 = b.at("label").at(0).get<int>();
        br.t2 = b.at("label").at(1).get<int>();
        br.weight = b.at("weight").get<double>();
        br.state = matrix_from_json(b.at("state"));
        if (b.contains("register")) br.reg = b["register"].get<int>();
        d.branches[th].push_back(std::move(br));
      }
    }
    if (j.contains("measurements")) d.measurements = measurement_from_json(j["measurements"]);
    if (j.contains("register_measurements"))
      for (const auto& ms : j["register_measurements"]) d.register_measurements.push_back(measurement_from_json(ms));
    if (!j.contains("measurements") && !d.has_registers()) throw StructuralError("device: missing measurements");
    return d;
  } catch (const nlohmann::json::exception& e) {
    throw StructuralError(std::string("device file: ") + e.what());
  }
}

}  // namespace qst
