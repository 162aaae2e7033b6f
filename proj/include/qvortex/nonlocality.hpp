#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "qvortex/hilbert.hpp"

// Device-independent statistics: CHSH value and optimal-setting search,
// Mermin-Ardehali-Belinskii-Klyshko value, the generalized three-party Hardy
// value, and violation significances from Poissonian counting statistics.

namespace qvortex::nonlocality {

inline constexpr double kChshClassicalBound = 2.0;
inline const double kTsirelsonBound = 2.0 * std::sqrt(2.0);
inline constexpr double kMerminClassicalBound = 2.0;
inline const double kMerminBiseparableBound = 2.0 * std::sqrt(2.0);
inline constexpr double kMerminAlgebraicMaximum = 4.0;
inline constexpr double kHardyClassicalBound = 0.0;

namespace detail {

inline void require_dichotomic(const Observable& o, const char* name) {
  if (!o.is_dichotomic())
    throw Error(std::string("nonlocality: observable ") + name +
                " is not dichotomic (O^2 != I within tolerance)");
}

inline void require_single_qubit_on(const Observable& o, Subsystem s, const char* name) {
  if (o.labels() != Labels{s})
    throw Error(std::string("nonlocality: observable ") + name + " must act on " + to_string(s));
}

}  // namespace detail

inline Observable bloch_observable(const Eigen::Vector3d& axis, Subsystem label) {
  const Eigen::Vector3d a = axis.normalized();
  return Observable({label},
                    a.x() * pauli_x() + a.y() * pauli_y() + a.z() * pauli_z());
}

// --- CHSH --------------------------------------------------------------------

struct ChshSettings {
  Observable a0, a1;  // qubit 1
  Observable b0, b1;  // qubit 2
};

// S = <A1 B1> - <A1 B0> + <A0 B1> + <A0 B0>.
inline double chsh_value(const DensityMatrix& rho, const ChshSettings& s) {
  if (rho.num_qubits() != 2)
    throw Error("chsh_value: expected a 2-qubit state, got " + to_string(rho.labels()));
  detail::require_dichotomic(s.a0, "A0");
  detail::require_dichotomic(s.a1, "A1");
  detail::require_dichotomic(s.b0, "B0");
  detail::require_dichotomic(s.b1, "B1");
  detail::require_single_qubit_on(s.a0, rho.labels()[0], "A0");
  detail::require_single_qubit_on(s.a1, rho.labels()[0], "A1");
  detail::require_single_qubit_on(s.b0, rho.labels()[1], "B0");
  detail::require_single_qubit_on(s.b1, rho.labels()[1], "B1");
  return expectation(rho, tensor(s.a1, s.b1)) - expectation(rho, tensor(s.a1, s.b0)) +
         expectation(rho, tensor(s.a0, s.b1)) + expectation(rho, tensor(s.a0, s.b0));
}

// 3x3 Pauli correlation matrix T_ij = <sigma_i x sigma_j>.
inline Eigen::Matrix3d correlation_matrix(const DensityMatrix& rho) {
  if (rho.num_qubits() != 2) throw Error("correlation_matrix: expected a 2-qubit state");
  const std::array<Eigen::Matrix2cd, 3> paulis = {pauli_x(), pauli_y(), pauli_z()};
  Eigen::Matrix3d t;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      const Observable o = tensor(Observable({rho.labels()[0]}, paulis[std::size_t(i)]),
                                  Observable({rho.labels()[1]}, paulis[std::size_t(j)]));
      t(i, j) = expectation(rho, o);
    }
  return t;
}

struct ChshOptimum {
  ChshSettings settings;
  double s_max;
};

// Horodecki criterion: S_max = 2 sqrt(m1 + m2) with m1, m2 the two largest
// eigenvalues of T^T T, realized by measurement axes built from the singular
// vectors of T.
inline ChshOptimum optimize_chsh(const DensityMatrix& rho) {
  const Eigen::Matrix3d t = correlation_matrix(rho);
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(t, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const double s1 = svd.singularValues()(0);
  const double s2 = svd.singularValues()(1);
  const double theta = std::atan2(s2, s1);
  const Eigen::Vector3d c = svd.matrixV().col(0);
  const Eigen::Vector3d cp = svd.matrixV().col(1);
  const Eigen::Vector3d b0 = std::cos(theta) * c - std::sin(theta) * cp;
  const Eigen::Vector3d b1 = std::cos(theta) * c + std::sin(theta) * cp;
  const Subsystem la = rho.labels()[0], lb = rho.labels()[1];
  ChshSettings settings{bloch_observable(svd.matrixU().col(0), la),
                        bloch_observable(svd.matrixU().col(1), la),
                        bloch_observable(b0, lb), bloch_observable(b1, lb)};
  return {std::move(settings), 2.0 * std::sqrt(s1 * s1 + s2 * s2)};
}

// Independent cross-check of the Horodecki optimum: coarse-to-fine grid
// search over Bob's two axes with Alice's optimal axes taken analytically,
// S(b0, b1) = |T(b0 + b1)| + |T(b1 - b0)|.
inline double grid_search_chsh(const DensityMatrix& rho, int passes = 48) {
  const Eigen::Matrix3d t = correlation_matrix(rho);
  auto axis = [](double theta, double phi) {
    return Eigen::Vector3d(std::sin(theta) * std::cos(phi), std::sin(theta) * std::sin(phi),
                           std::cos(theta));
  };
  auto value = [&](const std::array<double, 4>& angles) {
    const Eigen::Vector3d b0 = axis(angles[0], angles[1]);
    const Eigen::Vector3d b1 = axis(angles[2], angles[3]);
    return (t * (b0 + b1)).norm() + (t * (b1 - b0)).norm();
  };
  std::array<double, 4> center = {M_PI / 2, M_PI, M_PI / 2, M_PI};
  std::array<double, 4> range = {M_PI / 2, M_PI, M_PI / 2, M_PI};
  double best = value(center);
  constexpr int kPoints = 7;
  for (int pass = 0; pass < passes; ++pass) {
    std::array<double, 4> best_angles = center;
    std::array<double, 4> probe{};
    for (int i0 = 0; i0 < kPoints; ++i0)
      for (int i1 = 0; i1 < kPoints; ++i1)
        for (int i2 = 0; i2 < kPoints; ++i2)
          for (int i3 = 0; i3 < kPoints; ++i3) {
            const std::array<int, 4> idx = {i0, i1, i2, i3};
            for (int k = 0; k < 4; ++k)
              probe[std::size_t(k)] = center[std::size_t(k)] +
                                      range[std::size_t(k)] *
                                          (2.0 * idx[std::size_t(k)] / (kPoints - 1) - 1.0);
            const double v = value(probe);
            if (v > best) {
              best = v;
              best_angles = probe;
            }
          }
    center = best_angles;
    for (auto& r : range) r *= 0.55;
  }
  return best;
}

// --- Mermin ------------------------------------------------------------------

struct MerminSettings {
  Observable a1, a2;  // qubit 1
  Observable b1, b2;  // qubit 2
  Observable c1, c2;  // qubit 3
};

// The published operator choice reaching the algebraic maximum on the
// ideal state:
// A1 = B1 = -sigma_z, A2 = B2 = sigma_x, C1 = sigma_z, C2 = sigma_x, each in
// its qubit's analysis basis (the logical basis for the OAM qubit).
inline MerminSettings default_mermin_settings(const Labels& labels) {
  if (labels.size() != 3) throw Error("default_mermin_settings: expected 3 labels");
  return {Observable({labels[0]}, -pauli_z()), Observable({labels[0]}, pauli_x()),
          Observable({labels[1]}, -pauli_z()), Observable({labels[1]}, pauli_x()),
          Observable({labels[2]}, pauli_z()),  Observable({labels[2]}, pauli_x())};
}

// M = |<A1 B2 C2> + <A2 B1 C2> + <A2 B2 C1> - <A1 B1 C1>|.
inline double mermin_value(const DensityMatrix& rho, const MerminSettings& s) {
  if (rho.num_qubits() != 3)
    throw Error("mermin_value: expected a 3-qubit state, got " + to_string(rho.labels()));
  for (const auto* o : {&s.a1, &s.a2, &s.b1, &s.b2, &s.c1, &s.c2})
    detail::require_dichotomic(*o, "Mermin setting");
  auto corr = [&](const Observable& a, const Observable& b, const Observable& c) {
    return expectation(rho, tensor(tensor(a, b), c));
  };
  return std::abs(corr(s.a1, s.b2, s.c2) + corr(s.a2, s.b1, s.c2) + corr(s.a2, s.b2, s.c1) -
                  corr(s.a1, s.b1, s.c1));
}

// --- Hardy -------------------------------------------------------------------

struct HardySettings {
  Observable a1, a2, a3;
  Observable b1, b2, b3;
};

// A1 = A2 = -A3 = sigma_z and B1 = B2 = B3 = sigma_x in the analysis bases.
inline HardySettings default_hardy_settings(const Labels& labels) {
  if (labels.size() != 3) throw Error("default_hardy_settings: expected 3 labels");
  return {Observable({labels[0]}, pauli_z()),  Observable({labels[1]}, pauli_z()),
          Observable({labels[2]}, -pauli_z()), Observable({labels[0]}, pauli_x()),
          Observable({labels[1]}, pauli_x()),  Observable({labels[2]}, pauli_x())};
}

// Joint probability of +1 outcomes, P(X1 = 1, Y2 = 1, Z3 = 1).
inline double joint_plus_probability(const DensityMatrix& rho, const Observable& x,
                                     const Observable& y, const Observable& z) {
  auto plus = [](const Observable& o) {
    return Observable(o.labels(),
                      0.5 * (Matrix::Identity(o.dim(), o.dim()) + o.matrix()));
  };
  return expectation(rho, tensor(tensor(plus(x), plus(y)), plus(z)));
}

// H = P(A1 A2 A3) - P(A1 B2 B3) - P(A1 ~B2 ~B3) - P(B1 A2 B3) - P(~B1 A2 ~B3)
//     - P(B1 B2 A3) - P(~B1 ~B2 A3), with ~B = -B.
inline double hardy_value(const DensityMatrix& rho, const HardySettings& s) {
  if (rho.num_qubits() != 3)
    throw Error("hardy_value: expected a 3-qubit state, got " + to_string(rho.labels()));
  for (const auto* o : {&s.a1, &s.a2, &s.a3, &s.b1, &s.b2, &s.b3})
    detail::require_dichotomic(*o, "Hardy setting");
  auto bar = [](const Observable& o) { return Observable(o.labels(), -o.matrix()); };
  return joint_plus_probability(rho, s.a1, s.a2, s.a3) -
         joint_plus_probability(rho, s.a1, s.b2, s.b3) -
         joint_plus_probability(rho, s.a1, bar(s.b2), bar(s.b3)) -
         joint_plus_probability(rho, s.b1, s.a2, s.b3) -
         joint_plus_probability(rho, bar(s.b1), s.a2, bar(s.b3)) -
         joint_plus_probability(rho, s.b1, s.b2, s.a3) -
         joint_plus_probability(rho, bar(s.b1), bar(s.b2), s.a3);
}

// --- exact classical bounds by exhaustive enumeration -------------------------

// Maximum of the Mermin combination over all 64 deterministic +-1
// assignments; exact integer arithmetic. Equals the classical bound 2.
inline int mermin_deterministic_maximum() {
  int best = 0;
  for (int mask = 0; mask < 64; ++mask) {
    const int a1 = (mask & 1) ? 1 : -1, a2 = (mask & 2) ? 1 : -1;
    const int b1 = (mask & 4) ? 1 : -1, b2 = (mask & 8) ? 1 : -1;
    const int c1 = (mask & 16) ? 1 : -1, c2 = (mask & 32) ? 1 : -1;
    best = std::max(best, std::abs(a1 * b2 * c2 + a2 * b1 * c2 + a2 * b2 * c1 - a1 * b1 * c1));
  }
  return best;
}

// Maximum of the Hardy combination over all 64 deterministic assignments;
// the noncontextual bound, exactly 0.
inline int hardy_deterministic_maximum() {
  int best = -7;
  for (int mask = 0; mask < 64; ++mask) {
    const int a1 = (mask & 1) ? 1 : -1, a2 = (mask & 2) ? 1 : -1, a3 = (mask & 4) ? 1 : -1;
    const int b1 = (mask & 8) ? 1 : -1, b2 = (mask & 16) ? 1 : -1, b3 = (mask & 32) ? 1 : -1;
    int h = 0;
    h += (a1 == 1 && a2 == 1 && a3 == 1) ? 1 : 0;
    h -= (a1 == 1 && b2 == 1 && b3 == 1) ? 1 : 0;
    h -= (a1 == 1 && b2 == -1 && b3 == -1) ? 1 : 0;
    h -= (b1 == 1 && a2 == 1 && b3 == 1) ? 1 : 0;
    h -= (b1 == -1 && a2 == 1 && b3 == -1) ? 1 : 0;
    h -= (b1 == 1 && b2 == 1 && a3 == 1) ? 1 : 0;
    h -= (b1 == -1 && b2 == -1 && a3 == 1) ? 1 : 0;
    best = std::max(best, h);
  }
  return best;
}

// --- violation significance ---------------------------------------------------

inline double violation_sigmas(double value, double sigma, double bound) {
  if (sigma <= 0) throw Error("violation_sigmas: sigma must be positive");
  return (value - bound) / sigma;
}

// --- estimation from counts ----------------------------------------------------

// Counts for one analyzer configuration. Outcome index bit q (MSB first) is
// 0 for the +1 outcome of the observable measured on qubit q.
struct BasisCounts {
  std::string basis_id;
  std::vector<double> counts;
};

struct Estimate {
  double value = 0.0;
  double variance = 0.0;
};

namespace detail {

// Delta-method variance of g = sum_j c_j n_j / N for independent Poisson
// counts n_j.
inline Estimate linear_fraction(const BasisCounts& basis, const std::vector<double>& coeff) {
  const double total = std::accumulate(basis.counts.begin(), basis.counts.end(), 0.0);
  if (total <= 0)
    throw Error("nonlocality: zero total counts in setting " + basis.basis_id);
  double g = 0;
  for (std::size_t j = 0; j < basis.counts.size(); ++j) g += coeff[j] * basis.counts[j];
  g /= total;
  double var = 0;
  for (std::size_t j = 0; j < basis.counts.size(); ++j) {
    const double d = coeff[j] - g;
    var += basis.counts[j] * d * d;
  }
  return {g, var / (total * total)};
}

inline std::vector<double> parity_coefficients(std::size_t n_outcomes) {
  std::vector<double> coeff(n_outcomes);
  for (std::size_t j = 0; j < n_outcomes; ++j)
    coeff[j] = __builtin_popcountll(j) % 2 == 0 ? 1.0 : -1.0;
  return coeff;
}

}  // namespace detail

// <XY...> from the outcome counts of one setting.
inline Estimate correlator_from_counts(const BasisCounts& basis) {
  return detail::linear_fraction(basis, detail::parity_coefficients(basis.counts.size()));
}

struct CountEstimate {
  double value = 0.0;
  double sigma = 0.0;
  std::vector<double> correlators;  // per measured basis, in input order
};

// Bases in order [A0B0, A0B1, A1B0, A1B1].
inline CountEstimate chsh_from_counts(const std::array<BasisCounts, 4>& bases) {
  std::array<Estimate, 4> e;
  for (std::size_t i = 0; i < 4; ++i) e[i] = correlator_from_counts(bases[i]);
  CountEstimate out;
  out.value = e[3].value - e[2].value + e[1].value + e[0].value;
  out.sigma = std::sqrt(e[0].variance + e[1].variance + e[2].variance + e[3].variance);
  for (const auto& est : e) out.correlators.push_back(est.value);
  return out;
}

// Bases in order [A1B1C1, A1B2C2, A2B1C2, A2B2C1].
inline CountEstimate mermin_from_counts(const std::array<BasisCounts, 4>& bases) {
  std::array<Estimate, 4> e;
  for (std::size_t i = 0; i < 4; ++i) e[i] = correlator_from_counts(bases[i]);
  CountEstimate out;
  out.value = std::abs(e[1].value + e[2].value + e[3].value - e[0].value);
  out.sigma = std::sqrt(e[0].variance + e[1].variance + e[2].variance + e[3].variance);
  for (const auto& est : e) out.correlators.push_back(est.value);
  return out;
}

// Bases in order [A1A2A3, A1B2B3, B1A2B3, B1B2A3]. The barred terms reuse
// the same data with relabeled outcomes, so per-basis error propagation
// captures their correlations exactly.
inline CountEstimate hardy_from_counts(const std::array<BasisCounts, 4>& bases) {
  auto coeffs = [&](const BasisCounts& b, std::initializer_list<std::pair<int, double>> terms) {
    std::vector<double> c(b.counts.size(), 0.0);
    for (auto [idx, w] : terms) c[std::size_t(idx)] = w;
    return c;
  };
  const Estimate e1 = detail::linear_fraction(bases[0], coeffs(bases[0], {{0b000, 1.0}}));
  const Estimate e2 =
      detail::linear_fraction(bases[1], coeffs(bases[1], {{0b000, -1.0}, {0b011, -1.0}}));
  const Estimate e3 =
      detail::linear_fraction(bases[2], coeffs(bases[2], {{0b000, -1.0}, {0b101, -1.0}}));
  const Estimate e4 =
      detail::linear_fraction(bases[3], coeffs(bases[3], {{0b000, -1.0}, {0b110, -1.0}}));
  CountEstimate out;
  out.value = e1.value + e2.value + e3.value + e4.value;
  out.sigma = std::sqrt(e1.variance + e2.variance + e3.variance + e4.variance);
  out.correlators = {e1.value, e2.value, e3.value, e4.value};
  return out;
}

enum class Functional { Chsh, Mermin, Hardy };

// Groups flat per-outcome counts (ids "<tag>:b<k>:<+- pattern>") into bases
// and evaluates the requested functional.
inline CountEstimate estimate_from_counts(const std::vector<std::pair<std::string, double>>& counts,
                                          Functional functional) {
  std::array<BasisCounts, 4> bases;
  const std::size_t outcomes = functional == Functional::Chsh ? 4 : 8;
  const std::size_t n_qubits = functional == Functional::Chsh ? 2 : 3;
  for (auto& b : bases) b.counts.assign(outcomes, 0.0);
  for (const auto& [id, value] : counts) {
    const auto last = id.rfind(':');
    if (last == std::string::npos || last == 0)
      throw Error("estimate_from_counts: malformed setting id '" + id + "'");
    const auto prev = id.rfind(':', last - 1);
    const std::string basis_tok = id.substr(prev == std::string::npos ? 0 : prev + 1,
                                            last - (prev == std::string::npos ? 0 : prev + 1));
    const std::string pattern = id.substr(last + 1);
    if (basis_tok.size() < 2 || basis_tok[0] != 'b' || pattern.size() != n_qubits)
      throw Error("estimate_from_counts: malformed setting id '" + id + "'");
    const std::size_t basis = std::size_t(std::stoul(basis_tok.substr(1)));
    if (basis >= 4) throw Error("estimate_from_counts: basis index out of range in '" + id + "'");
    std::size_t outcome = 0;
    for (char ch : pattern) outcome = outcome * 2 + (ch == '-' ? 1 : 0);
    bases[basis].basis_id = basis_tok;
    bases[basis].counts[outcome] += value;
  }
  switch (functional) {
    case Functional::Chsh: return chsh_from_counts(bases);
    case Functional::Mermin: return mermin_from_counts(bases);
    case Functional::Hardy: return hardy_from_counts(bases);
  }
  throw Error("estimate_from_counts: unknown functional");
}

}  // namespace qvortex::nonlocality
