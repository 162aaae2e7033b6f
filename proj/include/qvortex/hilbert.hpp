#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

// Dense complex linear algebra over small tensor products of labeled qubit
// subsystems. Subsystems are identified by label and kept in a fixed
// canonical order, so two states over the same subsystems always agree on
// their index layout regardless of construction order.

namespace qvortex {

using Complex = std::complex<double>;
using Matrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
// Raised for malformed configuration / inputs (CLI exit code 2).
struct ConfigError : Error {
  using Error::Error;
};
// Raised for numerical failures such as a non-convergent solver (CLI exit 3).
struct NumericalError : Error {
  using Error::Error;
};

// Tolerances used by every physicality check in the library.
inline constexpr double kNormTol = 1e-12;        // state vector norm
inline constexpr double kHermTol = 1e-12;        // Hermiticity and trace
inline constexpr double kPsdFloor = -1e-10;      // min eigenvalue of a density matrix
inline constexpr double kDichotomicTol = 1e-10;  // ||O^2 - I|| for dichotomic observables

// The three qubit subsystems of the experiment: polarization of photons 1
// and 2 and the +-7 orbital angular momentum doublet of photon 2. Canonical
// tensor order is Pol1 < Pol2 < Oam2; the first label in a space owns the
// most significant index bit.
enum class Subsystem : int { Pol1 = 0, Pol2 = 1, Oam2 = 2 };

using Labels = std::vector<Subsystem>;

inline std::string to_string(Subsystem s) {
  switch (s) {
    case Subsystem::Pol1: return "POL1";
    case Subsystem::Pol2: return "POL2";
    case Subsystem::Oam2: return "OAM2";
  }
  return "?";
}

inline Subsystem subsystem_from_string(const std::string& name) {
  if (name == "POL1") return Subsystem::Pol1;
  if (name == "POL2") return Subsystem::Pol2;
  if (name == "OAM2") return Subsystem::Oam2;
  throw ConfigError("unknown subsystem label: " + name);
}

inline std::string to_string(const Labels& labels) {
  std::string out = "{";
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (i) out += ",";
    out += to_string(labels[i]);
  }
  return out + "}";
}

namespace detail {

inline void require_canonical(const Labels& labels, const char* what) {
  if (labels.empty()) throw Error(std::string(what) + ": empty label set");
  for (std::size_t i = 1; i < labels.size(); ++i) {
    if (!(labels[i - 1] < labels[i]))
      throw Error(std::string(what) + ": labels must be unique and in canonical order, got " +
                  to_string(labels));
  }
}

inline Eigen::Index dim_for(const Labels& labels) {
  return Eigen::Index(1) << labels.size();
}

// Bit of basis index `idx` belonging to position `pos` (0 = most significant).
inline int bit_at(Eigen::Index idx, std::size_t pos, std::size_t n) {
  return int((idx >> (n - 1 - pos)) & 1);
}

inline bool contains(const Labels& labels, Subsystem s) {
  return std::find(labels.begin(), labels.end(), s) != labels.end();
}

inline std::size_t position_of(const Labels& labels, Subsystem s) {
  auto it = std::find(labels.begin(), labels.end(), s);
  if (it == labels.end())
    throw Error("subsystem " + to_string(s) + " not present in " + to_string(labels));
  return std::size_t(it - labels.begin());
}

}  // namespace detail

// ---------------------------------------------------------------------------
// StateVector: a normalized pure state over canonically ordered qubit labels.
// ---------------------------------------------------------------------------
class StateVector {
 public:
  StateVector(Labels labels, Vector amplitudes)
      : labels_(std::move(labels)), amplitudes_(std::move(amplitudes)) {
    detail::require_canonical(labels_, "StateVector");
    if (amplitudes_.size() != detail::dim_for(labels_))
      throw Error("StateVector: amplitude length " + std::to_string(amplitudes_.size()) +
                  " does not match 2^" + std::to_string(labels_.size()));
    const double norm = amplitudes_.norm();
    if (std::abs(norm - 1.0) > 1e-9)
      throw Error("StateVector: norm " + std::to_string(norm) + " too far from 1");
    amplitudes_ /= norm;  // absorb rounding so the invariant holds to kNormTol
  }

  const Labels& labels() const { return labels_; }
  const Vector& amplitudes() const { return amplitudes_; }
  std::size_t num_qubits() const { return labels_.size(); }
  Eigen::Index dim() const { return amplitudes_.size(); }

 private:
  Labels labels_;
  Vector amplitudes_;
};

// ---------------------------------------------------------------------------
// DensityMatrix: Hermitian, unit trace, positive semidefinite to kPsdFloor.
// ---------------------------------------------------------------------------
class DensityMatrix {
 public:
  DensityMatrix(Labels labels, Matrix entries)
      : labels_(std::move(labels)), entries_(std::move(entries)) {
    detail::require_canonical(labels_, "DensityMatrix");
    const Eigen::Index d = detail::dim_for(labels_);
    if (entries_.rows() != d || entries_.cols() != d)
      throw Error("DensityMatrix: expected " + std::to_string(d) + "x" + std::to_string(d) +
                  " entries for labels " + to_string(labels_));
    if ((entries_ - entries_.adjoint()).cwiseAbs().maxCoeff() > kHermTol)
      throw Error("DensityMatrix: entries are not Hermitian within tolerance");
    const double tr = entries_.trace().real();
    if (std::abs(tr - 1.0) > 1e-9)
      throw Error("DensityMatrix: trace " + std::to_string(tr) + " too far from 1");
    entries_ /= tr;
    Eigen::SelfAdjointEigenSolver<Matrix> es(entries_, Eigen::EigenvaluesOnly);
    const double min_eig = es.eigenvalues().minCoeff();
    if (min_eig < kPsdFloor)
      throw Error("DensityMatrix: minimum eigenvalue " + std::to_string(min_eig) +
                  " below PSD floor");
  }

  const Labels& labels() const { return labels_; }
  const Matrix& entries() const { return entries_; }
  std::size_t num_qubits() const { return labels_.size(); }
  Eigen::Index dim() const { return entries_.rows(); }

 private:
  Labels labels_;
  Matrix entries_;
};

// ---------------------------------------------------------------------------
// Observable: Hermitian operator on a subset of subsystems.
// ---------------------------------------------------------------------------
class Observable {
 public:
  Observable(Labels labels, Matrix matrix)
      : labels_(std::move(labels)), matrix_(std::move(matrix)) {
    detail::require_canonical(labels_, "Observable");
    const Eigen::Index d = detail::dim_for(labels_);
    if (matrix_.rows() != d || matrix_.cols() != d)
      throw Error("Observable: matrix dimension mismatch for labels " + to_string(labels_));
    if ((matrix_ - matrix_.adjoint()).cwiseAbs().maxCoeff() > kHermTol)
      throw Error("Observable: matrix is not Hermitian within tolerance");
  }

  const Labels& labels() const { return labels_; }
  const Matrix& matrix() const { return matrix_; }
  Eigen::Index dim() const { return matrix_.rows(); }

  // Dichotomic observables have spectrum {+1, -1}, i.e. O^2 = I.
  bool is_dichotomic() const {
    const Eigen::Index d = matrix_.rows();
    return (matrix_ * matrix_ - Matrix::Identity(d, d)).cwiseAbs().maxCoeff() < kDichotomicTol;
  }

 private:
  Labels labels_;
  Matrix matrix_;
};

// --- Pauli matrices and friends --------------------------------------------

inline const Eigen::Matrix2cd& pauli_x() {
  static const Eigen::Matrix2cd m = (Eigen::Matrix2cd() << 0, 1, 1, 0).finished();
  return m;
}
inline const Eigen::Matrix2cd& pauli_y() {
  static const Eigen::Matrix2cd m =
      (Eigen::Matrix2cd() << 0, Complex(0, -1), Complex(0, 1), 0).finished();
  return m;
}
inline const Eigen::Matrix2cd& pauli_z() {
  static const Eigen::Matrix2cd m = (Eigen::Matrix2cd() << 1, 0, 0, -1).finished();
  return m;
}
inline const Eigen::Matrix2cd& identity2() {
  static const Eigen::Matrix2cd m = Eigen::Matrix2cd::Identity();
  return m;
}

inline Matrix kron(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

// ---------------------------------------------------------------------------
// tensor(): Kronecker product re-permuted into canonical label order.
// ---------------------------------------------------------------------------

namespace detail {

// For each position in the merged canonical label list, records whether the
// qubit came from operand a (true) and its position there.
struct MergePlan {
  Labels merged;
  std::vector<std::pair<bool, std::size_t>> source;
};

inline MergePlan merge_labels(const Labels& a, const Labels& b) {
  for (Subsystem s : a)
    if (contains(b, s))
      throw Error("tensor: label collision on " + to_string(s) + " between " + to_string(a) +
                  " and " + to_string(b));
  MergePlan plan;
  std::size_t ia = 0, ib = 0;
  while (ia < a.size() || ib < b.size()) {
    if (ib == b.size() || (ia < a.size() && a[ia] < b[ib])) {
      plan.merged.push_back(a[ia]);
      plan.source.emplace_back(true, ia++);
    } else {
      plan.merged.push_back(b[ib]);
      plan.source.emplace_back(false, ib++);
    }
  }
  return plan;
}

inline void split_index(const MergePlan& plan, Eigen::Index idx, std::size_t na, std::size_t nb,
                        Eigen::Index& ia, Eigen::Index& ib) {
  const std::size_t n = plan.merged.size();
  ia = 0;
  ib = 0;
  for (std::size_t pos = 0; pos < n; ++pos) {
    const int bit = bit_at(idx, pos, n);
    const auto [from_a, src_pos] = plan.source[pos];
    if (from_a)
      ia |= Eigen::Index(bit) << (na - 1 - src_pos);
    else
      ib |= Eigen::Index(bit) << (nb - 1 - src_pos);
  }
}

}  // namespace detail

inline StateVector tensor(const StateVector& a, const StateVector& b) {
  const auto plan = detail::merge_labels(a.labels(), b.labels());
  const Eigen::Index d = detail::dim_for(plan.merged);
  Vector out(d);
  for (Eigen::Index idx = 0; idx < d; ++idx) {
    Eigen::Index ia, ib;
    detail::split_index(plan, idx, a.num_qubits(), b.num_qubits(), ia, ib);
    out(idx) = a.amplitudes()(ia) * b.amplitudes()(ib);
  }
  return StateVector(plan.merged, std::move(out));
}

inline Observable tensor(const Observable& a, const Observable& b) {
  const auto plan = detail::merge_labels(a.labels(), b.labels());
  const Eigen::Index d = detail::dim_for(plan.merged);
  const std::size_t na = a.labels().size(), nb = b.labels().size();
  Matrix out(d, d);
  for (Eigen::Index r = 0; r < d; ++r) {
    Eigen::Index ra, rb;
    detail::split_index(plan, r, na, nb, ra, rb);
    for (Eigen::Index c = 0; c < d; ++c) {
      Eigen::Index ca, cb;
      detail::split_index(plan, c, na, nb, ca, cb);
      out(r, c) = a.matrix()(ra, ca) * b.matrix()(rb, cb);
    }
  }
  return Observable(plan.merged, std::move(out));
}

inline DensityMatrix tensor(const DensityMatrix& a, const DensityMatrix& b) {
  const auto plan = detail::merge_labels(a.labels(), b.labels());
  const Eigen::Index d = detail::dim_for(plan.merged);
  const std::size_t na = a.labels().size(), nb = b.labels().size();
  Matrix out(d, d);
  for (Eigen::Index r = 0; r < d; ++r) {
    Eigen::Index ra, rb;
    detail::split_index(plan, r, na, nb, ra, rb);
    for (Eigen::Index c = 0; c < d; ++c) {
      Eigen::Index ca, cb;
      detail::split_index(plan, c, na, nb, ca, cb);
      out(r, c) = a.entries()(ra, ca) * b.entries()(rb, cb);
    }
  }
  return DensityMatrix(plan.merged, std::move(out));
}

inline DensityMatrix to_density(const StateVector& psi) {
  return DensityMatrix(psi.labels(), psi.amplitudes() * psi.amplitudes().adjoint());
}

inline DensityMatrix maximally_mixed(Labels labels) {
  const Eigen::Index d = detail::dim_for(labels);
  return DensityMatrix(std::move(labels), Matrix::Identity(d, d) / double(d));
}

// ---------------------------------------------------------------------------
// partial_trace
// ---------------------------------------------------------------------------
inline DensityMatrix partial_trace(const DensityMatrix& rho, const Labels& keep) {
  detail::require_canonical(keep, "partial_trace keep set");
  for (Subsystem s : keep)
    if (!detail::contains(rho.labels(), s))
      throw Error("partial_trace: keep set " + to_string(keep) + " is not a subset of " +
                  to_string(rho.labels()));
  const std::size_t n = rho.num_qubits();
  std::vector<std::size_t> keep_pos, trace_pos;
  for (std::size_t pos = 0; pos < n; ++pos) {
    if (detail::contains(keep, rho.labels()[pos]))
      keep_pos.push_back(pos);
    else
      trace_pos.push_back(pos);
  }
  const std::size_t nk = keep_pos.size(), nt = trace_pos.size();
  const Eigen::Index dk = Eigen::Index(1) << nk;
  const Eigen::Index dt = Eigen::Index(1) << nt;
  Matrix out = Matrix::Zero(dk, dk);
  auto assemble = [&](Eigen::Index kept, Eigen::Index traced) {
    Eigen::Index full = 0;
    for (std::size_t i = 0; i < nk; ++i)
      full |= Eigen::Index(detail::bit_at(kept, i, nk)) << (n - 1 - keep_pos[i]);
    for (std::size_t i = 0; i < nt; ++i)
      full |= Eigen::Index(detail::bit_at(traced, i, nt)) << (n - 1 - trace_pos[i]);
    return full;
  };
  for (Eigen::Index r = 0; r < dk; ++r)
    for (Eigen::Index c = 0; c < dk; ++c)
      for (Eigen::Index t = 0; t < dt; ++t)
        out(r, c) += rho.entries()(assemble(r, t), assemble(c, t));
  return DensityMatrix(keep, std::move(out));
}

// ---------------------------------------------------------------------------
// Operator lifting and application
// ---------------------------------------------------------------------------

// Embeds `op` (acting on `op_labels`) into the full space `full_labels`,
// padding the remaining subsystems with identity.
inline Matrix lift_operator(const Matrix& op, const Labels& op_labels, const Labels& full_labels) {
  detail::require_canonical(op_labels, "lift_operator");
  detail::require_canonical(full_labels, "lift_operator");
  const std::size_t n = full_labels.size(), m = op_labels.size();
  std::vector<std::size_t> pos(m);
  for (std::size_t i = 0; i < m; ++i)
    pos[i] = detail::position_of(full_labels, op_labels[i]);
  const Eigen::Index d = detail::dim_for(full_labels);
  Matrix out = Matrix::Zero(d, d);
  for (Eigen::Index r = 0; r < d; ++r) {
    Eigen::Index ro = 0;
    for (std::size_t i = 0; i < m; ++i)
      ro |= Eigen::Index(detail::bit_at(r, pos[i], n)) << (m - 1 - i);
    for (Eigen::Index c = 0; c < d; ++c) {
      bool rest_match = true;
      for (std::size_t p = 0; p < n && rest_match; ++p) {
        if (std::find(pos.begin(), pos.end(), p) != pos.end()) continue;
        rest_match = detail::bit_at(r, p, n) == detail::bit_at(c, p, n);
      }
      if (!rest_match) continue;
      Eigen::Index co = 0;
      for (std::size_t i = 0; i < m; ++i)
        co |= Eigen::Index(detail::bit_at(c, pos[i], n)) << (m - 1 - i);
      out(r, c) = op(ro, co);
    }
  }
  return out;
}

inline DensityMatrix apply_unitary(const DensityMatrix& rho, const Matrix& u,
                                   const Labels& targets) {
  const Matrix lifted = lift_operator(u, targets, rho.labels());
  Matrix out = lifted * rho.entries() * lifted.adjoint();
  out = 0.5 * (out + Matrix(out.adjoint()));
  return DensityMatrix(rho.labels(), std::move(out));
}

inline StateVector apply_unitary(const StateVector& psi, const Matrix& u, const Labels& targets) {
  const Matrix lifted = lift_operator(u, targets, psi.labels());
  return StateVector(psi.labels(), lifted * psi.amplitudes());
}

// ---------------------------------------------------------------------------
// expectation, fidelity, distances
// ---------------------------------------------------------------------------

inline double expectation(const DensityMatrix& rho, const Observable& obs) {
  for (Subsystem s : obs.labels())
    if (!detail::contains(rho.labels(), s))
      throw Error("expectation: observable labels " + to_string(obs.labels()) +
                  " are not a subset of state labels " + to_string(rho.labels()));
  const Matrix lifted = lift_operator(obs.matrix(), obs.labels(), rho.labels());
  const Complex val = (rho.entries() * lifted).trace();
  if (std::abs(val.imag()) > 1e-10 * std::max(1.0, std::abs(val.real())))
    throw NumericalError("expectation: imaginary residue " + std::to_string(val.imag()));
  return val.real();
}

inline double expectation(const StateVector& psi, const Observable& obs) {
  return expectation(to_density(psi), obs);
}

inline double purity(const DensityMatrix& rho) {
  return (rho.entries() * rho.entries()).trace().real();
}

namespace detail {

inline Matrix psd_sqrt(const Matrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(m);
  Eigen::VectorXd vals = es.eigenvalues().cwiseMax(0.0);
  return es.eigenvectors() * vals.cwiseSqrt().asDiagonal() * es.eigenvectors().adjoint();
}

}  // namespace detail

// Uhlmann fidelity F(rho, sigma) = (Tr sqrt(sqrt(rho) sigma sqrt(rho)))^2.
inline double fidelity(const DensityMatrix& rho, const DensityMatrix& sigma) {
  if (rho.labels() != sigma.labels())
    throw Error("fidelity: label mismatch between " + to_string(rho.labels()) + " and " +
                to_string(sigma.labels()));
  const Matrix sr = detail::psd_sqrt(rho.entries());
  Eigen::SelfAdjointEigenSolver<Matrix> es(sr * sigma.entries() * sr, Eigen::EigenvaluesOnly);
  const double root_sum = es.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
  return std::min(1.0, root_sum * root_sum);
}

inline double fidelity(const DensityMatrix& rho, const StateVector& psi) {
  return fidelity(rho, to_density(psi));
}

inline double fidelity(const StateVector& psi, const StateVector& phi) {
  if (psi.labels() != phi.labels())
    throw Error("fidelity: label mismatch");
  const Complex overlap = (psi.amplitudes().adjoint() * phi.amplitudes()).value();
  return std::norm(overlap);
}

inline double trace_distance(const DensityMatrix& rho, const DensityMatrix& sigma) {
  if (rho.labels() != sigma.labels())
    throw Error("trace_distance: label mismatch");
  Eigen::SelfAdjointEigenSolver<Matrix> es(rho.entries() - sigma.entries(),
                                           Eigen::EigenvaluesOnly);
  return 0.5 * es.eigenvalues().cwiseAbs().sum();
}

// Global phase is unobservable: this comparison aligns the phases first.
// Use amplitude equality directly when the phase convention matters.
inline bool equal_up_to_global_phase(const StateVector& a, const StateVector& b,
                                     double tol = 1e-10) {
  if (a.labels() != b.labels()) return false;
  Eigen::Index ref;
  a.amplitudes().cwiseAbs().maxCoeff(&ref);
  if (std::abs(b.amplitudes()(ref)) < 1e-14) return false;
  const Complex phase = a.amplitudes()(ref) / b.amplitudes()(ref);
  return (a.amplitudes() - (phase / std::abs(phase)) * b.amplitudes()).norm() < tol;
}

// ---------------------------------------------------------------------------
// JSON serialization: {labels: [...], re: [[...]], im: [[...]]}, row-major.
// ---------------------------------------------------------------------------

inline nlohmann::json to_json(const DensityMatrix& rho) {
  nlohmann::json j;
  j["labels"] = nlohmann::json::array();
  for (Subsystem s : rho.labels()) j["labels"].push_back(to_string(s));
  nlohmann::json re = nlohmann::json::array(), im = nlohmann::json::array();
  for (Eigen::Index r = 0; r < rho.dim(); ++r) {
    nlohmann::json re_row = nlohmann::json::array(), im_row = nlohmann::json::array();
    for (Eigen::Index c = 0; c < rho.dim(); ++c) {
      re_row.push_back(rho.entries()(r, c).real());
      im_row.push_back(rho.entries()(r, c).imag());
    }
    re.push_back(std::move(re_row));
    im.push_back(std::move(im_row));
  }
  j["re"] = std::move(re);
  j["im"] = std::move(im);
  return j;
}

inline DensityMatrix density_from_json(const nlohmann::json& j) {
  Labels labels;
  for (const auto& name : j.at("labels")) labels.push_back(subsystem_from_string(name));
  const auto& re = j.at("re");
  const auto& im = j.at("im");
  const Eigen::Index d = Eigen::Index(re.size());
  Matrix m(d, d);
  for (Eigen::Index r = 0; r < d; ++r)
    for (Eigen::Index c = 0; c < d; ++c)
      m(r, c) = Complex(re.at(r).at(c).get<double>(), im.at(r).at(c).get<double>());
  return DensityMatrix(std::move(labels), std::move(m));
}

}  // namespace qvortex
