#pragma once

#include <array>
#include <cmath>
#include <numbers>
#include <optional>
#include <string>

#include "qvortex/hilbert.hpp"

// Optical elements as operators, plus constructors for every state used in
// the experiment.
//
// Basis conventions (the single source of truth; everything else derives
// from these four lines):
//   |H> = (1, 0),  |V> = (0, 1)
//   |R> = (|H> - i|V>)/sqrt2,   |L> = (|H> + i|V>)/sqrt2
//   OAM doublet:  |+7> = (1, 0),  |-7> = (0, 1)
//   logical OAM:  |0> = (|+7> + |-7>)/sqrt2,  |1> = i(|-7> - |+7>)/sqrt2,
//   equivalently  |+-7> = (|0> +- i|1>)/sqrt2.
//
// With this circular convention the vortex plate maps |H, k=0> exactly onto
// the radial vector-vortex state |r>, and |V, k=0> onto -i|a>. The -i is
// absorbed into the stored logical |a>; every scalar figure of merit is
// invariant under that relabeling (asserted in the test suite).

namespace qvortex::optics {

inline constexpr double kPi = std::numbers::pi;

// --- polarization kets ------------------------------------------------------

inline Eigen::Vector2cd ket_h() { return {1.0, 0.0}; }
inline Eigen::Vector2cd ket_v() { return {0.0, 1.0}; }
inline Eigen::Vector2cd ket_d() { return Eigen::Vector2cd(1.0, 1.0) / std::sqrt(2.0); }
inline Eigen::Vector2cd ket_a() { return Eigen::Vector2cd(1.0, -1.0) / std::sqrt(2.0); }
inline Eigen::Vector2cd ket_r() { return Eigen::Vector2cd(1.0, Complex(0, -1)) / std::sqrt(2.0); }
inline Eigen::Vector2cd ket_l() { return Eigen::Vector2cd(1.0, Complex(0, 1)) / std::sqrt(2.0); }

// --- OAM kets ---------------------------------------------------------------

inline Eigen::Vector2cd ket_oam_plus() { return {1.0, 0.0}; }
inline Eigen::Vector2cd ket_oam_minus() { return {0.0, 1.0}; }
inline Eigen::Vector2cd ket_oam_log0() { return Eigen::Vector2cd(1.0, 1.0) / std::sqrt(2.0); }
inline Eigen::Vector2cd ket_oam_log1() {
  return Eigen::Vector2cd(Complex(0, -1), Complex(0, 1)) / std::sqrt(2.0);
}

// Unitary whose columns are the logical OAM kets: maps logical coordinates
// to the physical +-7 basis.
inline Eigen::Matrix2cd oam_logical_to_physical() {
  Eigen::Matrix2cd b;
  b.col(0) = ket_oam_log0();
  b.col(1) = ket_oam_log1();
  return b;
}

// Expresses a 2x2 operator given in the logical OAM basis as a matrix in the
// physical +-7 basis.
inline Eigen::Matrix2cd oam_from_logical(const Eigen::Matrix2cd& logical) {
  const Eigen::Matrix2cd b = oam_logical_to_physical();
  return b * logical * b.adjoint();
}

// Rotates the Oam2 slot of a density matrix into the logical basis for
// display alongside the tomography figures.
inline DensityMatrix to_logical_frame(const DensityMatrix& rho) {
  return apply_unitary(rho, oam_logical_to_physical().adjoint(), {Subsystem::Oam2});
}

// --- waveplates -------------------------------------------------------------

enum class WaveplateKind { Half, Quarter };

struct WaveplateSetting {
  WaveplateKind kind = WaveplateKind::Half;
  double theta = 0.0;  // fast-axis angle from horizontal, radians

  double normalized_theta() const {
    double t = std::fmod(theta, kPi);
    if (t < 0) t += kPi;
    return t;
  }
};

namespace detail {

inline Eigen::Matrix2cd rotation(double theta) {
  Eigen::Matrix2cd r;
  r << std::cos(theta), -std::sin(theta), std::sin(theta), std::cos(theta);
  return r;
}

}  // namespace detail

// Jones matrix of a retarder with fast axis at theta, global phase dropped:
// R(theta) diag(1, e^{i delta}) R(-theta) with delta = pi (half) or pi/2
// (quarter). QUARTER at theta = pi/4 sends |H> to |R> under the conventions
// above (fixed by direct evaluation; see tests).
inline Eigen::Matrix2cd waveplate_unitary(const WaveplateSetting& s) {
  const double delta = s.kind == WaveplateKind::Half ? kPi : kPi / 2.0;
  const double t = s.normalized_theta();
  Eigen::Matrix2cd retard = Eigen::Matrix2cd::Zero();
  retard(0, 0) = 1.0;
  retard(1, 1) = std::exp(Complex(0, delta));
  return detail::rotation(t) * retard * detail::rotation(-t);
}

// --- projective polarization analysis (QWP -> HWP -> PBS) -------------------

enum class PbsPort { Transmit, Reflect };

struct ProjectorSetting {
  Subsystem subsystem = Subsystem::Pol1;
  double qwp = 0.0;
  double hwp = 0.0;
  PbsPort port = PbsPort::Transmit;
};

// Direction selected by the analysis chain: the photon passes the QWP, then
// the HWP, then a PBS that transmits |H> and reflects |V>, so the projector
// is onto (U_hwp U_qwp)^dagger |port>.
inline Eigen::Vector2cd analysis_direction(const ProjectorSetting& s) {
  const Eigen::Matrix2cd uq = waveplate_unitary({WaveplateKind::Quarter, s.qwp});
  const Eigen::Matrix2cd uh = waveplate_unitary({WaveplateKind::Half, s.hwp});
  const Eigen::Vector2cd port = s.port == PbsPort::Transmit ? ket_h() : ket_v();
  return (uh * uq).adjoint() * port;
}

inline Observable projector(const ProjectorSetting& s) {
  const Eigen::Vector2cd chi = analysis_direction(s);
  return Observable({s.subsystem}, chi * chi.adjoint());
}

// The six canonical analysis settings. Indices pair up into the three
// mutually unbiased bases: (H,V), (D,A), (R,L).
struct CanonicalSetting {
  char name;
  double qwp;
  double hwp;
  PbsPort port;
};

inline const std::array<CanonicalSetting, 6>& canonical_settings() {
  static const std::array<CanonicalSetting, 6> table = {{
      {'H', 0.0, 0.0, PbsPort::Transmit},
      {'V', 0.0, 0.0, PbsPort::Reflect},
      {'D', kPi / 4, kPi / 8, PbsPort::Transmit},
      {'A', kPi / 4, kPi / 8, PbsPort::Reflect},
      {'R', 3 * kPi / 4, 0.0, PbsPort::Transmit},
      {'L', 3 * kPi / 4, 0.0, PbsPort::Reflect},
  }};
  return table;
}

inline ProjectorSetting canonical_projector_setting(Subsystem subsystem, int index) {
  const auto& c = canonical_settings().at(std::size_t(index));
  return {subsystem, c.qwp, c.hwp, c.port};
}

// 2x2 projector matrix of canonical setting `index`, in the H/V basis.
inline Eigen::Matrix2cd canonical_projector_matrix(int index) {
  const Eigen::Vector2cd chi =
      analysis_direction(canonical_projector_setting(Subsystem::Pol1, index));
  return chi * chi.adjoint();
}

// --- vortex plate (non-tunable q-plate, 2q = 7) ------------------------------

enum class VortexDirection { Encode, Decode };

struct VortexPlateSpec {
  int two_q = 7;
  VortexDirection direction = VortexDirection::Encode;
};

// Isometry realizing the q-plate rule |L,0> -> |R,+7>, |R,0> -> |L,-7> on a
// Gaussian (k = 0) input. Maps the polarization qubit into the 4-dimensional
// polarization x OAM space of the vector-vortex doublet.
inline Eigen::MatrixXcd vv_encode_isometry() {
  Eigen::MatrixXcd v(4, 2);
  v = kron(Matrix(ket_r()), Matrix(ket_oam_plus())) * ket_l().adjoint() +
      kron(Matrix(ket_l()), Matrix(ket_oam_minus())) * ket_r().adjoint();
  return v;
}

namespace detail {

inline void require_order_7(const VortexPlateSpec& spec) {
  if (spec.two_q != 7)
    throw Error("vortex_plate: only the 2q = 7 plate of the experiment is modeled, got 2q = " +
                std::to_string(spec.two_q));
}

// Checks that the pol label immediately precedes Oam2 in the labels and that
// they are the two least significant index positions, which holds for every
// canonical label set containing Oam2.
inline Subsystem vv_pol_label(const Labels& labels) {
  if (labels.size() < 2 || labels.back() != Subsystem::Oam2)
    throw Error("vortex plate: expected a state whose last subsystem is OAM2, got " +
                to_string(labels));
  return labels[labels.size() - 2];
}

}  // namespace detail

// Applies the vortex plate in the encoding direction to the polarization
// qubit `pol` of a Gaussian-mode state (no Oam2 label present), producing a
// state on the original labels plus Oam2.
inline StateVector vortex_encode(const StateVector& psi, Subsystem pol,
                                 const VortexPlateSpec& spec = {}) {
  detail::require_order_7(spec);
  if (qvortex::detail::contains(psi.labels(), Subsystem::Oam2))
    throw Error("vortex_plate ENCODE: input already carries OAM content outside k = 0");
  if (psi.labels().back() != pol)
    throw Error("vortex_plate ENCODE: polarization label " + to_string(pol) +
                " must be the last subsystem of " + to_string(psi.labels()));
  Labels out_labels = psi.labels();
  out_labels.push_back(Subsystem::Oam2);
  const Eigen::MatrixXcd v = vv_encode_isometry();
  const Eigen::Index prefix = psi.dim() / 2;
  Vector out = Vector::Zero(psi.dim() * 2);
  for (Eigen::Index pre = 0; pre < prefix; ++pre)
    for (Eigen::Index j = 0; j < 4; ++j)
      for (Eigen::Index p = 0; p < 2; ++p)
        out(pre * 4 + j) += v(j, p) * psi.amplitudes()(pre * 2 + p);
  return StateVector(std::move(out_labels), std::move(out));
}

inline DensityMatrix vortex_encode(const DensityMatrix& rho, Subsystem pol,
                                   const VortexPlateSpec& spec = {}) {
  detail::require_order_7(spec);
  if (qvortex::detail::contains(rho.labels(), Subsystem::Oam2))
    throw Error("vortex_plate ENCODE: input already carries OAM content outside k = 0");
  if (rho.labels().back() != pol)
    throw Error("vortex_plate ENCODE: polarization label " + to_string(pol) +
                " must be the last subsystem of " + to_string(rho.labels()));
  Labels out_labels = rho.labels();
  out_labels.push_back(Subsystem::Oam2);
  const Matrix v = kron(Matrix::Identity(rho.dim() / 2, rho.dim() / 2), vv_encode_isometry());
  return DensityMatrix(std::move(out_labels), v * rho.entries() * v.adjoint());
}

namespace detail {

// Weight of the input lying outside span{|R,+7>, |L,-7>}; those components
// would leave the plate at k = -+14 instead of k = 0.
inline void check_decode_domain(const Matrix& rho4_block_sum) {
  const Eigen::MatrixXcd v = vv_encode_isometry();
  const Matrix outside = Matrix::Identity(4, 4) - v * v.adjoint();
  const Eigen::Vector4cd bad_r = kron(Matrix(ket_r()), Matrix(ket_oam_minus()));
  const Eigen::Vector4cd bad_l = kron(Matrix(ket_l()), Matrix(ket_oam_plus()));
  const double w_r = std::abs((bad_r.adjoint() * rho4_block_sum * bad_r)(0, 0));
  const double w_l = std::abs((bad_l.adjoint() * rho4_block_sum * bad_l)(0, 0));
  const double w_total = std::abs((outside * rho4_block_sum * outside).trace());
  if (w_total > 1e-18) {  // amplitude tolerance 1e-9, squared
    throw Error("vortex_plate DECODE: input has OAM content outside the vector-vortex subspace "
                "(weight " +
                std::to_string(w_total) + ": |R,-7> " + std::to_string(w_r) + ", |L,+7> " +
                std::to_string(w_l) + "); use decode_and_filter for lossy analysis");
  }
}

}  // namespace detail

// Exact inverse of the encoding plate, defined on states supported on the
// vector-vortex subspace. Amplitudes outside it larger than 1e-9 are an
// error rather than silently truncated.
inline StateVector vortex_decode(const StateVector& psi, const VortexPlateSpec& spec = {}) {
  detail::require_order_7(spec);
  detail::vv_pol_label(psi.labels());
  const Eigen::MatrixXcd v = vv_encode_isometry();
  const Eigen::Index prefix = psi.dim() / 4;
  Matrix block_sum = Matrix::Zero(4, 4);
  for (Eigen::Index pre = 0; pre < prefix; ++pre) {
    const Eigen::Vector4cd block = psi.amplitudes().segment(pre * 4, 4);
    block_sum += block * block.adjoint();
  }
  detail::check_decode_domain(block_sum);
  Labels out_labels = psi.labels();
  out_labels.pop_back();
  Vector out = Vector::Zero(prefix * 2);
  for (Eigen::Index pre = 0; pre < prefix; ++pre)
    out.segment(pre * 2, 2) = v.adjoint() * psi.amplitudes().segment(pre * 4, 4);
  return StateVector(std::move(out_labels), std::move(out));
}

inline DensityMatrix vortex_decode(const DensityMatrix& rho, const VortexPlateSpec& spec = {}) {
  detail::require_order_7(spec);
  detail::vv_pol_label(rho.labels());
  const Eigen::Index prefix = rho.dim() / 4;
  Matrix block_sum = Matrix::Zero(4, 4);
  for (Eigen::Index pre = 0; pre < prefix; ++pre)
    block_sum += rho.entries().block(pre * 4, pre * 4, 4, 4);
  detail::check_decode_domain(block_sum);
  const Matrix v = kron(Matrix::Identity(prefix, prefix), vv_encode_isometry());
  Labels out_labels = rho.labels();
  out_labels.pop_back();
  return DensityMatrix(std::move(out_labels), v.adjoint() * rho.entries() * v);
}

// Spec-shaped entry point for both directions.
inline StateVector vortex_plate(const StateVector& state, const VortexPlateSpec& spec) {
  if (spec.direction == VortexDirection::Encode) {
    if (state.labels().empty()) throw Error("vortex_plate: empty state");
    return vortex_encode(state, state.labels().back(), spec);
  }
  return vortex_decode(state, spec);
}

inline DensityMatrix vortex_plate(const DensityMatrix& state, const VortexPlateSpec& spec) {
  if (spec.direction == VortexDirection::Encode)
    return vortex_encode(state, state.labels().back(), spec);
  return vortex_decode(state, spec);
}

// --- analysis chain: decode plate followed by the single-mode fiber ----------

struct FilterResult {
  std::optional<DensityMatrix> state;
  double probability = 0.0;
};

// Measurement-side decode of an arbitrary polarization x OAM state: the
// plate sends the vector-vortex subspace to k = 0 and everything else to
// k = -+14, which the single-mode fiber rejects. Returns the renormalized
// k = 0 polarization state and the surviving weight.
inline FilterResult decode_and_filter(const DensityMatrix& rho, const VortexPlateSpec& spec = {}) {
  detail::require_order_7(spec);
  detail::vv_pol_label(rho.labels());
  const Eigen::Index prefix = rho.dim() / 4;
  const Matrix v = kron(Matrix::Identity(prefix, prefix), vv_encode_isometry());
  Matrix reduced = v.adjoint() * rho.entries() * v;
  const double weight = reduced.trace().real();
  if (weight < 1e-15) return {std::nullopt, 0.0};
  Labels out_labels = rho.labels();
  out_labels.pop_back();
  return {DensityMatrix(std::move(out_labels), reduced / weight), weight};
}

// Single-mode-fiber filter: passes the Gaussian (k = 0) mode and rejects all
// OAM content. A state still carrying the Oam2 label has all its weight at
// k = +-7 and is blocked; a state without it is already Gaussian.
inline FilterResult smf_filter(const DensityMatrix& rho) {
  if (!qvortex::detail::contains(rho.labels(), Subsystem::Oam2)) return {rho, 1.0};
  return {std::nullopt, 0.0};
}

inline FilterResult smf_filter(const StateVector& psi) { return smf_filter(to_density(psi)); }

// --- cascaded OAM analysis (independent polarization and OAM stages) --------

// When the polarization of photon 2 has already been measured, the photon
// enters the second plate in the PBS port polarization (|H> for the
// transmitted port). The plate then maps |+7> -> |L> and |-7> -> |R> at
// k = 0 while half of the amplitude leaves at k = -+14 and is lost in the
// single-mode fiber. The logical OAM kets map exactly onto |H> and |V>.
inline Eigen::Matrix2cd oam_decode_map() {
  Eigen::Matrix2cd w;
  w = ket_l() * ket_oam_plus().adjoint() + ket_r() * ket_oam_minus().adjoint();
  return w;
}

inline constexpr double kOamChainEfficiency = 0.5;

// Effective measurement operator on the OAM doublet for canonical analysis
// setting `index` applied after the cascade. Equals the logical-basis
// projector scaled by the chain efficiency.
inline Eigen::Matrix2cd oam_analysis_operator(int index) {
  const Eigen::Matrix2cd w = oam_decode_map();
  return kOamChainEfficiency * w.adjoint() * canonical_projector_matrix(index) * w;
}

// --- states of the experiment -----------------------------------------------

// (|HV> - |VH>)/sqrt2 on the two polarization qubits.
inline StateVector make_singlet() {
  Vector amps(4);
  amps << 0, 1.0 / std::sqrt(2.0), -1.0 / std::sqrt(2.0), 0;
  return StateVector({Subsystem::Pol1, Subsystem::Pol2}, std::move(amps));
}

enum class VvSign { Plus, Minus };  // Plus: |r>, Minus: |a>

// Vector-vortex states of order 7: |r> = (|R,+7> + |L,-7>)/sqrt2 and
// |a> = (|R,+7> - |L,-7>)/sqrt2, on {Pol2, Oam2}.
inline StateVector make_vv(VvSign sign) {
  const double s = sign == VvSign::Plus ? 1.0 : -1.0;
  Vector amps = (kron(Matrix(ket_r()), Matrix(ket_oam_plus())) +
                 s * kron(Matrix(ket_l()), Matrix(ket_oam_minus()))) /
                std::sqrt(2.0);
  return StateVector({Subsystem::Pol2, Subsystem::Oam2}, std::move(amps));
}

// Logical vector-vortex kets as produced by the encoding plate: |r> exactly,
// and -i|a> (the plate's residual phase is absorbed here once and for all).
inline StateVector vv_r_logical() { return make_vv(VvSign::Plus); }

inline StateVector vv_a_logical() {
  const StateVector a = make_vv(VvSign::Minus);
  return StateVector(a.labels(), Complex(0, -1) * a.amplitudes());
}

// Hybrid entangled state: the encoding plate applied to photon 2 of the
// polarization singlet, (|H>_1 |a_log>_2 - |V>_1 |r>_2)/sqrt2 on all three
// qubits.
inline StateVector make_hybrid() { return vortex_encode(make_singlet(), Subsystem::Pol2); }

}  // namespace qvortex::optics
