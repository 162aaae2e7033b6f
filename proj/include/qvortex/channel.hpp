#pragma once

#include <cmath>
#include <cstdint>
#include <iomanip>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "qvortex/hilbert.hpp"
#include "qvortex/parallel.hpp"

// The air-core fiber channel and the photon-counting measurement process.

namespace qvortex::channel {

// --- fiber -------------------------------------------------------------------

struct FiberParams {
  double length_m = 5.0;
  double loss_db_per_km = 1.0;
  double coupling_eta = 0.5;
  double mode_mix_epsilon = 0.0;  // probability of |+7> <-> |-7> crosstalk
  double intermodal_phase = 0.0;  // phase of |+7> relative to |-7>, radians

  void validate() const {
    if (length_m < 0) throw ConfigError("fiber: length_m must be nonnegative");
    if (loss_db_per_km < 0) throw ConfigError("fiber: loss must be nonnegative");
    if (coupling_eta < 0 || coupling_eta > 1)
      throw ConfigError("fiber: coupling_eta must lie in [0, 1]");
    if (mode_mix_epsilon < 0 || mode_mix_epsilon > 0.5)
      throw ConfigError("fiber: mode_mix_epsilon must lie in [0, 1/2]");
  }
};

// Heralded survival through coupling and propagation loss. Leakage into the
// unused l = +-5, +-6 mode groups is folded into this scalar.
inline double survival_probability(const FiberParams& p) {
  return p.coupling_eta * std::pow(10.0, -p.loss_db_per_km * (p.length_m / 1000.0) / 10.0);
}

struct FiberOutput {
  DensityMatrix state;
  double survival;
};

// Transmits the OAM-carrying part of a state through the fiber: intermodal
// phase, then symmetric mode mixing, then scalar loss. The returned state is
// renormalized; survival is reported separately and is input-independent.
inline FiberOutput fiber_transmit(const DensityMatrix& rho, const FiberParams& p) {
  p.validate();
  if (!detail::contains(rho.labels(), Subsystem::Oam2))
    throw Error("fiber_transmit: state has no OAM content, labels " + to_string(rho.labels()));
  Eigen::Matrix2cd phase = Eigen::Matrix2cd::Identity();
  phase(0, 0) = std::exp(Complex(0, p.intermodal_phase));
  DensityMatrix out = apply_unitary(rho, phase, {Subsystem::Oam2});
  if (p.mode_mix_epsilon > 0) {
    const Matrix swapped =
        apply_unitary(out, pauli_x(), {Subsystem::Oam2}).entries();
    Matrix mixed = (1.0 - p.mode_mix_epsilon) * out.entries() + p.mode_mix_epsilon * swapped;
    out = DensityMatrix(out.labels(), std::move(mixed));
  }
  return {std::move(out), survival_probability(p)};
}

// --- generic noise -----------------------------------------------------------

enum class NoiseKind { None, Depolarizing, Dephasing };

struct NoiseModel {
  NoiseKind kind = NoiseKind::None;
  double strength = 0.0;
  Labels targets;  // empty with kind None

  void validate() const {
    if (strength < 0 || strength > 1)
      throw ConfigError("noise: strength must lie in [0, 1], got " + std::to_string(strength));
    if (kind != NoiseKind::None && targets.empty())
      throw ConfigError("noise: target subsystem set is empty");
  }
};

inline DensityMatrix apply_noise(const DensityMatrix& rho, const NoiseModel& m) {
  m.validate();
  if (m.kind == NoiseKind::None || m.strength == 0.0) return rho;
  const double p = m.strength;
  if (m.kind == NoiseKind::Depolarizing) {
    // (1-p) rho + p (I/d on targets) x (marginal on the complement)
    Labels rest;
    for (Subsystem s : rho.labels())
      if (!detail::contains(m.targets, s)) rest.push_back(s);
    DensityMatrix mixed_part = rest.empty()
                                   ? maximally_mixed(m.targets)
                                   : tensor(maximally_mixed(m.targets), partial_trace(rho, rest));
    if (mixed_part.labels() != rho.labels())
      throw ConfigError("apply_noise: targets " + to_string(m.targets) + " not within " +
                        to_string(rho.labels()));
    return DensityMatrix(rho.labels(),
                         (1.0 - p) * rho.entries() + p * mixed_part.entries());
  }
  // Dephasing: Kraus {sqrt(1-p) I, sqrt(p) sigma_z} applied per target qubit.
  Matrix acc = rho.entries();
  for (Subsystem s : m.targets) {
    if (!detail::contains(rho.labels(), s))
      throw ConfigError("apply_noise: target " + to_string(s) + " not in " +
                        to_string(rho.labels()));
    const Matrix z = lift_operator(pauli_z(), {s}, rho.labels());
    acc = (1.0 - p) * acc + p * z * acc * z;
  }
  return DensityMatrix(rho.labels(), std::move(acc));
}

// --- detection ---------------------------------------------------------------

// Only the per-setting integration-time scale is anchored by the modeled
// experiment; rates and efficiencies are illustrative defaults, overridable
// in every config.
struct DetectionParams {
  double pair_rate_hz = 1e5;
  double integration_s = 1.0;  // per measurement setting
  double coincidence_window_s = 1e-9;
  double detector_efficiency = 0.6;  // per arm
  double dark_rate_hz = 100.0;       // per detector

  void validate() const {
    if (pair_rate_hz < 0 || integration_s < 0 || coincidence_window_s < 0 ||
        detector_efficiency < 0 || detector_efficiency > 1 || dark_rate_hz < 0)
      throw ConfigError("detection: parameters must be nonnegative, efficiency in [0, 1]");
  }
};

// One arm of a coincidence measurement. Empty labels stand for an
// undiscriminating herald detector.
struct ArmOp {
  Labels labels;
  Matrix op;

  bool trivial() const { return labels.empty(); }
};

struct MeasurementOp {
  std::string id;        // e.g. "HV" or "chsh:b0:++"
  std::string basis_id;  // groups outcomes of one analyzer configuration
  ArmOp arm1;            // photon 1 (or herald)
  ArmOp arm2;            // photon 2 analysis chain
  double integration_s = 0.0;  // 0: use DetectionParams.integration_s
};

namespace detail {

inline double arm_probability(const DensityMatrix& rho, const ArmOp& arm) {
  if (arm.trivial()) return 1.0;
  const Matrix lifted = lift_operator(arm.op, arm.labels, rho.labels());
  return std::clamp((rho.entries() * lifted).trace().real(), 0.0, 1.0);
}

inline double joint_probability(const DensityMatrix& rho, const MeasurementOp& op) {
  Matrix joint = Matrix::Identity(rho.dim(), rho.dim());
  if (!op.arm1.trivial()) joint = lift_operator(op.arm1.op, op.arm1.labels, rho.labels());
  if (!op.arm2.trivial()) joint *= lift_operator(op.arm2.op, op.arm2.labels, rho.labels());
  return std::clamp((rho.entries() * joint).trace().real(), 0.0, 1.0);
}

}  // namespace detail

// Born-rule coincidence probabilities, for the infinite-statistics path.
inline std::vector<double> exact_probabilities(const DensityMatrix& rho,
                                               const std::vector<MeasurementOp>& ops) {
  std::vector<double> out;
  out.reserve(ops.size());
  for (const auto& op : ops) out.push_back(detail::joint_probability(rho, op));
  return out;
}

// --- counting ----------------------------------------------------------------

struct CountRecord {
  std::string setting_id;
  std::int64_t coincidences = 0;        // raw
  double corrected = 0.0;               // after accidental subtraction
  double accidental_estimate = 0.0;     // singles_1 * singles_2 * window / T
  std::int64_t singles_1 = 0;
  std::int64_t singles_2 = 0;
  double integration_s = 0.0;
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;
};

// Independent reproducible stream per (seed, stream id).
inline std::mt19937_64 make_stream(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{std::uint32_t(seed), std::uint32_t(seed >> 32), std::uint32_t(stream),
                    std::uint32_t(stream >> 32), 0x51a2b3c4u};
  return std::mt19937_64(seq);
}

namespace detail {

inline std::int64_t draw_poisson(std::mt19937_64& eng, double mean) {
  if (mean <= 0) return 0;
  std::poisson_distribution<std::int64_t> dist(mean);
  return dist(eng);
}

}  // namespace detail

// Draws Poissonian coincidence and singles counts for every measurement
// setting. `survival` is the heralded fiber survival of the photon-2 arm.
// Deterministic given (seed, per-setting stream index).
inline std::vector<CountRecord> sample_counts(const DensityMatrix& rho,
                                              const std::vector<MeasurementOp>& ops,
                                              const DetectionParams& det, double survival,
                                              std::uint64_t seed) {
  det.validate();
  if (ops.empty()) throw Error("sample_counts: empty settings list");
  std::vector<CountRecord> records(ops.size());
  const double eff = det.detector_efficiency;
  parallel::parallel_for(ops.size(), [&](std::size_t i) {
    const auto& op = ops[i];
    const double T = op.integration_s > 0 ? op.integration_s : det.integration_s;
    const double p_joint = detail::joint_probability(rho, op);
    const double p1 = detail::arm_probability(rho, op.arm1);
    const double p2 = detail::arm_probability(rho, op.arm2);
    const double sig_s1 = det.pair_rate_hz * eff * p1;
    const double sig_s2 = det.pair_rate_hz * survival * eff * p2;
    const double rate_s1 = sig_s1 + det.dark_rate_hz;
    const double rate_s2 = sig_s2 + det.dark_rate_hz;
    const double lambda_signal = det.pair_rate_hz * T * survival * eff * eff * p_joint;
    // Uncorrelated background: dark counts crossing the signal and each
    // other. Photons of distinct pairs do not coincide in the heralded-pair
    // model, so with zero dark rate there is no accidental floor, while the
    // experimenter's estimate keeps the standard singles-product form.
    const double lambda_acc =
        (rate_s1 * rate_s2 - sig_s1 * sig_s2) * det.coincidence_window_s * T;

    auto eng = make_stream(seed, i);
    CountRecord rec;
    rec.setting_id = op.id;
    rec.coincidences = detail::draw_poisson(eng, lambda_signal + lambda_acc);
    rec.singles_1 = detail::draw_poisson(eng, rate_s1 * T);
    rec.singles_2 = detail::draw_poisson(eng, rate_s2 * T);
    rec.integration_s = T;
    rec.accidental_estimate = T > 0 ? double(rec.singles_1) * double(rec.singles_2) *
                                          det.coincidence_window_s / T
                                    : 0.0;
    rec.corrected = double(rec.coincidences);
    rec.seed = seed;
    rec.stream = i;
    records[i] = std::move(rec);
  });
  return records;
}

// Accidental subtraction, clamped at zero so downstream tomography never
// sees negative counts. Raw values stay in place.
inline std::vector<CountRecord> subtract_accidentals(std::vector<CountRecord> records) {
  for (auto& rec : records)
    rec.corrected = std::max(0.0, double(rec.coincidences) - rec.accidental_estimate);
  return records;
}

// --- CSV ---------------------------------------------------------------------

inline constexpr const char* kCountsCsvHeader =
    "setting_id,c_raw,c_corrected,accidentals,singles_1,singles_2,integration_s,seed,stream";

inline void write_counts_csv(std::ostream& os, const std::vector<CountRecord>& records) {
  os << kCountsCsvHeader << "\n";
  os << std::setprecision(17);
  for (const auto& r : records) {
    os << r.setting_id << ',' << r.coincidences << ',' << r.corrected << ','
       << r.accidental_estimate << ',' << r.singles_1 << ',' << r.singles_2 << ','
       << r.integration_s << ',' << r.seed << ',' << r.stream << "\n";
  }
}

inline std::vector<CountRecord> read_counts_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != kCountsCsvHeader)
    throw ConfigError("counts CSV: missing or unexpected header");
  std::vector<CountRecord> records;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string field;
    std::vector<std::string> fields;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (fields.size() != 9)
      throw ConfigError("counts CSV: expected 9 fields, got " + std::to_string(fields.size()));
    CountRecord r;
    r.setting_id = fields[0];
    r.coincidences = std::stoll(fields[1]);
    r.corrected = std::stod(fields[2]);
    r.accidental_estimate = std::stod(fields[3]);
    r.singles_1 = std::stoll(fields[4]);
    r.singles_2 = std::stoll(fields[5]);
    r.integration_s = std::stod(fields[6]);
    r.seed = std::stoull(fields[7]);
    r.stream = std::stoull(fields[8]);
    records.push_back(std::move(r));
  }
  return records;
}

}  // namespace qvortex::channel
