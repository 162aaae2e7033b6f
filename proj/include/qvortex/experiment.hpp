#pragma once

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "qvortex/channel.hpp"
#include "qvortex/hilbert.hpp"
#include "qvortex/nonlocality.hpp"
#include "qvortex/optics.hpp"
#include "qvortex/tomography.hpp"
#include "qvortex/version.hpp"

// Scenario orchestration: configure one of the four experiments, run
// generation -> fiber -> measurement -> reconstruction -> inequality tests,
// and emit a report.

namespace qvortex::experiment {

enum class Scenario { Source, HyEnt, Intra, ThreeQubit };
enum class Analysis { Tomo, Chsh, Mermin, Hardy };
enum class CountsPolicy { Both, RawOnly, CorrectedOnly };

inline std::string to_string(Scenario s) {
  switch (s) {
    case Scenario::Source: return "SOURCE";
    case Scenario::HyEnt: return "HYENT";
    case Scenario::Intra: return "INTRA";
    case Scenario::ThreeQubit: return "THREE_QUBIT";
  }
  return "?";
}

inline Scenario scenario_from_string(const std::string& name) {
  if (name == "SOURCE") return Scenario::Source;
  if (name == "HYENT") return Scenario::HyEnt;
  if (name == "INTRA") return Scenario::Intra;
  if (name == "THREE_QUBIT") return Scenario::ThreeQubit;
  throw ConfigError("unknown scenario: " + name);
}

inline std::string to_string(Analysis a) {
  switch (a) {
    case Analysis::Tomo: return "TOMO";
    case Analysis::Chsh: return "CHSH";
    case Analysis::Mermin: return "MERMIN";
    case Analysis::Hardy: return "HARDY";
  }
  return "?";
}

inline Analysis analysis_from_string(const std::string& name) {
  if (name == "TOMO") return Analysis::Tomo;
  if (name == "CHSH") return Analysis::Chsh;
  if (name == "MERMIN") return Analysis::Mermin;
  if (name == "HARDY") return Analysis::Hardy;
  throw ConfigError("unknown analysis: " + name);
}

struct ScenarioConfig {
  Scenario scenario = Scenario::Source;
  channel::FiberParams fiber;
  channel::NoiseModel noise;
  channel::DetectionParams detection;
  std::uint64_t seed = 0;
  std::vector<Analysis> analyses = {Analysis::Tomo, Analysis::Chsh};
  bool infinite_statistics = false;
  std::optional<double> shots_per_basis;  // expected coincidences per basis
  int bootstrap_resamples = 100;          // 0 disables the bootstrap
  CountsPolicy counts_policy = CountsPolicy::Both;
  tomography::MleOptions mle;

  void validate() const {
    fiber.validate();
    noise.validate();
    detection.validate();
    if (bootstrap_resamples != 0 && bootstrap_resamples < 100)
      throw ConfigError("config: bootstrap_resamples must be 0 or at least 100");
    if (shots_per_basis && *shots_per_basis <= 0)
      throw ConfigError("config: shots_per_basis must be positive");
    for (Analysis a : analyses) {
      if ((a == Analysis::Mermin || a == Analysis::Hardy) && scenario != Scenario::ThreeQubit)
        throw ConfigError("config: " + to_string(a) + " requires the THREE_QUBIT scenario, not " +
                          to_string(scenario));
    }
  }

  bool has(Analysis a) const {
    return std::find(analyses.begin(), analyses.end(), a) != analyses.end();
  }
};

// --- config JSON -------------------------------------------------------------

inline nlohmann::json to_json(const ScenarioConfig& c) {
  nlohmann::json j;
  j["scenario"] = to_string(c.scenario);
  j["seed"] = c.seed;
  j["fiber"] = {{"length_m", c.fiber.length_m},
                {"loss_db_per_km", c.fiber.loss_db_per_km},
                {"coupling_eta", c.fiber.coupling_eta},
                {"mode_mix_epsilon", c.fiber.mode_mix_epsilon},
                {"intermodal_phase", c.fiber.intermodal_phase}};
  nlohmann::json targets = nlohmann::json::array();
  for (Subsystem s : c.noise.targets) targets.push_back(qvortex::to_string(s));
  const char* kind = c.noise.kind == channel::NoiseKind::None
                         ? "NONE"
                         : (c.noise.kind == channel::NoiseKind::Depolarizing ? "DEPOLARIZING"
                                                                             : "DEPHASING");
  j["noise"] = {{"kind", kind}, {"strength", c.noise.strength}, {"targets", targets}};
  j["detection"] = {{"pair_rate_hz", c.detection.pair_rate_hz},
                    {"integration_s", c.detection.integration_s},
                    {"coincidence_window_s", c.detection.coincidence_window_s},
                    {"detector_efficiency", c.detection.detector_efficiency},
                    {"dark_rate_hz", c.detection.dark_rate_hz}};
  nlohmann::json analyses = nlohmann::json::array();
  for (Analysis a : c.analyses) analyses.push_back(to_string(a));
  j["analyses"] = analyses;
  j["infinite_statistics"] = c.infinite_statistics;
  if (c.shots_per_basis)
    j["shots_per_basis"] = *c.shots_per_basis;
  else
    j["shots_per_basis"] = nullptr;
  j["bootstrap_resamples"] = c.bootstrap_resamples;
  j["counts_policy"] = c.counts_policy == CountsPolicy::Both
                           ? "both"
                           : (c.counts_policy == CountsPolicy::RawOnly ? "raw_only"
                                                                       : "corrected_only");
  j["mle"] = {{"tolerance", c.mle.tolerance}, {"max_iterations", c.mle.max_iterations}};
  return j;
}

namespace detail {

inline void reject_unknown_keys(const nlohmann::json& j, const std::set<std::string>& known,
                                const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!known.count(it.key()))
      throw ConfigError("config: unknown key '" + it.key() + "' in " + where);
}

}  // namespace detail

namespace detail {
ScenarioConfig parse_config(const nlohmann::json& j);
}  // namespace detail

inline ScenarioConfig config_from_json(const nlohmann::json& j) {
  try {
    return detail::parse_config(j);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: malformed field: ") + e.what());
  }
}

inline ScenarioConfig detail::parse_config(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config: expected a JSON object");
  detail::reject_unknown_keys(
      j,
      {"scenario", "seed", "fiber", "noise", "detection", "analyses", "infinite_statistics",
       "shots_per_basis", "bootstrap_resamples", "counts_policy", "mle"},
      "top level");
  ScenarioConfig c;
  if (!j.contains("scenario")) throw ConfigError("config: missing 'scenario'");
  c.scenario = scenario_from_string(j["scenario"].get<std::string>());
  if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
  if (j.contains("fiber")) {
    const auto& f = j["fiber"];
    detail::reject_unknown_keys(
        f, {"length_m", "loss_db_per_km", "coupling_eta", "mode_mix_epsilon", "intermodal_phase"},
        "fiber");
    if (f.contains("length_m")) c.fiber.length_m = f["length_m"].get<double>();
    if (f.contains("loss_db_per_km")) c.fiber.loss_db_per_km = f["loss_db_per_km"].get<double>();
    if (f.contains("coupling_eta")) c.fiber.coupling_eta = f["coupling_eta"].get<double>();
    if (f.contains("mode_mix_epsilon"))
      c.fiber.mode_mix_epsilon = f["mode_mix_epsilon"].get<double>();
    if (f.contains("intermodal_phase"))
      c.fiber.intermodal_phase = f["intermodal_phase"].get<double>();
  }
  if (j.contains("noise")) {
    const auto& n = j["noise"];
    detail::reject_unknown_keys(n, {"kind", "strength", "targets"}, "noise");
    if (n.contains("kind")) {
      const std::string kind = n["kind"].get<std::string>();
      if (kind == "NONE")
        c.noise.kind = channel::NoiseKind::None;
      else if (kind == "DEPOLARIZING")
        c.noise.kind = channel::NoiseKind::Depolarizing;
      else if (kind == "DEPHASING")
        c.noise.kind = channel::NoiseKind::Dephasing;
      else
        throw ConfigError("config: unknown noise kind '" + kind + "'");
    }
    if (n.contains("strength")) c.noise.strength = n["strength"].get<double>();
    if (n.contains("targets"))
      for (const auto& t : n["targets"])
        c.noise.targets.push_back(subsystem_from_string(t.get<std::string>()));
  }
  if (j.contains("detection")) {
    const auto& d = j["detection"];
    detail::reject_unknown_keys(d,
                                {"pair_rate_hz", "integration_s", "coincidence_window_s",
                                 "detector_efficiency", "dark_rate_hz"},
                                "detection");
    if (d.contains("pair_rate_hz")) c.detection.pair_rate_hz = d["pair_rate_hz"].get<double>();
    if (d.contains("integration_s")) c.detection.integration_s = d["integration_s"].get<double>();
    if (d.contains("coincidence_window_s"))
      c.detection.coincidence_window_s = d["coincidence_window_s"].get<double>();
    if (d.contains("detector_efficiency"))
      c.detection.detector_efficiency = d["detector_efficiency"].get<double>();
    if (d.contains("dark_rate_hz")) c.detection.dark_rate_hz = d["dark_rate_hz"].get<double>();
  }
  if (j.contains("analyses")) {
    c.analyses.clear();
    for (const auto& a : j["analyses"]) c.analyses.push_back(analysis_from_string(a));
  }
  if (j.contains("infinite_statistics"))
    c.infinite_statistics = j["infinite_statistics"].get<bool>();
  if (j.contains("shots_per_basis") && !j["shots_per_basis"].is_null())
    c.shots_per_basis = j["shots_per_basis"].get<double>();
  if (j.contains("bootstrap_resamples"))
    c.bootstrap_resamples = j["bootstrap_resamples"].get<int>();
  if (j.contains("counts_policy")) {
    const std::string p = j["counts_policy"].get<std::string>();
    if (p == "both")
      c.counts_policy = CountsPolicy::Both;
    else if (p == "raw_only")
      c.counts_policy = CountsPolicy::RawOnly;
    else if (p == "corrected_only")
      c.counts_policy = CountsPolicy::CorrectedOnly;
    else
      throw ConfigError("config: unknown counts_policy '" + p + "'");
  }
  if (j.contains("mle")) {
    const auto& m = j["mle"];
    detail::reject_unknown_keys(m, {"tolerance", "max_iterations"}, "mle");
    if (m.contains("tolerance")) c.mle.tolerance = m["tolerance"].get<double>();
    if (m.contains("max_iterations")) c.mle.max_iterations = m["max_iterations"].get<int>();
  }
  c.validate();
  return c;
}

// --- scenario preparation ----------------------------------------------------

// One reconstruction qubit with its physical realization: `lift` maps a 2x2
// measurement operator written in the qubit's storage basis to the operator
// actually applied to the simulated state (the vector-vortex conversion for
// the HyEnt qubit, the half-efficient decode cascade for OAM qubits).
struct QubitChain {
  int arm = 1;  // coincidence arm: 1 = photon 1 / herald, 2 = photon 2
  std::function<std::pair<Labels, Matrix>(const Eigen::Matrix2cd&)> lift;
};

struct Preparation {
  DensityMatrix rho;       // physical state entering the analyzers
  double survival = 1.0;   // heralded survival of the photon-2 arm
  Labels tomo_labels;
  std::vector<tomography::QubitEncoding> encodings;
  std::vector<QubitChain> chains;
  DensityMatrix target;    // fidelity reference, same coordinates as rho_hat
  std::string target_name;
  DensityMatrix chsh_state;            // two-qubit state the CHSH optimizer sees
  std::vector<QubitChain> chsh_chains; // chains matching chsh_state's qubits
};

namespace detail {

inline QubitChain pol_chain(int arm, Subsystem label) {
  return {arm, [label](const Eigen::Matrix2cd& m) {
            return std::pair<Labels, Matrix>({label}, Matrix(m));
          }};
}

// HyEnt photon-2 qubit: analyzer operators act on the decoded polarization,
// realized on the physical state as V M V^dagger with V the encode isometry.
inline QubitChain vv_chain(int arm) {
  return {arm, [](const Eigen::Matrix2cd& m) {
            const Eigen::MatrixXcd v = optics::vv_encode_isometry();
            return std::pair<Labels, Matrix>({Subsystem::Pol2, Subsystem::Oam2},
                                             v * m * v.adjoint());
          }};
}

// Cascaded OAM stage: operators are written in the physical +-7 basis and
// applied at the 50% chain efficiency of the plate-plus-fiber conversion.
inline QubitChain oam_chain(int arm) {
  return {arm, [](const Eigen::Matrix2cd& m) {
            return std::pair<Labels, Matrix>({Subsystem::Oam2},
                                             optics::kOamChainEfficiency * Matrix(m));
          }};
}

inline StateVector ket_h_pol2() {
  Vector amps(2);
  amps << 1, 0;
  return StateVector({Subsystem::Pol2}, std::move(amps));
}

}  // namespace detail

inline Preparation prepare(const ScenarioConfig& config) {
  using tomography::QubitEncoding;
  switch (config.scenario) {
    case Scenario::Source: {
      DensityMatrix rho = channel::apply_noise(to_density(optics::make_singlet()), config.noise);
      DensityMatrix target = to_density(optics::make_singlet());
      std::vector<QubitChain> chains = {detail::pol_chain(1, Subsystem::Pol1),
                                        detail::pol_chain(2, Subsystem::Pol2)};
      return {rho,
              1.0,
              {Subsystem::Pol1, Subsystem::Pol2},
              {QubitEncoding::Polarization, QubitEncoding::Polarization},
              chains,
              target,
              "singlet",
              rho,
              chains};
    }
    case Scenario::HyEnt: {
      DensityMatrix src = channel::apply_noise(to_density(optics::make_singlet()), config.noise);
      DensityMatrix encoded = optics::vortex_encode(src, Subsystem::Pol2);
      auto fib = channel::fiber_transmit(encoded, config.fiber);
      auto decoded = optics::decode_and_filter(fib.state);
      if (!decoded.state)
        throw NumericalError("HYENT: no weight left in the vector-vortex subspace");
      std::vector<QubitChain> chains = {detail::pol_chain(1, Subsystem::Pol1),
                                        detail::vv_chain(2)};
      // Fidelity reference: the ideal (transparent-fiber) evolution of the
      // source state, which in the decoded frame is the source state itself.
      return {fib.state,
              fib.survival,
              {Subsystem::Pol1, Subsystem::Pol2},
              {QubitEncoding::Polarization, QubitEncoding::Polarization},
              chains,
              src,
              "ideal_evolution_of_source",
              *decoded.state,
              chains};
    }
    case Scenario::Intra: {
      DensityMatrix pol = channel::apply_noise(to_density(detail::ket_h_pol2()), config.noise);
      DensityMatrix encoded = optics::vortex_encode(pol, Subsystem::Pol2);
      auto fib = channel::fiber_transmit(encoded, config.fiber);
      std::vector<QubitChain> chains = {detail::pol_chain(2, Subsystem::Pol2),
                                        detail::oam_chain(2)};
      return {fib.state,
              fib.survival,
              {Subsystem::Pol2, Subsystem::Oam2},
              {QubitEncoding::Polarization, QubitEncoding::OamLogical},
              chains,
              to_density(optics::make_vv(optics::VvSign::Plus)),
              "vv_r (phi_plus in the logical frame)",
              fib.state,
              chains};
    }
    case Scenario::ThreeQubit: {
      DensityMatrix src = channel::apply_noise(to_density(optics::make_singlet()), config.noise);
      DensityMatrix encoded = optics::vortex_encode(src, Subsystem::Pol2);
      auto fib = channel::fiber_transmit(encoded, config.fiber);
      auto decoded = optics::decode_and_filter(fib.state);
      if (!decoded.state)
        throw NumericalError("THREE_QUBIT: no weight left in the vector-vortex subspace");
      std::vector<QubitChain> chains = {detail::pol_chain(1, Subsystem::Pol1),
                                        detail::pol_chain(2, Subsystem::Pol2),
                                        detail::oam_chain(2)};
      return {fib.state,
              fib.survival,
              {Subsystem::Pol1, Subsystem::Pol2, Subsystem::Oam2},
              {QubitEncoding::Polarization, QubitEncoding::Polarization,
               QubitEncoding::OamLogical},
              chains,
              to_density(optics::make_hybrid()),
              "hybrid",
              *decoded.state,
              {detail::pol_chain(1, Subsystem::Pol1), detail::vv_chain(2)}};
    }
  }
  throw Error("prepare: unknown scenario");
}

// --- measurement-op assembly ---------------------------------------------------

namespace detail {

inline channel::ArmOp combine_pieces(const std::vector<std::pair<Labels, Matrix>>& pieces) {
  if (pieces.empty()) return {};
  Labels all;
  for (const auto& [labels, op] : pieces)
    for (Subsystem s : labels) all.push_back(s);
  std::sort(all.begin(), all.end());
  const Eigen::Index d = Eigen::Index(1) << all.size();
  Matrix combined = Matrix::Identity(d, d);
  for (const auto& [labels, op] : pieces) combined *= lift_operator(op, labels, all);
  return {std::move(all), std::move(combined)};
}

inline channel::MeasurementOp build_op(const std::vector<QubitChain>& chains,
                                       const std::vector<Eigen::Matrix2cd>& per_qubit,
                                       std::string id, std::string basis_id) {
  std::vector<std::pair<Labels, Matrix>> arm1, arm2;
  for (std::size_t q = 0; q < chains.size(); ++q) {
    auto piece = chains[q].lift(per_qubit[q]);
    (chains[q].arm == 1 ? arm1 : arm2).push_back(std::move(piece));
  }
  channel::MeasurementOp op;
  op.id = std::move(id);
  op.basis_id = std::move(basis_id);
  op.arm1 = combine_pieces(arm1);
  op.arm2 = combine_pieces(arm2);
  return op;
}

// Sets per-op integration so the expected coincidences in each basis total
// `shots`, keeping the even split of time across the settings of a basis.
inline void assign_integration(std::vector<channel::MeasurementOp>& ops,
                               const std::vector<int>& basis_of_op, const DensityMatrix& rho,
                               const ScenarioConfig& config, double survival) {
  if (!config.shots_per_basis) return;
  const double eff = config.detection.detector_efficiency;
  const double scale = config.detection.pair_rate_hz * survival * eff * eff;
  std::map<int, double> basis_prob;
  const auto probs = channel::exact_probabilities(rho, ops);
  for (std::size_t i = 0; i < ops.size(); ++i) basis_prob[basis_of_op[i]] += probs[i];
  for (std::size_t i = 0; i < ops.size(); ++i) {
    const double cb = basis_prob[basis_of_op[i]];
    if (scale > 0 && cb > 1e-12) ops[i].integration_s = *config.shots_per_basis / (scale * cb);
  }
}

}  // namespace detail

// --- reports -------------------------------------------------------------------

struct TomoReport {
  DensityMatrix rho;
  std::optional<DensityMatrix> rho_logical;  // OAM slot rotated for display
  double fidelity = 0.0;
  std::optional<double> sigma;
  double log_likelihood = 0.0;
  int iterations = 0;
  bool converged = true;
  std::string target_name;
};

struct BellReport {
  std::optional<double> raw;
  std::optional<double> raw_sigma;
  std::optional<double> corrected;
  std::optional<double> corrected_sigma;
  std::map<std::string, double> bounds;
  std::map<std::string, double> sigmas;  // violation significances per bound
  std::optional<double> s_max;           // CHSH only: Horodecki optimum
  std::vector<std::array<double, 3>> settings_bloch;  // CHSH only: a0,a1,b0,b1
  std::vector<double> correlators;       // per measured basis
};

struct Report {
  std::string version = kVersion;
  ScenarioConfig config;
  double survival = 1.0;
  double wall_clock_s = 0.0;
  std::optional<TomoReport> tomo;
  std::optional<BellReport> chsh;
  std::optional<BellReport> mermin;
  std::optional<BellReport> hardy;
  std::vector<channel::CountRecord> counts;  // every sampled record of the run
};

namespace detail {

inline nlohmann::json bell_to_json(const BellReport& r) {
  nlohmann::json j;
  j["raw"] = r.raw ? nlohmann::json(*r.raw) : nlohmann::json(nullptr);
  j["raw_sigma"] = r.raw_sigma ? nlohmann::json(*r.raw_sigma) : nlohmann::json(nullptr);
  j["corrected"] = r.corrected ? nlohmann::json(*r.corrected) : nlohmann::json(nullptr);
  j["sigma"] = r.corrected_sigma ? nlohmann::json(*r.corrected_sigma) : nlohmann::json(nullptr);
  j["bounds"] = r.bounds;
  j["sigmas"] = r.sigmas;
  if (r.s_max) j["s_max"] = *r.s_max;
  if (!r.settings_bloch.empty()) {
    nlohmann::json s = nlohmann::json::array();
    for (const auto& v : r.settings_bloch) s.push_back({v[0], v[1], v[2]});
    j["settings"] = {{"bloch_axes_a0_a1_b0_b1", s}, {"chosen_by", "optimizer"}};
  }
  j["correlators"] = r.correlators;
  return j;
}

}  // namespace detail

inline nlohmann::json to_json(const Report& r) {
  nlohmann::json j;
  j["version"] = r.version;
  j["scenario"] = to_string(r.config.scenario);
  j["config"] = to_json(r.config);
  j["survival"] = r.survival;
  j["wall_clock_s"] = r.wall_clock_s;
  nlohmann::json analyses = nlohmann::json::object();
  if (r.tomo) {
    nlohmann::json t;
    t["rho"] = qvortex::to_json(r.tomo->rho);
    t["rho_logical"] = r.tomo->rho_logical ? qvortex::to_json(*r.tomo->rho_logical)
                                           : nlohmann::json(nullptr);
    t["fidelity"] = r.tomo->fidelity;
    t["sigma"] = r.tomo->sigma ? nlohmann::json(*r.tomo->sigma) : nlohmann::json(nullptr);
    t["loglik"] = r.tomo->log_likelihood;
    t["iterations"] = r.tomo->iterations;
    t["converged"] = r.tomo->converged;
    t["target"] = r.tomo->target_name;
    analyses["tomo"] = std::move(t);
  }
  if (r.chsh) analyses["chsh"] = detail::bell_to_json(*r.chsh);
  if (r.mermin) analyses["mermin"] = detail::bell_to_json(*r.mermin);
  if (r.hardy) analyses["hardy"] = detail::bell_to_json(*r.hardy);
  j["analyses"] = std::move(analyses);
  return j;
}

// --- the run -------------------------------------------------------------------

namespace detail {

struct SampledCounts {
  std::vector<double> raw;
  std::vector<double> corrected;
  std::vector<channel::CountRecord> records;  // empty in infinite-statistics mode
};

inline SampledCounts acquire(const Preparation& prep, std::vector<channel::MeasurementOp> ops,
                             const std::vector<int>& basis_of_op, const ScenarioConfig& config,
                             std::uint64_t seed) {
  SampledCounts out;
  if (config.infinite_statistics) {
    out.raw = channel::exact_probabilities(prep.rho, ops);
    out.corrected = out.raw;
    return out;
  }
  assign_integration(ops, basis_of_op, prep.rho, config, prep.survival);
  auto records = channel::sample_counts(prep.rho, ops, config.detection, prep.survival, seed);
  records = channel::subtract_accidentals(std::move(records));
  for (const auto& rec : records) {
    out.raw.push_back(double(rec.coincidences));
    out.corrected.push_back(rec.corrected);
  }
  out.records = std::move(records);
  return out;
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Evaluates one inequality functional from per-outcome counts, with the
// raw / corrected variants the counts policy asks for.
inline BellReport estimate_bell(const std::vector<channel::MeasurementOp>& ops,
                                const SampledCounts& counts, nonlocality::Functional functional,
                                const ScenarioConfig& config) {
  BellReport report;
  auto run = [&](const std::vector<double>& values) {
    std::vector<std::pair<std::string, double>> tagged;
    for (std::size_t i = 0; i < ops.size(); ++i) tagged.emplace_back(ops[i].id, values[i]);
    return nonlocality::estimate_from_counts(tagged, functional);
  };
  const bool want_raw = config.counts_policy != CountsPolicy::CorrectedOnly;
  const bool want_corrected = config.counts_policy != CountsPolicy::RawOnly;
  if (want_raw) {
    const auto e = run(counts.raw);
    report.raw = e.value;
    if (!config.infinite_statistics) report.raw_sigma = e.sigma;
    if (!want_corrected) report.correlators = e.correlators;
  }
  if (want_corrected) {
    const auto e = run(counts.corrected);
    report.corrected = e.value;
    if (!config.infinite_statistics) report.corrected_sigma = e.sigma;
    report.correlators = e.correlators;
  }
  return report;
}

inline void fill_violation_sigmas(BellReport& report,
                                  const std::vector<std::pair<std::string, double>>& bounds) {
  for (const auto& [name, bound] : bounds) {
    report.bounds[name] = bound;
    if (report.raw && report.raw_sigma && *report.raw_sigma > 0)
      report.sigmas["raw_vs_" + name] =
          nonlocality::violation_sigmas(*report.raw, *report.raw_sigma, bound);
    if (report.corrected && report.corrected_sigma && *report.corrected_sigma > 0)
      report.sigmas["corrected_vs_" + name] =
          nonlocality::violation_sigmas(*report.corrected, *report.corrected_sigma, bound);
  }
}

inline Eigen::Matrix2cd observable_2x2(const Observable& o) { return o.matrix(); }

// Outcome projector tuples for a list of measurement bases given per qubit.
inline std::vector<channel::MeasurementOp> bell_ops(
    const std::vector<QubitChain>& chains,
    const std::vector<std::vector<Eigen::Matrix2cd>>& bases, const std::string& tag) {
  std::vector<channel::MeasurementOp> ops;
  const std::size_t n = chains.size();
  for (std::size_t b = 0; b < bases.size(); ++b) {
    for (std::size_t outcome = 0; outcome < (std::size_t(1) << n); ++outcome) {
      std::vector<Eigen::Matrix2cd> per_qubit(n);
      std::string pattern;
      for (std::size_t q = 0; q < n; ++q) {
        const bool minus = (outcome >> (n - 1 - q)) & 1;
        pattern += minus ? '-' : '+';
        per_qubit[q] =
            0.5 * (Eigen::Matrix2cd::Identity() + (minus ? -1.0 : 1.0) * bases[b][q]);
      }
      const std::string basis_id = tag + ":b" + std::to_string(b);
      ops.push_back(build_op(chains, per_qubit, basis_id + ":" + pattern, basis_id));
    }
  }
  return ops;
}

inline std::vector<int> basis_indices(std::size_t n_bases, std::size_t outcomes_per_basis) {
  std::vector<int> out;
  for (std::size_t b = 0; b < n_bases; ++b)
    for (std::size_t o = 0; o < outcomes_per_basis; ++o) out.push_back(int(b));
  return out;
}

}  // namespace detail

inline Report run_scenario(const ScenarioConfig& config) {
  config.validate();
  const auto t_start = std::chrono::steady_clock::now();
  Preparation prep = prepare(config);
  Report report;
  report.config = config;
  report.survival = prep.survival;

  if (config.has(Analysis::Tomo)) {
    const auto set = tomography::generate_settings(prep.tomo_labels, prep.encodings);
    std::vector<channel::MeasurementOp> ops;
    std::vector<int> basis_of_op;
    for (const auto& tuple : set.tuples) {
      std::vector<Eigen::Matrix2cd> per_qubit(set.n_qubits());
      for (std::size_t q = 0; q < set.n_qubits(); ++q)
        per_qubit[q] = set.qubit_projector(q, tuple.settings[q]);
      ops.push_back(detail::build_op(prep.chains, per_qubit, tuple.id,
                                     "t" + std::to_string(tuple.basis_index)));
      basis_of_op.push_back(tuple.basis_index);
    }
    const auto counts =
        detail::acquire(prep, ops, basis_of_op, config, detail::derive_seed(config.seed, 1));
    const auto& used =
        config.counts_policy == CountsPolicy::RawOnly ? counts.raw : counts.corrected;
    auto result = tomography::mle_reconstruct(used, set, config.mle);
    std::optional<double> sigma;
    if (!config.infinite_statistics && config.bootstrap_resamples > 0) {
      const auto boot =
          tomography::bootstrap_sigma(used, set, prep.target, config.bootstrap_resamples,
                                      detail::derive_seed(config.seed, 17), config.mle);
      sigma = boot.sigma;
    }
    const bool has_oam = std::find(prep.encodings.begin(), prep.encodings.end(),
                                   tomography::QubitEncoding::OamLogical) != prep.encodings.end();
    std::optional<DensityMatrix> rho_logical;
    if (has_oam) rho_logical = optics::to_logical_frame(result.rho_hat);
    report.tomo = TomoReport{result.rho_hat,
                             std::move(rho_logical),
                             fidelity(result.rho_hat, prep.target),
                             sigma,
                             result.log_likelihood,
                             result.iterations,
                             result.converged,
                             prep.target_name};
    for (const auto& rec : counts.records) report.counts.push_back(rec);
  }

  if (config.has(Analysis::Chsh)) {
    const auto optimum = nonlocality::optimize_chsh(prep.chsh_state);
    const std::vector<Eigen::Matrix2cd> a = {detail::observable_2x2(optimum.settings.a0),
                                             detail::observable_2x2(optimum.settings.a1)};
    const std::vector<Eigen::Matrix2cd> b = {detail::observable_2x2(optimum.settings.b0),
                                             detail::observable_2x2(optimum.settings.b1)};
    // Basis order matches chsh_from_counts: A0B0, A0B1, A1B0, A1B1.
    std::vector<std::vector<Eigen::Matrix2cd>> bases = {
        {a[0], b[0]}, {a[0], b[1]}, {a[1], b[0]}, {a[1], b[1]}};
    auto ops = detail::bell_ops(prep.chsh_chains, bases, "chsh");
    const auto counts = detail::acquire(prep, ops, detail::basis_indices(4, 4), config,
                                        detail::derive_seed(config.seed, 2));
    BellReport bell = detail::estimate_bell(ops, counts, nonlocality::Functional::Chsh, config);
    bell.s_max = optimum.s_max;
    auto bloch = [](const Observable& o) {
      return std::array<double, 3>{(o.matrix() * pauli_x()).trace().real() / 2.0,
                                   (o.matrix() * pauli_y()).trace().real() / 2.0,
                                   (o.matrix() * pauli_z()).trace().real() / 2.0};
    };
    bell.settings_bloch = {bloch(optimum.settings.a0), bloch(optimum.settings.a1),
                           bloch(optimum.settings.b0), bloch(optimum.settings.b1)};
    detail::fill_violation_sigmas(bell, {{"classical", nonlocality::kChshClassicalBound}});
    bell.bounds["tsirelson"] = nonlocality::kTsirelsonBound;
    report.chsh = std::move(bell);
    for (auto& rec : counts.records) report.counts.push_back(rec);
  }

  if (config.has(Analysis::Mermin)) {
    auto settings = nonlocality::default_mermin_settings(prep.tomo_labels);
    // The OAM observables are stated in the logical basis; express them in
    // the physical +-7 coordinates the chain operators use.
    const Eigen::Matrix2cd c1 = optics::oam_from_logical(pauli_z());
    const Eigen::Matrix2cd c2 = optics::oam_from_logical(pauli_x());
    const std::vector<Eigen::Matrix2cd> a = {-pauli_z(), pauli_x()};
    const std::vector<Eigen::Matrix2cd> b = {-pauli_z(), pauli_x()};
    const std::vector<Eigen::Matrix2cd> c = {c1, c2};
    // Basis order matches mermin_from_counts: A1B1C1, A1B2C2, A2B1C2, A2B2C1.
    std::vector<std::vector<Eigen::Matrix2cd>> bases = {{a[0], b[0], c[0]},
                                                        {a[0], b[1], c[1]},
                                                        {a[1], b[0], c[1]},
                                                        {a[1], b[1], c[0]}};
    auto ops = detail::bell_ops(prep.chains, bases, "mermin");
    const auto counts = detail::acquire(prep, ops, detail::basis_indices(4, 8), config,
                                        detail::derive_seed(config.seed, 3));
    BellReport bell = detail::estimate_bell(ops, counts, nonlocality::Functional::Mermin, config);
    detail::fill_violation_sigmas(bell,
                                  {{"classical", nonlocality::kMerminClassicalBound},
                                   {"biseparable", nonlocality::kMerminBiseparableBound}});
    bell.bounds["algebraic"] = nonlocality::kMerminAlgebraicMaximum;
    report.mermin = std::move(bell);
    for (auto& rec : counts.records) report.counts.push_back(rec);
  }

  if (config.has(Analysis::Hardy)) {
    const Eigen::Matrix2cd za = optics::oam_from_logical(pauli_z());
    const Eigen::Matrix2cd xb = optics::oam_from_logical(pauli_x());
    // A1 = A2 = -A3 = sigma_z, B1 = B2 = B3 = sigma_x; the third qubit's
    // operators live in the logical OAM basis.
    const Eigen::Matrix2cd a1 = pauli_z(), a2 = pauli_z();
    const Eigen::Matrix2cd a3 = -za;
    const Eigen::Matrix2cd b1 = pauli_x(), b2 = pauli_x();
    const Eigen::Matrix2cd b3 = xb;
    // Basis order matches hardy_from_counts: A1A2A3, A1B2B3, B1A2B3, B1B2A3.
    std::vector<std::vector<Eigen::Matrix2cd>> bases = {
        {a1, a2, a3}, {a1, b2, b3}, {b1, a2, b3}, {b1, b2, a3}};
    auto ops = detail::bell_ops(prep.chains, bases, "hardy");
    const auto counts = detail::acquire(prep, ops, detail::basis_indices(4, 8), config,
                                        detail::derive_seed(config.seed, 4));
    BellReport bell = detail::estimate_bell(ops, counts, nonlocality::Functional::Hardy, config);
    detail::fill_violation_sigmas(bell,
                                  {{"noncontextual", nonlocality::kHardyClassicalBound}});
    report.hardy = std::move(bell);
    for (auto& rec : counts.records) report.counts.push_back(rec);
  }

  report.wall_clock_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return report;
}

// --- Table-1-shaped comparison ---------------------------------------------------

struct Table1Row {
  std::string name;
  double total_time_s = 0.0;
  std::optional<double> s_raw, s_raw_sigma, s_corrected, s_corrected_sigma;
  double s_max = 0.0;
  std::optional<double> fidelity;
};

// Runs SOURCE, HYENT and INTRA with a shared noise calibration and collects
// the tabulated CHSH and fidelity figures.
inline std::array<Table1Row, 3> run_table1(const ScenarioConfig& base) {
  std::array<Table1Row, 3> rows;
  const std::array<Scenario, 3> scenarios = {Scenario::Source, Scenario::HyEnt, Scenario::Intra};
  const std::array<const char*, 3> names = {"Source", "HyEnt", "Intra"};
  for (std::size_t i = 0; i < 3; ++i) {
    ScenarioConfig config = base;
    config.scenario = scenarios[i];
    config.analyses = {Analysis::Tomo, Analysis::Chsh};
    config.bootstrap_resamples = 0;
    if (scenarios[i] == Scenario::Intra && config.noise.kind != channel::NoiseKind::None)
      config.noise.targets = {Subsystem::Pol2};  // single heralded photon
    const Report report = run_scenario(config);
    Table1Row row;
    row.name = names[i];
    for (const auto& rec : report.counts) row.total_time_s += rec.integration_s;
    if (report.chsh) {
      row.s_raw = report.chsh->raw;
      row.s_raw_sigma = report.chsh->raw_sigma;
      row.s_corrected = report.chsh->corrected;
      row.s_corrected_sigma = report.chsh->corrected_sigma;
      row.s_max = report.chsh->s_max.value_or(0.0);
    }
    if (report.tomo) row.fidelity = report.tomo->fidelity;
    rows[i] = std::move(row);
  }
  return rows;
}

}  // namespace qvortex::experiment
