#include <catch2/catch.hpp>

#include <cmath>
#include <sstream>

#include "qvortex/channel.hpp"
#include "qvortex/optics.hpp"
#include "test_support.hpp"

using namespace qvortex;
using namespace qvortex::channel;
using qvortex::testing::max_abs_diff;
using qvortex::testing::random_density_matrix;

namespace {

MeasurementOp pol_pair_op(const std::string& id, const Eigen::Matrix2cd& p1,
                          const Eigen::Matrix2cd& p2) {
  MeasurementOp op;
  op.id = id;
  op.basis_id = id;
  op.arm1 = {{Subsystem::Pol1}, Matrix(p1)};
  op.arm2 = {{Subsystem::Pol2}, Matrix(p2)};
  return op;
}

}  // namespace

TEST_CASE("survival at the experiment's fiber parameters") {
  // eta = 0.5, 1 dB/km over 5 m: 0.5 x 10^(-0.005/10).
  const FiberParams defaults;
  REQUIRE(survival_probability(defaults) == Approx(0.49942468).margin(1e-6));
}

TEST_CASE("default fiber is transparent to the vector-vortex states") {
  for (auto sign : {optics::VvSign::Plus, optics::VvSign::Minus}) {
    const DensityMatrix in = to_density(optics::make_vv(sign));
    const auto out = fiber_transmit(in, FiberParams{});
    REQUIRE(fidelity(out.state, in) == Approx(1.0).margin(1e-12));
    REQUIRE(out.survival == Approx(0.49942468).margin(1e-6));
  }
}

TEST_CASE("complete mode mixing equalizes the OAM populations for any input") {
  std::mt19937_64 eng(61);
  FiberParams params;
  params.mode_mix_epsilon = 0.5;
  for (int i = 0; i < 25; ++i) {
    const DensityMatrix in = random_density_matrix({Subsystem::Pol2, Subsystem::Oam2}, eng);
    const auto out = fiber_transmit(in, params);
    const DensityMatrix marginal = partial_trace(out.state, {Subsystem::Oam2});
    REQUIRE(marginal.entries()(0, 0).real() == Approx(0.5).margin(1e-12));
    REQUIRE(marginal.entries()(1, 1).real() == Approx(0.5).margin(1e-12));
  }
}

TEST_CASE("a pi intermodal phase converts |r> into |a>") {
  FiberParams params;
  params.intermodal_phase = M_PI;
  const auto out = fiber_transmit(to_density(optics::make_vv(optics::VvSign::Plus)), params);
  REQUIRE(fidelity(out.state, to_density(optics::make_vv(optics::VvSign::Minus))) ==
          Approx(1.0).margin(1e-12));
}

TEST_CASE("fiber output is trace preserving and survival is input independent") {
  std::mt19937_64 eng(67);
  FiberParams params;
  params.mode_mix_epsilon = 0.12;
  params.intermodal_phase = 0.7;
  for (int i = 0; i < 100; ++i) {
    const DensityMatrix in = random_density_matrix({Subsystem::Pol2, Subsystem::Oam2}, eng);
    const auto out = fiber_transmit(in, params);
    REQUIRE(out.state.entries().trace().real() == Approx(1.0).margin(1e-12));
    REQUIRE(out.survival == Approx(survival_probability(params)));
  }
}

TEST_CASE("without mixing the fiber commutes with diagonal OAM phases") {
  std::mt19937_64 eng(71);
  FiberParams params;
  params.intermodal_phase = 1.1;
  Eigen::Matrix2cd phase = Eigen::Matrix2cd::Identity();
  phase(0, 0) = std::exp(Complex(0, 0.43));
  for (int i = 0; i < 20; ++i) {
    const DensityMatrix in = random_density_matrix({Subsystem::Pol2, Subsystem::Oam2}, eng);
    const DensityMatrix a =
        fiber_transmit(apply_unitary(in, phase, {Subsystem::Oam2}), params).state;
    const DensityMatrix b =
        apply_unitary(fiber_transmit(in, params).state, phase, {Subsystem::Oam2});
    REQUIRE(max_abs_diff(a.entries(), b.entries()) < 1e-12);
  }
}

TEST_CASE("fiber rejects states without OAM content") {
  REQUIRE_THROWS_AS(fiber_transmit(to_density(optics::make_singlet()), FiberParams{}), Error);
}

TEST_CASE("noise with zero strength is the identity channel") {
  std::mt19937_64 eng(73);
  const DensityMatrix rho = random_density_matrix({Subsystem::Pol1, Subsystem::Pol2}, eng);
  NoiseModel none{NoiseKind::Depolarizing, 0.0, {Subsystem::Pol1}};
  REQUIRE(max_abs_diff(apply_noise(rho, none).entries(), rho.entries()) == 0.0);
}

TEST_CASE("full depolarization of both polarization qubits yields I/4") {
  NoiseModel full{NoiseKind::Depolarizing, 1.0, {Subsystem::Pol1, Subsystem::Pol2}};
  const DensityMatrix out = apply_noise(to_density(optics::make_singlet()), full);
  REQUIRE(max_abs_diff(out.entries(), Matrix::Identity(4, 4) / 4.0) < 1e-12);
}

TEST_CASE("depolarizing strength maps to singlet fidelity via F = 1 - 3p/4") {
  const double p = (1.0 - 0.935) * 4.0 / 3.0;  // approx 0.0867
  NoiseModel model{NoiseKind::Depolarizing, p, {Subsystem::Pol1, Subsystem::Pol2}};
  const DensityMatrix singlet = to_density(optics::make_singlet());
  const DensityMatrix noisy = apply_noise(singlet, model);
  REQUIRE(fidelity(noisy, singlet) == Approx(0.935).margin(1e-10));
}

TEST_CASE("depolarizing a subsystem keeps the complement's marginal") {
  std::mt19937_64 eng(79);
  NoiseModel model{NoiseKind::Depolarizing, 0.3, {Subsystem::Pol2}};
  for (int i = 0; i < 10; ++i) {
    const DensityMatrix rho = random_density_matrix({Subsystem::Pol1, Subsystem::Pol2}, eng);
    const DensityMatrix out = apply_noise(rho, model);
    REQUIRE(max_abs_diff(partial_trace(out, {Subsystem::Pol1}).entries(),
                         partial_trace(rho, {Subsystem::Pol1}).entries()) < 1e-12);
    const DensityMatrix m2 = partial_trace(out, {Subsystem::Pol2});
    const DensityMatrix m2_expected(
        {Subsystem::Pol2}, 0.7 * partial_trace(rho, {Subsystem::Pol2}).entries() +
                               0.3 * Matrix::Identity(2, 2) / 2.0);
    REQUIRE(max_abs_diff(m2.entries(), m2_expected.entries()) < 1e-12);
  }
}

TEST_CASE("dephasing preserves the trace and the populations") {
  std::mt19937_64 eng(83);
  NoiseModel model{NoiseKind::Dephasing, 0.4, {Subsystem::Pol1}};
  for (int i = 0; i < 10; ++i) {
    const DensityMatrix rho = random_density_matrix({Subsystem::Pol1, Subsystem::Pol2}, eng);
    const DensityMatrix out = apply_noise(rho, model);
    REQUIRE(out.entries().trace().real() == Approx(1.0).margin(1e-12));
    for (Eigen::Index k = 0; k < 4; ++k)
      REQUIRE(out.entries()(k, k).real() == Approx(rho.entries()(k, k).real()).margin(1e-12));
  }
}

TEST_CASE("noise strength outside [0,1] is rejected") {
  NoiseModel bad{NoiseKind::Depolarizing, 1.5, {Subsystem::Pol1}};
  REQUIRE_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("zero Born probability and zero dark rate give zero coincidences") {
  const DensityMatrix singlet = to_density(optics::make_singlet());
  DetectionParams det;
  det.dark_rate_hz = 0.0;
  det.integration_s = 3.0;
  const Eigen::Matrix2cd ph = optics::canonical_projector_matrix(0);
  const auto records = sample_counts(singlet, {pol_pair_op("HH", ph, ph)}, det, 1.0, 99);
  REQUIRE(records.size() == 1);
  REQUIRE(records[0].coincidences == 0);
}

TEST_CASE("singlet projection probabilities drive the coincidence rates") {
  const DensityMatrix singlet = to_density(optics::make_singlet());
  DetectionParams det;
  det.pair_rate_hz = 1e6;
  det.integration_s = 1.0;
  det.dark_rate_hz = 0.0;
  det.detector_efficiency = 1.0;
  const Eigen::Matrix2cd ph = optics::canonical_projector_matrix(0);
  const Eigen::Matrix2cd pv = optics::canonical_projector_matrix(1);
  // Born probability 1/2 for HV; accumulate the mean over 100 seeds.
  const double lambda = 1e6 * 0.5;
  double sum = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto records = sample_counts(singlet, {pol_pair_op("HV", ph, pv)}, det, 1.0, seed);
    sum += double(records[0].coincidences);
  }
  const double mean = sum / 100.0;
  const double standard_error = std::sqrt(lambda / 100.0);
  REQUIRE(std::abs(mean - lambda) < 5 * standard_error);
}

TEST_CASE("identical seed and stream reproduce bitwise-identical records") {
  const DensityMatrix singlet = to_density(optics::make_singlet());
  DetectionParams det;
  det.integration_s = 2.0;
  const Eigen::Matrix2cd ph = optics::canonical_projector_matrix(0);
  const Eigen::Matrix2cd pd = optics::canonical_projector_matrix(2);
  const std::vector<MeasurementOp> ops = {pol_pair_op("HD", ph, pd),
                                          pol_pair_op("DD", pd, pd)};
  const auto a = sample_counts(singlet, ops, det, 0.7, 1234);
  const auto b = sample_counts(singlet, ops, det, 0.7, 1234);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    REQUIRE(a[i].coincidences == b[i].coincidences);
    REQUIRE(a[i].singles_1 == b[i].singles_1);
    REQUIRE(a[i].singles_2 == b[i].singles_2);
    REQUIRE(a[i].accidental_estimate == b[i].accidental_estimate);
    REQUIRE(a[i].stream == b[i].stream);
  }
  const auto c = sample_counts(singlet, ops, det, 0.7, 1235);
  REQUIRE((a[0].coincidences != c[0].coincidences || a[0].singles_1 != c[0].singles_1));
}

TEST_CASE("Monte Carlo mean matches the configured rate within 5 standard errors") {
  const DensityMatrix singlet = to_density(optics::make_singlet());
  DetectionParams det;
  det.pair_rate_hz = 2e4;
  det.integration_s = 1.0;
  const Eigen::Matrix2cd ph = optics::canonical_projector_matrix(0);
  const Eigen::Matrix2cd pv = optics::canonical_projector_matrix(1);
  const double survival = 0.5;
  const double eff = det.detector_efficiency;
  const double rate1 = det.pair_rate_hz * eff * 0.5 + det.dark_rate_hz;
  const double rate2 = det.pair_rate_hz * survival * eff * 0.5 + det.dark_rate_hz;
  const double lambda = det.pair_rate_hz * survival * eff * eff * 0.5 +
                        rate1 * rate2 * det.coincidence_window_s;
  constexpr int kReps = 1000;
  double sum = 0;
  for (std::uint64_t seed = 0; seed < kReps; ++seed) {
    const auto records = sample_counts(singlet, {pol_pair_op("HV", ph, pv)}, det, survival, seed);
    sum += double(records[0].coincidences);
  }
  const double mean = sum / kReps;
  REQUIRE(std::abs(mean - lambda) < 5 * std::sqrt(lambda / kReps));
}

TEST_CASE("the accidental estimate satisfies its defining identity") {
  const DensityMatrix singlet = to_density(optics::make_singlet());
  DetectionParams det;
  det.integration_s = 7.0;
  det.dark_rate_hz = 5000.0;
  const Eigen::Matrix2cd ph = optics::canonical_projector_matrix(0);
  const Eigen::Matrix2cd pv = optics::canonical_projector_matrix(1);
  const auto records = sample_counts(singlet, {pol_pair_op("HV", ph, pv)}, det, 0.5, 5);
  const auto& r = records[0];
  REQUIRE(r.accidental_estimate ==
          Approx(double(r.singles_1) * double(r.singles_2) * det.coincidence_window_s /
                 r.integration_s)
              .margin(1e-9));
}

TEST_CASE("accidental subtraction is clamped at zero and keeps raw counts") {
  std::vector<CountRecord> records(2);
  records[0].setting_id = "a";
  records[0].coincidences = 100;
  records[0].accidental_estimate = 0.0;
  records[1].setting_id = "b";
  records[1].coincidences = 5;
  records[1].accidental_estimate = 8.0;
  const auto corrected = subtract_accidentals(records);
  REQUIRE(corrected[0].corrected == Approx(100.0));
  REQUIRE(corrected[1].corrected == 0.0);
  REQUIRE(corrected[1].coincidences == 5);
}

TEST_CASE("counts CSV round trip") {
  const DensityMatrix singlet = to_density(optics::make_singlet());
  DetectionParams det;
  det.integration_s = 2.5;
  const Eigen::Matrix2cd ph = optics::canonical_projector_matrix(0);
  const Eigen::Matrix2cd pv = optics::canonical_projector_matrix(1);
  auto records = subtract_accidentals(
      sample_counts(singlet, {pol_pair_op("HV", ph, pv), pol_pair_op("HH", ph, ph)}, det, 0.5,
                    321));
  std::stringstream ss;
  write_counts_csv(ss, records);
  const auto back = read_counts_csv(ss);
  REQUIRE(back.size() == records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    REQUIRE(back[i].setting_id == records[i].setting_id);
    REQUIRE(back[i].coincidences == records[i].coincidences);
    REQUIRE(back[i].corrected == records[i].corrected);
    REQUIRE(back[i].accidental_estimate == records[i].accidental_estimate);
    REQUIRE(back[i].singles_1 == records[i].singles_1);
    REQUIRE(back[i].singles_2 == records[i].singles_2);
    REQUIRE(back[i].integration_s == records[i].integration_s);
    REQUIRE(back[i].seed == records[i].seed);
    REQUIRE(back[i].stream == records[i].stream);
  }
  std::stringstream bad("not,a,header\n");
  REQUIRE_THROWS_AS(read_counts_csv(bad), ConfigError);
}

TEST_CASE("empty settings list is rejected") {
  const DensityMatrix singlet = to_density(optics::make_singlet());
  REQUIRE_THROWS_AS(sample_counts(singlet, {}, DetectionParams{}, 1.0, 0), Error);
}

TEST_CASE("QVORTEX_THREADS caps the worker count and sampling stays deterministic") {
  setenv("QVORTEX_THREADS", "3", 1);
  REQUIRE(parallel::max_threads() == 3);

  const DensityMatrix singlet = to_density(optics::make_singlet());
  DetectionParams det;
  std::vector<MeasurementOp> ops;
  for (int i = 0; i < 12; ++i) {
    const Eigen::Matrix2cd p1 = optics::canonical_projector_matrix(i % 6);
    const Eigen::Matrix2cd p2 = optics::canonical_projector_matrix((i + 1) % 6);
    ops.push_back(pol_pair_op("s" + std::to_string(i), p1, p2));
  }
  const auto threaded = sample_counts(singlet, ops, det, 0.5, 77);
  setenv("QVORTEX_THREADS", "1", 1);
  const auto serial = sample_counts(singlet, ops, det, 0.5, 77);
  unsetenv("QVORTEX_THREADS");
  for (std::size_t i = 0; i < ops.size(); ++i) {
    REQUIRE(threaded[i].coincidences == serial[i].coincidences);
    REQUIRE(threaded[i].singles_1 == serial[i].singles_1);
  }
}
