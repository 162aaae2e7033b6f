#include <catch2/catch.hpp>

#include <sstream>

#include "qvortex/hilbert.hpp"
#include "qvortex/optics.hpp"
#include "test_support.hpp"

using namespace qvortex;
using qvortex::testing::max_abs_diff;
using qvortex::testing::random_density_matrix;
using qvortex::testing::random_pure_state;
using qvortex::testing::random_unitary;

namespace {

StateVector ket(Subsystem label, int basis) {
  Vector amps = Vector::Zero(2);
  amps(basis) = 1.0;
  return StateVector({label}, std::move(amps));
}

}  // namespace

TEST_CASE("tensor of computational kets lands on the expected slot") {
  const StateVector hv = tensor(ket(Subsystem::Pol1, 0), ket(Subsystem::Pol2, 1));
  REQUIRE(hv.labels() == Labels{Subsystem::Pol1, Subsystem::Pol2});
  Vector expected(4);
  expected << 0, 1, 0, 0;  // basis order HH, HV, VH, VV
  REQUIRE((hv.amplitudes() - expected).norm() == Approx(0).margin(1e-14));
}

TEST_CASE("tensor is symmetric under argument order after canonical reordering") {
  std::mt19937_64 eng(11);
  for (int i = 0; i < 20; ++i) {
    const StateVector a = random_pure_state({Subsystem::Pol1}, eng);
    const StateVector b = random_pure_state({Subsystem::Pol2, Subsystem::Oam2}, eng);
    const StateVector ab = tensor(a, b);
    const StateVector ba = tensor(b, a);
    REQUIRE(ab.labels() == ba.labels());
    REQUIRE((ab.amplitudes() - ba.amplitudes()).norm() == Approx(0).margin(1e-13));
  }
}

TEST_CASE("tensor rejects overlapping labels with a label-collision diagnostic") {
  const StateVector a = ket(Subsystem::Pol2, 0);
  REQUIRE_THROWS_WITH(tensor(a, a), Catch::Contains("label collision"));
}

TEST_CASE("identity factor is invisible: sigma_z x I traced back equals sigma_z") {
  std::mt19937_64 eng(17);
  const Observable z1({Subsystem::Pol1}, pauli_z());
  const Observable id2({Subsystem::Pol2}, identity2());
  const Observable padded = tensor(z1, id2);
  for (int i = 0; i < 20; ++i) {
    const DensityMatrix rho = random_density_matrix({Subsystem::Pol1, Subsystem::Pol2}, eng);
    REQUIRE(expectation(rho, padded) == Approx(expectation(rho, z1)).margin(1e-12));
  }
}

TEST_CASE("partial trace of the singlet is maximally mixed") {
  const DensityMatrix rho = to_density(optics::make_singlet());
  const DensityMatrix reduced = partial_trace(rho, {Subsystem::Pol1});
  REQUIRE(max_abs_diff(reduced.entries(), Matrix::Identity(2, 2) / 2.0) < 1e-12);
}

TEST_CASE("partial trace of a product state recovers the factor") {
  std::mt19937_64 eng(23);
  for (int i = 0; i < 100; ++i) {
    const DensityMatrix a = random_density_matrix({Subsystem::Pol1}, eng);
    const DensityMatrix b = random_density_matrix({Subsystem::Pol2}, eng);
    const DensityMatrix reduced = partial_trace(tensor(a, b), {Subsystem::Pol1});
    REQUIRE(max_abs_diff(reduced.entries(), a.entries()) < 1e-12);
  }
}

TEST_CASE("hybrid state traced over OAM matches an independent reduction") {
  const StateVector hybrid = optics::make_hybrid();
  const DensityMatrix via_partial_trace =
      partial_trace(to_density(hybrid), {Subsystem::Pol1, Subsystem::Pol2});

  // Independent path: explicit sum over the OAM basis, rho_12 = sum_k <k|psi><psi|k>.
  Matrix by_hand = Matrix::Zero(4, 4);
  for (int k = 0; k < 2; ++k) {
    Vector slice(4);
    for (Eigen::Index i = 0; i < 4; ++i) slice(i) = hybrid.amplitudes()(2 * i + k);
    by_hand += slice * slice.adjoint();
  }
  REQUIRE(max_abs_diff(via_partial_trace.entries(), by_hand) < 1e-10);
  REQUIRE(trace_distance(via_partial_trace, DensityMatrix(via_partial_trace.labels(), by_hand)) <
          1e-10);
}

TEST_CASE("partial trace rejects bad keep sets") {
  const DensityMatrix rho = to_density(optics::make_singlet());
  REQUIRE_THROWS_AS(partial_trace(rho, {Subsystem::Oam2}), Error);
  REQUIRE_THROWS_AS(partial_trace(rho, {}), Error);
}

TEST_CASE("fidelity basics") {
  std::mt19937_64 eng(31);
  const DensityMatrix rho = random_density_matrix({Subsystem::Pol1, Subsystem::Pol2}, eng);
  REQUIRE(fidelity(rho, rho) == Approx(1.0).margin(1e-10));

  const StateVector psi = random_pure_state({Subsystem::Pol1}, eng);
  const StateVector phi = random_pure_state({Subsystem::Pol1}, eng);
  const Complex overlap = (psi.amplitudes().adjoint() * phi.amplitudes()).value();
  REQUIRE(fidelity(to_density(psi), to_density(phi)) ==
          Approx(std::norm(overlap)).margin(1e-10));
}

TEST_CASE("fidelity of a Werner state against the singlet follows the analytic formula") {
  const DensityMatrix singlet = to_density(optics::make_singlet());
  for (double p : {0.0, 0.5, 1.0}) {
    Matrix w = p * singlet.entries() + (1.0 - p) * Matrix::Identity(4, 4) / 4.0;
    const DensityMatrix werner(singlet.labels(), std::move(w));
    REQUIRE(fidelity(werner, singlet) == Approx(p + (1.0 - p) / 4.0).margin(1e-10));
  }
}

TEST_CASE("fidelity is symmetric and unitarily invariant") {
  std::mt19937_64 eng(37);
  const Labels labels = {Subsystem::Pol1, Subsystem::Pol2};
  for (int i = 0; i < 25; ++i) {
    const DensityMatrix rho = random_density_matrix(labels, eng);
    const DensityMatrix sigma = random_density_matrix(labels, eng);
    const double f = fidelity(rho, sigma);
    REQUIRE(f == Approx(fidelity(sigma, rho)).margin(1e-10));
    const Matrix u = random_unitary(4, eng);
    const DensityMatrix rho_u(labels, u * rho.entries() * u.adjoint());
    const DensityMatrix sigma_u(labels, u * sigma.entries() * u.adjoint());
    REQUIRE(fidelity(rho_u, sigma_u) == Approx(f).margin(1e-9));
  }
}

TEST_CASE("fidelity rejects mismatched or unphysical inputs") {
  const DensityMatrix rho = to_density(optics::make_singlet());
  const DensityMatrix one = maximally_mixed({Subsystem::Pol1});
  REQUIRE_THROWS_AS(fidelity(rho, one), Error);
  Matrix bad = Matrix::Identity(2, 2);
  bad(0, 0) = 1.5;
  bad(1, 1) = -0.5;  // trace 1, not PSD
  REQUIRE_THROWS_AS(DensityMatrix({Subsystem::Pol1}, bad), Error);
}

TEST_CASE("expectation values on standard states") {
  const Observable z({Subsystem::Pol1}, pauli_z());
  const Observable x({Subsystem::Pol1}, pauli_x());
  const DensityMatrix h = to_density(ket(Subsystem::Pol1, 0));
  REQUIRE(expectation(h, z) == Approx(1.0).margin(1e-12));  // sigma_z |H> = +|H>
  REQUIRE(expectation(maximally_mixed({Subsystem::Pol1}), x) == Approx(0.0).margin(1e-12));

  const Observable zz = tensor(z, Observable({Subsystem::Pol2}, pauli_z()));
  REQUIRE(expectation(to_density(optics::make_singlet()), zz) == Approx(-1.0).margin(1e-12));
}

TEST_CASE("expectation is linear in the observable") {
  std::mt19937_64 eng(41);
  const Labels labels = {Subsystem::Pol1, Subsystem::Pol2};
  for (int i = 0; i < 25; ++i) {
    const DensityMatrix rho = random_density_matrix(labels, eng);
    const DensityMatrix o1m = random_density_matrix(labels, eng);
    const DensityMatrix o2m = random_density_matrix(labels, eng);
    const Observable o1(labels, o1m.entries());
    const Observable o2(labels, o2m.entries());
    const double a = 1.7, b = -0.4;
    const Observable combo(labels, a * o1.matrix() + b * o2.matrix());
    REQUIRE(expectation(rho, combo) ==
            Approx(a * expectation(rho, o1) + b * expectation(rho, o2)).margin(1e-10));
  }
}

TEST_CASE("observables must be Hermitian") {
  Matrix m(2, 2);
  m << 0, 1, 0, 0;
  REQUIRE_THROWS_AS(Observable({Subsystem::Pol1}, m), Error);
}

TEST_CASE("density matrices enforce the physicality triple") {
  Matrix not_unit_trace = 2.0 * Matrix::Identity(2, 2);
  REQUIRE_THROWS_AS(DensityMatrix({Subsystem::Pol1}, not_unit_trace), Error);

  Matrix not_hermitian(2, 2);
  not_hermitian << 0.5, 0.1, 0.3, 0.5;
  REQUIRE_THROWS_AS(DensityMatrix({Subsystem::Pol1}, not_hermitian), Error);

  // A tiny negative eigenvalue above the floor is reconstruction noise, not
  // an error.
  Matrix nearly(2, 2);
  nearly << 1.0 + 1e-11, 0, 0, -1e-11;
  REQUIRE_NOTHROW(DensityMatrix({Subsystem::Pol1}, nearly));

  Matrix below(2, 2);
  below << 1.0 + 1e-6, 0, 0, -1e-6;
  REQUIRE_THROWS_AS(DensityMatrix({Subsystem::Pol1}, below), Error);
}

TEST_CASE("random purifications give physical reduced states") {
  std::mt19937_64 eng(43);
  for (int i = 0; i < 50; ++i) {
    const StateVector psi =
        random_pure_state({Subsystem::Pol1, Subsystem::Pol2, Subsystem::Oam2}, eng);
    const DensityMatrix reduced = partial_trace(to_density(psi), {Subsystem::Pol1});
    REQUIRE(reduced.entries().trace().real() == Approx(1.0).margin(1e-12));
  }
}

TEST_CASE("states equal up to global phase compare equal only in the phase-insensitive sense") {
  std::mt19937_64 eng(47);
  const StateVector psi = random_pure_state({Subsystem::Pol1, Subsystem::Pol2}, eng);
  const StateVector rotated(psi.labels(), std::exp(Complex(0, 1.234)) * psi.amplitudes());
  REQUIRE(equal_up_to_global_phase(psi, rotated));
  REQUIRE((psi.amplitudes() - rotated.amplitudes()).norm() > 1e-3);  // strict comparison differs

  const StateVector other = random_pure_state(psi.labels(), eng);
  REQUIRE_FALSE(equal_up_to_global_phase(psi, other));
}

TEST_CASE("density matrix JSON round trip is exact") {
  std::mt19937_64 eng(53);
  const DensityMatrix rho = random_density_matrix({Subsystem::Pol2, Subsystem::Oam2}, eng);
  const nlohmann::json j = to_json(rho);
  REQUIRE(j["labels"] == nlohmann::json({"POL2", "OAM2"}));
  const DensityMatrix back = density_from_json(j);
  REQUIRE(back.labels() == rho.labels());
  REQUIRE(max_abs_diff(back.entries(), rho.entries()) == 0.0);  // exact decimal floats
}
