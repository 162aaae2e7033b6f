#include <catch2/catch.hpp>

#include <algorithm>
#include <numeric>
#include <random>

#include "qvortex/optics.hpp"
#include "qvortex/tomography.hpp"
#include "test_support.hpp"

using namespace qvortex;
using namespace qvortex::tomography;
using qvortex::testing::max_abs_diff;

namespace {

const Labels kTwoQubit = {Subsystem::Pol1, Subsystem::Pol2};
const std::vector<QubitEncoding> kPolPol = {QubitEncoding::Polarization,
                                            QubitEncoding::Polarization};

std::vector<double> exact_probabilities(const TomographySet& set, const DensityMatrix& rho) {
  std::vector<double> p;
  p.reserve(set.tuples.size());
  for (const auto& t : set.tuples)
    p.push_back((rho.entries() * set.full_projector(t)).trace().real());
  return p;
}

std::vector<double> poisson_counts(const std::vector<double>& probabilities, double scale,
                                   std::uint64_t seed) {
  std::vector<double> counts(probabilities.size());
  for (std::size_t i = 0; i < probabilities.size(); ++i) {
    auto eng = channel::make_stream(seed, i);
    std::poisson_distribution<long long> dist(scale * std::max(0.0, probabilities[i]));
    counts[i] = double(dist(eng));
  }
  return counts;
}

}  // namespace

TEST_CASE("two-qubit settings: 36 projector pairs in 9 bases") {
  const auto set = generate_settings(kTwoQubit, kPolPol);
  REQUIRE(set.tuples.size() == 36);
  REQUIRE(set.bases() == 9);
  REQUIRE(set.outcomes_per_basis() == 4);
}

TEST_CASE("three-qubit settings: 216 tuples in 27 bases") {
  const auto set = generate_settings(
      {Subsystem::Pol1, Subsystem::Pol2, Subsystem::Oam2},
      {QubitEncoding::Polarization, QubitEncoding::Polarization, QubitEncoding::OamLogical});
  REQUIRE(set.tuples.size() == 216);
  REQUIRE(set.bases() == 27);
}

TEST_CASE("unsupported qubit counts are rejected") {
  REQUIRE_THROWS_AS(generate_settings({Subsystem::Pol1}, {QubitEncoding::Polarization}), Error);
}

TEST_CASE("outcomes within each basis sum to the identity") {
  const auto set = generate_settings(
      {Subsystem::Pol2, Subsystem::Oam2},
      {QubitEncoding::Polarization, QubitEncoding::OamLogical});
  for (std::size_t b = 0; b < set.bases(); ++b) {
    Matrix sum = Matrix::Zero(set.dim(), set.dim());
    for (const auto& t : set.tuples)
      if (std::size_t(t.basis_index) == b) sum += set.full_projector(t);
    REQUIRE(max_abs_diff(sum, Matrix::Identity(set.dim(), set.dim())) < 1e-12);
  }
}

TEST_CASE("the two-qubit probability map has full rank 16") {
  const auto set = generate_settings(kTwoQubit, kPolPol);
  REQUIRE(design_rank(set) == 16);
}

TEST_CASE("linear inversion recovers states exactly from exact probabilities") {
  const auto set = generate_settings(kTwoQubit, kPolPol);
  const DensityMatrix singlet = to_density(optics::make_singlet());
  const auto inversion = linear_inversion(exact_probabilities(set, singlet), set);
  REQUIRE(max_abs_diff(inversion.rho, singlet.entries()) < 1e-10);

  const DensityMatrix mixed = maximally_mixed(kTwoQubit);
  const auto inversion_mixed = linear_inversion(exact_probabilities(set, mixed), set);
  REQUIRE(max_abs_diff(inversion_mixed.rho, mixed.entries()) < 1e-10);
}

TEST_CASE("linear inversion flags unphysical estimates at low statistics") {
  // About 100 expected coincidences per setting on a rank-deficient true
  // state pushes the least-squares estimate below zero; the pipeline must
  // report it instead of hiding it.
  const auto set = generate_settings(kTwoQubit, kPolPol);
  const DensityMatrix singlet = to_density(optics::make_singlet());
  const auto p = exact_probabilities(set, singlet);
  bool saw_negative = false;
  for (std::uint64_t seed = 0; seed < 10 && !saw_negative; ++seed) {
    const auto inversion = linear_inversion(poisson_counts(p, 400.0, seed), set);
    saw_negative = inversion.min_eigenvalue < 0.0;
  }
  REQUIRE(saw_negative);
}

TEST_CASE("MLE from exact probabilities reproduces the state to 1e-8") {
  const auto set = generate_settings(kTwoQubit, kPolPol);
  const DensityMatrix singlet = to_density(optics::make_singlet());
  const auto result = mle_reconstruct(exact_probabilities(set, singlet), set);
  REQUIRE(result.converged);
  REQUIRE(fidelity(result.rho_hat, singlet) >= 1.0 - 1e-8);
}

TEST_CASE("MLE statistical round trip at 1e5 per basis reaches 0.999 fidelity") {
  const auto set = generate_settings(kTwoQubit, kPolPol);
  const DensityMatrix singlet = to_density(optics::make_singlet());
  const auto p = exact_probabilities(set, singlet);
  const auto counts = poisson_counts(p, 1e5, 7);  // basis total ~ 1e5
  const auto result = mle_reconstruct(counts, set);
  REQUIRE(result.converged);
  REQUIRE(result.min_loglik_step >= -1e-13);  // ascent never decreased
  REQUIRE(fidelity(result.rho_hat, singlet) >= 0.999);
}

TEST_CASE("MLE output passes the physicality triple") {
  const auto set = generate_settings(kTwoQubit, kPolPol);
  const DensityMatrix singlet = to_density(optics::make_singlet());
  const auto counts = poisson_counts(exact_probabilities(set, singlet), 500.0, 3);
  const auto result = mle_reconstruct(counts, set);
  // The DensityMatrix constructor enforces Hermiticity, unit trace and the
  // PSD floor; reaching here means all three held.
  REQUIRE(result.rho_hat.dim() == 4);
}

TEST_CASE("record order does not change the reconstruction") {
  const auto set = generate_settings(kTwoQubit, kPolPol);
  const DensityMatrix singlet = to_density(optics::make_singlet());
  const auto counts = poisson_counts(exact_probabilities(set, singlet), 2000.0, 11);
  const auto direct = mle_reconstruct(counts, set);

  std::vector<std::size_t> perm(set.tuples.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 eng(5);
  std::shuffle(perm.begin(), perm.end(), eng);
  TomographySet shuffled = set;
  std::vector<double> shuffled_counts(counts.size());
  for (std::size_t i = 0; i < perm.size(); ++i) {
    shuffled.tuples[i] = set.tuples[perm[i]];
    shuffled_counts[i] = counts[perm[i]];
  }
  const auto permuted = mle_reconstruct(shuffled_counts, shuffled);
  REQUIRE(max_abs_diff(permuted.rho_hat.entries(), direct.rho_hat.entries()) < 1e-10);

  // Linear inversion groups counts by basis and must survive reordering too.
  REQUIRE(shuffled.bases() == set.bases());
  const auto inv_direct = linear_inversion(counts, set);
  const auto inv_permuted = linear_inversion(shuffled_counts, shuffled);
  REQUIRE(max_abs_diff(inv_permuted.rho, inv_direct.rho) < 1e-10);
}

TEST_CASE("reconstruction is basis consistent at large statistics") {
  const auto set = generate_settings(kTwoQubit, kPolPol);
  const DensityMatrix singlet = to_density(optics::make_singlet());
  const auto counts = poisson_counts(exact_probabilities(set, singlet), 1e5, 13);
  const auto result = mle_reconstruct(counts, set);

  std::vector<double> totals(set.bases(), 0.0);
  for (std::size_t i = 0; i < counts.size(); ++i)
    totals[std::size_t(set.tuples[i].basis_index)] += counts[i];
  int within = 0;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    const double nb = totals[std::size_t(set.tuples[i].basis_index)];
    const double f = counts[i] / nb;
    const double p = (result.rho_hat.entries() * set.full_projector(set.tuples[i]))
                         .trace()
                         .real();
    const double se = std::sqrt(std::max(counts[i], 1.0)) / nb;
    if (std::abs(p - f) <= 4 * se) ++within;
  }
  REQUIRE(double(within) >= 0.95 * double(counts.size()));
}

TEST_CASE("degenerate inputs are diagnosed") {
  const auto set = generate_settings(kTwoQubit, kPolPol);
  const std::vector<double> zeros(set.tuples.size(), 0.0);
  REQUIRE_THROWS_AS(mle_reconstruct(zeros, set), Error);

  TomographySet crippled = set;
  crippled.tuples.resize(4);  // a single basis cannot be informationally complete
  REQUIRE_THROWS_AS(mle_reconstruct(std::vector<double>(4, 100.0), crippled), Error);
  REQUIRE_THROWS_AS(linear_inversion(std::vector<double>(4, 100.0), crippled), Error);
}

TEST_CASE("bootstrap is deterministic and its spread shrinks with statistics") {
  const auto set = generate_settings(kTwoQubit, kPolPol);
  const DensityMatrix singlet = to_density(optics::make_singlet());
  const auto p = exact_probabilities(set, singlet);

  std::vector<double> at_1e5(p.size());
  std::vector<double> at_1e6(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    at_1e5[i] = 1e5 * p[i];
    at_1e6[i] = 1e6 * p[i];
  }
  const auto a = bootstrap_sigma(at_1e5, set, singlet, 100, 42);
  const auto b = bootstrap_sigma(at_1e5, set, singlet, 100, 42);
  REQUIRE(a.fidelity == b.fidelity);
  REQUIRE(a.sigma == b.sigma);
  REQUIRE(a.sigma < 0.01);

  const auto c = bootstrap_sigma(at_1e6, set, singlet, 100, 42);
  REQUIRE(c.sigma / a.sigma < 0.5);  // ~1/sqrt(10)

  REQUIRE_THROWS_AS(bootstrap_sigma(at_1e5, set, singlet, 50, 42), Error);
}
