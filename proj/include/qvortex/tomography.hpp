#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "qvortex/channel.hpp"
#include "qvortex/hilbert.hpp"
#include "qvortex/optics.hpp"
#include "qvortex/parallel.hpp"

// Quantum state tomography from count records: overcomplete 6^n projector
// sets, linear inversion, physically constrained maximum-likelihood
// reconstruction, and bootstrap uncertainties for derived scalars.

namespace qvortex::tomography {

// How a reconstruction qubit is realized physically. Polarization qubits are
// measured directly; OAM qubits are measured through the decode plate and a
// polarization analyzer, so their canonical projectors are the logical-basis
// directions expressed in the physical +-7 coordinates.
enum class QubitEncoding { Polarization, OamLogical };

struct TomographyTuple {
  std::string id;                 // per-qubit canonical letters, e.g. "HV" or "DRL"
  int basis_index = 0;            // 0 .. 3^n - 1
  std::vector<int> settings;      // canonical setting index per qubit, 0..5
};

struct TomographySet {
  Labels labels;
  std::vector<QubitEncoding> encodings;
  std::vector<TomographyTuple> tuples;  // basis-major, outcome-minor order

  std::size_t n_qubits() const { return labels.size(); }
  Eigen::Index dim() const { return Eigen::Index(1) << labels.size(); }
  std::size_t outcomes_per_basis() const { return std::size_t(1) << labels.size(); }

  // Tuples may arrive in any order; count bases from the indices themselves.
  std::size_t bases() const {
    std::size_t count = 0;
    for (const auto& t : tuples) count = std::max(count, std::size_t(t.basis_index) + 1);
    return count;
  }

  // 2x2 projector of canonical setting `c` on qubit `q`, in that qubit's
  // storage basis.
  Eigen::Matrix2cd qubit_projector(std::size_t q, int c) const {
    const Eigen::Matrix2cd pol = optics::canonical_projector_matrix(c);
    return encodings[q] == QubitEncoding::Polarization ? pol : optics::oam_from_logical(pol);
  }

  Matrix full_projector(const TomographyTuple& t) const {
    Matrix out = Matrix(qubit_projector(0, t.settings[0]));
    for (std::size_t q = 1; q < n_qubits(); ++q)
      out = kron(out, Matrix(qubit_projector(q, t.settings[q])));
    return out;
  }
};

inline const char* canonical_names() { return "HVDARL"; }

// All 6^n combinations of the canonical single-qubit projectors, grouped
// into 3^n bases of 2^n outcomes each.
inline TomographySet generate_settings(const Labels& labels,
                                       const std::vector<QubitEncoding>& encodings) {
  const std::size_t n = labels.size();
  if (n != 2 && n != 3)
    throw Error("generate_settings: supported qubit counts are 2 and 3, got " +
                std::to_string(n));
  if (encodings.size() != n)
    throw Error("generate_settings: one encoding per qubit required");
  TomographySet set;
  set.labels = labels;
  set.encodings = encodings;
  std::size_t num_bases = 1;
  for (std::size_t q = 0; q < n; ++q) num_bases *= 3;
  const std::size_t outcomes = std::size_t(1) << n;
  for (std::size_t b = 0; b < num_bases; ++b) {
    std::vector<int> basis_of_qubit(n);
    std::size_t rem = b;
    for (std::size_t q = n; q-- > 0;) {
      basis_of_qubit[q] = int(rem % 3);
      rem /= 3;
    }
    for (std::size_t o = 0; o < outcomes; ++o) {
      TomographyTuple t;
      t.basis_index = int(b);
      t.settings.resize(n);
      for (std::size_t q = 0; q < n; ++q) {
        const int bit = int((o >> (n - 1 - q)) & 1);
        t.settings[q] = 2 * basis_of_qubit[q] + bit;
        t.id += canonical_names()[t.settings[q]];
      }
      set.tuples.push_back(std::move(t));
    }
  }
  return set;
}

namespace detail {

inline std::vector<Matrix> full_projectors(const TomographySet& set) {
  std::vector<Matrix> out;
  out.reserve(set.tuples.size());
  for (const auto& t : set.tuples) out.push_back(set.full_projector(t));
  return out;
}

// Hermitian Pauli-product basis, identity first.
inline std::vector<Matrix> pauli_basis(std::size_t n) {
  const std::array<Eigen::Matrix2cd, 4> singles = {identity2(), pauli_x(), pauli_y(), pauli_z()};
  std::vector<Matrix> out;
  const std::size_t count = std::size_t(1) << (2 * n);
  out.reserve(count);
  for (std::size_t s = 0; s < count; ++s) {
    std::size_t rem = s;
    std::vector<int> digit(n);
    for (std::size_t q = n; q-- > 0;) {
      digit[q] = int(rem % 4);
      rem /= 4;
    }
    Matrix g = Matrix(singles[digit[0]]);
    for (std::size_t q = 1; q < n; ++q) g = kron(g, Matrix(singles[digit[q]]));
    out.push_back(std::move(g));
  }
  return out;
}

inline std::vector<double> basis_totals(const TomographySet& set,
                                        const std::vector<double>& counts) {
  std::vector<double> totals(set.bases(), 0.0);
  for (std::size_t i = 0; i < counts.size(); ++i)
    totals[std::size_t(set.tuples[i].basis_index)] += counts[i];
  return totals;
}

// Validates count alignment and returns the counts with floating-point dust
// below zero clipped; genuinely negative counts are rejected.
inline std::vector<double> check_counts(const TomographySet& set,
                                        const std::vector<double>& counts) {
  if (counts.size() != set.tuples.size())
    throw Error("tomography: got " + std::to_string(counts.size()) + " counts for " +
                std::to_string(set.tuples.size()) + " settings");
  double largest = 0;
  for (double c : counts) largest = std::max(largest, std::abs(c));
  std::vector<double> cleaned(counts.size());
  double total = 0;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    if (counts[i] < -1e-9 * std::max(1.0, largest))
      throw Error("tomography: negative count; subtract accidentals first");
    cleaned[i] = std::max(0.0, counts[i]);
    total += cleaned[i];
  }
  if (total <= 0) throw Error("tomography: all counts are zero");
  return cleaned;
}

}  // namespace detail

// Numerical rank of the linear map from density matrices to outcome
// probabilities; 4^n certifies informational completeness.
inline int design_rank(const TomographySet& set) {
  const auto projectors = detail::full_projectors(set);
  const auto basis = detail::pauli_basis(set.n_qubits());
  Eigen::MatrixXd a(projectors.size(), basis.size());
  for (std::size_t i = 0; i < projectors.size(); ++i)
    for (std::size_t s = 0; s < basis.size(); ++s)
      a(Eigen::Index(i), Eigen::Index(s)) = (projectors[i] * basis[s]).trace().real();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a);
  svd.setThreshold(1e-10);
  return int(svd.rank());
}

struct LinearInversionResult {
  Matrix rho;              // Hermitian, unit trace; PSD not guaranteed
  double min_eigenvalue;   // negative values flag an unphysical estimate
};

// Least-squares solution of the Born-rule system on per-basis frequencies.
inline LinearInversionResult linear_inversion(const std::vector<double>& raw_counts,
                                              const TomographySet& set) {
  const std::vector<double> counts = detail::check_counts(set, raw_counts);
  if (design_rank(set) != (1 << (2 * set.n_qubits())))
    throw Error("linear_inversion: rank-deficient design, set is not informationally complete");
  const auto projectors = detail::full_projectors(set);
  const auto basis = detail::pauli_basis(set.n_qubits());
  const auto totals = detail::basis_totals(set, counts);
  const std::size_t m = projectors.size();
  const std::size_t terms = basis.size() - 1;  // identity coefficient fixed by the trace
  const double dim = double(set.dim());
  Eigen::MatrixXd a(m, terms);
  Eigen::VectorXd rhs(m);
  for (std::size_t i = 0; i < m; ++i) {
    const double nb = totals[std::size_t(set.tuples[i].basis_index)];
    const double f = nb > 0 ? counts[i] / nb : 0.0;
    rhs(Eigen::Index(i)) = f - projectors[i].trace().real() / dim;
    for (std::size_t s = 1; s < basis.size(); ++s)
      a(Eigen::Index(i), Eigen::Index(s - 1)) =
          (projectors[i] * basis[s]).trace().real() / dim;
  }
  const Eigen::VectorXd c = a.colPivHouseholderQr().solve(rhs);
  Matrix rho = Matrix::Identity(set.dim(), set.dim()) / dim;
  for (std::size_t s = 1; s < basis.size(); ++s)
    rho += (c(Eigen::Index(s - 1)) / dim) * basis[s];
  rho = 0.5 * (rho + Matrix(rho.adjoint()));
  Eigen::SelfAdjointEigenSolver<Matrix> es(rho, Eigen::EigenvaluesOnly);
  return {std::move(rho), es.eigenvalues().minCoeff()};
}

struct MleOptions {
  double tolerance = 1e-10;    // on the per-count-normalized log-likelihood
  int max_iterations = 10000;
};

struct TomographyResult {
  DensityMatrix rho_hat;
  double log_likelihood = 0.0;  // multinomial sum n_i ln p_i
  int iterations = 0;
  bool converged = false;
  double min_loglik_step = 0.0;  // smallest accepted per-iteration change
  std::optional<double> fidelity_vs_target;
  std::optional<double> bootstrap_sigma;
};

// Maximum-likelihood reconstruction by diluted R rho R fixed-point ascent.
// Counts follow independent Poisson statistics per outcome; with complete
// bases the per-basis rates profile out and the likelihood reduces to the
// multinomial form sum_i n_i ln p_i(rho). Each accepted step is checked to
// not decrease the likelihood; a full step that would is replaced by a
// diluted one. Convergence is judged on the likelihood normalized by the
// total count, which keeps the 1e-10 threshold meaningful at any count
// scale.
inline TomographyResult mle_reconstruct(const std::vector<double>& raw_counts,
                                        const TomographySet& set, const MleOptions& options = {}) {
  const std::vector<double> counts = detail::check_counts(set, raw_counts);
  if (design_rank(set) != (1 << (2 * set.n_qubits())))
    throw Error("mle_reconstruct: set is not informationally complete");
  const auto projectors = detail::full_projectors(set);
  const double total = std::accumulate(counts.begin(), counts.end(), 0.0);
  std::vector<double> weights(counts.size());
  for (std::size_t i = 0; i < counts.size(); ++i) weights[i] = counts[i] / total;

  const Eigen::Index d = set.dim();
  Matrix rho = Matrix::Identity(d, d) / double(d);

  auto probabilities = [&](const Matrix& state) {
    std::vector<double> p(projectors.size());
    for (std::size_t i = 0; i < projectors.size(); ++i)
      p[i] = std::max((state * projectors[i]).trace().real(), 1e-15);
    return p;
  };
  auto loglik = [&](const std::vector<double>& p) {
    double l = 0;
    for (std::size_t i = 0; i < p.size(); ++i)
      if (weights[i] > 0) l += weights[i] * std::log(p[i]);
    return l;
  };
  auto r_operator = [&](const std::vector<double>& p) {
    Matrix r = Matrix::Zero(d, d);
    for (std::size_t i = 0; i < projectors.size(); ++i)
      if (weights[i] > 0) r += (weights[i] / p[i]) * projectors[i];
    return r;
  };

  std::vector<double> p = probabilities(rho);
  double l = loglik(p);
  int iterations = 0;
  bool converged = false;
  double min_step = 0.0;
  for (; iterations < options.max_iterations; ++iterations) {
    const Matrix r = r_operator(p);
    Matrix candidate = r * rho * r;
    candidate /= candidate.trace().real();
    std::vector<double> p_new = probabilities(candidate);
    double l_new = loglik(p_new);
    if (l_new < l - 1e-14) {
      // Fall back to a diluted step (I + eps R) rho (I + eps R).
      double eps = 0.5;
      bool improved = false;
      while (eps > 1e-10) {
        const Matrix g = Matrix::Identity(d, d) + eps * r;
        candidate = g * rho * g;
        candidate /= candidate.trace().real();
        p_new = probabilities(candidate);
        l_new = loglik(p_new);
        if (l_new >= l - 1e-14) {
          improved = true;
          break;
        }
        eps *= 0.5;
      }
      if (!improved) {
        converged = true;  // at the numerical floor of the ascent
        break;
      }
    }
    rho = std::move(candidate);
    const double delta = l_new - l;
    min_step = std::min(min_step, delta);
    l = l_new;
    p = std::move(p_new);
    if (std::abs(delta) < options.tolerance) {
      ++iterations;
      converged = true;
      break;
    }
  }

  rho = 0.5 * (rho + Matrix(rho.adjoint()));
  TomographyResult result{DensityMatrix(set.labels, std::move(rho)), total * l, iterations,
                          converged,  min_step,     std::nullopt,    std::nullopt};
  return result;
}

struct BootstrapResult {
  double fidelity = 0.0;  // point estimate from the observed counts
  double sigma = 0.0;     // resampling standard deviation
};

// Parametric bootstrap: each count is resampled from Poisson(observed), the
// reconstruction re-run, and the spread of the derived fidelity reported.
inline BootstrapResult bootstrap_sigma(const std::vector<double>& counts,
                                       const TomographySet& set, const DensityMatrix& target,
                                       int n_resamples, std::uint64_t seed,
                                       const MleOptions& options = {}) {
  if (n_resamples < 100)
    throw Error("bootstrap_sigma: need at least 100 resamples, got " +
                std::to_string(n_resamples));
  const TomographyResult point = mle_reconstruct(counts, set, options);
  BootstrapResult out;
  out.fidelity = fidelity(point.rho_hat, target);
  std::vector<double> fidelities(static_cast<std::size_t>(n_resamples));
  parallel::parallel_for(std::size_t(n_resamples), [&](std::size_t k) {
    auto eng = channel::make_stream(seed, std::uint64_t(k));
    std::vector<double> resampled(counts.size());
    for (std::size_t i = 0; i < counts.size(); ++i)
      resampled[i] = double(channel::detail::draw_poisson(eng, counts[i]));
    const TomographyResult r = mle_reconstruct(resampled, set, options);
    fidelities[k] = fidelity(r.rho_hat, target);
  });
  double mean = std::accumulate(fidelities.begin(), fidelities.end(), 0.0) / fidelities.size();
  double ss = 0;
  for (double f : fidelities) ss += (f - mean) * (f - mean);
  out.sigma = std::sqrt(ss / double(fidelities.size() - 1));
  return out;
}

}  // namespace qvortex::tomography
