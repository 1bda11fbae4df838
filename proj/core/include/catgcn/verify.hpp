#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "catgcn/dense.hpp"

namespace catgcn {

// Propagation matrix of the artificial feature graph over n features:
// (1 + rho) / (n + rho) on the diagonal and 1 / (n + rho) elsewhere.
DenseMatrix artificial_matrix(std::size_t n, double rho);

// The rho2 with P(rho2) == P(rho1)^K:
//   rho2 = rho1^K / sum_{i=0}^{K-1} C(K, i) rho1^i n^(K-1-i).
// The denominator is evaluated in whichever of the ratios n / rho1 or
// rho1 / n is at most one, with binomials updated incrementally, so no
// intermediate power is formed. Throws NumericError if the sum overflows.
double theorem_rho2(double rho1, std::size_t k, std::size_t n);

struct TheoremCertificate {
  std::size_t n = 0;
  double rho1 = 0.0;
  std::size_t k = 0;
  double rho2 = 0.0;
  double max_entry_diff = 0.0;
  bool pass = false;
};

// Compares P(rho1)^K, by repeated multiplication, with P(theorem_rho2(...)).
TheoremCertificate certify_theorem(std::size_t n, double rho1, std::size_t k);

struct Eigensystem {
  std::vector<double> values;  // descending
  DenseMatrix vectors;         // column j pairs with values[j]
  std::size_t sweeps = 0;
  bool converged = false;
};

// Cyclic Jacobi rotations for a symmetric matrix.
Eigensystem jacobi_eigen(const DenseMatrix& symmetric, std::size_t max_sweeps = 100);

struct SpectralReport {
  std::size_t n = 0;
  double rho = 0.0;
  std::vector<double> eigenvalues;            // of P, descending
  std::vector<double> laplacian_eigenvalues;  // of I - P, ascending
  // g(lambda) = 1 - lambda over the computed Laplacian spectrum.
  std::vector<double> filter_coefficients;
  // The two distinct coefficients in closed form: 1 and rho / (n + rho).
  std::vector<double> closed_form_filter;
  double max_eigen_error = 0.0;  // against {1, rho/(n+rho) x (n-1)}
  double max_residual = 0.0;     // max ||P u - lambda u||
  double convolution_error = 0.0;  // ||P E - U diag(g) U^T E|| for a random E
  bool converged = false;
  bool pass = false;
};

SpectralReport spectrum_check(std::size_t n, double rho, std::uint64_t seed = 0);

// Explicit double loop over pairs i < j of e_i (*) e_j.
std::vector<double> biinteraction_pairwise(const DenseMatrix& e);

struct TheoremSweep {
  std::vector<TheoremCertificate> cells;
  bool monotone_in_k = true;
  double max_entry_diff = 0.0;
  bool pass = false;
};

// `cells` random triples with n in [2, 20], rho1 in [0, 50], K in [1, 6].
// Also checks that rho2 does not increase with K for each (n, rho1).
TheoremSweep theorem_sweep(std::uint64_t seed, std::size_t cells = 200);

struct SpectrumSweep {
  std::vector<SpectralReport> cells;
  bool pass = false;
};

// n in {2, 5, 10, 20} by rho in {0, 1, 5, 21, 30}.
SpectrumSweep spectrum_sweep(std::uint64_t seed);

struct BiinteractionSweep {
  std::size_t cases = 0;
  // max over cases of ||linear - pairwise||_inf / ||pairwise||_inf
  double max_rel_error = 0.0;
  std::size_t worst_case = 0;
  bool pass = false;
};

// Random matrices with n_f in [1, 30], D in [1, 64], entries in [-1, 1).
BiinteractionSweep biinteraction_sweep(std::uint64_t seed, std::size_t cases = 500, double tolerance = 1e-12);

struct VerifyReport {
  TheoremSweep theorem;
  SpectrumSweep spectrum;
  BiinteractionSweep biinteraction;
  bool pass = false;
};

VerifyReport run_verification(std::uint64_t seed = 0);

std::string to_json(const TheoremCertificate& cert);
std::string to_json(const SpectralReport& report);
// Full report; individual cells are listed only when they fail.
std::string to_json(const VerifyReport& report);

}  // namespace catgcn
