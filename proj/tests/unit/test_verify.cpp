#include <cmath>

#include <gtest/gtest.h>

#include "catgcn/error.hpp"
#include "catgcn/interaction.hpp"
#include "catgcn/rng.hpp"
#include "catgcn/verify.hpp"
#include "json.hpp"
#include "test_util.hpp"

namespace catgcn {
namespace {

// Direct evaluation of rho1^K / sum_i C(K, i) rho1^i n^(K-1-i) in long double.
long double naive_rho2(long double rho1, int k, long double n) {
  long double denom = 0, binom = 1;
  for (int i = 0; i < k; ++i) {
    denom += binom * std::pow(rho1, i) * std::pow(n, k - 1 - i);
    binom = binom * (k - i) / (i + 1);
  }
  return std::pow(rho1, k) / denom;
}

TEST(TheoremRho2, Examples) {
  EXPECT_EQ(theorem_rho2(7.5, 1, 10), 7.5);
  EXPECT_EQ(theorem_rho2(0.0, 4, 10), 0.0);
  EXPECT_NEAR(theorem_rho2(2.0, 2, 3), 4.0 / 7.0, 1e-15);
  EXPECT_THROW(theorem_rho2(-1.0, 2, 3), ContractError);
  EXPECT_THROW(theorem_rho2(1.0, 0, 3), ContractError);
}

TEST(TheoremRho2, MatchesNaiveSumInBothRegimes) {
  CounterRng rng(1);
  for (int c = 0; c < 2000; ++c) {
    const std::size_t n = 1 + rng.below(50);
    const int k = 1 + static_cast<int>(rng.below(8));
    const double rho1 = rng.bernoulli(0.5) ? rng.uniform(0, 100) : rng.uniform(0, static_cast<double>(n));
    const double fast = theorem_rho2(rho1, static_cast<std::size_t>(k), n);
    const double slow = static_cast<double>(naive_rho2(rho1, k, static_cast<long double>(n)));
    ASSERT_NEAR(fast, slow, 1e-13 * std::max(1.0, slow)) << n << " " << k << " " << rho1;
    ASSERT_GE(fast, 0.0);
    ASSERT_LE(fast, rho1 * (1 + 1e-15));
  }
}

TEST(TheoremRho2, ExtremeInputsStayFinite) {
  EXPECT_NEAR(theorem_rho2(1e300, 3, 10) / 1e300, 1.0 / 3.0, 1e-12);
  EXPECT_GE(theorem_rho2(1e-300, 8, 50), 0.0);
  EXPECT_TRUE(std::isfinite(theorem_rho2(50.0, 5000, 2)));
}

// Independent oracle: the off-diagonal entry b of P(rho1)^K equals
// 1 / (n + rho2), so rho2 = 1 / b - n.
TEST(CertifyTheorem, AgreesWithPowerOffDiagonal) {
  CounterRng rng(2);
  for (int c = 0; c < 100; ++c) {
    const std::size_t n = 2 + rng.below(19), k = 1 + rng.below(6);
    const double rho1 = rng.uniform(0, 50);
    DenseMatrix power = artificial_matrix(n, rho1);
    for (std::size_t i = 1; i < k; ++i) power = matmul(power, artificial_matrix(n, rho1));
    const double from_power = 1.0 / power(0, 1) - static_cast<double>(n);
    ASSERT_NEAR(theorem_rho2(rho1, k, n), from_power, 1e-9 * std::max(1.0, from_power));
    const TheoremCertificate cert = certify_theorem(n, rho1, k);
    ASSERT_TRUE(cert.pass);
    ASSERT_LE(cert.max_entry_diff, 1e-10);
  }
}

TEST(CertifyTheorem, Examples) {
  const TheoremCertificate a = certify_theorem(3, 2.0, 2);
  EXPECT_TRUE(a.pass);
  EXPECT_LE(a.max_entry_diff, 1e-14);
  const DenseMatrix sq = matmul(artificial_matrix(3, 2.0), artificial_matrix(3, 2.0));
  EXPECT_NEAR(sq(0, 0), 11.0 / 25.0, 1e-15);
  EXPECT_NEAR(sq(0, 1), 7.0 / 25.0, 1e-15);
  for (std::size_t n : {2, 7, 50}) EXPECT_EQ(certify_theorem(n, 13.0, 1).max_entry_diff, 0.0);
  for (std::size_t k : {1, 3, 8}) EXPECT_LE(certify_theorem(9, 0.0, k).max_entry_diff, 1e-14);
  EXPECT_THROW(certify_theorem(1, 1.0, 1), ContractError);
  EXPECT_THROW(certify_theorem(3, 101.0, 1), ContractError);
  EXPECT_THROW(certify_theorem(3, 1.0, 9), ContractError);
}

TEST(CertifyTheorem, RandomSweepPassesAndIsMonotone) {
  const TheoremSweep s = theorem_sweep(5);
  EXPECT_EQ(s.cells.size(), 200u);
  EXPECT_TRUE(s.monotone_in_k);
  EXPECT_LE(s.max_entry_diff, 1e-10);
  EXPECT_TRUE(s.pass);
  for (std::size_t n : {2, 10, 20})
    for (double rho1 : {0.5, 5.0, 50.0})
      for (std::size_t k = 1; k < 6; ++k) EXPECT_LE(theorem_rho2(rho1, k + 1, n), theorem_rho2(rho1, k, n));
}

TEST(Jacobi, KnownSpectra) {
  const Eigensystem two = jacobi_eigen(DenseMatrix{{0.75, 0.25}, {0.25, 0.75}});
  ASSERT_TRUE(two.converged);
  EXPECT_NEAR(two.values[0], 1.0, 1e-15);
  EXPECT_NEAR(two.values[1], 0.5, 1e-15);

  const Eigensystem diag = jacobi_eigen(DenseMatrix{{1, 0, 0}, {0, 3, 0}, {0, 0, 2}});
  EXPECT_EQ(diag.values, (std::vector<double>{3, 2, 1}));

  CounterRng rng(3);
  DenseMatrix a = testing::random_matrix(12, 12, rng);
  a = matmul(a, transpose(a));
  const Eigensystem e = jacobi_eigen(a);
  ASSERT_TRUE(e.converged);
  EXPECT_TRUE(std::is_sorted(e.values.rbegin(), e.values.rend()));
  // A U = U diag(values), and U^T U = I.
  const DenseMatrix au = matmul(a, e.vectors);
  for (std::size_t j = 0; j < 12; ++j)
    for (std::size_t i = 0; i < 12; ++i) ASSERT_NEAR(au(i, j), e.values[j] * e.vectors(i, j), 1e-10);
  EXPECT_LE(max_abs_diff(matmul_tn(e.vectors, e.vectors), DenseMatrix::identity(12)), 1e-12);
  EXPECT_THROW(jacobi_eigen(DenseMatrix(2, 3)), ContractError);
}

TEST(SpectrumCheck, Examples) {
  const SpectralReport r = spectrum_check(10, 21.0);
  ASSERT_TRUE(r.pass);
  ASSERT_EQ(r.eigenvalues.size(), 10u);
  EXPECT_NEAR(r.eigenvalues[0], 1.0, 1e-12);
  for (std::size_t i = 1; i < 10; ++i) EXPECT_NEAR(r.eigenvalues[i], 21.0 / 31.0, 1e-12);
  EXPECT_NEAR(r.laplacian_eigenvalues[0], 0.0, 1e-12);
  EXPECT_NEAR(r.laplacian_eigenvalues[9], 10.0 / 31.0, 1e-12);
  EXPECT_EQ(r.closed_form_filter, (std::vector<double>{1.0, 21.0 / 31.0}));

  const SpectralReport zero = spectrum_check(6, 0.0);
  ASSERT_TRUE(zero.pass);
  EXPECT_NEAR(zero.eigenvalues[0], 1.0, 1e-12);
  for (std::size_t i = 1; i < 6; ++i) EXPECT_NEAR(zero.eigenvalues[i], 0.0, 1e-12);
  EXPECT_EQ(zero.closed_form_filter, (std::vector<double>{1.0, 0.0}));

  const SpectralReport two = spectrum_check(2, 2.0);
  EXPECT_NEAR(two.eigenvalues[0], 1.0, 1e-15);
  EXPECT_NEAR(two.eigenvalues[1], 0.5, 1e-15);
  EXPECT_THROW(spectrum_check(1, 1.0), ContractError);
}

TEST(SpectrumCheck, FilterCoefficientsMirrorThePropagationSpectrum) {
  for (std::size_t n : {3, 10, 25}) {
    for (double rho : {0.0, 2.0, 30.0}) {
      const SpectralReport r = spectrum_check(n, rho, 4);
      ASSERT_TRUE(r.pass) << n << " " << rho;
      ASSERT_EQ(r.filter_coefficients.size(), n);
      for (std::size_t i = 0; i < n; ++i) ASSERT_NEAR(r.filter_coefficients[i], r.eigenvalues[i], 1e-12);
      EXPECT_LE(r.max_residual, 1e-8);
      EXPECT_LE(r.convolution_error, 1e-8);
    }
  }
}

TEST(SpectrumSweep, AllCellsPass) {
  const SpectrumSweep s = spectrum_sweep(1);
  EXPECT_EQ(s.cells.size(), 20u);
  EXPECT_TRUE(s.pass);
}

TEST(Pairwise, Examples) {
  EXPECT_EQ(biinteraction_pairwise(DenseMatrix{{4, 5}}), (std::vector<double>{0, 0}));
  EXPECT_EQ(biinteraction_pairwise(DenseMatrix{{1, 2}, {3, 4}}), (std::vector<double>{3, 8}));
  EXPECT_EQ(biinteraction_pairwise(DenseMatrix{{1, 1}, {1, 1}, {1, 1}}), (std::vector<double>{3, 3}));
}

TEST(BiinteractionSweep, CertifiesLinearForm) {
  const BiinteractionSweep s = biinteraction_sweep(9);
  EXPECT_EQ(s.cases, 500u);
  EXPECT_LE(s.max_rel_error, 1e-12);
  EXPECT_TRUE(s.pass);
}

TEST(Report, FullRunAndJson) {
  const VerifyReport r = run_verification(0);
  EXPECT_TRUE(r.pass);
  const auto j = nlohmann::json::parse(to_json(r));
  EXPECT_TRUE(j.at("pass").get<bool>());
  const auto cert = nlohmann::json::parse(to_json(certify_theorem(3, 2.0, 2)));
  EXPECT_NEAR(cert.at("rho2").get<double>(), 4.0 / 7.0, 1e-15);
  EXPECT_TRUE(cert.at("pass").get<bool>());
  const auto spec = nlohmann::json::parse(to_json(spectrum_check(4, 1.0)));
  EXPECT_EQ(spec.at("eigenvalues").size(), 4u);
}

}  // namespace
}  // namespace catgcn
