#include "catgcn/verify.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>

#include "catgcn/error.hpp"
#include "catgcn/interaction.hpp"
#include "catgcn/rng.hpp"
#include "json.hpp"

namespace catgcn {

namespace {

constexpr double kTheoremTolerance = 1e-10;
constexpr double kSpectralTolerance = 1e-8;

}  // namespace

DenseMatrix artificial_matrix(std::size_t n, double rho) {
  const double denom = static_cast<double>(n) + rho;
  DenseMatrix p(n, n, 1.0 / denom);
  for (std::size_t i = 0; i < n; ++i) p(i, i) = (1.0 + rho) / denom;
  return p;
}

double theorem_rho2(double rho1, std::size_t k, std::size_t n) {
  if (!(rho1 >= 0.0) || !std::isfinite(rho1) || k < 1 || n < 1) {
    throw ContractError("theorem_rho2: needs rho1 >= 0, K >= 1, n >= 1");
  }
  if (rho1 == 0.0) return 0.0;
  const double nd = static_cast<double>(n);
  const double kd = static_cast<double>(k);
  double rho2 = 0.0;
  if (rho1 >= nd) {
    // Divide through by rho1^(K-1): terms C(K,i) r^(K-1-i) with r = n/rho1,
    // starting from the largest index.
    const double r = nd / rho1;
    double term = kd;
    double sum = term;
    for (std::size_t i = k - 1; i > 0; --i) {
      term *= r * static_cast<double>(i) / (kd - static_cast<double>(i) + 1.0);
      sum += term;
    }
    rho2 = rho1 / sum;
  } else {
    // Divide through by n^(K-1): terms C(K,i) q^i with q = rho1/n.
    const double q = rho1 / nd;
    double term = 1.0;
    double sum = term;
    double numer = rho1;
    for (std::size_t i = 0; i + 1 < k; ++i) {
      term *= q * (kd - static_cast<double>(i)) / static_cast<double>(i + 1);
      sum += term;
      numer *= q;
    }
    rho2 = numer / sum;
  }
  if (!std::isfinite(rho2)) throw NumericError("theorem_rho2: overflow evaluating the closed form");
  return rho2;
}

TheoremCertificate certify_theorem(std::size_t n, double rho1, std::size_t k) {
  if (n < 2 || n > 50 || k < 1 || k > 8 || !(rho1 >= 0.0 && rho1 <= 100.0)) {
    throw ContractError("certify_theorem: needs 2 <= n <= 50, 1 <= K <= 8, 0 <= rho1 <= 100");
  }
  TheoremCertificate c;
  c.n = n;
  c.rho1 = rho1;
  c.k = k;
  c.rho2 = theorem_rho2(rho1, k, n);
  const DenseMatrix p = artificial_matrix(n, rho1);
  DenseMatrix power = p;
  for (std::size_t i = 1; i < k; ++i) power = matmul(power, p);
  c.max_entry_diff = max_abs_diff(power, artificial_matrix(n, c.rho2));
  c.pass = c.max_entry_diff <= kTheoremTolerance && c.rho2 >= 0.0 && c.rho2 <= rho1;
  return c;
}

Eigensystem jacobi_eigen(const DenseMatrix& symmetric, std::size_t max_sweeps) {
  const std::size_t n = symmetric.rows();
  if (symmetric.cols() != n) throw ContractError("jacobi_eigen: matrix is not square");
  DenseMatrix a = symmetric;
  DenseMatrix v = DenseMatrix::identity(n);
  Eigensystem out;

  double scale = 0.0;
  for (double x : a.values()) scale += x * x;
  const double threshold = 1e-30 * std::max(scale, 1e-300);

  for (out.sweeps = 0; out.sweeps < max_sweeps; ++out.sweeps) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    if (off <= threshold) {
      out.converged = true;
      break;
    }
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = std::copysign(1.0, theta) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        a(p, q) = a(q, p) = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return a(i, i) > a(j, j); });
  out.values.resize(n);
  out.vectors = DenseMatrix(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    out.values[j] = a(order[j], order[j]);
    for (std::size_t k = 0; k < n; ++k) out.vectors(k, j) = v(k, order[j]);
  }
  return out;
}

SpectralReport spectrum_check(std::size_t n, double rho, std::uint64_t seed) {
  if (n < 2 || !(rho >= 0.0) || !std::isfinite(rho)) throw ContractError("spectrum_check: needs n >= 2, rho >= 0");
  SpectralReport r;
  r.n = n;
  r.rho = rho;
  const DenseMatrix p = artificial_matrix(n, rho);
  const Eigensystem eig = jacobi_eigen(p);
  r.converged = eig.converged;
  r.eigenvalues = eig.values;

  const double second = rho / (static_cast<double>(n) + rho);
  r.closed_form_filter = {1.0, second};
  for (std::size_t i = 0; i < n; ++i) {
    const double expected = i == 0 ? 1.0 : second;
    r.max_eigen_error = std::max(r.max_eigen_error, std::abs(eig.values[i] - expected));
  }
  for (double lambda : eig.values) r.laplacian_eigenvalues.push_back(1.0 - lambda);
  for (double l : r.laplacian_eigenvalues) r.filter_coefficients.push_back(1.0 - l);

  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t i = 0; i < n; ++i) {
      double pu = 0.0;
      for (std::size_t k = 0; k < n; ++k) pu += p(i, k) * eig.vectors(k, j);
      r.max_residual = std::max(r.max_residual, std::abs(pu - eig.values[j] * eig.vectors(i, j)));
    }
  }

  // P E against U diag(g) U^T E, with g taken from the Laplacian spectrum.
  CounterRng rng = CounterRng(seed).split(n).split(std::bit_cast<std::uint64_t>(rho));
  DenseMatrix e(n, 4);
  for (double& x : e.values()) x = rng.uniform(-1.0, 1.0);
  DenseMatrix filtered = matmul_tn(eig.vectors, e);
  for (std::size_t j = 0; j < n; ++j) {
    const double laplacian = 1.0 - eig.values[j];
    const double g = 1.0 - laplacian;
    for (double& x : filtered.row(j)) x *= g;
  }
  r.convolution_error = max_abs_diff(matmul(p, e), matmul(eig.vectors, filtered));

  r.pass = r.converged && r.max_eigen_error <= kSpectralTolerance && r.max_residual <= kSpectralTolerance &&
           r.convolution_error <= kSpectralTolerance;
  return r;
}

std::vector<double> biinteraction_pairwise(const DenseMatrix& e) {
  std::vector<double> out(e.cols(), 0.0);
  for (std::size_t i = 0; i < e.rows(); ++i)
    for (std::size_t j = i + 1; j < e.rows(); ++j)
      for (std::size_t c = 0; c < e.cols(); ++c) out[c] += e(i, c) * e(j, c);
  return out;
}

TheoremSweep theorem_sweep(std::uint64_t seed, std::size_t cells) {
  TheoremSweep sweep;
  CounterRng rng = CounterRng(seed).split(0x7e0);
  sweep.pass = true;
  for (std::size_t c = 0; c < cells; ++c) {
    const std::size_t n = 2 + rng.below(19);
    const double rho1 = rng.uniform(0.0, 50.0);
    const std::size_t k = 1 + rng.below(6);
    TheoremCertificate cert = certify_theorem(n, rho1, k);
    sweep.max_entry_diff = std::max(sweep.max_entry_diff, cert.max_entry_diff);
    sweep.pass = sweep.pass && cert.pass;

    double prev = theorem_rho2(rho1, 1, n);
    for (std::size_t kk = 2; kk <= 6; ++kk) {
      const double cur = theorem_rho2(rho1, kk, n);
      if (cur > prev) sweep.monotone_in_k = false;
      prev = cur;
    }
    sweep.cells.push_back(cert);
  }
  sweep.pass = sweep.pass && sweep.monotone_in_k;
  return sweep;
}

SpectrumSweep spectrum_sweep(std::uint64_t seed) {
  SpectrumSweep sweep;
  sweep.pass = true;
  for (std::size_t n : {2, 5, 10, 20}) {
    for (double rho : {0.0, 1.0, 5.0, 21.0, 30.0}) {
      SpectralReport r = spectrum_check(n, rho, seed);
      sweep.pass = sweep.pass && r.pass;
      sweep.cells.push_back(std::move(r));
    }
  }
  return sweep;
}

BiinteractionSweep biinteraction_sweep(std::uint64_t seed, std::size_t cases, double tolerance) {
  BiinteractionSweep sweep;
  sweep.cases = cases;
  const CounterRng root = CounterRng(seed).split(0xb1);
  for (std::size_t c = 0; c < cases; ++c) {
    CounterRng rng = root.split(c);
    const std::size_t n_f = 1 + rng.below(30);
    const std::size_t dim = 1 + rng.below(64);
    DenseMatrix e(n_f, dim);
    for (double& x : e.values()) x = rng.uniform(-1.0, 1.0);
    const std::vector<double> linear = local_biinteraction(e);
    const std::vector<double> pairs = biinteraction_pairwise(e);
    double diff = 0.0, norm = 0.0;
    for (std::size_t j = 0; j < dim; ++j) {
      diff = std::max(diff, std::abs(linear[j] - pairs[j]));
      norm = std::max(norm, std::abs(pairs[j]));
    }
    // n_f == 1 has an all-zero answer on both sides.
    const double rel = norm > 0.0 ? diff / norm : diff;
    if (c == 0 || rel > sweep.max_rel_error) {
      sweep.max_rel_error = rel;
      sweep.worst_case = c;
    }
  }
  sweep.pass = sweep.max_rel_error <= tolerance;
  return sweep;
}

VerifyReport run_verification(std::uint64_t seed) {
  VerifyReport r;
  r.theorem = theorem_sweep(seed);
  r.spectrum = spectrum_sweep(seed);
  r.biinteraction = biinteraction_sweep(seed);
  r.pass = r.theorem.pass && r.spectrum.pass && r.biinteraction.pass;
  return r;
}

namespace {

using nlohmann::ordered_json;

ordered_json cert_json(const TheoremCertificate& c) {
  return {{"n", c.n},         {"rho1", c.rho1}, {"k", c.k}, {"rho2", c.rho2}, {"max_entry_diff", c.max_entry_diff},
          {"pass", c.pass}};
}

ordered_json spectral_json(const SpectralReport& r) {
  ordered_json j;
  j["n"] = r.n;
  j["rho"] = r.rho;
  j["eigenvalues"] = r.eigenvalues;
  j["laplacian_eigenvalues"] = r.laplacian_eigenvalues;
  j["filter_coefficients"] = r.filter_coefficients;
  j["closed_form_filter"] = r.closed_form_filter;
  j["max_eigen_error"] = r.max_eigen_error;
  j["max_residual"] = r.max_residual;
  j["convolution_error"] = r.convolution_error;
  j["converged"] = r.converged;
  j["pass"] = r.pass;
  return j;
}

}  // namespace

std::string to_json(const TheoremCertificate& cert) { return cert_json(cert).dump(); }
std::string to_json(const SpectralReport& report) { return spectral_json(report).dump(); }

std::string to_json(const VerifyReport& report) {
  ordered_json theorem;
  theorem["cells"] = report.theorem.cells.size();
  theorem["max_entry_diff"] = report.theorem.max_entry_diff;
  theorem["monotone_in_k"] = report.theorem.monotone_in_k;
  theorem["pass"] = report.theorem.pass;
  ordered_json failing = ordered_json::array();
  for (const auto& c : report.theorem.cells)
    if (!c.pass) failing.push_back(cert_json(c));
  theorem["failing"] = std::move(failing);

  ordered_json spectrum;
  spectrum["cells"] = report.spectrum.cells.size();
  double worst_eig = 0.0, worst_res = 0.0, worst_conv = 0.0;
  ordered_json spectral_failing = ordered_json::array();
  for (const auto& c : report.spectrum.cells) {
    worst_eig = std::max(worst_eig, c.max_eigen_error);
    worst_res = std::max(worst_res, c.max_residual);
    worst_conv = std::max(worst_conv, c.convolution_error);
    if (!c.pass) spectral_failing.push_back(spectral_json(c));
  }
  spectrum["max_eigen_error"] = worst_eig;
  spectrum["max_residual"] = worst_res;
  spectrum["max_convolution_error"] = worst_conv;
  spectrum["pass"] = report.spectrum.pass;
  spectrum["failing"] = std::move(spectral_failing);

  ordered_json bi;
  bi["cases"] = report.biinteraction.cases;
  bi["max_rel_error"] = report.biinteraction.max_rel_error;
  bi["worst_case"] = report.biinteraction.worst_case;
  bi["pass"] = report.biinteraction.pass;

  ordered_json out;
  out["theorem"] = std::move(theorem);
  out["spectrum"] = std::move(spectrum);
  out["biinteraction"] = std::move(bi);
  out["pass"] = report.pass;
  return out.dump(2);
}

}  // namespace catgcn
