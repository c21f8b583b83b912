#pragma once

// Stability and controllability metrics of a fitted surrogate: the spectrum of
// A_reduced (maximum eigenvalue modulus, Koopman modes) and the numerical rank
// of the Kalman controllability matrix [B, AB, ..., A^{r-1} B].

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <numeric>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "koopctl/dmdc.hpp"
#include "koopctl/error.hpp"

namespace koopctl {

struct SpectrumReport {
  /// Sorted by non-increasing modulus, ties by non-increasing real part, then imaginary part.
  std::vector<std::complex<double>> eigenvalues;
  double max_eig_norm = 0;
  Eigen::MatrixXcd modes; ///< n x r, column k is basis * (eigenvector k)
};

struct ControllabilityReport {
  std::size_t rank = 0;
  double normalized_rank = 0;
  std::vector<double> singular_values;
  double rel_tol = 0;
  double tolerance_used = 0; ///< absolute threshold, rel_tol * sigma_1
  std::size_t rescaled_blocks = 0;
};

inline constexpr double default_ctrb_rel_tol = 1e-10;

inline SpectrumReport spectrum(const Eigen::MatrixXd& A, const Eigen::MatrixXd& basis) {
  if (A.rows() != A.cols() || A.rows() == 0) {
    throw validation_error("spectrum: operator must be square and non-empty");
  }
  if (basis.cols() != A.rows()) {
    throw validation_error("spectrum: basis column count does not match operator size");
  }
  Eigen::EigenSolver<Eigen::MatrixXd> es(A, /*computeEigenvectors=*/true);
  if (es.info() != Eigen::Success) {
    throw numerical_error("spectrum: eigensolver did not converge");
  }
  const Eigen::VectorXcd vals = es.eigenvalues();
  const Eigen::MatrixXcd vecs = es.eigenvectors();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(vals.size()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    const double ma = std::abs(vals(a)), mb = std::abs(vals(b));
    if (ma != mb) return ma > mb;
    if (vals(a).real() != vals(b).real()) return vals(a).real() > vals(b).real();
    return vals(a).imag() > vals(b).imag();
  });
  SpectrumReport rep;
  rep.modes.resize(basis.rows(), A.cols());
  for (std::size_t k = 0; k < order.size(); ++k) {
    const auto idx = order[k];
    rep.eigenvalues.push_back(vals(idx));
    rep.modes.col(static_cast<Eigen::Index>(k)) = basis.cast<std::complex<double>>() * vecs.col(idx);
  }
  rep.max_eig_norm = std::abs(rep.eigenvalues.front());
  return rep;
}

inline SpectrumReport spectrum(const KoopmanControlModel& model) {
  return spectrum(model.A_reduced, model.basis);
}

/// [B, AB, ..., A^{r-1} B] by iterated multiplication.
inline Eigen::MatrixXd controllability_matrix(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B) {
  if (A.rows() != A.cols() || B.rows() != A.rows()) {
    throw validation_error("controllability_matrix: A must be r x r and B r x q");
  }
  const Eigen::Index r = A.rows(), q = B.cols();
  Eigen::MatrixXd K(r, r * q);
  if (r == 0) return K;
  K.leftCols(q) = B;
  for (Eigen::Index k = 1; k < r; ++k) {
    K.middleCols(k * q, q) = A * K.middleCols((k - 1) * q, q);
  }
  return K;
}

namespace detail {

/// Krylov blocks whose magnitude would overflow are rescaled before the next
/// multiply. Once that happens the blocks differ by astronomically large
/// factors, so every block is then brought to unit peak magnitude. Positive
/// column scaling leaves the exact rank unchanged. Pairs that never approach
/// the ceiling get the plain Kalman matrix.
inline Eigen::MatrixXd guarded_krylov(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                                      std::size_t& rescaled) {
  constexpr double ceiling = 1e100;
  const Eigen::Index r = A.rows(), q = B.cols();
  Eigen::MatrixXd K(r, r * q);
  rescaled = 0;
  if (r == 0 || q == 0) return K;
  K.leftCols(q) = B;
  bool overflowing = false;
  for (Eigen::Index k = 1; k < r; ++k) {
    Eigen::MatrixXd block = A * K.middleCols((k - 1) * q, q);
    const double peak = block.cwiseAbs().maxCoeff();
    if (peak > ceiling && std::isfinite(peak)) {
      block /= peak;
      overflowing = true;
    }
    K.middleCols(k * q, q) = block;
  }
  if (!K.allFinite()) {
    throw numerical_error("controllability matrix overflowed");
  }
  if (overflowing) {
    for (Eigen::Index k = 0; k < r; ++k) {
      auto block = K.middleCols(k * q, q);
      const double peak = block.cwiseAbs().maxCoeff();
      if (peak > 0.0 && peak != 1.0) {
        block /= peak;
        ++rescaled;
      }
    }
  }
  return K;
}

} // namespace detail

/// Numerical Kalman rank of (A, B) divided by r = A.rows().
inline ControllabilityReport normalized_ctrb_rank(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                                                  double rel_tol = default_ctrb_rel_tol) {
  if (!(rel_tol > 0.0)) {
    throw validation_error("normalized_ctrb_rank: rel_tol must be > 0");
  }
  if (A.rows() != A.cols() || B.rows() != A.rows() || A.rows() == 0) {
    throw validation_error("normalized_ctrb_rank: A must be r x r (r >= 1) and B r x q");
  }
  ControllabilityReport rep;
  rep.rel_tol = rel_tol;
  const Eigen::MatrixXd K = detail::guarded_krylov(A, B, rep.rescaled_blocks);
  if (K.cols() > 0) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(K);
    const Eigen::VectorXd& sv = svd.singularValues();
    rep.singular_values.assign(sv.data(), sv.data() + sv.size());
  }
  const double sigma1 = rep.singular_values.empty() ? 0.0 : rep.singular_values.front();
  rep.tolerance_used = sigma1 > 0.0 ? rel_tol * sigma1 : rel_tol;
  rep.rank = sigma1 > 0.0 ? static_cast<std::size_t>(std::count_if(
                                rep.singular_values.begin(), rep.singular_values.end(),
                                [&](double s) { return s > rep.tolerance_used; }))
                          : 0;
  rep.normalized_rank = static_cast<double>(rep.rank) / static_cast<double>(A.rows());
  return rep;
}

inline ControllabilityReport normalized_ctrb_rank(const KoopmanControlModel& model,
                                                  double rel_tol = default_ctrb_rel_tol) {
  return normalized_ctrb_rank(model.A_reduced, model.B_reduced, rel_tol);
}

} // namespace koopctl
