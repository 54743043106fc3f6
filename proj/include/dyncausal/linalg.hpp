#pragma once

#include <optional>

#include <Eigen/Dense>

namespace dyncausal {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline void symmetrize(Matrix& a) { a = 0.5 * (a + a.transpose()).eval(); }

/// Symmetric and min eigenvalue >= -1e-10 * trace (absolute floor for
/// all-zero matrices).
bool is_symmetric_psd(const Matrix& a, double rel_tol = 1e-10);

/// Cholesky of a symmetric positive-definite matrix. On failure retries
/// once with 1e-9 * mean(diag) added to the diagonal; returns nullopt if
/// that also fails.
std::optional<Eigen::LLT<Matrix>> robust_cholesky(const Matrix& a);

/// Factor L with L L' = a for symmetric PSD a, including singular a
/// (falls back to a clamped eigen-decomposition).
Matrix covariance_factor(const Matrix& a);

/// log-determinant from a Cholesky factorization.
double log_det(const Eigen::LLT<Matrix>& llt);

}  // namespace dyncausal
