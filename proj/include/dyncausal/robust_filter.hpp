#pragma once

#include <vector>

#include "dyncausal/state_space.hpp"

namespace dyncausal {

enum class RobustLoss { Huber, Squared };

struct RobustConfig {
    RobustLoss loss = RobustLoss::Huber;
    double k = 1.345;
    std::size_t max_irls_iters = 50;
    double irls_tol = 1e-10;  // relative change of the robust objective
    /// C_t from the final IRLS-weighted information matrix (default) or the
    /// standard Kalman covariance.
    bool robust_covariance = true;

    void validate() const;
};

struct RobustFilterResult {
    FilterResult filtered;
    std::vector<bool> not_converged;   // IRLS hit max_irls_iters at t
    std::vector<bool> monotone;        // robust objective never increased across iterations at t
    std::vector<std::size_t> iterations;
    std::vector<std::size_t> downweighted;  // whitened residuals outside the quadratic zone at the solution
};

/// Per step, solves the whitened stacked regression
///   [I; F_t] theta_t = [a_t; x_t] + e_t,   cov(e_t) = blockdiag(R_t, V)
/// under the robust loss by iteratively reweighted least squares, starting
/// from the Kalman update. R_t is propagated from the robust C_{t-1}.
RobustFilterResult robust_filter(const StateSpaceModel& model, const Matrix& observations,
                                 const RobustConfig& config = {});

/// Huber objective sum_j rho_k(r_j).
double huber_objective(const Vector& residuals, double k);

}  // namespace dyncausal
