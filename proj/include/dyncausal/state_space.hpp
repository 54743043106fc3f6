#pragma once

#include <cstddef>
#include <memory>
#include <vector>

#include "dyncausal/linalg.hpp"

namespace dyncausal {

using MatrixSequence = std::vector<Matrix>;
using SharedMatrices = std::shared_ptr<const MatrixSequence>;

/// Linear-Gaussian state-space model
///
///   x_t     = F_t theta_t + v_t,              v_t ~ N(0, V)
///   theta_t = G_t theta_{t-1} + offset + w_t, w_t ~ N(0, W)
///   theta_0 ~ N(m0, C0)
///
/// Designs and transitions hold either one matrix (constant over time) or
/// one matrix per time point. Designs are shared so that parameter
/// builders can rebuild V, W, G cheaply without copying n design matrices.
struct StateSpaceModel {
    SharedMatrices designs;
    MatrixSequence transitions;
    Vector state_offset;  // empty means zero
    Matrix obs_cov;
    Matrix state_cov;
    Vector prior_mean;
    Matrix prior_cov;
    Vector obs_weights;  // empty, or one positive weight per observation row

    std::size_t obs_dim() const { return static_cast<std::size_t>(obs_cov.rows()); }
    std::size_t state_dim() const { return static_cast<std::size_t>(state_cov.rows()); }

    /// Number of time points the designs cover (1 for a constant design).
    std::size_t design_count() const { return designs ? designs->size() : 0; }

    const Matrix& design(std::size_t t) const;
    const Matrix& transition(std::size_t t) const;

    /// V with the weights applied: W^{-1/2} V W^{-1/2}.
    Matrix effective_obs_cov() const;

    /// Throws InputError unless all dimensions agree and the covariance
    /// inputs are symmetric PSD. `n` is the number of time points that will
    /// be processed.
    void validate(std::size_t n) const;
};

/// Diffuse prior default: m0 = 0, C0 = kappa I.
inline constexpr double kDiffusePriorScale = 1e7;

StateSpaceModel make_model(Matrix design, Matrix transition, Matrix obs_cov, Matrix state_cov,
                           Vector prior_mean, Matrix prior_cov);

SharedMatrices share(MatrixSequence matrices);

struct FilterResult {
    std::vector<Vector> predicted_mean;  // a_t
    std::vector<Matrix> predicted_cov;   // R_t
    std::vector<Vector> forecast_mean;   // f_t
    std::vector<Matrix> forecast_cov;    // Q_t (full d x d, including missing rows)
    std::vector<Vector> filtered_mean;   // m_t
    std::vector<Matrix> filtered_cov;    // C_t
    std::vector<Vector> forecast_error;  // e_t, NaN where x_t is missing
    std::vector<Matrix> gain;            // K_t (m x d, zero columns for missing), optional
    std::vector<double> loglik_terms;    // per-step predictive log density
    double loglik = 0.0;

    std::size_t size() const { return filtered_mean.size(); }
};

struct SmootherResult {
    std::vector<Vector> mean;  // s_t
    std::vector<Matrix> cov;   // S_t

    std::size_t size() const { return mean.size(); }
};

struct ForecastStep {
    Vector state_mean;  // m_t
    Matrix state_cov;   // C_t
    Vector obs_mean;    // f_t
    Matrix obs_cov;     // Q_t
    Vector cf_obs_mean; // f~_t (empty without counterfactual designs)
    Matrix cf_obs_cov;  // Q~_t
};

}  // namespace dyncausal
