#pragma once

#include <span>

#include "dyncausal/state_space.hpp"

namespace dyncausal {

struct FilterOptions {
    bool store_gain = false;
};

/// Kalman filter over the rows of `observations` (n x d, NaN = missing).
/// Missing entries drop the corresponding rows of F_t and V; a fully
/// missing row leaves m_t = a_t, C_t = R_t.
FilterResult filter(const StateSpaceModel& model, const Matrix& observations,
                    const FilterOptions& options = {});

/// Rauch-Tung-Striebel backward pass seeded at (m_n, C_n).
SmootherResult smooth(const StateSpaceModel& model, const FilterResult& filtered);

/// Gaussian log-likelihood including the -(k/2) log(2 pi) constant, where
/// k is the number of observed entries. Sums the same per-step terms as
/// `filter` in the same order.
double log_likelihood(const StateSpaceModel& model, const Matrix& observations);

struct ForecastInputs {
    std::span<const Matrix> designs;         // F_t for each future step
    std::span<const Matrix> cf_designs;      // optional F~_t, same length
    std::span<const Matrix> transitions;     // optional; defaults to the model's constant G
};

/// Propagates (m_n, C_n) forward without correction.
std::vector<ForecastStep> forecast(const StateSpaceModel& model, const Vector& last_mean,
                                   const Matrix& last_cov, std::size_t horizon,
                                   const ForecastInputs& inputs);

}  // namespace dyncausal
