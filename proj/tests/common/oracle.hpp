#pragma once

// Brute-force references for the state-space recursions: the states and
// the observed entries are written as one affine map of independent
// Gaussian inputs (initial state, process noise, observation noise), and
// every filtered, smoothed or likelihood quantity comes from conditioning
// that joint normal directly.

#include <cstdint>
#include <vector>

#include "dyncausal/random.hpp"
#include "dyncausal/state_space.hpp"

namespace oracle {

using dyncausal::Matrix;
using dyncausal::Vector;

struct JointResult {
    std::vector<Vector> filtered_mean;
    std::vector<Matrix> filtered_cov;
    std::vector<Vector> smoothed_mean;
    std::vector<Matrix> smoothed_cov;
    double loglik = 0.0;
};

JointResult condition(const dyncausal::StateSpaceModel& model, const Matrix& observations);

struct Instance {
    dyncausal::StateSpaceModel model;
    Matrix observations;
};

/// Random model with n <= max_n, m <= max_m, d <= max_d; time-varying
/// designs and transitions, occasionally rank-deficient W, some missing
/// entries and optional observation weights. Observations are drawn from
/// the model itself.
Instance random_instance(dyncausal::Rng& rng, std::size_t max_n = 5, std::size_t max_m = 3, std::size_t max_d = 3);

/// ||a - b|| / max(||b||, 1)
double rel_err(const Matrix& a, const Matrix& b);

}  // namespace oracle
