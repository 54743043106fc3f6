#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dyncausal/state_space.hpp"

namespace dyncausal {

enum class ParameterRole { ObsVariance, StateVariance, ArCoefficient, Offset };
enum class ParameterTransform { Log, Identity, None };

struct FreeParameter {
    std::string name;
    ParameterRole role = ParameterRole::StateVariance;
    ParameterTransform transform = ParameterTransform::Log;
    double initial = 1.0;  // natural scale
    std::optional<double> lower;  // natural scale
    std::optional<double> upper;
};

/// Free parameters plus a builder from their natural-scale values to a
/// concrete model. The optimizer works on the transformed ("working")
/// scale: log for variances, identity otherwise.
struct ParameterSpec {
    std::vector<FreeParameter> params;
    std::function<StateSpaceModel(std::span<const double> natural)> build;
    /// Optional log prior density on the natural scale. When set, fit_mle
    /// maximizes loglik + log_prior and FitResult::loglik holds that sum.
    std::function<double(std::span<const double> natural)> log_prior;

    std::size_t size() const { return params.size(); }
    std::vector<double> to_natural(std::span<const double> working) const;
    std::vector<double> to_working(std::span<const double> natural) const;
    std::vector<double> initial_working() const;
    bool in_bounds(std::span<const double> natural) const;
};

struct StartResult {
    std::vector<double> initial;  // working scale
    std::vector<double> final;    // working scale
    double initial_loglik = 0.0;
    double final_loglik = 0.0;
    bool converged = false;
    bool failed = false;
    std::size_t evaluations = 0;
    std::string error;
};

struct FitResult {
    std::vector<double> psi_hat;  // working scale
    std::vector<double> natural;  // psi_hat on the natural scale
    double loglik = 0.0;
    std::vector<StartResult> starts;
    std::size_t best_start_index = 0;
};

struct MleOptions {
    std::size_t n_starts = 5;
    std::uint64_t seed = 0;
    double rel_tol = 1e-8;
    std::size_t max_evals = 2000;
};

/// Multi-start Nelder-Mead maximum likelihood.
FitResult fit_mle(const ParameterSpec& spec, const Matrix& observations, const MleOptions& options = {});

struct NelderMeadResult {
    std::vector<double> x;
    double value = 0.0;
    std::size_t evaluations = 0;
    bool converged = false;
};

/// Minimizes `objective` from `start` with per-coordinate initial steps.
/// Non-finite objective values are treated as +inf.
NelderMeadResult nelder_mead(const std::function<double(std::span<const double>)>& objective,
                             std::vector<double> start, std::span<const double> steps, double rel_tol,
                             std::size_t max_evals);

struct ProbeRow {
    std::vector<double> natural;
    double loglik = 0.0;
    bool skipped = false;
    std::string error;
};

struct ProfileCheck {
    bool ok = true;
    double reference_loglik = 0.0;
    std::vector<ProbeRow> probes;
    std::optional<std::size_t> offending_probe;
};

/// Evaluates the likelihood at n_probe random +-50% natural-scale
/// perturbations of psi_hat (working scale) and flags any that beat it by
/// more than 1e-4.
ProfileCheck profile_check(const ParameterSpec& spec, const Matrix& observations, std::span<const double> psi_hat,
                           std::size_t n_probe, std::uint64_t seed = 0);

}  // namespace dyncausal
