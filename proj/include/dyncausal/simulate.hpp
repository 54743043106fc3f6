#pragma once

#include <cstdint>
#include <vector>

#include "dyncausal/panel.hpp"

namespace dyncausal {

struct SimConfig {
    int model_id = 1;            // 1..6
    std::size_t d = 20;
    std::size_t n = 300;         // treatment-period length
    int assignment = 1;          // 1..3
    std::size_t horizon = 100;   // future points with both potential outcomes
    std::size_t pre_period = 0;  // untreated points before onset (for aggregate baselines)
    std::uint64_t seed = 0;
    double noise_scale = 1.0;    // multiplies every noise standard deviation

    void validate() const;
};

/// Ground truth for one simulated panel. Rows cover pre-period, treatment
/// period and horizon, in time order (`times`). Effect truths cover the
/// treatment period and horizon only (rows pre_period..).
struct TruthTrace {
    std::vector<double> times;  // all rows
    std::size_t pre_period = 0;
    std::size_t n = 0;
    std::size_t horizon = 0;
    Matrix x0;  // rows x d potential outcomes under control
    Matrix x1;  // rows x d potential outcomes under treatment
    // Indexed by effect time (0 = first treatment-period point).
    std::vector<double> effect_times;
    std::vector<double> sate;
    std::vector<double> ate;
    std::vector<double> cate;         // at the new unit below
    std::vector<double> mcate_g0;
    std::vector<double> mcate_g1;
    std::vector<double> mcate_diff;   // g=1 minus g=0
    double new_unit_x_pre = 0.0;      // CATE covariate, g = 0
    Matrix beta_states;               // rows x 3 observational states (models 1, 2, 3, 5, 6)
    Matrix mu_states;                 // effect-time x q treatment states of shared-effect models
    FutureCovariates future;          // covariates for the horizon

    /// Truth series for an estimand label ("SATE", "ATE", "CATE", "MCATE[g=0]", ...).
    const std::vector<double>& series(const std::string& label) const;
};

struct SimulatedPanel {
    PanelDataset data;  // pre-period plus treatment period (horizon excluded)
    TruthTrace truth;
};

/// Treated indicator per unit (1 treated, 0 control) for the configured
/// assignment. Units 0..d/2-1 have g = 0, the rest g = 1.
Vector assign(const SimConfig& config);

SimulatedPanel generate(const SimConfig& config);

/// Rows [start, start+count) of a panel.
PanelDataset slice_rows(const PanelDataset& data, std::size_t start, std::size_t count);

/// Formula the benchmark fits for a simulation model.
ModelFormula benchmark_formula(int model_id);

}  // namespace dyncausal
