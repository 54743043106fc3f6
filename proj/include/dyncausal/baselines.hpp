#pragma once

#include <cstdint>
#include <optional>

#include "dyncausal/effects.hpp"
#include "dyncausal/mle.hpp"
#include "dyncausal/panel.hpp"

namespace dyncausal {

/// Per-time-point conjugate regression imputation under flat priors on
/// beta_t and log sigma_t^2. The estimand, B, level, seed and point rule
/// come from the request; sample estimands impute outcomes, population
/// estimands are evaluated on the coefficient draws.
EffectSeries bayesian_imputation(const PanelDataset& data, const ModelFormula& formula, const EffectRequest& request);

struct CausalImpactConfig {
    std::size_t pre_period = 0;  // 0: leading rows where no unit is treated
    bool regression = true;      // include beta * Z_t
    bool trend = false;          // add the slope state (local linear trend)
    /// Inverse-gamma prior on the level variance centred on
    /// (level_prior_sd * sd(pre-period response))^2 with level_prior_weight
    /// pseudo-observations; the fit becomes a posterior mode. 0 disables it.
    double level_prior_sd = 0.01;
    double level_prior_weight = 32.0;
    std::size_t B = 1000;
    double level = 0.95;
    std::uint64_t seed = 0;
    PointRule point_rule = PointRule::SampleMean;
    MleOptions mle;
    /// Parameters (sigma2, w_level[, w_trend]) to use instead of fitting.
    std::optional<std::vector<double>> fixed_parameters;

    void validate() const;
};

struct CausalImpactResult {
    EffectSeries effects;       // PrePeriod points (one-step predictions) then Past points
    std::vector<double> natural;  // sigma2, w_level[, w_trend]
    double loglik = 0.0;        // pre-period log-likelihood at the estimate
    std::vector<double> response;  // aggregate treated series
    std::vector<double> control;   // aggregate control series
};

/// Aggregates treated units into their cross-sectional mean X_t and control
/// units into Z_t, fits X_t = mu_t + beta Z_t + v_t with a local level
/// (plus slope if `trend`) by MLE on the pre-period and predicts the counterfactual over the
/// treatment period. Effects are per treated unit (aggregate mean).
CausalImpactResult causal_impact_aggregate(const PanelDataset& data, const CausalImpactConfig& config);

}  // namespace dyncausal
