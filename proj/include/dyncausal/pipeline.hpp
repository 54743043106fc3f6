#pragma once

#include <optional>

#include "dyncausal/effects.hpp"
#include "dyncausal/kalman.hpp"
#include "dyncausal/mle.hpp"
#include "dyncausal/panel.hpp"
#include "dyncausal/robust_filter.hpp"

namespace dyncausal {

struct CausalTransferOptions {
    ParameterDefaults defaults;
    bool estimate_parameters = true;
    MleOptions mle;
    /// Natural-scale parameters used when estimate_parameters is false
    /// (defaults to the spec's initial values).
    std::optional<std::vector<double>> fixed_parameters;
    bool robust = false;
    RobustConfig robust_config;
};

/// A panel model with parameters set, filtered and smoothed.
struct FittedPanel {
    PanelDataset data;
    PanelModel pm;
    std::optional<FitResult> fit;
    FilterResult filtered;
    SmootherResult smoothed;
};

FittedPanel fit_causal_transfer(const PanelDataset& data, const ModelFormula& formula,
                                const CausalTransferOptions& options = {});

/// Past effects over the observed panel, then request.horizon future
/// effects when horizon > 0. `future` supplies covariates for the forecast
/// steps; without it the horizon reuses the last observed treatment row and
/// is rejected for formulas with z.
EffectSeries estimate_effects(const FittedPanel& fitted, const EffectRequest& request,
                              const FutureCovariates* future = nullptr);

}  // namespace dyncausal
