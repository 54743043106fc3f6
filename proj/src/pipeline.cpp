#include "dyncausal/pipeline.hpp"

#include "dyncausal/error.hpp"

namespace dyncausal {

FittedPanel fit_causal_transfer(const PanelDataset& data, const ModelFormula& formula,
                                const CausalTransferOptions& options) {
    FittedPanel out;
    out.data = data;
    out.pm = assemble_model(data, formula, options.defaults);
    if (options.estimate_parameters) {
        out.fit = fit_mle(out.pm.spec, data.outcome, options.mle);
        out.pm.set_parameters(out.fit->natural);
    } else if (options.fixed_parameters) {
        if (options.fixed_parameters->size() != out.pm.spec.size())
            throw InputError("expected " + std::to_string(out.pm.spec.size()) + " fixed parameters");
        out.pm.set_parameters(*options.fixed_parameters);
    }
    if (options.robust)
        out.filtered = robust_filter(out.pm.model, data.outcome, options.robust_config).filtered;
    else
        out.filtered = filter(out.pm.model, data.outcome);
    out.smoothed = smooth(out.pm.model, out.filtered);
    return out;
}

EffectSeries estimate_effects(const FittedPanel& fitted, const EffectRequest& request, const FutureCovariates* future) {
    request.validate();
    const auto& data = fitted.data;
    const auto& pm = fitted.pm;
    EffectSeries series;
    if (request.is_sample_estimand()) {
        if (!pm.cf_designs) throw InputError("sample estimands need a binary treatment");
        series = sample_effects(pm.model, fitted.smoothed, *pm.cf_designs, data.outcome, data.treatment, data.times, request);
    } else {
        series = population_effects(fitted.smoothed, data, pm.layout, request);
    }
    if (request.horizon == 0) return series;

    FutureCovariates fut;
    if (future) {
        fut = *future;
        if (fut.horizon() < request.horizon) throw InputError("future covariates cover fewer steps than the horizon");
    } else {
        if (pm.formula.z) throw InputError("forecasting a formula with z needs future covariate values");
        const double last = data.times.back();
        const double step = data.n() > 1 ? data.times.back() - data.times[data.n() - 2] : 1.0;
        for (std::size_t s = 1; s <= request.horizon; ++s) fut.times.push_back(last + step * static_cast<double>(s));
    }
    fut.times.resize(request.horizon);
    for (auto& z : fut.z) z.conservativeResize(static_cast<Eigen::Index>(request.horizon), Eigen::NoChange);
    if (fut.treatment.size() != 0) fut.treatment.conservativeResize(static_cast<Eigen::Index>(request.horizon), Eigen::NoChange);

    const std::size_t n = data.n();
    const Vector& last_mean = fitted.filtered.filtered_mean[n - 1];
    const Matrix& last_cov = fitted.filtered.filtered_cov[n - 1];
    EffectSeries ahead;
    if (request.is_sample_estimand()) {
        const FutureDesigns fd = build_future_designs(data, pm, fut);
        Matrix tr = fut.treatment;
        if (tr.size() == 0) tr = data.treatment.row(static_cast<Eigen::Index>(n - 1)).replicate(static_cast<Eigen::Index>(request.horizon), 1);
        ahead = future_sample_effects(pm.model, last_mean, last_cov, fd.designs, fd.cf_designs, tr, fut.times, request);
    } else {
        ahead = future_population_effects(pm.model, last_mean, last_cov, data, pm.layout, fut.times, request);
    }
    series.append(ahead);
    return series;
}

}  // namespace dyncausal
