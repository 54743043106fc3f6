#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "dyncausal/panel.hpp"
#include "dyncausal/state_space.hpp"

namespace dyncausal {

enum class Estimand { SATE, ATE, CATE, MCATE, MCATEDiff, Custom };
enum class Period { PrePeriod, Past, Future };
/// How the point estimate of a sampled estimand is formed.
/// SampleMean averages the effect draws; Analytic plugs in the predictive
/// means (for SATE: imputed outcome = F~ s_t).
enum class PointRule { SampleMean, Analytic };

std::string to_string(Estimand e);
std::string to_string(Period p);
Estimand parse_estimand(std::string_view text);

/// Effect of one time point computed from the imputed counterfactual row,
/// the observed (or sampled factual) row and the treatment row. Units with
/// NaN observed outcomes are already removed.
using CustomFunctional = std::function<double(const Vector& imputed, const Vector& observed, const Vector& treatment)>;

struct EffectRequest {
    Estimand estimand = Estimand::SATE;
    std::size_t B = 1000;
    double level = 0.95;
    std::size_t horizon = 0;  // future steps
    std::uint64_t seed = 0;
    PointRule point_rule = PointRule::SampleMean;
    double cate_x_pre = 0.0;    // CATE covariates
    std::size_t cate_group = 0; // CATE g level (0 = baseline)
    std::size_t group = 1;      // MCATE level; MCATE_diff compares this level with level 0
    CustomFunctional custom;

    bool is_sample_estimand() const { return estimand == Estimand::SATE || estimand == Estimand::Custom; }
    /// Label used in outputs, e.g. "MCATE[g=1]".
    std::string label() const;
    void validate() const;
};

struct EffectPoint {
    double time = 0.0;
    double point = 0.0;
    double lower = 0.0;
    double upper = 0.0;
    Period period = Period::Past;
    std::size_t n_units = 0;  // units entering a sample estimand
};

struct EffectSeries {
    std::string estimand;
    std::string method;
    std::size_t B = 0;
    double level = 0.0;
    std::uint64_t seed = 0;
    std::vector<EffectPoint> points;
    std::vector<std::string> notes;  // skipped time points, exclusions, floors

    std::size_t size() const { return points.size(); }
    /// Points of one period, in time order.
    std::vector<EffectPoint> of_period(Period p) const;
    /// Appends the points and notes of `other` (same estimand).
    void append(const EffectSeries& other);
};

struct Summary {
    double point = 0.0;
    double lower = 0.0;
    double upper = 0.0;
};

/// Linear-interpolation percentile (sample quantile type 7) of sorted data.
double percentile_sorted(std::span<const double> sorted, double p);

/// point = mean; (lower, upper) = equal-tailed percentiles at level.
Summary summarize_samples(std::span<const double> samples, double level);

/// Stream seed for the draws at one time point.
std::uint64_t effect_stream_seed(std::uint64_t seed, Period period, std::size_t index);

/// Weights over the full state vector such that weights' theta_t is the
/// population estimand (ATE, CATE, MCATE, MCATE_diff). Rejects estimands
/// referencing terms the layout lacks and empty groups.
Vector effect_functional(const PanelDataset& data, const DesignLayout& layout, const EffectRequest& request);

/// Algorithm 2: sample effects for observed periods from the smoothing
/// distribution and counterfactual designs.
EffectSeries sample_effects(const StateSpaceModel& model, const SmootherResult& smoothed,
                            std::span<const Matrix> cf_designs, const Matrix& observations, const Matrix& treatment,
                            std::span<const double> times, const EffectRequest& request);

/// Algorithm 3: future sample effects. Factual and counterfactual outcomes
/// are both drawn from their forecast predictives.
EffectSeries future_sample_effects(const StateSpaceModel& model, const Vector& last_mean, const Matrix& last_cov,
                                   std::span<const Matrix> designs, std::span<const Matrix> cf_designs,
                                   const Matrix& future_treatment, std::span<const double> times,
                                   const EffectRequest& request);

/// Algorithm 4 (and the heterogeneous version): population effects as the
/// linear functional `weights` of the state, sampled from N(mean_t, cov_t).
/// The point estimate is weights' mean_t.
EffectSeries population_effects(std::span<const Vector> means, std::span<const Matrix> covs, const Vector& weights,
                                std::span<const double> times, Period period, const EffectRequest& request);

EffectSeries population_effects(const SmootherResult& smoothed, const PanelDataset& data, const DesignLayout& layout,
                                const EffectRequest& request);

/// CATE / MCATE / MCATE_diff; same machinery as population_effects.
EffectSeries heterogeneous_effects(const SmootherResult& smoothed, const PanelDataset& data,
                                   const DesignLayout& layout, const EffectRequest& request);

/// Algorithm 5: population effects over forecast states.
EffectSeries future_population_effects(const StateSpaceModel& model, const Vector& last_mean, const Matrix& last_cov,
                                       const PanelDataset& data, const DesignLayout& layout,
                                       std::span<const double> times, const EffectRequest& request);

/// Oracle mode: SATE from externally supplied imputations, one row per
/// time point. tau_t = mean_i (imputed - observed)(T~ - T), skipping units
/// with a missing observed or imputed value. Interval bounds equal the point.
EffectSeries effects_from_imputations(const Matrix& observed, const Matrix& imputed, const Matrix& treatment,
                                      std::span<const double> times);

}  // namespace dyncausal
