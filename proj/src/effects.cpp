#include "dyncausal/effects.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "dyncausal/error.hpp"
#include "dyncausal/kalman.hpp"
#include "dyncausal/random.hpp"

namespace dyncausal {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

EffectSeries make_series(const EffectRequest& request, std::string method = "causal-transfer") {
    EffectSeries s;
    s.estimand = request.label();
    s.method = std::move(method);
    s.B = request.B;
    s.level = request.level;
    s.seed = request.seed;
    return s;
}

/// Sign of the counterfactual flip, T~ - T, for binary treatments.
Vector flip_sign(const Vector& treatment) { return (flip_treatment(treatment) - treatment); }

EffectPoint summarize_point(double time, Period period, std::vector<double>& draws, double level,
                            std::optional<double> analytic) {
    const Summary s = summarize_samples(draws, level);
    EffectPoint p;
    p.time = time;
    p.period = period;
    p.point = analytic.value_or(s.point);
    p.lower = s.lower;
    p.upper = s.upper;
    return p;
}

double sate_statistic(const CustomFunctional& custom, const Vector& imputed, const Vector& observed,
                      const Vector& treatment, const Vector& sign) {
    if (custom) return custom(imputed, observed, treatment);
    return (imputed - observed).dot(sign) / static_cast<double>(sign.size());
}

Vector pick(const Vector& v, const std::vector<Eigen::Index>& idx) {
    Vector out(static_cast<Eigen::Index>(idx.size()));
    for (std::size_t j = 0; j < idx.size(); ++j) out[static_cast<Eigen::Index>(j)] = v[idx[j]];
    return out;
}

Matrix pick(const Matrix& a, const std::vector<Eigen::Index>& idx) {
    const auto k = static_cast<Eigen::Index>(idx.size());
    Matrix out(k, k);
    for (Eigen::Index i = 0; i < k; ++i)
        for (Eigen::Index j = 0; j < k; ++j) out(i, j) = a(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
    return out;
}

}  // namespace

std::string to_string(Estimand e) {
    switch (e) {
        case Estimand::SATE: return "SATE";
        case Estimand::ATE: return "ATE";
        case Estimand::CATE: return "CATE";
        case Estimand::MCATE: return "MCATE";
        case Estimand::MCATEDiff: return "MCATE_diff";
        case Estimand::Custom: return "custom";
    }
    return "?";
}

std::string to_string(Period p) {
    switch (p) {
        case Period::PrePeriod: return "pre";
        case Period::Past: return "past";
        case Period::Future: return "future";
    }
    return "?";
}

Estimand parse_estimand(std::string_view text) {
    std::string s(text);
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
    if (s == "SATE") return Estimand::SATE;
    if (s == "ATE") return Estimand::ATE;
    if (s == "CATE") return Estimand::CATE;
    if (s == "MCATE") return Estimand::MCATE;
    if (s == "MCATE_DIFF" || s == "MCATEDIFF" || s == "DELTA_G") return Estimand::MCATEDiff;
    throw InputError("unknown estimand '" + std::string(text) + "'");
}

std::string EffectRequest::label() const {
    switch (estimand) {
        case Estimand::CATE: {
            std::string out = "CATE[x_pre=" + std::to_string(cate_x_pre);
            if (cate_group != 0) out += ",g=" + std::to_string(cate_group);
            return out + "]";
        }
        case Estimand::MCATE: return "MCATE[g=" + std::to_string(group) + "]";
        case Estimand::MCATEDiff: return "MCATE_diff[g=" + std::to_string(group) + "-g=0]";
        default: return to_string(estimand);
    }
}

void EffectRequest::validate() const {
    if (B < 1) throw InputError("B must be at least 1");
    if (!(level > 0.0 && level < 1.0)) throw InputError("interval level must lie in (0, 1)");
    if (estimand == Estimand::Custom && !custom) throw InputError("custom estimand needs a functional");
    if (estimand == Estimand::MCATEDiff && group == 0) throw InputError("MCATE_diff needs a non-baseline group");
    if (estimand == Estimand::CATE && !std::isfinite(cate_x_pre)) throw InputError("CATE needs a finite x_pre");
}

std::vector<EffectPoint> EffectSeries::of_period(Period p) const {
    std::vector<EffectPoint> out;
    for (const auto& pt : points)
        if (pt.period == p) out.push_back(pt);
    return out;
}

void EffectSeries::append(const EffectSeries& other) {
    points.insert(points.end(), other.points.begin(), other.points.end());
    notes.insert(notes.end(), other.notes.begin(), other.notes.end());
}

double percentile_sorted(std::span<const double> sorted, double p) {
    if (sorted.empty()) return kNaN;
    const double h = (static_cast<double>(sorted.size()) - 1.0) * std::clamp(p, 0.0, 1.0);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

Summary summarize_samples(std::span<const double> samples, double level) {
    if (samples.empty()) throw InputError("cannot summarize zero samples");
    std::vector<double> sorted(samples.begin(), samples.end());
    std::sort(sorted.begin(), sorted.end());
    const double alpha = (1.0 - level) / 2.0;
    Summary s;
    s.point = std::accumulate(samples.begin(), samples.end(), 0.0) / static_cast<double>(samples.size());
    s.lower = percentile_sorted(sorted, alpha);
    s.upper = percentile_sorted(sorted, 1.0 - alpha);
    return s;
}

std::uint64_t effect_stream_seed(std::uint64_t seed, Period period, std::size_t index) {
    return derive_seed({seed, tag(StreamRole::EffectSampling), static_cast<std::uint64_t>(period), index});
}

Vector effect_functional(const PanelDataset& data, const DesignLayout& layout, const EffectRequest& request) {
    const auto m = static_cast<Eigen::Index>(layout.state_dim());
    const auto off = static_cast<Eigen::Index>(layout.n_observational);
    if (layout.n_treatment() == 0) throw InputError("the formula has no treatment terms");
    const std::size_t k = data.g_columns();
    auto g_dummies = [&](std::size_t level) {
        Vector g = Vector::Zero(static_cast<Eigen::Index>(k));
        if (level > k) throw InputError("g level " + std::to_string(level) + " does not exist");
        if (level > 0) g[static_cast<Eigen::Index>(level - 1)] = 1.0;
        return g;
    };
    auto uses = [&](Term term) {
        return std::any_of(layout.columns.begin(), layout.columns.end(), [&](const auto& c) { return c.term == term; });
    };
    auto unit_weights = [&](std::size_t i) {
        const double x = data.has_x_pre() ? data.x_pre[static_cast<Eigen::Index>(i)] : 0.0;
        const Vector g = data.has_g() ? Vector(data.g.row(static_cast<Eigen::Index>(i)).transpose()) : Vector();
        return layout.treatment_weights(x, g);
    };
    auto group_mean = [&](std::size_t level) {
        Vector acc = Vector::Zero(static_cast<Eigen::Index>(layout.n_treatment()));
        std::size_t count = 0;
        for (std::size_t i = 0; i < data.d(); ++i)
            if (group_of(data, i) == level) {
                acc += unit_weights(i);
                ++count;
            }
        if (count == 0) {
            const std::string name = level < data.g_levels.size() ? data.g_levels[level] : std::to_string(level);
            throw InputError("group '" + name + "' has no units");
        }
        return Vector(acc / static_cast<double>(count));
    };

    Vector block;
    switch (request.estimand) {
        case Estimand::ATE: {
            block = Vector::Zero(static_cast<Eigen::Index>(layout.n_treatment()));
            for (std::size_t i = 0; i < data.d(); ++i) block += unit_weights(i);
            block /= static_cast<double>(data.d());
            break;
        }
        case Estimand::CATE:
            if (request.cate_x_pre != 0.0 && !uses(Term::TreatmentXPre) && !data.has_x_pre())
                throw InputError("CATE conditions on x_pre but the panel has none");
            if (request.cate_group != 0 && !data.has_g()) throw InputError("CATE conditions on g but the panel has none");
            block = layout.treatment_weights(request.cate_x_pre, g_dummies(request.cate_group));
            break;
        case Estimand::MCATE:
        case Estimand::MCATEDiff:
            if (!data.has_g()) throw InputError("MCATE needs a group factor g");
            if (request.estimand == Estimand::MCATE)
                block = group_mean(request.group);
            else
                block = group_mean(request.group) - group_mean(0);
            break;
        default:
            throw InputError("estimand " + to_string(request.estimand) + " is not a population estimand");
    }
    Vector w = Vector::Zero(m);
    w.segment(off, block.size()) = block;
    return w;
}

EffectSeries sample_effects(const StateSpaceModel& model, const SmootherResult& smoothed,
                            std::span<const Matrix> cf_designs, const Matrix& observations, const Matrix& treatment,
                            std::span<const double> times, const EffectRequest& request) {
    request.validate();
    if (!request.is_sample_estimand()) throw InputError("sample_effects needs a sample estimand (SATE or custom)");
    const std::size_t n = smoothed.size();
    if (cf_designs.size() < n) throw InputError("counterfactual designs are required for sample effects");
    if (static_cast<std::size_t>(observations.rows()) != n || static_cast<std::size_t>(treatment.rows()) != n ||
        times.size() != n)
        throw InputError("observations, treatment and times must cover the smoothed period");
    const Matrix v = model.effective_obs_cov();
    EffectSeries out = make_series(request);

    for (std::size_t t = 0; t < n; ++t) {
        const auto ti = static_cast<Eigen::Index>(t);
        const Vector x = observations.row(ti).transpose();
        const Vector tr = treatment.row(ti).transpose();
        std::vector<Eigen::Index> idx;
        for (Eigen::Index i = 0; i < x.size(); ++i)
            if (!std::isnan(x[i])) idx.push_back(i);
        if (idx.size() < static_cast<std::size_t>(x.size()))
            out.notes.push_back("t=" + std::to_string(times[t]) + ": " + std::to_string(x.size() - static_cast<Eigen::Index>(idx.size())) +
                                " unit(s) with missing outcome excluded");
        if (idx.empty()) {
            out.points.push_back({times[t], kNaN, kNaN, kNaN, Period::Past, 0});
            continue;
        }
        const Matrix& fc = cf_designs[t];
        const Vector f_full = fc * smoothed.mean[t];
        Matrix q_full = fc * smoothed.cov[t] * fc.transpose() + v;
        symmetrize(q_full);
        const Vector f = pick(f_full, idx);
        const Matrix l = covariance_factor(pick(q_full, idx));
        const Vector xo = pick(x, idx);
        const Vector tro = pick(tr, idx);
        const Vector sign = flip_sign(tro);

        Rng rng(effect_stream_seed(request.seed, Period::Past, t));
        std::vector<double> draws(request.B);
        for (std::size_t b = 0; b < request.B; ++b) {
            const Vector imputed = f + l * standard_normal_vector(f.size(), rng);
            draws[b] = sate_statistic(request.custom, imputed, xo, tro, sign);
        }
        std::optional<double> analytic;
        if (request.point_rule == PointRule::Analytic) analytic = sate_statistic(request.custom, f, xo, tro, sign);
        auto p = summarize_point(times[t], Period::Past, draws, request.level, analytic);
        p.n_units = idx.size();
        out.points.push_back(p);
    }
    return out;
}

EffectSeries future_sample_effects(const StateSpaceModel& model, const Vector& last_mean, const Matrix& last_cov,
                                   std::span<const Matrix> designs, std::span<const Matrix> cf_designs,
                                   const Matrix& future_treatment, std::span<const double> times,
                                   const EffectRequest& request) {
    request.validate();
    if (!request.is_sample_estimand()) throw InputError("future_sample_effects needs a sample estimand");
    const std::size_t h = times.size();
    if (h == 0) throw InputError("forecast horizon must be at least 1");
    if (cf_designs.size() < h) throw InputError("counterfactual designs are required for sample effects");
    if (static_cast<std::size_t>(future_treatment.rows()) < h) throw InputError("need a treatment row per future step");
    ForecastInputs inputs{designs, cf_designs, {}};
    const auto steps = forecast(model, last_mean, last_cov, h, inputs);
    EffectSeries out = make_series(request);
    for (std::size_t s = 0; s < h; ++s) {
        const auto& step = steps[s];
        const Vector tr = future_treatment.row(static_cast<Eigen::Index>(s)).transpose();
        const Vector sign = flip_sign(tr);
        const Matrix l = covariance_factor(step.obs_cov);
        const Matrix lc = covariance_factor(step.cf_obs_cov);
        Rng rng(effect_stream_seed(request.seed, Period::Future, s));
        std::vector<double> draws(request.B);
        for (std::size_t b = 0; b < request.B; ++b) {
            const Vector factual = step.obs_mean + l * standard_normal_vector(step.obs_mean.size(), rng);
            const Vector imputed = step.cf_obs_mean + lc * standard_normal_vector(step.cf_obs_mean.size(), rng);
            draws[b] = sate_statistic(request.custom, imputed, factual, tr, sign);
        }
        std::optional<double> analytic;
        if (request.point_rule == PointRule::Analytic)
            analytic = sate_statistic(request.custom, step.cf_obs_mean, step.obs_mean, tr, sign);
        auto p = summarize_point(times[s], Period::Future, draws, request.level, analytic);
        p.n_units = static_cast<std::size_t>(tr.size());
        out.points.push_back(p);
    }
    return out;
}

EffectSeries population_effects(std::span<const Vector> means, std::span<const Matrix> covs, const Vector& weights,
                                std::span<const double> times, Period period, const EffectRequest& request) {
    request.validate();
    if (means.size() != covs.size() || means.size() != times.size())
        throw InputError("state means, covariances and times must align");
    // Only states with a nonzero weight influence the functional; draw that
    // sub-vector of the state.
    std::vector<Eigen::Index> active;
    for (Eigen::Index j = 0; j < weights.size(); ++j)
        if (weights[j] != 0.0) active.push_back(j);
    const Vector w = pick(weights, active);

    EffectSeries out = make_series(request);
    for (std::size_t t = 0; t < means.size(); ++t) {
        if (means[t].size() != weights.size()) throw InputError("functional weights do not match the state dimension");
        const Vector mu = pick(means[t], active);
        const Matrix l = covariance_factor(pick(covs[t], active));
        Rng rng(effect_stream_seed(request.seed, period, t));
        std::vector<double> draws(request.B);
        for (std::size_t b = 0; b < request.B; ++b) draws[b] = w.dot(mu + l * standard_normal_vector(mu.size(), rng));
        auto p = summarize_point(times[t], period, draws, request.level, w.dot(mu));
        out.points.push_back(p);
    }
    return out;
}

EffectSeries population_effects(const SmootherResult& smoothed, const PanelDataset& data, const DesignLayout& layout,
                                const EffectRequest& request) {
    if (request.is_sample_estimand()) throw InputError("population_effects needs a population estimand");
    if (data.n() != smoothed.size()) throw InputError("smoother and panel cover different periods");
    const Vector w = effect_functional(data, layout, request);
    return population_effects(smoothed.mean, smoothed.cov, w, data.times, Period::Past, request);
}

EffectSeries heterogeneous_effects(const SmootherResult& smoothed, const PanelDataset& data,
                                   const DesignLayout& layout, const EffectRequest& request) {
    if (request.estimand != Estimand::CATE && request.estimand != Estimand::MCATE &&
        request.estimand != Estimand::MCATEDiff)
        throw InputError("heterogeneous_effects needs CATE, MCATE or MCATE_diff");
    return population_effects(smoothed, data, layout, request);
}

EffectSeries future_population_effects(const StateSpaceModel& model, const Vector& last_mean, const Matrix& last_cov,
                                       const PanelDataset& data, const DesignLayout& layout,
                                       std::span<const double> times, const EffectRequest& request) {
    if (request.is_sample_estimand()) throw InputError("future_population_effects needs a population estimand");
    const std::size_t h = times.size();
    if (h == 0) throw InputError("forecast horizon must be at least 1");
    const Vector w = effect_functional(data, layout, request);
    // Designs do not matter for the state path; reuse the last one.
    const MatrixSequence designs(h, model.design(model.design_count() - 1));
    const auto steps = forecast(model, last_mean, last_cov, h, ForecastInputs{designs, {}, {}});
    std::vector<Vector> means;
    std::vector<Matrix> covs;
    for (const auto& s : steps) {
        means.push_back(s.state_mean);
        covs.push_back(s.state_cov);
    }
    return population_effects(means, covs, w, times, Period::Future, request);
}

EffectSeries effects_from_imputations(const Matrix& observed, const Matrix& imputed, const Matrix& treatment,
                                      std::span<const double> times) {
    if (observed.rows() != imputed.rows() || observed.cols() != imputed.cols() || observed.rows() != treatment.rows() ||
        observed.cols() != treatment.cols() || static_cast<std::size_t>(observed.rows()) != times.size())
        throw InputError("observed, imputed and treatment tables must have the same shape");
    EffectSeries out;
    out.estimand = "SATE";
    out.method = "oracle";
    out.B = 0;
    for (Eigen::Index t = 0; t < observed.rows(); ++t) {
        const Vector sign = flip_sign(treatment.row(t).transpose());
        double sum = 0.0;
        std::size_t count = 0;
        for (Eigen::Index i = 0; i < observed.cols(); ++i) {
            if (std::isnan(observed(t, i)) || std::isnan(imputed(t, i))) continue;
            sum += (imputed(t, i) - observed(t, i)) * sign[i];
            ++count;
        }
        const double tau = count ? sum / static_cast<double>(count) : kNaN;
        out.points.push_back({times[static_cast<std::size_t>(t)], tau, tau, tau, Period::Past, count});
    }
    return out;
}

}  // namespace dyncausal
