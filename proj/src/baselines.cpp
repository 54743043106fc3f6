#include "dyncausal/baselines.hpp"

#include <cmath>
#include <limits>

#include "dyncausal/error.hpp"
#include "dyncausal/kalman.hpp"
#include "dyncausal/random.hpp"

namespace dyncausal {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kSigmaFloor = 1e-12;

Matrix z_row(const PanelDataset& data, std::size_t t) {
    Matrix z(static_cast<Eigen::Index>(data.d()), static_cast<Eigen::Index>(data.z.size()));
    for (std::size_t j = 0; j < data.z.size(); ++j)
        z.col(static_cast<Eigen::Index>(j)) = data.z[j].row(static_cast<Eigen::Index>(t)).transpose();
    return z;
}

EffectPoint summarize(double time, Period period, std::vector<double>& draws, double level,
                      std::optional<double> point, std::size_t units) {
    const Summary s = summarize_samples(draws, level);
    return {time, point.value_or(s.point), s.lower, s.upper, period, units};
}

}  // namespace

EffectSeries bayesian_imputation(const PanelDataset& data, const ModelFormula& formula, const EffectRequest& request) {
    request.validate();
    data.validate();
    if (formula.unit_specific) throw InputError("Bayesian imputation uses the shared (static) layout");
    const DesignLayout layout = make_layout(data, formula);
    const auto p = static_cast<Eigen::Index>(layout.state_dim());
    const bool sample = request.is_sample_estimand();
    Vector functional;
    if (!sample) functional = effect_functional(data, layout, request);

    EffectSeries out;
    out.estimand = request.label();
    out.method = "bayesian-imputation";
    out.B = request.B;
    out.level = request.level;
    out.seed = request.seed;

    for (std::size_t t = 0; t < data.n(); ++t) {
        const auto ti = static_cast<Eigen::Index>(t);
        const double time = data.times[t];
        auto skip = [&](const std::string& why) {
            out.notes.push_back("t=" + std::to_string(time) + ": skipped, " + why);
            out.points.push_back({time, kNaN, kNaN, kNaN, Period::Past, 0});
        };
        const Vector tr = data.treatment.row(ti).transpose();
        const Matrix zr = z_row(data, t);
        Matrix f_full, fc_full;
        try {
            f_full = design_from_rows(layout, data, zr, tr);
            if (sample) fc_full = design_from_rows(layout, data, zr, flip_treatment(tr));
        } catch (const InputError& e) {
            skip(e.what());
            continue;
        }
        std::vector<Eigen::Index> idx;
        for (Eigen::Index i = 0; i < data.outcome.cols(); ++i)
            if (!std::isnan(data.outcome(ti, i))) idx.push_back(i);
        const auto k = static_cast<Eigen::Index>(idx.size());
        if (k <= p) {
            skip(std::to_string(k) + " observed units for " + std::to_string(p) + " coefficients");
            continue;
        }
        Matrix f(k, p), fc(k, p);
        Vector x(k), tro(k);
        for (Eigen::Index j = 0; j < k; ++j) {
            const auto i = idx[static_cast<std::size_t>(j)];
            f.row(j) = f_full.row(i);
            if (sample) fc.row(j) = fc_full.row(i);
            x[j] = data.outcome(ti, i);
            tro[j] = tr[i];
        }
        Eigen::ColPivHouseholderQR<Matrix> qr(f);
        if (qr.rank() < p) {
            skip("rank-deficient design");
            continue;
        }
        const Vector beta_hat = qr.solve(x);
        const double dof = static_cast<double>(k - p);
        double s2 = (x - f * beta_hat).squaredNorm() / dof;
        if (s2 < kSigmaFloor) {
            out.notes.push_back("t=" + std::to_string(time) + ": residual variance floored at 1e-12");
            s2 = kSigmaFloor;
        }
        Matrix ftf = f.transpose() * f;
        symmetrize(ftf);
        Eigen::LLT<Matrix> llt(ftf);
        if (llt.info() != Eigen::Success) {
            skip("F'F is not positive definite");
            continue;
        }
        const Matrix lt = llt.matrixU();  // L' with L L' = F'F

        Rng rng = make_rng({request.seed, tag(StreamRole::BayesImputation), t});
        std::gamma_distribution<double> gamma(dof / 2.0, 1.0 / (dof / 2.0 * s2));
        const Vector sign = flip_treatment(tro) - tro;
        std::vector<double> draws(request.B);
        for (std::size_t b = 0; b < request.B; ++b) {
            const double sigma2 = 1.0 / gamma(rng);
            const double sigma = std::sqrt(sigma2);
            const Vector z = standard_normal_vector(p, rng);
            const Vector beta = beta_hat + sigma * lt.triangularView<Eigen::Upper>().solve(z);
            if (sample) {
                const Vector imputed = fc * beta + sigma * standard_normal_vector(k, rng);
                draws[b] = request.custom ? request.custom(imputed, x, tro)
                                          : (imputed - x).dot(sign) / static_cast<double>(k);
            } else {
                draws[b] = functional.dot(beta);
            }
        }
        std::optional<double> point;
        if (!sample) {
            point = functional.dot(beta_hat);
        } else if (request.point_rule == PointRule::Analytic) {
            const Vector imputed = fc * beta_hat;
            point = request.custom ? request.custom(imputed, x, tro) : (imputed - x).dot(sign) / static_cast<double>(k);
        }
        out.points.push_back(summarize(time, Period::Past, draws, request.level, point, static_cast<std::size_t>(k)));
    }
    return out;
}

void CausalImpactConfig::validate() const {
    if (B < 1) throw InputError("B must be at least 1");
    if (!(level > 0.0 && level < 1.0)) throw InputError("interval level must lie in (0, 1)");
    if (fixed_parameters && fixed_parameters->size() != (trend ? 3u : 2u))
        throw InputError(trend ? "fixed parameters are (sigma2, w_level, w_trend)" : "fixed parameters are (sigma2, w_level)");
    if (level_prior_sd < 0.0 || level_prior_weight <= 0.0) throw InputError("level prior needs sd >= 0 and a positive weight");
}

CausalImpactResult causal_impact_aggregate(const PanelDataset& data, const CausalImpactConfig& config) {
    config.validate();
    data.validate();
    const std::size_t n = data.n(), d = data.d();
    std::size_t pre = config.pre_period;
    if (pre == 0)
        while (pre < n && (data.treatment.row(static_cast<Eigen::Index>(pre)).array() == 0.0).all()) ++pre;
    if (pre < 2) throw InputError("causal impact needs a pre-period of at least 2 untreated time points");
    if (pre >= n) throw InputError("causal impact needs a nonempty treatment period");
    for (std::size_t t = 0; t < pre; ++t)
        if ((data.treatment.row(static_cast<Eigen::Index>(t)).array() != 0.0).any())
            throw InputError("treatment is applied inside the declared pre-period");

    std::vector<Eigen::Index> treated, control;
    for (std::size_t i = 0; i < d; ++i) {
        const bool any = (data.treatment.col(static_cast<Eigen::Index>(i)).array() != 0.0).any();
        (any ? treated : control).push_back(static_cast<Eigen::Index>(i));
    }
    if (treated.empty()) throw InputError("no treated units to aggregate");
    if (config.regression && control.empty()) throw InputError("causal impact needs at least one control series");

    auto row_mean = [&](std::size_t t, const std::vector<Eigen::Index>& cols) {
        double s = 0.0;
        std::size_t c = 0;
        for (auto i : cols)
            if (double v = data.outcome(static_cast<Eigen::Index>(t), i); !std::isnan(v)) {
                s += v;
                ++c;
            }
        return c ? s / static_cast<double>(c) : kNaN;
    };
    CausalImpactResult result;
    for (std::size_t t = 0; t < n; ++t) {
        result.response.push_back(row_mean(t, treated));
        result.control.push_back(config.regression ? row_mean(t, control) : 0.0);
    }
    for (std::size_t t = 0; t < n; ++t)
        if (config.regression && std::isnan(result.control[t]))
            throw InputError("control series is missing at time " + std::to_string(data.times[t]));

    // State (mu, [alpha], [beta]); F_t = [1, [0], [Z_t]].
    const Eigen::Index m = 1 + (config.trend ? 1 : 0) + (config.regression ? 1 : 0);
    const Eigen::Index beta_index = m - 1;
    MatrixSequence designs;
    for (std::size_t t = 0; t < n; ++t) {
        Matrix f = Matrix::Zero(1, m);
        f(0, 0) = 1.0;
        if (config.regression) f(0, beta_index) = result.control[t];
        designs.push_back(std::move(f));
    }
    const SharedMatrices pre_designs = share(MatrixSequence(designs.begin(), designs.begin() + static_cast<std::ptrdiff_t>(pre)));
    const SharedMatrices all_designs = share(std::move(designs));

    const bool trend = config.trend;
    auto build = [m, trend](SharedMatrices ds, std::span<const double> psi) {
        StateSpaceModel model;
        model.designs = std::move(ds);
        Matrix g = Matrix::Identity(m, m);
        if (trend) g(0, 1) = 1.0;
        model.transitions = {g};
        model.obs_cov = Matrix::Constant(1, 1, psi[0]);
        model.state_cov = Matrix::Zero(m, m);
        model.state_cov(0, 0) = psi[1];
        if (trend) model.state_cov(1, 1) = psi[2];
        model.prior_mean = Vector::Zero(m);
        model.prior_cov = kDiffusePriorScale * Matrix::Identity(m, m);
        return model;
    };

    Matrix y_pre(static_cast<Eigen::Index>(pre), 1);
    for (std::size_t t = 0; t < pre; ++t) y_pre(static_cast<Eigen::Index>(t), 0) = result.response[t];

    ParameterSpec spec;
    double scale = 0.0;
    std::size_t count = 0;
    for (std::size_t t = 1; t < pre; ++t) {
        const double dy = result.response[t] - result.response[t - 1];
        if (!std::isnan(dy)) {
            scale += dy * dy;
            ++count;
        }
    }
    scale = count && scale > 0 ? scale / static_cast<double>(count) : 1.0;
    spec.params = {{"sigma2", ParameterRole::ObsVariance, ParameterTransform::Log, scale / 2.0},
                   {"w_level", ParameterRole::StateVariance, ParameterTransform::Log, scale / 10.0}};
    if (trend) spec.params.push_back({"w_trend", ParameterRole::StateVariance, ParameterTransform::Log, scale / 1000.0});
    spec.build = [&](std::span<const double> psi) { return build(pre_designs, psi); };
    if (config.level_prior_sd > 0.0) {
        double mean = 0.0, ss = 0.0;
        std::size_t k = 0;
        for (std::size_t t = 0; t < pre; ++t)
            if (!std::isnan(result.response[t])) {
                mean += result.response[t];
                ++k;
            }
        mean /= static_cast<double>(std::max<std::size_t>(k, 1));
        for (std::size_t t = 0; t < pre; ++t)
            if (!std::isnan(result.response[t])) ss += (result.response[t] - mean) * (result.response[t] - mean);
        const double sdy = std::sqrt(ss / static_cast<double>(std::max<std::size_t>(k, 2) - 1));
        const double guess = config.level_prior_sd * sdy;
        const double df = config.level_prior_weight;
        // 1/w ~ Gamma(df/2, rate = df*guess^2/2), as a density on w. A flat
        // pre-period leaves nothing to centre it on.
        if (guess > 0.0)
            spec.log_prior = [df, guess](std::span<const double> psi) {
                return -(df / 2.0 + 1.0) * std::log(psi[1]) - df * guess * guess / (2.0 * psi[1]);
            };
    }

    if (config.fixed_parameters) {
        result.natural = *config.fixed_parameters;
        result.loglik = log_likelihood(spec.build(result.natural), y_pre);
    } else {
        MleOptions mle = config.mle;
        mle.seed = derive_seed({config.seed, tag(StreamRole::CausalImpact)});
        const FitResult fit = fit_mle(spec, y_pre, mle);
        result.natural = fit.natural;
        result.loglik = log_likelihood(spec.build(result.natural), y_pre);
    }

    // Filter the whole series with treatment-period responses hidden: the
    // one-step predictives are the pre-period fit and the counterfactual
    // forecast afterwards.
    Matrix y_all(static_cast<Eigen::Index>(n), 1);
    for (std::size_t t = 0; t < n; ++t) y_all(static_cast<Eigen::Index>(t), 0) = t < pre ? result.response[t] : kNaN;
    const FilterResult filtered = filter(build(all_designs, result.natural), y_all);

    EffectSeries& out = result.effects;
    out.estimand = "SATE";
    out.method = "causal-impact";
    out.B = config.B;
    out.level = config.level;
    out.seed = config.seed;
    for (std::size_t t = 0; t < n; ++t) {
        const Period period = t < pre ? Period::PrePeriod : Period::Past;
        const double observed = result.response[t];
        if (std::isnan(observed)) {
            out.points.push_back({data.times[t], kNaN, kNaN, kNaN, period, 0});
            out.notes.push_back("t=" + std::to_string(data.times[t]) + ": no observed treated outcome");
            continue;
        }
        const double f = filtered.forecast_mean[t][0];
        const double q = std::sqrt(std::max(filtered.forecast_cov[t](0, 0), 0.0));
        Rng rng = make_rng({config.seed, tag(StreamRole::CausalImpact), static_cast<std::uint64_t>(period), t});
        std::normal_distribution<double> z(0.0, 1.0);
        std::vector<double> draws(config.B);
        for (auto& v : draws) v = observed - (f + q * z(rng));
        std::optional<double> point;
        if (config.point_rule == PointRule::Analytic) point = observed - f;
        out.points.push_back(summarize(data.times[t], period, draws, config.level, point, treated.size()));
    }
    return result;
}

}  // namespace dyncausal
