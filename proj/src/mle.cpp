#include "dyncausal/mle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "dyncausal/error.hpp"
#include "dyncausal/kalman.hpp"
#include "dyncausal/random.hpp"

namespace dyncausal {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double working_to_natural(const FreeParameter& p, double w) {
    return p.transform == ParameterTransform::Log ? std::exp(w) : w;
}

double natural_to_working(const FreeParameter& p, double x) {
    if (p.transform == ParameterTransform::Log) {
        if (!(x > 0)) throw InputError("parameter '" + p.name + "' must be positive on the log scale");
        return std::log(x);
    }
    return x;
}

}  // namespace

std::vector<double> ParameterSpec::to_natural(std::span<const double> working) const {
    if (working.size() != params.size()) throw InputError("parameter vector has the wrong length");
    std::vector<double> out(working.size());
    for (std::size_t i = 0; i < working.size(); ++i) out[i] = working_to_natural(params[i], working[i]);
    return out;
}

std::vector<double> ParameterSpec::to_working(std::span<const double> natural) const {
    if (natural.size() != params.size()) throw InputError("parameter vector has the wrong length");
    std::vector<double> out(natural.size());
    for (std::size_t i = 0; i < natural.size(); ++i) out[i] = natural_to_working(params[i], natural[i]);
    return out;
}

std::vector<double> ParameterSpec::initial_working() const {
    std::vector<double> natural;
    natural.reserve(params.size());
    for (const auto& p : params) natural.push_back(p.initial);
    return to_working(natural);
}

bool ParameterSpec::in_bounds(std::span<const double> natural) const {
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i].lower && natural[i] < *params[i].lower) return false;
        if (params[i].upper && natural[i] > *params[i].upper) return false;
    }
    return true;
}

NelderMeadResult nelder_mead(const std::function<double(std::span<const double>)>& objective,
                             std::vector<double> start, std::span<const double> steps, double rel_tol,
                             std::size_t max_evals) {
    const std::size_t k = start.size();
    NelderMeadResult result;
    auto eval = [&](const std::vector<double>& x) {
        ++result.evaluations;
        const double v = objective(x);
        return std::isfinite(v) ? v : kInf;
    };
    if (k == 0) {
        result.x = start;
        result.value = eval(start);
        result.converged = true;
        return result;
    }

    std::vector<std::vector<double>> simplex(k + 1, start);
    std::vector<double> values(k + 1);
    values[0] = eval(start);
    for (std::size_t i = 0; i < k; ++i) {
        simplex[i + 1][i] += steps[i];
        values[i + 1] = eval(simplex[i + 1]);
    }

    std::vector<std::size_t> order(k + 1);
    std::vector<double> centroid(k), trial(k), trial2(k);
    auto along = [&](double coef, std::vector<double>& out, const std::vector<double>& worst) {
        for (std::size_t j = 0; j < k; ++j) out[j] = centroid[j] + coef * (worst[j] - centroid[j]);
    };

    while (true) {
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return values[a] < values[b]; });
        const std::size_t best = order.front(), worst = order.back(), second = order[k - 1];
        const double f_best = values[best], f_worst = values[worst];
        if (std::isfinite(f_worst) &&
            2.0 * std::abs(f_worst - f_best) <= rel_tol * (std::abs(f_worst) + std::abs(f_best)) + 1e-300) {
            result.converged = true;
            break;
        }
        if (result.evaluations >= max_evals) break;

        std::fill(centroid.begin(), centroid.end(), 0.0);
        for (std::size_t i = 0; i <= k; ++i) {
            if (i == worst) continue;
            for (std::size_t j = 0; j < k; ++j) centroid[j] += simplex[i][j];
        }
        for (auto& c : centroid) c /= static_cast<double>(k);

        along(-1.0, trial, simplex[worst]);
        const double f_reflect = eval(trial);
        if (f_reflect < f_best) {
            along(-2.0, trial2, simplex[worst]);
            const double f_expand = eval(trial2);
            if (f_expand < f_reflect) {
                simplex[worst] = trial2;
                values[worst] = f_expand;
            } else {
                simplex[worst] = trial;
                values[worst] = f_reflect;
            }
            continue;
        }
        if (f_reflect < values[second]) {
            simplex[worst] = trial;
            values[worst] = f_reflect;
            continue;
        }
        const bool outside = f_reflect < f_worst;
        along(outside ? -0.5 : 0.5, trial2, simplex[worst]);
        const double f_contract = eval(trial2);
        if (f_contract < (outside ? f_reflect : f_worst)) {
            simplex[worst] = trial2;
            values[worst] = f_contract;
            continue;
        }
        for (std::size_t i = 0; i <= k; ++i) {
            if (i == best) continue;
            for (std::size_t j = 0; j < k; ++j) simplex[i][j] = simplex[best][j] + 0.5 * (simplex[i][j] - simplex[best][j]);
            values[i] = eval(simplex[i]);
        }
    }
    const auto best_it = std::min_element(values.begin(), values.end());
    const auto best_index = static_cast<std::size_t>(best_it - values.begin());
    result.x = simplex[best_index];
    result.value = *best_it;
    return result;
}

FitResult fit_mle(const ParameterSpec& spec, const Matrix& observations, const MleOptions& options) {
    if (!spec.build) throw InputError("parameter spec has no model builder");
    FitResult fit;

    auto loglik_at = [&](std::span<const double> working) {
        const auto natural = spec.to_natural(working);
        if (!spec.in_bounds(natural)) return -kInf;
        const double prior = spec.log_prior ? spec.log_prior(natural) : 0.0;
        return log_likelihood(spec.build(natural), observations) + prior;
    };

    if (spec.size() == 0) {
        const double l = log_likelihood(spec.build({}), observations);
        fit.loglik = l;
        fit.starts.push_back({{}, {}, l, l, true, false, 1, {}});
        return fit;
    }

    std::vector<double> steps(spec.size());
    for (std::size_t i = 0; i < spec.size(); ++i) {
        const auto& p = spec.params[i];
        if (p.transform == ParameterTransform::Log)
            steps[i] = 1.0;
        else if (p.role == ParameterRole::ArCoefficient)
            steps[i] = 0.1;
        else
            steps[i] = 0.1 * std::max(1.0, std::abs(p.initial));
    }

    const auto base = spec.initial_working();
    Rng rng = make_rng({options.seed, tag(StreamRole::MleStarts)});
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    const std::size_t n_starts = std::max<std::size_t>(options.n_starts, 1);

    for (std::size_t s = 0; s < n_starts; ++s) {
        StartResult start;
        start.initial = base;
        if (s > 0) {
            for (std::size_t i = 0; i < spec.size(); ++i) {
                const auto& p = spec.params[i];
                const double u = unit(rng);
                if (p.transform == ParameterTransform::Log)
                    start.initial[i] += u;
                else if (p.role == ParameterRole::ArCoefficient)
                    start.initial[i] = std::clamp(start.initial[i] + 0.2 * u, -1.05, 1.05);
                else
                    start.initial[i] += 0.1 * u * std::max(1.0, std::abs(start.initial[i]));
            }
        }
        try {
            start.initial_loglik = loglik_at(start.initial);
        } catch (const std::exception& e) {
            start.initial_loglik = -kInf;
        }
        auto objective = [&](std::span<const double> w) {
            try {
                return -loglik_at(w);
            } catch (const InferenceError&) {
                return kInf;
            }
        };
        try {
            auto nm = nelder_mead(objective, start.initial, steps, options.rel_tol, options.max_evals);
            start.final = nm.x;
            start.final_loglik = -nm.value;
            start.converged = nm.converged;
            start.evaluations = nm.evaluations;
            start.failed = !std::isfinite(start.final_loglik);
            if (start.failed) start.error = "likelihood could not be evaluated at any simplex vertex";
        } catch (const std::exception& e) {
            start.failed = true;
            start.error = e.what();
            start.final = start.initial;
            start.final_loglik = -kInf;
        }
        fit.starts.push_back(std::move(start));
    }

    std::optional<std::size_t> best;
    for (std::size_t s = 0; s < fit.starts.size(); ++s) {
        if (fit.starts[s].failed) continue;
        if (!best || fit.starts[s].final_loglik > fit.starts[*best].final_loglik) best = s;
    }
    if (!best) {
        std::string msg = "maximum likelihood failed at every start:";
        for (std::size_t s = 0; s < fit.starts.size(); ++s)
            msg += " [" + std::to_string(s) + "] " + fit.starts[s].error + ";";
        throw EstimationError(msg);
    }
    fit.best_start_index = *best;
    fit.psi_hat = fit.starts[*best].final;
    fit.natural = spec.to_natural(fit.psi_hat);
    fit.loglik = fit.starts[*best].final_loglik;
    return fit;
}

ProfileCheck profile_check(const ParameterSpec& spec, const Matrix& observations, std::span<const double> psi_hat,
                           std::size_t n_probe, std::uint64_t seed) {
    ProfileCheck check;
    const auto center = spec.to_natural(psi_hat);
    check.reference_loglik = log_likelihood(spec.build(center), observations);
    Rng rng = make_rng({seed, tag(StreamRole::ProfileProbe)});
    std::uniform_real_distribution<double> unit(-0.5, 0.5);
    for (std::size_t p = 0; p < n_probe; ++p) {
        ProbeRow row;
        row.natural = center;
        for (auto& x : row.natural) x *= 1.0 + unit(rng);
        try {
            if (!spec.in_bounds(row.natural)) throw InputError("probe outside parameter bounds");
            row.loglik = log_likelihood(spec.build(row.natural), observations);
        } catch (const std::exception& e) {
            row.skipped = true;
            row.error = e.what();
        }
        if (!row.skipped && row.loglik > check.reference_loglik + 1e-4 && check.ok) {
            check.ok = false;
            check.offending_probe = check.probes.size();
        }
        check.probes.push_back(std::move(row));
    }
    return check;
}

}  // namespace dyncausal
