#include "dyncausal/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dyncausal/error.hpp"
#include "dyncausal/random.hpp"

namespace dyncausal {
namespace {

// Sub-stream identifiers below the stream roles.
enum : std::uint64_t { kCovariates = 0, kObsNoise = 1, kEffectNoise = 2, kUnitStates = 3 };
enum : std::uint64_t { kGlobalZ = 0, kGlobalBeta = 1, kGlobalMu = 2 };

double grid_draw(Rng& rng, double lo, double step, int count) {
    std::uniform_int_distribution<int> pick(0, count - 1);
    return lo + step * pick(rng);
}

/// Unit-level draws that do not depend on the assignment.
struct UnitDraws {
    double x_pre = 0.0;
    int g = 0;
    // Model 4 observational coefficients and noise SD.
    double b0 = 0.0, b1 = 0.0, b2 = 0.0, sigma = 0.1;
    // Unit-specific effect states over effect time 0..n+h (models 5, 6).
    std::vector<double> mu0, mu1;
};

UnitDraws draw_unit(const SimConfig& c, std::uint64_t stream_role, std::uint64_t unit, int g, std::size_t effect_len) {
    UnitDraws u;
    u.g = g;
    Rng cov = make_rng({c.seed, stream_role, unit, kCovariates});
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    u.x_pre = unif(cov);
    if (c.model_id == 4) {
        u.b0 = grid_draw(cov, 0.1, 0.01, 21);
        u.b1 = grid_draw(cov, 0.5, 0.01, 21);
        u.b2 = grid_draw(cov, 0.2, 0.01, 21);
        u.sigma = grid_draw(cov, 0.09, 0.001, 21);
    }
    if (c.model_id == 5 || c.model_id == 6) {
        Rng st = make_rng({c.seed, stream_role, unit, kUnitStates});
        std::normal_distribution<double> un(0.0, 0.01 * c.noise_scale);
        u.mu0.resize(effect_len + 1);
        if (c.model_id == 5) {
            u.mu0[0] = grid_draw(st, 0.9, 0.01, 21);
            for (std::size_t k = 1; k <= effect_len; ++k) u.mu0[k] = 1.002 * u.mu0[k - 1] + un(st);
        } else {
            u.mu1.resize(effect_len + 1);
            u.mu0[0] = grid_draw(st, 0.9, 0.01, 21);
            u.mu1[0] = grid_draw(st, 0.4, 0.01, 21);
            for (std::size_t k = 1; k <= effect_len; ++k) {
                u.mu0[k] = 0.9 * u.mu0[k - 1];
                u.mu1[k] = u.mu1[k - 1];
            }
        }
    }
    return u;
}

}  // namespace

void SimConfig::validate() const {
    if (model_id < 1 || model_id > 6) throw InputError("model_id must be 1..6");
    if (assignment < 1 || assignment > 3) throw InputError("assignment must be 1..3");
    if (d < 2 || d % 2 != 0) throw InputError("d must be even and at least 2");
    if (n < 2) throw InputError("n must be at least 2");
    if (!(noise_scale >= 0.0)) throw InputError("noise_scale must be non-negative");
}

Vector assign(const SimConfig& config) {
    config.validate();
    const std::size_t half = config.d / 2;  // units per stratum and treated total
    auto scaled = [&](double share) { return static_cast<std::size_t>(std::lround(static_cast<double>(half) * share)); };
    std::size_t c0 = 0, c1 = 0;
    switch (config.assignment) {
        case 1:
            c1 = scaled(0.5);
            c0 = half - c1;
            break;
        case 2:
            c0 = std::max<std::size_t>(1, scaled(0.1));
            c1 = half - std::min(c0, half);
            break;
        default:
            c1 = std::max<std::size_t>(1, scaled(0.1));
            c0 = half - std::min(c1, half);
            break;
    }
    if (c0 > half || c1 > half || c0 + c1 != half)
        throw InputError("assignment " + std::to_string(config.assignment) + " needs " + std::to_string(c0) + " treated with g=0 and " +
                         std::to_string(c1) + " with g=1 but each stratum has " + std::to_string(half) + " units");
    Rng rng = make_rng({config.seed, tag(StreamRole::SimAssignment)});
    Vector t = Vector::Zero(static_cast<Eigen::Index>(config.d));
    for (int g = 0; g < 2; ++g) {
        std::vector<std::size_t> stratum(half);
        std::iota(stratum.begin(), stratum.end(), g * half);
        std::shuffle(stratum.begin(), stratum.end(), rng);
        const std::size_t count = g == 0 ? c0 : c1;
        for (std::size_t j = 0; j < count; ++j) t[static_cast<Eigen::Index>(stratum[j])] = 1.0;
    }
    return t;
}

SimulatedPanel generate(const SimConfig& c) {
    c.validate();
    const std::size_t d = c.d, pre = c.pre_period, n = c.n, h = c.horizon;
    const std::size_t rows = pre + n + h;
    const std::size_t effect_len = n + h;
    const double ns = c.noise_scale;
    const int model = c.model_id;
    const Vector treated = assign(c);

    // Time-varying covariate shared within each group.
    Rng zr = make_rng({c.seed, tag(StreamRole::SimGlobal), kGlobalZ});
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    const double m1 = u01(zr), m2 = u01(zr) - 1.0;
    Matrix zg(static_cast<Eigen::Index>(rows), 2);
    {
        std::normal_distribution<double> z1(m1, 0.1), z2(m2, 0.1);
        for (std::size_t r = 0; r < rows; ++r) {
            zg(static_cast<Eigen::Index>(r), 0) = z1(zr);
            zg(static_cast<Eigen::Index>(r), 1) = z2(zr);
        }
    }

    // Observational states: random walks from beta_0 at the first row's predecessor.
    Matrix beta(static_cast<Eigen::Index>(rows), 3);
    {
        Rng br = make_rng({c.seed, tag(StreamRole::SimGlobal), kGlobalBeta});
        std::normal_distribution<double> w(0.0, 0.01 * ns);
        Eigen::Vector3d b(0.2, 0.6, 0.3);
        for (std::size_t r = 0; r < rows; ++r) {
            for (int j = 0; j < 3; ++j) b[j] += w(br);
            beta.row(static_cast<Eigen::Index>(r)) = b.transpose();
        }
    }

    // Shared treatment states over effect time 1..n+h (index k-1).
    Matrix mu;
    {
        Rng mr = make_rng({c.seed, tag(StreamRole::SimGlobal), kGlobalMu});
        std::normal_distribution<double> u(0.0, 0.01 * ns);
        if (model == 2) {
            mu.resize(static_cast<Eigen::Index>(effect_len), 1);
            double m = 2.0;
            for (std::size_t k = 0; k < effect_len; ++k) {
                m = 0.15 + 0.9 * m + u(mr);
                mu(static_cast<Eigen::Index>(k), 0) = m;
            }
        } else if (model == 1 || model == 3 || model == 4) {
            mu.resize(static_cast<Eigen::Index>(effect_len), 3);
            Eigen::Vector3d m(1.0, 0.5, 0.3);
            const Eigen::Vector3d a(0.8, 0.9, 1.0);
            for (std::size_t k = 0; k < effect_len; ++k) {
                for (int j = 0; j < 3; ++j) m[j] = a[j] * m[j] + u(mr);
                mu.row(static_cast<Eigen::Index>(k)) = m.transpose();
            }
        }
    }

    std::vector<UnitDraws> units(d);
    for (std::size_t i = 0; i < d; ++i)
        units[i] = draw_unit(c, tag(StreamRole::SimUnit), i, i < d / 2 ? 0 : 1, effect_len);
    UnitDraws fresh = draw_unit(c, tag(StreamRole::SimNewUnit), 0, 0, effect_len);

    auto z_of = [&](const UnitDraws& u, std::size_t r) { return zg(static_cast<Eigen::Index>(r), u.g); };
    auto mean_obs = [&](const UnitDraws& u, std::size_t r) {
        const auto ri = static_cast<Eigen::Index>(r);
        return beta(ri, 0) + beta(ri, 1) * u.x_pre + beta(ri, 2) * z_of(u, r);
    };
    // Expected effect of unit u at effect index k (0-based, effect time k+1), given the states.
    auto expected_effect = [&](const UnitDraws& u, std::size_t k) {
        const auto ki = static_cast<Eigen::Index>(k);
        switch (model) {
            case 2: return (mu(ki, 0) - 1.0) * mean_obs(u, pre + k);
            case 5: return u.mu0[k + 1] * std::cos(u.x_pre);
            case 6: return u.mu0[k + 1] + u.mu1[k + 1] * u.x_pre * u.x_pre;
            default: return mu(ki, 0) + mu(ki, 1) * u.x_pre + mu(ki, 2) * u.g;
        }
    };

    TruthTrace truth;
    truth.pre_period = pre;
    truth.n = n;
    truth.horizon = h;
    truth.x0.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(d));
    truth.x1.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(d));
    for (std::size_t r = 0; r < rows; ++r) truth.times.push_back(static_cast<double>(r) - static_cast<double>(pre) + 1.0);

    for (std::size_t i = 0; i < d; ++i) {
        const auto& u = units[i];
        const auto ii = static_cast<Eigen::Index>(i);
        Rng vr = make_rng({c.seed, tag(StreamRole::SimUnit), i, kObsNoise});
        Rng er = make_rng({c.seed, tag(StreamRole::SimUnit), i, kEffectNoise});
        std::normal_distribution<double> v(0.0, (model == 4 ? u.sigma : 0.1) * ns);
        std::normal_distribution<double> nu(0.0, 0.1 * ns);
        double ar = u.x_pre;  // model 3 observational AR state
        for (std::size_t r = 0; r < rows; ++r) {
            const auto ri = static_cast<Eigen::Index>(r);
            double x0 = 0.0;
            switch (model) {
                case 3:
                    ar = beta(ri, 0) + 0.6 * ar + beta(ri, 2) * z_of(u, r) + v(vr);
                    x0 = ar;
                    break;
                case 4:
                    x0 = u.b0 + u.b1 * u.x_pre * u.x_pre + u.b2 * z_of(u, r) + v(vr);
                    break;
                default:
                    x0 = mean_obs(u, r) + v(vr);
                    break;
            }
            double x1 = x0;
            if (r >= pre) {
                const std::size_t k = r - pre;
                const auto ki = static_cast<Eigen::Index>(k);
                if (model == 2)
                    x1 = mu(ki, 0) * x0;
                else if (model == 3 || model == 4)
                    x1 = x0 + expected_effect(u, k) + nu(er);
                else
                    x1 = x0 + expected_effect(u, k);
            }
            truth.x0(ri, ii) = x0;
            truth.x1(ri, ii) = x1;
        }
    }

    truth.new_unit_x_pre = fresh.x_pre;
    for (std::size_t k = 0; k < effect_len; ++k) {
        const std::size_t r = pre + k;
        const auto ri = static_cast<Eigen::Index>(r);
        truth.effect_times.push_back(truth.times[r]);
        truth.sate.push_back((truth.x1.row(ri) - truth.x0.row(ri)).mean());
        double ate = 0.0, g0 = 0.0, g1 = 0.0;
        std::size_t n0 = 0, n1 = 0;
        for (const auto& u : units) {
            const double e = expected_effect(u, k);
            ate += e;
            (u.g == 0 ? g0 : g1) += e;
            ++(u.g == 0 ? n0 : n1);
        }
        truth.ate.push_back(ate / static_cast<double>(d));
        truth.mcate_g0.push_back(g0 / static_cast<double>(n0));
        truth.mcate_g1.push_back(g1 / static_cast<double>(n1));
        truth.mcate_diff.push_back(truth.mcate_g1.back() - truth.mcate_g0.back());
        truth.cate.push_back(expected_effect(fresh, k));
    }
    truth.beta_states = beta;
    truth.mu_states = mu;

    // Observed panel: pre-period and treatment period.
    SimulatedPanel out;
    PanelDataset& p = out.data;
    const std::size_t obs_rows = pre + n;
    for (std::size_t i = 0; i < d; ++i) p.units.push_back("u" + std::to_string(i + 1));
    p.times.assign(truth.times.begin(), truth.times.begin() + static_cast<std::ptrdiff_t>(obs_rows));
    p.outcome.resize(static_cast<Eigen::Index>(obs_rows), static_cast<Eigen::Index>(d));
    p.treatment = Matrix::Zero(static_cast<Eigen::Index>(obs_rows), static_cast<Eigen::Index>(d));
    Matrix z(static_cast<Eigen::Index>(obs_rows), static_cast<Eigen::Index>(d));
    p.x_pre.resize(static_cast<Eigen::Index>(d));
    p.g.resize(static_cast<Eigen::Index>(d), 1);
    p.g_levels = {"0", "1"};
    for (std::size_t i = 0; i < d; ++i) {
        const auto ii = static_cast<Eigen::Index>(i);
        p.x_pre[ii] = units[i].x_pre;
        p.g(ii, 0) = units[i].g;
        for (std::size_t r = 0; r < obs_rows; ++r) {
            const auto ri = static_cast<Eigen::Index>(r);
            const bool on = r >= pre && treated[ii] == 1.0;
            p.treatment(ri, ii) = on ? 1.0 : 0.0;
            p.outcome(ri, ii) = on ? truth.x1(ri, ii) : truth.x0(ri, ii);
            z(ri, ii) = z_of(units[i], r);
        }
    }
    p.z.push_back(std::move(z));

    // Horizon covariates.
    FutureCovariates& fut = truth.future;
    fut.times.assign(truth.times.begin() + static_cast<std::ptrdiff_t>(obs_rows), truth.times.end());
    Matrix zf(static_cast<Eigen::Index>(h), static_cast<Eigen::Index>(d));
    fut.treatment.resize(static_cast<Eigen::Index>(h), static_cast<Eigen::Index>(d));
    for (std::size_t s = 0; s < h; ++s)
        for (std::size_t i = 0; i < d; ++i) {
            zf(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(i)) = z_of(units[i], obs_rows + s);
            fut.treatment(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(i)) = treated[static_cast<Eigen::Index>(i)];
        }
    fut.z.push_back(std::move(zf));
    out.truth = std::move(truth);
    return out;
}

const std::vector<double>& TruthTrace::series(const std::string& label) const {
    if (label == "SATE") return sate;
    if (label == "ATE") return ate;
    if (label.rfind("CATE", 0) == 0) return cate;
    if (label.rfind("MCATE_diff", 0) == 0) return mcate_diff;
    if (label == "MCATE[g=0]") return mcate_g0;
    if (label == "MCATE[g=1]") return mcate_g1;
    throw InputError("no truth series for estimand '" + label + "'");
}

PanelDataset slice_rows(const PanelDataset& data, std::size_t start, std::size_t count) {
    if (start + count > data.n()) throw InputError("row slice exceeds the panel");
    PanelDataset out = data;
    const auto s = static_cast<Eigen::Index>(start), k = static_cast<Eigen::Index>(count);
    out.times.assign(data.times.begin() + static_cast<std::ptrdiff_t>(start),
                     data.times.begin() + static_cast<std::ptrdiff_t>(start + count));
    out.outcome = data.outcome.middleRows(s, k);
    out.treatment = data.treatment.middleRows(s, k);
    for (std::size_t j = 0; j < data.z.size(); ++j) out.z[j] = data.z[j].middleRows(s, k);
    return out;
}

ModelFormula benchmark_formula(int model_id) {
    if (model_id == 1 || model_id == 3 || model_id == 4) return ModelFormula::parse("y ~ z + x_pre*T + T:g");
    return ModelFormula::parse("y ~ z + x_pre*T");
}

}  // namespace dyncausal
