#include "dyncausal/panel.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <sstream>

#include "dyncausal/error.hpp"

namespace dyncausal {
namespace {

std::string strip_spaces(std::string_view s) {
    std::string out;
    for (char c : s)
        if (!std::isspace(static_cast<unsigned char>(c))) out.push_back(c);
    return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// PanelDataset

bool PanelDataset::time_constant_treatment() const {
    for (Eigen::Index i = 0; i < treatment.cols(); ++i)
        for (Eigen::Index t = 1; t < treatment.rows(); ++t)
            if (treatment(t, i) != treatment(0, i)) return false;
    return true;
}

bool PanelDataset::binary_treatment() const {
    return (treatment.array() == 0.0 || treatment.array() == 1.0).all();
}

void PanelDataset::validate() const {
    const auto n_rows = static_cast<Eigen::Index>(n());
    const auto n_cols = static_cast<Eigen::Index>(d());
    if (n_cols == 0) throw InputError("panel has no units");
    if (n_rows == 0) throw InputError("panel has no time points");
    if (outcome.rows() != n_rows || outcome.cols() != n_cols) throw InputError("outcome matrix must be n x d");
    if (treatment.rows() != n_rows || treatment.cols() != n_cols) throw InputError("treatment matrix must be n x d");
    if (!treatment.allFinite()) throw InputError("treatment contains missing values");
    if ((treatment.array() < 0.0).any()) throw InputError("treatment doses must be non-negative");
    for (std::size_t t = 1; t < times.size(); ++t)
        if (!(times[t] > times[t - 1])) throw InputError("time stamps must be strictly increasing");
    if (has_x_pre()) {
        if (x_pre.size() != n_cols) throw InputError("x_pre must have one value per unit");
        if (!x_pre.allFinite()) throw InputError("x_pre contains missing values");
    }
    for (const auto& zj : z)
        if (zj.rows() != n_rows || zj.cols() != n_cols) throw InputError("each z covariate must be n x d");
    if (has_g()) {
        if (g.rows() != n_cols) throw InputError("g must have one row per unit");
        if (!(g.array() == 0.0 || g.array() == 1.0).all()) throw InputError("g dummies must be 0 or 1");
        for (Eigen::Index i = 0; i < g.rows(); ++i)
            if (g.row(i).sum() > 1.0) throw InputError("unit " + units[static_cast<std::size_t>(i)] + " is in several g levels");
    }
}

std::size_t group_of(const PanelDataset& data, std::size_t unit) {
    if (!data.has_g()) return 0;
    for (Eigen::Index j = 0; j < data.g.cols(); ++j)
        if (data.g(static_cast<Eigen::Index>(unit), j) == 1.0) return static_cast<std::size_t>(j) + 1;
    return 0;
}

// ---------------------------------------------------------------------------
// ModelFormula

ModelFormula ModelFormula::parse(std::string_view text) {
    ModelFormula f;
    f.treatment = false;
    std::string body = strip_spaces(text);
    if (auto tilde = body.find('~'); tilde != std::string::npos) body = body.substr(tilde + 1);
    if (body.empty()) throw InputError("empty formula");
    // Split on '+' and leading '-'.
    std::vector<std::pair<bool, std::string>> tokens;
    std::string cur;
    bool negative = false;
    for (char c : body) {
        if (c == '+' || c == '-') {
            if (!cur.empty()) tokens.emplace_back(negative, cur);
            cur.clear();
            negative = c == '-';
        } else {
            cur.push_back(c);
        }
    }
    if (!cur.empty()) tokens.emplace_back(negative, cur);

    for (const auto& [neg, tok] : tokens) {
        if (tok == "1" || tok == "0") {
            f.intercept = !neg && tok == "1";
        } else if (neg) {
            throw InputError("cannot remove term '" + tok + "'");
        } else if (tok == "x_pre") {
            f.x_pre = true;
        } else if (tok == "z") {
            f.z = true;
        } else if (tok == "T") {
            f.treatment = true;
        } else if (tok == "T:x_pre" || tok == "x_pre:T") {
            f.treatment_x_pre = true;
        } else if (tok == "T:g" || tok == "g:T") {
            f.treatment_g = true;
        } else if (tok == "x_pre*T" || tok == "T*x_pre") {
            f.x_pre = f.treatment = f.treatment_x_pre = true;
        } else if (tok == "g") {
            throw InputError("g enters only through the T:g interaction");
        } else {
            throw InputError("unknown formula term '" + tok + "'");
        }
    }
    return f;
}

std::string ModelFormula::to_string() const {
    std::vector<std::string> terms;
    if (!intercept) terms.emplace_back("0");
    if (x_pre) terms.emplace_back("x_pre");
    if (z) terms.emplace_back("z");
    if (treatment) terms.emplace_back("T");
    if (treatment_x_pre) terms.emplace_back("T:x_pre");
    if (treatment_g) terms.emplace_back("T:g");
    std::string out = "y ~ ";
    for (std::size_t i = 0; i < terms.size(); ++i) out += (i ? " + " : "") + terms[i];
    return out;
}

// ---------------------------------------------------------------------------
// Layout and designs

Vector DesignLayout::treatment_weights(double x_pre, const Vector& g) const {
    Vector w(static_cast<Eigen::Index>(n_treatment()));
    for (std::size_t j = 0; j < n_treatment(); ++j) {
        const auto& col = columns[n_observational + j];
        double v = 0.0;
        switch (col.term) {
            case Term::Treatment: v = 1.0; break;
            case Term::TreatmentXPre: v = x_pre; break;
            case Term::TreatmentG: v = col.index < g.size() ? g[col.index] : 0.0; break;
            default: break;
        }
        w[static_cast<Eigen::Index>(j)] = v;
    }
    return w;
}

DesignLayout make_layout(const PanelDataset& data, const ModelFormula& formula) {
    auto require = [&](bool cond, const char* what) {
        if (!cond) throw InputError(std::string("formula needs covariate '") + what + "' which the panel lacks");
    };
    if (formula.x_pre || formula.treatment_x_pre) require(data.has_x_pre(), "x_pre");
    if (formula.z) require(data.has_z(), "z");
    if (formula.treatment_g) require(data.has_g(), "g");

    DesignLayout layout;
    layout.unit_specific = formula.unit_specific;
    const std::size_t nz = formula.z ? data.z.size() : 0;
    auto zname = [&](std::size_t j) { return data.z.size() > 1 ? "z" + std::to_string(j + 1) : std::string("z"); };

    if (!formula.unit_specific) {
        if (formula.intercept) layout.columns.push_back({"intercept", Term::Intercept});
        if (formula.x_pre) layout.columns.push_back({"x_pre", Term::XPre});
        for (std::size_t j = 0; j < nz; ++j) layout.columns.push_back({zname(j), Term::Z, -1, static_cast<int>(j)});
    } else {
        auto per_unit = [&](const std::string& name, Term term, int index) {
            for (std::size_t i = 0; i < data.d(); ++i)
                layout.columns.push_back({name + "[" + data.units[i] + "]", term, static_cast<int>(i), index});
        };
        if (formula.intercept) per_unit("intercept", Term::Intercept, 0);
        if (formula.x_pre) per_unit("x_pre", Term::XPre, 0);
        for (std::size_t j = 0; j < nz; ++j) per_unit(zname(j), Term::Z, static_cast<int>(j));
    }
    layout.n_observational = layout.columns.size();
    if (formula.treatment) layout.columns.push_back({"T", Term::Treatment});
    if (formula.treatment_x_pre) layout.columns.push_back({"T:x_pre", Term::TreatmentXPre});
    if (formula.treatment_g) {
        for (std::size_t j = 0; j < data.g_columns(); ++j) {
            std::string name = "T:g";
            if (data.g_columns() > 1) name += data.g_levels.size() > j + 1 ? "[" + data.g_levels[j + 1] + "]" : std::to_string(j + 1);
            layout.columns.push_back({name, Term::TreatmentG, -1, static_cast<int>(j)});
        }
    }
    if (layout.columns.empty()) throw InputError("formula has no terms");
    return layout;
}

Matrix design_from_rows(const DesignLayout& layout, const PanelDataset& data, const Matrix& z_row,
                        const Vector& treatment_row) {
    const auto d = static_cast<Eigen::Index>(data.d());
    Matrix f = Matrix::Zero(d, static_cast<Eigen::Index>(layout.state_dim()));
    for (Eigen::Index i = 0; i < d; ++i) {
        const double tr = treatment_row[i];
        for (std::size_t c = 0; c < layout.columns.size(); ++c) {
            const auto& col = layout.columns[c];
            if (col.unit >= 0 && col.unit != i) continue;
            double v = 0.0;
            switch (col.term) {
                case Term::Intercept: v = 1.0; break;
                case Term::XPre: v = data.x_pre[i]; break;
                case Term::Z:
                    v = z_row(i, col.index);
                    if (std::isnan(v))
                        throw InputError("missing z value for unit " + data.units[static_cast<std::size_t>(i)]);
                    break;
                case Term::Treatment: v = tr; break;
                case Term::TreatmentXPre: v = tr * data.x_pre[i]; break;
                case Term::TreatmentG: v = tr * data.g(i, col.index); break;
            }
            f(i, static_cast<Eigen::Index>(c)) = v;
        }
    }
    return f;
}

namespace {

Matrix z_row_at(const PanelDataset& data, std::size_t t) {
    Matrix z(static_cast<Eigen::Index>(data.d()), static_cast<Eigen::Index>(data.z.size()));
    for (std::size_t j = 0; j < data.z.size(); ++j) z.col(static_cast<Eigen::Index>(j)) = data.z[j].row(static_cast<Eigen::Index>(t)).transpose();
    return z;
}

Matrix design_at(const PanelDataset& data, const DesignLayout& layout, std::size_t t, const Vector& treatment_row) {
    try {
        return design_from_rows(layout, data, z_row_at(data, t), treatment_row);
    } catch (const InputError& e) {
        throw InputError(std::string(e.what()) + " at time " + std::to_string(data.times[t]));
    }
}

void check_time(const PanelDataset& data, std::size_t t) {
    if (t >= data.n()) throw InputError("time index " + std::to_string(t) + " out of range");
}

}  // namespace

Vector flip_treatment(const Vector& treatment) {
    if (!(treatment.array() == 0.0 || treatment.array() == 1.0).all())
        throw InputError("counterfactual flip is undefined for non-binary dose treatments");
    return (treatment.array() - 1.0).abs().matrix();
}

Matrix build_design(const PanelDataset& data, const ModelFormula& formula, std::size_t t) {
    check_time(data, t);
    return design_at(data, make_layout(data, formula), t, data.treatment.row(static_cast<Eigen::Index>(t)).transpose());
}

Matrix build_counterfactual_design(const PanelDataset& data, const ModelFormula& formula, std::size_t t) {
    check_time(data, t);
    const Vector flipped = flip_treatment(data.treatment.row(static_cast<Eigen::Index>(t)).transpose());
    return design_at(data, make_layout(data, formula), t, flipped);
}

Matrix build_unit_specific_design(const PanelDataset& data, const ModelFormula& formula, std::size_t t) {
    if (!formula.unit_specific) throw InputError("formula does not select the unit-specific layout");
    const auto diag = validate_identifiability(data, formula);
    if (!diag.ok) throw InputError(diag.message);
    return build_design(data, formula, t);
}

Diagnostic validate_identifiability(const PanelDataset& data, const ModelFormula& formula) {
    auto fail = [](std::string code, std::string message) { return Diagnostic{false, std::move(code), std::move(message)}; };
    if (data.d() == 0 || data.n() == 0) return fail("empty_panel", "panel is empty");
    if ((formula.x_pre || formula.treatment_x_pre) && !data.has_x_pre())
        return fail("missing_covariate", "formula uses x_pre but the panel has none");
    if (formula.z && !data.has_z()) return fail("missing_covariate", "formula uses z but the panel has none");
    if (formula.treatment_g && !data.has_g()) return fail("missing_covariate", "formula uses T:g but the panel has no g");

    if (!formula.unit_specific) {
        for (Eigen::Index i = 0; i < data.treatment.cols(); ++i)
            for (Eigen::Index t = 1; t < data.treatment.rows(); ++t)
                if (data.treatment(t, i) != data.treatment(0, i))
                    return fail("time_varying_treatment",
                                "treatment varies over time for unit " + data.units[static_cast<std::size_t>(i)] +
                                    "; use the unit-specific layout");
        if (formula.has_treatment_terms()) {
            const Vector tr = data.unit_treatment();
            if ((tr.array() == 0.0).all()) return fail("no_treated_units", "no treated units");
            if ((tr.array() != 0.0).all()) return fail("no_control_units", "no control units");
        }
    } else {
        bool pre = false;
        for (Eigen::Index t = 0; t < data.treatment.rows() && !pre; ++t) pre = (data.treatment.row(t).array() == 0.0).all();
        if (!pre) return fail("no_pre_period", "unit-specific layout needs a pre-period with no treated unit");
    }
    return {};
}

// ---------------------------------------------------------------------------
// Model assembly

namespace {

/// Mean residual variance of per-time cross-sectional OLS fits of the
/// outcome on the static shared design; used as the default starting
/// value for the observation variance.
double default_obs_variance(const PanelDataset& data, const ModelFormula& formula) {
    ModelFormula shared = formula;
    shared.unit_specific = false;
    const DesignLayout layout = make_layout(data, shared);
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t t = 0; t < data.n(); ++t) {
        std::vector<Eigen::Index> rows;
        for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(data.d()); ++i)
            if (!std::isnan(data.outcome(static_cast<Eigen::Index>(t), i))) rows.push_back(i);
        const auto p = static_cast<Eigen::Index>(layout.state_dim());
        if (static_cast<Eigen::Index>(rows.size()) <= p) continue;
        Matrix f_full;
        try {
            f_full = design_at(data, layout, t, data.treatment.row(static_cast<Eigen::Index>(t)).transpose());
        } catch (const InputError&) {
            continue;
        }
        Matrix f(static_cast<Eigen::Index>(rows.size()), p);
        Vector y(static_cast<Eigen::Index>(rows.size()));
        for (std::size_t r = 0; r < rows.size(); ++r) {
            f.row(static_cast<Eigen::Index>(r)) = f_full.row(rows[r]);
            y[static_cast<Eigen::Index>(r)] = data.outcome(static_cast<Eigen::Index>(t), rows[r]);
        }
        Eigen::ColPivHouseholderQR<Matrix> qr(f);
        if (qr.rank() < p) continue;
        const Vector resid = y - f * qr.solve(y);
        total += resid.squaredNorm() / static_cast<double>(rows.size() - static_cast<std::size_t>(p));
        ++count;
    }
    if (count > 0 && total > 0) return total / static_cast<double>(count);
    // Fallback: overall outcome variance.
    double sum = 0, sum2 = 0;
    std::size_t k = 0;
    for (Eigen::Index t = 0; t < data.outcome.rows(); ++t)
        for (Eigen::Index i = 0; i < data.outcome.cols(); ++i)
            if (double v = data.outcome(t, i); !std::isnan(v)) {
                sum += v;
                sum2 += v * v;
                ++k;
            }
    if (k < 2) return 1.0;
    const double var = (sum2 - sum * sum / static_cast<double>(k)) / static_cast<double>(k - 1);
    return var > 0 ? 0.1 * var : 1.0;
}

}  // namespace

void PanelModel::set_parameters(std::span<const double> natural_values) {
    model = spec.build(natural_values);
    natural.assign(natural_values.begin(), natural_values.end());
}

PanelModel assemble_model(const PanelDataset& data, const ModelFormula& formula, const ParameterDefaults& defaults) {
    data.validate();
    const auto diag = validate_identifiability(data, formula);
    if (!diag.ok) throw InputError(diag.message);

    PanelModel pm;
    pm.formula = formula;
    pm.layout = make_layout(data, formula);
    const auto& layout = pm.layout;
    const std::size_t n = data.n();
    const std::size_t d = data.d();
    const std::size_t m = layout.state_dim();
    const std::size_t n_obs_states = layout.n_observational;

    MatrixSequence designs, cf;
    designs.reserve(n);
    const bool binary = data.binary_treatment();
    for (std::size_t t = 0; t < n; ++t) {
        const Vector tr = data.treatment.row(static_cast<Eigen::Index>(t)).transpose();
        designs.push_back(design_at(data, layout, t, tr));
        if (binary) cf.push_back(design_at(data, layout, t, flip_treatment(tr)));
    }
    pm.designs = share(std::move(designs));
    if (binary) pm.cf_designs = share(std::move(cf));

    if (defaults.obs_weights.size() != 0 && static_cast<std::size_t>(defaults.obs_weights.size()) != d)
        throw InputError("observation weights must have one entry per unit");

    // Free parameters, in a fixed order.
    auto& params = pm.spec.params;
    const double obs_var0 = defaults.obs_var.value_or(default_obs_variance(data, formula));
    std::vector<std::size_t> obs_var_of_unit(d, 0);
    if (formula.unit_specific) {
        for (std::size_t i = 0; i < d; ++i) {
            obs_var_of_unit[i] = params.size();
            params.push_back({"sigma2[" + data.units[i] + "]", ParameterRole::ObsVariance, ParameterTransform::Log, obs_var0});
        }
    } else {
        params.push_back({"sigma2", ParameterRole::ObsVariance, ParameterTransform::Log, obs_var0});
    }
    std::vector<std::size_t> state_var_of(m);
    if (formula.tie_observational_variances && n_obs_states > 0) {
        const std::size_t idx = params.size();
        params.push_back({"w_observational", ParameterRole::StateVariance, ParameterTransform::Log, defaults.state_var});
        for (std::size_t s = 0; s < n_obs_states; ++s) state_var_of[s] = idx;
    } else {
        for (std::size_t s = 0; s < n_obs_states; ++s) {
            state_var_of[s] = params.size();
            params.push_back({"w_" + layout.columns[s].name, ParameterRole::StateVariance, ParameterTransform::Log, defaults.state_var});
        }
    }
    for (std::size_t s = n_obs_states; s < m; ++s) {
        state_var_of[s] = params.size();
        params.push_back({"w_" + layout.columns[s].name, ParameterRole::StateVariance, ParameterTransform::Log, defaults.state_var});
    }
    std::vector<std::optional<std::size_t>> ar_of(m);
    if (formula.treatment_dynamics == TreatmentDynamics::Autoregressive) {
        for (std::size_t s = n_obs_states; s < m; ++s) {
            ar_of[s] = params.size();
            params.push_back({"c_" + layout.columns[s].name, ParameterRole::ArCoefficient, ParameterTransform::Identity, defaults.ar_coefficient});
        }
    }
    std::vector<std::optional<std::size_t>> offset_of(m);
    if (formula.trend_offsets) {
        for (std::size_t s = 0; s < m; ++s) {
            offset_of[s] = params.size();
            const std::string prefix = s < n_obs_states ? "alpha_" : "delta_";
            params.push_back({prefix + layout.columns[s].name, ParameterRole::Offset, ParameterTransform::Identity, 0.0});
        }
    }

    const auto designs_ptr = pm.designs;
    const Vector weights = defaults.obs_weights;
    const double prior_scale = defaults.prior_scale;
    const bool unit_specific = formula.unit_specific;
    pm.spec.build = [=](std::span<const double> psi) {
        StateSpaceModel model;
        model.designs = designs_ptr;
        const auto dd = static_cast<Eigen::Index>(d);
        const auto mm = static_cast<Eigen::Index>(m);
        model.obs_cov = Matrix::Zero(dd, dd);
        for (std::size_t i = 0; i < d; ++i)
            model.obs_cov(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) = psi[unit_specific ? obs_var_of_unit[i] : 0];
        Matrix g = Matrix::Identity(mm, mm);
        model.state_cov = Matrix::Zero(mm, mm);
        bool any_offset = false;
        Vector offset = Vector::Zero(mm);
        for (std::size_t s = 0; s < m; ++s) {
            const auto si = static_cast<Eigen::Index>(s);
            model.state_cov(si, si) = psi[state_var_of[s]];
            if (ar_of[s]) g(si, si) = psi[*ar_of[s]];
            if (offset_of[s]) {
                offset[si] = psi[*offset_of[s]];
                any_offset = true;
            }
        }
        model.transitions = {std::move(g)};
        if (any_offset) model.state_offset = offset;
        model.prior_mean = Vector::Zero(mm);
        model.prior_cov = prior_scale * Matrix::Identity(mm, mm);
        model.obs_weights = weights;
        return model;
    };

    std::vector<double> initial;
    for (const auto& p : params) initial.push_back(p.initial);
    pm.set_parameters(initial);
    return pm;
}

FutureDesigns build_future_designs(const PanelDataset& data, const PanelModel& pm, const FutureCovariates& future) {
    FutureDesigns out;
    const std::size_t h = future.horizon();
    const auto d = static_cast<Eigen::Index>(data.d());
    const std::size_t nz = data.z.size();
    const bool needs_z = pm.formula.z && nz > 0;
    if (needs_z && future.z.size() != nz)
        throw InputError("forecasting needs future values for every z covariate");
    const Vector last_tr = data.treatment.row(data.treatment.rows() - 1).transpose();
    for (std::size_t s = 0; s < h; ++s) {
        Matrix z_row(d, static_cast<Eigen::Index>(nz));
        for (std::size_t j = 0; j < nz; ++j) {
            if (needs_z) {
                if (future.z[j].rows() <= static_cast<Eigen::Index>(s) || future.z[j].cols() != d)
                    throw InputError("future z covariate has the wrong shape");
                z_row.col(static_cast<Eigen::Index>(j)) = future.z[j].row(static_cast<Eigen::Index>(s)).transpose();
            } else {
                z_row.col(static_cast<Eigen::Index>(j)).setZero();
            }
        }
        Vector tr = last_tr;
        if (future.treatment.size() != 0) {
            if (future.treatment.rows() <= static_cast<Eigen::Index>(s) || future.treatment.cols() != d)
                throw InputError("future treatment has the wrong shape");
            tr = future.treatment.row(static_cast<Eigen::Index>(s)).transpose();
        }
        out.designs.push_back(design_from_rows(pm.layout, data, z_row, tr));
        if (pm.cf_designs) out.cf_designs.push_back(design_from_rows(pm.layout, data, z_row, flip_treatment(tr)));
    }
    return out;
}

}  // namespace dyncausal
