#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dyncausal/mle.hpp"
#include "dyncausal/state_space.hpp"

namespace dyncausal {

/// Units x time panel. Row index is time, column index is unit.
struct PanelDataset {
    std::vector<std::string> units;
    std::vector<double> times;
    Matrix outcome;           // n x d, NaN = missing
    Matrix treatment;         // n x d; constant down each column for time-constant treatment
    Vector x_pre;             // d, or empty
    std::vector<Matrix> z;    // each n x d
    Matrix g;                 // d x k 0/1 dummies, or empty
    std::vector<std::string> g_levels;  // k + 1 level labels (first level is the baseline)

    std::size_t n() const { return times.size(); }
    std::size_t d() const { return units.size(); }
    bool has_x_pre() const { return x_pre.size() != 0; }
    bool has_z() const { return !z.empty(); }
    bool has_g() const { return g.size() != 0; }
    std::size_t g_columns() const { return static_cast<std::size_t>(g.cols()); }

    bool time_constant_treatment() const;
    bool binary_treatment() const;
    /// Per-unit treatment for time-constant designs (first row).
    Vector unit_treatment() const { return treatment.row(0).transpose(); }

    /// Throws InputError on shape or content violations.
    void validate() const;
};

/// Group label of unit i: 0 for the baseline level, j for dummy column j-1.
std::size_t group_of(const PanelDataset& data, std::size_t unit);

enum class TreatmentDynamics { Autoregressive, RandomWalk };

/// Terms of the dynamic regression. Canonical column order:
/// intercept, x_pre, z..., T, T*x_pre, T*g...
struct ModelFormula {
    bool intercept = true;
    bool x_pre = false;
    bool z = false;
    bool treatment = true;
    bool treatment_x_pre = false;
    bool treatment_g = false;
    bool unit_specific = false;
    TreatmentDynamics treatment_dynamics = TreatmentDynamics::Autoregressive;
    bool trend_offsets = false;
    bool tie_observational_variances = false;

    bool has_treatment_terms() const { return treatment || treatment_x_pre || treatment_g; }

    /// Parses "y ~ z + x_pre*T + T:g" style formulas. Tokens: 1, 0, -1,
    /// x_pre, z, T, T:x_pre (or x_pre:T), T:g, x_pre*T.
    static ModelFormula parse(std::string_view text);
    std::string to_string() const;
};

enum class Term { Intercept, XPre, Z, Treatment, TreatmentXPre, TreatmentG };

struct DesignColumn {
    std::string name;
    Term term;
    int unit = -1;  // owning unit in the unit-specific layout
    int index = 0;  // z covariate or g dummy index
};

/// Column bookkeeping. Observational columns come first, then the shared
/// treatment block.
struct DesignLayout {
    std::vector<DesignColumn> columns;
    std::size_t n_observational = 0;
    bool unit_specific = false;

    std::size_t state_dim() const { return columns.size(); }
    std::size_t n_treatment() const { return columns.size() - n_observational; }

    /// Treatment-block coefficients that turn the treatment states into the
    /// effect of one unit with covariates (x_pre, g dummies).
    Vector treatment_weights(double x_pre, const Vector& g) const;
};

DesignLayout make_layout(const PanelDataset& data, const ModelFormula& formula);

/// Design rows for arbitrary covariate values at one time point.
/// z_row: d x (#z), treatment_row: d.
Matrix design_from_rows(const DesignLayout& layout, const PanelDataset& data, const Matrix& z_row,
                        const Vector& treatment_row);

Matrix build_design(const PanelDataset& data, const ModelFormula& formula, std::size_t t);
Matrix build_counterfactual_design(const PanelDataset& data, const ModelFormula& formula, std::size_t t);
Matrix build_unit_specific_design(const PanelDataset& data, const ModelFormula& formula, std::size_t t);

/// |T - 1| for binary treatments; throws InputError for doses.
Vector flip_treatment(const Vector& treatment);

struct Diagnostic {
    bool ok = true;
    std::string code;
    std::string message;
};

Diagnostic validate_identifiability(const PanelDataset& data, const ModelFormula& formula);

struct ParameterDefaults {
    std::optional<double> obs_var;  // data-driven when absent
    double state_var = 1e-4;
    double ar_coefficient = 0.9;
    double prior_scale = kDiffusePriorScale;
    Vector obs_weights;  // optional, one positive weight per unit
};

/// Covariates for forecast steps beyond the observed panel.
struct FutureCovariates {
    std::vector<double> times;
    std::vector<Matrix> z;  // each h x d
    Matrix treatment;       // h x d; empty means keep the last observed row
    std::size_t horizon() const { return times.size(); }
};

/// Everything needed to fit and query one panel model.
struct PanelModel {
    ModelFormula formula;
    DesignLayout layout;
    SharedMatrices designs;
    SharedMatrices cf_designs;  // null when the treatment is not binary
    StateSpaceModel model;      // built at the current parameter values
    ParameterSpec spec;
    std::vector<double> natural;  // parameters `model` was built with

    /// Rebuilds `model` at natural-scale parameter values.
    void set_parameters(std::span<const double> natural_values);
};

PanelModel assemble_model(const PanelDataset& data, const ModelFormula& formula,
                          const ParameterDefaults& defaults = {});

/// Future factual and counterfactual designs.
struct FutureDesigns {
    MatrixSequence designs;
    MatrixSequence cf_designs;
};

FutureDesigns build_future_designs(const PanelDataset& data, const PanelModel& pm, const FutureCovariates& future);

}  // namespace dyncausal
