#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "dyncausal/effects.hpp"
#include "dyncausal/panel.hpp"
#include "dyncausal/simulate.hpp"

namespace dyncausal {

// Panel CSV: header with fixed names unit, t, y, T and optional x_pre,
// z (or z1, z2, ...), g. One row per (unit, t); an empty y is missing.
// x_pre and g must be constant within a unit. Units keep first-appearance
// order, times are sorted, g levels are sorted (numerically when all
// levels parse as numbers) and the first level is the baseline.

struct IngestOptions {
    /// When the file has no x_pre column: average y over the first
    /// `x_pre_window` time points (0 leaves x_pre empty).
    std::size_t x_pre_window = 0;
};

PanelDataset read_panel_csv(std::istream& in, const IngestOptions& options = {},
                            const std::string& source = "<stream>");
/// Throws IoError when the file cannot be opened, InputError on content.
PanelDataset ingest_panel(const std::string& path, const IngestOptions& options = {});

/// Writes the panel in the ingest format; numbers use shortest round-trip form.
void write_panel_csv(std::ostream& out, const PanelDataset& data);

/// Future covariate CSV for forecasting: unit, t, and optionally T and the
/// z columns of the panel. Units must match the panel.
FutureCovariates read_future_csv(std::istream& in, const PanelDataset& data, const std::string& source = "<stream>");

/// Columns t, SATE, ATE, CATE, MCATE[g=0], MCATE[g=1], MCATE_diff.
void write_truth_csv(std::ostream& out, const TruthTrace& truth);

/// Columns t, estimand, method, point, lower, upper, period.
void write_effects_csv(std::ostream& out, const std::vector<EffectSeries>& series);

/// Long format (t, series, value): point, lower and upper per effect point,
/// plus truth rows at the same times when a truth trace is given.
void emit_plotdata(std::ostream& out, const std::vector<EffectSeries>& series, const TruthTrace* truth = nullptr);

/// y -> sqrt(y) (also x_pre); negative values are rejected.
void apply_sqrt_transform(PanelDataset& data);

/// Per-unit observation weights 1/sqrt(x_pre).
Vector inv_sqrt_xpre_weights(const PanelDataset& data);

/// Shortest decimal form that parses back to the same double; "NaN" for NaN.
std::string format_double(double v);

}  // namespace dyncausal
