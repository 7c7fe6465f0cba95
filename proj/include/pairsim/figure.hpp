#pragma once

#include "pairsim/montecarlo.hpp"

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>

namespace pairsim {

// Three rows (bias, RMSE, coverage) by one column per scenario. Design-based
// is drawn solid, the covariate model dashed, the pretest dotted, the model
// without covariate dash-dot. Coverage panels carry a reference line at 0.95.
std::string render_figure_svg(std::span<const MetricsRow> rows);

// Long-format table: scenario,sigma_delta,estimator,metric,value,std_error.
void write_figure_data_csv(std::ostream& out, std::span<const MetricsRow> rows);

// Writes `svg_path` and the tidy table next to it (same stem, .csv).
// Returns the table path.
std::filesystem::path emit_figure(std::span<const MetricsRow> rows,
                                  const std::filesystem::path& svg_path);

}  // namespace pairsim
