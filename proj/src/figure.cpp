#include "pairsim/figure.hpp"

#include "pairsim/csv_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace pairsim {

namespace {

constexpr double kPanelW = 300.0;
constexpr double kPanelH = 200.0;
constexpr double kLeft = 70.0;
constexpr double kTop = 60.0;
constexpr double kGapX = 60.0;
constexpr double kGapY = 50.0;

enum class Metric { Bias, Rmse, Coverage };

const char* metric_name(Metric m) {
    switch (m) {
        case Metric::Bias: return "bias";
        case Metric::Rmse: return "rmse";
        case Metric::Coverage: return "coverage";
    }
    return "";
}

const char* metric_label(Metric m) {
    switch (m) {
        case Metric::Bias: return "Bias";
        case Metric::Rmse: return "RMSE";
        case Metric::Coverage: return "Coverage";
    }
    return "";
}

double metric_value(const MetricsRow& r, Metric m) {
    switch (m) {
        case Metric::Bias: return r.bias;
        case Metric::Rmse: return r.rmse;
        case Metric::Coverage: return r.coverage;
    }
    return 0.0;
}

const char* dash_pattern(EstimatorKind e) {
    switch (e) {
        case EstimatorKind::DesignBased: return "";
        case EstimatorKind::HierCov: return "8,4";
        case EstimatorKind::Pretest: return "2,3";
        case EstimatorKind::HierNoCov: return "8,3,2,3";
    }
    return "";
}

const char* legend_label(EstimatorKind e) {
    switch (e) {
        case EstimatorKind::DesignBased: return "design-based";
        case EstimatorKind::HierCov: return "model with covariate";
        case EstimatorKind::Pretest: return "LR pretest";
        case EstimatorKind::HierNoCov: return "model without covariate";
    }
    return "";
}

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

std::string tick(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", std::abs(v) < 1e-12 ? 0.0 : v);
    return buf;
}

std::string stroke_attrs(EstimatorKind e) {
    std::string s = "stroke=\"black\" stroke-width=\"1.5\" fill=\"none\"";
    const std::string dash = dash_pattern(e);
    if (!dash.empty()) s += " stroke-dasharray=\"" + dash + "\"";
    return s;
}

struct Range {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();

    void add(double v) {
        if (!std::isfinite(v)) return;
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    void pad() {
        if (!std::isfinite(lo)) {
            lo = 0.0;
            hi = 1.0;
        }
        if (hi - lo < 1e-9) {
            lo -= 0.5;
            hi += 0.5;
        } else {
            const double m = 0.05 * (hi - lo);
            lo -= m;
            hi += m;
        }
    }
};

}  // namespace

std::string render_figure_svg(std::span<const MetricsRow> rows) {
    if (rows.empty()) throw std::invalid_argument("figure: no metrics rows");

    std::vector<std::string> scenarios;
    std::vector<EstimatorKind> estimators;
    for (const auto& r : rows) {
        if (std::find(scenarios.begin(), scenarios.end(), r.scenario) == scenarios.end())
            scenarios.push_back(r.scenario);
        if (std::find(estimators.begin(), estimators.end(), r.estimator) == estimators.end())
            estimators.push_back(r.estimator);
    }
    const Metric metrics[] = {Metric::Bias, Metric::Rmse, Metric::Coverage};

    const double width = kLeft + scenarios.size() * (kPanelW + kGapX);
    const double height = kTop + 3 * (kPanelH + kGapY) + 20.0;
    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(width) << "\" height=\""
        << num(height) << "\" viewBox=\"0 0 " << num(width) << ' ' << num(height) << "\">\n";
    svg << "<rect x=\"0\" y=\"0\" width=\"" << num(width) << "\" height=\"" << num(height)
        << "\" fill=\"white\"/>\n";

    // Legend.
    svg << "<g class=\"legend\" font-family=\"sans-serif\" font-size=\"12\">\n";
    double lx = kLeft;
    for (auto e : estimators) {
        svg << "<line x1=\"" << num(lx) << "\" y1=\"20\" x2=\"" << num(lx + 30)
            << "\" y2=\"20\" " << stroke_attrs(e) << "/>\n";
        svg << "<text x=\"" << num(lx + 36) << "\" y=\"24\">" << legend_label(e) << "</text>\n";
        lx += 190.0;
    }
    svg << "</g>\n";

    for (std::size_t col = 0; col < scenarios.size(); ++col) {
        const std::string& scenario = scenarios[col];
        Range xr;
        for (const auto& r : rows) {
            if (r.scenario == scenario) xr.add(r.sigma_delta);
        }
        if (xr.hi - xr.lo < 1e-12) {
            xr.lo -= 0.5;
            xr.hi += 0.5;
        }
        for (std::size_t mi = 0; mi < 3; ++mi) {
            const Metric m = metrics[mi];
            Range yr;
            for (const auto& r : rows) {
                if (r.scenario == scenario) yr.add(metric_value(r, m));
            }
            if (m == Metric::Bias) yr.add(0.0);
            if (m == Metric::Rmse) yr.add(0.0);
            if (m == Metric::Coverage) {
                yr.add(0.95);
                yr.add(1.0);
            }
            yr.pad();

            const double x0 = kLeft + col * (kPanelW + kGapX);
            const double y0 = kTop + mi * (kPanelH + kGapY);
            const auto px = [&](double v) { return x0 + (v - xr.lo) / (xr.hi - xr.lo) * kPanelW; };
            const auto py = [&](double v) {
                return y0 + kPanelH - (v - yr.lo) / (yr.hi - yr.lo) * kPanelH;
            };

            svg << "<g class=\"panel\" data-scenario=\"" << scenario << "\" data-metric=\""
                << metric_name(m) << "\" font-family=\"sans-serif\" font-size=\"10\">\n";
            svg << "<rect x=\"" << num(x0) << "\" y=\"" << num(y0) << "\" width=\""
                << num(kPanelW) << "\" height=\"" << num(kPanelH)
                << "\" fill=\"none\" stroke=\"black\"/>\n";
            if (mi == 0) {
                svg << "<text x=\"" << num(x0 + kPanelW / 2) << "\" y=\"" << num(y0 - 8)
                    << "\" text-anchor=\"middle\" font-size=\"12\">" << scenario << "</text>\n";
            }
            svg << "<text x=\"" << num(x0 - 45) << "\" y=\"" << num(y0 + kPanelH / 2)
                << "\" text-anchor=\"middle\" transform=\"rotate(-90 " << num(x0 - 45) << ' '
                << num(y0 + kPanelH / 2) << ")\" font-size=\"12\">" << metric_label(m)
                << "</text>\n";
            for (int t = 0; t <= 4; ++t) {
                const double yv = yr.lo + t * (yr.hi - yr.lo) / 4.0;
                svg << "<text x=\"" << num(x0 - 4) << "\" y=\"" << num(py(yv) + 3)
                    << "\" text-anchor=\"end\">" << tick(yv) << "</text>\n";
                const double xv = xr.lo + t * (xr.hi - xr.lo) / 4.0;
                svg << "<text x=\"" << num(px(xv)) << "\" y=\"" << num(y0 + kPanelH + 12)
                    << "\" text-anchor=\"middle\">" << tick(xv) << "</text>\n";
            }
            if (mi == 2) {
                svg << "<text x=\"" << num(x0 + kPanelW / 2) << "\" y=\""
                    << num(y0 + kPanelH + 28) << "\" text-anchor=\"middle\">sigma_delta</text>\n";
            }
            if (m == Metric::Coverage) {
                svg << "<line class=\"nominal\" x1=\"" << num(x0) << "\" y1=\"" << num(py(0.95))
                    << "\" x2=\"" << num(x0 + kPanelW) << "\" y2=\"" << num(py(0.95))
                    << "\" stroke=\"gray\" stroke-width=\"1\"/>\n";
            }
            if (m == Metric::Bias && yr.lo < 0.0 && yr.hi > 0.0) {
                svg << "<line class=\"zero\" x1=\"" << num(x0) << "\" y1=\"" << num(py(0.0))
                    << "\" x2=\"" << num(x0 + kPanelW) << "\" y2=\"" << num(py(0.0))
                    << "\" stroke=\"lightgray\" stroke-width=\"1\"/>\n";
            }
            for (auto e : estimators) {
                std::vector<std::pair<double, double>> pts;
                for (const auto& r : rows) {
                    if (r.scenario != scenario || r.estimator != e) continue;
                    const double v = metric_value(r, m);
                    if (std::isfinite(v)) pts.emplace_back(r.sigma_delta, v);
                }
                if (pts.empty()) continue;
                std::sort(pts.begin(), pts.end());
                svg << "<polyline class=\"series\" data-estimator=\"" << to_string(e)
                    << "\" points=\"";
                for (std::size_t i = 0; i < pts.size(); ++i) {
                    if (i) svg << ' ';
                    svg << num(px(pts[i].first)) << ',' << num(py(pts[i].second));
                }
                svg << "\" " << stroke_attrs(e) << "/>\n";
            }
            svg << "</g>\n";
        }
    }
    svg << "</svg>\n";
    return svg.str();
}

void write_figure_data_csv(std::ostream& out, std::span<const MetricsRow> rows) {
    out << "scenario,sigma_delta,estimator,metric,value,std_error\n";
    for (const auto& r : rows) {
        const std::string prefix =
            r.scenario + ',' + format_double(r.sigma_delta) + ',' + to_string(r.estimator) + ',';
        out << prefix << "bias," << format_double(r.bias) << ',' << format_double(r.bias_se)
            << '\n';
        out << prefix << "rmse," << format_double(r.rmse) << ',' << format_double(r.rmse_se)
            << '\n';
        out << prefix << "coverage," << format_double(r.coverage) << ','
            << format_double(r.coverage_se) << '\n';
    }
}

std::filesystem::path emit_figure(std::span<const MetricsRow> rows,
                                  const std::filesystem::path& svg_path) {
    const std::string svg = render_figure_svg(rows);
    {
        std::ofstream out(svg_path);
        if (!out) throw std::runtime_error("cannot write " + svg_path.string());
        out << svg;
    }
    std::filesystem::path csv_path = svg_path;
    csv_path.replace_extension(".csv");
    std::ofstream out(csv_path);
    if (!out) throw std::runtime_error("cannot write " + csv_path.string());
    write_figure_data_csv(out, rows);
    return csv_path;
}

}  // namespace pairsim
