// SPDX-License-Identifier: Apache-2.0
#include "layerwise/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "layerwise/errors.hpp"

namespace layerwise {
namespace {

constexpr double kWidth = 800;
constexpr double kHeight = 500;
constexpr double kLeft = 70;
constexpr double kRight = 170;
constexpr double kTop = 40;
constexpr double kBottom = 55;

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

std::string escape_xml(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out.push_back(c);
        }
    }
    return out;
}

std::string fmt(double v, int digits = 2) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

std::string g17(double v) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// Round tick step: 1, 2 or 5 times a power of ten.
double tick_step(double span, int target) {
    if (span <= 0) return 1;
    const double raw = span / target;
    const double mag = std::pow(10.0, std::floor(std::log10(raw)));
    for (double m : {1.0, 2.0, 5.0, 10.0}) {
        if (raw <= m * mag) return m * mag;
    }
    return 10 * mag;
}

std::string csv_loss(const std::optional<double>& v) {
    return v ? g17(*v) : "";
}

std::optional<double> metric_of(const TraceRow& r, LossMetric metric) {
    return metric == LossMetric::train ? r.train_loss : r.val_loss;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
    if (!out) throw IoError("error writing " + path.string());
}

}  // namespace

LossMetric parse_loss_metric(std::string_view text) {
    if (text == "train" || text == "train_loss") return LossMetric::train;
    if (text == "val" || text == "val_loss") return LossMetric::val;
    throw ConfigError("unknown metric '" + std::string(text) + "' (train_loss, val_loss)");
}

PlotSpec loss_plot(const std::vector<std::pair<std::string, RunTrace>>& traces, const ComparisonReport* report,
                   LossMetric metric) {
    PlotSpec spec;
    spec.y_label = metric == LossMetric::train ? "train loss" : "validation loss";
    spec.title = spec.y_label + " vs. step";
    for (const auto& [label, trace] : traces) {
        PlotSeries s;
        s.label = label;
        for (const auto& r : trace.rows) {
            if (const auto v = metric_of(r, metric); v && std::isfinite(*v)) {
                s.points.emplace_back(static_cast<double>(r.step), *v);
            }
        }
        spec.series.push_back(std::move(s));
    }
    if (report) {
        for (const auto& p : report->points) {
            if (!p.reached) continue;
            const auto y = metric == LossMetric::train ? p.train_loss : p.val_loss;
            if (!y) continue;
            spec.markers.push_back({p.label, static_cast<double>(p.step), *y});
        }
    }
    return spec;
}

std::string render_svg(const PlotSpec& spec) {
    double x_lo = std::numeric_limits<double>::infinity();
    double x_hi = -x_lo;
    double y_lo = x_lo;
    double y_hi = -x_lo;
    auto extend = [&](double x, double y) {
        x_lo = std::min(x_lo, x);
        x_hi = std::max(x_hi, x);
        y_lo = std::min(y_lo, y);
        y_hi = std::max(y_hi, y);
    };
    for (const auto& s : spec.series) {
        for (const auto& [x, y] : s.points) extend(x, y);
    }
    for (const auto& m : spec.markers) extend(m.x, m.y);
    if (!std::isfinite(x_lo)) {
        x_lo = 0;
        x_hi = 1;
        y_lo = 0;
        y_hi = 1;
    }
    x_lo = std::min(x_lo, 0.0);
    if (x_hi <= x_lo) x_hi = x_lo + 1;
    if (y_hi <= y_lo) {
        y_lo -= 0.5;
        y_hi += 0.5;
    }
    const double pad = 0.05 * (y_hi - y_lo);
    y_lo -= pad;
    y_hi += pad;

    const double pw = kWidth - kLeft - kRight;
    const double ph = kHeight - kTop - kBottom;
    auto px = [&](double x) { return kLeft + (x - x_lo) / (x_hi - x_lo) * pw; };
    auto py = [&](double y) { return kTop + (y_hi - y) / (y_hi - y_lo) * ph; };

    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
        << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    svg << "<text x=\"" << kLeft + pw / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">"
        << escape_xml(spec.title) << "</text>\n";

    svg << "<g class=\"axes\" stroke=\"#333\" fill=\"none\">\n";
    svg << "<rect x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\"" << pw << "\" height=\"" << ph << "\"/>\n";
    svg << "</g>\n<g class=\"ticks\" fill=\"#333\">\n";
    const double xs = tick_step(x_hi - x_lo, 8);
    for (double t = std::ceil(x_lo / xs) * xs; t <= x_hi + 1e-9 * xs; t += xs) {
        svg << "<line x1=\"" << fmt(px(t)) << "\" y1=\"" << kTop + ph << "\" x2=\"" << fmt(px(t)) << "\" y2=\""
            << kTop + ph + 5 << "\" stroke=\"#333\"/>";
        svg << "<text x=\"" << fmt(px(t)) << "\" y=\"" << kTop + ph + 18 << "\" text-anchor=\"middle\">"
            << g17(t) << "</text>\n";
    }
    const double ys = tick_step(y_hi - y_lo, 6);
    const int y_digits = std::max(0, static_cast<int>(-std::floor(std::log10(ys))));
    for (double t = std::ceil(y_lo / ys) * ys; t <= y_hi + 1e-9 * ys; t += ys) {
        svg << "<line x1=\"" << kLeft - 5 << "\" y1=\"" << fmt(py(t)) << "\" x2=\"" << kLeft << "\" y2=\""
            << fmt(py(t)) << "\" stroke=\"#333\"/>";
        svg << "<text x=\"" << kLeft - 8 << "\" y=\"" << fmt(py(t) + 4) << "\" text-anchor=\"end\">"
            << fmt(t, y_digits) << "</text>\n";
    }
    svg << "</g>\n";
    svg << "<text x=\"" << kLeft + pw / 2 << "\" y=\"" << kHeight - 12 << "\" text-anchor=\"middle\">"
        << escape_xml(spec.x_label) << "</text>\n";
    svg << "<text transform=\"translate(18," << kTop + ph / 2 << ") rotate(-90)\" text-anchor=\"middle\">"
        << escape_xml(spec.y_label) << "</text>\n";

    for (std::size_t i = 0; i < spec.series.size(); ++i) {
        const auto& s = spec.series[i];
        const char* color = kPalette[i % std::size(kPalette)];
        svg << "<polyline class=\"series\" data-label=\"" << escape_xml(s.label) << "\" fill=\"none\" stroke=\""
            << color << "\" stroke-width=\"1.5\" points=\"";
        for (std::size_t k = 0; k < s.points.size(); ++k) {
            if (k) svg << ' ';
            svg << fmt(px(s.points[k].first)) << ',' << fmt(py(s.points[k].second));
        }
        svg << "\"/>\n";
        const double ly = kTop + 14 + 18 * static_cast<double>(i);
        svg << "<line x1=\"" << kLeft + pw + 12 << "\" y1=\"" << ly << "\" x2=\"" << kLeft + pw + 36 << "\" y2=\""
            << ly << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>";
        svg << "<text x=\"" << kLeft + pw + 42 << "\" y=\"" << ly + 4 << "\">" << escape_xml(s.label) << "</text>\n";
    }
    for (const auto& m : spec.markers) {
        std::string color = "#000";
        for (std::size_t i = 0; i < spec.series.size(); ++i) {
            if (spec.series[i].label == m.label) color = kPalette[i % std::size(kPalette)];
        }
        svg << "<circle class=\"marker\" data-label=\"" << escape_xml(m.label) << "\" data-step=\"" << g17(m.x)
            << "\" cx=\"" << fmt(px(m.x)) << "\" cy=\"" << fmt(py(m.y)) << "\" r=\"6\" fill=\"" << color
            << "\" stroke=\"black\"/>\n";
    }
    svg << "</svg>\n";
    return svg.str();
}

PlotFiles emit_plots(const std::vector<std::pair<std::string, RunTrace>>& traces, const PlotSpec& spec,
                     const std::filesystem::path& svg_path) {
    if (traces.empty()) throw DataError("nothing to plot: no traces given");
    PlotFiles files;
    files.svg = svg_path;
    auto stem = svg_path;
    stem.replace_extension();
    files.data_csv = stem.string() + ".csv";
    files.markers_csv = stem.string() + ".markers.csv";
    if (svg_path.has_parent_path()) std::filesystem::create_directories(svg_path.parent_path());

    std::string data = "series,step,tokens,cum_cost,mode,train_loss,val_loss\n";
    for (const auto& [label, trace] : traces) {
        for (const auto& r : trace.rows) {
            data += label + ',' + std::to_string(r.step) + ',' + std::to_string(r.tokens) + ',' +
                    to_string(r.cum_cost) + ',' + r.mode + ',' + csv_loss(r.train_loss) + ',' +
                    csv_loss(r.val_loss) + '\n';
        }
    }
    write_text(files.data_csv, data);

    std::string markers = "series,step,loss\n";
    for (const auto& m : spec.markers) markers += m.label + ',' + g17(m.x) + ',' + g17(m.y) + '\n';
    write_text(files.markers_csv, markers);

    try {
        write_text(svg_path, render_svg(spec));
        files.svg_written = true;
    } catch (const std::exception& e) {
        files.svg_error = e.what();
    }
    return files;
}

}  // namespace layerwise
