// SPDX-License-Identifier: Apache-2.0
//
// Loss-curve plots as standalone SVG: one polyline per series, filled
// circles at equal-compute points. Every plot is written together with
// CSVs holding the same data.
#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "layerwise/compare.hpp"
#include "layerwise/trace.hpp"

namespace layerwise {

struct PlotSeries {
    std::string label;
    std::vector<std::pair<double, double>> points;  // (step, loss)
};

struct PlotMarker {
    std::string label;
    double x = 0;
    double y = 0;
};

struct PlotSpec {
    std::string title;
    std::string x_label = "step";
    std::string y_label = "loss";
    std::vector<PlotSeries> series;
    std::vector<PlotMarker> markers;
};

enum class LossMetric { train, val };

LossMetric parse_loss_metric(std::string_view text);

// One series per trace; a marker per reached equal-compute point of the
// report (nullptr: no markers), placed at (step, loss) of that point.
PlotSpec loss_plot(const std::vector<std::pair<std::string, RunTrace>>& traces, const ComparisonReport* report,
                   LossMetric metric);

std::string render_svg(const PlotSpec& spec);

struct PlotFiles {
    std::filesystem::path svg;
    std::filesystem::path data_csv;     // series,step,tokens,cum_cost,mode,train_loss,val_loss
    std::filesystem::path markers_csv;  // series,step,loss
    bool svg_written = false;
    std::string svg_error;
};

// Writes <stem>.csv and <stem>.markers.csv first, then <stem>.svg. An SVG
// failure is reported in the result and leaves the CSVs intact.
PlotFiles emit_plots(const std::vector<std::pair<std::string, RunTrace>>& traces, const PlotSpec& spec,
                     const std::filesystem::path& svg_path);

}  // namespace layerwise
