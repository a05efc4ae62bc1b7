// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "layerwise/rational.hpp"
#include "layerwise/trace.hpp"

namespace layerwise {

struct EqualComputePoint {
    std::string label;
    bool reached = false;
    std::int64_t step = 0;                 // first step with cum_cost >= target
    Rational cost{0};                      // cum_cost at that step
    std::optional<std::int64_t> val_step;  // row the val loss was taken from
    std::optional<double> val_loss;
    std::optional<double> train_loss;
    std::optional<double> val_gap;    // incremental - baseline
    std::optional<double> train_gap;
    // First step whose val loss is <= the baseline's val loss at T.
    std::optional<std::int64_t> catch_up_step;
};

struct ComparisonReport {
    std::int64_t baseline_steps = 0;
    Rational target_cost{0};  // baseline cum_cost at T
    std::optional<std::int64_t> baseline_val_step;
    std::optional<double> baseline_val_loss;
    std::optional<double> baseline_train_loss;
    std::vector<EqualComputePoint> points;
};

// Val losses are taken at the equal-compute row, or the nearest evaluated
// row before it when that row carries none. Throws DataError when the
// baseline trace has no row at T.
ComparisonReport compare(const RunTrace& baseline,
                         const std::vector<std::pair<std::string, RunTrace>>& incremental,
                         std::int64_t baseline_steps);

std::string format_report(const ComparisonReport& report);
// label,reached,step,cum_cost,val_step,val_loss,baseline_val_loss,val_gap,train_loss,baseline_train_loss,train_gap,catch_up_step
std::string report_csv(const ComparisonReport& report);

}  // namespace layerwise
