// SPDX-License-Identifier: Apache-2.0
//
// Training driver. Output directory layout:
//   run.toml        resolved configuration
//   plan.toml       stage plan and cost targets
//   trace.csv       one row per step (see trace.hpp)
//   checkpoint.bin  latest checkpoint; the final one once the run completes
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>

#include "layerwise/config.hpp"
#include "layerwise/costmodel.hpp"
#include "layerwise/stagescheduler.hpp"
#include "layerwise/trace.hpp"

namespace layerwise {

// Cost parameters in token units: one step costs tokens_per_step units.
CostParams cost_params_for(const TrainConfig& cfg);

// First step whose metered cumulative cost reaches the baseline cost of
// regime.baseline_steps steps. For a baseline regime this is baseline_steps.
std::int64_t equal_compute_step_for(const TrainConfig& cfg);

// Stage plan with continual_steps = "auto" resolved to run until the
// equal-compute step.
StagePlan plan_for(const TrainConfig& cfg);

struct RunOptions {
    bool resume = false;  // continue from out_dir/checkpoint.bin when present
    // Return once this many steps are done, without writing a final
    // checkpoint, as if the process had been killed there.
    std::optional<std::int64_t> stop_after;
    // Cost-only run: writes the trace (no losses) without training.
    bool dry_run = false;
    std::ostream* log = nullptr;
};

struct RunResult {
    std::filesystem::path out_dir;
    std::filesystem::path trace_path;
    std::filesystem::path checkpoint_path;
    std::int64_t total_steps = 0;
    std::int64_t steps_completed = 0;
    std::int64_t resumed_from = 0;
    std::int64_t equal_compute_step = 0;
    bool completed = false;
};

RunResult run(const TrainConfig& cfg, const RunOptions& options = {});

}  // namespace layerwise
