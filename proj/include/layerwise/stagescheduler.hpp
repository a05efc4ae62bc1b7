// SPDX-License-Identifier: Apache-2.0
//
// Incremental layer-wise schedule: L blocks split into S stages of m = L/S
// blocks. Each stage first trains only its new blocks on top of the frozen
// prefix (Phase 1), then fine-tunes the whole active prefix (Phase 2). After
// the incremental budget the full model trains jointly (Continual). A
// baseline plan trains the full model from step 0.
//
// Budgets are counted in schedule units (training steps, one batch each);
// directive_at maps a unit index to what that step trains.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "layerwise/rational.hpp"

namespace layerwise {

enum class Mode { phase1, phase2, continual, baseline };

std::string_view to_string(Mode mode);

struct StepDirective {
    Mode mode = Mode::baseline;
    int stage = 0;  // 1-based for phase1/phase2, 0 otherwise
    int active_depth = 0;
    int grad_depth_lo = 0;
    bool train_embeddings_head = true;

    // e.g. "phase1:2", "continual"
    std::string label() const;
    bool operator==(const StepDirective&) const = default;
};

StepDirective parse_directive_label(std::string_view label, int layers, int stages);

struct StageBudget {
    std::int64_t phase1_units = 0;
    std::int64_t phase2_units = 0;
};

struct StagePlan {
    int layers = 0;
    int stages = 0;
    int layers_per_stage = 0;
    bool baseline = false;
    std::int64_t incremental_units = 0;  // T_inc (for baseline: T)
    std::int64_t continual_units = 0;
    Rational phase_split{1, 2};
    std::vector<StageBudget> budgets;  // one per stage

    std::int64_t total_units() const { return incremental_units + continual_units; }
    // Active depth at stage i, L_i = i * m.
    int depth_at_stage(int stage) const { return stage * layers_per_stage; }
    // First unit index of stage i (1-based stage), and of its Phase 2.
    std::int64_t stage_start(int stage) const;
    std::int64_t phase2_start(int stage) const;
};

// Per-stage budget = floor(i*T_inc/S) - floor((i-1)*T_inc/S) so stages sum to
// T_inc exactly; Phase 1 gets floor(stage * phase_split), Phase 2 the rest.
StagePlan build_plan(int layers, int stages, std::int64_t incremental_units, std::int64_t continual_units,
                     const Rational& phase_split = Rational(1, 2));

StagePlan baseline_plan(int layers, std::int64_t units);

// Units beyond the planned budget keep the final directive (Continual for
// incremental plans, Baseline for baseline plans).
StepDirective directive_at(const StagePlan& plan, std::int64_t units_consumed);

// Directive of Phase 1 / Phase 2 of a stage, independent of budgets.
StepDirective phase_directive(const StagePlan& plan, Mode mode, int stage);

// The ordered list of (directive, exact unit budget) segments of the
// incremental part, with the unrounded per-phase budget T_inc*split/S
// (T_inc*(1-split)/S). Used for exact cost accounting.
struct ExactSegment {
    StepDirective directive;
    Rational units;
};
std::vector<ExactSegment> exact_segments(const StagePlan& plan, const Rational& incremental_units);

// TOML-style echo of the plan for run metadata.
std::string describe(const StagePlan& plan);

}  // namespace layerwise
