// SPDX-License-Identifier: Apache-2.0
#include "layerwise/stagescheduler.hpp"

#include <sstream>

#include "layerwise/errors.hpp"

namespace layerwise {

std::string_view to_string(Mode mode) {
    switch (mode) {
        case Mode::phase1: return "phase1";
        case Mode::phase2: return "phase2";
        case Mode::continual: return "continual";
        case Mode::baseline: return "baseline";
    }
    return "unknown";
}

std::string StepDirective::label() const {
    if (mode == Mode::phase1 || mode == Mode::phase2) {
        return std::string(to_string(mode)) + ":" + std::to_string(stage);
    }
    return std::string(to_string(mode));
}

std::int64_t StagePlan::stage_start(int stage) const {
    std::int64_t start = 0;
    for (int i = 1; i < stage; ++i) {
        const auto& b = budgets.at(static_cast<std::size_t>(i - 1));
        start += b.phase1_units + b.phase2_units;
    }
    return start;
}

std::int64_t StagePlan::phase2_start(int stage) const {
    return stage_start(stage) + budgets.at(static_cast<std::size_t>(stage - 1)).phase1_units;
}

StagePlan build_plan(int layers, int stages, std::int64_t incremental_units, std::int64_t continual_units,
                     const Rational& phase_split) {
    if (layers < 1) throw ConfigError("layers must be >= 1, got " + std::to_string(layers));
    if (stages < 1) throw ConfigError("stages must be >= 1, got " + std::to_string(stages));
    if (layers % stages != 0) {
        throw ConfigError("layers (" + std::to_string(layers) + ") not divisible by stages (" +
                          std::to_string(stages) + ")");
    }
    if (incremental_units <= 0) throw ConfigError("incremental budget must be > 0");
    if (continual_units < 0) throw ConfigError("continual budget must be >= 0");
    if (phase_split < 0 || phase_split > 1) throw ConfigError("phase_split must lie in [0,1]");

    StagePlan plan;
    plan.layers = layers;
    plan.stages = stages;
    plan.layers_per_stage = layers / stages;
    plan.incremental_units = incremental_units;
    plan.continual_units = continual_units;
    plan.phase_split = phase_split;
    for (int i = 1; i <= stages; ++i) {
        const std::int64_t hi = incremental_units * i / stages;
        const std::int64_t lo = incremental_units * (i - 1) / stages;
        const std::int64_t stage_units = hi - lo;
        StageBudget b;
        b.phase1_units = to_int64(floor(Rational(stage_units) * phase_split));
        b.phase2_units = stage_units - b.phase1_units;
        plan.budgets.push_back(b);
    }
    return plan;
}

StagePlan baseline_plan(int layers, std::int64_t units) {
    if (layers < 1) throw ConfigError("layers must be >= 1, got " + std::to_string(layers));
    if (units <= 0) throw ConfigError("baseline budget must be > 0");
    StagePlan plan;
    plan.layers = layers;
    plan.stages = 1;
    plan.layers_per_stage = layers;
    plan.baseline = true;
    plan.incremental_units = units;
    return plan;
}

StepDirective phase_directive(const StagePlan& plan, Mode mode, int stage) {
    StepDirective d;
    d.mode = mode;
    switch (mode) {
        case Mode::phase1:
        case Mode::phase2:
            if (stage < 1 || stage > plan.stages) {
                throw ScheduleError("stage " + std::to_string(stage) + " outside 1.." + std::to_string(plan.stages));
            }
            d.stage = stage;
            d.active_depth = plan.depth_at_stage(stage);
            if (mode == Mode::phase1) {
                d.grad_depth_lo = (stage - 1) * plan.layers_per_stage + 1;
                // Nothing exists below stage 1 to ground the embeddings/head.
                d.train_embeddings_head = stage == 1;
            } else {
                d.grad_depth_lo = 1;
                d.train_embeddings_head = true;
            }
            break;
        case Mode::continual:
        case Mode::baseline:
            d.active_depth = plan.layers;
            d.grad_depth_lo = 1;
            d.train_embeddings_head = true;
            break;
    }
    return d;
}

StepDirective directive_at(const StagePlan& plan, std::int64_t units_consumed) {
    if (units_consumed < 0) throw ScheduleError("units consumed must be >= 0");
    if (plan.baseline) return phase_directive(plan, Mode::baseline, 0);
    std::int64_t cursor = 0;
    for (int i = 1; i <= plan.stages; ++i) {
        const auto& b = plan.budgets[static_cast<std::size_t>(i - 1)];
        if (units_consumed < cursor + b.phase1_units) return phase_directive(plan, Mode::phase1, i);
        cursor += b.phase1_units;
        if (units_consumed < cursor + b.phase2_units) return phase_directive(plan, Mode::phase2, i);
        cursor += b.phase2_units;
    }
    return phase_directive(plan, Mode::continual, 0);
}

StepDirective parse_directive_label(std::string_view label, int layers, int stages) {
    StagePlan shape;
    shape.layers = layers;
    shape.stages = stages;
    shape.layers_per_stage = stages > 0 ? layers / stages : 0;
    if (label == "continual") return phase_directive(shape, Mode::continual, 0);
    if (label == "baseline") return phase_directive(shape, Mode::baseline, 0);
    const auto colon = label.find(':');
    if (colon != std::string_view::npos) {
        const auto kind = label.substr(0, colon);
        const int stage = std::stoi(std::string(label.substr(colon + 1)));
        if (kind == "phase1") return phase_directive(shape, Mode::phase1, stage);
        if (kind == "phase2") return phase_directive(shape, Mode::phase2, stage);
    }
    throw DataError("unknown schedule mode '" + std::string(label) + "'");
}

std::vector<ExactSegment> exact_segments(const StagePlan& plan, const Rational& incremental_units) {
    std::vector<ExactSegment> out;
    if (plan.baseline) {
        out.push_back({phase_directive(plan, Mode::baseline, 0), incremental_units});
        return out;
    }
    const Rational per_stage = incremental_units / plan.stages;
    for (int i = 1; i <= plan.stages; ++i) {
        out.push_back({phase_directive(plan, Mode::phase1, i), per_stage * plan.phase_split});
        out.push_back({phase_directive(plan, Mode::phase2, i), per_stage * (1 - plan.phase_split)});
    }
    return out;
}

std::string describe(const StagePlan& plan) {
    std::ostringstream out;
    out << "[plan]\n";
    out << "regime = \"" << (plan.baseline ? "baseline" : "incremental") << "\"\n";
    out << "layers = " << plan.layers << "\n";
    if (plan.baseline) {
        out << "steps = " << plan.incremental_units << "\n";
        return out.str();
    }
    out << "stages = " << plan.stages << "\n";
    out << "layers_per_stage = " << plan.layers_per_stage << "\n";
    out << "incremental_steps = " << plan.incremental_units << "\n";
    out << "continual_steps = " << plan.continual_units << "\n";
    out << "phase_split = \"" << to_string(plan.phase_split) << "\"\n";
    out << "stage_budgets = [";
    for (std::size_t i = 0; i < plan.budgets.size(); ++i) {
        if (i) out << ", ";
        out << "[" << plan.budgets[i].phase1_units << ", " << plan.budgets[i].phase2_units << "]";
    }
    out << "]\n";
    return out.str();
}

}  // namespace layerwise
