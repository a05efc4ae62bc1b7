// SPDX-License-Identifier: Apache-2.0
#include "layerwise/costmodel.hpp"

#include <sstream>

#include "layerwise/errors.hpp"

namespace layerwise {

void CostParams::validate() const {
    if (layers < 1) throw ConfigError("layers must be >= 1");
    if (stages < 1) throw ConfigError("stages must be >= 1");
    if (baseline_units < 0) throw ConfigError("baseline budget must be >= 0");
    if (incremental_units < 0) throw ConfigError("incremental budget must be >= 0");
    if (unit_cost <= 0) throw ConfigError("unit cost c must be > 0");
    if (backward_ratio <= 0) throw ConfigError("backward ratio must be > 0");
}

namespace {

void require_divisible(const CostParams& p) {
    if (!p.divisible()) {
        throw ConfigError("layers (" + std::to_string(p.layers) + ") not divisible by stages (" +
                          std::to_string(p.stages) + ")");
    }
}

StagePlan shape_only_plan(const CostParams& p) {
    // Budgets are irrelevant for exact_segments, which takes T_inc directly.
    return build_plan(p.layers, p.stages, 1, 0);
}

}  // namespace

Rational baseline_cost(const CostParams& params, const Rational& units) {
    params.validate();
    return units * params.layers * params.unit_cost * (1 + params.backward_ratio);
}

Rational incremental_cost_closed_form(const CostParams& params) {
    params.validate();
    if (params.backward_ratio != 1) {
        throw AssumptionError("closed-form incremental cost assumes equal forward/backward cost (rho = 1); rho = " +
                              to_string(params.backward_ratio) + " needs the brute-force sum or the meter");
    }
    return params.incremental_units * params.unit_cost * params.layers * (3 * params.stages + 5) /
           (4 * params.stages);
}

Rational incremental_cost_brute_force(const CostParams& params) {
    params.validate();
    require_divisible(params);
    const int m = params.layers / params.stages;
    const Rational phase_units = params.incremental_units / (2 * params.stages);
    const Rational& c = params.unit_cost;
    const Rational& rho = params.backward_ratio;
    Rational total = 0;
    for (int i = 1; i <= params.stages; ++i) {
        const int depth = i * m;
        total += phase_units * (depth + rho * m) * c;      // new blocks only in backward
        total += phase_units * (depth + rho * depth) * c;  // full prefix
    }
    return total;
}

ContinualMatch continual_units_to_match(const CostParams& params) {
    params.validate();
    ContinualMatch out;
    if (params.backward_ratio == 1 && params.incremental_units == params.baseline_units) {
        out.continual_units = Rational(5, 8) * (1 - Rational(1, params.stages)) * params.baseline_units;
        out.closed_form = true;
    } else {
        const Rational per_unit = params.layers * params.unit_cost * (1 + params.backward_ratio);
        out.continual_units =
            (baseline_cost(params, params.baseline_units) - incremental_cost_brute_force(params)) / per_unit;
        if (out.continual_units < 0) {
            throw AssumptionError("the incremental budget alone already exceeds the baseline cost");
        }
    }
    out.equal_compute = params.incremental_units + out.continual_units;
    out.equal_compute_step = to_int64(round_half_up(out.equal_compute));
    return out;
}

Rational directive_unit_cost(const StepDirective& d, const CostParams& params) {
    const int backward_layers = d.active_depth - d.grad_depth_lo + 1;
    return params.unit_cost * (d.active_depth + params.backward_ratio * backward_layers);
}

CostLedger::CostLedger(CostParams params) : params_(std::move(params)) {
    params_.validate();
}

const Rational& CostLedger::record(const StepDirective& directive, const Rational& units) {
    const Rational cost = units * directive_unit_cost(directive, params_);
    by_phase_[LedgerKey{directive.mode, directive.stage}] += cost;
    total_ += cost;
    cumulative_.push_back(total_);
    return total_;
}

Rational CostLedger::cost_of(Mode mode, int stage) const {
    const auto it = by_phase_.find(LedgerKey{mode, stage});
    return it == by_phase_.end() ? Rational(0) : it->second;
}

void CostLedger::replay(const StagePlan& plan, std::int64_t steps, const Rational& units_per_step) {
    total_ = 0;
    by_phase_.clear();
    cumulative_.clear();
    for (std::int64_t k = 0; k < steps; ++k) record(directive_at(plan, k), units_per_step);
}

Rational meter_incremental_exact(const CostParams& params) {
    params.validate();
    require_divisible(params);
    CostLedger ledger(params);
    for (const auto& seg : exact_segments(shape_only_plan(params), params.incremental_units)) {
        ledger.record(seg.directive, seg.units);
    }
    return ledger.total();
}

Rational meter_plan(const StagePlan& plan, const CostParams& params, const Rational& units_per_step) {
    CostLedger ledger(params);
    ledger.replay(plan, plan.total_units(), units_per_step);
    return ledger.total();
}

std::vector<CostRow> cost_report_rows(const CostParams& params, const Rational& continual_units) {
    params.validate();
    require_divisible(params);
    std::vector<CostRow> rows;
    Rational cumulative = 0;
    const StagePlan plan = shape_only_plan(params);
    for (const auto& seg : exact_segments(plan, params.incremental_units)) {
        const Rational cost = seg.units * directive_unit_cost(seg.directive, params);
        cumulative += cost;
        rows.push_back({std::to_string(seg.directive.stage), std::string(to_string(seg.directive.mode)), seg.units,
                        cost, cumulative});
    }
    if (continual_units > 0) {
        const StepDirective d = phase_directive(plan, Mode::continual, 0);
        const Rational cost = continual_units * directive_unit_cost(d, params);
        cumulative += cost;
        rows.push_back({"-", "continual", continual_units, cost, cumulative});
    }
    return rows;
}

std::string cost_report_csv(const std::vector<CostRow>& rows) {
    std::ostringstream out;
    out << "stage,phase,tokens,cost,cumulative_cost\n";
    for (const auto& r : rows) {
        out << r.stage << "," << r.phase << "," << to_string(r.units) << "," << to_string(r.cost) << ","
            << to_string(r.cumulative) << "\n";
    }
    return out.str();
}

}  // namespace layerwise
