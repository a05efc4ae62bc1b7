// SPDX-License-Identifier: Apache-2.0
//
// Compute accounting in block-layer-token units. One unit is one transformer
// block processing one token in one pass (forward, or backward scaled by the
// backward ratio rho). Embedding, final-norm and head work is not counted.
//
//   baseline:     C = T * L * c * (1 + rho)
//   phase 1 (i):  per token (L_i + rho * m) * c
//   phase 2 (i):  per token (1 + rho) * L_i * c
//   incremental:  C = T_inc * c * L * (3S + 5) / (4S)            (rho == 1)
//   continual to match baseline when T_inc == T:
//                 T_cont = 5/8 * (1 - 1/S) * T                   (rho == 1)
//
// All arithmetic is exact (arbitrary-precision rationals).
#pragma once

#include <cstdint>
#include <map>
#include <utility>
#include <vector>

#include "layerwise/rational.hpp"
#include "layerwise/stagescheduler.hpp"

namespace layerwise {

struct CostParams {
    int layers = 12;
    int stages = 4;
    Rational baseline_units{10000};     // T
    Rational incremental_units{10000};  // T_inc
    Rational unit_cost{1};              // c
    Rational backward_ratio{1};         // rho

    // Throws ConfigError for negative budgets and non-positive c or rho. Divisibility of layers by
    // stages is checked only by the operations that walk the schedule.
    void validate() const;
    bool divisible() const { return stages > 0 && layers % stages == 0; }
    Rational layers_per_stage() const { return Rational(layers, stages); }
};

Rational baseline_cost(const CostParams& params, const Rational& units);

// Closed form; requires backward_ratio == 1 (AssumptionError otherwise).
// Does not require layers % stages == 0: the formula is evaluated with a
// fractional m in that case.
Rational incremental_cost_closed_form(const CostParams& params);

// Explicit sum over stages and phases, valid for any backward ratio.
Rational incremental_cost_brute_force(const CostParams& params);

struct ContinualMatch {
    Rational continual_units;    // T_cont
    Rational equal_compute;      // T + T_cont (exact)
    std::int64_t equal_compute_step = 0;  // nearest whole step, halves up
    bool closed_form = false;    // false when solved from the summed costs
};

// Continual budget that brings incremental + continual cost up to the
// baseline cost of T units. Uses 5/8 (1 - 1/S) T when rho == 1 and
// T_inc == T; otherwise solves
//   C_inc + T_cont * L * c * (1 + rho) = C_baseline(T)
// with C_inc from the brute-force sum.
ContinualMatch continual_units_to_match(const CostParams& params);

// Per-unit cost of one step under a directive.
Rational directive_unit_cost(const StepDirective& directive, const CostParams& params);

struct LedgerKey {
    Mode mode;
    int stage;
    auto operator<=>(const LedgerKey&) const = default;
};

// Runtime meter. Accumulates cost per (mode, stage) and keeps the cumulative
// cost after every recorded step.
class CostLedger {
public:
    explicit CostLedger(CostParams params);

    const CostParams& params() const noexcept { return params_; }

    // Adds units * c * (active_depth + rho * (active_depth - grad_depth_lo + 1))
    // and returns the new cumulative total.
    const Rational& record(const StepDirective& directive, const Rational& units);

    const Rational& total() const noexcept { return total_; }
    const std::map<LedgerKey, Rational>& by_phase() const noexcept { return by_phase_; }
    const std::vector<Rational>& cumulative() const noexcept { return cumulative_; }
    Rational cost_of(Mode mode, int stage = 0) const;

    // Restores a ledger to the state after `steps` recorded steps, used when
    // resuming a run from a checkpoint.
    void replay(const StagePlan& plan, std::int64_t steps, const Rational& units_per_step);

private:
    CostParams params_;
    Rational total_{0};
    std::map<LedgerKey, Rational> by_phase_;
    std::vector<Rational> cumulative_;
};

// Meters a full incremental schedule with exact (unrounded) phase budgets.
Rational meter_incremental_exact(const CostParams& params);

// Meters the whole-step plan (phase budgets rounded to steps).
Rational meter_plan(const StagePlan& plan, const CostParams& params, const Rational& units_per_step);

struct CostRow {
    std::string stage;  // "1".."S", or "-" for continual/baseline
    std::string phase;  // "phase1", "phase2", "continual", "baseline"
    Rational units;
    Rational cost;
    Rational cumulative;
};

// Rows of the cost report for an incremental schedule followed by T_cont
// units of continual training, in exact units.
std::vector<CostRow> cost_report_rows(const CostParams& params, const Rational& continual_units);
std::string cost_report_csv(const std::vector<CostRow>& rows);

}  // namespace layerwise
