// SPDX-License-Identifier: Apache-2.0
#include "layerwise/compare.hpp"

#include <cstdio>
#include <sstream>

#include "layerwise/errors.hpp"

namespace layerwise {
namespace {

const TraceRow* last_evaluated(const RunTrace& trace, std::int64_t step) {
    const TraceRow* found = nullptr;
    for (const auto& r : trace.rows) {
        if (r.step > step) break;
        if (r.val_loss) found = &r;
    }
    return found;
}

std::string num(const std::optional<double>& v) {
    if (!v) return "";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", *v);
    return buf;
}

std::string short_num(const std::optional<double>& v) {
    if (!v) return "n/a";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.6f", *v);
    return buf;
}

}  // namespace

ComparisonReport compare(const RunTrace& baseline,
                         const std::vector<std::pair<std::string, RunTrace>>& incremental,
                         std::int64_t baseline_steps) {
    const TraceRow* base_row = baseline.find(baseline_steps);
    if (!base_row) {
        throw DataError("baseline trace has no row at step " + std::to_string(baseline_steps));
    }
    ComparisonReport report;
    report.baseline_steps = baseline_steps;
    report.target_cost = base_row->cum_cost;
    report.baseline_train_loss = base_row->train_loss;
    if (const TraceRow* ev = last_evaluated(baseline, baseline_steps)) {
        report.baseline_val_step = ev->step;
        report.baseline_val_loss = ev->val_loss;
    }

    for (const auto& [label, trace] : incremental) {
        EqualComputePoint p;
        p.label = label;
        for (const auto& r : trace.rows) {
            if (!p.reached && r.cum_cost >= report.target_cost) {
                p.reached = true;
                p.step = r.step;
                p.cost = r.cum_cost;
                p.train_loss = r.train_loss;
            }
            if (!p.catch_up_step && r.val_loss && report.baseline_val_loss && *r.val_loss <= *report.baseline_val_loss) {
                p.catch_up_step = r.step;
            }
        }
        if (p.reached) {
            if (const TraceRow* ev = last_evaluated(trace, p.step)) {
                p.val_step = ev->step;
                p.val_loss = ev->val_loss;
            }
            if (p.val_loss && report.baseline_val_loss) p.val_gap = *p.val_loss - *report.baseline_val_loss;
            if (p.train_loss && report.baseline_train_loss) p.train_gap = *p.train_loss - *report.baseline_train_loss;
        }
        report.points.push_back(std::move(p));
    }
    return report;
}

std::string format_report(const ComparisonReport& report) {
    std::ostringstream out;
    out << "baseline at step " << report.baseline_steps << ": cum_cost = " << to_string(report.target_cost)
        << ", train_loss = " << short_num(report.baseline_train_loss) << ", val_loss = "
        << short_num(report.baseline_val_loss);
    if (report.baseline_val_step && *report.baseline_val_step != report.baseline_steps) {
        out << " (evaluated at step " << *report.baseline_val_step << ")";
    }
    out << "\n";
    for (const auto& p : report.points) {
        out << p.label << ": ";
        if (!p.reached) {
            out << "equal compute not reached\n";
            continue;
        }
        out << "equal-compute step " << p.step << " (cum_cost " << to_string(p.cost) << "), val_loss "
            << short_num(p.val_loss);
        if (p.val_step && *p.val_step != p.step) out << " (evaluated at step " << *p.val_step << ")";
        out << ", gap " << short_num(p.val_gap) << ", train gap " << short_num(p.train_gap);
        out << ", catches up with baseline val loss: ";
        if (p.catch_up_step) {
            out << "step " << *p.catch_up_step;
        } else {
            out << "not reached";
        }
        out << "\n";
    }
    return out.str();
}

std::string report_csv(const ComparisonReport& report) {
    std::ostringstream out;
    out << "label,reached,step,cum_cost,val_step,val_loss,baseline_val_loss,val_gap,train_loss,baseline_train_loss,"
           "train_gap,catch_up_step\n";
    for (const auto& p : report.points) {
        out << p.label << ',' << (p.reached ? "true" : "false") << ',';
        if (p.reached) out << p.step;
        out << ',' << (p.reached ? to_string(p.cost) : "") << ',';
        if (p.val_step) out << *p.val_step;
        out << ',' << num(p.val_loss) << ',' << num(report.baseline_val_loss) << ',' << num(p.val_gap) << ','
            << num(p.train_loss) << ',' << num(report.baseline_train_loss) << ',' << num(p.train_gap) << ',';
        if (p.catch_up_step) out << *p.catch_up_step;
        out << "\n";
    }
    return out.str();
}

}  // namespace layerwise
