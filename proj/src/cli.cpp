// SPDX-License-Identifier: Apache-2.0
#include "layerwise/cli.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iomanip>
#include <optional>

#include "layerwise/compare.hpp"
#include "layerwise/config.hpp"
#include "layerwise/corpus.hpp"
#include "layerwise/costmodel.hpp"
#include "layerwise/errors.hpp"
#include "layerwise/plot.hpp"
#include "layerwise/runner.hpp"
#include "layerwise/trace.hpp"

namespace layerwise {
namespace {

struct CommonFlags {
    std::optional<std::uint64_t> seed;
    std::optional<std::string> precision;
    std::optional<std::string> out;
};

// "label=path", or a bare path labelled by its parent directory name.
std::pair<std::string, std::filesystem::path> labelled_path(const std::string& spec) {
    const auto eq = spec.find('=');
    if (eq != std::string::npos) return {spec.substr(0, eq), spec.substr(eq + 1)};
    std::filesystem::path p(spec);
    std::string label = p.parent_path().filename().string();
    if (label.empty()) label = p.stem().string();
    return {label, p};
}

void write_file(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
    if (!out) throw IoError("error writing " + path.string());
}

int exit_status_of(const Error& e) {
    if (dynamic_cast<const ConfigError*>(&e)) return exit_code::usage;
    if (dynamic_cast<const DataError*>(&e)) return exit_code::data;
    if (dynamic_cast<const IoError*>(&e)) return exit_code::io;
    if (dynamic_cast<const NumericError*>(&e)) return exit_code::numeric;
    if (dynamic_cast<const ScheduleError*>(&e)) return exit_code::schedule;
    if (dynamic_cast<const AssumptionError*>(&e)) return exit_code::assumption;
    if (dynamic_cast<const DimensionError*>(&e)) return exit_code::dimension;
    return exit_code::failure;
}

const char* error_kind(int status) {
    switch (status) {
        case exit_code::usage: return "config error";
        case exit_code::data: return "data error";
        case exit_code::io: return "I/O error";
        case exit_code::numeric: return "numeric error";
        case exit_code::schedule: return "schedule error";
        case exit_code::assumption: return "assumption error";
        case exit_code::dimension: return "dimension error";
        default: return "error";
    }
}

// ------------------------------------------------------------------ ingest

struct IngestArgs {
    std::vector<std::string> inputs;
    double val_fraction = 0.01;
    std::string doc_mode = "paragraph";
};

void cmd_ingest(const IngestArgs& a, const CommonFlags& common, std::ostream& out) {
    if (!common.out) throw ConfigError("ingest needs --out <directory>");
    IngestOptions opts;
    opts.val_fraction = a.val_fraction;
    opts.seed = common.seed.value_or(0);
    opts.mode = parse_document_mode(a.doc_mode);
    std::vector<std::filesystem::path> paths(a.inputs.begin(), a.inputs.end());
    const IngestResult r = ingest(paths, opts);
    const std::filesystem::path dir(*common.out);
    save_stream(r.train, dir / "train");
    save_stream(r.val, dir / "val");
    out << "train: " << r.train.documents << " documents, " << r.train.tokens.size() << " tokens, sha256 "
        << r.train.digest << "\n";
    out << "val:   " << r.val.documents << " documents, " << r.val.tokens.size() << " tokens, sha256 "
        << r.val.digest << "\n";
}

// --------------------------------------------------------------------- run

struct RunArgs {
    std::string config;
    std::vector<std::string> set;
    bool resume = false;
    bool dry_run = false;
    bool quiet = false;
    std::optional<std::int64_t> stop_after;
};

void cmd_run(const RunArgs& a, const CommonFlags& common, std::ostream& out, std::ostream& err) {
    std::vector<std::pair<std::string, std::string>> overrides;
    for (const auto& s : a.set) {
        const auto eq = s.find('=');
        if (eq == std::string::npos) throw ConfigError("--set expects section.key=value, got '" + s + "'");
        overrides.emplace_back(s.substr(0, eq), s.substr(eq + 1));
    }
    if (common.seed) overrides.emplace_back("run.seed", std::to_string(*common.seed));
    if (common.precision) overrides.emplace_back("model.precision", "\"" + *common.precision + "\"");
    if (common.out) overrides.emplace_back("run.out_dir", "\"" + *common.out + "\"");
    const TrainConfig cfg = load_train_config(a.config, overrides);

    RunOptions opts;
    opts.resume = a.resume;
    opts.dry_run = a.dry_run;
    opts.stop_after = a.stop_after;
    opts.log = a.quiet ? nullptr : &err;
    const RunResult r = run(cfg, opts);
    out << "trace: " << r.trace_path.string() << "\n";
    out << "steps: " << r.steps_completed << "/" << r.total_steps << (r.completed ? "" : " (stopped early)") << "\n";
    out << "equal-compute step: " << r.equal_compute_step << "\n";
    if (r.completed && !a.dry_run) out << "checkpoint: " << r.checkpoint_path.string() << "\n";
}

// ----------------------------------------------------------------- compare

struct CompareArgs {
    std::string baseline;
    std::vector<std::string> incremental;
    std::int64_t baseline_steps = 0;
};

std::vector<std::pair<std::string, RunTrace>> read_labelled(const std::vector<std::string>& specs) {
    std::vector<std::pair<std::string, RunTrace>> traces;
    for (const auto& s : specs) {
        auto [label, path] = labelled_path(s);
        traces.emplace_back(label, read_trace(path));
    }
    return traces;
}

void cmd_compare(const CompareArgs& a, const CommonFlags& common, std::ostream& out) {
    const RunTrace baseline = read_trace(a.baseline);
    const auto incremental = read_labelled(a.incremental);
    const ComparisonReport report = compare(baseline, incremental, a.baseline_steps);
    const std::string text = format_report(report);
    out << text;
    if (common.out) {
        const std::filesystem::path dir(*common.out);
        write_file(dir / "comparison.txt", text);
        write_file(dir / "comparison.csv", report_csv(report));
    }
}

// -------------------------------------------------------------------- plot

struct PlotArgs {
    std::string baseline;
    std::vector<std::string> incremental;
    std::optional<std::int64_t> baseline_steps;
    std::string metric = "val_loss";
};

void cmd_plot(const PlotArgs& a, const CommonFlags& common, std::ostream& out, std::ostream& err) {
    if (!common.out) throw ConfigError("plot needs --out <file.svg>");
    std::vector<std::pair<std::string, RunTrace>> traces;
    traces.emplace_back(labelled_path(a.baseline).first, read_trace(labelled_path(a.baseline).second));
    const auto incremental = read_labelled(a.incremental);
    traces.insert(traces.end(), incremental.begin(), incremental.end());
    std::optional<ComparisonReport> report;
    if (a.baseline_steps) report = compare(traces.front().second, incremental, *a.baseline_steps);
    const LossMetric metric = parse_loss_metric(a.metric);
    const PlotSpec spec = loss_plot(traces, report ? &*report : nullptr, metric);
    const PlotFiles files = emit_plots(traces, spec, *common.out);
    out << "data: " << files.data_csv.string() << "\n";
    out << "markers: " << files.markers_csv.string() << " (" << spec.markers.size() << ")\n";
    if (files.svg_written) {
        out << "plot: " << files.svg.string() << "\n";
    } else {
        err << "warning: plot not written: " << files.svg_error << "\n";
    }
}

// -------------------------------------------------------------------- cost

struct CostArgs {
    int layers = 12;
    int stages = 4;
    std::string baseline_steps = "10000";
    std::optional<std::string> incremental_steps;
    std::string unit_cost = "1";
    std::string backward_ratio = "1";
    std::optional<std::string> csv;
};

void cmd_cost(const CostArgs& a, std::ostream& out) {
    CostParams p;
    p.layers = a.layers;
    p.stages = a.stages;
    p.baseline_units = parse_rational(a.baseline_steps);
    p.incremental_units = parse_rational(a.incremental_steps.value_or(a.baseline_steps));
    p.unit_cost = parse_rational(a.unit_cost);
    p.backward_ratio = parse_rational(a.backward_ratio);
    p.validate();

    out << "layers L = " << p.layers << "\n";
    out << "stages S = " << p.stages << "\n";
    out << "layers per stage m = " << to_decimal(p.layers_per_stage()) << "\n";
    out << "baseline steps T = " << to_decimal(p.baseline_units) << "\n";
    out << "incremental steps T_inc = " << to_decimal(p.incremental_units) << "\n";
    out << "unit cost c = " << to_decimal(p.unit_cost) << "\n";
    out << "backward ratio rho = " << to_decimal(p.backward_ratio) << "\n";
    if (!p.divisible()) {
        out << "note: L is not divisible by S; closed forms use the fractional m and the schedule cannot be run\n";
    }
    out << "C_baseline=" << to_decimal(baseline_cost(p, p.baseline_units)) << " units\n";

    const bool closed = p.backward_ratio == 1;
    const Rational c_inc = closed ? incremental_cost_closed_form(p) : incremental_cost_brute_force(p);
    out << "C_incremental=" << to_decimal(c_inc) << " units\n";
    const ContinualMatch match = continual_units_to_match(p);
    out << "T_cont=" << to_decimal(match.continual_units) << " steps";
    if (denominator(match.continual_units) != 1) out << " (" << to_string(match.continual_units) << ")";
    out << "\n";
    out << "equal-compute step " << match.equal_compute_step << " (exact " << to_decimal(match.equal_compute) << ")\n";

    if (p.divisible()) {
        const auto rows = cost_report_rows(p, match.continual_units);
        out << "\n" << std::left << std::setw(6) << "stage" << std::setw(11) << "phase" << std::setw(14) << "steps"
            << std::setw(16) << "cost" << "cumulative\n";
        for (const auto& r : rows) {
            out << std::setw(6) << r.stage << std::setw(11) << r.phase << std::setw(14) << to_decimal(r.units)
                << std::setw(16) << to_decimal(r.cost) << to_decimal(r.cumulative) << "\n";
        }
        if (a.csv) write_file(*a.csv, cost_report_csv(rows));
    } else if (a.csv) {
        throw ConfigError("--csv needs layers divisible by stages");
    }
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Incremental layer-wise training of a byte-level GPT", "layerwise"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "layerwise 1.0.0");

    CommonFlags common;
    app.add_option("--seed", common.seed, "Seed (run: data order; ingest: train/val split)");
    app.add_option("--precision", common.precision, "verify64 or fast32 (run)");
    app.add_option("--out", common.out, "Output directory, or output file for plot");

    IngestArgs ingest_args;
    auto* ingest_cmd = app.add_subcommand("ingest", "Tokenize text files into cached train/val streams");
    ingest_cmd->add_option("inputs", ingest_args.inputs, "Files or directories")->required();
    ingest_cmd->add_option("--val-fraction", ingest_args.val_fraction, "Share of documents held out")
        ->check(CLI::Range(0.0, 1.0));
    ingest_cmd->add_option("--doc-mode", ingest_args.doc_mode, "Document boundary: file, paragraph or line");

    RunArgs run_args;
    auto* run_cmd = app.add_subcommand("run", "Train one regime from a config file");
    run_cmd->add_option("--config", run_args.config, "Config file")->required();
    run_cmd->add_option("--set", run_args.set, "Override, section.key=value (repeatable)");
    run_cmd->add_flag("--resume", run_args.resume, "Continue from the checkpoint in the output directory");
    run_cmd->add_flag("--dry-run", run_args.dry_run, "Write the cost trace without training");
    run_cmd->add_flag("--quiet", run_args.quiet, "No progress output");
    run_cmd->add_option("--stop-after", run_args.stop_after, "Stop after this many steps, as if killed");

    CompareArgs compare_args;
    auto* compare_cmd = app.add_subcommand("compare", "Equal-compute comparison of traces");
    compare_cmd->add_option("--baseline", compare_args.baseline, "Baseline trace.csv")->required();
    compare_cmd->add_option("--incremental", compare_args.incremental, "[label=]trace.csv (repeatable)")->required();
    compare_cmd->add_option("--baseline-steps", compare_args.baseline_steps, "Baseline length T")->required();

    PlotArgs plot_args;
    auto* plot_cmd = app.add_subcommand("plot", "Loss curves as SVG with CSV data");
    plot_cmd->add_option("--baseline", plot_args.baseline, "[label=]baseline trace.csv")->required();
    plot_cmd->add_option("--incremental", plot_args.incremental, "[label=]trace.csv (repeatable)");
    plot_cmd->add_option("--baseline-steps", plot_args.baseline_steps, "Baseline length T; adds equal-compute markers");
    plot_cmd->add_option("--metric", plot_args.metric, "val_loss or train_loss");

    CostArgs cost_args;
    auto* cost_cmd = app.add_subcommand("cost", "Print compute costs of baseline and incremental schedules");
    cost_cmd->add_option("--layers", cost_args.layers, "Number of blocks L");
    cost_cmd->add_option("--stages", cost_args.stages, "Number of stages S");
    cost_cmd->add_option("--baseline-steps", cost_args.baseline_steps, "Baseline length T");
    cost_cmd->add_option("--incremental-steps", cost_args.incremental_steps, "Incremental budget T_inc (default T)");
    cost_cmd->add_option("--unit-cost", cost_args.unit_cost, "Cost c of one block-token pass");
    cost_cmd->add_option("--backward-ratio", cost_args.backward_ratio, "Backward/forward cost ratio rho");
    cost_cmd->add_option("--csv", cost_args.csv, "Write the per-phase table as CSV");

    for (auto* sub : {ingest_cmd, run_cmd, compare_cmd, plot_cmd, cost_cmd}) sub->fallthrough();

    std::vector<std::string> argv_store{"layerwise"};
    argv_store.insert(argv_store.end(), args.begin(), args.end());
    std::vector<char*> argv;
    for (auto& s : argv_store) argv.push_back(s.data());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        const int status = app.exit(e, out, err);
        return status == 0 ? exit_code::ok : exit_code::usage;
    }

    try {
        if (*ingest_cmd) cmd_ingest(ingest_args, common, out);
        if (*run_cmd) cmd_run(run_args, common, out, err);
        if (*compare_cmd) cmd_compare(compare_args, common, out);
        if (*plot_cmd) cmd_plot(plot_args, common, out, err);
        if (*cost_cmd) cmd_cost(cost_args, out);
    } catch (const Error& e) {
        const int status = exit_status_of(e);
        err << "layerwise: " << error_kind(status) << ": " << e.what() << "\n";
        return status;
    } catch (const std::filesystem::filesystem_error& e) {
        err << "layerwise: I/O error: " << e.what() << "\n";
        return exit_code::io;
    } catch (const std::exception& e) {
        err << "layerwise: error: " << e.what() << "\n";
        return exit_code::failure;
    }
    return exit_code::ok;
}

}  // namespace layerwise
