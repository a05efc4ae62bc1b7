// SPDX-License-Identifier: Apache-2.0
#include "layerwise/runner.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "layerwise/checkpoint.hpp"
#include "layerwise/corpus.hpp"
#include "layerwise/errors.hpp"
#include "layerwise/gptmodel.hpp"
#include "layerwise/numkernel.hpp"
#include "layerwise/optim.hpp"

namespace layerwise {
namespace {

constexpr const char* kTraceFile = "trace.csv";
constexpr const char* kCheckpointFile = "checkpoint.bin";

std::int64_t tokens_per_step(const TrainConfig& cfg) {
    return static_cast<std::int64_t>(cfg.batch.tokens_per_step());
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
    if (!out) throw IoError("error writing " + path.string());
}

// Blocks up to `depth` join the model: drawn fresh and given optimizer
// state. Embeddings and the final norm join with the first blocks.
template <typename Real>
void grow_to(ParameterStore<Real>& store, OptState<Real>& opt, int& registered_depth, int depth, bool reinit) {
    if (depth <= registered_depth) return;
    std::vector<std::size_t> fresh;
    if (registered_depth == 0) {
        fresh.push_back(ParameterStore<Real>::kEmbeddingGroup);
        fresh.push_back(store.final_norm_group());
    }
    for (int layer = registered_depth + 1; layer <= depth; ++layer) {
        const std::size_t g = store.block_group(layer);
        if (reinit) init_group(store, g);
        fresh.push_back(g);
    }
    register_new_groups(opt, store, fresh);
    registered_depth = depth;
}

template <typename Real>
void apply_mask(ParameterStore<Real>& store, const StepDirective& d) {
    store.embeddings().trainable = d.train_embeddings_head;
    store.final_norm().trainable = d.train_embeddings_head;
    for (int layer = 1; layer <= store.config().n_layers; ++layer) {
        store.block(layer).trainable = layer >= d.grad_depth_lo && layer <= d.active_depth;
    }
}

template <typename Real>
double validation_loss(const ParameterStore<Real>& store, const std::vector<Batch>& batches, int depth) {
    double total = 0.0;
    for (const auto& b : batches) {
        const auto fwd = forward(store, std::span<const std::int32_t>(b.inputs), b.batch_size, b.seq_len, depth);
        total += kernel::cross_entropy(fwd.logits, std::span<const std::int32_t>(b.targets));
    }
    return total / static_cast<double>(batches.size());
}

struct Progress {
    std::ostream* log = nullptr;
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

    void line(const std::string& text) const {
        if (log) *log << text << std::endl;
    }
    double elapsed() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
};

template <typename Real>
RunResult run_impl(const TrainConfig& cfg, const RunOptions& options, const StagePlan& plan, RunResult result) {
    Progress progress{options.log};
    const std::int64_t tpb = tokens_per_step(cfg);
    const Rational units_per_step(tpb);
    const std::string fingerprint = cfg.to_toml(false);
    const auto ckpt_path = result.checkpoint_path;

    TokenStream train_stream;
    TokenStream val_stream;
    if (!options.dry_run) {
        train_stream = load_stream(cfg.data_dir / "train");
        val_stream = load_stream(cfg.data_dir / "val");
    }

    ParameterStore<Real> store = options.dry_run ? ParameterStore<Real>(cfg.model) : init_model<Real>(cfg.model);
    OptState<Real> opt;
    int registered_depth = 0;
    std::int64_t start = 0;

    if (options.resume && std::filesystem::exists(ckpt_path)) {
        Checkpoint<Real> ckpt = load_checkpoint<Real>(ckpt_path);
        if (!ckpt.run || !ckpt.optimizer) throw DataError(ckpt_path.string() + " lacks run or optimizer state");
        if (ckpt.run->fingerprint != fingerprint) {
            throw ConfigError("checkpoint " + ckpt_path.string() + " was written by a different configuration");
        }
        if (!(ckpt.store.config() == cfg.model)) throw ConfigError("checkpoint model config differs from the run");
        store = std::move(ckpt.store);
        opt = std::move(*ckpt.optimizer);
        start = ckpt.run->steps_completed;
        for (int layer = 1; layer <= cfg.model.n_layers; ++layer) {
            if (opt.registered(store.block_group(layer))) registered_depth = layer;
        }
        result.resumed_from = start;
        progress.line("resuming from step " + std::to_string(start));
    }

    CostLedger ledger(cost_params_for(cfg));
    ledger.replay(plan, start, units_per_step);

    const auto trace_path = result.trace_path;
    TraceWriter writer(trace_path, start > 0 ? std::optional<std::int64_t>(start) : std::nullopt);
    if (start > 0) {
        const RunTrace kept = read_trace(trace_path);
        if (kept.rows.empty() || kept.rows.back().step != start ||
            kept.rows.size() != static_cast<std::size_t>(start)) {
            throw DataError("trace " + trace_path.string() + " does not cover the checkpointed " +
                            std::to_string(start) + " steps");
        }
    }

    std::optional<BatchStream> batches;
    std::vector<Batch> val_batches;
    if (!options.dry_run) {
        batches.emplace(train_stream, cfg.batch, cfg.seed, BatchOrder::shuffled);
        val_batches = validation_batches(val_stream, cfg.batch, cfg.val_batches);
    }

    const std::int64_t total = plan.total_units();
    auto is_eval_step = [&](std::int64_t step) {
        return step % cfg.eval_every == 0 || step == total || step == result.equal_compute_step ||
               step == cfg.regime.baseline_steps || step == plan.incremental_units;
    };

    for (std::int64_t k = start; k < total; ++k) {
        const std::int64_t step = k + 1;
        const StepDirective d = directive_at(plan, k);
        TraceRow row;
        row.step = step;
        row.tokens = step * tpb;
        row.mode = d.label();
        try {
            if (!options.dry_run) {
                grow_to(store, opt, registered_depth, d.active_depth, !plan.baseline && registered_depth > 0);
                apply_mask(store, d);
                const Batch batch = batches->at(k);
                store.zero_grads();
                auto fwd = forward(store, std::span<const std::int32_t>(batch.inputs), batch.batch_size,
                                   batch.seq_len, d.active_depth);
                DenseArray<Real> dlogits(fwd.logits.shape());
                const double loss =
                    kernel::cross_entropy(fwd.logits, std::span<const std::int32_t>(batch.targets), &dlogits);
                row.train_loss = loss;
                if (!std::isfinite(loss)) throw NumericError("non-finite training loss at step " + std::to_string(step));
                backward(store, fwd.tape, dlogits, d.active_depth, d.grad_depth_lo, d.train_embeddings_head);
                const StepReport rep = layerwise::step(store, opt, cfg.optim, step);
                if (cfg.log_every > 0 && (step % cfg.log_every == 0 || step == start + 1)) {
                    std::ostringstream msg;
                    msg << "step " << step << "/" << total << " " << row.mode << " loss " << std::fixed
                        << std::setprecision(4) << loss << " lr " << std::scientific << std::setprecision(2)
                        << rep.lr << " gnorm " << std::fixed << std::setprecision(3) << rep.grad_norm << " ("
                        << std::setprecision(1) << progress.elapsed() << " s)";
                    progress.line(msg.str());
                }
                if (is_eval_step(step)) row.val_loss = validation_loss(store, val_batches, d.active_depth);
            }
        } catch (const NumericError&) {
            if (!row.train_loss) row.train_loss = std::nan("");
            row.cum_cost = ledger.total();
            writer.append(row);
            throw;
        }
        row.cum_cost = ledger.record(d, units_per_step);
        writer.append(row);
        result.steps_completed = step;

        if (options.stop_after && step >= *options.stop_after && step < total) return result;
        if (!options.dry_run && (step % cfg.checkpoint_every == 0 || step == total)) {
            const RunState rs{step, fingerprint};
            save_checkpoint(ckpt_path, store, &opt, &rs);
        }
    }
    result.completed = true;
    progress.line("finished " + std::to_string(total) + " steps in " + std::to_string(progress.elapsed()) + " s");
    return result;
}

}  // namespace

CostParams cost_params_for(const TrainConfig& cfg) {
    const Rational tpb(tokens_per_step(cfg));
    CostParams p;
    p.layers = cfg.model.n_layers;
    p.stages = cfg.regime.kind == RegimeKind::baseline ? 1 : cfg.regime.stages;
    p.baseline_units = Rational(cfg.regime.baseline_steps) * tpb;
    p.incremental_units = Rational(cfg.regime.steps) * tpb;
    p.unit_cost = 1;
    p.backward_ratio = cfg.regime.backward_ratio;
    return p;
}

std::int64_t equal_compute_step_for(const TrainConfig& cfg) {
    if (cfg.regime.kind == RegimeKind::baseline) return cfg.regime.baseline_steps;
    const CostParams params = cost_params_for(cfg);
    const Rational tpb(tokens_per_step(cfg));
    const Rational target = baseline_cost(params, params.baseline_units);
    const StagePlan incremental =
        build_plan(cfg.model.n_layers, cfg.regime.stages, cfg.regime.steps, 0, cfg.regime.phase_split);
    Rational cum = 0;
    for (std::int64_t k = 0; k < incremental.incremental_units; ++k) {
        cum += directive_unit_cost(directive_at(incremental, k), params) * tpb;
        if (cum >= target) return k + 1;
    }
    const Rational per_step = directive_unit_cost(directive_at(incremental, incremental.incremental_units), params) * tpb;
    const Rational remaining = target - cum;
    return incremental.incremental_units + to_int64(ceil(remaining / per_step));
}

StagePlan plan_for(const TrainConfig& cfg) {
    if (cfg.regime.kind == RegimeKind::baseline) return baseline_plan(cfg.model.n_layers, cfg.regime.steps);
    const std::int64_t continual =
        cfg.regime.continual_steps ? *cfg.regime.continual_steps : equal_compute_step_for(cfg) - cfg.regime.steps;
    return build_plan(cfg.model.n_layers, cfg.regime.stages, cfg.regime.steps, continual, cfg.regime.phase_split);
}

RunResult run(const TrainConfig& cfg, const RunOptions& options) {
    cfg.validate();
    const StagePlan plan = plan_for(cfg);
    RunResult result;
    result.out_dir = resolve_output_dir(cfg.out_dir);
    result.trace_path = result.out_dir / kTraceFile;
    result.checkpoint_path = result.out_dir / kCheckpointFile;
    result.total_steps = plan.total_units();
    result.equal_compute_step = equal_compute_step_for(cfg);

    std::error_code ec;
    std::filesystem::create_directories(result.out_dir, ec);
    if (ec) throw IoError("cannot create output directory " + result.out_dir.string() + ": " + ec.message());
    if (!options.resume) std::filesystem::remove(result.checkpoint_path, ec);
    write_text(result.out_dir / "run.toml", cfg.to_toml());
    std::ostringstream plan_text;
    plan_text << describe(plan) << "\n[cost]\n"
              << "tokens_per_step = " << tokens_per_step(cfg) << "\n"
              << "equal_compute_step = " << result.equal_compute_step << "\n";
    write_text(result.out_dir / "plan.toml", plan_text.str());

    if (cfg.model.precision == Precision::verify64) return run_impl<double>(cfg, options, plan, std::move(result));
    return run_impl<float>(cfg, options, plan, std::move(result));
}

}  // namespace layerwise
