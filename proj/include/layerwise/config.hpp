// SPDX-License-Identifier: Apache-2.0
//
// Run configuration in a TOML subset: `[section]` headers, `key = value`
// lines, `#` comments. Values are quoted strings, numbers or booleans.
//
//   [model]   layers, d_model, heads, context, vocab, precision, init_seed
//   [optim]   lr, beta1, beta2, eps, weight_decay, warmup_steps, grad_clip
//             (grad_clip = 0 disables clipping)
//   [data]    dir (holds train.tok/val.tok from `ingest`), batch_size, seq_len
//   [regime]  kind = "baseline" | "incremental", stages, steps,
//             continual_steps (integer or "auto"), baseline_steps,
//             phase_split, backward_ratio
//   [run]     seed, eval_every, val_batches, checkpoint_every, out_dir,
//             log_every
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "layerwise/corpus.hpp"
#include "layerwise/gptmodel.hpp"
#include "layerwise/optim.hpp"
#include "layerwise/rational.hpp"

namespace layerwise {

class KeyValueConfig {
public:
    static KeyValueConfig parse(std::string_view text, const std::string& source = "<config>");
    static KeyValueConfig from_file(const std::filesystem::path& path);

    // key is "section.name"; value uses config-file syntax.
    void set(const std::string& key, std::string_view raw_value);
    bool contains(const std::string& key) const { return values_.contains(key); }
    const std::map<std::string, std::string>& values() const noexcept { return values_; }

private:
    std::map<std::string, std::string> values_;  // strings already unquoted
    std::string source_ = "<config>";
};

enum class RegimeKind { baseline, incremental };

struct RegimeConfig {
    RegimeKind kind = RegimeKind::baseline;
    int stages = 1;
    std::int64_t steps = 3000;  // baseline: run length T; incremental: T_inc
    std::optional<std::int64_t> continual_steps;  // nullopt: run to the equal-compute step
    std::int64_t baseline_steps = 3000;     // reference baseline length T for equal compute
    Rational phase_split{1, 2};
    Rational backward_ratio{1};
};

struct TrainConfig {
    ModelConfig model;
    AdamWConfig optim;
    BatchSpec batch;
    RegimeConfig regime;
    std::filesystem::path data_dir = "data";
    std::uint64_t seed = 1;
    std::int64_t eval_every = 100;
    std::size_t val_batches = 8;
    std::int64_t checkpoint_every = 250;
    std::int64_t log_every = 50;
    std::filesystem::path out_dir = "runs/default";

    void validate() const;
    // Canonical TOML rendering; also the run fingerprint (out_dir excluded).
    std::string to_toml(bool include_out_dir = true) const;
};

TrainConfig train_config_from(const KeyValueConfig& kv);

// Reads the file, applies `section.key=value` overrides, validates.
TrainConfig load_train_config(const std::filesystem::path& path,
                              const std::vector<std::pair<std::string, std::string>>& overrides = {});

// out_dir resolved against $LAYERWISE_OUT_ROOT when that is set and the
// path is relative.
std::filesystem::path resolve_output_dir(const std::filesystem::path& out_dir);

}  // namespace layerwise
