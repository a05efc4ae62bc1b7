// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "layerwise/gptmodel.hpp"

namespace layerwise {

struct AdamWConfig {
    double lr = 6e-4;
    double beta1 = 0.9;
    double beta2 = 0.95;
    double eps = 1e-8;
    double weight_decay = 0.1;
    std::int64_t warmup_steps = 0;
    std::optional<double> grad_clip_norm = 1.0;

    void validate() const;
};

// Linear warmup from 0 to cfg.lr over warmup_steps, then constant. The
// warmup runs once per training run and is never restarted.
double lr_at(const AdamWConfig& cfg, std::int64_t global_step);

template <typename Real>
struct GroupMoments {
    std::vector<DenseArray<Real>> first;
    std::vector<DenseArray<Real>> second;
    std::int64_t step = 0;
};

// Adam moments keyed by parameter-group index. Groups enter the map only
// through register_new_groups.
template <typename Real>
struct OptState {
    std::map<std::size_t, GroupMoments<Real>> groups;

    bool registered(std::size_t group) const { return groups.contains(group); }
};

template <typename Real>
void register_new_groups(OptState<Real>& state, const ParameterStore<Real>& store,
                         std::span<const std::size_t> new_groups);

struct StepReport {
    double lr = 0.0;
    double grad_norm = 0.0;  // before clipping, over trainable groups
    bool clipped = false;
};

// One AdamW update of every trainable group. Weight decay is decoupled and
// applies to matrices (rank >= 2) only; gains and biases are not decayed.
// Groups whose trainable flag is off are never touched.
template <typename Real>
StepReport step(ParameterStore<Real>& store, OptState<Real>& state, const AdamWConfig& cfg,
                std::int64_t global_step);

}  // namespace layerwise
