// SPDX-License-Identifier: Apache-2.0
#include "layerwise/optim.hpp"

#include <cmath>
#include <string>

namespace layerwise {

void AdamWConfig::validate() const {
    if (!(lr > 0)) throw ConfigError("optimizer lr must be > 0");
    if (!(beta1 >= 0 && beta1 < 1)) throw ConfigError("beta1 must lie in [0,1)");
    if (!(beta2 >= 0 && beta2 < 1)) throw ConfigError("beta2 must lie in [0,1)");
    if (!(eps > 0)) throw ConfigError("eps must be > 0");
    if (!(weight_decay >= 0)) throw ConfigError("weight_decay must be >= 0");
    if (warmup_steps < 0) throw ConfigError("warmup_steps must be >= 0");
    if (grad_clip_norm && !(*grad_clip_norm > 0)) throw ConfigError("grad_clip_norm must be > 0 when set");
}

double lr_at(const AdamWConfig& cfg, std::int64_t global_step) {
    if (global_step < cfg.warmup_steps) {
        return cfg.lr * static_cast<double>(global_step) / static_cast<double>(cfg.warmup_steps);
    }
    return cfg.lr;
}

template <typename Real>
void register_new_groups(OptState<Real>& state, const ParameterStore<Real>& store,
                         std::span<const std::size_t> new_groups) {
    for (std::size_t g : new_groups) {
        if (g >= store.group_count()) {
            throw ScheduleError("cannot register group " + std::to_string(g) + ": store has " +
                                std::to_string(store.group_count()) + " groups");
        }
        if (state.registered(g)) {
            throw ScheduleError("optimizer state for group '" + store.group(g).name + "' already registered");
        }
    }
    for (std::size_t g : new_groups) {
        GroupMoments<Real> moments;
        for (const auto& p : store.group(g).params) {
            moments.first.emplace_back(p.value().shape());
            moments.second.emplace_back(p.value().shape());
        }
        state.groups.emplace(g, std::move(moments));
    }
}

template <typename Real>
StepReport step(ParameterStore<Real>& store, OptState<Real>& state, const AdamWConfig& cfg,
                std::int64_t global_step) {
    StepReport report;
    report.lr = lr_at(cfg, global_step);

    std::vector<std::size_t> active;
    for (std::size_t g = 0; g < store.group_count(); ++g) {
        const auto& group = store.group(g);
        if (!group.trainable) continue;
        if (!state.registered(g)) {
            throw ScheduleError("trainable group '" + group.name + "' has no optimizer state");
        }
        for (const auto& p : group.params) {
            if (!p.grad().all_finite()) {
                throw NumericError("non-finite gradient in group '" + group.name + "' (" + p.name + ")");
            }
        }
        active.push_back(g);
    }

    double sq = 0.0;
    for (std::size_t g : active) {
        for (const auto& p : store.group(g).params) {
            for (Real v : p.grad().values()) sq += static_cast<double>(v) * static_cast<double>(v);
        }
    }
    report.grad_norm = std::sqrt(sq);
    double grad_scale = 1.0;
    if (cfg.grad_clip_norm && report.grad_norm > *cfg.grad_clip_norm) {
        grad_scale = *cfg.grad_clip_norm / report.grad_norm;
        report.clipped = true;
    }

    const Real lr = static_cast<Real>(report.lr);
    const Real b1 = static_cast<Real>(cfg.beta1);
    const Real b2 = static_cast<Real>(cfg.beta2);
    const Real eps = static_cast<Real>(cfg.eps);
    const Real decay = static_cast<Real>(report.lr * cfg.weight_decay);
    const Real scale = static_cast<Real>(grad_scale);

    for (std::size_t g : active) {
        auto& group = store.group(g);
        auto& moments = state.groups.at(g);
        ++moments.step;
        const double t = static_cast<double>(moments.step);
        const Real bc1 = static_cast<Real>(1.0 - std::pow(cfg.beta1, t));
        const Real bc2 = static_cast<Real>(1.0 - std::pow(cfg.beta2, t));
        for (std::size_t i = 0; i < group.params.size(); ++i) {
            auto& p = group.params[i];
            Real* w = p.value().data();
            const Real* grad = p.grad().data();
            Real* m = moments.first[i].data();
            Real* v = moments.second[i].data();
            const bool decayed = p.value().rank() >= 2;
            const std::size_t n = p.value().size();
            for (std::size_t k = 0; k < n; ++k) {
                const Real gk = grad[k] * scale;
                if (decayed) w[k] -= decay * w[k];
                m[k] = b1 * m[k] + (Real{1} - b1) * gk;
                v[k] = b2 * v[k] + (Real{1} - b2) * gk * gk;
                const Real m_hat = m[k] / bc1;
                const Real v_hat = v[k] / bc2;
                w[k] -= lr * m_hat / (std::sqrt(v_hat) + eps);
            }
            p.value().require_finite("parameter " + p.name + " after update");
        }
    }
    return report;
}

template void register_new_groups(OptState<float>&, const ParameterStore<float>&, std::span<const std::size_t>);
template void register_new_groups(OptState<double>&, const ParameterStore<double>&, std::span<const std::size_t>);
template StepReport step(ParameterStore<float>&, OptState<float>&, const AdamWConfig&, std::int64_t);
template StepReport step(ParameterStore<double>&, OptState<double>&, const AdamWConfig&, std::int64_t);

}  // namespace layerwise
