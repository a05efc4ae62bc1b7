// SPDX-License-Identifier: Apache-2.0
//
// Versioned binary checkpoint container. Layout (all integers and reals
// little-endian):
//
//   "LAYERWIS"  u32 version
//   section*    4-byte tag, u64 payload length, payload
//
//   CONF  ModelConfig: u32 layers, d_model, heads, context, vocab;
//         u8 precision (0 = verify64, 1 = fast32); u64 init_seed
//   PARM  u32 groups; per group: str name, u8 trainable, u32 params;
//         per param: str name, u32 rank, u64 extents[rank], raw values
//   OPTS  (optional) u32 entries; per entry: u64 group, i64 step,
//         u32 tensors; per tensor: u64 count, raw first moment, raw second
//   RUNS  (optional) i64 steps completed, str fingerprint
//   END_  empty
//
// str is u32 byte length followed by the bytes. Values are stored at the
// model's precision (4 or 8 bytes), so a round trip is bit-exact.
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "layerwise/gptmodel.hpp"
#include "layerwise/optim.hpp"

namespace layerwise {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct RunState {
    std::int64_t steps_completed = 0;
    // Identifies the run configuration, so a resume refuses a foreign
    // checkpoint.
    std::string fingerprint;
};

template <typename Real>
struct Checkpoint {
    ParameterStore<Real> store;
    std::optional<OptState<Real>> optimizer;
    std::optional<RunState> run;
};

// Written to a temporary file and renamed into place.
template <typename Real>
void save_checkpoint(const std::filesystem::path& path, const ParameterStore<Real>& store,
                     const OptState<Real>* optimizer = nullptr, const RunState* run = nullptr);

template <typename Real>
Checkpoint<Real> load_checkpoint(const std::filesystem::path& path);

ModelConfig read_checkpoint_config(const std::filesystem::path& path);

}  // namespace layerwise
