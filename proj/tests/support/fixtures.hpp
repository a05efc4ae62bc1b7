// SPDX-License-Identifier: Apache-2.0
//
// Small corpora and configs shared by the runner, CLI and acceptance tests.
#pragma once

#include <filesystem>
#include <string>

#include "layerwise/config.hpp"

namespace layerwise::testing {

// Fresh empty directory under the current working directory.
std::filesystem::path scratch_dir(const std::string& name);

// Writes <dir>/train.* and <dir>/val.* from generated English-like text.
void make_tiny_corpus(const std::filesystem::path& dir, std::size_t documents = 300);

// 4-layer, d_model 16, 64-bit model on a tiny corpus: a run takes well under
// a second per step.
TrainConfig tiny_train_config(const std::filesystem::path& data_dir, const std::filesystem::path& out_dir);

// The same config as a config file.
std::string tiny_train_toml(const std::filesystem::path& data_dir, const std::filesystem::path& out_dir);

}  // namespace layerwise::testing
