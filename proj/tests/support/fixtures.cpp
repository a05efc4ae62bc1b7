// SPDX-License-Identifier: Apache-2.0
#include "fixtures.hpp"

#include <random>
#include <vector>

#include "layerwise/corpus.hpp"

namespace layerwise::testing {

namespace fs = std::filesystem;

fs::path scratch_dir(const std::string& name) {
    const auto dir = fs::current_path() / "scratch" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

void make_tiny_corpus(const fs::path& dir, std::size_t documents) {
    static const char* const words[] = {"the",   "layer", "model", "stage", "train", "loss",  "token",
                                        "a",     "of",    "and",   "new",   "block", "step",  "grows",
                                        "fresh", "deep",  "slow",  "cost",  "each",  "then"};
    std::mt19937_64 rng(2024);
    std::uniform_int_distribution<std::size_t> pick(0, std::size(words) - 1);
    std::uniform_int_distribution<int> length(8, 40);
    std::vector<std::string> docs;
    for (std::size_t d = 0; d < documents; ++d) {
        std::string text;
        const int n = length(rng);
        for (int w = 0; w < n; ++w) {
            if (w) text += ' ';
            text += words[pick(rng)];
        }
        text += '.';
        docs.push_back(text);
    }
    IngestOptions options;
    options.val_fraction = 0.15;
    options.seed = 1;
    const auto result = ingest_documents(docs, options);
    fs::create_directories(dir);
    save_stream(result.train, dir / "train");
    save_stream(result.val, dir / "val");
}

std::string tiny_train_toml(const fs::path& data_dir, const fs::path& out_dir) {
    return "[model]\n"
           "layers = 4\n"
           "d_model = 16\n"
           "heads = 2\n"
           "context = 16\n"
           "precision = \"verify64\"\n"
           "init_seed = 7\n"
           "\n[optim]\n"
           "lr = 3e-3\n"
           "\n[data]\n"
           "dir = \"" + data_dir.string() + "\"\n"
           "batch_size = 4\n"
           "seq_len = 16\n"
           "\n[regime]\n"
           "kind = \"baseline\"\n"
           "steps = 20\n"
           "\n[run]\n"
           "seed = 3\n"
           "eval_every = 5\n"
           "val_batches = 2\n"
           "checkpoint_every = 7\n"
           "log_every = 0\n"
           "out_dir = \"" + out_dir.string() + "\"\n";
}

TrainConfig tiny_train_config(const fs::path& data_dir, const fs::path& out_dir) {
    auto cfg = train_config_from(KeyValueConfig::parse(tiny_train_toml(data_dir, out_dir)));
    cfg.validate();
    return cfg;
}

}  // namespace layerwise::testing
