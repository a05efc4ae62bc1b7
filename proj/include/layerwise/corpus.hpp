// SPDX-License-Identifier: Apache-2.0
//
// Byte-level corpus pipeline. Vocabulary: bytes 0..255, then BOS, EOS, PAD.
// Each document is encoded as BOS, its bytes, EOS; documents are assigned to
// train/validation by a seeded content hash, so identical documents always
// land in the same split.
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace layerwise {

inline constexpr std::int32_t kBos = 256;
inline constexpr std::int32_t kEos = 257;
inline constexpr std::int32_t kPad = 258;
inline constexpr int kByteVocab = 259;

enum class Split { train, val };
std::string_view to_string(Split s);

struct TokenStream {
    std::vector<std::int32_t> tokens;
    std::string digest;  // SHA-256 hex of the little-endian u16 token bytes
    Split split = Split::train;
    std::size_t documents = 0;
};

enum class DocumentMode {
    file,       // each file is one document
    paragraph,  // blank-line separated blocks
    line        // every non-empty line
};
DocumentMode parse_document_mode(std::string_view text);

struct IngestOptions {
    double val_fraction = 0.01;
    std::uint64_t seed = 0;
    DocumentMode mode = DocumentMode::paragraph;
};

struct IngestResult {
    TokenStream train;
    TokenStream val;
};

std::vector<std::int32_t> encode_document(std::string_view text);

// Directories are walked recursively in sorted path order.
IngestResult ingest(const std::vector<std::filesystem::path>& paths, const IngestOptions& options);
IngestResult ingest_documents(const std::vector<std::string>& documents, const IngestOptions& options);

std::string stream_digest(const std::vector<std::int32_t>& tokens);

// Cached stream: <stem>.tok holds little-endian u16 ids, <stem>.json the
// sidecar {digest, vocab, split, tokens, documents, format}.
void save_stream(const TokenStream& stream, const std::filesystem::path& stem);
TokenStream load_stream(const std::filesystem::path& stem);

struct BatchSpec {
    std::size_t batch_size = 32;
    std::size_t seq_len = 256;

    std::size_t tokens_per_step() const { return batch_size * seq_len; }
    void validate() const;
};

struct Batch {
    std::size_t batch_size = 0;
    std::size_t seq_len = 0;
    std::vector<std::int32_t> inputs;   // [B*T]
    std::vector<std::int32_t> targets;  // inputs shifted by one
    std::int64_t epoch = 0;             // epoch of the batch's first window
};

enum class BatchOrder { shuffled, sequential };

// Random-access batch source over a token stream. The stream is cut into
// windows of seq_len inputs starting every seq_len tokens (targets reach one
// token further); each epoch visits every
// window once, in an order drawn from (seed, epoch) when shuffled. Batch k
// holds the global windows k*B .. k*B+B-1, so batch contents are a pure
// function of (stream, spec, seed, k) and identical across runs.
class BatchStream {
public:
    BatchStream(const TokenStream& stream, BatchSpec spec, std::uint64_t seed,
                BatchOrder order = BatchOrder::shuffled);

    Batch at(std::int64_t index) const;
    std::size_t windows_per_epoch() const noexcept { return windows_; }
    const BatchSpec& spec() const noexcept { return spec_; }

private:
    const std::vector<std::size_t>& permutation(std::int64_t epoch) const;

    const TokenStream* stream_;
    BatchSpec spec_;
    std::uint64_t seed_;
    BatchOrder order_;
    std::size_t windows_ = 0;
    mutable std::int64_t cached_epoch_ = -1;
    mutable std::vector<std::size_t> cached_perm_;
};

// Fixed validation set: the first `count` sequential batches of the stream.
std::vector<Batch> validation_batches(const TokenStream& stream, const BatchSpec& spec, std::size_t count);

}  // namespace layerwise
