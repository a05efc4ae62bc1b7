// SPDX-License-Identifier: Apache-2.0
#include "layerwise/corpus.hpp"

#include <openssl/evp.h>

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <fstream>
#include <iomanip>
#include <memory>
#include <numeric>
#include <random>
#include <sstream>

#include "layerwise/errors.hpp"

namespace layerwise {
namespace {

std::array<unsigned char, 32> sha256(const void* data, std::size_t size) {
    std::array<unsigned char, 32> out{};
    unsigned int len = 0;
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
        EVP_DigestUpdate(ctx.get(), data, size) != 1 || EVP_DigestFinal_ex(ctx.get(), out.data(), &len) != 1) {
        throw Error("SHA-256 computation failed");
    }
    return out;
}

std::vector<unsigned char> to_u16le(const std::vector<std::int32_t>& tokens) {
    std::vector<unsigned char> bytes(tokens.size() * 2);
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        const auto v = static_cast<std::uint16_t>(tokens[i]);
        bytes[2 * i] = static_cast<unsigned char>(v & 0xff);
        bytes[2 * i + 1] = static_cast<unsigned char>(v >> 8);
    }
    return bytes;
}

// Uniform value in [0,1) from the seeded content hash of a document.
double split_draw(std::string_view doc, std::uint64_t seed) {
    std::string keyed(8, '\0');
    for (int i = 0; i < 8; ++i) keyed[static_cast<std::size_t>(i)] = static_cast<char>((seed >> (8 * i)) & 0xff);
    keyed.append(doc);
    const auto h = sha256(keyed.data(), keyed.size());
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v = (v << 8) | h[static_cast<std::size_t>(i)];
    return static_cast<double>(v >> 11) * 0x1.0p-53;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    if (in.bad()) throw IoError("error reading " + path.string());
    return buf.str();
}

void split_documents(const std::string& text, DocumentMode mode, std::vector<std::string>& out) {
    if (mode == DocumentMode::file) {
        if (!text.empty()) out.push_back(text);
        return;
    }
    std::istringstream in(text);
    std::string line;
    std::string current;
    auto flush = [&] {
        if (!current.empty()) out.push_back(std::move(current));
        current.clear();
    };
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const bool blank = std::all_of(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c); });
        if (mode == DocumentMode::line) {
            if (!blank) out.push_back(line);
            continue;
        }
        if (blank) {
            flush();
        } else {
            if (!current.empty()) current.push_back('\n');
            current += line;
        }
    }
    flush();
}

void collect_files(const std::filesystem::path& path, std::vector<std::filesystem::path>& files) {
    std::error_code ec;
    if (std::filesystem::is_directory(path, ec)) {
        std::vector<std::filesystem::path> found;
        for (const auto& entry : std::filesystem::recursive_directory_iterator(path)) {
            if (entry.is_regular_file()) found.push_back(entry.path());
        }
        std::sort(found.begin(), found.end());
        files.insert(files.end(), found.begin(), found.end());
    } else if (std::filesystem::exists(path, ec)) {
        files.push_back(path);
    } else {
        throw IoError("no such file or directory: " + path.string());
    }
}

}  // namespace

std::string_view to_string(Split s) {
    return s == Split::train ? "train" : "val";
}

DocumentMode parse_document_mode(std::string_view text) {
    if (text == "file") return DocumentMode::file;
    if (text == "paragraph") return DocumentMode::paragraph;
    if (text == "line") return DocumentMode::line;
    throw ConfigError("unknown document mode '" + std::string(text) + "' (file, paragraph, line)");
}

std::vector<std::int32_t> encode_document(std::string_view text) {
    std::vector<std::int32_t> out;
    out.reserve(text.size() + 2);
    out.push_back(kBos);
    for (unsigned char c : text) out.push_back(static_cast<std::int32_t>(c));
    out.push_back(kEos);
    return out;
}

std::string stream_digest(const std::vector<std::int32_t>& tokens) {
    const auto bytes = to_u16le(tokens);
    const auto h = sha256(bytes.data(), bytes.size());
    std::ostringstream hex;
    for (unsigned char b : h) hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(b);
    return hex.str();
}

IngestResult ingest_documents(const std::vector<std::string>& documents, const IngestOptions& options) {
    if (!(options.val_fraction >= 0.0 && options.val_fraction < 1.0)) {
        throw ConfigError("val_fraction must lie in [0,1)");
    }
    IngestResult result;
    result.train.split = Split::train;
    result.val.split = Split::val;
    for (const auto& doc : documents) {
        if (doc.empty()) continue;
        const bool to_val = options.val_fraction > 0.0 && split_draw(doc, options.seed) < options.val_fraction;
        TokenStream& target = to_val ? result.val : result.train;
        const auto encoded = encode_document(doc);
        target.tokens.insert(target.tokens.end(), encoded.begin(), encoded.end());
        ++target.documents;
    }
    if (result.train.documents + result.val.documents == 0) throw DataError("corpus is empty");
    result.train.digest = stream_digest(result.train.tokens);
    result.val.digest = stream_digest(result.val.tokens);
    return result;
}

IngestResult ingest(const std::vector<std::filesystem::path>& paths, const IngestOptions& options) {
    if (paths.empty()) throw DataError("no input files given");
    std::vector<std::filesystem::path> files;
    for (const auto& p : paths) collect_files(p, files);
    std::vector<std::string> documents;
    for (const auto& f : files) split_documents(read_file(f), options.mode, documents);
    return ingest_documents(documents, options);
}

void save_stream(const TokenStream& stream, const std::filesystem::path& stem) {
    const auto tok_path = std::filesystem::path(stem.string() + ".tok");
    const auto json_path = std::filesystem::path(stem.string() + ".json");
    if (stem.has_parent_path()) std::filesystem::create_directories(stem.parent_path());
    const auto bytes = to_u16le(stream.tokens);
    {
        std::ofstream out(tok_path, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + tok_path.string());
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw IoError("error writing " + tok_path.string());
    }
    nlohmann::json meta = {{"digest", stream.digest},
                           {"vocab", kByteVocab},
                           {"split", std::string(to_string(stream.split))},
                           {"tokens", stream.tokens.size()},
                           {"documents", stream.documents},
                           {"format", "u16le"}};
    std::ofstream out(json_path, std::ios::trunc);
    if (!out) throw IoError("cannot write " + json_path.string());
    out << meta.dump(2) << "\n";
    if (!out) throw IoError("error writing " + json_path.string());
}

TokenStream load_stream(const std::filesystem::path& stem) {
    const auto tok_path = std::filesystem::path(stem.string() + ".tok");
    const auto json_path = std::filesystem::path(stem.string() + ".json");
    nlohmann::json meta;
    try {
        meta = nlohmann::json::parse(read_file(json_path));
    } catch (const nlohmann::json::exception& e) {
        throw DataError("malformed sidecar " + json_path.string() + ": " + e.what());
    }
    const std::string bytes = read_file(tok_path);
    if (bytes.size() % 2 != 0) throw DataError(tok_path.string() + " has an odd byte count");
    TokenStream stream;
    stream.tokens.resize(bytes.size() / 2);
    for (std::size_t i = 0; i < stream.tokens.size(); ++i) {
        const auto lo = static_cast<unsigned char>(bytes[2 * i]);
        const auto hi = static_cast<unsigned char>(bytes[2 * i + 1]);
        const std::int32_t v = lo | (hi << 8);
        if (v >= kByteVocab) throw DataError("token id " + std::to_string(v) + " outside vocabulary");
        stream.tokens[i] = v;
    }
    stream.digest = stream_digest(stream.tokens);
    if (meta.value("digest", std::string()) != stream.digest) {
        throw DataError("digest mismatch for " + tok_path.string() + " (sidecar " + meta.value("digest", std::string()) +
                        ", content " + stream.digest + ")");
    }
    stream.split = meta.value("split", std::string("train")) == "val" ? Split::val : Split::train;
    stream.documents = meta.value("documents", std::size_t{0});
    return stream;
}

// ---------------------------------------------------------------- batching

void BatchSpec::validate() const {
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (seq_len < 1) throw ConfigError("seq_len must be >= 1");
}

BatchStream::BatchStream(const TokenStream& stream, BatchSpec spec, std::uint64_t seed, BatchOrder order)
    : stream_(&stream), spec_(spec), seed_(seed), order_(order) {
    spec_.validate();
    if (stream.tokens.size() < spec_.tokens_per_step() + 1) {
        throw DataError("token stream of " + std::to_string(stream.tokens.size()) + " tokens is shorter than one batch (" +
                        std::to_string(spec_.tokens_per_step() + 1) + " tokens needed)");
    }
    windows_ = (stream.tokens.size() - 1) / spec_.seq_len;
}

const std::vector<std::size_t>& BatchStream::permutation(std::int64_t epoch) const {
    if (epoch != cached_epoch_) {
        cached_perm_.resize(windows_);
        std::iota(cached_perm_.begin(), cached_perm_.end(), std::size_t{0});
        if (order_ == BatchOrder::shuffled) {
            std::seed_seq seq{static_cast<std::uint32_t>(seed_), static_cast<std::uint32_t>(seed_ >> 32),
                              static_cast<std::uint32_t>(epoch), static_cast<std::uint32_t>(epoch >> 32)};
            std::mt19937_64 rng(seq);
            std::shuffle(cached_perm_.begin(), cached_perm_.end(), rng);
        }
        cached_epoch_ = epoch;
    }
    return cached_perm_;
}

Batch BatchStream::at(std::int64_t index) const {
    if (index < 0) throw DataError("batch index must be >= 0");
    Batch batch;
    batch.batch_size = spec_.batch_size;
    batch.seq_len = spec_.seq_len;
    batch.inputs.resize(spec_.tokens_per_step());
    batch.targets.resize(spec_.tokens_per_step());
    const auto& tokens = stream_->tokens;
    for (std::size_t b = 0; b < spec_.batch_size; ++b) {
        const std::uint64_t global = static_cast<std::uint64_t>(index) * spec_.batch_size + b;
        const auto epoch = static_cast<std::int64_t>(global / windows_);
        if (b == 0) batch.epoch = epoch;
        const std::size_t window = permutation(epoch)[global % windows_];
        const std::size_t start = window * spec_.seq_len;
        for (std::size_t t = 0; t < spec_.seq_len; ++t) {
            batch.inputs[b * spec_.seq_len + t] = tokens[start + t];
            batch.targets[b * spec_.seq_len + t] = tokens[start + t + 1];
        }
    }
    return batch;
}

std::vector<Batch> validation_batches(const TokenStream& stream, const BatchSpec& spec, std::size_t count) {
    BatchStream source(stream, spec, 0, BatchOrder::sequential);
    std::vector<Batch> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) out.push_back(source.at(static_cast<std::int64_t>(i)));
    return out;
}

}  // namespace layerwise
