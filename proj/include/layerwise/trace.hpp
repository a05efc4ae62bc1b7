// SPDX-License-Identifier: Apache-2.0
//
// Run trace CSV: header `step,tokens,cum_cost,mode,train_loss,val_loss`.
// cum_cost is written as an exact rational ("a" or "a/b"); losses with 17
// significant digits; an empty val_loss means no evaluation at that step.
#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "layerwise/rational.hpp"

namespace layerwise {

inline constexpr const char* kTraceHeader = "step,tokens,cum_cost,mode,train_loss,val_loss";

struct TraceRow {
    std::int64_t step = 0;
    std::int64_t tokens = 0;
    Rational cum_cost{0};
    std::string mode;  // directive label, e.g. "phase1:2"
    std::optional<double> train_loss;
    std::optional<double> val_loss;
};

struct RunTrace {
    std::vector<TraceRow> rows;

    // Last row with step <= `step`, or nullptr.
    const TraceRow* at_or_before(std::int64_t step) const;
    const TraceRow* find(std::int64_t step) const;
};

std::string format_trace_row(const TraceRow& row);
TraceRow parse_trace_row(const std::string& line, const std::string& where = "trace");

// Throws DataError on a malformed file or non-increasing steps.
RunTrace read_trace(const std::filesystem::path& path);
void write_trace(const std::filesystem::path& path, const RunTrace& trace);

// Appends one row per call with a single write followed by a flush, so a
// crash leaves only whole rows behind.
class TraceWriter {
public:
    // Creates the file with a header, or when `keep_through_step` is set,
    // keeps the existing rows with step <= keep_through_step and drops the
    // rest (a partially written tail line included).
    TraceWriter(const std::filesystem::path& path, std::optional<std::int64_t> keep_through_step = std::nullopt);
    ~TraceWriter();
    TraceWriter(const TraceWriter&) = delete;
    TraceWriter& operator=(const TraceWriter&) = delete;

    void append(const TraceRow& row);
    const std::filesystem::path& path() const noexcept { return path_; }

private:
    std::filesystem::path path_;
    std::FILE* file_ = nullptr;
};

}  // namespace layerwise
