// SPDX-License-Identifier: Apache-2.0
#include "layerwise/trace.hpp"

#include <cerrno>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "layerwise/errors.hpp"

namespace layerwise {
namespace {

std::string format_loss(const std::optional<double>& v) {
    if (!v) return "";
    if (std::isnan(*v)) return "nan";
    if (std::isinf(*v)) return *v > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", *v);
    return buf;
}

std::optional<double> parse_loss(const std::string& field, const std::string& where) {
    if (field.empty()) return std::nullopt;
    if (field == "nan") return std::nan("");
    if (field == "inf") return HUGE_VAL;
    if (field == "-inf") return -HUGE_VAL;
    try {
        std::size_t pos = 0;
        const double v = std::stod(field, &pos);
        if (pos != field.size()) throw std::invalid_argument(field);
        return v;
    } catch (const std::logic_error&) {
        throw DataError(where + ": bad loss value '" + field + "'");
    }
}

std::int64_t parse_int(const std::string& field, const std::string& where) {
    try {
        std::size_t pos = 0;
        const long long v = std::stoll(field, &pos);
        if (pos != field.size()) throw std::invalid_argument(field);
        return v;
    } catch (const std::logic_error&) {
        throw DataError(where + ": bad integer '" + field + "'");
    }
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out(1);
    for (char c : line) {
        if (c == ',') {
            out.emplace_back();
        } else {
            out.back().push_back(c);
        }
    }
    return out;
}

}  // namespace

const TraceRow* RunTrace::at_or_before(std::int64_t step) const {
    const TraceRow* found = nullptr;
    for (const auto& r : rows) {
        if (r.step > step) break;
        found = &r;
    }
    return found;
}

const TraceRow* RunTrace::find(std::int64_t step) const {
    const TraceRow* r = at_or_before(step);
    return r && r->step == step ? r : nullptr;
}

std::string format_trace_row(const TraceRow& row) {
    std::string line = std::to_string(row.step);
    line += ',';
    line += std::to_string(row.tokens);
    line += ',';
    line += to_string(row.cum_cost);
    line += ',';
    line += row.mode;
    line += ',';
    line += format_loss(row.train_loss);
    line += ',';
    line += format_loss(row.val_loss);
    return line;
}

TraceRow parse_trace_row(const std::string& line, const std::string& where) {
    const auto fields = split_csv(line);
    if (fields.size() != 6) throw DataError(where + ": expected 6 fields, got " + std::to_string(fields.size()));
    TraceRow row;
    row.step = parse_int(fields[0], where);
    row.tokens = parse_int(fields[1], where);
    try {
        row.cum_cost = parse_rational(fields[2]);
    } catch (const Error&) {
        throw DataError(where + ": bad cumulative cost '" + fields[2] + "'");
    }
    row.mode = fields[3];
    row.train_loss = parse_loss(fields[4], where);
    row.val_loss = parse_loss(fields[5], where);
    return row;
}

RunTrace read_trace(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read trace " + path.string());
    std::string line;
    if (!std::getline(in, line) || line != kTraceHeader) {
        throw DataError(path.string() + ": missing trace header '" + std::string(kTraceHeader) + "'");
    }
    RunTrace trace;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const std::string where = path.string() + ":" + std::to_string(line_no);
        TraceRow row = parse_trace_row(line, where);
        if (!trace.rows.empty() && row.step <= trace.rows.back().step) {
            throw DataError(where + ": steps must be strictly increasing");
        }
        trace.rows.push_back(std::move(row));
    }
    return trace;
}

void write_trace(const std::filesystem::path& path, const RunTrace& trace) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write trace " + path.string());
    out << kTraceHeader << "\n";
    for (const auto& r : trace.rows) out << format_trace_row(r) << "\n";
    if (!out) throw IoError("error writing trace " + path.string());
}

TraceWriter::TraceWriter(const std::filesystem::path& path, std::optional<std::int64_t> keep_through_step)
    : path_(path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::string kept = std::string(kTraceHeader) + "\n";
    if (keep_through_step) {
        std::ifstream in(path);
        if (!in) throw IoError("cannot read trace " + path.string() + " for resume");
        std::string line;
        std::getline(in, line);
        if (line != kTraceHeader) throw DataError(path.string() + ": missing trace header");
        while (std::getline(in, line)) {
            if (in.eof()) break;  // no trailing newline: partial row
            if (line.empty()) continue;
            const TraceRow row = parse_trace_row(line, path.string());
            if (row.step > *keep_through_step) break;
            kept += line + "\n";
        }
    }
    file_ = std::fopen(path.string().c_str(), "wb");
    if (!file_) throw IoError("cannot open trace " + path.string() + ": " + std::strerror(errno));
    if (std::fwrite(kept.data(), 1, kept.size(), file_) != kept.size() || std::fflush(file_) != 0) {
        throw IoError("error writing trace " + path.string());
    }
}

TraceWriter::~TraceWriter() {
    if (file_) std::fclose(file_);
}

void TraceWriter::append(const TraceRow& row) {
    const std::string line = format_trace_row(row) + "\n";
    if (std::fwrite(line.data(), 1, line.size(), file_) != line.size() || std::fflush(file_) != 0) {
        throw IoError("error appending to trace " + path_.string() + ": " + std::strerror(errno));
    }
}

}  // namespace layerwise
