// SPDX-License-Identifier: Apache-2.0
#include "layerwise/config.hpp"

#include <cctype>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <limits>
#include <set>
#include <sstream>

#include "layerwise/errors.hpp"

namespace layerwise {
namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

// Strips a trailing comment that is not inside a quoted string.
std::string_view strip_comment(std::string_view line) {
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        if (line[i] == '"') quoted = !quoted;
        if (line[i] == '#' && !quoted) return line.substr(0, i);
    }
    return line;
}

std::string unquote(std::string_view raw, const std::string& where) {
    raw = trim(raw);
    if (raw.empty()) throw ConfigError(where + ": missing value");
    if (raw.front() == '"') {
        if (raw.size() < 2 || raw.back() != '"') throw ConfigError(where + ": unterminated string");
        std::string out;
        for (std::size_t i = 1; i + 1 < raw.size(); ++i) {
            if (raw[i] == '\\' && i + 2 < raw.size()) {
                const char next = raw[++i];
                out.push_back(next == 'n' ? '\n' : next == 't' ? '\t' : next);
            } else {
                out.push_back(raw[i]);
            }
        }
        return out;
    }
    return std::string(raw);
}

class Fields {
public:
    explicit Fields(const KeyValueConfig& kv) : kv_(kv) {}

    const std::string* raw(const std::string& key) {
        used_.insert(key);
        const auto it = kv_.values().find(key);
        return it == kv_.values().end() ? nullptr : &it->second;
    }

    template <typename Int>
    void integer(const std::string& key, Int& out) {
        if (const auto* v = raw(key)) {
            try {
                std::size_t pos = 0;
                const long long parsed = std::stoll(*v, &pos);
                if (pos != v->size()) throw std::invalid_argument(*v);
                if (parsed < static_cast<long long>(std::numeric_limits<Int>::min()) ||
                    static_cast<unsigned long long>(parsed) > static_cast<unsigned long long>(std::numeric_limits<Int>::max())) {
                    throw std::out_of_range(*v);
                }
                out = static_cast<Int>(parsed);
            } catch (const std::logic_error&) {
                throw ConfigError("config key " + key + ": expected an integer, got '" + *v + "'");
            }
        }
    }

    void unsigned64(const std::string& key, std::uint64_t& out) {
        if (const auto* v = raw(key)) {
            try {
                std::size_t pos = 0;
                if (!v->empty() && v->front() == '-') throw std::invalid_argument(*v);
                out = std::stoull(*v, &pos);
                if (pos != v->size()) throw std::invalid_argument(*v);
            } catch (const std::logic_error&) {
                throw ConfigError("config key " + key + ": expected a non-negative integer, got '" + *v + "'");
            }
        }
    }

    void real(const std::string& key, double& out) {
        if (const auto* v = raw(key)) {
            try {
                std::size_t pos = 0;
                out = std::stod(*v, &pos);
                if (pos != v->size()) throw std::invalid_argument(*v);
            } catch (const std::logic_error&) {
                throw ConfigError("config key " + key + ": expected a number, got '" + *v + "'");
            }
        }
    }

    void rational(const std::string& key, Rational& out) {
        if (const auto* v = raw(key)) out = parse_rational(*v);
    }

    void text(const std::string& key, std::string& out) {
        if (const auto* v = raw(key)) out = *v;
    }

    void reject_unknown() const {
        for (const auto& [key, value] : kv_.values()) {
            if (!used_.contains(key)) throw ConfigError("unknown config key '" + key + "'");
        }
    }

private:
    const KeyValueConfig& kv_;
    std::set<std::string> used_;
};

std::string quoted(const std::string& s) {
    std::string out = "\"";
    for (char c : s) {
        if (c == '"' || c == '\\') out.push_back('\\');
        out.push_back(c);
    }
    return out + "\"";
}

std::string real_text(double v) {
    std::ostringstream out;
    out << std::setprecision(17) << v;
    return out.str();
}

}  // namespace

KeyValueConfig KeyValueConfig::parse(std::string_view text, const std::string& source) {
    KeyValueConfig kv;
    kv.source_ = source;
    std::string section;
    std::size_t line_no = 0;
    std::istringstream in{std::string(text)};
    std::string line_buf;
    while (std::getline(in, line_buf)) {
        ++line_no;
        const std::string where = source + ":" + std::to_string(line_no);
        const std::string_view line = trim(strip_comment(line_buf));
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']' || line.size() < 3) throw ConfigError(where + ": malformed section header");
            section = std::string(trim(line.substr(1, line.size() - 2)));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) throw ConfigError(where + ": expected key = value");
        const std::string key(trim(line.substr(0, eq)));
        if (key.empty()) throw ConfigError(where + ": empty key");
        const std::string full = section.empty() ? key : section + "." + key;
        if (kv.values_.contains(full)) throw ConfigError(where + ": duplicate key '" + full + "'");
        kv.values_[full] = unquote(line.substr(eq + 1), where);
    }
    return kv;
}

KeyValueConfig KeyValueConfig::from_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse(buf.str(), path.string());
}

void KeyValueConfig::set(const std::string& key, std::string_view raw_value) {
    if (key.find('.') == std::string::npos) throw ConfigError("override key '" + key + "' must be section.name");
    values_[key] = unquote(raw_value, "override " + key);
}

void TrainConfig::validate() const {
    model.validate();
    optim.validate();
    batch.validate();
    if (batch.seq_len > static_cast<std::size_t>(model.context_len)) {
        throw ConfigError("data.seq_len (" + std::to_string(batch.seq_len) + ") exceeds model.context (" +
                          std::to_string(model.context_len) + ")");
    }
    if (model.vocab_size != kByteVocab) {
        throw ConfigError("model.vocab must be " + std::to_string(kByteVocab) + " for the byte-level corpus");
    }
    if (regime.steps <= 0) throw ConfigError("regime step budget must be > 0");
    if (regime.baseline_steps <= 0) throw ConfigError("regime.baseline_steps must be > 0");
    if (regime.continual_steps && *regime.continual_steps < 0) throw ConfigError("regime.continual_steps must be >= 0");
    if (regime.stages < 1) throw ConfigError("regime.stages must be >= 1");
    if (regime.kind == RegimeKind::incremental && model.n_layers % regime.stages != 0) {
        throw ConfigError("model.layers (" + std::to_string(model.n_layers) + ") not divisible by regime.stages (" +
                          std::to_string(regime.stages) + ")");
    }
    if (regime.phase_split < 0 || regime.phase_split > 1) throw ConfigError("regime.phase_split must lie in [0,1]");
    if (regime.backward_ratio <= 0) throw ConfigError("regime.backward_ratio must be > 0");
    if (eval_every < 1) throw ConfigError("run.eval_every must be >= 1");
    if (val_batches < 1) throw ConfigError("run.val_batches must be >= 1");
    if (checkpoint_every < 1) throw ConfigError("run.checkpoint_every must be >= 1");
    if (log_every < 0) throw ConfigError("run.log_every must be >= 0");
}

std::string TrainConfig::to_toml(bool include_out_dir) const {
    std::ostringstream out;
    out << "[model]\n";
    out << "layers = " << model.n_layers << "\n";
    out << "d_model = " << model.d_model << "\n";
    out << "heads = " << model.n_heads << "\n";
    out << "context = " << model.context_len << "\n";
    out << "vocab = " << model.vocab_size << "\n";
    out << "precision = " << quoted(std::string(to_string(model.precision))) << "\n";
    out << "init_seed = " << model.init_seed << "\n";
    out << "\n[optim]\n";
    out << "lr = " << real_text(optim.lr) << "\n";
    out << "beta1 = " << real_text(optim.beta1) << "\n";
    out << "beta2 = " << real_text(optim.beta2) << "\n";
    out << "eps = " << real_text(optim.eps) << "\n";
    out << "weight_decay = " << real_text(optim.weight_decay) << "\n";
    out << "warmup_steps = " << optim.warmup_steps << "\n";
    out << "grad_clip = " << real_text(optim.grad_clip_norm.value_or(0.0)) << "\n";
    out << "\n[data]\n";
    out << "dir = " << quoted(data_dir.string()) << "\n";
    out << "batch_size = " << batch.batch_size << "\n";
    out << "seq_len = " << batch.seq_len << "\n";
    out << "\n[regime]\n";
    out << "kind = " << quoted(regime.kind == RegimeKind::baseline ? "baseline" : "incremental") << "\n";
    out << "stages = " << regime.stages << "\n";
    out << "steps = " << regime.steps << "\n";
    if (regime.continual_steps) {
        out << "continual_steps = " << *regime.continual_steps << "\n";
    } else {
        out << "continual_steps = \"auto\"\n";
    }
    out << "baseline_steps = " << regime.baseline_steps << "\n";
    out << "phase_split = " << quoted(to_string(regime.phase_split)) << "\n";
    out << "backward_ratio = " << quoted(to_string(regime.backward_ratio)) << "\n";
    out << "\n[run]\n";
    out << "seed = " << seed << "\n";
    out << "eval_every = " << eval_every << "\n";
    out << "val_batches = " << val_batches << "\n";
    if (include_out_dir) {
        out << "checkpoint_every = " << checkpoint_every << "\n";
        out << "log_every = " << log_every << "\n";
        out << "out_dir = " << quoted(out_dir.string()) << "\n";
    }
    return out.str();
}

TrainConfig train_config_from(const KeyValueConfig& kv) {
    TrainConfig cfg;
    Fields f(kv);

    f.integer("model.layers", cfg.model.n_layers);
    f.integer("model.d_model", cfg.model.d_model);
    f.integer("model.heads", cfg.model.n_heads);
    f.integer("model.context", cfg.model.context_len);
    f.integer("model.vocab", cfg.model.vocab_size);
    if (const auto* p = f.raw("model.precision")) cfg.model.precision = parse_precision(*p);
    f.unsigned64("model.init_seed", cfg.model.init_seed);

    f.real("optim.lr", cfg.optim.lr);
    f.real("optim.beta1", cfg.optim.beta1);
    f.real("optim.beta2", cfg.optim.beta2);
    f.real("optim.eps", cfg.optim.eps);
    f.real("optim.weight_decay", cfg.optim.weight_decay);
    f.integer("optim.warmup_steps", cfg.optim.warmup_steps);
    double clip = cfg.optim.grad_clip_norm.value_or(0.0);
    f.real("optim.grad_clip", clip);
    cfg.optim.grad_clip_norm = clip > 0 ? std::optional<double>(clip) : std::nullopt;

    std::string data_dir = cfg.data_dir.string();
    f.text("data.dir", data_dir);
    cfg.data_dir = data_dir;
    f.integer("data.batch_size", cfg.batch.batch_size);
    f.integer("data.seq_len", cfg.batch.seq_len);

    std::string kind = "baseline";
    f.text("regime.kind", kind);
    if (kind == "baseline") {
        cfg.regime.kind = RegimeKind::baseline;
    } else if (kind == "incremental") {
        cfg.regime.kind = RegimeKind::incremental;
    } else {
        throw ConfigError("regime.kind must be \"baseline\" or \"incremental\", got '" + kind + "'");
    }
    f.integer("regime.stages", cfg.regime.stages);
    f.integer("regime.steps", cfg.regime.steps);
    bool baseline_steps_given = kv.contains("regime.baseline_steps");
    f.integer("regime.baseline_steps", cfg.regime.baseline_steps);
    if (!baseline_steps_given) cfg.regime.baseline_steps = cfg.regime.steps;
    if (const auto* c = f.raw("regime.continual_steps")) {
        if (*c == "auto") {
            cfg.regime.continual_steps.reset();
        } else {
            std::int64_t steps = 0;
            f.integer("regime.continual_steps", steps);
            cfg.regime.continual_steps = steps;
        }
    }
    f.rational("regime.phase_split", cfg.regime.phase_split);
    f.rational("regime.backward_ratio", cfg.regime.backward_ratio);
    if (cfg.regime.kind == RegimeKind::baseline) cfg.regime.stages = 1;

    f.unsigned64("run.seed", cfg.seed);
    f.integer("run.eval_every", cfg.eval_every);
    f.integer("run.val_batches", cfg.val_batches);
    f.integer("run.checkpoint_every", cfg.checkpoint_every);
    f.integer("run.log_every", cfg.log_every);
    std::string out_dir = cfg.out_dir.string();
    f.text("run.out_dir", out_dir);
    cfg.out_dir = out_dir;

    f.reject_unknown();
    cfg.validate();
    return cfg;
}

TrainConfig load_train_config(const std::filesystem::path& path,
                              const std::vector<std::pair<std::string, std::string>>& overrides) {
    KeyValueConfig kv = KeyValueConfig::from_file(path);
    for (const auto& [key, value] : overrides) kv.set(key, value);
    return train_config_from(kv);
}

std::filesystem::path resolve_output_dir(const std::filesystem::path& out_dir) {
    if (out_dir.is_relative()) {
        if (const char* root = std::getenv("LAYERWISE_OUT_ROOT"); root && *root) {
            return std::filesystem::path(root) / out_dir;
        }
    }
    return out_dir;
}

}  // namespace layerwise
