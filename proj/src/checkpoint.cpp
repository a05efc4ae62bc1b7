// SPDX-License-Identifier: Apache-2.0
#include "layerwise/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <type_traits>

namespace layerwise {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'L', 'A', 'Y', 'E', 'R', 'W', 'I', 'S'};

class Writer {
public:
    template <typename T>
    void put(T v) {
        static_assert(std::is_trivially_copyable_v<T>);
        const auto* p = reinterpret_cast<const char*>(&v);
        buf_.append(p, sizeof(T));
    }
    void put_str(const std::string& s) {
        put(static_cast<std::uint32_t>(s.size()));
        buf_.append(s);
    }
    template <typename Real>
    void put_values(const DenseArray<Real>& a) {
        buf_.append(reinterpret_cast<const char*>(a.data()), a.size() * sizeof(Real));
    }
    void append(const std::string& bytes) { buf_.append(bytes); }
    std::string take() { return std::move(buf_); }

private:
    std::string buf_;
};

class Reader {
public:
    Reader(const std::string& data, std::string what) : data_(data), what_(std::move(what)) {}

    template <typename T>
    T get() {
        T v;
        need(sizeof(T));
        std::memcpy(&v, data_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }
    std::string get_str() {
        const auto n = get<std::uint32_t>();
        need(n);
        std::string s = data_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    template <typename Real>
    void get_values(DenseArray<Real>& a) {
        need(a.size() * sizeof(Real));
        std::memcpy(a.data(), data_.data() + pos_, a.size() * sizeof(Real));
        pos_ += a.size() * sizeof(Real);
    }
    std::string get_bytes(std::size_t n) {
        need(n);
        std::string s = data_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    bool done() const { return pos_ == data_.size(); }

private:
    void need(std::size_t n) const {
        if (pos_ + n > data_.size()) throw DataError("truncated checkpoint " + what_);
    }

    const std::string& data_;
    std::string what_;
    std::size_t pos_ = 0;
};

void put_section(Writer& out, const char (&tag)[5], const std::string& payload) {
    for (int i = 0; i < 4; ++i) out.put(tag[i]);
    out.put(static_cast<std::uint64_t>(payload.size()));
    out.append(payload);
}

std::string encode_config(const ModelConfig& cfg) {
    Writer w;
    w.put(static_cast<std::uint32_t>(cfg.n_layers));
    w.put(static_cast<std::uint32_t>(cfg.d_model));
    w.put(static_cast<std::uint32_t>(cfg.n_heads));
    w.put(static_cast<std::uint32_t>(cfg.context_len));
    w.put(static_cast<std::uint32_t>(cfg.vocab_size));
    w.put(static_cast<std::uint8_t>(cfg.precision == Precision::verify64 ? 0 : 1));
    w.put(static_cast<std::uint64_t>(cfg.init_seed));
    return w.take();
}

ModelConfig decode_config(Reader& r) {
    ModelConfig cfg;
    cfg.n_layers = static_cast<int>(r.get<std::uint32_t>());
    cfg.d_model = static_cast<int>(r.get<std::uint32_t>());
    cfg.n_heads = static_cast<int>(r.get<std::uint32_t>());
    cfg.context_len = static_cast<int>(r.get<std::uint32_t>());
    cfg.vocab_size = static_cast<int>(r.get<std::uint32_t>());
    const auto precision = r.get<std::uint8_t>();
    if (precision > 1) throw DataError("unknown precision tag in checkpoint");
    cfg.precision = precision == 0 ? Precision::verify64 : Precision::fast32;
    cfg.init_seed = r.get<std::uint64_t>();
    cfg.validate();
    return cfg;
}

std::string read_all(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

struct Section {
    std::string tag;
    std::string payload;
};

std::vector<Section> split_sections(const std::string& data, const std::filesystem::path& path) {
    Reader r(data, path.string());
    if (r.get_bytes(8) != std::string(kMagic, 8)) throw DataError(path.string() + " is not a layerwise checkpoint");
    const auto version = r.get<std::uint32_t>();
    if (version != kCheckpointVersion) {
        throw DataError("unsupported checkpoint version " + std::to_string(version) + " in " + path.string());
    }
    std::vector<Section> sections;
    while (true) {
        Section s;
        s.tag = r.get_bytes(4);
        const auto len = r.get<std::uint64_t>();
        s.payload = r.get_bytes(len);
        if (s.tag == "END_") break;
        sections.push_back(std::move(s));
    }
    if (!r.done()) throw DataError("trailing bytes after END_ in " + path.string());
    return sections;
}

template <typename Real>
constexpr Precision precision_of() {
    return std::is_same_v<Real, double> ? Precision::verify64 : Precision::fast32;
}

}  // namespace

template <typename Real>
void save_checkpoint(const std::filesystem::path& path, const ParameterStore<Real>& store,
                     const OptState<Real>* optimizer, const RunState* run) {
    if (store.config().precision != precision_of<Real>()) {
        throw ConfigError("store precision does not match the model config");
    }
    Writer file;
    for (char c : kMagic) file.put(c);
    file.put(kCheckpointVersion);

    put_section(file, "CONF", encode_config(store.config()));

    Writer params;
    params.put(static_cast<std::uint32_t>(store.group_count()));
    for (const auto& g : store.groups()) {
        params.put_str(g.name);
        params.put(static_cast<std::uint8_t>(g.trainable ? 1 : 0));
        params.put(static_cast<std::uint32_t>(g.params.size()));
        for (const auto& p : g.params) {
            params.put_str(p.name);
            params.put(static_cast<std::uint32_t>(p.value().rank()));
            for (std::size_t e : p.value().shape()) params.put(static_cast<std::uint64_t>(e));
            params.put_values(p.value());
        }
    }
    put_section(file, "PARM", params.take());

    if (optimizer) {
        Writer opt;
        opt.put(static_cast<std::uint32_t>(optimizer->groups.size()));
        for (const auto& [index, moments] : optimizer->groups) {
            opt.put(static_cast<std::uint64_t>(index));
            opt.put(static_cast<std::int64_t>(moments.step));
            opt.put(static_cast<std::uint32_t>(moments.first.size()));
            for (std::size_t i = 0; i < moments.first.size(); ++i) {
                opt.put(static_cast<std::uint64_t>(moments.first[i].size()));
                opt.put_values(moments.first[i]);
                opt.put_values(moments.second[i]);
            }
        }
        put_section(file, "OPTS", opt.take());
    }
    if (run) {
        Writer rs;
        rs.put(static_cast<std::int64_t>(run->steps_completed));
        rs.put_str(run->fingerprint);
        put_section(file, "RUNS", rs.take());
    }
    put_section(file, "END_", "");

    const std::string bytes = file.take();
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    const auto tmp = std::filesystem::path(path.string() + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write checkpoint " + tmp.string());
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        out.flush();
        if (!out) throw IoError("error writing checkpoint " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("cannot move checkpoint into place at " + path.string() + ": " + ec.message());
}

ModelConfig read_checkpoint_config(const std::filesystem::path& path) {
    const std::string data = read_all(path);
    for (const auto& s : split_sections(data, path)) {
        if (s.tag == "CONF") {
            Reader r(s.payload, path.string());
            return decode_config(r);
        }
    }
    throw DataError("checkpoint " + path.string() + " has no CONF section");
}

template <typename Real>
Checkpoint<Real> load_checkpoint(const std::filesystem::path& path) {
    const std::string data = read_all(path);
    const auto sections = split_sections(data, path);
    if (sections.empty() || sections.front().tag != "CONF") {
        throw DataError("checkpoint " + path.string() + " must start with a CONF section");
    }
    Reader conf(sections.front().payload, path.string());
    const ModelConfig cfg = decode_config(conf);
    if (cfg.precision != precision_of<Real>()) {
        throw ConfigError("checkpoint " + path.string() + " holds " + std::string(to_string(cfg.precision)) +
                          " values");
    }
    Checkpoint<Real> ckpt{ParameterStore<Real>(cfg), std::nullopt, std::nullopt};
    bool have_params = false;
    for (std::size_t si = 1; si < sections.size(); ++si) {
        const auto& s = sections[si];
        Reader r(s.payload, path.string());
        if (s.tag == "PARM") {
            const auto groups = r.get<std::uint32_t>();
            if (groups != ckpt.store.group_count()) throw DataError("checkpoint group count mismatch");
            for (auto& g : ckpt.store.groups()) {
                if (r.get_str() != g.name) throw DataError("checkpoint group order mismatch at " + g.name);
                g.trainable = r.get<std::uint8_t>() != 0;
                if (r.get<std::uint32_t>() != g.params.size()) throw DataError("parameter count mismatch in " + g.name);
                for (auto& p : g.params) {
                    if (r.get_str() != p.name) throw DataError("parameter name mismatch at " + p.name);
                    const auto rank = r.get<std::uint32_t>();
                    Shape shape(rank);
                    for (auto& e : shape) e = static_cast<std::size_t>(r.get<std::uint64_t>());
                    if (shape != p.value().shape()) throw DataError("shape mismatch for " + p.name);
                    r.get_values(p.value());
                }
            }
            have_params = true;
        } else if (s.tag == "OPTS") {
            OptState<Real> opt;
            const auto entries = r.get<std::uint32_t>();
            for (std::uint32_t e = 0; e < entries; ++e) {
                const auto index = static_cast<std::size_t>(r.get<std::uint64_t>());
                if (index >= ckpt.store.group_count()) throw DataError("optimizer entry for unknown group");
                GroupMoments<Real> m;
                m.step = r.get<std::int64_t>();
                const auto tensors = r.get<std::uint32_t>();
                const auto& params = ckpt.store.group(index).params;
                if (tensors != params.size()) throw DataError("optimizer tensor count mismatch");
                for (std::uint32_t t = 0; t < tensors; ++t) {
                    const auto count = r.get<std::uint64_t>();
                    if (count != params[t].value().size()) throw DataError("optimizer moment size mismatch");
                    m.first.emplace_back(params[t].value().shape());
                    m.second.emplace_back(params[t].value().shape());
                    r.get_values(m.first.back());
                    r.get_values(m.second.back());
                }
                opt.groups.emplace(index, std::move(m));
            }
            ckpt.optimizer = std::move(opt);
        } else if (s.tag == "RUNS") {
            RunState rs;
            rs.steps_completed = r.get<std::int64_t>();
            rs.fingerprint = r.get_str();
            ckpt.run = std::move(rs);
        } else {
            throw DataError("unknown checkpoint section '" + s.tag + "'");
        }
        if (!r.done()) throw DataError("section " + s.tag + " has trailing bytes");
    }
    if (!have_params) throw DataError("checkpoint " + path.string() + " has no PARM section");
    return ckpt;
}

template void save_checkpoint(const std::filesystem::path&, const ParameterStore<float>&, const OptState<float>*,
                              const RunState*);
template void save_checkpoint(const std::filesystem::path&, const ParameterStore<double>&, const OptState<double>*,
                              const RunState*);
template Checkpoint<float> load_checkpoint(const std::filesystem::path&);
template Checkpoint<double> load_checkpoint(const std::filesystem::path&);

}  // namespace layerwise
