#pragma once

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "caracal/model.hpp"

namespace caracal {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format is little-endian; big-endian hosts are unsupported");

namespace ckpt {

constexpr char kMagic[4] = {'C', 'R', 'C', 'L'};
constexpr std::uint32_t kVersion = 1;

inline void write_u32(std::ostream& os, std::uint32_t v) {
    os.write(reinterpret_cast<const char*>(&v), 4);
}

inline void write_u8(std::ostream& os, std::uint8_t v) {
    os.write(reinterpret_cast<const char*>(&v), 1);
}

inline std::uint32_t read_u32(std::istream& is, const char* what) {
    std::uint32_t v = 0;
    if (!is.read(reinterpret_cast<char*>(&v), 4))
        throw std::runtime_error(std::string("checkpoint: truncated file reading ") + what);
    return v;
}

inline std::uint8_t read_u8(std::istream& is, const char* what) {
    std::uint8_t v = 0;
    if (!is.read(reinterpret_cast<char*>(&v), 1))
        throw std::runtime_error(std::string("checkpoint: truncated file reading ") + what);
    return v;
}

inline std::string format_eps(double eps) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", eps);
    return buf;
}

} // namespace ckpt

// Config blob: one "key = value" line per field; attn_layers holds the
// resolved SWA indices, comma separated (empty for a pure-MHF stack).
inline std::string config_text(const ModelConfig& cfg) {
    std::ostringstream os;
    os << "d_model = " << cfg.d_model << "\n";
    os << "n_layers = " << cfg.n_layers << "\n";
    os << "n_heads = " << cfg.n_heads << "\n";
    os << "d_head = " << cfg.d_head() << "\n";
    os << "vocab_size = " << cfg.vocab_size << "\n";
    os << "window = " << cfg.window << "\n";
    os << "ratio = " << cfg.mhf_to_swa_ratio << "\n";
    os << "attn_layers = ";
    const auto swa = cfg.swa_layer_indices();
    for (std::size_t i = 0; i < swa.size(); ++i) os << (i ? "," : "") << swa[i];
    os << "\n";
    os << "ln_eps = " << ckpt::format_eps(cfg.ln_eps) << "\n";
    os << "precision = " << precision_name(cfg.precision) << "\n";
    return os.str();
}

inline ModelConfig parse_config_text(const std::string& text) {
    ModelConfig cfg;
    std::istringstream is(text);
    std::string line;
    bool saw_attn = false;
    std::size_t d_head_claimed = 0;
    while (std::getline(is, line)) {
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        auto trim = [](std::string s) {
            const auto a = s.find_first_not_of(" \t\r");
            const auto b = s.find_last_not_of(" \t\r");
            return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
        };
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        if (key == "d_model") cfg.d_model = std::stoul(val);
        else if (key == "n_layers") cfg.n_layers = std::stoul(val);
        else if (key == "n_heads") cfg.n_heads = std::stoul(val);
        else if (key == "d_head") d_head_claimed = std::stoul(val);
        else if (key == "vocab_size") cfg.vocab_size = std::stoul(val);
        else if (key == "window") cfg.window = std::stoul(val);
        else if (key == "ratio") cfg.mhf_to_swa_ratio = std::stoul(val);
        else if (key == "ln_eps") cfg.ln_eps = std::stod(val);
        else if (key == "precision") {
            if (val == "f32") cfg.precision = Precision::f32;
            else if (val == "f64") cfg.precision = Precision::f64;
            else throw std::runtime_error("checkpoint: unknown precision '" + val + "'");
        } else if (key == "attn_layers") {
            saw_attn = true;
            std::vector<std::size_t> layers;
            std::istringstream vs(val);
            std::string tok;
            while (std::getline(vs, tok, ','))
                if (!tok.empty()) layers.push_back(std::stoul(tok));
            cfg.attn_layers = std::move(layers);
        }
    }
    if (!saw_attn) cfg.attn_layers.reset();
    cfg.validate();
    if (d_head_claimed != 0 && d_head_claimed != cfg.d_head())
        throw std::runtime_error("checkpoint: d_head " + std::to_string(d_head_claimed) +
                                 " inconsistent with d_model/n_heads");
    return cfg;
}

template <typename Real>
void save_checkpoint(const std::string& path, CaracalModel<Real>& m) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("checkpoint: cannot open '" + path + "' for writing");
    os.write(ckpt::kMagic, 4);
    ckpt::write_u32(os, ckpt::kVersion);
    const std::string cfg = config_text(m.cfg);
    ckpt::write_u32(os, static_cast<std::uint32_t>(cfg.size()));
    os.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));

    auto refs = visit_params(m);
    ckpt::write_u32(os, static_cast<std::uint32_t>(refs.size()));
    const std::uint8_t dtype = std::is_same_v<Real, float> ? 0 : 1;
    for (const ParamRef<Real>& p : refs) {
        ckpt::write_u32(os, static_cast<std::uint32_t>(p.name.size()));
        os.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
        ckpt::write_u8(os, dtype);
        ckpt::write_u32(os, static_cast<std::uint32_t>(p.tensor->rank()));
        for (std::size_t d : p.tensor->dims) ckpt::write_u32(os, static_cast<std::uint32_t>(d));
        os.write(reinterpret_cast<const char*>(p.tensor->data.data()),
                 static_cast<std::streamsize>(p.tensor->numel() * sizeof(Real)));
    }
    if (!os) throw std::runtime_error("checkpoint: write to '" + path + "' failed");
}

// Reads magic, version, and the config blob; leaves the stream at the tensor
// table.
inline ModelConfig read_checkpoint_header(std::istream& is, const std::string& path) {
    char magic[4] = {};
    if (!is.read(magic, 4) || std::memcmp(magic, ckpt::kMagic, 4) != 0)
        throw std::runtime_error("checkpoint: bad magic bytes in '" + path + "'");
    const std::uint32_t version = ckpt::read_u32(is, "version");
    if (version != ckpt::kVersion)
        throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
    const std::uint32_t cfg_len = ckpt::read_u32(is, "config length");
    std::string cfg_text(cfg_len, '\0');
    if (!is.read(cfg_text.data(), cfg_len))
        throw std::runtime_error("checkpoint: truncated file reading config");
    return parse_config_text(cfg_text);
}

inline Precision checkpoint_precision(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("checkpoint: cannot open '" + path + "'");
    return read_checkpoint_header(is, path).precision;
}

template <typename Real>
CaracalModel<Real> load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("checkpoint: cannot open '" + path + "'");
    ModelConfig cfg = read_checkpoint_header(is, path);
    const std::uint8_t want_dtype = std::is_same_v<Real, float> ? 0 : 1;
    if ((cfg.precision == Precision::f32 ? 0 : 1) != want_dtype)
        throw std::runtime_error(std::string("checkpoint: precision is ") +
                                 precision_name(cfg.precision) + ", loader expects " +
                                 (want_dtype == 0 ? "f32" : "f64"));

    CaracalModel<Real> m = model_sized<Real>(cfg);
    auto refs = visit_params(m);
    std::unordered_map<std::string, ParamRef<Real>*> by_name;
    for (ParamRef<Real>& p : refs) by_name[p.name] = &p;

    const std::uint32_t count = ckpt::read_u32(is, "tensor count");
    std::size_t loaded = 0;
    for (std::uint32_t k = 0; k < count; ++k) {
        const std::uint32_t name_len = ckpt::read_u32(is, "tensor name length");
        std::string name(name_len, '\0');
        if (!is.read(name.data(), name_len))
            throw std::runtime_error("checkpoint: truncated file reading tensor name");
        const auto it = by_name.find(name);
        if (it == by_name.end())
            throw std::runtime_error("checkpoint: unknown tensor '" + name + "'");
        Tensor<Real>& t = *it->second->tensor;

        const std::uint8_t dtype = ckpt::read_u8(is, "tensor dtype");
        if (dtype != want_dtype)
            throw std::runtime_error("checkpoint: tensor '" + name + "' dtype byte " +
                                     std::to_string(dtype) + " does not match precision " +
                                     precision_name(cfg.precision));
        const std::uint32_t rank = ckpt::read_u32(is, "tensor rank");
        Shape dims(rank);
        for (std::uint32_t r = 0; r < rank; ++r) dims[r] = ckpt::read_u32(is, "tensor dim");
        if (dims != t.dims)
            throw std::runtime_error("checkpoint: tensor '" + name + "' shape " +
                                     shape_str(dims) + " does not match expected " +
                                     shape_str(t.dims));
        if (!is.read(reinterpret_cast<char*>(t.data.data()),
                     static_cast<std::streamsize>(t.numel() * sizeof(Real))))
            throw std::runtime_error("checkpoint: truncated file reading tensor '" + name + "'");
        ++loaded;
    }
    if (loaded != refs.size())
        throw std::runtime_error("checkpoint: " + std::to_string(loaded) + " tensors stored, " +
                                 std::to_string(refs.size()) + " expected");
    return m;
}

} // namespace caracal
