#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "caracal/attention.hpp"
#include "caracal/autograd.hpp"
#include "caracal/mhf.hpp"
#include "caracal/rng.hpp"
#include "caracal/tensor.hpp"

namespace caracal {

enum class Precision : std::uint8_t { f32 = 0, f64 = 1 };

inline const char* precision_name(Precision p) { return p == Precision::f32 ? "f32" : "f64"; }

struct ModelConfig {
    std::size_t d_model = 64;
    std::size_t n_layers = 3;
    std::size_t n_heads = 4;
    std::size_t vocab_size = 256; // byte-level by default
    std::size_t window = 256;
    std::size_t mhf_to_swa_ratio = 2;
    // When set, these layer indices are SWA and the ratio is ignored.
    std::optional<std::vector<std::size_t>> attn_layers;
    double ln_eps = 1e-5;
    Precision precision = Precision::f32;

    std::size_t d_head() const { return n_heads == 0 ? 0 : d_model / n_heads; }

    // floor(2*d_model*4/3) rounded up to a multiple of 128
    std::size_t intermediate_size() const {
        return ((8 * d_model / 3) + 127) / 128 * 128;
    }

    // Uniform interleave puts one SWA layer after every `ratio` MHF layers.
    bool is_swa_layer(std::size_t i) const {
        if (attn_layers.has_value()) {
            for (std::size_t a : *attn_layers)
                if (a == i) return true;
            return false;
        }
        return (i + 1) % (mhf_to_swa_ratio + 1) == 0;
    }

    std::vector<std::size_t> swa_layer_indices() const {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < n_layers; ++i)
            if (is_swa_layer(i)) out.push_back(i);
        return out;
    }

    void validate() const {
        detail::require(n_heads >= 1 && d_model >= 1 && n_layers >= 1 && vocab_size >= 1,
                        "config: d_model, n_layers, n_heads, vocab_size must all be >= 1");
        detail::require(d_model % n_heads == 0,
                        "config: d_model " + std::to_string(d_model) +
                            " not divisible by n_heads " + std::to_string(n_heads));
        detail::require(window >= 1, "config: window must be >= 1");
        detail::require(attn_layers.has_value() || mhf_to_swa_ratio >= 1,
                        "config: mhf_to_swa_ratio must be >= 1");
        if (attn_layers.has_value())
            for (std::size_t a : *attn_layers)
                detail::require(a < n_layers, "config: attn layer index " + std::to_string(a) +
                                                  " out of range for " +
                                                  std::to_string(n_layers) + " layers");
    }
};

inline ModelConfig tiny_config() {
    ModelConfig cfg;
    cfg.d_model = 512;
    cfg.n_layers = 12;
    cfg.n_heads = 8;
    return cfg;
}

inline ModelConfig micro_config() {
    ModelConfig cfg;
    cfg.d_model = 64;
    cfg.n_layers = 3;
    cfg.n_heads = 4;
    return cfg;
}

// Pre-norm residual block: x + mixer(ln_1(x)), then x + mlp(ln_2(x)).
template <typename Real>
struct Block {
    bool is_swa = false;
    MhfParams<Real> mhf;
    SwaParams<Real> swa;
    Tensor<Real> ln1_gamma, ln1_beta;
    Tensor<Real> ln2_gamma, ln2_beta;
    Tensor<Real> mlp_w_in;   // [D, I], no bias
    Tensor<Real> mlp_w_gate; // [D, I], no bias
    Tensor<Real> mlp_w_out;  // [I, D], no bias (scaled init)
};

// Full stack. The embedding tensor is also the output head: one storage,
// two roles.
template <typename Real>
struct CaracalModel {
    ModelConfig cfg;
    Tensor<Real> embedding; // [V, D]
    std::vector<Block<Real>> blocks;
    Tensor<Real> final_gamma, final_beta;
};

// One named parameter: decay marks it for weight decay, init_std > 0 means
// normal init with that std (0 means a constant: gamma 1, everything else 0).
template <typename Real>
struct ParamRef {
    std::string name;
    Tensor<Real>* tensor;
    bool decay;
    double init_std;
};

// Enumerates every parameter in the fixed documented order: embedding, then
// per block (mixer tensors, ln_1, ln_2, mlp), then the final norm. Init,
// checkpointing, and the optimizer all rely on this order.
template <typename Real>
std::vector<ParamRef<Real>> visit_params(CaracalModel<Real>& m) {
    const double base = 0.02;
    const double scaled = 0.02 / std::sqrt(2.0 * static_cast<double>(m.cfg.n_layers));
    std::vector<ParamRef<Real>> out;
    out.push_back({"wte.weight", &m.embedding, true, base});
    for (std::size_t i = 0; i < m.blocks.size(); ++i) {
        Block<Real>& b = m.blocks[i];
        const std::string p = "h." + std::to_string(i) + ".";
        if (b.is_swa) {
            out.push_back({p + "mixer.c_attn.weight", &b.swa.w_qkv, true, base});
            out.push_back({p + "mixer.c_proj.weight", &b.swa.w_out, true, scaled});
        } else {
            out.push_back({p + "mixer.pre_conv.weight", &b.mhf.pre_conv, true, base});
            out.push_back({p + "mixer.ln.weight", &b.mhf.ln_gamma, false, 0.0});
            out.push_back({p + "mixer.ln.bias", &b.mhf.ln_beta, false, 0.0});
            out.push_back({p + "mixer.w_v.weight", &b.mhf.w_v, true, base});
            out.push_back({p + "mixer.w_v.bias", &b.mhf.b_v, false, 0.0});
            out.push_back({p + "mixer.w_g1.weight", &b.mhf.w_g1, true, base});
            out.push_back({p + "mixer.w_g1.bias", &b.mhf.b_g1, false, 0.0});
            out.push_back({p + "mixer.w_g2.weight", &b.mhf.w_g2, true, base});
            out.push_back({p + "mixer.w_g2.bias", &b.mhf.b_g2, false, 0.0});
            out.push_back({p + "mixer.w_o.weight", &b.mhf.w_o, true, scaled});
            out.push_back({p + "mixer.w_o.bias", &b.mhf.b_o, false, 0.0});
        }
        out.push_back({p + "ln_1.weight", &b.ln1_gamma, false, 0.0});
        out.push_back({p + "ln_1.bias", &b.ln1_beta, false, 0.0});
        out.push_back({p + "ln_2.weight", &b.ln2_gamma, false, 0.0});
        out.push_back({p + "ln_2.bias", &b.ln2_beta, false, 0.0});
        out.push_back({p + "mlp.fc_in.weight", &b.mlp_w_in, true, base});
        out.push_back({p + "mlp.fc_gate.weight", &b.mlp_w_gate, true, base});
        out.push_back({p + "mlp.fc_out.weight", &b.mlp_w_out, true, scaled});
    }
    out.push_back({"ln_f.weight", &m.final_gamma, false, 0.0});
    out.push_back({"ln_f.bias", &m.final_beta, false, 0.0});
    return out;
}

// Allocates a model of the configured shapes with constant init (gamma 1,
// everything else 0).
template <typename Real>
CaracalModel<Real> model_sized(const ModelConfig& cfg) {
    cfg.validate();
    const std::size_t d = cfg.d_model, inter = cfg.intermediate_size();
    CaracalModel<Real> m;
    m.cfg = cfg;
    m.embedding = zeros<Real>({cfg.vocab_size, d});
    m.blocks.resize(cfg.n_layers);
    for (std::size_t i = 0; i < cfg.n_layers; ++i) {
        Block<Real>& b = m.blocks[i];
        b.is_swa = cfg.is_swa_layer(i);
        if (b.is_swa)
            b.swa = swa_params_sized<Real>(d, cfg.n_heads, cfg.window);
        else {
            b.mhf = mhf_params_sized<Real>(d, cfg.n_heads);
            b.mhf.ln_eps = static_cast<Real>(cfg.ln_eps);
        }
        b.ln1_gamma = full<Real>({d}, Real(1));
        b.ln1_beta = zeros<Real>({d});
        b.ln2_gamma = full<Real>({d}, Real(1));
        b.ln2_beta = zeros<Real>({d});
        b.mlp_w_in = zeros<Real>({d, inter});
        b.mlp_w_gate = zeros<Real>({d, inter});
        b.mlp_w_out = zeros<Real>({inter, d});
    }
    m.final_gamma = full<Real>({d}, Real(1));
    m.final_beta = zeros<Real>({d});
    return m;
}

// Deterministic build: tensors with init_std > 0 are filled with normal
// draws in visit order from one splitmix64 stream; projection std is 0.02,
// residual-output projections (w_o, c_proj, fc_out) use
// 0.02 / sqrt(2 * n_layers); norms and biases stay at their constants.
template <typename Real>
CaracalModel<Real> build_model(const ModelConfig& cfg, std::uint64_t seed) {
    CaracalModel<Real> m = model_sized<Real>(cfg);
    Rng rng(seed);
    for (ParamRef<Real>& p : visit_params(m))
        if (p.init_std > 0.0)
            for (auto& v : p.tensor->data)
                v = static_cast<Real>(rng.normal() * p.init_std);
    return m;
}

template <typename Real>
std::size_t model_param_count(CaracalModel<Real>& m) {
    std::size_t n = 0;
    for (const ParamRef<Real>& p : visit_params(m)) n += p.tensor->numel();
    return n;
}

// Scalar count without allocating: tied head counted once.
inline std::size_t model_param_count(const ModelConfig& cfg) {
    const std::size_t d = cfg.d_model, inter = cfg.intermediate_size();
    std::size_t n = cfg.vocab_size * d;
    for (std::size_t i = 0; i < cfg.n_layers; ++i) {
        n += cfg.is_swa_layer(i) ? swa_param_count(d) : mhf_param_count(d, cfg.n_heads);
        n += 4 * d;             // ln_1, ln_2
        n += 3 * d * inter;     // gated mlp
    }
    n += 2 * d; // ln_f
    return n;
}

// ---------------------------------------------------------------------------
// forward passes
// ---------------------------------------------------------------------------

// W_out(W_in(x) * silu(W_gate(x)))
template <typename Real>
Tensor<Real> mlp_forward(const Tensor<Real>& x, const Tensor<Real>& w_in,
                         const Tensor<Real>& w_gate, const Tensor<Real>& w_out) {
    return linear(mul(linear(x, w_in), silu(linear(x, w_gate))), w_out);
}

template <typename Real>
Tensor<Real> block_forward(const Tensor<Real>& x, const Block<Real>& b, double ln_eps,
                           MixMode mode = MixMode::fft) {
    Tensor<Real> normed = layer_norm(x, b.ln1_gamma, b.ln1_beta, static_cast<Real>(ln_eps));
    Tensor<Real> mixed = b.is_swa ? swa_forward(normed, b.swa) : mhf_forward(normed, b.mhf, mode);
    Tensor<Real> h = add(x, mixed);
    Tensor<Real> h2 = layer_norm(h, b.ln2_gamma, b.ln2_beta, static_cast<Real>(ln_eps));
    return add(h, mlp_forward(h2, b.mlp_w_in, b.mlp_w_gate, b.mlp_w_out));
}

// Embed, run the blocks, final norm, tied-head projection. No positional
// encoding is added anywhere; position information enters only through the
// mixing layers.
template <typename Real>
Tensor<Real> model_forward(const std::vector<std::int32_t>& ids, std::size_t batch,
                           std::size_t seq_len, const CaracalModel<Real>& m,
                           MixMode mode = MixMode::fft) {
    Tensor<Real> x = embedding_lookup(ids, batch, seq_len, m.embedding);
    for (const Block<Real>& b : m.blocks) x = block_forward(x, b, m.cfg.ln_eps, mode);
    x = layer_norm(x, m.final_gamma, m.final_beta, static_cast<Real>(m.cfg.ln_eps));
    return linear_nt(x, m.embedding);
}

// ---------------------------------------------------------------------------
// taped forward
// ---------------------------------------------------------------------------

struct BlockVars {
    bool is_swa = false;
    MhfVars mhf;
    SwaVars swa;
    Var ln1_gamma, ln1_beta, ln2_gamma, ln2_beta;
    Var mlp_w_in, mlp_w_gate, mlp_w_out;
};

struct ModelVars {
    Var embedding;
    std::vector<BlockVars> blocks;
    Var final_gamma, final_beta;
    double ln_eps = 1e-5;
    std::size_t vocab_size = 0;
};

// Maps a leaf list in visit_params order onto the block structure.
template <typename Real>
ModelVars assemble_model_vars(const CaracalModel<Real>& m, const std::vector<Var>& leaves) {
    ModelVars mv;
    mv.ln_eps = m.cfg.ln_eps;
    mv.vocab_size = m.cfg.vocab_size;
    std::size_t k = 0;
    mv.embedding = leaves[k++];
    mv.blocks.resize(m.blocks.size());
    for (std::size_t i = 0; i < m.blocks.size(); ++i) {
        BlockVars& bv = mv.blocks[i];
        bv.is_swa = m.blocks[i].is_swa;
        if (bv.is_swa) {
            bv.swa.w_qkv = leaves[k++];
            bv.swa.w_out = leaves[k++];
            bv.swa.heads = m.blocks[i].swa.heads;
            bv.swa.window = m.blocks[i].swa.window;
        } else {
            bv.mhf.pre_conv = leaves[k++];
            bv.mhf.ln_gamma = leaves[k++];
            bv.mhf.ln_beta = leaves[k++];
            bv.mhf.w_v = leaves[k++];
            bv.mhf.b_v = leaves[k++];
            bv.mhf.w_g1 = leaves[k++];
            bv.mhf.b_g1 = leaves[k++];
            bv.mhf.w_g2 = leaves[k++];
            bv.mhf.b_g2 = leaves[k++];
            bv.mhf.w_o = leaves[k++];
            bv.mhf.b_o = leaves[k++];
            bv.mhf.heads = m.blocks[i].mhf.heads;
            bv.mhf.ln_eps = static_cast<double>(m.blocks[i].mhf.ln_eps);
        }
        bv.ln1_gamma = leaves[k++];
        bv.ln1_beta = leaves[k++];
        bv.ln2_gamma = leaves[k++];
        bv.ln2_beta = leaves[k++];
        bv.mlp_w_in = leaves[k++];
        bv.mlp_w_gate = leaves[k++];
        bv.mlp_w_out = leaves[k++];
    }
    mv.final_gamma = leaves[k++];
    mv.final_beta = leaves[k++];
    return mv;
}

// Leaves are created in visit_params order so tape leaf k corresponds to
// visit_params(m)[k]; the trainer relies on this correspondence.
template <typename Real>
ModelVars make_vars(Tape<Real>& t, CaracalModel<Real>& m, std::vector<Var>* out_leaves = nullptr) {
    auto refs = visit_params(m);
    std::vector<Var> leaves(refs.size());
    for (std::size_t k = 0; k < refs.size(); ++k) leaves[k] = t.leaf(*refs[k].tensor);
    if (out_leaves != nullptr) *out_leaves = leaves;
    return assemble_model_vars(m, leaves);
}

template <typename Real>
Var mlp_forward(Tape<Real>& t, Var x, const BlockVars& b) {
    return linear(t, mul(t, linear(t, x, b.mlp_w_in), silu(t, linear(t, x, b.mlp_w_gate))),
                  b.mlp_w_out);
}

template <typename Real>
Var block_forward(Tape<Real>& t, Var x, const BlockVars& b, double ln_eps,
                  MixMode mode = MixMode::fft) {
    Var normed = layer_norm(t, x, b.ln1_gamma, b.ln1_beta, static_cast<Real>(ln_eps));
    Var mixed = b.is_swa ? swa_forward(t, normed, b.swa) : mhf_forward(t, normed, b.mhf, mode);
    Var h = add(t, x, mixed);
    Var h2 = layer_norm(t, h, b.ln2_gamma, b.ln2_beta, static_cast<Real>(ln_eps));
    return add(t, h, mlp_forward(t, h2, b));
}

template <typename Real>
Var model_forward(Tape<Real>& t, const std::vector<std::int32_t>& ids, std::size_t batch,
                  std::size_t seq_len, const ModelVars& mv, MixMode mode = MixMode::fft) {
    Var x = embedding_lookup(t, ids, batch, seq_len, mv.embedding);
    for (const BlockVars& b : mv.blocks) x = block_forward(t, x, b, mv.ln_eps, mode);
    x = layer_norm(t, x, mv.final_gamma, mv.final_beta, static_cast<Real>(mv.ln_eps));
    return linear_nt(t, x, mv.embedding);
}

// Taped language-model loss: mean next-token cross entropy.
template <typename Real>
Var model_loss(Tape<Real>& t, const std::vector<std::int32_t>& ids,
               const std::vector<std::int32_t>& targets, std::size_t batch, std::size_t seq_len,
               const ModelVars& mv, MixMode mode = MixMode::fft) {
    Var logits = model_forward(t, ids, batch, seq_len, mv, mode);
    Var flat = reshape(t, logits, {batch * seq_len, mv.vocab_size});
    return cross_entropy(t, flat, targets);
}

} // namespace caracal
