#pragma once

#include <cstddef>

#include "caracal/autograd.hpp"
#include "caracal/spectral.hpp"
#include "caracal/tensor.hpp"

namespace caracal {

// Learnable state of one spectral mixing layer. The gate branch is the
// content-dependent filter generator: Linear_G1 -> SiLU -> grouped 1x1 conv,
// giving each head a shared gating representation.
template <typename Real>
struct MhfParams {
    Tensor<Real> pre_conv; // [D, k], depthwise causal kernel, no bias
    Tensor<Real> ln_gamma; // [D]
    Tensor<Real> ln_beta;  // [D]
    Tensor<Real> w_v, b_v;   // [D, D], [D]
    Tensor<Real> w_g1, b_g1; // [D, D], [D]
    Tensor<Real> w_g2, b_g2; // [H, d, d], [D]
    Tensor<Real> w_o, b_o;   // [D, D], [D]  (scaled init)
    std::size_t heads = 1;
    Real ln_eps = static_cast<Real>(1e-5);

    std::size_t d_model() const { return ln_gamma.dims.empty() ? 0 : ln_gamma.dims[0]; }
};

// Zero-initialized parameter set with the right shapes (k = 3).
template <typename Real>
MhfParams<Real> mhf_params_sized(std::size_t d_model, std::size_t heads) {
    detail::require(heads >= 1 && d_model % heads == 0,
                    "mhf: d_model " + std::to_string(d_model) + " not divisible by heads " +
                        std::to_string(heads));
    const std::size_t hd = d_model / heads;
    MhfParams<Real> p;
    p.pre_conv = zeros<Real>({d_model, 3});
    p.ln_gamma = full<Real>({d_model}, Real(1));
    p.ln_beta = zeros<Real>({d_model});
    p.w_v = zeros<Real>({d_model, d_model});
    p.b_v = zeros<Real>({d_model});
    p.w_g1 = zeros<Real>({d_model, d_model});
    p.b_g1 = zeros<Real>({d_model});
    p.w_g2 = zeros<Real>({heads, hd, hd});
    p.b_g2 = zeros<Real>({d_model});
    p.w_o = zeros<Real>({d_model, d_model});
    p.b_o = zeros<Real>({d_model});
    p.heads = heads;
    return p;
}

// Scalar parameter count: pre-conv 3D + norm 2D + three dense projections
// with bias + the per-head gate mixer with bias.
inline std::size_t mhf_param_count(std::size_t d_model, std::size_t heads) {
    const std::size_t hd = d_model / heads;
    return 3 * d_model + 2 * d_model + 3 * (d_model * d_model + d_model) +
           heads * hd * hd + d_model;
}

// Full layer forward: depthwise causal conv, layer norm, content stream W_V,
// gate stream W_G1 -> SiLU -> grouped W_G2, per-channel causal mixing of the
// two streams, output projection W_O. mode selects the spectral pipeline or
// the O(L^2) reference convolution; both compute the same map.
template <typename Real>
Tensor<Real> mhf_forward(const Tensor<Real>& x, const MhfParams<Real>& p,
                         MixMode mode = MixMode::fft) {
    detail::require(x.rank() == 3 && x.dims[2] == p.d_model(),
                    "mhf_forward: input " + shape_str(x.dims) + " incompatible with d_model " +
                        std::to_string(p.d_model()));
    Tensor<Real> pre = causal_depthwise_conv1d(x, p.pre_conv);
    Tensor<Real> xn = layer_norm(pre, p.ln_gamma, p.ln_beta, p.ln_eps);
    Tensor<Real> xv = split_heads(linear(xn, p.w_v, &p.b_v), p.heads);
    Tensor<Real> gate = grouped_pointwise_conv1d(silu(linear(xn, p.w_g1, &p.b_g1)), p.w_g2,
                                                 &p.b_g2);
    Tensor<Real> xg = split_heads(gate, p.heads);
    Tensor<Real> mixed = mix_channels(xv, xg, mode);
    return linear(merge_heads(mixed), p.w_o, &p.b_o);
}

// Debug path: same layer but each (b,h,c) channel goes through its own
// causal_mix_fft call instead of the shared batched mixer.
template <typename Real>
Tensor<Real> mhf_forward_per_channel(const Tensor<Real>& x, const MhfParams<Real>& p) {
    Tensor<Real> pre = causal_depthwise_conv1d(x, p.pre_conv);
    Tensor<Real> xn = layer_norm(pre, p.ln_gamma, p.ln_beta, p.ln_eps);
    Tensor<Real> xv = split_heads(linear(xn, p.w_v, &p.b_v), p.heads);
    Tensor<Real> gate = grouped_pointwise_conv1d(silu(linear(xn, p.w_g1, &p.b_g1)), p.w_g2,
                                                 &p.b_g2);
    Tensor<Real> xg = split_heads(gate, p.heads);

    const std::size_t bh = xv.dims[0] * xv.dims[1], l = xv.dims[2], hd = xv.dims[3];
    Tensor<Real> mixed(xv.dims);
    std::vector<Real> vc(l), gc(l);
    for (std::size_t o = 0; o < bh; ++o)
        for (std::size_t c = 0; c < hd; ++c) {
            for (std::size_t t = 0; t < l; ++t) {
                vc[t] = xv[(o * l + t) * hd + c];
                gc[t] = xg[(o * l + t) * hd + c];
            }
            auto rc = causal_mix_fft(vc, gc);
            for (std::size_t t = 0; t < l; ++t) mixed[(o * l + t) * hd + c] = rc[t];
        }
    return linear(merge_heads(mixed), p.w_o, &p.b_o);
}

// Leaf handles for one MHF layer on a tape.
struct MhfVars {
    Var pre_conv, ln_gamma, ln_beta;
    Var w_v, b_v, w_g1, b_g1, w_g2, b_g2, w_o, b_o;
    std::size_t heads = 1;
    double ln_eps = 1e-5;
};

template <typename Real>
MhfVars make_vars(Tape<Real>& t, const MhfParams<Real>& p) {
    MhfVars v;
    v.pre_conv = t.leaf(p.pre_conv);
    v.ln_gamma = t.leaf(p.ln_gamma);
    v.ln_beta = t.leaf(p.ln_beta);
    v.w_v = t.leaf(p.w_v);
    v.b_v = t.leaf(p.b_v);
    v.w_g1 = t.leaf(p.w_g1);
    v.b_g1 = t.leaf(p.b_g1);
    v.w_g2 = t.leaf(p.w_g2);
    v.b_g2 = t.leaf(p.b_g2);
    v.w_o = t.leaf(p.w_o);
    v.b_o = t.leaf(p.b_o);
    v.heads = p.heads;
    v.ln_eps = static_cast<double>(p.ln_eps);
    return v;
}

template <typename Real>
Var mhf_forward(Tape<Real>& t, Var x, const MhfVars& p, MixMode mode = MixMode::fft) {
    Var pre = causal_depthwise_conv1d(t, x, p.pre_conv);
    Var xn = layer_norm(t, pre, p.ln_gamma, p.ln_beta, static_cast<Real>(p.ln_eps));
    Var xv = split_heads(t, linear(t, xn, p.w_v, p.b_v), p.heads);
    Var gate = grouped_pointwise_conv1d(t, silu(t, linear(t, xn, p.w_g1, p.b_g1)), p.w_g2,
                                        p.b_g2);
    Var xg = split_heads(t, gate, p.heads);
    Var mixed = causal_mix_heads(t, xv, xg, mode);
    return linear(t, merge_heads(t, mixed), p.w_o, p.b_o);
}

} // namespace caracal
