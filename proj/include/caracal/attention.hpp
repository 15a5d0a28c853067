#pragma once

#include <cmath>
#include <cstddef>
#include <limits>

#include "caracal/autograd.hpp"
#include "caracal/tensor.hpp"

namespace caracal {

// Sliding-window causal attention. Masking is structural: scores exist only
// for j in [max(0, t-window+1), t], so tokens outside the window get exactly
// zero weight. qkv layout is [q | k | v] blocks of D columns each.
template <typename Real>
struct SwaParams {
    Tensor<Real> w_qkv; // [D, 3D], no bias
    Tensor<Real> w_out; // [D, D], no bias (scaled init)
    std::size_t heads = 1;
    std::size_t window = 1;

    std::size_t d_model() const { return w_qkv.dims.empty() ? 0 : w_qkv.dims[0]; }
};

template <typename Real>
SwaParams<Real> swa_params_sized(std::size_t d_model, std::size_t heads, std::size_t window) {
    detail::require(heads >= 1 && d_model % heads == 0,
                    "swa: d_model " + std::to_string(d_model) + " not divisible by heads " +
                        std::to_string(heads));
    detail::require(window >= 1, "swa: window must be >= 1");
    SwaParams<Real> p;
    p.w_qkv = zeros<Real>({d_model, 3 * d_model});
    p.w_out = zeros<Real>({d_model, d_model});
    p.heads = heads;
    p.window = window;
    return p;
}

inline std::size_t swa_param_count(std::size_t d_model) {
    return d_model * 3 * d_model + d_model * d_model;
}

// Windowed causal attention core on projected qkv [B,L,3D]. Per head and
// query t: softmax(q_t . k_j / sqrt(d)) over the window, then the weighted
// sum of values. If alphas_out is given it is filled with the attention
// weights as [B,H,L,window] (window slot w holds weight for j = t-w).
template <typename Real>
Tensor<Real> swa_mix_core(const Tensor<Real>& qkv, std::size_t heads, std::size_t window,
                          Tensor<Real>* alphas_out = nullptr) {
    detail::require(qkv.rank() == 3 && qkv.dims[2] % 3 == 0,
                    "swa_mix_core: expects [B,L,3D], got " + shape_str(qkv.dims));
    const std::size_t b = qkv.dims[0], l = qkv.dims[1], dm = qkv.dims[2] / 3;
    detail::require(dm % heads == 0, "swa_mix_core: D=" + std::to_string(dm) +
                                         " not divisible by heads " + std::to_string(heads));
    const std::size_t hd = dm / heads;
    const Real scale = Real(1) / std::sqrt(static_cast<Real>(hd));
    Tensor<Real> out({b, l, dm});
    if (alphas_out != nullptr) *alphas_out = zeros<Real>({b, heads, l, window});
    std::vector<Real> scores(window);
    for (std::size_t bi = 0; bi < b; ++bi)
        for (std::size_t h = 0; h < heads; ++h)
            for (std::size_t t = 0; t < l; ++t) {
                const std::size_t jlo = t + 1 >= window ? t + 1 - window : 0;
                const std::size_t span = t - jlo + 1;
                const Real* q = qkv.data.data() + (bi * l + t) * 3 * dm + h * hd;
                Real mx = -std::numeric_limits<Real>::infinity();
                for (std::size_t j = jlo; j <= t; ++j) {
                    const Real* k = qkv.data.data() + (bi * l + j) * 3 * dm + dm + h * hd;
                    Real s = 0;
                    for (std::size_t c = 0; c < hd; ++c) s += q[c] * k[c];
                    s *= scale;
                    scores[j - jlo] = s;
                    mx = std::max(mx, s);
                }
                Real z = 0;
                for (std::size_t j = 0; j < span; ++j) {
                    scores[j] = std::exp(scores[j] - mx);
                    z += scores[j];
                }
                Real* o = out.data.data() + (bi * l + t) * dm + h * hd;
                for (std::size_t c = 0; c < hd; ++c) o[c] = 0;
                for (std::size_t j = jlo; j <= t; ++j) {
                    const Real a = scores[j - jlo] / z;
                    if (alphas_out != nullptr)
                        (*alphas_out)[((bi * heads + h) * l + t) * window + (t - j)] = a;
                    const Real* v = qkv.data.data() + (bi * l + j) * 3 * dm + 2 * dm + h * hd;
                    for (std::size_t c = 0; c < hd; ++c) o[c] += a * v[c];
                }
            }
    return out;
}

template <typename Real>
Tensor<Real> swa_forward(const Tensor<Real>& x, const SwaParams<Real>& p) {
    detail::require(x.rank() == 3 && x.dims[2] == p.d_model(),
                    "swa_forward: input " + shape_str(x.dims) + " incompatible with d_model " +
                        std::to_string(p.d_model()));
    Tensor<Real> qkv = linear(x, p.w_qkv);
    Tensor<Real> mixed = swa_mix_core(qkv, p.heads, p.window);
    return linear(mixed, p.w_out);
}

// Taped attention core. Backward recomputes per-row softmax pieces from the
// saved weights: ds_j = a_j (da_j - sum_k a_k da_k), dq += ds_j k_j * scale,
// dk_j += ds_j q_t * scale, dv_j += a_j dout.
template <typename Real>
Var swa_mix(Tape<Real>& t, Var qkv, std::size_t heads, std::size_t window) {
    Tensor<Real> alphas;
    Tensor<Real> out = swa_mix_core(t.value(qkv), heads, window, &alphas);
    return t.push(
        std::move(out), t.requires_grad(qkv),
        [qkv, heads, window, alphas = std::move(alphas)](Tape<Real>& tp, const Tensor<Real>& g) {
            const Tensor<Real>& qv = tp.value(qkv);
            const std::size_t b = qv.dims[0], l = qv.dims[1], dm = qv.dims[2] / 3;
            const std::size_t hd = dm / heads;
            const Real scale = Real(1) / std::sqrt(static_cast<Real>(hd));
            Tensor<Real> dqkv(qv.dims);
            std::vector<Real> dalpha(window);
            for (std::size_t bi = 0; bi < b; ++bi)
                for (std::size_t h = 0; h < heads; ++h)
                    for (std::size_t tt = 0; tt < l; ++tt) {
                        const std::size_t jlo = tt + 1 >= window ? tt + 1 - window : 0;
                        const Real* go = g.data.data() + (bi * l + tt) * dm + h * hd;
                        const Real* arow =
                            alphas.data.data() + ((bi * heads + h) * l + tt) * window;
                        Real asum = 0;
                        for (std::size_t j = jlo; j <= tt; ++j) {
                            const Real* v =
                                qv.data.data() + (bi * l + j) * 3 * dm + 2 * dm + h * hd;
                            Real da = 0;
                            for (std::size_t c = 0; c < hd; ++c) da += go[c] * v[c];
                            dalpha[tt - j] = da;
                            asum += arow[tt - j] * da;
                        }
                        const Real* q = qv.data.data() + (bi * l + tt) * 3 * dm + h * hd;
                        Real* dq = dqkv.data.data() + (bi * l + tt) * 3 * dm + h * hd;
                        for (std::size_t j = jlo; j <= tt; ++j) {
                            const Real a = arow[tt - j];
                            const Real ds = a * (dalpha[tt - j] - asum) * scale;
                            const Real* k =
                                qv.data.data() + (bi * l + j) * 3 * dm + dm + h * hd;
                            Real* dk = dqkv.data.data() + (bi * l + j) * 3 * dm + dm + h * hd;
                            Real* dv =
                                dqkv.data.data() + (bi * l + j) * 3 * dm + 2 * dm + h * hd;
                            for (std::size_t c = 0; c < hd; ++c) {
                                dq[c] += ds * k[c];
                                dk[c] += ds * q[c];
                                dv[c] += a * go[c];
                            }
                        }
                    }
            tp.accumulate(qkv, dqkv);
        });
}

struct SwaVars {
    Var w_qkv, w_out;
    std::size_t heads = 1;
    std::size_t window = 1;
};

template <typename Real>
SwaVars make_vars(Tape<Real>& t, const SwaParams<Real>& p) {
    SwaVars v;
    v.w_qkv = t.leaf(p.w_qkv);
    v.w_out = t.leaf(p.w_out);
    v.heads = p.heads;
    v.window = p.window;
    return v;
}

template <typename Real>
Var swa_forward(Tape<Real>& t, Var x, const SwaVars& p) {
    Var qkv = linear(t, x, p.w_qkv);
    Var mixed = swa_mix(t, qkv, p.heads, p.window);
    return linear(t, mixed, p.w_out);
}

} // namespace caracal
