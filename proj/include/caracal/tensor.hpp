#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

#include "caracal/rng.hpp"

namespace caracal {

using Shape = std::vector<std::size_t>;

inline std::string shape_str(const Shape& dims) {
    std::string s = "[";
    for (std::size_t i = 0; i < dims.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(dims[i]);
    }
    return s + "]";
}

inline std::size_t shape_numel(const Shape& dims) {
    std::size_t n = 1;
    for (std::size_t d : dims) n *= d;
    return n;
}

// Dense row-major array of Real scalars. All operations below are pure:
// inputs are never modified and repeated calls yield bit-identical results.
template <typename Real>
struct Tensor {
    static_assert(std::is_floating_point_v<Real>);

    Shape dims;
    std::vector<Real> data;

    Tensor() = default;
    explicit Tensor(Shape d) : dims(std::move(d)), data(shape_numel(dims), Real(0)) {}
    Tensor(Shape d, std::vector<Real> v) : dims(std::move(d)), data(std::move(v)) {
        if (data.size() != shape_numel(dims))
            throw std::invalid_argument("tensor data size " + std::to_string(data.size()) +
                                        " does not match shape " + shape_str(dims));
    }

    std::size_t numel() const { return data.size(); }
    std::size_t rank() const { return dims.size(); }
    std::size_t size(std::size_t axis) const { return dims.at(axis); }

    Real& operator[](std::size_t i) { return data[i]; }
    const Real& operator[](std::size_t i) const { return data[i]; }
};

template <typename Real>
Tensor<Real> zeros(Shape dims) {
    return Tensor<Real>(std::move(dims));
}

template <typename Real>
Tensor<Real> full(Shape dims, Real v) {
    Tensor<Real> t(std::move(dims));
    std::fill(t.data.begin(), t.data.end(), v);
    return t;
}

// Normal(0, std) fill; elements drawn in row-major order.
template <typename Real>
Tensor<Real> randn(Shape dims, Real std_dev, Rng& rng) {
    Tensor<Real> t(std::move(dims));
    for (auto& x : t.data) x = static_cast<Real>(rng.normal() * static_cast<double>(std_dev));
    return t;
}

namespace detail {

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

inline bool suffix_of(const Shape& small, const Shape& big) {
    if (small.size() > big.size()) return false;
    return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

} // namespace detail

// ---------------------------------------------------------------------------
// elementwise ops. Shapes must match exactly, or b's shape must be a suffix
// of a's (b is broadcast over a's leading dims). No other broadcasting.
// ---------------------------------------------------------------------------

template <typename Real, typename F>
Tensor<Real> elementwise(const Tensor<Real>& a, const Tensor<Real>& b, F f, const char* name) {
    if (a.dims == b.dims) {
        Tensor<Real> out(a.dims);
        for (std::size_t i = 0; i < a.numel(); ++i) out[i] = f(a[i], b[i]);
        return out;
    }
    detail::require(detail::suffix_of(b.dims, a.dims),
                    std::string(name) + ": shape mismatch " + shape_str(a.dims) + " vs " +
                        shape_str(b.dims));
    Tensor<Real> out(a.dims);
    const std::size_t inner = b.numel() == 0 ? 1 : b.numel();
    for (std::size_t i = 0; i < a.numel(); ++i) out[i] = f(a[i], b[i % inner]);
    return out;
}

template <typename Real>
Tensor<Real> add(const Tensor<Real>& a, const Tensor<Real>& b) {
    return elementwise(a, b, [](Real x, Real y) { return x + y; }, "add");
}

template <typename Real>
Tensor<Real> sub(const Tensor<Real>& a, const Tensor<Real>& b) {
    return elementwise(a, b, [](Real x, Real y) { return x - y; }, "sub");
}

template <typename Real>
Tensor<Real> mul(const Tensor<Real>& a, const Tensor<Real>& b) {
    return elementwise(a, b, [](Real x, Real y) { return x * y; }, "mul");
}

template <typename Real>
Tensor<Real> scale(const Tensor<Real>& a, Real s) {
    Tensor<Real> out(a.dims);
    for (std::size_t i = 0; i < a.numel(); ++i) out[i] = a[i] * s;
    return out;
}

template <typename Real>
Real sum(const Tensor<Real>& a) {
    Real s = 0;
    for (Real v : a.data) s += v;
    return s;
}

// ---------------------------------------------------------------------------
// matmul kernels. ikj loop order keeps the inner loop unit-stride so the
// compiler can vectorize; these carry the bulk of training time.
// ---------------------------------------------------------------------------

// C[M,N] = A[M,K] * B[K,N]
template <typename Real>
void matmul_into(const Real* a, const Real* b, Real* c, std::size_t m, std::size_t k,
                 std::size_t n) {
    std::fill(c, c + m * n, Real(0));
    for (std::size_t i = 0; i < m; ++i) {
        const Real* arow = a + i * k;
        Real* crow = c + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const Real av = arow[p];
            const Real* brow = b + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// C[M,N] = A[M,K] * B[N,K]^T. B is transposed into a scratch buffer first so
// the accumulation runs through the unit-stride kernel instead of a scalar
// reduction.
template <typename Real>
void matmul_nt_into(const Real* a, const Real* b, Real* c, std::size_t m, std::size_t k,
                    std::size_t n) {
    std::vector<Real> bt(k * n);
    for (std::size_t j = 0; j < n; ++j)
        for (std::size_t p = 0; p < k; ++p) bt[p * n + j] = b[j * k + p];
    matmul_into(a, bt.data(), c, m, k, n);
}

// C[K,N] = A[M,K]^T * B[M,N], accumulated into c (not cleared).
template <typename Real>
void matmul_tn_accum(const Real* a, const Real* b, Real* c, std::size_t m, std::size_t k,
                     std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const Real* arow = a + i * k;
        const Real* brow = b + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const Real av = arow[p];
            Real* crow = c + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

template <typename Real>
Tensor<Real> matmul(const Tensor<Real>& a, const Tensor<Real>& b) {
    detail::require(a.rank() == 2 && b.rank() == 2, "matmul: expects rank-2 tensors, got " +
                                                        shape_str(a.dims) + " and " +
                                                        shape_str(b.dims));
    detail::require(a.dims[1] == b.dims[0], "matmul: inner dims differ, " + shape_str(a.dims) +
                                                " vs " + shape_str(b.dims));
    Tensor<Real> c({a.dims[0], b.dims[1]});
    matmul_into(a.data.data(), b.data.data(), c.data.data(), a.dims[0], a.dims[1], b.dims[1]);
    return c;
}

// ---------------------------------------------------------------------------
// shape ops
// ---------------------------------------------------------------------------

template <typename Real>
Tensor<Real> reshape(const Tensor<Real>& a, Shape dims) {
    detail::require(shape_numel(dims) == a.numel(), "reshape: " + shape_str(a.dims) + " to " +
                                                        shape_str(dims) + " changes element count");
    Tensor<Real> out = a;
    out.dims = std::move(dims);
    return out;
}

// [B,L,D] -> [B,H,L,d] with head h owning channels [h*d, (h+1)*d).
template <typename Real>
Tensor<Real> split_heads(const Tensor<Real>& x, std::size_t heads) {
    detail::require(x.rank() == 3, "split_heads: expects [B,L,D], got " + shape_str(x.dims));
    const std::size_t b = x.dims[0], l = x.dims[1], dm = x.dims[2];
    detail::require(heads >= 1 && dm % heads == 0,
                    "split_heads: D=" + std::to_string(dm) + " not divisible by H=" +
                        std::to_string(heads));
    const std::size_t hd = dm / heads;
    Tensor<Real> out({b, heads, l, hd});
    for (std::size_t bi = 0; bi < b; ++bi)
        for (std::size_t t = 0; t < l; ++t)
            for (std::size_t h = 0; h < heads; ++h)
                for (std::size_t c = 0; c < hd; ++c)
                    out[((bi * heads + h) * l + t) * hd + c] =
                        x[(bi * l + t) * dm + h * hd + c];
    return out;
}

// [B,H,L,d] -> [B,L,D], inverse of split_heads.
template <typename Real>
Tensor<Real> merge_heads(const Tensor<Real>& x) {
    detail::require(x.rank() == 4, "merge_heads: expects [B,H,L,d], got " + shape_str(x.dims));
    const std::size_t b = x.dims[0], heads = x.dims[1], l = x.dims[2], hd = x.dims[3];
    Tensor<Real> out({b, l, heads * hd});
    for (std::size_t bi = 0; bi < b; ++bi)
        for (std::size_t h = 0; h < heads; ++h)
            for (std::size_t t = 0; t < l; ++t)
                for (std::size_t c = 0; c < hd; ++c)
                    out[(bi * l + t) * heads * hd + h * hd + c] =
                        x[((bi * heads + h) * l + t) * hd + c];
    return out;
}

// Prepend n zeros to a 1-D tensor.
template <typename Real>
Tensor<Real> left_pad(const Tensor<Real>& x, std::size_t n) {
    detail::require(x.rank() == 1, "left_pad: expects rank-1 tensor, got " + shape_str(x.dims));
    Tensor<Real> out({x.dims[0] + n});
    std::copy(x.data.begin(), x.data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(n));
    return out;
}

// Copy of elements [start, stop) along `axis`.
template <typename Real>
Tensor<Real> slice(const Tensor<Real>& x, std::size_t axis, std::size_t start, std::size_t stop) {
    detail::require(axis < x.rank(), "slice: axis out of range for " + shape_str(x.dims));
    detail::require(start <= stop && stop <= x.dims[axis],
                    "slice: range [" + std::to_string(start) + "," + std::to_string(stop) +
                        ") out of bounds for axis " + std::to_string(axis) + " of " +
                        shape_str(x.dims));
    Shape odims = x.dims;
    odims[axis] = stop - start;
    Tensor<Real> out(odims);
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= x.dims[i];
    for (std::size_t i = axis + 1; i < x.rank(); ++i) inner *= x.dims[i];
    const std::size_t in_stride = x.dims[axis] * inner;
    const std::size_t out_stride = odims[axis] * inner;
    for (std::size_t o = 0; o < outer; ++o)
        std::copy_n(x.data.begin() + static_cast<std::ptrdiff_t>(o * in_stride + start * inner),
                    out_stride, out.data.begin() + static_cast<std::ptrdiff_t>(o * out_stride));
    return out;
}

// ---------------------------------------------------------------------------
// neural-network primitives
// ---------------------------------------------------------------------------

// y = x W + b over the last dim; leading dims preserved.
template <typename Real>
Tensor<Real> linear(const Tensor<Real>& x, const Tensor<Real>& w, const Tensor<Real>* b = nullptr) {
    detail::require(w.rank() == 2, "linear: weight must be rank-2, got " + shape_str(w.dims));
    detail::require(x.rank() >= 1 && x.dims.back() == w.dims[0],
                    "linear: input " + shape_str(x.dims) + " incompatible with weight " +
                        shape_str(w.dims));
    const std::size_t din = w.dims[0], dout = w.dims[1];
    const std::size_t rows = x.numel() / std::max<std::size_t>(din, 1);
    if (b != nullptr)
        detail::require(b->dims == Shape{dout}, "linear: bias " + shape_str(b->dims) +
                                                    " incompatible with weight " +
                                                    shape_str(w.dims));
    Shape odims = x.dims;
    odims.back() = dout;
    Tensor<Real> y(odims);
    matmul_into(x.data.data(), w.data.data(), y.data.data(), rows, din, dout);
    if (b != nullptr)
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < dout; ++j) y[r * dout + j] += b->data[j];
    return y;
}

// y = x W^T over the last dim; w is [N, K] with K matching x's last dim.
// Used for the tied output head, where w is the embedding table.
template <typename Real>
Tensor<Real> linear_nt(const Tensor<Real>& x, const Tensor<Real>& w) {
    detail::require(w.rank() == 2, "linear_nt: weight must be rank-2, got " + shape_str(w.dims));
    detail::require(x.rank() >= 1 && x.dims.back() == w.dims[1],
                    "linear_nt: input " + shape_str(x.dims) + " incompatible with weight " +
                        shape_str(w.dims));
    const std::size_t k = w.dims[1], n = w.dims[0];
    const std::size_t rows = x.numel() / std::max<std::size_t>(k, 1);
    Shape odims = x.dims;
    odims.back() = n;
    Tensor<Real> y(odims);
    matmul_nt_into(x.data.data(), w.data.data(), y.data.data(), rows, k, n);
    return y;
}

// Per last-dim vector: (x - mean) / sqrt(var + eps) * gamma + beta.
// Population variance (divide by D).
template <typename Real>
Tensor<Real> layer_norm(const Tensor<Real>& x, const Tensor<Real>& gamma, const Tensor<Real>& beta,
                        Real eps) {
    const std::size_t d = x.dims.empty() ? 0 : x.dims.back();
    detail::require(d >= 1, "layer_norm: empty last dim in " + shape_str(x.dims));
    detail::require(gamma.dims == Shape{d} && beta.dims == Shape{d},
                    "layer_norm: gamma " + shape_str(gamma.dims) + " / beta " +
                        shape_str(beta.dims) + " incompatible with input " + shape_str(x.dims));
    const std::size_t rows = x.numel() / d;
    Tensor<Real> y(x.dims);
    for (std::size_t r = 0; r < rows; ++r) {
        const Real* xr = x.data.data() + r * d;
        Real* yr = y.data.data() + r * d;
        Real mean = 0;
        for (std::size_t j = 0; j < d; ++j) mean += xr[j];
        mean /= static_cast<Real>(d);
        Real var = 0;
        for (std::size_t j = 0; j < d; ++j) var += (xr[j] - mean) * (xr[j] - mean);
        var /= static_cast<Real>(d);
        const Real inv = Real(1) / std::sqrt(var + eps);
        for (std::size_t j = 0; j < d; ++j)
            yr[j] = (xr[j] - mean) * inv * gamma.data[j] + beta.data[j];
    }
    return y;
}

template <typename Real>
Real sigmoid(Real x) {
    return Real(1) / (Real(1) + std::exp(-x));
}

// x * sigmoid(x), elementwise.
template <typename Real>
Tensor<Real> silu(const Tensor<Real>& x) {
    Tensor<Real> y(x.dims);
    for (std::size_t i = 0; i < x.numel(); ++i) y[i] = x[i] * sigmoid(x[i]);
    return y;
}

// Softmax along the last dim, max-subtracted for stability.
template <typename Real>
Tensor<Real> softmax_lastdim(const Tensor<Real>& x) {
    const std::size_t n = x.dims.empty() ? 0 : x.dims.back();
    detail::require(n >= 1, "softmax: empty last dim in " + shape_str(x.dims));
    const std::size_t rows = x.numel() / n;
    Tensor<Real> y(x.dims);
    for (std::size_t r = 0; r < rows; ++r) {
        const Real* xr = x.data.data() + r * n;
        Real* yr = y.data.data() + r * n;
        Real mx = xr[0];
        for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, xr[j]);
        Real z = 0;
        for (std::size_t j = 0; j < n; ++j) {
            yr[j] = std::exp(xr[j] - mx);
            z += yr[j];
        }
        for (std::size_t j = 0; j < n; ++j) yr[j] /= z;
    }
    return y;
}

// Depthwise causal 1-D convolution: channel c of the output at position t is
// sum_i kernel[c,i] * x[b, t+i-(k-1), c], with x treated as left-padded by
// k-1 zeros. Output at t depends only on inputs at positions <= t.
template <typename Real>
Tensor<Real> causal_depthwise_conv1d(const Tensor<Real>& x, const Tensor<Real>& kernel,
                                     const Tensor<Real>* bias = nullptr) {
    detail::require(x.rank() == 3, "causal_depthwise_conv1d: expects [B,L,D], got " +
                                       shape_str(x.dims));
    detail::require(kernel.rank() == 2 && kernel.dims[0] == x.dims[2],
                    "causal_depthwise_conv1d: kernel " + shape_str(kernel.dims) +
                        " incompatible with input " + shape_str(x.dims));
    const std::size_t b = x.dims[0], l = x.dims[1], d = x.dims[2], kw = kernel.dims[1];
    detail::require(kw >= 1, "causal_depthwise_conv1d: kernel width must be >= 1");
    if (bias != nullptr)
        detail::require(bias->dims == Shape{d}, "causal_depthwise_conv1d: bias " +
                                                    shape_str(bias->dims) + " incompatible with " +
                                                    shape_str(x.dims));
    Tensor<Real> y(x.dims);
    for (std::size_t bi = 0; bi < b; ++bi)
        for (std::size_t t = 0; t < l; ++t)
            for (std::size_t c = 0; c < d; ++c) {
                Real acc = 0;
                for (std::size_t i = 0; i < kw; ++i) {
                    const std::ptrdiff_t s = static_cast<std::ptrdiff_t>(t + i) -
                                             static_cast<std::ptrdiff_t>(kw - 1);
                    if (s >= 0)
                        acc += kernel[c * kw + i] *
                               x[(bi * l + static_cast<std::size_t>(s)) * d + c];
                }
                if (bias != nullptr) acc += bias->data[c];
                y[(bi * l + t) * d + c] = acc;
            }
    return y;
}

// Position-wise grouped channel mixing (kernel size 1): channels of group h
// are mixed by that group's [d,d] matrix, y_i = sum_j W[h,i,j] * x_j + b_i.
// No cross-position and no cross-group mixing.
template <typename Real>
Tensor<Real> grouped_pointwise_conv1d(const Tensor<Real>& x, const Tensor<Real>& w,
                                      const Tensor<Real>* bias = nullptr) {
    detail::require(x.rank() == 3, "grouped_pointwise_conv1d: expects [B,L,D], got " +
                                       shape_str(x.dims));
    detail::require(w.rank() == 3 && w.dims[1] == w.dims[2],
                    "grouped_pointwise_conv1d: weights must be [H,d,d], got " + shape_str(w.dims));
    const std::size_t b = x.dims[0], l = x.dims[1], dm = x.dims[2];
    const std::size_t h = w.dims[0], gd = w.dims[1];
    detail::require(h * gd == dm, "grouped_pointwise_conv1d: input " + shape_str(x.dims) +
                                      " not divisible into " + shape_str(w.dims) + " groups");
    if (bias != nullptr)
        detail::require(bias->dims == Shape{dm}, "grouped_pointwise_conv1d: bias " +
                                                     shape_str(bias->dims) +
                                                     " incompatible with " + shape_str(x.dims));
    Tensor<Real> y(x.dims);
    for (std::size_t pos = 0; pos < b * l; ++pos) {
        const Real* xp = x.data.data() + pos * dm;
        Real* yp = y.data.data() + pos * dm;
        for (std::size_t g = 0; g < h; ++g) {
            const Real* wg = w.data.data() + g * gd * gd;
            for (std::size_t i = 0; i < gd; ++i) {
                Real acc = 0;
                for (std::size_t j = 0; j < gd; ++j) acc += wg[i * gd + j] * xp[g * gd + j];
                yp[g * gd + i] = acc;
            }
        }
        if (bias != nullptr)
            for (std::size_t c = 0; c < dm; ++c) yp[c] += bias->data[c];
    }
    return y;
}

// Row gather: out[b,l,:] = table[ids[b,l],:].
template <typename Real>
Tensor<Real> embedding_lookup(const std::vector<std::int32_t>& ids, std::size_t b, std::size_t l,
                              const Tensor<Real>& table) {
    detail::require(table.rank() == 2, "embedding_lookup: table must be [V,D], got " +
                                           shape_str(table.dims));
    detail::require(ids.size() == b * l, "embedding_lookup: ids size " +
                                             std::to_string(ids.size()) + " != B*L = " +
                                             std::to_string(b * l));
    const std::size_t v = table.dims[0], d = table.dims[1];
    Tensor<Real> out({b, l, d});
    for (std::size_t i = 0; i < ids.size(); ++i) {
        const std::int32_t id = ids[i];
        detail::require(id >= 0 && static_cast<std::size_t>(id) < v,
                        "embedding_lookup: id " + std::to_string(id) + " out of range [0," +
                            std::to_string(v) + ")");
        std::copy_n(table.data.begin() + static_cast<std::ptrdiff_t>(id * d), d,
                    out.data.begin() + static_cast<std::ptrdiff_t>(i * d));
    }
    return out;
}

// Mean over rows of -log softmax(logits)[target], log-sum-exp stabilized.
template <typename Real>
Real cross_entropy(const Tensor<Real>& logits, const std::vector<std::int32_t>& targets) {
    detail::require(logits.rank() == 2, "cross_entropy: logits must be [N,V], got " +
                                            shape_str(logits.dims));
    const std::size_t n = logits.dims[0], v = logits.dims[1];
    detail::require(targets.size() == n, "cross_entropy: " + std::to_string(targets.size()) +
                                             " targets for " + std::to_string(n) + " rows");
    Real total = 0;
    for (std::size_t r = 0; r < n; ++r) {
        const std::int32_t tgt = targets[r];
        detail::require(tgt >= 0 && static_cast<std::size_t>(tgt) < v,
                        "cross_entropy: target " + std::to_string(tgt) + " out of range [0," +
                            std::to_string(v) + ")");
        const Real* row = logits.data.data() + r * v;
        Real mx = row[0];
        for (std::size_t j = 1; j < v; ++j) mx = std::max(mx, row[j]);
        Real z = 0;
        for (std::size_t j = 0; j < v; ++j) z += std::exp(row[j] - mx);
        total += std::log(z) + mx - row[static_cast<std::size_t>(tgt)];
    }
    return total / static_cast<Real>(n);
}

template <typename Real>
bool all_finite(const Tensor<Real>& t) {
    for (Real v : t.data)
        if (!std::isfinite(v)) return false;
    return true;
}

} // namespace caracal
