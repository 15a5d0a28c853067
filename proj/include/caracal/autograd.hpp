#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <unordered_set>
#include <utility>
#include <vector>

#include "caracal/spectral.hpp"
#include "caracal/tensor.hpp"

namespace caracal {

// Handle into a Tape.
struct Var {
    std::size_t idx = static_cast<std::size_t>(-1);
};

// fft: spectral pipeline in the tensor's own precision. fft_f64: spectral
// pipeline forced to 64-bit regardless of tensor precision (verification
// aid; identical to fft for f64 tensors). direct: O(L^2) reference
// convolution.
enum class MixMode { fft, fft_f64, direct };

// Dynamic reverse-mode tape, rebuilt per training step. Ops append nodes in
// topological order; backward walks them once in reverse. Forward values are
// computed with the same tensor kernels as the untaped path, so taped and
// untaped forwards agree bit for bit.
template <typename Real>
class Tape {
  public:
    using BackFn = std::function<void(Tape&, const Tensor<Real>&)>;

    Var leaf(Tensor<Real> value, bool requires_grad = true) {
        return push(std::move(value), requires_grad, nullptr);
    }

    const Tensor<Real>& value(Var v) const { return nodes_.at(v.idx).value; }

    bool has_grad(Var v) const { return nodes_.at(v.idx).has_grad; }

    const Tensor<Real>& grad(Var v) const {
        const Node& n = nodes_.at(v.idx);
        if (!n.has_grad)
            throw std::logic_error("tape: no gradient recorded for node " + std::to_string(v.idx));
        return n.grad;
    }

    // Seeds d(loss)/d(loss) = 1 and propagates through every recorded node.
    // A tape can be walked once; reset() or a fresh tape is needed after.
    void backward(Var loss) {
        if (consumed_)
            throw std::logic_error("tape: backward called twice without reset");
        Node& root = nodes_.at(loss.idx);
        if (root.value.numel() != 1)
            throw std::invalid_argument("tape: backward needs a scalar loss, got shape " +
                                        shape_str(root.value.dims));
        consumed_ = true;
        root.grad = full<Real>(root.value.dims, Real(1));
        root.has_grad = true;
        for (std::size_t i = loss.idx + 1; i-- > 0;) {
            Node& n = nodes_[i];
            if (n.has_grad && n.back) n.back(*this, n.grad);
        }
    }

    void reset() {
        nodes_.clear();
        consumed_ = false;
    }

    bool consumed() const { return consumed_; }
    std::size_t size() const { return nodes_.size(); }

    // --- op-author interface -------------------------------------------

    Var push(Tensor<Real> value, bool requires_grad, BackFn back) {
        nodes_.push_back(Node{std::move(value), Tensor<Real>(), std::move(back), requires_grad,
                              false});
        return Var{nodes_.size() - 1};
    }

    bool requires_grad(Var v) const { return nodes_.at(v.idx).needs_grad; }

    void accumulate(Var v, const Tensor<Real>& g) {
        Node& n = nodes_.at(v.idx);
        if (!n.needs_grad) return;
        if (!n.has_grad) {
            n.grad = g;
            n.has_grad = true;
        } else {
            for (std::size_t i = 0; i < g.numel(); ++i) n.grad[i] += g[i];
        }
    }

  private:
    struct Node {
        Tensor<Real> value;
        Tensor<Real> grad;
        BackFn back;
        bool needs_grad = false;
        bool has_grad = false;
    };

    std::vector<Node> nodes_;
    bool consumed_ = false;
};

// ---------------------------------------------------------------------------
// taped primitives
// ---------------------------------------------------------------------------

template <typename Real>
Var add(Tape<Real>& t, Var a, Var b) {
    Tensor<Real> y = add(t.value(a), t.value(b));
    const Shape bshape = t.value(b).dims;
    const bool req = t.requires_grad(a) || t.requires_grad(b);
    return t.push(std::move(y), req, [a, b, bshape](Tape<Real>& tp, const Tensor<Real>& g) {
        tp.accumulate(a, g);
        if (g.dims == bshape) {
            tp.accumulate(b, g);
        } else {
            // b was broadcast over leading dims: reduce them away
            Tensor<Real> gb(bshape);
            const std::size_t inner = gb.numel();
            for (std::size_t i = 0; i < g.numel(); ++i) gb[i % inner] += g[i];
            tp.accumulate(b, gb);
        }
    });
}

template <typename Real>
Var mul(Tape<Real>& t, Var a, Var b) {
    detail::require(t.value(a).dims == t.value(b).dims,
                    "taped mul: shape mismatch " + shape_str(t.value(a).dims) + " vs " +
                        shape_str(t.value(b).dims));
    Tensor<Real> y = mul(t.value(a), t.value(b));
    const bool req = t.requires_grad(a) || t.requires_grad(b);
    return t.push(std::move(y), req, [a, b](Tape<Real>& tp, const Tensor<Real>& g) {
        tp.accumulate(a, mul(g, tp.value(b)));
        tp.accumulate(b, mul(g, tp.value(a)));
    });
}

template <typename Real>
Var scale(Tape<Real>& t, Var a, Real s) {
    return t.push(scale(t.value(a), s), t.requires_grad(a),
                  [a, s](Tape<Real>& tp, const Tensor<Real>& g) { tp.accumulate(a, scale(g, s)); });
}

template <typename Real>
Var sum(Tape<Real>& t, Var a) {
    Tensor<Real> y({1});
    y[0] = sum(t.value(a));
    return t.push(std::move(y), t.requires_grad(a),
                  [a](Tape<Real>& tp, const Tensor<Real>& g) {
                      tp.accumulate(a, full<Real>(tp.value(a).dims, g[0]));
                  });
}

template <typename Real>
Var reshape(Tape<Real>& t, Var a, Shape dims) {
    const Shape old = t.value(a).dims;
    return t.push(reshape(t.value(a), std::move(dims)), t.requires_grad(a),
                  [a, old](Tape<Real>& tp, const Tensor<Real>& g) {
                      tp.accumulate(a, reshape(g, old));
                  });
}

template <typename Real>
Var split_heads(Tape<Real>& t, Var x, std::size_t heads) {
    return t.push(split_heads(t.value(x), heads), t.requires_grad(x),
                  [x](Tape<Real>& tp, const Tensor<Real>& g) {
                      tp.accumulate(x, merge_heads(g));
                  });
}

template <typename Real>
Var merge_heads(Tape<Real>& t, Var x) {
    const std::size_t heads = t.value(x).dims[1];
    return t.push(merge_heads(t.value(x)), t.requires_grad(x),
                  [x, heads](Tape<Real>& tp, const Tensor<Real>& g) {
                      tp.accumulate(x, split_heads(g, heads));
                  });
}

template <typename Real>
Var linear(Tape<Real>& t, Var x, Var w, Var b = {}) {
    const bool with_bias = b.idx != static_cast<std::size_t>(-1);
    const Tensor<Real>* bp = with_bias ? &t.value(b) : nullptr;
    Tensor<Real> y = linear(t.value(x), t.value(w), bp);
    bool req = t.requires_grad(x) || t.requires_grad(w) || (with_bias && t.requires_grad(b));
    return t.push(std::move(y), req,
                  [x, w, b, with_bias](Tape<Real>& tp, const Tensor<Real>& g) {
                      const Tensor<Real>& xv = tp.value(x);
                      const Tensor<Real>& wv = tp.value(w);
                      const std::size_t din = wv.dims[0], dout = wv.dims[1];
                      const std::size_t rows = xv.numel() / din;
                      if (tp.requires_grad(x)) {
                          Tensor<Real> dx(xv.dims);
                          matmul_nt_into(g.data.data(), wv.data.data(), dx.data.data(), rows, dout,
                                         din);
                          tp.accumulate(x, dx);
                      }
                      if (tp.requires_grad(w)) {
                          Tensor<Real> dw(wv.dims);
                          matmul_tn_accum(xv.data.data(), g.data.data(), dw.data.data(), rows, din,
                                          dout);
                          tp.accumulate(w, dw);
                      }
                      if (with_bias && tp.requires_grad(b)) {
                          Tensor<Real> db({dout});
                          for (std::size_t r = 0; r < rows; ++r)
                              for (std::size_t j = 0; j < dout; ++j) db[j] += g[r * dout + j];
                          tp.accumulate(b, db);
                      }
                  });
}

template <typename Real>
Var linear_nt(Tape<Real>& t, Var x, Var w) {
    Tensor<Real> y = linear_nt(t.value(x), t.value(w));
    bool req = t.requires_grad(x) || t.requires_grad(w);
    return t.push(std::move(y), req, [x, w](Tape<Real>& tp, const Tensor<Real>& g) {
        const Tensor<Real>& xv = tp.value(x);
        const Tensor<Real>& wv = tp.value(w);
        const std::size_t k = wv.dims[1], n = wv.dims[0];
        const std::size_t rows = xv.numel() / k;
        if (tp.requires_grad(x)) {
            Tensor<Real> dx(xv.dims);
            matmul_into(g.data.data(), wv.data.data(), dx.data.data(), rows, n, k);
            tp.accumulate(x, dx);
        }
        if (tp.requires_grad(w)) {
            Tensor<Real> dw(wv.dims);
            matmul_tn_accum(g.data.data(), xv.data.data(), dw.data.data(), rows, n, k);
            tp.accumulate(w, dw);
        }
    });
}

template <typename Real>
Var layer_norm(Tape<Real>& t, Var x, Var gamma, Var beta, Real eps) {
    const Tensor<Real>& xv = t.value(x);
    const std::size_t d = xv.dims.back();
    const std::size_t rows = xv.numel() / d;
    // save the standardized activations and inverse stddev for backward
    Tensor<Real> xhat(xv.dims);
    std::vector<Real> inv(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        const Real* xr = xv.data.data() + r * d;
        Real mean = 0;
        for (std::size_t j = 0; j < d; ++j) mean += xr[j];
        mean /= static_cast<Real>(d);
        Real var = 0;
        for (std::size_t j = 0; j < d; ++j) var += (xr[j] - mean) * (xr[j] - mean);
        var /= static_cast<Real>(d);
        inv[r] = Real(1) / std::sqrt(var + eps);
        for (std::size_t j = 0; j < d; ++j) xhat[r * d + j] = (xr[j] - mean) * inv[r];
    }
    Tensor<Real> y = layer_norm(xv, t.value(gamma), t.value(beta), eps);
    bool req = t.requires_grad(x) || t.requires_grad(gamma) || t.requires_grad(beta);
    return t.push(
        std::move(y), req,
        [x, gamma, beta, xhat = std::move(xhat), inv = std::move(inv), d,
         rows](Tape<Real>& tp, const Tensor<Real>& g) {
            const Tensor<Real>& gv = tp.value(gamma);
            if (tp.requires_grad(x)) {
                Tensor<Real> dx(tp.value(x).dims);
                for (std::size_t r = 0; r < rows; ++r) {
                    Real m1 = 0, m2 = 0;
                    for (std::size_t j = 0; j < d; ++j) {
                        const Real dh = g[r * d + j] * gv[j];
                        m1 += dh;
                        m2 += dh * xhat[r * d + j];
                    }
                    m1 /= static_cast<Real>(d);
                    m2 /= static_cast<Real>(d);
                    for (std::size_t j = 0; j < d; ++j) {
                        const Real dh = g[r * d + j] * gv[j];
                        dx[r * d + j] = (dh - m1 - xhat[r * d + j] * m2) * inv[r];
                    }
                }
                tp.accumulate(x, dx);
            }
            if (tp.requires_grad(gamma)) {
                Tensor<Real> dg({d});
                for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t j = 0; j < d; ++j)
                        dg[j] += g[r * d + j] * xhat[r * d + j];
                tp.accumulate(gamma, dg);
            }
            if (tp.requires_grad(beta)) {
                Tensor<Real> db({d});
                for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t j = 0; j < d; ++j) db[j] += g[r * d + j];
                tp.accumulate(beta, db);
            }
        });
}

template <typename Real>
Var silu(Tape<Real>& t, Var x) {
    return t.push(silu(t.value(x)), t.requires_grad(x),
                  [x](Tape<Real>& tp, const Tensor<Real>& g) {
                      const Tensor<Real>& xv = tp.value(x);
                      Tensor<Real> dx(xv.dims);
                      for (std::size_t i = 0; i < xv.numel(); ++i) {
                          const Real s = sigmoid(xv[i]);
                          dx[i] = g[i] * (s + xv[i] * s * (Real(1) - s));
                      }
                      tp.accumulate(x, dx);
                  });
}

template <typename Real>
Var causal_depthwise_conv1d(Tape<Real>& t, Var x, Var kernel) {
    Tensor<Real> y = causal_depthwise_conv1d(t.value(x), t.value(kernel));
    bool req = t.requires_grad(x) || t.requires_grad(kernel);
    return t.push(std::move(y), req, [x, kernel](Tape<Real>& tp, const Tensor<Real>& g) {
        const Tensor<Real>& xv = tp.value(x);
        const Tensor<Real>& kv = tp.value(kernel);
        const std::size_t b = xv.dims[0], l = xv.dims[1], d = xv.dims[2], kw = kv.dims[1];
        if (tp.requires_grad(x)) {
            // adjoint of a causal conv is a causal correlation
            Tensor<Real> dx(xv.dims);
            for (std::size_t bi = 0; bi < b; ++bi)
                for (std::size_t s = 0; s < l; ++s)
                    for (std::size_t c = 0; c < d; ++c) {
                        Real acc = 0;
                        for (std::size_t i = 0; i < kw; ++i) {
                            const std::size_t tt = s + (kw - 1) - i;
                            if (tt < l) acc += kv[c * kw + i] * g[(bi * l + tt) * d + c];
                        }
                        dx[(bi * l + s) * d + c] = acc;
                    }
            tp.accumulate(x, dx);
        }
        if (tp.requires_grad(kernel)) {
            Tensor<Real> dk(kv.dims);
            for (std::size_t bi = 0; bi < b; ++bi)
                for (std::size_t tt = 0; tt < l; ++tt)
                    for (std::size_t c = 0; c < d; ++c) {
                        const Real gv = g[(bi * l + tt) * d + c];
                        for (std::size_t i = 0; i < kw; ++i) {
                            const std::ptrdiff_t s = static_cast<std::ptrdiff_t>(tt + i) -
                                                     static_cast<std::ptrdiff_t>(kw - 1);
                            if (s >= 0)
                                dk[c * kw + i] +=
                                    gv * xv[(bi * l + static_cast<std::size_t>(s)) * d + c];
                        }
                    }
            tp.accumulate(kernel, dk);
        }
    });
}

template <typename Real>
Var grouped_pointwise_conv1d(Tape<Real>& t, Var x, Var w, Var bias) {
    Tensor<Real> y = grouped_pointwise_conv1d(t.value(x), t.value(w), &t.value(bias));
    bool req = t.requires_grad(x) || t.requires_grad(w) || t.requires_grad(bias);
    return t.push(std::move(y), req, [x, w, bias](Tape<Real>& tp, const Tensor<Real>& g) {
        const Tensor<Real>& xv = tp.value(x);
        const Tensor<Real>& wv = tp.value(w);
        const std::size_t positions = xv.dims[0] * xv.dims[1];
        const std::size_t h = wv.dims[0], gd = wv.dims[1], dm = h * gd;
        if (tp.requires_grad(x)) {
            Tensor<Real> dx(xv.dims);
            for (std::size_t pos = 0; pos < positions; ++pos)
                for (std::size_t grp = 0; grp < h; ++grp) {
                    const Real* wg = wv.data.data() + grp * gd * gd;
                    for (std::size_t j = 0; j < gd; ++j) {
                        Real acc = 0;
                        for (std::size_t i = 0; i < gd; ++i)
                            acc += wg[i * gd + j] * g[pos * dm + grp * gd + i];
                        dx[pos * dm + grp * gd + j] = acc;
                    }
                }
            tp.accumulate(x, dx);
        }
        if (tp.requires_grad(w)) {
            Tensor<Real> dw(wv.dims);
            for (std::size_t pos = 0; pos < positions; ++pos)
                for (std::size_t grp = 0; grp < h; ++grp)
                    for (std::size_t i = 0; i < gd; ++i) {
                        const Real gv = g[pos * dm + grp * gd + i];
                        for (std::size_t j = 0; j < gd; ++j)
                            dw[(grp * gd + i) * gd + j] += gv * xv[pos * dm + grp * gd + j];
                    }
            tp.accumulate(w, dw);
        }
        if (tp.requires_grad(bias)) {
            Tensor<Real> db({dm});
            for (std::size_t pos = 0; pos < positions; ++pos)
                for (std::size_t c = 0; c < dm; ++c) db[c] += g[pos * dm + c];
            tp.accumulate(bias, db);
        }
    });
}

template <typename Real>
Var embedding_lookup(Tape<Real>& t, const std::vector<std::int32_t>& ids, std::size_t b,
                     std::size_t l, Var table) {
    Tensor<Real> y = embedding_lookup(ids, b, l, t.value(table));
    return t.push(std::move(y), t.requires_grad(table),
                  [ids, table](Tape<Real>& tp, const Tensor<Real>& g) {
                      const Tensor<Real>& tab = tp.value(table);
                      const std::size_t d = tab.dims[1];
                      Tensor<Real> dt(tab.dims);
                      for (std::size_t i = 0; i < ids.size(); ++i) {
                          const std::size_t row = static_cast<std::size_t>(ids[i]);
                          for (std::size_t j = 0; j < d; ++j) dt[row * d + j] += g[i * d + j];
                      }
                      tp.accumulate(table, dt);
                  });
}

// Per-channel causal mixing of content v against gate g, both [B,H,L,d].
// The backward pass uses the convolution adjoint: the gradient of a causal
// convolution is a causal correlation, computed by reversing, convolving
// with the same machinery (FFT or direct, matching the forward mode), and
// reversing again.
template <typename Real>
Var causal_mix_heads(Tape<Real>& t, Var v, Var g, MixMode mode) {
    const Tensor<Real>& vv = t.value(v);
    const Tensor<Real>& gv = t.value(g);
    detail::require(vv.dims == gv.dims && vv.rank() == 4,
                    "causal_mix_heads: streams must share [B,H,L,d], got " + shape_str(vv.dims) +
                        " vs " + shape_str(gv.dims));
    Tensor<Real> out = mix_channels(vv, gv, mode);
    bool req = t.requires_grad(v) || t.requires_grad(g);
    return t.push(std::move(out), req, [v, g, mode](Tape<Real>& tp, const Tensor<Real>& gr) {
        const Tensor<Real>& vv2 = tp.value(v);
        const Tensor<Real>& gv2 = tp.value(g);
        Tensor<Real> grev(gr.dims);
        reverse_time(gr, grev);
        if (tp.requires_grad(v)) {
            Tensor<Real> dv = mix_channels(grev, gv2, mode);
            Tensor<Real> dvr(dv.dims);
            reverse_time(dv, dvr);
            tp.accumulate(v, dvr);
        }
        if (tp.requires_grad(g)) {
            Tensor<Real> dg = mix_channels(grev, vv2, mode);
            Tensor<Real> dgr(dg.dims);
            reverse_time(dg, dgr);
            tp.accumulate(g, dgr);
        }
    });
}

// Untaped channel-batched mixing over [B,H,L,d]; one mixer instance (and its
// twiddle tables) is shared by all B*H*d channels of the call.
template <typename Real>
Tensor<Real> mix_channels(const Tensor<Real>& v, const Tensor<Real>& g, MixMode mode) {
    const std::size_t b = v.dims[0], h = v.dims[1], l = v.dims[2], d = v.dims[3];
    Tensor<Real> out(v.dims);
    if (mode == MixMode::fft_f64 && !std::is_same_v<Real, double>) {
        CausalMixer<double> mixer(l);
        std::vector<double> vc(l), gc(l), rc(l);
        for (std::size_t bh = 0; bh < b * h; ++bh)
            for (std::size_t c = 0; c < d; ++c) {
                const std::size_t base = bh * l * d + c;
                for (std::size_t t = 0; t < l; ++t) {
                    vc[t] = static_cast<double>(v[base + t * d]);
                    gc[t] = static_cast<double>(g[base + t * d]);
                }
                mixer.mix(vc.data(), 1, gc.data(), 1, rc.data(), 1);
                for (std::size_t t = 0; t < l; ++t) out[base + t * d] = static_cast<Real>(rc[t]);
            }
    } else if (mode == MixMode::fft || mode == MixMode::fft_f64) {
        CausalMixer<Real> mixer(l);
        for (std::size_t bh = 0; bh < b * h; ++bh)
            for (std::size_t c = 0; c < d; ++c) {
                const std::size_t base = bh * l * d + c;
                mixer.mix(v.data.data() + base, d, g.data.data() + base, d, out.data.data() + base,
                          d);
            }
    } else {
        std::vector<Real> vc(l), gc(l);
        for (std::size_t bh = 0; bh < b * h; ++bh)
            for (std::size_t c = 0; c < d; ++c) {
                const std::size_t base = bh * l * d + c;
                for (std::size_t tt = 0; tt < l; ++tt) {
                    vc[tt] = v[base + tt * d];
                    gc[tt] = g[base + tt * d];
                }
                auto rc = direct_causal_conv(vc, gc);
                for (std::size_t tt = 0; tt < l; ++tt) out[base + tt * d] = rc[tt];
            }
    }
    return out;
}

// Reverse the time axis of [B,H,L,d] into dst.
template <typename Real>
void reverse_time(const Tensor<Real>& src, Tensor<Real>& dst) {
    const std::size_t bh = src.dims[0] * src.dims[1], l = src.dims[2], d = src.dims[3];
    for (std::size_t o = 0; o < bh; ++o)
        for (std::size_t tt = 0; tt < l; ++tt)
            for (std::size_t c = 0; c < d; ++c)
                dst[(o * l + tt) * d + c] = src[(o * l + (l - 1 - tt)) * d + c];
}

// Mean cross-entropy over rows; backward is (softmax - onehot) / N.
template <typename Real>
Var cross_entropy(Tape<Real>& t, Var logits, const std::vector<std::int32_t>& targets) {
    const Tensor<Real>& lv = t.value(logits);
    Tensor<Real> y({1});
    y[0] = cross_entropy(lv, targets);
    return t.push(std::move(y), t.requires_grad(logits),
                  [logits, targets](Tape<Real>& tp, const Tensor<Real>& g) {
                      const Tensor<Real>& lv2 = tp.value(logits);
                      const std::size_t n = lv2.dims[0], vsz = lv2.dims[1];
                      Tensor<Real> dl = softmax_lastdim(lv2);
                      const Real s = g[0] / static_cast<Real>(n);
                      for (std::size_t r = 0; r < n; ++r) {
                          dl[r * vsz + static_cast<std::size_t>(targets[r])] -= Real(1);
                          for (std::size_t j = 0; j < vsz; ++j) dl[r * vsz + j] *= s;
                      }
                      tp.accumulate(logits, dl);
                  });
}

// ---------------------------------------------------------------------------
// finite-difference verification
// ---------------------------------------------------------------------------

struct GradCheckReport {
    double max_rel_err = 0.0;
    std::size_t coords_checked = 0;
    std::size_t failures = 0;
    bool pass() const { return failures == 0 && coords_checked > 0; }
};

// Central-difference check of the analytic gradients of build(), a callable
// (Tape<Real>&, const std::vector<Var>&) -> Var producing a scalar from leaf
// copies of *params. Checks every coordinate when the total count is at most
// sample_threshold, otherwise a random subsample of sample_size coordinates.
// Relative error uses denominator max(|analytic|, |numeric|, 1e-8).
template <typename Real, typename BuildFn>
GradCheckReport grad_check(BuildFn&& build, const std::vector<Tensor<Real>*>& params, double h,
                           double tol, Rng& rng, std::size_t sample_threshold = 10000,
                           std::size_t sample_size = 200) {
    static_assert(std::is_same_v<Real, double>, "grad_check runs in 64-bit precision");
    auto run = [&](bool want_grads, std::vector<Tensor<Real>>& grads_out) -> double {
        Tape<Real> tape;
        std::vector<Var> leaves;
        leaves.reserve(params.size());
        for (const Tensor<Real>* p : params) leaves.push_back(tape.leaf(*p, true));
        Var loss = build(tape, leaves);
        const double out = static_cast<double>(tape.value(loss)[0]);
        if (want_grads) {
            tape.backward(loss);
            grads_out.clear();
            for (Var lv : leaves)
                grads_out.push_back(tape.has_grad(lv)
                                        ? tape.grad(lv)
                                        : zeros<Real>(tape.value(lv).dims));
        }
        return out;
    };

    std::vector<Tensor<Real>> analytic;
    run(true, analytic);

    std::size_t total = 0;
    for (const Tensor<Real>* p : params) total += p->numel();

    std::vector<std::pair<std::size_t, std::size_t>> coords;
    if (total <= sample_threshold) {
        for (std::size_t pi = 0; pi < params.size(); ++pi)
            for (std::size_t j = 0; j < params[pi]->numel(); ++j) coords.emplace_back(pi, j);
    } else {
        std::unordered_set<std::size_t> seen;
        while (seen.size() < sample_size) seen.insert(rng.below(total));
        for (std::size_t flat : seen) {
            std::size_t pi = 0, rem = flat;
            while (rem >= params[pi]->numel()) rem -= params[pi]->numel(), ++pi;
            coords.emplace_back(pi, rem);
        }
    }

    GradCheckReport report;
    std::vector<Tensor<Real>> unused;
    for (auto [pi, j] : coords) {
        Real& theta = params[pi]->data[j];
        const Real saved = theta;
        theta = saved + static_cast<Real>(h);
        const double fp = run(false, unused);
        theta = saved - static_cast<Real>(h);
        const double fm = run(false, unused);
        theta = saved;
        const double numeric = (fp - fm) / (2.0 * h);
        const double a = static_cast<double>(analytic[pi][j]);
        const double rel =
            std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
        report.max_rel_err = std::max(report.max_rel_err, rel);
        if (rel > tol) ++report.failures;
        ++report.coords_checked;
    }
    return report;
}

} // namespace caracal
