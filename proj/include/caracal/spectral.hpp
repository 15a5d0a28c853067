#pragma once

#include <complex>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "caracal/tensor.hpp"

// direct_causal_conv and toeplitz_matvec promise bitwise-equal sums; FMA
// contraction must not fuse one loop and not the other.
#if defined(__GNUC__) && !defined(__clang__)
#define CARACAL_EXACT_SUM __attribute__((optimize("fp-contract=off")))
#else
#define CARACAL_EXACT_SUM
#endif

namespace caracal {

inline bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

inline std::size_t next_pow2(std::size_t n) {
    std::size_t p = 1;
    while (p < n) p <<= 1;
    return p;
}

// Half-complex spectrum of a real length-nfft signal: bins 0..nfft/2.
// DC and Nyquist bins of a real signal are real up to rounding.
template <typename Real>
struct Spectrum {
    std::vector<std::complex<Real>> bins;
    std::size_t nfft = 0;
};

namespace fftdetail {

// Twiddles exp(sign*2*pi*i*k/n) for k < n/2, computed in 64-bit then narrowed.
template <typename Real>
std::vector<std::complex<Real>> make_twiddles(std::size_t n, bool inverse) {
    std::vector<std::complex<Real>> tw(n / 2);
    const double sign = inverse ? 2.0 : -2.0;
    for (std::size_t k = 0; k < n / 2; ++k) {
        const double a = sign * 3.141592653589793238462643383279502884 *
                         static_cast<double>(k) / static_cast<double>(n);
        tw[k] = {static_cast<Real>(std::cos(a)), static_cast<Real>(std::sin(a))};
    }
    return tw;
}

// In-place iterative radix-2 transform. n must be a power of two and tw must
// hold n/2 twiddles of the wanted direction. Complex arithmetic is spelled
// out so the compiler emits plain mul/add instead of the checked helpers.
template <typename Real>
void fft_pow2(std::complex<Real>* a, std::size_t n, const std::complex<Real>* tw) {
    if (n <= 1) return;
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j |= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const std::size_t half = len >> 1;
        const std::size_t step = n / len;
        for (std::size_t base = 0; base < n; base += len) {
            for (std::size_t j = 0; j < half; ++j) {
                const std::complex<Real> w = tw[j * step];
                std::complex<Real>& lo = a[base + j];
                std::complex<Real>& hi = a[base + j + half];
                const Real tr = hi.real() * w.real() - hi.imag() * w.imag();
                const Real ti = hi.real() * w.imag() + hi.imag() * w.real();
                const Real ur = lo.real(), ui = lo.imag();
                lo = {ur + tr, ui + ti};
                hi = {ur - tr, ui - ti};
            }
        }
    }
}

} // namespace fftdetail

// Forward: X_k = sum_j x_j e^{-2*pi*i*jk/N}. Inverse: conjugate transform
// divided by N, so inverse(forward(x)) == x up to rounding.
template <typename Real>
std::vector<std::complex<Real>> fft_complex(std::vector<std::complex<Real>> x, bool inverse) {
    const std::size_t n = x.size();
    detail::require(is_pow2(n), "fft_complex: length " + std::to_string(n) +
                                    " is not a power of two");
    if (n > 1) {
        const auto tw = fftdetail::make_twiddles<Real>(n, inverse);
        fftdetail::fft_pow2(x.data(), n, tw.data());
    }
    if (inverse) {
        const Real invn = Real(1) / static_cast<Real>(n);
        for (auto& v : x) v *= invn;
    }
    return x;
}

// O(L^2) discrete Fourier transform by direct summation of the defining
// formula. Independent oracle for every FFT path; never used by the model.
template <typename Real>
std::vector<std::complex<Real>> naive_dft(const std::vector<std::complex<Real>>& v) {
    const std::size_t l = v.size();
    detail::require(l >= 1, "naive_dft: empty input");
    std::vector<std::complex<Real>> r(l);
    for (std::size_t t = 0; t < l; ++t) {
        double re = 0, im = 0;
        for (std::size_t j = 0; j < l; ++j) {
            const double a = -2.0 * 3.141592653589793238462643383279502884 *
                             static_cast<double>((t * j) % l) / static_cast<double>(l);
            const double c = std::cos(a), s = std::sin(a);
            const double vr = static_cast<double>(v[j].real());
            const double vi = static_cast<double>(v[j].imag());
            re += vr * c - vi * s;
            im += vr * s + vi * c;
        }
        r[t] = {static_cast<Real>(re), static_cast<Real>(im)};
    }
    return r;
}

template <typename Real>
std::vector<std::complex<Real>> naive_dft(const std::vector<Real>& v) {
    std::vector<std::complex<Real>> c(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) c[i] = {v[i], Real(0)};
    return naive_dft(c);
}

// Real forward transform: x is zero-padded to the smallest power of two
// >= max(n, 2) and the first nfft/2+1 bins are kept.
template <typename Real>
Spectrum<Real> rfft(const std::vector<Real>& x, std::size_t n) {
    detail::require(n >= x.size(), "rfft: target length " + std::to_string(n) +
                                       " shorter than input length " + std::to_string(x.size()));
    const std::size_t nfft = next_pow2(std::max<std::size_t>(n, 2));
    std::vector<std::complex<Real>> buf(nfft, std::complex<Real>(0, 0));
    for (std::size_t i = 0; i < x.size(); ++i) buf[i] = {x[i], Real(0)};
    const auto tw = fftdetail::make_twiddles<Real>(nfft, false);
    fftdetail::fft_pow2(buf.data(), nfft, tw.data());
    Spectrum<Real> s;
    s.nfft = nfft;
    s.bins.assign(buf.begin(), buf.begin() + static_cast<std::ptrdiff_t>(nfft / 2 + 1));
    return s;
}

// Inverse real transform: rebuilds the conjugate-symmetric full spectrum,
// inverts, and returns the first n real samples.
template <typename Real>
std::vector<Real> irfft(const Spectrum<Real>& s, std::size_t n) {
    detail::require(s.nfft >= 2 && is_pow2(s.nfft) && s.bins.size() == s.nfft / 2 + 1,
                    "irfft: malformed spectrum (nfft=" + std::to_string(s.nfft) + ", bins=" +
                        std::to_string(s.bins.size()) + ")");
    detail::require(n <= s.nfft, "irfft: requested length " + std::to_string(n) +
                                     " exceeds transform length " + std::to_string(s.nfft));
    const std::size_t nfft = s.nfft;
    std::vector<std::complex<Real>> buf(nfft);
    for (std::size_t k = 0; k <= nfft / 2; ++k) buf[k] = s.bins[k];
    for (std::size_t k = 1; k < nfft / 2; ++k) buf[nfft - k] = std::conj(s.bins[k]);
    const auto tw = fftdetail::make_twiddles<Real>(nfft, true);
    fftdetail::fft_pow2(buf.data(), nfft, tw.data());
    const Real invn = Real(1) / static_cast<Real>(nfft);
    std::vector<Real> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = buf[i].real() * invn;
    return out;
}

// Ground-truth causal mixing: r_t = sum_{j<=t} v_j g_{t-j}, accumulated in
// ascending j. O(L^2); the oracle every spectral path is checked against.
template <typename Real>
CARACAL_EXACT_SUM std::vector<Real> direct_causal_conv(const std::vector<Real>& v,
                                                       const std::vector<Real>& g) {
    detail::require(v.size() == g.size(), "direct_causal_conv: lengths differ, " +
                                              std::to_string(v.size()) + " vs " +
                                              std::to_string(g.size()));
    const std::size_t l = v.size();
    std::vector<Real> r(l);
    for (std::size_t t = 0; t < l; ++t) {
        Real acc = 0;
        for (std::size_t j = 0; j <= t; ++j) acc += v[j] * g[t - j];
        r[t] = acc;
    }
    return r;
}

// Channel mixer used by the layer path: one twiddle/bit-reversal setup and
// one scratch buffer shared across the B*H*d channels of a forward call.
// Data flow is pad -> forward transform -> keep half spectrum -> pointwise
// product -> symmetric rebuild -> inverse transform -> truncate to L.
template <typename Real>
class CausalMixer {
  public:
    explicit CausalMixer(std::size_t seq_len, std::size_t min_nfft = 0)
        : len_(seq_len),
          nfft_(next_pow2(std::max({std::size_t(2), 2 * seq_len, min_nfft}))),
          tw_fwd_(fftdetail::make_twiddles<Real>(nfft_, false)),
          tw_inv_(fftdetail::make_twiddles<Real>(nfft_, true)),
          va_(nfft_),
          ga_(nfft_) {
        detail::require(seq_len >= 1, "CausalMixer: sequence length must be >= 1");
    }

    std::size_t nfft() const { return nfft_; }

    // r[t*rs] = causal conv of the strided channels v and g, t in [0, L).
    void mix(const Real* v, std::size_t vstride, const Real* g, std::size_t gstride, Real* r,
             std::size_t rstride) {
        for (std::size_t i = 0; i < len_; ++i) {
            va_[i] = {v[i * vstride], Real(0)};
            ga_[i] = {g[i * gstride], Real(0)};
        }
        std::fill(va_.begin() + static_cast<std::ptrdiff_t>(len_), va_.end(),
                  std::complex<Real>(0, 0));
        std::fill(ga_.begin() + static_cast<std::ptrdiff_t>(len_), ga_.end(),
                  std::complex<Real>(0, 0));
        fftdetail::fft_pow2(va_.data(), nfft_, tw_fwd_.data());
        fftdetail::fft_pow2(ga_.data(), nfft_, tw_fwd_.data());
        // Product on bins 0..N/2, then conjugate-symmetric rebuild: identical
        // arithmetic to the rfft/irfft composition.
        for (std::size_t k = 0; k <= nfft_ / 2; ++k) {
            const Real ar = va_[k].real(), ai = va_[k].imag();
            const Real br = ga_[k].real(), bi = ga_[k].imag();
            va_[k] = {ar * br - ai * bi, ar * bi + ai * br};
        }
        for (std::size_t k = 1; k < nfft_ / 2; ++k) va_[nfft_ - k] = std::conj(va_[k]);
        fftdetail::fft_pow2(va_.data(), nfft_, tw_inv_.data());
        const Real invn = Real(1) / static_cast<Real>(nfft_);
        for (std::size_t t = 0; t < len_; ++t) r[t * rstride] = va_[t].real() * invn;
    }

  private:
    std::size_t len_;
    std::size_t nfft_;
    std::vector<std::complex<Real>> tw_fwd_, tw_inv_;
    std::vector<std::complex<Real>> va_, ga_;
};

// Causal convolution through the spectral pipeline: pad both inputs to a
// power of two >= 2L, transform, multiply pointwise, invert, keep the first
// L samples. Equals direct_causal_conv up to rounding. min_nfft lets tests
// force extra padding slack.
template <typename Real>
std::vector<Real> causal_mix_fft(const std::vector<Real>& v, const std::vector<Real>& g,
                                 std::size_t min_nfft = 0) {
    detail::require(v.size() == g.size(), "causal_mix_fft: lengths differ, " +
                                              std::to_string(v.size()) + " vs " +
                                              std::to_string(g.size()));
    detail::require(!v.empty(), "causal_mix_fft: empty input");
    CausalMixer<Real> mixer(v.size(), min_nfft);
    std::vector<Real> r(v.size());
    mixer.mix(v.data(), 1, g.data(), 1, r.data(), 1);
    return r;
}

// Circular convolution with Nfft = L (no padding): the wrap-around result
// that violates causality. Kept as the negative-test oracle only; nothing in
// the model forward pass reaches it.
template <typename Real>
std::vector<Real> circular_conv(const std::vector<Real>& v, const std::vector<Real>& g) {
    detail::require(v.size() == g.size(), "circular_conv: lengths differ, " +
                                              std::to_string(v.size()) + " vs " +
                                              std::to_string(g.size()));
    const std::size_t l = v.size();
    detail::require(is_pow2(l), "circular_conv: length " + std::to_string(l) +
                                    " is not a power of two");
    if (l == 1) return {v[0] * g[0]};
    Spectrum<Real> vs = rfft(v, l);
    Spectrum<Real> gs = rfft(g, l);
    for (std::size_t k = 0; k < vs.bins.size(); ++k) {
        const Real ar = vs.bins[k].real(), ai = vs.bins[k].imag();
        const Real br = gs.bins[k].real(), bi = gs.bins[k].imag();
        vs.bins[k] = {ar * br - ai * bi, ar * bi + ai * br};
    }
    return irfft(vs, l);
}

// Lower-triangular Toeplitz matrix of the kernel g: A[t][j] = g[t-j] for
// j <= t, 0 above the diagonal.
template <typename Real>
Tensor<Real> toeplitz_materialize(const std::vector<Real>& g) {
    const std::size_t l = g.size();
    detail::require(l >= 1, "toeplitz_materialize: empty kernel");
    Tensor<Real> a({l, l});
    for (std::size_t t = 0; t < l; ++t)
        for (std::size_t j = 0; j <= t; ++j) a[t * l + j] = g[t - j];
    return a;
}

// Dense matvec over the full row (zeros included), ascending column order so
// the summation order matches direct_causal_conv term for term.
template <typename Real>
CARACAL_EXACT_SUM std::vector<Real> toeplitz_matvec(const Tensor<Real>& a,
                                                    const std::vector<Real>& v) {
    detail::require(a.rank() == 2 && a.dims[0] == a.dims[1] && a.dims[0] == v.size(),
                    "toeplitz_matvec: matrix " + shape_str(a.dims) + " incompatible with vector [" +
                        std::to_string(v.size()) + "]");
    const std::size_t l = v.size();
    std::vector<Real> r(l);
    for (std::size_t t = 0; t < l; ++t) {
        Real acc = 0;
        for (std::size_t j = 0; j < l; ++j) acc += a[t * l + j] * v[j];
        r[t] = acc;
    }
    return r;
}

} // namespace caracal
