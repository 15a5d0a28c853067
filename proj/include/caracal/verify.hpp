#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "caracal/attention.hpp"
#include "caracal/mhf.hpp"
#include "caracal/model.hpp"
#include "caracal/spectral.hpp"
#include "caracal/train.hpp"

namespace caracal {

struct SuiteResult {
    std::string name;
    bool pass = false;
    double worst = 0.0; // worst observed error for the suite's main metric
    std::string note;
};

struct VerifyOptions {
    Precision precision = Precision::f64;
    std::uint64_t seed = 1;
    // Self-test of the harness: routes the mixing path through an unpadded
    // (circular) transform. The causality and oracle suites must then fail.
    bool inject_circular_fault = false;
};

namespace verifydetail {

// Unpadded spectral path: transforms at next_pow2(L) instead of >= 2L, so
// the tail of the convolution wraps into the causal window for any L >= 2.
template <typename Real>
std::vector<Real> circular_mix(const std::vector<Real>& v, const std::vector<Real>& g) {
    const std::size_t l = v.size();
    const std::size_t nfft = next_pow2(l);
    Spectrum<Real> vs = rfft(v, nfft);
    Spectrum<Real> gs = rfft(g, nfft);
    for (std::size_t k = 0; k < vs.bins.size(); ++k) vs.bins[k] *= gs.bins[k];
    auto full = irfft(vs, nfft);
    return std::vector<Real>(full.begin(), full.begin() + static_cast<std::ptrdiff_t>(l));
}

template <typename Real>
std::vector<Real> mix_for(const VerifyOptions& opt, const std::vector<Real>& v,
                          const std::vector<Real>& g) {
    return opt.inject_circular_fault ? circular_mix(v, g) : causal_mix_fft(v, g);
}

template <typename Real>
std::vector<Real> random_vec(std::size_t n, Rng& rng) {
    std::vector<Real> v(n);
    for (auto& x : v) x = static_cast<Real>(rng.normal());
    return v;
}

template <typename Real>
double rel_err(const std::vector<Real>& got, const std::vector<Real>& want) {
    double scale = 1e-30, err = 0;
    for (Real w : want) scale = std::max(scale, std::abs(static_cast<double>(w)));
    for (std::size_t i = 0; i < want.size(); ++i)
        err = std::max(err, std::abs(static_cast<double>(got[i]) - static_cast<double>(want[i])));
    return err / scale;
}

template <typename Real>
SuiteResult suite_fft_vs_dft(const VerifyOptions& opt, double tol) {
    Rng rng(opt.seed);
    SuiteResult r{"fft-vs-naive-dft", true, 0.0, ""};
    for (std::size_t n = 1; n <= 1024; n <<= 1) {
        std::vector<std::complex<Real>> x(n);
        double norm = 1e-30;
        for (auto& v : x) {
            v = {static_cast<Real>(rng.normal()), static_cast<Real>(rng.normal())};
            norm = std::max(norm, static_cast<double>(std::abs(v)));
        }
        auto fast = fft_complex(x, false);
        auto slow = naive_dft(x);
        double err = 0;
        for (std::size_t i = 0; i < n; ++i)
            err = std::max(err, static_cast<double>(std::abs(fast[i] - slow[i])));
        auto back = fft_complex(fast, true);
        for (std::size_t i = 0; i < n; ++i)
            err = std::max(err, static_cast<double>(std::abs(back[i] - x[i])));
        r.worst = std::max(r.worst, err / norm);
    }
    r.pass = r.worst < tol;
    return r;
}

template <typename Real>
SuiteResult suite_oracle_equivalence(const VerifyOptions& opt, double tol, std::size_t trials) {
    Rng rng(opt.seed + 1);
    SuiteResult r{"oracle-equivalence", true, 0.0, ""};
    std::size_t worst_l = 0, worst_trial = 0;
    for (std::size_t l : {1u, 2u, 3u, 4u, 5u, 6u, 7u, 8u, 9u, 16u, 64u, 257u, 1000u})
        for (std::size_t trial = 0; trial < trials; ++trial) {
            auto v = random_vec<Real>(l, rng);
            auto g = random_vec<Real>(l, rng);
            const double err = rel_err(mix_for(opt, v, g), direct_causal_conv(v, g));
            if (err > r.worst) {
                r.worst = err;
                worst_l = l;
                worst_trial = trial;
            }
        }
    r.pass = r.worst < tol;
    if (!r.pass)
        r.note = "worst case: L=" + std::to_string(worst_l) + ", trial " +
                 std::to_string(worst_trial) + " of seed " + std::to_string(opt.seed + 1);
    return r;
}

template <typename Real>
SuiteResult suite_causality(const VerifyOptions& opt, double tol) {
    Rng rng(opt.seed + 2);
    SuiteResult r{"causality", true, 0.0, ""};

    // mixing-level: perturb v_t and g_t
    const std::size_t l = 48;
    auto v = random_vec<Real>(l, rng);
    auto g = random_vec<Real>(l, rng);
    auto base = mix_for(opt, v, g);
    std::size_t worst_t = 0;
    for (std::size_t t : {1u, 7u, 29u, 47u}) {
        auto vp = v;
        vp[t] += Real(2);
        auto rp = mix_for(opt, vp, g);
        for (std::size_t s = 0; s < t; ++s) {
            const double err = std::abs(static_cast<double>(rp[s] - base[s]));
            if (err > r.worst) {
                r.worst = err;
                worst_t = t;
            }
        }
        auto gp = g;
        gp[t] -= Real(1);
        auto rg = mix_for(opt, v, gp);
        for (std::size_t s = 0; s < t; ++s) {
            const double err = std::abs(static_cast<double>(rg[s] - base[s]));
            if (err > r.worst) {
                r.worst = err;
                worst_t = t;
            }
        }
    }
    const std::size_t mix_worst_t = worst_t;

    // model-level (skipped under fault injection, which only reroutes the
    // vector mixing path; the mixing check above already trips)
    if (!opt.inject_circular_fault) {
        ModelConfig cfg;
        cfg.d_model = 16;
        cfg.n_layers = 3;
        cfg.n_heads = 4;
        cfg.window = 8;
        auto m = build_model<Real>(cfg, opt.seed + 3);
        Rng idrng(opt.seed + 4);
        std::vector<std::int32_t> ids(12);
        for (auto& id : ids) id = static_cast<std::int32_t>(idrng.below(256));
        auto logits = model_forward(ids, 1, ids.size(), m);
        for (std::size_t t : {2u, 6u, 11u}) {
            auto p = ids;
            p[t] = (p[t] + 37) % 256;
            auto lp = model_forward(p, 1, p.size(), m);
            for (std::size_t s = 0; s < t; ++s)
                for (std::size_t vv = 0; vv < 256; ++vv)
                    r.worst = std::max(r.worst,
                                       std::abs(static_cast<double>(lp[s * 256 + vv]) -
                                                static_cast<double>(logits[s * 256 + vv])));
        }
    }
    r.pass = r.worst < tol;
    if (!r.pass)
        r.note = "largest leak from perturbing position " + std::to_string(mix_worst_t) +
                 " (mixing check, L=" + std::to_string(l) + ", seed " +
                 std::to_string(opt.seed + 2) + ")";
    return r;
}

template <typename Real>
SuiteResult suite_toeplitz_shift(const VerifyOptions& opt) {
    Rng rng(opt.seed + 5);
    SuiteResult r{"toeplitz-shift", true, 0.0, ""};
    for (std::size_t trial = 0; trial < 100; ++trial) {
        auto g = random_vec<Real>(8, rng);
        auto v = random_vec<Real>(8, rng);
        auto mat = toeplitz_matvec(toeplitz_materialize(g), v);
        auto conv = direct_causal_conv(v, g);
        if (mat != conv) {
            r.pass = false;
            r.note = "materialized matvec diverged from the direct convolution";
            return r;
        }
    }
    // delta kernel at index 1 is an exact shift with a leading zero
    auto v = random_vec<Real>(16, rng);
    std::vector<Real> delta1(16, Real(0));
    delta1[1] = Real(1);
    auto shifted = direct_causal_conv(v, delta1);
    if (shifted[0] != Real(0)) r.pass = false;
    for (std::size_t t = 1; t < 16; ++t)
        if (shifted[t] != v[t - 1]) r.pass = false;
    if (!r.pass && r.note.empty()) r.note = "delta-at-1 kernel did not shift exactly";
    return r;
}

template <typename Real>
SuiteResult suite_padding_counterexample(const VerifyOptions& opt) {
    (void)opt;
    SuiteResult r{"padding-counterexample", true, 0.0, ""};
    const std::vector<Real> v{1, 2}, g{3, 4};
    auto circ = circular_conv(v, g);
    if (!(circ[0] == Real(11) && circ[1] == Real(10))) {
        r.pass = false;
        r.note = "circular result is not [11,10]";
        return r;
    }
    auto circ_pert = circular_conv<Real>({1, 3}, g); // perturb the future v1
    const double moved = std::abs(static_cast<double>(circ_pert[0] - circ[0]));
    if (moved <= 1e-3) {
        r.pass = false;
        r.note = "unpadded path unexpectedly causal";
        return r;
    }
    auto padded = causal_mix_fft(v, g);
    r.worst = std::max(std::abs(static_cast<double>(padded[0]) - 3.0),
                       std::abs(static_cast<double>(padded[1]) - 10.0));
    r.pass = r.worst < 1e-6;
    return r;
}

// Always runs in 64-bit; the engine under test is precision-independent.
inline SuiteResult suite_gradients(const VerifyOptions& opt) {
    SuiteResult r{"gradients", true, 0.0, ""};
    Rng rng(opt.seed + 6);
    auto p = mhf_params_sized<double>(4, 2);
    for (Tensor<double>* w : {&p.pre_conv, &p.ln_gamma, &p.ln_beta, &p.w_v, &p.b_v, &p.w_g1,
                              &p.b_g1, &p.w_g2, &p.b_g2, &p.w_o, &p.b_o})
        for (auto& v : w->data) v = rng.normal() * 0.5;
    auto x = randn<double>({1, 5, 4}, 1.0, rng);
    auto probe = randn<double>({1, 5, 4}, 1.0, rng);
    std::vector<Tensor<double>*> params{&x,      &p.pre_conv, &p.w_v, &p.b_v, &p.w_g1,
                                        &p.b_g1, &p.w_g2,     &p.b_g2, &p.w_o, &p.b_o};
    auto build = [&](Tape<double>& t, const std::vector<Var>& lv) {
        MhfVars mv;
        mv.pre_conv = lv[1];
        mv.ln_gamma = t.leaf(p.ln_gamma, false);
        mv.ln_beta = t.leaf(p.ln_beta, false);
        mv.w_v = lv[2];
        mv.b_v = lv[3];
        mv.w_g1 = lv[4];
        mv.b_g1 = lv[5];
        mv.w_g2 = lv[6];
        mv.b_g2 = lv[7];
        mv.w_o = lv[8];
        mv.b_o = lv[9];
        mv.heads = 2;
        Var y = mhf_forward(t, lv[0], mv);
        return sum(t, mul(t, y, t.leaf(probe, false)));
    };
    auto report = grad_check<double>(build, params, 1e-5, 1e-5, rng);
    r.worst = report.max_rel_err;
    r.pass = report.pass();

    // spectral and direct paths must hand back the same gradients
    Tensor<double> grads[2][2];
    const MixMode modes[2] = {MixMode::fft, MixMode::direct};
    auto v4 = randn<double>({1, 2, 9, 2}, 1.0, rng);
    auto g4 = randn<double>({1, 2, 9, 2}, 1.0, rng);
    auto pr = randn<double>({1, 2, 9, 2}, 1.0, rng);
    for (int mi = 0; mi < 2; ++mi) {
        Tape<double> tape;
        Var vv = tape.leaf(v4, true);
        Var gg = tape.leaf(g4, true);
        Var out = causal_mix_heads(tape, vv, gg, modes[mi]);
        tape.backward(sum(tape, mul(tape, out, tape.leaf(pr, false))));
        grads[mi][0] = tape.grad(vv);
        grads[mi][1] = tape.grad(gg);
    }
    double path_err = 0;
    for (int which = 0; which < 2; ++which)
        for (std::size_t i = 0; i < grads[0][which].numel(); ++i)
            path_err = std::max(path_err, std::abs(grads[0][which][i] - grads[1][which][i]));
    r.worst = std::max(r.worst, path_err);
    if (path_err >= 1e-8) r.pass = false;
    return r;
}

template <typename Real>
SuiteResult suite_tensor_invariants(const VerifyOptions& opt, double tol) {
    Rng rng(opt.seed + 7);
    SuiteResult r{"tensor-invariants", true, 0.0, ""};
    const std::size_t d = 12;
    auto x = randn<Real>({6, d}, Real(2), rng);
    auto normed = layer_norm(x, full<Real>({d}, Real(1)), zeros<Real>({d}), static_cast<Real>(1e-9));
    for (std::size_t row = 0; row < 6; ++row) {
        double mean = 0, var = 0;
        for (std::size_t j = 0; j < d; ++j) mean += static_cast<double>(normed[row * d + j]);
        mean /= d;
        for (std::size_t j = 0; j < d; ++j) {
            const double dv = static_cast<double>(normed[row * d + j]) - mean;
            var += dv * dv;
        }
        var /= d;
        r.worst = std::max({r.worst, std::abs(mean), std::abs(var - 1.0)});
    }
    auto s = softmax_lastdim(x);
    for (std::size_t row = 0; row < 6; ++row) {
        double total = 0;
        for (std::size_t j = 0; j < d; ++j) total += static_cast<double>(s[row * d + j]);
        r.worst = std::max(r.worst, std::abs(total - 1.0));
    }
    auto again = softmax_lastdim(x);
    if (s.data != again.data) {
        r.pass = false;
        r.note = "softmax is not pure";
        return r;
    }
    r.pass = r.worst < tol;
    return r;
}

template <typename Real>
std::vector<SuiteResult> run_verify_t(const VerifyOptions& opt) {
    const bool f64 = std::is_same_v<Real, double>;
    const double tol_fft = f64 ? 1e-9 : 1e-4;
    const double tol_oracle = f64 ? 1e-9 : 1e-5;
    const double tol_causal = f64 ? 1e-9 : 1e-4;
    const double tol_tensor = f64 ? 1e-6 : 1e-4;
    std::vector<SuiteResult> out;
    out.push_back(suite_fft_vs_dft<Real>(opt, tol_fft));
    out.push_back(suite_oracle_equivalence<Real>(opt, tol_oracle, 25));
    out.push_back(suite_causality<Real>(opt, tol_causal));
    out.push_back(suite_toeplitz_shift<Real>(opt));
    out.push_back(suite_padding_counterexample<Real>(opt));
    out.push_back(suite_gradients(opt));
    out.push_back(suite_tensor_invariants<Real>(opt, tol_tensor));
    return out;
}

} // namespace verifydetail

inline std::vector<SuiteResult> run_verify(const VerifyOptions& opt) {
    return opt.precision == Precision::f64 ? verifydetail::run_verify_t<double>(opt)
                                           : verifydetail::run_verify_t<float>(opt);
}

} // namespace caracal
