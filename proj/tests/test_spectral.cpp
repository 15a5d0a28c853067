#include "doctest.h"

#include <cmath>
#include <complex>
#include <vector>

#include "caracal/rng.hpp"
#include "caracal/spectral.hpp"

using namespace caracal;

namespace {

template <typename Real>
std::vector<Real> random_vec(std::size_t n, Rng& rng, double s = 1.0) {
    std::vector<Real> v(n);
    for (auto& x : v) x = static_cast<Real>(rng.normal() * s);
    return v;
}

template <typename Real>
double max_rel_err(const std::vector<Real>& got, const std::vector<Real>& want) {
    double scale = 1e-30;
    for (Real w : want) scale = std::max(scale, std::abs(static_cast<double>(w)));
    double err = 0;
    for (std::size_t i = 0; i < want.size(); ++i)
        err = std::max(err, std::abs(static_cast<double>(got[i]) - static_cast<double>(want[i])));
    return err / scale;
}

template <typename Real>
double max_abs_err(const std::vector<std::complex<Real>>& a,
                   const std::vector<std::complex<Real>>& b) {
    double err = 0;
    for (std::size_t i = 0; i < a.size(); ++i) err = std::max(err, std::abs(std::abs(a[i] - b[i])));
    return err;
}

} // namespace

TEST_SUITE_BEGIN("spectral");

TEST_CASE("fft_complex known transforms") {
    using C = std::complex<double>;
    auto imp = fft_complex<double>({C(1), C(0), C(0), C(0)}, false);
    for (auto v : imp) {
        CHECK(v.real() == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(v.imag() == doctest::Approx(0.0).epsilon(1e-12));
    }

    auto dc = fft_complex<double>({C(1), C(1), C(1), C(1)}, false);
    CHECK(dc[0].real() == doctest::Approx(4.0));
    for (std::size_t k = 1; k < 4; ++k) CHECK(std::abs(dc[k]) < 1e-12);

    auto ramp = fft_complex<double>({C(1), C(2), C(3), C(4)}, false);
    CHECK(std::abs(ramp[0] - C(10, 0)) < 1e-12);
    CHECK(std::abs(ramp[1] - C(-2, 2)) < 1e-12);
    CHECK(std::abs(ramp[2] - C(-2, 0)) < 1e-12);
    CHECK(std::abs(ramp[3] - C(-2, -2)) < 1e-12);

    CHECK_THROWS_WITH_AS((fft_complex<double>({C(1), C(2), C(3)}, false)),
                         doctest::Contains("power of two"), std::invalid_argument);
}

TEST_CASE("fft_complex matches the naive DFT and round-trips") {
    Rng rng(101);
    for (std::size_t n = 1; n <= 1024; n <<= 1) {
        std::vector<std::complex<double>> x(n);
        double norm = 0;
        for (auto& v : x) {
            v = {rng.normal(), rng.normal()};
            norm = std::max(norm, std::abs(v));
        }
        auto fast = fft_complex(x, false);
        auto slow = naive_dft(x);
        CHECK(max_abs_err(fast, slow) / std::max(norm, 1.0) < 1e-9);

        auto back = fft_complex(fast, true);
        CHECK(max_abs_err(back, x) / std::max(norm, 1.0) < 1e-9);
    }
}

TEST_CASE("naive_dft tiny cases") {
    auto imp = naive_dft<double>(std::vector<double>{1, 0, 0, 0});
    for (auto v : imp) CHECK(std::abs(v - std::complex<double>(1, 0)) < 1e-12);

    auto two = naive_dft<double>(std::vector<double>{1, 1});
    CHECK(std::abs(two[0] - std::complex<double>(2, 0)) < 1e-12);
    CHECK(std::abs(two[1]) < 1e-12);

    auto shift = naive_dft<double>(std::vector<double>{0, 1, 0, 0});
    CHECK(std::abs(shift[0] - std::complex<double>(1, 0)) < 1e-12);
    CHECK(std::abs(shift[1] - std::complex<double>(0, -1)) < 1e-12);
    CHECK(std::abs(shift[2] - std::complex<double>(-1, 0)) < 1e-12);
    CHECK(std::abs(shift[3] - std::complex<double>(0, 1)) < 1e-12);
}

TEST_CASE("rfft keeps the half spectrum") {
    auto s = rfft<double>({1, 0}, 4);
    CHECK(s.nfft == 4);
    REQUIRE(s.bins.size() == 3);
    for (auto b : s.bins) {
        CHECK(b.real() == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(std::abs(b.imag()) < 1e-12);
    }

    const double c = 2.75;
    auto sc = rfft<double>({c, c, c, c}, 4);
    CHECK(sc.bins[0].real() == doctest::Approx(4 * c));
    CHECK(std::abs(sc.bins[1]) < 1e-12);
    CHECK(std::abs(sc.bins[2]) < 1e-12);

    auto sr = rfft<double>({1, 2, 3, 4}, 4);
    CHECK(std::abs(sr.bins[0] - std::complex<double>(10, 0)) < 1e-12);
    CHECK(std::abs(sr.bins[1] - std::complex<double>(-2, 2)) < 1e-12);
    CHECK(std::abs(sr.bins[2] - std::complex<double>(-2, 0)) < 1e-12);

    CHECK_THROWS_AS(rfft<double>({1, 2, 3}, 2), std::invalid_argument);
}

TEST_CASE("spectrum invariants: DC and Nyquist are real") {
    Rng rng(202);
    for (std::size_t l : {3u, 8u, 17u}) {
        auto x = random_vec<double>(l, rng, 4.0);
        auto s = rfft(x, 2 * l);
        CHECK(is_pow2(s.nfft));
        CHECK(s.bins.size() == s.nfft / 2 + 1);
        CHECK(std::abs(s.bins[0].imag()) < 1e-9);
        CHECK(std::abs(s.bins[s.nfft / 2].imag()) < 1e-9);
    }
}

TEST_CASE("irfft reconstructs and truncates") {
    auto s = rfft<double>({1, 2, 3}, 8);
    auto back = irfft(s, 8);
    CHECK(back[0] == doctest::Approx(1).epsilon(1e-9));
    CHECK(back[1] == doctest::Approx(2).epsilon(1e-9));
    CHECK(back[2] == doctest::Approx(3).epsilon(1e-9));
    for (std::size_t i = 3; i < 8; ++i) CHECK(std::abs(back[i]) < 1e-9);

    Spectrum<double> dc;
    dc.nfft = 8;
    dc.bins.assign(5, {0, 0});
    dc.bins[0] = {8 * 3.5, 0};
    for (double v : irfft(dc, 8)) CHECK(v == doctest::Approx(3.5).epsilon(1e-12));

    // product of padded spectra is the linear convolution [1,2]*[3,4]
    auto a = rfft<double>({1, 2}, 4);
    auto b = rfft<double>({3, 4}, 4);
    for (std::size_t k = 0; k < a.bins.size(); ++k) a.bins[k] *= b.bins[k];
    auto conv = irfft(a, 4);
    CHECK(conv[0] == doctest::Approx(3).epsilon(1e-12));
    CHECK(conv[1] == doctest::Approx(10).epsilon(1e-12));
    CHECK(conv[2] == doctest::Approx(8).epsilon(1e-12));
    CHECK(std::abs(conv[3]) < 1e-12);

    CHECK_THROWS_AS(irfft(b, 16), std::invalid_argument);
}

TEST_CASE("direct_causal_conv oracle") {
    auto r = direct_causal_conv<double>({1, 2}, {3, 4});
    CHECK(r == std::vector<double>{3, 10});

    Rng rng(303);
    auto v = random_vec<double>(9, rng);
    std::vector<double> id(9, 0.0);
    id[0] = 1.0;
    CHECK(direct_causal_conv(v, id) == v);

    std::vector<double> delta1(9, 0.0);
    delta1[1] = 1.0;
    auto shifted = direct_causal_conv(v, delta1);
    CHECK(shifted[0] == 0.0);
    for (std::size_t t = 1; t < 9; ++t) CHECK(shifted[t] == v[t - 1]);

    CHECK_THROWS_AS((direct_causal_conv<double>({1, 2}, {1})), std::invalid_argument);
}

TEST_CASE("circular_conv wraps around") {
    auto r = circular_conv<double>({1, 2}, {3, 4});
    CHECK(r[0] == 11.0); // v0*g0 + v1*g1, exactly
    CHECK(r[1] == 10.0);

    Rng rng(404);
    auto v = random_vec<double>(8, rng);
    std::vector<double> id(8, 0.0);
    id[0] = 1.0;
    auto rid = circular_conv(v, id);
    for (std::size_t i = 0; i < 8; ++i) CHECK(rid[i] == doctest::Approx(v[i]).epsilon(1e-12));

    std::vector<double> imp(4, 0.0);
    imp[0] = 1.0;
    auto rk = circular_conv<double>(imp, {2, 7, 5, 3});
    CHECK(rk[0] == doctest::Approx(2).epsilon(1e-12));
    CHECK(rk[1] == doctest::Approx(7).epsilon(1e-12));
    CHECK(rk[2] == doctest::Approx(5).epsilon(1e-12));
    CHECK(rk[3] == doctest::Approx(3).epsilon(1e-12));

    CHECK_THROWS_AS((circular_conv<double>({1, 2, 3}, {1, 2, 3})), std::invalid_argument);
}

TEST_CASE("circular_conv is not causal; the padded path is") {
    // perturbing the future input v1 moves output position 0
    auto base = circular_conv<double>({1, 2}, {3, 4});
    auto pert = circular_conv<double>({1, 2 + 1.0}, {3, 4});
    CHECK(std::abs(pert[0] - base[0]) > 1e-3);

    auto padded = causal_mix_fft<double>({1, 2}, {3, 4});
    CHECK(padded[0] == doctest::Approx(3).epsilon(1e-12));
    CHECK(padded[1] == doctest::Approx(10).epsilon(1e-12));
}

TEST_CASE("causal_mix_fft equals the direct oracle") {
    auto r = causal_mix_fft<double>({1, 2}, {3, 4});
    CHECK(r[0] == doctest::Approx(3).epsilon(1e-12));
    CHECK(r[1] == doctest::Approx(10).epsilon(1e-12));

    Rng rng(505);
    auto v = random_vec<double>(16, rng);
    std::vector<double> id(16, 0.0);
    id[0] = 1.0;
    CHECK(max_rel_err(causal_mix_fft(v, id), v) < 1e-9);

    for (std::size_t l : {1u, 2u, 3u, 4u, 5u, 6u, 7u, 8u, 9u, 16u, 64u, 257u}) {
        for (int trial = 0; trial < 5; ++trial) {
            auto vv = random_vec<double>(l, rng);
            auto gg = random_vec<double>(l, rng);
            CHECK(max_rel_err(causal_mix_fft(vv, gg), direct_causal_conv(vv, gg)) < 1e-9);
        }
    }
}

TEST_CASE("causal_mix_fft in 32-bit stays within 1e-5") {
    Rng rng(606);
    for (std::size_t l : {5u, 33u, 257u}) {
        auto v = random_vec<float>(l, rng);
        auto g = random_vec<float>(l, rng);
        CHECK(max_rel_err(causal_mix_fft(v, g), direct_causal_conv(v, g)) < 1e-5);
    }
}

TEST_CASE("causal_mix_fft is causal within 1e-9") {
    Rng rng(707);
    const std::size_t l = 33;
    auto v = random_vec<double>(l, rng);
    auto g = random_vec<double>(l, rng);
    auto base = causal_mix_fft(v, g);
    for (std::size_t t : {0u, 5u, 20u, 32u}) {
        auto vp = v;
        vp[t] += 2.0;
        auto rp = causal_mix_fft(vp, g);
        for (std::size_t s = 0; s < t; ++s) CHECK(std::abs(rp[s] - base[s]) < 1e-9);
        auto gp = g;
        gp[t] -= 1.5;
        auto rg = causal_mix_fft(v, gp);
        for (std::size_t s = 0; s < t; ++s) CHECK(std::abs(rg[s] - base[s]) < 1e-9);
    }
}

TEST_CASE("padding slack does not change the causal window") {
    Rng rng(808);
    for (std::size_t l : {3u, 8u, 37u}) {
        auto v = random_vec<double>(l, rng);
        auto g = random_vec<double>(l, rng);
        auto base = causal_mix_fft(v, g);
        auto wide = causal_mix_fft(v, g, 8 * l);
        for (std::size_t i = 0; i < l; ++i) CHECK(std::abs(wide[i] - base[i]) < 1e-12);
    }
}

TEST_CASE("causal_mix_fft is linear in v") {
    Rng rng(909);
    const std::size_t l = 24;
    auto v = random_vec<double>(l, rng);
    auto w = random_vec<double>(l, rng);
    auto g = random_vec<double>(l, rng);
    const double a = 1.375, b = -0.625;
    std::vector<double> lin(l);
    for (std::size_t i = 0; i < l; ++i) lin[i] = a * v[i] + b * w[i];
    auto lhs = causal_mix_fft(lin, g);
    auto rv = causal_mix_fft(v, g);
    auto rw = causal_mix_fft(w, g);
    for (std::size_t i = 0; i < l; ++i)
        CHECK(std::abs(lhs[i] - (a * rv[i] + b * rw[i])) < 1e-9);
}

TEST_CASE("batched mixer matches the per-channel path bit for bit") {
    Rng rng(111);
    const std::size_t l = 19, channels = 6;
    auto v = random_vec<double>(l * channels, rng);
    auto g = random_vec<double>(l * channels, rng);
    CausalMixer<double> mixer(l);
    std::vector<double> out(l * channels);
    for (std::size_t c = 0; c < channels; ++c)
        mixer.mix(v.data() + c, channels, g.data() + c, channels, out.data() + c, channels);
    for (std::size_t c = 0; c < channels; ++c) {
        std::vector<double> vc(l), gc(l);
        for (std::size_t t = 0; t < l; ++t) {
            vc[t] = v[t * channels + c];
            gc[t] = g[t * channels + c];
        }
        auto ref = causal_mix_fft(vc, gc);
        for (std::size_t t = 0; t < l; ++t) CHECK(out[t * channels + c] == ref[t]);
    }
}

TEST_CASE("toeplitz materialization") {
    auto one = toeplitz_materialize<double>({5});
    CHECK(one.dims == Shape{1, 1});
    CHECK(one[0] == 5.0);

    auto a = toeplitz_materialize<double>({1, 2, 3});
    CHECK(a.data == std::vector<double>{1, 0, 0, 2, 1, 0, 3, 2, 1});

    Rng rng(222);
    for (int trial = 0; trial < 100; ++trial) {
        auto g = random_vec<double>(8, rng);
        auto v = random_vec<double>(8, rng);
        auto viaMat = toeplitz_matvec(toeplitz_materialize(g), v);
        auto viaConv = direct_causal_conv(v, g);
        CHECK(viaMat == viaConv); // same summation order, bitwise equal
    }
}

TEST_SUITE_END();
