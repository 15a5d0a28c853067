#pragma once

#include <algorithm>
#include <chrono>
#include <fstream>
#include <string>
#include <vector>

#include "caracal/attention.hpp"
#include "caracal/mhf.hpp"
#include "caracal/rng.hpp"

namespace caracal {

// mhf: spectral mixing layer, FFT path. swa: sliding-window attention at
// its configured window. full_attention: attention with window = L, the
// quadratic baseline. direct_conv_oracle: the MHF layer with the O(L^2)
// reference convolution substituted for the spectral pipeline.
enum class BenchMixer { mhf, swa, full_attention, direct_conv_oracle };

inline const char* bench_mixer_name(BenchMixer m) {
    switch (m) {
        case BenchMixer::mhf: return "mhf";
        case BenchMixer::swa: return "swa";
        case BenchMixer::full_attention: return "full_attention";
        case BenchMixer::direct_conv_oracle: return "direct_conv_oracle";
    }
    return "?";
}

inline BenchMixer parse_bench_mixer(const std::string& s) {
    if (s == "mhf") return BenchMixer::mhf;
    if (s == "swa") return BenchMixer::swa;
    if (s == "full_attention") return BenchMixer::full_attention;
    if (s == "direct_conv_oracle") return BenchMixer::direct_conv_oracle;
    throw std::invalid_argument("bench: unknown mixer '" + s + "'");
}

struct BenchRecord {
    std::size_t seq_len = 0;
    BenchMixer mixer = BenchMixer::mhf;
    double wall_ms = 0;      // median rep time * reps
    double tokens_per_s = 0; // reps * seq_len * batch / (wall_ms / 1000)
    std::size_t reps = 0;
};

struct BenchConfig {
    std::vector<std::size_t> seq_lens{256, 512, 1024, 2048, 4096, 8192};
    std::vector<BenchMixer> mixers{BenchMixer::mhf, BenchMixer::swa, BenchMixer::full_attention,
                                   BenchMixer::direct_conv_oracle};
    std::size_t d_model = 256;
    std::size_t heads = 4;
    std::size_t batch = 1;
    std::size_t window = 256;
    std::size_t reps = 5;
    std::size_t warmup = 2;
    std::uint64_t seed = 0;
};

// Times forward passes of a single mixer layer on random input. Warmup reps
// are discarded; wall_ms is the median rep scaled by the rep count so the
// throughput identity tokens_per_s = reps*L*batch / (wall_ms/1000) holds.
template <typename Real>
BenchRecord bench_mixer(BenchMixer mixer, std::size_t seq_len, const BenchConfig& cfg) {
    using Clock = std::chrono::steady_clock;
    Rng rng(cfg.seed + seq_len);
    const std::size_t d = cfg.d_model, h = cfg.heads;

    auto x = randn<Real>({cfg.batch, seq_len, d}, Real(1), rng);

    MhfParams<Real> mp;
    SwaParams<Real> sp;
    const bool is_mhf = mixer == BenchMixer::mhf || mixer == BenchMixer::direct_conv_oracle;
    if (is_mhf) {
        mp = mhf_params_sized<Real>(d, h);
        for (Tensor<Real>* w : {&mp.pre_conv, &mp.w_v, &mp.b_v, &mp.w_g1, &mp.b_g1, &mp.w_g2,
                                &mp.b_g2, &mp.w_o, &mp.b_o})
            for (auto& v : w->data) v = static_cast<Real>(rng.normal() * 0.02);
    } else {
        const std::size_t window = mixer == BenchMixer::full_attention ? seq_len : cfg.window;
        sp = swa_params_sized<Real>(d, h, window);
        for (auto& v : sp.w_qkv.data) v = static_cast<Real>(rng.normal() * 0.02);
        for (auto& v : sp.w_out.data) v = static_cast<Real>(rng.normal() * 0.02);
    }

    volatile Real sink = 0; // keep the forwards from being optimized out
    auto run_once = [&]() {
        Tensor<Real> y = is_mhf ? mhf_forward(x, mp,
                                              mixer == BenchMixer::mhf ? MixMode::fft
                                                                       : MixMode::direct)
                                : swa_forward(x, sp);
        sink = sink + y[0];
    };

    for (std::size_t w = 0; w < cfg.warmup; ++w) run_once();
    std::vector<double> times;
    times.reserve(cfg.reps);
    for (std::size_t r = 0; r < cfg.reps; ++r) {
        const auto t0 = Clock::now();
        run_once();
        const auto t1 = Clock::now();
        times.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
    std::sort(times.begin(), times.end());
    const double median = times[times.size() / 2];

    BenchRecord rec;
    rec.seq_len = seq_len;
    rec.mixer = mixer;
    rec.reps = cfg.reps;
    rec.wall_ms = median * static_cast<double>(cfg.reps);
    rec.tokens_per_s = static_cast<double>(cfg.reps * seq_len * cfg.batch) /
                       (rec.wall_ms / 1000.0);
    return rec;
}

template <typename Real>
std::vector<BenchRecord> run_bench(const BenchConfig& cfg) {
    std::vector<BenchRecord> out;
    for (BenchMixer m : cfg.mixers)
        for (std::size_t l : cfg.seq_lens) out.push_back(bench_mixer<Real>(m, l, cfg));
    return out;
}

inline void write_bench_csv(std::ostream& os, const std::vector<BenchRecord>& records) {
    os << "seq_len,mixer,wall_ms,tokens_per_s,reps\n";
    for (const BenchRecord& r : records)
        os << r.seq_len << ',' << bench_mixer_name(r.mixer) << ',' << r.wall_ms << ','
           << r.tokens_per_s << ',' << r.reps << '\n';
}

inline void write_bench_csv(const std::string& path, const std::vector<BenchRecord>& records) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("bench: cannot open '" + path + "' for writing");
    write_bench_csv(os, records);
    if (!os) throw std::runtime_error("bench: write to '" + path + "' failed");
}

} // namespace caracal
