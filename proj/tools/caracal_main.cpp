// caracal command-line front end: correctness verification, mixer scaling
// benchmarks, byte-level training, and sampling from checkpoints.

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "caracal/bench.hpp"
#include "caracal/checkpoint.hpp"
#include "caracal/train.hpp"
#include "caracal/verify.hpp"

namespace {

using namespace caracal;

Precision parse_precision(const std::string& s) {
    if (s == "f32") return Precision::f32;
    if (s == "f64") return Precision::f64;
    throw CLI::ValidationError("--precision", "expected f32 or f64, got '" + s + "'");
}

// CARACAL_PRECISION overrides the flag when set.
Precision effective_precision(const std::string& flag_value) {
    if (const char* env = std::getenv("CARACAL_PRECISION")) return parse_precision(env);
    return parse_precision(flag_value);
}

int cmd_verify(const std::string& precision_flag, std::uint64_t seed, bool inject_fault) {
    VerifyOptions opt;
    opt.precision = effective_precision(precision_flag);
    opt.seed = seed;
    opt.inject_circular_fault = inject_fault;

    auto results = run_verify(opt);
    bool all_pass = true;
    std::printf("verification (%s, seed %llu)%s\n", precision_name(opt.precision),
                static_cast<unsigned long long>(seed),
                inject_fault ? " [circular fault injected]" : "");
    for (const SuiteResult& r : results) {
        all_pass = all_pass && r.pass;
        std::printf("[%s] %-24s worst observed error %.3e%s%s\n", r.pass ? "PASS" : "FAIL",
                    r.name.c_str(), r.worst, r.note.empty() ? "" : "; ", r.note.c_str());
    }
    std::printf("%s\n", all_pass ? "all suites passed" : "FAILURES detected");
    return all_pass ? 0 : 1;
}

std::vector<std::size_t> parse_size_csv(const std::string& csv, const char* what) {
    std::vector<std::size_t> out;
    std::istringstream is(csv);
    std::string tok;
    while (std::getline(is, tok, ','))
        if (!tok.empty()) out.push_back(std::stoul(tok));
    if (out.empty()) throw CLI::ValidationError(what, "no values in '" + csv + "'");
    return out;
}

int cmd_bench(const std::string& seq_lens_csv, const std::string& mixers_csv,
              std::size_t d_model, std::size_t heads, std::size_t batch, std::size_t window,
              std::size_t reps, std::size_t warmup, std::size_t threads, std::uint64_t seed,
              const std::string& out_path) {
    if (threads != 1)
        std::fprintf(stderr, "bench: execution is single-threaded; --threads %zu ignored\n",
                     threads);
    BenchConfig cfg;
    cfg.seq_lens = parse_size_csv(seq_lens_csv, "--seq-lens");
    cfg.mixers.clear();
    {
        std::istringstream is(mixers_csv);
        std::string tok;
        while (std::getline(is, tok, ','))
            if (!tok.empty()) cfg.mixers.push_back(parse_bench_mixer(tok));
    }
    cfg.d_model = d_model;
    cfg.heads = heads;
    cfg.batch = batch;
    cfg.window = window;
    cfg.reps = reps;
    cfg.warmup = warmup;
    cfg.seed = seed;

    std::vector<BenchRecord> records;
    for (BenchMixer m : cfg.mixers)
        for (std::size_t l : cfg.seq_lens) {
            BenchRecord r = bench_mixer<float>(m, l, cfg);
            std::fprintf(stderr, "bench %-18s L=%-6zu %10.2f ms  %12.0f tok/s\n",
                         bench_mixer_name(r.mixer), r.seq_len, r.wall_ms, r.tokens_per_s);
            records.push_back(r);
        }
    if (out_path.empty())
        write_bench_csv(std::cout, records);
    else
        write_bench_csv(out_path, records);
    return 0;
}

ModelConfig config_for_size(const std::string& size, std::size_t d_model, std::size_t layers,
                            std::size_t heads, std::size_t window, std::size_t ratio) {
    ModelConfig cfg;
    if (size == "tiny") cfg = tiny_config();
    else if (size == "micro") cfg = micro_config();
    else if (size == "custom") {
        cfg.d_model = d_model;
        cfg.n_layers = layers;
        cfg.n_heads = heads;
    } else
        throw CLI::ValidationError("--size", "expected tiny, micro, or custom");
    cfg.window = window;
    cfg.mhf_to_swa_ratio = ratio;
    return cfg;
}

template <typename Real>
int train_with(ModelConfig mcfg, const TrainConfig& tcfg, const std::string& data_path,
               const std::string& out_path, const std::string& trace_path) {
    auto corpus = load_corpus(data_path);
    auto model = build_model<Real>(mcfg, tcfg.seed);

    std::ofstream trace;
    if (!trace_path.empty()) {
        trace.open(trace_path);
        if (!trace) throw std::runtime_error("train: cannot open trace file '" + trace_path + "'");
    }
    auto result = train_loop(model, corpus, tcfg, trace_path.empty() ? nullptr : &trace);
    std::fprintf(stderr, "trained %zu steps, final loss %.4f\n", result.steps_run,
                 result.final_loss);
    if (!out_path.empty()) {
        save_checkpoint(out_path, model);
        std::fprintf(stderr, "checkpoint written to %s\n", out_path.c_str());
    }
    return 0;
}

int cmd_train(const std::string& size, std::size_t d_model, std::size_t layers,
              std::size_t heads, std::size_t window, std::size_t ratio,
              const std::string& precision_flag, const std::string& data_path, std::size_t steps,
              std::size_t seq_len, std::size_t batch_tokens, double lr_peak, double stop_loss,
              std::uint64_t seed, const std::string& out_path, const std::string& trace_path) {
    ModelConfig mcfg = config_for_size(size, d_model, layers, heads, window, ratio);
    mcfg.precision = effective_precision(precision_flag);

    TrainConfig tcfg;
    tcfg.total_steps = steps;
    tcfg.seq_len = seq_len;
    tcfg.batch_tokens = batch_tokens;
    tcfg.lr_peak = lr_peak;
    tcfg.stop_loss = stop_loss;
    tcfg.seed = seed;

    if (mcfg.precision == Precision::f64)
        return train_with<double>(mcfg, tcfg, data_path, out_path, trace_path);
    return train_with<float>(mcfg, tcfg, data_path, out_path, trace_path);
}

std::vector<std::uint8_t> decode_prompt(const std::string& prompt, bool hex) {
    if (!hex) return std::vector<std::uint8_t>(prompt.begin(), prompt.end());
    if (prompt.size() % 2 != 0)
        throw std::runtime_error("generate: hex prompt must have an even number of digits");
    auto nibble = [](char c) -> int {
        if (c >= '0' && c <= '9') return c - '0';
        if (c >= 'a' && c <= 'f') return c - 'a' + 10;
        if (c >= 'A' && c <= 'F') return c - 'A' + 10;
        throw std::runtime_error(std::string("generate: invalid hex digit '") + c + "'");
    };
    std::vector<std::uint8_t> out;
    for (std::size_t i = 0; i < prompt.size(); i += 2)
        out.push_back(static_cast<std::uint8_t>(nibble(prompt[i]) * 16 + nibble(prompt[i + 1])));
    return out;
}

template <typename Real>
int generate_with(const std::string& checkpoint_path, const std::vector<std::uint8_t>& prompt,
                  std::size_t tokens, double temperature, std::uint64_t seed) {
    auto model = load_checkpoint<Real>(checkpoint_path);
    auto bytes = generate(model, prompt, tokens, temperature, seed);
    std::fwrite(bytes.data(), 1, bytes.size(), stdout);
    return 0;
}

int cmd_generate(const std::string& checkpoint_path, const std::string& prompt, bool hex,
                 std::size_t tokens, double temperature, std::uint64_t seed) {
    auto bytes = decode_prompt(prompt, hex);
    if (checkpoint_precision(checkpoint_path) == Precision::f64)
        return generate_with<double>(checkpoint_path, bytes, tokens, temperature, seed);
    return generate_with<float>(checkpoint_path, bytes, tokens, temperature, seed);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"caracal: causal spectral-mixing language model toolkit"};
    app.require_subcommand(1);

    // verify
    std::string v_precision = "f64";
    std::uint64_t v_seed = 1;
    bool v_fault = false;
    auto* verify = app.add_subcommand("verify", "run the correctness suites");
    verify->add_option("--precision", v_precision, "f32 or f64")->capture_default_str();
    verify->add_option("--seed", v_seed, "suite RNG seed")->capture_default_str();
    verify->add_flag("--inject-circular-fault", v_fault,
                     "self-test: break the padding and expect failures");

    // bench
    std::string b_lens = "256,512,1024,2048,4096,8192";
    std::string b_mixers = "mhf,swa,full_attention,direct_conv_oracle";
    std::size_t b_d = 256, b_h = 4, b_batch = 1, b_window = 256, b_reps = 5, b_warm = 2,
                b_threads = 1;
    std::uint64_t b_seed = 0;
    std::string b_out;
    auto* bench = app.add_subcommand("bench", "time mixer layers across sequence lengths");
    bench->add_option("--seq-lens", b_lens, "comma-separated lengths")->capture_default_str();
    bench->add_option("--mixers", b_mixers,
                      "subset of mhf,swa,full_attention,direct_conv_oracle")
        ->capture_default_str();
    bench->add_option("--d-model", b_d)->capture_default_str();
    bench->add_option("--heads", b_h)->capture_default_str();
    bench->add_option("--batch", b_batch)->capture_default_str();
    bench->add_option("--window", b_window, "swa window")->capture_default_str();
    bench->add_option("--reps", b_reps)->capture_default_str();
    bench->add_option("--warmup", b_warm)->capture_default_str();
    bench->add_option("--threads", b_threads, "accepted for compatibility; runs on one thread")
        ->capture_default_str();
    bench->add_option("--seed", b_seed)->capture_default_str();
    bench->add_option("--out", b_out, "CSV output path (stdout when omitted)");

    // train
    std::string t_size = "micro", t_precision = "f32", t_data, t_out, t_trace;
    std::size_t t_d = 64, t_layers = 3, t_heads = 4, t_window = 256, t_ratio = 2;
    std::size_t t_steps = 2000, t_seq = 64, t_batch_tokens = 2048;
    double t_lr = 9e-4, t_stop = 0.0;
    std::uint64_t t_seed = 0;
    auto* train = app.add_subcommand("train", "train on a raw byte corpus");
    train->add_option("--data", t_data, "corpus file (raw bytes)")->required();
    train->add_option("--size", t_size, "tiny, micro, or custom")->capture_default_str();
    train->add_option("--d-model", t_d, "custom size only")->capture_default_str();
    train->add_option("--layers", t_layers, "custom size only")->capture_default_str();
    train->add_option("--heads", t_heads, "custom size only")->capture_default_str();
    train->add_option("--window", t_window)->capture_default_str();
    train->add_option("--ratio", t_ratio, "MHF layers per SWA layer")->capture_default_str();
    train->add_option("--precision", t_precision, "f32 or f64")->capture_default_str();
    train->add_option("--steps", t_steps)->capture_default_str();
    train->add_option("--seq-len", t_seq)->capture_default_str();
    train->add_option("--batch-tokens", t_batch_tokens)->capture_default_str();
    train->add_option("--lr", t_lr, "peak learning rate")->capture_default_str();
    train->add_option("--stop-loss", t_stop, "stop early below this loss (0 = off)")
        ->capture_default_str();
    train->add_option("--seed", t_seed)->capture_default_str();
    train->add_option("--out", t_out, "checkpoint output path");
    train->add_option("--trace", t_trace, "loss trace output path");

    // generate
    std::string g_ckpt, g_prompt;
    bool g_hex = false;
    std::size_t g_tokens = 64;
    double g_temp = 1.0;
    std::uint64_t g_seed = 0;
    auto* gen = app.add_subcommand("generate", "sample bytes from a checkpoint");
    gen->add_option("--checkpoint", g_ckpt)->required();
    gen->add_option("--prompt", g_prompt, "UTF-8 prompt (or hex with --hex)")->required();
    gen->add_flag("--hex", g_hex, "interpret --prompt as hex bytes");
    gen->add_option("--tokens", g_tokens, "bytes to generate")->capture_default_str();
    gen->add_option("--temperature", g_temp)->capture_default_str();
    gen->add_option("--seed", g_seed)->capture_default_str();

    CLI11_PARSE(app, argc, argv);

    try {
        if (verify->parsed()) return cmd_verify(v_precision, v_seed, v_fault);
        if (bench->parsed())
            return cmd_bench(b_lens, b_mixers, b_d, b_h, b_batch, b_window, b_reps, b_warm,
                             b_threads, b_seed, b_out);
        if (train->parsed())
            return cmd_train(t_size, t_d, t_layers, t_heads, t_window, t_ratio, t_precision,
                             t_data, t_steps, t_seq, t_batch_tokens, t_lr, t_stop, t_seed, t_out,
                             t_trace);
        if (gen->parsed()) return cmd_generate(g_ckpt, g_prompt, g_hex, g_tokens, g_temp, g_seed);
    } catch (const TrainHalt& h) {
        std::fprintf(stderr, "error: %s\n", h.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
