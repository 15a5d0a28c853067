#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <ostream>
#include <string>
#include <vector>

#include "caracal/checkpoint.hpp"
#include "caracal/model.hpp"
#include "caracal/rng.hpp"

namespace caracal {

struct TrainConfig {
    double lr_peak = 9e-4;
    double beta1 = 0.9;
    double beta2 = 0.95;
    double weight_decay = 0.1;
    double grad_clip_norm = 1.0;
    double warmup_fraction = 0.0375;
    std::size_t total_steps = 1;
    std::size_t batch_tokens = 2048;
    std::size_t seq_len = 64;
    std::uint64_t seed = 0;
    // Optional convergence cutoff: stop once the step loss drops below this
    // (0 disables). The schedule still assumes total_steps.
    double stop_loss = 0.0;
    MixMode mix_mode = MixMode::fft;

    std::size_t warmup_steps() const {
        return static_cast<std::size_t>(
            std::llround(warmup_fraction * static_cast<double>(total_steps)));
    }

    std::size_t batch_size() const {
        detail::require(seq_len >= 1 && batch_tokens % seq_len == 0,
                        "train: batch_tokens " + std::to_string(batch_tokens) +
                            " not divisible by seq_len " + std::to_string(seq_len));
        return batch_tokens / seq_len;
    }

    void validate() const {
        detail::require(lr_peak > 0 && total_steps >= 1, "train: lr_peak > 0, total_steps >= 1");
        detail::require(warmup_fraction > 0 && warmup_fraction < 1,
                        "train: warmup_fraction must lie in (0, 1)");
        detail::require(grad_clip_norm > 0, "train: grad_clip_norm must be > 0");
        (void)batch_size();
    }
};

// Linear warmup to lr_peak over W = round(warmup_fraction * total_steps)
// steps (the first step already learns: lr(0) = lr_peak / W), then cosine
// decay to 0 at total_steps. Both branches equal lr_peak at the junction.
inline double lr_at(std::size_t step, const TrainConfig& cfg) {
    const std::size_t warm = cfg.warmup_steps();
    if (warm > 0 && step < warm)
        return cfg.lr_peak * static_cast<double>(step + 1) / static_cast<double>(warm);
    const double span = static_cast<double>(cfg.total_steps - warm);
    if (span <= 0) return 0.0;
    const double phase = static_cast<double>(step - warm) / span;
    const double lr = cfg.lr_peak * 0.5 * (1.0 + std::cos(3.141592653589793 * phase));
    return lr > 0.0 ? lr : 0.0;
}

// First/second moments per parameter, aligned with visit_params order.
template <typename Real>
struct TrainState {
    std::vector<Tensor<Real>> m;
    std::vector<Tensor<Real>> v;
    std::size_t step = 0;
    double lr = 0.0;

    template <typename Params>
    static TrainState init(const Params& refs) {
        TrainState s;
        for (const auto& p : refs) {
            s.m.push_back(zeros<Real>(p.tensor->dims));
            s.v.push_back(zeros<Real>(p.tensor->dims));
        }
        return s;
    }
};

// Global L2 norm over all gradients; scales them to max_norm when above it.
// Returns the pre-clip norm (NaN propagates for the caller to halt on).
template <typename Real>
double clip_grad_norm(std::vector<Tensor<Real>>& grads, double max_norm) {
    double sq = 0;
    for (const Tensor<Real>& g : grads)
        for (Real v : g.data) sq += static_cast<double>(v) * static_cast<double>(v);
    const double norm = std::sqrt(sq);
    if (std::isfinite(norm) && norm > max_norm) {
        const Real s = static_cast<Real>(max_norm / norm);
        for (Tensor<Real>& g : grads)
            for (Real& v : g.data) v *= s;
    }
    return norm;
}

// Decoupled AdamW: moment updates with bias correction, then
// theta -= lr * (m_hat / (sqrt(v_hat) + eps) + weight_decay * theta).
// Decay applies only to parameters flagged for it (weight matrices and the
// embedding; never norms or biases).
template <typename Real>
void adamw_step(const std::vector<ParamRef<Real>>& params, const std::vector<Tensor<Real>>& grads,
                TrainState<Real>& state, double lr, const TrainConfig& cfg) {
    detail::require(params.size() == grads.size() && params.size() == state.m.size(),
                    "adamw_step: " + std::to_string(params.size()) + " params vs " +
                        std::to_string(grads.size()) + " grads vs " +
                        std::to_string(state.m.size()) + " moment slots");
    detail::require(lr >= 0, "adamw_step: negative learning rate");
    const double eps = 1e-8;
    state.step += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor<Real>& theta = *params[i].tensor;
        const Tensor<Real>& g = grads[i];
        detail::require(g.dims == theta.dims, "adamw_step: grad " + shape_str(g.dims) +
                                                  " does not match param " +
                                                  shape_str(theta.dims));
        Tensor<Real>& m = state.m[i];
        Tensor<Real>& v = state.v[i];
        const double wd = params[i].decay ? cfg.weight_decay : 0.0;
        for (std::size_t j = 0; j < theta.numel(); ++j) {
            const double gj = static_cast<double>(g[j]);
            const double mj = cfg.beta1 * static_cast<double>(m[j]) + (1.0 - cfg.beta1) * gj;
            const double vj = cfg.beta2 * static_cast<double>(v[j]) + (1.0 - cfg.beta2) * gj * gj;
            m[j] = static_cast<Real>(mj);
            v[j] = static_cast<Real>(vj);
            const double mhat = mj / bc1;
            const double vhat = vj / bc2;
            const double th = static_cast<double>(theta[j]);
            theta[j] = static_cast<Real>(th - lr * (mhat / (std::sqrt(vhat) + eps) + wd * th));
        }
    }
    state.lr = lr;
}

// ---------------------------------------------------------------------------
// data
// ---------------------------------------------------------------------------

inline std::vector<std::uint8_t> load_corpus(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("corpus: cannot open '" + path + "'");
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)),
                                    std::istreambuf_iterator<char>());
    return bytes;
}

struct Batch {
    std::vector<std::int32_t> ids;
    std::vector<std::int32_t> targets;
    std::size_t batch = 0;
    std::size_t seq_len = 0;
};

// Rows at uniformly random offsets; targets are the inputs shifted left by
// one (next-byte prediction).
inline Batch next_batch(const std::vector<std::uint8_t>& corpus, std::size_t batch,
                        std::size_t seq_len, Rng& rng) {
    detail::require(corpus.size() >= seq_len + 1,
                    "corpus: need at least seq_len+1 = " + std::to_string(seq_len + 1) +
                        " bytes, have " + std::to_string(corpus.size()));
    Batch b;
    b.batch = batch;
    b.seq_len = seq_len;
    b.ids.resize(batch * seq_len);
    b.targets.resize(batch * seq_len);
    for (std::size_t r = 0; r < batch; ++r) {
        const std::size_t off = rng.below(corpus.size() - seq_len);
        for (std::size_t t = 0; t < seq_len; ++t) {
            b.ids[r * seq_len + t] = corpus[off + t];
            b.targets[r * seq_len + t] = corpus[off + t + 1];
        }
    }
    return b;
}

// ---------------------------------------------------------------------------
// training loop
// ---------------------------------------------------------------------------

struct TraceEntry {
    std::size_t step;
    double lr;
    double loss;
};

struct TrainHalt : std::runtime_error {
    TrainHalt(std::size_t step_, double lr_, double grad_norm_, double loss_)
        : std::runtime_error("training halted: non-finite loss at step " + std::to_string(step_) +
                             " (lr=" + std::to_string(lr_) +
                             ", grad_norm=" + std::to_string(grad_norm_) +
                             ", loss=" + std::to_string(loss_) + ")"),
          step(step_),
          lr(lr_),
          grad_norm(grad_norm_),
          loss(loss_) {}
    std::size_t step;
    double lr;
    double grad_norm;
    double loss;
};

struct TrainResult {
    std::vector<TraceEntry> trace;
    std::size_t steps_run = 0;
    double final_loss = 0.0;
};

// Per step: batch -> taped forward -> cross entropy -> backward -> global
// clip -> AdamW at the scheduled rate. Emits one trace entry per step
// ("step<TAB>lr<TAB>loss" when a stream is given). Throws TrainHalt on a
// non-finite loss or gradient norm.
template <typename Real>
TrainResult train_loop(CaracalModel<Real>& model, const std::vector<std::uint8_t>& corpus,
                       const TrainConfig& cfg, std::ostream* trace_out = nullptr) {
    cfg.validate();
    const std::size_t batch = cfg.batch_size();
    Rng data_rng(cfg.seed);
    auto refs = visit_params(model);
    auto state = TrainState<Real>::init(refs);

    TrainResult result;
    for (std::size_t step = 0; step < cfg.total_steps; ++step) {
        Batch b = next_batch(corpus, batch, cfg.seq_len, data_rng);

        Tape<Real> tape;
        std::vector<Var> leaves;
        ModelVars mv = make_vars(tape, model, &leaves);
        Var loss = model_loss(tape, b.ids, b.targets, batch, cfg.seq_len, mv, cfg.mix_mode);
        const double loss_val = static_cast<double>(tape.value(loss)[0]);
        tape.backward(loss);

        std::vector<Tensor<Real>> grads;
        grads.reserve(leaves.size());
        for (Var lv : leaves)
            grads.push_back(tape.has_grad(lv) ? tape.grad(lv) : zeros<Real>(tape.value(lv).dims));
        const double grad_norm = clip_grad_norm(grads, cfg.grad_clip_norm);
        const double lr = lr_at(step, cfg);
        if (!std::isfinite(loss_val) || !std::isfinite(grad_norm))
            throw TrainHalt(step, lr, grad_norm, loss_val);

        adamw_step(refs, grads, state, lr, cfg);

        result.trace.push_back({step, lr, loss_val});
        result.final_loss = loss_val;
        result.steps_run = step + 1;
        if (trace_out != nullptr)
            *trace_out << step << '\t' << lr << '\t' << loss_val << '\n';
        if (cfg.stop_loss > 0.0 && loss_val < cfg.stop_loss) break;
    }
    return result;
}

// ---------------------------------------------------------------------------
// sampling
// ---------------------------------------------------------------------------

// Autoregressive decoding by full-prefix recomputation (no incremental
// cache). Temperature 0 is argmax with ties to the lowest byte; otherwise
// samples from softmax(logits / temperature) using the seeded generator.
template <typename Real>
std::vector<std::uint8_t> generate(const CaracalModel<Real>& m,
                                   const std::vector<std::uint8_t>& prompt, std::size_t n,
                                   double temperature, std::uint64_t seed) {
    detail::require(temperature >= 0, "generate: temperature must be >= 0");
    if (n == 0) return {};
    detail::require(!prompt.empty(), "generate: prompt must be non-empty");
    const std::size_t vocab = m.cfg.vocab_size;
    Rng rng(seed);
    std::vector<std::int32_t> ctx(prompt.begin(), prompt.end());
    std::vector<std::uint8_t> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        Tensor<Real> logits = model_forward(ctx, 1, ctx.size(), m);
        const Real* last = logits.data.data() + (ctx.size() - 1) * vocab;
        std::size_t pick = 0;
        if (temperature == 0.0) {
            for (std::size_t v = 1; v < vocab; ++v)
                if (last[v] > last[pick]) pick = v;
        } else {
            Tensor<Real> row({vocab});
            for (std::size_t v = 0; v < vocab; ++v)
                row[v] = static_cast<Real>(static_cast<double>(last[v]) / temperature);
            Tensor<Real> p = softmax_lastdim(row);
            const double r = rng.uniform();
            double cum = 0;
            pick = vocab - 1;
            for (std::size_t v = 0; v < vocab; ++v) {
                cum += static_cast<double>(p[v]);
                if (r < cum) {
                    pick = v;
                    break;
                }
            }
        }
        out.push_back(static_cast<std::uint8_t>(pick));
        ctx.push_back(static_cast<std::int32_t>(pick));
    }
    return out;
}

} // namespace caracal
