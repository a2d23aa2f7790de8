#include "headshare/postshare.hpp"

#include <cmath>
#include <string>
#include <utility>

#include "headshare/error.hpp"

namespace headshare {

namespace {

double frobenius_sq(const Matrix& a, const Matrix& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const double d = a.data[i] - b.data[i];
        acc += d * d;
    }
    return acc;
}

void split_sequence(const TokenSequence& seq, TokenSequence& input, TokenSequence& target) {
    if (seq.ids.size() < 2)
        fail("LengthMismatch", "training sequences need at least 2 tokens");
    input.ids.assign(seq.ids.begin(), seq.ids.end() - 1);
    target.ids.assign(seq.ids.begin() + 1, seq.ids.end());
}

void validate_pscfg(const PostShareConfig& pscfg) {
    if (!std::isfinite(pscfg.gamma)) fail("InvalidConfig", "gamma must be finite");
    if (pscfg.steps < 1) fail("InvalidConfig", "steps must be >= 1");
    if (pscfg.batch_size < 1) fail("InvalidConfig", "batch_size must be >= 1");
}

}  // namespace

TrainState init_train_state(TensorStore weights) {
    TrainState state;
    state.m = zeros_like(weights);
    state.v = zeros_like(weights);
    state.weights = std::move(weights);
    state.step = 0;
    return state;
}

double weight_similarity_loss(const TensorStore& store, const ModelConfig& cfg,
                              const SharePlan& plan, bool squared) {
    if (plan.pairs.empty()) fail("EmptyPlan", "the similarity loss needs at least one pair");
    double total = 0.0;
    for (const SharePair& p : plan.pairs) {
        const HeadSlices a = head_slices(store, cfg, p.keep);
        const HeadSlices b = head_slices(store, cfg, p.replace);
        const double nq = frobenius_sq(a.wq, b.wq);
        const double nk = frobenius_sq(a.wk, b.wk);
        const double nv = frobenius_sq(a.wv, b.wv);
        if (squared) {
            total += nq + nk + nv;
        } else {
            total += std::sqrt(nq) + std::sqrt(nk) + std::sqrt(nv);
        }
    }
    return total / static_cast<double>(plan.pairs.size());
}

LossBreakdown combined_loss(const TensorStore& store, const ModelConfig& cfg,
                            const SharePlan& plan, const std::vector<TokenSequence>& batch,
                            double gamma, bool squared) {
    if (batch.empty()) fail("EmptyCorpus", "combined_loss needs a non-empty batch");
    LossBreakdown out;
    for (const TokenSequence& seq : batch) {
        TokenSequence input, target;
        split_sequence(seq, input, target);
        out.task += cross_entropy(forward(store, cfg, input), target);
    }
    out.task /= static_cast<double>(batch.size());
    out.reg = weight_similarity_loss(store, cfg, plan, squared);
    out.total = out.task + gamma * out.reg;
    return out;
}

void add_weight_similarity_gradient(const TensorStore& weights, const ModelConfig& cfg,
                                    const SharePlan& plan, double gamma, bool squared,
                                    TensorStore& grads) {
    if (plan.pairs.empty()) fail("EmptyPlan", "the similarity loss needs at least one pair");
    const double inv_n = 1.0 / static_cast<double>(plan.pairs.size());
    const char* names[3] = {"wq", "wk", "wv"};
    const std::size_t widths[3] = {cfg.head_dim_q, cfg.head_dim_k, cfg.head_dim_v};

    for (const SharePair& p : plan.pairs) {
        const HeadSlices a = head_slices(weights, cfg, p.keep);
        const HeadSlices b = head_slices(weights, cfg, p.replace);
        const Matrix* keep_m[3] = {&a.wq, &a.wk, &a.wv};
        const Matrix* repl_m[3] = {&b.wq, &b.wk, &b.wv};

        for (int w = 0; w < 3; ++w) {
            const Matrix& ka = *keep_m[w];
            const Matrix& rb = *repl_m[w];
            double coeff;
            if (squared) {
                coeff = gamma * inv_n * 2.0;
            } else {
                const double norm = std::sqrt(frobenius_sq(ka, rb));
                if (norm < 1e-12) continue;  // subgradient guard at the kink
                coeff = gamma * inv_n / norm;
            }
            TensorEntry& gk = grads.at(attn_tensor_name(p.keep.layer, names[w]));
            TensorEntry& gr = grads.at(attn_tensor_name(p.replace.layer, names[w]));
            const std::size_t width = widths[w];
            const std::size_t fused_k = gk.shape[1];
            const std::size_t fused_r = gr.shape[1];
            const std::size_t ck = p.keep.head * width;
            const std::size_t cr = p.replace.head * width;
            for (std::size_t r = 0; r < cfg.embed_dim; ++r) {
                for (std::size_t c = 0; c < width; ++c) {
                    const double diff = ka(r, c) - rb(r, c);
                    gk.data[r * fused_k + ck + c] += coeff * diff;
                    gr.data[r * fused_r + cr + c] -= coeff * diff;
                }
            }
        }
    }
}

TrainState postshare_train(TrainState state, const ModelConfig& cfg, const SharePlan& plan,
                           const std::vector<TokenSequence>& corpus,
                           const PostShareConfig& pscfg, const TrainHooks& hooks) {
    validate_pscfg(pscfg);
    validate_plan(cfg, plan);
    if (plan.pairs.empty()) fail("EmptyPlan", "post-training needs a non-empty plan");
    if (corpus.empty()) fail("EmptyCorpus", "post-training needs a non-empty corpus");

    const double inv_batch = 1.0 / static_cast<double>(pscfg.batch_size);
    for (std::size_t s = 0; s < pscfg.steps; ++s) {
        // Batches cycle through the corpus sequentially from the step index.
        TensorStore grads = zeros_like(state.weights);
        double task = 0.0;
        for (std::size_t b = 0; b < pscfg.batch_size; ++b) {
            const TokenSequence& seq = corpus[(state.step * pscfg.batch_size + b) % corpus.size()];
            TokenSequence input, target;
            split_sequence(seq, input, target);
            task += cross_entropy(forward(state.weights, cfg, input), target);
            const TensorStore g = backward(state.weights, cfg, input, target);
            for (const auto& [name, ge] : g.entries()) {
                TensorEntry& dst = grads.at(name);
                for (std::size_t i = 0; i < dst.data.size(); ++i) dst.data[i] += ge.data[i];
            }
        }
        for (const auto& [name, e] : grads.entries()) {
            TensorEntry& dst = grads.at(name);
            for (double& v : dst.data) v *= inv_batch;
        }
        task *= inv_batch;

        const double reg = weight_similarity_loss(state.weights, cfg, plan, pscfg.squared_norm);
        const double total = task + pscfg.gamma * reg;
        if (!std::isfinite(total))
            fail("NonFiniteLoss", "loss diverged at step " + std::to_string(state.step + 1));
        if (hooks.on_step) hooks.on_step(state.step + 1, task, reg, total);

        if (pscfg.gamma != 0.0)
            add_weight_similarity_gradient(state.weights, cfg, plan, pscfg.gamma,
                                           pscfg.squared_norm, grads);

        // Adam with bias correction
        const std::size_t t = state.step + 1;
        const double c1 = 1.0 - std::pow(pscfg.beta1, static_cast<double>(t));
        const double c2 = 1.0 - std::pow(pscfg.beta2, static_cast<double>(t));
        for (const auto& [name, we] : state.weights.entries()) {
            TensorEntry& w = state.weights.at(name);
            TensorEntry& m = state.m.at(name);
            TensorEntry& v = state.v.at(name);
            const TensorEntry& g = grads.at(name);
            for (std::size_t i = 0; i < w.data.size(); ++i) {
                m.data[i] = pscfg.beta1 * m.data[i] + (1.0 - pscfg.beta1) * g.data[i];
                v.data[i] = pscfg.beta2 * v.data[i] + (1.0 - pscfg.beta2) * g.data[i] * g.data[i];
                w.data[i] -= pscfg.learning_rate * (m.data[i] / c1) /
                             (std::sqrt(v.data[i] / c2) + 1e-8);
            }
        }
        state.step = t;

        if (pscfg.checkpoint_every > 0 && t % pscfg.checkpoint_every == 0 && hooks.on_checkpoint)
            hooks.on_checkpoint(t, state);
    }
    return state;
}

}  // namespace headshare
