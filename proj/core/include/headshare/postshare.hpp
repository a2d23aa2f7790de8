#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "headshare/config.hpp"
#include "headshare/engine.hpp"
#include "headshare/sharing.hpp"
#include "headshare/store.hpp"

namespace headshare {

struct PostShareConfig {
    double gamma = 0.5;           // regularizer strength
    double learning_rate = 5e-5;
    double beta1 = 0.9;
    double beta2 = 0.95;
    std::size_t steps = 1;
    std::size_t checkpoint_every = 0;  // 0 = never
    std::size_t batch_size = 1;
    bool squared_norm = false;  // ablation: squared Frobenius terms in the regularizer
};

struct TrainState {
    TensorStore weights;
    TensorStore m;  // Adam first moments, shape-matched to weights
    TensorStore v;  // Adam second moments
    std::size_t step = 0;
};

TrainState init_train_state(TensorStore weights);

// (1/|N|) * sum over pairs of sum over {q,k,v} of the Frobenius norm of the
// difference of the two heads' matrices (norms squared when `squared`). wo is
// not part of the loss even though tying copies it.
double weight_similarity_loss(const TensorStore& store, const ModelConfig& cfg,
                              const SharePlan& plan, bool squared = false);

struct LossBreakdown {
    double total = 0.0;
    double task = 0.0;
    double reg = 0.0;
};

// total = task + gamma * reg with task = mean next-token cross-entropy over
// the batch (each sequence split as input ids[0..n-2], targets ids[1..n-1]).
LossBreakdown combined_loss(const TensorStore& store, const ModelConfig& cfg,
                            const SharePlan& plan, const std::vector<TokenSequence>& batch,
                            double gamma, bool squared = false);

// Adds gamma * d(weight_similarity_loss)/dW into grads. For the unsquared
// norm the per-matrix gradient is (W_i - W_j)/||W_i - W_j||, zero whenever
// the norm falls below 1e-12.
void add_weight_similarity_gradient(const TensorStore& weights, const ModelConfig& cfg,
                                    const SharePlan& plan, double gamma, bool squared,
                                    TensorStore& grads);

struct TrainHooks {
    std::function<void(std::size_t step, double task, double reg, double total)> on_step;
    std::function<void(std::size_t step, const TrainState& state)> on_checkpoint;
};

// Runs `steps` Adam updates on the combined loss. Batches cycle through the
// corpus sequentially from the current step index; per-sequence gradients are
// accumulated in batch order and scaled by 1/batch_size, so a fixed corpus
// and config give a bit-identical trajectory. Throws NonFiniteLoss (with the
// step index) if the loss stops being finite.
TrainState postshare_train(TrainState state, const ModelConfig& cfg, const SharePlan& plan,
                           const std::vector<TokenSequence>& corpus,
                           const PostShareConfig& pscfg, const TrainHooks& hooks = {});

}  // namespace headshare
