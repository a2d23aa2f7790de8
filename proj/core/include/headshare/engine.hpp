#pragma once

#include <cstddef>
#include <vector>

#include "headshare/config.hpp"
#include "headshare/matrix.hpp"
#include "headshare/store.hpp"

namespace headshare {

struct TokenSequence {
    std::vector<std::size_t> ids;
};

// Everything the forward pass exposes: logits plus the per-head causal
// attention maps (L x L, rows summing to 1 over the prefix) and the residual
// stream entering each attention block (needed to replay a single head's
// score computation in isolation).
struct ForwardTrace {
    Matrix logits;                       // L x vocab
    std::vector<Matrix> attention_maps;  // [layer * H + head]
    std::vector<Matrix> layer_inputs;    // [layer], each L x D

    const Matrix& map(std::size_t layer, std::size_t head, const ModelConfig& cfg) const;
};

// Row-softmaxed causal attention map for one head: softmax over
// x*wq * (x*wk)^T / sqrt(d_k), masked entries exactly zero.
Matrix head_attention_map(const Matrix& x, const Matrix& wq, const Matrix& wk);

// Minimal decoder-only forward pass: embed, then per layer attention +
// residual and a gated FFN (silu(x*gate) .* (x*up)) * down + residual, then
// the output head. No normalization, no positional encoding; f64 throughout.
ForwardTrace forward(const TensorStore& store, const ModelConfig& cfg,
                     const TokenSequence& x);

// Mean over positions of -log softmax(logits)[target].
double cross_entropy(const ForwardTrace& trace, const TokenSequence& targets);

// Gradient of cross_entropy(forward(store, x), targets) with respect to every
// weight tensor; same names and shapes as the input store.
TensorStore backward(const TensorStore& store, const ModelConfig& cfg,
                     const TokenSequence& x, const TokenSequence& targets);

}  // namespace headshare
