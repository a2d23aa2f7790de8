#pragma once

#include <cstddef>
#include <vector>

#include "headshare/config.hpp"
#include "headshare/engine.hpp"
#include "headshare/matrix.hpp"
#include "headshare/store.hpp"

namespace headshare {

struct HeadPair {
    HeadRef keep;
    HeadRef replace;
    double score = 0.0;
};

// Agreement between the top-k head pairs ranked by weight similarity (set A)
// and by attention-map similarity averaged over the inputs (set B).
struct DegreeReport {
    std::size_t k = 0;
    std::vector<HeadPair> set_weight;
    std::vector<HeadPair> set_attn;
    std::size_t intersection = 0;
    double overlap_ratio = 0.0;   // |A ∩ B| / k
    double paper_quotient = 0.0;  // |A ∩ B| / #inputs; can exceed 1
};

DegreeReport matched_degree(const TensorStore& store, const ModelConfig& cfg,
                            const std::vector<TokenSequence>& inputs, double alpha,
                            std::size_t threads = 1);

// L x L matrix of attention-map similarity between layers: mean over inputs
// and heads of the map cosine. Symmetric with unit diagonal.
Matrix layer_similarity_matrix(const TensorStore& store, const ModelConfig& cfg,
                               const std::vector<TokenSequence>& inputs,
                               std::size_t threads = 1);

}  // namespace headshare
