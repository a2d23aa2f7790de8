#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <utility>

#include "headshare/config.hpp"
#include "headshare/matrix.hpp"
#include "headshare/store.hpp"

namespace headshare {

// Head-pair match functions. QKConcat (cosine over the q||k concatenation) is
// the production default; the other five exist for ablation-style analysis.
// QKVSeparate produces three component scores; its scalar score is their mean.
enum class MatchFunction { QOnly, KOnly, VOnly, QKVSeparate, QKVConcat, QKConcat };

const char* match_function_name(MatchFunction f);                 // "q" ... "qk"
MatchFunction match_function_from_name(const std::string& name);  // UsageError

struct MatchScore {
    std::pair<HeadRef, HeadRef> pair;
    double score = 0.0;
    // q/k/v component scores; present for QKVSeparate only
    std::optional<std::array<double, 3>> per_matrix;
};

// Cosine similarity with f64 accumulation. Bitwise-identical inputs score
// exactly 1.0; tied heads rely on that.
double cosine(std::span<const double> u, std::span<const double> v);

// Cosine of the row-major flattenings of two equally-shaped maps.
double attention_map_similarity(const Matrix& a, const Matrix& b);

MatchScore match_score(const TensorStore& store, const ModelConfig& cfg,
                       HeadRef i, HeadRef j, MatchFunction f);

}  // namespace headshare
