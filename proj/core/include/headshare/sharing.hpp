#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "headshare/config.hpp"
#include "headshare/similarity.hpp"
#include "headshare/store.hpp"

namespace headshare {

struct CandidateEntry {
    HeadRef this_head;   // head looking for a match; layer >= 1
    HeadRef best;        // argmax-score head among all strictly earlier layers
    double score = 0.0;  // its matching score
};

// One entry per head of layers 1..L-1, ordered lexicographically by
// this_head. Heads of layer 0 never appear as this_head.
struct CandidateBuffer {
    std::vector<CandidateEntry> entries;
    MatchFunction match_function = MatchFunction::QKConcat;
};

struct SharePair {
    HeadRef keep;     // earlier layer; values stay
    HeadRef replace;  // later layer; slices get overwritten
    bool operator==(const SharePair&) const = default;
};

struct FfnSharePair {
    std::size_t keep = 0;
    std::size_t replace = 0;
    bool operator==(const FfnSharePair&) const = default;
};

// Selected tie set: pairs in descending selection-score order. keep.layer <
// replace.layer for every pair and no head appears twice as replace.
struct SharePlan {
    std::vector<SharePair> pairs;
    double ratio = 0.0;
    MatchFunction match_function = MatchFunction::QKConcat;
    std::vector<FfnSharePair> ffn_layers;
};

// round(alpha * total); AlphaOutOfRange unless 0 <= alpha <= 1.
std::size_t top_n_count(double alpha, std::size_t total);

CandidateBuffer build_candidate_buffer(const TensorStore& store, const ModelConfig& cfg,
                                       MatchFunction f, std::size_t threads = 1);

// Entries sorted by descending score, ties by ascending this_head.
std::vector<CandidateEntry> rank_candidates(const CandidateBuffer& buf);

// Top-N selection with N = round(alpha * L * H) clamped to the buffer size.
SharePlan select_top_n(const CandidateBuffer& buf, const ModelConfig& cfg, double alpha);

void validate_plan(const ModelConfig& cfg, const SharePlan& plan);  // PlanConfigMismatch

// Returns a new store with every pair's replace-slices overwritten by its
// keep-slices, processed in ascending replace order so chains propagate the
// earliest source. ffn_layers overwrite whole gate/up/down tensors the same way.
TensorStore apply_share_plan(const TensorStore& store, const ModelConfig& cfg,
                             const SharePlan& plan);

// Cosine of the flattened gate || up || down^T concatenations of two layers.
double ffn_match(const TensorStore& store, const ModelConfig& cfg,
                 std::size_t layer_i, std::size_t layer_j);

struct FfnCandidateEntry {
    std::size_t this_layer = 0;
    std::size_t best = 0;
    double score = 0.0;
};

std::vector<FfnCandidateEntry> build_ffn_candidates(const TensorStore& store,
                                                    const ModelConfig& cfg);

// Top-K whole-layer FFN selection with K = round(alpha * L) clamped.
std::vector<FfnSharePair> select_ffn_layers(const std::vector<FfnCandidateEntry>& candidates,
                                            const ModelConfig& cfg, double alpha);

std::string plan_to_json(const SharePlan& plan);
SharePlan plan_from_json(const std::string& text);

// Valid plan wiring with the given pair/layer counts; for analytic reports
// where only the counts matter.
SharePlan synthetic_plan(const ModelConfig& cfg, std::size_t n_pairs, std::size_t n_ffn_layers);

}  // namespace headshare
