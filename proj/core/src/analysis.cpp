#include "headshare/analysis.hpp"

#include <algorithm>
#include <set>
#include <utility>
#include <vector>

#include "headshare/error.hpp"
#include "headshare/parallel.hpp"
#include "headshare/sharing.hpp"
#include "headshare/similarity.hpp"

namespace headshare {

namespace {

std::vector<ForwardTrace> trace_inputs(const TensorStore& store, const ModelConfig& cfg,
                                       const std::vector<TokenSequence>& inputs,
                                       std::size_t threads) {
    std::vector<ForwardTrace> traces(inputs.size());
    parallel_for(inputs.size(), threads,
                 [&](std::size_t i) { traces[i] = forward(store, cfg, inputs[i]); });
    return traces;
}

// Mean over inputs of the map cosine between two heads.
double mean_map_similarity(const std::vector<ForwardTrace>& traces, const ModelConfig& cfg,
                           HeadRef a, HeadRef b) {
    double acc = 0.0;
    for (const ForwardTrace& t : traces)
        acc += attention_map_similarity(t.map(a.layer, a.head, cfg), t.map(b.layer, b.head, cfg));
    return acc / static_cast<double>(traces.size());
}

// Same matching loop as the weight-side candidate search, ranking by
// attention-map similarity instead.
std::vector<CandidateEntry> attn_candidates(const std::vector<ForwardTrace>& traces,
                                            const ModelConfig& cfg, std::size_t threads) {
    std::vector<HeadRef> searchers;
    for (std::size_t l = 1; l < cfg.num_layers; ++l)
        for (std::size_t h = 0; h < cfg.heads_per_layer; ++h) searchers.push_back({l, h});

    std::vector<CandidateEntry> entries(searchers.size());
    parallel_for(searchers.size(), threads, [&](std::size_t idx) {
        const HeadRef t = searchers[idx];
        bool first = true;
        HeadRef best{};
        double best_score = 0.0;
        for (std::size_t lj = 0; lj < t.layer; ++lj) {
            for (std::size_t hj = 0; hj < cfg.heads_per_layer; ++hj) {
                const double s = mean_map_similarity(traces, cfg, t, {lj, hj});
                if (first || s > best_score) {
                    first = false;
                    best = {lj, hj};
                    best_score = s;
                }
            }
        }
        entries[idx] = {t, best, best_score};
    });
    return entries;
}

std::vector<HeadPair> top_k_pairs(std::vector<CandidateEntry> entries, std::size_t k) {
    std::sort(entries.begin(), entries.end(), [](const CandidateEntry& a, const CandidateEntry& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.this_head < b.this_head;
    });
    const std::size_t n = std::min(k, entries.size());
    std::vector<HeadPair> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i)
        out.push_back({entries[i].best, entries[i].this_head, entries[i].score});
    return out;
}

}  // namespace

DegreeReport matched_degree(const TensorStore& store, const ModelConfig& cfg,
                            const std::vector<TokenSequence>& inputs, double alpha,
                            std::size_t threads) {
    cfg.validate();
    if (cfg.num_layers < 2) fail("TooFewLayers", "degree analysis needs at least 2 layers");
    if (inputs.empty()) fail("EmptyCorpus", "degree analysis needs at least one input");
    const std::size_t k = top_n_count(alpha, cfg.total_heads());
    if (k < 1) fail("AlphaOutOfRange", "ratio yields an empty top-k");

    DegreeReport report;
    report.k = k;

    const CandidateBuffer weight_buf = build_candidate_buffer(store, cfg,
                                                              MatchFunction::QKConcat, threads);
    std::vector<CandidateEntry> weight_entries = weight_buf.entries;
    report.set_weight = top_k_pairs(std::move(weight_entries), k);

    const std::vector<ForwardTrace> traces = trace_inputs(store, cfg, inputs, threads);
    report.set_attn = top_k_pairs(attn_candidates(traces, cfg, threads), k);

    std::set<std::pair<HeadRef, HeadRef>> weight_set;
    for (const HeadPair& p : report.set_weight) weight_set.insert({p.keep, p.replace});
    for (const HeadPair& p : report.set_attn)
        if (weight_set.count({p.keep, p.replace})) ++report.intersection;

    report.overlap_ratio =
        static_cast<double>(report.intersection) / static_cast<double>(k);
    report.paper_quotient =
        static_cast<double>(report.intersection) / static_cast<double>(inputs.size());
    return report;
}

Matrix layer_similarity_matrix(const TensorStore& store, const ModelConfig& cfg,
                               const std::vector<TokenSequence>& inputs,
                               std::size_t threads) {
    cfg.validate();
    if (inputs.empty()) fail("EmptyCorpus", "layer similarity needs at least one input");
    const std::vector<ForwardTrace> traces = trace_inputs(store, cfg, inputs, threads);

    const std::size_t n_layers = cfg.num_layers;
    Matrix sim(n_layers, n_layers);
    const double denom = static_cast<double>(traces.size() * cfg.heads_per_layer);
    for (std::size_t p = 0; p < n_layers; ++p) {
        for (std::size_t q = p; q < n_layers; ++q) {
            double acc = 0.0;
            for (const ForwardTrace& t : traces)
                for (std::size_t h = 0; h < cfg.heads_per_layer; ++h)
                    acc += attention_map_similarity(t.map(p, h, cfg), t.map(q, h, cfg));
            sim(p, q) = acc / denom;
            sim(q, p) = sim(p, q);
        }
    }
    return sim;
}

}  // namespace headshare
