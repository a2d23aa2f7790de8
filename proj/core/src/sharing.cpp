#include "headshare/sharing.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <utility>

#include "json.hpp"

#include "headshare/error.hpp"
#include "headshare/parallel.hpp"

namespace headshare {

using nlohmann::json;

std::size_t top_n_count(double alpha, std::size_t total) {
    if (!(alpha >= 0.0 && alpha <= 1.0))
        fail("AlphaOutOfRange", "sharing ratio must be within [0, 1]");
    return static_cast<std::size_t>(std::llround(alpha * static_cast<double>(total)));
}

CandidateBuffer build_candidate_buffer(const TensorStore& store, const ModelConfig& cfg,
                                       MatchFunction f, std::size_t threads) {
    cfg.validate();
    if (cfg.num_layers < 2)
        fail("TooFewLayers", "candidate matching needs at least 2 layers");

    std::vector<HeadRef> searchers;
    searchers.reserve((cfg.num_layers - 1) * cfg.heads_per_layer);
    for (std::size_t l = 1; l < cfg.num_layers; ++l)
        for (std::size_t h = 0; h < cfg.heads_per_layer; ++h) searchers.push_back({l, h});

    CandidateBuffer buf;
    buf.match_function = f;
    buf.entries.resize(searchers.size());
    parallel_for(searchers.size(), threads, [&](std::size_t idx) {
        const HeadRef t = searchers[idx];
        bool first = true;
        HeadRef best{};
        double best_score = 0.0;
        // Scan earlier layers in lexicographic order; strict > keeps the
        // smallest (layer, head) on ties.
        for (std::size_t lj = 0; lj < t.layer; ++lj) {
            for (std::size_t hj = 0; hj < cfg.heads_per_layer; ++hj) {
                const double s = match_score(store, cfg, t, {lj, hj}, f).score;
                if (first || s > best_score) {
                    first = false;
                    best = {lj, hj};
                    best_score = s;
                }
            }
        }
        buf.entries[idx] = {t, best, best_score};
    });
    return buf;
}

std::vector<CandidateEntry> rank_candidates(const CandidateBuffer& buf) {
    std::vector<CandidateEntry> ranked = buf.entries;
    std::sort(ranked.begin(), ranked.end(), [](const CandidateEntry& a, const CandidateEntry& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.this_head < b.this_head;
    });
    return ranked;
}

SharePlan select_top_n(const CandidateBuffer& buf, const ModelConfig& cfg, double alpha) {
    const std::size_t want = top_n_count(alpha, cfg.total_heads());
    const std::vector<CandidateEntry> ranked = rank_candidates(buf);
    const std::size_t n = std::min(want, ranked.size());

    SharePlan plan;
    plan.ratio = alpha;
    plan.match_function = buf.match_function;
    plan.pairs.reserve(n);
    for (std::size_t i = 0; i < n; ++i)
        plan.pairs.push_back({ranked[i].best, ranked[i].this_head});
    return plan;
}

void validate_plan(const ModelConfig& cfg, const SharePlan& plan) {
    cfg.validate();
    std::set<HeadRef> replaced;
    for (const SharePair& p : plan.pairs) {
        if (p.keep.layer >= cfg.num_layers || p.keep.head >= cfg.heads_per_layer ||
            p.replace.layer >= cfg.num_layers || p.replace.head >= cfg.heads_per_layer)
            fail("PlanConfigMismatch", "pair references a head outside the config");
        if (p.keep.layer >= p.replace.layer)
            fail("PlanConfigMismatch", "keep must come from a strictly earlier layer");
        if (!replaced.insert(p.replace).second)
            fail("PlanConfigMismatch", "a head appears twice as replace");
    }
    std::set<std::size_t> ffn_replaced;
    for (const FfnSharePair& p : plan.ffn_layers) {
        if (p.keep >= cfg.num_layers || p.replace >= cfg.num_layers)
            fail("PlanConfigMismatch", "ffn pair references a layer outside the config");
        if (p.keep >= p.replace)
            fail("PlanConfigMismatch", "ffn keep must be a strictly earlier layer");
        if (!ffn_replaced.insert(p.replace).second)
            fail("PlanConfigMismatch", "a layer appears twice as ffn replace");
    }
}

TensorStore apply_share_plan(const TensorStore& store, const ModelConfig& cfg,
                             const SharePlan& plan) {
    validate_plan(cfg, plan);
    TensorStore out = store;

    // Ascending replace order; a keep that was itself overwritten propagates
    // its already-overwritten values down the chain.
    std::vector<SharePair> ordered = plan.pairs;
    std::sort(ordered.begin(), ordered.end(),
              [](const SharePair& a, const SharePair& b) { return a.replace < b.replace; });
    for (const SharePair& p : ordered) copy_head_slices(out, cfg, p.keep, p.replace);

    std::vector<FfnSharePair> ffn = plan.ffn_layers;
    std::sort(ffn.begin(), ffn.end(),
              [](const FfnSharePair& a, const FfnSharePair& b) { return a.replace < b.replace; });
    for (const FfnSharePair& p : ffn) {
        for (const char* which : {"gate", "up", "down"}) {
            const TensorEntry& src = out.at(ffn_tensor_name(p.keep, which));
            TensorEntry& dst = out.at(ffn_tensor_name(p.replace, which));
            if (dst.shape != src.shape)
                fail("PlanConfigMismatch", "ffn tensors differ in shape across tied layers");
            dst.data = src.data;
        }
    }
    return out;
}

namespace {

std::vector<double> flatten_ffn(const TensorStore& store, const ModelConfig& cfg,
                                std::size_t layer) {
    const TensorEntry& gate = store.at(ffn_tensor_name(layer, "gate"));
    const TensorEntry& up = store.at(ffn_tensor_name(layer, "up"));
    const TensorEntry& down = store.at(ffn_tensor_name(layer, "down"));
    const std::size_t d = cfg.embed_dim;
    const std::size_t f = cfg.ffn_dim;
    auto check = [&](const TensorEntry& e, std::size_t r, std::size_t c, const char* which) {
        if (e.shape.size() != 2 || e.shape[0] != r || e.shape[1] != c)
            fail("ShapeMismatch", std::string("ffn ") + which + ": unexpected shape");
    };
    check(gate, d, f, "gate");
    check(up, d, f, "up");
    check(down, f, d, "down");

    // gate || up || down^T, row-major over the D x 3F concatenation
    std::vector<double> out;
    out.reserve(3 * d * f);
    for (std::size_t r = 0; r < d; ++r) {
        out.insert(out.end(), gate.data.begin() + r * f, gate.data.begin() + (r + 1) * f);
        out.insert(out.end(), up.data.begin() + r * f, up.data.begin() + (r + 1) * f);
        for (std::size_t c = 0; c < f; ++c) out.push_back(down.data[c * d + r]);
    }
    return out;
}

}  // namespace

double ffn_match(const TensorStore& store, const ModelConfig& cfg,
                 std::size_t layer_i, std::size_t layer_j) {
    cfg.validate();
    if (layer_i >= cfg.num_layers || layer_j >= cfg.num_layers)
        fail("LayerOutOfRange", "ffn_match layer index outside the config");
    if (layer_i == layer_j) fail("SameLayer", "ffn_match requires two distinct layers");
    const std::vector<double> a = flatten_ffn(store, cfg, layer_i);
    const std::vector<double> b = flatten_ffn(store, cfg, layer_j);
    return cosine(a, b);
}

std::vector<FfnCandidateEntry> build_ffn_candidates(const TensorStore& store,
                                                    const ModelConfig& cfg) {
    cfg.validate();
    if (cfg.num_layers < 2) fail("TooFewLayers", "ffn matching needs at least 2 layers");
    std::vector<FfnCandidateEntry> out;
    out.reserve(cfg.num_layers - 1);
    for (std::size_t l = 1; l < cfg.num_layers; ++l) {
        FfnCandidateEntry e{l, 0, 0.0};
        bool first = true;
        for (std::size_t j = 0; j < l; ++j) {
            const double s = ffn_match(store, cfg, l, j);
            if (first || s > e.score) {
                first = false;
                e.best = j;
                e.score = s;
            }
        }
        out.push_back(e);
    }
    return out;
}

std::vector<FfnSharePair> select_ffn_layers(const std::vector<FfnCandidateEntry>& candidates,
                                            const ModelConfig& cfg, double alpha) {
    const std::size_t want = top_n_count(alpha, cfg.num_layers);
    std::vector<FfnCandidateEntry> ranked = candidates;
    std::sort(ranked.begin(), ranked.end(),
              [](const FfnCandidateEntry& a, const FfnCandidateEntry& b) {
                  if (a.score != b.score) return a.score > b.score;
                  return a.this_layer < b.this_layer;
              });
    const std::size_t n = std::min(want, ranked.size());
    std::vector<FfnSharePair> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back({ranked[i].best, ranked[i].this_layer});
    return out;
}

std::string plan_to_json(const SharePlan& plan) {
    json pairs = json::array();
    for (const SharePair& p : plan.pairs) {
        pairs.push_back({{"keep", {{"layer", p.keep.layer}, {"head", p.keep.head}}},
                         {"replace", {{"layer", p.replace.layer}, {"head", p.replace.head}}}});
    }
    json ffn = json::array();
    for (const FfnSharePair& p : plan.ffn_layers)
        ffn.push_back({{"keep", p.keep}, {"replace", p.replace}});
    const json j = {{"pairs", pairs},
                    {"ratio", plan.ratio},
                    {"match_function", match_function_name(plan.match_function)},
                    {"ffn_layers", ffn}};
    return j.dump(2) + "\n";
}

SharePlan plan_from_json(const std::string& text) {
    SharePlan plan;
    try {
        const json j = json::parse(text);
        plan.ratio = j.at("ratio").get<double>();
        plan.match_function = match_function_from_name(j.at("match_function").get<std::string>());
        for (const json& p : j.at("pairs")) {
            SharePair sp;
            sp.keep = {p.at("keep").at("layer").get<std::size_t>(),
                       p.at("keep").at("head").get<std::size_t>()};
            sp.replace = {p.at("replace").at("layer").get<std::size_t>(),
                          p.at("replace").at("head").get<std::size_t>()};
            plan.pairs.push_back(sp);
        }
        for (const json& p : j.at("ffn_layers"))
            plan.ffn_layers.push_back(
                {p.at("keep").get<std::size_t>(), p.at("replace").get<std::size_t>()});
    } catch (const json::exception& e) {
        fail("PlanParse", std::string("malformed share plan: ") + e.what());
    }
    return plan;
}

SharePlan synthetic_plan(const ModelConfig& cfg, std::size_t n_pairs, std::size_t n_ffn_layers) {
    cfg.validate();
    if (n_pairs > (cfg.num_layers - 1) * cfg.heads_per_layer)
        fail("PlanConfigMismatch", "more pairs than shareable heads");
    if (n_ffn_layers > cfg.num_layers - 1)
        fail("PlanConfigMismatch", "more ffn layers than shareable layers");

    SharePlan plan;
    plan.ratio = 0.0;
    std::size_t made = 0;
    for (std::size_t l = 1; l < cfg.num_layers && made < n_pairs; ++l) {
        for (std::size_t h = 0; h < cfg.heads_per_layer && made < n_pairs; ++h) {
            plan.pairs.push_back({{0, h}, {l, h}});
            ++made;
        }
    }
    for (std::size_t l = 1; l <= n_ffn_layers; ++l) plan.ffn_layers.push_back({0, l});
    return plan;
}

}  // namespace headshare
