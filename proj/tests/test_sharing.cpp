#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <vector>

#include "headshare/sharing.hpp"
#include "headshare/toy.hpp"

#include "helpers.hpp"

using namespace headshare;
using helpers::error_code_of;

namespace {

bool slices_equal(const HeadSlices& a, const HeadSlices& b) {
    return a.wq == b.wq && a.wk == b.wk && a.wv == b.wv && a.wo == b.wo;
}

// Exhaustive double-loop argmax over earlier layers, independent of
// build_candidate_buffer.
std::vector<CandidateEntry> oracle_buffer(const TensorStore& store, const ModelConfig& cfg,
                                          MatchFunction f) {
    std::vector<CandidateEntry> out;
    for (std::size_t l = 1; l < cfg.num_layers; ++l) {
        for (std::size_t h = 0; h < cfg.heads_per_layer; ++h) {
            CandidateEntry e{{l, h}, {0, 0}, -2.0};
            bool first = true;
            for (std::size_t lj = 0; lj < l; ++lj)
                for (std::size_t hj = 0; hj < cfg.heads_per_layer; ++hj) {
                    const double s = match_score(store, cfg, {l, h}, {lj, hj}, f).score;
                    if (first || s > e.score) {
                        first = false;
                        e.best = {lj, hj};
                        e.score = s;
                    }
                }
            out.push_back(e);
        }
    }
    return out;
}

}  // namespace

TEST_SUITE("sharing") {

TEST_CASE("planted duplicate wins its candidate slot with score 1") {
    const ModelConfig cfg = helpers::small_config(2, 2);
    TensorStore store = make_toy_store(cfg, 31);
    plant_duplicate_head(store, cfg, {0, 1}, {1, 0});

    const CandidateBuffer buf = build_candidate_buffer(store, cfg, MatchFunction::QKConcat);
    REQUIRE(buf.entries.size() == 2);
    const CandidateEntry& e = buf.entries[0];
    CHECK(e.this_head == HeadRef{1, 0});
    CHECK(e.best == HeadRef{0, 1});
    CHECK(e.score == 1.0);
}

TEST_CASE("single-layer models cannot match") {
    const ModelConfig cfg = helpers::small_config(1, 2);
    const TensorStore store = make_toy_store(cfg, 1);
    CHECK(error_code_of([&] {
              build_candidate_buffer(store, cfg, MatchFunction::QKConcat);
          }) == "TooFewLayers");
}

TEST_CASE("buffer equals the exhaustive argmax oracle") {
    const ModelConfig cfg = helpers::small_config(3, 2);
    const TensorStore store = make_toy_store(cfg, 37);
    const CandidateBuffer buf = build_candidate_buffer(store, cfg, MatchFunction::QKConcat);
    const std::vector<CandidateEntry> expect = oracle_buffer(store, cfg,
                                                             MatchFunction::QKConcat);
    REQUIRE(buf.entries.size() == expect.size());
    for (std::size_t i = 0; i < expect.size(); ++i) {
        CHECK(buf.entries[i].this_head == expect[i].this_head);
        CHECK(buf.entries[i].best == expect[i].best);
        CHECK(buf.entries[i].score == expect[i].score);
    }
}

TEST_CASE("buffer is identical across thread counts") {
    const ModelConfig cfg = helpers::small_config(4, 2);
    const TensorStore store = make_toy_store(cfg, 41);
    const CandidateBuffer one = build_candidate_buffer(store, cfg, MatchFunction::QKConcat, 1);
    const CandidateBuffer many = build_candidate_buffer(store, cfg, MatchFunction::QKConcat, 8);
    REQUIRE(one.entries.size() == many.entries.size());
    for (std::size_t i = 0; i < one.entries.size(); ++i) {
        CHECK(one.entries[i].this_head == many.entries[i].this_head);
        CHECK(one.entries[i].best == many.entries[i].best);
        CHECK(one.entries[i].score == many.entries[i].score);
    }
}

TEST_CASE("top-n selection") {
    const ModelConfig cfg = helpers::small_config(2, 2);

    CandidateBuffer buf;
    buf.entries = {{{1, 0}, {0, 0}, 0.9}, {{1, 1}, {0, 1}, 0.8}, {{1, 2}, {0, 0}, 0.95}};
    ModelConfig wide = cfg;
    wide.heads_per_layer = 3;
    wide.embed_dim = 9;

    SUBCASE("zero ratio gives an empty plan") {
        const SharePlan plan = select_top_n(buf, wide, 0.0);
        CHECK(plan.pairs.empty());
    }
    SUBCASE("selection is by descending score") {
        // round(n/(L*H) * L*H) = 2 when alpha = 2/6
        const SharePlan plan = select_top_n(buf, wide, 2.0 / 6.0);
        REQUIRE(plan.pairs.size() == 2);
        CHECK(plan.pairs[0].replace == HeadRef{1, 2});
        CHECK(plan.pairs[0].keep == HeadRef{0, 0});
        CHECK(plan.pairs[1].replace == HeadRef{1, 0});
        CHECK(plan.pairs[1].keep == HeadRef{0, 0});
    }
    SUBCASE("full ratio clamps to the buffer size") {
        const SharePlan plan = select_top_n(buf, wide, 1.0);  // round(6) = 6 -> clamp 3
        CHECK(plan.pairs.size() == 3);
    }
    SUBCASE("out-of-range ratios are rejected") {
        CHECK(error_code_of([&] { select_top_n(buf, wide, 1.5); }) == "AlphaOutOfRange");
        CHECK(error_code_of([&] { select_top_n(buf, wide, -0.1); }) == "AlphaOutOfRange");
    }
}

TEST_CASE("empty plan application is the identity") {
    const ModelConfig cfg = helpers::small_config(2, 2);
    const TensorStore store = make_toy_store(cfg, 43);
    const TensorStore out = apply_share_plan(store, cfg, SharePlan{});
    CHECK(save_bytes(out) == save_bytes(store));
}

TEST_CASE("a single pair copies the keep slices onto replace") {
    const ModelConfig cfg = helpers::small_config(3, 2);
    const TensorStore store = make_toy_store(cfg, 47);
    SharePlan plan;
    plan.pairs = {{{0, 0}, {1, 1}}};
    const TensorStore out = apply_share_plan(store, cfg, plan);
    CHECK(slices_equal(head_slices(out, cfg, {1, 1}), head_slices(out, cfg, {0, 0})));
    CHECK(slices_equal(head_slices(out, cfg, {0, 0}), head_slices(store, cfg, {0, 0})));
}

TEST_CASE("chains resolve to the earliest source") {
    const ModelConfig cfg = helpers::small_config(4, 2);
    const TensorStore store = make_toy_store(cfg, 53);
    SharePlan plan;
    plan.pairs = {{{1, 0}, {2, 1}}, {{0, 0}, {1, 0}}, {{2, 1}, {3, 0}}};
    const TensorStore out = apply_share_plan(store, cfg, plan);
    const HeadSlices root = head_slices(store, cfg, {0, 0});
    CHECK(slices_equal(head_slices(out, cfg, {1, 0}), root));
    CHECK(slices_equal(head_slices(out, cfg, {2, 1}), root));
    CHECK(slices_equal(head_slices(out, cfg, {3, 0}), root));
}

TEST_CASE("application is idempotent") {
    const ModelConfig cfg = helpers::small_config(3, 2);
    const TensorStore store = make_toy_store(cfg, 59);
    const SharePlan plan =
        select_top_n(build_candidate_buffer(store, cfg, MatchFunction::QKConcat), cfg, 0.5);
    const TensorStore once = apply_share_plan(store, cfg, plan);
    const TensorStore twice = apply_share_plan(once, cfg, plan);
    CHECK(once == twice);
}

TEST_CASE("tied pairs score 1 under every variant afterwards") {
    const ModelConfig cfg = helpers::small_config(3, 2);
    const TensorStore store = make_toy_store(cfg, 61);
    const SharePlan plan =
        select_top_n(build_candidate_buffer(store, cfg, MatchFunction::QKConcat), cfg, 0.5);
    REQUIRE(!plan.pairs.empty());
    const TensorStore out = apply_share_plan(store, cfg, plan);
    for (const SharePair& p : plan.pairs)
        for (MatchFunction f :
             {MatchFunction::QOnly, MatchFunction::KOnly, MatchFunction::VOnly,
              MatchFunction::QKVSeparate, MatchFunction::QKVConcat, MatchFunction::QKConcat})
            CHECK(match_score(out, cfg, p.keep, p.replace, f).score == 1.0);
}

TEST_CASE("top-n plans nest as the ratio grows") {
    const ModelConfig cfg = helpers::small_config(4, 2);
    const TensorStore store = make_toy_store(cfg, 67);
    const CandidateBuffer buf = build_candidate_buffer(store, cfg, MatchFunction::QKConcat);

    SharePlan prev = select_top_n(buf, cfg, 0.0);
    for (double alpha : {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9}) {
        const SharePlan next = select_top_n(buf, cfg, alpha);
        REQUIRE(prev.pairs.size() <= next.pairs.size());
        for (std::size_t i = 0; i < prev.pairs.size(); ++i)
            CHECK(prev.pairs[i] == next.pairs[i]);
        prev = next;
    }
}

TEST_CASE("layer-0 heads are never replaced and plans are deterministic") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const ModelConfig cfg = helpers::small_config(3, 2);
        const TensorStore store = make_toy_store(cfg, seed);
        const CandidateBuffer buf = build_candidate_buffer(store, cfg, MatchFunction::QKConcat);
        const SharePlan a = select_top_n(buf, cfg, 0.7);
        const SharePlan b = select_top_n(buf, cfg, 0.7);
        REQUIRE(a.pairs.size() == b.pairs.size());
        for (std::size_t i = 0; i < a.pairs.size(); ++i) {
            CHECK(a.pairs[i] == b.pairs[i]);
            CHECK(a.pairs[i].replace.layer >= 1);
            CHECK(a.pairs[i].keep.layer < a.pairs[i].replace.layer);
        }
        CHECK(apply_share_plan(store, cfg, a) == apply_share_plan(store, cfg, b));
    }
}

TEST_CASE("plan validation rejects bad wiring") {
    const ModelConfig cfg = helpers::small_config(3, 2);
    SharePlan backwards;
    backwards.pairs = {{{2, 0}, {1, 0}}};
    CHECK(error_code_of([&] { validate_plan(cfg, backwards); }) == "PlanConfigMismatch");

    SharePlan duplicate;
    duplicate.pairs = {{{0, 0}, {1, 0}}, {{0, 1}, {1, 0}}};
    CHECK(error_code_of([&] { validate_plan(cfg, duplicate); }) == "PlanConfigMismatch");

    SharePlan oob;
    oob.pairs = {{{0, 0}, {5, 0}}};
    CHECK(error_code_of([&] { validate_plan(cfg, oob); }) == "PlanConfigMismatch");
}

TEST_CASE("ffn match function") {
    const ModelConfig cfg = helpers::small_config(3, 2);
    TensorStore store = make_toy_store(cfg, 71);

    SUBCASE("identical layers score exactly 1") {
        for (const char* w : {"gate", "up", "down"})
            store.at(ffn_tensor_name(2, w)).data = store.at(ffn_tensor_name(0, w)).data;
        CHECK(ffn_match(store, cfg, 2, 0) == 1.0);
    }
    SUBCASE("elementwise scaling keeps the score at 1") {
        for (const char* w : {"gate", "up", "down"})
            for (double& v : store.at(ffn_tensor_name(2, w)).data) v = 0.0;
        for (const char* w : {"gate", "up", "down"}) {
            const auto& src = store.at(ffn_tensor_name(0, w)).data;
            auto& dst = store.at(ffn_tensor_name(2, w)).data;
            for (std::size_t i = 0; i < src.size(); ++i) dst[i] = 3.0 * src[i];
        }
        CHECK(std::abs(ffn_match(store, cfg, 2, 0) - 1.0) <= 1e-12);
    }
    SUBCASE("matches a brute-force oracle on random layers") {
        auto flat = [&](std::size_t layer) {
            const auto& gate = store.at(ffn_tensor_name(layer, "gate")).data;
            const auto& up = store.at(ffn_tensor_name(layer, "up")).data;
            const auto& down = store.at(ffn_tensor_name(layer, "down")).data;
            std::vector<double> out;
            for (std::size_t r = 0; r < cfg.embed_dim; ++r) {
                for (std::size_t c = 0; c < cfg.ffn_dim; ++c) out.push_back(gate[r * cfg.ffn_dim + c]);
                for (std::size_t c = 0; c < cfg.ffn_dim; ++c) out.push_back(up[r * cfg.ffn_dim + c]);
                for (std::size_t c = 0; c < cfg.ffn_dim; ++c) out.push_back(down[c * cfg.embed_dim + r]);
            }
            return out;
        };
        const auto a = flat(1);
        const auto b = flat(0);
        double dot = 0, na = 0, nb = 0;
        for (std::size_t i = 0; i < a.size(); ++i) {
            dot += a[i] * b[i];
            na += a[i] * a[i];
            nb += b[i] * b[i];
        }
        CHECK(ffn_match(store, cfg, 1, 0) == dot / (std::sqrt(na) * std::sqrt(nb)));
    }
    SUBCASE("same or invalid layers are rejected") {
        CHECK(error_code_of([&] { ffn_match(store, cfg, 1, 1); }) == "SameLayer");
        CHECK(error_code_of([&] { ffn_match(store, cfg, 1, 9); }) == "LayerOutOfRange");
    }
}

TEST_CASE("ffn candidates pick the planted twin and select by count") {
    const ModelConfig cfg = helpers::small_config(4, 2);
    TensorStore store = make_toy_store(cfg, 73);
    for (const char* w : {"gate", "up", "down"})
        store.at(ffn_tensor_name(3, w)).data = store.at(ffn_tensor_name(1, w)).data;

    const auto candidates = build_ffn_candidates(store, cfg);
    REQUIRE(candidates.size() == 3);
    CHECK(candidates[2].this_layer == 3);
    CHECK(candidates[2].best == 1);
    CHECK(candidates[2].score == 1.0);

    // round(0.3 * 4) = 1
    const auto selected = select_ffn_layers(candidates, cfg, 0.3);
    REQUIRE(selected.size() == 1);
    CHECK(selected[0].replace == 3);
    CHECK(selected[0].keep == 1);
}

TEST_CASE("applying ffn pairs copies whole layers with chain semantics") {
    const ModelConfig cfg = helpers::small_config(3, 2);
    const TensorStore store = make_toy_store(cfg, 79);
    SharePlan plan;
    plan.ffn_layers = {{1, 2}, {0, 1}};
    const TensorStore out = apply_share_plan(store, cfg, plan);
    for (const char* w : {"gate", "up", "down"}) {
        CHECK(out.at(ffn_tensor_name(1, w)).data == store.at(ffn_tensor_name(0, w)).data);
        CHECK(out.at(ffn_tensor_name(2, w)).data == store.at(ffn_tensor_name(0, w)).data);
    }
}

TEST_CASE("plans serialize to JSON and back") {
    SharePlan plan;
    plan.ratio = 0.3;
    plan.match_function = MatchFunction::QKVConcat;
    plan.pairs = {{{0, 1}, {2, 0}}, {{1, 0}, {2, 1}}};
    plan.ffn_layers = {{0, 2}};

    const SharePlan back = plan_from_json(plan_to_json(plan));
    CHECK(back.ratio == plan.ratio);
    CHECK(back.match_function == plan.match_function);
    CHECK(back.pairs == plan.pairs);
    CHECK(back.ffn_layers == plan.ffn_layers);

    CHECK(error_code_of([] { plan_from_json("{not json"); }) == "PlanParse");
}

TEST_CASE("synthetic plans validate and carry the requested counts") {
    const ModelConfig cfg = helpers::small_config(4, 3);
    const SharePlan plan = synthetic_plan(cfg, 7, 2);
    CHECK(plan.pairs.size() == 7);
    CHECK(plan.ffn_layers.size() == 2);
    validate_plan(cfg, plan);
    CHECK(error_code_of([&] { synthetic_plan(cfg, 100, 0); }) == "PlanConfigMismatch");
}

}  // TEST_SUITE
