#include "doctest.h"

#include <cstring>
#include <filesystem>

#include "json.hpp"

#include "headshare/rng.hpp"
#include "headshare/store.hpp"
#include "headshare/toy.hpp"

#include "helpers.hpp"

using namespace headshare;
using helpers::error_code_of;

namespace {

TensorEntry f32_entry(std::vector<std::size_t> shape, std::vector<double> data) {
    TensorEntry e;
    e.dtype = Dtype::F32;
    e.shape = std::move(shape);
    e.data = std::move(data);
    return e;
}

// Test-local writer for the container layout: magic, u64 LE header length,
// JSON header, raw payload. Independent of save_bytes.
std::vector<std::uint8_t> raw_hws(const std::string& header,
                                  const std::vector<std::uint8_t>& payload) {
    std::vector<std::uint8_t> bytes = {'H', 'W', 'S', '1'};
    const std::uint64_t n = header.size();
    for (int i = 0; i < 8; ++i) bytes.push_back(static_cast<std::uint8_t>(n >> (8 * i)));
    bytes.insert(bytes.end(), header.begin(), header.end());
    bytes.insert(bytes.end(), payload.begin(), payload.end());
    return bytes;
}

std::vector<std::uint8_t> f32_payload(const std::vector<float>& values) {
    std::vector<std::uint8_t> out;
    for (float f : values) {
        std::uint32_t bits;
        std::memcpy(&bits, &f, 4);
        for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
    }
    return out;
}

}  // namespace

TEST_SUITE("store") {

TEST_CASE("single-tensor container round-trips byte-identically") {
    TensorStore store;
    store.put("embed.tok", f32_entry({2, 2}, {1.0, 0.0, 0.0, 1.0}));

    const auto bytes = save_bytes(store);
    const TensorStore loaded = load_bytes(bytes);
    CHECK(loaded.at("embed.tok").shape == std::vector<std::size_t>{2, 2});
    CHECK(loaded.at("embed.tok").data == std::vector<double>{1.0, 0.0, 0.0, 1.0});
    CHECK(loaded.at("embed.tok").dtype == Dtype::F32);

    CHECK(save_bytes(loaded) == bytes);
}

TEST_CASE("hand-assembled container parses through the documented layout") {
    const nlohmann::json header = {
        {"format", {{"version", 1}, {"head_layout", "contiguous"}}},
        {"tensors",
         {{"embed.tok",
           {{"dtype", "f32"}, {"shape", {2, 2}}, {"offset", 0}, {"nbytes", 16}}}}}};
    const auto bytes = raw_hws(header.dump(), f32_payload({1.f, 2.f, 3.f, 4.f}));
    const TensorStore loaded = load_bytes(bytes);
    CHECK(loaded.at("embed.tok").data == std::vector<double>{1.0, 2.0, 3.0, 4.0});
}

TEST_CASE("truncated payload is rejected") {
    TensorStore store;
    store.put("embed.tok", f32_entry({2, 2}, {1.0, 0.0, 0.0, 1.0}));
    auto bytes = save_bytes(store);
    bytes.resize(bytes.size() - 4);  // drop one f32, leaving 3 payload values
    CHECK(error_code_of([&] { load_bytes(bytes); }) == "TruncatedData");
}

TEST_CASE("wrong magic is rejected") {
    std::vector<std::uint8_t> junk = {'n', 'o', 'p', 'e', 0, 0, 0, 0, 0, 0, 0, 0};
    CHECK(error_code_of([&] { load_bytes(junk); }) == "MagicMismatch");
}

TEST_CASE("header byte size inconsistent with shape is rejected") {
    const nlohmann::json header = {
        {"format", {{"version", 1}, {"head_layout", "contiguous"}}},
        {"tensors",
         {{"embed.tok",
           {{"dtype", "f32"}, {"shape", {2, 2}}, {"offset", 0}, {"nbytes", 12}}}}}};
    const auto bytes = raw_hws(header.dump(), f32_payload({1.f, 2.f, 3.f}));
    CHECK(error_code_of([&] { load_bytes(bytes); }) == "ShapeMismatch");
}

TEST_CASE("unknown tensor names are rejected unless allow_extra") {
    TensorStore store;
    TensorEntry e;
    e.shape = {2};
    e.data = {1.0, 2.0};
    store.put("mystery.blob", e);
    const auto bytes = save_bytes(store);
    CHECK(error_code_of([&] { load_bytes(bytes); }) == "UnknownTensor");
    const TensorStore loaded = load_bytes(bytes, /*allow_extra=*/true);
    CHECK(loaded.at("mystery.blob").data == std::vector<double>{1.0, 2.0});
}

TEST_CASE("file round trip preserves bytes and config") {
    const ModelConfig cfg = helpers::small_config();
    const TensorStore store = make_toy_store(cfg, 3);
    const auto dir = helpers::scratch_dir("store_roundtrip");
    const std::string path = (dir / "model.hws").string();
    save_store(store, path);

    const TensorStore loaded = load_store(path);
    REQUIRE(loaded.config().has_value());
    CHECK(*loaded.config() == cfg);
    CHECK(loaded == store);

    const std::string path2 = (dir / "model2.hws").string();
    save_store(loaded, path2);
    CHECK(helpers::read_file_bytes(path) == helpers::read_file_bytes(path2));
}

TEST_CASE("generated toy checkpoint slices to the configured shapes") {
    const ModelConfig cfg = helpers::small_config(2, 2);
    const TensorStore store = make_toy_store(cfg, 5);
    const HeadSlices s = head_slices(store, cfg, {1, 1});
    CHECK(s.wq.rows == cfg.embed_dim);
    CHECK(s.wq.cols == cfg.head_dim_q);
    CHECK(s.wk.cols == cfg.head_dim_k);
    CHECK(s.wv.cols == cfg.head_dim_v);
    CHECK(s.wo.rows == cfg.head_dim_v);
    CHECK(s.wo.cols == cfg.embed_dim);
}

TEST_CASE("column-blocked identity slices out the left block") {
    ModelConfig cfg;
    cfg.num_layers = 1;
    cfg.heads_per_layer = 2;
    cfg.embed_dim = 4;
    cfg.head_dim_q = 2;
    cfg.head_dim_k = 2;
    cfg.head_dim_v = 2;
    cfg.ffn_dim = 1;
    cfg.vocab_size = 1;

    TensorEntry eye;
    eye.shape = {4, 4};
    eye.data.assign(16, 0.0);
    for (int i = 0; i < 4; ++i) eye.data[i * 4 + i] = 1.0;

    TensorStore store;
    store.put(attn_tensor_name(0, "wq"), eye);
    store.put(attn_tensor_name(0, "wk"), eye);
    store.put(attn_tensor_name(0, "wv"), eye);
    store.put(attn_tensor_name(0, "wo"), eye);

    const HeadSlices s = head_slices(store, cfg, {0, 0});
    const std::vector<double> left = {1, 0, 0, 1, 0, 0, 0, 0};
    CHECK(s.wq.data == left);
}

TEST_CASE("head index out of range") {
    const ModelConfig cfg = helpers::small_config();
    const TensorStore store = make_toy_store(cfg, 1);
    CHECK(error_code_of([&] { head_slices(store, cfg, {0, cfg.heads_per_layer}); }) ==
          "HeadOutOfRange");
    CHECK(error_code_of([&] { head_slices(store, cfg, {cfg.num_layers, 0}); }) ==
          "HeadOutOfRange");
}

TEST_CASE("missing tensor is reported by name") {
    const ModelConfig cfg = helpers::small_config();
    TensorStore store = make_toy_store(cfg, 1);
    TensorStore partial;
    partial.put(attn_tensor_name(0, "wq"), store.at(attn_tensor_name(0, "wq")));
    CHECK(error_code_of([&] { head_slices(partial, cfg, {0, 0}); }) == "MissingTensor");
}

TEST_CASE("slice equals index-arithmetic extraction") {
    const ModelConfig cfg = helpers::small_config(1, 2);
    const TensorStore store = make_toy_store(cfg, 42);
    const HeadSlices s = head_slices(store, cfg, {0, 1});

    const TensorEntry& fused = store.at(attn_tensor_name(0, "wq"));
    const std::size_t fused_cols = cfg.heads_per_layer * cfg.head_dim_q;
    for (std::size_t r = 0; r < cfg.embed_dim; ++r)
        for (std::size_t c = 0; c < cfg.head_dim_q; ++c)
            CHECK(s.wq(r, c) == fused.data[r * fused_cols + cfg.head_dim_q + c]);
}

TEST_CASE("reassembling all head slices reproduces the fused tensors") {
    const ModelConfig cfg = helpers::small_config(2, 3);
    const TensorStore store = make_toy_store(cfg, 9);
    for (std::size_t l = 0; l < cfg.num_layers; ++l) {
        const TensorEntry& fused_q = store.at(attn_tensor_name(l, "wq"));
        const TensorEntry& fused_o = store.at(attn_tensor_name(l, "wo"));
        for (std::size_t h = 0; h < cfg.heads_per_layer; ++h) {
            const HeadSlices s = head_slices(store, cfg, {l, h});
            for (std::size_t r = 0; r < cfg.embed_dim; ++r)
                for (std::size_t c = 0; c < cfg.head_dim_q; ++c)
                    CHECK(s.wq(r, c) ==
                          fused_q.data[r * fused_q.shape[1] + h * cfg.head_dim_q + c]);
            for (std::size_t r = 0; r < cfg.head_dim_v; ++r)
                for (std::size_t c = 0; c < cfg.embed_dim; ++c)
                    CHECK(s.wo(r, c) ==
                          fused_o.data[(h * cfg.head_dim_v + r) * cfg.embed_dim + c]);
        }
    }
}

TEST_CASE("head_slices is pure") {
    const ModelConfig cfg = helpers::small_config();
    const TensorStore store = make_toy_store(cfg, 77);
    const HeadSlices a = head_slices(store, cfg, {1, 0});
    const HeadSlices b = head_slices(store, cfg, {1, 0});
    CHECK(a.wq == b.wq);
    CHECK(a.wk == b.wk);
    CHECK(a.wv == b.wv);
    CHECK(a.wo == b.wo);
}

TEST_CASE("mixed f32/f64 stores round trip") {
    TensorStore store;
    store.put("embed.tok", f32_entry({2, 3}, {0.5, -1.25, 3.0, 0.0, 2.5, -0.75}));
    TensorEntry f64e;
    f64e.shape = {3, 2};
    f64e.data = {1e-300, -2.5, 0.1, 7.0, -0.0, 9.75};
    store.put("head.out", f64e);

    const auto bytes = save_bytes(store);
    const TensorStore loaded = load_bytes(bytes);
    CHECK(loaded == store);
    CHECK(save_bytes(loaded) == bytes);
}

}  // TEST_SUITE
