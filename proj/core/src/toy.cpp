#include "headshare/toy.hpp"

#include <fstream>
#include <sstream>
#include <utility>

#include "headshare/error.hpp"
#include "headshare/rng.hpp"

namespace headshare {

ModelConfig toy_config() {
    ModelConfig cfg;
    cfg.num_layers = 3;
    cfg.heads_per_layer = 2;
    cfg.embed_dim = 8;
    cfg.head_dim_q = 4;
    cfg.head_dim_k = 4;
    cfg.head_dim_v = 4;
    cfg.ffn_dim = 16;
    cfg.vocab_size = 17;
    return cfg;
}

namespace {

TensorEntry random_entry(Rng& rng, std::vector<std::size_t> shape, double scale) {
    TensorEntry e;
    e.dtype = Dtype::F64;
    e.shape = std::move(shape);
    e.data.resize(e.element_count());
    for (double& v : e.data) v = rng.uniform(-scale, scale);
    return e;
}

}  // namespace

TensorStore make_toy_store(const ModelConfig& cfg, std::uint64_t seed, double scale) {
    cfg.validate();
    if (cfg.vocab_size < 1) fail("InvalidConfig", "vocab_size must be >= 1");
    Rng rng(seed);
    TensorStore store;
    const std::size_t d = cfg.embed_dim;
    store.put("embed.tok", random_entry(rng, {cfg.vocab_size, d}, scale));
    for (std::size_t l = 0; l < cfg.num_layers; ++l) {
        store.put(attn_tensor_name(l, "wq"),
                  random_entry(rng, {d, cfg.heads_per_layer * cfg.head_dim_q}, scale));
        store.put(attn_tensor_name(l, "wk"),
                  random_entry(rng, {d, cfg.heads_per_layer * cfg.head_dim_k}, scale));
        store.put(attn_tensor_name(l, "wv"),
                  random_entry(rng, {d, cfg.heads_per_layer * cfg.head_dim_v}, scale));
        store.put(attn_tensor_name(l, "wo"),
                  random_entry(rng, {cfg.heads_per_layer * cfg.head_dim_v, d}, scale));
        store.put(ffn_tensor_name(l, "gate"), random_entry(rng, {d, cfg.ffn_dim}, scale));
        store.put(ffn_tensor_name(l, "up"), random_entry(rng, {d, cfg.ffn_dim}, scale));
        store.put(ffn_tensor_name(l, "down"), random_entry(rng, {cfg.ffn_dim, d}, scale));
    }
    store.put("head.out", random_entry(rng, {d, cfg.vocab_size}, scale));
    store.set_config(cfg);
    return store;
}

void plant_duplicate_head(TensorStore& store, const ModelConfig& cfg, HeadRef src, HeadRef dst) {
    copy_head_slices(store, cfg, src, dst);
}

std::vector<TokenSequence> make_toy_corpus(const ModelConfig& cfg, std::uint64_t seed,
                                           std::size_t sequences, std::size_t length) {
    if (length < 1) fail("LengthMismatch", "sequence length must be >= 1");
    Rng rng(seed);
    std::vector<TokenSequence> corpus(sequences);
    for (TokenSequence& seq : corpus) {
        seq.ids.resize(length);
        for (std::size_t& id : seq.ids) id = rng.index(cfg.vocab_size);
    }
    return corpus;
}

void write_corpus(const std::vector<TokenSequence>& corpus, const std::string& path) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) fail("IoError", "cannot open for writing: " + path);
    for (const TokenSequence& seq : corpus) {
        for (std::size_t i = 0; i < seq.ids.size(); ++i) {
            if (i) f << ' ';
            f << seq.ids[i];
        }
        f << '\n';
    }
    if (!f) fail("IoError", "write failed: " + path);
}

std::vector<TokenSequence> read_corpus(const std::string& path, std::size_t vocab_size) {
    std::ifstream f(path);
    if (!f) fail("IoError", "cannot open: " + path);
    std::vector<TokenSequence> corpus;
    std::string line;
    while (std::getline(f, line)) {
        std::istringstream ss(line);
        TokenSequence seq;
        long long id;
        while (ss >> id) {
            if (id < 0 || static_cast<std::size_t>(id) >= vocab_size)
                fail("TokenOutOfRange", "corpus id " + std::to_string(id) + " >= vocab size");
            seq.ids.push_back(static_cast<std::size_t>(id));
        }
        if (!seq.ids.empty()) corpus.push_back(std::move(seq));
    }
    return corpus;
}

}  // namespace headshare
