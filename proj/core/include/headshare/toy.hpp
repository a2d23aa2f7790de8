#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "headshare/config.hpp"
#include "headshare/engine.hpp"
#include "headshare/store.hpp"

namespace headshare {

// Small default architecture shared by tests and `gen-toy`.
ModelConfig toy_config();

// Full engine checkpoint with every tensor filled uniformly in
// [-scale, scale] from the seed; tensors are filled in canonical name order
// (embed, layers ascending with wq/wk/wv/wo then gate/up/down, output head).
TensorStore make_toy_store(const ModelConfig& cfg, std::uint64_t seed, double scale = 0.5);

// Byte-copies src's head slices onto dst, planting a known-identical pair.
void plant_duplicate_head(TensorStore& store, const ModelConfig& cfg, HeadRef src, HeadRef dst);

std::vector<TokenSequence> make_toy_corpus(const ModelConfig& cfg, std::uint64_t seed,
                                           std::size_t sequences, std::size_t length);

// Newline-delimited sequences of whitespace-separated token ids.
void write_corpus(const std::vector<TokenSequence>& corpus, const std::string& path);
std::vector<TokenSequence> read_corpus(const std::string& path, std::size_t vocab_size);

}  // namespace headshare
