#pragma once

#include <cstddef>

namespace headshare {

// Architecture dimensions of a checkpoint. head_dim_k must equal head_dim_q;
// heads_per_layer * head_dim_q must not exceed embed_dim.
struct ModelConfig {
    std::size_t num_layers = 0;
    std::size_t heads_per_layer = 0;
    std::size_t embed_dim = 0;
    std::size_t head_dim_q = 0;
    std::size_t head_dim_k = 0;
    std::size_t head_dim_v = 0;
    std::size_t ffn_dim = 0;
    std::size_t vocab_size = 0;  // engine models only

    std::size_t total_heads() const { return num_layers * heads_per_layer; }

    void validate() const;  // throws InvalidConfig

    bool operator==(const ModelConfig&) const = default;
};

}  // namespace headshare
