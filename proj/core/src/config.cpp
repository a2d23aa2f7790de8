#include "headshare/config.hpp"

#include <string>

#include "headshare/error.hpp"

namespace headshare {

void ModelConfig::validate() const {
    auto require = [](bool ok, const std::string& what) {
        if (!ok) fail("InvalidConfig", what);
    };
    require(num_layers >= 1, "num_layers must be >= 1");
    require(heads_per_layer >= 1, "heads_per_layer must be >= 1");
    require(embed_dim >= 1, "embed_dim must be >= 1");
    require(head_dim_q >= 1, "head_dim_q must be >= 1");
    require(head_dim_k >= 1, "head_dim_k must be >= 1");
    require(head_dim_v >= 1, "head_dim_v must be >= 1");
    require(ffn_dim >= 1, "ffn_dim must be >= 1");
    require(head_dim_k == head_dim_q, "head_dim_k must equal head_dim_q");
    require(heads_per_layer * head_dim_q <= embed_dim,
            "heads_per_layer * head_dim_q must not exceed embed_dim");
}

}  // namespace headshare
