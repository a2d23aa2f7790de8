#pragma once

#include <cstdint>

#include "headshare/config.hpp"
#include "headshare/sharing.hpp"

namespace headshare {

// Analytic parameter accounting for a share plan. Counts are exact integer
// arithmetic; GPU-memory byte figures are allocator-dependent and not modeled.
struct MemoryReport {
    std::uint64_t total_params = 0;
    std::uint64_t shared_params_saved = 0;
    std::uint64_t effective_params = 0;
    double ratio_vs_base = 1.0;
    std::uint64_t mha_saved = 0;
    std::uint64_t ffn_saved = 0;
};

// D*d_q + D*d_k + D*d_v + d_v*D: one head's q/k/v slices plus its output
// projection block.
std::uint64_t params_per_head(const ModelConfig& cfg);

// 3 * D * ffn_dim: gate + up + down of one layer.
std::uint64_t params_per_ffn_layer(const ModelConfig& cfg);

MemoryReport memory_report(const ModelConfig& cfg, const SharePlan& plan,
                           std::uint64_t base_total);

}  // namespace headshare
