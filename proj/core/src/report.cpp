#include "headshare/report.hpp"

#include "headshare/error.hpp"

namespace headshare {

std::uint64_t params_per_head(const ModelConfig& cfg) {
    const std::uint64_t d = cfg.embed_dim;
    return d * cfg.head_dim_q + d * cfg.head_dim_k + d * cfg.head_dim_v +
           static_cast<std::uint64_t>(cfg.head_dim_v) * d;
}

std::uint64_t params_per_ffn_layer(const ModelConfig& cfg) {
    return 3ULL * cfg.embed_dim * cfg.ffn_dim;
}

MemoryReport memory_report(const ModelConfig& cfg, const SharePlan& plan,
                           std::uint64_t base_total) {
    validate_plan(cfg, plan);
    const std::uint64_t analytic =
        cfg.num_layers * (cfg.heads_per_layer * params_per_head(cfg) + params_per_ffn_layer(cfg));
    if (base_total < analytic)
        fail("PlanConfigMismatch",
             "base_total is smaller than the analytic MHA+FFN parameter count");

    MemoryReport r;
    r.total_params = base_total;
    r.mha_saved = static_cast<std::uint64_t>(plan.pairs.size()) * params_per_head(cfg);
    r.ffn_saved = static_cast<std::uint64_t>(plan.ffn_layers.size()) * params_per_ffn_layer(cfg);
    r.shared_params_saved = r.mha_saved + r.ffn_saved;
    r.effective_params = base_total - r.shared_params_saved;
    r.ratio_vs_base =
        static_cast<double>(r.effective_params) / static_cast<double>(base_total);
    return r;
}

}  // namespace headshare
