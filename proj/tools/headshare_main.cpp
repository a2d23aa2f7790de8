#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "headshare/analysis.hpp"
#include "headshare/engine.hpp"
#include "headshare/error.hpp"
#include "headshare/parallel.hpp"
#include "headshare/postshare.hpp"
#include "headshare/report.hpp"
#include "headshare/sharing.hpp"
#include "headshare/similarity.hpp"
#include "headshare/store.hpp"
#include "headshare/toy.hpp"
#include "headshare/version.hpp"

using nlohmann::json;
using namespace headshare;

namespace {

struct Globals {
    std::uint64_t seed = 0;
    std::size_t threads = 1;
};

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

std::string hash_hex(const std::string& s) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(s)));
    return buf;
}

void write_text(const std::string& path, const std::string& content) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) fail("IoError", "cannot open for writing: " + path);
    f << content;
    if (!f) fail("IoError", "write failed: " + path);
}

std::string read_text(const std::string& path) {
    std::ifstream f(path);
    if (!f) fail("IoError", "cannot open: " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

// One manifest per run, beside the primary output. The config hash covers
// everything that determines the output bytes; execution details like the
// thread cap are excluded on purpose.
void write_manifest(const std::string& path, const std::string& command, const json& config,
                    const std::vector<std::string>& inputs,
                    const std::vector<std::string>& outputs, std::uint64_t seed) {
    const json m = {{"command", command},
                    {"config_hash", hash_hex(config.dump())},
                    {"inputs", inputs},
                    {"outputs", outputs},
                    {"seed", seed},
                    {"version", kVersion}};
    write_text(path, m.dump(2) + "\n");
}

void print_error(const Error& e) {
    std::cerr << "error: " << e.code() << ": " << e.what() << "\n";
}

TensorStore load_model(const std::string& path) { return load_store(path); }

ModelConfig require_config(const TensorStore& store, const std::string& path) {
    if (!store.config())
        fail("MissingConfig", path + " has no embedded model config");
    return *store.config();
}

std::string strip_hws(const std::string& out) {
    const std::string ext = ".hws";
    if (out.size() > ext.size() && out.compare(out.size() - ext.size(), ext.size(), ext) == 0)
        return out.substr(0, out.size() - ext.size());
    return out;
}

void check_ratio(double r, const char* flag) {
    if (!(r >= 0.0 && r <= 1.0))
        fail("AlphaOutOfRange", std::string(flag) + " must be within [0, 1]");
}

// ---------------------------------------------------------------- gen-toy

struct GenToyOpts {
    std::string out;
    std::size_t layers = 3, heads = 2, embed = 8, head_dim = 4, ffn = 16, vocab = 17;
    std::size_t seqs = 16, seq_len = 8, duplicate_pairs = 0;
    double scale = 0.5;
};

int cmd_gen_toy(const GenToyOpts& o, const Globals& g) {
    ModelConfig cfg;
    cfg.num_layers = o.layers;
    cfg.heads_per_layer = o.heads;
    cfg.embed_dim = o.embed;
    cfg.head_dim_q = o.head_dim;
    cfg.head_dim_k = o.head_dim;
    cfg.head_dim_v = o.head_dim;
    cfg.ffn_dim = o.ffn;
    cfg.vocab_size = o.vocab;
    try {
        cfg.validate();
        if (o.duplicate_pairs > (o.layers - 1) * o.heads)
            fail("UsageError", "--duplicate-pairs exceeds the number of shareable heads");
        if (o.seq_len < 2) fail("UsageError", "--seq-len must be >= 2");
    } catch (const Error& e) {
        print_error(e);
        return 2;
    }

    try {
        TensorStore store = make_toy_store(cfg, g.seed, o.scale);
        for (std::size_t t = 0; t < o.duplicate_pairs; ++t) {
            const HeadRef src{0, t % o.heads};
            const HeadRef dst{1 + t / o.heads, t % o.heads};
            plant_duplicate_head(store, cfg, src, dst);
        }
        const std::string model_path = o.out + ".hws";
        const std::string ids_path = o.out + ".ids";
        save_store(store, model_path);
        write_corpus(make_toy_corpus(cfg, g.seed + 1, o.seqs, o.seq_len), ids_path);

        const json config = {{"layers", o.layers},     {"heads", o.heads},
                             {"embed", o.embed},       {"head_dim", o.head_dim},
                             {"ffn", o.ffn},           {"vocab", o.vocab},
                             {"seqs", o.seqs},         {"seq_len", o.seq_len},
                             {"duplicate_pairs", o.duplicate_pairs},
                             {"scale", o.scale},       {"seed", g.seed}};
        write_manifest(o.out + ".manifest.json", "gen-toy", config, {},
                       {model_path, ids_path}, g.seed);
    } catch (const Error& e) {
        print_error(e);
        return 1;
    }
    return 0;
}

// ---------------------------------------------------------------- analyze

struct AnalyzeOpts {
    std::string model, out;
    std::string match = "qk";
};

int cmd_analyze(const AnalyzeOpts& o, const Globals& g) {
    MatchFunction f{};
    try {
        f = match_function_from_name(o.match);
    } catch (const Error& e) {
        print_error(e);
        return 2;
    }

    try {
        const TensorStore store = load_model(o.model);
        const ModelConfig cfg = require_config(store, o.model);

        std::vector<HeadRef> heads;
        for (std::size_t l = 0; l < cfg.num_layers; ++l)
            for (std::size_t h = 0; h < cfg.heads_per_layer; ++h) heads.push_back({l, h});
        std::vector<std::pair<HeadRef, HeadRef>> pairs;
        for (std::size_t a = 0; a < heads.size(); ++a)
            for (std::size_t b = a + 1; b < heads.size(); ++b)
                pairs.emplace_back(heads[a], heads[b]);

        std::vector<double> scores(pairs.size());
        parallel_for(pairs.size(), g.threads, [&](std::size_t i) {
            scores[i] = match_score(store, cfg, pairs[i].first, pairs[i].second, f).score;
        });

        std::ostringstream csv;
        csv << "layer_i,head_i,layer_j,head_j,score\n";
        for (std::size_t i = 0; i < pairs.size(); ++i) {
            csv << pairs[i].first.layer << ',' << pairs[i].first.head << ','
                << pairs[i].second.layer << ',' << pairs[i].second.head << ','
                << fmt_double(scores[i]) << '\n';
        }
        write_text(o.out, csv.str());

        const json config = {{"model", o.model}, {"match", o.match}};
        write_manifest(o.out + ".manifest.json", "analyze", config, {o.model}, {o.out}, g.seed);
    } catch (const Error& e) {
        print_error(e);
        return 1;
    }
    return 0;
}

// ---------------------------------------------------------------- share

struct ShareOpts {
    std::string model, out;
    std::string match = "qk";
    double ratio = 0.0;
    double ffn_ratio = 0.0;
};

int cmd_share(const ShareOpts& o, const Globals& g) {
    MatchFunction f{};
    try {
        check_ratio(o.ratio, "--ratio");
        check_ratio(o.ffn_ratio, "--ffn-ratio");
        f = match_function_from_name(o.match);
    } catch (const Error& e) {
        print_error(e);
        return 2;
    }

    try {
        const TensorStore store = load_model(o.model);
        const ModelConfig cfg = require_config(store, o.model);

        SharePlan plan;
        plan.ratio = o.ratio;
        plan.match_function = f;
        if (o.ratio > 0.0) {
            const CandidateBuffer buf = build_candidate_buffer(store, cfg, f, g.threads);
            plan = select_top_n(buf, cfg, o.ratio);
        }
        if (o.ffn_ratio > 0.0)
            plan.ffn_layers = select_ffn_layers(build_ffn_candidates(store, cfg), cfg, o.ffn_ratio);

        const TensorStore shared = apply_share_plan(store, cfg, plan);

        const std::string stem = strip_hws(o.out);
        const std::string model_path = stem + ".hws";
        const std::string plan_path = stem + ".plan.json";
        save_store(shared, model_path);
        write_text(plan_path, plan_to_json(plan));

        const json config = {{"model", o.model},
                             {"ratio", o.ratio},
                             {"ffn_ratio", o.ffn_ratio},
                             {"match", o.match}};
        write_manifest(stem + ".manifest.json", "share", config, {o.model},
                       {model_path, plan_path}, g.seed);
    } catch (const Error& e) {
        print_error(e);
        return 1;
    }
    return 0;
}

// ---------------------------------------------------------------- trace

struct TraceOpts {
    std::string model, input, out;
    std::size_t line = 0;
};

int cmd_trace(const TraceOpts& o, const Globals& g) {
    try {
        const TensorStore store = load_model(o.model);
        const ModelConfig cfg = require_config(store, o.model);
        const std::vector<TokenSequence> corpus = read_corpus(o.input, cfg.vocab_size);
        if (o.line >= corpus.size())
            fail("LineOutOfRange", "--line " + std::to_string(o.line) + " but corpus has " +
                                       std::to_string(corpus.size()) + " sequences");

        const ForwardTrace trace = forward(store, cfg, corpus[o.line]);
        std::ostringstream csv;
        csv << "layer,head,row,col,value\n";
        for (std::size_t l = 0; l < cfg.num_layers; ++l) {
            for (std::size_t h = 0; h < cfg.heads_per_layer; ++h) {
                const Matrix& m = trace.map(l, h, cfg);
                for (std::size_t r = 0; r < m.rows; ++r)
                    for (std::size_t c = 0; c < m.cols; ++c)
                        csv << l << ',' << h << ',' << r << ',' << c << ','
                            << fmt_double(m(r, c)) << '\n';
            }
        }
        write_text(o.out, csv.str());

        const json config = {{"model", o.model}, {"input", o.input}, {"line", o.line}};
        write_manifest(o.out + ".manifest.json", "trace", config, {o.model, o.input},
                       {o.out}, g.seed);
    } catch (const Error& e) {
        print_error(e);
        return 1;
    }
    return 0;
}

// ---------------------------------------------------------------- degree

struct DegreeOpts {
    std::string model, input, out, sets_out;
    double ratio = 0.3;
};

int cmd_degree(const DegreeOpts& o, const Globals& g) {
    try {
        check_ratio(o.ratio, "--ratio");
    } catch (const Error& e) {
        print_error(e);
        return 2;
    }

    try {
        const TensorStore store = load_model(o.model);
        const ModelConfig cfg = require_config(store, o.model);
        const std::vector<TokenSequence> corpus = read_corpus(o.input, cfg.vocab_size);
        const DegreeReport report = matched_degree(store, cfg, corpus, o.ratio, g.threads);

        std::ostringstream csv;
        csv << "k,intersection,overlap_ratio,paper_quotient\n";
        csv << report.k << ',' << report.intersection << ',' << fmt_double(report.overlap_ratio)
            << ',' << fmt_double(report.paper_quotient) << '\n';
        write_text(o.out, csv.str());

        std::vector<std::string> outputs = {o.out};
        if (!o.sets_out.empty()) {
            std::ostringstream sets;
            sets << "set,keep_layer,keep_head,replace_layer,replace_head,score\n";
            for (const HeadPair& p : report.set_weight)
                sets << "weight," << p.keep.layer << ',' << p.keep.head << ',' << p.replace.layer
                     << ',' << p.replace.head << ',' << fmt_double(p.score) << '\n';
            for (const HeadPair& p : report.set_attn)
                sets << "attn," << p.keep.layer << ',' << p.keep.head << ',' << p.replace.layer
                     << ',' << p.replace.head << ',' << fmt_double(p.score) << '\n';
            write_text(o.sets_out, sets.str());
            outputs.push_back(o.sets_out);
        }

        const json config = {{"model", o.model}, {"input", o.input}, {"ratio", o.ratio}};
        write_manifest(o.out + ".manifest.json", "degree", config, {o.model, o.input},
                       outputs, g.seed);
    } catch (const Error& e) {
        print_error(e);
        return 1;
    }
    return 0;
}

// ---------------------------------------------------------------- heatmap

struct HeatmapOpts {
    std::string model, input, out;
};

int cmd_heatmap(const HeatmapOpts& o, const Globals& g) {
    try {
        const TensorStore store = load_model(o.model);
        const ModelConfig cfg = require_config(store, o.model);
        const std::vector<TokenSequence> corpus = read_corpus(o.input, cfg.vocab_size);
        const Matrix sim = layer_similarity_matrix(store, cfg, corpus, g.threads);

        std::ostringstream csv;
        csv << "layer_p,layer_q,similarity\n";
        for (std::size_t p = 0; p < sim.rows; ++p)
            for (std::size_t q = 0; q < sim.cols; ++q)
                csv << p << ',' << q << ',' << fmt_double(sim(p, q)) << '\n';
        write_text(o.out, csv.str());

        const json config = {{"model", o.model}, {"input", o.input}};
        write_manifest(o.out + ".manifest.json", "heatmap", config, {o.model, o.input},
                       {o.out}, g.seed);
    } catch (const Error& e) {
        print_error(e);
        return 1;
    }
    return 0;
}

// ---------------------------------------------------------------- report

struct ReportOpts {
    std::string model, plan, out;
    std::size_t layers = 0, heads = 0, embed = 0, head_dim = 0, ffn_dim = 0;
    std::uint64_t base_total = 0;
    std::size_t pairs = 0, ffn_shared = 0;
};

int cmd_report(const ReportOpts& o, const Globals& g) {
    try {
        if (o.model.empty() && o.layers == 0)
            fail("UsageError", "report needs --model or explicit --layers/--heads/... dims");
        if (o.model.empty() && o.base_total == 0)
            fail("UsageError", "--base-total is required with explicit dims");
    } catch (const Error& e) {
        print_error(e);
        return 2;
    }

    try {
        ModelConfig cfg;
        std::uint64_t base = o.base_total;
        SharePlan plan;
        std::vector<std::string> inputs;

        if (!o.model.empty()) {
            const TensorStore store = load_model(o.model);
            cfg = require_config(store, o.model);
            if (base == 0) base = store.total_elements();
            inputs.push_back(o.model);
        } else {
            cfg.num_layers = o.layers;
            cfg.heads_per_layer = o.heads;
            cfg.embed_dim = o.embed;
            cfg.head_dim_q = o.head_dim;
            cfg.head_dim_k = o.head_dim;
            cfg.head_dim_v = o.head_dim;
            cfg.ffn_dim = o.ffn_dim;
            cfg.vocab_size = 1;
            cfg.validate();
        }

        if (!o.plan.empty()) {
            plan = plan_from_json(read_text(o.plan));
            inputs.push_back(o.plan);
        } else if (o.pairs > 0 || o.ffn_shared > 0) {
            plan = synthetic_plan(cfg, o.pairs, o.ffn_shared);
        }

        const MemoryReport r = memory_report(cfg, plan, base);

        std::printf("parameter accounting\n");
        std::printf("  total params      %20llu\n",
                    static_cast<unsigned long long>(r.total_params));
        std::printf("  mha saved         %20llu\n",
                    static_cast<unsigned long long>(r.mha_saved));
        std::printf("  ffn saved         %20llu\n",
                    static_cast<unsigned long long>(r.ffn_saved));
        std::printf("  total saved       %20llu\n",
                    static_cast<unsigned long long>(r.shared_params_saved));
        std::printf("  effective params  %20llu\n",
                    static_cast<unsigned long long>(r.effective_params));
        std::printf("  ratio vs base     %20.6f\n", r.ratio_vs_base);
        std::printf("note: GPU-memory bytes depend on runtime allocators; only parameter counts and ratios are modeled.\n");

        if (!o.out.empty()) {
            const json j = {
                {"total_params", r.total_params},
                {"shared_params_saved", r.shared_params_saved},
                {"effective_params", r.effective_params},
                {"ratio_vs_base", r.ratio_vs_base},
                {"per_block", {{"mha_saved", r.mha_saved}, {"ffn_saved", r.ffn_saved}}},
                {"note", "GPU-memory bytes depend on runtime allocators; only parameter "
                         "counts and ratios are modeled."}};
            write_text(o.out, j.dump(2) + "\n");

            const json config = {{"model", o.model},       {"plan", o.plan},
                                 {"layers", o.layers},     {"heads", o.heads},
                                 {"embed", o.embed},       {"head_dim", o.head_dim},
                                 {"ffn_dim", o.ffn_dim},   {"base_total", base},
                                 {"pairs", o.pairs},       {"ffn_shared", o.ffn_shared}};
            write_manifest(o.out + ".manifest.json", "report", config, inputs, {o.out}, g.seed);
        }
    } catch (const Error& e) {
        print_error(e);
        return 1;
    }
    return 0;
}

// ---------------------------------------------------------------- postshare

struct PostShareOpts {
    std::string model, plan, corpus, out;
    double gamma = 0.5;
    double lr = 5e-5;
    std::size_t steps = 100;
    std::size_t checkpoint_every = 0;
    std::size_t batch_size = 4;
    bool squared_norm = false;
};

int cmd_postshare(const PostShareOpts& o, const Globals& g) {
    try {
        if (!(o.gamma >= 0.0)) fail("UsageError", "--gamma must be >= 0");
        if (o.steps < 1) fail("UsageError", "--steps must be >= 1");
        if (o.batch_size < 1) fail("UsageError", "--batch-size must be >= 1");
    } catch (const Error& e) {
        print_error(e);
        return 2;
    }

    try {
        const TensorStore store = load_model(o.model);
        const ModelConfig cfg = require_config(store, o.model);
        const SharePlan plan = plan_from_json(read_text(o.plan));
        const std::vector<TokenSequence> corpus = read_corpus(o.corpus, cfg.vocab_size);

        PostShareConfig pscfg;
        pscfg.gamma = o.gamma;
        pscfg.learning_rate = o.lr;
        pscfg.steps = o.steps;
        pscfg.checkpoint_every = o.checkpoint_every;
        pscfg.batch_size = o.batch_size;
        pscfg.squared_norm = o.squared_norm;

        std::ostringstream loss_csv;
        loss_csv << "step,task,reg,total\n";
        std::vector<std::string> outputs;

        TrainHooks hooks;
        hooks.on_step = [&](std::size_t step, double task, double reg, double total) {
            loss_csv << step << ',' << fmt_double(task) << ',' << fmt_double(reg) << ','
                     << fmt_double(total) << '\n';
        };
        hooks.on_checkpoint = [&](std::size_t step, const TrainState& state) {
            const std::string path = o.out + ".step" + std::to_string(step) + ".hws";
            save_store(state.weights, path);
            outputs.push_back(path);
        };

        TrainState state = init_train_state(store);
        state = postshare_train(std::move(state), cfg, plan, corpus, pscfg, hooks);

        const std::string model_path = o.out + ".hws";
        const std::string loss_path = o.out + ".loss.csv";
        save_store(state.weights, model_path);
        write_text(loss_path, loss_csv.str());
        outputs.push_back(model_path);
        outputs.push_back(loss_path);

        const json config = {{"model", o.model},
                             {"plan", o.plan},
                             {"corpus", o.corpus},
                             {"gamma", o.gamma},
                             {"lr", o.lr},
                             {"steps", o.steps},
                             {"checkpoint_every", o.checkpoint_every},
                             {"batch_size", o.batch_size},
                             {"squared_norm", o.squared_norm}};
        write_manifest(o.out + ".manifest.json", "postshare", config,
                       {o.model, o.plan, o.corpus}, outputs, g.seed);
    } catch (const Error& e) {
        print_error(e);
        return 1;
    }
    return 0;
}

std::size_t threads_from_env() {
    if (const char* env = std::getenv("HEADSHARE_THREADS")) {
        char* end = nullptr;
        const unsigned long v = std::strtoul(env, &end, 10);
        if (end && *end == '\0' && v >= 1) return static_cast<std::size_t>(v);
    }
    return 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"head-wise attention weight sharing toolkit"};
    app.require_subcommand(1);
    app.fallthrough();  // global --seed/--threads may follow the subcommand

    std::uint64_t seed = 0;
    long long threads_flag = -1;
    app.add_option("--seed", seed, "Seed for all randomness")->capture_default_str();
    app.add_option("--threads", threads_flag,
                   "Worker thread cap (default: HEADSHARE_THREADS or 1)");

    GenToyOpts gen_o;
    auto* gen = app.add_subcommand("gen-toy", "Write a seeded toy checkpoint and corpus");
    gen->add_option("--out", gen_o.out, "Output prefix")->required();
    gen->add_option("--layers", gen_o.layers)->capture_default_str();
    gen->add_option("--heads", gen_o.heads)->capture_default_str();
    gen->add_option("--embed", gen_o.embed)->capture_default_str();
    gen->add_option("--head-dim", gen_o.head_dim)->capture_default_str();
    gen->add_option("--ffn-dim", gen_o.ffn)->capture_default_str();
    gen->add_option("--vocab", gen_o.vocab)->capture_default_str();
    gen->add_option("--seqs", gen_o.seqs, "Corpus sequence count")->capture_default_str();
    gen->add_option("--seq-len", gen_o.seq_len)->capture_default_str();
    gen->add_option("--duplicate-pairs", gen_o.duplicate_pairs,
                    "Plant this many byte-identical cross-layer head pairs")
        ->capture_default_str();
    gen->add_option("--scale", gen_o.scale, "Uniform weight range half-width")
        ->capture_default_str();

    AnalyzeOpts an_o;
    auto* an = app.add_subcommand("analyze", "Emit pairwise head match scores as CSV");
    an->add_option("--model", an_o.model)->required();
    an->add_option("--out", an_o.out)->required();
    an->add_option("--match", an_o.match, "q|k|v|qkv|qk|separate")->capture_default_str();

    ShareOpts sh_o;
    auto* sh = app.add_subcommand("share", "Tie the top-N matched head pairs");
    sh->add_option("--model", sh_o.model)->required();
    sh->add_option("--out", sh_o.out, "Output checkpoint path or prefix")->required();
    sh->add_option("--ratio", sh_o.ratio, "Fraction of all heads to share")
        ->capture_default_str();
    sh->add_option("--ffn-ratio", sh_o.ffn_ratio, "Fraction of layers whose FFN is shared")
        ->capture_default_str();
    sh->add_option("--match", sh_o.match, "q|k|v|qkv|qk|separate")->capture_default_str();

    TraceOpts tr_o;
    auto* tr = app.add_subcommand("trace", "Dump per-head attention maps as CSV");
    tr->add_option("--model", tr_o.model)->required();
    tr->add_option("--input", tr_o.input, "Token-id corpus file")->required();
    tr->add_option("--out", tr_o.out)->required();
    tr->add_option("--line", tr_o.line, "Corpus line to trace")->capture_default_str();

    DegreeOpts de_o;
    auto* de = app.add_subcommand("degree",
                                  "Overlap of weight-ranked vs attention-ranked top-k pairs");
    de->add_option("--model", de_o.model)->required();
    de->add_option("--input", de_o.input)->required();
    de->add_option("--out", de_o.out)->required();
    de->add_option("--ratio", de_o.ratio)->capture_default_str();
    de->add_option("--sets-out", de_o.sets_out, "Also dump both top-k sets");

    HeatmapOpts he_o;
    auto* he = app.add_subcommand("heatmap", "Layer-by-layer attention map similarity CSV");
    he->add_option("--model", he_o.model)->required();
    he->add_option("--input", he_o.input)->required();
    he->add_option("--out", he_o.out)->required();

    ReportOpts re_o;
    auto* re = app.add_subcommand("report", "Analytic parameter/memory accounting");
    re->add_option("--model", re_o.model);
    re->add_option("--plan", re_o.plan, "Share plan JSON");
    re->add_option("--out", re_o.out, "Report JSON output");
    re->add_option("--layers", re_o.layers);
    re->add_option("--heads", re_o.heads);
    re->add_option("--embed", re_o.embed);
    re->add_option("--head-dim", re_o.head_dim);
    re->add_option("--ffn-dim", re_o.ffn_dim);
    re->add_option("--base-total", re_o.base_total, "Baseline parameter count");
    re->add_option("--pairs", re_o.pairs, "Synthetic tied-pair count");
    re->add_option("--ffn-shared", re_o.ffn_shared, "Synthetic shared-FFN-layer count");

    PostShareOpts ps_o;
    auto* ps = app.add_subcommand("postshare", "Post-train with the similarity regularizer");
    ps->add_option("--model", ps_o.model)->required();
    ps->add_option("--plan", ps_o.plan, "Share plan JSON")->required();
    ps->add_option("--corpus", ps_o.corpus, "Token-id corpus file")->required();
    ps->add_option("--out", ps_o.out, "Output prefix")->required();
    ps->add_option("--gamma", ps_o.gamma)->capture_default_str();
    ps->add_option("--lr", ps_o.lr)->capture_default_str();
    ps->add_option("--steps", ps_o.steps)->capture_default_str();
    ps->add_option("--checkpoint-every", ps_o.checkpoint_every)->capture_default_str();
    ps->add_option("--batch-size", ps_o.batch_size)->capture_default_str();
    ps->add_flag("--squared-norm", ps_o.squared_norm,
                 "Use squared Frobenius terms in the regularizer");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: UsageError: " << e.what() << "\n";
        return 2;
    }

    Globals g;
    g.seed = seed;
    g.threads = threads_flag >= 1 ? static_cast<std::size_t>(threads_flag) : threads_from_env();

    if (gen->parsed()) return cmd_gen_toy(gen_o, g);
    if (an->parsed()) return cmd_analyze(an_o, g);
    if (sh->parsed()) return cmd_share(sh_o, g);
    if (tr->parsed()) return cmd_trace(tr_o, g);
    if (de->parsed()) return cmd_degree(de_o, g);
    if (he->parsed()) return cmd_heatmap(he_o, g);
    if (re->parsed()) return cmd_report(re_o, g);
    if (ps->parsed()) return cmd_postshare(ps_o, g);
    std::cerr << "error: UsageError: no subcommand\n";
    return 2;
}
