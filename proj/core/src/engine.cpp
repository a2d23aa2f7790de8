#include "headshare/engine.hpp"

#include <cmath>
#include <string>
#include <vector>

#include "headshare/error.hpp"

namespace headshare {

namespace {

double silu(double x) { return x / (1.0 + std::exp(-x)); }

double silu_grad(double x) {
    const double s = 1.0 / (1.0 + std::exp(-x));
    return s * (1.0 + x * (1.0 - s));
}

void check_shape(const TensorEntry& e, std::size_t rows, std::size_t cols,
                 const std::string& name) {
    if (e.shape.size() != 2 || e.shape[0] != rows || e.shape[1] != cols)
        fail("ShapeMismatch", name + ": unexpected shape");
}

void validate_engine_store(const TensorStore& store, const ModelConfig& cfg) {
    cfg.validate();
    if (cfg.vocab_size < 1) fail("InvalidConfig", "vocab_size must be >= 1 for the engine");
    const std::size_t d = cfg.embed_dim;
    check_shape(store.at("embed.tok"), cfg.vocab_size, d, "embed.tok");
    check_shape(store.at("head.out"), d, cfg.vocab_size, "head.out");
    for (std::size_t l = 0; l < cfg.num_layers; ++l) {
        check_shape(store.at(attn_tensor_name(l, "wq")), d,
                    cfg.heads_per_layer * cfg.head_dim_q, attn_tensor_name(l, "wq"));
        check_shape(store.at(attn_tensor_name(l, "wk")), d,
                    cfg.heads_per_layer * cfg.head_dim_k, attn_tensor_name(l, "wk"));
        check_shape(store.at(attn_tensor_name(l, "wv")), d,
                    cfg.heads_per_layer * cfg.head_dim_v, attn_tensor_name(l, "wv"));
        check_shape(store.at(attn_tensor_name(l, "wo")), cfg.heads_per_layer * cfg.head_dim_v,
                    d, attn_tensor_name(l, "wo"));
        check_shape(store.at(ffn_tensor_name(l, "gate")), d, cfg.ffn_dim,
                    ffn_tensor_name(l, "gate"));
        check_shape(store.at(ffn_tensor_name(l, "up")), d, cfg.ffn_dim,
                    ffn_tensor_name(l, "up"));
        check_shape(store.at(ffn_tensor_name(l, "down")), cfg.ffn_dim, d,
                    ffn_tensor_name(l, "down"));
    }
}

void validate_tokens(const TokenSequence& x, std::size_t vocab, const char* what) {
    if (x.ids.empty()) fail("LengthMismatch", std::string(what) + " must be non-empty");
    for (std::size_t id : x.ids)
        if (id >= vocab)
            fail("TokenOutOfRange",
                 std::string(what) + " id " + std::to_string(id) + " >= vocab size");
}

struct LayerCache {
    Matrix x_in;   // residual stream entering attention
    Matrix x_mid;  // after attention + residual
    std::vector<HeadSlices> slices;
    std::vector<Matrix> attn;  // per-head maps
    std::vector<Matrix> q, k, v, o;
    Matrix g, u, fm;  // FFN intermediates
};

struct ForwardCache {
    std::vector<LayerCache> layers;
    Matrix x_final;
};

ForwardCache run_forward(const TensorStore& store, const ModelConfig& cfg,
                         const TokenSequence& x, ForwardTrace* trace) {
    validate_engine_store(store, cfg);
    validate_tokens(x, cfg.vocab_size, "input");

    const std::size_t seq = x.ids.size();
    const std::size_t d = cfg.embed_dim;
    const TensorEntry& embed = store.at("embed.tok");

    Matrix cur(seq, d);
    for (std::size_t t = 0; t < seq; ++t)
        for (std::size_t c = 0; c < d; ++c) cur(t, c) = embed.data[x.ids[t] * d + c];

    ForwardCache cache;
    cache.layers.resize(cfg.num_layers);
    for (std::size_t l = 0; l < cfg.num_layers; ++l) {
        LayerCache& lc = cache.layers[l];
        lc.x_in = cur;
        if (trace) trace->layer_inputs.push_back(cur);

        Matrix y(seq, d);
        for (std::size_t h = 0; h < cfg.heads_per_layer; ++h) {
            HeadSlices s = head_slices(store, cfg, {l, h});
            Matrix a = head_attention_map(cur, s.wq, s.wk);
            Matrix qh = matmul(cur, s.wq);
            Matrix kh = matmul(cur, s.wk);
            Matrix vh = matmul(cur, s.wv);
            Matrix oh = matmul(a, vh);
            add_inplace(y, matmul(oh, s.wo));
            if (trace) trace->attention_maps.push_back(a);
            lc.attn.push_back(std::move(a));
            lc.q.push_back(std::move(qh));
            lc.k.push_back(std::move(kh));
            lc.v.push_back(std::move(vh));
            lc.o.push_back(std::move(oh));
            lc.slices.push_back(std::move(s));
        }
        add_inplace(cur, y);
        lc.x_mid = cur;

        const Matrix gate = store.at(ffn_tensor_name(l, "gate")).as_matrix();
        const Matrix up = store.at(ffn_tensor_name(l, "up")).as_matrix();
        const Matrix down = store.at(ffn_tensor_name(l, "down")).as_matrix();
        lc.g = matmul(cur, gate);
        lc.u = matmul(cur, up);
        lc.fm = Matrix(seq, cfg.ffn_dim);
        for (std::size_t i = 0; i < lc.fm.data.size(); ++i)
            lc.fm.data[i] = silu(lc.g.data[i]) * lc.u.data[i];
        add_inplace(cur, matmul(lc.fm, down));
    }
    cache.x_final = cur;

    const Matrix head_out = store.at("head.out").as_matrix();
    Matrix logits = matmul(cur, head_out);
    if (trace) trace->logits = std::move(logits);
    return cache;
}

void add_col_block(TensorEntry& fused, const Matrix& block, std::size_t head) {
    const std::size_t fused_cols = fused.shape[1];
    const std::size_t c0 = head * block.cols;
    for (std::size_t r = 0; r < block.rows; ++r)
        for (std::size_t c = 0; c < block.cols; ++c)
            fused.data[r * fused_cols + c0 + c] += block(r, c);
}

void add_row_block(TensorEntry& fused, const Matrix& block, std::size_t head) {
    const std::size_t cols = fused.shape[1];
    const std::size_t r0 = head * block.rows;
    for (std::size_t r = 0; r < block.rows; ++r)
        for (std::size_t c = 0; c < block.cols; ++c)
            fused.data[(r0 + r) * cols + c] += block(r, c);
}

void add_entry(TensorEntry& dst, const Matrix& m) {
    for (std::size_t i = 0; i < m.data.size(); ++i) dst.data[i] += m.data[i];
}

}  // namespace

const Matrix& ForwardTrace::map(std::size_t layer, std::size_t head,
                                const ModelConfig& cfg) const {
    return attention_maps[layer * cfg.heads_per_layer + head];
}

Matrix head_attention_map(const Matrix& x, const Matrix& wq, const Matrix& wk) {
    if (wq.cols != wk.cols || wq.rows != x.cols || wk.rows != x.cols)
        fail("ShapeMismatch", "head projection shapes do not match the input");
    const Matrix q = matmul(x, wq);
    const Matrix k = matmul(x, wk);
    const double scale = 1.0 / std::sqrt(static_cast<double>(wq.cols));
    const std::size_t seq = x.rows;

    Matrix a(seq, seq);
    std::vector<double> row(seq);
    for (std::size_t i = 0; i < seq; ++i) {
        double mx = -1e300;
        for (std::size_t j = 0; j <= i; ++j) {
            double s = 0.0;
            for (std::size_t m = 0; m < q.cols; ++m) s += q(i, m) * k(j, m);
            row[j] = s * scale;
            if (row[j] > mx) mx = row[j];
        }
        double denom = 0.0;
        for (std::size_t j = 0; j <= i; ++j) {
            row[j] = std::exp(row[j] - mx);
            denom += row[j];
        }
        for (std::size_t j = 0; j <= i; ++j) a(i, j) = row[j] / denom;
    }
    return a;
}

ForwardTrace forward(const TensorStore& store, const ModelConfig& cfg,
                     const TokenSequence& x) {
    ForwardTrace trace;
    run_forward(store, cfg, x, &trace);
    return trace;
}

double cross_entropy(const ForwardTrace& trace, const TokenSequence& targets) {
    const std::size_t seq = trace.logits.rows;
    const std::size_t vocab = trace.logits.cols;
    if (targets.ids.size() != seq)
        fail("LengthMismatch", "targets length does not match the trace");
    for (std::size_t id : targets.ids)
        if (id >= vocab) fail("TokenOutOfRange", "target id >= vocab size");

    double total = 0.0;
    for (std::size_t t = 0; t < seq; ++t) {
        double mx = trace.logits(t, 0);
        for (std::size_t j = 1; j < vocab; ++j) mx = std::max(mx, trace.logits(t, j));
        double denom = 0.0;
        for (std::size_t j = 0; j < vocab; ++j) denom += std::exp(trace.logits(t, j) - mx);
        total += mx + std::log(denom) - trace.logits(t, targets.ids[t]);
    }
    return total / static_cast<double>(seq);
}

TensorStore backward(const TensorStore& store, const ModelConfig& cfg,
                     const TokenSequence& x, const TokenSequence& targets) {
    ForwardTrace trace;
    const ForwardCache cache = run_forward(store, cfg, x, &trace);
    const std::size_t seq = x.ids.size();
    const std::size_t vocab = cfg.vocab_size;
    if (targets.ids.size() != seq)
        fail("LengthMismatch", "targets length does not match the input");
    for (std::size_t id : targets.ids)
        if (id >= vocab) fail("TokenOutOfRange", "target id >= vocab size");

    TensorStore grads = zeros_like(store);

    // d(mean cross-entropy)/d(logits) = (softmax - onehot) / seq
    Matrix dlogits(seq, vocab);
    for (std::size_t t = 0; t < seq; ++t) {
        double mx = trace.logits(t, 0);
        for (std::size_t j = 1; j < vocab; ++j) mx = std::max(mx, trace.logits(t, j));
        double denom = 0.0;
        for (std::size_t j = 0; j < vocab; ++j) denom += std::exp(trace.logits(t, j) - mx);
        for (std::size_t j = 0; j < vocab; ++j)
            dlogits(t, j) = std::exp(trace.logits(t, j) - mx) / denom;
        dlogits(t, targets.ids[t]) -= 1.0;
    }
    scale_inplace(dlogits, 1.0 / static_cast<double>(seq));

    const Matrix head_out = store.at("head.out").as_matrix();
    add_entry(grads.at("head.out"), matmul_at(cache.x_final, dlogits));
    Matrix dx = matmul_bt(dlogits, head_out);

    const double scale = 1.0 / std::sqrt(static_cast<double>(cfg.head_dim_k));
    for (std::size_t l = cfg.num_layers; l-- > 0;) {
        const LayerCache& lc = cache.layers[l];

        // FFN: x_out = x_mid + silu(x_mid*gate) .* (x_mid*up) * down
        const Matrix gate = store.at(ffn_tensor_name(l, "gate")).as_matrix();
        const Matrix up = store.at(ffn_tensor_name(l, "up")).as_matrix();
        const Matrix down = store.at(ffn_tensor_name(l, "down")).as_matrix();

        const Matrix dfm = matmul_bt(dx, down);
        add_entry(grads.at(ffn_tensor_name(l, "down")), matmul_at(lc.fm, dx));
        Matrix du(seq, cfg.ffn_dim);
        Matrix dg(seq, cfg.ffn_dim);
        for (std::size_t i = 0; i < dfm.data.size(); ++i) {
            du.data[i] = dfm.data[i] * silu(lc.g.data[i]);
            dg.data[i] = dfm.data[i] * lc.u.data[i] * silu_grad(lc.g.data[i]);
        }
        add_entry(grads.at(ffn_tensor_name(l, "gate")), matmul_at(lc.x_mid, dg));
        add_entry(grads.at(ffn_tensor_name(l, "up")), matmul_at(lc.x_mid, du));
        Matrix dx_mid = dx;  // residual path
        add_inplace(dx_mid, matmul_bt(dg, gate));
        add_inplace(dx_mid, matmul_bt(du, up));

        // Attention: x_mid = x_in + sum_h (A_h * x_in*wv_h) * wo_h
        Matrix dx_in = dx_mid;  // residual path
        TensorEntry& gwq = grads.at(attn_tensor_name(l, "wq"));
        TensorEntry& gwk = grads.at(attn_tensor_name(l, "wk"));
        TensorEntry& gwv = grads.at(attn_tensor_name(l, "wv"));
        TensorEntry& gwo = grads.at(attn_tensor_name(l, "wo"));
        for (std::size_t h = 0; h < cfg.heads_per_layer; ++h) {
            const HeadSlices& s = lc.slices[h];
            const Matrix& a = lc.attn[h];

            const Matrix doh = matmul_bt(dx_mid, s.wo);
            add_row_block(gwo, matmul_at(lc.o[h], dx_mid), h);

            Matrix da = matmul_bt(doh, lc.v[h]);
            const Matrix dvh = matmul_at(a, doh);

            // softmax backward, rows independent; masked entries have a=0
            Matrix ds(seq, seq);
            for (std::size_t i = 0; i < seq; ++i) {
                double inner = 0.0;
                for (std::size_t j = 0; j <= i; ++j) inner += da(i, j) * a(i, j);
                for (std::size_t j = 0; j <= i; ++j)
                    ds(i, j) = a(i, j) * (da(i, j) - inner) * scale;
            }

            const Matrix dqh = matmul(ds, lc.k[h]);
            const Matrix dkh = matmul_at(ds, lc.q[h]);

            add_col_block(gwq, matmul_at(lc.x_in, dqh), h);
            add_col_block(gwk, matmul_at(lc.x_in, dkh), h);
            add_col_block(gwv, matmul_at(lc.x_in, dvh), h);

            add_inplace(dx_in, matmul_bt(dqh, s.wq));
            add_inplace(dx_in, matmul_bt(dkh, s.wk));
            add_inplace(dx_in, matmul_bt(dvh, s.wv));
        }
        dx = std::move(dx_in);
    }

    TensorEntry& gembed = grads.at("embed.tok");
    const std::size_t d = cfg.embed_dim;
    for (std::size_t t = 0; t < seq; ++t)
        for (std::size_t c = 0; c < d; ++c) gembed.data[x.ids[t] * d + c] += dx(t, c);

    return grads;
}

}  // namespace headshare
