#include "headshare/similarity.hpp"

#include <algorithm>
#include <cmath>
#include <initializer_list>
#include <vector>

#include "headshare/error.hpp"

namespace headshare {

const char* match_function_name(MatchFunction f) {
    switch (f) {
        case MatchFunction::QOnly: return "q";
        case MatchFunction::KOnly: return "k";
        case MatchFunction::VOnly: return "v";
        case MatchFunction::QKVSeparate: return "separate";
        case MatchFunction::QKVConcat: return "qkv";
        case MatchFunction::QKConcat: return "qk";
    }
    return "qk";
}

MatchFunction match_function_from_name(const std::string& name) {
    if (name == "q") return MatchFunction::QOnly;
    if (name == "k") return MatchFunction::KOnly;
    if (name == "v") return MatchFunction::VOnly;
    if (name == "separate") return MatchFunction::QKVSeparate;
    if (name == "qkv") return MatchFunction::QKVConcat;
    if (name == "qk") return MatchFunction::QKConcat;
    fail("UsageError", "unknown match function: " + name +
                           " (expected one of q, k, v, qkv, qk, separate)");
}

double cosine(std::span<const double> u, std::span<const double> v) {
    if (u.size() != v.size() || u.empty())
        fail("LengthMismatch", "cosine requires equal non-empty lengths");
    double dot = 0.0, nu2 = 0.0, nv2 = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        dot += u[i] * v[i];
        nu2 += u[i] * u[i];
        nv2 += v[i] * v[i];
    }
    const double nu = std::sqrt(nu2);
    const double nv = std::sqrt(nv2);
    if (nu < 1e-30 || nv < 1e-30) fail("ZeroVector", "cosine of a (near-)zero vector");
    // Identical inputs score exactly 1; weight tying relies on this.
    if (std::equal(u.begin(), u.end(), v.begin())) return 1.0;
    return dot / (nu * nv);
}

double attention_map_similarity(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) fail("ShapeMismatch", "attention maps differ in shape");
    return cosine(a.data, b.data);
}

namespace {

// Row-major flattening of the column-wise concatenation of equally-tall blocks.
std::vector<double> flatten_concat(std::initializer_list<const Matrix*> blocks) {
    std::size_t total = 0;
    for (const Matrix* m : blocks) total += m->data.size();
    std::vector<double> out;
    out.reserve(total);
    const std::size_t rows = (*blocks.begin())->rows;
    for (std::size_t r = 0; r < rows; ++r) {
        for (const Matrix* m : blocks) {
            const double* row = m->data.data() + r * m->cols;
            out.insert(out.end(), row, row + m->cols);
        }
    }
    return out;
}

}  // namespace

MatchScore match_score(const TensorStore& store, const ModelConfig& cfg,
                       HeadRef i, HeadRef j, MatchFunction f) {
    if (i == j) fail("SameHead", "match_score requires two distinct heads");
    const HeadSlices a = head_slices(store, cfg, i);
    const HeadSlices b = head_slices(store, cfg, j);

    MatchScore result;
    result.pair = {i, j};
    switch (f) {
        case MatchFunction::QOnly:
            result.score = cosine(a.wq.data, b.wq.data);
            break;
        case MatchFunction::KOnly:
            result.score = cosine(a.wk.data, b.wk.data);
            break;
        case MatchFunction::VOnly:
            result.score = cosine(a.wv.data, b.wv.data);
            break;
        case MatchFunction::QKConcat: {
            const std::vector<double> ua = flatten_concat({&a.wq, &a.wk});
            const std::vector<double> ub = flatten_concat({&b.wq, &b.wk});
            result.score = cosine(ua, ub);
            break;
        }
        case MatchFunction::QKVConcat: {
            const std::vector<double> ua = flatten_concat({&a.wq, &a.wk, &a.wv});
            const std::vector<double> ub = flatten_concat({&b.wq, &b.wk, &b.wv});
            result.score = cosine(ua, ub);
            break;
        }
        case MatchFunction::QKVSeparate: {
            const double sq = cosine(a.wq.data, b.wq.data);
            const double sk = cosine(a.wk.data, b.wk.data);
            const double sv = cosine(a.wv.data, b.wv.data);
            result.per_matrix = {sq, sk, sv};
            result.score = (sq + sk + sv) / 3.0;
            break;
        }
    }
    return result;
}

}  // namespace headshare
