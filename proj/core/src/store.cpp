#include "headshare/store.hpp"

#include <cstring>
#include <fstream>
#include <utility>

#include "json.hpp"

#include "headshare/error.hpp"

namespace headshare {

using nlohmann::json;

namespace {

constexpr char kMagic[4] = {'H', 'W', 'S', '1'};

void append_u64_le(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t read_u64_le(const std::uint8_t* p) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return v;
}

void append_f64_le(std::vector<std::uint8_t>& out, double d) {
    std::uint64_t bits;
    std::memcpy(&bits, &d, sizeof(bits));
    append_u64_le(out, bits);
}

void append_f32_le(std::vector<std::uint8_t>& out, float f) {
    std::uint32_t bits;
    std::memcpy(&bits, &f, sizeof(bits));
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

double read_f64_le(const std::uint8_t* p) {
    std::uint64_t bits = read_u64_le(p);
    double d;
    std::memcpy(&d, &bits, sizeof(d));
    return d;
}

float read_f32_le(const std::uint8_t* p) {
    std::uint32_t bits = 0;
    for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(p[i]) << (8 * i);
    float f;
    std::memcpy(&f, &bits, sizeof(f));
    return f;
}

json config_to_json(const ModelConfig& cfg) {
    return json{{"num_layers", cfg.num_layers},
                {"heads_per_layer", cfg.heads_per_layer},
                {"embed_dim", cfg.embed_dim},
                {"head_dim_q", cfg.head_dim_q},
                {"head_dim_k", cfg.head_dim_k},
                {"head_dim_v", cfg.head_dim_v},
                {"ffn_dim", cfg.ffn_dim},
                {"vocab_size", cfg.vocab_size}};
}

ModelConfig config_from_json(const json& j) {
    ModelConfig cfg;
    cfg.num_layers = j.at("num_layers").get<std::size_t>();
    cfg.heads_per_layer = j.at("heads_per_layer").get<std::size_t>();
    cfg.embed_dim = j.at("embed_dim").get<std::size_t>();
    cfg.head_dim_q = j.at("head_dim_q").get<std::size_t>();
    cfg.head_dim_k = j.at("head_dim_k").get<std::size_t>();
    cfg.head_dim_v = j.at("head_dim_v").get<std::size_t>();
    cfg.ffn_dim = j.at("ffn_dim").get<std::size_t>();
    cfg.vocab_size = j.at("vocab_size").get<std::size_t>();
    return cfg;
}

bool all_digits(const std::string& s) {
    if (s.empty()) return false;
    for (char c : s) {
        if (c < '0' || c > '9') return false;
    }
    return true;
}

}  // namespace

const char* dtype_name(Dtype d) { return d == Dtype::F32 ? "f32" : "f64"; }

Dtype dtype_from_name(const std::string& s) {
    if (s == "f32") return Dtype::F32;
    if (s == "f64") return Dtype::F64;
    fail("HeaderInvalid", "unknown dtype: " + s);
}

std::size_t dtype_size(Dtype d) { return d == Dtype::F32 ? 4 : 8; }

std::size_t TensorEntry::element_count() const {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

Matrix TensorEntry::as_matrix() const {
    if (shape.size() != 2) fail("ShapeMismatch", "tensor is not 2-D");
    Matrix m(shape[0], shape[1]);
    m.data = data;
    return m;
}

const TensorEntry& TensorStore::at(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) fail("MissingTensor", name);
    return it->second;
}

TensorEntry& TensorStore::at(const std::string& name) {
    auto it = entries_.find(name);
    if (it == entries_.end()) fail("MissingTensor", name);
    return it->second;
}

void TensorStore::put(std::string name, TensorEntry entry) {
    if (entry.data.size() != entry.element_count())
        fail("ShapeMismatch", name + ": data length does not match shape");
    entries_[std::move(name)] = std::move(entry);
}

std::uint64_t TensorStore::total_elements() const {
    std::uint64_t n = 0;
    for (const auto& [name, e] : entries_) n += e.element_count();
    return n;
}

std::string attn_tensor_name(std::size_t layer, const char* which) {
    return "layer." + std::to_string(layer) + ".attn." + which;
}

std::string ffn_tensor_name(std::size_t layer, const char* which) {
    return "layer." + std::to_string(layer) + ".ffn." + which;
}

bool is_canonical_tensor_name(const std::string& name) {
    if (name == "embed.tok" || name == "head.out") return true;
    const std::string prefix = "layer.";
    if (name.rfind(prefix, 0) != 0) return false;
    const std::size_t idx_begin = prefix.size();
    const std::size_t idx_end = name.find('.', idx_begin);
    if (idx_end == std::string::npos) return false;
    if (!all_digits(name.substr(idx_begin, idx_end - idx_begin))) return false;
    const std::string rest = name.substr(idx_end + 1);
    return rest == "attn.wq" || rest == "attn.wk" || rest == "attn.wv" ||
           rest == "attn.wo" || rest == "ffn.gate" || rest == "ffn.up" ||
           rest == "ffn.down";
}

std::vector<std::uint8_t> save_bytes(const TensorStore& store) {
    json tensors = json::object();
    std::uint64_t offset = 0;
    for (const auto& [name, e] : store.entries()) {
        const std::uint64_t nbytes =
            static_cast<std::uint64_t>(e.element_count()) * dtype_size(e.dtype);
        tensors[name] = json{{"dtype", dtype_name(e.dtype)},
                             {"shape", e.shape},
                             {"offset", offset},
                             {"nbytes", nbytes}};
        offset += nbytes;
    }
    json header = {{"format", {{"version", 1}, {"head_layout", "contiguous"}}},
                   {"tensors", tensors}};
    if (store.config()) header["config"] = config_to_json(*store.config());
    const std::string htext = header.dump();

    std::vector<std::uint8_t> out;
    out.reserve(12 + htext.size() + offset);
    out.insert(out.end(), kMagic, kMagic + 4);
    append_u64_le(out, htext.size());
    out.insert(out.end(), htext.begin(), htext.end());
    for (const auto& [name, e] : store.entries()) {
        if (e.dtype == Dtype::F32) {
            for (double v : e.data) append_f32_le(out, static_cast<float>(v));
        } else {
            for (double v : e.data) append_f64_le(out, v);
        }
    }
    return out;
}

void save_store(const TensorStore& store, const std::string& path) {
    const std::vector<std::uint8_t> bytes = save_bytes(store);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) fail("IoError", "cannot open for writing: " + path);
    f.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
    if (!f) fail("IoError", "write failed: " + path);
}

TensorStore load_bytes(const std::vector<std::uint8_t>& bytes, bool allow_extra) {
    if (bytes.size() < 12 || std::memcmp(bytes.data(), kMagic, 4) != 0)
        fail("MagicMismatch", "file does not start with HWS1");
    const std::uint64_t hlen = read_u64_le(bytes.data() + 4);
    if (12 + hlen > bytes.size()) fail("TruncatedData", "header extends past end of file");

    json header;
    try {
        header = json::parse(bytes.begin() + 12, bytes.begin() + 12 + static_cast<std::ptrdiff_t>(hlen));
    } catch (const json::exception&) {
        fail("HeaderInvalid", "malformed JSON header");
    }

    TensorStore store;
    const std::uint8_t* payload = bytes.data() + 12 + hlen;
    const std::uint64_t payload_size = bytes.size() - 12 - hlen;

    try {
        if (header.contains("config")) store.set_config(config_from_json(header.at("config")));
        const json& tensors = header.at("tensors");
        if (!tensors.is_object()) fail("HeaderInvalid", "tensors must be an object");
        for (const auto& [name, info] : tensors.items()) {
            if (!allow_extra && !is_canonical_tensor_name(name)) fail("UnknownTensor", name);
            TensorEntry e;
            e.dtype = dtype_from_name(info.at("dtype").get<std::string>());
            e.shape = info.at("shape").get<std::vector<std::size_t>>();
            const std::uint64_t nbytes = info.at("nbytes").get<std::uint64_t>();
            const std::uint64_t offset = info.at("offset").get<std::uint64_t>();
            const std::size_t count = e.element_count();
            if (nbytes != static_cast<std::uint64_t>(count) * dtype_size(e.dtype))
                fail("ShapeMismatch", name + ": declared byte size does not match shape");
            if (offset > payload_size || offset + nbytes > payload_size)
                fail("TruncatedData", name + ": payload extends past end of file");
            e.data.resize(count);
            const std::uint8_t* p = payload + offset;
            if (e.dtype == Dtype::F32) {
                for (std::size_t i = 0; i < count; ++i) e.data[i] = read_f32_le(p + 4 * i);
            } else {
                for (std::size_t i = 0; i < count; ++i) e.data[i] = read_f64_le(p + 8 * i);
            }
            store.put(name, std::move(e));
        }
    } catch (const json::exception&) {
        fail("HeaderInvalid", "header is missing required tensor fields");
    }
    return store;
}

TensorStore load_store(const std::string& path, bool allow_extra) {
    std::ifstream f(path, std::ios::binary);
    if (!f) fail("IoError", "cannot open: " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                    std::istreambuf_iterator<char>());
    return load_bytes(bytes, allow_extra);
}

TensorStore zeros_like(const TensorStore& store) {
    TensorStore out;
    for (const auto& [name, e] : store.entries()) {
        TensorEntry z;
        z.dtype = e.dtype;
        z.shape = e.shape;
        z.data.assign(e.data.size(), 0.0);
        out.put(name, std::move(z));
    }
    out.set_config(store.config());
    return out;
}

namespace {

// Fused attention tensor with its expected shape for the config.
const TensorEntry& fused_attn(const TensorStore& store, std::size_t layer, const char* which,
                              std::size_t expect_rows, std::size_t expect_cols) {
    const std::string name = attn_tensor_name(layer, which);
    const TensorEntry& e = store.at(name);
    if (e.shape.size() != 2 || e.shape[0] != expect_rows || e.shape[1] != expect_cols)
        fail("ShapeMismatch", name + ": unexpected fused shape");
    return e;
}

}  // namespace

HeadSlices head_slices(const TensorStore& store, const ModelConfig& cfg, HeadRef h) {
    cfg.validate();
    if (h.layer >= cfg.num_layers || h.head >= cfg.heads_per_layer)
        fail("HeadOutOfRange",
             "head (" + std::to_string(h.layer) + "," + std::to_string(h.head) + ")");

    const std::size_t d = cfg.embed_dim;
    const std::size_t hq = cfg.heads_per_layer * cfg.head_dim_q;
    const std::size_t hk = cfg.heads_per_layer * cfg.head_dim_k;
    const std::size_t hv = cfg.heads_per_layer * cfg.head_dim_v;

    const TensorEntry& wq = fused_attn(store, h.layer, "wq", d, hq);
    const TensorEntry& wk = fused_attn(store, h.layer, "wk", d, hk);
    const TensorEntry& wv = fused_attn(store, h.layer, "wv", d, hv);
    const TensorEntry& wo = fused_attn(store, h.layer, "wo", hv, d);

    auto col_block = [&](const TensorEntry& e, std::size_t width) {
        Matrix out(d, width);
        const std::size_t fused_cols = e.shape[1];
        const std::size_t c0 = h.head * width;
        for (std::size_t r = 0; r < d; ++r)
            for (std::size_t c = 0; c < width; ++c)
                out(r, c) = e.data[r * fused_cols + c0 + c];
        return out;
    };

    HeadSlices s;
    s.wq = col_block(wq, cfg.head_dim_q);
    s.wk = col_block(wk, cfg.head_dim_k);
    s.wv = col_block(wv, cfg.head_dim_v);

    s.wo = Matrix(cfg.head_dim_v, d);
    const std::size_t r0 = h.head * cfg.head_dim_v;
    for (std::size_t r = 0; r < cfg.head_dim_v; ++r)
        for (std::size_t c = 0; c < d; ++c) s.wo(r, c) = wo.data[(r0 + r) * d + c];
    return s;
}

void copy_head_slices(TensorStore& store, const ModelConfig& cfg, HeadRef src, HeadRef dst) {
    if (dst.layer >= cfg.num_layers || dst.head >= cfg.heads_per_layer)
        fail("HeadOutOfRange",
             "head (" + std::to_string(dst.layer) + "," + std::to_string(dst.head) + ")");
    const HeadSlices from = head_slices(store, cfg, src);

    auto set_col_block = [&](const char* which, const Matrix& block, std::size_t width) {
        TensorEntry& e = store.at(attn_tensor_name(dst.layer, which));
        const std::size_t fused_cols = e.shape[1];
        const std::size_t c0 = dst.head * width;
        for (std::size_t r = 0; r < cfg.embed_dim; ++r)
            for (std::size_t c = 0; c < width; ++c)
                e.data[r * fused_cols + c0 + c] = block(r, c);
    };
    set_col_block("wq", from.wq, cfg.head_dim_q);
    set_col_block("wk", from.wk, cfg.head_dim_k);
    set_col_block("wv", from.wv, cfg.head_dim_v);

    TensorEntry& wo = store.at(attn_tensor_name(dst.layer, "wo"));
    const std::size_t r0 = dst.head * cfg.head_dim_v;
    for (std::size_t r = 0; r < cfg.head_dim_v; ++r)
        for (std::size_t c = 0; c < cfg.embed_dim; ++c)
            wo.data[(r0 + r) * cfg.embed_dim + c] = from.wo(r, c);
}

}  // namespace headshare
