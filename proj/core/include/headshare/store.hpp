#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "headshare/config.hpp"
#include "headshare/matrix.hpp"

namespace headshare {

enum class Dtype { F32, F64 };

const char* dtype_name(Dtype d);
Dtype dtype_from_name(const std::string& s);
std::size_t dtype_size(Dtype d);

struct TensorEntry {
    Dtype dtype = Dtype::F64;
    std::vector<std::size_t> shape;
    std::vector<double> data;  // row-major; f32 payloads are widened in memory

    std::size_t element_count() const;
    Matrix as_matrix() const;  // 2-D entries only

    bool operator==(const TensorEntry&) const = default;
};

// Named dense tensors of a checkpoint. Immutable after load by convention:
// sharing/tying produces a new store instead of editing in place, so any
// number of readers can work concurrently.
class TensorStore {
public:
    using Map = std::map<std::string, TensorEntry>;

    bool has(const std::string& name) const { return entries_.count(name) != 0; }
    const TensorEntry& at(const std::string& name) const;  // MissingTensor
    TensorEntry& at(const std::string& name);
    void put(std::string name, TensorEntry entry);
    const Map& entries() const { return entries_; }

    std::uint64_t total_elements() const;

    const std::optional<ModelConfig>& config() const { return config_; }
    void set_config(std::optional<ModelConfig> cfg) { config_ = std::move(cfg); }

    bool operator==(const TensorStore&) const = default;

private:
    Map entries_;
    std::optional<ModelConfig> config_;
};

// (layer, head) coordinate; ordering is lexicographic.
struct HeadRef {
    std::size_t layer = 0;
    std::size_t head = 0;
    auto operator<=>(const HeadRef&) const = default;
};

// Per-head weight slices: wq/wk/wv are the head's contiguous D x d column
// blocks of the fused projections, wo is its d_v x D row block of the output
// projection. Values are copies with identical numeric content.
struct HeadSlices {
    Matrix wq;
    Matrix wk;
    Matrix wv;
    Matrix wo;
};

std::string attn_tensor_name(std::size_t layer, const char* which);  // wq|wk|wv|wo
std::string ffn_tensor_name(std::size_t layer, const char* which);   // gate|up|down
bool is_canonical_tensor_name(const std::string& name);

// HWS1 container: 4-byte magic, u64 little-endian header length, UTF-8 JSON
// header (names, shapes, dtypes, byte offsets; optional embedded config),
// then the raw little-endian payload in name order.
std::vector<std::uint8_t> save_bytes(const TensorStore& store);
void save_store(const TensorStore& store, const std::string& path);
TensorStore load_bytes(const std::vector<std::uint8_t>& bytes, bool allow_extra = false);
TensorStore load_store(const std::string& path, bool allow_extra = false);

// Same names/shapes/dtypes, all values zero.
TensorStore zeros_like(const TensorStore& store);

HeadSlices head_slices(const TensorStore& store, const ModelConfig& cfg, HeadRef h);

// Overwrites dst's wq/wk/wv/wo slices with src's current values.
void copy_head_slices(TensorStore& store, const ModelConfig& cfg, HeadRef src, HeadRef dst);

}  // namespace headshare
