#pragma once

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <sys/wait.h>
#include <vector>

#include "headshare/config.hpp"
#include "headshare/error.hpp"
#include "headshare/store.hpp"

namespace helpers {

// Runs f and returns the Error code it threw, or "" if it did not throw.
inline std::string error_code_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const headshare::Error& e) {
        return e.code();
    }
    return "";
}

inline headshare::ModelConfig small_config(std::size_t layers = 2, std::size_t heads = 2) {
    headshare::ModelConfig cfg;
    cfg.num_layers = layers;
    cfg.heads_per_layer = heads;
    cfg.embed_dim = heads * 3;
    cfg.head_dim_q = 3;
    cfg.head_dim_k = 3;
    cfg.head_dim_v = 3;
    cfg.ffn_dim = 8;
    cfg.vocab_size = 11;
    return cfg;
}

// Scales one head's fused column block in place.
inline void scale_head_matrix(headshare::TensorStore& store, const headshare::ModelConfig& cfg,
                              headshare::HeadRef h, const char* which, std::size_t width,
                              double factor) {
    headshare::TensorEntry& e = store.at(headshare::attn_tensor_name(h.layer, which));
    const std::size_t fused_cols = e.shape[1];
    const std::size_t c0 = h.head * width;
    for (std::size_t r = 0; r < cfg.embed_dim; ++r)
        for (std::size_t c = 0; c < width; ++c) e.data[r * fused_cols + c0 + c] *= factor;
}

inline std::vector<unsigned char> read_file_bytes(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

inline std::string read_file_text(const std::string& path) {
    std::ifstream f(path);
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

// Scratch directory under the test working directory; wiped on creation,
// left behind afterwards for inspection.
inline std::filesystem::path scratch_dir(const std::string& name) {
    const std::filesystem::path p = std::filesystem::current_path() / ("scratch_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

struct CliResult {
    int exit_code = -1;
    std::string out;
    std::string err;
};

#ifdef HEADSHARE_CLI_PATH
inline CliResult run_cli(const std::string& args, const std::filesystem::path& cwd) {
    const std::string out_path = (cwd / "_stdout.txt").string();
    const std::string err_path = (cwd / "_stderr.txt").string();
    const std::string cmd = "cd '" + cwd.string() + "' && '" + HEADSHARE_CLI_PATH + "' " + args +
                            " > '" + out_path + "' 2> '" + err_path + "'";
    const int status = std::system(cmd.c_str());
    CliResult r;
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = read_file_text(out_path);
    r.err = read_file_text(err_path);
    return r;
}
#endif

}  // namespace helpers
