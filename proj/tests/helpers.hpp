#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include <unistd.h>

#include <doctest.h>

#include "sap/error.hpp"
#include "sap/rng.hpp"
#include "sap/tensor.hpp"
#include "sap/tensor_store.hpp"

namespace sap::test {

namespace fs = std::filesystem;

/// Scratch directory removed on scope exit.
class TempDir {
public:
    explicit TempDir(const std::string& tag = "sap") {
        static std::atomic<unsigned> counter{0};
        path_ = fs::temp_directory_path() /
                (tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter.fetch_add(1)));
        fs::remove_all(path_);
        fs::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const fs::path& path() const { return path_; }
    fs::path operator/(const std::string& name) const { return path_ / name; }

private:
    fs::path path_;
};

template <class Fn>
ErrorCode error_code_of(Fn&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected sap::Error");
    return ErrorCode::kInternal;
}

/// Row-normalised random attention for every layer/head, visual tokens first, EOS last.
inline DocumentBundle random_bundle(const std::string& doc_id, std::uint32_t n, std::uint32_t d, std::uint32_t layers,
                                    std::uint32_t heads, std::uint64_t seed) {
    Rng rng = Rng::stream(seed, doc_id);
    const std::uint32_t T = n + 2;
    DocumentBundle b;
    b.doc_id = doc_id;
    b.num_heads = heads;
    b.seq_len = T;
    b.visual_indices.resize(n);
    std::iota(b.visual_indices.begin(), b.visual_indices.end(), 0u);
    b.eos_index = T - 1;
    std::vector<float> emb(static_cast<std::size_t>(n) * d);
    for (auto& v : emb) v = static_cast<float>(rng.normal() / std::sqrt(static_cast<double>(d)));
    b.embeddings = Tensor({n, d}, std::move(emb));
    for (std::uint32_t l = 0; l < layers; ++l) {
        std::vector<float> a(static_cast<std::size_t>(heads) * T * T);
        for (std::size_t r = 0; r < static_cast<std::size_t>(heads) * T; ++r) {
            std::vector<double> row(T);
            double s = 0.0;
            for (auto& x : row) s += (x = rng.uniform(0.01, 1.0));
            for (std::uint32_t j = 0; j < T; ++j) a[r * T + j] = static_cast<float>(row[j] / s);
        }
        b.layers.emplace_back(Tensor({heads, T, T}, std::move(a)));
    }
    return b;
}

inline Tensor matrix(std::size_t rows, std::size_t cols, std::vector<float> data) {
    return Tensor({rows, cols}, std::move(data));
}

}  // namespace sap::test
