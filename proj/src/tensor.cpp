#include "sap/tensor.hpp"

#include <atomic>
#include <bit>
#include <cmath>
#include <cstring>
#include <iostream>
#include <mutex>
#include <string>

#include "sap/error.hpp"
#include "sap/rng.hpp"

namespace sap {

namespace {
std::atomic<bool> g_warnings{true};
std::mutex g_warn_mutex;
}  // namespace

void warn(const std::string& message) {
    if (!g_warnings.load()) return;
    std::lock_guard<std::mutex> lock(g_warn_mutex);
    std::cerr << "warning: " << message << '\n';
}

bool set_warnings_enabled(bool enabled) { return g_warnings.exchange(enabled); }

std::size_t shape_product(std::span<const std::size_t> shape) {
    std::size_t n = 1;
    for (std::size_t s : shape) n *= s;
    return n;
}

Tensor::Tensor() : shape_{0} {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<float> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    require(!shape_.empty(), ErrorCode::kInvalidArgument, "tensor shape must have rank >= 1");
    require(shape_product(shape_) == data_.size(), ErrorCode::kInvalidArgument,
            "tensor shape/data mismatch: shape product " + std::to_string(shape_product(shape_)) +
                " vs " + std::to_string(data_.size()) + " values");
}

Tensor Tensor::zeros(std::vector<std::size_t> shape) {
    const std::size_t n = shape_product(shape);
    return Tensor(std::move(shape), std::vector<float>(n, 0.0f));
}

std::size_t Tensor::dim(std::size_t axis) const {
    require(axis < shape_.size(), ErrorCode::kInvalidArgument, "tensor axis out of range");
    return shape_[axis];
}

std::span<const float> Tensor::row(std::size_t i) const {
    require(rank() == 2, ErrorCode::kInvalidArgument, "row() needs a rank-2 tensor");
    require(i < shape_[0], ErrorCode::kInvalidArgument, "row index out of range");
    return std::span<const float>(data_).subspan(i * shape_[1], shape_[1]);
}

std::span<float> Tensor::row(std::size_t i) {
    require(rank() == 2, ErrorCode::kInvalidArgument, "row() needs a rank-2 tensor");
    require(i < shape_[0], ErrorCode::kInvalidArgument, "row index out of range");
    return std::span<float>(data_).subspan(i * shape_[1], shape_[1]);
}

Tensor Tensor::gather_rows(std::span<const std::uint32_t> indices) const {
    require(rank() == 2, ErrorCode::kInvalidArgument, "gather_rows() needs a rank-2 tensor");
    const std::size_t d = shape_[1];
    std::vector<float> out;
    out.reserve(indices.size() * d);
    for (std::uint32_t i : indices) {
        auto r = row(i);
        out.insert(out.end(), r.begin(), r.end());
    }
    return Tensor({indices.size(), d}, std::move(out));
}

bool Tensor::all_finite() const noexcept {
    for (float v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

bool bitwise_equal(const Tensor& a, const Tensor& b) noexcept {
    if (a.shape() != b.shape()) return false;
    if (a.size() == 0) return true;
    return std::memcmp(a.data().data(), b.data().data(), a.size() * sizeof(float)) == 0;
}

// ---------------------------------------------------------------------------

std::uint64_t splitmix64(std::uint64_t& state) noexcept {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

std::uint64_t fnv1a64(std::string_view bytes) noexcept {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    return h;
}

Rng::Rng(std::uint64_t seed) {
    std::uint64_t sm = seed;
    for (auto& s : s_) s = splitmix64(sm);
}

Rng Rng::stream(std::uint64_t seed, std::string_view key) {
    std::uint64_t mix = seed;
    const std::uint64_t a = splitmix64(mix);
    return Rng(a ^ fnv1a64(key));
}

std::uint64_t Rng::next_u64() noexcept {
    const std::uint64_t result = std::rotl(s_[1] * 5, 7) * 9;
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = std::rotl(s_[3], 45);
    return result;
}

std::uint64_t Rng::uniform_below(std::uint64_t bound) noexcept {
    if (bound <= 1) return 0;
    unsigned __int128 m = static_cast<unsigned __int128>(next_u64()) * bound;
    auto low = static_cast<std::uint64_t>(m);
    if (low < bound) {
        const std::uint64_t threshold = (0 - bound) % bound;
        while (low < threshold) {
            m = static_cast<unsigned __int128>(next_u64()) * bound;
            low = static_cast<std::uint64_t>(m);
        }
    }
    return static_cast<std::uint64_t>(m >> 64);
}

double Rng::uniform01() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double Rng::normal() noexcept {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    double u1 = uniform01();
    while (u1 <= 0.0) u1 = uniform01();
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
}

}  // namespace sap
