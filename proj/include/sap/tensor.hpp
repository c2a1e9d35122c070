#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace sap {

/// Row-major float32 array with an explicit shape.
///
/// A default-constructed tensor has shape [0] and no data.
class Tensor {
public:
    Tensor();
    Tensor(std::vector<std::size_t> shape, std::vector<float> data);

    static Tensor zeros(std::vector<std::size_t> shape);

    const std::vector<std::size_t>& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t dim(std::size_t axis) const;
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    std::span<const float> data() const noexcept { return data_; }
    std::span<float> data() noexcept { return data_; }

    /// Row i of a rank-2 tensor.
    std::span<const float> row(std::size_t i) const;
    std::span<float> row(std::size_t i);

    /// Number of rows / columns of a rank-2 tensor.
    std::size_t rows() const { return dim(0); }
    std::size_t cols() const { return dim(1); }

    /// Rows picked by index, in the given order. Rank-2 only.
    Tensor gather_rows(std::span<const std::uint32_t> indices) const;

    bool all_finite() const noexcept;

private:
    std::vector<std::size_t> shape_;
    std::vector<float> data_;
};

std::size_t shape_product(std::span<const std::size_t> shape);

/// Equal shape and bit-identical payload.
bool bitwise_equal(const Tensor& a, const Tensor& b) noexcept;

}  // namespace sap
