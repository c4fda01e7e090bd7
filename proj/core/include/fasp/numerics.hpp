#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

namespace fasp {

/// Dense row-major float tensor. Every op in this header rejects non-finite
/// results with NonFiniteError instead of returning them.
class TensorF32 {
 public:
  TensorF32() = default;
  explicit TensorF32(std::vector<std::size_t> shape);
  TensorF32(std::vector<std::size_t> shape, std::vector<float> data);

  const std::vector<std::size_t>& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  // Rank-2 accessors. A rank-1 tensor is treated as a single row.
  std::size_t rows() const noexcept;
  std::size_t cols() const noexcept;

  std::span<float> data() noexcept { return data_; }
  std::span<const float> data() const noexcept { return data_; }

  std::span<float> row(std::size_t r) noexcept { return {data_.data() + r * cols(), cols()}; }
  std::span<const float> row(std::size_t r) const noexcept {
    return {data_.data() + r * cols(), cols()};
  }

  float& at(std::size_t r, std::size_t c) noexcept { return data_[r * cols() + c]; }
  float at(std::size_t r, std::size_t c) const noexcept { return data_[r * cols() + c]; }

  friend bool operator==(const TensorF32&, const TensorF32&) = default;

 private:
  std::vector<std::size_t> shape_;
  std::vector<float> data_;
};

std::size_t shape_product(std::span<const std::size_t> shape) noexcept;

/// Throws NonFiniteError naming `what` if any element is NaN or infinite.
void require_finite(const TensorF32& t, std::string_view what);

TensorF32 matmul(const TensorF32& a, const TensorF32& b);

/// x += row-vector bias, broadcast over rows.
void add_row_bias(TensorF32& x, const TensorF32& bias);

TensorF32 softmax_rows(const TensorF32& x);

TensorF32 layer_norm(const TensorF32& x, const TensorF32& gain, const TensorF32& bias, float eps);

/// tanh-approximated GELU, element-wise.
TensorF32 gelu(const TensorF32& x);

enum class SortOrder { kAscending, kDescending };

/// Stable index sort; equal values keep ascending index order.
std::vector<std::size_t> argsort(std::span<const double> values, SortOrder order);

/// Sample Pearson correlation. Throws UndefinedCorrelationError when either
/// input is constant, InvalidArgumentError on length mismatch or fewer than two points.
double pearson(std::span<const double> x, std::span<const double> y);

}  // namespace fasp
