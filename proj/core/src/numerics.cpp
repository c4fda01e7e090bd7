#include "fasp/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "fasp/error.hpp"

namespace fasp {
namespace {

std::string shape_string(const std::vector<std::size_t>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

void require_rank2(const TensorF32& t, std::string_view what) {
  if (t.rank() != 2) {
    throw ShapeError(std::string(what) + ": expected a matrix, got shape " +
                     shape_string(t.shape()));
  }
}

}  // namespace

std::size_t shape_product(std::span<const std::size_t> shape) noexcept {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

TensorF32::TensorF32(std::vector<std::size_t> shape)
    : shape_(std::move(shape)), data_(shape_product(shape_), 0.0f) {}

TensorF32::TensorF32(std::vector<std::size_t> shape, std::vector<float> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_product(shape_) != data_.size()) {
    throw ShapeError("tensor shape " + shape_string(shape_) + " does not match " +
                     std::to_string(data_.size()) + " elements");
  }
}

std::size_t TensorF32::rows() const noexcept {
  if (shape_.empty()) return 0;
  return shape_.size() == 1 ? 1 : shape_[0];
}

std::size_t TensorF32::cols() const noexcept {
  if (shape_.empty()) return 0;
  return shape_.back();
}

void require_finite(const TensorF32& t, std::string_view what) {
  for (float v : t.data()) {
    if (!std::isfinite(v)) throw NonFiniteError(std::string(what) + " produced a non-finite value");
  }
}

TensorF32 matmul(const TensorF32& a, const TensorF32& b) {
  require_rank2(a, "matmul lhs");
  require_rank2(b, "matmul rhs");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw ShapeError("matmul: inner dimensions disagree (" + shape_string(a.shape()) + " x " +
                     shape_string(b.shape()) + ")");
  }
  TensorF32 out({m, n});
  auto od = out.data();
  auto ad = a.data();
  auto bd = b.data();
  for (std::size_t i = 0; i < m; ++i) {
    float* orow = od.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const float av = ad[i * k + p];
      const float* brow = bd.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
  require_finite(out, "matmul");
  return out;
}

void add_row_bias(TensorF32& x, const TensorF32& bias) {
  if (bias.size() != x.cols()) {
    throw ShapeError("bias length " + std::to_string(bias.size()) + " does not match " +
                     std::to_string(x.cols()) + " columns");
  }
  auto b = bias.data();
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto row = x.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] += b[c];
  }
  require_finite(x, "bias add");
}

TensorF32 softmax_rows(const TensorF32& x) {
  TensorF32 out = x;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    if (row.empty()) continue;
    const float mx = *std::max_element(row.begin(), row.end());
    float sum = 0.0f;
    for (float& v : row) {
      v = std::exp(v - mx);
      sum += v;
    }
    for (float& v : row) v /= sum;
  }
  require_finite(out, "softmax");
  return out;
}

TensorF32 layer_norm(const TensorF32& x, const TensorF32& gain, const TensorF32& bias, float eps) {
  if (!(eps > 0.0f)) throw InvalidArgumentError("layer_norm: eps must be positive");
  const std::size_t n = x.cols();
  if (gain.size() != n || bias.size() != n) {
    throw ShapeError("layer_norm: gain/bias length must equal " + std::to_string(n));
  }
  TensorF32 out = x;
  auto g = gain.data();
  auto b = bias.data();
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    float mean = 0.0f;
    for (float v : row) mean += v;
    mean /= static_cast<float>(n);
    float var = 0.0f;
    for (float v : row) var += (v - mean) * (v - mean);
    var /= static_cast<float>(n);
    const float inv = 1.0f / std::sqrt(var + eps);
    for (std::size_t c = 0; c < n; ++c) row[c] = (row[c] - mean) * inv * g[c] + b[c];
  }
  require_finite(out, "layer_norm");
  return out;
}

TensorF32 gelu(const TensorF32& x) {
  constexpr float kSqrt2OverPi = 0.7978845608028654f;
  TensorF32 out = x;
  for (float& v : out.data()) {
    v = 0.5f * v * (1.0f + std::tanh(kSqrt2OverPi * (v + 0.044715f * v * v * v)));
  }
  require_finite(out, "gelu");
  return out;
}

std::vector<std::size_t> argsort(std::span<const double> values, SortOrder order) {
  std::vector<std::size_t> idx(values.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (order == SortOrder::kAscending) {
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  } else {
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t a, std::size_t b) { return values[a] > values[b]; });
  }
  return idx;
}

double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw InvalidArgumentError("pearson: length mismatch");
  if (x.size() < 2) throw InvalidArgumentError("pearson: need at least two points");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  const auto constant = [](std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [&](double e) { return e == v.front(); });
  };
  if (constant(x) || constant(y) || sxx == 0.0 || syy == 0.0) {
    throw UndefinedCorrelationError("pearson: correlation undefined for a constant vector");
  }
  const double r = sxy / std::sqrt(sxx * syy);
  return std::clamp(r, -1.0, 1.0);
}

}  // namespace fasp
