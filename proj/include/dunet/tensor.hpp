#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "dunet/error.hpp"

namespace dunet {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

/// Dense row-major buffer. Signals are [channels, time], conv weights are
/// [out, in, kernel] (or [in, out, kernel] for transposed convolutions) and
/// separated sources are [sources, channels, time].
template <typename Scalar>
class Tensor {
 public:
  using value_type = Scalar;

  Tensor() = default;

  explicit Tensor(Shape shape, Scalar fill = Scalar(0))
      : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

  Tensor(Shape shape, std::vector<Scalar> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != shape_size(shape_))
      throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                           " does not match shape " + shape_str(shape_));
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<Scalar> data() noexcept { return data_; }
  std::span<const Scalar> data() const noexcept { return data_; }
  Scalar* ptr() noexcept { return data_.data(); }
  const Scalar* ptr() const noexcept { return data_.data(); }

  Scalar& operator[](std::size_t i) noexcept { return data_[i]; }
  const Scalar& operator[](std::size_t i) const noexcept { return data_[i]; }

  /// Element of a rank-2 [channels, time] tensor.
  Scalar& at(std::size_t c, std::size_t t) noexcept { return data_[c * shape_.back() + t]; }
  const Scalar& at(std::size_t c, std::size_t t) const noexcept { return data_[c * shape_.back() + t]; }

  /// Row of a rank-2 tensor, or slab `i` along the leading axis in general.
  std::span<Scalar> row(std::size_t i) noexcept {
    const std::size_t stride = data_.size() / shape_.front();
    return std::span<Scalar>(data_).subspan(i * stride, stride);
  }
  std::span<const Scalar> row(std::size_t i) const noexcept {
    const std::size_t stride = data_.size() / shape_.front();
    return std::span<const Scalar>(data_).subspan(i * stride, stride);
  }

  void fill(Scalar v) { std::fill(data_.begin(), data_.end(), v); }

  /// Same buffer, new extents; the element count must not change.
  Tensor reshaped(Shape shape) const& {
    if (shape_size(shape) != data_.size())
      throw DimensionError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
    return Tensor(std::move(shape), data_);
  }
  Tensor reshaped(Shape shape) && {
    if (shape_size(shape) != data_.size())
      throw DimensionError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
    return Tensor(std::move(shape), std::move(data_));
  }

  template <typename Other>
  Tensor<Other> cast() const {
    return Tensor<Other>(shape_, std::vector<Other>(data_.begin(), data_.end()));
  }

  bool operator==(const Tensor&) const = default;

 private:
  Shape shape_;
  std::vector<Scalar> data_;
};

}  // namespace dunet
