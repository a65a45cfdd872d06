#pragma once

// Stride-1, same-padded dilated 1-D correlation kernels expressed as one GEMM
// per kernel tap. For tap j the input is read at offset j*d - pad_left, so
// each tap is a dense product between a [rows, cols] weight slice and a
// column window of the signal with leading dimension T. No im2col buffer.

#include <Eigen/Core>

#include <algorithm>
#include <cstddef>
#include <span>
#include <vector>

namespace dunet::kernels {

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using ConstView = Eigen::Map<const RowMatrix<Scalar>, Eigen::Unaligned, Eigen::OuterStride<>>;
template <typename Scalar>
using View = Eigen::Map<RowMatrix<Scalar>, Eigen::Unaligned, Eigen::OuterStride<>>;

/// Row-major C[m, n] += op(A) * op(B), with leading dimensions as in BLAS.
template <typename Scalar>
void gemm_acc(bool trans_a, bool trans_b, int m, int n, int k, const Scalar* a, int lda, const Scalar* b, int ldb,
              Scalar* c, int ldc) {
  View<Scalar> cv(c, m, n, Eigen::OuterStride<>(ldc));
  const ConstView<Scalar> av(a, trans_a ? k : m, trans_a ? m : k, Eigen::OuterStride<>(lda));
  const ConstView<Scalar> bv(b, trans_b ? n : k, trans_b ? k : n, Eigen::OuterStride<>(ldb));
  if (trans_a && trans_b) cv.noalias() += av.transpose() * bv.transpose();
  else if (trans_a) cv.noalias() += av.transpose() * bv;
  else if (trans_b) cv.noalias() += av * bv.transpose();
  else cv.noalias() += av * bv;
}

/// Geometry shared by conv1d and its adjoint.
struct ConvGeometry {
  std::size_t time = 0;
  std::size_t kernel = 1;
  std::size_t dilation = 1;

  /// Same padding: p = (k-1)d, floor(p/2) on the left, the rest on the right.
  std::ptrdiff_t pad_left() const { return static_cast<std::ptrdiff_t>((kernel - 1) * dilation / 2); }

  std::ptrdiff_t shift(std::size_t tap) const {
    return static_cast<std::ptrdiff_t>(tap * dilation) - pad_left();
  }

  /// Output window [first, last) whose shifted input stays inside [0, time).
  struct Window {
    std::ptrdiff_t first = 0, last = 0;
    std::ptrdiff_t shift = 0;
    bool empty() const { return last <= first; }
    int length() const { return static_cast<int>(last - first); }
  };

  Window window(std::size_t tap) const {
    const std::ptrdiff_t s = shift(tap);
    const auto t = static_cast<std::ptrdiff_t>(time);
    Window w;
    w.shift = s;
    w.first = std::clamp<std::ptrdiff_t>(-s, 0, t);
    w.last = std::clamp<std::ptrdiff_t>(t - s, 0, t);
    return w;
  }
};

/// Reorders [a, b, k] weights into k contiguous [a, b] slices.
template <typename Scalar>
std::vector<Scalar> pack_taps(std::span<const Scalar> weight, std::size_t a, std::size_t b, std::size_t k) {
  std::vector<Scalar> packed(weight.size());
  for (std::size_t i = 0; i < a; ++i)
    for (std::size_t l = 0; l < b; ++l)
      for (std::size_t j = 0; j < k; ++j) packed[(j * a + i) * b + l] = weight[(i * b + l) * k + j];
  return packed;
}

template <typename Scalar>
void unpack_taps_add(std::span<const Scalar> packed, std::span<Scalar> weight, std::size_t a, std::size_t b,
                     std::size_t k) {
  for (std::size_t i = 0; i < a; ++i)
    for (std::size_t l = 0; l < b; ++l)
      for (std::size_t j = 0; j < k; ++j) weight[(i * b + l) * k + j] += packed[(j * a + i) * b + l];
}

/// out[r, t] += sum_j sum_c W_j[r, c] * in[c, t + shift_j]   (W packed [k][rows][cols]).
template <typename Scalar>
void correlate(const ConvGeometry& g, const Scalar* packed, std::size_t rows, std::size_t cols, const Scalar* in,
               Scalar* out) {
  const int ld = static_cast<int>(g.time);
  const int r = static_cast<int>(rows), c = static_cast<int>(cols);
  for (std::size_t j = 0; j < g.kernel; ++j) {
    const auto w = g.window(j);
    if (w.empty()) continue;
    gemm_acc<Scalar>(false, false, r, w.length(), c, packed + j * rows * cols, c, in + (w.first + w.shift), ld,
                     out + w.first, ld);
  }
}

/// Adjoint of correlate: in[c, t + shift_j] += sum_j sum_r W_j[r, c] * out[r, t].
template <typename Scalar>
void correlate_adjoint(const ConvGeometry& g, const Scalar* packed, std::size_t rows, std::size_t cols,
                       const Scalar* out, Scalar* in) {
  const int ld = static_cast<int>(g.time);
  const int r = static_cast<int>(rows), c = static_cast<int>(cols);
  for (std::size_t j = 0; j < g.kernel; ++j) {
    const auto w = g.window(j);
    if (w.empty()) continue;
    gemm_acc<Scalar>(true, false, c, w.length(), r, packed + j * rows * cols, c, out + w.first, ld,
                     in + (w.first + w.shift), ld);
  }
}

/// dW_j[r, c] += sum_t out[r, t] * in[c, t + shift_j]   (dW packed [k][rows][cols]).
template <typename Scalar>
void correlate_weight_grad(const ConvGeometry& g, const Scalar* out, std::size_t rows, const Scalar* in,
                           std::size_t cols, Scalar* packed_grad) {
  const int ld = static_cast<int>(g.time);
  const int r = static_cast<int>(rows), c = static_cast<int>(cols);
  for (std::size_t j = 0; j < g.kernel; ++j) {
    const auto w = g.window(j);
    if (w.empty()) continue;
    gemm_acc<Scalar>(false, true, r, c, w.length(), out + w.first, ld, in + (w.first + w.shift), ld,
                     packed_grad + j * rows * cols, c);
  }
}

}  // namespace dunet::kernels
