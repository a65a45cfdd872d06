#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "dunet/kernels.hpp"
#include "dunet/tape.hpp"

namespace dunet {

namespace detail {

inline void require(bool ok, const std::string& message) {
  if (!ok) throw DimensionError(message);
}

template <typename Scalar>
void require_signal(const Tensor<Scalar>& t, const char* what) {
  require(t.rank() == 2, std::string(what) + " must be [channels, time], got " + shape_str(t.shape()));
}

template <typename Scalar>
void accumulate(Tensor<Scalar>& into, const Tensor<Scalar>& from) {
  for (std::size_t i = 0; i < into.size(); ++i) into[i] += from[i];
}

template <typename Scalar>
void check_conv_args(const Tensor<Scalar>& x, const Tensor<Scalar>& w, const Tensor<Scalar>& b, std::size_t dilation,
                     std::size_t in_axis, std::size_t out_axis) {
  require_signal(x, "conv input");
  require(w.rank() == 3, "conv weight must be rank 3, got " + shape_str(w.shape()));
  if (dilation < 1) throw ParameterError("dilation must be >= 1");
  require(w.dim(in_axis) == x.dim(0), "conv weight expects " + std::to_string(w.dim(in_axis)) +
                                          " input channels, input has " + std::to_string(x.dim(0)));
  require(b.rank() == 1 && b.dim(0) == w.dim(out_axis),
          "conv bias shape " + shape_str(b.shape()) + " does not match weight " + shape_str(w.shape()));
  require(w.dim(2) >= 1, "conv kernel must have at least one tap");
}

}  // namespace detail

/// Same-padded, stride-1 dilated cross-correlation.
/// out[c, t] = bias[c] + sum_{c', j} w[c, c', j] * x[c', t + j*d - floor((k-1)d/2)], zeros outside [0, T).
template <typename Scalar>
Var conv1d(Tape<Scalar>& tape, Var x, Var w, Var b, std::size_t dilation) {
  const auto& xv = tape.value(x);
  const auto& wv = tape.value(w);
  const auto& bv = tape.value(b);
  detail::check_conv_args(xv, wv, bv, dilation, 1, 0);
  const std::size_t cin = wv.dim(1), cout = wv.dim(0), k = wv.dim(2), time = xv.dim(1);
  const kernels::ConvGeometry geom{time, k, dilation};

  Tensor<Scalar> out({cout, time});
  for (std::size_t c = 0; c < cout; ++c) std::fill_n(out.ptr() + c * time, time, bv[c]);
  const auto packed = kernels::pack_taps<Scalar>(wv.data(), cout, cin, k);
  kernels::correlate(geom, packed.data(), cout, cin, xv.ptr(), out.ptr());

  return tape.record(OpKind::conv1d, {x, w, b}, std::move(out), [geom, cin, cout](Tape<Scalar>& t, std::size_t self) {
    const auto& in = t.inputs_of(self);
    const auto& gout = t.grad_buffer(self);
    const auto& xval = t.value_of(in[0]);
    if (t.needs_grad(in[0])) {
      const auto packed_w = kernels::pack_taps<Scalar>(t.value_of(in[1]).data(), cout, cin, geom.kernel);
      kernels::correlate_adjoint(geom, packed_w.data(), cout, cin, gout.ptr(), t.grad_buffer(in[0]).ptr());
    }
    if (t.needs_grad(in[1])) {
      std::vector<Scalar> packed_grad(cout * cin * geom.kernel, Scalar(0));
      kernels::correlate_weight_grad(geom, gout.ptr(), cout, xval.ptr(), cin, packed_grad.data());
      kernels::unpack_taps_add<Scalar>(packed_grad, t.grad_buffer(in[1]).data(), cout, cin, geom.kernel);
    }
    if (t.needs_grad(in[2])) {
      auto& gb = t.grad_buffer(in[2]);
      for (std::size_t c = 0; c < cout; ++c) {
        Scalar s = 0;
        for (std::size_t i = 0; i < geom.time; ++i) s += gout[c * geom.time + i];
        gb[c] += s;
      }
    }
  });
}

/// Adjoint of conv1d with the same geometry. Weight is [C_in, C_out, k], where
/// C_in is this op's input width (the forward conv's output width).
template <typename Scalar>
Var conv1d_transpose(Tape<Scalar>& tape, Var y, Var w, Var b, std::size_t dilation) {
  const auto& yv = tape.value(y);
  const auto& wv = tape.value(w);
  const auto& bv = tape.value(b);
  detail::check_conv_args(yv, wv, bv, dilation, 0, 1);
  const std::size_t cin = wv.dim(0), cout = wv.dim(1), k = wv.dim(2), time = yv.dim(1);
  const kernels::ConvGeometry geom{time, k, dilation};

  Tensor<Scalar> out({cout, time});
  for (std::size_t c = 0; c < cout; ++c) std::fill_n(out.ptr() + c * time, time, bv[c]);
  const auto packed = kernels::pack_taps<Scalar>(wv.data(), cin, cout, k);
  kernels::correlate_adjoint(geom, packed.data(), cin, cout, yv.ptr(), out.ptr());

  return tape.record(OpKind::conv1d_transpose, {y, w, b}, std::move(out),
                     [geom, cin, cout](Tape<Scalar>& t, std::size_t self) {
                       const auto& in = t.inputs_of(self);
                       const auto& gout = t.grad_buffer(self);
                       if (t.needs_grad(in[0])) {
                         const auto packed_w = kernels::pack_taps<Scalar>(t.value_of(in[1]).data(), cin, cout, geom.kernel);
                         kernels::correlate(geom, packed_w.data(), cin, cout, gout.ptr(), t.grad_buffer(in[0]).ptr());
                       }
                       if (t.needs_grad(in[1])) {
                         std::vector<Scalar> packed_grad(cout * cin * geom.kernel, Scalar(0));
                         kernels::correlate_weight_grad(geom, t.value_of(in[0]).ptr(), cin, gout.ptr(), cout,
                                                        packed_grad.data());
                         kernels::unpack_taps_add<Scalar>(packed_grad, t.grad_buffer(in[1]).data(), cin, cout, geom.kernel);
                       }
                       if (t.needs_grad(in[2])) {
                         auto& gb = t.grad_buffer(in[2]);
                         for (std::size_t c = 0; c < cout; ++c) {
                           Scalar s = 0;
                           for (std::size_t i = 0; i < geom.time; ++i) s += gout[c * geom.time + i];
                           gb[c] += s;
                         }
                       }
                     });
}

/// max(x, slope * x) for slope in (0, 1).
template <typename Scalar>
Var leaky_relu(Tape<Scalar>& tape, Var x, Scalar slope) {
  if (!(slope > Scalar(0) && slope < Scalar(1))) throw ParameterError("leaky_relu slope must lie in (0, 1)");
  Tensor<Scalar> out = tape.value(x);
  for (auto& v : out.data()) v = v > Scalar(0) ? v : slope * v;
  return tape.record(OpKind::leaky_relu, {x}, std::move(out), [slope](Tape<Scalar>& t, std::size_t self) {
    const std::size_t src = t.inputs_of(self)[0];
    const auto& xv = t.value_of(src);
    const auto& gout = t.grad_buffer(self);
    auto& gx = t.grad_buffer(src);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += xv[i] > Scalar(0) ? gout[i] : slope * gout[i];
  });
}

template <typename Scalar>
Var tanh(Tape<Scalar>& tape, Var x) {
  Tensor<Scalar> out = tape.value(x);
  for (auto& v : out.data()) v = std::tanh(v);
  return tape.record(OpKind::tanh, {x}, std::move(out), [](Tape<Scalar>& t, std::size_t self) {
    const std::size_t src = t.inputs_of(self)[0];
    const auto& y = t.value_of(self);
    const auto& gout = t.grad_buffer(self);
    auto& gx = t.grad_buffer(src);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gout[i] * (Scalar(1) - y[i] * y[i]);
  });
}

/// Channel-axis concatenation in argument order.
template <typename Scalar>
Var concat_channels(Tape<Scalar>& tape, const std::vector<Var>& parts) {
  if (parts.empty()) throw DimensionError("concat_channels needs at least one part");
  const std::size_t time = tape.value(parts[0]).rank() == 2 ? tape.value(parts[0]).dim(1) : 0;
  std::size_t channels = 0;
  for (Var p : parts) {
    const auto& v = tape.value(p);
    detail::require_signal(v, "concat part");
    detail::require(v.dim(1) == time, "concat_channels: time lengths differ (" + std::to_string(v.dim(1)) + " vs " +
                                          std::to_string(time) + ")");
    channels += v.dim(0);
  }
  Tensor<Scalar> out({channels, time});
  std::size_t offset = 0;
  for (Var p : parts) {
    const auto& v = tape.value(p);
    std::copy(v.data().begin(), v.data().end(), out.data().begin() + offset);
    offset += v.size();
  }
  return tape.record(OpKind::concat_channels, parts, std::move(out), [](Tape<Scalar>& t, std::size_t self) {
    const auto& gout = t.grad_buffer(self);
    std::size_t off = 0;
    for (std::size_t src : t.inputs_of(self)) {
      const std::size_t n = t.value_of(src).size();
      if (t.needs_grad(src)) {
        auto& g = t.grad_buffer(src);
        for (std::size_t i = 0; i < n; ++i) g[i] += gout[off + i];
      }
      off += n;
    }
  });
}

/// Keeps even time indices: [C, T] -> [C, ceil(T/2)].
template <typename Scalar>
Var decimate2(Tape<Scalar>& tape, Var x) {
  const auto& xv = tape.value(x);
  detail::require_signal(xv, "decimate2 input");
  const std::size_t c = xv.dim(0), time = xv.dim(1), half = (time + 1) / 2;
  Tensor<Scalar> out({c, half});
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t i = 0; i < half; ++i) out.at(ch, i) = xv.at(ch, 2 * i);
  return tape.record(OpKind::decimate2, {x}, std::move(out), [c, half](Tape<Scalar>& t, std::size_t self) {
    const auto& gout = t.grad_buffer(self);
    auto& gx = t.grad_buffer(t.inputs_of(self)[0]);
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t i = 0; i < half; ++i) gx.at(ch, 2 * i) += gout.at(ch, i);
  });
}

/// Linear-interpolation upsampling by 2: out[2t] = x[t], out[2t+1] = (x[t] + x[t+1]) / 2,
/// with x[T] taken as x[T-1].
template <typename Scalar>
Var upsample_linear2(Tape<Scalar>& tape, Var x) {
  const auto& xv = tape.value(x);
  detail::require_signal(xv, "upsample_linear2 input");
  const std::size_t c = xv.dim(0), time = xv.dim(1);
  if (time < 1) throw DimensionError("upsample_linear2 needs T >= 1");
  Tensor<Scalar> out({c, 2 * time});
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t i = 0; i < time; ++i) {
      const Scalar next = xv.at(ch, std::min(i + 1, time - 1));
      out.at(ch, 2 * i) = xv.at(ch, i);
      out.at(ch, 2 * i + 1) = Scalar(0.5) * (xv.at(ch, i) + next);
    }
  return tape.record(OpKind::upsample_linear2, {x}, std::move(out), [c, time](Tape<Scalar>& t, std::size_t self) {
    const auto& gout = t.grad_buffer(self);
    auto& gx = t.grad_buffer(t.inputs_of(self)[0]);
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t i = 0; i < time; ++i) {
        const Scalar mid = Scalar(0.5) * gout.at(ch, 2 * i + 1);
        gx.at(ch, i) += gout.at(ch, 2 * i) + mid;
        gx.at(ch, std::min(i + 1, time - 1)) += mid;
      }
  });
}

namespace detail {

template <typename Scalar>
Var binary(Tape<Scalar>& tape, Var a, Var b, Scalar sign, OpKind op) {
  const auto& av = tape.value(a);
  const auto& bv = tape.value(b);
  require(av.shape() == bv.shape(),
          std::string(op_name(op)) + ": shapes differ " + shape_str(av.shape()) + " vs " + shape_str(bv.shape()));
  Tensor<Scalar> out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += sign * bv[i];
  return tape.record(op, {a, b}, std::move(out), [sign](Tape<Scalar>& t, std::size_t self) {
    const auto& in = t.inputs_of(self);
    const auto& gout = t.grad_buffer(self);
    if (t.needs_grad(in[0])) accumulate(t.grad_buffer(in[0]), gout);
    if (t.needs_grad(in[1])) {
      auto& gb = t.grad_buffer(in[1]);
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += sign * gout[i];
    }
  });
}

}  // namespace detail

template <typename Scalar>
Var add(Tape<Scalar>& tape, Var a, Var b) {
  return detail::binary(tape, a, b, Scalar(1), OpKind::add);
}

template <typename Scalar>
Var sub(Tape<Scalar>& tape, Var a, Var b) {
  return detail::binary(tape, a, b, Scalar(-1), OpKind::sub);
}

/// Sum of all elements as a scalar [1] tensor.
template <typename Scalar>
Var sum(Tape<Scalar>& tape, Var x) {
  Scalar s = 0;
  for (Scalar v : tape.value(x).data()) s += v;
  return tape.record(OpKind::sum, {x}, Tensor<Scalar>({1}, std::vector<Scalar>{s}), [](Tape<Scalar>& t, std::size_t self) {
    const Scalar g = t.grad_buffer(self)[0];
    for (auto& v : t.grad_buffer(t.inputs_of(self)[0]).data()) v += g;
  });
}

/// Mean of (a - b)^2 over all elements, as a scalar [1] tensor.
template <typename Scalar>
Var mse(Tape<Scalar>& tape, Var a, Var b) {
  const auto& av = tape.value(a);
  const auto& bv = tape.value(b);
  detail::require(av.shape() == bv.shape(),
                  "mse: shapes differ " + shape_str(av.shape()) + " vs " + shape_str(bv.shape()));
  const std::size_t n = av.size();
  if (n == 0) throw DimensionError("mse of empty tensors");
  Scalar s = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const Scalar d = av[i] - bv[i];
    s += d * d;
  }
  Tensor<Scalar> out({1}, std::vector<Scalar>{s / static_cast<Scalar>(n)});
  return tape.record(OpKind::mse, {a, b}, std::move(out), [n](Tape<Scalar>& t, std::size_t self) {
    const auto& in = t.inputs_of(self);
    const Scalar scale = Scalar(2) * t.grad_buffer(self)[0] / static_cast<Scalar>(n);
    const auto& av = t.value_of(in[0]);
    const auto& bv = t.value_of(in[1]);
    if (t.needs_grad(in[0])) {
      auto& g = t.grad_buffer(in[0]);
      for (std::size_t i = 0; i < n; ++i) g[i] += scale * (av[i] - bv[i]);
    }
    if (t.needs_grad(in[1])) {
      auto& g = t.grad_buffer(in[1]);
      for (std::size_t i = 0; i < n; ++i) g[i] -= scale * (av[i] - bv[i]);
    }
  });
}

/// Reinterprets the extents; gradient passes through unchanged.
template <typename Scalar>
Var reshape(Tape<Scalar>& tape, Var x, Shape shape) {
  Tensor<Scalar> out = tape.value(x).reshaped(std::move(shape));
  return tape.record(OpKind::reshape, {x}, std::move(out), [](Tape<Scalar>& t, std::size_t self) {
    detail::accumulate(t.grad_buffer(t.inputs_of(self)[0]), t.grad_buffer(self));
  });
}

}  // namespace dunet
