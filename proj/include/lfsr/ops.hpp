#pragma once

#include "lfsr/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

namespace lfsr {

namespace detail {

template <typename Scalar>
using Impl = TensorImpl<Scalar>;

/// Extents before, along and after `axis`.
inline void split_axis(const Shape& shape, std::size_t axis, Index& outer, Index& extent,
                       Index& inner) {
  if (axis >= shape.size())
    throw ShapeError("axis " + std::to_string(axis) + " out of range for " + to_string(shape));
  outer = 1;
  inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= shape[i];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) inner *= shape[i];
  extent = shape[axis];
}

template <typename Scalar>
void im2col(const Scalar* x, Index batch, Index channels, Index height, Index width, Index kernel,
            Scalar* cols) {
  const Index pad = kernel / 2;
  const Index hw = height * width;
  const Index n = batch * hw;
  for (Index c = 0; c < channels; ++c) {
    for (Index ky = 0; ky < kernel; ++ky) {
      for (Index kx = 0; kx < kernel; ++kx) {
        Scalar* row = cols + ((c * kernel + ky) * kernel + kx) * n;
        for (Index b = 0; b < batch; ++b) {
          const Scalar* src = x + (b * channels + c) * hw;
          Scalar* dst = row + b * hw;
          for (Index y = 0; y < height; ++y) {
            const Index sy = y + ky - pad;
            Scalar* d = dst + y * width;
            if (sy < 0 || sy >= height) {
              std::fill(d, d + width, Scalar(0));
              continue;
            }
            const Scalar* s = src + sy * width;
            for (Index xx = 0; xx < width; ++xx) {
              const Index sx = xx + kx - pad;
              d[xx] = (sx >= 0 && sx < width) ? s[sx] : Scalar(0);
            }
          }
        }
      }
    }
  }
}

template <typename Scalar>
void col2im_add(const Scalar* cols, Index batch, Index channels, Index height, Index width,
                Index kernel, Scalar* x) {
  const Index pad = kernel / 2;
  const Index hw = height * width;
  const Index n = batch * hw;
  for (Index c = 0; c < channels; ++c) {
    for (Index ky = 0; ky < kernel; ++ky) {
      for (Index kx = 0; kx < kernel; ++kx) {
        const Scalar* row = cols + ((c * kernel + ky) * kernel + kx) * n;
        for (Index b = 0; b < batch; ++b) {
          Scalar* dst = x + (b * channels + c) * hw;
          const Scalar* src = row + b * hw;
          for (Index y = 0; y < height; ++y) {
            const Index sy = y + ky - pad;
            if (sy < 0 || sy >= height) continue;
            Scalar* d = dst + sy * width;
            const Scalar* s = src + y * width;
            for (Index xx = 0; xx < width; ++xx) {
              const Index sx = xx + kx - pad;
              if (sx >= 0 && sx < width) d[sx] += s[xx];
            }
          }
        }
      }
    }
  }
}

}  // namespace detail

/// 2D convolution with an odd square kernel and "same" zero padding.
/// Accepts [C,H,W] or a batch [B,C,H,W]; weight is [C_out,C_in,K,K].
template <typename Scalar>
Tensor<Scalar> conv2d(const Tensor<Scalar>& input, const Tensor<Scalar>& weight,
                      const Tensor<Scalar>& bias) {
  const bool batched = input.rank() == 4;
  if (!batched && input.rank() != 3)
    throw ShapeError("conv2d: input must be [C,H,W] or [B,C,H,W], got " + to_string(input.shape()));
  if (weight.rank() != 4 || weight.dim(2) != weight.dim(3) || weight.dim(2) % 2 == 0)
    throw ShapeError("conv2d: weight must be [Co,Ci,K,K] with odd K, got " +
                     to_string(weight.shape()));
  const Index batch = batched ? input.dim(0) : 1;
  const std::size_t o = batched ? 1 : 0;
  const Index channels = input.dim(o), height = input.dim(o + 1), width = input.dim(o + 2);
  const Index out_channels = weight.dim(0), kernel = weight.dim(2);
  if (weight.dim(1) != channels)
    throw ShapeError("conv2d: input has " + std::to_string(channels) + " channels, weight expects " +
                     std::to_string(weight.dim(1)));
  if (bias.rank() != 1 || bias.dim(0) != out_channels)
    throw ShapeError("conv2d: bias must be [" + std::to_string(out_channels) + "]");

  const Index hw = height * width;
  const Index n = batch * hw;
  const Index patch = channels * kernel * kernel;

  RowMatrix<Scalar> cols(patch, n);
  detail::im2col(input.data(), batch, channels, height, width, kernel, cols.data());
  Eigen::Map<const RowMatrix<Scalar>> w(weight.data(), out_channels, patch);
  RowMatrix<Scalar> y(out_channels, n);
  y.noalias() = w * cols;
  y.colwise() += Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>(bias.data(), out_channels);

  Shape out_shape = batched ? Shape{batch, out_channels, height, width}
                            : Shape{out_channels, height, width};
  Tensor<Scalar> out(out_shape);
  for (Index b = 0; b < batch; ++b)
    for (Index co = 0; co < out_channels; ++co)
      std::copy_n(y.data() + co * n + b * hw, hw, out.data() + (b * out_channels + co) * hw);

  if (auto* tape = detail::recording_tape<Scalar>(input, weight, bias)) {
    tape->record(
        {input.impl(), weight.impl(), bias.impl()}, out.impl(),
        [xi = input.impl().get(), wi = weight.impl().get(), bi = bias.impl().get(),
         oi = out.impl().get(), batch, channels, height, width, out_channels, kernel] {
          const Index hw = height * width;
          const Index n = batch * hw;
          const Index patch = channels * kernel * kernel;
          RowMatrix<Scalar> gy(out_channels, n);
          for (Index b = 0; b < batch; ++b)
            for (Index co = 0; co < out_channels; ++co)
              std::copy_n(oi->grad.data() + (b * out_channels + co) * hw, hw,
                          gy.data() + co * n + b * hw);
          if (wi->requires_grad) {
            RowMatrix<Scalar> cols(patch, n);
            detail::im2col(xi->value.data(), batch, channels, height, width, kernel, cols.data());
            Eigen::Map<RowMatrix<Scalar>> gw(wi->grad_buffer().data(), out_channels, patch);
            gw.noalias() += gy * cols.transpose();
          }
          if (bi->requires_grad) bi->grad_buffer() += gy.rowwise().sum().array();
          if (xi->requires_grad) {
            Eigen::Map<const RowMatrix<Scalar>> w(wi->value.data(), out_channels, patch);
            RowMatrix<Scalar> gcols(patch, n);
            gcols.noalias() = w.transpose() * gy;
            detail::col2im_add(gcols.data(), batch, channels, height, width, kernel,
                               xi->grad_buffer().data());
          }
        });
  }
  return out;
}

template <typename Scalar>
Tensor<Scalar> relu(const Tensor<Scalar>& x) {
  Tensor<Scalar> out(x.shape(), Array<Scalar>(x.values().max(Scalar(0))));
  if (auto* tape = detail::recording_tape<Scalar>(x)) {
    tape->record({x.impl()}, out.impl(), [xi = x.impl().get(), oi = out.impl().get()] {
      if (!xi->requires_grad) return;
      xi->grad_buffer() += (xi->value > Scalar(0)).select(oi->grad, Scalar(0));
    });
  }
  return out;
}

template <typename Scalar>
Tensor<Scalar> sigmoid(const Tensor<Scalar>& x) {
  Tensor<Scalar> out(x.shape(), Array<Scalar>(Scalar(1) / (Scalar(1) + (-x.values()).exp())));
  if (auto* tape = detail::recording_tape<Scalar>(x)) {
    tape->record({x.impl()}, out.impl(), [xi = x.impl().get(), oi = out.impl().get()] {
      if (!xi->requires_grad) return;
      xi->grad_buffer() += oi->grad * oi->value * (Scalar(1) - oi->value);
    });
  }
  return out;
}

namespace detail {

inline void require_same_shape(const Shape& a, const Shape& b, const char* op) {
  if (a != b) throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a) + " vs " + to_string(b));
}

}  // namespace detail

template <typename Scalar>
Tensor<Scalar> add(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  detail::require_same_shape(a.shape(), b.shape(), "add");
  Tensor<Scalar> out(a.shape(), Array<Scalar>(a.values() + b.values()));
  if (auto* tape = detail::recording_tape<Scalar>(a, b)) {
    tape->record({a.impl(), b.impl()}, out.impl(),
                 [ai = a.impl().get(), bi = b.impl().get(), oi = out.impl().get()] {
                   if (ai->requires_grad) ai->grad_buffer() += oi->grad;
                   if (bi->requires_grad) bi->grad_buffer() += oi->grad;
                 });
  }
  return out;
}

template <typename Scalar>
Tensor<Scalar> sub(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  detail::require_same_shape(a.shape(), b.shape(), "sub");
  Tensor<Scalar> out(a.shape(), Array<Scalar>(a.values() - b.values()));
  if (auto* tape = detail::recording_tape<Scalar>(a, b)) {
    tape->record({a.impl(), b.impl()}, out.impl(),
                 [ai = a.impl().get(), bi = b.impl().get(), oi = out.impl().get()] {
                   if (ai->requires_grad) ai->grad_buffer() += oi->grad;
                   if (bi->requires_grad) bi->grad_buffer() -= oi->grad;
                 });
  }
  return out;
}

template <typename Scalar>
Tensor<Scalar> mul(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  detail::require_same_shape(a.shape(), b.shape(), "mul");
  Tensor<Scalar> out(a.shape(), Array<Scalar>(a.values() * b.values()));
  if (auto* tape = detail::recording_tape<Scalar>(a, b)) {
    tape->record({a.impl(), b.impl()}, out.impl(),
                 [ai = a.impl().get(), bi = b.impl().get(), oi = out.impl().get()] {
                   if (ai->requires_grad) ai->grad_buffer() += oi->grad * bi->value;
                   if (bi->requires_grad) bi->grad_buffer() += oi->grad * ai->value;
                 });
  }
  return out;
}

template <typename Scalar>
Tensor<Scalar> scale(const Tensor<Scalar>& x, Scalar factor) {
  Tensor<Scalar> out(x.shape(), Array<Scalar>(x.values() * factor));
  if (auto* tape = detail::recording_tape<Scalar>(x)) {
    tape->record({x.impl()}, out.impl(), [xi = x.impl().get(), oi = out.impl().get(), factor] {
      if (xi->requires_grad) xi->grad_buffer() += oi->grad * factor;
    });
  }
  return out;
}

/// Multiplies slice b of x (leading axis) by the scalar s[b].
template <typename Scalar>
Tensor<Scalar> scale_slices(const Tensor<Scalar>& x, const Tensor<Scalar>& s) {
  if (s.rank() != 1 || x.rank() < 1 || s.dim(0) != x.dim(0))
    throw ShapeError("scale_slices: need s=[B] for x=[B,...], got " + to_string(s.shape()) +
                     " and " + to_string(x.shape()));
  const Index slices = x.dim(0);
  const Index inner = x.numel() / slices;
  Tensor<Scalar> out(x.shape());
  for (Index b = 0; b < slices; ++b)
    out.values().segment(b * inner, inner) = x.values().segment(b * inner, inner) * s.values()[b];
  if (auto* tape = detail::recording_tape<Scalar>(x, s)) {
    tape->record({x.impl(), s.impl()}, out.impl(),
                 [xi = x.impl().get(), si = s.impl().get(), oi = out.impl().get(), slices, inner] {
                   for (Index b = 0; b < slices; ++b) {
                     const auto g = oi->grad.segment(b * inner, inner);
                     if (xi->requires_grad)
                       xi->grad_buffer().segment(b * inner, inner) += g * si->value[b];
                     if (si->requires_grad)
                       si->grad_buffer()[b] += (g * xi->value.segment(b * inner, inner)).sum();
                   }
                 });
  }
  return out;
}

template <typename Scalar>
Tensor<Scalar> sum(const Tensor<Scalar>& x) {
  Tensor<Scalar> out(Shape{1}, x.values().sum());
  if (auto* tape = detail::recording_tape<Scalar>(x)) {
    tape->record({x.impl()}, out.impl(), [xi = x.impl().get(), oi = out.impl().get()] {
      if (xi->requires_grad) xi->grad_buffer() += oi->grad[0];
    });
  }
  return out;
}

template <typename Scalar>
Tensor<Scalar> mean(const Tensor<Scalar>& x) {
  return scale(sum(x), Scalar(1) / static_cast<Scalar>(x.numel()));
}

/// Mean absolute error; the subgradient at a zero residual is 0.
template <typename Scalar>
Tensor<Scalar> l1_loss(const Tensor<Scalar>& prediction, const Tensor<Scalar>& target) {
  detail::require_same_shape(prediction.shape(), target.shape(), "l1_loss");
  const Array<Scalar> diff = prediction.values() - target.values();
  const Scalar count = static_cast<Scalar>(diff.size());
  Tensor<Scalar> out(Shape{1}, diff.abs().sum() / count);
  if (auto* tape = detail::recording_tape<Scalar>(prediction, target)) {
    tape->record({prediction.impl(), target.impl()}, out.impl(),
                 [pi = prediction.impl().get(), ti = target.impl().get(), oi = out.impl().get(), count] {
                   const Array<Scalar> d = pi->value - ti->value;
                   const Array<Scalar> g = d.sign() * (oi->grad[0] / count);
                   if (pi->requires_grad) pi->grad_buffer() += g;
                   if (ti->requires_grad) ti->grad_buffer() -= g;
                 });
  }
  return out;
}

/// Forward difference along `axis`: out[i] = x[i+1] - x[i].
template <typename Scalar>
Tensor<Scalar> diff(const Tensor<Scalar>& x, std::size_t axis) {
  Index outer, extent, inner;
  detail::split_axis(x.shape(), axis, outer, extent, inner);
  if (extent < 2) throw ShapeError("diff: axis extent must be >= 2, got " + to_string(x.shape()));
  Shape shape = x.shape();
  shape[axis] = extent - 1;
  Tensor<Scalar> out(shape);
  const Index stride = extent * inner, ostride = (extent - 1) * inner;
  for (Index o = 0; o < outer; ++o)
    out.values().segment(o * ostride, ostride) =
        x.values().segment(o * stride + inner, ostride) - x.values().segment(o * stride, ostride);
  if (auto* tape = detail::recording_tape<Scalar>(x)) {
    tape->record({x.impl()}, out.impl(),
                 [xi = x.impl().get(), oi = out.impl().get(), outer, stride, ostride, inner] {
                   if (!xi->requires_grad) return;
                   auto& g = xi->grad_buffer();
                   for (Index o = 0; o < outer; ++o) {
                     const auto go = oi->grad.segment(o * ostride, ostride);
                     g.segment(o * stride + inner, ostride) += go;
                     g.segment(o * stride, ostride) -= go;
                   }
                 });
  }
  return out;
}

template <typename Scalar>
Tensor<Scalar> concat(const std::vector<Tensor<Scalar>>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no parts");
  const Shape& first = parts.front().shape();
  if (axis >= first.size()) throw ShapeError("concat: axis out of range for " + to_string(first));
  Shape shape = first;
  shape[axis] = 0;
  for (const auto& p : parts) {
    if (p.rank() != first.size()) throw ShapeError("concat: rank mismatch");
    for (std::size_t i = 0; i < first.size(); ++i)
      if (i != axis && p.dim(i) != first[i])
        throw ShapeError("concat: ragged shapes " + to_string(first) + " vs " + to_string(p.shape()));
    shape[axis] += p.dim(axis);
  }
  Index outer, extent, inner;
  detail::split_axis(shape, axis, outer, extent, inner);
  Tensor<Scalar> out(shape);
  std::vector<Index> widths, offsets;
  Index offset = 0;
  for (const auto& p : parts) {
    widths.push_back(p.dim(axis) * inner);
    offsets.push_back(offset);
    offset += widths.back();
  }
  const Index ostride = extent * inner;
  for (std::size_t k = 0; k < parts.size(); ++k)
    for (Index o = 0; o < outer; ++o)
      out.values().segment(o * ostride + offsets[k], widths[k]) =
          parts[k].values().segment(o * widths[k], widths[k]);

  if (auto* tape = detail::recording_tape_list<Scalar>(parts)) {
    std::vector<std::shared_ptr<TensorImpl<Scalar>>> inputs;
    std::vector<TensorImpl<Scalar>*> raw;
    for (const auto& p : parts) {
      inputs.push_back(p.impl());
      raw.push_back(p.impl().get());
    }
    tape->record(std::move(inputs), out.impl(),
                 [raw, oi = out.impl().get(), widths, offsets, outer, ostride] {
                   for (std::size_t k = 0; k < raw.size(); ++k) {
                     if (!raw[k]->requires_grad) continue;
                     auto& g = raw[k]->grad_buffer();
                     for (Index o = 0; o < outer; ++o)
                       g.segment(o * widths[k], widths[k]) +=
                           oi->grad.segment(o * ostride + offsets[k], widths[k]);
                   }
                 });
  }
  return out;
}

template <typename Scalar>
Tensor<Scalar> slice(const Tensor<Scalar>& x, std::size_t axis, Index start, Index length) {
  Index outer, extent, inner;
  detail::split_axis(x.shape(), axis, outer, extent, inner);
  if (start < 0 || length <= 0 || start + length > extent)
    throw ShapeError("slice: range [" + std::to_string(start) + "," + std::to_string(start + length) +
                     ") out of bounds for " + to_string(x.shape()));
  Shape shape = x.shape();
  shape[axis] = length;
  Tensor<Scalar> out(shape);
  const Index stride = extent * inner, width = length * inner, first = start * inner;
  for (Index o = 0; o < outer; ++o)
    out.values().segment(o * width, width) = x.values().segment(o * stride + first, width);
  if (auto* tape = detail::recording_tape<Scalar>(x)) {
    tape->record({x.impl()}, out.impl(),
                 [xi = x.impl().get(), oi = out.impl().get(), outer, stride, width, first] {
                   if (!xi->requires_grad) return;
                   auto& g = xi->grad_buffer();
                   for (Index o = 0; o < outer; ++o)
                     g.segment(o * stride + first, width) += oi->grad.segment(o * width, width);
                 });
  }
  return out;
}

/// Selects slices of the leading axis; indices may repeat (gradients accumulate).
template <typename Scalar>
Tensor<Scalar> gather(const Tensor<Scalar>& x, const std::vector<Index>& indices) {
  if (indices.empty()) throw ShapeError("gather: empty index list");
  const Index slices = x.dim(0);
  const Index inner = x.numel() / slices;
  for (Index i : indices)
    if (i < 0 || i >= slices) throw ShapeError("gather: index " + std::to_string(i) + " out of range");
  Shape shape = x.shape();
  shape[0] = static_cast<Index>(indices.size());
  Tensor<Scalar> out(shape);
  for (std::size_t k = 0; k < indices.size(); ++k)
    out.values().segment(static_cast<Index>(k) * inner, inner) = x.values().segment(indices[k] * inner, inner);
  if (auto* tape = detail::recording_tape<Scalar>(x)) {
    tape->record({x.impl()}, out.impl(), [xi = x.impl().get(), oi = out.impl().get(), indices, inner] {
      if (!xi->requires_grad) return;
      auto& g = xi->grad_buffer();
      for (std::size_t k = 0; k < indices.size(); ++k)
        g.segment(indices[k] * inner, inner) += oi->grad.segment(static_cast<Index>(k) * inner, inner);
    });
  }
  return out;
}

/// Pooling window [begin, end) of group j when k slices are pooled into p groups.
inline std::pair<Index, Index> pooling_window(Index k, Index p, Index j) {
  return {j * k / p, (j + 1) * k / p};
}

/// Max-pools the k slices along `axis` into `groups` contiguous windows.
/// Backward routes each window's gradient to its first argmax.
template <typename Scalar>
Tensor<Scalar> max_over_axis(const Tensor<Scalar>& x, std::size_t axis, Index groups) {
  Index outer, k, inner;
  detail::split_axis(x.shape(), axis, outer, k, inner);
  if (groups < 1 || groups > k)
    throw ShapeError("max_over_axis: groups " + std::to_string(groups) + " must be in [1," +
                     std::to_string(k) + "]");
  Shape shape = x.shape();
  shape[axis] = groups;
  Tensor<Scalar> out(shape);
  std::vector<Index> argmax(static_cast<std::size_t>(out.numel()));
  const Scalar* src = x.data();
  Scalar* dst = out.data();
  for (Index o = 0; o < outer; ++o) {
    for (Index j = 0; j < groups; ++j) {
      const auto [begin, end] = pooling_window(k, groups, j);
      for (Index i = 0; i < inner; ++i) {
        Index best = begin;
        Scalar value = src[(o * k + begin) * inner + i];
        for (Index s = begin + 1; s < end; ++s) {
          const Scalar candidate = src[(o * k + s) * inner + i];
          if (candidate > value) {
            value = candidate;
            best = s;
          }
        }
        const Index at = (o * groups + j) * inner + i;
        dst[at] = value;
        argmax[static_cast<std::size_t>(at)] = (o * k + best) * inner + i;
      }
    }
  }
  if (auto* tape = detail::recording_tape<Scalar>(x)) {
    tape->record({x.impl()}, out.impl(), [xi = x.impl().get(), oi = out.impl().get(), argmax] {
      if (!xi->requires_grad) return;
      auto& g = xi->grad_buffer();
      for (std::size_t at = 0; at < argmax.size(); ++at) g[argmax[at]] += oi->grad[static_cast<Index>(at)];
    });
  }
  return out;
}

/// Per-channel mean over the two trailing spatial axes: [C,H,W] -> [C], [B,C,H,W] -> [B,C].
template <typename Scalar>
Tensor<Scalar> adaptive_avg_pool_to_scalar(const Tensor<Scalar>& x) {
  if (x.rank() < 3) throw ShapeError("adaptive_avg_pool: need rank >= 3, got " + to_string(x.shape()));
  Shape shape(x.shape().begin(), x.shape().end() - 2);
  const Index area = x.dim(x.rank() - 2) * x.dim(x.rank() - 1);
  const Index maps = x.numel() / area;
  Tensor<Scalar> out(shape);
  for (Index m = 0; m < maps; ++m) out.values()[m] = x.values().segment(m * area, area).mean();
  if (auto* tape = detail::recording_tape<Scalar>(x)) {
    tape->record({x.impl()}, out.impl(), [xi = x.impl().get(), oi = out.impl().get(), maps, area] {
      if (!xi->requires_grad) return;
      auto& g = xi->grad_buffer();
      for (Index m = 0; m < maps; ++m)
        g.segment(m * area, area) += oi->grad[m] / static_cast<Scalar>(area);
    });
  }
  return out;
}

namespace detail {

// Index map for pixel shuffle: returns, for every output element, its source element.
inline std::vector<Index> pixel_shuffle_map(Index batch, Index channels, Index height, Index width,
                                            Index factor) {
  const Index out_h = height * factor, out_w = width * factor;
  std::vector<Index> map(static_cast<std::size_t>(batch * channels * out_h * out_w));
  std::size_t at = 0;
  for (Index b = 0; b < batch; ++b)
    for (Index c = 0; c < channels; ++c)
      for (Index oy = 0; oy < out_h; ++oy)
        for (Index ox = 0; ox < out_w; ++ox) {
          const Index dy = oy % factor, dx = ox % factor;
          const Index src_c = c * factor * factor + dy * factor + dx;
          map[at++] = ((b * channels * factor * factor + src_c) * height + oy / factor) * width + ox / factor;
        }
  return map;
}

template <typename Scalar>
Tensor<Scalar> apply_index_map(const Tensor<Scalar>& x, Shape shape, std::vector<Index> map) {
  Tensor<Scalar> out(std::move(shape));
  for (std::size_t i = 0; i < map.size(); ++i) out.values()[static_cast<Index>(i)] = x.values()[map[i]];
  if (auto* tape = recording_tape<Scalar>(x)) {
    tape->record({x.impl()}, out.impl(), [xi = x.impl().get(), oi = out.impl().get(), map = std::move(map)] {
      if (!xi->requires_grad) return;
      auto& g = xi->grad_buffer();
      for (std::size_t i = 0; i < map.size(); ++i) g[map[i]] += oi->grad[static_cast<Index>(i)];
    });
  }
  return out;
}

}  // namespace detail

/// Sub-pixel rearrangement: out(c, a*h+dy, a*w+dx) = in(c*a*a + dy*a + dx, h, w).
template <typename Scalar>
Tensor<Scalar> pixel_shuffle(const Tensor<Scalar>& x, Index factor) {
  const bool batched = x.rank() == 4;
  if (!batched && x.rank() != 3) throw ShapeError("pixel_shuffle: need [C,H,W] or [B,C,H,W]");
  const std::size_t o = batched ? 1 : 0;
  const Index batch = batched ? x.dim(0) : 1;
  const Index c_in = x.dim(o), height = x.dim(o + 1), width = x.dim(o + 2);
  if (factor < 1 || c_in % (factor * factor) != 0)
    throw ShapeError("pixel_shuffle: channels " + std::to_string(c_in) + " not divisible by " +
                     std::to_string(factor * factor));
  const Index channels = c_in / (factor * factor);
  Shape shape = batched ? Shape{batch, channels, height * factor, width * factor}
                        : Shape{channels, height * factor, width * factor};
  return detail::apply_index_map(x, std::move(shape),
                                 detail::pixel_shuffle_map(batch, channels, height, width, factor));
}

/// Inverse of pixel_shuffle.
template <typename Scalar>
Tensor<Scalar> pixel_unshuffle(const Tensor<Scalar>& x, Index factor) {
  const bool batched = x.rank() == 4;
  if (!batched && x.rank() != 3) throw ShapeError("pixel_unshuffle: need [C,H,W] or [B,C,H,W]");
  const std::size_t o = batched ? 1 : 0;
  const Index batch = batched ? x.dim(0) : 1;
  const Index channels = x.dim(o), out_h = x.dim(o + 1), out_w = x.dim(o + 2);
  if (factor < 1 || out_h % factor != 0 || out_w % factor != 0)
    throw ShapeError("pixel_unshuffle: spatial extents not divisible by factor");
  const Index height = out_h / factor, width = out_w / factor;
  const auto forward = detail::pixel_shuffle_map(batch, channels, height, width, factor);
  std::vector<Index> inverse(forward.size());
  for (std::size_t i = 0; i < forward.size(); ++i) inverse[static_cast<std::size_t>(forward[i])] = static_cast<Index>(i);
  const Index c_out = channels * factor * factor;
  Shape shape = batched ? Shape{batch, c_out, height, width} : Shape{c_out, height, width};
  return detail::apply_index_map(x, std::move(shape), std::move(inverse));
}

template <typename Scalar>
Tensor<Scalar> reshape(const Tensor<Scalar>& x, Shape shape) {
  if (numel(shape) != x.numel())
    throw ShapeError("reshape: " + to_string(x.shape()) + " -> " + to_string(shape));
  Tensor<Scalar> out(std::move(shape), x.values());
  if (auto* tape = detail::recording_tape<Scalar>(x)) {
    tape->record({x.impl()}, out.impl(), [xi = x.impl().get(), oi = out.impl().get()] {
      if (xi->requires_grad) xi->grad_buffer() += oi->grad;
    });
  }
  return out;
}

/// Axis permutation: out.shape[i] = x.shape[axes[i]].
template <typename Scalar>
Tensor<Scalar> permute(const Tensor<Scalar>& x, const std::vector<std::size_t>& axes) {
  const std::size_t rank = x.rank();
  if (axes.size() != rank) throw ShapeError("permute: axes size must equal rank");
  std::vector<bool> seen(rank, false);
  for (auto a : axes) {
    if (a >= rank || seen[a]) throw ShapeError("permute: invalid axis list");
    seen[a] = true;
  }
  Shape shape(rank);
  std::vector<Index> in_strides(rank, 1);
  for (std::size_t i = rank - 1; i-- > 0;) in_strides[i] = in_strides[i + 1] * x.dim(i + 1);
  for (std::size_t i = 0; i < rank; ++i) shape[i] = x.dim(axes[i]);
  std::vector<Index> map(static_cast<std::size_t>(x.numel()));
  std::vector<Index> counter(rank, 0);
  for (std::size_t at = 0; at < map.size(); ++at) {
    Index src = 0;
    for (std::size_t i = 0; i < rank; ++i) src += counter[i] * in_strides[axes[i]];
    map[at] = src;
    for (std::size_t i = rank; i-- > 0;) {
      if (++counter[i] < shape[i]) break;
      counter[i] = 0;
    }
  }
  return detail::apply_index_map(x, std::move(shape), std::move(map));
}

}  // namespace lfsr
