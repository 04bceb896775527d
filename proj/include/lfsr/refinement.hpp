#pragma once

#include "lfsr/coarse_sr.hpp"
#include "lfsr/nn.hpp"
#include "lfsr/ops.hpp"

#include <vector>

namespace lfsr {

/// [M*N, c, H, W] (one feature stack per view) -> [H*W, c, M, N] (one angular patch per pixel).
template <typename Scalar>
Tensor<Scalar> spatial_to_angular(const Tensor<Scalar>& fs, Index rows, Index cols) {
  if (fs.rank() != 4 || fs.dim(0) != rows * cols)
    throw ShapeError("spatial_to_angular: expected [M*N,c,H,W], got " + to_string(fs.shape()));
  const Index c = fs.dim(1), h = fs.dim(2), w = fs.dim(3);
  Tensor<Scalar> t = permute(reshape(fs, Shape{rows * cols, c, h * w}), {2, 1, 0});
  return reshape(t, Shape{h * w, c, rows, cols});
}

/// Inverse of spatial_to_angular.
template <typename Scalar>
Tensor<Scalar> angular_to_spatial(const Tensor<Scalar>& fa, Index height, Index width) {
  if (fa.rank() != 4 || fa.dim(0) != height * width)
    throw ShapeError("angular_to_spatial: expected [H*W,c,M,N], got " + to_string(fa.shape()));
  const Index c = fa.dim(1), m = fa.dim(2), n = fa.dim(3);
  Tensor<Scalar> t = permute(reshape(fa, Shape{height * width, c, m * n}), {2, 1, 0});
  return reshape(t, Shape{m * n, c, height, width});
}

struct RefineConfig {
  int channels = 64;
  int n5 = 10;
};

/// One alternation: spatial conv+ReLU per view, reshape, angular conv+ReLU per pixel, reshape back.
template <typename Scalar>
struct SasLayer {
  Conv2d<Scalar> spatial;
  Conv2d<Scalar> angular;

  Tensor<Scalar> operator()(const Tensor<Scalar>& fs, Index rows, Index cols) const {
    const Index h = fs.dim(2), w = fs.dim(3);
    Tensor<Scalar> s = relu(spatial(fs));
    Tensor<Scalar> a = relu(angular(spatial_to_angular(s, rows, cols)));
    return angular_to_spatial(a, h, w);
  }
};

template <typename Scalar>
Tensor<Scalar> sas_layer(const SasLayer<Scalar>& layer, const Tensor<Scalar>& fs, Index rows, Index cols) {
  return layer(fs, rows, cols);
}

/// Structural-consistency refinement over a full M x N grid of coarse views.
/// Layer i consumes the 1x1-projected concatenation of the head features and
/// every earlier layer output; the tail adds a per-view residual to the input.
template <typename Scalar>
class Refiner {
 public:
  Refiner() = default;

  Refiner(const RefineConfig& cfg, Rng& rng) : cfg_(cfg) {
    const Index c = cfg.channels;
    head_ = Conv2d<Scalar>::make(1, c, 3, rng);
    for (int i = 0; i < cfg.n5; ++i) {
      if (i > 0) projections_.push_back(Conv2d<Scalar>::make((i + 1) * c, c, 1, rng));
      layers_.push_back(SasLayer<Scalar>{Conv2d<Scalar>::make(c, c, 3, rng), Conv2d<Scalar>::make(c, c, 3, rng)});
    }
    tail_ = Conv2d<Scalar>::zeros(c, 1, 3);
  }

  const RefineConfig& config() const { return cfg_; }
  const std::vector<SasLayer<Scalar>>& layers() const { return layers_; }

  /// coarse: [M*N,1,H,W] -> refined [M*N,1,H,W]. Also returns every layer output when asked.
  Tensor<Scalar> forward(const Tensor<Scalar>& coarse, Index rows, Index cols,
                         std::vector<Tensor<Scalar>>* layer_outputs = nullptr) const {
    if (coarse.rank() != 4 || coarse.dim(1) != 1 || coarse.dim(0) != rows * cols)
      throw ShapeError("refine: expected [M*N,1,H,W] coarse views, got " + to_string(coarse.shape()));
    std::vector<Tensor<Scalar>> features{relu(head_(coarse))};
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      Tensor<Scalar> input = i == 0 ? features.front() : projections_[i - 1](concat(features, 1));
      features.push_back(layers_[i](input, rows, cols));
    }
    if (layer_outputs) layer_outputs->assign(features.begin() + 1, features.end());
    return add(coarse, tail_(features.back()));
  }

  ParameterList<Scalar> parameters() const {
    ParameterList<Scalar> out;
    head_.collect("refine.head", out);
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      const std::string prefix = "refine.layer." + std::to_string(i);
      if (i > 0) projections_[i - 1].collect(prefix + ".projection", out);
      layers_[i].spatial.collect(prefix + ".spatial", out);
      layers_[i].angular.collect(prefix + ".angular", out);
    }
    tail_.collect("refine.tail", out);
    return out;
  }

 private:
  RefineConfig cfg_;
  Conv2d<Scalar> head_, tail_;
  std::vector<Conv2d<Scalar>> projections_;
  std::vector<SasLayer<Scalar>> layers_;
};

/// Packs a single-channel light field as [M*N,1,H,W] in raster view order.
template <typename Scalar>
Tensor<Scalar> lightfield_tensor(const LightField<Scalar>& lf, int channel = 0) {
  const Index h = lf.height(), w = lf.width();
  Tensor<Scalar> t(Shape{lf.view_count(), 1, h, w});
  for (const auto& p : lf.positions())
    Eigen::Map<Image<Scalar>>(t.data() + lf.view_index(p) * h * w, h, w) = lf.sai(p, channel);
  return t;
}

template <typename Scalar>
LightField<Scalar> tensor_lightfield(const Tensor<Scalar>& t, int rows, int cols) {
  const Index h = t.dim(t.rank() - 2), w = t.dim(t.rank() - 1);
  if (t.numel() != static_cast<Index>(rows) * cols * h * w) throw ShapeError("tensor_lightfield: size mismatch");
  LightField<Scalar> lf(rows, cols, static_cast<int>(h), static_cast<int>(w), 1);
  lf.data() = t.values();
  return lf;
}

/// Sum of four mean-reduced l1 terms on forward differences of both LFs
/// (shaped [M,N,H,W]): d/dx and d/du on horizontal EPIs, d/dy and d/dv on vertical EPIs.
template <typename Scalar>
Tensor<Scalar> epi_gradient_loss(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  if (a.shape() != b.shape()) throw ShapeError("epi_gradient_loss: shape mismatch");
  if (a.rank() != 4 || a.dim(0) < 2 || a.dim(1) < 2 || a.dim(2) < 2 || a.dim(3) < 2)
    throw ShapeError("epi_gradient_loss: need [M,N,H,W] with every extent >= 2, got " + to_string(a.shape()));
  constexpr std::size_t kU = 0, kV = 1, kY = 2, kX = 3;
  Tensor<Scalar> loss = l1_loss(diff(a, kX), diff(b, kX));
  loss = add(loss, l1_loss(diff(a, kU), diff(b, kU)));
  loss = add(loss, l1_loss(diff(a, kY), diff(b, kY)));
  return add(loss, l1_loss(diff(a, kV), diff(b, kV)));
}

template <typename Scalar>
struct RefineLoss {
  Tensor<Scalar> total;
  Tensor<Scalar> l1;
  Tensor<Scalar> epi;
};

/// l1 + lambda * EPI-gradient loss on [M*N,1,H,W] stacks.
template <typename Scalar>
RefineLoss<Scalar> refine_loss(const Tensor<Scalar>& refined, const Tensor<Scalar>& hr, Index rows, Index cols,
                               Scalar lambda_epi = Scalar(1)) {
  if (refined.shape() != hr.shape()) throw ShapeError("refine_loss: shape mismatch");
  RefineLoss<Scalar> out;
  out.l1 = l1_loss(refined, hr);
  const Shape grid{rows, cols, refined.dim(2), refined.dim(3)};
  out.epi = epi_gradient_loss(reshape(refined, grid), reshape(hr, grid));
  out.total = lambda_epi == Scalar(0) ? out.l1 : add(out.l1, scale(out.epi, lambda_epi));
  return out;
}

}  // namespace lfsr
