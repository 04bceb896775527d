#pragma once

#include "lfsr/lightfield.hpp"
#include "lfsr/nn.hpp"
#include "lfsr/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace lfsr {

// ---------------------------------------------------------------------------
// Adaptive SAI selector

/// Pairwise scorer: [target, candidate] -> three conv+ReLU layers -> 3x3 conv to
/// one map -> spatial mean. One finite scalar per pair.
template <typename Scalar>
class SaiSelector {
 public:
  SaiSelector() = default;
  SaiSelector(Index channels, Rng& rng)
      : conv1_(Conv2d<Scalar>::make(2, channels, 3, rng)),
        conv2_(Conv2d<Scalar>::make(channels, channels, 3, rng)),
        conv3_(Conv2d<Scalar>::make(channels, channels, 3, rng)),
        head_(Conv2d<Scalar>::make(channels, 1, 3, rng)) {}

  /// target: [1,1,H,W]; candidates: [n,1,H,W] -> scores [n].
  Tensor<Scalar> score(const Tensor<Scalar>& target, const Tensor<Scalar>& candidates) const {
    const Index n = candidates.dim(0);
    if (target.rank() != 4 || candidates.rank() != 4 || target.dim(0) != 1 || target.dim(1) != 1 ||
        candidates.dim(1) != 1 || target.dim(2) != candidates.dim(2) || target.dim(3) != candidates.dim(3))
      throw ShapeError("score_views: target and candidates must be single-channel with equal extents");
    const std::vector<Index> repeat(static_cast<std::size_t>(n), 0);
    Tensor<Scalar> pairs = concat<Scalar>({gather(target, repeat), candidates}, 1);
    Tensor<Scalar> h = relu(conv1_(pairs));
    h = relu(conv2_(h));
    h = relu(conv3_(h));
    return reshape(adaptive_avg_pool_to_scalar(head_(h)), Shape{n});
  }

  ParameterList<Scalar> parameters() const {
    ParameterList<Scalar> out;
    conv1_.collect("selector.conv1", out);
    conv2_.collect("selector.conv2", out);
    conv3_.collect("selector.conv3", out);
    head_.collect("selector.head", out);
    return out;
  }

 private:
  Conv2d<Scalar> conv1_, conv2_, conv3_, head_;
};

struct Selection {
  int k = 0;
  std::vector<int> chosen;     // ascending index (raster) order
  std::vector<double> scores;  // all candidates
};

/// Keeps the k largest scores; equal scores prefer the lower (raster) index.
inline Selection select_top_k(const std::vector<double>& scores, int k) {
  if (k < 1 || k > static_cast<int>(scores.size()))
    throw std::invalid_argument("select_top_k: k=" + std::to_string(k) + " outside [1," +
                                std::to_string(scores.size()) + "]");
  std::vector<int> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return scores[a] > scores[b]; });
  Selection s;
  s.k = k;
  s.scores = scores;
  s.chosen.assign(order.begin(), order.begin() + k);
  std::sort(s.chosen.begin(), s.chosen.end());
  return s;
}

/// Multiplies each feature slice by sigmoid(score): [k,...] x [k] -> [k,...].
template <typename Scalar>
Tensor<Scalar> gate_features(const Tensor<Scalar>& features, const Tensor<Scalar>& scores) {
  return scale_slices(features, sigmoid(scores));
}

// ---------------------------------------------------------------------------
// Disparity-based patch selector

struct PixelPosition {
  int y = 0;
  int x = 0;

  friend bool operator==(const PixelPosition&, const PixelPosition&) = default;
};

/// Square window of `size` pixels whose top-left corner is center - size / 2.
struct PatchWindow {
  PixelPosition center;
  int size = 64;

  PixelPosition origin() const { return {center.y - size / 2, center.x - size / 2}; }
};

template <typename Scalar>
double patch_disparity(const DisparityMap<Scalar>& map, const PatchWindow& window) {
  const PixelPosition o = window.origin();
  if (window.size < 1 || o.y < 0 || o.x < 0 || o.y + window.size > map.values.rows() ||
      o.x + window.size > map.values.cols())
    throw DataError("patch_disparity: window outside the disparity map");
  return map.values.block(o.y, o.x, window.size, window.size).template cast<double>().mean();
}

/// x_u = x_c + d (u_c - u), rounded per axis (halves up, so integer shifts commute);
/// the u axis drives x and v drives y.
inline PixelPosition aligned_center(PixelPosition center, double disparity, AngularPosition reference,
                                    AngularPosition view) {
  return {center.y + static_cast<int>(std::floor(disparity * (reference.v - view.v) + 0.5)),
          center.x + static_cast<int>(std::floor(disparity * (reference.u - view.u) + 0.5))};
}

/// Crop offset rate for aligned_center given a disparity in the parallax convention
/// (content moves +d pixels per +1 angular step), for which the offset is d (u - u_c).
inline double crop_offset_rate(double disparity) { return -disparity; }

template <typename Scalar>
struct AlignedPatches {
  LightField<Scalar> patches;                 // M x N x size x size
  std::vector<PixelPosition> centers;         // requested per-view centers, raster order
  std::vector<PixelPosition> origins;         // top-left corners actually cropped
  std::vector<bool> clamped;                  // true where the window had to be moved inside
  double patch_disparity = 0.0;
};

/// Crops one window per view, shifted by the window's mean disparity so that
/// content is (nearly) aligned across views. Windows are clamped into bounds.
template <typename Scalar>
AlignedPatches<Scalar> crop_aligned_patches(const LightField<Scalar>& lf, const DisparityMap<Scalar>& map,
                                            const PatchWindow& window, int channel = 0) {
  if (window.size > lf.height() || window.size > lf.width())
    throw DataError("crop_aligned_patches: window larger than the views");
  AlignedPatches<Scalar> out;
  out.patch_disparity = patch_disparity(map, window);
  out.patches = LightField<Scalar>(lf.angular_rows(), lf.angular_cols(), window.size, window.size, 1);
  const double rate = crop_offset_rate(out.patch_disparity);
  for (const auto& p : lf.positions()) {
    const PixelPosition c = aligned_center(window.center, rate, map.position, p);
    PatchWindow w{c, window.size};
    PixelPosition o = w.origin();
    const PixelPosition wanted = o;
    o.y = std::clamp(o.y, 0, lf.height() - window.size);
    o.x = std::clamp(o.x, 0, lf.width() - window.size);
    out.centers.push_back(c);
    out.origins.push_back(o);
    out.clamped.push_back(!(o == wanted));
    const Image<Scalar> view = lf.sai(p, channel);
    out.patches.set_sai(p, view.block(o.y, o.x, window.size, window.size));
  }
  return out;
}

/// Center disparity propagated to another view by backward warping:
/// D_u(x) = D_c(x - D_c(x) (u - u_c)), sampled bilinearly with edge clamping.
template <typename Scalar>
DisparityMap<Scalar> propagate_disparity(const DisparityMap<Scalar>& center, AngularPosition view) {
  const int h = static_cast<int>(center.values.rows()), w = static_cast<int>(center.values.cols());
  DisparityMap<Scalar> out{Image<Scalar>(h, w), view};
  const double du = view.u - center.position.u, dv = view.v - center.position.v;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double d = center.values(y, x);
      const double sy = std::clamp(y - d * dv, 0.0, h - 1.0);
      const double sx = std::clamp(x - d * du, 0.0, w - 1.0);
      out.values(y, x) = static_cast<Scalar>(sample_bilinear(center.values, sy, sx));
    }
  return out;
}

}  // namespace lfsr
