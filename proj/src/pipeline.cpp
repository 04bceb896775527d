#include "lfsr/pipeline.hpp"

#include <algorithm>
#include <array>

namespace lfsr {

std::vector<TileSpan> tile_spans(int extent, int core, int margin) {
  if (extent < 1 || core < 1 || margin < 0) throw std::invalid_argument("tile_spans: bad extents");
  std::vector<TileSpan> spans;
  for (int c0 = 0; c0 < extent; c0 += core) {
    TileSpan s;
    s.core_start = c0;
    s.core_length = std::min(core, extent - c0);
    s.start = std::max(0, c0 - margin);
    s.length = std::min(extent, c0 + s.core_length + margin) - s.start;
    spans.push_back(s);
  }
  return spans;
}

namespace {

DisparityMap<float> disparity_for(const std::vector<DisparityMap<float>>& maps, AngularPosition view, int height,
                                  int width) {
  if (maps.empty()) throw DataError("patch selector: no disparity available");
  for (const auto& m : maps)
    if (m.values.rows() != height || m.values.cols() != width)
      throw DataError("patch selector: disparity extents differ from the input views");
  for (const auto& m : maps)
    if (m.position == view) return m;
  if (maps.size() == 1) return propagate_disparity(maps.front(), view);
  throw DataError("patch selector: no disparity map for view " + to_string(view));
}

}  // namespace

ViewSet<float> coarse_views(const ViewSet<float>& lr, const CoarseModel<float>& coarse,
                            const SuperResolveOptions& options) {
  const int q = lr.size(), h = lr.height(), w = lr.width(), scale = coarse.config().scale;
  if (q == 0) throw DataError("super-resolve: no views");
  const auto ys = tile_spans(h, options.tile, options.margin);
  const auto xs = tile_spans(w, options.tile, options.margin);
  CoarseOptions coarse_options;
  coarse_options.k = options.k;
  coarse_options.gate = options.gate;

  ViewSet<float> out;
  out.positions = lr.positions;
  for (int t = 0; t < q; ++t) {
    const AngularPosition tp = lr.positions[static_cast<std::size_t>(t)];
    std::optional<DisparityMap<float>> disparity;
    if (options.patch_selector) disparity = disparity_for(options.disparity, tp, h, w);
    Image<float> sr(h * scale, w * scale);
    for (const TileSpan& ty : ys)
      for (const TileSpan& tx : xs) {
        double d = 0.0;
        if (disparity)
          d = disparity->values.block(ty.core_start, tx.core_start, ty.core_length, tx.core_length)
                  .cast<double>()
                  .mean();
        ViewSet<float> tile;
        tile.positions = lr.positions;
        for (int i = 0; i < q; ++i) {
          int oy = ty.start, ox = tx.start;
          if (disparity) {
            const PixelPosition c =
                aligned_center({ty.start, tx.start}, crop_offset_rate(d), tp, lr.positions[static_cast<std::size_t>(i)]);
            oy = std::clamp(c.y, 0, h - ty.length);
            ox = std::clamp(c.x, 0, w - tx.length);
          }
          tile.images.push_back(lr.images[static_cast<std::size_t>(i)].block(oy, ox, ty.length, tx.length));
        }
        const Image<float> patch = tensor_image(coarse_super_resolve(tile, t, coarse, coarse_options).sr);
        sr.block(ty.core_start * scale, tx.core_start * scale, ty.core_length * scale, tx.core_length * scale) =
            patch.block((ty.core_start - ty.start) * scale, (tx.core_start - tx.start) * scale,
                        ty.core_length * scale, tx.core_length * scale);
      }
    out.images.push_back(std::move(sr));
  }
  return out;
}

LightField<float> refine_lightfield(const LightField<float>& coarse, const Refiner<float>& refiner,
                                    const SuperResolveOptions& options) {
  const int rows = coarse.angular_rows(), cols = coarse.angular_cols();
  LightField<float> out(rows, cols, coarse.height(), coarse.width(), 1);
  for (const TileSpan& ty : tile_spans(coarse.height(), options.refine_tile, options.refine_margin))
    for (const TileSpan& tx : tile_spans(coarse.width(), options.refine_tile, options.refine_margin)) {
      LightField<float> tile(rows, cols, ty.length, tx.length, 1);
      for (const auto& p : coarse.positions()) tile.set_sai(p, coarse.sai(p).block(ty.start, tx.start, ty.length, tx.length));
      const LightField<float> refined = tensor_lightfield(refiner.forward(lightfield_tensor(tile), rows, cols), rows, cols);
      for (const auto& p : coarse.positions()) {
        Image<float> view = out.sai(p);
        view.block(ty.core_start, tx.core_start, ty.core_length, tx.core_length) = refined.sai(p).block(
            ty.core_start - ty.start, tx.core_start - tx.start, ty.core_length, tx.core_length);
        out.set_sai(p, view);
      }
    }
  return out;
}

namespace {

LightField<float> super_resolve_luma(const LightField<float>& lr, const Model& model, SuperResolveOptions options) {
  if (options.patch_selector && options.disparity.empty()) {
    const DisparityEstimate<float> estimate = estimate_disparity_epi(lr);
    options.disparity.push_back(estimate.map);
  }
  const ViewSet<float> sr = coarse_views(view_set(lr), model.coarse, options);
  const int scale = model.config.coarse.scale;
  LightField<float> coarse(lr.angular_rows(), lr.angular_cols(), lr.height() * scale, lr.width() * scale, 1);
  for (int i = 0; i < sr.size(); ++i)
    coarse.set_sai(sr.positions[static_cast<std::size_t>(i)], sr.images[static_cast<std::size_t>(i)]);
  if (options.coarse_only || !model.refiner) return coarse;
  return refine_lightfield(coarse, *model.refiner, options);
}

}  // namespace

LightField<float> super_resolve(const LightField<float>& lr, const Model& model, const SuperResolveOptions& options) {
  if (lr.channels() == 1) return super_resolve_luma(lr, model, options);
  if (lr.channels() != 3) throw DataError("super-resolve: expected 1 or 3 channels");
  const int scale = model.config.coarse.scale;
  const LightField<float> ycc = rgb_to_ycbcr(lr);
  LightField<float> y(lr.angular_rows(), lr.angular_cols(), lr.height(), lr.width(), 1);
  for (const auto& p : lr.positions()) y.set_sai(p, ycc.sai(p, 0));
  const LightField<float> y_sr = super_resolve_luma(y, model, options);
  LightField<float> out(lr.angular_rows(), lr.angular_cols(), lr.height() * scale, lr.width() * scale, 3);
  for (const auto& p : lr.positions()) {
    out.set_sai(p, y_sr.sai(p), 0);
    for (int c = 1; c < 3; ++c) out.set_sai(p, bicubic_upscale(ycc.sai(p, c), scale), c);
  }
  return ycbcr_to_rgb(out);
}

IrregularLightField<float> super_resolve(const IrregularLightField<float>& lr, const Model& model,
                                         const SuperResolveOptions& options) {
  if (!options.coarse_only)
    throw DataError("super-resolve: refinement needs a full angular grid; use the coarse stage for irregular input");
  if (options.patch_selector && options.disparity.empty())
    throw DataError("super-resolve: the patch selector needs a disparity map for irregular input");
  const int scale = model.config.coarse.scale;
  IrregularLightField<float> out(lr.positions(), lr.height() * scale, lr.width() * scale, lr.channels());
  if (lr.channels() == 1) {
    const ViewSet<float> sr = coarse_views(view_set(lr), model.coarse, options);
    for (int i = 0; i < sr.size(); ++i) out.view(i) = sr.images[static_cast<std::size_t>(i)];
    return out;
  }
  if (lr.channels() != 3) throw DataError("super-resolve: expected 1 or 3 channels");
  const Eigen::Matrix3d m = ycbcr_matrix();
  const Eigen::Vector3d off = ycbcr_offset();
  const Eigen::Matrix3d inv = m.inverse();
  ViewSet<float> luma;
  std::vector<std::array<Image<float>, 3>> ycc(static_cast<std::size_t>(lr.size()));
  for (int i = 0; i < lr.size(); ++i) {
    for (int c = 0; c < 3; ++c) {
      ycc[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)] =
          (m(c, 0) * lr.view(i, 0).cast<double>() + m(c, 1) * lr.view(i, 1).cast<double>() +
           m(c, 2) * lr.view(i, 2).cast<double>() + off(c))
              .cast<float>();
    }
    luma.positions.push_back(lr.positions()[static_cast<std::size_t>(i)]);
    luma.images.push_back(ycc[static_cast<std::size_t>(i)][0]);
  }
  const ViewSet<float> sr = coarse_views(luma, model.coarse, options);
  for (int i = 0; i < lr.size(); ++i) {
    const auto& planes = ycc[static_cast<std::size_t>(i)];
    const Eigen::ArrayXXd y = sr.images[static_cast<std::size_t>(i)].cast<double>() - off(0);
    const Eigen::ArrayXXd cb = bicubic_upscale(planes[1], scale).cast<double>() - off(1);
    const Eigen::ArrayXXd cr = bicubic_upscale(planes[2], scale).cast<double>() - off(2);
    for (int c = 0; c < 3; ++c) out.view(i, c) = (inv(c, 0) * y + inv(c, 1) * cb + inv(c, 2) * cr).max(0.0).min(1.0).cast<float>();
  }
  return out;
}

}  // namespace lfsr
