#pragma once

#include "lfsr/training.hpp"

#include <optional>
#include <vector>

namespace lfsr {

struct SuperResolveOptions {
  std::optional<int> k;  // auxiliary views per target, the target included; default: all
  bool patch_selector = false;
  /// Disparity at input resolution: either one map per view, or a single map
  /// (usually the center view) propagated to the others. Estimated from the
  /// input when empty and the patch selector is on.
  std::vector<DisparityMap<float>> disparity;
  bool coarse_only = false;
  GateMode gate = GateMode::Scores;
  int tile = 48;           // LR tile core for the coarse pass
  int margin = 8;          // LR context around each tile
  int refine_tile = 64;    // HR tile core for the refinement pass
  int refine_margin = 12;  // HR context around each refinement tile
};

/// [start, start + length) with the core [core_start, core_start + core_length) written back.
struct TileSpan {
  int start = 0;
  int length = 0;
  int core_start = 0;
  int core_length = 0;
};

/// Covers [0, extent) with cores of at most `core` samples, each grown by `margin` and clipped.
std::vector<TileSpan> tile_spans(int extent, int core, int margin);

/// Coarse super-resolution of every view of a view set (Y channel), tiled.
ViewSet<float> coarse_views(const ViewSet<float>& lr, const CoarseModel<float>& coarse,
                            const SuperResolveOptions& options = {});

/// Refinement of a full grid of coarse views, tiled spatially.
LightField<float> refine_lightfield(const LightField<float>& coarse, const Refiner<float>& refiner,
                                    const SuperResolveOptions& options = {});

/// Full pipeline on a regular light field. Three-channel input is treated as
/// RGB: the luma goes through the networks, chroma is bicubic-upscaled.
LightField<float> super_resolve(const LightField<float>& lr, const Model& model,
                                const SuperResolveOptions& options = {});

/// Irregular input supports the coarse stage only.
IrregularLightField<float> super_resolve(const IrregularLightField<float>& lr, const Model& model,
                                         const SuperResolveOptions& options = {});

}  // namespace lfsr
