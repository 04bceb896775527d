#pragma once

#include "lfsr/imaging.hpp"
#include "lfsr/lightfield.hpp"
#include "lfsr/nn.hpp"
#include "lfsr/ops.hpp"
#include "lfsr/selectors.hpp"

#include <algorithm>
#include <optional>
#include <set>
#include <vector>

namespace lfsr {

/// Single-channel views with their angular positions; what the networks consume.
template <typename Scalar>
struct ViewSet {
  std::vector<AngularPosition> positions;
  std::vector<Image<Scalar>> images;

  int size() const { return static_cast<int>(images.size()); }
  int height() const { return images.empty() ? 0 : static_cast<int>(images.front().rows()); }
  int width() const { return images.empty() ? 0 : static_cast<int>(images.front().cols()); }

  int index_of(AngularPosition p) const {
    auto it = std::find(positions.begin(), positions.end(), p);
    if (it == positions.end()) throw DataError("view " + to_string(p) + " is not in the view set");
    return static_cast<int>(it - positions.begin());
  }
};

template <typename Scalar>
ViewSet<Scalar> view_set(const LightField<Scalar>& lf, int channel = 0) {
  ViewSet<Scalar> out;
  for (const auto& p : lf.positions()) {
    out.positions.push_back(p);
    out.images.push_back(lf.sai(p, channel));
  }
  return out;
}

template <typename Scalar>
ViewSet<Scalar> view_set(const IrregularLightField<Scalar>& lf, int channel = 0) {
  ViewSet<Scalar> out;
  for (int i = 0; i < lf.size(); ++i) {
    out.positions.push_back(lf.positions()[static_cast<std::size_t>(i)]);
    out.images.push_back(lf.view(i, channel));
  }
  return out;
}

template <typename Scalar>
Tensor<Scalar> image_tensor(const Image<Scalar>& img) {
  Tensor<Scalar> t(Shape{1, 1, img.rows(), img.cols()});
  Eigen::Map<Image<Scalar>>(t.data(), img.rows(), img.cols()) = img;
  return t;
}

template <typename Scalar>
Image<Scalar> tensor_image(const Tensor<Scalar>& t) {
  const Index h = t.dim(t.rank() - 2), w = t.dim(t.rank() - 1);
  if (t.numel() != h * w) throw ShapeError("tensor_image: tensor holds more than one map");
  return Eigen::Map<const Image<Scalar>>(t.data(), h, w);
}

/// Stacks the selected views into [k,1,H,W].
template <typename Scalar>
Tensor<Scalar> views_tensor(const ViewSet<Scalar>& views, const std::vector<int>& indices) {
  const Index h = views.height(), w = views.width();
  Tensor<Scalar> t(Shape{static_cast<Index>(indices.size()), 1, h, w});
  for (std::size_t i = 0; i < indices.size(); ++i)
    Eigen::Map<Image<Scalar>>(t.data() + static_cast<Index>(i) * h * w, h, w) =
        views.images.at(static_cast<std::size_t>(indices[i]));
  return t;
}

struct CoarseConfig {
  int channels = 64;
  int n1 = 5;
  int n2 = 5;
  int n3 = 3;
  int n4 = 3;
  int p = 9;
  int scale = 2;
  bool use_selector = true;
  int selector_channels = 64;
};

/// Per-view coarse super-resolution by combinatorial embedding.
///   f1: conv(1->c) + n1 blocks, shared by every view
///   f2: concat(target, aux) -> conv(2c->c) + n2 blocks, shared by every pair
///   f3: max-pool k->p slices; per channel, the p slices are fused by
///       conv(p->p) + n3 blocks(p) + conv(p->1) with kernels shared across
///       channels; then n4 blocks over the c channels
///   upsampling: conv(c->a^2 c) -> pixel shuffle -> f4 conv(c->1) + bicubic(lr)
template <typename Scalar>
class CoarseSr {
 public:
  CoarseSr() = default;

  CoarseSr(const CoarseConfig& cfg, Rng& rng) : cfg_(cfg) {
    const Index c = cfg.channels, p = cfg.p, a2 = static_cast<Index>(cfg.scale) * cfg.scale;
    f1_head_ = Conv2d<Scalar>::make(1, c, 3, rng);
    f1_blocks_ = make_blocks<Scalar>(cfg.n1, c, rng);
    f2_head_ = Conv2d<Scalar>::make(2 * c, c, 3, rng);
    f2_blocks_ = make_blocks<Scalar>(cfg.n2, c, rng);
    f3_head_ = Conv2d<Scalar>::make(p, p, 3, rng);
    f3_view_blocks_ = make_blocks<Scalar>(cfg.n3, p, rng);
    f3_collapse_ = Conv2d<Scalar>::make(p, 1, 3, rng);
    f3_channel_blocks_ = make_blocks<Scalar>(cfg.n4, c, rng);
    up_ = Conv2d<Scalar>::make(c, a2 * c, 3, rng);
    // The residual map starts at zero so an untrained model reproduces bicubic.
    f4_ = Conv2d<Scalar>::zeros(c, 1, 3);
    if (cfg.p < 1) throw std::invalid_argument("coarse: p must be >= 1");
  }

  const CoarseConfig& config() const { return cfg_; }

  /// [B,1,H,W] -> [B,c,H,W]
  Tensor<Scalar> extract_features(const Tensor<Scalar>& views) const {
    return run_blocks(f1_blocks_, f1_head_(views));
  }

  /// target [1,c,H,W] paired with each aux slice [k,c,H,W] -> [k,c,H,W]
  Tensor<Scalar> embed_pairs(const Tensor<Scalar>& target, const Tensor<Scalar>& aux) const {
    if (target.rank() != 4 || aux.rank() != 4 || target.dim(0) != 1)
      throw ShapeError("embed_pairs: expected target [1,c,H,W] and aux [k,c,H,W]");
    for (std::size_t i = 1; i < 4; ++i)
      if (target.dim(i) != aux.dim(i)) throw ShapeError("embed_pairs: feature shapes differ");
    const std::vector<Index> repeat(static_cast<std::size_t>(aux.dim(0)), 0);
    Tensor<Scalar> pairs = concat<Scalar>({gather(target, repeat), aux}, 1);
    return run_blocks(f2_blocks_, f2_head_(pairs));
  }

  /// [k,c,H,W] -> [1,c,H,W]; requires k >= p.
  Tensor<Scalar> fuse(const Tensor<Scalar>& stack) const {
    if (stack.dim(0) < cfg_.p)
      throw DataError("fuse: " + std::to_string(stack.dim(0)) + " embedded views but p=" + std::to_string(cfg_.p));
    const Index c = stack.dim(1), h = stack.dim(2), w = stack.dim(3);
    Tensor<Scalar> pooled = max_over_axis(stack, 0, cfg_.p);       // [p,c,H,W]
    Tensor<Scalar> per_channel = permute(pooled, {1, 0, 2, 3});    // [c,p,H,W]
    Tensor<Scalar> x = run_blocks(f3_view_blocks_, f3_head_(per_channel));
    x = reshape(f3_collapse_(x), Shape{1, c, h, w});
    return run_blocks(f3_channel_blocks_, x);
  }

  /// fused [1,c,H,W] + lr view -> [1,1,aH,aW]
  Tensor<Scalar> upsample_reconstruct(const Tensor<Scalar>& fused, const Image<Scalar>& lr) const {
    if (fused.dim(2) != lr.rows() || fused.dim(3) != lr.cols())
      throw ShapeError("upsample_reconstruct: feature and image extents differ");
    Tensor<Scalar> residual = f4_(pixel_shuffle(up_(fused), cfg_.scale));
    return add(residual, image_tensor(bicubic_upscale(lr, cfg_.scale)));
  }

  ParameterList<Scalar> parameters() const {
    ParameterList<Scalar> out;
    f1_head_.collect("coarse.f1.head", out);
    collect_blocks(f1_blocks_, "coarse.f1.block", out);
    f2_head_.collect("coarse.f2.head", out);
    collect_blocks(f2_blocks_, "coarse.f2.block", out);
    f3_head_.collect("coarse.f3.head", out);
    collect_blocks(f3_view_blocks_, "coarse.f3.view_block", out);
    f3_collapse_.collect("coarse.f3.collapse", out);
    collect_blocks(f3_channel_blocks_, "coarse.f3.channel_block", out);
    up_.collect("coarse.up", out);
    f4_.collect("coarse.f4", out);
    return out;
  }

 private:
  CoarseConfig cfg_;
  Conv2d<Scalar> f1_head_, f2_head_, f3_head_, f3_collapse_, up_, f4_;
  std::vector<ResidualBlock<Scalar>> f1_blocks_, f2_blocks_, f3_view_blocks_, f3_channel_blocks_;
};

/// Single-image forms of the sub-networks, [C,H,W] in and out.
template <typename Scalar>
Tensor<Scalar> extract_features_f1(const CoarseSr<Scalar>& net, const Image<Scalar>& sai) {
  Tensor<Scalar> f = net.extract_features(image_tensor(sai));
  return reshape(f, Shape{f.dim(1), f.dim(2), f.dim(3)});
}

template <typename Scalar>
Tensor<Scalar> pairwise_embed_f2(const CoarseSr<Scalar>& net, const Tensor<Scalar>& f_target,
                                 const Tensor<Scalar>& f_aux) {
  if (f_target.shape() != f_aux.shape() || f_target.rank() != 3)
    throw ShapeError("pairwise_embed_f2: expected two [c,H,W] maps of equal shape");
  Shape s4{1, f_target.dim(0), f_target.dim(1), f_target.dim(2)};
  Tensor<Scalar> out = net.embed_pairs(reshape(f_target, s4), reshape(f_aux, s4));
  return reshape(out, f_target.shape());
}

template <typename Scalar>
Tensor<Scalar> fuse_all_f3(const CoarseSr<Scalar>& net, const Tensor<Scalar>& stack) {
  Tensor<Scalar> f = net.fuse(stack);
  return reshape(f, Shape{f.dim(1), f.dim(2), f.dim(3)});
}

/// Coarse network plus the optional adaptive SAI selector.
template <typename Scalar>
struct CoarseModel {
  CoarseSr<Scalar> net;
  std::optional<SaiSelector<Scalar>> selector;

  CoarseModel() = default;
  CoarseModel(const CoarseConfig& cfg, Rng& rng) : net(cfg, rng) {
    if (cfg.use_selector) selector.emplace(cfg.selector_channels, rng);
  }

  const CoarseConfig& config() const { return net.config(); }

  ParameterList<Scalar> parameters() const {
    ParameterList<Scalar> out = net.parameters();
    if (selector) {
      auto s = selector->parameters();
      out.insert(out.end(), s.begin(), s.end());
    }
    return out;
  }
};

enum class GateMode {
  Scores,  // multiply aux features by sigmoid(selector score)
  Ones,    // multiply by exactly one (bypass check)
  Off,     // no gating at all
};

struct CoarseOptions {
  std::optional<int> k;          // number of auxiliary views including the target itself
  std::vector<int> aux;          // explicit auxiliary view indices (overrides selection)
  GateMode gate = GateMode::Scores;
};

template <typename Scalar>
struct CoarseResult {
  Tensor<Scalar> sr;               // [1,1,aH,aW]
  std::vector<int> aux;            // embedded views, ascending; always contains the target
  std::optional<Tensor<Scalar>> scores;  // selector scores for every view, when computed
};

/// Views nearest to the target in angular distance (ties in raster order), target first.
inline std::vector<int> nearest_views(const std::vector<AngularPosition>& positions, int target, int k) {
  std::vector<int> order(positions.size());
  std::iota(order.begin(), order.end(), 0);
  const AngularPosition t = positions[static_cast<std::size_t>(target)];
  auto dist = [&](int i) {
    const auto& p = positions[static_cast<std::size_t>(i)];
    return (p.u - t.u) * (p.u - t.u) + (p.v - t.v) * (p.v - t.v);
  };
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return dist(a) < dist(b); });
  order.resize(static_cast<std::size_t>(k));
  std::sort(order.begin(), order.end());
  return order;
}

/// The target plus the top-(k-1) scoring other views, ascending.
inline std::vector<int> select_with_target(const std::vector<double>& scores, int target, int k) {
  std::vector<int> aux{target};
  if (k > 1) {
    std::vector<double> others;
    std::vector<int> ids;
    for (int i = 0; i < static_cast<int>(scores.size()); ++i)
      if (i != target) {
        others.push_back(scores[static_cast<std::size_t>(i)]);
        ids.push_back(i);
      }
    for (int j : select_top_k(others, k - 1).chosen) aux.push_back(ids[static_cast<std::size_t>(j)]);
  }
  std::sort(aux.begin(), aux.end());
  return aux;
}

template <typename Scalar>
std::vector<double> to_doubles(const Tensor<Scalar>& t) {
  std::vector<double> out(static_cast<std::size_t>(t.numel()));
  for (Index i = 0; i < t.numel(); ++i) out[static_cast<std::size_t>(i)] = t.values()[i];
  return out;
}

/// Super-resolves one view of a (regular or irregular) view set. The target is
/// always embedded as one of its own auxiliary pairs; duplicate aux indices are
/// ignored.
template <typename Scalar>
CoarseResult<Scalar> coarse_super_resolve(const ViewSet<Scalar>& views, int target,
                                          const CoarseModel<Scalar>& model, const CoarseOptions& options = {}) {
  const int q = views.size();
  if (target < 0 || target >= q) throw DataError("coarse_super_resolve: target not in the view set");
  const CoarseConfig& cfg = model.config();
  CoarseResult<Scalar> result;
  const bool gate_scores = model.selector && options.gate == GateMode::Scores;

  if (!options.aux.empty()) {
    std::set<int> unique(options.aux.begin(), options.aux.end());
    unique.insert(target);
    for (int i : unique)
      if (i < 0 || i >= q) throw DataError("coarse_super_resolve: aux index out of range");
    result.aux.assign(unique.begin(), unique.end());
  } else {
    const int k = options.k.value_or(q);
    if (k < 1 || k > q)
      throw DataError("coarse_super_resolve: k=" + std::to_string(k) + " outside [1," + std::to_string(q) + "]");
    if (model.selector) {
      std::vector<int> all(static_cast<std::size_t>(q));
      std::iota(all.begin(), all.end(), 0);
      result.scores = model.selector->score(views_tensor(views, {target}), views_tensor(views, all));
      result.aux = select_with_target(to_doubles(*result.scores), target, k);
    } else {
      result.aux = nearest_views(views.positions, target, k);
    }
  }
  const int k = static_cast<int>(result.aux.size());
  if (k < cfg.p)
    throw DataError("coarse_super_resolve: " + std::to_string(k) + " auxiliary views but p=" + std::to_string(cfg.p));

  Tensor<Scalar> features = model.net.extract_features(views_tensor(views, result.aux));
  const auto self = std::find(result.aux.begin(), result.aux.end(), target) - result.aux.begin();
  Tensor<Scalar> target_features = gather(features, {static_cast<Index>(self)});

  Tensor<Scalar> aux_features = features;
  if (gate_scores) {
    Tensor<Scalar> scores;
    if (result.scores) {
      std::vector<Index> idx(result.aux.begin(), result.aux.end());
      scores = gather(*result.scores, idx);
    } else {
      scores = model.selector->score(views_tensor(views, {target}), views_tensor(views, result.aux));
    }
    aux_features = gate_features(features, scores);
  } else if (options.gate == GateMode::Ones) {
    aux_features = scale_slices(features, Tensor<Scalar>(Shape{k}, Scalar(1)));
  }

  Tensor<Scalar> embedded = model.net.embed_pairs(target_features, aux_features);
  Tensor<Scalar> fused = model.net.fuse(embedded);
  result.sr = model.net.upsample_reconstruct(fused, views.images[static_cast<std::size_t>(target)]);
  return result;
}

template <typename Scalar>
Tensor<Scalar> coarse_loss(const Tensor<Scalar>& sr, const Tensor<Scalar>& hr) {
  return l1_loss(sr, hr);
}

}  // namespace lfsr
