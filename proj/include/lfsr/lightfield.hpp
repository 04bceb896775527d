#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <compare>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace lfsr {

/// Invalid or out-of-range data (bad coordinates, inconsistent files, ...).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <typename Scalar>
using Image = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Angular coordinate: u indexes angular rows, v angular columns.
/// Parallax along u moves content along x, parallax along v moves it along y.
struct AngularPosition {
  int u = 0;
  int v = 0;

  friend auto operator<=>(const AngularPosition&, const AngularPosition&) = default;
};

inline std::string to_string(AngularPosition p) {
  return "(" + std::to_string(p.u) + "," + std::to_string(p.v) + ")";
}

/// Regular M x N grid of sub-aperture images, each H x W with C planar channels.
template <typename Scalar>
class LightField {
 public:
  LightField() = default;
  LightField(int rows, int cols, int height, int width, int channels = 1, Scalar fill = Scalar(0))
      : rows_(rows), cols_(cols), height_(height), width_(width), channels_(channels) {
    if (rows < 1 || cols < 1 || height < 1 || width < 1 || channels < 1)
      throw DataError("light field extents must be positive");
    data_ = Eigen::Array<Scalar, Eigen::Dynamic, 1>::Constant(
        static_cast<Eigen::Index>(rows) * cols * height * width * channels, fill);
  }

  int angular_rows() const { return rows_; }
  int angular_cols() const { return cols_; }
  int height() const { return height_; }
  int width() const { return width_; }
  int channels() const { return channels_; }
  int view_count() const { return rows_ * cols_; }
  AngularPosition center() const { return {rows_ / 2, cols_ / 2}; }

  bool contains(AngularPosition p) const { return p.u >= 0 && p.u < rows_ && p.v >= 0 && p.v < cols_; }

  int view_index(AngularPosition p) const {
    check(p);
    return p.u * cols_ + p.v;
  }

  AngularPosition position(int index) const { return {index / cols_, index % cols_}; }

  std::vector<AngularPosition> positions() const {
    std::vector<AngularPosition> out;
    for (int u = 0; u < rows_; ++u)
      for (int v = 0; v < cols_; ++v) out.push_back({u, v});
    return out;
  }

  Scalar& operator()(int u, int v, int y, int x, int c = 0) { return data_[offset(u, v, y, x, c)]; }
  Scalar operator()(int u, int v, int y, int x, int c = 0) const { return data_[offset(u, v, y, x, c)]; }

  Image<Scalar> sai(AngularPosition p, int channel = 0) const {
    check(p);
    check_channel(channel);
    return Eigen::Map<const Image<Scalar>>(data_.data() + offset(p.u, p.v, 0, 0, channel), height_, width_);
  }

  void set_sai(AngularPosition p, const Image<Scalar>& image, int channel = 0) {
    check(p);
    check_channel(channel);
    if (image.rows() != height_ || image.cols() != width_)
      throw DataError("set_sai: image extents do not match the light field");
    Eigen::Map<Image<Scalar>>(data_.data() + offset(p.u, p.v, 0, 0, channel), height_, width_) = image;
  }

  Eigen::Array<Scalar, Eigen::Dynamic, 1>& data() { return data_; }
  const Eigen::Array<Scalar, Eigen::Dynamic, 1>& data() const { return data_; }

  template <typename F>
  LightField map(F f) const {
    LightField out = *this;
    out.data_ = data_.unaryExpr(f);
    return out;
  }

  template <typename Other>
  LightField<Other> cast() const {
    LightField<Other> out(rows_, cols_, height_, width_, channels_);
    out.data() = data_.template cast<Other>();
    return out;
  }

  bool same_extents(const LightField& o) const {
    return rows_ == o.rows_ && cols_ == o.cols_ && height_ == o.height_ && width_ == o.width_ &&
           channels_ == o.channels_;
  }

 private:
  Eigen::Index offset(int u, int v, int y, int x, int c) const {
    return ((((static_cast<Eigen::Index>(u) * cols_ + v) * channels_ + c) * height_ + y) * width_) + x;
  }
  void check(AngularPosition p) const {
    if (!contains(p)) throw DataError("angular position " + to_string(p) + " out of range");
  }
  void check_channel(int c) const {
    if (c < 0 || c >= channels_) throw DataError("channel " + std::to_string(c) + " out of range");
  }

  int rows_ = 0, cols_ = 0, height_ = 0, width_ = 0, channels_ = 0;
  Eigen::Array<Scalar, Eigen::Dynamic, 1> data_;
};

/// Unstructured set of views with distinct angular positions.
template <typename Scalar>
class IrregularLightField {
 public:
  IrregularLightField() = default;
  IrregularLightField(std::vector<AngularPosition> positions, int height, int width, int channels = 1)
      : positions_(std::move(positions)), height_(height), width_(width), channels_(channels) {
    if (positions_.empty()) throw DataError("irregular light field needs at least one view");
    if (std::set<AngularPosition>(positions_.begin(), positions_.end()).size() != positions_.size())
      throw DataError("irregular light field: duplicate angular positions");
    views_.assign(positions_.size() * static_cast<std::size_t>(channels), Image<Scalar>::Zero(height, width));
  }

  int size() const { return static_cast<int>(positions_.size()); }
  int height() const { return height_; }
  int width() const { return width_; }
  int channels() const { return channels_; }
  const std::vector<AngularPosition>& positions() const { return positions_; }

  int index_of(AngularPosition p) const {
    auto it = std::find(positions_.begin(), positions_.end(), p);
    if (it == positions_.end()) throw DataError("view " + to_string(p) + " not in irregular light field");
    return static_cast<int>(it - positions_.begin());
  }

  const Image<Scalar>& view(int index, int channel = 0) const { return views_.at(slot(index, channel)); }
  Image<Scalar>& view(int index, int channel = 0) { return views_.at(slot(index, channel)); }

 private:
  std::size_t slot(int index, int channel) const {
    if (index < 0 || index >= size() || channel < 0 || channel >= channels_)
      throw DataError("irregular light field: view/channel out of range");
    return static_cast<std::size_t>(index) * channels_ + channel;
  }

  std::vector<AngularPosition> positions_;
  int height_ = 0, width_ = 0, channels_ = 0;
  std::vector<Image<Scalar>> views_;
};

enum class EpiOrientation { Horizontal, Vertical };

/// Horizontal EPIs fix (y, v) and vary (u, x): extents M x W.
/// Vertical EPIs fix (x, u) and vary (v, y): extents N x H.
template <typename Scalar>
struct Epi {
  EpiOrientation orientation = EpiOrientation::Horizontal;
  Image<Scalar> samples;
  int fixed_spatial = 0;
  int fixed_angular = 0;
};

/// Disparity in pixels per unit angular step, registered to one view.
template <typename Scalar>
struct DisparityMap {
  Image<Scalar> values;
  AngularPosition position;
};

template <typename Scalar>
Image<Scalar> get_sai(const LightField<Scalar>& lf, AngularPosition pos, int channel = 0) {
  return lf.sai(pos, channel);
}

template <typename Scalar>
Epi<Scalar> extract_epi(const LightField<Scalar>& lf, EpiOrientation orientation, int fixed_a,
                        int fixed_b, int channel = 0) {
  Epi<Scalar> epi;
  epi.orientation = orientation;
  epi.fixed_spatial = fixed_a;
  epi.fixed_angular = fixed_b;
  if (orientation == EpiOrientation::Horizontal) {
    if (fixed_a < 0 || fixed_a >= lf.height() || fixed_b < 0 || fixed_b >= lf.angular_cols())
      throw DataError("extract_epi: fixed (y, v) out of range");
    epi.samples.resize(lf.angular_rows(), lf.width());
    for (int u = 0; u < lf.angular_rows(); ++u)
      for (int x = 0; x < lf.width(); ++x) epi.samples(u, x) = lf(u, fixed_b, fixed_a, x, channel);
  } else {
    if (fixed_a < 0 || fixed_a >= lf.width() || fixed_b < 0 || fixed_b >= lf.angular_rows())
      throw DataError("extract_epi: fixed (x, u) out of range");
    epi.samples.resize(lf.angular_cols(), lf.height());
    for (int v = 0; v < lf.angular_cols(); ++v)
      for (int y = 0; y < lf.height(); ++y) epi.samples(v, y) = lf(fixed_b, v, y, fixed_a, channel);
  }
  return epi;
}

/// Bilinear sample at (y, x); both coordinates must lie inside the image.
template <typename Scalar>
double sample_bilinear(const Image<Scalar>& img, double y, double x) {
  const int y0 = static_cast<int>(std::floor(y));
  const int x0 = static_cast<int>(std::floor(x));
  const int y1 = std::min<int>(y0 + 1, static_cast<int>(img.rows()) - 1);
  const int x1 = std::min<int>(x0 + 1, static_cast<int>(img.cols()) - 1);
  const double fy = y - y0, fx = x - x0;
  const double top = (1.0 - fx) * img(y0, x0) + fx * img(y0, x1);
  const double bottom = (1.0 - fx) * img(y1, x0) + fx * img(y1, x1);
  return (1.0 - fy) * top + fy * bottom;
}

/// Mean |L_a(x) - L_b(x + d(x) (b - a))| over pixels whose warped position stays inside view b.
template <typename Scalar>
double parallax_residual(const LightField<Scalar>& lf, const DisparityMap<Scalar>& disparity,
                         AngularPosition a, AngularPosition b, int channel = 0) {
  if (!lf.contains(a) || !lf.contains(b)) throw DataError("parallax_residual: position out of range");
  if (disparity.values.rows() != lf.height() || disparity.values.cols() != lf.width())
    throw DataError("parallax_residual: disparity extents do not match the light field");
  const Image<Scalar> va = lf.sai(a, channel);
  const Image<Scalar> vb = lf.sai(b, channel);
  const double du = b.u - a.u, dv = b.v - a.v;
  const double max_y = lf.height() - 1, max_x = lf.width() - 1;
  double total = 0.0;
  long count = 0;
  for (int y = 0; y < lf.height(); ++y) {
    for (int x = 0; x < lf.width(); ++x) {
      const double d = disparity.values(y, x);
      const double wy = y + d * dv, wx = x + d * du;
      if (wy < 0.0 || wy > max_y || wx < 0.0 || wx > max_x) continue;
      total += std::abs(static_cast<double>(va(y, x)) - sample_bilinear(vb, wy, wx));
      ++count;
    }
  }
  if (count == 0) throw DataError("parallax_residual: no pixel maps inside the second view");
  return total / static_cast<double>(count);
}

template <typename Scalar>
IrregularLightField<Scalar> make_irregular(const LightField<Scalar>& lf,
                                           const std::vector<AngularPosition>& positions) {
  for (const auto& p : positions)
    if (!lf.contains(p)) throw DataError("make_irregular: position " + to_string(p) + " out of range");
  IrregularLightField<Scalar> out(positions, lf.height(), lf.width(), lf.channels());
  for (int i = 0; i < out.size(); ++i)
    for (int c = 0; c < lf.channels(); ++c) out.view(i, c) = lf.sai(positions[static_cast<std::size_t>(i)], c);
  return out;
}

struct DisparityEstimateOptions {
  double min_disparity = -4.0;
  double max_disparity = 4.0;
  int window = 7;
  double epsilon = 1e-6;
  int channel = 0;
};

template <typename Scalar>
struct DisparityEstimate {
  DisparityMap<Scalar> map;
  bool textureless = false;
};

/// Center-view disparity from the EPI structure tensor:
/// d = -sum(Ix*Iu + Iy*Iv) / (sum(Ix^2 + Iy^2) + eps) over a square window.
template <typename Scalar>
DisparityEstimate<Scalar> estimate_disparity_epi(const LightField<Scalar>& lf,
                                                 const DisparityEstimateOptions& options = {}) {
  if (lf.angular_rows() < 3 || lf.angular_cols() < 3)
    throw DataError("estimate_disparity_epi: needs at least 3x3 views");
  const int H = lf.height(), W = lf.width(), ch = options.channel;
  const AngularPosition c = lf.center();
  auto at = [&](int u, int v, int y, int x) {
    return static_cast<double>(lf(u, v, std::clamp(y, 0, H - 1), std::clamp(x, 0, W - 1), ch));
  };
  Eigen::ArrayXXd cross(H, W), energy(H, W);
  double max_gradient = 0.0;
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      const double ix = (at(c.u, c.v, y, x + 1) - at(c.u, c.v, y, x - 1)) / 2.0;
      const double iy = (at(c.u, c.v, y + 1, x) - at(c.u, c.v, y - 1, x)) / 2.0;
      const double iu = (at(c.u + 1, c.v, y, x) - at(c.u - 1, c.v, y, x)) / 2.0;
      const double iv = (at(c.u, c.v + 1, y, x) - at(c.u, c.v - 1, y, x)) / 2.0;
      cross(y, x) = ix * iu + iy * iv;
      energy(y, x) = ix * ix + iy * iy;
      max_gradient = std::max({max_gradient, std::abs(ix), std::abs(iy), std::abs(iu), std::abs(iv)});
    }
  }
  DisparityEstimate<Scalar> out;
  out.map.position = c;
  out.map.values = Image<Scalar>::Zero(H, W);
  if (max_gradient < options.epsilon) {
    out.textureless = true;
    return out;
  }
  const int r = options.window / 2;
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      const int y0 = std::max(0, y - r), y1 = std::min(H - 1, y + r);
      const int x0 = std::max(0, x - r), x1 = std::min(W - 1, x + r);
      const double num = cross.block(y0, x0, y1 - y0 + 1, x1 - x0 + 1).sum();
      const double den = energy.block(y0, x0, y1 - y0 + 1, x1 - x0 + 1).sum();
      const double d = -num / (den + options.epsilon);
      out.map.values(y, x) = static_cast<Scalar>(std::clamp(d, options.min_disparity, options.max_disparity));
    }
  }
  return out;
}

/// Renders an M x N light field from one base image under a constant disparity:
/// view (u, v) at (y, x) shows base(y + oy - d (v - vc), x + ox - d (u - uc)), bilinearly sampled.
/// With height/width <= 0 the largest centered frame that keeps every sample inside the base is used.
template <typename Scalar>
LightField<Scalar> synthesize_lightfield(const Image<Scalar>& base, double disparity, int rows, int cols,
                                         int height = 0, int width = 0) {
  if (rows < 1 || cols < 1) throw DataError("synthesize: angular extents must be positive");
  const AngularPosition c{rows / 2, cols / 2};
  const double reach_x = std::abs(disparity) * std::max(c.u, rows - 1 - c.u);
  const double reach_y = std::abs(disparity) * std::max(c.v, cols - 1 - c.v);
  const int margin_x = static_cast<int>(std::ceil(reach_x));
  const int margin_y = static_cast<int>(std::ceil(reach_y));
  const int base_h = static_cast<int>(base.rows()), base_w = static_cast<int>(base.cols());
  if (height <= 0) height = base_h - 2 * margin_y;
  if (width <= 0) width = base_w - 2 * margin_x;
  if (height < 1 || width < 1 || height + 2 * margin_y > base_h || width + 2 * margin_x > base_w)
    throw DataError("synthesize: base image too small for the requested disparity and view count");
  const int oy = (base_h - height) / 2, ox = (base_w - width) / 2;
  LightField<Scalar> lf(rows, cols, height, width, 1);
  for (int u = 0; u < rows; ++u)
    for (int v = 0; v < cols; ++v)
      for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) {
          const double sy = y + oy - disparity * (v - c.v);
          const double sx = x + ox - disparity * (u - c.u);
          lf(u, v, y, x) = static_cast<Scalar>(sample_bilinear(base, sy, sx));
        }
  return lf;
}

}  // namespace lfsr
