#pragma once

#include "lfsr/lightfield.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>
#include <vector>

namespace lfsr {

// ---------------------------------------------------------------------------
// Color

/// BT.601 studio-range luma of RGB in [0,1]; output lies in [16/255, 235/255].
inline double rgb_to_y(double r, double g, double b) {
  return (65.481 * r + 128.553 * g + 24.966 * b + 16.0) / 255.0;
}

inline Eigen::Matrix3d ycbcr_matrix() {
  Eigen::Matrix3d m;
  m << 65.481, 128.553, 24.966, -37.797, -74.203, 112.0, 112.0, -93.786, -18.214;
  return m / 255.0;
}

inline Eigen::Vector3d ycbcr_offset() { return Eigen::Vector3d(16.0, 128.0, 128.0) / 255.0; }

/// RGB light field -> YCbCr light field (channel 0 is Y).
template <typename Scalar>
LightField<Scalar> rgb_to_ycbcr(const LightField<Scalar>& rgb) {
  if (rgb.channels() != 3) throw DataError("rgb_to_ycbcr: need 3 channels");
  LightField<Scalar> out(rgb.angular_rows(), rgb.angular_cols(), rgb.height(), rgb.width(), 3);
  const Eigen::Matrix3d m = ycbcr_matrix();
  const Eigen::Vector3d off = ycbcr_offset();
  for (int u = 0; u < rgb.angular_rows(); ++u)
    for (int v = 0; v < rgb.angular_cols(); ++v)
      for (int y = 0; y < rgb.height(); ++y)
        for (int x = 0; x < rgb.width(); ++x) {
          const Eigen::Vector3d px(rgb(u, v, y, x, 0), rgb(u, v, y, x, 1), rgb(u, v, y, x, 2));
          const Eigen::Vector3d ycc = m * px + off;
          for (int c = 0; c < 3; ++c) out(u, v, y, x, c) = static_cast<Scalar>(ycc[c]);
        }
  return out;
}

template <typename Scalar>
LightField<Scalar> ycbcr_to_rgb(const LightField<Scalar>& ycc) {
  if (ycc.channels() != 3) throw DataError("ycbcr_to_rgb: need 3 channels");
  LightField<Scalar> out(ycc.angular_rows(), ycc.angular_cols(), ycc.height(), ycc.width(), 3);
  const Eigen::Matrix3d inv = ycbcr_matrix().inverse();
  const Eigen::Vector3d off = ycbcr_offset();
  for (int u = 0; u < ycc.angular_rows(); ++u)
    for (int v = 0; v < ycc.angular_cols(); ++v)
      for (int y = 0; y < ycc.height(); ++y)
        for (int x = 0; x < ycc.width(); ++x) {
          const Eigen::Vector3d px(ycc(u, v, y, x, 0), ycc(u, v, y, x, 1), ycc(u, v, y, x, 2));
          const Eigen::Vector3d rgb = inv * (px - off);
          for (int c = 0; c < 3; ++c) out(u, v, y, x, c) = static_cast<Scalar>(std::clamp(rgb[c], 0.0, 1.0));
        }
  return out;
}

/// Luma-only light field; single-channel input is returned unchanged.
template <typename Scalar>
LightField<Scalar> luma(const LightField<Scalar>& lf) {
  if (lf.channels() == 1) return lf;
  if (lf.channels() != 3) throw DataError("luma: expected 1 or 3 channels");
  LightField<Scalar> out(lf.angular_rows(), lf.angular_cols(), lf.height(), lf.width(), 1);
  for (int u = 0; u < lf.angular_rows(); ++u)
    for (int v = 0; v < lf.angular_cols(); ++v)
      for (int y = 0; y < lf.height(); ++y)
        for (int x = 0; x < lf.width(); ++x)
          out(u, v, y, x) = static_cast<Scalar>(rgb_to_y(lf(u, v, y, x, 0), lf(u, v, y, x, 1), lf(u, v, y, x, 2)));
  return out;
}

// ---------------------------------------------------------------------------
// Bicubic resampling

enum class ResampleDirection { Down, Up };

struct ResampleSpec {
  int scale = 2;
  ResampleDirection direction = ResampleDirection::Down;
  bool antialias = true;  // only affects downscaling
};

inline double cubic_kernel(double x, double a = -0.5) {
  const double t = std::abs(x);
  if (t <= 1.0) return ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0;
  if (t < 2.0) return ((a * t - 5.0 * a) * t + 8.0 * a) * t - 4.0 * a;
  return 0.0;
}

/// Per-output-sample source indices (edge-clamped) and normalized weights.
struct ResampleTaps {
  std::vector<std::vector<int>> indices;
  std::vector<std::vector<double>> weights;
  std::vector<double> raw_sums;  // weight sums before normalization
};

/// Half-pixel-centered sampling: source coordinate = (i + 0.5) / scale - 0.5.
/// When downscaling with antialiasing the kernel is stretched by 1 / scale.
inline ResampleTaps resample_taps(int in_size, int out_size, double scale, bool antialias) {
  const bool widen = antialias && scale < 1.0;
  const double kernel_scale = widen ? scale : 1.0;
  const double support = 4.0 / kernel_scale;
  const int taps = static_cast<int>(std::ceil(support)) + 2;
  ResampleTaps out;
  out.indices.resize(static_cast<std::size_t>(out_size));
  out.weights.resize(static_cast<std::size_t>(out_size));
  out.raw_sums.resize(static_cast<std::size_t>(out_size));
  for (int i = 0; i < out_size; ++i) {
    const double center = (i + 0.5) / scale - 0.5;
    const int left = static_cast<int>(std::floor(center - support / 2.0));
    auto& idx = out.indices[static_cast<std::size_t>(i)];
    auto& w = out.weights[static_cast<std::size_t>(i)];
    double total = 0.0;
    for (int t = 0; t < taps; ++t) {
      const int j = left + t;
      const double weight = kernel_scale * cubic_kernel(kernel_scale * (center - j));
      if (weight == 0.0) continue;
      idx.push_back(std::clamp(j, 0, in_size - 1));
      w.push_back(weight);
      total += weight;
    }
    out.raw_sums[static_cast<std::size_t>(i)] = total;
    for (double& x : w) x /= total;
  }
  return out;
}

template <typename Scalar>
Image<Scalar> bicubic_resize(const Image<Scalar>& img, const ResampleSpec& spec) {
  if (spec.scale < 2) throw DataError("bicubic_resize: scale must be an integer >= 2");
  const int h = static_cast<int>(img.rows()), w = static_cast<int>(img.cols());
  int out_h, out_w;
  double scale;
  if (spec.direction == ResampleDirection::Down) {
    if (h % spec.scale != 0 || w % spec.scale != 0)
      throw DataError("bicubic_resize: extents " + std::to_string(h) + "x" + std::to_string(w) +
                      " not divisible by " + std::to_string(spec.scale));
    out_h = h / spec.scale;
    out_w = w / spec.scale;
    scale = 1.0 / spec.scale;
  } else {
    out_h = h * spec.scale;
    out_w = w * spec.scale;
    scale = spec.scale;
  }
  const ResampleTaps rows = resample_taps(h, out_h, scale, spec.antialias);
  const ResampleTaps cols = resample_taps(w, out_w, scale, spec.antialias);

  Eigen::ArrayXXd horizontal(h, out_w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < out_w; ++x) {
      double acc = 0.0;
      const auto& idx = cols.indices[static_cast<std::size_t>(x)];
      const auto& wt = cols.weights[static_cast<std::size_t>(x)];
      for (std::size_t t = 0; t < idx.size(); ++t) acc += wt[t] * static_cast<double>(img(y, idx[t]));
      horizontal(y, x) = acc;
    }
  Image<Scalar> out(out_h, out_w);
  for (int y = 0; y < out_h; ++y) {
    const auto& idx = rows.indices[static_cast<std::size_t>(y)];
    const auto& wt = rows.weights[static_cast<std::size_t>(y)];
    for (int x = 0; x < out_w; ++x) {
      double acc = 0.0;
      for (std::size_t t = 0; t < idx.size(); ++t) acc += wt[t] * horizontal(idx[t], x);
      out(y, x) = static_cast<Scalar>(acc);
    }
  }
  return out;
}

template <typename Scalar>
Image<Scalar> bicubic_upscale(const Image<Scalar>& img, int scale) {
  return bicubic_resize(img, ResampleSpec{scale, ResampleDirection::Up, false});
}

template <typename Scalar>
Image<Scalar> bicubic_downscale(const Image<Scalar>& img, int scale) {
  return bicubic_resize(img, ResampleSpec{scale, ResampleDirection::Down, true});
}

/// Applies a resize to every view and channel.
template <typename Scalar>
LightField<Scalar> resize_lightfield(const LightField<Scalar>& lf, const ResampleSpec& spec) {
  const int out_h = spec.direction == ResampleDirection::Down ? lf.height() / spec.scale : lf.height() * spec.scale;
  const int out_w = spec.direction == ResampleDirection::Down ? lf.width() / spec.scale : lf.width() * spec.scale;
  if (spec.direction == ResampleDirection::Down && (lf.height() % spec.scale || lf.width() % spec.scale))
    throw DataError("degrade: spatial extents not divisible by the scale");
  LightField<Scalar> out(lf.angular_rows(), lf.angular_cols(), out_h, out_w, lf.channels());
  for (const auto& p : lf.positions())
    for (int c = 0; c < lf.channels(); ++c) out.set_sai(p, bicubic_resize(lf.sai(p, c), spec), c);
  return out;
}

template <typename Scalar>
LightField<Scalar> degrade(const LightField<Scalar>& hr, int scale) {
  return resize_lightfield(hr, ResampleSpec{scale, ResampleDirection::Down, true});
}

// ---------------------------------------------------------------------------
// Metrics

inline constexpr double kInfinitePsnr = std::numeric_limits<double>::infinity();

/// Mean of the finite entries; +inf when none is finite.
template <typename Range>
double mean_finite(const Range& values) {
  double total = 0.0;
  long count = 0;
  for (double v : values)
    if (std::isfinite(v)) {
      total += v;
      ++count;
    }
  return count == 0 ? kInfinitePsnr : total / static_cast<double>(count);
}

template <typename DerivedA, typename DerivedB>
double psnr(const Eigen::ArrayBase<DerivedA>& a, const Eigen::ArrayBase<DerivedB>& b, double peak = 1.0) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw DataError("psnr: shape mismatch");
  const double mse = (a.template cast<double>() - b.template cast<double>()).square().mean();
  if (mse == 0.0) return kInfinitePsnr;
  return 10.0 * std::log10(peak * peak / mse);
}

struct SsimOptions {
  int window_rows = 11;
  int window_cols = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double peak = 1.0;
};

inline Eigen::VectorXd gaussian_window(int size, double sigma) {
  Eigen::VectorXd w(size);
  const double c = (size - 1) / 2.0;
  for (int i = 0; i < size; ++i) w[i] = std::exp(-((i - c) * (i - c)) / (2.0 * sigma * sigma));
  return w / w.sum();
}

namespace detail {

// 'valid' separable filtering with a rows x cols kernel built from two 1D windows.
inline Eigen::ArrayXXd filter_valid(const Eigen::ArrayXXd& img, const Eigen::VectorXd& wr,
                                    const Eigen::VectorXd& wc) {
  const Eigen::Index oh = img.rows() - wr.size() + 1, ow = img.cols() - wc.size() + 1;
  Eigen::ArrayXXd tmp(img.rows(), ow);
  for (Eigen::Index y = 0; y < img.rows(); ++y)
    for (Eigen::Index x = 0; x < ow; ++x) tmp(y, x) = (img.row(y).segment(x, wc.size()).transpose().matrix().dot(wc));
  Eigen::ArrayXXd out(oh, ow);
  for (Eigen::Index y = 0; y < oh; ++y)
    for (Eigen::Index x = 0; x < ow; ++x) out(y, x) = tmp.col(x).segment(y, wr.size()).matrix().dot(wr);
  return out;
}

}  // namespace detail

/// Mean SSIM over all fully-contained Gaussian windows.
template <typename DerivedA, typename DerivedB>
double ssim(const Eigen::ArrayBase<DerivedA>& a, const Eigen::ArrayBase<DerivedB>& b, const SsimOptions& o = {}) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw DataError("ssim: shape mismatch");
  if (a.rows() < o.window_rows || a.cols() < o.window_cols)
    throw DataError("ssim: image smaller than the " + std::to_string(o.window_rows) + "x" +
                    std::to_string(o.window_cols) + " window");
  const Eigen::ArrayXXd x = a.template cast<double>();
  const Eigen::ArrayXXd y = b.template cast<double>();
  const Eigen::VectorXd wr = gaussian_window(o.window_rows, o.sigma);
  const Eigen::VectorXd wc = gaussian_window(o.window_cols, o.sigma);
  const Eigen::ArrayXXd mx = detail::filter_valid(x, wr, wc);
  const Eigen::ArrayXXd my = detail::filter_valid(y, wr, wc);
  const Eigen::ArrayXXd sxx = detail::filter_valid(x * x, wr, wc) - mx * mx;
  const Eigen::ArrayXXd syy = detail::filter_valid(y * y, wr, wc) - my * my;
  const Eigen::ArrayXXd sxy = detail::filter_valid(x * y, wr, wc) - mx * my;
  const double c1 = (o.k1 * o.peak) * (o.k1 * o.peak);
  const double c2 = (o.k2 * o.peak) * (o.k2 * o.peak);
  const Eigen::ArrayXXd map = ((2.0 * mx * my + c1) * (2.0 * sxy + c2)) /
                              ((mx * mx + my * my + c1) * (sxx + syy + c2));
  return map.mean();
}

/// SSIM options whose window shrinks (to the largest odd size) for images below 11 pixels.
inline SsimOptions fitted_ssim_options(Eigen::Index rows, Eigen::Index cols) {
  SsimOptions o;
  auto fit = [](Eigen::Index n) { return static_cast<int>(std::min<Eigen::Index>(11, n % 2 ? n : n - 1)); };
  o.window_rows = fit(rows);
  o.window_cols = fit(cols);
  return o;
}

template <typename Scalar>
Eigen::ArrayXXd per_sai_psnr(const LightField<Scalar>& a, const LightField<Scalar>& b, int channel = 0) {
  if (!a.same_extents(b)) throw DataError("per_sai_psnr: light field shapes differ");
  Eigen::ArrayXXd grid(a.angular_rows(), a.angular_cols());
  for (const auto& p : a.positions()) grid(p.u, p.v) = psnr(a.sai(p, channel), b.sai(p, channel));
  return grid;
}

struct EpiScores {
  double psnr = 0.0;
  double ssim = 0.0;
};

/// PSNR/SSIM averaged over every horizontal and vertical EPI.
template <typename Scalar>
EpiScores epi_metrics(const LightField<Scalar>& a, const LightField<Scalar>& b, int channel = 0) {
  if (!a.same_extents(b)) throw DataError("epi_metrics: light field shapes differ");
  std::vector<double> psnrs, ssims;
  auto score = [&](EpiOrientation o, int fa, int fb) {
    const auto ea = extract_epi(a, o, fa, fb, channel);
    const auto eb = extract_epi(b, o, fa, fb, channel);
    psnrs.push_back(psnr(ea.samples, eb.samples));
    ssims.push_back(ssim(ea.samples, eb.samples, fitted_ssim_options(ea.samples.rows(), ea.samples.cols())));
  };
  for (int y = 0; y < a.height(); ++y)
    for (int v = 0; v < a.angular_cols(); ++v) score(EpiOrientation::Horizontal, y, v);
  for (int x = 0; x < a.width(); ++x)
    for (int u = 0; u < a.angular_rows(); ++u) score(EpiOrientation::Vertical, x, u);
  EpiScores out;
  out.psnr = mean_finite(psnrs);
  double total = 0.0;
  for (double s : ssims) total += s;
  out.ssim = total / static_cast<double>(ssims.size());
  return out;
}

/// Full-frame evaluation report. Means skip +inf PSNR entries; a mean of +inf
/// means every entry was identical.
struct MetricReport {
  Eigen::ArrayXXd psnr_grid;
  Eigen::ArrayXXd ssim_grid;
  double mean_psnr = 0.0;
  double mean_ssim = 0.0;
  double epi_psnr = 0.0;
  double epi_ssim = 0.0;
};

template <typename Scalar>
MetricReport evaluate(const LightField<Scalar>& reference, const LightField<Scalar>& test, int channel = 0) {
  if (!reference.same_extents(test)) throw DataError("evaluate: light field shapes differ");
  MetricReport r;
  r.psnr_grid = per_sai_psnr(reference, test, channel);
  r.ssim_grid.resize(reference.angular_rows(), reference.angular_cols());
  const SsimOptions o = fitted_ssim_options(reference.height(), reference.width());
  for (const auto& p : reference.positions())
    r.ssim_grid(p.u, p.v) = ssim(reference.sai(p, channel), test.sai(p, channel), o);
  r.mean_psnr = mean_finite(r.psnr_grid.reshaped());
  r.mean_ssim = r.ssim_grid.mean();
  const EpiScores e = epi_metrics(reference, test, channel);
  r.epi_psnr = e.psnr;
  r.epi_ssim = e.ssim;
  return r;
}

}  // namespace lfsr
