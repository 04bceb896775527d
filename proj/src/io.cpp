#include "lfsr/io.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <random>
#include <sstream>

namespace lfsr {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using File = std::unique_ptr<std::FILE, FileCloser>;

File open_file(const fs::path& path, const char* mode) {
  File f(std::fopen(path.c_str(), mode));
  if (!f) throw DataError("cannot open " + path.string());
  return f;
}

[[noreturn]] void png_fail(png_structp, png_const_charp message) { throw DataError(std::string("png: ") + message); }
void png_warn(png_structp, png_const_charp) {}

std::string temp_suffix() {
  static thread_local std::mt19937_64 rng{std::random_device{}()};
  std::ostringstream os;
  os << ".tmp-" << std::hex << rng();
  return os.str();
}

std::uint16_t read_u16_le(const unsigned char* p) { return static_cast<std::uint16_t>(p[0] | (p[1] << 8)); }

}  // namespace

PngImage read_png(const fs::path& path) {
  File file = open_file(path, "rb");
  unsigned char sig[8];
  if (std::fread(sig, 1, 8, file.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0)
    throw DataError(path.string() + " is not a PNG file");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_fail, png_warn);
  png_infop info = png_create_info_struct(png);
  struct Guard {
    png_structp& png;
    png_infop& info;
    ~Guard() { png_destroy_read_struct(&png, &info, nullptr); }
  } guard{png, info};

  png_init_io(png, file.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  const int color = png_get_color_type(png, info);
  int depth = png_get_bit_depth(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (depth == 16 && std::endian::native == std::endian::little) png_set_swap(png);
  png_read_update_info(png, info);

  const int width = static_cast<int>(png_get_image_width(png, info));
  const int height = static_cast<int>(png_get_image_height(png, info));
  const int channels = png_get_channels(png, info);
  depth = png_get_bit_depth(png, info);
  const std::size_t rowbytes = png_get_rowbytes(png, info);
  std::vector<unsigned char> buffer(rowbytes * static_cast<std::size_t>(height));
  std::vector<png_bytep> rows(static_cast<std::size_t>(height));
  for (int y = 0; y < height; ++y) rows[static_cast<std::size_t>(y)] = buffer.data() + rowbytes * y;
  png_read_image(png, rows.data());

  // Gray(+alpha) -> 1 plane, RGB(+alpha) -> 3 planes; alpha is dropped.
  const int planes = channels >= 3 ? 3 : 1;
  PngImage out;
  out.bit_depth = depth;
  out.planes.assign(static_cast<std::size_t>(planes), Image<float>(height, width));
  const double max_value = depth == 16 ? 65535.0 : 255.0;
  for (int y = 0; y < height; ++y) {
    const unsigned char* row = rows[static_cast<std::size_t>(y)];
    for (int x = 0; x < width; ++x)
      for (int c = 0; c < planes; ++c) {
        const std::size_t at = static_cast<std::size_t>(x * channels + c);
        double v;
        if (depth == 16) {
          std::uint16_t s;
          std::memcpy(&s, row + 2 * at, 2);
          v = s;
        } else {
          v = row[at];
        }
        out.planes[static_cast<std::size_t>(c)](y, x) = static_cast<float>(v / max_value);
      }
  }
  return out;
}

void write_png(const fs::path& path, const std::vector<Image<float>>& planes, int bit_depth) {
  if (planes.size() != 1 && planes.size() != 3) throw DataError("write_png: need 1 or 3 planes");
  if (bit_depth != 8 && bit_depth != 16) throw DataError("write_png: bit depth must be 8 or 16");
  const int height = static_cast<int>(planes[0].rows()), width = static_cast<int>(planes[0].cols());
  const int channels = static_cast<int>(planes.size());
  const int bytes = bit_depth / 8;
  const double max_value = bit_depth == 16 ? 65535.0 : 255.0;
  std::vector<unsigned char> buffer(static_cast<std::size_t>(height) * width * channels * bytes);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      for (int c = 0; c < channels; ++c) {
        const double v = std::clamp(static_cast<double>(planes[static_cast<std::size_t>(c)](y, x)), 0.0, 1.0);
        const auto q = static_cast<unsigned>(std::lround(v * max_value));
        const std::size_t at = ((static_cast<std::size_t>(y) * width + x) * channels + c) * bytes;
        if (bytes == 2) {
          buffer[at] = static_cast<unsigned char>(q >> 8);  // PNG is big endian
          buffer[at + 1] = static_cast<unsigned char>(q & 0xff);
        } else {
          buffer[at] = static_cast<unsigned char>(q);
        }
      }

  File file = open_file(path, "wb");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_fail, png_warn);
  png_infop info = png_create_info_struct(png);
  struct Guard {
    png_structp& png;
    png_infop& info;
    ~Guard() { png_destroy_write_struct(&png, &info); }
  } guard{png, info};
  png_init_io(png, file.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), bit_depth,
               channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const std::size_t stride = static_cast<std::size_t>(width) * channels * bytes;
  for (int y = 0; y < height; ++y) png_write_row(png, buffer.data() + stride * y);
  png_write_end(png, nullptr);
}

std::string view_filename(AngularPosition p, const std::string& extension) {
  char name[64];
  std::snprintf(name, sizeof name, "view_%02d_%02d.%s", p.u, p.v, extension.c_str());
  return name;
}

std::string disparity_filename(AngularPosition p) {
  char name[64];
  std::snprintf(name, sizeof name, "disp_%02d_%02d.lfd", p.u, p.v);
  return name;
}

namespace {

nlohmann::json read_meta(const fs::path& dir) {
  std::ifstream in(dir / "meta.json");
  if (!in) throw DataError("missing " + (dir / "meta.json").string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("bad meta.json in " + dir.string() + ": " + e.what());
  }
}

int meta_int(const nlohmann::json& meta, const char* key) {
  if (!meta.contains(key) || !meta[key].is_number_integer())
    throw DataError(std::string("meta.json: missing integer field '") + key + "'");
  return meta[key].get<int>();
}

std::vector<Image<float>> read_view(const fs::path& dir, AngularPosition p, int height, int width, int channels) {
  const PngImage png = read_png(dir / view_filename(p));
  if (png.planes.front().rows() != height || png.planes.front().cols() != width)
    throw DataError(view_filename(p) + ": extents disagree with meta.json");
  if (static_cast<int>(png.planes.size()) == channels) return png.planes;
  if (channels == 3 && png.planes.size() == 1) return {png.planes[0], png.planes[0], png.planes[0]};
  if (channels == 1 && png.planes.size() == 3) {
    Image<float> y(height, width);
    for (int r = 0; r < height; ++r)
      for (int c = 0; c < width; ++c)
        y(r, c) = static_cast<float>(rgb_to_y(png.planes[0](r, c), png.planes[1](r, c), png.planes[2](r, c)));
    return {y};
  }
  throw DataError(view_filename(p) + ": unsupported channel count");
}

template <typename Writer>
void write_directory_atomic(const fs::path& dir, Writer&& write_contents) {
  const fs::path target = fs::absolute(dir);
  const fs::path staging = target.string() + temp_suffix();
  fs::create_directories(staging);
  try {
    write_contents(staging);
    if (fs::exists(target)) fs::remove_all(target);
    if (target.has_parent_path()) fs::create_directories(target.parent_path());
    fs::rename(staging, target);
  } catch (...) {
    std::error_code ec;
    fs::remove_all(staging, ec);
    throw;
  }
}

void write_meta(const fs::path& dir, const nlohmann::json& meta) {
  std::ofstream out(dir / "meta.json");
  out << meta.dump(2) << '\n';
  if (!out) throw DataError("failed to write meta.json");
}

}  // namespace

AnyLightField read_lightfield(const fs::path& dir) {
  const nlohmann::json meta = read_meta(dir);
  const int height = meta_int(meta, "H"), width = meta_int(meta, "W");
  const int channels = meta.contains("channels") ? meta_int(meta, "channels") : 1;
  if (channels != 1 && channels != 3) throw DataError("meta.json: channels must be 1 or 3");
  if (meta.contains("positions")) {
    std::vector<AngularPosition> positions;
    for (const auto& p : meta["positions"]) {
      if (!p.is_array() || p.size() != 2) throw DataError("meta.json: positions must be [u,v] pairs");
      positions.push_back({p[0].get<int>(), p[1].get<int>()});
    }
    IrregularLightField<float> lf(positions, height, width, channels);
    for (int i = 0; i < lf.size(); ++i) {
      auto planes = read_view(dir, positions[static_cast<std::size_t>(i)], height, width, channels);
      for (int c = 0; c < channels; ++c) lf.view(i, c) = planes[static_cast<std::size_t>(c)];
    }
    return lf;
  }
  LightField<float> lf(meta_int(meta, "M"), meta_int(meta, "N"), height, width, channels);
  for (const auto& p : lf.positions()) {
    auto planes = read_view(dir, p, height, width, channels);
    for (int c = 0; c < channels; ++c) lf.set_sai(p, planes[static_cast<std::size_t>(c)], c);
  }
  return lf;
}

LightField<float> read_regular_lightfield(const fs::path& dir) {
  AnyLightField any = read_lightfield(dir);
  if (auto* lf = std::get_if<LightField<float>>(&any)) return std::move(*lf);
  throw DataError(dir.string() + " holds an irregular light field; a full grid is required");
}

void write_lightfield(const fs::path& dir, const LightField<float>& lf, int bit_depth) {
  write_directory_atomic(dir, [&](const fs::path& staging) {
    write_meta(staging, {{"M", lf.angular_rows()},
                         {"N", lf.angular_cols()},
                         {"H", lf.height()},
                         {"W", lf.width()},
                         {"channels", lf.channels()}});
    for (const auto& p : lf.positions()) {
      std::vector<Image<float>> planes;
      for (int c = 0; c < lf.channels(); ++c) planes.push_back(lf.sai(p, c));
      write_png(staging / view_filename(p), planes, bit_depth);
    }
  });
}

void write_lightfield(const fs::path& dir, const IrregularLightField<float>& lf, int bit_depth) {
  write_directory_atomic(dir, [&](const fs::path& staging) {
    nlohmann::json positions = nlohmann::json::array();
    int rows = 0, cols = 0;
    for (const auto& p : lf.positions()) {
      positions.push_back({p.u, p.v});
      rows = std::max(rows, p.u + 1);
      cols = std::max(cols, p.v + 1);
    }
    write_meta(staging, {{"M", rows},
                         {"N", cols},
                         {"H", lf.height()},
                         {"W", lf.width()},
                         {"channels", lf.channels()},
                         {"positions", positions}});
    for (int i = 0; i < lf.size(); ++i) {
      std::vector<Image<float>> planes;
      for (int c = 0; c < lf.channels(); ++c) planes.push_back(lf.view(i, c));
      write_png(staging / view_filename(lf.positions()[static_cast<std::size_t>(i)]), planes, bit_depth);
    }
  });
}

DisparityMap<float> read_disparity(const fs::path& path, AngularPosition position) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  unsigned char header[8];
  if (!in.read(reinterpret_cast<char*>(header), 8) || std::memcmp(header, "LFD1", 4) != 0)
    throw DataError(path.string() + ": not an LFD1 disparity file");
  const int height = read_u16_le(header + 4), width = read_u16_le(header + 6);
  DisparityMap<float> map{Image<float>(height, width), position};
  std::vector<unsigned char> raw(static_cast<std::size_t>(height) * width * 4);
  if (!in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size())))
    throw DataError(path.string() + ": truncated disparity data");
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      const unsigned char* p = raw.data() + (static_cast<std::size_t>(y) * width + x) * 4;
      const std::uint32_t bits = p[0] | (p[1] << 8) | (p[2] << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
      map.values(y, x) = std::bit_cast<float>(bits);
    }
  if (!map.values.isFinite().all()) throw DataError(path.string() + ": non-finite disparity values");
  return map;
}

void write_disparity(const fs::path& path, const DisparityMap<float>& map) {
  const auto height = static_cast<std::uint32_t>(map.values.rows());
  const auto width = static_cast<std::uint32_t>(map.values.cols());
  if (height > 0xffff || width > 0xffff) throw DataError("write_disparity: extents exceed 65535");
  if (!map.values.isFinite().all()) throw DataError("write_disparity: non-finite disparity values");
  std::string bytes = "LFD1";
  auto put = [&](std::uint32_t v, int count) {
    for (int i = 0; i < count; ++i) bytes.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  };
  put(height, 2);
  put(width, 2);
  for (std::uint32_t y = 0; y < height; ++y)
    for (std::uint32_t x = 0; x < width; ++x) put(std::bit_cast<std::uint32_t>(map.values(y, x)), 4);
  write_file_atomic(path, bytes);
}

void write_file_atomic(const fs::path& path, const std::string& bytes) {
  const fs::path staging = path.string() + temp_suffix();
  {
    std::ofstream out(staging, std::ios::binary);
    if (!out) throw DataError("cannot write " + staging.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("short write to " + staging.string());
  }
  fs::rename(staging, path);
}

nlohmann::json psnr_json(double value) {
  if (std::isinf(value) && value > 0) return "inf";
  return value;
}

nlohmann::json to_json(const MetricReport& report) {
  nlohmann::json grid = nlohmann::json::array();
  nlohmann::json ssim_grid = nlohmann::json::array();
  for (Eigen::Index u = 0; u < report.psnr_grid.rows(); ++u) {
    nlohmann::json row = nlohmann::json::array(), srow = nlohmann::json::array();
    for (Eigen::Index v = 0; v < report.psnr_grid.cols(); ++v) {
      row.push_back(psnr_json(report.psnr_grid(u, v)));
      srow.push_back(report.ssim_grid(u, v));
    }
    grid.push_back(row);
    ssim_grid.push_back(srow);
  }
  return {{"psnr_grid", grid},   {"ssim_grid", ssim_grid},   {"mean_psnr", psnr_json(report.mean_psnr)},
          {"mean_ssim", report.mean_ssim}, {"epi_psnr", psnr_json(report.epi_psnr)}, {"epi_ssim", report.epi_ssim}};
}

}  // namespace lfsr
