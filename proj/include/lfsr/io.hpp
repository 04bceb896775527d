#pragma once

#include "lfsr/imaging.hpp"
#include "lfsr/lightfield.hpp"

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <variant>
#include <vector>

namespace lfsr {

namespace fs = std::filesystem;

/// Planar image with values in [0,1].
struct PngImage {
  std::vector<Image<float>> planes;
  int bit_depth = 8;
};

PngImage read_png(const fs::path& path);

/// Writes 1 (gray) or 3 (RGB) planes; values are clamped to [0,1] and quantized.
void write_png(const fs::path& path, const std::vector<Image<float>>& planes, int bit_depth = 16);

/// view_{u:02}_{v:02}.png
std::string view_filename(AngularPosition p, const std::string& extension = "png");

using AnyLightField = std::variant<LightField<float>, IrregularLightField<float>>;

/// Reads a light-field directory (meta.json + one PNG per view). A meta.json
/// carrying "positions" describes an irregular light field.
AnyLightField read_lightfield(const fs::path& dir);
LightField<float> read_regular_lightfield(const fs::path& dir);

/// Both writers stage into a sibling temporary directory and rename it into place.
void write_lightfield(const fs::path& dir, const LightField<float>& lf, int bit_depth = 16);
void write_lightfield(const fs::path& dir, const IrregularLightField<float>& lf, int bit_depth = 16);

/// Raw disparity: "LFD1", u16 height, u16 width (little endian), then float32 samples row-major.
DisparityMap<float> read_disparity(const fs::path& path, AngularPosition position = {});
void write_disparity(const fs::path& path, const DisparityMap<float>& map);

/// disp_{u:02}_{v:02}.lfd
std::string disparity_filename(AngularPosition p);

/// Writes bytes to a temporary sibling and renames it over `path`.
void write_file_atomic(const fs::path& path, const std::string& bytes);

nlohmann::json to_json(const MetricReport& report);

/// +inf is not representable in JSON; it is written as the string "inf".
nlohmann::json psnr_json(double value);

}  // namespace lfsr
