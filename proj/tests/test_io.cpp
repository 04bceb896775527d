#include "doctest.h"

#include "lfsr/io.hpp"
#include "support/oracles.hpp"

#include <fstream>

using namespace lfsr;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("lfsr_io_" + name)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

LightField<float> random_lf(int m, int n, int h, int w, int c, std::uint64_t seed) {
  LightField<float> lf(m, n, h, w, c);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0, 1);
  for (Eigen::Index i = 0; i < lf.data().size(); ++i) lf.data()[i] = u(rng);
  return lf;
}

}  // namespace

TEST_SUITE("io") {
  TEST_CASE("png round trips at both bit depths") {
    TempDir tmp("png");
    const Image<float> img = oracle::to_image<float>(oracle::texture(7, 9, 1));
    write_png(tmp.path / "a16.png", {img}, 16);
    write_png(tmp.path / "a8.png", {img}, 8);
    const PngImage p16 = read_png(tmp.path / "a16.png"), p8 = read_png(tmp.path / "a8.png");
    CHECK(p16.bit_depth == 16);
    CHECK(p8.bit_depth == 8);
    REQUIRE(p16.planes.size() == 1);
    CHECK((p16.planes[0] - img).abs().maxCoeff() <= 0.5f / 65535 + 1e-7f);
    CHECK((p8.planes[0] - img).abs().maxCoeff() <= 0.5f / 255 + 1e-7f);

    const Image<float> g = Image<float>::Constant(3, 4, 0.25f), b = Image<float>::Constant(3, 4, 1.5f);
    write_png(tmp.path / "rgb.png", {img.block(0, 0, 3, 4), g, b}, 8);
    const PngImage rgb = read_png(tmp.path / "rgb.png");
    REQUIRE(rgb.planes.size() == 3);
    CHECK((rgb.planes[2] == 1.0f).all());
    CHECK_THROWS_AS(write_png(tmp.path / "two.png", {g, g}), DataError);

    std::ofstream(tmp.path / "junk.png") << "not a png";
    CHECK_THROWS_AS(read_png(tmp.path / "junk.png"), DataError);
    CHECK_THROWS_AS(read_png(tmp.path / "missing.png"), DataError);
  }

  TEST_CASE("regular light field directories") {
    TempDir tmp("regular");
    const LightField<float> lf = random_lf(2, 3, 5, 6, 1, 2);
    write_lightfield(tmp.path / "lf", lf);
    CHECK(fs::exists(tmp.path / "lf" / "meta.json"));
    CHECK(fs::exists(tmp.path / "lf" / view_filename({1, 2})));
    CHECK(view_filename({1, 2}) == "view_01_02.png");
    const LightField<float> back = read_regular_lightfield(tmp.path / "lf");
    CHECK(back.angular_rows() == 2);
    CHECK(back.angular_cols() == 3);
    CHECK((back.data() - lf.data()).abs().maxCoeff() <= 0.5f / 65535 + 1e-7f);

    // Rewriting replaces the directory as a whole.
    write_lightfield(tmp.path / "lf", random_lf(1, 1, 5, 6, 1, 3));
    CHECK(!fs::exists(tmp.path / "lf" / view_filename({1, 2})));

    const LightField<float> rgb = random_lf(2, 2, 4, 4, 3, 4);
    write_lightfield(tmp.path / "rgb", rgb, 8);
    CHECK(read_regular_lightfield(tmp.path / "rgb").channels() == 3);
  }

  TEST_CASE("broken metadata is a data error") {
    TempDir tmp("meta");
    write_lightfield(tmp.path / "lf", random_lf(2, 2, 4, 4, 1, 5));
    std::ofstream(tmp.path / "lf" / "meta.json") << R"({"M": 2, "N": 2, "H": 5, "W": 4})";
    CHECK_THROWS_AS(read_lightfield(tmp.path / "lf"), DataError);
    std::ofstream(tmp.path / "lf" / "meta.json") << "{";
    CHECK_THROWS_AS(read_lightfield(tmp.path / "lf"), DataError);
    fs::remove(tmp.path / "lf" / "meta.json");
    CHECK_THROWS_AS(read_lightfield(tmp.path / "lf"), DataError);
  }

  TEST_CASE("irregular light fields keep their positions") {
    TempDir tmp("irregular");
    IrregularLightField<float> lf({{0, 0}, {2, 1}, {4, 4}}, 4, 5);
    for (int i = 0; i < 3; ++i) lf.view(i).setConstant(0.2f * (i + 1));
    write_lightfield(tmp.path / "irr", lf);
    const AnyLightField any = read_lightfield(tmp.path / "irr");
    REQUIRE(std::holds_alternative<IrregularLightField<float>>(any));
    const auto& back = std::get<IrregularLightField<float>>(any);
    CHECK(back.positions() == lf.positions());
    CHECK(back.view(1)(2, 3) == doctest::Approx(0.4f).epsilon(1e-4));
  }

  TEST_CASE("disparity files round trip exactly") {
    TempDir tmp("disp");
    DisparityMap<float> map{Image<float>(3, 4), {1, 2}};
    for (int i = 0; i < 12; ++i) map.values.data()[i] = -1.5f + 0.37f * i;
    write_disparity(tmp.path / disparity_filename({1, 2}), map);
    CHECK(disparity_filename({1, 2}) == "disp_01_02.lfd");
    const auto back = read_disparity(tmp.path / "disp_01_02.lfd", {1, 2});
    CHECK((back.values == map.values).all());
    CHECK(back.position == AngularPosition{1, 2});

    std::ofstream(tmp.path / "bad.lfd", std::ios::binary) << "LFD1";
    CHECK_THROWS_AS(read_disparity(tmp.path / "bad.lfd"), DataError);
    map.values(0, 0) = std::numeric_limits<float>::infinity();
    CHECK_THROWS_AS(write_disparity(tmp.path / "inf.lfd", map), DataError);
  }

  TEST_CASE("atomic writes leave no temporary files") {
    TempDir tmp("atomic");
    write_file_atomic(tmp.path / "f.txt", "one");
    write_file_atomic(tmp.path / "f.txt", "two");
    std::ifstream in(tmp.path / "f.txt");
    std::string text;
    in >> text;
    CHECK(text == "two");
    CHECK(std::distance(fs::directory_iterator(tmp.path), fs::directory_iterator{}) == 1);
  }

  TEST_CASE("metric json") {
    CHECK(psnr_json(std::numeric_limits<double>::infinity()) == "inf");
    CHECK(psnr_json(31.5) == 31.5);
    LightField<float> a = random_lf(2, 2, 12, 12, 1, 6);
    const nlohmann::json j = to_json(evaluate(a, a));
    CHECK(j["mean_psnr"] == "inf");
    CHECK(j["mean_ssim"].get<double>() == doctest::Approx(1.0));
    CHECK(j["psnr_grid"].size() == 2);
  }
}
