#include "doctest.h"

#include "lfsr/imaging.hpp"
#include "support/oracles.hpp"

using namespace lfsr;

TEST_SUITE("imaging") {
  TEST_CASE("bt601 luma") {
    CHECK(rgb_to_y(1, 1, 1) == doctest::Approx(235.0 / 255.0).epsilon(1e-12));
    CHECK(rgb_to_y(0, 0, 0) == doctest::Approx(16.0 / 255.0).epsilon(1e-12));
    for (double g : {0.1, 0.5, 0.8}) CHECK(rgb_to_y(g, g, g) == doctest::Approx((219 * g + 16) / 255.0).epsilon(1e-12));
  }

  TEST_CASE("ycbcr round trip") {
    LightField<double> rgb(1, 2, 3, 3, 3);
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0, 1);
    for (Eigen::Index i = 0; i < rgb.data().size(); ++i) rgb.data()[i] = u(rng);
    auto back = ycbcr_to_rgb(rgb_to_ycbcr(rgb));
    CHECK((back.data() - rgb.data()).abs().maxCoeff() < 1e-12);
    CHECK(luma(rgb)(0, 1, 2, 2) == doctest::Approx(rgb_to_ycbcr(rgb)(0, 1, 2, 2, 0)).epsilon(1e-12));
  }

  TEST_CASE("cubic kernel partition of unity") {
    for (double phase = 0.0; phase < 1.0; phase += 0.0625) {
      double total = 0.0;
      for (int j = -2; j <= 2; ++j) total += cubic_kernel(phase - j);
      CHECK(std::abs(total - 1.0) < 1e-6);
    }
    for (int scale : {2, 3, 4}) {
      const ResampleTaps taps = resample_taps(8 * scale, 8, 1.0 / scale, true);
      for (int i = 0; i < 8; ++i) CHECK(std::abs(taps.raw_sums[static_cast<std::size_t>(i)] - 1.0) < 1e-6);
    }
  }

  TEST_CASE("bicubic matches the separable reference") {
    const Eigen::MatrixXd img = oracle::texture(12, 16, 2, 0.8);
    for (int s : {2, 3, 4}) {
      const auto up = bicubic_upscale(oracle::to_image<double>(img), s);
      CHECK((oracle::to_matrix(up) - oracle::bicubic(img, s)).cwiseAbs().maxCoeff() < 1e-12);
    }
    const Eigen::MatrixXd big = oracle::texture(24, 32, 3, 0.8);
    for (int s : {2, 4}) {
      const auto down = bicubic_downscale(oracle::to_image<double>(big), s);
      CHECK((oracle::to_matrix(down) - oracle::bicubic(big, 1.0 / s)).cwiseAbs().maxCoeff() < 1e-12);
    }
  }

  TEST_CASE("bicubic preserves constants and reproduces linear ramps") {
    const Image<double> c = Image<double>::Constant(8, 10, 0.42);
    CHECK((bicubic_upscale(c, 3) - 0.42).abs().maxCoeff() < 1e-12);
    CHECK((bicubic_downscale(c, 2) - 0.42).abs().maxCoeff() < 1e-12);

    // Interior samples of an upscaled ramp lie exactly on the ramp.
    Image<double> ramp(10, 10);
    for (int y = 0; y < 10; ++y)
      for (int x = 0; x < 10; ++x) ramp(y, x) = 0.03 * x + 0.02 * y;
    const auto up = bicubic_upscale(ramp, 2);
    for (int y = 4; y < 16; ++y)
      for (int x = 4; x < 16; ++x) {
        const double sx = (x + 0.5) / 2 - 0.5, sy = (y + 0.5) / 2 - 0.5;
        CHECK(std::abs(up(y, x) - (0.03 * sx + 0.02 * sy)) < 1e-12);
      }
    CHECK_THROWS_AS(bicubic_downscale(Image<double>(9, 8), 2), DataError);
  }

  TEST_CASE("up then down on a smooth blob stays above 40 dB") {
    Eigen::MatrixXd blob(64, 64);
    for (int y = 0; y < 64; ++y)
      for (int x = 0; x < 64; ++x) blob(y, x) = 0.1 + 0.8 * std::exp(-((x - 31.5) * (x - 31.5) + (y - 31.5) * (y - 31.5)) / 200.0);
    const auto round = bicubic_downscale(bicubic_upscale(oracle::to_image<double>(blob), 2), 2);
    CHECK(oracle::psnr(oracle::to_matrix(round), blob) > 40.0);
    CHECK(oracle::psnr(oracle::bicubic(oracle::bicubic(blob, 2), 0.5), blob) > 40.0);
  }

  TEST_CASE("degradation is deterministic") {
    LightField<float> lf(2, 2, 8, 8, 1);
    for (Eigen::Index i = 0; i < lf.data().size(); ++i) lf.data()[i] = std::fmod(0.137f * i, 1.0f);
    CHECK((degrade(lf, 2).data() == degrade(lf, 2).data()).all());
    CHECK(degrade(lf, 2).height() == 4);
  }

  TEST_CASE("psnr closed forms") {
    const Eigen::ArrayXXd a = Eigen::ArrayXXd::Zero(10, 10);
    CHECK(std::isinf(psnr(a, a)));
    CHECK(std::abs(psnr(a, a + 0.1) - 20.0) < 1e-9);
    CHECK(std::abs(psnr(a, a + 0.01) - 40.0) < 1e-9);
    const Eigen::ArrayXXd r = Eigen::ArrayXXd::Random(6, 6);
    const Eigen::ArrayXXd s = Eigen::ArrayXXd::Random(6, 6);
    CHECK(psnr(r, s) == doctest::Approx(psnr(s, r)));
    CHECK_THROWS(psnr(Eigen::ArrayXXd::Zero(2, 2), Eigen::ArrayXXd::Zero(2, 3)));
  }

  TEST_CASE("psnr is invariant under a shared pixel permutation") {
    std::mt19937_64 rng(4);
    Eigen::ArrayXXd a = Eigen::ArrayXXd::Random(5, 5), b = Eigen::ArrayXXd::Random(5, 5);
    std::vector<int> perm(25);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Eigen::ArrayXXd pa(5, 5), pb(5, 5);
    for (int i = 0; i < 25; ++i) {
      pa(i % 5, i / 5) = a(perm[i] % 5, perm[i] / 5);
      pb(i % 5, i / 5) = b(perm[i] % 5, perm[i] / 5);
    }
    CHECK(psnr(pa, pb) == doctest::Approx(psnr(a, b)).epsilon(1e-12));
  }

  TEST_CASE("ssim") {
    const Eigen::MatrixXd a = oracle::texture(24, 20, 5, 0.6);
    CHECK(ssim(a.array(), a.array()) == doctest::Approx(1.0).epsilon(1e-12));

    Eigen::ArrayXXd board(16, 16);
    for (int y = 0; y < 16; ++y)
      for (int x = 0; x < 16; ++x) board(y, x) = (x + y) % 2;
    CHECK(ssim(board, 1.0 - board) < 0.0);

    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> u(0, 1);
    Eigen::MatrixXd p(19, 23), q(19, 23);
    for (int i = 0; i < p.size(); ++i) {
      p.data()[i] = u(rng);
      q.data()[i] = 0.7 * p.data()[i] + 0.3 * u(rng);
    }
    CHECK(std::abs(ssim(p.array(), q.array()) - oracle::ssim(p, q)) < 1e-6);
    CHECK(ssim(p.array(), q.array()) == doctest::Approx(ssim(q.array(), p.array())).epsilon(1e-12));
    CHECK_THROWS(ssim(Eigen::ArrayXXd::Zero(10, 20), Eigen::ArrayXXd::Zero(10, 20)));
  }

  TEST_CASE("fitted ssim window on thin epis") {
    const SsimOptions o = fitted_ssim_options(3, 40);
    CHECK(o.window_rows == 3);
    CHECK(o.window_cols == 11);
    const SsimOptions even = fitted_ssim_options(4, 8);
    CHECK(even.window_rows == 3);
    CHECK(even.window_cols == 7);
  }

  TEST_CASE("per-sai psnr grid and report") {
    LightField<float> a(2, 3, 12, 12, 1);
    a.data().setConstant(0.5f);
    auto grid = per_sai_psnr(a, a);
    CHECK(grid.rows() == 2);
    CHECK(grid.cols() == 3);
    CHECK(grid.isInf().all());

    LightField<float> b = a;
    Image<float> worse = Image<float>::Constant(12, 12, 0.6f);
    b.set_sai({1, 2}, worse);
    auto g2 = per_sai_psnr(a, b);
    int finite = 0;
    for (int i = 0; i < g2.size(); ++i) finite += std::isfinite(g2.data()[i]);
    CHECK(finite == 1);
    CHECK(g2(1, 2) == doctest::Approx(20.0).epsilon(1e-5));

    auto self = evaluate(a, a);
    CHECK(std::isinf(self.mean_psnr));
    CHECK(self.mean_ssim == doctest::Approx(1.0));
    CHECK(std::isinf(self.epi_psnr));
    CHECK(self.epi_ssim == doctest::Approx(1.0));

    CHECK_THROWS(evaluate(a, LightField<float>(2, 2, 12, 12, 1)));
  }

  TEST_CASE("report means equal an independent recomputation") {
    LightField<double> a(3, 3, 14, 16, 1), b(3, 3, 14, 16, 1);
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(0, 1);
    for (Eigen::Index i = 0; i < a.data().size(); ++i) {
      a.data()[i] = u(rng);
      b.data()[i] = std::clamp(a.data()[i] + 0.05 * (u(rng) - 0.5), 0.0, 1.0);
    }
    const MetricReport r = evaluate(a, b);
    double psnr_sum = 0, ssim_sum = 0;
    for (const auto& p : a.positions()) {
      psnr_sum += oracle::psnr(oracle::to_matrix(a.sai(p)), oracle::to_matrix(b.sai(p)));
      ssim_sum += oracle::ssim(oracle::to_matrix(a.sai(p)), oracle::to_matrix(b.sai(p)));
    }
    CHECK(r.mean_psnr == doctest::Approx(psnr_sum / 9).epsilon(1e-10));
    CHECK(r.mean_ssim == doctest::Approx(ssim_sum / 9).epsilon(1e-10));
    CHECK(r.psnr_grid.mean() == doctest::Approx(r.mean_psnr).epsilon(1e-12));

    // EPI metrics: mean over every horizontal and vertical EPI, each scored on its own.
    double epi_psnr = 0, epi_ssim = 0;
    int count = 0;
    for (int y = 0; y < 14; ++y)
      for (int v = 0; v < 3; ++v) {
        Eigen::MatrixXd ea(3, 16), eb(3, 16);
        for (int uu = 0; uu < 3; ++uu)
          for (int x = 0; x < 16; ++x) {
            ea(uu, x) = a(uu, v, y, x);
            eb(uu, x) = b(uu, v, y, x);
          }
        epi_psnr += oracle::psnr(ea, eb);
        epi_ssim += oracle::ssim(ea, eb, 3, 11);
        ++count;
      }
    for (int x = 0; x < 16; ++x)
      for (int uu = 0; uu < 3; ++uu) {
        Eigen::MatrixXd ea(3, 14), eb(3, 14);
        for (int v = 0; v < 3; ++v)
          for (int y = 0; y < 14; ++y) {
            ea(v, y) = a(uu, v, y, x);
            eb(v, y) = b(uu, v, y, x);
          }
        epi_psnr += oracle::psnr(ea, eb);
        epi_ssim += oracle::ssim(ea, eb, 3, 11);
        ++count;
      }
    CHECK(r.epi_psnr == doctest::Approx(epi_psnr / count).epsilon(1e-10));
    CHECK(std::abs(r.epi_ssim - epi_ssim / count) < 1e-9);
  }

  TEST_CASE("constant light fields 0.1 apart score 20 dB on epis") {
    LightField<float> a(3, 3, 12, 12, 1), b(3, 3, 12, 12, 1);
    a.data().setConstant(0.3f);
    b.data().setConstant(0.4f);
    CHECK(epi_metrics(a, b).psnr == doctest::Approx(20.0).epsilon(1e-5));
  }
}
