#include "doctest.h"

#include <cmath>
#include <filesystem>

#include "blindpaint/metrics.hpp"
#include "blindpaint/rng.hpp"

using namespace blindpaint;
namespace bm = blindpaint::metrics;

TEST_CASE("psnr: identical, +0.1 closed form, two-pass oracle, symmetry") {
  Rng rng(1);
  DTensor a = rng_fill<double>(rng, UniformDist{0.0, 0.9}, {1, 1, 16, 16});
  CHECK(std::isinf(bm::psnr(a, a)));

  DTensor b(a.shape());
  for (std::int64_t i = 0; i < a.numel(); ++i) b[i] = a[i] + 0.1;
  CHECK(bm::psnr(a, b) == doctest::Approx(20.0).epsilon(1e-9));
  CHECK(bm::psnr(a, b) == bm::psnr(b, a));

  // independent two-pass MSE computation
  DTensor c = rng_fill<double>(rng, UniformDist{0.0, 1.0}, a.shape());
  double mse = 0.0;
  for (std::int64_t i = 0; i < a.numel(); ++i) mse += (a[i] - c[i]) * (a[i] - c[i]);
  mse /= static_cast<double>(a.numel());
  CHECK(bm::psnr(a, c) == doctest::Approx(10.0 * std::log10(1.0 / mse)).epsilon(1e-12));

  DTensor wrong(1, 1, 8, 8);
  CHECK_THROWS_AS(bm::psnr(a, wrong), Error);
}

TEST_CASE("psnr strictly decreases with perturbation magnitude") {
  Rng rng(2);
  DTensor a = rng_fill<double>(rng, UniformDist{0.2, 0.8}, {1, 1, 32, 32});
  double prev = std::numeric_limits<double>::infinity();
  for (double eps : {0.01, 0.02, 0.05, 0.1, 0.15}) {
    DTensor b(a.shape());
    for (std::int64_t i = 0; i < a.numel(); ++i) b[i] = a[i] + eps;
    const double p = bm::psnr(a, b);
    CHECK(p < prev);
    prev = p;
  }
}

TEST_CASE("ssim: identity, constant-image closed form, negative case") {
  Rng rng(3);
  DTensor a = rng_fill<double>(rng, UniformDist{0.0, 1.0}, {1, 1, 24, 24});
  CHECK(bm::ssim(a, a) == doctest::Approx(1.0).epsilon(1e-12));

  // constant a = 0.2 vs constant b = 0.8: structure/contrast terms are C2/C2
  DTensor ca(1, 1, 16, 16, 0.2);
  DTensor cb(1, 1, 16, 16, 0.8);
  const double c1 = 0.01 * 0.01;
  const double expected = (2.0 * 0.2 * 0.8 + c1) / (0.2 * 0.2 + 0.8 * 0.8 + c1);
  CHECK(bm::ssim(ca, cb) == doctest::Approx(expected).epsilon(1e-9));

  // inverted zero-mean-contrast pattern drives SSIM below 0
  DTensor pat(1, 1, 16, 16);
  for (std::int64_t i = 0; i < 16; ++i) {
    for (std::int64_t j = 0; j < 16; ++j) {
      pat.at(0, 0, i, j) = 0.5 + ((i + j) % 2 == 0 ? 0.3 : -0.3);
    }
  }
  DTensor inv(1, 1, 16, 16);
  for (std::int64_t i = 0; i < inv.numel(); ++i) inv[i] = 1.0 - pat[i];
  CHECK(bm::ssim(pat, inv) < 0.0);

  // symmetry
  DTensor b = rng_fill<double>(rng, UniformDist{0.0, 1.0}, a.shape());
  CHECK(bm::ssim(a, b) == doctest::Approx(bm::ssim(b, a)).epsilon(1e-12));

  DTensor small(1, 1, 8, 8, 0.5);
  CHECK_THROWS_AS(bm::ssim(small, small), Error);
}

TEST_CASE("residual_image: mid-gray zero, endpoints, round trip") {
  Tensor x(1, 1, 8, 8, 0.5f);
  auto flat = bm::residual_image(x, x);
  for (std::int64_t i = 0; i < flat.image.numel(); ++i) CHECK(flat.image[i] == 0.5f);

  Tensor y_hat = x;
  y_hat.at(0, 0, 3, 3) = 0.9f;  // +0.4 peak at one pixel
  auto vis = bm::residual_image(y_hat, x);
  CHECK(vis.image.at(0, 0, 3, 3) == doctest::Approx(1.0f));
  CHECK(vis.scale == doctest::Approx(0.4).epsilon(1e-6));

  // invertible up to the recorded scale
  Rng rng(5);
  Tensor a = rng_fill<float>(rng, UniformDist{0.0, 1.0}, {1, 1, 12, 12});
  Tensor b = rng_fill<float>(rng, UniformDist{0.0, 1.0}, {1, 1, 12, 12});
  auto vis2 = bm::residual_image(a, b);
  for (std::int64_t i = 0; i < a.numel(); ++i) {
    const double rec = (vis2.image[i] - 0.5) * 2.0 * vis2.scale;
    CHECK(rec == doctest::Approx(a[i] - b[i]).epsilon(1e-5));
  }
}

TEST_CASE("eval record aggregates exclude inf with count") {
  std::vector<bm::ImageScore> scores = {
      {"a", 30.0, 0.9},
      {"b", std::numeric_limits<double>::infinity(), 1.0},
      {"c", 40.0, 0.8},
  };
  auto rec = bm::EvalRecord::from_scores(scores);
  CHECK(rec.mean_psnr == doctest::Approx(35.0));
  CHECK(rec.mean_ssim == doctest::Approx(0.9));
  CHECK(rec.psnr_inf_count == 1);
}

TEST_CASE("curve log: header, rows, round trip, monotone step") {
  namespace fs = std::filesystem;
  const auto path = (fs::temp_directory_path() / "bp_curve.csv").string();
  fs::remove(path);
  {
    bm::CurveLog log(path);
    log.log(10, 1, "train", 0.5);
    log.log(10, 1, "test", 0.45, 22.5);
    log.log(20, 2, "train", 0.4);
    CHECK_THROWS_AS(log.log(5, 1, "train", 0.1), Error);
  }
  auto pts = bm::read_curve_log(path);
  REQUIRE(pts.size() == 3);
  CHECK(pts[0].step == 10);
  CHECK(pts[0].split == "train");
  CHECK(pts[0].loss == doctest::Approx(0.5));
  CHECK(!pts[0].psnr.has_value());
  CHECK(pts[1].psnr.has_value());
  CHECK(*pts[1].psnr == doctest::Approx(22.5));
  CHECK(pts[2].epoch == 2);

  // append mode continues monotone checking
  {
    bm::CurveLog log(path, /*append=*/true);
    CHECK_THROWS_AS(log.log(15, 2, "train", 0.3), Error);
    log.log(30, 3, "train", 0.35);
  }
  CHECK(bm::read_curve_log(path).size() == 4);

  // empty log is header-only
  const auto path2 = (fs::temp_directory_path() / "bp_curve2.csv").string();
  fs::remove(path2);
  { bm::CurveLog log(path2); }
  CHECK(bm::read_curve_log(path2).empty());
  fs::remove(path);
  fs::remove(path2);
}
