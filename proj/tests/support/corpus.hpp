// Procedurally generated piecewise-smooth grayscale images standing in for a
// natural-image corpus in tests and the acceptance suite.
#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "blindpaint/rng.hpp"
#include "blindpaint/tensor.hpp"

namespace blindpaint::testing {

// Low-frequency sinusoid mixture plus a linear ramp plus a few soft-edged
// rectangles; normalized to [0, 1].
inline Tensor make_procedural_image(Rng& rng, std::int64_t h, std::int64_t w) {
  std::vector<double> field(static_cast<std::size_t>(h * w), 0.0);

  const int waves = 5;
  for (int k = 0; k < waves; ++k) {
    const double fx = rng.uniform(0.5, 4.0) / static_cast<double>(w);
    const double fy = rng.uniform(0.5, 4.0) / static_cast<double>(h);
    const double phase = rng.uniform(0.0, 6.2831853);
    const double amp = rng.uniform(0.3, 1.0);
    for (std::int64_t i = 0; i < h; ++i) {
      for (std::int64_t j = 0; j < w; ++j) {
        field[i * w + j] += amp * std::sin(6.2831853 * (fx * j + fy * i) + phase);
      }
    }
  }

  const double gx = rng.uniform(-1.0, 1.0) / static_cast<double>(w);
  const double gy = rng.uniform(-1.0, 1.0) / static_cast<double>(h);
  for (std::int64_t i = 0; i < h; ++i) {
    for (std::int64_t j = 0; j < w; ++j) field[i * w + j] += gx * j + gy * i;
  }

  const int shapes = static_cast<int>(rng.uniform_int(2, 5));
  for (int s = 0; s < shapes; ++s) {
    const std::int64_t sh = rng.uniform_int(h / 8, h / 2);
    const std::int64_t sw = rng.uniform_int(w / 8, w / 2);
    const std::int64_t r0 = rng.uniform_int(0, h - sh);
    const std::int64_t c0 = rng.uniform_int(0, w - sw);
    const double level = rng.uniform(-1.0, 1.0);
    const double soft = rng.uniform(1.0, 6.0);
    for (std::int64_t i = r0; i < r0 + sh; ++i) {
      for (std::int64_t j = c0; j < c0 + sw; ++j) {
        const double di = std::min<double>(i - r0, r0 + sh - 1 - i);
        const double dj = std::min<double>(j - c0, c0 + sw - 1 - j);
        const double t = std::min(1.0, std::min(di, dj) / soft);
        field[i * w + j] += level * t;
      }
    }
  }

  double lo = field[0], hi = field[0];
  for (double v : field) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  const double span = hi > lo ? hi - lo : 1.0;

  Tensor img(1, 1, h, w);
  for (std::int64_t i = 0; i < h * w; ++i) {
    img[i] = static_cast<float>((field[static_cast<std::size_t>(i)] - lo) / span);
  }
  return img;
}

inline std::vector<Tensor> make_corpus(std::uint64_t seed, int count, std::int64_t h,
                                       std::int64_t w) {
  std::vector<Tensor> out;
  out.reserve(static_cast<std::size_t>(count));
  Rng rng(seed);
  for (int i = 0; i < count; ++i) {
    Rng r = rng.split(static_cast<std::uint64_t>(i));
    out.push_back(make_procedural_image(r, h, w));
  }
  return out;
}

}  // namespace blindpaint::testing
