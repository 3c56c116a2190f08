#include "blindpaint/synth.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "json.hpp"

#include "blindpaint/parallel.hpp"

static_assert(std::endian::native == std::endian::little,
              "dataset blobs are little-endian; big-endian hosts are unsupported");

namespace blindpaint::synth {

using nlohmann::json;
namespace fs = std::filesystem;

// ---- Built-in 5x7 glyph set ---------------------------------------------------

namespace {

struct GlyphRows {
  char ch;
  const char* rows[7];
};

// clang-format off
const GlyphRows kGlyphs[] = {
  {'A', {".XXX.", "X...X", "X...X", "XXXXX", "X...X", "X...X", "X...X"}},
  {'B', {"XXXX.", "X...X", "X...X", "XXXX.", "X...X", "X...X", "XXXX."}},
  {'C', {".XXXX", "X....", "X....", "X....", "X....", "X....", ".XXXX"}},
  {'D', {"XXXX.", "X...X", "X...X", "X...X", "X...X", "X...X", "XXXX."}},
  {'E', {"XXXXX", "X....", "X....", "XXXX.", "X....", "X....", "XXXXX"}},
  {'F', {"XXXXX", "X....", "X....", "XXXX.", "X....", "X....", "X...."}},
  {'G', {".XXXX", "X....", "X....", "X..XX", "X...X", "X...X", ".XXXX"}},
  {'H', {"X...X", "X...X", "X...X", "XXXXX", "X...X", "X...X", "X...X"}},
  {'I', {"XXXXX", "..X..", "..X..", "..X..", "..X..", "..X..", "XXXXX"}},
  {'J', {"..XXX", "...X.", "...X.", "...X.", "...X.", "X..X.", ".XX.."}},
  {'K', {"X...X", "X..X.", "X.X..", "XX...", "X.X..", "X..X.", "X...X"}},
  {'L', {"X....", "X....", "X....", "X....", "X....", "X....", "XXXXX"}},
  {'M', {"X...X", "XX.XX", "X.X.X", "X.X.X", "X...X", "X...X", "X...X"}},
  {'N', {"X...X", "XX..X", "X.X.X", "X..XX", "X...X", "X...X", "X...X"}},
  {'O', {".XXX.", "X...X", "X...X", "X...X", "X...X", "X...X", ".XXX."}},
  {'P', {"XXXX.", "X...X", "X...X", "XXXX.", "X....", "X....", "X...."}},
  {'Q', {".XXX.", "X...X", "X...X", "X...X", "X.X.X", "X..X.", ".XX.X"}},
  {'R', {"XXXX.", "X...X", "X...X", "XXXX.", "X.X..", "X..X.", "X...X"}},
  {'S', {".XXXX", "X....", "X....", ".XXX.", "....X", "....X", "XXXX."}},
  {'T', {"XXXXX", "..X..", "..X..", "..X..", "..X..", "..X..", "..X.."}},
  {'U', {"X...X", "X...X", "X...X", "X...X", "X...X", "X...X", ".XXX."}},
  {'V', {"X...X", "X...X", "X...X", "X...X", "X...X", ".X.X.", "..X.."}},
  {'W', {"X...X", "X...X", "X...X", "X.X.X", "X.X.X", "XX.XX", "X...X"}},
  {'X', {"X...X", "X...X", ".X.X.", "..X..", ".X.X.", "X...X", "X...X"}},
  {'Y', {"X...X", "X...X", ".X.X.", "..X..", "..X..", "..X..", "..X.."}},
  {'Z', {"XXXXX", "....X", "...X.", "..X..", ".X...", "X....", "XXXXX"}},
  {'0', {".XXX.", "X...X", "X..XX", "X.X.X", "XX..X", "X...X", ".XXX."}},
  {'1', {"..X..", ".XX..", "..X..", "..X..", "..X..", "..X..", "XXXXX"}},
  {'2', {".XXX.", "X...X", "....X", "..XX.", ".X...", "X....", "XXXXX"}},
  {'3', {"XXXXX", "...X.", "..X..", "...X.", "....X", "X...X", ".XXX."}},
  {'4', {"...X.", "..XX.", ".X.X.", "X..X.", "XXXXX", "...X.", "...X."}},
  {'5', {"XXXXX", "X....", "XXXX.", "....X", "....X", "X...X", ".XXX."}},
  {'6', {"..XX.", ".X...", "X....", "XXXX.", "X...X", "X...X", ".XXX."}},
  {'7', {"XXXXX", "....X", "...X.", "..X..", ".X...", ".X...", ".X..."}},
  {'8', {".XXX.", "X...X", "X...X", ".XXX.", "X...X", "X...X", ".XXX."}},
  {'9', {".XXX.", "X...X", "X...X", ".XXXX", "....X", "...X.", ".XX.."}},
  {'+', {".....", "..X..", "..X..", "XXXXX", "..X..", "..X..", "....."}},
  {'=', {".....", ".....", "XXXXX", ".....", "XXXXX", ".....", "....."}},
  {'#', {".X.X.", ".X.X.", "XXXXX", ".X.X.", "XXXXX", ".X.X.", ".X.X."}},
  {'?', {".XXX.", "X...X", "....X", "..XX.", "..X..", ".....", "..X.."}},
};
// clang-format on

constexpr int kGlyphCount = static_cast<int>(sizeof(kGlyphs) / sizeof(kGlyphs[0]));

struct Bitmap {
  std::int64_t w = 0, h = 0;
  std::vector<std::uint8_t> px;  // row-major, 1 = stroke

  std::uint8_t at(std::int64_t y, std::int64_t x) const { return px[y * w + x]; }
  void set(std::int64_t y, std::int64_t x) { px[y * w + x] = 1; }
};

Bitmap base_glyph(int id) {
  Bitmap b;
  b.w = 5;
  b.h = 7;
  b.px.assign(35, 0);
  for (std::int64_t y = 0; y < 7; ++y) {
    for (std::int64_t x = 0; x < 5; ++x) {
      if (kGlyphs[id].rows[y][x] == 'X') b.set(y, x);
    }
  }
  return b;
}

// Style transforms on the base grid (italic shears later, at stamp scale).
Bitmap styled_glyph(int id, GlyphStyle style) {
  Bitmap b = base_glyph(id);
  switch (style) {
    case GlyphStyle::Regular:
    case GlyphStyle::Italic:
      return b;
    case GlyphStyle::Condensed: {
      Bitmap out;
      out.w = 3;
      out.h = 7;
      out.px.assign(21, 0);
      for (std::int64_t y = 0; y < 7; ++y) {
        for (std::int64_t x = 0; x < 3; ++x) {
          if (b.at(y, 2 * x)) out.set(y, x);
        }
      }
      return out;
    }
    case GlyphStyle::Bold: {
      // 1-px 4-neighbourhood dilation on a padded canvas.
      Bitmap out;
      out.w = b.w + 2;
      out.h = b.h + 2;
      out.px.assign(static_cast<std::size_t>(out.w * out.h), 0);
      for (std::int64_t y = 0; y < b.h; ++y) {
        for (std::int64_t x = 0; x < b.w; ++x) {
          if (!b.at(y, x)) continue;
          out.set(y + 1, x + 1);
          out.set(y, x + 1);
          out.set(y + 2, x + 1);
          out.set(y + 1, x);
          out.set(y + 1, x + 2);
        }
      }
      return out;
    }
    case GlyphStyle::Underline: {
      Bitmap out;
      out.w = b.w;
      out.h = b.h + 2;  // one blank row, then a 1-row bar
      out.px.assign(static_cast<std::size_t>(out.w * out.h), 0);
      std::copy(b.px.begin(), b.px.end(), out.px.begin());
      for (std::int64_t x = 0; x < out.w; ++x) out.set(out.h - 1, x);
      return out;
    }
  }
  return b;
}

// Scaled (and for italic, sheared right-leaning by 0.2) stamp bitmap.
Bitmap make_stamp(int id, GlyphStyle style, std::int64_t scale) {
  const Bitmap base = styled_glyph(id, style);
  const std::int64_t sh = base.h * scale;
  const std::int64_t sw = base.w * scale;
  const bool italic = style == GlyphStyle::Italic;
  const std::int64_t shear_extra =
      italic ? static_cast<std::int64_t>(std::lround(0.2 * static_cast<double>(sh - 1))) : 0;

  Bitmap out;
  out.w = sw + shear_extra;
  out.h = sh;
  out.px.assign(static_cast<std::size_t>(out.w * out.h), 0);
  for (std::int64_t y = 0; y < sh; ++y) {
    const std::int64_t shift =
        italic ? static_cast<std::int64_t>(std::lround(0.2 * static_cast<double>(sh - 1 - y)))
               : 0;
    for (std::int64_t x = 0; x < sw; ++x) {
      if (base.at(y / scale, x / scale)) out.set(y, x + shift);
    }
  }
  return out;
}

void blit_zeros(Tensor& mask, const Bitmap& bm, std::int64_t row, std::int64_t col) {
  for (std::int64_t y = 0; y < bm.h; ++y) {
    float* dst = mask.data() + (row + y) * mask.w() + col;
    const std::uint8_t* src = bm.px.data() + y * bm.w;
    for (std::int64_t x = 0; x < bm.w; ++x) {
      if (src[x]) dst[x] = 0.0f;
    }
  }
}

std::vector<int> default_pool() {
  std::vector<int> all(kGlyphCount);
  for (int i = 0; i < kGlyphCount; ++i) all[i] = i;
  return all;
}

}  // namespace

int glyph_set_size() { return kGlyphCount; }

// ---- CorruptionSpec -----------------------------------------------------------

void CorruptionSpec::validate() const {
  auto check_range = [](const IntRange& r, const char* name, std::int64_t min_lo) {
    if (r.lo < min_lo || r.hi < r.lo) {
      throw Error(ErrorKind::InvalidConfig, std::string(name) + " range is invalid");
    }
  };
  check_range(square_count, "square_count", 0);
  check_range(square_size, "square_size", 1);
  check_range(glyph_count, "glyph_count", 0);
  check_range(glyph_scale, "glyph_scale", 1);
  if (fill_value < 0.0 || fill_value > 1.0) {
    throw Error(ErrorKind::InvalidConfig, "fill_value must be in [0,1]");
  }
  if (noise_sigma < 0.0) throw Error(ErrorKind::InvalidConfig, "noise_sigma must be >= 0");
  if (min_corrupt_fraction < 0.0 || max_corrupt_fraction > 1.0 ||
      min_corrupt_fraction >= max_corrupt_fraction) {
    throw Error(ErrorKind::InvalidConfig, "corrupt fraction band is invalid");
  }
  if (glyph_count.hi > 0 && glyph_styles.empty()) {
    throw Error(ErrorKind::InvalidConfig, "glyph_styles must not be empty when glyphs are used");
  }
}

std::string to_string(GlyphStyle s) {
  switch (s) {
    case GlyphStyle::Regular: return "regular";
    case GlyphStyle::Bold: return "bold";
    case GlyphStyle::Italic: return "italic";
    case GlyphStyle::Underline: return "underline";
    case GlyphStyle::Condensed: return "condensed";
  }
  return "regular";
}

GlyphStyle glyph_style_from_string(const std::string& s) {
  if (s == "regular") return GlyphStyle::Regular;
  if (s == "bold") return GlyphStyle::Bold;
  if (s == "italic") return GlyphStyle::Italic;
  if (s == "underline") return GlyphStyle::Underline;
  if (s == "condensed") return GlyphStyle::Condensed;
  throw Error(ErrorKind::InvalidConfig, "unknown glyph style '" + s + "'");
}

std::string to_string(Augment a) {
  switch (a) {
    case Augment::None: return "none";
    case Augment::Flip: return "flip";
    case Augment::Rot90: return "rot90";
    case Augment::Scale: return "scale";
  }
  return "none";
}

Augment augment_from_string(const std::string& s) {
  if (s == "none") return Augment::None;
  if (s == "flip") return Augment::Flip;
  if (s == "rot90") return Augment::Rot90;
  if (s == "scale") return Augment::Scale;
  throw Error(ErrorKind::InvalidConfig, "unknown augmentation '" + s + "'");
}

namespace {

json range_to_json(const IntRange& r) { return json::array({r.lo, r.hi}); }

IntRange range_from_json(const json& j) {
  if (!j.is_array() || j.size() != 2) {
    throw Error(ErrorKind::InvalidConfig, "range must be [lo, hi]");
  }
  return IntRange{j[0].get<std::int64_t>(), j[1].get<std::int64_t>()};
}

json spec_to_json(const CorruptionSpec& s) {
  json j;
  j["square_count"] = range_to_json(s.square_count);
  j["square_size"] = range_to_json(s.square_size);
  j["glyph_count"] = range_to_json(s.glyph_count);
  j["glyph_scale"] = range_to_json(s.glyph_scale);
  json styles = json::array();
  for (auto st : s.glyph_styles) styles.push_back(to_string(st));
  j["glyph_styles"] = styles;
  j["fill_value"] = s.fill_value;
  j["noise_sigma"] = s.noise_sigma;
  j["corrupt_fraction"] = json::array({s.min_corrupt_fraction, s.max_corrupt_fraction});
  return j;
}

CorruptionSpec spec_from_json(const json& j) {
  CorruptionSpec s;
  if (j.contains("square_count")) s.square_count = range_from_json(j.at("square_count"));
  if (j.contains("square_size")) s.square_size = range_from_json(j.at("square_size"));
  if (j.contains("glyph_count")) s.glyph_count = range_from_json(j.at("glyph_count"));
  if (j.contains("glyph_scale")) s.glyph_scale = range_from_json(j.at("glyph_scale"));
  if (j.contains("glyph_styles")) {
    s.glyph_styles.clear();
    for (const auto& st : j.at("glyph_styles")) {
      s.glyph_styles.push_back(glyph_style_from_string(st.get<std::string>()));
    }
  }
  if (j.contains("fill_value")) s.fill_value = j.at("fill_value").get<double>();
  if (j.contains("noise_sigma")) s.noise_sigma = j.at("noise_sigma").get<double>();
  if (j.contains("corrupt_fraction")) {
    const auto& band = j.at("corrupt_fraction");
    s.min_corrupt_fraction = band[0].get<double>();
    s.max_corrupt_fraction = band[1].get<double>();
  }
  s.validate();
  return s;
}

}  // namespace

std::string CorruptionSpec::to_json_string() const { return spec_to_json(*this).dump(); }

CorruptionSpec CorruptionSpec::from_json_string(const std::string& text) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) throw Error(ErrorKind::InvalidConfig, "corruption spec is not valid JSON");
  return spec_from_json(j);
}

// ---- Mask generation -----------------------------------------------------------

Tensor gen_mask(const CorruptionSpec& spec, std::int64_t h, std::int64_t w, Rng& rng,
                std::span<const int> glyph_pool, MaskProvenance* prov) {
  spec.validate();
  if (spec.square_count.hi > 0 && spec.square_size.hi > std::min(h, w)) {
    throw Error(ErrorKind::SpecInfeasible,
                "largest square (" + std::to_string(spec.square_size.hi) +
                    " px) cannot fit in a " + std::to_string(h) + "x" + std::to_string(w) +
                    " mask");
  }
  std::vector<int> fallback_pool;
  if (glyph_pool.empty()) {
    fallback_pool = default_pool();
    glyph_pool = fallback_pool;
  }

  const bool nothing_requested = spec.square_count.hi == 0 && spec.glyph_count.hi == 0;
  const std::int64_t total = h * w;

  for (int attempt = 1; attempt <= 100; ++attempt) {
    Tensor mask(1, 1, h, w, 1.0f);
    MaskProvenance record;
    record.attempts = attempt;

    const std::int64_t n_squares = rng.uniform_int(spec.square_count.lo, spec.square_count.hi);
    for (std::int64_t s = 0; s < n_squares; ++s) {
      const std::int64_t side = rng.uniform_int(spec.square_size.lo, spec.square_size.hi);
      const std::int64_t row = rng.uniform_int(0, h - side);
      const std::int64_t col = rng.uniform_int(0, w - side);
      for (std::int64_t y = row; y < row + side; ++y) {
        std::fill(mask.data() + y * w + col, mask.data() + y * w + col + side, 0.0f);
      }
      record.squares.push_back({row, col, side});
    }

    const std::int64_t n_runs = rng.uniform_int(spec.glyph_count.lo, spec.glyph_count.hi);
    for (std::int64_t r = 0; r < n_runs; ++r) {
      std::int64_t scale = rng.uniform_int(spec.glyph_scale.lo, spec.glyph_scale.hi);
      const GlyphStyle style =
          spec.glyph_styles[rng.uniform_int(0, static_cast<std::int64_t>(spec.glyph_styles.size()) - 1)];
      const std::int64_t run_len = rng.uniform_int(1, 4);
      std::vector<int> ids;
      for (std::int64_t g = 0; g < run_len; ++g) {
        ids.push_back(glyph_pool[rng.uniform_int(0, static_cast<std::int64_t>(glyph_pool.size()) - 1)]);
      }

      // Shrink the scale until the run fits; drop the stamp if even scale 1
      // does not.
      std::vector<Bitmap> stamps;
      std::int64_t run_w = 0, run_h = 0;
      for (; scale >= 1; --scale) {
        stamps.clear();
        run_w = 0;
        run_h = 0;
        for (int id : ids) {
          stamps.push_back(make_stamp(id, style, scale));
          run_w += stamps.back().w;
          run_h = std::max(run_h, stamps.back().h);
        }
        run_w += scale * (run_len - 1);  // spacing
        if (run_w <= w && run_h <= h) break;
      }
      if (scale < 1) continue;

      const std::int64_t row = rng.uniform_int(0, h - run_h);
      const std::int64_t col = rng.uniform_int(0, w - run_w);
      std::int64_t x = col;
      for (std::size_t g = 0; g < stamps.size(); ++g) {
        const Bitmap& bm = stamps[g];
        blit_zeros(mask, bm, row + (run_h - bm.h), x);  // bottom aligned
        record.glyphs.push_back({ids[g], style, row + (run_h - bm.h), x, scale});
        x += bm.w + scale;
      }
    }

    std::int64_t zeros = 0;
    for (std::int64_t i = 0; i < total; ++i) {
      if (mask[i] == 0.0f) ++zeros;
    }
    record.corrupt_fraction = static_cast<double>(zeros) / static_cast<double>(total);

    if (nothing_requested ||
        (record.corrupt_fraction >= spec.min_corrupt_fraction &&
         record.corrupt_fraction <= spec.max_corrupt_fraction)) {
      if (prov) *prov = std::move(record);
      return mask;
    }
  }
  throw Error(ErrorKind::SpecInfeasible,
              "no mask within the corrupted-fraction band after 100 attempts");
}

Tensor corrupt(const Tensor& y, const Tensor& mask, const CorruptionSpec& spec, Rng& rng) {
  if (!y.same_shape(mask)) {
    throw Error(ErrorKind::ShapeMismatch,
                "corrupt: " + y.shape().str() + " vs " + mask.shape().str());
  }
  const float u = static_cast<float>(spec.fill_value);
  Tensor x(y.shape());
  if (spec.noise_sigma > 0.0) {
    for (std::int64_t i = 0; i < y.numel(); ++i) {
      const float noisy =
          static_cast<float>(static_cast<double>(y[i]) + rng.normal(0.0, spec.noise_sigma));
      x[i] = mask[i] == 1.0f ? std::min(1.0f, std::max(0.0f, noisy)) : u;
    }
  } else {
    for (std::int64_t i = 0; i < y.numel(); ++i) {
      x[i] = mask[i] == 1.0f ? y[i] : u;
    }
  }
  return x;
}

// ---- Patch sampling --------------------------------------------------------------

namespace {

void validate_sources(const std::vector<Tensor>& sources) {
  if (sources.empty()) throw Error(ErrorKind::InsufficientSources, "no source images");
  for (std::size_t i = 0; i < sources.size(); ++i) {
    const auto& s = sources[i];
    if (s.n() != 1 || s.c() != 1) {
      throw Error(ErrorKind::InvalidArgument, "sources must be (1,1,h,w) tensors");
    }
    if (s.h() < kPatchSize || s.w() < kPatchSize) {
      throw Error(ErrorKind::SourceTooSmall,
                  "source " + std::to_string(i) + " is " + std::to_string(s.h()) + "x" +
                      std::to_string(s.w()) + ", need at least 64x64");
    }
  }
}

// Writes one 64x64 clean patch into plane i of out.y.
void extract_patch(const Tensor& src, Rng& r, std::span<const Augment> augments, float* dst,
                   PatchProvenance& prov) {
  // Augmentations that the source can support.
  std::vector<Augment> usable;
  for (Augment a : augments) {
    if (a == Augment::Scale) {
      if (src.h() >= 2 * kPatchSize && src.w() >= 2 * kPatchSize) usable.push_back(a);
    } else {
      usable.push_back(a);
    }
  }
  if (usable.empty()) usable.push_back(Augment::None);
  const Augment aug = usable[r.uniform_int(0, static_cast<std::int64_t>(usable.size()) - 1)];

  const std::int64_t cs = aug == Augment::Scale ? 2 * kPatchSize : kPatchSize;
  const std::int64_t row = r.uniform_int(0, src.h() - cs);
  const std::int64_t col = r.uniform_int(0, src.w() - cs);
  prov.row_off = row;
  prov.col_off = col;
  prov.augment = aug;

  float tmp[kPatchSize * kPatchSize];
  switch (aug) {
    case Augment::None:
      for (std::int64_t i = 0; i < kPatchSize; ++i) {
        const float* s = src.data() + (row + i) * src.w() + col;
        std::copy(s, s + kPatchSize, tmp + i * kPatchSize);
      }
      break;
    case Augment::Flip:
      for (std::int64_t i = 0; i < kPatchSize; ++i) {
        const float* s = src.data() + (row + i) * src.w() + col;
        for (std::int64_t j = 0; j < kPatchSize; ++j) {
          tmp[i * kPatchSize + j] = s[kPatchSize - 1 - j];
        }
      }
      break;
    case Augment::Rot90: {
      const int q = static_cast<int>(r.uniform_int(1, 3));
      prov.rot_quarters = q;
      for (std::int64_t i = 0; i < kPatchSize; ++i) {
        for (std::int64_t j = 0; j < kPatchSize; ++j) {
          std::int64_t si = i, sj = j;
          // map output (i,j) back to crop coordinates for q quarter turns ccw
          for (int t = 0; t < q; ++t) {
            const std::int64_t ni = sj;
            const std::int64_t nj = kPatchSize - 1 - si;
            si = ni;
            sj = nj;
          }
          tmp[i * kPatchSize + j] = src.at(0, 0, row + si, col + sj);
        }
      }
      break;
    }
    case Augment::Scale:
      for (std::int64_t i = 0; i < kPatchSize; ++i) {
        for (std::int64_t j = 0; j < kPatchSize; ++j) {
          const float a = src.at(0, 0, row + 2 * i, col + 2 * j);
          const float b = src.at(0, 0, row + 2 * i, col + 2 * j + 1);
          const float c = src.at(0, 0, row + 2 * i + 1, col + 2 * j);
          const float d = src.at(0, 0, row + 2 * i + 1, col + 2 * j + 1);
          tmp[i * kPatchSize + j] = 0.25f * (a + b + c + d);
        }
      }
      break;
  }
  std::copy(tmp, tmp + kPatchSize * kPatchSize, dst);
}

}  // namespace

PatchSet sample_patches(const std::vector<Tensor>& sources, std::int64_t count, Rng& rng,
                        std::span<const Augment> augments,
                        std::span<const std::int64_t> source_ids) {
  validate_sources(sources);
  static const Augment kNoneOnly[] = {Augment::None};
  if (augments.empty()) augments = kNoneOnly;

  PatchSet out;
  out.count = count;
  if (count == 0) return out;
  out.y = Tensor(count, 1, kPatchSize, kPatchSize);
  out.provenance.resize(static_cast<std::size_t>(count));

  const std::int64_t n_src = static_cast<std::int64_t>(sources.size());
  parallel_for_each(count, [&](std::int64_t i) {
    Rng r = rng.split(static_cast<std::uint64_t>(i));
    const std::int64_t s = r.uniform_int(0, n_src - 1);
    PatchProvenance& prov = out.provenance[static_cast<std::size_t>(i)];
    prov.source_id = source_ids.empty() ? s : source_ids[static_cast<std::size_t>(s)];
    extract_patch(sources[static_cast<std::size_t>(s)], r, augments,
                  out.y.data() + i * kPatchSize * kPatchSize, prov);
  });
  return out;
}

// ---- Dataset building --------------------------------------------------------------

namespace {

constexpr std::uint64_t kTrainStream = 0x745241494E000000ULL;
constexpr std::uint64_t kTestStream = 0x7445535400000000ULL;
constexpr std::uint64_t kMaskStream = 0x4D41534B00000000ULL;

void corrupt_split(PatchSet& ps, const CorruptionSpec& spec, std::uint64_t mask_seed,
                   std::span<const int> glyph_pool) {
  if (ps.count == 0) return;
  ps.x = Tensor(ps.count, 1, kPatchSize, kPatchSize);
  ps.mask = Tensor(ps.count, 1, kPatchSize, kPatchSize);
  parallel_for_each(ps.count, [&](std::int64_t i) {
    Rng r(derive_seed(mask_seed, static_cast<std::uint64_t>(i)));
    Tensor m = gen_mask(spec, kPatchSize, kPatchSize, r, glyph_pool);
    Tensor yi(1, 1, kPatchSize, kPatchSize);
    std::copy(ps.y.data() + i * kPatchSize * kPatchSize,
              ps.y.data() + (i + 1) * kPatchSize * kPatchSize, yi.data());
    Tensor xi = corrupt(yi, m, spec, r);
    std::copy(m.data(), m.data() + m.numel(), ps.mask.data() + i * kPatchSize * kPatchSize);
    std::copy(xi.data(), xi.data() + xi.numel(), ps.x.data() + i * kPatchSize * kPatchSize);
  });
}

template <typename T>
void seeded_shuffle(std::vector<T>& v, Rng& rng) {
  for (std::int64_t i = static_cast<std::int64_t>(v.size()) - 1; i > 0; --i) {
    const std::int64_t j = rng.uniform_int(0, i);
    std::swap(v[i], v[j]);
  }
}

}  // namespace

Dataset build_dataset(const std::vector<Tensor>& sources, const CorruptionSpec& spec,
                      std::int64_t total_count, double train_fraction, Rng& rng,
                      std::span<const Augment> augments) {
  spec.validate();
  validate_sources(sources);
  if (train_fraction < 0.0 || train_fraction > 1.0) {
    throw Error(ErrorKind::InvalidConfig, "train_fraction must be in [0,1]");
  }
  const std::int64_t train_n = static_cast<std::int64_t>(std::llround(
      static_cast<double>(total_count) * train_fraction));
  const std::int64_t test_n = total_count - train_n;

  Dataset ds;
  ds.info.seed = rng.seed();
  ds.info.spec = spec;
  ds.info.rng_algorithm = Rng::kAlgorithmId;
  static const Augment kDefaultAugments[] = {Augment::None, Augment::Flip, Augment::Rot90,
                                             Augment::Scale};
  if (augments.empty()) augments = kDefaultAugments;
  ds.info.augments.assign(augments.begin(), augments.end());

  // Disjoint glyph pools: a seeded shuffle of the glyph set, 2/3 train.
  std::vector<int> glyphs = [] {
    std::vector<int> all(static_cast<std::size_t>(glyph_set_size()));
    for (int i = 0; i < glyph_set_size(); ++i) all[static_cast<std::size_t>(i)] = i;
    return all;
  }();
  Rng pool_rng = rng.split(0xC1F7);
  seeded_shuffle(glyphs, pool_rng);
  const std::size_t train_pool_size = (glyphs.size() * 2 + 2) / 3;
  ds.info.train_glyph_pool.assign(glyphs.begin(), glyphs.begin() + train_pool_size);
  ds.info.test_glyph_pool.assign(glyphs.begin() + train_pool_size, glyphs.end());
  std::sort(ds.info.train_glyph_pool.begin(), ds.info.train_glyph_pool.end());
  std::sort(ds.info.test_glyph_pool.begin(), ds.info.test_glyph_pool.end());

  // Disjoint source images between splits (when both splits are non-empty).
  std::vector<std::int64_t> src_ids(sources.size());
  for (std::size_t i = 0; i < sources.size(); ++i) src_ids[i] = static_cast<std::int64_t>(i);
  Rng src_rng = rng.split(0x50C5);
  seeded_shuffle(src_ids, src_rng);

  std::vector<std::int64_t> train_src_ids, test_src_ids;
  if (train_n > 0 && test_n > 0) {
    if (sources.size() < 2) {
      throw Error(ErrorKind::InsufficientSources,
                  "need at least 2 source images for disjoint train/test crops");
    }
    const double test_fraction = 1.0 - train_fraction;
    std::size_t n_test_src = static_cast<std::size_t>(
        std::llround(static_cast<double>(sources.size()) * test_fraction));
    n_test_src = std::min(std::max<std::size_t>(n_test_src, 1), sources.size() - 1);
    test_src_ids.assign(src_ids.end() - static_cast<std::ptrdiff_t>(n_test_src), src_ids.end());
    train_src_ids.assign(src_ids.begin(), src_ids.end() - static_cast<std::ptrdiff_t>(n_test_src));
  } else if (train_n > 0) {
    train_src_ids = src_ids;
  } else {
    test_src_ids = src_ids;
  }
  std::sort(train_src_ids.begin(), train_src_ids.end());
  std::sort(test_src_ids.begin(), test_src_ids.end());
  ds.info.train_sources = train_src_ids;
  ds.info.test_sources = test_src_ids;

  auto subset = [&](const std::vector<std::int64_t>& ids) {
    std::vector<Tensor> out;
    out.reserve(ids.size());
    for (auto id : ids) out.push_back(sources[static_cast<std::size_t>(id)]);
    return out;
  };

  if (train_n > 0) {
    Rng r = rng.split(kTrainStream);
    ds.train = sample_patches(subset(train_src_ids), train_n, r, augments, train_src_ids);
    corrupt_split(ds.train, spec, derive_seed(rng.seed(), kTrainStream ^ kMaskStream),
                  ds.info.train_glyph_pool);
  }
  if (test_n > 0) {
    Rng r = rng.split(kTestStream);
    ds.test = sample_patches(subset(test_src_ids), test_n, r, augments, test_src_ids);
    corrupt_split(ds.test, spec, derive_seed(rng.seed(), kTestStream ^ kMaskStream),
                  ds.info.test_glyph_pool);
  }
  return ds;
}

// ---- Serialization -------------------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'D', 'B', 'I', 'P', 'D', 'A', 'T', 'A'};
constexpr std::uint32_t kVersion = 1;

void write_u32(std::ostream& os, std::uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

std::uint32_t read_u32(std::istream& is) {
  std::uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}

json provenance_to_json(const std::vector<PatchProvenance>& prov) {
  json arr = json::array();
  for (const auto& p : prov) {
    json j;
    j["source"] = p.source_id;
    j["row"] = p.row_off;
    j["col"] = p.col_off;
    j["augment"] = to_string(p.augment);
    if (p.augment == Augment::Rot90) j["rot_quarters"] = p.rot_quarters;
    arr.push_back(std::move(j));
  }
  return arr;
}

std::vector<PatchProvenance> provenance_from_json(const json& arr) {
  std::vector<PatchProvenance> out;
  for (const auto& j : arr) {
    PatchProvenance p;
    p.source_id = j.at("source").get<std::int64_t>();
    p.row_off = j.at("row").get<std::int64_t>();
    p.col_off = j.at("col").get<std::int64_t>();
    p.augment = augment_from_string(j.at("augment").get<std::string>());
    if (j.contains("rot_quarters")) p.rot_quarters = j.at("rot_quarters").get<int>();
    out.push_back(p);
  }
  return out;
}

}  // namespace

void write_patchset(const std::string& path, const PatchSet& ps) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error(ErrorKind::IoError, "cannot write " + path);
  os.write(kMagic, sizeof(kMagic));
  write_u32(os, kVersion);
  write_u32(os, static_cast<std::uint32_t>(ps.count));
  const std::int64_t plane = kPatchSize * kPatchSize;
  for (std::int64_t i = 0; i < ps.count; ++i) {
    os.write(reinterpret_cast<const char*>(ps.y.data() + i * plane), plane * sizeof(float));
    os.write(reinterpret_cast<const char*>(ps.x.data() + i * plane), plane * sizeof(float));
    os.write(reinterpret_cast<const char*>(ps.mask.data() + i * plane), plane * sizeof(float));
  }
  if (!os) throw Error(ErrorKind::IoError, "short write to " + path);
}

PatchSet read_patchset(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorKind::IoError, "cannot read " + path);
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw Error(ErrorKind::IoError, path + " is not a blindpaint dataset blob");
  }
  const std::uint32_t version = read_u32(is);
  if (version != kVersion) {
    throw Error(ErrorKind::IoError,
                "unsupported dataset version " + std::to_string(version) + " in " + path);
  }
  PatchSet ps;
  ps.count = read_u32(is);
  if (ps.count == 0) return ps;
  ps.y = Tensor(ps.count, 1, kPatchSize, kPatchSize);
  ps.x = Tensor(ps.count, 1, kPatchSize, kPatchSize);
  ps.mask = Tensor(ps.count, 1, kPatchSize, kPatchSize);
  const std::int64_t plane = kPatchSize * kPatchSize;
  for (std::int64_t i = 0; i < ps.count; ++i) {
    is.read(reinterpret_cast<char*>(ps.y.data() + i * plane), plane * sizeof(float));
    is.read(reinterpret_cast<char*>(ps.x.data() + i * plane), plane * sizeof(float));
    is.read(reinterpret_cast<char*>(ps.mask.data() + i * plane), plane * sizeof(float));
  }
  if (!is) throw Error(ErrorKind::IoError, "truncated dataset blob " + path);
  return ps;
}

void write_dataset(const std::string& dir, const Dataset& ds) {
  fs::create_directories(dir);
  json manifest;
  manifest["format"] = "blindpaint-dataset";
  manifest["version"] = kVersion;
  manifest["seed"] = ds.info.seed;
  manifest["rng_algorithm"] = ds.info.rng_algorithm;
  manifest["spec"] = spec_to_json(ds.info.spec);
  manifest["counts"] = {{"train", ds.train.count}, {"test", ds.test.count}};
  manifest["glyph_pools"] = {{"train", ds.info.train_glyph_pool},
                             {"test", ds.info.test_glyph_pool}};
  manifest["sources"] = {{"train", ds.info.train_sources}, {"test", ds.info.test_sources}};
  json augs = json::array();
  for (auto a : ds.info.augments) augs.push_back(to_string(a));
  manifest["augments"] = augs;
  manifest["provenance"] = {{"train", provenance_to_json(ds.train.provenance)},
                            {"test", provenance_to_json(ds.test.provenance)}};

  std::ofstream mf(fs::path(dir) / "manifest.json", std::ios::trunc);
  if (!mf) throw Error(ErrorKind::IoError, "cannot write manifest in " + dir);
  mf << manifest.dump(2) << "\n";
  write_patchset((fs::path(dir) / "train.bin").string(), ds.train);
  write_patchset((fs::path(dir) / "test.bin").string(), ds.test);
}

Dataset read_dataset(const std::string& dir) {
  std::ifstream mf(fs::path(dir) / "manifest.json");
  if (!mf) throw Error(ErrorKind::IoError, "no manifest.json in " + dir);
  json manifest = json::parse(mf, nullptr, false);
  if (manifest.is_discarded()) {
    throw Error(ErrorKind::IoError, "manifest.json in " + dir + " is not valid JSON");
  }
  Dataset ds;
  ds.info.seed = manifest.at("seed").get<std::uint64_t>();
  ds.info.rng_algorithm = manifest.at("rng_algorithm").get<std::string>();
  ds.info.spec = spec_from_json(manifest.at("spec"));
  ds.info.train_glyph_pool = manifest.at("glyph_pools").at("train").get<std::vector<int>>();
  ds.info.test_glyph_pool = manifest.at("glyph_pools").at("test").get<std::vector<int>>();
  ds.info.train_sources =
      manifest.at("sources").at("train").get<std::vector<std::int64_t>>();
  ds.info.test_sources = manifest.at("sources").at("test").get<std::vector<std::int64_t>>();
  if (manifest.contains("augments")) {
    for (const auto& a : manifest.at("augments")) {
      ds.info.augments.push_back(augment_from_string(a.get<std::string>()));
    }
  }
  ds.train = read_patchset((fs::path(dir) / "train.bin").string());
  ds.test = read_patchset((fs::path(dir) / "test.bin").string());
  ds.train.provenance = provenance_from_json(manifest.at("provenance").at("train"));
  ds.test.provenance = provenance_from_json(manifest.at("provenance").at("test"));
  return ds;
}

}  // namespace blindpaint::synth
