// Synthetic corruption data: 64x64 patch sampling with augmentation, binary
// masks built from stamped bitmap glyphs plus random squares, and the
// corruption rule x = M*(y+n) + (1-M)*u. Fully deterministic under seed;
// every sample draws from its own derived stream, so ordering never depends
// on worker count.
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "blindpaint/common.hpp"
#include "blindpaint/rng.hpp"
#include "blindpaint/tensor.hpp"

namespace blindpaint::synth {

inline constexpr std::int64_t kPatchSize = 64;

struct IntRange {
  std::int64_t lo = 0;
  std::int64_t hi = 0;
  bool operator==(const IntRange&) const = default;
};

enum class GlyphStyle { Regular, Bold, Italic, Underline, Condensed };

std::string to_string(GlyphStyle s);
GlyphStyle glyph_style_from_string(const std::string& s);

struct CorruptionSpec {
  IntRange square_count{1, 4};
  IntRange square_size{5, 40};  // side length in pixels, inclusive
  IntRange glyph_count{2, 6};   // glyph runs stamped per mask
  IntRange glyph_scale{2, 10};  // integer magnification of the 5x7 base glyphs
  std::vector<GlyphStyle> glyph_styles{GlyphStyle::Regular, GlyphStyle::Bold, GlyphStyle::Italic,
                                       GlyphStyle::Underline, GlyphStyle::Condensed};
  double fill_value = 0.0;  // u written into corrupted pixels
  double noise_sigma = 0.0; // std of additive noise n on intact pixels
  // Training masks outside this corrupted-fraction band are resampled
  // (at most 100 attempts).
  double min_corrupt_fraction = 0.005;
  double max_corrupt_fraction = 0.60;

  void validate() const;
  std::string to_json_string() const;
  static CorruptionSpec from_json_string(const std::string& text);
  bool operator==(const CorruptionSpec&) const = default;
};

struct SquareStamp {
  std::int64_t row = 0, col = 0, side = 0;
};

struct GlyphStamp {
  int glyph_id = 0;
  GlyphStyle style = GlyphStyle::Regular;
  std::int64_t row = 0, col = 0, scale = 1;
};

struct MaskProvenance {
  std::vector<SquareStamp> squares;
  std::vector<GlyphStamp> glyphs;
  double corrupt_fraction = 0.0;
  int attempts = 1;
};

// Number of glyphs in the built-in 5x7 set.
int glyph_set_size();

// Binary mask (1,1,h,w): 0 = corrupted, 1 = intact. Glyphs are drawn from
// glyph_pool (all glyphs when empty).
Tensor gen_mask(const CorruptionSpec& spec, std::int64_t h, std::int64_t w, Rng& rng,
                std::span<const int> glyph_pool = {}, MaskProvenance* prov = nullptr);

// x = M*(y+n) + (1-M)*u, clamped to [0,1]. Intact pixels reproduce y
// bit-exactly when noise_sigma is 0.
Tensor corrupt(const Tensor& y, const Tensor& mask, const CorruptionSpec& spec, Rng& rng);

enum class Augment { None, Flip, Rot90, Scale };

std::string to_string(Augment a);
Augment augment_from_string(const std::string& s);

struct PatchProvenance {
  std::int64_t source_id = 0;
  std::int64_t row_off = 0, col_off = 0;
  Augment augment = Augment::None;
  int rot_quarters = 0;  // for Augment::Rot90
};

struct PatchSet {
  std::int64_t count = 0;
  Tensor y;     // clean patches (count,1,64,64); empty when count == 0
  Tensor x;     // corrupted patches
  Tensor mask;  // binary masks
  std::vector<PatchProvenance> provenance;
};

// Clean 64x64 patches only (x/mask left empty). source_ids, when given, maps
// positions in `sources` to stable ids recorded in provenance.
PatchSet sample_patches(const std::vector<Tensor>& sources, std::int64_t count, Rng& rng,
                        std::span<const Augment> augments,
                        std::span<const std::int64_t> source_ids = {});

struct DatasetInfo {
  std::uint64_t seed = 0;
  CorruptionSpec spec;
  std::string rng_algorithm;
  std::vector<int> train_glyph_pool, test_glyph_pool;
  std::vector<std::int64_t> train_sources, test_sources;
  std::vector<Augment> augments;
};

struct Dataset {
  PatchSet train, test;
  DatasetInfo info;
};

// Samples total_count patches split train_fraction : 1-train_fraction, with
// disjoint source images and disjoint glyph pools between the splits.
Dataset build_dataset(const std::vector<Tensor>& sources, const CorruptionSpec& spec,
                      std::int64_t total_count, double train_fraction, Rng& rng,
                      std::span<const Augment> augments = {});

// Directory layout: manifest.json + train.bin + test.bin. The blob format is
// magic "DBIPDATA", u32 version, u32 n, then per sample y, x, M planes as
// little-endian f32 in NCHW order (1x64x64 each).
void write_dataset(const std::string& dir, const Dataset& ds);
Dataset read_dataset(const std::string& dir);
PatchSet read_patchset(const std::string& path);
void write_patchset(const std::string& path, const PatchSet& ps);

}  // namespace blindpaint::synth
