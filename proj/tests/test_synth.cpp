#include "doctest.h"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

#include "blindpaint/synth.hpp"
#include "support/corpus.hpp"

using namespace blindpaint;
using namespace blindpaint::synth;

namespace {

std::int64_t count_zeros(const Tensor& mask) {
  std::int64_t zeros = 0;
  for (std::int64_t i = 0; i < mask.numel(); ++i) {
    if (mask[i] == 0.0f) ++zeros;
  }
  return zeros;
}

bool strictly_binary(const Tensor& mask) {
  for (std::int64_t i = 0; i < mask.numel(); ++i) {
    if (mask[i] != 0.0f && mask[i] != 1.0f) return false;
  }
  return true;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

}  // namespace

TEST_CASE("gen_mask: empty spec yields all-ones mask") {
  CorruptionSpec spec;
  spec.square_count = {0, 0};
  spec.glyph_count = {0, 0};
  Rng rng(1);
  MaskProvenance prov;
  Tensor mask = gen_mask(spec, 64, 64, rng, {}, &prov);
  CHECK(count_zeros(mask) == 0);
  CHECK(prov.corrupt_fraction == 0.0);
}

TEST_CASE("gen_mask: single 5px square is exactly 25 zeros forming a square") {
  CorruptionSpec spec;
  spec.square_count = {1, 1};
  spec.square_size = {5, 5};
  spec.glyph_count = {0, 0};
  Rng rng(7);
  MaskProvenance prov;
  Tensor mask = gen_mask(spec, 64, 64, rng, {}, &prov);
  CHECK(count_zeros(mask) == 25);
  REQUIRE(prov.squares.size() == 1);
  const auto& sq = prov.squares[0];
  CHECK(sq.side == 5);
  // connected-component style check: the zeros are exactly the recorded box
  for (std::int64_t i = 0; i < 64; ++i) {
    for (std::int64_t j = 0; j < 64; ++j) {
      const bool inside =
          i >= sq.row && i < sq.row + sq.side && j >= sq.col && j < sq.col + sq.side;
      CHECK(mask.at(0, 0, i, j) == (inside ? 0.0f : 1.0f));
    }
  }
}

TEST_CASE("gen_mask: square sides stay in range and hit both ends") {
  CorruptionSpec spec;
  spec.glyph_count = {0, 0};
  spec.square_count = {1, 2};
  Rng rng(99);
  std::int64_t min_side = 1000, max_side = 0;
  for (int i = 0; i < 2000; ++i) {
    MaskProvenance prov;
    gen_mask(spec, 64, 64, rng, {}, &prov);
    for (const auto& sq : prov.squares) {
      CHECK(sq.side >= 5);
      CHECK(sq.side <= 40);
      CHECK(sq.row >= 0);
      CHECK(sq.col >= 0);
      CHECK(sq.row + sq.side <= 64);
      CHECK(sq.col + sq.side <= 64);
      min_side = std::min(min_side, sq.side);
      max_side = std::max(max_side, sq.side);
    }
  }
  CHECK(min_side == 5);
  CHECK(max_side == 40);
}

TEST_CASE("gen_mask: binary values, corruption band, infeasible spec") {
  CorruptionSpec spec;
  Rng rng(3);
  for (int i = 0; i < 50; ++i) {
    MaskProvenance prov;
    Tensor mask = gen_mask(spec, 64, 64, rng, {}, &prov);
    CHECK(strictly_binary(mask));
    CHECK(prov.corrupt_fraction >= spec.min_corrupt_fraction);
    CHECK(prov.corrupt_fraction <= spec.max_corrupt_fraction);
  }

  CorruptionSpec too_big;
  too_big.square_size = {41, 80};
  Rng rng2(4);
  CHECK_THROWS_AS(gen_mask(too_big, 64, 64, rng2), Error);
  try {
    gen_mask(too_big, 64, 64, rng2);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::SpecInfeasible);
  }
}

TEST_CASE("gen_mask: glyph stamps honor the pool") {
  CorruptionSpec spec;
  spec.square_count = {0, 0};
  spec.glyph_count = {3, 6};
  spec.min_corrupt_fraction = 0.001;
  Rng rng(12);
  std::vector<int> pool = {0, 5, 9};
  for (int i = 0; i < 50; ++i) {
    MaskProvenance prov;
    Tensor mask = gen_mask(spec, 64, 64, rng, pool, &prov);
    CHECK(strictly_binary(mask));
    CHECK(!prov.glyphs.empty());
    for (const auto& g : prov.glyphs) {
      CHECK(std::find(pool.begin(), pool.end(), g.glyph_id) != pool.end());
    }
  }
}

TEST_CASE("corrupt: identity, fill, and mixed-mask oracle") {
  Rng rng(8);
  Tensor y = rng_fill<float>(rng, UniformDist{0.0, 1.0}, {1, 1, 8, 8});
  CorruptionSpec spec;

  Tensor ones(1, 1, 8, 8, 1.0f);
  Tensor x_clean = corrupt(y, ones, spec, rng);
  CHECK(bit_equal(x_clean, y));  // M all ones, noise 0

  Tensor zeros(1, 1, 8, 8, 0.0f);
  Tensor x_black = corrupt(y, zeros, spec, rng);
  CHECK(sum_all(abs(x_black)) == 0.0);  // multiplication form with u=0

  spec.fill_value = 1.0;
  Tensor mixed = rng_fill<float>(rng, UniformDist{0.0, 1.0}, {1, 1, 8, 8});
  for (std::int64_t i = 0; i < mixed.numel(); ++i) mixed[i] = mixed[i] > 0.5f ? 1.0f : 0.0f;
  Tensor x_mixed = corrupt(y, mixed, spec, rng);
  for (std::int64_t i = 0; i < x_mixed.numel(); ++i) {
    CHECK(x_mixed[i] == (mixed[i] == 1.0f ? y[i] : 1.0f));
  }

  Tensor wrong(1, 1, 4, 4);
  CHECK_THROWS_AS(corrupt(y, wrong, spec, rng), Error);
}

TEST_CASE("sample_patches: count 0, exact-source case, determinism") {
  auto sources = testing::make_corpus(5, 3, 96, 96);
  Rng rng(17);
  static const Augment none_only[] = {Augment::None};

  PatchSet empty = sample_patches(sources, 0, rng, none_only);
  CHECK(empty.count == 0);

  // a single 64x64 source with no augmentation reproduces the image
  std::vector<Tensor> exact = {testing::make_procedural_image(rng, 64, 64)};
  Rng rng2(18);
  PatchSet one = sample_patches(exact, 1, rng2, none_only);
  REQUIRE(one.count == 1);
  CHECK(bit_equal(one.y, exact[0]));
  CHECK(one.provenance[0].row_off == 0);
  CHECK(one.provenance[0].col_off == 0);

  Rng a(21), b(21);
  static const Augment all_augs[] = {Augment::None, Augment::Flip, Augment::Rot90,
                                     Augment::Scale};
  PatchSet pa = sample_patches(sources, 100, a, all_augs);
  PatchSet pb = sample_patches(sources, 100, b, all_augs);
  CHECK(bit_equal(pa.y, pb.y));
  REQUIRE(pa.provenance.size() == pb.provenance.size());
  for (std::size_t i = 0; i < pa.provenance.size(); ++i) {
    CHECK(pa.provenance[i].source_id == pb.provenance[i].source_id);
    CHECK(pa.provenance[i].row_off == pb.provenance[i].row_off);
    CHECK(pa.provenance[i].augment == pb.provenance[i].augment);
  }

  std::vector<Tensor> tiny = {Tensor(1, 1, 32, 32, 0.5f)};
  Rng rng3(1);
  CHECK_THROWS_AS(sample_patches(tiny, 1, rng3, none_only), Error);
}

TEST_CASE("build_dataset: Eq.1 holds, pools disjoint, deterministic bytes") {
  auto sources = testing::make_corpus(77, 6, 128, 128);
  CorruptionSpec spec;
  Rng rng(2027);
  Dataset ds = build_dataset(sources, spec, 60, 5.0 / 6.0, rng);
  CHECK(ds.train.count == 50);
  CHECK(ds.test.count == 10);

  // Eq. 1 elementwise on every triple: M=1 -> x == y, M=0 -> x == u
  const float u = static_cast<float>(spec.fill_value);
  for (const auto* ps : {&ds.train, &ds.test}) {
    for (std::int64_t i = 0; i < ps->x.numel(); ++i) {
      if (ps->mask[i] == 1.0f) {
        CHECK(ps->x[i] == ps->y[i]);
      } else {
        REQUIRE(ps->mask[i] == 0.0f);
        CHECK(ps->x[i] == u);
      }
    }
  }

  // glyph pools and source sets are disjoint
  std::set<int> train_pool(ds.info.train_glyph_pool.begin(), ds.info.train_glyph_pool.end());
  for (int g : ds.info.test_glyph_pool) CHECK(train_pool.count(g) == 0);
  CHECK(static_cast<int>(ds.info.train_glyph_pool.size() + ds.info.test_glyph_pool.size()) ==
        glyph_set_size());
  std::set<std::int64_t> train_sources(ds.info.train_sources.begin(),
                                       ds.info.train_sources.end());
  for (auto s : ds.info.test_sources) CHECK(train_sources.count(s) == 0);
  for (const auto& p : ds.train.provenance) CHECK(train_sources.count(p.source_id) == 1);

  // split (1.0, 0.0) -> empty test set
  Rng rng2(2028);
  Dataset train_only = build_dataset(sources, spec, 20, 1.0, rng2);
  CHECK(train_only.train.count == 20);
  CHECK(train_only.test.count == 0);

  // byte-identical directories from the same seed
  namespace fs = std::filesystem;
  const fs::path dir_a = fs::temp_directory_path() / "bp_ds_a";
  const fs::path dir_b = fs::temp_directory_path() / "bp_ds_b";
  fs::remove_all(dir_a);
  fs::remove_all(dir_b);
  Rng ra(31), rb(31);
  write_dataset(dir_a.string(), build_dataset(sources, spec, 24, 0.75, ra));
  write_dataset(dir_b.string(), build_dataset(sources, spec, 24, 0.75, rb));
  for (const char* name : {"manifest.json", "train.bin", "test.bin"}) {
    CHECK(slurp(dir_a / name) == slurp(dir_b / name));
  }

  // round trip through the directory format
  Dataset loaded = read_dataset(dir_a.string());
  Rng rc(31);
  Dataset rebuilt = build_dataset(sources, spec, 24, 0.75, rc);
  CHECK(bit_equal(loaded.train.y, rebuilt.train.y));
  CHECK(bit_equal(loaded.train.x, rebuilt.train.x));
  CHECK(bit_equal(loaded.train.mask, rebuilt.train.mask));
  CHECK(bit_equal(loaded.test.y, rebuilt.test.y));
  CHECK(loaded.info.train_glyph_pool == rebuilt.info.train_glyph_pool);
  CHECK(loaded.train.provenance.size() == rebuilt.train.provenance.size());
  fs::remove_all(dir_a);
  fs::remove_all(dir_b);
}

TEST_CASE("corruption spec JSON round trip") {
  CorruptionSpec spec;
  spec.square_count = {2, 3};
  spec.fill_value = 0.25;
  spec.noise_sigma = 0.01;
  spec.glyph_styles = {GlyphStyle::Bold, GlyphStyle::Underline};
  CorruptionSpec back = CorruptionSpec::from_json_string(spec.to_json_string());
  CHECK(back == spec);

  CHECK_THROWS_AS(CorruptionSpec::from_json_string("{\"fill_value\": 2.0}"), Error);
}

TEST_CASE("corrupt with noise stays in range and clamps") {
  CorruptionSpec spec;
  spec.noise_sigma = 0.5;
  Rng rng(41);
  Tensor y = rng_fill<float>(rng, UniformDist{0.0, 1.0}, {1, 1, 16, 16});
  Tensor mask(1, 1, 16, 16, 1.0f);
  Tensor x = corrupt(y, mask, spec, rng);
  for (std::int64_t i = 0; i < x.numel(); ++i) {
    CHECK(x[i] >= 0.0f);
    CHECK(x[i] <= 1.0f);
  }
  CHECK(!bit_equal(x, y));  // noise actually applied
}
