#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>

#include "blindpaint/checkpoint.hpp"
#include "blindpaint/image_io.hpp"
#include "blindpaint/network.hpp"
#include "support/corpus.hpp"

using namespace blindpaint;
namespace fs = std::filesystem;

TEST_CASE("pgm round trip at 8-bit precision") {
  Rng rng(1);
  Tensor t = testing::make_procedural_image(rng, 40, 56);
  io::Image img = io::tensor_to_image(t);
  const auto path = (fs::temp_directory_path() / "bp_io.pgm").string();
  io::write_pgm(path, img);
  io::Image back = io::read_pgm(path);
  CHECK(back.h == 40);
  CHECK(back.w == 56);
  CHECK(back.c == 1);
  for (std::size_t i = 0; i < back.data.size(); ++i) {
    CHECK(std::abs(back.data[i] - img.data[i]) <= 0.5f / 255.0f + 1e-6f);
  }
  // second write after the round trip is bit-stable
  const auto path2 = (fs::temp_directory_path() / "bp_io2.pgm").string();
  io::write_pgm(path2, back);
  io::Image again = io::read_pgm(path2);
  CHECK(again.data == back.data);
  fs::remove(path);
  fs::remove(path2);
}

TEST_CASE("read_image dispatches and rejects junk") {
  const auto path = (fs::temp_directory_path() / "bp_junk.bin").string();
  {
    std::ofstream os(path, std::ios::binary);
    os << "not an image";
  }
  CHECK_THROWS_AS(io::read_image(path), Error);
  fs::remove(path);
}

#if defined(BLINDPAINT_TEST_PNG)
TEST_CASE("png round trip, gray and rgb") {
  REQUIRE(io::png_supported());
  Rng rng(2);
  Tensor t = testing::make_procedural_image(rng, 24, 31);
  io::Image gray = io::tensor_to_image(t);
  const auto gpath = (fs::temp_directory_path() / "bp_io.png").string();
  io::write_image(gpath, gray);
  io::Image gback = io::read_image(gpath);
  CHECK(gback.c == 1);
  CHECK(gback.h == 24);
  for (std::size_t i = 0; i < gback.data.size(); ++i) {
    CHECK(std::abs(gback.data[i] - gray.data[i]) <= 0.5f / 255.0f + 1e-6f);
  }

  io::Image rgb;
  rgb.h = 10;
  rgb.w = 12;
  rgb.c = 3;
  rgb.data.resize(360);
  Rng rng2(3);
  for (auto& v : rgb.data) v = static_cast<float>(rng2.uniform(0.0, 1.0));
  const auto cpath = (fs::temp_directory_path() / "bp_io_rgb.png").string();
  io::write_image(cpath, rgb);
  io::Image cback = io::read_image(cpath);
  CHECK(cback.c == 3);
  for (std::size_t i = 0; i < cback.data.size(); ++i) {
    CHECK(std::abs(cback.data[i] - rgb.data[i]) <= 0.5f / 255.0f + 1e-6f);
  }
  fs::remove(gpath);
  fs::remove(cpath);
}
#endif

TEST_CASE("reflect padding to multiple of 8 and crop back") {
  Rng rng(4);
  Tensor t = testing::make_procedural_image(rng, 61, 67);
  Tensor padded = io::reflect_pad_to_multiple(t, 8);
  CHECK(padded.h() == 64);
  CHECK(padded.w() == 72);
  // interior preserved
  for (std::int64_t i = 0; i < 61; ++i) {
    for (std::int64_t j = 0; j < 67; ++j) {
      CHECK(padded.at(0, 0, i, j) == t.at(0, 0, i, j));
    }
  }
  // mirrored border: row 61 reflects row 60, col 67 reflects col 66
  CHECK(padded.at(0, 0, 61, 10) == t.at(0, 0, 60, 10));
  CHECK(padded.at(0, 0, 10, 67) == t.at(0, 0, 10, 66));
  Tensor cropped = io::crop_to(padded, 61, 67);
  CHECK(bit_equal(cropped, t));

  Tensor aligned = io::reflect_pad_to_multiple(cropped, 1);
  CHECK(bit_equal(aligned, cropped));
}

TEST_CASE("checkpoint round trip is bit-exact and rejects mismatches") {
  model::NetworkConfig cfg;
  cfg.variant = model::Variant::Full;
  cfg.base_width = 8;
  Rng rng(11);
  auto net = model::Network<float>::build(cfg, rng);
  nn::AdamState<float> adam;
  auto params = net.params();
  adam.init(params);
  adam.t = 17;
  Rng noise(12);
  for (auto& m : adam.m) m = rng_fill<float>(noise, NormalDist{0.0, 0.01}, m.shape());

  const auto path = (fs::temp_directory_path() / "bp_ckpt.ckpt").string();
  train::CheckpointMeta meta;
  meta.config = cfg;
  meta.step = 123;
  meta.epoch = 4;
  meta.loss = nn::LossKind::L1;
  train::save_checkpoint(path, net, &adam, meta);

  Rng rng2(99);
  auto net2 = model::Network<float>::build(cfg, rng2);
  nn::AdamState<float> adam2;
  auto meta2 = train::load_checkpoint(path, net2, &adam2);
  CHECK(meta2.step == 123);
  CHECK(meta2.epoch == 4);
  CHECK(meta2.has_adam);
  CHECK(adam2.t == 17);
  auto p1 = net.params();
  auto p2 = net2.params();
  REQUIRE(p1.size() == p2.size());
  for (std::size_t i = 0; i < p1.size(); ++i) {
    CHECK(bit_equal(*p1[i].value, *p2[i].value));
    CHECK(bit_equal(adam.m[i], adam2.m[i]));
    CHECK(bit_equal(adam.v[i], adam2.v[i]));
  }

  // saving the reloaded model reproduces the file byte for byte
  const auto path2 = (fs::temp_directory_path() / "bp_ckpt2.ckpt").string();
  train::save_checkpoint(path2, net2, &adam2, meta2);
  std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
  std::string b1((std::istreambuf_iterator<char>(f1)), {});
  std::string b2((std::istreambuf_iterator<char>(f2)), {});
  CHECK(b1 == b2);

  // config mismatch is a hard error
  model::NetworkConfig other = cfg;
  other.base_width = 16;
  Rng rng3(1);
  auto net3 = model::Network<float>::build(other, rng3);
  CHECK_THROWS_AS(train::load_checkpoint(path, net3), Error);
  try {
    train::load_checkpoint(path, net3);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::IncompatibleCheckpoint);
  }

  // open_checkpoint rebuilds the network from the stored config
  auto opened = train::open_checkpoint(path);
  CHECK(opened.meta.epoch == 4);
  CHECK(opened.network.config() == cfg);
  auto p3 = opened.network.params();
  for (std::size_t i = 0; i < p1.size(); ++i) CHECK(bit_equal(*p1[i].value, *p3[i].value));

  // version/garbage rejection
  const auto bad = (fs::temp_directory_path() / "bp_bad.ckpt").string();
  {
    std::ofstream os(bad, std::ios::binary);
    os << "DBIPJUNKxxxxxxxxxxxxxxxx";
  }
  CHECK_THROWS_AS(train::open_checkpoint(bad), Error);
  fs::remove(path);
  fs::remove(path2);
  fs::remove(bad);
}
