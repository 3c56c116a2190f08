#include "doctest.h"

#include <filesystem>
#include <fstream>

#include "blindpaint/trainer.hpp"
#include "support/corpus.hpp"

using namespace blindpaint;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

// Small dataset fixture shared by the trainer tests.
struct Fixture {
  fs::path root;
  std::string dataset_dir;

  explicit Fixture(const std::string& name, std::int64_t patches, std::uint64_t seed) {
    root = fs::temp_directory_path() / name;
    fs::remove_all(root);
    fs::create_directories(root);
    auto sources = testing::make_corpus(seed, 4, 96, 96);
    synth::CorruptionSpec spec;
    Rng rng(seed);
    auto ds = synth::build_dataset(sources, spec, patches, 0.75, rng);
    dataset_dir = (root / "dataset").string();
    synth::write_dataset(dataset_dir, ds);
  }
  ~Fixture() { fs::remove_all(root); }
};

train::TrainConfig base_config(const Fixture& fx, const std::string& subdir) {
  train::TrainConfig cfg;
  cfg.net.variant = model::Variant::Full;
  cfg.net.base_width = 4;
  cfg.batch_size = 4;
  cfg.schedule = {{2, 1e-3}};
  cfg.seed = 7;
  cfg.dataset_dir = fx.dataset_dir;
  cfg.checkpoint_dir = (fx.root / subdir).string();
  return cfg;
}

}  // namespace

TEST_CASE("train config validation and json round trip") {
  train::TrainConfig cfg;
  cfg.dataset_dir = "d";
  cfg.checkpoint_dir = "c";
  cfg.schedule = {{8, 1e-3}, {2, 1e-4}};
  CHECK_NOTHROW(cfg.validate());
  CHECK(cfg.total_epochs() == 10);
  CHECK(cfg.lr_for_epoch(0) == 1e-3);
  CHECK(cfg.lr_for_epoch(7) == 1e-3);
  CHECK(cfg.lr_for_epoch(8) == 1e-4);

  auto back = train::TrainConfig::from_json_string(cfg.to_json_string());
  CHECK(back.net == cfg.net);
  CHECK(back.schedule.size() == 2);
  CHECK(back.schedule[1].lr == 1e-4);

  train::TrainConfig bad = cfg;
  bad.batch_size = 0;
  CHECK_THROWS_AS(bad.validate(), Error);

  // loss selector must agree with the variant
  train::TrainConfig wrong_loss = cfg;
  wrong_loss.loss = nn::LossKind::L2;
  CHECK_THROWS_AS(wrong_loss.validate(), Error);
  train::TrainConfig l2 = cfg;
  l2.net.variant = model::Variant::L2Loss;
  l2.loss = nn::LossKind::L2;
  CHECK_NOTHROW(l2.validate());
}

TEST_CASE("lr 0 schedule leaves parameters at their initialization") {
  Fixture fx("bp_train_lr0", 8, 11);
  auto cfg = base_config(fx, "ckpt");
  cfg.schedule = {{1, 0.0}};
  cfg.eval_every = 0;
  auto result = train::train(cfg);

  auto loaded = train::open_checkpoint(result.final_checkpoint);
  Rng init_rng(cfg.seed);
  auto fresh = model::Network<float>::build(cfg.net, init_rng);
  auto pa = loaded.network.params();
  auto pb = fresh.params();
  REQUIRE(pa.size() == pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    CHECK(bit_equal(*pa[i].value, *pb[i].value));
  }
}

TEST_CASE("training runs, logs, checkpoints, and loss trends down on a tiny fixture") {
  Fixture fx("bp_train_smoke", 8, 13);
  auto cfg = base_config(fx, "ckpt");
  cfg.schedule = {{6, 1e-3}};
  auto result = train::train(cfg);
  CHECK(result.epochs_run == 6);
  CHECK(result.steps == 6 * 2);  // 6 train patches, batch 4 -> 2 steps/epoch

  auto pts = metrics::read_curve_log(result.log_path);
  CHECK(!pts.empty());
  double first_loss = -1.0, last_loss = -1.0;
  for (const auto& pt : pts) {
    if (pt.split == "train") {
      if (first_loss < 0) first_loss = pt.loss;
      last_loss = pt.loss;
    }
  }
  CHECK(last_loss < first_loss);
  CHECK(fs::exists(fs::path(cfg.checkpoint_dir) / "final.ckpt"));
}

TEST_CASE("two runs with the same seed produce bit-identical checkpoints") {
  Fixture fx("bp_train_det", 8, 17);
  auto cfg_a = base_config(fx, "ckpt_a");
  auto cfg_b = base_config(fx, "ckpt_b");
  auto ra = train::train(cfg_a);
  auto rb = train::train(cfg_b);
  CHECK(slurp(ra.final_checkpoint) == slurp(rb.final_checkpoint));
}

TEST_CASE("resume reproduces the uninterrupted run bit-exactly") {
  Fixture fx("bp_train_resume", 8, 19);

  auto cfg_full = base_config(fx, "ckpt_full");
  cfg_full.schedule = {{4, 1e-3}};
  auto full = train::train(cfg_full);

  auto cfg_part = base_config(fx, "ckpt_part");
  cfg_part.schedule = {{4, 1e-3}};
  {
    // run only the first two epochs by training with a truncated schedule
    auto cfg_half = cfg_part;
    cfg_half.schedule = {{2, 1e-3}};
    train::train(cfg_half);
  }
  auto resumed = train::train(
      cfg_part, (fs::path(cfg_part.checkpoint_dir) / "epoch_0002.ckpt").string());
  CHECK(resumed.epochs_run == 2);

  CHECK(slurp(full.final_checkpoint) == slurp(resumed.final_checkpoint));
}

TEST_CASE("evaluate_patchset: identity network reproduces the baseline") {
  Fixture fx("bp_train_eval", 8, 23);
  auto ds = synth::read_dataset(fx.dataset_dir);
  model::NetworkConfig cfg;
  cfg.variant = model::Variant::Full;
  cfg.base_width = 4;
  Rng rng(3);
  auto net = model::Network<float>::build(cfg, rng);
  for (auto& p : net.params()) p.value->fill(0.0f);

  auto ev = train::evaluate_patchset(net, ds.test, nn::LossKind::L1, 4, true);
  REQUIRE(ev.restored.per_image.size() == static_cast<std::size_t>(ds.test.count));
  for (std::size_t i = 0; i < ev.restored.per_image.size(); ++i) {
    CHECK(ev.restored.per_image[i].psnr == ev.baseline.per_image[i].psnr);
    CHECK(ev.restored.per_image[i].ssim == ev.baseline.per_image[i].ssim);
  }
  // corrupted inputs differ from ground truth, so the baseline is finite
  CHECK(ev.baseline.mean_psnr > 0.0);
  CHECK(ev.baseline.mean_psnr < 60.0);
  CHECK(ev.mean_loss > 0.0);
}
