#include "blindpaint/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>

#include "json.hpp"

#include "blindpaint/parallel.hpp"

namespace blindpaint::train {

using nlohmann::json;
namespace fs = std::filesystem;

double TrainConfig::lr_for_epoch(std::int64_t epoch) const {
  std::int64_t acc = 0;
  for (const auto& s : schedule) {
    acc += s.epochs;
    if (epoch < acc) return s.lr;
  }
  return schedule.empty() ? 0.0 : schedule.back().lr;
}

void TrainConfig::validate() const {
  net.validate();
  if (batch_size < 1) throw Error(ErrorKind::InvalidConfig, "batch_size must be >= 1");
  if (schedule.empty()) throw Error(ErrorKind::InvalidConfig, "schedule must not be empty");
  for (const auto& s : schedule) {
    if (s.epochs <= 0 || !(s.lr >= 0.0)) {
      throw Error(ErrorKind::InvalidConfig, "schedule segments need positive epochs and lr >= 0");
    }
  }
  if (loss && *loss != net.default_loss()) {
    throw Error(ErrorKind::InvalidConfig,
                "loss '" + std::string(nn::to_string(*loss)) + "' conflicts with variant '" +
                    model::to_string(net.variant) + "'");
  }
  if (dataset_dir.empty()) throw Error(ErrorKind::InvalidConfig, "dataset_dir is required");
  if (checkpoint_dir.empty()) throw Error(ErrorKind::InvalidConfig, "checkpoint_dir is required");
  if (eval_every < 0 || checkpoint_every < 0) {
    throw Error(ErrorKind::InvalidConfig, "cadences must be >= 0");
  }
}

std::string TrainConfig::to_json_string() const {
  json j;
  j["network"] = json::parse(net.to_json_string());
  j["batch_size"] = batch_size;
  json sched = json::array();
  for (const auto& s : schedule) sched.push_back({{"epochs", s.epochs}, {"lr", s.lr}});
  j["schedule"] = sched;
  j["seed"] = seed;
  if (loss) j["loss"] = nn::to_string(*loss);
  j["dataset"] = dataset_dir;
  j["checkpoint_dir"] = checkpoint_dir;
  j["eval_every"] = eval_every;
  j["checkpoint_every"] = checkpoint_every;
  j["threads"] = threads;
  return j.dump(2);
}

TrainConfig TrainConfig::from_json_string(const std::string& text) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.is_object()) {
    throw Error(ErrorKind::InvalidConfig, "train config is not valid JSON");
  }
  TrainConfig cfg;
  if (j.contains("network")) {
    cfg.net = model::NetworkConfig::from_json_string(j.at("network").dump());
  }
  if (j.contains("batch_size")) cfg.batch_size = j.at("batch_size").get<std::int64_t>();
  if (j.contains("schedule")) {
    cfg.schedule.clear();
    for (const auto& s : j.at("schedule")) {
      cfg.schedule.push_back(
          {s.at("epochs").get<std::int64_t>(), s.at("lr").get<double>()});
    }
  }
  if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("loss")) cfg.loss = nn::loss_kind_from_string(j.at("loss").get<std::string>());
  if (j.contains("dataset")) cfg.dataset_dir = j.at("dataset").get<std::string>();
  if (j.contains("checkpoint_dir")) cfg.checkpoint_dir = j.at("checkpoint_dir").get<std::string>();
  if (j.contains("eval_every")) cfg.eval_every = j.at("eval_every").get<std::int64_t>();
  if (j.contains("checkpoint_every")) {
    cfg.checkpoint_every = j.at("checkpoint_every").get<std::int64_t>();
  }
  if (j.contains("threads")) cfg.threads = j.at("threads").get<int>();
  return cfg;
}

std::pair<Tensor, Tensor> make_batch(const synth::PatchSet& ps,
                                     const std::vector<std::int64_t>& order, std::int64_t start,
                                     std::int64_t count) {
  const std::int64_t plane = synth::kPatchSize * synth::kPatchSize;
  Tensor bx(count, 1, synth::kPatchSize, synth::kPatchSize);
  Tensor by(count, 1, synth::kPatchSize, synth::kPatchSize);
  for (std::int64_t i = 0; i < count; ++i) {
    const std::int64_t src = order[static_cast<std::size_t>(start + i)];
    std::copy(ps.x.data() + src * plane, ps.x.data() + (src + 1) * plane, bx.data() + i * plane);
    std::copy(ps.y.data() + src * plane, ps.y.data() + (src + 1) * plane, by.data() + i * plane);
  }
  return {std::move(bx), std::move(by)};
}

namespace {

std::string epoch_checkpoint_path(const std::string& dir, std::int64_t epoch) {
  char name[32];
  std::snprintf(name, sizeof(name), "epoch_%04lld.ckpt", static_cast<long long>(epoch));
  return (fs::path(dir) / name).string();
}

}  // namespace

SplitEval evaluate_patchset(const model::Network<float>& net, const synth::PatchSet& ps,
                            nn::LossKind kind, std::int64_t batch_size, bool with_ssim) {
  SplitEval out;
  if (ps.count == 0) return out;
  const std::int64_t plane = synth::kPatchSize * synth::kPatchSize;
  std::vector<metrics::ImageScore> restored, baseline;
  double loss_sum = 0.0;
  std::int64_t loss_elems = 0;

  for (std::int64_t start = 0; start < ps.count; start += batch_size) {
    const std::int64_t count = std::min(batch_size, ps.count - start);
    Tensor bx(count, 1, synth::kPatchSize, synth::kPatchSize);
    Tensor by(count, 1, synth::kPatchSize, synth::kPatchSize);
    std::copy(ps.x.data() + start * plane, ps.x.data() + (start + count) * plane, bx.data());
    std::copy(ps.y.data() + start * plane, ps.y.data() + (start + count) * plane, by.data());

    auto fwd = net.forward(bx);
    auto loss = nn::residual_loss(fwd.residual, bx, by, kind);
    loss_sum += loss.value * static_cast<double>(count * plane);
    loss_elems += count * plane;

    Tensor restored_batch = clamp(fwd.y_hat, 0.0f, 1.0f);
    for (std::int64_t i = 0; i < count; ++i) {
      Tensor yi(1, 1, synth::kPatchSize, synth::kPatchSize);
      Tensor xi(1, 1, synth::kPatchSize, synth::kPatchSize);
      Tensor ri(1, 1, synth::kPatchSize, synth::kPatchSize);
      std::copy(by.data() + i * plane, by.data() + (i + 1) * plane, yi.data());
      std::copy(bx.data() + i * plane, bx.data() + (i + 1) * plane, xi.data());
      std::copy(restored_batch.data() + i * plane, restored_batch.data() + (i + 1) * plane,
                ri.data());
      const std::string id = "patch_" + std::to_string(start + i);
      restored.push_back({id, metrics::psnr(ri, yi), with_ssim ? metrics::ssim(ri, yi) : 0.0});
      baseline.push_back({id, metrics::psnr(xi, yi), with_ssim ? metrics::ssim(xi, yi) : 0.0});
    }
  }
  out.restored = metrics::EvalRecord::from_scores(std::move(restored));
  out.baseline = metrics::EvalRecord::from_scores(std::move(baseline));
  out.mean_loss = loss_sum / static_cast<double>(loss_elems);
  return out;
}

TrainResult train(const TrainConfig& cfg, const std::string& resume_from) {
  cfg.validate();
  if (cfg.threads > 0) set_thread_count(cfg.threads);
  const nn::LossKind loss_kind = cfg.resolved_loss();

  synth::Dataset ds = synth::read_dataset(cfg.dataset_dir);
  if (ds.train.count == 0) {
    throw Error(ErrorKind::InvalidConfig, "dataset has no training patches");
  }
  fs::create_directories(cfg.checkpoint_dir);

  model::Network<float> net = [&] {
    Rng init_rng(cfg.seed);
    return model::Network<float>::build(cfg.net, init_rng);
  }();
  nn::AdamState<float> adam;
  auto params = net.params();

  std::int64_t start_epoch = 0;
  std::int64_t global_step = 0;
  if (!resume_from.empty()) {
    CheckpointMeta meta = load_checkpoint(resume_from, net, &adam);
    if (meta.loss != loss_kind) {
      throw Error(ErrorKind::IncompatibleCheckpoint, "checkpoint was trained with a different loss");
    }
    start_epoch = meta.epoch;
    global_step = meta.step;
  } else {
    adam.init(params);
  }

  const std::int64_t total_epochs = cfg.total_epochs();
  metrics::CurveLog log((fs::path(cfg.checkpoint_dir) / "train_log.csv").string(),
                        /*append=*/!resume_from.empty());

  TrainResult result;
  result.log_path = log.path();
  const std::int64_t n = ds.train.count;
  std::vector<std::int64_t> order(static_cast<std::size_t>(n));

  for (std::int64_t epoch = start_epoch; epoch < total_epochs; ++epoch) {
    const double lr = cfg.lr_for_epoch(epoch);
    for (std::int64_t i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
    Rng shuffle_rng(derive_seed(cfg.seed, 0xE70C0000ULL + static_cast<std::uint64_t>(epoch)));
    for (std::int64_t i = n - 1; i > 0; --i) {
      const std::int64_t j = shuffle_rng.uniform_int(0, i);
      std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
    }

    double loss_sum = 0.0;
    std::int64_t seen = 0;
    typename model::Network<float>::Cache cache;
    for (std::int64_t start = 0; start < n; start += cfg.batch_size) {
      const std::int64_t count = std::min(cfg.batch_size, n - start);
      auto [bx, by] = make_batch(ds.train, order, start, count);
      auto fwd = net.forward(bx, &cache);
      auto loss = nn::residual_loss(fwd.residual, bx, by, loss_kind);
      if (!std::isfinite(loss.value)) {
        std::cerr << "non-finite loss at epoch " << epoch << " step " << global_step
                  << "; batch indices:";
        for (std::int64_t i = 0; i < count; ++i) {
          std::cerr << ' ' << order[static_cast<std::size_t>(start + i)];
        }
        std::cerr << '\n';
        throw Error(ErrorKind::NonFiniteLoss,
                    "training diverged at step " + std::to_string(global_step));
      }
      net.zero_grad();
      net.backward(loss.grad_residual, cache);
      nn::adam_step(adam, params, lr);
      loss_sum += loss.value * static_cast<double>(count);
      seen += count;
      global_step += 1;
    }

    const double train_loss = loss_sum / static_cast<double>(seen);
    result.final_train_loss = train_loss;
    log.log(global_step, epoch + 1, "train", train_loss);

    const bool last_epoch = epoch + 1 == total_epochs;
    if (ds.test.count > 0 && cfg.eval_every > 0 &&
        ((epoch + 1) % cfg.eval_every == 0 || last_epoch)) {
      SplitEval ev = evaluate_patchset(net, ds.test, loss_kind, cfg.batch_size, false);
      log.log(global_step, epoch + 1, "test", ev.mean_loss, ev.restored.mean_psnr);
      result.final_test_psnr = ev.restored.mean_psnr;
    }

    if (cfg.checkpoint_every > 0 && ((epoch + 1) % cfg.checkpoint_every == 0 || last_epoch)) {
      CheckpointMeta meta;
      meta.config = cfg.net;
      meta.step = global_step;
      meta.epoch = epoch + 1;
      meta.loss = loss_kind;
      result.final_checkpoint = epoch_checkpoint_path(cfg.checkpoint_dir, epoch + 1);
      save_checkpoint(result.final_checkpoint, net, &adam, meta);
    }
    result.epochs_run = epoch + 1 - start_epoch;
    result.steps = global_step;
  }

  // Stable name for the finished model.
  if (!result.final_checkpoint.empty()) {
    const std::string final_path = (fs::path(cfg.checkpoint_dir) / "final.ckpt").string();
    fs::copy_file(result.final_checkpoint, final_path, fs::copy_options::overwrite_existing);
  }
  return result;
}

}  // namespace blindpaint::train
