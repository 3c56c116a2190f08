// Training loop: seeded per-epoch shuffles, Adam updates, per-epoch CSV
// logging and checkpoints, and bit-exact resume. In deterministic mode
// (seed, config, dataset bytes) fully determine the checkpoint bytes.
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "blindpaint/checkpoint.hpp"
#include "blindpaint/loss.hpp"
#include "blindpaint/metrics.hpp"
#include "blindpaint/network.hpp"
#include "blindpaint/synth.hpp"

namespace blindpaint::train {

struct ScheduleSegment {
  std::int64_t epochs = 0;
  double lr = 0.0;
};

struct TrainConfig {
  model::NetworkConfig net;
  std::int64_t batch_size = 16;
  // Paper-shaped default: 50 epochs at 1e-3, then 10 at 1e-4.
  std::vector<ScheduleSegment> schedule{{50, 1e-3}, {10, 1e-4}};
  std::uint64_t seed = 0;
  std::optional<nn::LossKind> loss;  // defaults to the variant's loss
  std::string dataset_dir;
  std::string checkpoint_dir;
  std::int64_t eval_every = 1;        // epochs between test evaluations; 0 = off
  std::int64_t checkpoint_every = 1;  // epochs between checkpoints; final always written
  int threads = 0;                    // 0 = hardware default

  nn::LossKind resolved_loss() const { return loss.value_or(net.default_loss()); }
  std::int64_t total_epochs() const {
    std::int64_t total = 0;
    for (const auto& s : schedule) total += s.epochs;
    return total;
  }
  double lr_for_epoch(std::int64_t epoch) const;
  void validate() const;

  std::string to_json_string() const;
  static TrainConfig from_json_string(const std::string& text);
};

struct TrainResult {
  std::int64_t epochs_run = 0;
  std::int64_t steps = 0;
  double final_train_loss = 0.0;
  std::optional<double> final_test_psnr;
  std::string final_checkpoint;
  std::string log_path;
};

// Trains per the schedule; resume_from continues an interrupted run with an
// identical trajectory (checkpoint bytes match an uninterrupted run).
TrainResult train(const TrainConfig& cfg, const std::string& resume_from = "");

// Gathers patches perm[start, start+count) into contiguous batch tensors.
std::pair<Tensor, Tensor> make_batch(const synth::PatchSet& ps,
                                     const std::vector<std::int64_t>& order, std::int64_t start,
                                     std::int64_t count);

// ---- Evaluation -----------------------------------------------------------------

struct SplitEval {
  metrics::EvalRecord restored;  // clamp(x + residual) vs y
  metrics::EvalRecord baseline;  // corrupted input x vs y
  double mean_loss = 0.0;        // residual loss, mean per element
};

SplitEval evaluate_patchset(const model::Network<float>& net, const synth::PatchSet& ps,
                            nn::LossKind kind, std::int64_t batch_size, bool with_ssim);

}  // namespace blindpaint::train
