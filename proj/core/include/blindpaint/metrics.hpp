// PSNR and SSIM as reported in the evaluation tables, residual visualization,
// and CSV loss-curve logging. All metric math runs in double regardless of
// the model precision.
#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "blindpaint/common.hpp"
#include "blindpaint/tensor.hpp"

namespace blindpaint::metrics {

// 10*log10(max_val^2 / MSE). Identical images return +infinity; aggregation
// excludes those with a warning count.
double psnr(const DTensor& a, const DTensor& b, double max_val = 1.0);
double psnr(const Tensor& a, const Tensor& b, double max_val = 1.0);

// Mean SSIM over all valid 11x11 windows: Gaussian weights sigma 1.5,
// K1 = 0.01, K2 = 0.03, L = 1. Inputs must be single-channel and at least
// 11x11. Color images are evaluated per channel by the caller and averaged.
double ssim(const DTensor& a, const DTensor& b);
double ssim(const Tensor& a, const Tensor& b);

struct SsimParams {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 1.0;
};
SsimParams ssim_params();

// (y_hat - x) affinely mapped to [0,1] with mid-gray 0.5 == zero residual:
// pixel = 0.5 + residual / (2*scale). scale is max |residual| (1 if all zero).
struct ResidualImage {
  Tensor image;
  double scale = 1.0;
};
ResidualImage residual_image(const Tensor& y_hat, const Tensor& x);

// ---- Evaluation records ----------------------------------------------------

struct ImageScore {
  std::string id;
  double psnr = 0.0;  // +inf when MSE == 0
  double ssim = 0.0;
};

struct EvalRecord {
  std::vector<ImageScore> per_image;
  double mean_psnr = 0.0;  // arithmetic mean excluding +inf entries
  double mean_ssim = 0.0;
  std::int64_t psnr_inf_count = 0;

  static EvalRecord from_scores(std::vector<ImageScore> scores);
};

// ---- Loss curve logging -------------------------------------------------------

struct CurvePoint {
  std::int64_t step = 0;
  std::int64_t epoch = 0;
  std::string split;  // "train" or "test"
  double loss = 0.0;
  std::optional<double> psnr;
};

// Appends CSV rows "step,epoch,split,loss,psnr" with a fixed header. Steps
// must be non-decreasing.
class CurveLog {
 public:
  explicit CurveLog(const std::string& path, bool append = false);

  void log(std::int64_t step, std::int64_t epoch, const std::string& split, double loss,
           std::optional<double> psnr = std::nullopt);
  void flush();
  const std::string& path() const { return path_; }

 private:
  std::string path_;
  std::ofstream out_;
  std::int64_t last_step_ = -1;
};

std::vector<CurvePoint> read_curve_log(const std::string& path);

}  // namespace blindpaint::metrics
