#include "blindpaint/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <sstream>

namespace blindpaint::metrics {

double psnr(const DTensor& a, const DTensor& b, double max_val) {
  if (!a.same_shape(b)) {
    throw Error(ErrorKind::ShapeMismatch, "psnr: " + a.shape().str() + " vs " + b.shape().str());
  }
  double se = 0.0;
  for (std::int64_t i = 0; i < a.numel(); ++i) {
    const double d = a[i] - b[i];
    se += d * d;
  }
  const double mse = se / static_cast<double>(a.numel());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(max_val * max_val / mse);
}

double psnr(const Tensor& a, const Tensor& b, double max_val) {
  return psnr(to_double(a), to_double(b), max_val);
}

SsimParams ssim_params() { return SsimParams{}; }

namespace {

// 11x11 Gaussian window, sigma 1.5, normalized to sum 1.
const std::vector<double>& gaussian_window() {
  static const std::vector<double> win = [] {
    const SsimParams p = ssim_params();
    std::vector<double> w(static_cast<std::size_t>(p.window * p.window));
    const int half = p.window / 2;
    double total = 0.0;
    for (int y = 0; y < p.window; ++y) {
      for (int x = 0; x < p.window; ++x) {
        const double dy = y - half;
        const double dx = x - half;
        const double v = std::exp(-(dx * dx + dy * dy) / (2.0 * p.sigma * p.sigma));
        w[static_cast<std::size_t>(y * p.window + x)] = v;
        total += v;
      }
    }
    for (auto& v : w) v /= total;
    return w;
  }();
  return win;
}

}  // namespace

double ssim(const DTensor& a, const DTensor& b) {
  if (!a.same_shape(b)) {
    throw Error(ErrorKind::ShapeMismatch, "ssim: " + a.shape().str() + " vs " + b.shape().str());
  }
  if (a.n() != 1 || a.c() != 1) {
    throw Error(ErrorKind::ShapeMismatch, "ssim expects a single (1,1,h,w) image");
  }
  const SsimParams p = ssim_params();
  if (a.h() < p.window || a.w() < p.window) {
    throw Error(ErrorKind::ImageTooSmall, "ssim needs at least 11x11, got " + a.shape().str());
  }
  const double c1 = (p.k1 * p.dynamic_range) * (p.k1 * p.dynamic_range);
  const double c2 = (p.k2 * p.dynamic_range) * (p.k2 * p.dynamic_range);
  const std::vector<double>& win = gaussian_window();
  const std::int64_t h = a.h(), w = a.w();
  const std::int64_t oh = h - p.window + 1, ow = w - p.window + 1;

  double total = 0.0;
  for (std::int64_t i = 0; i < oh; ++i) {
    for (std::int64_t j = 0; j < ow; ++j) {
      double mu_a = 0.0, mu_b = 0.0, aa = 0.0, bb = 0.0, ab = 0.0;
      for (int y = 0; y < p.window; ++y) {
        const double* ra = a.data() + (i + y) * w + j;
        const double* rb = b.data() + (i + y) * w + j;
        const double* rw = win.data() + y * p.window;
        for (int x = 0; x < p.window; ++x) {
          const double va = ra[x], vb = rb[x], wv = rw[x];
          mu_a += wv * va;
          mu_b += wv * vb;
          aa += wv * va * va;
          bb += wv * vb * vb;
          ab += wv * va * vb;
        }
      }
      const double var_a = aa - mu_a * mu_a;
      const double var_b = bb - mu_b * mu_b;
      const double cov = ab - mu_a * mu_b;
      const double num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2);
      const double den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2);
      total += num / den;
    }
  }
  return total / static_cast<double>(oh * ow);
}

double ssim(const Tensor& a, const Tensor& b) { return ssim(to_double(a), to_double(b)); }

ResidualImage residual_image(const Tensor& y_hat, const Tensor& x) {
  if (!y_hat.same_shape(x)) {
    throw Error(ErrorKind::ShapeMismatch,
                "residual_image: " + y_hat.shape().str() + " vs " + x.shape().str());
  }
  ResidualImage out;
  Tensor res = sub(y_hat, x);
  float peak = 0.0f;
  for (std::int64_t i = 0; i < res.numel(); ++i) peak = std::max(peak, std::abs(res[i]));
  out.scale = peak > 0.0f ? static_cast<double>(peak) : 1.0;
  out.image = Tensor(res.shape());
  const float inv = static_cast<float>(0.5 / out.scale);
  for (std::int64_t i = 0; i < res.numel(); ++i) {
    out.image[i] = 0.5f + res[i] * inv;
  }
  return out;
}

EvalRecord EvalRecord::from_scores(std::vector<ImageScore> scores) {
  EvalRecord rec;
  rec.per_image = std::move(scores);
  double psnr_sum = 0.0, ssim_sum = 0.0;
  std::int64_t psnr_n = 0;
  for (const auto& s : rec.per_image) {
    if (std::isinf(s.psnr)) {
      rec.psnr_inf_count += 1;
    } else {
      psnr_sum += s.psnr;
      psnr_n += 1;
    }
    ssim_sum += s.ssim;
  }
  rec.mean_psnr = psnr_n > 0 ? psnr_sum / static_cast<double>(psnr_n) : 0.0;
  rec.mean_ssim =
      rec.per_image.empty() ? 0.0 : ssim_sum / static_cast<double>(rec.per_image.size());
  return rec;
}

// ---- Curve log ------------------------------------------------------------------

CurveLog::CurveLog(const std::string& path, bool append) : path_(path) {
  const bool exists = append && std::filesystem::exists(path);
  out_.open(path, exists ? std::ios::app : std::ios::trunc);
  if (!out_) throw Error(ErrorKind::IoError, "cannot open curve log " + path);
  if (!exists) {
    out_ << "step,epoch,split,loss,psnr\n";
  } else {
    for (const auto& pt : read_curve_log(path)) last_step_ = std::max(last_step_, pt.step);
  }
}

void CurveLog::log(std::int64_t step, std::int64_t epoch, const std::string& split, double loss,
                   std::optional<double> psnr) {
  if (step < last_step_) {
    throw Error(ErrorKind::NonMonotoneStep, "step " + std::to_string(step) + " after " +
                                                std::to_string(last_step_));
  }
  last_step_ = step;
  out_ << step << ',' << epoch << ',' << split << ',';
  out_.precision(17);
  out_ << loss << ',';
  if (psnr) out_ << *psnr;
  out_ << '\n';
  out_.flush();
}

void CurveLog::flush() { out_.flush(); }

std::vector<CurvePoint> read_curve_log(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::IoError, "cannot read curve log " + path);
  std::vector<CurvePoint> out;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (first) {
      first = false;
      if (line.rfind("step,", 0) == 0) continue;
    }
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string field;
    CurvePoint pt;
    std::getline(ss, field, ',');
    pt.step = std::stoll(field);
    std::getline(ss, field, ',');
    pt.epoch = std::stoll(field);
    std::getline(ss, pt.split, ',');
    std::getline(ss, field, ',');
    pt.loss = std::stod(field);
    if (std::getline(ss, field, ',') && !field.empty()) pt.psnr = std::stod(field);
    out.push_back(std::move(pt));
  }
  return out;
}

}  // namespace blindpaint::metrics
