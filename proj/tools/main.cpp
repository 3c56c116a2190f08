// blindpaint CLI: dataset synthesis, training, inference, evaluation,
// gradient checking, the ablation matrix driver, inference benchmarking, and
// loss-curve plotting.
//
// Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "blindpaint/checkpoint.hpp"
#include "blindpaint/gradcheck.hpp"
#include "blindpaint/image_io.hpp"
#include "blindpaint/metrics.hpp"
#include "blindpaint/network.hpp"
#include "blindpaint/parallel.hpp"
#include "blindpaint/synth.hpp"
#include "blindpaint/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace blindpaint;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumerical = 3;

int exit_code_for(const Error& e) {
  switch (e.kind()) {
    case ErrorKind::InvalidConfig:
    case ErrorKind::InvalidArgument:
      return kExitUsage;
    case ErrorKind::NonFiniteGradient:
    case ErrorKind::NonFiniteLoss:
      return kExitNumerical;
    default:
      return kExitData;
  }
}

json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::IoError, "cannot read config " + path);
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw Error(ErrorKind::InvalidConfig, path + " is not valid JSON");
  return j;
}

double now_seconds() {
  return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

std::string psnr_ssim_cell(double psnr, double ssim) {
  char buf[64];
  if (std::isinf(psnr)) {
    std::snprintf(buf, sizeof(buf), "inf/%.4f", ssim);
  } else {
    std::snprintf(buf, sizeof(buf), "%.4f/%.4f", psnr, ssim);
  }
  return buf;
}

// ---- synth ---------------------------------------------------------------------

struct SynthOptions {
  std::string config_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<std::int64_t> count;
  int threads = 0;
};

int cmd_synth(const SynthOptions& opt) {
  if (opt.threads > 0) set_thread_count(opt.threads);
  json cfg = load_json_file(opt.config_path);

  const std::uint64_t seed = opt.seed.value_or(cfg.value("seed", 0ULL));
  const std::int64_t count = opt.count.value_or(cfg.value("count", std::int64_t{2200}));
  const double train_fraction = cfg.value("train_fraction", 10.0 / 11.0);
  std::string out = !opt.out_dir.empty() ? opt.out_dir : cfg.value("out", std::string{});
  if (out.empty()) throw Error(ErrorKind::InvalidConfig, "synth needs an output directory");

  synth::CorruptionSpec spec;
  if (cfg.contains("spec")) spec = synth::CorruptionSpec::from_json_string(cfg.at("spec").dump());

  std::vector<synth::Augment> augments;
  if (cfg.contains("augments")) {
    for (const auto& a : cfg.at("augments")) {
      augments.push_back(synth::augment_from_string(a.get<std::string>()));
    }
  }

  if (!cfg.contains("sources") || !cfg.at("sources").is_array() || cfg.at("sources").empty()) {
    throw Error(ErrorKind::InsufficientSources, "synth config needs a non-empty sources list");
  }
  std::vector<Tensor> sources;
  for (const auto& s : cfg.at("sources")) {
    io::Image img = io::read_image(s.get<std::string>());
    if (img.c != 1) {
      // grayscale conversion: plain channel mean
      io::Image gray;
      gray.h = img.h;
      gray.w = img.w;
      gray.c = 1;
      gray.data.assign(static_cast<std::size_t>(img.h * img.w), 0.0f);
      for (std::int64_t c = 0; c < img.c; ++c) {
        for (std::int64_t i = 0; i < img.h * img.w; ++i) {
          gray.data[i] += img.data[c * img.h * img.w + i] / static_cast<float>(img.c);
        }
      }
      img = std::move(gray);
    }
    sources.push_back(io::image_to_tensor(img));
  }

  Rng rng(seed);
  synth::Dataset ds = synth::build_dataset(sources, spec, count, train_fraction, rng, augments);
  synth::write_dataset(out, ds);

  std::cout << "dataset written to " << out << "\n"
            << "  train patches: " << ds.train.count << "\n"
            << "  test patches:  " << ds.test.count << "\n"
            << "  glyph pools:   " << ds.info.train_glyph_pool.size() << " train / "
            << ds.info.test_glyph_pool.size() << " test (disjoint)\n"
            << "  sources:       " << ds.info.train_sources.size() << " train / "
            << ds.info.test_sources.size() << " test\n"
            << "  seed:          " << seed << "\n";
  return kExitOk;
}

// ---- train ---------------------------------------------------------------------

struct TrainOptions {
  std::string config_path;
  std::string resume;
  std::optional<std::uint64_t> seed;
  std::string dataset_dir;
  std::string checkpoint_dir;
  int threads = 0;
};

int cmd_train(const TrainOptions& opt) {
  std::ifstream in(opt.config_path);
  if (!in) throw Error(ErrorKind::IoError, "cannot read config " + opt.config_path);
  std::string text((std::istreambuf_iterator<char>(in)), {});
  auto cfg = train::TrainConfig::from_json_string(text);
  if (opt.seed) cfg.seed = *opt.seed;
  if (!opt.dataset_dir.empty()) cfg.dataset_dir = opt.dataset_dir;
  if (!opt.checkpoint_dir.empty()) cfg.checkpoint_dir = opt.checkpoint_dir;
  if (opt.threads > 0) cfg.threads = opt.threads;
  cfg.validate();

  const double t0 = now_seconds();
  auto result = train::train(cfg, opt.resume);
  const double elapsed = now_seconds() - t0;

  std::cout << "trained " << result.epochs_run << " epoch(s), " << result.steps
            << " total steps in " << std::fixed << elapsed << " s\n"
            << "final train loss: " << result.final_train_loss << "\n";
  if (result.final_test_psnr) {
    std::cout << "final test psnr:  " << *result.final_test_psnr << " dB\n";
  }
  std::cout << "checkpoint: " << result.final_checkpoint << "\n"
            << "loss log:   " << result.log_path << "\n";
  return kExitOk;
}

// ---- infer ---------------------------------------------------------------------

struct InferOptions {
  std::string checkpoint;
  std::vector<std::string> inputs;
  std::string out_dir;
  bool write_residual = false;
  int threads = 0;
};

Tensor restore_plane(const model::Network<float>& net, const Tensor& plane, Tensor* residual) {
  const std::int64_t h = plane.h(), w = plane.w();
  Tensor padded = io::reflect_pad_to_multiple(plane, 8);
  auto fwd = net.forward(padded);
  if (residual) *residual = io::crop_to(fwd.residual, h, w);
  return clamp(io::crop_to(fwd.y_hat, h, w), 0.0f, 1.0f);
}

int cmd_infer(const InferOptions& opt) {
  if (opt.threads > 0) set_thread_count(opt.threads);
  auto loaded = train::open_checkpoint(opt.checkpoint);
  const auto& net = loaded.network;

  for (const auto& input : opt.inputs) {
    io::Image img = io::read_image(input);
    const fs::path in_path(input);
    fs::path out_base = opt.out_dir.empty() ? in_path.parent_path() : fs::path(opt.out_dir);
    if (!opt.out_dir.empty()) fs::create_directories(out_base);
    const std::string stem = in_path.stem().string();
    const std::string ext = in_path.extension().string();

    const double t0 = now_seconds();
    io::Image restored = img;
    Tensor residual_all(1, img.c, img.h, img.w);
    // color images are processed per channel
    for (std::int64_t c = 0; c < img.c; ++c) {
      Tensor plane = io::channel_plane(img, c);
      Tensor res_plane;
      Tensor restored_plane = restore_plane(net, plane, &res_plane);
      std::copy(restored_plane.data(), restored_plane.data() + img.h * img.w,
                restored.data.data() + c * img.h * img.w);
      std::copy(res_plane.data(), res_plane.data() + img.h * img.w,
                residual_all.data() + c * img.h * img.w);
    }
    const double elapsed = now_seconds() - t0;

    const std::string out_path = (out_base / (stem + "_restored" + ext)).string();
    io::write_image(out_path, restored);
    std::cout << input << " -> " << out_path << "  (" << img.w << "x" << img.h << ", " << img.c
              << " channel(s), " << std::fixed << elapsed << " s)\n";

    if (opt.write_residual) {
      Tensor x_all = io::image_to_tensor(img);
      Tensor y_hat_all = add(x_all, residual_all);
      auto vis = metrics::residual_image(y_hat_all, x_all);
      const std::string res_path = (out_base / (stem + "_residual" + ext)).string();
      io::write_image(res_path, io::tensor_to_image(vis.image));
      std::cout << "  residual (mid-gray = 0, scale " << vis.scale << ") -> " << res_path
                << "\n";
    }
  }
  return kExitOk;
}

// ---- eval ----------------------------------------------------------------------

struct EvalOptions {
  std::string checkpoint;
  std::string dataset_dir;
  std::string split = "test";
  std::string restored_dir;
  std::string clean_dir;
  std::string report_path;
  std::int64_t batch = 16;
  int threads = 0;
};

json record_to_json(const metrics::EvalRecord& rec, bool per_image) {
  json j;
  j["mean_psnr"] = rec.mean_psnr;
  j["mean_ssim"] = rec.mean_ssim;
  j["psnr_inf_count"] = rec.psnr_inf_count;
  j["count"] = rec.per_image.size();
  if (per_image) {
    json arr = json::array();
    for (const auto& s : rec.per_image) {
      arr.push_back({{"id", s.id},
                     {"psnr", std::isinf(s.psnr) ? json("inf") : json(s.psnr)},
                     {"ssim", s.ssim}});
    }
    j["per_image"] = arr;
  }
  return j;
}

int cmd_eval(const EvalOptions& opt) {
  if (opt.threads > 0) set_thread_count(opt.threads);
  json report;
  report["ssim_params"] = {{"window", 11}, {"sigma", 1.5}, {"k1", 0.01}, {"k2", 0.03}, {"dynamic_range", 1.0}};
  report["metric_precision"] = "float64";

  if (!opt.dataset_dir.empty()) {
    if (opt.checkpoint.empty()) {
      throw Error(ErrorKind::InvalidConfig, "dataset evaluation needs --checkpoint");
    }
    auto loaded = train::open_checkpoint(opt.checkpoint);
    synth::Dataset ds = synth::read_dataset(opt.dataset_dir);
    const synth::PatchSet& ps = opt.split == "train" ? ds.train : ds.test;
    if (ps.count == 0) {
      throw Error(ErrorKind::InvalidConfig, "split '" + opt.split + "' is empty");
    }
    auto ev = train::evaluate_patchset(loaded.network, ps, loaded.meta.loss, opt.batch, true);

    report["dataset"] = opt.dataset_dir;
    report["split"] = opt.split;
    report["variant"] = model::to_string(loaded.network.config().variant);
    report["loss"] = nn::to_string(loaded.meta.loss);
    report["restored"] = record_to_json(ev.restored, true);
    report["baseline"] = record_to_json(ev.baseline, true);
    report["mean_loss"] = ev.mean_loss;

    std::printf("%-28s %20s %20s\n", "", "PSNR/SSIM", "baseline PSNR/SSIM");
    std::printf("%-28s %20s %20s\n",
                model::to_string(loaded.network.config().variant).c_str(),
                psnr_ssim_cell(ev.restored.mean_psnr, ev.restored.mean_ssim).c_str(),
                psnr_ssim_cell(ev.baseline.mean_psnr, ev.baseline.mean_ssim).c_str());
    if (ev.restored.psnr_inf_count > 0 || ev.baseline.psnr_inf_count > 0) {
      std::cout << "warning: " << ev.restored.psnr_inf_count + ev.baseline.psnr_inf_count
                << " identical image pair(s) excluded from the PSNR mean\n";
    }
  } else {
    if (opt.restored_dir.empty() || opt.clean_dir.empty()) {
      throw Error(ErrorKind::InvalidConfig,
                  "eval needs either --dataset or both --restored-dir and --clean-dir");
    }
    std::vector<fs::path> restored_files;
    for (const auto& e : fs::directory_iterator(opt.restored_dir)) {
      if (e.is_regular_file()) restored_files.push_back(e.path());
    }
    std::sort(restored_files.begin(), restored_files.end());
    if (restored_files.empty()) {
      throw Error(ErrorKind::PairingMismatch, "no files in " + opt.restored_dir);
    }
    std::vector<metrics::ImageScore> scores;
    for (const auto& rf : restored_files) {
      const fs::path cf = fs::path(opt.clean_dir) / rf.filename();
      if (!fs::exists(cf)) {
        throw Error(ErrorKind::PairingMismatch, "no counterpart for " + rf.filename().string() +
                                                    " in " + opt.clean_dir);
      }
      io::Image a = io::read_image(rf.string());
      io::Image b = io::read_image(cf.string());
      if (a.h != b.h || a.w != b.w || a.c != b.c) {
        throw Error(ErrorKind::PairingMismatch, rf.filename().string() + " shapes differ");
      }
      // color images: evaluate channels independently, then average
      double psnr_sum = 0.0, ssim_sum = 0.0;
      bool any_inf = false;
      for (std::int64_t c = 0; c < a.c; ++c) {
        const double p = metrics::psnr(io::channel_plane(a, c), io::channel_plane(b, c));
        if (std::isinf(p)) any_inf = true;
        psnr_sum += p;
        ssim_sum += metrics::ssim(io::channel_plane(a, c), io::channel_plane(b, c));
      }
      scores.push_back({rf.filename().string(),
                        any_inf ? std::numeric_limits<double>::infinity()
                                : psnr_sum / static_cast<double>(a.c),
                        ssim_sum / static_cast<double>(a.c)});
    }
    auto rec = metrics::EvalRecord::from_scores(std::move(scores));
    report["pairs"] = {{"restored", opt.restored_dir}, {"clean", opt.clean_dir}};
    report["restored"] = record_to_json(rec, true);
    std::printf("%zu pair(s): %s\n", rec.per_image.size(),
                psnr_ssim_cell(rec.mean_psnr, rec.mean_ssim).c_str());
    if (rec.psnr_inf_count > 0) {
      std::cout << "warning: " << rec.psnr_inf_count
                << " identical pair(s) excluded from the PSNR mean\n";
    }
  }

  if (!opt.report_path.empty()) {
    std::ofstream os(opt.report_path, std::ios::trunc);
    if (!os) throw Error(ErrorKind::IoError, "cannot write report " + opt.report_path);
    os << report.dump(2) << "\n";
    std::cout << "report: " << opt.report_path << "\n";
  }
  return kExitOk;
}

// ---- gradcheck -----------------------------------------------------------------

int cmd_gradcheck(const std::string& scope, std::uint64_t seed, int threads) {
  if (threads > 0) set_thread_count(threads);
  std::vector<gradcheck::CheckRow> rows;
  if (scope == "layers" || scope == "all") {
    auto layer_rows = gradcheck::check_layers(seed);
    rows.insert(rows.end(), layer_rows.begin(), layer_rows.end());
  }
  if (scope == "full" || scope == "all") {
    rows.push_back(gradcheck::check_full_network(seed));
  }
  if (rows.empty()) {
    throw Error(ErrorKind::InvalidArgument, "scope must be layers, full, or all");
  }

  bool all_pass = true;
  std::printf("%-44s %14s %8s  %s\n", "unit", "max_rel_err", "checks", "result");
  for (const auto& row : rows) {
    std::printf("%-44s %14.3e %8lld  %s\n", row.unit.c_str(), row.max_rel_err,
                static_cast<long long>(row.checks), row.pass ? "pass" : "FAIL");
    all_pass = all_pass && row.pass;
  }
  std::printf("tolerance: max relative error < %.0e against 64-bit central differences "
              "(h = %.0e)\n",
              gradcheck::kTolerance, gradcheck::kStep);
  return all_pass ? kExitOk : kExitNumerical;
}

// ---- ablate --------------------------------------------------------------------

struct AblateOptions {
  std::string config_path;
  int threads = 0;
};

int cmd_ablate(const AblateOptions& opt) {
  json cfg = load_json_file(opt.config_path);
  const std::string dataset_dir = cfg.at("dataset").get<std::string>();
  const std::string out_dir = cfg.at("out_dir").get<std::string>();
  const std::uint64_t seed = cfg.value("seed", 0ULL);
  const std::int64_t base_width = cfg.value("base_width", std::int64_t{16});
  const std::int64_t batch_size = cfg.value("batch_size", std::int64_t{16});

  std::vector<train::ScheduleSegment> schedule{{8, 1e-3}, {2, 1e-4}};
  if (cfg.contains("schedule")) {
    schedule.clear();
    for (const auto& s : cfg.at("schedule")) {
      schedule.push_back({s.at("epochs").get<std::int64_t>(), s.at("lr").get<double>()});
    }
  }

  std::vector<std::string> variants = {"full", "no_netd", "plain_netd64", "no_gp", "l2_loss"};
  if (cfg.contains("variants")) {
    variants = cfg.at("variants").get<std::vector<std::string>>();
  }

  fs::create_directories(out_dir);
  json rows = json::array();
  std::printf("%-14s %6s %12s %22s %22s  %s\n", "variant", "loss", "params", "PSNR/SSIM",
              "baseline PSNR/SSIM", "status");

  for (const auto& vname : variants) {
    json row;
    row["variant"] = vname;
    try {
      train::TrainConfig tc;
      tc.net.variant = model::variant_from_string(vname);
      tc.net.base_width = base_width;
      tc.batch_size = batch_size;
      tc.schedule = schedule;
      tc.seed = seed;  // shared seed across variants
      tc.dataset_dir = dataset_dir;
      tc.checkpoint_dir = (fs::path(out_dir) / vname).string();
      tc.eval_every = 0;
      tc.checkpoint_every = 0;  // only the final checkpoint
      tc.threads = opt.threads;
      tc.validate();

      const double t0 = now_seconds();
      auto result = train::train(tc);
      const double train_time = now_seconds() - t0;

      auto loaded = train::open_checkpoint(result.final_checkpoint);
      synth::Dataset ds = synth::read_dataset(dataset_dir);
      auto ev = train::evaluate_patchset(loaded.network, ds.test, loaded.meta.loss, batch_size,
                                         true);

      row["loss"] = nn::to_string(tc.resolved_loss());
      row["parameters"] = loaded.network.parameter_count();
      row["psnr"] = ev.restored.mean_psnr;
      row["ssim"] = ev.restored.mean_ssim;
      row["baseline_psnr"] = ev.baseline.mean_psnr;
      row["baseline_ssim"] = ev.baseline.mean_ssim;
      row["final_train_loss"] = result.final_train_loss;
      row["train_seconds"] = train_time;
      row["checkpoint"] = result.final_checkpoint;
      row["status"] = "ok";

      std::printf("%-14s %6s %12lld %22s %22s  ok\n", vname.c_str(),
                  nn::to_string(tc.resolved_loss()),
                  static_cast<long long>(loaded.network.parameter_count()),
                  psnr_ssim_cell(ev.restored.mean_psnr, ev.restored.mean_ssim).c_str(),
                  psnr_ssim_cell(ev.baseline.mean_psnr, ev.baseline.mean_ssim).c_str());
    } catch (const std::exception& e) {
      // one failed variant must not take down the matrix
      row["status"] = std::string("failed: ") + e.what();
      std::printf("%-14s %6s %12s %22s %22s  FAILED: %s\n", vname.c_str(), "-", "-", "-", "-",
                  e.what());
    }
    rows.push_back(std::move(row));
  }

  json report;
  report["dataset"] = dataset_dir;
  report["seed"] = seed;
  report["base_width"] = base_width;
  report["rows"] = rows;
  const std::string report_path = (fs::path(out_dir) / "ablation_report.json").string();
  std::ofstream os(report_path, std::ios::trunc);
  os << report.dump(2) << "\n";
  std::cout << "report: " << report_path << "\n";
  return kExitOk;
}

// ---- bench ---------------------------------------------------------------------

struct BenchOptions {
  std::int64_t base_width = 64;
  std::int64_t height = 512;
  std::int64_t width = 512;
  int repeat = 1;
  std::uint64_t seed = 1;
  std::string checkpoint;
};

int cmd_bench(const BenchOptions& opt) {
  model::NetworkConfig cfg;
  cfg.variant = model::Variant::Full;
  cfg.base_width = opt.base_width;

  std::optional<model::Network<float>> net;
  if (!opt.checkpoint.empty()) {
    auto loaded = train::open_checkpoint(opt.checkpoint);
    net.emplace(std::move(loaded.network));
  } else {
    Rng rng(opt.seed);
    net.emplace(model::Network<float>::build(cfg, rng));
  }

  Rng input_rng(opt.seed + 1);
  Tensor x = rng_fill<float>(input_rng, UniformDist{0.0, 1.0}, {1, 1, opt.height, opt.width});

  auto run_timed = [&](int threads) {
    set_thread_count(threads);
    double best = 1e300;
    Tensor out;
    for (int r = 0; r < opt.repeat; ++r) {
      const double t0 = now_seconds();
      auto fwd = net->forward(x);
      best = std::min(best, now_seconds() - t0);
      out = std::move(fwd.y_hat);
    }
    return std::make_pair(best, std::move(out));
  };

  auto [t_single, out_single] = run_timed(1);
  set_thread_count(0);
  const int hw_threads = thread_count();
  auto [t_multi, out_multi] = run_timed(hw_threads);
  set_thread_count(0);

  const bool identical = bit_equal(out_single, out_multi);
  std::printf("forward %lldx%lld grayscale, base_width %lld (%lld parameters)\n",
              static_cast<long long>(opt.width), static_cast<long long>(opt.height),
              static_cast<long long>(opt.base_width),
              static_cast<long long>(net->parameter_count()));
  std::printf("  single thread : %8.3f s\n", t_single);
  std::printf("  %2d threads    : %8.3f s  (speedup %.2fx)\n", hw_threads, t_multi,
              t_single / t_multi);
  std::printf("  outputs bit-identical across thread counts: %s\n", identical ? "yes" : "NO");
  return identical ? kExitOk : kExitNumerical;
}

// ---- plot ----------------------------------------------------------------------

struct PlotOptions {
  std::string log_path;
  std::string out_path;
  std::string metric = "loss";
};

int cmd_plot(const PlotOptions& opt) {
  auto pts = metrics::read_curve_log(opt.log_path);
  if (pts.empty()) throw Error(ErrorKind::IoError, "curve log is empty");

  struct Series {
    std::vector<double> xs, ys;
    float shade;
  };
  Series train_series{{}, {}, 0.0f};
  Series test_series{{}, {}, 0.45f};
  for (const auto& pt : pts) {
    double value;
    if (opt.metric == "psnr") {
      if (!pt.psnr) continue;
      value = *pt.psnr;
    } else {
      value = pt.loss;
    }
    Series& s = pt.split == "test" ? test_series : train_series;
    s.xs.push_back(static_cast<double>(pt.step));
    s.ys.push_back(value);
  }

  double x_lo = 1e300, x_hi = -1e300, y_lo = 1e300, y_hi = -1e300;
  for (const Series* s : {&train_series, &test_series}) {
    for (std::size_t i = 0; i < s->xs.size(); ++i) {
      x_lo = std::min(x_lo, s->xs[i]);
      x_hi = std::max(x_hi, s->xs[i]);
      y_lo = std::min(y_lo, s->ys[i]);
      y_hi = std::max(y_hi, s->ys[i]);
    }
  }
  if (x_hi <= x_lo) x_hi = x_lo + 1;
  if (y_hi <= y_lo) y_hi = y_lo + 1;

  const std::int64_t W = 800, H = 500, margin = 40;
  Tensor canvas(1, 1, H, W, 1.0f);
  // axes
  for (std::int64_t i = margin; i < H - margin; ++i) canvas.at(0, 0, i, margin) = 0.0f;
  for (std::int64_t j = margin; j < W - margin; ++j) canvas.at(0, 0, H - margin, j) = 0.0f;

  auto to_px = [&](double x, double y) {
    const std::int64_t px = margin + static_cast<std::int64_t>(
                                         (x - x_lo) / (x_hi - x_lo) * (W - 2 * margin));
    const std::int64_t py = H - margin - static_cast<std::int64_t>(
                                             (y - y_lo) / (y_hi - y_lo) * (H - 2 * margin));
    return std::make_pair(std::clamp<std::int64_t>(py, 0, H - 1),
                          std::clamp<std::int64_t>(px, 0, W - 1));
  };
  auto draw_line = [&](std::pair<std::int64_t, std::int64_t> a,
                       std::pair<std::int64_t, std::int64_t> b, float shade) {
    const std::int64_t steps = std::max<std::int64_t>(
        1, std::max(std::abs(a.first - b.first), std::abs(a.second - b.second)));
    for (std::int64_t s = 0; s <= steps; ++s) {
      const std::int64_t i = a.first + (b.first - a.first) * s / steps;
      const std::int64_t j = a.second + (b.second - a.second) * s / steps;
      canvas.at(0, 0, i, j) = shade;
    }
  };
  for (const Series* s : {&train_series, &test_series}) {
    for (std::size_t i = 1; i < s->xs.size(); ++i) {
      draw_line(to_px(s->xs[i - 1], s->ys[i - 1]), to_px(s->xs[i], s->ys[i]), s->shade);
    }
  }

  io::write_image(opt.out_path, io::tensor_to_image(canvas));
  std::printf("%s over steps [%g, %g], %s range [%g, %g]\n", opt.metric.c_str(), x_lo, x_hi,
              opt.metric.c_str(), y_lo, y_hi);
  std::printf("plot (train = black, test = gray): %s\n", opt.out_path.c_str());
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"blind image inpainting: residual two-subnetwork CNN, built from scratch"};
  app.require_subcommand(1);

  SynthOptions synth_opt;
  auto* synth_cmd = app.add_subcommand("synth", "synthesize a corruption dataset");
  synth_cmd->add_option("--config", synth_opt.config_path, "JSON config")->required();
  synth_cmd->add_option("--out", synth_opt.out_dir, "output directory (overrides config)");
  synth_cmd->add_option("--seed", synth_opt.seed, "seed override");
  synth_cmd->add_option("--count", synth_opt.count, "total patch count override");
  synth_cmd->add_option("--threads", synth_opt.threads, "worker threads (0 = hardware)");

  TrainOptions train_opt;
  auto* train_cmd = app.add_subcommand("train", "train a model on a dataset");
  train_cmd->add_option("--config", train_opt.config_path, "JSON train config")->required();
  train_cmd->add_option("--resume", train_opt.resume, "checkpoint to resume from");
  train_cmd->add_option("--seed", train_opt.seed, "seed override");
  train_cmd->add_option("--dataset", train_opt.dataset_dir, "dataset dir override");
  train_cmd->add_option("--checkpoint-dir", train_opt.checkpoint_dir,
                        "checkpoint dir override");
  train_cmd->add_option("--threads", train_opt.threads, "worker threads (0 = hardware)");

  InferOptions infer_opt;
  auto* infer_cmd = app.add_subcommand("infer", "restore image(s) with a trained model");
  infer_cmd->add_option("--checkpoint", infer_opt.checkpoint, "model checkpoint")->required();
  infer_cmd->add_option("images", infer_opt.inputs, "input image(s), PGM or PNG")
      ->required()
      ->expected(-1);
  infer_cmd->add_option("--out-dir", infer_opt.out_dir,
                        "output directory (default: next to each input)");
  infer_cmd->add_flag("--residual", infer_opt.write_residual,
                      "also write the residual visualization");
  infer_cmd->add_option("--threads", infer_opt.threads, "worker threads (0 = hardware)");

  EvalOptions eval_opt;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate PSNR/SSIM on a dataset or dir pairs");
  eval_cmd->add_option("--checkpoint", eval_opt.checkpoint, "model checkpoint");
  eval_cmd->add_option("--dataset", eval_opt.dataset_dir, "dataset directory");
  eval_cmd->add_option("--split", eval_opt.split, "dataset split: test (default) or train");
  eval_cmd->add_option("--restored-dir", eval_opt.restored_dir, "directory of restored images");
  eval_cmd->add_option("--clean-dir", eval_opt.clean_dir, "directory of ground-truth images");
  eval_cmd->add_option("--report", eval_opt.report_path, "write a JSON report here");
  eval_cmd->add_option("--batch", eval_opt.batch, "evaluation batch size");
  eval_cmd->add_option("--threads", eval_opt.threads, "worker threads (0 = hardware)");

  std::string gradcheck_scope = "all";
  std::uint64_t gradcheck_seed = 1;
  int gradcheck_threads = 0;
  auto* gc_cmd = app.add_subcommand("gradcheck", "finite-difference gradient verification");
  gc_cmd->add_option("--scope", gradcheck_scope, "layers | full | all (default all)");
  gc_cmd->add_option("--seed", gradcheck_seed, "seed");
  gc_cmd->add_option("--threads", gradcheck_threads, "worker threads (0 = hardware)");

  AblateOptions ablate_opt;
  auto* ablate_cmd = app.add_subcommand("ablate", "train and evaluate the variant matrix");
  ablate_cmd->add_option("--config", ablate_opt.config_path, "JSON ablation config")->required();
  ablate_cmd->add_option("--threads", ablate_opt.threads, "worker threads (0 = hardware)");

  BenchOptions bench_opt;
  auto* bench_cmd = app.add_subcommand("bench", "inference throughput benchmark");
  bench_cmd->add_option("--base-width", bench_opt.base_width, "channel width (default 64)");
  bench_cmd->add_option("--height", bench_opt.height, "input height (default 512)");
  bench_cmd->add_option("--width", bench_opt.width, "input width (default 512)");
  bench_cmd->add_option("--repeat", bench_opt.repeat, "timing repetitions, best-of");
  bench_cmd->add_option("--seed", bench_opt.seed, "init seed");
  bench_cmd->add_option("--checkpoint", bench_opt.checkpoint, "bench a trained model instead");

  PlotOptions plot_opt;
  auto* plot_cmd = app.add_subcommand("plot", "render a loss-curve CSV to an image");
  plot_cmd->add_option("--log", plot_opt.log_path, "train_log.csv path")->required();
  plot_cmd->add_option("--out", plot_opt.out_path, "output image (.pgm or .png)")->required();
  plot_cmd->add_option("--metric", plot_opt.metric, "loss (default) or psnr");

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth_cmd->parsed()) return cmd_synth(synth_opt);
    if (train_cmd->parsed()) return cmd_train(train_opt);
    if (infer_cmd->parsed()) return cmd_infer(infer_opt);
    if (eval_cmd->parsed()) return cmd_eval(eval_opt);
    if (gc_cmd->parsed()) return cmd_gradcheck(gradcheck_scope, gradcheck_seed, gradcheck_threads);
    if (ablate_cmd->parsed()) return cmd_ablate(ablate_opt);
    if (bench_cmd->parsed()) return cmd_bench(bench_opt);
    if (plot_cmd->parsed()) return cmd_plot(plot_opt);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const json::exception& e) {
    std::cerr << "error: config: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}
