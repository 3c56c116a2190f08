#include "blindpaint/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "blindpaint/layers.hpp"
#include "blindpaint/loss.hpp"
#include "blindpaint/network.hpp"
#include "blindpaint/rng.hpp"
#include "blindpaint/tensor.hpp"

namespace blindpaint::gradcheck {

namespace {

double rel_err(double analytic, double fd) {
  const double denom = std::max(std::abs(analytic), std::abs(fd));
  if (denom < 1e-8) return 0.0;
  return std::abs(analytic - fd) / denom;
}

DTensor random_tensor(Rng& rng, Shape s, double lo = -1.0, double hi = 1.0) {
  return rng_fill<double>(rng, UniformDist{lo, hi}, s);
}

// Weighted-sum objective: L(out) = sum_i out[i] * r[i].
double weighted_sum(const DTensor& out, const DTensor& r) {
  double acc = 0.0;
  for (std::int64_t i = 0; i < out.numel(); ++i) acc += out[i] * r[i];
  return acc;
}

// Central difference of f at element i of t.
template <typename F>
double central_diff(DTensor& t, std::int64_t i, F&& f) {
  const double saved = t[i];
  t[i] = saved + kStep;
  const double plus = f();
  t[i] = saved - kStep;
  const double minus = f();
  t[i] = saved;
  return (plus - minus) / (2.0 * kStep);
}

double check_conv_instance(std::uint64_t seed) {
  Rng rng(seed);
  nn::Conv2d<double> layer(3, 4);
  layer.weight = random_tensor(rng, layer.weight.shape(), -0.5, 0.5);
  layer.bias = random_tensor(rng, layer.bias.shape(), -0.2, 0.2);
  DTensor x = random_tensor(rng, {2, 3, 6, 5});
  DTensor r = random_tensor(rng, {2, 4, 6, 5});

  layer.zero_grad();
  DTensor grad_x = layer.backward(x, r);
  auto objective = [&] { return weighted_sum(layer.forward(x), r); };

  double worst = 0.0;
  for (std::int64_t i = 0; i < layer.weight.numel(); ++i) {
    worst = std::max(worst, rel_err(layer.grad_weight[i], central_diff(layer.weight, i, objective)));
  }
  for (std::int64_t i = 0; i < layer.bias.numel(); ++i) {
    worst = std::max(worst, rel_err(layer.grad_bias[i], central_diff(layer.bias, i, objective)));
  }
  for (std::int64_t i = 0; i < x.numel(); ++i) {
    worst = std::max(worst, rel_err(grad_x[i], central_diff(x, i, objective)));
  }
  return worst;
}

double check_deconv_instance(std::uint64_t seed) {
  Rng rng(seed);
  nn::Deconv2d<double> layer(3, 2);
  layer.weight = random_tensor(rng, layer.weight.shape(), -0.5, 0.5);
  layer.bias = random_tensor(rng, layer.bias.shape(), -0.2, 0.2);
  DTensor x = random_tensor(rng, {2, 3, 4, 5});
  DTensor r = random_tensor(rng, {2, 2, 8, 10});

  layer.zero_grad();
  DTensor grad_x = layer.backward(x, r);
  auto objective = [&] { return weighted_sum(layer.forward(x), r); };

  double worst = 0.0;
  for (std::int64_t i = 0; i < layer.weight.numel(); ++i) {
    worst = std::max(worst, rel_err(layer.grad_weight[i], central_diff(layer.weight, i, objective)));
  }
  for (std::int64_t i = 0; i < layer.bias.numel(); ++i) {
    worst = std::max(worst, rel_err(layer.grad_bias[i], central_diff(layer.bias, i, objective)));
  }
  for (std::int64_t i = 0; i < x.numel(); ++i) {
    worst = std::max(worst, rel_err(grad_x[i], central_diff(x, i, objective)));
  }
  return worst;
}

// Separates every 2x2 window's max from the runner-up by > 1e-3 so the
// +-h perturbation cannot flip the argmax.
void enforce_pool_margin(DTensor& x) {
  for (std::int64_t n = 0; n < x.n(); ++n) {
    for (std::int64_t c = 0; c < x.c(); ++c) {
      for (std::int64_t i = 0; i < x.h(); i += 2) {
        for (std::int64_t j = 0; j < x.w(); j += 2) {
          double best = -1e30;
          std::int64_t bi = i, bj = j;
          for (int du = 0; du < 2; ++du) {
            for (int dv = 0; dv < 2; ++dv) {
              if (x.at(n, c, i + du, j + dv) > best) {
                best = x.at(n, c, i + du, j + dv);
                bi = i + du;
                bj = j + dv;
              }
            }
          }
          double second = -1e30;
          for (int du = 0; du < 2; ++du) {
            for (int dv = 0; dv < 2; ++dv) {
              if (i + du == bi && j + dv == bj) continue;
              second = std::max(second, x.at(n, c, i + du, j + dv));
            }
          }
          if (best - second < 2e-3) x.at(n, c, bi, bj) = second + 5e-3;
        }
      }
    }
  }
}

double check_maxpool_instance(std::uint64_t seed) {
  Rng rng(seed);
  DTensor x = random_tensor(rng, {2, 3, 6, 8});
  enforce_pool_margin(x);
  DTensor r = random_tensor(rng, {2, 3, 3, 4});

  auto pool = nn::maxpool_forward(x);
  DTensor grad_x = nn::maxpool_backward(pool, r);
  auto objective = [&] { return weighted_sum(nn::maxpool_forward(x).out, r); };

  double worst = 0.0;
  for (std::int64_t i = 0; i < x.numel(); ++i) {
    worst = std::max(worst, rel_err(grad_x[i], central_diff(x, i, objective)));
  }
  return worst;
}

double check_relu_instance(std::uint64_t seed) {
  Rng rng(seed);
  DTensor x = random_tensor(rng, {2, 3, 5, 7});
  for (std::int64_t i = 0; i < x.numel(); ++i) {
    if (std::abs(x[i]) < 2e-3) x[i] = x[i] < 0.0 ? x[i] - 2e-3 : x[i] + 2e-3;
  }
  DTensor r = random_tensor(rng, x.shape());

  DTensor out = nn::relu(x);
  DTensor grad_x = nn::relu_backward(out, r);
  auto objective = [&] { return weighted_sum(nn::relu(x), r); };

  double worst = 0.0;
  for (std::int64_t i = 0; i < x.numel(); ++i) {
    worst = std::max(worst, rel_err(grad_x[i], central_diff(x, i, objective)));
  }
  return worst;
}

double check_loss_instance(std::uint64_t seed, nn::LossKind kind) {
  Rng rng(seed);
  DTensor residual = random_tensor(rng, {2, 1, 6, 6});
  DTensor x = random_tensor(rng, residual.shape(), 0.0, 1.0);
  DTensor y = random_tensor(rng, residual.shape(), 0.0, 1.0);
  // Keep |residual + x - y| away from the L1 kink.
  for (std::int64_t i = 0; i < residual.numel(); ++i) {
    const double arg = residual[i] + x[i] - y[i];
    if (std::abs(arg) < 2e-3) residual[i] += arg < 0.0 ? -2e-3 : 2e-3;
  }

  auto loss = nn::residual_loss(residual, x, y, kind);
  auto objective = [&] { return nn::residual_loss(residual, x, y, kind).value; };

  double worst = 0.0;
  for (std::int64_t i = 0; i < residual.numel(); ++i) {
    worst = std::max(worst,
                     rel_err(loss.grad_residual[i], central_diff(residual, i, objective)));
  }
  return worst;
}

CheckRow run_instances(const std::string& unit, std::uint64_t seed, int instances,
                       double (*fn)(std::uint64_t)) {
  CheckRow row;
  row.unit = unit;
  for (int i = 0; i < instances; ++i) {
    row.max_rel_err = std::max(row.max_rel_err, fn(derive_seed(seed, static_cast<std::uint64_t>(i))));
    row.checks += 1;
  }
  row.pass = row.max_rel_err < kTolerance;
  return row;
}

}  // namespace

std::vector<CheckRow> check_layers(std::uint64_t seed) {
  std::vector<CheckRow> rows;
  rows.push_back(run_instances("conv2d", derive_seed(seed, 0x11), 5, check_conv_instance));
  rows.push_back(run_instances("deconv2d", derive_seed(seed, 0x22), 5, check_deconv_instance));
  rows.push_back(run_instances("maxpool", derive_seed(seed, 0x33), 5, check_maxpool_instance));
  rows.push_back(run_instances("relu", derive_seed(seed, 0x44), 5, check_relu_instance));
  rows.push_back(run_instances("loss_l1", derive_seed(seed, 0x55), 5,
                               [](std::uint64_t s) { return check_loss_instance(s, nn::LossKind::L1); }));
  rows.push_back(run_instances("loss_l2", derive_seed(seed, 0x66), 5,
                               [](std::uint64_t s) { return check_loss_instance(s, nn::LossKind::L2); }));
  return rows;
}

// ---- Full-network check -----------------------------------------------------
//
// Central differences at h = 1e-4 are only valid when no ReLU, max-pool, or
// L1 kink lies within reach of the perturbation, so the fixture establishes
// the margins explicitly:
//   - the residual head is damped so every L1 argument sits near -0.4;
//   - channel biases are nudged (in topological order) until every pre-ReLU
//     value clears +-1e-3;
//   - instances whose pool windows have a max-vs-runner-up gap <= 1e-3 are
//     resampled.

namespace {

constexpr double kMargin = 1e-3;

// Bias tensors of the ReLU'd units in forward order, matching the cache's
// recorded pre-activation list.
std::vector<DTensor*> relu_unit_biases(model::Network<double>& net) {
  std::vector<DTensor*> out;
  if (auto* d = net.netd()) {
    for (auto* b :
         {&d->enc1a.bias, &d->enc1b.bias, &d->enc2a.bias, &d->enc2b.bias, &d->enc3a.bias,
          &d->enc3b.bias, &d->mid1.bias, &d->mid2.bias, &d->mid3.bias, &d->up3.bias,
          &d->dec3a.bias, &d->dec3b.bias, &d->up2.bias, &d->dec2a.bias, &d->dec2b.bias,
          &d->up1.bias, &d->dec1a.bias, &d->dec1b.bias, &d->head1.bias, &d->head2.bias}) {
      out.push_back(b);
    }
  }
  auto& chain = net.nete();
  for (std::int64_t l = 0; l + 1 < chain.conv_count(); ++l) {
    out.push_back(&chain.conv(static_cast<std::size_t>(l)).bias);
  }
  return out;
}

// Collects the recorded pre-activations in the same order as
// relu_unit_biases.
std::vector<const DTensor*> recorded_pre(const model::Network<double>::Cache& cache) {
  std::vector<const DTensor*> out;
  for (const auto& t : cache.netd.pre) out.push_back(&t);
  for (const auto& t : cache.nete.pre) out.push_back(&t);
  return out;
}

// Shifts channel biases until no pre-ReLU value lies in [-margin, margin].
// Units are fixed in forward order with a fresh forward pass before each, so
// one sweep converges. Returns false if a channel cannot be cleared.
bool nudge_pre_activation_margins(model::Network<double>& net, const DTensor& x) {
  auto biases = relu_unit_biases(net);
  for (std::size_t unit = 0; unit < biases.size(); ++unit) {
    typename model::Network<double>::Cache cache;
    cache.record_pre = true;
    net.forward(x, &cache);
    auto pre = recorded_pre(cache);
    const DTensor& z = *pre[unit];
    DTensor& bias = *biases[unit];
    const std::int64_t hw = z.h() * z.w();
    for (std::int64_t o = 0; o < z.c(); ++o) {
      auto violates = [&](double delta) {
        for (std::int64_t n = 0; n < z.n(); ++n) {
          const double* plane = z.data() + (n * z.c() + o) * hw;
          for (std::int64_t i = 0; i < hw; ++i) {
            if (std::abs(plane[i] + delta) <= kMargin) return true;
          }
        }
        return false;
      };
      if (!violates(0.0)) continue;
      // Walk outward in 2*margin steps; large shifts land the band in the
      // sparse tail of the channel's value distribution.
      bool fixed = false;
      for (int k = 1; k <= 400 && !fixed; ++k) {
        for (double delta : {2.0 * kMargin * k, -2.0 * kMargin * k}) {
          if (!violates(delta)) {
            bias[o] += delta;
            fixed = true;
            break;
          }
        }
      }
      if (!fixed) return false;
    }
  }
  // Verification sweep.
  typename model::Network<double>::Cache cache;
  cache.record_pre = true;
  net.forward(x, &cache);
  for (const auto* z : recorded_pre(cache)) {
    for (std::int64_t i = 0; i < z->numel(); ++i) {
      if (std::abs((*z)[i]) <= kMargin) return false;
    }
  }
  return true;
}

// True when every 2x2 pool window separates its maximum from the runner-up
// by more than the margin (a window whose values are all zero is constant
// under small perturbations and therefore fine).
bool pool_margins_ok(const DTensor& pool_input) {
  for (std::int64_t n = 0; n < pool_input.n(); ++n) {
    for (std::int64_t c = 0; c < pool_input.c(); ++c) {
      for (std::int64_t i = 0; i < pool_input.h(); i += 2) {
        for (std::int64_t j = 0; j < pool_input.w(); j += 2) {
          double top1 = -1e300, top2 = -1e300;
          for (int du = 0; du < 2; ++du) {
            for (int dv = 0; dv < 2; ++dv) {
              const double v = pool_input.at(n, c, i + du, j + dv);
              if (v > top1) {
                top2 = top1;
                top1 = v;
              } else if (v > top2) {
                top2 = v;
              }
            }
          }
          if (top1 == 0.0 && top2 == 0.0) continue;
          if (top1 - top2 <= kMargin) return false;
        }
      }
    }
  }
  return true;
}

}  // namespace

CheckRow check_full_network(std::uint64_t seed) {
  model::NetworkConfig cfg;
  cfg.variant = model::Variant::Full;
  cfg.base_width = 8;

  CheckRow row;
  row.unit = "network_full";

  for (std::uint64_t attempt = 0; attempt < 64; ++attempt) {
    Rng rng(derive_seed(seed, 0x7700 + attempt));
    auto net = model::Network<double>::build(cfg, rng);
    // Damp the residual head so the L1 arguments stay near -0.4.
    {
      auto& last = net.nete().conv(static_cast<std::size_t>(net.nete().conv_count() - 1));
      for (std::int64_t i = 0; i < last.weight.numel(); ++i) last.weight[i] *= 0.05;
    }
    DTensor x = random_tensor(rng, {1, 1, 16, 16}, 0.05, 0.95);
    DTensor y(x.shape());
    for (std::int64_t i = 0; i < y.numel(); ++i) {
      y[i] = x[i] + 0.4 + 0.02 * rng.uniform(-1.0, 1.0);
    }

    // Pool gaps are (up to ReLU clipping) invariant under the bias nudge, so
    // reject near-tie windows before paying for the nudge sweep.
    {
      typename model::Network<double>::Cache precheck;
      net.forward(x, &precheck);
      if (!pool_margins_ok(precheck.netd.e1b) || !pool_margins_ok(precheck.netd.e2b) ||
          !pool_margins_ok(precheck.netd.e3b)) {
        continue;
      }
    }

    if (!nudge_pre_activation_margins(net, x)) continue;

    typename model::Network<double>::Cache cache;
    auto fwd = net.forward(x, &cache);
    if (!pool_margins_ok(cache.netd.e1b) || !pool_margins_ok(cache.netd.e2b) ||
        !pool_margins_ok(cache.netd.e3b)) {
      continue;
    }
    bool args_ok = true;
    for (std::int64_t i = 0; i < fwd.residual.numel() && args_ok; ++i) {
      if (std::abs(fwd.residual[i] + x[i] - y[i]) <= kMargin) args_ok = false;
    }
    if (!args_ok) continue;

    auto loss = nn::residual_loss(fwd.residual, x, y, nn::LossKind::L1);
    net.zero_grad();
    net.backward(loss.grad_residual, cache);

    auto objective = [&] {
      auto f = net.forward(x);
      return nn::residual_loss(f.residual, x, y, nn::LossKind::L1).value;
    };

    // A margin-clean instance found: run the check once and report it.
    auto params = net.params();
    // >= 20 sampled parameters spread over every layer's weights and biases.
    Rng pick(derive_seed(seed, 0x88));
    for (const auto& p : params) {
      const std::int64_t i = pick.uniform_int(0, p.value->numel() - 1);
      const double analytic = (*p.grad)[i];
      const double fd = central_diff(*p.value, i, objective);
      row.max_rel_err = std::max(row.max_rel_err, rel_err(analytic, fd));
      row.checks += 1;
    }
    row.pass = row.max_rel_err < kTolerance;
    return row;
  }
  row.unit = "network_full (no margin-clean instance found)";
  return row;
}

}  // namespace blindpaint::gradcheck
