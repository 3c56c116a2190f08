#include "doctest.h"

#include <cmath>

#include "blindpaint/gradcheck.hpp"
#include "blindpaint/loss.hpp"
#include "blindpaint/network.hpp"

using namespace blindpaint;
using model::NetworkConfig;
using model::Variant;

namespace {

NetworkConfig make_cfg(Variant v, std::int64_t width) {
  NetworkConfig cfg;
  cfg.variant = v;
  cfg.base_width = width;
  return cfg;
}

}  // namespace

TEST_CASE("gradient prior: constant, ramp, random oracle") {
  Tensor flat(1, 1, 4, 4, 0.7f);
  auto [gx0, gy0] = model::extract_gradient_prior(flat);
  CHECK(sum_all(abs(gx0)) == 0.0);
  CHECK(sum_all(abs(gy0)) == 0.0);

  // horizontal ramp x(i,j) = j/8: gx = 1/8 except last column, gy = 0
  Tensor ramp(1, 1, 4, 8);
  for (std::int64_t i = 0; i < 4; ++i) {
    for (std::int64_t j = 0; j < 8; ++j) ramp.at(0, 0, i, j) = static_cast<float>(j) / 8.0f;
  }
  auto [gx, gy] = model::extract_gradient_prior(ramp);
  for (std::int64_t i = 0; i < 4; ++i) {
    for (std::int64_t j = 0; j < 8; ++j) {
      CHECK(gx.at(0, 0, i, j) == (j == 7 ? 0.0f : 0.125f));
      CHECK(gy.at(0, 0, i, j) == 0.0f);
    }
  }

  Rng rng(4);
  Tensor r = rng_fill<float>(rng, UniformDist{0.0, 1.0}, {2, 1, 4, 4});
  auto [rgx, rgy] = model::extract_gradient_prior(r);
  for (std::int64_t n = 0; n < 2; ++n) {
    for (std::int64_t i = 0; i < 4; ++i) {
      for (std::int64_t j = 0; j < 4; ++j) {
        const float ex = j + 1 < 4 ? r.at(n, 0, i, j + 1) - r.at(n, 0, i, j) : 0.0f;
        const float ey = i + 1 < 4 ? r.at(n, 0, i + 1, j) - r.at(n, 0, i, j) : 0.0f;
        CHECK(rgx.at(n, 0, i, j) == ex);
        CHECK(rgy.at(n, 0, i, j) == ey);
      }
    }
  }
}

TEST_CASE("network config validation and channel arithmetic") {
  CHECK_THROWS_AS(make_cfg(Variant::Full, 3).validate(), Error);
  CHECK_THROWS_AS(make_cfg(Variant::Full, 10).validate(), Error);
  CHECK_NOTHROW(make_cfg(Variant::Full, 8).validate());

  CHECK(make_cfg(Variant::Full, 64).nete_input_channels() == 67);
  CHECK(make_cfg(Variant::NoNetD, 64).nete_input_channels() == 3);
  CHECK(make_cfg(Variant::PlainNetD64, 64).nete_input_channels() == 67);
  CHECK(make_cfg(Variant::NoGP, 64).nete_input_channels() == 65);
  CHECK(make_cfg(Variant::L2Loss, 64).nete_input_channels() == 67);

  CHECK(make_cfg(Variant::Full, 64).default_loss() == nn::LossKind::L1);
  CHECK(make_cfg(Variant::L2Loss, 64).default_loss() == nn::LossKind::L2);
}

TEST_CASE("make_variant layer counts and parameter reporting") {
  Rng rng(1);
  auto full = model::Network<float>::build(make_cfg(Variant::Full, 8), rng);
  auto counts = full.layer_counts();
  CHECK(counts.netd_conv == 17);
  CHECK(counts.netd_deconv == 3);
  CHECK(counts.nete_conv == 20);
  CHECK(full.netd() != nullptr);
  CHECK(full.parameter_count() > 0);
  CHECK(full.nete().conv(0).in_channels() == 11);  // 8 + 3

  auto no_netd = model::Network<float>::build(make_cfg(Variant::NoNetD, 8), rng);
  auto c2 = no_netd.layer_counts();
  CHECK(c2.netd_conv == 0);
  CHECK(c2.nete_conv == 20);
  CHECK(no_netd.nete().conv(0).in_channels() == 3);

  auto plain = model::Network<float>::build(make_cfg(Variant::PlainNetD64, 8), rng);
  CHECK(plain.layer_counts().feature_conv == 20);
  CHECK(plain.feature_net()->conv(19).out_channels() == 8);  // last layer keeps base_width

  // two builds with the same seed produce identical parameters
  Rng a(9), b(9);
  auto na = model::Network<float>::build(make_cfg(Variant::Full, 8), a);
  auto nb = model::Network<float>::build(make_cfg(Variant::Full, 8), b);
  auto pa = na.params(), pb = nb.params();
  REQUIRE(pa.size() == pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    CHECK(pa[i].name == pb[i].name);
    CHECK(bit_equal(*pa[i].value, *pb[i].value));
  }
}

TEST_CASE("netd forward shape and divisibility error") {
  Rng rng(2);
  auto net = model::Network<float>::build(make_cfg(Variant::Full, 8), rng);
  Tensor x(1, 1, 64, 64, 0.5f);
  Tensor features = net.netd()->forward(x, nullptr);
  CHECK(features.shape() == Shape{1, 8, 64, 64});

  Tensor bad(1, 1, 60, 60, 0.5f);
  CHECK_THROWS_AS(net.netd()->forward(bad, nullptr), Error);
  try {
    net.netd()->forward(bad, nullptr);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::SpatialNotDivisible);
  }
}

TEST_CASE("forward shape invariance and zero-parameter identity") {
  Rng rng(3);
  for (Variant v : {Variant::Full, Variant::NoNetD, Variant::PlainNetD64, Variant::NoGP}) {
    auto net = model::Network<float>::build(make_cfg(v, 8), rng);
    Tensor x = rng_fill<float>(rng, UniformDist{0.0, 1.0}, {2, 1, 16, 16});
    auto out = net.forward(x);
    CHECK(out.y_hat.shape() == x.shape());
    CHECK(out.residual.shape() == x.shape());
    CHECK(all_finite(out.y_hat));
  }

  // all-zero parameters: residual is 0 and y_hat == x bit-exactly
  Rng rng2(4);
  auto net = model::Network<float>::build(make_cfg(Variant::Full, 8), rng2);
  for (auto& p : net.params()) p.value->fill(0.0f);
  Tensor x = rng_fill<float>(rng2, UniformDist{0.0, 1.0}, {1, 1, 16, 16});
  auto out = net.forward(x);
  CHECK(sum_all(abs(out.residual)) == 0.0);
  CHECK(bit_equal(out.y_hat, x));
}

TEST_CASE("backward requires a cached forward pass") {
  Rng rng(5);
  auto net = model::Network<float>::build(make_cfg(Variant::Full, 8), rng);
  typename model::Network<float>::Cache cache;
  Tensor g(1, 1, 16, 16, 1.0f);
  CHECK_THROWS_AS(net.backward(g, cache), Error);
  try {
    net.backward(g, cache);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::MissingForwardCache);
  }
}

TEST_CASE("zero loss gradient produces zero parameter gradients; generic input does not") {
  Rng rng(6);
  auto net = model::Network<float>::build(make_cfg(Variant::Full, 8), rng);
  Tensor x = rng_fill<float>(rng, UniformDist{0.0, 1.0}, {1, 1, 16, 16});
  typename model::Network<float>::Cache cache;
  auto fwd = net.forward(x, &cache);

  net.zero_grad();
  Tensor zero_grad(x.shape());
  net.backward(zero_grad, cache);
  double total = 0.0;
  for (auto& p : net.params()) total += sum_all(abs(*p.grad));
  CHECK(total == 0.0);

  // generic gradient: every Net-D layer receives nonzero gradient
  auto fwd2 = net.forward(x, &cache);
  Tensor y = add_scalar(x, 0.3f);
  auto loss = nn::residual_loss(fwd2.residual, x, y, nn::LossKind::L1);
  net.zero_grad();
  net.backward(loss.grad_residual, cache);
  for (auto& p : net.params()) {
    INFO("param ", p.name);
    CHECK(sum_all(abs(*p.grad)) > 0.0);
  }
}

TEST_CASE("whole-network finite-difference spot check (base_width 8, 16x16)") {
  auto row = gradcheck::check_full_network(2026);
  INFO("max_rel_err=", row.max_rel_err, " over ", row.checks, " parameters");
  CHECK(row.checks >= 20);
  CHECK(row.pass);
}
