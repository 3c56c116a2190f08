#include "doctest.h"

#include <cmath>

#include "blindpaint/parallel.hpp"
#include "blindpaint/rng.hpp"
#include "blindpaint/tensor.hpp"

using namespace blindpaint;

TEST_CASE("elementwise add/mul basics") {
  Tensor z(1, 1, 2, 2);
  Tensor sum = add(z, z);
  for (std::int64_t i = 0; i < sum.numel(); ++i) CHECK(sum[i] == 0.0f);

  Tensor t = Tensor::from_values({1, 1, 2, 2}, {0.5f, 1.0f, 0.25f, 0.0f});
  Tensor ones(1, 1, 2, 2, 1.0f);
  CHECK(bit_equal(mul(t, ones), t));

  // mask multiply, hand-computed
  Tensor mask = Tensor::from_values({1, 1, 2, 2}, {1.0f, 0.0f, 1.0f, 1.0f});
  Tensor masked = mul(t, mask);
  CHECK(masked[0] == 0.5f);
  CHECK(masked[1] == 0.0f);
  CHECK(masked[2] == 0.25f);
  CHECK(masked[3] == 0.0f);
}

TEST_CASE("elementwise shape mismatch throws") {
  Tensor a(1, 1, 2, 2), b(1, 1, 2, 3);
  CHECK_THROWS_AS(add(a, b), Error);
  try {
    add(a, b);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::ShapeMismatch);
  }
}

TEST_CASE("scale, abs, clamp") {
  Tensor t = Tensor::from_values({1, 1, 1, 4}, {-2.0f, -0.5f, 0.5f, 2.0f});
  Tensor s = scale(t, 2.0f);
  CHECK(s[0] == -4.0f);
  CHECK(s[3] == 4.0f);
  Tensor a = abs(t);
  CHECK(a[0] == 2.0f);
  CHECK(a[1] == 0.5f);
  Tensor c = clamp(t, 0.0f, 1.0f);
  CHECK(c[0] == 0.0f);
  CHECK(c[1] == 0.0f);
  CHECK(c[2] == 0.5f);
  CHECK(c[3] == 1.0f);
}

TEST_CASE("reductions") {
  Tensor ones(1, 1, 4, 4, 1.0f);
  Tensor total = reduce(ReduceOp::Sum, ones, Axes::all());
  CHECK(total.numel() == 1);
  CHECK(total[0] == 16.0f);

  Rng rng(7);
  Tensor t = rng_fill<float>(rng, UniformDist{0.0, 1.0}, {2, 3, 4, 5});
  Tensor mean = reduce(ReduceOp::Mean, t, Axes::all());
  CHECK(mean[0] == doctest::Approx(sum_all(t) / t.numel()).epsilon(1e-6));

  Tensor m = Tensor::from_values({1, 1, 2, 2}, {1.0f, 5.0f, 3.0f, 2.0f});
  Tensor mx = reduce(ReduceOp::Max, m, Axes::spatial());
  CHECK(mx[0] == 5.0f);

  // scan oracle on a partial reduction
  Tensor u = rng_fill<float>(rng, UniformDist{-1.0, 1.0}, {2, 3, 4, 4});
  Tensor per_channel = reduce(ReduceOp::Sum, u, Axes{false, false, true, true});
  CHECK(per_channel.shape() == Shape{2, 3, 1, 1});
  for (std::int64_t n = 0; n < 2; ++n) {
    for (std::int64_t c = 0; c < 3; ++c) {
      float acc = 0.0f;
      for (std::int64_t i = 0; i < 4; ++i) {
        for (std::int64_t j = 0; j < 4; ++j) acc += u.at(n, c, i, j);
      }
      CHECK(per_channel.at(n, c, 0, 0) == acc);
    }
  }
}

TEST_CASE("reduction deterministic across thread counts") {
  Rng rng(11);
  Tensor t = rng_fill<float>(rng, UniformDist{-1.0, 1.0}, {4, 8, 32, 32});
  set_thread_count(1);
  Tensor serial = reduce(ReduceOp::Sum, t, Axes{false, true, true, true});
  set_thread_count(4);
  Tensor parallel = reduce(ReduceOp::Sum, t, Axes{false, true, true, true});
  set_thread_count(0);
  CHECK(bit_equal(serial, parallel));
}

TEST_CASE("concat_channels and slice round trip") {
  Rng rng(3);
  Tensor a = rng_fill<float>(rng, UniformDist{0.0, 1.0}, {2, 1, 4, 4});
  Tensor b = rng_fill<float>(rng, UniformDist{0.0, 1.0}, {2, 2, 4, 4});
  Tensor c = rng_fill<float>(rng, UniformDist{0.0, 1.0}, {2, 64, 4, 4});

  Tensor cat = concat_channels<float>({&a, &b, &c});
  CHECK(cat.c() == 67);
  CHECK(bit_equal(slice_channels(cat, 0, 1), a));
  CHECK(bit_equal(slice_channels(cat, 1, 3), b));
  CHECK(bit_equal(slice_channels(cat, 3, 67), c));

  // single-part concat is the identity
  Tensor single = concat_channels<float>({&b});
  CHECK(bit_equal(single, b));

  Tensor bad(2, 1, 5, 4);
  CHECK_THROWS_AS(concat_channels(a, bad), Error);
}

TEST_CASE("concat slice identity property over random shapes") {
  Rng rng(555);
  for (int round = 0; round < 20; ++round) {
    const std::int64_t n = rng.uniform_int(1, 3);
    const std::int64_t h = rng.uniform_int(1, 6);
    const std::int64_t w = rng.uniform_int(1, 6);
    const int parts = static_cast<int>(rng.uniform_int(1, 4));
    std::vector<Tensor> tensors;
    for (int p = 0; p < parts; ++p) {
      tensors.push_back(
          rng_fill<float>(rng, UniformDist{-1.0, 1.0}, {n, rng.uniform_int(1, 5), h, w}));
    }
    std::vector<const Tensor*> ptrs;
    for (auto& t : tensors) ptrs.push_back(&t);
    Tensor cat = concat_channels(ptrs);
    std::int64_t off = 0;
    for (auto& t : tensors) {
      CHECK(bit_equal(slice_channels(cat, off, off + t.c()), t));
      off += t.c();
    }
  }
}

TEST_CASE("rng_fill determinism and distribution sanity") {
  Rng a(42), b(42);
  Tensor ta = rng_fill<float>(a, NormalDist{0.0, 1.0}, {1, 1, 10, 10});
  Tensor tb = rng_fill<float>(b, NormalDist{0.0, 1.0}, {1, 1, 10, 10});
  CHECK(bit_equal(ta, tb));

  Rng c(1);
  Tensor zeros = rng_fill<float>(c, NormalDist{0.0, 0.0}, {1, 1, 4, 4});
  for (std::int64_t i = 0; i < zeros.numel(); ++i) CHECK(zeros[i] == 0.0f);

  // statistical oracle: mean of 1e6 uniforms within 0.5 +- 0.01 (~3 sigma)
  Rng d(99);
  Tensor big = rng_fill<float>(d, UniformDist{0.0, 1.0}, {1, 1, 1000, 1000});
  CHECK(mean_all(big) == doctest::Approx(0.5).epsilon(0.02));
  CHECK(all_finite(big));

  CHECK_THROWS_AS(rng_fill<float>(d, UniformDist{1.0, 0.0}, {1, 1, 2, 2}), Error);
  CHECK_THROWS_AS(rng_fill<float>(d, NormalDist{0.0, -1.0}, {1, 1, 2, 2}), Error);
}

TEST_CASE("rng streams: equal seeds agree, split streams differ") {
  Rng a(1234), b(1234);
  for (int i = 0; i < 100000; ++i) {
    REQUIRE(a.next_u64() == b.next_u64());
  }
  Rng base(77);
  Rng w0 = base.split(0);
  Rng w1 = base.split(1);
  int same = 0;
  for (int i = 0; i < 64; ++i) {
    if (w0.next_u64() == w1.next_u64()) ++same;
  }
  CHECK(same == 0);
}

TEST_CASE("tensor invariants") {
  CHECK_THROWS_AS(Tensor(0, 1, 1, 1), Error);
  CHECK_THROWS_AS(Tensor(1, 1, -1, 1), Error);
  Tensor t(2, 3, 4, 5);
  CHECK(t.numel() == 2 * 3 * 4 * 5);
  CHECK(t.shape().numel() == t.numel());
}
