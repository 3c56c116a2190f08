// Dense rank-4 NCHW tensor. float is the production dtype; double exists for
// gradient checking. All reductions accumulate in a fixed serial order per
// output element, so results are bit-identical across runs and thread counts.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "blindpaint/common.hpp"
#include "blindpaint/parallel.hpp"
#include "blindpaint/rng.hpp"

namespace blindpaint {

struct Shape {
  std::int64_t n = 0, c = 0, h = 0, w = 0;

  std::int64_t numel() const { return n * c * h * w; }
  bool operator==(const Shape&) const = default;

  std::string str() const {
    std::ostringstream os;
    os << "(" << n << "," << c << "," << h << "," << w << ")";
    return os.str();
  }
};

template <typename T>
class TensorT {
 public:
  using value_type = T;

  TensorT() = default;

  TensorT(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w, T fill = T(0)) {
    if (n < 1 || c < 1 || h < 1 || w < 1) {
      throw Error(ErrorKind::InvalidArgument,
                  "tensor dimensions must all be >= 1, got " + Shape{n, c, h, w}.str());
    }
    shape_ = Shape{n, c, h, w};
    data_.assign(static_cast<std::size_t>(shape_.numel()), fill);
  }

  explicit TensorT(Shape s, T fill = T(0)) : TensorT(s.n, s.c, s.h, s.w, fill) {}

  static TensorT from_values(Shape s, std::initializer_list<T> values) {
    TensorT t(s);
    if (static_cast<std::int64_t>(values.size()) != s.numel()) {
      throw Error(ErrorKind::ShapeMismatch, "value count does not match shape " + s.str());
    }
    std::copy(values.begin(), values.end(), t.data_.begin());
    return t;
  }

  const Shape& shape() const { return shape_; }
  std::int64_t n() const { return shape_.n; }
  std::int64_t c() const { return shape_.c; }
  std::int64_t h() const { return shape_.h; }
  std::int64_t w() const { return shape_.w; }
  std::int64_t numel() const { return static_cast<std::int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> values() { return {data_.data(), data_.size()}; }
  std::span<const T> values() const { return {data_.data(), data_.size()}; }

  T& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
  const T& operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

  std::int64_t index(std::int64_t in, std::int64_t ic, std::int64_t ih, std::int64_t iw) const {
    return ((in * shape_.c + ic) * shape_.h + ih) * shape_.w + iw;
  }

  T& at(std::int64_t in, std::int64_t ic, std::int64_t ih, std::int64_t iw) {
    return data_[static_cast<std::size_t>(index(in, ic, ih, iw))];
  }
  const T& at(std::int64_t in, std::int64_t ic, std::int64_t ih, std::int64_t iw) const {
    return data_[static_cast<std::size_t>(index(in, ic, ih, iw))];
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  bool same_shape(const TensorT& other) const { return shape_ == other.shape_; }

 private:
  Shape shape_{};
  std::vector<T> data_;
};

using Tensor = TensorT<float>;
using DTensor = TensorT<double>;

namespace detail {

template <typename T>
void require_same_shape(const TensorT<T>& a, const TensorT<T>& b, const char* op) {
  if (!a.same_shape(b)) {
    throw Error(ErrorKind::ShapeMismatch, std::string(op) + ": " + a.shape().str() +
                                              " vs " + b.shape().str());
  }
}

}  // namespace detail

// ---- Elementwise ops -------------------------------------------------------

template <typename T, typename F>
TensorT<T> zip(const TensorT<T>& a, const TensorT<T>& b, F f, const char* op_name) {
  detail::require_same_shape(a, b, op_name);
  TensorT<T> out(a.shape());
  const T* pa = a.data();
  const T* pb = b.data();
  T* po = out.data();
  parallel_for(a.numel(), [&](std::int64_t lo, std::int64_t hi) {
    for (std::int64_t i = lo; i < hi; ++i) po[i] = f(pa[i], pb[i]);
  });
  return out;
}

template <typename T, typename F>
TensorT<T> map(const TensorT<T>& a, F f) {
  TensorT<T> out(a.shape());
  const T* pa = a.data();
  T* po = out.data();
  parallel_for(a.numel(), [&](std::int64_t lo, std::int64_t hi) {
    for (std::int64_t i = lo; i < hi; ++i) po[i] = f(pa[i]);
  });
  return out;
}

template <typename T>
TensorT<T> add(const TensorT<T>& a, const TensorT<T>& b) {
  return zip(a, b, [](T x, T y) { return x + y; }, "add");
}

template <typename T>
TensorT<T> sub(const TensorT<T>& a, const TensorT<T>& b) {
  return zip(a, b, [](T x, T y) { return x - y; }, "sub");
}

template <typename T>
TensorT<T> mul(const TensorT<T>& a, const TensorT<T>& b) {
  return zip(a, b, [](T x, T y) { return x * y; }, "mul");
}

template <typename T>
TensorT<T> scale(const TensorT<T>& a, T s) {
  return map(a, [s](T x) { return x * s; });
}

template <typename T>
TensorT<T> add_scalar(const TensorT<T>& a, T s) {
  return map(a, [s](T x) { return x + s; });
}

template <typename T>
TensorT<T> abs(const TensorT<T>& a) {
  return map(a, [](T x) { return std::abs(x); });
}

template <typename T>
TensorT<T> clamp(const TensorT<T>& a, T lo, T hi) {
  return map(a, [lo, hi](T x) { return std::min(hi, std::max(lo, x)); });
}

template <typename T>
void add_inplace(TensorT<T>& a, const TensorT<T>& b) {
  detail::require_same_shape(a, b, "add_inplace");
  T* pa = a.data();
  const T* pb = b.data();
  parallel_for(a.numel(), [&](std::int64_t lo, std::int64_t hi) {
    for (std::int64_t i = lo; i < hi; ++i) pa[i] += pb[i];
  });
}

// ---- Reductions ------------------------------------------------------------

enum class ReduceOp { Sum, Mean, Max };

struct Axes {
  bool n = false, c = false, h = false, w = false;
  static Axes all() { return {true, true, true, true}; }
  static Axes spatial() { return {false, false, true, true}; }
};

// Reduced dimensions become size 1. Each output element accumulates its
// inputs serially in n,c,h,w order.
template <typename T>
TensorT<T> reduce(ReduceOp op, const TensorT<T>& t, Axes axes) {
  const Shape in = t.shape();
  const Shape out_shape{axes.n ? 1 : in.n, axes.c ? 1 : in.c, axes.h ? 1 : in.h,
                        axes.w ? 1 : in.w};
  TensorT<T> out(out_shape);

  const std::int64_t rn = axes.n ? in.n : 1;
  const std::int64_t rc = axes.c ? in.c : 1;
  const std::int64_t rh = axes.h ? in.h : 1;
  const std::int64_t rw = axes.w ? in.w : 1;
  const std::int64_t reduced_count = rn * rc * rh * rw;

  parallel_for_each(out_shape.numel(), [&](std::int64_t oi) {
    const std::int64_t ow = oi % out_shape.w;
    const std::int64_t oh = (oi / out_shape.w) % out_shape.h;
    const std::int64_t oc = (oi / (out_shape.w * out_shape.h)) % out_shape.c;
    const std::int64_t on = oi / (out_shape.w * out_shape.h * out_shape.c);

    T acc{};
    bool first = true;
    for (std::int64_t dn = 0; dn < rn; ++dn) {
      for (std::int64_t dc = 0; dc < rc; ++dc) {
        for (std::int64_t dh = 0; dh < rh; ++dh) {
          for (std::int64_t dw = 0; dw < rw; ++dw) {
            const T v = t.at(axes.n ? dn : on, axes.c ? dc : oc, axes.h ? dh : oh,
                             axes.w ? dw : ow);
            if (op == ReduceOp::Max) {
              acc = first ? v : std::max(acc, v);
              first = false;
            } else {
              acc += v;
            }
          }
        }
      }
    }
    if (op == ReduceOp::Mean) acc /= static_cast<T>(reduced_count);
    out[oi] = acc;
  });
  return out;
}

// Full reductions accumulate in double regardless of T.
template <typename T>
double sum_all(const TensorT<T>& t) {
  double acc = 0.0;
  for (std::int64_t i = 0; i < t.numel(); ++i) acc += static_cast<double>(t[i]);
  return acc;
}

template <typename T>
double mean_all(const TensorT<T>& t) {
  return sum_all(t) / static_cast<double>(t.numel());
}

template <typename T>
T max_all(const TensorT<T>& t) {
  T m = t[0];
  for (std::int64_t i = 1; i < t.numel(); ++i) m = std::max(m, t[i]);
  return m;
}

// ---- Channel concat / slice ------------------------------------------------

template <typename T>
TensorT<T> concat_channels(const std::vector<const TensorT<T>*>& parts) {
  if (parts.empty()) throw Error(ErrorKind::InvalidArgument, "concat of zero tensors");
  const Shape first = parts[0]->shape();
  std::int64_t total_c = 0;
  for (const auto* p : parts) {
    if (p->n() != first.n || p->h() != first.h || p->w() != first.w) {
      throw Error(ErrorKind::ShapeMismatch,
                  "concat_channels: " + p->shape().str() + " vs " + first.str());
    }
    total_c += p->c();
  }
  TensorT<T> out(first.n, total_c, first.h, first.w);
  const std::int64_t hw = first.h * first.w;
  std::int64_t c_off = 0;
  for (const auto* p : parts) {
    const std::int64_t pc = p->c();
    parallel_for_each(first.n * pc, [&](std::int64_t idx) {
      const std::int64_t in = idx / pc;
      const std::int64_t ic = idx % pc;
      const T* src = p->data() + (in * pc + ic) * hw;
      T* dst = out.data() + (in * total_c + c_off + ic) * hw;
      std::copy(src, src + hw, dst);
    });
    c_off += pc;
  }
  return out;
}

template <typename T>
TensorT<T> concat_channels(const TensorT<T>& a, const TensorT<T>& b) {
  return concat_channels<T>({&a, &b});
}

// Channels [c0, c1) as a new tensor, bit-copied.
template <typename T>
TensorT<T> slice_channels(const TensorT<T>& t, std::int64_t c0, std::int64_t c1) {
  if (c0 < 0 || c1 > t.c() || c0 >= c1) {
    throw Error(ErrorKind::InvalidArgument, "slice_channels: bad range");
  }
  TensorT<T> out(t.n(), c1 - c0, t.h(), t.w());
  const std::int64_t hw = t.h() * t.w();
  const std::int64_t sc = c1 - c0;
  parallel_for_each(t.n() * sc, [&](std::int64_t idx) {
    const std::int64_t in = idx / sc;
    const std::int64_t ic = idx % sc;
    const T* src = t.data() + (in * t.c() + c0 + ic) * hw;
    T* dst = out.data() + (in * sc + ic) * hw;
    std::copy(src, src + hw, dst);
  });
  return out;
}

// ---- RNG fills --------------------------------------------------------------

struct UniformDist {
  double a = 0.0, b = 1.0;
};
struct NormalDist {
  double mu = 0.0, sigma = 1.0;
};

// Fills in linear index order from one stream: deterministic given
// (seed, call sequence).
template <typename T>
TensorT<T> rng_fill(Rng& rng, UniformDist d, Shape shape) {
  if (!(d.b > d.a)) throw Error(ErrorKind::InvalidDistributionParams, "uniform requires b > a");
  TensorT<T> out(shape);
  for (std::int64_t i = 0; i < out.numel(); ++i) {
    out[i] = static_cast<T>(rng.uniform(d.a, d.b));
  }
  return out;
}

template <typename T>
TensorT<T> rng_fill(Rng& rng, NormalDist d, Shape shape) {
  if (d.sigma < 0.0) throw Error(ErrorKind::InvalidDistributionParams, "normal requires sigma >= 0");
  TensorT<T> out(shape);
  for (std::int64_t i = 0; i < out.numel(); ++i) {
    out[i] = static_cast<T>(rng.normal(d.mu, d.sigma));
  }
  return out;
}

// ---- Utilities ---------------------------------------------------------------

template <typename T>
bool all_finite(const TensorT<T>& t) {
  for (std::int64_t i = 0; i < t.numel(); ++i) {
    if (!std::isfinite(t[i])) return false;
  }
  return true;
}

inline DTensor to_double(const Tensor& t) {
  DTensor out(t.shape());
  for (std::int64_t i = 0; i < t.numel(); ++i) out[i] = static_cast<double>(t[i]);
  return out;
}

inline Tensor to_float(const DTensor& t) {
  Tensor out(t.shape());
  for (std::int64_t i = 0; i < t.numel(); ++i) out[i] = static_cast<float>(t[i]);
  return out;
}

template <typename T>
bool bit_equal(const TensorT<T>& a, const TensorT<T>& b) {
  if (!a.same_shape(b)) return false;
  return std::equal(a.data(), a.data() + a.numel(), b.data());
}

}  // namespace blindpaint
