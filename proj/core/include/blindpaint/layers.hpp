// Network layers with hand-written forward and backward passes.
//
// Convolutions run as blocked im2col + packed GEMM. Backward passes are the
// exact adjoints of the forward maps; parameter gradients accumulate across
// the batch in a fixed serial sample order.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "blindpaint/common.hpp"
#include "blindpaint/gemm.hpp"
#include "blindpaint/rng.hpp"
#include "blindpaint/tensor.hpp"

namespace blindpaint::nn {

template <typename T>
struct ParamRef {
  std::string name;
  TensorT<T>* value;
  TensorT<T>* grad;
};

namespace detail {

// im2col for 3x3 kernels, zero pad 1, stride 1, output rows [r0, r1).
// col[(c*3+u)*3+v][(i-r0)*w + j] = x(c, i+u-1, j+v-1), zero outside.
template <typename T>
void im2col_3x3(const T* x, std::int64_t in_c, std::int64_t h, std::int64_t w, std::int64_t r0,
                std::int64_t r1, T* col) {
  const std::int64_t nblk = (r1 - r0) * w;
  parallel_for_each(in_c * 9, [&](std::int64_t kk) {
    const std::int64_t v = kk % 3;
    const std::int64_t u = (kk / 3) % 3;
    const std::int64_t c = kk / 9;
    T* dst_base = col + kk * nblk;
    for (std::int64_t i = r0; i < r1; ++i) {
      T* dst = dst_base + (i - r0) * w;
      const std::int64_t ii = i + u - 1;
      if (ii < 0 || ii >= h) {
        std::fill(dst, dst + w, T(0));
        continue;
      }
      const T* src = x + (c * h + ii) * w;
      if (v == 0) {  // dst[j] = src[j-1]
        dst[0] = T(0);
        std::copy(src, src + w - 1, dst + 1);
      } else if (v == 1) {
        std::copy(src, src + w, dst);
      } else {  // dst[j] = src[j+1]
        std::copy(src + 1, src + w, dst);
        dst[w - 1] = T(0);
      }
    }
  });
}

// Adjoint of im2col_3x3 over the full image, gather form:
// gx(c,i,j) = sum_{u,v} col[(c*3+u)*3+v][(i+1-u)*w + (j+1-v)] for valid taps.
template <typename T>
void col2im_3x3(const T* col, std::int64_t in_c, std::int64_t h, std::int64_t w, T* gx) {
  const std::int64_t hw = h * w;
  parallel_for_each(in_c * h, [&](std::int64_t ci) {
    const std::int64_t c = ci / h;
    const std::int64_t i = ci % h;
    T* dst = gx + (c * h + i) * w;
    for (std::int64_t j = 0; j < w; ++j) {
      T acc = T(0);
      for (std::int64_t u = 0; u < 3; ++u) {
        const std::int64_t oi = i + 1 - u;
        if (oi < 0 || oi >= h) continue;
        for (std::int64_t v = 0; v < 3; ++v) {
          const std::int64_t oj = j + 1 - v;
          if (oj < 0 || oj >= w) continue;
          acc += col[((c * 3 + u) * 3 + v) * hw + oi * w + oj];
        }
      }
      dst[j] = acc;
    }
  });
}

inline std::int64_t conv_row_block(std::int64_t w, std::int64_t h) {
  const std::int64_t rows = std::max<std::int64_t>(1, 16384 / w);
  return std::min(rows, h);
}

// Copies nn values of x-row `src` starting at column j0+v-1 into dst,
// zero-filling outside [0, w).
template <typename T>
inline void copy_shifted_row(const T* src, std::int64_t w, std::int64_t j_start, int nn,
                             T* dst) {
  for (int j = 0; j < nn; ++j) {
    const std::int64_t sj = j_start + j;
    dst[j] = (sj >= 0 && sj < w) ? src[sj] : T(0);
  }
}

// Weight matrix (out_c x k) packed into MR-row panels for the micro-kernel.
template <typename T>
std::vector<T> pack_conv_weights(const TensorT<T>& weight, std::int64_t out_c, std::int64_t k) {
  constexpr int MR = blindpaint::detail::GemmTile<T>::MR;
  const std::int64_t m_panels = (out_c + MR - 1) / MR;
  std::vector<T> apack(static_cast<std::size_t>(m_panels * k * MR));
  const T* w = weight.data();
  for (std::int64_t mp = 0; mp < m_panels; ++mp) {
    const std::int64_t m0 = mp * MR;
    T* dst = apack.data() + mp * k * MR;
    for (std::int64_t p = 0; p < k; ++p) {
      for (int i = 0; i < MR; ++i) {
        dst[p * MR + i] = (m0 + i < out_c) ? w[(m0 + i) * k + p] : T(0);
      }
    }
  }
  return apack;
}

// Fused 3x3 convolution for one sample: out(o,i,j) = act(bias(o) + sum_k
// w(o,k) b(k, ij)) where the im2col matrix b is gathered panel by panel
// straight from x (implicit zero padding), never materialized. Each output
// element still accumulates its K products in one serial chain; threads split
// across output rows only.
template <typename T, bool Relu>
void conv3x3_plane(const T* x, std::int64_t in_c, std::int64_t h, std::int64_t w,
                   const T* apack, std::int64_t out_c, const T* bias, T* out) {
  constexpr int MR = blindpaint::detail::GemmTile<T>::MR;
  constexpr int NR = blindpaint::detail::GemmTile<T>::NR;
  const std::int64_t k = in_c * 9;
  const std::int64_t m_panels = (out_c + MR - 1) / MR;
  const std::int64_t hw = h * w;

  parallel_for(h, [&](std::int64_t row_lo, std::int64_t row_hi) {
    std::vector<T>& bbuf = gemm_pack_scratch<T>();
    bbuf.resize(static_cast<std::size_t>(k * NR));
    alignas(64) T acc[MR * NR];

    for (std::int64_t i = row_lo; i < row_hi; ++i) {
      for (std::int64_t j0 = 0; j0 < w; j0 += NR) {
        const int nn = static_cast<int>(std::min<std::int64_t>(NR, w - j0));
        // pack B panel: rows (c,u,v), columns j0..j0+nn
        for (std::int64_t c = 0; c < in_c; ++c) {
          for (std::int64_t u = 0; u < 3; ++u) {
            const std::int64_t ii = i + u - 1;
            T* dst = bbuf.data() + ((c * 3 + u) * 3) * NR;
            if (ii < 0 || ii >= h) {
              std::fill(dst, dst + 3 * NR, T(0));
              continue;
            }
            const T* src = x + (c * h + ii) * w;
            for (std::int64_t v = 0; v < 3; ++v) {
              copy_shifted_row(src, w, j0 + v - 1, nn, dst + v * NR);
              if (nn < NR) std::fill(dst + v * NR + nn, dst + v * NR + NR, T(0));
            }
          }
        }
        for (std::int64_t mp = 0; mp < m_panels; ++mp) {
          const std::int64_t m0 = mp * MR;
          const int mm = static_cast<int>(std::min<std::int64_t>(MR, out_c - m0));
          for (int z = 0; z < MR * NR; ++z) acc[z] = T(0);
          gemm_micro<T, MR, NR>(k, apack + mp * k * MR, bbuf.data(), acc);
          for (int m = 0; m < mm; ++m) {
            T* crow = out + (m0 + m) * hw + i * w + j0;
            const T* arow = acc + m * NR;
            const T b = bias[m0 + m];
            for (int j = 0; j < nn; ++j) {
              const T v = arow[j] + b;
              crow[j] = Relu ? (v > T(0) ? v : T(0)) : v;
            }
          }
        }
      }
    }
  });
}

}  // namespace detail

// 3x3 convolution, stride 1, zero padding 1: spatial size is preserved.
template <typename T>
class Conv2d {
 public:
  Conv2d(std::int64_t in_c, std::int64_t out_c)
      : in_c_(in_c),
        out_c_(out_c),
        weight(out_c, in_c, 3, 3),
        bias(1, out_c, 1, 1),
        grad_weight(out_c, in_c, 3, 3),
        grad_bias(1, out_c, 1, 1) {}

  std::int64_t in_channels() const { return in_c_; }
  std::int64_t out_channels() const { return out_c_; }
  std::int64_t parameter_count() const { return weight.numel() + bias.numel(); }

  TensorT<T> forward(const TensorT<T>& x) const {
    if (x.c() != in_c_) {
      throw Error(ErrorKind::ShapeMismatch,
                  "conv2d: input has " + std::to_string(x.c()) + " channels, layer expects " +
                      std::to_string(in_c_));
    }
    const std::int64_t h = x.h(), w = x.w(), hw = h * w;
    const std::int64_t k = in_c_ * 9;
    TensorT<T> out(x.n(), out_c_, h, w);

    const std::int64_t rblk = detail::conv_row_block(w, h);
    std::vector<T> col(static_cast<std::size_t>(k * rblk * w));
    for (std::int64_t n = 0; n < x.n(); ++n) {
      const T* xn = x.data() + n * in_c_ * hw;
      T* on = out.data() + n * out_c_ * hw;
      for (std::int64_t r0 = 0; r0 < h; r0 += rblk) {
        const std::int64_t r1 = std::min(h, r0 + rblk);
        const std::int64_t nblk = (r1 - r0) * w;
        detail::im2col_3x3(xn, in_c_, h, w, r0, r1, col.data());
        // out(n,o,i,j) = bias(o) + sum_k w(o,k) col(k, ij)
        parallel_for_each(out_c_, [&](std::int64_t o) {
          std::fill(on + o * hw + r0 * w, on + o * hw + r1 * w, bias[o]);
        });
        gemm<T>(false, false, out_c_, nblk, k, weight.data(), k, col.data(), nblk,
                on + r0 * w, hw, true);
      }
    }
    return out;
  }

  // Accumulates into grad_weight/grad_bias; returns grad wrt x unless
  // need_grad_x is false (then an empty tensor).
  TensorT<T> backward(const TensorT<T>& x, const TensorT<T>& grad_out, bool need_grad_x = true) {
    if (x.c() != in_c_ || grad_out.c() != out_c_ || x.n() != grad_out.n() ||
        x.h() != grad_out.h() || x.w() != grad_out.w()) {
      throw Error(ErrorKind::ShapeMismatch, "conv2d backward: " + x.shape().str() + " vs " +
                                                grad_out.shape().str());
    }
    const std::int64_t h = x.h(), w = x.w(), hw = h * w;
    const std::int64_t k = in_c_ * 9;

    // grad_b(o) = sum_{n,i,j} grad_out(n,o,i,j), serial per o.
    parallel_for_each(out_c_, [&](std::int64_t o) {
      T acc = grad_bias[o];
      for (std::int64_t n = 0; n < grad_out.n(); ++n) {
        const T* g = grad_out.data() + (n * out_c_ + o) * hw;
        for (std::int64_t p = 0; p < hw; ++p) acc += g[p];
      }
      grad_bias[o] = acc;
    });

    TensorT<T> grad_x;
    if (need_grad_x) grad_x = TensorT<T>(x.shape());
    std::vector<T> col(static_cast<std::size_t>(k * hw));
    std::vector<T> grad_col(need_grad_x ? static_cast<std::size_t>(k * hw) : 0);

    for (std::int64_t n = 0; n < x.n(); ++n) {
      const T* xn = x.data() + n * in_c_ * hw;
      const T* gn = grad_out.data() + n * out_c_ * hw;
      detail::im2col_3x3(xn, in_c_, h, w, 0, h, col.data());
      // grad_w(o,k) += sum_p g(o,p) col(k,p)
      gemm<T>(false, true, out_c_, k, hw, gn, hw, col.data(), hw, grad_weight.data(), k, true);
      if (need_grad_x) {
        // grad_col(k,p) = sum_o w(o,k) g(o,p)
        gemm<T>(true, false, k, hw, out_c_, weight.data(), k, gn, hw, grad_col.data(), hw,
                false);
        detail::col2im_3x3(grad_col.data(), in_c_, h, w, grad_x.data() + n * in_c_ * hw);
      }
    }
    return grad_x;
  }

  void zero_grad() {
    grad_weight.fill(T(0));
    grad_bias.fill(T(0));
  }

  void collect_params(std::vector<ParamRef<T>>& out, const std::string& prefix) {
    out.push_back({prefix + ".weight", &weight, &grad_weight});
    out.push_back({prefix + ".bias", &bias, &grad_bias});
  }

  TensorT<T> weight;  // (out_c, in_c, 3, 3)
  TensorT<T> bias;    // (1, out_c, 1, 1)
  TensorT<T> grad_weight;
  TensorT<T> grad_bias;

 private:
  std::int64_t in_c_;
  std::int64_t out_c_;
};

// Transposed convolution, kernel 2x2, stride 2: doubles the spatial size.
// Output windows do not overlap, so each output pixel is
//   out(n,o,2i+u,2j+v) = bias(o) + sum_c x(n,c,i,j) w(c,o,u,v).
template <typename T>
class Deconv2d {
 public:
  Deconv2d(std::int64_t in_c, std::int64_t out_c)
      : in_c_(in_c),
        out_c_(out_c),
        weight(in_c, out_c, 2, 2),
        bias(1, out_c, 1, 1),
        grad_weight(in_c, out_c, 2, 2),
        grad_bias(1, out_c, 1, 1) {}

  std::int64_t in_channels() const { return in_c_; }
  std::int64_t out_channels() const { return out_c_; }
  std::int64_t parameter_count() const { return weight.numel() + bias.numel(); }

  TensorT<T> forward(const TensorT<T>& x) const {
    if (x.c() != in_c_) {
      throw Error(ErrorKind::ShapeMismatch,
                  "deconv2d: input has " + std::to_string(x.c()) + " channels, layer expects " +
                      std::to_string(in_c_));
    }
    const std::int64_t h = x.h(), w = x.w(), hw = h * w;
    const std::int64_t oh = 2 * h, ow = 2 * w;
    TensorT<T> out(x.n(), out_c_, oh, ow);

    std::vector<T> wuv(static_cast<std::size_t>(in_c_ * out_c_));
    std::vector<T> cbuf(static_cast<std::size_t>(out_c_ * hw));
    for (std::int64_t n = 0; n < x.n(); ++n) {
      const T* xn = x.data() + n * in_c_ * hw;
      for (std::int64_t u = 0; u < 2; ++u) {
        for (std::int64_t v = 0; v < 2; ++v) {
          extract_tap(u, v, wuv);
          // cbuf(o, ij) = sum_c w_uv(c,o) x(c, ij)
          gemm<T>(true, false, out_c_, hw, in_c_, wuv.data(), out_c_, xn, hw, cbuf.data(), hw,
                  false);
          parallel_for_each(out_c_, [&](std::int64_t o) {
            T* dst = out.data() + (n * out_c_ + o) * oh * ow;
            const T* src = cbuf.data() + o * hw;
            const T bo = bias[o];
            for (std::int64_t i = 0; i < h; ++i) {
              T* drow = dst + (2 * i + u) * ow + v;
              const T* srow = src + i * w;
              for (std::int64_t j = 0; j < w; ++j) drow[2 * j] = bo + srow[j];
            }
          });
        }
      }
    }
    return out;
  }

  TensorT<T> backward(const TensorT<T>& x, const TensorT<T>& grad_out, bool need_grad_x = true) {
    if (x.c() != in_c_ || grad_out.c() != out_c_ || grad_out.h() != 2 * x.h() ||
        grad_out.w() != 2 * x.w() || x.n() != grad_out.n()) {
      throw Error(ErrorKind::ShapeMismatch, "deconv2d backward: " + x.shape().str() + " vs " +
                                                grad_out.shape().str());
    }
    const std::int64_t h = x.h(), w = x.w(), hw = h * w;
    const std::int64_t oh = 2 * h, ow = 2 * w;

    parallel_for_each(out_c_, [&](std::int64_t o) {
      T acc = grad_bias[o];
      for (std::int64_t n = 0; n < grad_out.n(); ++n) {
        const T* g = grad_out.data() + (n * out_c_ + o) * oh * ow;
        for (std::int64_t p = 0; p < oh * ow; ++p) acc += g[p];
      }
      grad_bias[o] = acc;
    });

    TensorT<T> grad_x;
    if (need_grad_x) grad_x = TensorT<T>(x.shape());
    std::vector<T> wuv(static_cast<std::size_t>(in_c_ * out_c_));
    std::vector<T> gbuf(static_cast<std::size_t>(out_c_ * hw));
    std::vector<T> gw(static_cast<std::size_t>(in_c_ * out_c_));

    for (std::int64_t n = 0; n < x.n(); ++n) {
      const T* xn = x.data() + n * in_c_ * hw;
      T* gxn = need_grad_x ? grad_x.data() + n * in_c_ * hw : nullptr;
      for (std::int64_t u = 0; u < 2; ++u) {
        for (std::int64_t v = 0; v < 2; ++v) {
          parallel_for_each(out_c_, [&](std::int64_t o) {
            const T* src = grad_out.data() + (n * out_c_ + o) * oh * ow;
            T* dst = gbuf.data() + o * hw;
            for (std::int64_t i = 0; i < h; ++i) {
              const T* srow = src + (2 * i + u) * ow + v;
              T* drow = dst + i * w;
              for (std::int64_t j = 0; j < w; ++j) drow[j] = srow[2 * j];
            }
          });
          // grad_w_uv(c,o) = sum_p x(c,p) g_uv(o,p)
          gemm<T>(false, true, in_c_, out_c_, hw, xn, hw, gbuf.data(), hw, gw.data(), out_c_,
                  false);
          for (std::int64_t c = 0; c < in_c_; ++c) {
            for (std::int64_t o = 0; o < out_c_; ++o) {
              grad_weight[((c * out_c_ + o) * 2 + u) * 2 + v] += gw[c * out_c_ + o];
            }
          }
          if (need_grad_x) {
            extract_tap(u, v, wuv);
            // grad_x(c,p) += sum_o w_uv(c,o) g_uv(o,p)
            gemm<T>(false, false, in_c_, hw, out_c_, wuv.data(), out_c_, gbuf.data(), hw, gxn,
                    hw, true);
          }
        }
      }
    }
    return grad_x;
  }

  void zero_grad() {
    grad_weight.fill(T(0));
    grad_bias.fill(T(0));
  }

  void collect_params(std::vector<ParamRef<T>>& out, const std::string& prefix) {
    out.push_back({prefix + ".weight", &weight, &grad_weight});
    out.push_back({prefix + ".bias", &bias, &grad_bias});
  }

  TensorT<T> weight;  // (in_c, out_c, 2, 2)
  TensorT<T> bias;    // (1, out_c, 1, 1)
  TensorT<T> grad_weight;
  TensorT<T> grad_bias;

 private:
  void extract_tap(std::int64_t u, std::int64_t v, std::vector<T>& wuv) const {
    for (std::int64_t c = 0; c < in_c_; ++c) {
      for (std::int64_t o = 0; o < out_c_; ++o) {
        wuv[c * out_c_ + o] = weight[((c * out_c_ + o) * 2 + u) * 2 + v];
      }
    }
  }

  std::int64_t in_c_;
  std::int64_t out_c_;
};

// ---- Max pooling (2x2 windows, stride 2) ------------------------------------

template <typename T>
struct PoolResult {
  TensorT<T> out;
  Shape in_shape;
  std::vector<std::int32_t> argmax;  // linear index into the input per output element
};

template <typename T>
PoolResult<T> maxpool_forward(const TensorT<T>& x) {
  if (x.h() % 2 != 0 || x.w() % 2 != 0) {
    throw Error(ErrorKind::OddSpatialDim, "maxpool needs even spatial dims, got " +
                                              x.shape().str());
  }
  PoolResult<T> res;
  res.in_shape = x.shape();
  res.out = TensorT<T>(x.n(), x.c(), x.h() / 2, x.w() / 2);
  res.argmax.assign(static_cast<std::size_t>(res.out.numel()), 0);

  const std::int64_t oh = res.out.h(), ow = res.out.w();
  const std::int64_t h = x.h(), w = x.w();
  parallel_for_each(x.n() * x.c(), [&](std::int64_t nc) {
    const T* src = x.data() + nc * h * w;
    T* dst = res.out.data() + nc * oh * ow;
    std::int32_t* idx = res.argmax.data() + nc * oh * ow;
    for (std::int64_t i = 0; i < oh; ++i) {
      for (std::int64_t j = 0; j < ow; ++j) {
        // Scan in increasing linear index order; strict > keeps the first
        // (smallest-index) maximum on ties.
        std::int64_t best = (2 * i) * w + 2 * j;
        T best_v = src[best];
        for (std::int64_t du = 0; du < 2; ++du) {
          for (std::int64_t dv = 0; dv < 2; ++dv) {
            const std::int64_t p = (2 * i + du) * w + (2 * j + dv);
            if (src[p] > best_v) {
              best_v = src[p];
              best = p;
            }
          }
        }
        dst[i * ow + j] = best_v;
        idx[i * ow + j] = static_cast<std::int32_t>(nc * h * w + best);
      }
    }
  });
  return res;
}

template <typename T>
TensorT<T> maxpool_backward(const PoolResult<T>& pool, const TensorT<T>& grad_out) {
  if (!(grad_out.shape() == pool.out.shape())) {
    throw Error(ErrorKind::ShapeMismatch, "maxpool backward: " + grad_out.shape().str());
  }
  TensorT<T> grad_x(pool.in_shape);
  // Each output element routes to a distinct input element (windows are
  // disjoint), so the scatter is race-free.
  parallel_for(grad_out.numel(), [&](std::int64_t lo, std::int64_t hi) {
    for (std::int64_t i = lo; i < hi; ++i) grad_x[pool.argmax[i]] += grad_out[i];
  });
  return grad_x;
}

// ---- ReLU --------------------------------------------------------------------

template <typename T>
TensorT<T> relu(const TensorT<T>& x) {
  return map(x, [](T v) { return v > T(0) ? v : T(0); });
}

template <typename T>
void relu_inplace(TensorT<T>& x) {
  T* p = x.data();
  parallel_for(x.numel(), [&](std::int64_t lo, std::int64_t hi) {
    for (std::int64_t i = lo; i < hi; ++i) p[i] = p[i] > T(0) ? p[i] : T(0);
  });
}

// Masks by the forward output: out > 0 exactly where the input was > 0.
template <typename T>
TensorT<T> relu_backward(const TensorT<T>& out, const TensorT<T>& grad_out) {
  return zip(out, grad_out, [](T o, T g) { return o > T(0) ? g : T(0); }, "relu_backward");
}

// ---- He initialization --------------------------------------------------------

// weights ~ N(0, sqrt(2/fan_in)), biases zero. fan_in = in_c * kh * kw.
template <typename T>
void he_init(Rng& rng, Conv2d<T>& layer) {
  const double std_dev = std::sqrt(2.0 / static_cast<double>(layer.in_channels() * 9));
  for (std::int64_t i = 0; i < layer.weight.numel(); ++i) {
    layer.weight[i] = static_cast<T>(rng.normal(0.0, std_dev));
  }
  layer.bias.fill(T(0));
}

template <typename T>
void he_init(Rng& rng, Deconv2d<T>& layer) {
  const double std_dev = std::sqrt(2.0 / static_cast<double>(layer.in_channels() * 4));
  for (std::int64_t i = 0; i < layer.weight.numel(); ++i) {
    layer.weight[i] = static_cast<T>(rng.normal(0.0, std_dev));
  }
  layer.bias.fill(T(0));
}

}  // namespace blindpaint::nn
