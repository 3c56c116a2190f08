// The two-subnetwork residual inpainting model.
//
// Net-D: 17 convs + 3 deconvs + 3 max-pools, U-Net style with three
// copy-and-concatenate skip links; channel width doubles after each pool and
// halves after each deconv. Net-E: a 20-conv plain chain that predicts the
// residual image from [input, gradient prior, Net-D features]; its final conv
// has no ReLU so the residual can be signed. y_hat = x + residual.
#pragma once

#include <cstdint>
#include <cstdio>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "blindpaint/common.hpp"
#include "blindpaint/layers.hpp"
#include "blindpaint/loss.hpp"
#include "blindpaint/rng.hpp"
#include "blindpaint/tensor.hpp"

namespace blindpaint::model {

enum class Variant { Full, NoNetD, PlainNetD64, NoGP, L2Loss };

std::string to_string(Variant v);
Variant variant_from_string(const std::string& s);

struct NetworkConfig {
  Variant variant = Variant::Full;
  std::int64_t base_width = 64;
  std::int64_t input_channels = 1;

  bool operator==(const NetworkConfig&) const = default;

  void validate() const {
    if (base_width < 4 || base_width % 4 != 0) {
      throw Error(ErrorKind::InvalidConfig,
                  "base_width must be >= 4 and divisible by 4, got " +
                      std::to_string(base_width));
    }
    if (input_channels != 1) {
      throw Error(ErrorKind::InvalidConfig, "the model is grayscale: input_channels must be 1");
    }
  }

  bool has_netd() const {
    return variant == Variant::Full || variant == Variant::NoGP || variant == Variant::L2Loss;
  }
  bool has_plain_feature_net() const { return variant == Variant::PlainNetD64; }
  bool has_gradient_prior() const { return variant != Variant::NoGP; }

  nn::LossKind default_loss() const {
    return variant == Variant::L2Loss ? nn::LossKind::L2 : nn::LossKind::L1;
  }

  std::int64_t nete_input_channels() const {
    std::int64_t c = input_channels;
    if (has_gradient_prior()) c += 2;
    if (has_netd() || has_plain_feature_net()) c += base_width;
    return c;
  }

  std::string to_json_string() const;
  static NetworkConfig from_json_string(const std::string& json);
};

// Pre-extracted gradient prior: forward differences of the (corrupted) input,
// zero at the trailing border. Treated as a constant; no gradient flows back.
template <typename T>
std::pair<TensorT<T>, TensorT<T>> extract_gradient_prior(const TensorT<T>& x) {
  if (x.c() != 1) {
    throw Error(ErrorKind::ShapeMismatch, "gradient prior expects a 1-channel tensor");
  }
  TensorT<T> gx(x.shape());
  TensorT<T> gy(x.shape());
  const std::int64_t h = x.h(), w = x.w();
  parallel_for_each(x.n(), [&](std::int64_t n) {
    const T* src = x.data() + n * h * w;
    T* dx = gx.data() + n * h * w;
    T* dy = gy.data() + n * h * w;
    for (std::int64_t i = 0; i < h; ++i) {
      for (std::int64_t j = 0; j < w; ++j) {
        dx[i * w + j] = (j + 1 < w) ? src[i * w + j + 1] - src[i * w + j] : T(0);
        dy[i * w + j] = (i + 1 < h) ? src[(i + 1) * w + j] - src[i * w + j] : T(0);
      }
    }
  });
  return {std::move(gx), std::move(gy)};
}

// ---- Net-D -------------------------------------------------------------------

template <typename T>
class NetD {
 public:
  struct Cache {
    TensorT<T> x;
    TensorT<T> e1a, e1b, e2a, e2b, e3a, e3b;
    nn::PoolResult<T> p1, p2, p3;
    TensorT<T> m1, m2, m3;
    TensorT<T> u3, cat3, d3a, d3b;
    TensorT<T> u2, cat2, d2a, d2b;
    TensorT<T> u1, cat1, d1a, d1b;
    TensorT<T> h1, h2;
    // Pre-ReLU outputs of the 20 conv/deconv units in forward order; filled
    // only when record_pre is set (used by the gradient checker's margin
    // audit).
    bool record_pre = false;
    std::vector<TensorT<T>> pre;
  };

  NetD(std::int64_t in_c, std::int64_t width)
      : w_(width),
        enc1a(in_c, width),
        enc1b(width, width),
        enc2a(width, 2 * width),
        enc2b(2 * width, 2 * width),
        enc3a(2 * width, 4 * width),
        enc3b(4 * width, 4 * width),
        mid1(4 * width, 8 * width),
        mid2(8 * width, 8 * width),
        mid3(8 * width, 8 * width),
        up3(8 * width, 4 * width),
        dec3a(8 * width, 4 * width),
        dec3b(4 * width, 4 * width),
        up2(4 * width, 2 * width),
        dec2a(4 * width, 2 * width),
        dec2b(2 * width, 2 * width),
        up1(2 * width, width),
        dec1a(2 * width, width),
        dec1b(width, width),
        head1(width, width),
        head2(width, width) {}

  // Output: (n, width, h, w). Requires h, w divisible by 8 (three poolings).
  TensorT<T> forward(const TensorT<T>& x, Cache* cache) const {
    if (x.h() % 8 != 0 || x.w() % 8 != 0) {
      throw Error(ErrorKind::SpatialNotDivisible,
                  "net-d needs spatial dims divisible by 8, got " + x.shape().str());
    }
    const bool keep = cache != nullptr;
    Cache local;
    Cache& cc = keep ? *cache : local;
    cc.pre.clear();

    auto apply = [&](auto& layer, const TensorT<T>& in) {
      TensorT<T> z = layer.forward(in);
      if (keep && cc.record_pre) cc.pre.push_back(z);
      nn::relu_inplace(z);
      return z;
    };

    cc.x = x;
    cc.e1a = apply(enc1a, cc.x);
    cc.e1b = apply(enc1b, cc.e1a);  // skip 1
    if (!keep) cc.e1a = {};
    cc.p1 = nn::maxpool_forward(cc.e1b);
    cc.e2a = apply(enc2a, cc.p1.out);
    if (!keep) cc.p1 = {};
    cc.e2b = apply(enc2b, cc.e2a);  // skip 2
    if (!keep) cc.e2a = {};
    cc.p2 = nn::maxpool_forward(cc.e2b);
    cc.e3a = apply(enc3a, cc.p2.out);
    if (!keep) cc.p2 = {};
    cc.e3b = apply(enc3b, cc.e3a);  // skip 3
    if (!keep) cc.e3a = {};
    cc.p3 = nn::maxpool_forward(cc.e3b);
    cc.m1 = apply(mid1, cc.p3.out);
    if (!keep) cc.p3 = {};
    cc.m2 = apply(mid2, cc.m1);
    if (!keep) cc.m1 = {};
    cc.m3 = apply(mid3, cc.m2);
    if (!keep) cc.m2 = {};

    cc.u3 = apply(up3, cc.m3);
    if (!keep) cc.m3 = {};
    cc.cat3 = concat_channels(cc.u3, cc.e3b);
    if (!keep) {
      cc.u3 = {};
      cc.e3b = {};
    }
    cc.d3a = apply(dec3a, cc.cat3);
    if (!keep) cc.cat3 = {};
    cc.d3b = apply(dec3b, cc.d3a);
    if (!keep) cc.d3a = {};

    cc.u2 = apply(up2, cc.d3b);
    if (!keep) cc.d3b = {};
    cc.cat2 = concat_channels(cc.u2, cc.e2b);
    if (!keep) {
      cc.u2 = {};
      cc.e2b = {};
    }
    cc.d2a = apply(dec2a, cc.cat2);
    if (!keep) cc.cat2 = {};
    cc.d2b = apply(dec2b, cc.d2a);
    if (!keep) cc.d2a = {};

    cc.u1 = apply(up1, cc.d2b);
    if (!keep) cc.d2b = {};
    cc.cat1 = concat_channels(cc.u1, cc.e1b);
    if (!keep) {
      cc.u1 = {};
      cc.e1b = {};
    }
    cc.d1a = apply(dec1a, cc.cat1);
    if (!keep) cc.cat1 = {};
    cc.d1b = apply(dec1b, cc.d1a);
    if (!keep) cc.d1a = {};

    cc.h1 = apply(head1, cc.d1b);
    if (!keep) cc.d1b = {};
    cc.h2 = apply(head2, cc.h1);
    if (!keep) cc.h1 = {};
    if (keep) return cc.h2;
    return std::move(cc.h2);
  }

  void backward(const TensorT<T>& grad_features, const Cache& cc) {
    const std::int64_t w = w_;
    TensorT<T> g = nn::relu_backward(cc.h2, grad_features);
    g = head2.backward(cc.h1, g);
    g = nn::relu_backward(cc.h1, g);
    g = head1.backward(cc.d1b, g);

    g = nn::relu_backward(cc.d1b, g);
    g = dec1b.backward(cc.d1a, g);
    g = nn::relu_backward(cc.d1a, g);
    g = dec1a.backward(cc.cat1, g);
    TensorT<T> gu1 = slice_channels(g, 0, w);
    TensorT<T> gskip1 = slice_channels(g, w, 2 * w);
    gu1 = nn::relu_backward(cc.u1, gu1);
    g = up1.backward(cc.d2b, gu1);

    g = nn::relu_backward(cc.d2b, g);
    g = dec2b.backward(cc.d2a, g);
    g = nn::relu_backward(cc.d2a, g);
    g = dec2a.backward(cc.cat2, g);
    TensorT<T> gu2 = slice_channels(g, 0, 2 * w);
    TensorT<T> gskip2 = slice_channels(g, 2 * w, 4 * w);
    gu2 = nn::relu_backward(cc.u2, gu2);
    g = up2.backward(cc.d3b, gu2);

    g = nn::relu_backward(cc.d3b, g);
    g = dec3b.backward(cc.d3a, g);
    g = nn::relu_backward(cc.d3a, g);
    g = dec3a.backward(cc.cat3, g);
    TensorT<T> gu3 = slice_channels(g, 0, 4 * w);
    TensorT<T> gskip3 = slice_channels(g, 4 * w, 8 * w);
    gu3 = nn::relu_backward(cc.u3, gu3);
    g = up3.backward(cc.m3, gu3);

    g = nn::relu_backward(cc.m3, g);
    g = mid3.backward(cc.m2, g);
    g = nn::relu_backward(cc.m2, g);
    g = mid2.backward(cc.m1, g);
    g = nn::relu_backward(cc.m1, g);
    g = mid1.backward(cc.p3.out, g);

    g = nn::maxpool_backward(cc.p3, g);
    add_inplace(g, gskip3);
    g = nn::relu_backward(cc.e3b, g);
    g = enc3b.backward(cc.e3a, g);
    g = nn::relu_backward(cc.e3a, g);
    g = enc3a.backward(cc.p2.out, g);

    g = nn::maxpool_backward(cc.p2, g);
    add_inplace(g, gskip2);
    g = nn::relu_backward(cc.e2b, g);
    g = enc2b.backward(cc.e2a, g);
    g = nn::relu_backward(cc.e2a, g);
    g = enc2a.backward(cc.p1.out, g);

    g = nn::maxpool_backward(cc.p1, g);
    add_inplace(g, gskip1);
    g = nn::relu_backward(cc.e1b, g);
    g = enc1b.backward(cc.e1a, g);
    g = nn::relu_backward(cc.e1a, g);
    enc1a.backward(cc.x, g, /*need_grad_x=*/false);
  }

  void init(Rng& rng) {
    for (auto* c : conv_layers()) nn::he_init(rng, *c);
    nn::he_init(rng, up3);
    nn::he_init(rng, up2);
    nn::he_init(rng, up1);
  }

  void zero_grad() {
    for (auto* c : conv_layers()) c->zero_grad();
    up3.zero_grad();
    up2.zero_grad();
    up1.zero_grad();
  }

  void collect_params(std::vector<nn::ParamRef<T>>& out, const std::string& prefix) {
    enc1a.collect_params(out, prefix + ".enc1.conv1");
    enc1b.collect_params(out, prefix + ".enc1.conv2");
    enc2a.collect_params(out, prefix + ".enc2.conv1");
    enc2b.collect_params(out, prefix + ".enc2.conv2");
    enc3a.collect_params(out, prefix + ".enc3.conv1");
    enc3b.collect_params(out, prefix + ".enc3.conv2");
    mid1.collect_params(out, prefix + ".mid.conv1");
    mid2.collect_params(out, prefix + ".mid.conv2");
    mid3.collect_params(out, prefix + ".mid.conv3");
    up3.collect_params(out, prefix + ".dec3.up");
    dec3a.collect_params(out, prefix + ".dec3.conv1");
    dec3b.collect_params(out, prefix + ".dec3.conv2");
    up2.collect_params(out, prefix + ".dec2.up");
    dec2a.collect_params(out, prefix + ".dec2.conv1");
    dec2b.collect_params(out, prefix + ".dec2.conv2");
    up1.collect_params(out, prefix + ".dec1.up");
    dec1a.collect_params(out, prefix + ".dec1.conv1");
    dec1b.collect_params(out, prefix + ".dec1.conv2");
    head1.collect_params(out, prefix + ".head.conv1");
    head2.collect_params(out, prefix + ".head.conv2");
  }

  std::int64_t conv_count() const { return 17; }
  std::int64_t deconv_count() const { return 3; }
  std::int64_t pool_count() const { return 3; }
  std::int64_t skip_count() const { return 3; }

  std::int64_t parameter_count() const {
    std::int64_t total = up3.parameter_count() + up2.parameter_count() + up1.parameter_count();
    for (const auto* c : {&enc1a, &enc1b, &enc2a, &enc2b, &enc3a, &enc3b, &mid1, &mid2, &mid3,
                          &dec3a, &dec3b, &dec2a, &dec2b, &dec1a, &dec1b, &head1, &head2}) {
      total += c->parameter_count();
    }
    return total;
  }

  nn::Conv2d<T> enc1a, enc1b, enc2a, enc2b, enc3a, enc3b;
  nn::Conv2d<T> mid1, mid2, mid3;
  nn::Deconv2d<T> up3, up2, up1;
  nn::Conv2d<T> dec3a, dec3b, dec2a, dec2b, dec1a, dec1b;
  nn::Conv2d<T> head1, head2;

 private:
  std::vector<nn::Conv2d<T>*> conv_layers() {
    return {&enc1a, &enc1b, &enc2a, &enc2b, &enc3a, &enc3b, &mid1,  &mid2, &mid3,
            &dec3a, &dec3b, &dec2a, &dec2b, &dec1a, &dec1b, &head1, &head2};
  }

  std::int64_t w_;
};

// ---- Plain convolutional chains (Net-E and Net-E style feature net) ----------

// chain of `depth` 3x3 convs; ReLU after each except optionally the last.
template <typename T>
class ConvChain {
 public:
  struct Cache {
    // acts[0] is the chain input; acts[l+1] is the post-ReLU output of conv l.
    std::vector<TensorT<T>> acts;
    // Pre-ReLU conv outputs (one per ReLU'd conv, in order) when record_pre
    // is set.
    bool record_pre = false;
    std::vector<TensorT<T>> pre;
  };

  ConvChain(std::int64_t in_c, std::int64_t width, std::int64_t out_c, bool relu_on_last,
            std::int64_t depth = 20)
      : relu_on_last_(relu_on_last) {
    convs_.reserve(depth);
    convs_.emplace_back(in_c, width);
    for (std::int64_t i = 0; i < depth - 2; ++i) convs_.emplace_back(width, width);
    convs_.emplace_back(width, out_c);
  }

  TensorT<T> forward(const TensorT<T>& x, Cache* cache) const {
    const std::size_t last = convs_.size() - 1;
    if (cache) {
      cache->acts.clear();
      cache->pre.clear();
      cache->acts.reserve(convs_.size());
      cache->acts.push_back(x);
      for (std::size_t l = 0; l < last; ++l) {
        TensorT<T> z = convs_[l].forward(cache->acts.back());
        if (cache->record_pre) cache->pre.push_back(z);
        nn::relu_inplace(z);
        cache->acts.push_back(std::move(z));
      }
      TensorT<T> out = convs_[last].forward(cache->acts.back());
      if (relu_on_last_) {
        if (cache->record_pre) cache->pre.push_back(out);
        nn::relu_inplace(out);
        cache->acts.push_back(out);
      }
      return out;
    }
    TensorT<T> cur = x;
    for (std::size_t l = 0; l < last; ++l) cur = nn::relu(convs_[l].forward(cur));
    TensorT<T> out = convs_[last].forward(cur);
    if (relu_on_last_) nn::relu_inplace(out);
    return out;
  }

  // Returns grad wrt the chain input when need_input_grad is set.
  TensorT<T> backward(const TensorT<T>& grad_out, const Cache& cache, bool need_input_grad) {
    const std::size_t last = convs_.size() - 1;
    TensorT<T> g = grad_out;
    if (relu_on_last_) g = nn::relu_backward(cache.acts[last + 1], g);
    g = convs_[last].backward(cache.acts[last], g);
    for (std::size_t l = last; l-- > 0;) {
      g = nn::relu_backward(cache.acts[l + 1], g);
      g = convs_[l].backward(cache.acts[l], g, l > 0 || need_input_grad);
    }
    return g;
  }

  void init(Rng& rng) {
    for (auto& c : convs_) nn::he_init(rng, c);
  }
  void zero_grad() {
    for (auto& c : convs_) c.zero_grad();
  }
  void collect_params(std::vector<nn::ParamRef<T>>& out, const std::string& prefix) {
    for (std::size_t l = 0; l < convs_.size(); ++l) {
      char name[32];
      std::snprintf(name, sizeof(name), ".conv%02zu", l + 1);
      convs_[l].collect_params(out, prefix + name);
    }
  }

  std::int64_t conv_count() const { return static_cast<std::int64_t>(convs_.size()); }
  std::int64_t parameter_count() const {
    std::int64_t total = 0;
    for (const auto& c : convs_) total += c.parameter_count();
    return total;
  }
  const nn::Conv2d<T>& conv(std::size_t i) const { return convs_[i]; }
  nn::Conv2d<T>& conv(std::size_t i) { return convs_[i]; }

 private:
  std::vector<nn::Conv2d<T>> convs_;
  bool relu_on_last_;
};

// ---- Full model ---------------------------------------------------------------

template <typename T>
struct ForwardResult {
  TensorT<T> y_hat;     // x + residual, unclamped (clamping happens at emission)
  TensorT<T> residual;  // signed
};

template <typename T>
class Network {
 public:
  struct Cache {
    bool valid = false;
    bool record_pre = false;  // also capture pre-ReLU values (margin audits)
    typename NetD<T>::Cache netd;
    typename ConvChain<T>::Cache feat;
    typename ConvChain<T>::Cache nete;
  };

  // make_variant: builds exactly the layer stack for cfg.variant and
  // He-initializes every layer from rng in parameter order.
  static Network build(const NetworkConfig& cfg, Rng& rng) {
    cfg.validate();
    Network net(cfg);
    if (net.netd_) net.netd_->init(rng);
    if (net.feat_) net.feat_->init(rng);
    net.nete_.init(rng);
    return net;
  }

  const NetworkConfig& config() const { return cfg_; }

  ForwardResult<T> forward(const TensorT<T>& x, Cache* cache = nullptr) const {
    if (x.c() != cfg_.input_channels) {
      throw Error(ErrorKind::ShapeMismatch, "network input must have " +
                                                std::to_string(cfg_.input_channels) +
                                                " channel(s), got " + x.shape().str());
    }
    if (cache) {
      cache->netd.record_pre = cache->record_pre;
      cache->feat.record_pre = cache->record_pre;
      cache->nete.record_pre = cache->record_pre;
    }
    std::vector<TensorT<T>> parts;
    parts.push_back(x);
    if (cfg_.has_gradient_prior()) {
      auto [gx, gy] = extract_gradient_prior(x);
      parts.push_back(std::move(gx));
      parts.push_back(std::move(gy));
    }
    if (netd_) {
      parts.push_back(netd_->forward(x, cache ? &cache->netd : nullptr));
    } else if (feat_) {
      parts.push_back(feat_->forward(x, cache ? &cache->feat : nullptr));
    }
    std::vector<const TensorT<T>*> part_ptrs;
    part_ptrs.reserve(parts.size());
    for (const auto& p : parts) part_ptrs.push_back(&p);
    TensorT<T> nete_in = concat_channels(part_ptrs);
    parts.clear();

    ForwardResult<T> res;
    res.residual = nete_.forward(nete_in, cache ? &cache->nete : nullptr);
    res.y_hat = add(x, res.residual);
    if (cache) cache->valid = true;
    return res;
  }

  // Reverse-mode gradients of every parameter, jointly through Net-E and the
  // feature network. The gradient prior is a constant: nothing flows into it.
  void backward(const TensorT<T>& grad_residual, Cache& cache) {
    if (!cache.valid) {
      throw Error(ErrorKind::MissingForwardCache, "backward without a cached forward pass");
    }
    const bool has_feat = netd_ || feat_;
    TensorT<T> g_in = nete_.backward(grad_residual, cache.nete, has_feat);
    if (has_feat) {
      const std::int64_t off = cfg_.input_channels + (cfg_.has_gradient_prior() ? 2 : 0);
      TensorT<T> g_feat = slice_channels(g_in, off, off + cfg_.base_width);
      if (netd_) {
        netd_->backward(g_feat, cache.netd);
      } else {
        feat_->backward(g_feat, cache.feat, false);
      }
    }
  }

  void zero_grad() {
    if (netd_) netd_->zero_grad();
    if (feat_) feat_->zero_grad();
    nete_.zero_grad();
  }

  std::vector<nn::ParamRef<T>> params() {
    std::vector<nn::ParamRef<T>> out;
    if (netd_) netd_->collect_params(out, "netd");
    if (feat_) feat_->collect_params(out, "nete64");
    nete_.collect_params(out, "nete");
    return out;
  }

  std::int64_t parameter_count() const {
    std::int64_t total = nete_.parameter_count();
    if (netd_) total += netd_->parameter_count();
    if (feat_) total += feat_->parameter_count();
    return total;
  }

  struct LayerCounts {
    std::int64_t netd_conv = 0;
    std::int64_t netd_deconv = 0;
    std::int64_t feature_conv = 0;
    std::int64_t nete_conv = 0;
  };

  LayerCounts layer_counts() const {
    LayerCounts lc;
    if (netd_) {
      lc.netd_conv = netd_->conv_count();
      lc.netd_deconv = netd_->deconv_count();
    }
    if (feat_) lc.feature_conv = feat_->conv_count();
    lc.nete_conv = nete_.conv_count();
    return lc;
  }

  const NetD<T>* netd() const { return netd_ ? &*netd_ : nullptr; }
  NetD<T>* netd() { return netd_ ? &*netd_ : nullptr; }
  const ConvChain<T>* feature_net() const { return feat_ ? &*feat_ : nullptr; }
  const ConvChain<T>& nete() const { return nete_; }
  ConvChain<T>& nete() { return nete_; }

 private:
  explicit Network(const NetworkConfig& cfg)
      : cfg_(cfg),
        nete_(cfg.nete_input_channels(), cfg.base_width, 1, /*relu_on_last=*/false) {
    if (cfg.has_netd()) netd_.emplace(cfg.input_channels, cfg.base_width);
    if (cfg.has_plain_feature_net()) {
      // Net-E style plain chain whose last layer keeps base_width channels,
      // all ReLU.
      feat_.emplace(cfg.input_channels, cfg.base_width, cfg.base_width, /*relu_on_last=*/true);
    }
  }

  NetworkConfig cfg_;
  std::optional<NetD<T>> netd_;
  std::optional<ConvChain<T>> feat_;
  ConvChain<T> nete_;
};

}  // namespace blindpaint::model
