#pragma once

#include <random>
#include <string>
#include <utility>
#include <vector>

#include "mmnet/tensor.hpp"

// Small trainable extractor standing in for a pretrained backbone. Stem and
// level-1 stride down to the feature resolution; levels 2-4 are stride-free
// so all retained levels share one spatial grid.

namespace mmnet {

struct BackboneConfig {
  int stride = 4;      // total downsampling; 1, 2 or 4
  int c2 = 32;
  int c3 = 64;
  int c4 = 64;
  int fused_dim = 64;  // D, channel count of the fused mid-level map
  bool frozen = false;
};

struct FeaturePyramid {
  Tensor level2;  // [C2,Hf,Wf]
  Tensor level3;  // [C3,Hf,Wf]
  Tensor level4;  // [C4,Hf,Wf]
};

namespace detail {

struct ConvLayer {
  Tensor kernel;  // [O,C,k,k]
  Tensor bias;    // [O]

  static ConvLayer init(int out_ch, int in_ch, int k, std::mt19937_64& rng, bool trainable) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in_ch * k * k));
    ConvLayer layer;
    layer.kernel = Tensor::uniform({out_ch, in_ch, k, k}, -bound, bound, rng, trainable);
    layer.bias = Tensor::uniform({out_ch}, -bound, bound, rng, trainable);
    return layer;
  }

  Tensor apply(const Tensor& x, int stride = 1, bool with_relu = true) const {
    const int k = kernel.extent(2);
    Tensor y = add(conv2d(x, kernel, (k - 1) / 2, stride), reshape(bias, {bias.extent(0), 1, 1}));
    return with_relu ? relu(y) : y;
  }

  void set_trainable(bool t) {
    kernel.set_requires_grad(t);
    bias.set_requires_grad(t);
  }
};

}  // namespace detail

class FeatureExtractor {
 public:
  FeatureExtractor(const BackboneConfig& cfg, std::mt19937_64& rng) : cfg_(cfg) {
    if (cfg.stride != 1 && cfg.stride != 2 && cfg.stride != 4) {
      throw std::invalid_argument("backbone stride must be 1, 2 or 4");
    }
    if (cfg.c2 < 1 || cfg.c3 < 1 || cfg.c4 < 1 || cfg.fused_dim < 1) {
      throw std::invalid_argument("backbone channel counts must be positive");
    }
    const bool trainable = !cfg.frozen;
    stem_ = detail::ConvLayer::init(cfg.c2, 3, 3, rng, trainable);
    level1_ = detail::ConvLayer::init(cfg.c2, cfg.c2, 3, rng, trainable);
    level2_ = detail::ConvLayer::init(cfg.c2, cfg.c2, 3, rng, trainable);
    level3_ = detail::ConvLayer::init(cfg.c3, cfg.c2, 3, rng, trainable);
    level4_ = detail::ConvLayer::init(cfg.c4, cfg.c3, 3, rng, trainable);
  }

  const BackboneConfig& config() const { return cfg_; }

  FeaturePyramid extract(const Tensor& image) const {
    if (image.rank() != 3 || image.extent(0) != 3) {
      throw std::invalid_argument("extract expects an rgb image [3,H,W]");
    }
    if (image.extent(1) % cfg_.stride != 0 || image.extent(2) % cfg_.stride != 0) {
      throw std::invalid_argument("image extents " + shape_str(image.shape()) +
                                  " not divisible by stride " + std::to_string(cfg_.stride));
    }
    for (double v : image.data()) {
      if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("extract expects pixel values in [0,1]");
    }
    const int s0 = cfg_.stride >= 2 ? 2 : 1;
    const int s1 = cfg_.stride == 4 ? 2 : 1;
    Tensor x = stem_.apply(image, s0);
    x = level1_.apply(x, s1);
    FeaturePyramid p;
    p.level2 = level2_.apply(x);
    p.level3 = level3_.apply(p.level2);
    p.level4 = level4_.apply(p.level3);
    return p;
  }

  std::vector<std::pair<std::string, Tensor>> named_parameters(const std::string& prefix) const {
    std::vector<std::pair<std::string, Tensor>> out;
    auto push = [&](const std::string& name, const detail::ConvLayer& l) {
      out.emplace_back(prefix + "." + name + ".kernel", l.kernel);
      out.emplace_back(prefix + "." + name + ".bias", l.bias);
    };
    push("stem", stem_);
    push("level1", level1_);
    push("level2", level2_);
    push("level3", level3_);
    push("level4", level4_);
    return out;
  }

 private:
  BackboneConfig cfg_;
  detail::ConvLayer stem_, level1_, level2_, level3_, level4_;
};

// Mid-level fusion stays trainable even with a frozen extractor, mirroring
// the protocol where only the pretrained trunk is fixed.
class MidLevelFuse {
 public:
  MidLevelFuse(const BackboneConfig& cfg, std::mt19937_64& rng)
      : conv_(detail::ConvLayer::init(cfg.fused_dim, cfg.c2 + cfg.c3, 3, rng, /*trainable=*/true)) {}

  // concat(level2, level3) channel-wise, 3x3 same-padding conv to D, ReLU.
  Tensor apply(const FeaturePyramid& p) const {
    if (p.level2.extent(1) != p.level3.extent(1) || p.level2.extent(2) != p.level3.extent(2)) {
      throw std::invalid_argument("fuse_mid_levels: levels are not resolution-aligned");
    }
    return conv_.apply(concat({p.level2, p.level3}, 0));
  }

  std::vector<std::pair<std::string, Tensor>> named_parameters(const std::string& prefix) const {
    return {{prefix + ".kernel", conv_.kernel}, {prefix + ".bias", conv_.bias}};
  }

 private:
  detail::ConvLayer conv_;
};

}  // namespace mmnet
