#pragma once

#include <random>
#include <string>
#include <utility>
#include <vector>

#include "mmnet/backbone.hpp"
#include "mmnet/tensor.hpp"

// Two-scale mask decoder. The fused activation grid and the confidence map
// are concatenated, processed at scales 1.0 and 0.5 (each branch: two 3x3
// conv+ReLU blocks and a 1x1 head producing an intermediate prediction), the
// branch features are merged by a final conv block, and every prediction is
// upsampled bilinearly to image resolution.

namespace mmnet {

struct DecoderOutput {
  Tensor final_logits;                   // [2,Himg,Wimg]
  std::vector<Tensor> intermediate_logits;  // L entries, each [2,Himg,Wimg]
};

class MaskDecoder {
 public:
  static constexpr int kScales = 2;  // L

  MaskDecoder(int in_channels, int width, int out_extent, std::mt19937_64& rng)
      : in_channels_(in_channels), width_(width), out_extent_(out_extent) {
    if (in_channels < 1 || width < 1 || out_extent < 1) {
      throw std::invalid_argument("decoder: bad channel/extent configuration");
    }
    for (int b = 0; b < kScales; ++b) {
      branches_[b].conv1 = detail::ConvLayer::init(width, in_channels, 3, rng, true);
      branches_[b].conv2 = detail::ConvLayer::init(width, width, 3, rng, true);
      branches_[b].head = detail::ConvLayer::init(2, width, 1, rng, true);
    }
    merge_ = detail::ConvLayer::init(width, kScales * width, 3, rng, true);
    final_head_ = detail::ConvLayer::init(2, width, 1, rng, true);
  }

  int in_channels() const { return in_channels_; }

  DecoderOutput decode(const Tensor& fused, const Tensor& confidence) const {
    if (fused.rank() != 3) throw std::invalid_argument("decode expects fused grid [C,H,W]");
    const int h = fused.extent(1), w = fused.extent(2);
    if (confidence.rank() != 2 || confidence.extent(0) != h || confidence.extent(1) != w) {
      throw std::invalid_argument("decode: confidence map " + shape_str(confidence.shape()) +
                                  " does not match fused grid " + shape_str(fused.shape()));
    }
    if (fused.extent(0) + 1 != in_channels_) {
      throw std::invalid_argument("decode: expected " + std::to_string(in_channels_ - 1) +
                                  " fused channels, got " + std::to_string(fused.extent(0)));
    }
    Tensor input = concat({fused, reshape(confidence, {1, h, w})}, 0);

    DecoderOutput out;
    std::vector<Tensor> branch_feats;
    const double scales[kScales] = {1.0, 0.5};
    for (int b = 0; b < kScales; ++b) {
      const int bh = std::max(1, static_cast<int>(h * scales[b]));
      const int bw = std::max(1, static_cast<int>(w * scales[b]));
      Tensor x = (bh == h && bw == w) ? input : resize_bilinear(input, bh, bw);
      x = branches_[b].conv1.apply(x);
      x = branches_[b].conv2.apply(x);
      Tensor logits = branches_[b].head.apply(x, 1, /*with_relu=*/false);
      out.intermediate_logits.push_back(resize_bilinear(logits, out_extent_, out_extent_));
      branch_feats.push_back((bh == h && bw == w) ? x : resize_bilinear(x, h, w));
    }
    Tensor merged = merge_.apply(concat(branch_feats, 0));
    out.final_logits = resize_bilinear(final_head_.apply(merged, 1, /*with_relu=*/false), out_extent_, out_extent_);
    return out;
  }

  std::vector<std::pair<std::string, Tensor>> named_parameters(const std::string& prefix) const {
    std::vector<std::pair<std::string, Tensor>> out;
    auto push = [&](const std::string& name, const detail::ConvLayer& l) {
      out.emplace_back(prefix + "." + name + ".kernel", l.kernel);
      out.emplace_back(prefix + "." + name + ".bias", l.bias);
    };
    for (int b = 0; b < kScales; ++b) {
      const std::string bn = "branch" + std::to_string(b);
      push(bn + ".conv1", branches_[b].conv1);
      push(bn + ".conv2", branches_[b].conv2);
      push(bn + ".head", branches_[b].head);
    }
    push("merge", merge_);
    push("final_head", final_head_);
    return out;
  }

 private:
  struct Branch {
    detail::ConvLayer conv1, conv2, head;
  };

  int in_channels_;
  int width_;
  int out_extent_;
  Branch branches_[kScales];
  detail::ConvLayer merge_;
  detail::ConvLayer final_head_;
};

}  // namespace mmnet
