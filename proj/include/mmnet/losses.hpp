#pragma once

#include "mmnet/decoder.hpp"
#include "mmnet/tensor.hpp"

namespace mmnet {

struct LossWeights {
  double alpha = 1.0;  // intermediate supervision
  double beta = 1.0;   // final prediction
  double gamma = 0.1;  // memory reconstruction
};

// Mean over pixels of -log softmax(logits)[target class]; logits [2,H,W],
// target binary [H,W].
inline Tensor seg_cross_entropy(const Tensor& logits, const Tensor& target) {
  if (logits.rank() != 3 || logits.extent(0) != 2) {
    throw std::invalid_argument("seg_cross_entropy expects two-class logits [2,H,W]");
  }
  const int h = logits.extent(1), w = logits.extent(2);
  if (target.rank() != 2 || target.extent(0) != h || target.extent(1) != w) {
    throw std::invalid_argument("seg_cross_entropy: target shape " + shape_str(target.shape()) +
                                " does not match logits " + shape_str(logits.shape()));
  }
  const std::size_t npx = static_cast<std::size_t>(h) * w;
  std::vector<double> onehot(2 * npx, 0.0);
  for (std::size_t p = 0; p < npx; ++p) {
    const double t = target.data()[p];
    if (t != 0.0 && t != 1.0) throw std::invalid_argument("seg_cross_entropy: non-binary target");
    onehot[(t == 1.0 ? npx : 0) + p] = 1.0;
  }
  Tensor picked = mul(log_softmax(logits, 0), Tensor::from_data({2, h, w}, std::move(onehot)));
  return mul(sum(picked), -1.0 / static_cast<double>(npx));
}

// alpha/L * sum of intermediate cross entropies + beta * final cross entropy
// + gamma * reconstruction term.
inline Tensor total_loss(const DecoderOutput& out, const Tensor& target, const Tensor& recon,
                         const LossWeights& weights) {
  if (out.intermediate_logits.empty()) {
    throw std::invalid_argument("total_loss: decoder output has no intermediate predictions");
  }
  if (weights.alpha < 0.0 || weights.beta < 0.0 || weights.gamma < 0.0) {
    throw std::invalid_argument("total_loss: weights must be non-negative");
  }
  const double l = static_cast<double>(out.intermediate_logits.size());
  Tensor acc = seg_cross_entropy(out.intermediate_logits[0], target);
  for (std::size_t i = 1; i < out.intermediate_logits.size(); ++i) {
    acc = add(acc, seg_cross_entropy(out.intermediate_logits[i], target));
  }
  Tensor total = add(mul(acc, weights.alpha / l), mul(seg_cross_entropy(out.final_logits, target), weights.beta));
  if (weights.gamma != 0.0) {
    if (recon.size() != 1) throw std::invalid_argument("total_loss: reconstruction term must be scalar");
    total = add(total, mul(recon, weights.gamma));
  }
  return total;
}

}  // namespace mmnet
