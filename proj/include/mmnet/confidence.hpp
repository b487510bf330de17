#pragma once

#include <algorithm>
#include <vector>

#include "mmnet/propagation.hpp"
#include "mmnet/tensor.hpp"

// Foreground confidence: each query location gets the maximum cosine
// similarity between its high-level feature and any (masked) support feature,
// min-max normalized into [0,1].

namespace mmnet {

constexpr double kConfidenceEps = 1e-7;

// Support features are zeroed on background before the cosine, so background
// nodes contribute similarity 0 under the guarded norm. The min/max
// normalization statistics are treated as constants; the max similarity
// itself backpropagates through the selected support node.
inline Tensor confidence_map(const Tensor& query_feat, const Tensor& support_feat, const Tensor& mask) {
  if (query_feat.shape() != support_feat.shape()) {
    throw std::invalid_argument("confidence_map: feature grids must share shape");
  }
  if (query_feat.rank() != 3) throw std::invalid_argument("confidence_map expects [C,H,W] grids");
  const int h = query_feat.extent(1), w = query_feat.extent(2);
  if (mask.rank() != 2 || static_cast<int>(mask.size()) != h * w) {
    throw std::invalid_argument("confidence_map: mask does not match feature extents");
  }
  if (mask_foreground_count(mask) == 0) {
    throw std::invalid_argument("confidence_map: empty foreground mask");
  }
  Tensor masked_support = mul(support_feat, reshape(mask, {1, h, w}));
  Tensor similarity = pairwise_cosine(query_feat, masked_support);  // [HW,HW]
  Tensor best = max_axis(similarity, 1);                            // [HW]

  const auto& raw = best.data();
  const double lo = *std::min_element(raw.begin(), raw.end());
  const double hi = *std::max_element(raw.begin(), raw.end());
  Tensor normalized = mul(add(best, -lo), 1.0 / (hi - lo + kConfidenceEps));
  return reshape(normalized, {h, w});
}

// K-shot fusion: element-wise mean of the per-support confidence maps.
inline Tensor fuse_confidence_k(const std::vector<Tensor>& maps) {
  if (maps.empty()) throw std::invalid_argument("fuse_confidence_k: empty sequence");
  Tensor acc = maps[0];
  for (std::size_t i = 1; i < maps.size(); ++i) {
    if (maps[i].shape() != maps[0].shape()) throw std::invalid_argument("fuse_confidence_k: shape mismatch");
    acc = add(acc, maps[i]);
  }
  return mul(acc, 1.0 / static_cast<double>(maps.size()));
}

}  // namespace mmnet
