#pragma once

#include <vector>

#include "mmnet/tensor.hpp"

// Activation propagation: support-mask information flows into the query
// activation grid through masked cosine attention over spatial nodes. A grid
// [C,H,W] is read as HW nodes of dimension C.

namespace mmnet {

constexpr double kMaskNegative = -1e9;   // stands in for -inf ahead of the softmax
constexpr double kNormGuard = 1e-12;     // cosine denominator guard for zero-norm nodes

inline int mask_foreground_count(const Tensor& mask) {
  int count = 0;
  for (double v : mask.data()) {
    if (v != 0.0 && v != 1.0) throw std::invalid_argument("mask must be binary");
    if (v == 1.0) ++count;
  }
  return count;
}

// Nearest-neighbor subsampling to feature resolution; stays binary.
inline Tensor downsample_mask(const Tensor& mask, int h, int w) {
  if (mask.rank() != 2) throw std::invalid_argument("downsample_mask expects [H,W]");
  const int hi = mask.extent(0), wi = mask.extent(1);
  if (h > hi || w > wi) {
    throw std::invalid_argument("downsample_mask cannot upsample (" + std::to_string(hi) + "x" +
                                std::to_string(wi) + " -> " + std::to_string(h) + "x" + std::to_string(w) + ")");
  }
  if (h < 1 || w < 1) throw std::invalid_argument("downsample_mask: bad target extents");
  std::vector<double> out(static_cast<std::size_t>(h) * w);
  for (int y = 0; y < h; ++y) {
    const int sy = std::min(static_cast<int>((y + 0.5) * hi / h), hi - 1);
    for (int x = 0; x < w; ++x) {
      const int sx = std::min(static_cast<int>((x + 0.5) * wi / w), wi - 1);
      const double v = mask.at(sy, sx);
      if (v != 0.0 && v != 1.0) throw std::invalid_argument("downsample_mask: input mask must be binary");
      out[static_cast<std::size_t>(y) * w + x] = v;
    }
  }
  return Tensor::from_data({h, w}, std::move(out));
}

namespace detail {

// [C,H,W] -> [C,HW] with guarded L2-normalized columns.
inline Tensor normalized_nodes(const Tensor& grid, const char* name) {
  if (grid.rank() != 3) throw std::invalid_argument(std::string(name) + ": node grid must be [C,H,W]");
  const int c = grid.extent(0);
  const int hw = grid.extent(1) * grid.extent(2);
  Tensor flat = reshape(grid, {c, hw});
  Tensor norms = add(sqrt(sum_axis(mul(flat, flat), 0, /*keepdim=*/true)), kNormGuard);  // [1,HW]
  return div(flat, norms);
}

}  // namespace detail

// E[q,s] = cos(query node q, support node s); values in [-1,1].
inline Tensor pairwise_cosine(const Tensor& query, const Tensor& support) {
  if (query.extent(0) != support.extent(0)) {
    throw std::invalid_argument("pairwise_cosine: node dimensions disagree (" + shape_str(query.shape()) +
                                " vs " + shape_str(support.shape()) + ")");
  }
  Tensor nq = detail::normalized_nodes(query, "pairwise_cosine");
  Tensor ns = detail::normalized_nodes(support, "pairwise_cosine");
  return matmul(transpose2d(nq), ns);
}

// Adds the background penalty to every background support column.
inline Tensor mask_similarity(const Tensor& e, const Tensor& mask) {
  const int hw = e.extent(1);
  if (mask.rank() != 2 || static_cast<int>(mask.size()) != hw) {
    throw std::invalid_argument("mask_similarity: mask does not match support node count");
  }
  if (mask_foreground_count(mask) == 0) {
    throw std::invalid_argument("mask_similarity: support mask has no foreground nodes (degenerate episode)");
  }
  std::vector<double> bias(static_cast<std::size_t>(hw));
  for (int i = 0; i < hw; ++i) bias[static_cast<std::size_t>(i)] = mask.data()[static_cast<std::size_t>(i)] == 1.0 ? 0.0 : kMaskNegative;
  return add(e, Tensor::from_data({1, hw}, std::move(bias)));
}

// Row-stochastic attention weights; background columns end up below 1e-30.
inline Tensor masked_softmax_weights(const Tensor& e, const Tensor& mask) {
  return softmax(mask_similarity(e, mask), 1);
}

struct PropagationResult {
  Tensor fused;              // [C,H,W], query nodes gated by attended support
  Tensor masked_similarity;  // [HW,HW] cosine matrix with background columns at -1e9
};

// v_q = sum_s W[q,s] * support_s;  fused_q = query_q (*) v_q.
inline PropagationResult propagate_with_similarity(const Tensor& query, const Tensor& support,
                                                   const Tensor& mask) {
  if (query.shape() != support.shape()) {
    throw std::invalid_argument("propagate: query and support grids must share shape, got " +
                                shape_str(query.shape()) + " vs " + shape_str(support.shape()));
  }
  const int c = query.extent(0);
  const int hw = query.extent(1) * query.extent(2);
  Tensor e = pairwise_cosine(query, support);
  Tensor masked = mask_similarity(e, mask);
  Tensor weights = softmax(masked, 1);                       // [HWq, HWs]
  Tensor sflat = reshape(support, {c, hw});
  Tensor attended = transpose2d(matmul(weights, transpose2d(sflat)));  // [C, HWq]
  Tensor fused = reshape(mul(reshape(query, {c, hw}), attended), query.shape());
  return {fused, masked};
}

inline Tensor propagate(const Tensor& query, const Tensor& support, const Tensor& mask) {
  return propagate_with_similarity(query, support, mask).fused;
}

// Ablation variant: a single foreground-average support vector gates every
// query node.
inline Tensor propagate_global(const Tensor& query, const Tensor& support, const Tensor& mask) {
  if (query.shape() != support.shape()) {
    throw std::invalid_argument("propagate_global: query and support grids must share shape");
  }
  const int c = query.extent(0);
  const int hw = query.extent(1) * query.extent(2);
  const int fg = mask_foreground_count(mask);
  if (fg == 0) throw std::invalid_argument("propagate_global: empty foreground mask");
  if (static_cast<int>(mask.size()) != hw) {
    throw std::invalid_argument("propagate_global: mask does not match grid extents");
  }
  Tensor row = reshape(mask, {1, hw});  // constant, no grad
  Tensor pooled = mul(sum_axis(mul(reshape(support, {c, hw}), row), 1, /*keepdim=*/true), 1.0 / fg);  // [C,1]
  return reshape(mul(reshape(query, {c, hw}), pooled), query.shape());
}

}  // namespace mmnet
