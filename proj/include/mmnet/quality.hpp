#pragma once

#include <vector>

#include "mmnet/tensor.hpp"

// Quality measurement for K-shot fusion: each support's masked cosine matrix
// is turned into a per-query-location quality score (sum of sigmoids over the
// support nodes; masked background terms vanish), the K maps are softmaxed
// per location, and the K fused activation grids are blended by those
// weights.

namespace mmnet {

// e_masked are the [HW,HW] cosine matrices with background columns at -1e9,
// as produced by propagate_with_similarity. Returns the raw [K,H,W] maps.
inline Tensor quality_maps(const std::vector<Tensor>& e_masked, int h, int w) {
  if (e_masked.empty()) throw std::invalid_argument("quality_maps: K must be >= 1");
  const int hw = h * w;
  std::vector<Tensor> per_support;
  per_support.reserve(e_masked.size());
  for (const Tensor& e : e_masked) {
    if (e.rank() != 2 || e.extent(0) != hw || e.extent(1) != hw) {
      throw std::invalid_argument("quality_maps: similarity matrix shape " + shape_str(e.shape()) +
                                  " does not match " + std::to_string(hw) + " nodes");
    }
    per_support.push_back(reshape(sum_axis(sigmoid(e), 1), {1, h, w}));
  }
  return concat(per_support, 0);
}

// Softmax the raw quality maps over the support axis and blend the K fused
// activation grids per location.
inline Tensor fuse_weighted(const std::vector<Tensor>& acts, const Tensor& quality_raw) {
  if (acts.empty()) throw std::invalid_argument("fuse_weighted: K must be >= 1");
  const int k = static_cast<int>(acts.size());
  if (quality_raw.rank() != 3 || quality_raw.extent(0) != k) {
    throw std::invalid_argument("fuse_weighted: quality maps must be [K,H,W] with K = " + std::to_string(k));
  }
  const Shape& gshape = acts[0].shape();
  for (const Tensor& a : acts) {
    if (a.shape() != gshape) throw std::invalid_argument("fuse_weighted: activation grids must share shape");
  }
  if (gshape.size() != 3 || gshape[1] != quality_raw.extent(1) || gshape[2] != quality_raw.extent(2)) {
    throw std::invalid_argument("fuse_weighted: quality maps do not match activation extents");
  }
  const int c = gshape[0], h = gshape[1], w = gshape[2];

  Tensor weights = reshape(softmax(quality_raw, 0), {k, 1, h, w});
  std::vector<Tensor> stacked;
  stacked.reserve(acts.size());
  for (const Tensor& a : acts) stacked.push_back(reshape(a, {1, c, h, w}));
  Tensor weighted = mul(concat(stacked, 0), weights);  // [K,C,H,W]
  return reshape(sum_axis(weighted, 0), {c, h, w});
}

// Baseline fusion: unweighted element-wise mean.
inline Tensor fuse_average(const std::vector<Tensor>& acts) {
  if (acts.empty()) throw std::invalid_argument("fuse_average: K must be >= 1");
  Tensor acc = acts[0];
  for (std::size_t i = 1; i < acts.size(); ++i) {
    if (acts[i].shape() != acts[0].shape()) throw std::invalid_argument("fuse_average: shape mismatch");
    acc = add(acc, acts[i]);
  }
  return mul(acc, 1.0 / static_cast<double>(acts.size()));
}

}  // namespace mmnet
