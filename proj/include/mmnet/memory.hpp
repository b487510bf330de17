#pragma once

#include <random>

#include "mmnet/tensor.hpp"

// Meta-class memory: a learnable [N,D] embedding matrix. Image features are
// scored against every row to produce per-pixel activation maps, and a
// reconstruction loss keeps the rows diverse enough to rebuild the features.

namespace mmnet {

struct MetaClassMemory {
  Tensor embeddings;  // [N,D], requires grad

  int count() const { return embeddings.extent(0); }
  int dim() const { return embeddings.extent(1); }
};

// Rows drawn uniformly from [-1/sqrt(D), 1/sqrt(D)].
inline MetaClassMemory make_memory(int n, int d, std::mt19937_64& rng) {
  if (n < 1 || d < 1) throw std::invalid_argument("memory requires N >= 1 and D >= 1");
  const double bound = 1.0 / std::sqrt(static_cast<double>(d));
  return {Tensor::uniform({n, d}, -bound, bound, rng, /*requires_grad=*/true)};
}

// act[n,x,y] = sigmoid(dot(features[:,x,y], M[n,:])); output [N,H,W] in (0,1).
inline Tensor compute_activation(const Tensor& features, const MetaClassMemory& memory) {
  if (features.rank() != 3) throw std::invalid_argument("compute_activation expects features [D,H,W]");
  if (features.extent(0) != memory.dim()) {
    throw std::invalid_argument("compute_activation: feature dim " + std::to_string(features.extent(0)) +
                                " does not match memory dim " + std::to_string(memory.dim()));
  }
  const int h = features.extent(1), w = features.extent(2);
  Tensor logits = matmul(memory.embeddings, reshape(features, {memory.dim(), h * w}));  // [N,HW]
  return reshape(sigmoid(logits), {memory.count(), h, w});
}

// Channel-softmax the activations, rebuild features as softmax-weighted sums
// of memory rows, correlate rebuilt against original features and take the
// mean negative log-likelihood of the matching (diagonal) entries.
inline Tensor memory_recon_loss(const Tensor& features, const Tensor& act,
                                const MetaClassMemory& memory) {
  if (features.rank() != 3 || act.rank() != 3) {
    throw std::invalid_argument("memory_recon_loss expects features [D,H,W] and activations [N,H,W]");
  }
  if (act.extent(1) != features.extent(1) || act.extent(2) != features.extent(2)) {
    throw std::invalid_argument("memory_recon_loss: spatial extents disagree (" + shape_str(features.shape()) +
                                " vs " + shape_str(act.shape()) + ")");
  }
  if (act.extent(0) != memory.count() || features.extent(0) != memory.dim()) {
    throw std::invalid_argument("memory_recon_loss: activation/memory extents disagree");
  }
  const int d = memory.dim();
  const int n = memory.count();
  const int hw = features.extent(1) * features.extent(2);

  Tensor weights = softmax(reshape(act, {n, hw}), 0);                       // [N,HW]
  Tensor rebuilt = matmul(transpose2d(memory.embeddings), weights);         // [D,HW]
  Tensor corr = matmul(transpose2d(rebuilt), reshape(features, {d, hw}));   // [HW,HW]
  Tensor diag = mul(log_softmax(corr, 1), Tensor::identity(hw));
  return mul(sum(diag), -1.0 / hw);
}

// Ablation path: hand the raw features straight through, so downstream
// consumers run on D-dimensional nodes instead of N activation channels.
inline Tensor bypass_features(const Tensor& features) { return features; }

}  // namespace mmnet
