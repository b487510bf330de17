#pragma once

// Naive loop reference implementations used to cross-check the vectorized
// library kernels. These deliberately avoid the library's tensor ops and any
// shared helper code: plain loops over flat buffers only.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

namespace oracle {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// c[m x n] = a[m x k] * b[k x n]
inline std::vector<double> matmul(const std::vector<double>& a, const std::vector<double>& b, int m,
                                  int k, int n) {
  std::vector<double> c(static_cast<std::size_t>(m) * n, 0.0);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      for (int t = 0; t < k; ++t)
        c[static_cast<std::size_t>(i) * n + j] += a[static_cast<std::size_t>(i) * k + t] * b[static_cast<std::size_t>(t) * n + j];
  return c;
}

// Direct six-loop cross-correlation: x[C,H,W], kernel[O,C,k,k].
inline std::vector<double> conv2d(const std::vector<double>& x, const std::vector<double>& kernel,
                                  int C, int H, int W, int O, int k, int pad, int stride = 1) {
  const int Ho = (H + 2 * pad - k) / stride + 1;
  const int Wo = (W + 2 * pad - k) / stride + 1;
  std::vector<double> out(static_cast<std::size_t>(O) * Ho * Wo, 0.0);
  for (int o = 0; o < O; ++o)
    for (int oy = 0; oy < Ho; ++oy)
      for (int ox = 0; ox < Wo; ++ox) {
        double acc = 0.0;
        for (int c = 0; c < C; ++c)
          for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) {
              const int iy = oy * stride + ky - pad;
              const int ix = ox * stride + kx - pad;
              if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
              acc += x[(static_cast<std::size_t>(c) * H + iy) * W + ix] *
                     kernel[((static_cast<std::size_t>(o) * C + c) * k + ky) * k + kx];
            }
        out[(static_cast<std::size_t>(o) * Ho + oy) * Wo + ox] = acc;
      }
  return out;
}

// act[n, p] = sigmoid(dot(F[:, p], M[n, :])) for features F[D, HW], memory M[N, D].
inline std::vector<double> activation(const std::vector<double>& f, const std::vector<double>& m,
                                      int D, int HW, int N) {
  std::vector<double> act(static_cast<std::size_t>(N) * HW);
  for (int n = 0; n < N; ++n)
    for (int p = 0; p < HW; ++p) {
      double dot = 0.0;
      for (int d = 0; d < D; ++d) dot += f[static_cast<std::size_t>(d) * HW + p] * m[static_cast<std::size_t>(n) * D + d];
      act[static_cast<std::size_t>(n) * HW + p] = sigmoid(dot);
    }
  return act;
}

// E[q, s] = cos(query[:, q], support[:, s]) with guarded norms; grids are [C, HW].
inline std::vector<double> pairwise_cosine(const std::vector<double>& q, const std::vector<double>& s,
                                           int C, int HW, double guard = 1e-12) {
  std::vector<double> e(static_cast<std::size_t>(HW) * HW);
  for (int a = 0; a < HW; ++a)
    for (int b = 0; b < HW; ++b) {
      double dot = 0.0, na = 0.0, nb = 0.0;
      for (int c = 0; c < C; ++c) {
        const double va = q[static_cast<std::size_t>(c) * HW + a];
        const double vb = s[static_cast<std::size_t>(c) * HW + b];
        dot += va * vb;
        na += va * va;
        nb += vb * vb;
      }
      e[static_cast<std::size_t>(a) * HW + b] = dot / ((std::sqrt(na) + guard) * (std::sqrt(nb) + guard));
    }
  return e;
}

// Full propagation: mask background columns, row-softmax, weighted sum of
// support nodes, elementwise product with the query node.
inline std::vector<double> propagate(const std::vector<double>& q, const std::vector<double>& s,
                                     const std::vector<double>& mask, int C, int HW,
                                     double neg = -1e9) {
  std::vector<double> e = pairwise_cosine(q, s, C, HW);
  std::vector<double> out(static_cast<std::size_t>(C) * HW, 0.0);
  for (int a = 0; a < HW; ++a) {
    std::vector<double> row(static_cast<std::size_t>(HW));
    double mx = -std::numeric_limits<double>::infinity();
    for (int b = 0; b < HW; ++b) {
      row[static_cast<std::size_t>(b)] = mask[static_cast<std::size_t>(b)] > 0.5 ? e[static_cast<std::size_t>(a) * HW + b] : neg;
      mx = std::max(mx, row[static_cast<std::size_t>(b)]);
    }
    double denom = 0.0;
    for (int b = 0; b < HW; ++b) {
      row[static_cast<std::size_t>(b)] = std::exp(row[static_cast<std::size_t>(b)] - mx);
      denom += row[static_cast<std::size_t>(b)];
    }
    for (int c = 0; c < C; ++c) {
      double v = 0.0;
      for (int b = 0; b < HW; ++b) v += row[static_cast<std::size_t>(b)] / denom * s[static_cast<std::size_t>(c) * HW + b];
      out[static_cast<std::size_t>(c) * HW + a] = q[static_cast<std::size_t>(c) * HW + a] * v;
    }
  }
  return out;
}

// Global-pool variant: average the foreground support nodes, then gate every
// query node with that vector.
inline std::vector<double> propagate_global(const std::vector<double>& q, const std::vector<double>& s,
                                            const std::vector<double>& mask, int C, int HW) {
  std::vector<double> g(static_cast<std::size_t>(C), 0.0);
  double count = 0.0;
  for (int b = 0; b < HW; ++b) {
    if (mask[static_cast<std::size_t>(b)] > 0.5) {
      count += 1.0;
      for (int c = 0; c < C; ++c) g[static_cast<std::size_t>(c)] += s[static_cast<std::size_t>(c) * HW + b];
    }
  }
  for (int c = 0; c < C; ++c) g[static_cast<std::size_t>(c)] /= count;
  std::vector<double> out(static_cast<std::size_t>(C) * HW);
  for (int c = 0; c < C; ++c)
    for (int a = 0; a < HW; ++a) out[static_cast<std::size_t>(c) * HW + a] = q[static_cast<std::size_t>(c) * HW + a] * g[static_cast<std::size_t>(c)];
  return out;
}

// Confidence map: support features zeroed on background, max cosine over all
// support nodes, then min-max normalization.
inline std::vector<double> confidence(const std::vector<double>& fq, const std::vector<double>& fs,
                                      const std::vector<double>& mask, int C, int HW,
                                      double eps = 1e-7, double guard = 1e-12) {
  std::vector<double> fs_masked(fs);
  for (int c = 0; c < C; ++c)
    for (int b = 0; b < HW; ++b)
      if (mask[static_cast<std::size_t>(b)] <= 0.5) fs_masked[static_cast<std::size_t>(c) * HW + b] = 0.0;
  std::vector<double> e = pairwise_cosine(fq, fs_masked, C, HW, guard);
  std::vector<double> c_raw(static_cast<std::size_t>(HW));
  for (int a = 0; a < HW; ++a) {
    double mx = -std::numeric_limits<double>::infinity();
    for (int b = 0; b < HW; ++b) mx = std::max(mx, e[static_cast<std::size_t>(a) * HW + b]);
    c_raw[static_cast<std::size_t>(a)] = mx;
  }
  const double lo = *std::min_element(c_raw.begin(), c_raw.end());
  const double hi = *std::max_element(c_raw.begin(), c_raw.end());
  std::vector<double> out(static_cast<std::size_t>(HW));
  for (int a = 0; a < HW; ++a) out[static_cast<std::size_t>(a)] = (c_raw[static_cast<std::size_t>(a)] - lo) / (hi - lo + eps);
  return out;
}

// Per-support quality: sum of sigmoids over the masked similarity row.
inline std::vector<double> quality(const std::vector<double>& e_masked, int HW) {
  std::vector<double> p(static_cast<std::size_t>(HW), 0.0);
  for (int a = 0; a < HW; ++a)
    for (int b = 0; b < HW; ++b) p[static_cast<std::size_t>(a)] += sigmoid(e_masked[static_cast<std::size_t>(a) * HW + b]);
  return p;
}

// Softmax over the K quality maps per location, then weighted sum of the K
// fused activation grids [C, HW].
inline std::vector<double> fuse_weighted(const std::vector<std::vector<double>>& acts,
                                         const std::vector<std::vector<double>>& p_raw, int C, int HW) {
  const int K = static_cast<int>(acts.size());
  std::vector<double> out(static_cast<std::size_t>(C) * HW, 0.0);
  for (int a = 0; a < HW; ++a) {
    double mx = -std::numeric_limits<double>::infinity();
    for (int k = 0; k < K; ++k) mx = std::max(mx, p_raw[static_cast<std::size_t>(k)][static_cast<std::size_t>(a)]);
    double denom = 0.0;
    std::vector<double> w(static_cast<std::size_t>(K));
    for (int k = 0; k < K; ++k) {
      w[static_cast<std::size_t>(k)] = std::exp(p_raw[static_cast<std::size_t>(k)][static_cast<std::size_t>(a)] - mx);
      denom += w[static_cast<std::size_t>(k)];
    }
    for (int k = 0; k < K; ++k)
      for (int c = 0; c < C; ++c)
        out[static_cast<std::size_t>(c) * HW + a] += w[static_cast<std::size_t>(k)] / denom * acts[static_cast<std::size_t>(k)][static_cast<std::size_t>(c) * HW + a];
  }
  return out;
}

// Memory reconstruction loss: channel softmax over activations, reconstruct
// features from the memory rows, correlate with the originals, mean negative
// log-likelihood of the diagonal.
inline double recon_loss(const std::vector<double>& f, const std::vector<double>& act,
                         const std::vector<double>& m, int D, int HW, int N) {
  std::vector<double> hat_act(static_cast<std::size_t>(N) * HW);
  for (int p = 0; p < HW; ++p) {
    double mx = -std::numeric_limits<double>::infinity();
    for (int n = 0; n < N; ++n) mx = std::max(mx, act[static_cast<std::size_t>(n) * HW + p]);
    double denom = 0.0;
    for (int n = 0; n < N; ++n) {
      hat_act[static_cast<std::size_t>(n) * HW + p] = std::exp(act[static_cast<std::size_t>(n) * HW + p] - mx);
      denom += hat_act[static_cast<std::size_t>(n) * HW + p];
    }
    for (int n = 0; n < N; ++n) hat_act[static_cast<std::size_t>(n) * HW + p] /= denom;
  }
  std::vector<double> f_hat(static_cast<std::size_t>(D) * HW, 0.0);
  for (int d = 0; d < D; ++d)
    for (int p = 0; p < HW; ++p)
      for (int n = 0; n < N; ++n)
        f_hat[static_cast<std::size_t>(d) * HW + p] += hat_act[static_cast<std::size_t>(n) * HW + p] * m[static_cast<std::size_t>(n) * D + d];
  // correlation rows: C[q, s] = dot(f_hat[:, q], f[:, s])
  double loss = 0.0;
  for (int qi = 0; qi < HW; ++qi) {
    std::vector<double> row(static_cast<std::size_t>(HW), 0.0);
    for (int si = 0; si < HW; ++si)
      for (int d = 0; d < D; ++d)
        row[static_cast<std::size_t>(si)] += f_hat[static_cast<std::size_t>(d) * HW + qi] * f[static_cast<std::size_t>(d) * HW + si];
    double mx = *std::max_element(row.begin(), row.end());
    double denom = 0.0;
    for (double v : row) denom += std::exp(v - mx);
    loss += -(row[static_cast<std::size_t>(qi)] - mx - std::log(denom));
  }
  return loss / HW;
}

// Mean pixel cross-entropy for two-class logits [2, HW] against binary targets.
inline double cross_entropy(const std::vector<double>& logits, const std::vector<double>& target,
                            int HW) {
  double loss = 0.0;
  for (int p = 0; p < HW; ++p) {
    const double l0 = logits[static_cast<std::size_t>(p)];
    const double l1 = logits[static_cast<std::size_t>(HW + p)];
    const double mx = std::max(l0, l1);
    const double lse = mx + std::log(std::exp(l0 - mx) + std::exp(l1 - mx));
    const double picked = target[static_cast<std::size_t>(p)] > 0.5 ? l1 : l0;
    loss += lse - picked;
  }
  return loss / HW;
}

}  // namespace oracle
