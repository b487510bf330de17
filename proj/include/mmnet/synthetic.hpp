#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <vector>

#include "mmnet/error.hpp"
#include "mmnet/propagation.hpp"
#include "mmnet/tensor.hpp"

// Synthetic few-shot dataset: 12 shape classes with distinct geometry and a
// class-specific color, drawn over a noisy gray background. Every sample is
// fully determined by (spec.seed, class_id, sample_seed), so parallel and
// serial generation agree.

namespace mmnet {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

inline std::uint64_t mix_seeds(std::uint64_t a, std::uint64_t b) {
  return splitmix64(a ^ (0x9E3779B97F4A7C15ull + splitmix64(b)));
}

// ---------------------------------------------------------------------------
// Fold protocol. Class ids are 1-based.

enum class FoldRule { kContiguous, kCocoStride };

struct FoldSpec {
  int total_classes = 12;
  int fold_index = 0;  // 0-based in [0,3]
  FoldRule rule = FoldRule::kContiguous;
};

struct FoldSplit {
  std::vector<int> train_classes;
  std::vector<int> test_classes;
};

inline FoldSplit split_folds(const FoldSpec& spec) {
  if (spec.fold_index < 0 || spec.fold_index > 3) {
    throw ConfigError("fold_index must be in [0,3], got " + std::to_string(spec.fold_index));
  }
  if (spec.total_classes < 4 || spec.total_classes % 4 != 0) {
    throw ConfigError("total_classes must be a positive multiple of 4, got " + std::to_string(spec.total_classes));
  }
  const int per_fold = spec.total_classes / 4;
  std::vector<bool> is_test(static_cast<std::size_t>(spec.total_classes) + 1, false);
  if (spec.rule == FoldRule::kContiguous) {
    for (int c = spec.fold_index * per_fold + 1; c <= (spec.fold_index + 1) * per_fold; ++c) {
      is_test[static_cast<std::size_t>(c)] = true;
    }
  } else {
    // stride rule with 1-based fold label i = fold_index + 1: classes 4x-3+i
    const int i = spec.fold_index + 1;
    for (int x = 1; x <= per_fold; ++x) is_test[static_cast<std::size_t>(4 * x - 3 + i)] = true;
  }
  FoldSplit split;
  for (int c = 1; c <= spec.total_classes; ++c) {
    (is_test[static_cast<std::size_t>(c)] ? split.test_classes : split.train_classes).push_back(c);
  }
  return split;
}

// ---------------------------------------------------------------------------
// Sample generation.

struct SyntheticSpec {
  int image_extent = 64;
  int class_count = 12;
  double background_noise = 0.08;
  double color_jitter = 0.10;
  double fg_min = 0.05;
  double fg_max = 0.60;
  std::uint64_t seed = 0;
};

struct Sample {
  Tensor image;  // [3,H,W] in [0,1]
  Tensor mask;   // [H,W] binary
};

namespace detail {

inline std::array<double, 3> hsv_to_rgb(double h, double s, double v) {
  const double c = v * s;
  const double hp = h * 6.0;
  const double x = c * (1.0 - std::fabs(std::fmod(hp, 2.0) - 1.0));
  double r = 0, g = 0, b = 0;
  if (hp < 1) {
    r = c, g = x;
  } else if (hp < 2) {
    r = x, g = c;
  } else if (hp < 3) {
    g = c, b = x;
  } else if (hp < 4) {
    g = x, b = c;
  } else if (hp < 5) {
    r = x, b = c;
  } else {
    r = c, b = x;
  }
  const double m = v - c;
  return {r + m, g + m, b + m};
}

// Geometry predicate for one of the 12 shape kinds (0-based), evaluated at
// pixel center (x,y) against center (cx,cy) and half-extent r.
inline bool shape_predicate(int kind, double x, double y, double cx, double cy, double r) {
  const double dx = x - cx, dy = y - cy;
  const double ax = std::fabs(dx), ay = std::fabs(dy);
  switch (kind) {
    case 0:  // disc
      return dx * dx + dy * dy <= r * r;
    case 1:  // square
      return ax <= r && ay <= r;
    case 2: {  // upward triangle
      const double t = (y - (cy - r)) / (2.0 * r);
      return t >= 0.0 && t <= 1.0 && ax <= t * r;
    }
    case 3: {  // ring
      const double d2 = dx * dx + dy * dy;
      return d2 <= r * r && d2 >= 0.3025 * r * r;  // inner radius 0.55 r
    }
    case 4:  // cross
      return (ax <= 0.35 * r && ay <= r) || (ay <= 0.35 * r && ax <= r);
    case 5: {  // diagonal stripes within a square
      if (ax > r || ay > r) return false;
      const double period = std::max(4.0, 0.6 * r);
      const double phase = std::fmod(dx - dy + 64.0 * period, period);
      return phase < 0.5 * period;
    }
    case 6:  // diamond
      return ax + ay <= r;
    case 7: {  // checkerboard within a square
      if (ax > r || ay > r) return false;
      const double cell = std::max(3.0, 0.5 * r);
      const int ix = static_cast<int>(std::floor((dx + r) / cell));
      const int iy = static_cast<int>(std::floor((dy + r) / cell));
      return (ix + iy) % 2 == 0;
    }
    case 8:  // H bar
      return (ax >= 0.45 * r && ax <= r && ay <= r) || (ay <= 0.25 * r && ax <= r);
    case 9:  // L bar
      return (dx >= -r && dx <= -0.4 * r && ay <= r) || (dy >= 0.4 * r && dy <= r && ax <= r);
    case 10: {  // dot grid within a square
      if (ax > r || ay > r) return false;
      const double cell = std::max(5.0, 2.0 * r / 3.0);
      const double mx = std::fmod(dx + r + 64.0 * cell, cell) - 0.5 * cell;
      const double my = std::fmod(dy + r + 64.0 * cell, cell) - 0.5 * cell;
      return mx * mx + my * my <= 0.16 * cell * cell;
    }
    default: {  // frame
      const double m = std::max(ax, ay);
      return m <= r && m >= 0.55 * r;
    }
  }
}

}  // namespace detail

inline Sample generate_synthetic(const SyntheticSpec& spec, int class_id, std::uint64_t sample_seed) {
  if (class_id < 1 || class_id > spec.class_count) {
    throw DataError("class_id " + std::to_string(class_id) + " out of range [1," +
                    std::to_string(spec.class_count) + "]");
  }
  const int n = spec.image_extent;
  const int kind = (class_id - 1) % 12;
  std::mt19937_64 rng(mix_seeds(mix_seeds(spec.seed, static_cast<std::uint64_t>(class_id)), sample_seed));

  // geometry, retried until the foreground fraction lands inside the bounds
  std::vector<double> mask(static_cast<std::size_t>(n) * n, 0.0);
  bool ok = false;
  for (int attempt = 0; attempt < 64 && !ok; ++attempt) {
    const double r = uniform_in(rng, 0.18, 0.30) * n;
    const double cx = uniform_in(rng, r + 2.0, n - r - 2.0);
    const double cy = uniform_in(rng, r + 2.0, n - r - 2.0);
    std::size_t fg = 0;
    for (int y = 0; y < n; ++y) {
      for (int x = 0; x < n; ++x) {
        const bool inside = detail::shape_predicate(kind, x + 0.5, y + 0.5, cx, cy, r);
        mask[static_cast<std::size_t>(y) * n + x] = inside ? 1.0 : 0.0;
        if (inside) ++fg;
      }
    }
    const double frac = static_cast<double>(fg) / (static_cast<double>(n) * n);
    ok = frac >= spec.fg_min && frac <= spec.fg_max;
  }
  if (!ok) throw DataError("generator failed to satisfy foreground bounds for class " + std::to_string(class_id));

  // class color with per-sample jitter over a noisy gray background
  const auto base = detail::hsv_to_rgb(static_cast<double>(kind) / 12.0, 0.75, 0.85);
  std::array<double, 3> color{};
  for (int c = 0; c < 3; ++c) {
    color[static_cast<std::size_t>(c)] =
        std::clamp(base[static_cast<std::size_t>(c)] + uniform_in(rng, -spec.color_jitter, spec.color_jitter), 0.0, 1.0);
  }
  const double bg = uniform_in(rng, 0.35, 0.55);

  std::vector<double> image(3 * static_cast<std::size_t>(n) * n);
  const std::size_t npx = static_cast<std::size_t>(n) * n;
  for (std::size_t p = 0; p < npx; ++p) {
    const bool fg = mask[p] == 1.0;
    for (int c = 0; c < 3; ++c) {
      const double noise = uniform_in(rng, -spec.background_noise, spec.background_noise);
      const double v = (fg ? color[static_cast<std::size_t>(c)] : bg) + noise;
      image[static_cast<std::size_t>(c) * npx + p] = std::clamp(v, 0.0, 1.0);
    }
  }
  return {Tensor::from_data({3, n, n}, std::move(image)), Tensor::from_data({n, n}, std::move(mask))};
}

// ---------------------------------------------------------------------------
// Episode sampling.

struct Episode {
  std::vector<Sample> support;
  Sample query;
  int class_id = 0;
};

// Draws one class and K+1 distinct samples of it; any sample whose mask is
// empty at feature resolution is resampled (bounded retries).
inline Episode sample_episode(const SyntheticSpec& spec, const std::vector<int>& classes, int k,
                              int feat_h, int feat_w, std::mt19937_64& rng) {
  if (k < 1) throw ConfigError("episode requires K >= 1 support samples");
  if (classes.empty()) throw DataError("sample_episode: empty class set");
  const std::size_t pick = std::min(classes.size() - 1, static_cast<std::size_t>(uniform_unit(rng) * classes.size()));
  const int class_id = classes[pick];

  Episode ep;
  ep.class_id = class_id;
  std::vector<std::uint64_t> used;
  auto draw_sample = [&]() {
    for (int attempt = 0; attempt < 100; ++attempt) {
      const std::uint64_t s = rng();
      bool duplicate = false;
      for (std::uint64_t u : used) duplicate = duplicate || (u == s);
      if (duplicate) continue;
      Sample sample = generate_synthetic(spec, class_id, s);
      Tensor coarse = downsample_mask(sample.mask, feat_h, feat_w);
      if (mask_foreground_count(coarse) == 0) continue;
      used.push_back(s);
      return sample;
    }
    throw DataError("sample_episode: could not draw a usable sample after bounded retries");
  };
  for (int i = 0; i < k; ++i) ep.support.push_back(draw_sample());
  ep.query = draw_sample();
  return ep;
}

}  // namespace mmnet
