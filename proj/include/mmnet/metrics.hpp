#pragma once

#include <map>
#include <vector>

#include "mmnet/error.hpp"
#include "mmnet/tensor.hpp"

// Foreground IoU accumulated per class over episodes. The default convention
// sums intersections and unions across a class's episodes before dividing;
// per-episode averaging is available behind a flag for comparison.

namespace mmnet {

struct IouReport {
  std::vector<std::pair<int, double>> per_class;  // evaluated classes, ascending id
  double mean_iou = 0.0;
  std::vector<int> skipped;  // classes excluded because their union was zero
};

class IouAccumulator {
 public:
  explicit IouAccumulator(bool per_episode_average = false) : per_episode_(per_episode_average) {}

  void add(const Tensor& prediction, const Tensor& target, int class_id) {
    if (prediction.shape() != target.shape()) {
      throw std::invalid_argument("iou: prediction and target shapes disagree");
    }
    std::size_t inter = 0, uni = 0;
    const auto& p = prediction.data();
    const auto& t = target.data();
    for (std::size_t i = 0; i < p.size(); ++i) {
      if ((p[i] != 0.0 && p[i] != 1.0) || (t[i] != 0.0 && t[i] != 1.0)) {
        throw std::invalid_argument("iou: masks must be binary");
      }
      const bool a = p[i] == 1.0, b = t[i] == 1.0;
      inter += (a && b) ? 1 : 0;
      uni += (a || b) ? 1 : 0;
    }
    auto& s = stats_[class_id];
    s.intersection += inter;
    s.uni += uni;
    s.episodes += 1;
    if (per_episode_ && uni > 0) {
      s.ratio_sum += static_cast<double>(inter) / static_cast<double>(uni);
      s.ratio_count += 1;
    }
  }

  IouReport report(const std::vector<int>& class_set) const {
    IouReport rep;
    double total = 0.0;
    int counted = 0;
    for (int c : class_set) {
      auto it = stats_.find(c);
      if (it == stats_.end() || it->second.episodes == 0) {
        throw DataError("iou: class " + std::to_string(c) + " has zero episodes");
      }
      const auto& s = it->second;
      if (per_episode_) {
        if (s.ratio_count == 0) {
          rep.skipped.push_back(c);
          continue;
        }
        const double iou = s.ratio_sum / s.ratio_count;
        rep.per_class.emplace_back(c, iou);
        total += iou;
        ++counted;
      } else {
        if (s.uni == 0) {
          rep.skipped.push_back(c);
          continue;
        }
        const double iou = static_cast<double>(s.intersection) / static_cast<double>(s.uni);
        rep.per_class.emplace_back(c, iou);
        total += iou;
        ++counted;
      }
    }
    rep.mean_iou = counted > 0 ? total / counted : 0.0;
    return rep;
  }

 private:
  struct ClassStats {
    std::size_t intersection = 0;
    std::size_t uni = 0;
    std::size_t episodes = 0;
    double ratio_sum = 0.0;
    std::size_t ratio_count = 0;
  };

  bool per_episode_;
  std::map<int, ClassStats> stats_;
};

inline IouReport miou(const std::vector<Tensor>& predictions, const std::vector<Tensor>& targets,
                      const std::vector<int>& class_ids, const std::vector<int>& class_set,
                      bool per_episode_average = false) {
  if (predictions.size() != targets.size() || predictions.size() != class_ids.size()) {
    throw std::invalid_argument("miou: predictions, targets and class_ids must align");
  }
  IouAccumulator acc(per_episode_average);
  for (std::size_t i = 0; i < predictions.size(); ++i) acc.add(predictions[i], targets[i], class_ids[i]);
  return acc.report(class_set);
}

}  // namespace mmnet
