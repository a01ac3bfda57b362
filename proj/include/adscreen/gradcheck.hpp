#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "adscreen/nn.hpp"

namespace adscreen {

struct GradCheckEntry {
  std::string array;
  double rel_err;  // worst |analytic - numeric| / max(array grad scale, floor)
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_rel_err = 0.0;

  bool ok(double tol) const { return max_rel_err <= tol; }
};

// Central-difference gradient check, f64 only.
//
// `backward` must zero gradients, run forward + backward and return the loss;
// `forward` must evaluate the same loss without touching gradients. Errors in
// each array are normalized by that array's largest gradient magnitude so
// near-zero entries, where finite differences are pure round-off, cannot
// drown the signal. Failures land in the report; nothing throws.
inline GradCheckReport grad_check(const std::vector<LayerParamsT<double>*>& params,
                                  const std::function<double()>& forward,
                                  const std::function<double()>& backward, double h = 1e-5,
                                  double floor = 1e-6) {
  GradCheckReport report;
  backward();
  // Copy analytic grads before the probing forwards disturb anything.
  std::vector<std::vector<double>> analytic;
  for (auto* set : params)
    for (size_t i = 0; i < set->count(); ++i) {
      const auto& slot = set->slot(i);
      if (!slot.trainable) continue;
      analytic.emplace_back(slot.grad.values());
    }
  size_t a_idx = 0;
  for (auto* set : params)
    for (size_t i = 0; i < set->count(); ++i) {
      auto& slot = set->slot(i);
      if (!slot.trainable) continue;
      const auto& a = analytic[a_idx++];
      double scale = floor;
      for (double g : a) scale = std::max(scale, std::fabs(g));
      double worst = 0.0;
      for (size_t j = 0; j < slot.value.size(); ++j) {
        const double orig = slot.value.data()[j];
        slot.value.data()[j] = orig + h;
        const double lp = forward();
        slot.value.data()[j] = orig - h;
        const double lm = forward();
        slot.value.data()[j] = orig;
        const double numeric = (lp - lm) / (2.0 * h);
        const double num_scale = std::max(scale, std::fabs(numeric));
        worst = std::max(worst, std::fabs(a[j] - numeric) / num_scale);
      }
      report.entries.push_back({slot.name, worst});
      report.max_rel_err = std::max(report.max_rel_err, worst);
    }
  return report;
}

}  // namespace adscreen
