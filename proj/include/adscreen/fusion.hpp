#pragma once

#include <optional>
#include <string>
#include <vector>

namespace adscreen {

// One subject's branch outputs plus the metadata the bias reports need.
// Probabilities are absent when that branch was never run for the subject.
struct SubjectPrediction {
  std::string subject_id;
  std::optional<double> p_a;  // audio branch
  std::optional<double> p_t;  // text branch
  std::optional<double> p_c;  // fused, see late_fuse
  int label = 0;              // 1 = AD, 0 = HC
  int age = 0;
  std::string gender;  // "female" | "male"
};

// Weights at or above this are treated as the text-only sentinel: the fused
// probability is p_t exactly, not the formula's value p_t + (p_a-p_t)/(1+w).
// The ~1e-14 residue the formula leaves would otherwise flip classifications
// when p_t sits on the threshold, and text-only metrics must be reproduced
// exactly at the sentinel.
constexpr double kTextOnlyWeight = 1e14;

// Weighted fusion of the two branch probabilities:
//
//   p_c = (p_a + w * p_t) / (1 + w)
//
// w = 0 is exactly the audio model; w >= kTextOnlyWeight is exactly the text
// model. For fixed p_a and w > 0, p_c is strictly increasing in p_t, and p_c
// always lies between p_a and p_t.
double late_fuse(double p_a, double p_t, double w);

// 1 (AD) iff p >= threshold: ties classify as AD.
int classify(double p, double threshold = 0.5);

// Fills p_c for every subject. Subjects missing a branch keep p_c only when
// a degenerate weight selects the branch they do have.
void fuse_all(std::vector<SubjectPrediction>& preds, double w);

}  // namespace adscreen
