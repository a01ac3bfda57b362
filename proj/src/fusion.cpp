#include "adscreen/fusion.hpp"

#include <cmath>

#include "adscreen/error.hpp"

namespace adscreen {

namespace {

void check_prob(double p, const char* what) {
  if (!(p >= 0.0 && p <= 1.0))
    throw Error("late_fuse: " + std::string(what) + " must be in [0,1], got " + std::to_string(p));
}

}  // namespace

double late_fuse(double p_a, double p_t, double w) {
  check_prob(p_a, "p_a");
  check_prob(p_t, "p_t");
  if (std::isnan(w) || w < 0.0) throw Error("late_fuse: weight must be non-negative, got " + std::to_string(w));
  if (w >= kTextOnlyWeight) return p_t;
  return (p_a + w * p_t) / (1.0 + w);
}

int classify(double p, double threshold) { return p >= threshold ? 1 : 0; }

void fuse_all(std::vector<SubjectPrediction>& preds, double w) {
  if (std::isnan(w) || w < 0.0) throw Error("fuse_all: weight must be non-negative, got " + std::to_string(w));
  for (auto& s : preds) {
    if (s.p_a && s.p_t)
      s.p_c = late_fuse(*s.p_a, *s.p_t, w);
    else if (w == 0.0 && s.p_a)
      s.p_c = *s.p_a;
    else if (w >= kTextOnlyWeight && s.p_t)
      s.p_c = *s.p_t;
    else
      s.p_c.reset();
  }
}

}  // namespace adscreen
