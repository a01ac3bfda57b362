#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace adscreen {

// Index split for one fold; indices refer to the caller's subject order.
struct FoldSplit {
  std::vector<int> train;
  std::vector<int> test;
};

// Subject-level stratified k-fold: test sets partition the subjects, fold
// sizes differ by at most one, and each class spreads across folds as evenly
// as its count allows. Deterministic per seed. A class with fewer members
// than folds degrades gracefully (some folds simply lack it) and pushes a
// note onto `warnings` when given.
std::vector<FoldSplit> kfold_split(const std::vector<int>& labels, int k = 10, uint64_t seed = 1,
                                   std::vector<std::string>* warnings = nullptr);

}  // namespace adscreen
