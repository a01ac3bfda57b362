#include "adscreen/crossval.hpp"

#include <algorithm>
#include <map>

#include "adscreen/error.hpp"
#include "adscreen/rng.hpp"

namespace adscreen {

std::vector<FoldSplit> kfold_split(const std::vector<int>& labels, int k, uint64_t seed,
                                   std::vector<std::string>* warnings) {
  const int n = static_cast<int>(labels.size());
  if (k < 2) throw Error("kfold_split: needs at least 2 folds");
  if (k > n)
    throw Error("kfold_split: " + std::to_string(k) + " folds exceed " + std::to_string(n) +
                " subjects");

  std::map<int, std::vector<int>> by_class;
  for (int i = 0; i < n; ++i) by_class[labels[i]].push_back(i);

  Rng rng(Rng::derive(seed, "kfold"));
  std::vector<std::vector<int>> tests(static_cast<size_t>(k));
  // One running cursor across all classes keeps both invariants at once:
  // each class lands round-robin (per-class spread <= 1) and consecutive
  // assignment makes overall fold sizes differ by <= 1.
  int64_t cursor = rng.below(k);
  for (auto& [label, members] : by_class) {
    if (static_cast<int>(members.size()) < k && warnings)
      warnings->push_back("kfold_split: class " + std::to_string(label) + " has only " +
                          std::to_string(members.size()) + " subjects for " + std::to_string(k) +
                          " folds; some folds will lack it");
    rng.shuffle(members);
    for (int idx : members) tests[static_cast<size_t>(cursor++ % k)].push_back(idx);
  }

  std::vector<FoldSplit> folds(static_cast<size_t>(k));
  for (int f = 0; f < k; ++f) {
    auto& test = tests[static_cast<size_t>(f)];
    std::sort(test.begin(), test.end());
    folds[static_cast<size_t>(f)].test = test;
    auto& train = folds[static_cast<size_t>(f)].train;
    size_t t = 0;
    for (int i = 0; i < n; ++i) {
      if (t < test.size() && test[t] == i)
        ++t;
      else
        train.push_back(i);
    }
  }
  return folds;
}

}  // namespace adscreen
