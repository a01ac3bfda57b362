#include "adscreen/train_common.hpp"

#include <fstream>

#include "adscreen/error.hpp"

namespace adscreen {

void save_history_csv(const TrainHistory& h, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write history: " + path);
  out << "epoch,train_loss,val_loss\n";
  for (size_t i = 0; i < h.train_loss.size(); ++i) {
    out << (i + 1) << "," << h.train_loss[i] << ",";
    if (i < h.val_loss.size()) out << h.val_loss[i];
    out << "\n";
  }
}

}  // namespace adscreen
