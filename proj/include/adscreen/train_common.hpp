#pragma once

#include <string>
#include <vector>

namespace adscreen {

struct TrainHistory {
  std::vector<float> train_loss;  // one entry per completed epoch
  std::vector<float> val_loss;    // parallel to train_loss; empty if no val split
  int best_epoch = -1;            // 0-based epoch whose weights were kept
};

// "epoch,train_loss,val_loss" rows; epoch is 1-based, val blank when absent.
void save_history_csv(const TrainHistory& h, const std::string& path);

}  // namespace adscreen
