#include "hybridct/callbacks.hpp"

#include <algorithm>

namespace hybridct {

bool EarlyStopping::on_epoch_end(int epoch, double loss) {
  ++wait_;
  improved_ = loss < best_ - min_delta_;
  if (improved_) {
    best_ = loss;
    best_epoch_ = epoch;
    wait_ = 0;
    return false;
  }
  return wait_ >= patience_ && epoch > 1;
}

double ReduceLrOnPlateau::on_epoch_end(double loss, double current_lr) {
  if (loss < best_ - min_delta_) {
    best_ = loss;
    wait_ = 0;
    return current_lr;
  }
  ++wait_;
  if (wait_ >= patience_ && current_lr > min_lr_) {
    wait_ = 0;
    return std::max(current_lr * factor_, min_lr_);
  }
  return current_lr;
}

CallbackTrace replay_callbacks(std::span<const double> val_losses, const CallbackSchedule& schedule) {
  EarlyStopping stopper(schedule.early_stop_patience, schedule.min_delta);
  ReduceLrOnPlateau reducer(schedule.lr_factor, schedule.lr_patience, schedule.min_delta, schedule.lr_min);
  CallbackTrace trace;
  double lr = schedule.learning_rate;
  const int limit = std::min<int>(schedule.max_epochs, static_cast<int>(val_losses.size()));
  for (int epoch = 1; epoch <= limit; ++epoch) {
    trace.learning_rates.push_back(lr);
    trace.epochs_run = epoch;
    const double loss = val_losses[epoch - 1];
    const bool stop = stopper.on_epoch_end(epoch, loss);
    lr = reducer.on_epoch_end(loss, lr);
    if (stop) {
      trace.early_stopped = true;
      break;
    }
  }
  trace.best_epoch = stopper.best_epoch();
  return trace;
}

}  // namespace hybridct
