#pragma once

#include <limits>
#include <span>
#include <vector>

namespace hybridct {

// Stops after `patience` consecutive epochs whose monitored loss fails to beat
// the best so far by more than `min_delta`.
class EarlyStopping {
 public:
  EarlyStopping(int patience, double min_delta) : patience_(patience), min_delta_(min_delta) {}

  // Returns true when training should stop after `epoch` (1-based).
  bool on_epoch_end(int epoch, double loss);

  bool improved() const { return improved_; }
  int best_epoch() const { return best_epoch_; }
  double best() const { return best_; }

 private:
  int patience_;
  double min_delta_;
  double best_ = std::numeric_limits<double>::infinity();
  int best_epoch_ = 0;
  int wait_ = 0;
  bool improved_ = false;
};

// Multiplies the learning rate by `factor` after `patience` epochs without
// improvement, never going below `min_lr`.
class ReduceLrOnPlateau {
 public:
  ReduceLrOnPlateau(double factor, int patience, double min_delta, double min_lr)
      : factor_(factor), patience_(patience), min_delta_(min_delta), min_lr_(min_lr) {}

  // Returns the learning rate for the next epoch.
  double on_epoch_end(double loss, double current_lr);

 private:
  double factor_;
  int patience_;
  double min_delta_;
  double min_lr_;
  double best_ = std::numeric_limits<double>::infinity();
  int wait_ = 0;
};

struct CallbackSchedule {
  double learning_rate = 1e-4;
  int max_epochs = 20;
  int early_stop_patience = 5;
  double min_delta = 1e-4;
  double lr_factor = 0.5;
  int lr_patience = 3;
  double lr_min = 1e-6;
};

struct CallbackTrace {
  int epochs_run = 0;        // last epoch executed (1-based)
  bool early_stopped = false;
  int best_epoch = 0;        // epoch whose weights are restored
  std::vector<double> learning_rates;  // learning rate used in each epoch
};

// Replays the callbacks over a recorded validation-loss sequence. train()
// drives the same objects, so this reproduces its control flow exactly.
CallbackTrace replay_callbacks(std::span<const double> val_losses, const CallbackSchedule& schedule);

}  // namespace hybridct
