#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace tcl {

// Per-batch gradient response summary. The *_grad fields are anchor means of
// the norms of the summed term vectors; the *_coeff fields are anchor means
// of per-pair coefficient magnitudes (|x - p + y| for positives, p for
// negatives).
struct GradientMagnitudes {
  double mean_pos_grad = 0.0;
  double mean_neg_grad = 0.0;
  double mean_pos_coeff = 0.0;
  double mean_neg_coeff = 0.0;
};

struct StepRecord {
  std::size_t epoch = 0;
  std::size_t step = 0;  // global optimizer step
  std::size_t views = 0;  // augmented batch size |I|
  double loss = 0.0;      // mean L_i over included anchors
  double lr = 0.0;
  bool has_gradients = false;
  GradientMagnitudes magnitudes;
  // Same batch evaluated under TrainConfig::compare_losses, in that order.
  std::vector<GradientMagnitudes> compared;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double loss = 0.0;  // mean of the step losses
  double lr = 0.0;
  std::size_t steps = 0;
  std::size_t views_per_batch = 0;  // size of the first augmented batch
  double wall_seconds = 0.0;
};

struct TrainTrace {
  std::vector<EpochRecord> epochs;
  std::vector<StepRecord> steps;
  std::vector<std::string> warnings;
  bool gradients_logged = false;
};

}  // namespace tcl
