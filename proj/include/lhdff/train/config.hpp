#pragma once

#include <cstddef>
#include <cstdint>

#include "lhdff/audio/augment.hpp"

namespace lhdff::train {

struct TrainConfig {
  std::size_t batch_size = 32;
  std::size_t epochs = 30;
  double base_lr = 5e-4;
  std::size_t warmup_epochs = 5;
  std::size_t decay_every = 10;
  double decay_factor = 0.1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double grad_clip_norm = 2.0;  // <= 0 turns clipping off
  std::uint64_t seed = 0;
  bool augment = true;
  audio::AugmentPolicy augment_policy;

  void validate() const;
};

// Linear warmup over the first warmup_epochs, then one decay_factor step at
// every multiple of decay_every.
double lr_at(std::size_t epoch, const TrainConfig& cfg);

}  // namespace lhdff::train
