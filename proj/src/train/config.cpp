#include "lhdff/train/config.hpp"

#include <string>

#include "lhdff/error.hpp"

namespace lhdff::train {

void TrainConfig::validate() const {
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (epochs == 0) throw ConfigError("epochs must be positive");
  if (!(base_lr > 0.0)) throw ConfigError("base_lr must be positive");
  if (warmup_epochs == 0) throw ConfigError("warmup_epochs must be positive");
  if (warmup_epochs >= epochs) {
    throw ConfigError("warmup_epochs (" + std::to_string(warmup_epochs) + ") must be below epochs (" +
                      std::to_string(epochs) + ")");
  }
  if (decay_every == 0) throw ConfigError("decay_every must be positive");
  if (!(decay_factor > 0.0)) throw ConfigError("decay_factor must be positive");
  if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0)) {
    throw ConfigError("adam betas must lie in (0, 1)");
  }
  if (!(adam_eps > 0.0)) throw ConfigError("adam_eps must be positive");
}

double lr_at(std::size_t epoch, const TrainConfig& cfg) {
  if (epoch < cfg.warmup_epochs) {
    return cfg.base_lr * static_cast<double>(epoch + 1) / static_cast<double>(cfg.warmup_epochs);
  }
  // Repeated multiplication keeps the table values exact (0.1 * 0.1 != 0.01).
  double lr = cfg.base_lr;
  for (std::size_t k = epoch / cfg.decay_every; k > 0; --k) lr *= cfg.decay_factor;
  return lr;
}

}  // namespace lhdff::train
