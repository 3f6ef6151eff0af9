#pragma once

#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include "lhdff/audio/mel.hpp"

namespace lhdff::audio {

enum class MaskMode {
  kZeroValue,  // fill with the spectrogram's minimum (log-domain zero energy)
  kMixture,    // copy the stripe from a uniformly drawn batch member
  kBoth,       // each stripe picks one of the two with a fair coin
};

MaskMode parse_mask_mode(const std::string& text);
std::string to_string(MaskMode mode);

struct AugmentPolicy {
  std::size_t time_masks = 2;
  std::size_t max_time_width = 24;
  std::size_t freq_masks = 2;
  std::size_t max_freq_width = 12;
  MaskMode mode = MaskMode::kZeroValue;
};

// Masks every spectrogram of the batch independently. Stripe widths are
// drawn uniformly from [0, max] and clamped to the axis extent. Shapes never
// change and cells outside the stripes are untouched.
std::vector<MelSpectrogram> spec_augment(const std::vector<MelSpectrogram>& batch, const AugmentPolicy& policy,
                                         std::mt19937_64& rng);

}  // namespace lhdff::audio
