#include "lhdff/audio/augment.hpp"

#include <algorithm>

#include "lhdff/error.hpp"

namespace lhdff::audio {

MaskMode parse_mask_mode(const std::string& text) {
  if (text == "zero") return MaskMode::kZeroValue;
  if (text == "mixture") return MaskMode::kMixture;
  if (text == "both") return MaskMode::kBoth;
  throw ConfigError("unknown mask mode '" + text + "' (expected zero, mixture or both)");
}

std::string to_string(MaskMode mode) {
  switch (mode) {
    case MaskMode::kZeroValue:
      return "zero";
    case MaskMode::kMixture:
      return "mixture";
    case MaskMode::kBoth:
      return "both";
  }
  return "zero";
}

namespace {

struct Stripe {
  bool time_axis = true;
  std::size_t start = 0;
  std::size_t width = 0;
  bool mixture = false;
  std::size_t donor = 0;
};

// Cell (t, f) lies inside the stripe.
bool covers(const Stripe& s, std::size_t t, std::size_t f) {
  const std::size_t pos = s.time_axis ? t : f;
  return pos >= s.start && pos < s.start + s.width;
}

}  // namespace

std::vector<MelSpectrogram> spec_augment(const std::vector<MelSpectrogram>& batch, const AugmentPolicy& policy,
                                         std::mt19937_64& rng) {
  std::vector<MelSpectrogram> out = batch;
  if (batch.empty()) return out;
  // donor index among the other batch members (self only when alone)
  const std::size_t others = batch.size() > 1 ? batch.size() - 2 : 0;
  std::uniform_int_distribution<std::size_t> pick_other(0, others);
  std::bernoulli_distribution coin(0.5);

  for (std::size_t i = 0; i < batch.size(); ++i) {
    const MelSpectrogram& src = batch[i];
    if (src.values.empty()) continue;
    const double floor_value = *std::min_element(src.values.begin(), src.values.end());

    std::vector<Stripe> stripes;
    auto draw = [&](bool time_axis, std::size_t count, std::size_t max_width) {
      const std::size_t extent = time_axis ? src.frames : src.bins;
      for (std::size_t m = 0; m < count; ++m) {
        Stripe s;
        s.time_axis = time_axis;
        const std::size_t cap = std::min(max_width, extent);
        s.width = std::uniform_int_distribution<std::size_t>(0, cap)(rng);
        s.start = std::uniform_int_distribution<std::size_t>(0, extent - s.width)(rng);
        s.mixture = policy.mode == MaskMode::kMixture || (policy.mode == MaskMode::kBoth && coin(rng));
        if (s.mixture) {
          const std::size_t d = pick_other(rng);
          s.donor = batch.size() == 1 ? 0 : (d >= i ? d + 1 : d);
        }
        stripes.push_back(s);
      }
    };
    draw(true, policy.time_masks, policy.max_time_width);
    draw(false, policy.freq_masks, policy.max_freq_width);

    MelSpectrogram& dst = out[i];
    for (const Stripe& s : stripes) {
      if (s.width == 0) continue;
      const MelSpectrogram& donor = batch[s.donor];
      for (std::size_t t = 0; t < dst.frames; ++t) {
        for (std::size_t f = 0; f < dst.bins; ++f) {
          if (!covers(s, t, f)) continue;
          if (!s.mixture) {
            dst.at(t, f) = floor_value;
          } else if (t < donor.frames && f < donor.bins) {
            dst.at(t, f) = donor.at(t, f);
          }
        }
      }
    }
  }
  return out;
}

}  // namespace lhdff::audio
