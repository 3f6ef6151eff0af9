#include "lhdff/model/encoder.hpp"

#include <algorithm>
#include <cmath>

#include "lhdff/error.hpp"

namespace lhdff::model {

AlignMode parse_align_mode(const std::string& text) {
  if (text == "mean-pool") return AlignMode::kMeanPool;
  if (text == "zero-pad") return AlignMode::kZeroPad;
  throw ConfigError("unknown align mode '" + text + "' (expected mean-pool or zero-pad)");
}

std::string to_string(AlignMode mode) { return mode == AlignMode::kMeanPool ? "mean-pool" : "zero-pad"; }

namespace {

std::size_t scaled(std::size_t base, double scale) {
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(static_cast<double>(base) * scale)));
}

}  // namespace

std::size_t EncoderConfig::channels(int block) const {
  if (block < 1 || block > 4) throw ConfigError("encoder block index must be 1..4, got " + std::to_string(block));
  return scaled(block_channels[static_cast<std::size_t>(block - 1)], width_scale);
}

std::size_t EncoderConfig::final_dim() const { return scaled(final_linear_dim, width_scale); }
std::size_t EncoderConfig::out_dim() const { return scaled(fusion_dim, width_scale); }

void EncoderConfig::validate() const {
  if (!(width_scale > 0.0)) throw ConfigError("width_scale must be positive");
  if (low_tap_block != 2 && low_tap_block != 3) {
    throw ConfigError("low_tap_block must be 2 or 3, got " + std::to_string(low_tap_block));
  }
  for (std::size_t c : block_channels) {
    if (c == 0) throw ConfigError("block channel counts must be positive");
  }
  if (final_linear_dim == 0 || fusion_dim == 0) throw ConfigError("encoder widths must be positive");
  if (!low_branch && !fusion_enabled) throw ConfigError("nonfusion encoder needs the low branch");
  if (fixed_frames != 0 && fixed_frames < kMinEncoderFrames) {
    throw ConfigError("fixed_frames must be 0 or at least " + std::to_string(kMinEncoderFrames));
  }
}

std::size_t halved(std::size_t n, int halvings) {
  for (int i = 0; i < halvings; ++i) n = (n + 1) / 2;
  return n;
}

Tensor align_frames(const Tensor& x, std::size_t target, AlignMode mode) {
  if (x.rank() != 3) throw DimensionError("align_frames expects [B,T,D], got " + shape_str(x.shape()));
  if (target == 0) throw DimensionError("align_frames target must be positive");
  const std::size_t batch = x.dim(0);
  const std::size_t src_frames = x.dim(1);
  const std::size_t width = x.dim(2);

  // output frame t averages source frames [starts[t], starts[t] + counts[t])
  std::vector<std::size_t> starts(target, 0);
  std::vector<std::size_t> counts(target, 0);
  if (mode == AlignMode::kMeanPool && src_frames > target) {
    const std::size_t window = (src_frames + target - 1) / target;
    for (std::size_t t = 0; t < target; ++t) {
      const std::size_t begin = t * window;
      if (begin >= src_frames) break;
      starts[t] = begin;
      counts[t] = std::min(window, src_frames - begin);
    }
  } else {
    for (std::size_t t = 0; t < std::min(target, src_frames); ++t) {
      starts[t] = t;
      counts[t] = 1;
    }
  }

  std::vector<double> out(batch * target * width, 0.0);
  const auto d = x.data();
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t t = 0; t < target; ++t) {
      if (counts[t] == 0) continue;
      double* dst = out.data() + (b * target + t) * width;
      for (std::size_t s = starts[t]; s < starts[t] + counts[t]; ++s) {
        const double* src = d.data() + (b * src_frames + s) * width;
        for (std::size_t j = 0; j < width; ++j) dst[j] += src[j];
      }
      if (counts[t] > 1) {
        const double inv = 1.0 / static_cast<double>(counts[t]);
        for (std::size_t j = 0; j < width; ++j) dst[j] *= inv;
      }
    }
  }
  Tensor y({batch, target, width}, std::move(out));
  if (Tape::should_record({&x})) {
    auto xs = x.storage();
    auto ys = y.storage();
    Tape::active().record({xs}, y, [xs, ys, starts, counts, batch, src_frames, target, width] {
      auto& gx = xs->grad_buffer();
      for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t t = 0; t < target; ++t) {
          if (counts[t] == 0) continue;
          const double inv = 1.0 / static_cast<double>(counts[t]);
          const double* g = ys->grad.data() + (b * target + t) * width;
          for (std::size_t s = starts[t]; s < starts[t] + counts[t]; ++s) {
            double* dst = gx.data() + (b * src_frames + s) * width;
            for (std::size_t j = 0; j < width; ++j) dst[j] += g[j] * inv;
          }
        }
      }
    });
  }
  return y;
}

MelBatch stack_mels(const std::vector<const audio::MelSpectrogram*>& mels, std::size_t fixed_frames) {
  if (mels.empty()) throw DimensionError("cannot stack an empty mel batch");
  const std::size_t bins = mels.front()->bins;
  std::size_t longest = 0;
  for (const auto* m : mels) {
    if (m->bins != bins) {
      throw DimensionError("mel batch mixes " + std::to_string(bins) + " and " + std::to_string(m->bins) + " bins");
    }
    longest = std::max(longest, m->frames);
  }
  const std::size_t frames = fixed_frames > 0 ? fixed_frames : longest;
  MelBatch out;
  std::vector<double> values(mels.size() * frames * bins);
  for (std::size_t b = 0; b < mels.size(); ++b) {
    const auto& m = *mels[b];
    const std::size_t kept = std::min(m.frames, frames);
    const double floor = m.values.empty() ? 0.0 : *std::min_element(m.values.begin(), m.values.end());
    auto dst = values.begin() + static_cast<std::ptrdiff_t>(b * frames * bins);
    std::copy_n(m.values.begin(), kept * bins, dst);
    std::fill(dst + static_cast<std::ptrdiff_t>(kept * bins), dst + static_cast<std::ptrdiff_t>(frames * bins), floor);
    out.frames.push_back(kept);
  }
  out.mel = Tensor({mels.size(), frames, bins}, std::move(values));
  return out;
}

Encoder::Encoder(const EncoderConfig& cfg, std::mt19937_64& rng) : cfg_(cfg) {
  cfg_.validate();
  std::size_t in_channels = 1;
  for (int b = 0; b < 4; ++b) {
    const std::size_t out_channels = cfg_.channels(b + 1);
    for (auto& unit : blocks_[static_cast<std::size_t>(b)]) {
      unit.kernel = nn::fan_in_uniform({out_channels, in_channels, 3, 3}, in_channels * 9, rng);
      unit.bias = Tensor::zeros({out_channels}, true);
      unit.gamma = Tensor::full({out_channels}, 1.0, true);
      unit.beta = Tensor::zeros({out_channels}, true);
      unit.bn.running_mean = Tensor::zeros({out_channels});
      unit.bn.running_var = Tensor::full({out_channels}, 1.0);
      in_channels = out_channels;
    }
  }
  final_linear_ = nn::Linear::init(cfg_.channels(4), cfg_.final_dim(), rng);
  proj_high_ = nn::Linear::init(cfg_.final_dim(), cfg_.out_dim(), rng);
  if (cfg_.low_branch) proj_low_ = nn::Linear::init(cfg_.channels(cfg_.low_tap_block), cfg_.out_dim(), rng);
}

EncoderTrunk Encoder::trunk(const Tensor& mel, bool training) {
  if (mel.rank() != 3) throw DimensionError("encoder input must be [B,T_in,F], got " + shape_str(mel.shape()));
  const std::size_t batch = mel.dim(0);
  const std::size_t frames = mel.dim(1);
  const std::size_t bins = mel.dim(2);
  if (frames < kMinEncoderFrames || bins < kMinEncoderFrames) {
    throw DimensionError("encoder input " + shape_str(mel.shape()) + " is too short: need at least " +
                         std::to_string(kMinEncoderFrames) + " frames and bins");
  }
  Tensor x = ops::reshape(mel, {batch, 1, frames, bins});
  EncoderTrunk out;
  for (int b = 0; b < 4; ++b) {
    for (auto& unit : blocks_[static_cast<std::size_t>(b)]) {
      x = ops::conv2d(x, unit.kernel, unit.bias);
      x = ops::batch_norm2d(x, unit.gamma, unit.beta, unit.bn, training);
      x = ops::relu(x);
    }
    x = ops::avg_pool2d(x);
    if (b + 1 == cfg_.low_tap_block) out.tap = x;
  }
  Tensor pooled = ops::mean_axis(x, 3);                  // [B, C4, T]
  Tensor frames_major = ops::permute(pooled, {0, 2, 1});  // [B, T, C4]
  out.x_final = final_linear_(frames_major);
  return out;
}

EncoderOutput Encoder::project_and_fuse(const EncoderTrunk& trunk, const std::vector<std::size_t>& input_frames) const {
  EncoderOutput out;
  Tensor x_high = ops::relu(proj_high_(trunk.x_final));
  const std::size_t batch = x_high.dim(0);
  const std::size_t frames = x_high.dim(1);

  auto valid_for = [&](int halvings) {
    std::vector<std::size_t> v;
    for (std::size_t n : input_frames) v.push_back(std::min(halved(n, halvings), frames));
    if (v.empty()) v.assign(batch, frames);
    return v;
  };

  if (!cfg_.low_branch) {
    out.x_high = x_high;
    out.x_fusion = x_high;
    out.frames = frames;
    out.valid_frames = valid_for(4);
    return out;
  }

  Tensor low = ops::permute(ops::mean_axis(trunk.tap, 3), {0, 2, 1});  // [B, T', C_tap]
  Tensor x_low = ops::relu(proj_low_(low));
  const std::size_t low_frames = x_low.dim(1);

  std::size_t target = frames;
  if (cfg_.align == AlignMode::kZeroPad) {
    target = std::max(frames, low_frames);
    x_high = align_frames(x_high, target, AlignMode::kZeroPad);
  }
  Tensor aligned = align_frames(x_low, target, cfg_.align);
  out.x_high = x_high;
  out.x_low = aligned;
  out.x_fusion = cfg_.fusion_enabled ? ops::add(x_high, aligned) : aligned;
  out.frames = target;
  if (cfg_.align == AlignMode::kZeroPad) {
    out.valid_frames.clear();
    const int tap_halvings = cfg_.low_tap_block;
    for (std::size_t n : input_frames) out.valid_frames.push_back(std::min(halved(n, tap_halvings), target));
    if (out.valid_frames.empty()) out.valid_frames.assign(batch, target);
  } else {
    out.valid_frames = valid_for(4);
  }
  return out;
}

EncoderOutput Encoder::encode(const Tensor& mel, bool training, const std::vector<std::size_t>& input_frames) {
  if (!input_frames.empty() && input_frames.size() != mel.dim(0)) {
    throw DimensionError("encode: " + std::to_string(input_frames.size()) + " frame counts for batch " +
                         std::to_string(mel.dim(0)));
  }
  return project_and_fuse(trunk(mel, training), input_frames);
}

void Encoder::collect(nn::ParameterSet& params) const {
  for (std::size_t b = 0; b < 4; ++b) {
    for (std::size_t j = 0; j < 2; ++j) {
      const auto& unit = blocks_[b][j];
      const std::string prefix = "enc.block" + std::to_string(b + 1) + ".conv" + std::to_string(j + 1);
      params.add(prefix + ".weight", unit.kernel, nn::ParamKind::kTrainable);
      params.add(prefix + ".bias", unit.bias, nn::ParamKind::kTrainable);
      params.add(prefix + ".bn.gamma", unit.gamma, nn::ParamKind::kTrainable);
      params.add(prefix + ".bn.beta", unit.beta, nn::ParamKind::kTrainable);
      params.add(prefix + ".bn.running_mean", unit.bn.running_mean, nn::ParamKind::kBuffer);
      params.add(prefix + ".bn.running_var", unit.bn.running_var, nn::ParamKind::kBuffer);
    }
  }
  final_linear_.collect(params, "enc.final_linear");
  proj_high_.collect(params, "enc.proj_high");
  if (cfg_.low_branch) proj_low_.collect(params, "enc.proj_low");
}

}  // namespace lhdff::model
