#pragma once

// Four-block CNN encoder emitting a high-level feature and a fused
// high+low feature.
//
//   mel [B, T_in, F] -> view [B, 1, T_in, F]
//   block i = (conv3x3 -> BN -> ReLU) x 2 -> avg_pool 2x2
//   block 4 output -> mean over frequency -> linear -> x_final [B, T, 1024]
//   x_high   = ReLU(linear(x_final))                       [B, T, 128]
//   x_low    = ReLU(linear(mean_freq(tap)))               [B, T', 128]
//   x_fusion = x_high + align(x_low, T)                    [B, T, 128]
//
// with T = ceil(T_in / 16) and the tap taken after block 2 or 3.

#include <array>
#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include "lhdff/audio/mel.hpp"
#include "lhdff/nn.hpp"
#include "lhdff/ops.hpp"
#include "lhdff/tensor.hpp"

namespace lhdff::model {

enum class AlignMode {
  kMeanPool,  // pool T' down to T with window ceil(T'/T), then pad/truncate
  kZeroPad,   // zero-pad both features to max(T, T')
};

AlignMode parse_align_mode(const std::string& text);
std::string to_string(AlignMode mode);

struct EncoderConfig {
  std::array<std::size_t, 4> block_channels{64, 128, 256, 512};
  std::size_t final_linear_dim = 1024;
  std::size_t fusion_dim = 128;
  int low_tap_block = 3;
  bool fusion_enabled = true;
  // When false the low projection is not built and x_fusion aliases x_high.
  bool low_branch = true;
  double width_scale = 1.0;
  AlignMode align = AlignMode::kMeanPool;
  // Inputs are padded or cropped to this many frames so a clip's features do
  // not depend on its batch. 0 pads to the longest clip of the batch.
  std::size_t fixed_frames = 192;

  std::size_t channels(int block) const;  // block in 1..4, scaled
  std::size_t final_dim() const;
  std::size_t out_dim() const;
  void validate() const;
};

// Minimum T_in accepted by the encoder (four halvings).
inline constexpr std::size_t kMinEncoderFrames = 16;

struct EncoderTrunk {
  Tensor x_final;  // [B, T, final_dim]
  Tensor tap;      // [B, C_tap, T', F_tap]
};

struct EncoderOutput {
  Tensor x_high;    // [B, T, D]
  Tensor x_fusion;  // [B, T, D]; aligned x_low when fusion is disabled
  Tensor x_low;     // [B, T, D] aligned low feature (undefined without a low branch)
  std::size_t frames = 0;
  std::vector<std::size_t> valid_frames;  // per batch entry, for memory masking
};

// ceil(n / 2^halvings)
std::size_t halved(std::size_t n, int halvings);

// Differentiable temporal alignment of x[B, T', D] to `target` frames.
Tensor align_frames(const Tensor& x, std::size_t target, AlignMode mode);

// Log-mels stacked into [B, T, F] with T = fixed_frames, or the longest entry
// when fixed_frames is 0. Shorter entries are padded with their own minimum
// value, longer ones cropped.
struct MelBatch {
  Tensor mel;
  std::vector<std::size_t> frames;  // unpadded length of each entry (after cropping)
};
MelBatch stack_mels(const std::vector<const audio::MelSpectrogram*>& mels, std::size_t fixed_frames = 0);

class Encoder {
 public:
  Encoder(const EncoderConfig& cfg, std::mt19937_64& rng);

  const EncoderConfig& config() const { return cfg_; }

  // mel: [B, T_in, F]. Training mode uses batch statistics and updates the
  // running statistics.
  EncoderTrunk trunk(const Tensor& mel, bool training);
  EncoderOutput project_and_fuse(const EncoderTrunk& trunk, const std::vector<std::size_t>& input_frames) const;
  // input_frames: unpadded T_in per batch entry (empty = all equal to T_in).
  EncoderOutput encode(const Tensor& mel, bool training, const std::vector<std::size_t>& input_frames = {});

  void collect(nn::ParameterSet& params) const;

 private:
  struct ConvUnit {
    Tensor kernel;
    Tensor bias;
    Tensor gamma;
    Tensor beta;
    ops::BatchNormState bn;
  };

  EncoderConfig cfg_;
  std::array<std::array<ConvUnit, 2>, 4> blocks_;
  nn::Linear final_linear_;
  nn::Linear proj_high_;
  nn::Linear proj_low_;
};

}  // namespace lhdff::model
