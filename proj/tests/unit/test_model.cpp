#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "gradcheck.hpp"
#include "lhdff/error.hpp"
#include "lhdff/model/caption_model.hpp"
#include "lhdff/ops.hpp"
#include "op_cases.hpp"

using namespace lhdff;
using namespace lhdff::model;
using lhdff::testing::random_tensor;

namespace {

ModelConfig small_config(Variant v = Variant::kLhdff) {
  ModelConfig cfg;
  cfg.variant = v;
  cfg.encoder.width_scale = 0.125;
  cfg.encoder.fixed_frames = 0;
  cfg.decoder.dropout = 0.0;
  return cfg;
}

TokenBatch random_tokens(std::size_t batch, std::size_t steps, std::size_t vocab, std::mt19937_64& rng) {
  std::uniform_int_distribution<TokenId> d(1, static_cast<TokenId>(vocab) - 1);
  TokenBatch t{{}, batch, steps};
  for (std::size_t i = 0; i < batch * steps; ++i) t.ids.push_back(d(rng));
  return t;
}

double logsumexp(std::span<const double> row) {
  double hi = -INFINITY;
  for (double v : row) hi = std::max(hi, v);
  if (hi == -INFINITY) return hi;
  double s = 0.0;
  for (double v : row) s += std::exp(v - hi);
  return hi + std::log(s);
}

void copy_values(const nn::ParameterSet& params, const std::string& from, const std::string& to) {
  for (const auto& e : params.entries()) {
    if (e.name.rfind(from, 0) != 0) continue;
    const auto* dst = params.find(to + e.name.substr(from.size()));
    ASSERT_NE(dst, nullptr) << e.name;
    Tensor t = dst->tensor;
    std::copy(e.tensor.data().begin(), e.tensor.data().end(), t.mutable_data().begin());
  }
}

}  // namespace

TEST(Encoder, FrameBookkeeping) {
  for (std::size_t n = 16; n < 200; ++n) {
    EXPECT_EQ(halved(n, 4), (n + 15) / 16);
    EXPECT_EQ(halved(n, 3), (n + 7) / 8);
  }
}

TEST(Encoder, ShapesAtT64) {
  std::mt19937_64 rng(1);
  auto cfg = small_config().encoder_for_variant();
  Encoder enc(cfg, rng);
  const Tensor mel = random_tensor({2, 64, 64}, rng, -5.0, 0.0, false);
  const auto trunk = enc.trunk(mel, false);
  EXPECT_EQ(trunk.x_final.shape(), (Shape{2, 4, 128}));
  EXPECT_EQ(trunk.tap.shape(), (Shape{2, 32, 8, 8}));
  const auto out = enc.project_and_fuse(trunk, {});
  EXPECT_EQ(out.x_high.shape(), (Shape{2, 4, 16}));
  EXPECT_EQ(out.x_fusion.shape(), (Shape{2, 4, 16}));
}

TEST(Encoder, FullWidthShapesMatchReference) {
  std::mt19937_64 rng(2);
  EncoderConfig cfg;
  cfg.fixed_frames = 0;
  Encoder enc(cfg, rng);
  NoGradGuard guard;
  const auto trunk = enc.trunk(random_tensor({1, 16, 64}, rng, -1.0, 1.0, false), false);
  EXPECT_EQ(trunk.x_final.shape(), (Shape{1, 1, 1024}));
  EXPECT_EQ(trunk.tap.shape(), (Shape{1, 256, 2, 8}));
  EXPECT_EQ(enc.project_and_fuse(trunk, {}).x_fusion.shape(), (Shape{1, 1, 128}));
}

TEST(Encoder, BlockTwoTapWidth) {
  std::mt19937_64 rng(3);
  auto cfg = small_config(Variant::kFusionBlock2).encoder_for_variant();
  Encoder enc(cfg, rng);
  nn::ParameterSet p;
  enc.collect(p);
  EXPECT_EQ(p.find("enc.proj_low.weight")->tensor.shape(), (Shape{16, 16}));
  const auto trunk = enc.trunk(random_tensor({1, 64, 64}, rng, -1.0, 1.0, false), false);
  EXPECT_EQ(trunk.tap.shape(), (Shape{1, 16, 16, 16}));

  auto c3 = small_config().encoder_for_variant();
  Encoder e3(c3, rng);
  nn::ParameterSet p3;
  e3.collect(p3);
  EXPECT_EQ(p3.find("enc.proj_low.weight")->tensor.shape(), (Shape{32, 16}));
  ASSERT_NE(p3.find("enc.block1.conv1.weight"), nullptr);
  ASSERT_NE(p3.find("enc.final_linear.weight"), nullptr);
  ASSERT_NE(p3.find("enc.proj_high.bias"), nullptr);
}

TEST(Encoder, InvalidTapAndShortInput) {
  std::mt19937_64 rng(4);
  EncoderConfig cfg;
  cfg.low_tap_block = 4;
  EXPECT_THROW(Encoder(cfg, rng), ConfigError);
  auto ok = small_config().encoder_for_variant();
  Encoder enc(ok, rng);
  EXPECT_THROW(enc.encode(Tensor::zeros({1, 15, 64}), false), DimensionError);
}

TEST(Encoder, ConstantInputGivesConstantFinalFeature) {
  std::mt19937_64 rng(5);
  auto cfg = small_config().encoder_for_variant();
  Encoder enc(cfg, rng);
  // Move the running stats off their defaults so eval mode is not trivial.
  enc.trunk(random_tensor({2, 64, 64}, rng, -3.0, 3.0, false), true);
  const auto trunk = enc.trunk(Tensor::zeros({1, 256, 64}), false);
  // Zero padding makes frames within the receptive field of an edge differ,
  // so only frames at least 5 away from both ends are compared.
  const auto x = trunk.x_final;
  ASSERT_EQ(x.dim(1), 16u);
  for (std::size_t t = 6; t <= 10; ++t)
    for (std::size_t j = 0; j < 128; ++j) EXPECT_NEAR(x.at({0, t, j}), x.at({0, 5, j}), 1e-12);
}

TEST(Encoder, AlignMeanPoolOracle) {
  std::mt19937_64 rng(6);
  const Tensor x = random_tensor({2, 8, 3}, rng, -1.0, 1.0, false);
  const auto y = align_frames(x, 4, AlignMode::kMeanPool);
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t t = 0; t < 4; ++t)
      for (std::size_t j = 0; j < 3; ++j)
        EXPECT_NEAR(y.at({b, t, j}), 0.5 * (x.at({b, 2 * t, j}) + x.at({b, 2 * t + 1, j})), 1e-15);

  // T' = 7, T = 3: window 3 -> frames {0,1,2}, {3,4,5}, {6}
  const Tensor z = random_tensor({1, 7, 2}, rng, -1.0, 1.0, false);
  const auto w = align_frames(z, 3, AlignMode::kMeanPool);
  EXPECT_NEAR(w.at({0, 2, 1}), z.at({0, 6, 1}), 1e-15);
  // T' < T zero-pads trailing frames
  const auto p = align_frames(z, 9, AlignMode::kMeanPool);
  EXPECT_EQ(p.at({0, 6, 0}), z.at({0, 6, 0}));
  EXPECT_EQ(p.at({0, 8, 0}), 0.0);
}

TEST(Encoder, FusionIsExactSumOfHighAndAlignedLow) {
  std::mt19937_64 rng(7);
  for (Variant v : {Variant::kLhdff, Variant::kFusionBlock2}) {
    auto cfg = small_config(v).encoder_for_variant();
    Encoder enc(cfg, rng);
    const auto out = enc.encode(random_tensor({3, 48, 64}, rng, -4.0, 2.0, false), true);
    const auto h = out.x_high.data(), l = out.x_low.data(), f = out.x_fusion.data();
    for (std::size_t i = 0; i < f.size(); ++i) ASSERT_EQ(f[i], h[i] + l[i]);
  }
}

TEST(Encoder, NonfusionCarriesAlignedLow) {
  std::mt19937_64 rng(8);
  auto cfg = small_config(Variant::kNonfusion).encoder_for_variant();
  Encoder enc(cfg, rng);
  const auto out = enc.encode(random_tensor({2, 32, 64}, rng, -4.0, 2.0, false), false);
  EXPECT_EQ(std::vector<double>(out.x_fusion.data().begin(), out.x_fusion.data().end()),
            std::vector<double>(out.x_low.data().begin(), out.x_low.data().end()));
}

TEST(Encoder, ZeroLowFeatureLeavesHighUnchanged) {
  std::mt19937_64 rng(9);
  auto cfg = small_config().encoder_for_variant();
  Encoder enc(cfg, rng);
  nn::ParameterSet p;
  enc.collect(p);
  // A strongly negative low bias makes ReLU output exactly zero.
  Tensor wl = p.find("enc.proj_low.weight")->tensor;
  Tensor bl = p.find("enc.proj_low.bias")->tensor;
  for (double& v : wl.mutable_data()) v = 0.0;
  for (double& v : bl.mutable_data()) v = -1.0;
  const auto out = enc.encode(random_tensor({2, 32, 64}, rng, -4.0, 2.0, false), false);
  EXPECT_EQ(std::vector<double>(out.x_fusion.data().begin(), out.x_fusion.data().end()),
            std::vector<double>(out.x_high.data().begin(), out.x_high.data().end()));
}

TEST(Encoder, GradientReachesBothSummands) {
  std::mt19937_64 rng(10);
  auto cfg = small_config().encoder_for_variant();
  Encoder enc(cfg, rng);
  nn::ParameterSet p;
  enc.collect(p);
  for (bool training : {false, true}) {
    p.zero_grad();
    backward(ops::sum(enc.encode(random_tensor({2, 32, 64}, rng, -4.0, 2.0, false), training).x_fusion));
    for (const auto& e : p.entries()) {
      if (e.kind != nn::ParamKind::kTrainable) continue;
      if (e.name.find("block3") == std::string::npos && e.name.find("block4") == std::string::npos) continue;
      // Under batch statistics a conv bias is cancelled by the normalisation.
      const bool cancelled = training && e.name.ends_with("conv1.bias") | e.name.ends_with("conv2.bias");
      double norm = 0.0;
      for (double g : e.tensor.grad()) norm += g * g;
      if (cancelled) {
        EXPECT_LT(norm, 1e-20) << e.name;
      } else {
        EXPECT_GT(norm, 0.0) << e.name << (training ? " (train)" : " (eval)");
      }
    }
  }
}

TEST(Encoder, EvalModeIsDeterministic) {
  std::mt19937_64 rng(11);
  auto cfg = small_config().encoder_for_variant();
  Encoder enc(cfg, rng);
  const Tensor mel = random_tensor({2, 40, 64}, rng, -4.0, 2.0, false);
  const auto a = enc.encode(mel, false), b = enc.encode(mel, false);
  EXPECT_EQ(std::vector<double>(a.x_fusion.data().begin(), a.x_fusion.data().end()),
            std::vector<double>(b.x_fusion.data().begin(), b.x_fusion.data().end()));
}

TEST(Encoder, StackMelsPadsWithOwnMinimumAndCrops) {
  audio::MelSpectrogram a{2, 2, {1.0, -3.0, 4.0, 5.0}, 0.032};
  audio::MelSpectrogram b{4, 2, {0, 1, 2, 3, 4, 5, 6, 7}, 0.032};
  const auto s = stack_mels({&a, &b}, 3);
  EXPECT_EQ(s.mel.shape(), (Shape{2, 3, 2}));
  EXPECT_EQ(s.frames, (std::vector<std::size_t>{2, 3}));
  EXPECT_EQ(s.mel.at({0, 2, 0}), -3.0);
  EXPECT_EQ(s.mel.at({1, 2, 1}), 5.0);
  EXPECT_EQ(stack_mels({&a, &b}).mel.shape(), (Shape{2, 4, 2}));
  EXPECT_THROW(stack_mels({}), DimensionError);
}

TEST(Encoder, FixedFramesMakeFeaturesBatchIndependent) {
  std::mt19937_64 rng(12);
  auto cfg = small_config();
  cfg.encoder.fixed_frames = 64;
  CaptionModel net(cfg, 10, 1);
  std::normal_distribution<double> d(-3.0, 1.0);
  auto spec = [&](std::size_t frames) {
    audio::MelSpectrogram m{frames, 64, std::vector<double>(frames * 64), 0.032};
    for (double& v : m.values) v = d(rng);
    return m;
  };
  const auto a = spec(40), b = spec(60);
  const auto alone = stack_mels({&a}, 64);
  const auto pair = stack_mels({&a, &b}, 64);
  const auto x1 = net.encode(alone.mel, false, alone.frames);
  const auto x2 = net.encode(pair.mel, false, pair.frames);
  const auto n = x1.x_fusion.numel();
  for (std::size_t i = 0; i < n; ++i) ASSERT_EQ(x1.x_fusion.data()[i], x2.x_fusion.data()[i]);
}

class DecoderTest : public ::testing::Test {
 protected:
  static constexpr std::size_t kVocab = 11;
  std::mt19937_64 rng{21};

  EncoderOutput memory_for(CaptionModel& net, std::size_t batch) {
    return net.encode(random_tensor({batch, 32, 64}, rng, -4.0, 2.0, false), false);
  }
};

TEST_F(DecoderTest, RowsAreNormalisedAndFusionIsTheSum) {
  for (Variant v : {Variant::kLhdff, Variant::kNonfusion, Variant::kFusionBlock2}) {
    CaptionModel net(small_config(v), kVocab, 5);
    for (int trial = 0; trial < 5; ++trial) {
      const auto mem = memory_for(net, 2);
      const auto probs = net.decode(mem, random_tokens(2, 6, kVocab, rng), false, rng);
      for (const Tensor* t : {&probs.td1, &probs.td2}) {
        for (std::size_t r = 0; r < 12; ++r) {
          double s = 0.0;
          for (std::size_t j = 0; j < kVocab; ++j) s += std::exp(t->data()[r * kVocab + j]);
          EXPECT_NEAR(s, 1.0, 1e-8);
        }
      }
      for (std::size_t i = 0; i < probs.fusion.numel(); ++i)
        ASSERT_EQ(probs.fusion.data()[i], probs.td1.data()[i] + probs.td2.data()[i]);
    }
  }
}

TEST_F(DecoderTest, FusedRowLogSumExpOracle) {
  CaptionModel net(small_config(), kVocab, 6);
  const auto probs = net.decode(memory_for(net, 3), random_tokens(3, 5, kVocab, rng), false, rng);
  for (std::size_t r = 0; r < 15; ++r) {
    const auto row = probs.fusion.data().subspan(r * kVocab, kVocab);
    double direct = 0.0;  // sum_i p_i q_i
    std::size_t best = 0, best_direct = 0;
    double best_prod = -1.0;
    for (std::size_t j = 0; j < kVocab; ++j) {
      const double prod = std::exp(probs.td1.data()[r * kVocab + j]) * std::exp(probs.td2.data()[r * kVocab + j]);
      direct += prod;
      if (prod > best_prod) {
        best_prod = prod;
        best_direct = j;
      }
      if (row[j] > row[best]) best = j;
    }
    EXPECT_NEAR(logsumexp(row), std::log(direct), 1e-10);
    EXPECT_LT(logsumexp(row), 0.0);
    EXPECT_EQ(best, best_direct);
  }
  // Identical point masses reach the bound.
  const std::vector<double> point{0.0, -INFINITY, -INFINITY};
  std::vector<double> sum(3);
  for (std::size_t j = 0; j < 3; ++j) sum[j] = point[j] + point[j];
  EXPECT_EQ(logsumexp(sum), 0.0);
}

TEST_F(DecoderTest, CausalPerturbation) {
  CaptionModel net(small_config(), kVocab, 7);
  const auto mem = memory_for(net, 1);
  auto tokens = random_tokens(1, 6, kVocab, rng);
  const auto a = net.decode(mem, tokens, false, rng);
  const std::size_t t = 3;
  tokens.ids[t] = tokens.ids[t] % (kVocab - 1) + 1 == tokens.ids[t] ? 1 : tokens.ids[t] % (kVocab - 1) + 1;
  const auto b = net.decode(mem, tokens, false, rng);
  for (const auto& [x, y] : {std::pair{&a.td1, &b.td1}, {&a.td2, &b.td2}, {&a.fusion, &b.fusion}}) {
    for (std::size_t i = 0; i < t * kVocab; ++i) ASSERT_EQ(x->data()[i], y->data()[i]);
    bool changed = false;
    for (std::size_t i = t * kVocab; i < 6 * kVocab; ++i) changed |= x->data()[i] != y->data()[i];
    EXPECT_TRUE(changed);
  }
}

TEST_F(DecoderTest, ZeroedSecondHeadAddsUniform) {
  CaptionModel net(small_config(), kVocab, 8);
  auto& head = net.decoder().td2()->head();
  for (double& v : head.weight.mutable_data()) v = 0.0;
  for (double& v : head.bias.mutable_data()) v = 0.0;
  const auto probs = net.decode(memory_for(net, 2), random_tokens(2, 4, kVocab, rng), false, rng);
  for (std::size_t i = 0; i < probs.fusion.numel(); ++i)
    EXPECT_NEAR(probs.fusion.data()[i], probs.td1.data()[i] + std::log(1.0 / kVocab), 1e-12);
}

TEST_F(DecoderTest, SymmetricDecodersDoubleTheScore) {
  CaptionModel net(small_config(), kVocab, 9);
  copy_values(net.parameters(), "dec1.", "dec2.");
  auto mem = memory_for(net, 2);
  mem.x_fusion = mem.x_high;
  const auto probs = net.decode(mem, random_tokens(2, 5, kVocab, rng), false, rng);
  for (std::size_t i = 0; i < probs.fusion.numel(); ++i) ASSERT_EQ(probs.fusion.data()[i], 2.0 * probs.td1.data()[i]);
}

TEST_F(DecoderTest, ArgmaxIgnoresPerRowShift) {
  CaptionModel net(small_config(), kVocab, 10);
  const auto probs = net.decode(memory_for(net, 1), random_tokens(1, 4, kVocab, rng), false, rng);
  const std::vector<double> row_shift{3.0, -7.0, 0.5, 100.0};
  std::vector<double> shift(4 * kVocab);
  for (std::size_t i = 0; i < shift.size(); ++i) shift[i] = row_shift[i / kVocab];
  const auto shifted = ops::add(probs.td1, Tensor({1, 4, kVocab}, shift));
  const auto fused = ops::add(shifted, probs.td2);
  for (std::size_t r = 0; r < 4; ++r) {
    const auto a = probs.fusion.data().subspan(r * kVocab, kVocab);
    const auto b = fused.data().subspan(r * kVocab, kVocab);
    EXPECT_EQ(std::max_element(a.begin(), a.end()) - a.begin(), std::max_element(b.begin(), b.end()) - b.begin());
  }
}

TEST_F(DecoderTest, SingleModesAliasFusion) {
  for (Variant v : {Variant::kFusion, Variant::kBaselineHigh}) {
    CaptionModel net(small_config(v), kVocab, 11);
    EXPECT_EQ(net.decoder().td2(), nullptr);
    const auto probs = net.decode(memory_for(net, 1), random_tokens(1, 3, kVocab, rng), false, rng);
    EXPECT_FALSE(probs.td2.defined());
    EXPECT_EQ(probs.fusion.data().data(), probs.td1.data().data());
  }
}

TEST_F(DecoderTest, EmbeddingSharedAcrossPositions) {
  CaptionModel net(small_config(), kVocab, 12);
  const TokenBatch t{{5, 7, 5}, 1, 3};
  const auto rows = net.decoder().embed_tokens(t);
  for (std::size_t j = 0; j < 16; ++j) EXPECT_EQ(rows.at({0, 0, j}), rows.at({0, 2, j}));
  EXPECT_THROW(net.decoder().embed_tokens(TokenBatch{{11}, 1, 1}), VocabularyError);
  EXPECT_THROW(net.decoder().embed_tokens(TokenBatch{std::vector<TokenId>(31, 4), 1, 31}), SequenceLengthError);
  EXPECT_EQ(net.parameters().find("embed.W")->kind, nn::ParamKind::kFrozen);
}

TEST_F(DecoderTest, EmbeddingFileReplacesRowsByName) {
  Vocabulary vocab({"dog", "cat", "bird", "fish", "cow", "pig", "owl"});
  CaptionModel net(small_config(), vocab.size(), 13);
  const auto path = std::filesystem::temp_directory_path() / "lhdff_embed_test.txt";
  {
    std::ofstream out(path);
    out << "3 16\n";
    out << "cat";
    for (int j = 0; j < 16; ++j) out << ' ' << j * 0.5;
    out << "\nzebra";
    for (int j = 0; j < 16; ++j) out << " 1";
    out << "\n";
  }
  EXPECT_EQ(net.decoder().load_embeddings(path, vocab), 1u);
  const auto& w = net.decoder().embedding();
  EXPECT_EQ(w.at({static_cast<std::size_t>(vocab.id("cat")), 3}), 1.5);
  std::filesystem::remove(path);
}

TEST(CaptionModel, VariantPairingIsChecked) {
  auto enc = small_config().encoder_for_variant();
  enc.fusion_enabled = false;
  EXPECT_THROW(check_pairing(enc, DecoderMode::kDualFusion), ConfigError);
  enc.fusion_enabled = true;
  EXPECT_THROW(check_pairing(enc, DecoderMode::kDualNonfusion), ConfigError);
  enc.low_branch = false;
  EXPECT_NO_THROW(check_pairing(enc, DecoderMode::kSingleHigh));
  EXPECT_THROW(parse_variant("lhdff2"), ConfigError);
  for (Variant v : {Variant::kLhdff, Variant::kFusion, Variant::kNonfusion, Variant::kFusionBlock2,
                    Variant::kBaselineHigh})
    EXPECT_EQ(parse_variant(to_string(v)), v);
}

TEST(CaptionModel, WidthMismatchIsAConfigError) {
  auto cfg = small_config();
  cfg.decoder.d_model = 64;
  EXPECT_THROW(CaptionModel(cfg, 10, 1), ConfigError);
}

TEST(CaptionModel, CheckpointImportIsStrict) {
  CaptionModel a(small_config(), 10, 1), b(small_config(), 10, 2);
  b.import_records(a.export_records());
  EXPECT_EQ(a.export_records()[5].data, b.export_records()[5].data);

  CaptionModel c(small_config(Variant::kBaselineHigh), 10, 1);
  try {
    c.import_records(a.export_records());
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("lhdff"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("baseline-high"), std::string::npos);
  }
  CaptionModel d(small_config(), 12, 1);
  EXPECT_THROW(d.import_records(a.export_records()), DimensionError);
  auto recs = a.export_records();
  recs.pop_back();
  EXPECT_THROW(b.import_records(recs), ConfigError);
  EXPECT_EQ(checkpoint_variant(a.export_records()), Variant::kLhdff);
}

TEST(Vocabulary, ReservedIdsAndUnknowns) {
  Vocabulary v({"a", "b"});
  EXPECT_EQ(v.size(), 6u);
  EXPECT_EQ(v.id("<pad>"), 0);
  EXPECT_EQ(v.id("<eos>"), 2);
  EXPECT_EQ(v.id("zzz"), Vocabulary::kUnk);
  EXPECT_EQ(v.decode({1, 4, 5, 2, 0}), (std::vector<std::string>{"a", "b"}));
  EXPECT_THROW(Vocabulary({"a", "a"}), VocabularyError);
  const auto path = std::filesystem::temp_directory_path() / "lhdff_vocab_test.txt";
  v.save(path);
  EXPECT_EQ(Vocabulary::load(path), v);
  std::filesystem::remove(path);
}

TEST(CaptionModel, WholeModelGradcheck) {
  const auto r = lhdff::testing::model_gradcheck(3, 2);
  EXPECT_LT(r.max_rel_error, lhdff::testing::kModelTolerance) << r.worst;
  EXPECT_GT(r.checked, 100u);
}
