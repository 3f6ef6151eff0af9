#include "op_cases.hpp"

#include <random>

#include "lhdff/model/caption_model.hpp"
#include "lhdff/model/encoder.hpp"
#include "lhdff/nn.hpp"
#include "lhdff/ops.hpp"
#include "lhdff/train/loss.hpp"

namespace lhdff::testing {

namespace {

constexpr double kStep = 1e-6;

// Builds a case checking sum(op(inputs) * w) for a fixed random w.
OpCase unary_case(std::string name, std::vector<Shape> shapes, std::function<Tensor(const std::vector<Tensor>&)> op,
                  double lo = -1.0, double hi = 1.0) {
  return {name, [shapes, op, lo, hi] {
            std::mt19937_64 rng(17);
            std::vector<Tensor> inputs;
            for (const auto& s : shapes) inputs.push_back(random_tensor(s, rng, lo, hi));
            Tensor probe;
            {
              NoGradGuard no_grad;
              probe = op(inputs);
            }
            const Tensor w = random_tensor(probe.shape(), rng, -1.0, 1.0, false);
            return gradcheck([&] { return project(op(inputs), w); }, inputs, kStep);
          }};
}

}  // namespace

std::vector<OpCase> op_gradient_cases() {
  using V = std::vector<Tensor>;
  std::vector<OpCase> cases;
  cases.push_back(unary_case("add", {{2, 3}, {2, 3}}, [](const V& x) { return ops::add(x[0], x[1]); }));
  cases.push_back(unary_case("add_broadcast", {{2, 3, 4}, {4}}, [](const V& x) { return ops::add(x[0], x[1]); }));
  cases.push_back(unary_case("sub", {{2, 3}, {3}}, [](const V& x) { return ops::sub(x[0], x[1]); }));
  cases.push_back(unary_case("mul", {{2, 3}, {2, 3}}, [](const V& x) { return ops::mul(x[0], x[1]); }));
  cases.push_back(unary_case("mul_broadcast", {{2, 3, 4}, {3, 4}}, [](const V& x) { return ops::mul(x[0], x[1]); }));
  cases.push_back(unary_case("scale", {{3, 2}}, [](const V& x) { return ops::scale(x[0], -2.5); }));
  cases.push_back(unary_case("relu", {{4, 5}}, [](const V& x) { return ops::relu(x[0]); }));
  cases.push_back(unary_case("sum", {{3, 4}}, [](const V& x) { return ops::sum(x[0]); }));
  cases.push_back(unary_case("mean", {{3, 4}}, [](const V& x) { return ops::mean(x[0]); }));
  cases.push_back(unary_case("mean_axis", {{2, 3, 4}}, [](const V& x) { return ops::mean_axis(x[0], 1); }));
  cases.push_back(unary_case("mean_axis_last", {{2, 3, 4}}, [](const V& x) { return ops::mean_axis(x[0], -1); }));
  cases.push_back(unary_case("reshape", {{2, 6}}, [](const V& x) { return ops::reshape(x[0], {3, 4}); }));
  cases.push_back(unary_case("permute", {{2, 3, 4}}, [](const V& x) { return ops::permute(x[0], {2, 0, 1}); }));
  cases.push_back(unary_case("matmul", {{3, 4}, {4, 2}}, [](const V& x) { return ops::matmul(x[0], x[1]); }));
  cases.push_back(
      unary_case("matmul_batched", {{2, 3, 4}, {2, 4, 5}}, [](const V& x) { return ops::matmul(x[0], x[1]); }));
  cases.push_back(
      unary_case("matmul_shared_rhs", {{2, 3, 4}, {4, 5}}, [](const V& x) { return ops::matmul(x[0], x[1]); }));
  cases.push_back(
      unary_case("linear", {{2, 3, 4}, {4, 5}, {5}}, [](const V& x) { return ops::linear(x[0], x[1], x[2]); }));
  cases.push_back(unary_case("conv2d", {{2, 2, 5, 4}, {3, 2, 3, 3}, {3}},
                             [](const V& x) { return ops::conv2d(x[0], x[1], x[2]); }));
  cases.push_back(unary_case("batch_norm2d_train", {{3, 2, 4, 3}, {2}, {2}}, [](const V& x) {
    ops::BatchNormState st{Tensor::zeros({2}), Tensor::full({2}, 1.0)};
    return ops::batch_norm2d(x[0], x[1], x[2], st, true);
  }));
  cases.push_back(unary_case("batch_norm2d_eval", {{2, 2, 3, 3}, {2}, {2}}, [](const V& x) {
    ops::BatchNormState st{Tensor({2}, {0.3, -0.2}), Tensor({2}, {1.5, 0.7})};
    return ops::batch_norm2d(x[0], x[1], x[2], st, false);
  }));
  cases.push_back(unary_case("avg_pool2d_even", {{1, 2, 4, 6}}, [](const V& x) { return ops::avg_pool2d(x[0]); }));
  cases.push_back(unary_case("avg_pool2d_odd", {{2, 1, 5, 3}}, [](const V& x) { return ops::avg_pool2d(x[0]); }));
  cases.push_back(unary_case("embedding", {{6, 3}}, [](const V& x) {
    return ops::embedding(x[0], {1, 4, 4, 0, 5, 2}, 2, 3);
  }));
  cases.push_back(unary_case("layer_norm", {{2, 3, 5}, {5}, {5}},
                             [](const V& x) { return ops::layer_norm(x[0], x[1], x[2]); }));
  cases.push_back(unary_case("softmax", {{2, 3, 4}}, [](const V& x) { return ops::softmax(x[0]); }, -3.0, 3.0));
  cases.push_back(
      unary_case("log_softmax", {{2, 3, 4}}, [](const V& x) { return ops::log_softmax(x[0]); }, -3.0, 3.0));
  cases.push_back(unary_case("dropout", {{4, 5}}, [](const V& x) {
    std::mt19937_64 rng(5);  // same mask on every call
    return ops::dropout(x[0], 0.3, true, rng);
  }));
  cases.push_back(unary_case("mask_scores", {{2, 1, 3, 4}}, [](const V& x) {
    return ops::softmax(ops::mask_scores(x[0], true, {4, 2}));
  }));
  cases.push_back(unary_case("masked_nll", {{2, 3, 5}}, [](const V& x) {
    return ops::masked_nll(ops::log_softmax(x[0]), {1, 4, 0, 2, 0, 0}, 0);
  }));
  cases.push_back(unary_case("align_mean_pool", {{2, 7, 3}}, [](const V& x) {
    return model::align_frames(x[0], 3, model::AlignMode::kMeanPool);
  }));
  cases.push_back(unary_case("align_zero_pad", {{2, 3, 3}}, [](const V& x) {
    return model::align_frames(x[0], 5, model::AlignMode::kZeroPad);
  }));
  cases.push_back({"multi_head_attention", [] {
                     std::mt19937_64 rng(3);
                     auto mha = nn::MultiHeadAttention::init(8, 2, rng);
                     Tensor q = random_tensor({2, 3, 8}, rng);
                     Tensor kv = random_tensor({2, 4, 8}, rng);
                     const Tensor w = random_tensor({2, 3, 8}, rng, -1.0, 1.0, false);
                     const nn::AttentionMask mask{false, {4, 3}};
                     return gradcheck([&] { return project(mha(q, kv, kv, mask).output, w); },
                                      {q, kv, mha.query.weight, mha.query.bias, mha.key.weight, mha.value.weight, mha.out.weight}, kStep);
                   }});
  return cases;
}

GradCheckResult model_gradcheck(std::uint64_t seed, std::size_t entries_per_param) {
  model::ModelConfig cfg;
  cfg.encoder.width_scale = 0.125;
  cfg.encoder.fixed_frames = 0;
  cfg.decoder.dropout = 0.1;
  const std::size_t vocab = 9;
  model::CaptionModel net(cfg, vocab, seed);

  std::mt19937_64 rng(seed + 100);
  const Tensor mel = random_tensor({2, 32, 64}, rng, -4.0, 1.0, false);
  const std::vector<std::size_t> frames{32, 27};
  const auto tf = train::make_teacher_forcing({{4, 5, 6}, {7, 8}}, cfg.decoder.max_len);

  auto f = [&] {
    std::mt19937_64 dropout_rng(seed + 200);  // identical dropout masks on every evaluation
    const auto memory = net.encode(mel, true, frames);
    return train::fused_ce_loss(net.decode(memory, tf.inputs, true, dropout_rng), tf.targets);
  };
  std::vector<Tensor> params;
  for (const auto& e : net.parameters().entries()) {
    if (e.kind == nn::ParamKind::kTrainable) params.push_back(e.tensor);
  }
  return gradcheck(f, params, 1e-5, entries_per_param, seed);
}

}  // namespace lhdff::testing
