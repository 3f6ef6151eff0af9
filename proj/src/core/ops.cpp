#include "lhdff/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "lhdff/error.hpp"
#include "lhdff/kernels.hpp"

namespace lhdff::ops {

namespace {

using StoragePtr = std::shared_ptr<TensorStorage>;

// Number of leading repetitions when `b` broadcasts over `a`; throws unless
// b's shape equals a trailing suffix of a's shape.
std::size_t broadcast_outer(const Tensor& a, const Tensor& b, const char* op) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sb.size() > sa.size() || !std::equal(sb.rbegin(), sb.rend(), sa.rbegin())) {
    throw DimensionError(std::string(op) + ": cannot broadcast " + shape_str(sb) + " onto " + shape_str(sa));
  }
  return a.numel() / b.numel();
}

// Sums a grad of a's size down to b's size (b broadcast over `outer`).
void reduce_into(std::vector<double>& gb, const std::vector<double>& g, std::size_t outer, double sign = 1.0) {
  const std::size_t inner = gb.size();
  for (std::size_t o = 0; o < outer; ++o) {
    const double* row = g.data() + o * inner;
    for (std::size_t j = 0; j < inner; ++j) gb[j] += sign * row[j];
  }
}

template <typename Fn>
Tensor unary_map(const Tensor& x, Fn fn) {
  std::vector<double> out(x.numel());
  const auto in = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fn(in[i]);
  return Tensor(x.shape(), std::move(out));
}

// Splits shape at `axis` into (outer, extent, inner).
struct AxisSplit {
  std::size_t outer = 1;
  std::size_t extent = 1;
  std::size_t inner = 1;
};

AxisSplit split_axis(const Shape& shape, std::size_t axis) {
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.extent = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

std::size_t normalise_axis(const Tensor& x, int axis) {
  const auto r = static_cast<int>(x.rank());
  const int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) throw DimensionError("axis " + std::to_string(axis) + " out of range for " + shape_str(x.shape()));
  return static_cast<std::size_t>(a);
}

void require_last_axis(const Tensor& x, const char* op) {
  if (x.rank() == 0) throw DimensionError(std::string(op) + ": tensor has no axis to reduce");
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  const std::size_t outer = broadcast_outer(a, b, "add");
  const std::size_t inner = b.numel();
  std::vector<double> out(a.data().begin(), a.data().end());
  const auto bd = b.data();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t j = 0; j < inner; ++j) out[o * inner + j] += bd[j];
  }
  Tensor y(a.shape(), std::move(out));
  if (Tape::should_record({&a, &b})) {
    StoragePtr as = a.storage(), bs = b.storage(), ys = y.storage();
    Tape::active().record({as, bs}, y, [as, bs, ys, outer] {
      if (as->requires_grad) {
        auto& ga = as->grad_buffer();
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += ys->grad[i];
      }
      if (bs->requires_grad) reduce_into(bs->grad_buffer(), ys->grad, outer);
    });
  }
  return y;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  const std::size_t outer = broadcast_outer(a, b, "sub");
  const std::size_t inner = b.numel();
  std::vector<double> out(a.data().begin(), a.data().end());
  const auto bd = b.data();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t j = 0; j < inner; ++j) out[o * inner + j] -= bd[j];
  }
  Tensor y(a.shape(), std::move(out));
  if (Tape::should_record({&a, &b})) {
    StoragePtr as = a.storage(), bs = b.storage(), ys = y.storage();
    Tape::active().record({as, bs}, y, [as, bs, ys, outer] {
      if (as->requires_grad) {
        auto& ga = as->grad_buffer();
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += ys->grad[i];
      }
      if (bs->requires_grad) reduce_into(bs->grad_buffer(), ys->grad, outer, -1.0);
    });
  }
  return y;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  const std::size_t outer = broadcast_outer(a, b, "mul");
  const std::size_t inner = b.numel();
  std::vector<double> out(a.numel());
  const auto ad = a.data();
  const auto bd = b.data();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t j = 0; j < inner; ++j) out[o * inner + j] = ad[o * inner + j] * bd[j];
  }
  Tensor y(a.shape(), std::move(out));
  if (Tape::should_record({&a, &b})) {
    StoragePtr as = a.storage(), bs = b.storage(), ys = y.storage();
    Tape::active().record({as, bs}, y, [as, bs, ys, outer, inner] {
      const auto& g = ys->grad;
      if (as->requires_grad) {
        auto& ga = as->grad_buffer();
        for (std::size_t o = 0; o < outer; ++o) {
          for (std::size_t j = 0; j < inner; ++j) ga[o * inner + j] += g[o * inner + j] * bs->value[j];
        }
      }
      if (bs->requires_grad) {
        auto& gb = bs->grad_buffer();
        for (std::size_t o = 0; o < outer; ++o) {
          for (std::size_t j = 0; j < inner; ++j) gb[j] += g[o * inner + j] * as->value[o * inner + j];
        }
      }
    });
  }
  return y;
}

Tensor scale(const Tensor& a, double factor) {
  Tensor y = unary_map(a, [factor](double v) { return v * factor; });
  if (Tape::should_record({&a})) {
    StoragePtr as = a.storage(), ys = y.storage();
    Tape::active().record({as}, y, [as, ys, factor] {
      auto& ga = as->grad_buffer();
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += factor * ys->grad[i];
    });
  }
  return y;
}

Tensor relu(const Tensor& x) {
  Tensor y = unary_map(x, [](double v) { return v > 0.0 ? v : 0.0; });
  if (Tape::should_record({&x})) {
    StoragePtr xs = x.storage(), ys = y.storage();
    Tape::active().record({xs}, y, [xs, ys] {
      auto& gx = xs->grad_buffer();
      for (std::size_t i = 0; i < gx.size(); ++i) {
        if (xs->value[i] > 0.0) gx[i] += ys->grad[i];
      }
    });
  }
  return y;
}

Tensor sum(const Tensor& x) {
  const auto d = x.data();
  Tensor y = Tensor::scalar(std::accumulate(d.begin(), d.end(), 0.0));
  if (Tape::should_record({&x})) {
    StoragePtr xs = x.storage(), ys = y.storage();
    Tape::active().record({xs}, y, [xs, ys] {
      auto& gx = xs->grad_buffer();
      for (double& v : gx) v += ys->grad[0];
    });
  }
  return y;
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.numel())); }

Tensor mean_axis(const Tensor& x, int axis) {
  const std::size_t a = normalise_axis(x, axis);
  const AxisSplit s = split_axis(x.shape(), a);
  Shape out_shape = x.shape();
  out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(a));
  if (out_shape.empty()) out_shape = {1};
  std::vector<double> out(s.outer * s.inner, 0.0);
  const auto d = x.data();
  const double inv = 1.0 / static_cast<double>(s.extent);
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t e = 0; e < s.extent; ++e) {
      const double* src = d.data() + (o * s.extent + e) * s.inner;
      double* dst = out.data() + o * s.inner;
      for (std::size_t i = 0; i < s.inner; ++i) dst[i] += src[i];
    }
  }
  for (double& v : out) v *= inv;
  Tensor y(std::move(out_shape), std::move(out));
  if (Tape::should_record({&x})) {
    StoragePtr xs = x.storage(), ys = y.storage();
    Tape::active().record({xs}, y, [xs, ys, s, inv] {
      auto& gx = xs->grad_buffer();
      for (std::size_t o = 0; o < s.outer; ++o) {
        const double* g = ys->grad.data() + o * s.inner;
        for (std::size_t e = 0; e < s.extent; ++e) {
          double* dst = gx.data() + (o * s.extent + e) * s.inner;
          for (std::size_t i = 0; i < s.inner; ++i) dst[i] += g[i] * inv;
        }
      }
    });
  }
  return y;
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: " + shape_str(x.shape()) + " to " + shape_str(shape) + " changes element count");
  }
  Tensor y(std::move(shape), std::vector<double>(x.data().begin(), x.data().end()));
  if (Tape::should_record({&x})) {
    StoragePtr xs = x.storage(), ys = y.storage();
    Tape::active().record({xs}, y, [xs, ys] {
      auto& gx = xs->grad_buffer();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += ys->grad[i];
    });
  }
  return y;
}

Tensor permute(const Tensor& x, const std::vector<std::size_t>& order) {
  const Shape& in_shape = x.shape();
  const std::size_t r = in_shape.size();
  std::vector<bool> seen(r, false);
  if (order.size() != r) throw DimensionError("permute: order rank mismatch for " + shape_str(in_shape));
  for (std::size_t o : order) {
    if (o >= r || seen[o]) throw DimensionError("permute: invalid axis order for " + shape_str(in_shape));
    seen[o] = true;
  }
  std::vector<std::size_t> in_strides(r, 1);
  for (std::size_t i = r; i-- > 1;) in_strides[i - 1] = in_strides[i] * in_shape[i];
  Shape out_shape(r);
  std::vector<std::size_t> src_strides(r);
  for (std::size_t i = 0; i < r; ++i) {
    out_shape[i] = in_shape[order[i]];
    src_strides[i] = in_strides[order[i]];
  }
  // gather index for every output element, in output order
  const std::size_t n = x.numel();
  std::vector<std::size_t> src(n);
  std::vector<std::size_t> counter(r, 0);
  std::size_t offset = 0;
  for (std::size_t flat = 0; flat < n; ++flat) {
    src[flat] = offset;
    for (std::size_t ax = r; ax-- > 0;) {
      ++counter[ax];
      offset += src_strides[ax];
      if (counter[ax] < out_shape[ax]) break;
      offset -= src_strides[ax] * out_shape[ax];
      counter[ax] = 0;
    }
  }
  std::vector<double> out(n);
  const auto d = x.data();
  for (std::size_t i = 0; i < n; ++i) out[i] = d[src[i]];
  Tensor y(std::move(out_shape), std::move(out));
  if (Tape::should_record({&x})) {
    StoragePtr xs = x.storage(), ys = y.storage();
    Tape::active().record({xs}, y, [xs, ys, src = std::move(src)] {
      auto& gx = xs->grad_buffer();
      for (std::size_t i = 0; i < src.size(); ++i) gx[src[i]] += ys->grad[i];
    });
  }
  return y;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() < 2 || b.rank() < 2) {
    throw DimensionError("matmul needs rank >= 2 operands, got " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  }
  const std::size_t p = a.dim(-2);
  const std::size_t q = a.dim(-1);
  const std::size_t r = b.dim(-1);
  if (b.dim(-2) != q) {
    throw DimensionError("matmul inner extents differ: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  const bool shared_b = b.rank() == 2;
  const Shape batch_a(a.shape().begin(), a.shape().end() - 2);
  if (!shared_b) {
    const Shape batch_b(b.shape().begin(), b.shape().end() - 2);
    if (batch_a != batch_b) {
      throw DimensionError("matmul batch extents differ: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    }
  }
  const std::size_t batch = shape_numel(batch_a);
  Shape out_shape = batch_a;
  out_shape.push_back(p);
  out_shape.push_back(r);
  std::vector<double> out(batch * p * r);
  const auto ad = a.data();
  const auto bd = b.data();
  if (shared_b) {
    kernels::parallel::gemm({batch * p, r, q, false, false, false}, ad, bd, out);
  } else {
    for (std::size_t i = 0; i < batch; ++i) {
      kernels::parallel::gemm({p, r, q, false, false, false}, ad.subspan(i * p * q, p * q),
                              bd.subspan(i * q * r, q * r), std::span<double>(out).subspan(i * p * r, p * r));
    }
  }
  Tensor y(std::move(out_shape), std::move(out));
  if (Tape::should_record({&a, &b})) {
    StoragePtr as = a.storage(), bs = b.storage(), ys = y.storage();
    Tape::active().record({as, bs}, y, [as, bs, ys, batch, p, q, r, shared_b] {
      const std::span<const double> g = ys->grad;
      if (as->requires_grad) {
        std::span<double> ga = as->grad_buffer();
        if (shared_b) {
          // dA = dY * B^T
          kernels::parallel::gemm({batch * p, q, r, false, true, true}, g, bs->value, ga);
        } else {
          for (std::size_t i = 0; i < batch; ++i) {
            kernels::parallel::gemm({p, q, r, false, true, true}, g.subspan(i * p * r, p * r),
                                    std::span<const double>(bs->value).subspan(i * q * r, q * r),
                                    ga.subspan(i * p * q, p * q));
          }
        }
      }
      if (bs->requires_grad) {
        std::span<double> gb = bs->grad_buffer();
        if (shared_b) {
          // dB = A^T * dY, summed over the batch
          kernels::parallel::gemm({q, r, batch * p, true, false, true}, as->value, g, gb);
        } else {
          for (std::size_t i = 0; i < batch; ++i) {
            kernels::parallel::gemm({q, r, p, true, false, true},
                                    std::span<const double>(as->value).subspan(i * p * q, p * q),
                                    g.subspan(i * p * r, p * r), gb.subspan(i * q * r, q * r));
          }
        }
      }
    });
  }
  return y;
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  if (weight.rank() != 2) throw DimensionError("linear weight must be a matrix, got " + shape_str(weight.shape()));
  return add(matmul(x, weight), bias);
}

Tensor conv2d(const Tensor& x, const Tensor& kernel, const Tensor& bias) {
  if (x.rank() != 4) throw DimensionError("conv2d input must be [B,C,H,W], got " + shape_str(x.shape()));
  const Shape& ks = kernel.shape();
  if (ks.size() != 4 || ks[2] != 3 || ks[3] != 3) {
    throw DimensionError("conv2d kernel must be [Cout,Cin,3,3], got " + shape_str(ks));
  }
  if (ks[1] != x.dim(1)) {
    throw DimensionError("conv2d channel mismatch: input " + shape_str(x.shape()) + " vs kernel " + shape_str(ks));
  }
  if (bias.shape() != Shape{ks[0]}) {
    throw DimensionError("conv2d bias must be [" + std::to_string(ks[0]) + "], got " + shape_str(bias.shape()));
  }
  const kernels::ConvShape cs{x.dim(0), x.dim(1), ks[0], x.dim(2), x.dim(3)};
  std::vector<double> out(cs.batch * cs.out_channels * cs.height * cs.width);
  kernels::parallel::conv3x3_forward(cs, x.data(), kernel.data(), bias.data(), out);
  Tensor y({cs.batch, cs.out_channels, cs.height, cs.width}, std::move(out));
  if (Tape::should_record({&x, &kernel, &bias})) {
    StoragePtr xs = x.storage(), ks_ = kernel.storage(), bs = bias.storage(), ys = y.storage();
    Tape::active().record({xs, ks_, bs}, y, [xs, ks_, bs, ys, cs] {
      if (xs->requires_grad) kernels::parallel::conv3x3_backward_input(cs, ys->grad, ks_->value, xs->grad_buffer());
      if (ks_->requires_grad || bs->requires_grad) {
        std::vector<double> dk(ks_->value.size(), 0.0);
        std::vector<double> db(bs->value.size(), 0.0);
        kernels::parallel::conv3x3_backward_params(cs, xs->value, ys->grad, dk, db);
        if (ks_->requires_grad) {
          auto& g = ks_->grad_buffer();
          for (std::size_t i = 0; i < g.size(); ++i) g[i] += dk[i];
        }
        if (bs->requires_grad) {
          auto& g = bs->grad_buffer();
          for (std::size_t i = 0; i < g.size(); ++i) g[i] += db[i];
        }
      }
    });
  }
  return y;
}

Tensor batch_norm2d(const Tensor& x, const Tensor& gamma, const Tensor& beta, BatchNormState& state,
                    bool training) {
  if (x.rank() != 4) throw DimensionError("batch_norm2d input must be [B,C,H,W], got " + shape_str(x.shape()));
  const std::size_t batch = x.dim(0);
  const std::size_t channels = x.dim(1);
  const std::size_t plane = x.dim(2) * x.dim(3);
  const Shape per_channel{channels};
  if (gamma.shape() != per_channel || beta.shape() != per_channel || state.running_mean.shape() != per_channel ||
      state.running_var.shape() != per_channel) {
    throw DimensionError("batch_norm2d parameters must be [" + std::to_string(channels) + "]");
  }
  const std::size_t count = batch * plane;
  if (training && count < 2) {
    throw InsufficientStatisticsError("batch_norm2d needs B*H*W >= 2 in training mode, got " + std::to_string(count));
  }
  const auto xd = x.data();
  std::vector<double> xhat(x.numel());
  std::vector<double> inv_std(channels);
  std::vector<double> out(x.numel());
  auto rmean = state.running_mean.mutable_data();
  auto rvar = state.running_var.mutable_data();
  const auto gd = gamma.data();
  const auto bd = beta.data();
  const auto n_ch = static_cast<std::ptrdiff_t>(channels);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ci = 0; ci < n_ch; ++ci) {
    const auto c = static_cast<std::size_t>(ci);
    double mu = 0.0;
    double var = 0.0;
    if (training) {
      for (std::size_t b = 0; b < batch; ++b) {
        const double* src = xd.data() + (b * channels + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) mu += src[i];
      }
      mu /= static_cast<double>(count);
      for (std::size_t b = 0; b < batch; ++b) {
        const double* src = xd.data() + (b * channels + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) var += (src[i] - mu) * (src[i] - mu);
      }
      const double unbiased = var / static_cast<double>(count - 1);
      var /= static_cast<double>(count);
      rmean[c] = (1.0 - state.momentum) * rmean[c] + state.momentum * mu;
      rvar[c] = (1.0 - state.momentum) * rvar[c] + state.momentum * unbiased;
    } else {
      mu = rmean[c];
      var = rvar[c];
    }
    const double inv = 1.0 / std::sqrt(var + state.eps);
    inv_std[c] = inv;
    for (std::size_t b = 0; b < batch; ++b) {
      const std::size_t base = (b * channels + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        const double h = (xd[base + i] - mu) * inv;
        xhat[base + i] = h;
        out[base + i] = gd[c] * h + bd[c];
      }
    }
  }
  Tensor y(x.shape(), std::move(out));
  if (Tape::should_record({&x, &gamma, &beta})) {
    StoragePtr xs = x.storage(), gs = gamma.storage(), bs = beta.storage(), ys = y.storage();
    Tape::active().record(
        {xs, gs, bs}, y,
        [xs, gs, bs, ys, xhat = std::move(xhat), inv_std = std::move(inv_std), batch, channels, plane, training] {
          const auto& g = ys->grad;
          const double n = static_cast<double>(batch * plane);
          std::vector<double>* gx = xs->requires_grad ? &xs->grad_buffer() : nullptr;
          std::vector<double>* gg = gs->requires_grad ? &gs->grad_buffer() : nullptr;
          std::vector<double>* gb = bs->requires_grad ? &bs->grad_buffer() : nullptr;
          const auto n_ch = static_cast<std::ptrdiff_t>(channels);
#pragma omp parallel for schedule(static)
          for (std::ptrdiff_t ci = 0; ci < n_ch; ++ci) {
            const auto c = static_cast<std::size_t>(ci);
            double sum_g = 0.0;
            double sum_gh = 0.0;
            for (std::size_t b = 0; b < batch; ++b) {
              const std::size_t base = (b * channels + c) * plane;
              for (std::size_t i = 0; i < plane; ++i) {
                sum_g += g[base + i];
                sum_gh += g[base + i] * xhat[base + i];
              }
            }
            if (gg) (*gg)[c] += sum_gh;
            if (gb) (*gb)[c] += sum_g;
            if (!gx) continue;
            const double gam = gs->value[c];
            const double inv = inv_std[c];
            for (std::size_t b = 0; b < batch; ++b) {
              const std::size_t base = (b * channels + c) * plane;
              for (std::size_t i = 0; i < plane; ++i) {
                if (training) {
                  (*gx)[base + i] += gam * inv / n * (n * g[base + i] - sum_g - xhat[base + i] * sum_gh);
                } else {
                  (*gx)[base + i] += gam * inv * g[base + i];
                }
              }
            }
          }
        });
  }
  return y;
}

Tensor avg_pool2d(const Tensor& x) {
  if (x.rank() != 4) throw DimensionError("avg_pool2d input must be [B,C,H,W], got " + shape_str(x.shape()));
  const std::size_t planes = x.dim(0) * x.dim(1);
  const std::size_t h = x.dim(2);
  const std::size_t w = x.dim(3);
  const std::size_t oh = (h + 1) / 2;
  const std::size_t ow = (w + 1) / 2;
  std::vector<double> out(planes * oh * ow);
  const auto d = x.data();
  for (std::size_t p = 0; p < planes; ++p) {
    const double* src = d.data() + p * h * w;
    double* dst = out.data() + p * oh * ow;
    for (std::size_t i = 0; i < oh; ++i) {
      const std::size_t r0 = 2 * i;
      const std::size_t r1 = std::min(2 * i + 1, h - 1);
      for (std::size_t j = 0; j < ow; ++j) {
        const std::size_t c0 = 2 * j;
        const std::size_t c1 = std::min(2 * j + 1, w - 1);
        dst[i * ow + j] = 0.25 * (src[r0 * w + c0] + src[r0 * w + c1] + src[r1 * w + c0] + src[r1 * w + c1]);
      }
    }
  }
  Tensor y({x.dim(0), x.dim(1), oh, ow}, std::move(out));
  if (Tape::should_record({&x})) {
    StoragePtr xs = x.storage(), ys = y.storage();
    Tape::active().record({xs}, y, [xs, ys, planes, h, w, oh, ow] {
      auto& gx = xs->grad_buffer();
      for (std::size_t p = 0; p < planes; ++p) {
        double* dst = gx.data() + p * h * w;
        const double* g = ys->grad.data() + p * oh * ow;
        for (std::size_t i = 0; i < oh; ++i) {
          const std::size_t r0 = 2 * i;
          const std::size_t r1 = std::min(2 * i + 1, h - 1);
          for (std::size_t j = 0; j < ow; ++j) {
            const std::size_t c0 = 2 * j;
            const std::size_t c1 = std::min(2 * j + 1, w - 1);
            const double q = 0.25 * g[i * ow + j];
            dst[r0 * w + c0] += q;
            dst[r0 * w + c1] += q;
            dst[r1 * w + c0] += q;
            dst[r1 * w + c1] += q;
          }
        }
      }
    });
  }
  return y;
}

Tensor embedding(const Tensor& weight, const std::vector<std::int64_t>& ids, std::size_t batch, std::size_t steps) {
  if (weight.rank() != 2) throw DimensionError("embedding table must be [V,d], got " + shape_str(weight.shape()));
  if (ids.size() != batch * steps) {
    throw DimensionError("embedding: " + std::to_string(ids.size()) + " ids for a " + std::to_string(batch) + "x" +
                         std::to_string(steps) + " batch");
  }
  const std::size_t vocab = weight.dim(0);
  const std::size_t width = weight.dim(1);
  std::vector<double> out(ids.size() * width);
  const auto wd = weight.data();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= vocab) {
      throw VocabularyError("token id " + std::to_string(ids[i]) + " outside vocabulary of size " +
                            std::to_string(vocab));
    }
    std::copy_n(wd.data() + static_cast<std::size_t>(ids[i]) * width, width, out.data() + i * width);
  }
  Tensor y({batch, steps, width}, std::move(out));
  if (Tape::should_record({&weight})) {
    StoragePtr ws = weight.storage(), ys = y.storage();
    Tape::active().record({ws}, y, [ws, ys, ids, width] {
      auto& gw = ws->grad_buffer();
      for (std::size_t i = 0; i < ids.size(); ++i) {
        const auto row = static_cast<std::size_t>(ids[i]);
        for (std::size_t j = 0; j < width; ++j) gw[row * width + j] += ys->grad[i * width + j];
      }
    });
  }
  return y;
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  require_last_axis(x, "layer_norm");
  const std::size_t n = x.dim(-1);
  if (gamma.shape() != Shape{n} || beta.shape() != Shape{n}) {
    throw DimensionError("layer_norm parameters must be [" + std::to_string(n) + "]");
  }
  const std::size_t rows = x.numel() / n;
  const auto xd = x.data();
  std::vector<double> xhat(x.numel());
  std::vector<double> inv_std(rows);
  std::vector<double> out(x.numel());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* src = xd.data() + r * n;
    double mu = 0.0;
    for (std::size_t i = 0; i < n; ++i) mu += src[i];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) var += (src[i] - mu) * (src[i] - mu);
    var /= static_cast<double>(n);
    const double inv = 1.0 / std::sqrt(var + eps);
    inv_std[r] = inv;
    for (std::size_t i = 0; i < n; ++i) {
      const double h = (src[i] - mu) * inv;
      xhat[r * n + i] = h;
      out[r * n + i] = gamma.data()[i] * h + beta.data()[i];
    }
  }
  Tensor y(x.shape(), std::move(out));
  if (Tape::should_record({&x, &gamma, &beta})) {
    StoragePtr xs = x.storage(), gs = gamma.storage(), bs = beta.storage(), ys = y.storage();
    Tape::active().record({xs, gs, bs}, y,
                          [xs, gs, bs, ys, xhat = std::move(xhat), inv_std = std::move(inv_std), rows, n] {
                            const auto& g = ys->grad;
                            if (gs->requires_grad || bs->requires_grad) {
                              auto& gg = gs->grad_buffer();
                              auto& gb = bs->grad_buffer();
                              for (std::size_t r = 0; r < rows; ++r) {
                                for (std::size_t i = 0; i < n; ++i) {
                                  gg[i] += g[r * n + i] * xhat[r * n + i];
                                  gb[i] += g[r * n + i];
                                }
                              }
                            }
                            if (!xs->requires_grad) return;
                            auto& gx = xs->grad_buffer();
                            const double nn = static_cast<double>(n);
                            for (std::size_t r = 0; r < rows; ++r) {
                              double sum_d = 0.0;
                              double sum_dh = 0.0;
                              for (std::size_t i = 0; i < n; ++i) {
                                const double dh = g[r * n + i] * gs->value[i];
                                sum_d += dh;
                                sum_dh += dh * xhat[r * n + i];
                              }
                              for (std::size_t i = 0; i < n; ++i) {
                                const double dh = g[r * n + i] * gs->value[i];
                                gx[r * n + i] += inv_std[r] / nn * (nn * dh - sum_d - xhat[r * n + i] * sum_dh);
                              }
                            }
                          });
  }
  return y;
}

Tensor softmax(const Tensor& x) {
  require_last_axis(x, "softmax");
  const std::size_t n = x.dim(-1);
  const std::size_t rows = x.numel() / n;
  const auto xd = x.data();
  std::vector<double> out(x.numel());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* src = xd.data() + r * n;
    double* dst = out.data() + r * n;
    const double mx = *std::max_element(src, src + n);
    double z = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      dst[i] = std::exp(src[i] - mx);
      z += dst[i];
    }
    for (std::size_t i = 0; i < n; ++i) dst[i] /= z;
  }
  Tensor y(x.shape(), std::move(out));
  if (Tape::should_record({&x})) {
    StoragePtr xs = x.storage(), ys = y.storage();
    Tape::active().record({xs}, y, [xs, ys, rows, n] {
      auto& gx = xs->grad_buffer();
      const auto& g = ys->grad;
      const auto& p = ys->value;
      for (std::size_t r = 0; r < rows; ++r) {
        double dot = 0.0;
        for (std::size_t i = 0; i < n; ++i) dot += g[r * n + i] * p[r * n + i];
        for (std::size_t i = 0; i < n; ++i) gx[r * n + i] += p[r * n + i] * (g[r * n + i] - dot);
      }
    });
  }
  return y;
}

Tensor log_softmax(const Tensor& x) {
  require_last_axis(x, "log_softmax");
  const std::size_t n = x.dim(-1);
  const std::size_t rows = x.numel() / n;
  const auto xd = x.data();
  std::vector<double> out(x.numel());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* src = xd.data() + r * n;
    double* dst = out.data() + r * n;
    const double mx = *std::max_element(src, src + n);
    double z = 0.0;
    for (std::size_t i = 0; i < n; ++i) z += std::exp(src[i] - mx);
    const double lse = mx + std::log(z);
    for (std::size_t i = 0; i < n; ++i) dst[i] = src[i] - lse;
  }
  Tensor y(x.shape(), std::move(out));
  if (Tape::should_record({&x})) {
    StoragePtr xs = x.storage(), ys = y.storage();
    Tape::active().record({xs}, y, [xs, ys, rows, n] {
      auto& gx = xs->grad_buffer();
      const auto& g = ys->grad;
      const auto& lp = ys->value;
      for (std::size_t r = 0; r < rows; ++r) {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) total += g[r * n + i];
        for (std::size_t i = 0; i < n; ++i) gx[r * n + i] += g[r * n + i] - std::exp(lp[r * n + i]) * total;
      }
    });
  }
  return y;
}

Tensor dropout(const Tensor& x, double p, bool training, std::mt19937_64& rng) {
  if (p < 0.0 || p >= 1.0) throw ConfigError("dropout probability must be in [0,1), got " + std::to_string(p));
  if (!training || p == 0.0) return x;
  const double keep_scale = 1.0 / (1.0 - p);
  std::bernoulli_distribution keep(1.0 - p);
  std::vector<double> mask(x.numel());
  for (double& m : mask) m = keep(rng) ? keep_scale : 0.0;
  std::vector<double> out(x.numel());
  const auto d = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = d[i] * mask[i];
  Tensor y(x.shape(), std::move(out));
  if (Tape::should_record({&x})) {
    StoragePtr xs = x.storage(), ys = y.storage();
    Tape::active().record({xs}, y, [xs, ys, mask = std::move(mask)] {
      auto& gx = xs->grad_buffer();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += ys->grad[i] * mask[i];
    });
  }
  return y;
}

Tensor mask_scores(const Tensor& scores, bool causal, const std::vector<std::size_t>& key_lengths) {
  if (scores.rank() != 4) throw DimensionError("mask_scores expects [B,H,Tq,Tk], got " + shape_str(scores.shape()));
  const std::size_t batch = scores.dim(0);
  const std::size_t heads = scores.dim(1);
  const std::size_t tq = scores.dim(2);
  const std::size_t tk = scores.dim(3);
  if (!key_lengths.empty() && key_lengths.size() != batch) {
    throw DimensionError("mask_scores: " + std::to_string(key_lengths.size()) + " key lengths for batch " +
                         std::to_string(batch));
  }
  std::vector<char> masked(scores.numel(), 0);
  std::vector<double> out(scores.data().begin(), scores.data().end());
  for (std::size_t b = 0; b < batch; ++b) {
    const std::size_t valid = key_lengths.empty() ? tk : std::min(key_lengths[b], tk);
    for (std::size_t h = 0; h < heads; ++h) {
      for (std::size_t q = 0; q < tq; ++q) {
        const std::size_t base = ((b * heads + h) * tq + q) * tk;
        for (std::size_t k = 0; k < tk; ++k) {
          if (k >= valid || (causal && k > q)) {
            masked[base + k] = 1;
            out[base + k] = kMaskedScore;
          }
        }
      }
    }
  }
  Tensor y(scores.shape(), std::move(out));
  if (Tape::should_record({&scores})) {
    StoragePtr ss = scores.storage(), ys = y.storage();
    Tape::active().record({ss}, y, [ss, ys, masked = std::move(masked)] {
      auto& gs = ss->grad_buffer();
      for (std::size_t i = 0; i < gs.size(); ++i) {
        if (!masked[i]) gs[i] += ys->grad[i];
      }
    });
  }
  return y;
}

Tensor masked_nll(const Tensor& logp, const std::vector<std::int64_t>& targets, std::int64_t ignore_id) {
  if (logp.rank() != 3) throw DimensionError("masked_nll expects [B,T,V], got " + shape_str(logp.shape()));
  const std::size_t vocab = logp.dim(2);
  const std::size_t positions = logp.dim(0) * logp.dim(1);
  if (targets.size() != positions) {
    throw DimensionError("masked_nll: " + std::to_string(targets.size()) + " targets for " +
                         std::to_string(positions) + " positions");
  }
  std::size_t count = 0;
  double total = 0.0;
  const auto d = logp.data();
  for (std::size_t i = 0; i < positions; ++i) {
    if (targets[i] == ignore_id) continue;
    if (targets[i] < 0 || static_cast<std::size_t>(targets[i]) >= vocab) {
      throw VocabularyError("target id " + std::to_string(targets[i]) + " outside vocabulary of size " +
                            std::to_string(vocab));
    }
    total -= d[i * vocab + static_cast<std::size_t>(targets[i])];
    ++count;
  }
  if (count == 0) throw DegenerateBatchError("every target position is padding");
  Tensor y = Tensor::scalar(total / static_cast<double>(count));
  if (Tape::should_record({&logp})) {
    StoragePtr ls = logp.storage(), ys = y.storage();
    Tape::active().record({ls}, y, [ls, ys, targets, ignore_id, vocab, count] {
      auto& gl = ls->grad_buffer();
      const double g = -ys->grad[0] / static_cast<double>(count);
      for (std::size_t i = 0; i < targets.size(); ++i) {
        if (targets[i] == ignore_id) continue;
        gl[i * vocab + static_cast<std::size_t>(targets[i])] += g;
      }
    });
  }
  return y;
}

}  // namespace lhdff::ops
