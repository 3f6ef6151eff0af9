#include "lhdff/kernels.hpp"

#include <algorithm>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace lhdff::kernels {

namespace {

void gemm_row(const GemmArgs& g, std::size_t i, const double* a, const double* b, double* c) {
  double* c_row = c + i * g.n;
  if (!g.trans_b) {
    if (!g.accumulate) std::fill(c_row, c_row + g.n, 0.0);
    for (std::size_t kk = 0; kk < g.k; ++kk) {
      const double av = g.trans_a ? a[kk * g.m + i] : a[i * g.k + kk];
      if (av == 0.0) continue;
      const double* b_row = b + kk * g.n;
      for (std::size_t j = 0; j < g.n; ++j) c_row[j] += av * b_row[j];
    }
    return;
  }
  for (std::size_t j = 0; j < g.n; ++j) {
    const double* b_row = b + j * g.k;
    double sum = 0.0;
    if (!g.trans_a) {
      const double* a_row = a + i * g.k;
      for (std::size_t kk = 0; kk < g.k; ++kk) sum += a_row[kk] * b_row[kk];
    } else {
      for (std::size_t kk = 0; kk < g.k; ++kk) sum += a[kk * g.m + i] * b_row[kk];
    }
    c_row[j] = g.accumulate ? c_row[j] + sum : sum;
  }
}

// One output plane y[b, co].
void conv_forward_plane(const ConvShape& s, std::size_t bi, std::size_t co, const double* x, const double* kernel,
                        const double* bias, double* y) {
  const std::size_t h_n = s.height;
  const std::size_t w_n = s.width;
  const std::size_t plane = h_n * w_n;
  double* out = y + (bi * s.out_channels + co) * plane;
  std::fill(out, out + plane, bias ? bias[co] : 0.0);
  for (std::size_t ci = 0; ci < s.in_channels; ++ci) {
    const double* in = x + (bi * s.in_channels + ci) * plane;
    const double* k = kernel + (co * s.in_channels + ci) * 9;
    for (std::size_t kh = 0; kh < 3; ++kh) {
      for (std::size_t kw = 0; kw < 3; ++kw) {
        const double wt = k[kh * 3 + kw];
        if (wt == 0.0) continue;
        // output column w reads input column w + kw - 1
        const std::size_t w_lo = kw == 0 ? 1 : 0;
        const std::size_t w_hi = kw == 2 ? w_n - 1 : w_n;
        for (std::size_t h = 0; h < h_n; ++h) {
          const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(h + kh) - 1;
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(h_n)) continue;
          double* out_row = out + h * w_n;
          const double* in_row = in + static_cast<std::size_t>(ih) * w_n;
          for (std::size_t w = w_lo; w < w_hi; ++w) out_row[w] += wt * in_row[w + kw - 1];
        }
      }
    }
  }
}

// One input-gradient plane dx[b, ci].
void conv_backward_input_plane(const ConvShape& s, std::size_t bi, std::size_t ci, const double* dy,
                               const double* kernel, double* dx) {
  const std::size_t h_n = s.height;
  const std::size_t w_n = s.width;
  const std::size_t plane = h_n * w_n;
  double* grad_in = dx + (bi * s.in_channels + ci) * plane;
  for (std::size_t co = 0; co < s.out_channels; ++co) {
    const double* g = dy + (bi * s.out_channels + co) * plane;
    const double* k = kernel + (co * s.in_channels + ci) * 9;
    for (std::size_t kh = 0; kh < 3; ++kh) {
      for (std::size_t kw = 0; kw < 3; ++kw) {
        const double wt = k[kh * 3 + kw];
        if (wt == 0.0) continue;
        // input column iw receives from output column iw - kw + 1
        const std::size_t iw_lo = kw == 2 ? 1 : 0;
        const std::size_t iw_hi = kw == 0 ? w_n - 1 : w_n;
        for (std::size_t ih = 0; ih < h_n; ++ih) {
          const std::ptrdiff_t oh = static_cast<std::ptrdiff_t>(ih) - static_cast<std::ptrdiff_t>(kh) + 1;
          if (oh < 0 || oh >= static_cast<std::ptrdiff_t>(h_n)) continue;
          double* in_row = grad_in + ih * w_n;
          const double* g_row = g + static_cast<std::size_t>(oh) * w_n;
          for (std::size_t iw = iw_lo; iw < iw_hi; ++iw) in_row[iw] += wt * g_row[iw + 1 - kw];
        }
      }
    }
  }
}

// Gradient of the 9 taps connecting (co, ci).
void conv_backward_kernel_pair(const ConvShape& s, std::size_t co, std::size_t ci, const double* x, const double* dy,
                               double* dkernel) {
  const std::size_t h_n = s.height;
  const std::size_t w_n = s.width;
  const std::size_t plane = h_n * w_n;
  double* dk = dkernel + (co * s.in_channels + ci) * 9;
  for (std::size_t kh = 0; kh < 3; ++kh) {
    for (std::size_t kw = 0; kw < 3; ++kw) {
      const std::size_t w_lo = kw == 0 ? 1 : 0;
      const std::size_t w_hi = kw == 2 ? w_n - 1 : w_n;
      double sum = 0.0;
      for (std::size_t bi = 0; bi < s.batch; ++bi) {
        const double* g = dy + (bi * s.out_channels + co) * plane;
        const double* in = x + (bi * s.in_channels + ci) * plane;
        for (std::size_t h = 0; h < h_n; ++h) {
          const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(h + kh) - 1;
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(h_n)) continue;
          const double* g_row = g + h * w_n;
          const double* in_row = in + static_cast<std::size_t>(ih) * w_n;
          for (std::size_t w = w_lo; w < w_hi; ++w) sum += g_row[w] * in_row[w + kw - 1];
        }
      }
      dk[kh * 3 + kw] += sum;
    }
  }
}

void conv_backward_bias(const ConvShape& s, std::size_t co, const double* dy, double* dbias) {
  const std::size_t plane = s.height * s.width;
  double sum = 0.0;
  for (std::size_t bi = 0; bi < s.batch; ++bi) {
    const double* g = dy + (bi * s.out_channels + co) * plane;
    for (std::size_t p = 0; p < plane; ++p) sum += g[p];
  }
  dbias[co] += sum;
}

}  // namespace

namespace serial {

void gemm(const GemmArgs& g, std::span<const double> a, std::span<const double> b, std::span<double> c) {
  for (std::size_t i = 0; i < g.m; ++i) gemm_row(g, i, a.data(), b.data(), c.data());
}

void conv3x3_forward(const ConvShape& s, std::span<const double> x, std::span<const double> kernel,
                     std::span<const double> bias, std::span<double> y) {
  for (std::size_t bi = 0; bi < s.batch; ++bi) {
    for (std::size_t co = 0; co < s.out_channels; ++co) {
      conv_forward_plane(s, bi, co, x.data(), kernel.data(), bias.empty() ? nullptr : bias.data(), y.data());
    }
  }
}

void conv3x3_backward_input(const ConvShape& s, std::span<const double> dy, std::span<const double> kernel,
                            std::span<double> dx) {
  for (std::size_t bi = 0; bi < s.batch; ++bi) {
    for (std::size_t ci = 0; ci < s.in_channels; ++ci) {
      conv_backward_input_plane(s, bi, ci, dy.data(), kernel.data(), dx.data());
    }
  }
}

void conv3x3_backward_params(const ConvShape& s, std::span<const double> x, std::span<const double> dy,
                             std::span<double> dkernel, std::span<double> dbias) {
  for (std::size_t co = 0; co < s.out_channels; ++co) {
    for (std::size_t ci = 0; ci < s.in_channels; ++ci) {
      conv_backward_kernel_pair(s, co, ci, x.data(), dy.data(), dkernel.data());
    }
  }
  if (!dbias.empty()) {
    for (std::size_t co = 0; co < s.out_channels; ++co) conv_backward_bias(s, co, dy.data(), dbias.data());
  }
}

}  // namespace serial

namespace parallel {

void gemm(const GemmArgs& g, std::span<const double> a, std::span<const double> b, std::span<double> c) {
  const auto rows = static_cast<std::ptrdiff_t>(g.m);
#pragma omp parallel for schedule(static) if (g.m * g.n * g.k > 32768)
  for (std::ptrdiff_t i = 0; i < rows; ++i) {
    gemm_row(g, static_cast<std::size_t>(i), a.data(), b.data(), c.data());
  }
}

void conv3x3_forward(const ConvShape& s, std::span<const double> x, std::span<const double> kernel,
                     std::span<const double> bias, std::span<double> y) {
  const auto planes = static_cast<std::ptrdiff_t>(s.batch * s.out_channels);
  const double* bias_ptr = bias.empty() ? nullptr : bias.data();
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t p = 0; p < planes; ++p) {
    const auto idx = static_cast<std::size_t>(p);
    conv_forward_plane(s, idx / s.out_channels, idx % s.out_channels, x.data(), kernel.data(), bias_ptr, y.data());
  }
}

void conv3x3_backward_input(const ConvShape& s, std::span<const double> dy, std::span<const double> kernel,
                            std::span<double> dx) {
  const auto planes = static_cast<std::ptrdiff_t>(s.batch * s.in_channels);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t p = 0; p < planes; ++p) {
    const auto idx = static_cast<std::size_t>(p);
    conv_backward_input_plane(s, idx / s.in_channels, idx % s.in_channels, dy.data(), kernel.data(), dx.data());
  }
}

void conv3x3_backward_params(const ConvShape& s, std::span<const double> x, std::span<const double> dy,
                             std::span<double> dkernel, std::span<double> dbias) {
  const auto pairs = static_cast<std::ptrdiff_t>(s.out_channels * s.in_channels);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t p = 0; p < pairs; ++p) {
    const auto idx = static_cast<std::size_t>(p);
    conv_backward_kernel_pair(s, idx / s.in_channels, idx % s.in_channels, x.data(), dy.data(), dkernel.data());
  }
  if (!dbias.empty()) {
    const auto channels = static_cast<std::ptrdiff_t>(s.out_channels);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t co = 0; co < channels; ++co) {
      conv_backward_bias(s, static_cast<std::size_t>(co), dy.data(), dbias.data());
    }
  }
}

}  // namespace parallel

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace lhdff::kernels
