#pragma once

// Hot loops behind matmul and conv2d.
//
// Every kernel exists twice with identical arithmetic order per output
// element: `serial` is the plain reference kept for tests and benchmarks,
// `parallel` splits independent output rows/planes across OpenMP threads.
// No output element is ever reduced across threads, so both variants are
// bit-identical for any thread count.

#include <cstddef>
#include <span>

namespace lhdff::kernels {

// C[M,N] (+)= op(A) * op(B) where op(A) is M×K and op(B) is K×N.
// trans_a: A is stored K×M. trans_b: B is stored N×K.
struct GemmArgs {
  std::size_t m = 0;
  std::size_t n = 0;
  std::size_t k = 0;
  bool trans_a = false;
  bool trans_b = false;
  bool accumulate = false;
};

// 3×3 cross-correlation, stride 1, zero padding 1.
struct ConvShape {
  std::size_t batch = 0;
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
};

namespace serial {
void gemm(const GemmArgs& g, std::span<const double> a, std::span<const double> b, std::span<double> c);
void conv3x3_forward(const ConvShape& s, std::span<const double> x, std::span<const double> kernel,
                     std::span<const double> bias, std::span<double> y);
// dx += conv_transpose(dy, kernel)
void conv3x3_backward_input(const ConvShape& s, std::span<const double> dy, std::span<const double> kernel,
                            std::span<double> dx);
// dkernel += correlate(x, dy); dbias += sum(dy)
void conv3x3_backward_params(const ConvShape& s, std::span<const double> x, std::span<const double> dy,
                             std::span<double> dkernel, std::span<double> dbias);
}  // namespace serial

namespace parallel {
void gemm(const GemmArgs& g, std::span<const double> a, std::span<const double> b, std::span<double> c);
void conv3x3_forward(const ConvShape& s, std::span<const double> x, std::span<const double> kernel,
                     std::span<const double> bias, std::span<double> y);
void conv3x3_backward_input(const ConvShape& s, std::span<const double> dy, std::span<const double> kernel,
                            std::span<double> dx);
void conv3x3_backward_params(const ConvShape& s, std::span<const double> x, std::span<const double> dy,
                             std::span<double> dkernel, std::span<double> dbias);
}  // namespace parallel

int max_threads();

}  // namespace lhdff::kernels
