#pragma once

// Dense numeric kernels used by the autodiff engine. Every kernel has a
// parallel production version (OpenMP / Eigen) and a plain serial version in
// `kernels::reference` that the tests and the benchmark compare against.
//
// All matrices are row-major and densely packed.

#include <cstddef>
#include <span>

namespace deep2bsde::kernels {

enum class Trans { no, yes };

/// C = alpha * op(A) * op(B) + beta * C, with op(A) m x k and op(B) k x n.
void gemm(Trans trans_a, Trans trans_b, std::size_t m, std::size_t n, std::size_t k,
          double alpha, std::span<const double> a, std::span<const double> b, double beta,
          std::span<double> c);

/// Unrolls 3x3 patches (stride 1, zero padding 1) of a batch of
/// `batch x channels x side x side` images into a
/// `(batch * side * side) x (channels * 9)` matrix.
void im2col3x3(std::size_t batch, std::size_t channels, std::size_t side,
               std::span<const double> images, std::span<double> columns);

/// Adjoint of im2col3x3: accumulates patch columns back into image gradients.
void col2im3x3(std::size_t batch, std::size_t channels, std::size_t side,
               std::span<const double> columns, std::span<double> images);

/// out[j] = mats[j] * vecs[j] for a batch of d x d matrices.
void batched_matvec(std::size_t batch, std::size_t dim, std::span<const double> mats,
                    std::span<const double> vecs, std::span<double> out);

/// Pairwise (cascade) summation. Result is independent of thread count.
double pairwise_sum(std::span<const double> values);

namespace reference {

void gemm(Trans trans_a, Trans trans_b, std::size_t m, std::size_t n, std::size_t k,
          double alpha, std::span<const double> a, std::span<const double> b, double beta,
          std::span<double> c);

/// Direct 3x3 convolution, stride 1, zero padding 1.
/// kernels: c_out x c_in x 3 x 3, bias: c_out, input: batch x c_in x s x s.
void conv3x3(std::size_t batch, std::size_t c_in, std::size_t c_out, std::size_t side,
             std::span<const double> kernels, std::span<const double> bias,
             std::span<const double> input, std::span<double> output);

void batched_matvec(std::size_t batch, std::size_t dim, std::span<const double> mats,
                    std::span<const double> vecs, std::span<double> out);

}  // namespace reference

}  // namespace deep2bsde::kernels
