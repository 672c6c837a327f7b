#include "deep2bsde/kernels.hpp"

#include <Eigen/Core>

#include <cassert>
#include <cstdint>

namespace deep2bsde::kernels {

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMajor>;
using Map = Eigen::Map<RowMajor>;

inline std::ptrdiff_t as_index(std::size_t v) { return static_cast<std::ptrdiff_t>(v); }

}  // namespace

void gemm(Trans trans_a, Trans trans_b, std::size_t m, std::size_t n, std::size_t k,
          double alpha, std::span<const double> a, std::span<const double> b, double beta,
          std::span<double> c) {
  assert(a.size() >= m * k && b.size() >= k * n && c.size() >= m * n);
  if (m == 0 || n == 0) return;
  Map out(c.data(), as_index(m), as_index(n));
  if (k == 0) {
    if (beta == 0.0) {
      out.setZero();
    } else {
      out *= beta;
    }
    return;
  }
  // Stored shapes: A is (m x k) or (k x m); B is (k x n) or (n x k).
  const ConstMap am = trans_a == Trans::no ? ConstMap(a.data(), as_index(m), as_index(k))
                                           : ConstMap(a.data(), as_index(k), as_index(m));
  const ConstMap bm = trans_b == Trans::no ? ConstMap(b.data(), as_index(k), as_index(n))
                                           : ConstMap(b.data(), as_index(n), as_index(k));
  if (beta == 0.0) {
    out.setZero();
  } else if (beta != 1.0) {
    out *= beta;
  }
  if (trans_a == Trans::no && trans_b == Trans::no) {
    out.noalias() += alpha * am * bm;
  } else if (trans_a == Trans::no) {
    out.noalias() += alpha * am * bm.transpose();
  } else if (trans_b == Trans::no) {
    out.noalias() += alpha * am.transpose() * bm;
  } else {
    out.noalias() += alpha * am.transpose() * bm.transpose();
  }
}

void im2col3x3(std::size_t batch, std::size_t channels, std::size_t side,
               std::span<const double> images, std::span<double> columns) {
  const std::size_t plane = side * side;
  const std::size_t width = channels * 9;
  assert(images.size() >= batch * channels * plane);
  assert(columns.size() >= batch * plane * width);
  const auto s = static_cast<std::int64_t>(side);
#pragma omp parallel for schedule(static)
  for (std::int64_t j = 0; j < static_cast<std::int64_t>(batch); ++j) {
    const double* img = images.data() + static_cast<std::size_t>(j) * channels * plane;
    double* col = columns.data() + static_cast<std::size_t>(j) * plane * width;
    for (std::int64_t r = 0; r < s; ++r) {
      for (std::int64_t q = 0; q < s; ++q) {
        double* row = col + static_cast<std::size_t>(r * s + q) * width;
        for (std::size_t ch = 0; ch < channels; ++ch) {
          const double* src = img + ch * plane;
          for (std::int64_t kr = 0; kr < 3; ++kr) {
            const std::int64_t rr = r + kr - 1;
            for (std::int64_t kc = 0; kc < 3; ++kc) {
              const std::int64_t cc = q + kc - 1;
              const bool inside = rr >= 0 && rr < s && cc >= 0 && cc < s;
              row[ch * 9 + static_cast<std::size_t>(kr * 3 + kc)] =
                  inside ? src[rr * s + cc] : 0.0;
            }
          }
        }
      }
    }
  }
}

void col2im3x3(std::size_t batch, std::size_t channels, std::size_t side,
               std::span<const double> columns, std::span<double> images) {
  const std::size_t plane = side * side;
  const std::size_t width = channels * 9;
  assert(images.size() >= batch * channels * plane);
  assert(columns.size() >= batch * plane * width);
  const auto s = static_cast<std::int64_t>(side);
#pragma omp parallel for schedule(static)
  for (std::int64_t j = 0; j < static_cast<std::int64_t>(batch); ++j) {
    double* img = images.data() + static_cast<std::size_t>(j) * channels * plane;
    const double* col = columns.data() + static_cast<std::size_t>(j) * plane * width;
    for (std::int64_t r = 0; r < s; ++r) {
      for (std::int64_t q = 0; q < s; ++q) {
        const double* row = col + static_cast<std::size_t>(r * s + q) * width;
        for (std::size_t ch = 0; ch < channels; ++ch) {
          double* dst = img + ch * plane;
          for (std::int64_t kr = 0; kr < 3; ++kr) {
            const std::int64_t rr = r + kr - 1;
            if (rr < 0 || rr >= s) continue;
            for (std::int64_t kc = 0; kc < 3; ++kc) {
              const std::int64_t cc = q + kc - 1;
              if (cc < 0 || cc >= s) continue;
              dst[rr * s + cc] += row[ch * 9 + static_cast<std::size_t>(kr * 3 + kc)];
            }
          }
        }
      }
    }
  }
}

void batched_matvec(std::size_t batch, std::size_t dim, std::span<const double> mats,
                    std::span<const double> vecs, std::span<double> out) {
  assert(mats.size() >= batch * dim * dim && vecs.size() >= batch * dim);
#pragma omp parallel for schedule(static)
  for (std::int64_t j = 0; j < static_cast<std::int64_t>(batch); ++j) {
    const auto jj = static_cast<std::size_t>(j);
    const double* m = mats.data() + jj * dim * dim;
    const double* v = vecs.data() + jj * dim;
    double* o = out.data() + jj * dim;
    for (std::size_t r = 0; r < dim; ++r) {
      double acc = 0.0;
      for (std::size_t c = 0; c < dim; ++c) acc += m[r * dim + c] * v[c];
      o[r] = acc;
    }
  }
}

double pairwise_sum(std::span<const double> values) {
  constexpr std::size_t leaf = 64;
  if (values.size() <= leaf) {
    double acc = 0.0;
    for (double v : values) acc += v;
    return acc;
  }
  const std::size_t half = values.size() / 2;
  return pairwise_sum(values.first(half)) + pairwise_sum(values.subspan(half));
}

namespace reference {

void gemm(Trans trans_a, Trans trans_b, std::size_t m, std::size_t n, std::size_t k,
          double alpha, std::span<const double> a, std::span<const double> b, double beta,
          std::span<double> c) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) {
        const double av = trans_a == Trans::no ? a[i * k + p] : a[p * m + i];
        const double bv = trans_b == Trans::no ? b[p * n + j] : b[j * k + p];
        acc += av * bv;
      }
      c[i * n + j] = alpha * acc + (beta == 0.0 ? 0.0 : beta * c[i * n + j]);
    }
  }
}

void conv3x3(std::size_t batch, std::size_t c_in, std::size_t c_out, std::size_t side,
             std::span<const double> kernels, std::span<const double> bias,
             std::span<const double> input, std::span<double> output) {
  const auto s = static_cast<std::ptrdiff_t>(side);
  const std::size_t plane = side * side;
  for (std::size_t j = 0; j < batch; ++j) {
    for (std::size_t o = 0; o < c_out; ++o) {
      for (std::ptrdiff_t r = 0; r < s; ++r) {
        for (std::ptrdiff_t q = 0; q < s; ++q) {
          double acc = bias[o];
          for (std::size_t i = 0; i < c_in; ++i) {
            for (std::ptrdiff_t kr = 0; kr < 3; ++kr) {
              for (std::ptrdiff_t kc = 0; kc < 3; ++kc) {
                const std::ptrdiff_t rr = r + kr - 1;
                const std::ptrdiff_t cc = q + kc - 1;
                if (rr < 0 || rr >= s || cc < 0 || cc >= s) continue;
                acc += kernels[((o * c_in + i) * 9) + static_cast<std::size_t>(kr * 3 + kc)] *
                       input[(j * c_in + i) * plane + static_cast<std::size_t>(rr * s + cc)];
              }
            }
          }
          output[(j * c_out + o) * plane + static_cast<std::size_t>(r * s + q)] = acc;
        }
      }
    }
  }
}

void batched_matvec(std::size_t batch, std::size_t dim, std::span<const double> mats,
                    std::span<const double> vecs, std::span<double> out) {
  for (std::size_t j = 0; j < batch; ++j) {
    for (std::size_t r = 0; r < dim; ++r) {
      double acc = 0.0;
      for (std::size_t c = 0; c < dim; ++c) {
        acc += mats[(j * dim + r) * dim + c] * vecs[j * dim + c];
      }
      out[j * dim + r] = acc;
    }
  }
}

}  // namespace reference

}  // namespace deep2bsde::kernels
