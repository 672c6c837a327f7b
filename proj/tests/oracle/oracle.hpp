#pragma once

// Independent straight-line re-implementations used as test oracles. Nothing
// here touches the tape, the kernels or the ParamLayout machinery; offsets
// are recomputed from the block sizes directly.

#include <array>
#include <cmath>
#include <cstddef>
#include <vector>

namespace oracle {

using Vec = std::vector<double>;

/// P x + Q with P (k x l) stored row-major at theta[off], Q right after it.
/// Advances `off` past the block.
inline Vec affine(const Vec& theta, std::size_t& off, std::size_t k, std::size_t l, const Vec& x) {
  Vec out(k);
  for (std::size_t r = 0; r < k; ++r) {
    double acc = theta[off + k * l + r];
    for (std::size_t c = 0; c < l; ++c) acc += theta[off + r * l + c] * x[c];
    out[r] = acc;
  }
  off += k * l + k;
  return out;
}

inline Vec relu(Vec v) {
  for (double& e : v) e = e > 0 ? e : 0;
  return v;
}

/// Offset of the first network block after the initial block.
inline std::size_t initial_block_size(std::size_t d) { return (d + 1) * (d + 1); }

/// Multiscale network output (A when `hessian` is false, flattened G otherwise)
/// for a single state x. Block order: A layer 1 (4 scales), A layer 2, A
/// layer 3, then the same for G.
inline Vec multiscale(const Vec& theta, std::size_t d, std::array<std::size_t, 4> w, const Vec& x, bool hessian) {
  std::size_t a_size = 0;
  for (std::size_t i = 0; i < 4; ++i) a_size += w[i] * (d + 1) + w[i] * (w[i] + 1) + d * (w[i] + 1);
  const std::size_t base = initial_block_size(d) + (hessian ? a_size : 0);
  const std::size_t out_dim = hessian ? d * d : d;

  std::array<std::size_t, 3> layer_start{};
  layer_start[0] = base;
  layer_start[1] = layer_start[0];
  for (std::size_t i = 0; i < 4; ++i) layer_start[1] += w[i] * (d + 1);
  layer_start[2] = layer_start[1];
  for (std::size_t i = 0; i < 4; ++i) layer_start[2] += w[i] * (w[i] + 1);

  Vec fused(out_dim, 0.0);
  std::array<std::size_t, 3> off = layer_start;
  for (std::size_t i = 0; i < 4; ++i) {
    Vec h = relu(affine(theta, off[0], w[i], d, x));
    h = relu(affine(theta, off[1], w[i], w[i], h));
    Vec o = affine(theta, off[2], out_dim, w[i], h);
    for (std::size_t k = 0; k < out_dim; ++k) fused[k] += o[k] / 4.0;
  }
  return fused;
}

/// Direct zero-padded 3x3 convolution of one image (c_in x s x s).
inline Vec conv(const Vec& theta, std::size_t& off, std::size_t c_in, std::size_t c_out, std::size_t s, const Vec& z) {
  Vec out(c_out * s * s);
  const std::size_t bias = off + c_out * c_in * 9;
  for (std::size_t o = 0; o < c_out; ++o) {
    for (std::size_t r = 0; r < s; ++r) {
      for (std::size_t c = 0; c < s; ++c) {
        double acc = theta[bias + o];
        for (std::size_t i = 0; i < c_in; ++i) {
          for (int dr = -1; dr <= 1; ++dr) {
            for (int dc = -1; dc <= 1; ++dc) {
              const long rr = static_cast<long>(r) + dr;
              const long cc = static_cast<long>(c) + dc;
              if (rr < 0 || cc < 0 || rr >= static_cast<long>(s) || cc >= static_cast<long>(s)) continue;
              const double k = theta[off + ((o * c_in + i) * 3 + static_cast<std::size_t>(dr + 1)) * 3 +
                                     static_cast<std::size_t>(dc + 1)];
              acc += k * z[(i * s + static_cast<std::size_t>(rr)) * s + static_cast<std::size_t>(cc)];
            }
          }
        }
        out[(o * s + r) * s + c] = acc;
      }
    }
  }
  off = bias + c_out;
  return out;
}

/// CNN output for a single state x. Per network: conv1 (c x 1 x 3 x 3, c),
/// conv2 (c x c x 3 x 3, c), conv3 (1 x c x 3 x 3, 1), affine (out x d, out).
inline Vec cnn(const Vec& theta, std::size_t d, std::size_t c, const Vec& x, bool hessian, bool relu_last) {
  const auto s = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(d))));
  const std::size_t conv_size = (9 * c + c) + (9 * c * c + c) + (9 * c + 1);
  std::size_t off = initial_block_size(d) + (hessian ? conv_size + d * d + d : 0);
  // Column-major image: Z[r][col] = x[col * s + r].
  Vec z(d);
  for (std::size_t r = 0; r < s; ++r)
    for (std::size_t col = 0; col < s; ++col) z[r * s + col] = x[col * s + r];
  Vec h = relu(conv(theta, off, 1, c, s, z));
  h = relu(conv(theta, off, c, c, s, h));
  h = conv(theta, off, c, 1, s, h);
  if (relu_last) h = relu(h);
  Vec flat(d);
  for (std::size_t r = 0; r < s; ++r)
    for (std::size_t col = 0; col < s; ++col) flat[col * s + r] = h[r * s + col];
  return affine(theta, off, hessian ? d * d : d, d, flat);
}

}  // namespace oracle
