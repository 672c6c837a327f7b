#pragma once

// Differentiable primitives recorded on a Tape.
//
// Batched operands carry the sample index as their leading axis: a batch of
// J vectors is J x k, a batch of matrices J x d x d, a batch of images
// J x channels x s x s. Parameter-consuming ops read their weights straight
// out of the flat theta leaf through a Segment, so backward() on the loss
// leaves dLoss/dtheta in theta's gradient buffer.

#include <cstddef>
#include <functional>

#include "deep2bsde/param_vector.hpp"
#include "deep2bsde/tensor.hpp"

namespace deep2bsde::ad {

/// Copy of one parameter segment, shaped like the segment.
Var slice(Var theta, const Segment& segment);

/// Repeats `x` along a new leading batch axis of extent `batch`.
Var broadcast_batch(Var x, std::size_t batch);

/// x * P^T + Q for a batch of l-vectors x (J x l); P is k x l, Q is k.
Var affine(Var theta, const Segment& weight, const Segment& bias, Var x);

/// Zero-padded, stride-1 3x3 convolution of a batch J x c_in x s x s.
/// kernels: c_out x c_in x 3 x 3, bias: c_out. Output keeps the spatial size.
Var conv3x3(Var theta, const Segment& kernels, const Segment& bias, Var z);

/// Elementwise max(x, 0); the subgradient at 0 is 0.
Var relu(Var x);

/// Elementwise f with derivative df.
Var unary(Var x, std::function<double(double)> f, std::function<double(double)> df);

/// J x d -> J x 1 x sqrt(d) x sqrt(d), filled column-major: Z[r][c] = x[c * sqrt(d) + r].
Var vec_to_square(Var x);
/// Inverse of vec_to_square.
Var square_to_vec(Var z);

Var reshape(Var x, Shape shape);

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var x, double factor);
/// Elementwise product with a constant tensor of the same shape.
Var mul_const(Var x, const Tensor& c);

/// J x k -> J x 1 row sums.
Var sum_rows(Var x);
/// J x k -> J x 1 rows of squared norms.
Var sum_squares_rows(Var x);
/// <x_j, c_j> per row for x: J x k and constant c: J x k.
Var rowdot_const(Var x, const Tensor& c);

/// Diagonals of a batch of square matrices: J x d x d -> J x d.
Var diag(Var g);
/// G_j * v_j for G: J x d x d and constant v: J x d.
Var matvec_const(Var g, const Tensor& v);

/// Sum of all elements, as a scalar.
Var sum(Var x);
/// mean_j (y_j - target_j)^2 for y and target of equal shape, as a scalar.
Var mean_squared_error(Var y, const Tensor& target);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator*(double s, Var x) { return scale(x, s); }

/// Builds a scalar loss on `tape` from the theta leaf.
using LossBuilder = std::function<Var(Tape& tape, Var theta)>;

/// Maximum over coordinates of |analytic - central difference| / max(1, |analytic|),
/// where the analytic gradient comes from backward() and the central
/// difference re-runs `build` at theta +/- h e_i.
///
/// `build` must be deterministic in theta. Points where a ReLU pre-activation
/// sits exactly on 0 are non-differentiable and excluded by contract.
double grad_check(const LossBuilder& build, std::span<const double> theta, double h = 1e-6);

}  // namespace deep2bsde::ad
