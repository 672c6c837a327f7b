#pragma once

// Trainable spatial discretizations.
//
// Both architectures map a batch of states X_{t_n} (J x d) to
//   A(x) ~ L(grad u)(t_n, x)    J x d
//   G(x) ~ Hess u(t_n, x)       J x d x d
// with one set of weights shared by every time step n >= 1. The first
// (d + 1)^2 entries of theta hold the initial block used at n = 0:
//   theta[0]                      y0 ~ u(0, xi)
//   theta[1 .. d]                 z0 ~ grad u(0, xi)
//   theta[d+1 .. d^2+d]           G_0, row-major d x d
//   theta[d^2+d+1 .. d^2+2d]      A_0
//
// Every affine block stores its k x l weight row-major followed by its k
// biases.

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <variant>

#include <json.hpp>

#include "deep2bsde/param_vector.hpp"
#include "deep2bsde/tensor.hpp"

namespace deep2bsde {

/// Four fully connected d -> d_i -> d_i -> out networks per output, fused by
/// their unweighted mean.
struct MultiscaleSpec {
  std::size_t dim = 0;
  std::array<std::size_t, 4> scales{};
};

/// x reshaped to a sqrt(d) x sqrt(d) image, three 3x3 convolutions
/// (1 -> c -> c -> 1, ReLU after each except possibly the last), flattened,
/// then one affine layer.
struct CnnSpec {
  std::size_t dim = 0;
  std::size_t channels = 32;
  bool relu_after_last_conv_a = true;
  bool relu_after_last_conv_g = false;
};

using ArchSpec = std::variant<MultiscaleSpec, CnnSpec>;

std::size_t arch_dim(const ArchSpec& spec);
std::string arch_name(const ArchSpec& spec);
void validate(const ArchSpec& spec);

/// Parameter-count formulas:
///   multiscale  (2 sum d_i + d + 1)(d + 1) + sum (2 d_i + d^2 + d)(d_i + 1)
///   cnn         [(4c + 4) d + d^2 + 1](d + 1)
std::size_t param_count(const ArchSpec& spec);

/// Number of entries the network actually reads. For the multiscale family
/// this is param_count. For the CNN it counts real 3x3 kernels.
std::size_t used_param_count(const ArchSpec& spec);

/// Segment layout of theta. Its size is max(param_count, used_param_count);
/// any slack sits in a trailing "reserved" segment that no op reads.
ParamLayout make_layout(const ArchSpec& spec);

/// Scale applied to the standard deviation of the CNN's final affine weights.
inline constexpr double kCnnOutputScale = 0.1;

/// Affine and conv weights ~ Normal(0, 1/fan_in), except the CNN's final
/// affine weights, whose standard deviation is multiplied by kCnnOutputScale.
/// Biases 0. Initial block: y0 ~ U(-1, 1); z0, G_0, A_0 ~ U(-0.1, 0.1).
/// Deterministic per seed.
ParamVector init_params(const ArchSpec& spec, std::uint64_t seed);

/// Views into the initial block of theta (shared storage).
struct InitialBlock {
  std::span<double> y0;
  std::span<double> z0;
  std::span<double> g0;
  std::span<double> a0;
};

InitialBlock read_initial_block(ParamVector& theta);

/// Tape-recording evaluator of the two networks.
class Network {
 public:
  explicit Network(ArchSpec spec);

  const ArchSpec& spec() const noexcept { return spec_; }
  const ParamLayout& layout() const noexcept { return layout_; }
  std::size_t dim() const noexcept { return dim_; }

  /// x: J x d -> J x d.
  Var eval_a(Var theta, Var x) const;
  /// x: J x d -> J x d x d.
  Var eval_g(Var theta, Var x) const;

 private:
  Var multiscale(Var theta, Var x, char which) const;
  Var cnn(Var theta, Var x, char which, bool relu_last) const;

  ArchSpec spec_;
  ParamLayout layout_;
  std::size_t dim_;
};

/// Convenience evaluation without gradients.
Tensor eval_a(const ArchSpec& spec, const ParamVector& theta, const Tensor& x);
Tensor eval_g(const ArchSpec& spec, const ParamVector& theta, const Tensor& x);

nlohmann::json to_json(const ArchSpec& spec);
ArchSpec arch_from_json(const nlohmann::json& j);

/// Checkpoint file: 8-byte magic "D2BSDECK", u64 little-endian header length,
/// UTF-8 JSON header {"spec", "seed", "step", "size"}, then `size` IEEE-754
/// doubles, little-endian.
struct Checkpoint {
  ArchSpec spec;
  ParamVector params;
  std::uint64_t seed = 0;
  std::size_t step = 0;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace deep2bsde
