#include "deep2bsde/nets.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <string_view>

#include "deep2bsde/errors.hpp"
#include "deep2bsde/ops.hpp"
#include "deep2bsde/rng.hpp"

namespace deep2bsde {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

std::size_t exact_sqrt(std::size_t d) {
  auto r = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(d))));
  while (r * r > d) --r;
  while ((r + 1) * (r + 1) <= d) ++r;
  return r;
}

std::string block(char which, const std::string& rest) { return std::string(1, which) + "." + rest; }

std::string scale_block(char which, std::size_t layer, std::size_t scale, const char* part) {
  return block(which, "l" + std::to_string(layer) + ".s" + std::to_string(scale) + "." + part);
}

void append_initial_block(ParamLayout& layout, std::size_t d) {
  layout.append("y0", {1});
  layout.append("z0", {d});
  layout.append("g0", {d, d});
  layout.append("a0", {d});
}

std::size_t conv_params(std::size_t c) { return (9 * 1 * c + c) + (9 * c * c + c) + (9 * c + 1); }

}  // namespace

std::size_t arch_dim(const ArchSpec& spec) {
  return std::visit([](const auto& s) { return s.dim; }, spec);
}

std::string arch_name(const ArchSpec& spec) {
  return std::visit(overloaded{[](const MultiscaleSpec&) { return std::string("multiscale"); },
                               [](const CnnSpec&) { return std::string("cnn"); }},
                    spec);
}

void validate(const ArchSpec& spec) {
  std::visit(overloaded{[](const MultiscaleSpec& s) {
                          if (s.dim == 0) throw ConfigError("network dimension must be at least 1");
                          for (std::size_t w : s.scales) {
                            if (w == 0) throw ConfigError("multiscale widths must be positive");
                          }
                        },
                        [](const CnnSpec& s) {
                          if (s.dim == 0) throw ConfigError("network dimension must be at least 1");
                          const std::size_t r = exact_sqrt(s.dim);
                          if (r * r != s.dim) {
                            throw ConfigError("CNN needs a perfect-square dimension, got " + std::to_string(s.dim));
                          }
                          if (s.channels == 0) throw ConfigError("CNN needs at least one channel");
                        }},
             spec);
}

std::size_t param_count(const ArchSpec& spec) {
  validate(spec);
  return std::visit(overloaded{[](const MultiscaleSpec& s) {
                                 const std::size_t d = s.dim;
                                 std::size_t widths = 0;
                                 std::size_t blocks = 0;
                                 for (std::size_t w : s.scales) {
                                   widths += w;
                                   blocks += (2 * w + d * d + d) * (w + 1);
                                 }
                                 return (2 * widths + d + 1) * (d + 1) + blocks;
                               },
                               [](const CnnSpec& s) {
                                 const std::size_t d = s.dim;
                                 return ((4 * s.channels + 4) * d + d * d + 1) * (d + 1);
                               }},
                    spec);
}

std::size_t used_param_count(const ArchSpec& spec) {
  validate(spec);
  if (std::holds_alternative<MultiscaleSpec>(spec)) return param_count(spec);
  const auto& s = std::get<CnnSpec>(spec);
  const std::size_t d = s.dim;
  return (d + 1) * (d + 1) + 2 * conv_params(s.channels) + (d * d + d) + (d * d * d + d * d);
}

ParamLayout make_layout(const ArchSpec& spec) {
  validate(spec);
  ParamLayout layout;
  const std::size_t d = arch_dim(spec);
  append_initial_block(layout, d);
  std::visit(overloaded{[&](const MultiscaleSpec& s) {
                          for (char which : {'A', 'G'}) {
                            const std::size_t out = which == 'A' ? d : d * d;
                            for (std::size_t layer = 1; layer <= 3; ++layer) {
                              for (std::size_t i = 0; i < 4; ++i) {
                                const std::size_t w = s.scales[i];
                                const std::size_t in = layer == 1 ? d : w;
                                const std::size_t k = layer == 3 ? out : w;
                                layout.append(scale_block(which, layer, i + 1, "weight"), {k, in});
                                layout.append(scale_block(which, layer, i + 1, "bias"), {k});
                              }
                            }
                          }
                        },
                        [&](const CnnSpec& s) {
                          const std::size_t c = s.channels;
                          for (char which : {'A', 'G'}) {
                            layout.append(block(which, "conv1.weight"), {c, 1, 3, 3});
                            layout.append(block(which, "conv1.bias"), {c});
                            layout.append(block(which, "conv2.weight"), {c, c, 3, 3});
                            layout.append(block(which, "conv2.bias"), {c});
                            layout.append(block(which, "conv3.weight"), {1, c, 3, 3});
                            layout.append(block(which, "conv3.bias"), {1});
                            const std::size_t out = which == 'A' ? d : d * d;
                            layout.append(block(which, "fc.weight"), {out, d});
                            layout.append(block(which, "fc.bias"), {out});
                          }
                        }},
             spec);
  const std::size_t formula = param_count(spec);
  if (layout.size() < formula) layout.append("reserved", {formula - layout.size()});
  return layout;
}

ParamVector init_params(const ArchSpec& spec, std::uint64_t seed) {
  ParamVector theta(make_layout(spec));
  auto gen = make_stream(seed, {stream_tag::init});
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  for (const Segment& seg : theta.layout().segments()) {
    auto values = theta.segment(seg.name);
    const std::string_view name = seg.name;
    if (name == "y0") {
      for (double& v : values) v = unit(gen);
    } else if (name == "z0" || name == "g0" || name == "a0") {
      for (double& v : values) v = 0.1 * unit(gen);
    } else if (name.ends_with(".weight")) {
      // fan_in is everything but the leading (output) axis.
      std::size_t fan_in = 1;
      for (std::size_t k = 1; k < seg.shape.size(); ++k) fan_in *= seg.shape[k];
      double sd = 1.0 / std::sqrt(static_cast<double>(fan_in));
      // The CNN's output layer starts small; at full scale the first G_n
      // evaluations swamp Z and training stalls (seen on HJB, d = 16).
      if (name.ends_with(".fc.weight")) sd *= kCnnOutputScale;
      for (double& v : values) v = sd * normal(gen);
    }
  }
  return theta;
}

InitialBlock read_initial_block(ParamVector& theta) {
  return {theta.segment("y0"), theta.segment("z0"), theta.segment("g0"), theta.segment("a0")};
}

Network::Network(ArchSpec spec) : spec_(spec), layout_(make_layout(spec)), dim_(arch_dim(spec)) {}

Var Network::eval_a(Var theta, Var x) const {
  if (const auto* s = std::get_if<CnnSpec>(&spec_)) return cnn(theta, x, 'A', s->relu_after_last_conv_a);
  return multiscale(theta, x, 'A');
}

Var Network::eval_g(Var theta, Var x) const {
  const std::size_t J = x.shape().at(0);
  Var flat = std::holds_alternative<CnnSpec>(spec_)
                 ? cnn(theta, x, 'G', std::get<CnnSpec>(spec_).relu_after_last_conv_g)
                 : multiscale(theta, x, 'G');
  return ad::reshape(flat, {J, dim_, dim_});
}

Var Network::multiscale(Var theta, Var x, char which) const {
  if (x.shape().size() != 2 || x.shape()[1] != dim_) {
    throw DimensionError("network input must be J x " + std::to_string(dim_) + ", got " + shape_string(x.shape()));
  }
  Var fused;
  for (std::size_t i = 1; i <= 4; ++i) {
    auto layer = [&](std::size_t l, Var in) {
      return ad::affine(theta, layout_[scale_block(which, l, i, "weight")], layout_[scale_block(which, l, i, "bias")],
                        in);
    };
    Var out = layer(3, ad::relu(layer(2, ad::relu(layer(1, x)))));
    fused = i == 1 ? out : ad::add(fused, out);
  }
  return ad::scale(fused, 0.25);
}

Var Network::cnn(Var theta, Var x, char which, bool relu_last) const {
  if (x.shape().size() != 2 || x.shape()[1] != dim_) {
    throw DimensionError("network input must be J x " + std::to_string(dim_) + ", got " + shape_string(x.shape()));
  }
  auto conv = [&](const char* name, Var in) {
    return ad::conv3x3(theta, layout_[block(which, std::string(name) + ".weight")],
                       layout_[block(which, std::string(name) + ".bias")], in);
  };
  Var h = ad::relu(conv("conv1", ad::vec_to_square(x)));
  h = ad::relu(conv("conv2", h));
  h = conv("conv3", h);
  if (relu_last) h = ad::relu(h);
  return ad::affine(theta, layout_[block(which, "fc.weight")], layout_[block(which, "fc.bias")], ad::square_to_vec(h));
}

namespace {

Tensor evaluate(const ArchSpec& spec, const ParamVector& theta, const Tensor& x, bool hessian) {
  Network net(spec);
  if (theta.size() != net.layout().size()) throw DimensionError("parameter vector does not match the architecture");
  Tape tape;
  Var th = tape.constant(theta.as_tensor());
  Var in = tape.constant(x);
  return (hessian ? net.eval_g(th, in) : net.eval_a(th, in)).value();
}

}  // namespace

Tensor eval_a(const ArchSpec& spec, const ParamVector& theta, const Tensor& x) {
  return evaluate(spec, theta, x, false);
}

Tensor eval_g(const ArchSpec& spec, const ParamVector& theta, const Tensor& x) {
  return evaluate(spec, theta, x, true);
}

nlohmann::json to_json(const ArchSpec& spec) {
  return std::visit(overloaded{[](const MultiscaleSpec& s) {
                                 return nlohmann::json{{"kind", "multiscale"},
                                                       {"dim", s.dim},
                                                       {"scales", s.scales}};
                               },
                               [](const CnnSpec& s) {
                                 return nlohmann::json{{"kind", "cnn"},
                                                       {"dim", s.dim},
                                                       {"channels", s.channels},
                                                       {"relu_after_last_conv_a", s.relu_after_last_conv_a},
                                                       {"relu_after_last_conv_g", s.relu_after_last_conv_g}};
                               }},
                    spec);
}

ArchSpec arch_from_json(const nlohmann::json& j) {
  try {
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "multiscale") {
      MultiscaleSpec s;
      s.dim = j.at("dim").get<std::size_t>();
      s.scales = j.at("scales").get<std::array<std::size_t, 4>>();
      return s;
    }
    if (kind == "cnn") {
      CnnSpec s;
      s.dim = j.at("dim").get<std::size_t>();
      s.channels = j.value("channels", s.channels);
      s.relu_after_last_conv_a = j.value("relu_after_last_conv_a", s.relu_after_last_conv_a);
      s.relu_after_last_conv_g = j.value("relu_after_last_conv_g", s.relu_after_last_conv_g);
      return s;
    }
    throw ConfigError("unknown architecture kind '" + kind + "'");
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad architecture description: ") + e.what());
  }
}

namespace {

constexpr char kMagic[8] = {'D', '2', 'B', 'S', 'D', 'E', 'C', 'K'};

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  const nlohmann::json header{{"spec", to_json(checkpoint.spec)},
                              {"seed", checkpoint.seed},
                              {"step", checkpoint.step},
                              {"size", checkpoint.params.size()}};
  const std::string text = header.dump();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write checkpoint " + path.string());
  const std::uint64_t length = text.size();
  out.write(kMagic, sizeof kMagic);
  out.write(reinterpret_cast<const char*>(&length), sizeof length);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  const auto values = checkpoint.params.values();
  out.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size_bytes()));
  if (!out) throw Error("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint " + path.string());
  char magic[8];
  std::uint64_t length = 0;
  in.read(magic, sizeof magic);
  in.read(reinterpret_cast<char*>(&length), sizeof length);
  if (!in || std::memcmp(magic, kMagic, sizeof magic) != 0) throw Error("not a checkpoint file: " + path.string());
  if (length > (1u << 20)) throw Error("checkpoint header too large: " + path.string());
  std::string text(length, '\0');
  in.read(text.data(), static_cast<std::streamsize>(length));
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error("corrupt checkpoint header in " + path.string() + ": " + e.what());
  }
  Checkpoint out;
  out.spec = arch_from_json(header.at("spec"));
  out.seed = header.at("seed").get<std::uint64_t>();
  out.step = header.at("step").get<std::size_t>();
  const auto size = header.at("size").get<std::size_t>();
  ParamLayout layout = make_layout(out.spec);
  if (layout.size() != size) throw DimensionError("checkpoint size does not match its architecture");
  std::vector<double> values(size);
  in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(size * sizeof(double)));
  if (!in) throw Error("truncated checkpoint " + path.string());
  out.params = ParamVector(std::move(layout), std::move(values));
  return out;
}

}  // namespace deep2bsde
