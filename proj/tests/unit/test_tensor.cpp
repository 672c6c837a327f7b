#include <doctest.h>

#include <random>
#include <vector>

#include "deep2bsde/errors.hpp"
#include "deep2bsde/ops.hpp"
#include "deep2bsde/param_vector.hpp"
#include "deep2bsde/tensor.hpp"

using namespace deep2bsde;

TEST_CASE("tensor shape and data stay consistent") {
  Tensor t({2, 3});
  CHECK(t.numel() == 6);
  CHECK(t.rank() == 2);
  t.at({1, 2}) = 5.0;
  CHECK(t[5] == 5.0);
  CHECK(t.reshaped({3, 2}).at({2, 1}) == 5.0);
  CHECK_THROWS_AS(Tensor({2, 2}, {1.0, 2.0, 3.0}), DimensionError);
  CHECK_THROWS_AS(Tensor({1, 1, 1, 1, 1}), DimensionError);
  CHECK_THROWS_AS(t.reshaped({4, 2}), DimensionError);
  CHECK_THROWS_AS(t.item(), UsageError);
  CHECK(Tensor::scalar(2.5).item() == 2.5);
  CHECK(Tensor::filled({2}, std::nan("")).all_finite() == false);
}

TEST_CASE("param layout segments are disjoint and cover the vector") {
  ParamLayout layout;
  layout.append("a", {2, 3});
  layout.append("b", {4});
  layout.append("c", {1, 1, 3, 3});
  std::size_t next = 0;
  for (const Segment& s : layout.segments()) {
    CHECK(s.offset == next);
    next = s.end();
  }
  CHECK(next == layout.size());
  CHECK(layout.size() == 19);
  CHECK(layout["b"].offset == 6);
  CHECK_THROWS(layout.append("a", {1}));
  ParamVector p(layout);
  p.segment("b")[0] = 1.5;
  CHECK(p.values()[6] == 1.5);
}

TEST_CASE("backward of theta^2 at 3 gives 6") {
  Tape tape;
  Var theta = tape.leaf(Tensor({1}, {3.0}));
  Var loss = ad::sum(ad::mul(theta, theta));
  tape.backward(loss);
  CHECK(tape.gradient(theta)[0] == doctest::Approx(6.0));
}

TEST_CASE("a segment the loss does not use gets a zero gradient") {
  ParamLayout layout;
  const Segment used = layout.append("used", {2});
  layout.append("unused", {3});
  Tape tape;
  Var theta = tape.leaf(Tensor({5}, {1, 2, 3, 4, 5}));
  Var s = ad::slice(theta, used);
  tape.backward(ad::sum(ad::mul(s, s)));
  const Tensor g = tape.gradient(theta);
  CHECK(g[0] == doctest::Approx(2.0));
  CHECK(g[1] == doctest::Approx(4.0));
  for (std::size_t i = 2; i < 5; ++i) CHECK(g[i] == 0.0);
}

TEST_CASE("backward on a non-scalar raises a usage error") {
  Tape tape;
  Var theta = tape.leaf(Tensor({3}, {1, 2, 3}));
  CHECK_THROWS_AS(tape.backward(ad::relu(theta)), UsageError);
}

TEST_CASE("gradient of a variable that does not reach the loss is zero") {
  Tape tape;
  Var a = tape.leaf(Tensor({2}, {1, 2}));
  Var b = tape.leaf(Tensor({2}, {3, 4}));
  tape.backward(ad::sum(a));
  const Tensor g = tape.gradient(b);
  CHECK(g[0] == 0.0);
  CHECK(g[1] == 0.0);
}

TEST_CASE("tape replay is bit-identical") {
  std::mt19937_64 gen(1);
  std::normal_distribution<double> normal;
  std::vector<double> values(12);
  for (double& v : values) v = normal(gen);
  auto run = [&] {
    ParamLayout layout;
    const Segment w = layout.append("w", {3, 2});
    const Segment b = layout.append("b", {3});
    layout.append("x", {3});
    Tape tape;
    Var theta = tape.leaf(Tensor({12}, values));
    Var x = ad::reshape(ad::slice(theta, layout["x"]), {1, 3});
    Var h = ad::relu(ad::affine(theta, w, b, ad::reshape(ad::slice(theta, {"x2", 9, {2}}), {1, 2})));
    Var loss = ad::sum(ad::mul(h, x));
    tape.backward(loss);
    std::vector<double> out{loss.value().item()};
    for (double g : tape.gradient(theta).values()) out.push_back(g);
    return out;
  };
  CHECK(run() == run());
}
