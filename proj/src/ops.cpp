#include "deep2bsde/ops.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <utility>
#include <vector>

#include "deep2bsde/errors.hpp"
#include "deep2bsde/kernels.hpp"

namespace deep2bsde::ad {

namespace {

using kernels::Trans;

Tape& tape_of(Var a) {
  if (!a.tape()) throw UsageError("Var is not bound to a tape");
  return *a.tape();
}

Tape& common_tape(Var a, Var b) {
  if (a.tape() != b.tape()) throw UsageError("operands live on different tapes");
  return tape_of(a);
}

void require_same_shape(const Shape& a, const Shape& b, const char* op) {
  if (a != b) throw DimensionError(std::string(op) + ": shape " + shape_string(a) + " vs " + shape_string(b));
}

void require_theta(Var theta, const Segment& seg) {
  const Tensor& t = theta.value();
  if (t.rank() != 1 || seg.end() > t.numel()) {
    throw DimensionError("segment '" + seg.name + "' does not fit parameter vector of size " +
                         std::to_string(t.numel()));
  }
}

std::span<const double> segment_values(Var theta, const Segment& seg) {
  return theta.value().data().subspan(seg.offset, seg.size());
}

std::size_t isqrt_exact(std::size_t d) {
  auto r = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(d))));
  while (r * r > d) --r;
  while ((r + 1) * (r + 1) <= d) ++r;
  if (r * r != d) throw ConfigError("dimension " + std::to_string(d) + " is not a perfect square");
  return r;
}

}  // namespace

Var slice(Var theta, const Segment& segment) {
  require_theta(theta, segment);
  auto vals = segment_values(theta, segment);
  Tensor out(segment.shape, std::vector<double>(vals.begin(), vals.end()));
  const std::size_t offset = segment.offset;
  return tape_of(theta).record(std::move(out), {theta.id()}, [tid = theta.id(), offset](Tape& t, NodeId self) {
    auto g = t.grad(self);
    auto dst = t.accumulate(tid).subspan(offset, g.size());
    for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
  });
}

Var broadcast_batch(Var x, std::size_t batch) {
  const Tensor& v = x.value();
  Shape shape{batch};
  shape.insert(shape.end(), v.shape().begin(), v.shape().end());
  Tensor out(std::move(shape));
  const std::size_t n = v.numel();
  for (std::size_t j = 0; j < batch; ++j) std::copy(v.data().begin(), v.data().end(), out.data().begin() + j * n);
  return tape_of(x).record(std::move(out), {x.id()}, [xid = x.id(), batch, n](Tape& t, NodeId self) {
    auto g = t.grad(self);
    auto dst = t.accumulate(xid);
    for (std::size_t j = 0; j < batch; ++j)
      for (std::size_t i = 0; i < n; ++i) dst[i] += g[j * n + i];
  });
}

Var affine(Var theta, const Segment& weight, const Segment& bias, Var x) {
  require_theta(theta, weight);
  require_theta(theta, bias);
  if (weight.shape.size() != 2 || bias.shape.size() != 1 || bias.shape[0] != weight.shape[0]) {
    throw DimensionError("affine: weight " + shape_string(weight.shape) + " / bias " + shape_string(bias.shape));
  }
  const std::size_t k = weight.shape[0];
  const std::size_t l = weight.shape[1];
  const Shape& xs = x.shape();
  if (xs.size() != 2 || xs[1] != l) {
    throw DimensionError("affine: input " + shape_string(xs) + " does not match weight " + shape_string(weight.shape));
  }
  const std::size_t rows = xs[0];
  Tensor out(Shape{rows, k});
  auto w = segment_values(theta, weight);
  auto b = segment_values(theta, bias);
  kernels::gemm(Trans::no, Trans::yes, rows, k, l, 1.0, x.value().data(), w, 0.0, out.data());
  auto o = out.data();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t i = 0; i < k; ++i) o[r * k + i] += b[i];

  return common_tape(theta, x).record(
      std::move(out), {theta.id(), x.id()},
      [tid = theta.id(), xid = x.id(), woff = weight.offset, boff = bias.offset, rows, k, l](Tape& t, NodeId self) {
        auto g = t.grad(self);
        const auto th = t.value(tid).data();
        if (t.requires_grad(xid)) {
          kernels::gemm(Trans::no, Trans::no, rows, l, k, 1.0, g, th.subspan(woff, k * l), 1.0, t.accumulate(xid));
        }
        if (t.requires_grad(tid)) {
          auto dth = t.accumulate(tid);
          kernels::gemm(Trans::yes, Trans::no, k, l, rows, 1.0, g, t.value(xid).data(), 1.0, dth.subspan(woff, k * l));
          auto db = dth.subspan(boff, k);
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t i = 0; i < k; ++i) db[i] += g[r * k + i];
        }
      });
}

Var conv3x3(Var theta, const Segment& kernels_seg, const Segment& bias, Var z) {
  require_theta(theta, kernels_seg);
  require_theta(theta, bias);
  const Shape& ks = kernels_seg.shape;
  if (ks.size() != 4 || ks[2] != 3 || ks[3] != 3 || bias.shape.size() != 1 || bias.shape[0] != ks[0]) {
    throw DimensionError("conv3x3: kernels " + shape_string(ks) + " / bias " + shape_string(bias.shape));
  }
  const Shape& zs = z.shape();
  if (zs.size() != 4 || zs[2] != zs[3] || zs[2] == 0) {
    throw DimensionError("conv3x3: input must be J x c x s x s, got " + shape_string(zs));
  }
  const std::size_t c_out = ks[0];
  const std::size_t c_in = ks[1];
  if (zs[1] != c_in) {
    throw DimensionError("conv3x3: input has " + std::to_string(zs[1]) + " channels, kernels expect " +
                         std::to_string(c_in));
  }
  const std::size_t batch = zs[0];
  const std::size_t side = zs[2];
  const std::size_t plane = side * side;
  const std::size_t width = c_in * 9;
  const std::size_t rows = batch * plane;

  auto cols = std::make_shared<std::vector<double>>(rows * width);
  kernels::im2col3x3(batch, c_in, side, z.value().data(), *cols);
  std::vector<double> tmp(rows * c_out);
  auto kv = segment_values(theta, kernels_seg);
  auto bv = segment_values(theta, bias);
  kernels::gemm(Trans::no, Trans::yes, rows, c_out, width, 1.0, *cols, kv, 0.0, tmp);

  Tensor out(Shape{batch, c_out, side, side});
  auto o = out.data();
  for (std::size_t j = 0; j < batch; ++j)
    for (std::size_t p = 0; p < plane; ++p)
      for (std::size_t c = 0; c < c_out; ++c) o[(j * c_out + c) * plane + p] = tmp[(j * plane + p) * c_out + c] + bv[c];

  return common_tape(theta, z).record(
      std::move(out), {theta.id(), z.id()},
      [tid = theta.id(), zid = z.id(), koff = kernels_seg.offset, boff = bias.offset, cols, batch, c_in, c_out, side,
       plane, width, rows](Tape& t, NodeId self) {
        auto g = t.grad(self);
        std::vector<double> dtmp(rows * c_out);
        for (std::size_t j = 0; j < batch; ++j)
          for (std::size_t p = 0; p < plane; ++p)
            for (std::size_t c = 0; c < c_out; ++c) dtmp[(j * plane + p) * c_out + c] = g[(j * c_out + c) * plane + p];
        if (t.requires_grad(tid)) {
          auto dth = t.accumulate(tid);
          kernels::gemm(Trans::yes, Trans::no, c_out, width, rows, 1.0, dtmp, *cols, 1.0,
                        dth.subspan(koff, c_out * width));
          auto db = dth.subspan(boff, c_out);
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < c_out; ++c) db[c] += dtmp[r * c_out + c];
        }
        if (t.requires_grad(zid)) {
          std::vector<double> dcols(rows * width);
          kernels::gemm(Trans::no, Trans::no, rows, width, c_out, 1.0, dtmp,
                        t.value(tid).data().subspan(koff, c_out * width), 0.0, dcols);
          kernels::col2im3x3(batch, c_in, side, dcols, t.accumulate(zid));
        }
      });
}

Var relu(Var x) {
  const Tensor& v = x.value();
  Tensor out(v.shape());
  auto o = out.data();
  auto in = v.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = in[i] > 0.0 ? in[i] : 0.0;
  return tape_of(x).record(std::move(out), {x.id()}, [xid = x.id()](Tape& t, NodeId self) {
    auto g = t.grad(self);
    auto in = t.value(xid).data();
    auto dst = t.accumulate(xid);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (in[i] > 0.0) dst[i] += g[i];
  });
}

Var unary(Var x, std::function<double(double)> f, std::function<double(double)> df) {
  const Tensor& v = x.value();
  Tensor out(v.shape());
  auto o = out.data();
  auto in = v.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = f(in[i]);
  return tape_of(x).record(std::move(out), {x.id()}, [xid = x.id(), df = std::move(df)](Tape& t, NodeId self) {
    auto g = t.grad(self);
    auto in = t.value(xid).data();
    auto dst = t.accumulate(xid);
    for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i] * df(in[i]);
  });
}

Var vec_to_square(Var x) {
  const Shape& xs = x.shape();
  if (xs.size() != 2) throw DimensionError("vec_to_square: expected J x d, got " + shape_string(xs));
  const std::size_t batch = xs[0];
  const std::size_t d = xs[1];
  const std::size_t n = isqrt_exact(d);
  Tensor out(Shape{batch, 1, n, n});
  auto in = x.value().data();
  auto o = out.data();
  for (std::size_t j = 0; j < batch; ++j)
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < n; ++c) o[j * d + r * n + c] = in[j * d + c * n + r];
  return tape_of(x).record(std::move(out), {x.id()}, [xid = x.id(), batch, d, n](Tape& t, NodeId self) {
    auto g = t.grad(self);
    auto dst = t.accumulate(xid);
    for (std::size_t j = 0; j < batch; ++j)
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < n; ++c) dst[j * d + c * n + r] += g[j * d + r * n + c];
  });
}

Var square_to_vec(Var z) {
  const Shape& zs = z.shape();
  if (zs.size() != 4 || zs[1] != 1 || zs[2] != zs[3]) {
    throw DimensionError("square_to_vec: expected J x 1 x n x n, got " + shape_string(zs));
  }
  const std::size_t batch = zs[0];
  const std::size_t n = zs[2];
  const std::size_t d = n * n;
  Tensor out(Shape{batch, d});
  auto in = z.value().data();
  auto o = out.data();
  for (std::size_t j = 0; j < batch; ++j)
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < n; ++c) o[j * d + c * n + r] = in[j * d + r * n + c];
  return tape_of(z).record(std::move(out), {z.id()}, [zid = z.id(), batch, d, n](Tape& t, NodeId self) {
    auto g = t.grad(self);
    auto dst = t.accumulate(zid);
    for (std::size_t j = 0; j < batch; ++j)
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < n; ++c) dst[j * d + r * n + c] += g[j * d + c * n + r];
  });
}

Var reshape(Var x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  return tape_of(x).record(std::move(out), {x.id()}, [xid = x.id()](Tape& t, NodeId self) {
    auto g = t.grad(self);
    auto dst = t.accumulate(xid);
    for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
  });
}

Var add(Var a, Var b) {
  require_same_shape(a.shape(), b.shape(), "add");
  Tensor out(a.shape());
  auto o = out.data();
  auto av = a.value().data();
  auto bv = b.value().data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = av[i] + bv[i];
  return common_tape(a, b).record(std::move(out), {a.id(), b.id()}, [aid = a.id(), bid = b.id()](Tape& t, NodeId self) {
    auto g = t.grad(self);
    for (NodeId p : {aid, bid}) {
      if (!t.requires_grad(p)) continue;
      auto dst = t.accumulate(p);
      for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
    }
  });
}

Var sub(Var a, Var b) {
  require_same_shape(a.shape(), b.shape(), "sub");
  Tensor out(a.shape());
  auto o = out.data();
  auto av = a.value().data();
  auto bv = b.value().data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = av[i] - bv[i];
  return common_tape(a, b).record(std::move(out), {a.id(), b.id()}, [aid = a.id(), bid = b.id()](Tape& t, NodeId self) {
    auto g = t.grad(self);
    if (t.requires_grad(aid)) {
      auto dst = t.accumulate(aid);
      for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
    }
    if (t.requires_grad(bid)) {
      auto dst = t.accumulate(bid);
      for (std::size_t i = 0; i < g.size(); ++i) dst[i] -= g[i];
    }
  });
}

Var mul(Var a, Var b) {
  require_same_shape(a.shape(), b.shape(), "mul");
  Tensor out(a.shape());
  auto o = out.data();
  auto av = a.value().data();
  auto bv = b.value().data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = av[i] * bv[i];
  return common_tape(a, b).record(std::move(out), {a.id(), b.id()}, [aid = a.id(), bid = b.id()](Tape& t, NodeId self) {
    auto g = t.grad(self);
    auto av = t.value(aid).data();
    auto bv = t.value(bid).data();
    if (t.requires_grad(aid)) {
      auto dst = t.accumulate(aid);
      for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i] * bv[i];
    }
    if (t.requires_grad(bid)) {
      auto dst = t.accumulate(bid);
      for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i] * av[i];
    }
  });
}

Var scale(Var x, double factor) {
  Tensor out(x.shape());
  auto o = out.data();
  auto in = x.value().data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = factor * in[i];
  return tape_of(x).record(std::move(out), {x.id()}, [xid = x.id(), factor](Tape& t, NodeId self) {
    auto g = t.grad(self);
    auto dst = t.accumulate(xid);
    for (std::size_t i = 0; i < g.size(); ++i) dst[i] += factor * g[i];
  });
}

Var mul_const(Var x, const Tensor& c) {
  require_same_shape(x.shape(), c.shape(), "mul_const");
  Tensor out(x.shape());
  auto o = out.data();
  auto in = x.value().data();
  auto cv = c.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = in[i] * cv[i];
  return tape_of(x).record(std::move(out), {x.id()}, [xid = x.id(), c](Tape& t, NodeId self) {
    auto g = t.grad(self);
    auto dst = t.accumulate(xid);
    auto cv = c.data();
    for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i] * cv[i];
  });
}

Var sum_rows(Var x) {
  const Shape& xs = x.shape();
  if (xs.size() != 2) throw DimensionError("sum_rows: expected J x k, got " + shape_string(xs));
  const std::size_t rows = xs[0];
  const std::size_t k = xs[1];
  Tensor out(Shape{rows, 1});
  auto in = x.value().data();
  for (std::size_t r = 0; r < rows; ++r) {
    double acc = 0.0;
    for (std::size_t i = 0; i < k; ++i) acc += in[r * k + i];
    out[r] = acc;
  }
  return tape_of(x).record(std::move(out), {x.id()}, [xid = x.id(), rows, k](Tape& t, NodeId self) {
    auto g = t.grad(self);
    auto dst = t.accumulate(xid);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t i = 0; i < k; ++i) dst[r * k + i] += g[r];
  });
}

Var sum_squares_rows(Var x) {
  const Shape& xs = x.shape();
  if (xs.size() != 2) throw DimensionError("sum_squares_rows: expected J x k, got " + shape_string(xs));
  const std::size_t rows = xs[0];
  const std::size_t k = xs[1];
  Tensor out(Shape{rows, 1});
  auto in = x.value().data();
  for (std::size_t r = 0; r < rows; ++r) {
    double acc = 0.0;
    for (std::size_t i = 0; i < k; ++i) acc += in[r * k + i] * in[r * k + i];
    out[r] = acc;
  }
  return tape_of(x).record(std::move(out), {x.id()}, [xid = x.id(), rows, k](Tape& t, NodeId self) {
    auto g = t.grad(self);
    auto in = t.value(xid).data();
    auto dst = t.accumulate(xid);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t i = 0; i < k; ++i) dst[r * k + i] += 2.0 * in[r * k + i] * g[r];
  });
}

Var rowdot_const(Var x, const Tensor& c) {
  require_same_shape(x.shape(), c.shape(), "rowdot_const");
  const Shape& xs = x.shape();
  if (xs.size() != 2) throw DimensionError("rowdot_const: expected J x k, got " + shape_string(xs));
  const std::size_t rows = xs[0];
  const std::size_t k = xs[1];
  Tensor out(Shape{rows, 1});
  auto in = x.value().data();
  auto cv = c.data();
  for (std::size_t r = 0; r < rows; ++r) {
    double acc = 0.0;
    for (std::size_t i = 0; i < k; ++i) acc += in[r * k + i] * cv[r * k + i];
    out[r] = acc;
  }
  return tape_of(x).record(std::move(out), {x.id()}, [xid = x.id(), c, rows, k](Tape& t, NodeId self) {
    auto g = t.grad(self);
    auto cv = c.data();
    auto dst = t.accumulate(xid);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t i = 0; i < k; ++i) dst[r * k + i] += cv[r * k + i] * g[r];
  });
}

Var diag(Var g) {
  const Shape& gs = g.shape();
  if (gs.size() != 3 || gs[1] != gs[2]) throw DimensionError("diag: expected J x d x d, got " + shape_string(gs));
  const std::size_t batch = gs[0];
  const std::size_t d = gs[1];
  Tensor out(Shape{batch, d});
  auto in = g.value().data();
  for (std::size_t j = 0; j < batch; ++j)
    for (std::size_t i = 0; i < d; ++i) out[j * d + i] = in[(j * d + i) * d + i];
  return tape_of(g).record(std::move(out), {g.id()}, [gid = g.id(), batch, d](Tape& t, NodeId self) {
    auto gr = t.grad(self);
    auto dst = t.accumulate(gid);
    for (std::size_t j = 0; j < batch; ++j)
      for (std::size_t i = 0; i < d; ++i) dst[(j * d + i) * d + i] += gr[j * d + i];
  });
}

Var matvec_const(Var g, const Tensor& v) {
  const Shape& gs = g.shape();
  if (gs.size() != 3 || gs[1] != gs[2]) throw DimensionError("matvec_const: expected J x d x d, got " + shape_string(gs));
  const std::size_t batch = gs[0];
  const std::size_t d = gs[1];
  if (v.shape() != Shape{batch, d}) {
    throw DimensionError("matvec_const: vector " + shape_string(v.shape()) + " vs matrices " + shape_string(gs));
  }
  Tensor out(Shape{batch, d});
  kernels::batched_matvec(batch, d, g.value().data(), v.data(), out.data());
  return tape_of(g).record(std::move(out), {g.id()}, [gid = g.id(), v, batch, d](Tape& t, NodeId self) {
    auto gr = t.grad(self);
    auto vv = v.data();
    auto dst = t.accumulate(gid);
    for (std::size_t j = 0; j < batch; ++j)
      for (std::size_t r = 0; r < d; ++r)
        for (std::size_t c = 0; c < d; ++c) dst[(j * d + r) * d + c] += gr[j * d + r] * vv[j * d + c];
  });
}

Var sum(Var x) {
  double acc = kernels::pairwise_sum(x.value().data());
  return tape_of(x).record(Tensor::scalar(acc), {x.id()}, [xid = x.id()](Tape& t, NodeId self) {
    const double g = t.grad(self)[0];
    auto dst = t.accumulate(xid);
    for (double& v : dst) v += g;
  });
}

Var mean_squared_error(Var y, const Tensor& target) {
  require_same_shape(y.shape(), target.shape(), "mean_squared_error");
  auto yv = y.value().data();
  auto tv = target.data();
  const std::size_t n = yv.size();
  if (n == 0) throw DimensionError("mean_squared_error: empty batch");
  std::vector<double> sq(n);
  for (std::size_t i = 0; i < n; ++i) sq[i] = (yv[i] - tv[i]) * (yv[i] - tv[i]);
  const double value = kernels::pairwise_sum(sq) / static_cast<double>(n);
  return tape_of(y).record(Tensor::scalar(value), {y.id()}, [yid = y.id(), target, n](Tape& t, NodeId self) {
    const double g = t.grad(self)[0];
    auto yv = t.value(yid).data();
    auto tv = target.data();
    auto dst = t.accumulate(yid);
    const double factor = 2.0 * g / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) dst[i] += factor * (yv[i] - tv[i]);
  });
}

double grad_check(const LossBuilder& build, std::span<const double> theta, double h) {
  std::vector<double> point(theta.begin(), theta.end());
  Tensor analytic;
  {
    Tape tape;
    Var leaf = tape.leaf(Tensor(Shape{point.size()}, point));
    Var loss = build(tape, leaf);
    tape.backward(loss);
    analytic = tape.gradient(leaf);
  }
  auto evaluate = [&](const std::vector<double>& at) {
    Tape tape;
    Var leaf = tape.leaf(Tensor(Shape{at.size()}, at));
    return build(tape, leaf).value().item();
  };
  double worst = 0.0;
  for (std::size_t i = 0; i < point.size(); ++i) {
    const double saved = point[i];
    point[i] = saved + h;
    const double up = evaluate(point);
    point[i] = saved - h;
    const double down = evaluate(point);
    point[i] = saved;
    const double numeric = (up - down) / (2.0 * h);
    const double err = std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(analytic[i]));
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace deep2bsde::ad
