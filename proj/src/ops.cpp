#include "sadarts/ops.hpp"

#include "sadarts/erf.hpp"
#include "sadarts/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace sadarts {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstRowMap = Eigen::Map<const RowMat>;
using RowMap = Eigen::Map<RowMat>;

Tensor finish(const char* op, Tensor out, std::vector<Tensor> inputs, Tape::BackwardFn fn) {
  if (!Tape::grad_enabled()) return out;
  const bool any = std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) { return t.requires_grad(); });
  if (!any) return out;
  out.set_requires_grad(true);
  Tape::active().record(op, std::move(inputs), out, std::move(fn));
  return out;
}

void push_grad(const Tensor& t, const Array& g) {
  if (t.requires_grad()) t.accumulate_grad(g);
}

[[noreturn]] void dim_error(const std::string& op, const std::string& detail) {
  throw DimensionError(op + ": " + detail);
}

void expect_rank(const std::string& op, const Tensor& t, std::size_t rank, const char* name) {
  if (!t.defined()) dim_error(op, std::string(name) + " is undefined");
  if (t.rank() != rank) {
    dim_error(op, std::string(name) + " must have rank " + std::to_string(rank) + ", got " + shape_string(t.shape()));
  }
}

void expect_same_shape(const std::string& op, const Tensor& a, const Tensor& b) {
  if (a.rank() != b.rank()) dim_error(op, "rank mismatch " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  for (std::size_t i = 0; i < a.rank(); ++i) {
    if (a.dim(i) != b.dim(i)) {
      dim_error(op, "shape mismatch on axis " + std::to_string(i) + " (" + std::to_string(a.dim(i)) + " vs " +
                        std::to_string(b.dim(i)) + ")");
    }
  }
}

struct AxisSplit {
  Index outer;
  Index len;
  Index inner;
};

AxisSplit split_axis(const std::string& op, const Tensor& x, std::size_t axis) {
  if (axis >= x.rank()) dim_error(op, "axis " + std::to_string(axis) + " out of range for " + shape_string(x.shape()));
  AxisSplit s{1, x.dim(axis), 1};
  for (std::size_t i = 0; i < axis; ++i) s.outer *= x.dim(i);
  for (std::size_t i = axis + 1; i < x.rank(); ++i) s.inner *= x.dim(i);
  return s;
}

Index conv_out_size(Index in, Index kernel, Index stride, Index padding, Index dilation) {
  return (in + 2 * padding - dilation * (kernel - 1) - 1) / stride + 1;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  expect_rank("matmul", a, 2, "lhs");
  expect_rank("matmul", b, 2, "rhs");
  if (a.dim(1) != b.dim(0)) {
    dim_error("matmul", "inner axes differ (lhs axis 1 = " + std::to_string(a.dim(1)) + ", rhs axis 0 = " +
                            std::to_string(b.dim(0)) + ")");
  }
  const Index m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor out({m, n});
  RowMap(out.data().data(), m, n).noalias() = ConstRowMap(a.data().data(), m, k) * ConstRowMap(b.data().data(), k, n);
  return finish("matmul", out, {a, b}, [a, b, m, k, n](const Array& g) {
    ConstRowMap gm(g.data(), m, n);
    if (a.requires_grad()) {
      Array ga(m * k);
      RowMap(ga.data(), m, k).noalias() = gm * ConstRowMap(b.data().data(), k, n).transpose();
      a.accumulate_grad(ga);
    }
    if (b.requires_grad()) {
      Array gb(k * n);
      RowMap(gb.data(), k, n).noalias() = ConstRowMap(a.data().data(), m, k).transpose() * gm;
      b.accumulate_grad(gb);
    }
  });
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  expect_rank("linear", x, 2, "input");
  expect_rank("linear", weight, 2, "weight");
  if (x.dim(1) != weight.dim(1)) {
    dim_error("linear", "input axis 1 (" + std::to_string(x.dim(1)) + ") != weight axis 1 (" +
                            std::to_string(weight.dim(1)) + ")");
  }
  const Index n = x.dim(0), f = x.dim(1), o = weight.dim(0);
  const bool has_bias = bias.defined();
  if (has_bias && (bias.rank() != 1 || bias.dim(0) != o)) {
    dim_error("linear", "bias must be [" + std::to_string(o) + "], got " + shape_string(bias.shape()));
  }
  Tensor out({n, o});
  RowMap y(out.data().data(), n, o);
  y.noalias() = ConstRowMap(x.data().data(), n, f) * ConstRowMap(weight.data().data(), o, f).transpose();
  if (has_bias) y.rowwise() += bias.data().matrix().transpose();

  std::vector<Tensor> inputs{x, weight};
  if (has_bias) inputs.push_back(bias);
  return finish("linear", out, std::move(inputs), [x, weight, bias, n, f, o, has_bias](const Array& g) {
    ConstRowMap gm(g.data(), n, o);
    if (x.requires_grad()) {
      Array gx(n * f);
      RowMap(gx.data(), n, f).noalias() = gm * ConstRowMap(weight.data().data(), o, f);
      x.accumulate_grad(gx);
    }
    if (weight.requires_grad()) {
      Array gw(o * f);
      RowMap(gw.data(), o, f).noalias() = gm.transpose() * ConstRowMap(x.data().data(), n, f);
      weight.accumulate_grad(gw);
    }
    if (has_bias && bias.requires_grad()) {
      Array gb = gm.colwise().sum().transpose().array();
      bias.accumulate_grad(gb);
    }
  });
}

Tensor conv2d(const Tensor& x, const Tensor& weight, const ConvAttrs& attrs) {
  expect_rank("conv2d", x, 4, "input");
  expect_rank("conv2d", weight, 4, "weight");
  const Index n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const Index o = weight.dim(0), cg = weight.dim(1), kh = weight.dim(2), kw = weight.dim(3);
  const Index groups = attrs.groups;
  if (attrs.stride <= 0 || attrs.dilation <= 0 || attrs.padding < 0 || groups <= 0) {
    throw ContractError("conv2d: stride, dilation and groups must be positive and padding nonnegative");
  }
  if (c % groups != 0 || o % groups != 0) {
    dim_error("conv2d", "channels (in " + std::to_string(c) + ", out " + std::to_string(o) +
                            ") not divisible by groups " + std::to_string(groups));
  }
  if (cg != c / groups) {
    dim_error("conv2d", "weight axis 1 (" + std::to_string(cg) + ") != input channels / groups (" +
                            std::to_string(c / groups) + ")");
  }
  const Index s = attrs.stride, p = attrs.padding, d = attrs.dilation;
  const Index oh = conv_out_size(h, kh, s, p, d), ow = conv_out_size(w, kw, s, p, d);
  if (oh <= 0 || ow <= 0) dim_error("conv2d", "kernel larger than padded input on spatial axes 2/3");
  const Index og = o / groups;

  Tensor out({n, o, oh, ow});
  {
    const double* xd = x.data().data();
    const double* wd = weight.data().data();
    double* yd = out.data().data();
    for (Index b = 0; b < n; ++b) {
      for (Index oc = 0; oc < o; ++oc) {
        const Index g = oc / og;
        double* yplane = yd + ((b * o + oc) * oh) * ow;
        for (Index ci = 0; ci < cg; ++ci) {
          const double* xplane = xd + ((b * c + g * cg + ci) * h) * w;
          for (Index ki = 0; ki < kh; ++ki) {
            for (Index kj = 0; kj < kw; ++kj) {
              const double wv = wd[((oc * cg + ci) * kh + ki) * kw + kj];
              for (Index y = 0; y < oh; ++y) {
                const Index iy = y * s - p + ki * d;
                if (iy < 0 || iy >= h) continue;
                const double* xrow = xplane + iy * w;
                double* yrow = yplane + y * ow;
                for (Index xo = 0; xo < ow; ++xo) {
                  const Index ix = xo * s - p + kj * d;
                  if (ix < 0 || ix >= w) continue;
                  yrow[xo] += wv * xrow[ix];
                }
              }
            }
          }
        }
      }
    }
  }

  return finish("conv2d", out, {x, weight},
                [x, weight, n, c, h, w, o, cg, kh, kw, s, p, d, oh, ow, og](const Array& gout) {
                  const bool need_x = x.requires_grad(), need_w = weight.requires_grad();
                  Array gx = need_x ? Array::Zero(x.numel()) : Array();
                  Array gw = need_w ? Array::Zero(weight.numel()) : Array();
                  const double* xd = x.data().data();
                  const double* wd = weight.data().data();
                  const double* gd = gout.data();
                  for (Index b = 0; b < n; ++b) {
                    for (Index oc = 0; oc < o; ++oc) {
                      const Index g = oc / og;
                      const double* gplane = gd + ((b * o + oc) * oh) * ow;
                      for (Index ci = 0; ci < cg; ++ci) {
                        const Index xoff = ((b * c + g * cg + ci) * h) * w;
                        for (Index ki = 0; ki < kh; ++ki) {
                          for (Index kj = 0; kj < kw; ++kj) {
                            const Index widx = ((oc * cg + ci) * kh + ki) * kw + kj;
                            const double wv = wd[widx];
                            double acc = 0.0;
                            for (Index y = 0; y < oh; ++y) {
                              const Index iy = y * s - p + ki * d;
                              if (iy < 0 || iy >= h) continue;
                              const double* grow = gplane + y * ow;
                              for (Index xo = 0; xo < ow; ++xo) {
                                const Index ix = xo * s - p + kj * d;
                                if (ix < 0 || ix >= w) continue;
                                const Index xi = xoff + iy * w + ix;
                                if (need_w) acc += grow[xo] * xd[xi];
                                if (need_x) gx[xi] += wv * grow[xo];
                              }
                            }
                            if (need_w) gw[widx] += acc;
                          }
                        }
                      }
                    }
                  }
                  if (need_x) x.accumulate_grad(gx);
                  if (need_w) weight.accumulate_grad(gw);
                });
}

namespace {

struct PoolGeometry {
  Index n, c, h, w, oh, ow;
};

PoolGeometry pool_geometry(const char* op, const Tensor& x, const PoolAttrs& a) {
  expect_rank(op, x, 4, "input");
  if (a.kernel <= 0 || a.stride <= 0 || a.padding < 0 || a.padding * 2 > a.kernel) {
    throw ContractError(std::string(op) + ": invalid kernel/stride/padding");
  }
  PoolGeometry g{x.dim(0), x.dim(1), x.dim(2), x.dim(3), 0, 0};
  g.oh = conv_out_size(g.h, a.kernel, a.stride, a.padding, 1);
  g.ow = conv_out_size(g.w, a.kernel, a.stride, a.padding, 1);
  if (g.oh <= 0 || g.ow <= 0) dim_error(op, "kernel larger than padded input on spatial axes 2/3");
  return g;
}

}  // namespace

Tensor avg_pool2d(const Tensor& x, const PoolAttrs& attrs) {
  const PoolGeometry geo = pool_geometry("avg_pool2d", x, attrs);
  const auto [n, c, h, w, oh, ow] = geo;
  const Index k = attrs.kernel, s = attrs.stride, p = attrs.padding;
  // divisor per output position, shared across planes
  std::vector<double> inv_count(static_cast<std::size_t>(oh * ow));
  for (Index y = 0; y < oh; ++y) {
    for (Index xo = 0; xo < ow; ++xo) {
      Index count = 0;
      for (Index ki = 0; ki < k; ++ki) {
        for (Index kj = 0; kj < k; ++kj) {
          const Index iy = y * s - p + ki, ix = xo * s - p + kj;
          if (iy >= 0 && iy < h && ix >= 0 && ix < w) ++count;
        }
      }
      inv_count[static_cast<std::size_t>(y * ow + xo)] = 1.0 / double(attrs.count_include_pad ? k * k : count);
    }
  }

  Tensor out({n, c, oh, ow});
  const double* xd = x.data().data();
  double* yd = out.data().data();
  for (Index plane = 0; plane < n * c; ++plane) {
    const double* xp = xd + plane * h * w;
    double* yp = yd + plane * oh * ow;
    for (Index y = 0; y < oh; ++y) {
      for (Index xo = 0; xo < ow; ++xo) {
        double acc = 0.0;
        for (Index ki = 0; ki < k; ++ki) {
          const Index iy = y * s - p + ki;
          if (iy < 0 || iy >= h) continue;
          for (Index kj = 0; kj < k; ++kj) {
            const Index ix = xo * s - p + kj;
            if (ix < 0 || ix >= w) continue;
            acc += xp[iy * w + ix];
          }
        }
        yp[y * ow + xo] = acc * inv_count[static_cast<std::size_t>(y * ow + xo)];
      }
    }
  }

  return finish("avg_pool2d", out, {x}, [x, geo, k, s, p, inv_count](const Array& g) {
    const auto [n, c, h, w, oh, ow] = geo;
    Array gx = Array::Zero(x.numel());
    for (Index plane = 0; plane < n * c; ++plane) {
      double* gp = gx.data() + plane * h * w;
      const double* go = g.data() + plane * oh * ow;
      for (Index y = 0; y < oh; ++y) {
        for (Index xo = 0; xo < ow; ++xo) {
          const double v = go[y * ow + xo] * inv_count[static_cast<std::size_t>(y * ow + xo)];
          for (Index ki = 0; ki < k; ++ki) {
            const Index iy = y * s - p + ki;
            if (iy < 0 || iy >= h) continue;
            for (Index kj = 0; kj < k; ++kj) {
              const Index ix = xo * s - p + kj;
              if (ix < 0 || ix >= w) continue;
              gp[iy * w + ix] += v;
            }
          }
        }
      }
    }
    x.accumulate_grad(gx);
  });
}

Tensor max_pool2d(const Tensor& x, const PoolAttrs& attrs) {
  const PoolGeometry geo = pool_geometry("max_pool2d", x, attrs);
  const auto [n, c, h, w, oh, ow] = geo;
  const Index k = attrs.kernel, s = attrs.stride, p = attrs.padding;
  Tensor out({n, c, oh, ow});
  std::vector<Index> argmax(static_cast<std::size_t>(out.numel()));
  const double* xd = x.data().data();
  double* yd = out.data().data();
  for (Index plane = 0; plane < n * c; ++plane) {
    for (Index y = 0; y < oh; ++y) {
      for (Index xo = 0; xo < ow; ++xo) {
        double best = -std::numeric_limits<double>::infinity();
        Index best_idx = -1;
        for (Index ki = 0; ki < k; ++ki) {
          const Index iy = y * s - p + ki;
          if (iy < 0 || iy >= h) continue;
          for (Index kj = 0; kj < k; ++kj) {
            const Index ix = xo * s - p + kj;
            if (ix < 0 || ix >= w) continue;
            const Index idx = plane * h * w + iy * w + ix;
            if (xd[idx] > best) {
              best = xd[idx];
              best_idx = idx;
            }
          }
        }
        const Index oidx = plane * oh * ow + y * ow + xo;
        yd[oidx] = best;
        argmax[static_cast<std::size_t>(oidx)] = best_idx;
      }
    }
  }
  return finish("max_pool2d", out, {x}, [x, argmax = std::move(argmax)](const Array& g) {
    Array gx = Array::Zero(x.numel());
    for (std::size_t i = 0; i < argmax.size(); ++i) gx[argmax[i]] += g[static_cast<Index>(i)];
    x.accumulate_grad(gx);
  });
}

Tensor global_avg_pool(const Tensor& x) {
  expect_rank("global_avg_pool", x, 4, "input");
  const Index n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  Tensor out({n, c});
  for (Index plane = 0; plane < n * c; ++plane) out.data()[plane] = x.data().segment(plane * hw, hw).mean();
  return finish("global_avg_pool", out, {x}, [x, n, c, hw](const Array& g) {
    Array gx(x.numel());
    for (Index plane = 0; plane < n * c; ++plane) gx.segment(plane * hw, hw).setConstant(g[plane] / double(hw));
    x.accumulate_grad(gx);
  });
}

Tensor subsample(const Tensor& x, Index stride) {
  expect_rank("subsample", x, 4, "input");
  if (stride <= 0) throw ContractError("subsample: stride must be positive");
  const Index n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const Index oh = (h + stride - 1) / stride, ow = (w + stride - 1) / stride;
  Tensor out({n, c, oh, ow});
  std::vector<Index> src(static_cast<std::size_t>(out.numel()));
  Index k = 0;
  for (Index plane = 0; plane < n * c; ++plane) {
    for (Index y = 0; y < oh; ++y) {
      for (Index xo = 0; xo < ow; ++xo, ++k) {
        src[static_cast<std::size_t>(k)] = plane * h * w + y * stride * w + xo * stride;
        out.data()[k] = x.data()[src[static_cast<std::size_t>(k)]];
      }
    }
  }
  return finish("subsample", out, {x}, [x, src = std::move(src)](const Array& g) {
    Array gx = Array::Zero(x.numel());
    for (std::size_t i = 0; i < src.size(); ++i) gx[src[i]] += g[static_cast<Index>(i)];
    x.accumulate_grad(gx);
  });
}

Tensor relu(const Tensor& x) {
  Tensor out(x.shape(), x.data().max(0.0));
  return finish("relu", out, {x}, [x](const Array& g) {
    x.accumulate_grad((x.data() > 0.0).select(g, 0.0));
  });
}

Tensor identity(const Tensor& x) { return x; }

Tensor zeros(const Shape& shape) { return Tensor(shape); }

Tensor add(const Tensor& a, const Tensor& b) {
  expect_same_shape("add", a, b);
  Tensor out(a.shape(), a.data() + b.data());
  return finish("add", out, {a, b}, [a, b](const Array& g) {
    push_grad(a, g);
    push_grad(b, g);
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  expect_same_shape("sub", a, b);
  Tensor out(a.shape(), a.data() - b.data());
  return finish("sub", out, {a, b}, [a, b](const Array& g) {
    push_grad(a, g);
    if (b.requires_grad()) b.accumulate_grad(-g);
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  expect_same_shape("mul", a, b);
  Tensor out(a.shape(), a.data() * b.data());
  return finish("mul", out, {a, b}, [a, b](const Array& g) {
    if (a.requires_grad()) a.accumulate_grad(g * b.data());
    if (b.requires_grad()) b.accumulate_grad(g * a.data());
  });
}

Tensor scale(const Tensor& x, double factor) {
  Tensor out(x.shape(), x.data() * factor);
  return finish("scale", out, {x}, [x, factor](const Array& g) { x.accumulate_grad(g * factor); });
}

Tensor add_scalar(const Tensor& x, double value) {
  Tensor out(x.shape(), x.data() + value);
  return finish("add_scalar", out, {x}, [x](const Array& g) { x.accumulate_grad(g); });
}

Tensor exp(const Tensor& x) {
  Tensor out(x.shape(), x.data().exp());
  Array y = out.data();
  return finish("exp", out, {x}, [x, y](const Array& g) { x.accumulate_grad(g * y); });
}

Tensor log(const Tensor& x) {
  Tensor out(x.shape(), x.data().log());
  return finish("log", out, {x}, [x](const Array& g) { x.accumulate_grad(g / x.data()); });
}

Tensor erf(const Tensor& x) {
  Tensor out(x.shape(), x.data().unaryExpr([](double v) { return erf_forward(v); }));
  return finish("erf", out, {x}, [x](const Array& g) {
    x.accumulate_grad(g * x.data().unaryExpr([](double v) { return erf_backward(v); }));
  });
}

Tensor square(const Tensor& x) {
  Tensor out(x.shape(), x.data().square());
  return finish("square", out, {x}, [x](const Array& g) { x.accumulate_grad(2.0 * g * x.data()); });
}

Tensor sum(const Tensor& x) {
  Tensor out = Tensor::scalar(x.data().sum());
  return finish("sum", out, {x}, [x](const Array& g) { x.accumulate_grad(Array::Constant(x.numel(), g[0])); });
}

Tensor mean(const Tensor& x) {
  const double n = double(x.numel());
  Tensor out = Tensor::scalar(x.data().mean());
  return finish("mean", out, {x}, [x, n](const Array& g) {
    x.accumulate_grad(Array::Constant(x.numel(), g[0] / n));
  });
}

Tensor softmax(const Tensor& x, std::size_t axis) {
  const AxisSplit s = split_axis("softmax", x, axis);
  Tensor out(x.shape());
  const double* xd = x.data().data();
  double* yd = out.data().data();
  for (Index o = 0; o < s.outer; ++o) {
    for (Index i = 0; i < s.inner; ++i) {
      const Index base = o * s.len * s.inner + i;
      double mx = -std::numeric_limits<double>::infinity();
      for (Index k = 0; k < s.len; ++k) mx = std::max(mx, xd[base + k * s.inner]);
      double z = 0.0;
      for (Index k = 0; k < s.len; ++k) {
        const double e = std::exp(xd[base + k * s.inner] - mx);
        yd[base + k * s.inner] = e;
        z += e;
      }
      for (Index k = 0; k < s.len; ++k) yd[base + k * s.inner] /= z;
    }
  }
  Array y = out.data();
  return finish("softmax", out, {x}, [x, y, s](const Array& g) {
    Array gx(x.numel());
    for (Index o = 0; o < s.outer; ++o) {
      for (Index i = 0; i < s.inner; ++i) {
        const Index base = o * s.len * s.inner + i;
        double dot = 0.0;
        for (Index k = 0; k < s.len; ++k) dot += g[base + k * s.inner] * y[base + k * s.inner];
        for (Index k = 0; k < s.len; ++k) {
          const Index idx = base + k * s.inner;
          gx[idx] = y[idx] * (g[idx] - dot);
        }
      }
    }
    x.accumulate_grad(gx);
  });
}

Tensor logsumexp(const Tensor& x, std::size_t axis) {
  const AxisSplit s = split_axis("logsumexp", x, axis);
  Shape out_shape;
  for (std::size_t i = 0; i < x.rank(); ++i) {
    if (i != axis) out_shape.push_back(x.dim(i));
  }
  if (out_shape.empty()) out_shape.push_back(1);
  Tensor out(out_shape);
  Array soft(x.numel());
  const double* xd = x.data().data();
  for (Index o = 0; o < s.outer; ++o) {
    for (Index i = 0; i < s.inner; ++i) {
      const Index base = o * s.len * s.inner + i;
      double mx = -std::numeric_limits<double>::infinity();
      for (Index k = 0; k < s.len; ++k) mx = std::max(mx, xd[base + k * s.inner]);
      double z = 0.0;
      for (Index k = 0; k < s.len; ++k) z += std::exp(xd[base + k * s.inner] - mx);
      out.data()[o * s.inner + i] = mx + std::log(z);
      for (Index k = 0; k < s.len; ++k) soft[base + k * s.inner] = std::exp(xd[base + k * s.inner] - mx) / z;
    }
  }
  return finish("logsumexp", out, {x}, [x, soft, s](const Array& g) {
    Array gx(x.numel());
    for (Index o = 0; o < s.outer; ++o) {
      for (Index i = 0; i < s.inner; ++i) {
        const Index base = o * s.len * s.inner + i;
        for (Index k = 0; k < s.len; ++k) gx[base + k * s.inner] = g[o * s.inner + i] * soft[base + k * s.inner];
      }
    }
    x.accumulate_grad(gx);
  });
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> labels) {
  expect_rank("cross_entropy", logits, 2, "logits");
  const Index n = logits.dim(0), k = logits.dim(1);
  if (static_cast<Index>(labels.size()) != n) {
    dim_error("cross_entropy", "logits axis 0 (" + std::to_string(n) + ") != label count (" +
                                   std::to_string(labels.size()) + ")");
  }
  Array prob(n * k);
  double total = 0.0;
  for (Index r = 0; r < n; ++r) {
    const int label = labels[static_cast<std::size_t>(r)];
    if (label < 0 || label >= k) throw ContractError("cross_entropy: label out of range");
    auto row = logits.data().segment(r * k, k);
    const double mx = row.maxCoeff();
    const double z = (row - mx).exp().sum();
    prob.segment(r * k, k) = (row - mx).exp() / z;
    total += -(row[label] - mx - std::log(z));
  }
  Tensor out = Tensor::scalar(total / double(n));
  std::vector<int> lab(labels.begin(), labels.end());
  return finish("cross_entropy", out, {logits}, [logits, prob, lab, n, k](const Array& g) {
    Array gl = prob;
    for (Index r = 0; r < n; ++r) gl[r * k + lab[static_cast<std::size_t>(r)]] -= 1.0;
    logits.accumulate_grad(gl * (g[0] / double(n)));
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    dim_error("reshape", "cannot view " + shape_string(x.shape()) + " as " + shape_string(shape));
  }
  Tensor out(std::move(shape), x.data());
  return finish("reshape", out, {x}, [x](const Array& g) { x.accumulate_grad(g); });
}

Tensor select_row(const Tensor& table, Index row) {
  expect_rank("select_row", table, 2, "table");
  if (row < 0 || row >= table.dim(0)) {
    dim_error("select_row", "row " + std::to_string(row) + " out of range on axis 0 of " + shape_string(table.shape()));
  }
  const Index k = table.dim(1);
  Tensor out({k}, table.data().segment(row * k, k));
  return finish("select_row", out, {table}, [table, row, k](const Array& g) {
    Array gt = Array::Zero(table.numel());
    gt.segment(row * k, k) = g;
    table.accumulate_grad(gt);
  });
}

Tensor weighted_sum(std::span<const Tensor> xs, const Tensor& weights) {
  if (xs.empty()) throw ContractError("weighted_sum: no inputs");
  expect_rank("weighted_sum", weights, 1, "weights");
  if (weights.dim(0) != static_cast<Index>(xs.size())) {
    dim_error("weighted_sum", "weights axis 0 (" + std::to_string(weights.dim(0)) + ") != input count (" +
                                  std::to_string(xs.size()) + ")");
  }
  for (const Tensor& t : xs) expect_same_shape("weighted_sum", xs[0], t);
  Tensor out(xs[0].shape());
  for (std::size_t i = 0; i < xs.size(); ++i) out.data() += weights[static_cast<Index>(i)] * xs[i].data();

  std::vector<Tensor> inputs(xs.begin(), xs.end());
  inputs.push_back(weights);
  std::vector<Tensor> parts(xs.begin(), xs.end());
  return finish("weighted_sum", out, std::move(inputs), [parts, weights](const Array& g) {
    for (std::size_t i = 0; i < parts.size(); ++i) {
      if (parts[i].requires_grad()) parts[i].accumulate_grad(g * weights[static_cast<Index>(i)]);
    }
    if (weights.requires_grad()) {
      Array gw(weights.numel());
      for (std::size_t i = 0; i < parts.size(); ++i) gw[static_cast<Index>(i)] = (g * parts[i].data()).sum();
      weights.accumulate_grad(gw);
    }
  });
}

Tensor channel_gather(const Tensor& x, std::span<const Index> indices) {
  if (!x.defined() || x.rank() < 2) dim_error("channel_gather", "input must have rank >= 2");
  const Index n = x.dim(0), c = x.dim(1);
  Index inner = 1;
  for (std::size_t i = 2; i < x.rank(); ++i) inner *= x.dim(i);
  const Index k = static_cast<Index>(indices.size());
  if (k == 0) dim_error("channel_gather", "empty channel selection on axis 1");
  for (Index idx : indices) {
    if (idx < 0 || idx >= c) dim_error("channel_gather", "channel " + std::to_string(idx) + " out of range on axis 1");
  }
  Shape shape = x.shape();
  shape[1] = k;
  Tensor out(shape);
  for (Index b = 0; b < n; ++b) {
    for (Index j = 0; j < k; ++j) {
      out.data().segment((b * k + j) * inner, inner) = x.data().segment((b * c + indices[static_cast<std::size_t>(j)]) * inner, inner);
    }
  }
  std::vector<Index> idx(indices.begin(), indices.end());
  return finish("channel_gather", out, {x}, [x, idx, n, c, k, inner](const Array& g) {
    Array gx = Array::Zero(x.numel());
    for (Index b = 0; b < n; ++b) {
      for (Index j = 0; j < k; ++j) {
        gx.segment((b * c + idx[static_cast<std::size_t>(j)]) * inner, inner) += g.segment((b * k + j) * inner, inner);
      }
    }
    x.accumulate_grad(gx);
  });
}

Tensor channel_concat(std::span<const Tensor> xs) {
  if (xs.empty()) throw ContractError("channel_concat: no inputs");
  const Tensor& first = xs[0];
  if (first.rank() < 2) dim_error("channel_concat", "inputs must have rank >= 2");
  const Index n = first.dim(0);
  Index inner = 1;
  for (std::size_t i = 2; i < first.rank(); ++i) inner *= first.dim(i);
  Index total_c = 0;
  std::vector<Index> offsets;
  for (const Tensor& t : xs) {
    if (t.rank() != first.rank()) dim_error("channel_concat", "rank mismatch");
    for (std::size_t i = 0; i < t.rank(); ++i) {
      if (i != 1 && t.dim(i) != first.dim(i)) {
        dim_error("channel_concat", "shape mismatch on axis " + std::to_string(i) + " (" + std::to_string(t.dim(i)) +
                                        " vs " + std::to_string(first.dim(i)) + ")");
      }
    }
    offsets.push_back(total_c);
    total_c += t.dim(1);
  }
  Shape shape = first.shape();
  shape[1] = total_c;
  Tensor out(shape);
  for (std::size_t t = 0; t < xs.size(); ++t) {
    const Index ct = xs[t].dim(1);
    for (Index b = 0; b < n; ++b) {
      out.data().segment((b * total_c + offsets[t]) * inner, ct * inner) = xs[t].data().segment(b * ct * inner, ct * inner);
    }
  }
  std::vector<Tensor> parts(xs.begin(), xs.end());
  return finish("channel_concat", out, parts, [parts, offsets, n, total_c, inner](const Array& g) {
    for (std::size_t t = 0; t < parts.size(); ++t) {
      if (!parts[t].requires_grad()) continue;
      const Index ct = parts[t].dim(1);
      Array gp(parts[t].numel());
      for (Index b = 0; b < n; ++b) {
        gp.segment(b * ct * inner, ct * inner) = g.segment((b * total_c + offsets[t]) * inner, ct * inner);
      }
      parts[t].accumulate_grad(gp);
    }
  });
}

}  // namespace sadarts
