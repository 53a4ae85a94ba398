#include "rmgn/autograd.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_set>

#include "rmgn/errors.hpp"

namespace rmgn::ag {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

bool wants(const Node& n, std::size_t i) { return n.parents[i]->requires_grad; }
const Tensor& in_value(const Node& n, std::size_t i) { return n.parents[i]->value; }
Tensor& in_grad(Node& n, std::size_t i) { return n.parents[i]->grad_buffer(); }

void require_even(const Tensor& t, std::string_view what) {
  require_chw(t, what);
  if (t.height() % 2 || t.width() % 2) {
    throw ShapeError(std::string(what) + ": spatial dims must be even, got " +
                     shape_string(t.shape()));
  }
}

// Half-pixel-centre 2x interpolation table for one axis.
struct Taps {
  std::vector<std::size_t> i0, i1;
  std::vector<double> w0, w1;
};

Taps bilinear_taps(std::size_t n) {
  Taps t;
  const std::size_t m = 2 * n;
  t.i0.resize(m);
  t.i1.resize(m);
  t.w0.resize(m);
  t.w1.resize(m);
  for (std::size_t o = 0; o < m; ++o) {
    const double src = std::max(0.0, (static_cast<double>(o) + 0.5) / 2.0 - 0.5);
    const auto lo = static_cast<std::size_t>(std::floor(src));
    const double frac = src - static_cast<double>(lo);
    t.i0[o] = std::min(lo, n - 1);
    t.i1[o] = std::min(lo + 1, n - 1);
    t.w1[o] = frac;
    t.w0[o] = 1.0 - frac;
  }
  return t;
}

double charbonnier_value(double x, double eps, double alpha) {
  return std::pow(x * x + eps * eps, alpha);
}

double charbonnier_slope(double x, double eps, double alpha) {
  return 2.0 * alpha * x * std::pow(x * x + eps * eps, alpha - 1.0);
}

constexpr int kCurvatureDirs[4][2] = {{0, 1}, {1, 0}, {1, 1}, {1, -1}};

}  // namespace

Var Var::constant(Tensor value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  return Var(std::move(n));
}

Var Var::leaf(Tensor value, Tensor* sink) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->requires_grad = true;
  if (sink) {
    n->backward = [sink](Node& self) { *sink += self.grad_buffer(); };
  }
  return Var(std::move(n));
}

void Var::backward() const {
  if (value().size() != 1) throw ShapeError("backward() needs a scalar root");
  if (!requires_grad()) return;

  // Iterative post-order DFS gives a topological order (parents first).
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      Node* p = n->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }
  node_->grad_buffer().fill(1.0);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && !n->grad.empty()) n->backward(*n);
  }
}

Var make_result(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backward) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  for (const auto& p : parents) n->requires_grad = n->requires_grad || p.requires_grad();
  if (n->requires_grad) {
    n->parents.reserve(parents.size());
    for (const auto& p : parents) n->parents.push_back(p.node());
    n->backward = std::move(backward);
  }
  return Var(std::move(n));
}

Var add(const Var& a, const Var& b) {
  require_same_shape(a.value(), b.value(), "add");
  Tensor out = a.value();
  out += b.value();
  return make_result(std::move(out), {a, b}, [](Node& self) {
    for (std::size_t i = 0; i < 2; ++i) {
      if (wants(self, i)) in_grad(self, i) += self.grad;
    }
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a.value(), b.value(), "sub");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  return make_result(std::move(out), {a, b}, [](Node& self) {
    if (wants(self, 0)) in_grad(self, 0) += self.grad;
    if (wants(self, 1)) {
      Tensor& g = in_grad(self, 1);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a.value(), b.value(), "mul");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return make_result(std::move(out), {a, b}, [](Node& self) {
    const Tensor& av = in_value(self, 0);
    const Tensor& bv = in_value(self, 1);
    if (wants(self, 0)) {
      Tensor& g = in_grad(self, 0);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * bv[i];
    }
    if (wants(self, 1)) {
      Tensor& g = in_grad(self, 1);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * av[i];
    }
  });
}

Var scale(const Var& a, double s) {
  Tensor out = a.value();
  out *= s;
  return make_result(std::move(out), {a}, [s](Node& self) {
    Tensor& g = in_grad(self, 0);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += s * self.grad[i];
  });
}

Var mul_channel_broadcast(const Var& x, const Var& m) {
  require_chw(x.value(), "mul_channel_broadcast");
  require_chw(m.value(), "mul_channel_broadcast mask");
  const std::size_t c = x.value().channels();
  const std::size_t hw = x.value().height() * x.value().width();
  if (m.value().channels() != 1 || m.value().height() != x.value().height() ||
      m.value().width() != x.value().width()) {
    throw ShapeError("mul_channel_broadcast: mask " + shape_string(m.shape()) +
                     " does not broadcast over " + shape_string(x.shape()));
  }
  Tensor out = x.value();
  for (std::size_t k = 0; k < c; ++k) {
    for (std::size_t p = 0; p < hw; ++p) out[k * hw + p] *= m.value()[p];
  }
  return make_result(std::move(out), {x, m}, [c, hw](Node& self) {
    const Tensor& xv = in_value(self, 0);
    const Tensor& mv = in_value(self, 1);
    if (wants(self, 0)) {
      Tensor& g = in_grad(self, 0);
      for (std::size_t k = 0; k < c; ++k) {
        for (std::size_t p = 0; p < hw; ++p) g[k * hw + p] += self.grad[k * hw + p] * mv[p];
      }
    }
    if (wants(self, 1)) {
      Tensor& g = in_grad(self, 1);
      for (std::size_t k = 0; k < c; ++k) {
        for (std::size_t p = 0; p < hw; ++p) g[p] += self.grad[k * hw + p] * xv[k * hw + p];
      }
    }
  });
}

Var convex_blend(const Var& a, const Var& b, const Var& m) {
  require_same_shape(a.value(), b.value(), "convex_blend");
  require_chw(a.value(), "convex_blend");
  require_chw(m.value(), "convex_blend mask");
  const std::size_t c = a.value().channels();
  const std::size_t hw = a.value().height() * a.value().width();
  if (m.value().channels() != 1 || m.value().height() != a.value().height() ||
      m.value().width() != a.value().width()) {
    throw ShapeError("convex_blend: mask " + shape_string(m.shape()) + " does not match " +
                     shape_string(a.shape()));
  }
  Tensor out(a.shape());
  for (std::size_t k = 0; k < c; ++k) {
    for (std::size_t p = 0; p < hw; ++p) {
      const std::size_t i = k * hw + p;
      const double mv = m.value()[p];
      const double av = a.value()[i];
      const double bv = b.value()[i];
      const double v = (1.0 - mv) * av + mv * bv;
      out[i] = std::clamp(v, std::min(av, bv), std::max(av, bv));
    }
  }
  return make_result(std::move(out), {a, b, m}, [c, hw](Node& self) {
    const Tensor& av = in_value(self, 0);
    const Tensor& bv = in_value(self, 1);
    const Tensor& mv = in_value(self, 2);
    if (wants(self, 0)) {
      Tensor& g = in_grad(self, 0);
      for (std::size_t k = 0; k < c; ++k) {
        for (std::size_t p = 0; p < hw; ++p) g[k * hw + p] += self.grad[k * hw + p] * (1.0 - mv[p]);
      }
    }
    if (wants(self, 1)) {
      Tensor& g = in_grad(self, 1);
      for (std::size_t k = 0; k < c; ++k) {
        for (std::size_t p = 0; p < hw; ++p) g[k * hw + p] += self.grad[k * hw + p] * mv[p];
      }
    }
    if (wants(self, 2)) {
      Tensor& g = in_grad(self, 2);
      for (std::size_t k = 0; k < c; ++k) {
        for (std::size_t p = 0; p < hw; ++p) {
          const std::size_t i = k * hw + p;
          g[p] += self.grad[i] * (bv[i] - av[i]);
        }
      }
    }
  });
}

Var silu(const Var& x) {
  Tensor out = x.value();
  for (double& v : out.values()) v = v / (1.0 + std::exp(-v));
  return make_result(std::move(out), {x}, [](Node& self) {
    const Tensor& xv = in_value(self, 0);
    Tensor& g = in_grad(self, 0);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double s = 1.0 / (1.0 + std::exp(-xv[i]));
      g[i] += self.grad[i] * s * (1.0 + xv[i] * (1.0 - s));
    }
  });
}

Var sigmoid(const Var& x) {
  Tensor out = x.value();
  // Saturated outputs are pinned one ulp inside (0, 1).
  constexpr double lo = std::numeric_limits<double>::min();
  const double hi = std::nextafter(1.0, 0.0);
  for (double& v : out.values()) v = std::clamp(1.0 / (1.0 + std::exp(-v)), lo, hi);
  return make_result(std::move(out), {x}, [](Node& self) {
    Tensor& g = in_grad(self, 0);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double s = self.value[i];
      g[i] += self.grad[i] * s * (1.0 - s);
    }
  });
}

Var tanh(const Var& x) {
  Tensor out = x.value();
  for (double& v : out.values()) v = std::tanh(v);
  return make_result(std::move(out), {x}, [](Node& self) {
    Tensor& g = in_grad(self, 0);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double t = self.value[i];
      g[i] += self.grad[i] * (1.0 - t * t);
    }
  });
}

Var conv2d(const Var& x, const Var& weight, const Var& bias, int stride) {
  const Tensor& xv = x.value();
  const Tensor& wv = weight.value();
  require_chw(xv, "conv2d input");
  if (wv.rank() != 4 || wv.dim(2) != wv.dim(3) || wv.dim(1) != xv.channels()) {
    throw ShapeError("conv2d: weight " + shape_string(wv.shape()) + " incompatible with input " +
                     shape_string(xv.shape()));
  }
  if (bias.value().size() != wv.dim(0)) throw ShapeError("conv2d: bias size mismatch");
  if (stride < 1) throw ShapeError("conv2d: stride must be >= 1");

  const std::size_t cin = xv.channels(), h = xv.height(), w = xv.width();
  const std::size_t cout = wv.dim(0);
  const auto k = static_cast<long>(wv.dim(2));
  const long pad = k / 2;
  const auto s = static_cast<long>(stride);
  const auto ho = static_cast<std::size_t>((static_cast<long>(h) + 2 * pad - k) / s + 1);
  const auto wo = static_cast<std::size_t>((static_cast<long>(w) + 2 * pad - k) / s + 1);
  const std::size_t rows = cin * static_cast<std::size_t>(k * k);
  const std::size_t cols = ho * wo;
  const bool direct = (k == 1 && s == 1);

  Storage col;
  if (!direct) {
    col.assign(rows * cols, 0.0);
    for (std::size_t ci = 0; ci < cin; ++ci) {
      for (long ky = 0; ky < k; ++ky) {
        for (long kx = 0; kx < k; ++kx) {
          double* dst = col.data() + ((ci * k + ky) * k + kx) * cols;
          for (std::size_t oy = 0; oy < ho; ++oy) {
            const long iy = static_cast<long>(oy) * s + ky - pad;
            if (iy < 0 || iy >= static_cast<long>(h)) continue;
            const double* src = xv.raw() + (ci * h + iy) * w;
            for (std::size_t ox = 0; ox < wo; ++ox) {
              const long ix = static_cast<long>(ox) * s + kx - pad;
              if (ix >= 0 && ix < static_cast<long>(w)) dst[oy * wo + ox] = src[ix];
            }
          }
        }
      }
    }
  }

  Tensor out = Tensor::chw(cout, ho, wo);
  {
    ConstMatMap wm(wv.raw(), cout, rows);
    ConstMatMap cm(direct ? xv.raw() : col.data(), rows, cols);
    MatMap om(out.raw(), cout, cols);
    om.noalias() = wm * cm;
    for (std::size_t o = 0; o < cout; ++o) om.row(o).array() += bias.value()[o];
  }

  return make_result(
      std::move(out), {x, weight, bias},
      [col = std::move(col), cin, h, w, cout, k, pad, s, ho, wo, rows, cols, direct](Node& self) {
        ConstMatMap dout(self.grad.raw(), cout, cols);
        const Tensor& xin = in_value(self, 0);
        const double* colp = direct ? xin.raw() : col.data();
        if (wants(self, 1)) {
          MatMap dw(in_grad(self, 1).raw(), cout, rows);
          dw.noalias() += dout * ConstMatMap(colp, rows, cols).transpose();
        }
        if (wants(self, 2)) {
          Tensor& db = in_grad(self, 2);
          for (std::size_t o = 0; o < cout; ++o) db[o] += dout.row(o).sum();
        }
        if (wants(self, 0)) {
          ConstMatMap wm(in_value(self, 1).raw(), cout, rows);
          Tensor& dx = in_grad(self, 0);
          if (direct) {
            MatMap dxm(dx.raw(), rows, cols);
            dxm.noalias() += wm.transpose() * dout;
            return;
          }
          RowMat dcol = wm.transpose() * dout;
          for (std::size_t ci = 0; ci < cin; ++ci) {
            for (long ky = 0; ky < k; ++ky) {
              for (long kx = 0; kx < k; ++kx) {
                const double* src = dcol.data() + ((ci * k + ky) * k + kx) * cols;
                for (std::size_t oy = 0; oy < ho; ++oy) {
                  const long iy = static_cast<long>(oy) * s + ky - pad;
                  if (iy < 0 || iy >= static_cast<long>(h)) continue;
                  double* dst = dx.raw() + (ci * h + iy) * w;
                  for (std::size_t ox = 0; ox < wo; ++ox) {
                    const long ix = static_cast<long>(ox) * s + kx - pad;
                    if (ix >= 0 && ix < static_cast<long>(w)) dst[ix] += src[oy * wo + ox];
                  }
                }
              }
            }
          }
        }
      });
}

Var instance_norm(const Var& x, double eps) {
  const Tensor& xv = x.value();
  require_chw(xv, "instance_norm");
  const std::size_t c = xv.channels();
  const std::size_t hw = xv.height() * xv.width();
  if (hw < 2) throw ShapeError("instance_norm: needs at least 2 spatial positions");
  Tensor out(xv.shape());
  std::vector<double> inv_std(c);
  for (std::size_t k = 0; k < c; ++k) {
    const double* src = xv.raw() + k * hw;
    double* dst = out.raw() + k * hw;
    // Shift by the first element so a constant channel centres to exact zeros.
    const double shift = src[0];
    double mean_d = 0.0;
    for (std::size_t p = 0; p < hw; ++p) mean_d += src[p] - shift;
    mean_d /= static_cast<double>(hw);
    double var = 0.0;
    for (std::size_t p = 0; p < hw; ++p) {
      dst[p] = (src[p] - shift) - mean_d;
      var += dst[p] * dst[p];
    }
    var /= static_cast<double>(hw);
    inv_std[k] = 1.0 / std::sqrt(var + eps);
    for (std::size_t p = 0; p < hw; ++p) dst[p] *= inv_std[k];
  }
  return make_result(std::move(out), {x}, [inv_std = std::move(inv_std), c, hw](Node& self) {
    Tensor& g = in_grad(self, 0);
    const auto n = static_cast<double>(hw);
    for (std::size_t k = 0; k < c; ++k) {
      const double* dy = self.grad.raw() + k * hw;
      const double* y = self.value.raw() + k * hw;
      double mean_dy = 0.0, mean_dyy = 0.0;
      for (std::size_t p = 0; p < hw; ++p) {
        mean_dy += dy[p];
        mean_dyy += dy[p] * y[p];
      }
      mean_dy /= n;
      mean_dyy /= n;
      double* dx = g.raw() + k * hw;
      for (std::size_t p = 0; p < hw; ++p) dx[p] += inv_std[k] * (dy[p] - mean_dy - y[p] * mean_dyy);
    }
  });
}

Var concat_channels(const Var& a, const Var& b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_chw(av, "concat_channels");
  require_chw(bv, "concat_channels");
  if (av.height() != bv.height() || av.width() != bv.width()) {
    throw ShapeError("concat_channels: spatial mismatch " + shape_string(av.shape()) + " vs " +
                     shape_string(bv.shape()));
  }
  Tensor out = Tensor::chw(av.channels() + bv.channels(), av.height(), av.width());
  std::copy(av.raw(), av.raw() + av.size(), out.raw());
  std::copy(bv.raw(), bv.raw() + bv.size(), out.raw() + av.size());
  const std::size_t na = av.size();
  return make_result(std::move(out), {a, b}, [na](Node& self) {
    if (wants(self, 0)) {
      Tensor& g = in_grad(self, 0);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (wants(self, 1)) {
      Tensor& g = in_grad(self, 1);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[na + i];
    }
  });
}

Var resize_nearest(const Var& x, std::size_t out_h, std::size_t out_w) {
  const Tensor& xv = x.value();
  require_chw(xv, "resize_nearest");
  const std::size_t c = xv.channels(), h = xv.height(), w = xv.width();
  if (out_h == 0 || out_w == 0) throw ShapeError("resize_nearest: empty target size");
  std::vector<std::size_t> sy(out_h), sx(out_w);
  for (std::size_t y = 0; y < out_h; ++y) sy[y] = y * h / out_h;
  for (std::size_t xo = 0; xo < out_w; ++xo) sx[xo] = xo * w / out_w;
  Tensor out = Tensor::chw(c, out_h, out_w);
  for (std::size_t k = 0; k < c; ++k) {
    for (std::size_t y = 0; y < out_h; ++y) {
      for (std::size_t xo = 0; xo < out_w; ++xo) out.at(k, y, xo) = xv.at(k, sy[y], sx[xo]);
    }
  }
  return make_result(std::move(out), {x}, [c, sy, sx](Node& self) {
    Tensor& g = in_grad(self, 0);
    for (std::size_t k = 0; k < c; ++k) {
      for (std::size_t y = 0; y < sy.size(); ++y) {
        for (std::size_t xo = 0; xo < sx.size(); ++xo) g.at(k, sy[y], sx[xo]) += self.grad.at(k, y, xo);
      }
    }
  });
}

Var upsample_nearest2(const Var& x) {
  require_chw(x.value(), "upsample_nearest2");
  return resize_nearest(x, 2 * x.value().height(), 2 * x.value().width());
}

Var upsample_bilinear2(const Var& x) {
  const Tensor& xv = x.value();
  require_chw(xv, "upsample_bilinear2");
  const std::size_t c = xv.channels(), h = xv.height(), w = xv.width();
  Taps ty = bilinear_taps(h);
  Taps tx = bilinear_taps(w);
  Tensor out = Tensor::chw(c, 2 * h, 2 * w);
  for (std::size_t k = 0; k < c; ++k) {
    for (std::size_t y = 0; y < 2 * h; ++y) {
      for (std::size_t xo = 0; xo < 2 * w; ++xo) {
        out.at(k, y, xo) = ty.w0[y] * (tx.w0[xo] * xv.at(k, ty.i0[y], tx.i0[xo]) +
                                       tx.w1[xo] * xv.at(k, ty.i0[y], tx.i1[xo])) +
                           ty.w1[y] * (tx.w0[xo] * xv.at(k, ty.i1[y], tx.i0[xo]) +
                                       tx.w1[xo] * xv.at(k, ty.i1[y], tx.i1[xo]));
      }
    }
  }
  return make_result(std::move(out), {x}, [c, h, w, ty, tx](Node& self) {
    Tensor& g = in_grad(self, 0);
    for (std::size_t k = 0; k < c; ++k) {
      for (std::size_t y = 0; y < 2 * h; ++y) {
        for (std::size_t xo = 0; xo < 2 * w; ++xo) {
          const double d = self.grad.at(k, y, xo);
          g.at(k, ty.i0[y], tx.i0[xo]) += d * ty.w0[y] * tx.w0[xo];
          g.at(k, ty.i0[y], tx.i1[xo]) += d * ty.w0[y] * tx.w1[xo];
          g.at(k, ty.i1[y], tx.i0[xo]) += d * ty.w1[y] * tx.w0[xo];
          g.at(k, ty.i1[y], tx.i1[xo]) += d * ty.w1[y] * tx.w1[xo];
        }
      }
    }
  });
}

Var avgpool2(const Var& x) {
  const Tensor& xv = x.value();
  require_even(xv, "avgpool2");
  const std::size_t c = xv.channels(), h = xv.height() / 2, w = xv.width() / 2;
  Tensor out = Tensor::chw(c, h, w);
  for (std::size_t k = 0; k < c; ++k) {
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t xo = 0; xo < w; ++xo) {
        out.at(k, y, xo) = 0.25 * (xv.at(k, 2 * y, 2 * xo) + xv.at(k, 2 * y, 2 * xo + 1) +
                                   xv.at(k, 2 * y + 1, 2 * xo) + xv.at(k, 2 * y + 1, 2 * xo + 1));
      }
    }
  }
  return make_result(std::move(out), {x}, [c, h, w](Node& self) {
    Tensor& g = in_grad(self, 0);
    for (std::size_t k = 0; k < c; ++k) {
      for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t xo = 0; xo < w; ++xo) {
          const double d = 0.25 * self.grad.at(k, y, xo);
          g.at(k, 2 * y, 2 * xo) += d;
          g.at(k, 2 * y, 2 * xo + 1) += d;
          g.at(k, 2 * y + 1, 2 * xo) += d;
          g.at(k, 2 * y + 1, 2 * xo + 1) += d;
        }
      }
    }
  });
}

Var spatial_mean(const Var& x) {
  const Tensor& xv = x.value();
  require_chw(xv, "spatial_mean");
  const std::size_t c = xv.channels();
  const std::size_t hw = xv.height() * xv.width();
  Tensor out = Tensor::chw(c, 1, 1);
  for (std::size_t k = 0; k < c; ++k) {
    double s = 0.0;
    for (std::size_t p = 0; p < hw; ++p) s += xv[k * hw + p];
    out[k] = s / static_cast<double>(hw);
  }
  return make_result(std::move(out), {x}, [c, hw](Node& self) {
    Tensor& g = in_grad(self, 0);
    for (std::size_t k = 0; k < c; ++k) {
      const double d = self.grad[k] / static_cast<double>(hw);
      for (std::size_t p = 0; p < hw; ++p) g[k * hw + p] += d;
    }
  });
}

Var warp_bilinear(const Var& img, const Var& flow) {
  const Tensor& iv = img.value();
  const Tensor& fv = flow.value();
  require_chw(iv, "warp image");
  require_chw(fv, "warp flow");
  if (fv.channels() != 2 || fv.height() != iv.height() || fv.width() != iv.width()) {
    throw ShapeError("warp: flow " + shape_string(fv.shape()) + " does not match image " +
                     shape_string(iv.shape()));
  }
  const std::size_t c = iv.channels();
  const auto h = static_cast<long>(iv.height());
  const auto w = static_cast<long>(iv.width());
  Tensor out(iv.shape());
  auto tap = [&](const Tensor& t, std::size_t k, long y, long x) {
    return (y >= 0 && y < h && x >= 0 && x < w) ? t.at(k, y, x) : 0.0;
  };
  for (long y = 0; y < h; ++y) {
    for (long x = 0; x < w; ++x) {
      const double sx = static_cast<double>(x) + fv.at(0, y, x);
      const double sy = static_cast<double>(y) + fv.at(1, y, x);
      const double fx0 = std::floor(sx), fy0 = std::floor(sy);
      const auto x0 = static_cast<long>(fx0), y0 = static_cast<long>(fy0);
      const double ax = sx - fx0, ay = sy - fy0;
      for (std::size_t k = 0; k < c; ++k) {
        out.at(k, y, x) = (1 - ay) * ((1 - ax) * tap(iv, k, y0, x0) + ax * tap(iv, k, y0, x0 + 1)) +
                          ay * ((1 - ax) * tap(iv, k, y0 + 1, x0) + ax * tap(iv, k, y0 + 1, x0 + 1));
      }
    }
  }
  return make_result(std::move(out), {img, flow}, [c, h, w](Node& self) {
    const Tensor& iv = in_value(self, 0);
    const Tensor& fv = in_value(self, 1);
    const bool want_img = wants(self, 0);
    const bool want_flow = wants(self, 1);
    Tensor* gi = want_img ? &in_grad(self, 0) : nullptr;
    Tensor* gf = want_flow ? &in_grad(self, 1) : nullptr;
    auto inside = [&](long y, long x) { return y >= 0 && y < h && x >= 0 && x < w; };
    auto tap = [&](std::size_t k, long y, long x) { return inside(y, x) ? iv.at(k, y, x) : 0.0; };
    for (long y = 0; y < h; ++y) {
      for (long x = 0; x < w; ++x) {
        const double sx = static_cast<double>(x) + fv.at(0, y, x);
        const double sy = static_cast<double>(y) + fv.at(1, y, x);
        const double fx0 = std::floor(sx), fy0 = std::floor(sy);
        const auto x0 = static_cast<long>(fx0), y0 = static_cast<long>(fy0);
        const double ax = sx - fx0, ay = sy - fy0;
        double du = 0.0, dv = 0.0;
        for (std::size_t k = 0; k < c; ++k) {
          const double d = self.grad.at(k, y, x);
          if (d == 0.0) continue;
          const double v00 = tap(k, y0, x0), v01 = tap(k, y0, x0 + 1);
          const double v10 = tap(k, y0 + 1, x0), v11 = tap(k, y0 + 1, x0 + 1);
          if (gi) {
            if (inside(y0, x0)) gi->at(k, y0, x0) += d * (1 - ay) * (1 - ax);
            if (inside(y0, x0 + 1)) gi->at(k, y0, x0 + 1) += d * (1 - ay) * ax;
            if (inside(y0 + 1, x0)) gi->at(k, y0 + 1, x0) += d * ay * (1 - ax);
            if (inside(y0 + 1, x0 + 1)) gi->at(k, y0 + 1, x0 + 1) += d * ay * ax;
          }
          du += d * ((1 - ay) * (v01 - v00) + ay * (v11 - v10));
          dv += d * ((1 - ax) * (v10 - v00) + ax * (v11 - v01));
        }
        if (gf) {
          gf->at(0, y, x) += du;
          gf->at(1, y, x) += dv;
        }
      }
    }
  });
}

Var sum(const Var& x) {
  return make_result(Tensor::scalar(x.value().sum()), {x}, [](Node& self) {
    Tensor& g = in_grad(self, 0);
    const double d = self.grad[0];
    for (double& v : g.values()) v += d;
  });
}

Var mean_abs_diff(const Var& a, const Var& b) {
  require_same_shape(a.value(), b.value(), "mean_abs_diff");
  const std::size_t n = a.value().size();
  if (n == 0) throw ShapeError("mean_abs_diff: empty tensors");
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += std::abs(a.value()[i] - b.value()[i]);
  return make_result(Tensor::scalar(s / static_cast<double>(n)), {a, b}, [n](Node& self) {
    const Tensor& av = in_value(self, 0);
    const Tensor& bv = in_value(self, 1);
    const double d = self.grad[0] / static_cast<double>(n);
    const bool ga = wants(self, 0), gb = wants(self, 1);
    Tensor* pa = ga ? &in_grad(self, 0) : nullptr;
    Tensor* pb = gb ? &in_grad(self, 1) : nullptr;
    for (std::size_t i = 0; i < n; ++i) {
      const double diff = av[i] - bv[i];
      const double sg = diff > 0 ? d : (diff < 0 ? -d : 0.0);
      if (pa) (*pa)[i] += sg;
      if (pb) (*pb)[i] -= sg;
    }
  });
}

Var charbonnier_curvature(const Var& flow, double eps, double alpha) {
  const Tensor& fv = flow.value();
  require_chw(fv, "charbonnier_curvature");
  const long c = static_cast<long>(fv.channels());
  const long h = static_cast<long>(fv.height());
  const long w = static_cast<long>(fv.width());
  auto in = [&](long y, long x) { return y >= 0 && y < h && x >= 0 && x < w; };

  double total = 0.0;
  for (long k = 0; k < c; ++k) {
    for (const auto& d : kCurvatureDirs) {
      for (long y = 0; y < h; ++y) {
        for (long x = 0; x < w; ++x) {
          if (!in(y - d[0], x - d[1]) || !in(y + d[0], x + d[1])) continue;
          const double s = fv.at(k, y - d[0], x - d[1]) + fv.at(k, y + d[0], x + d[1]) -
                           2.0 * fv.at(k, y, x);
          total += charbonnier_value(s, eps, alpha);
        }
      }
    }
  }
  return make_result(Tensor::scalar(total), {flow}, [c, h, w, eps, alpha](Node& self) {
    const Tensor& fv = in_value(self, 0);
    Tensor& g = in_grad(self, 0);
    const double up = self.grad[0];
    auto in = [&](long y, long x) { return y >= 0 && y < h && x >= 0 && x < w; };
    for (long k = 0; k < c; ++k) {
      for (const auto& d : kCurvatureDirs) {
        for (long y = 0; y < h; ++y) {
          for (long x = 0; x < w; ++x) {
            if (!in(y - d[0], x - d[1]) || !in(y + d[0], x + d[1])) continue;
            const double s = fv.at(k, y - d[0], x - d[1]) + fv.at(k, y + d[0], x + d[1]) -
                             2.0 * fv.at(k, y, x);
            const double gs = up * charbonnier_slope(s, eps, alpha);
            g.at(k, y - d[0], x - d[1]) += gs;
            g.at(k, y + d[0], x + d[1]) += gs;
            g.at(k, y, x) -= 2.0 * gs;
          }
        }
      }
    }
  });
}

}  // namespace rmgn::ag
