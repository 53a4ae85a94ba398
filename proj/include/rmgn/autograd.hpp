#pragma once

// Minimal reverse-mode differentiation over Tensor values.
//
// Every op returns a Var holding its forward value. When any input requires a
// gradient, the result keeps its parents and a backward closure; otherwise the
// graph is not recorded, so inference costs only the forward pass. A graph is
// owned by the Vars that reference it and there is no global state, so
// independent graphs may be built on different threads.

#include <functional>
#include <memory>
#include <vector>

#include "rmgn/tensor.hpp"

namespace rmgn::ag {

struct Node {
  Tensor value;
  Tensor grad;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;
  bool requires_grad = false;

  Tensor& grad_buffer() {
    if (grad.empty()) grad = Tensor(value.shape(), 0.0);
    return grad;
  }
};

class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Var constant(Tensor value);
  /// Leaf that records its gradient. When `sink` is non-null the gradient is
  /// added into it during backward().
  static Var leaf(Tensor value, Tensor* sink = nullptr);

  const Tensor& value() const { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  /// Gradient accumulated by the last backward(); zeros if none reached it.
  const Tensor& grad() const { return node_->grad_buffer(); }
  bool defined() const { return static_cast<bool>(node_); }

  /// Seeds d(this)/d(this) = 1 and propagates to every recorded ancestor.
  /// `this` must be a scalar.
  void backward() const;

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

/// Builds a result node; the closure is dropped when no parent needs a gradient.
Var make_result(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backward);

// Elementwise arithmetic (identical shapes).
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);

/// [C,H,W] times a [1,H,W] map broadcast over channels.
Var mul_channel_broadcast(const Var& x, const Var& m);

/// (1 - m) * a + m * b with m [1,H,W] broadcast over channels. Results are
/// clamped into [min(a,b), max(a,b)] so rounding cannot leave the hull.
Var convex_blend(const Var& a, const Var& b, const Var& m);

// Activations.
Var silu(const Var& x);
Var sigmoid(const Var& x);
Var tanh(const Var& x);

/// 2-D convolution of x [Cin,H,W] with weight [Cout,Cin,k,k] and bias [Cout];
/// zero padding k/2, given stride.
Var conv2d(const Var& x, const Var& weight, const Var& bias, int stride);

/// Per-channel standardisation over spatial dims, no affine.
Var instance_norm(const Var& x, double eps);

Var concat_channels(const Var& a, const Var& b);
Var upsample_nearest2(const Var& x);
/// Nearest-neighbour resize; output pixel (y, x) reads input
/// (floor(y*h/out_h), floor(x*w/out_w)).
Var resize_nearest(const Var& x, std::size_t out_h, std::size_t out_w);
/// 2x bilinear upsampling with half-pixel centres and edge clamping.
Var upsample_bilinear2(const Var& x);
Var avgpool2(const Var& x);
/// Mean over spatial dims: [C,H,W] -> [C,1,1].
Var spatial_mean(const Var& x);

/// Samples img [C,H,W] at (x + flow[0], y + flow[1]) bilinearly. Taps that
/// fall outside the image contribute zero. Differentiable in img and flow.
Var warp_bilinear(const Var& img, const Var& flow);

// Scalar reductions.
Var sum(const Var& x);
Var mean_abs_diff(const Var& a, const Var& b);

/// Generalised Charbonnier penalty (x^2 + eps^2)^alpha summed over the
/// discrete second differences of flow [2,h,w] along the horizontal,
/// vertical and both diagonal directions. Points missing a neighbour pair are
/// skipped. Summation order: channel, direction (0,1),(1,0),(1,1),(1,-1), row,
/// column, into a single accumulator.
Var charbonnier_curvature(const Var& flow, double eps, double alpha);

}  // namespace rmgn::ag
