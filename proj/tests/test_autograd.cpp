#include <functional>

#include "doctest.h"
#include "rmgn/autograd.hpp"
#include "rmgn/errors.hpp"
#include "support.hpp"

using namespace rmgn;
using rmgn::ag::Var;
using rmgn::testing::central_difference;
using rmgn::testing::random_tensor;
using rmgn::testing::relative_error;

namespace {

// Checks d/dx_i sum(R * op(x...)) for every input entry.
void check_gradients(std::vector<Tensor> inputs,
                     const std::function<Var(const std::vector<Var>&)>& op, std::uint64_t seed,
                     double tol = 1e-5, double step = 1e-5) {
  std::mt19937_64 rng(seed);
  std::vector<Var> leaves;
  for (auto& t : inputs) leaves.push_back(Var::leaf(t));
  const Var out = op(leaves);
  const Tensor weights = random_tensor(out.value().shape(), rng);
  const Var loss = ag::sum(ag::mul(out, Var::constant(weights)));
  loss.backward();
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const Tensor analytic = leaves[k].grad();
    for (std::size_t i = 0; i < inputs[k].size(); ++i) {
      auto f = [&] {
        std::vector<Var> vs;
        for (auto& t : inputs) vs.push_back(Var::constant(t));
        const Tensor o = op(vs).value();
        double s = 0;
        for (std::size_t j = 0; j < o.size(); ++j) s += o[j] * weights[j];
        return s;
      };
      const double numeric = central_difference(f, inputs[k][i], step);
      INFO("input " << k << " entry " << i << " analytic " << analytic[i] << " numeric " << numeric);
      CHECK(relative_error(analytic[i], numeric, 1e-8) < tol);
    }
  }
}

Tensor conv_ref(const Tensor& x, const Tensor& w, const Tensor& b, int stride) {
  const long k = static_cast<long>(w.dim(2)), pad = k / 2;
  const long h = static_cast<long>(x.height()), wd = static_cast<long>(x.width());
  const long ho = (h + 2 * pad - k) / stride + 1, wo = (wd + 2 * pad - k) / stride + 1;
  Tensor out = Tensor::chw(w.dim(0), static_cast<std::size_t>(ho), static_cast<std::size_t>(wo));
  for (std::size_t o = 0; o < w.dim(0); ++o) {
    for (long y = 0; y < ho; ++y) {
      for (long xo = 0; xo < wo; ++xo) {
        double s = b[o];
        for (std::size_t c = 0; c < x.channels(); ++c) {
          for (long ky = 0; ky < k; ++ky) {
            for (long kx = 0; kx < k; ++kx) {
              const long iy = y * stride + ky - pad, ix = xo * stride + kx - pad;
              if (iy < 0 || iy >= h || ix < 0 || ix >= wd) continue;
              s += w[((o * x.channels() + c) * k + ky) * k + kx] * x.at(c, iy, ix);
            }
          }
        }
        out.at(o, y, xo) = s;
      }
    }
  }
  return out;
}

}  // namespace

TEST_CASE("conv2d matches a direct loop for odd sizes, strides 1 and 2") {
  std::mt19937_64 rng(3);
  for (int stride : {1, 2}) {
    for (std::size_t k : {1, 3}) {
      const Tensor x = random_tensor({3, 5, 7}, rng);
      const Tensor w = random_tensor({4, 3, k, k}, rng);
      const Tensor b = random_tensor({4}, rng);
      const Tensor got =
          ag::conv2d(Var::constant(x), Var::constant(w), Var::constant(b), stride).value();
      const Tensor want = conv_ref(x, w, b, stride);
      REQUIRE(got.shape() == want.shape());
      CHECK(max_abs_diff(got, want) < 1e-12);
    }
  }
}

TEST_CASE("conv2d gradients") {
  std::mt19937_64 rng(4);
  for (int stride : {1, 2}) {
    check_gradients({random_tensor({2, 5, 4}, rng), random_tensor({3, 2, 3, 3}, rng),
                     random_tensor({3}, rng)},
                    [stride](const std::vector<Var>& v) { return ag::conv2d(v[0], v[1], v[2], stride); },
                    10 + static_cast<std::uint64_t>(stride));
  }
  check_gradients({random_tensor({2, 3, 3}, rng), random_tensor({2, 2, 1, 1}, rng),
                   random_tensor({2}, rng)},
                  [](const std::vector<Var>& v) { return ag::conv2d(v[0], v[1], v[2], 1); }, 12);
}

TEST_CASE("elementwise, activation and resampling gradients") {
  std::mt19937_64 rng(5);
  auto t = [&](Shape s) { return random_tensor(s, rng, -2, 2); };
  check_gradients({t({2, 3, 3}), t({2, 3, 3})},
                  [](const std::vector<Var>& v) { return ag::mul(v[0], v[1]); }, 1);
  check_gradients({t({2, 3, 3}), t({2, 3, 3})},
                  [](const std::vector<Var>& v) { return ag::sub(v[0], v[1]); }, 2);
  check_gradients({t({2, 3, 3})}, [](const std::vector<Var>& v) { return ag::silu(v[0]); }, 3);
  check_gradients({t({2, 3, 3})}, [](const std::vector<Var>& v) { return ag::sigmoid(v[0]); }, 4);
  check_gradients({t({2, 3, 3})}, [](const std::vector<Var>& v) { return ag::tanh(v[0]); }, 5);
  check_gradients({t({2, 3, 4})}, [](const std::vector<Var>& v) { return ag::upsample_bilinear2(v[0]); }, 6);
  check_gradients({t({2, 3, 2})}, [](const std::vector<Var>& v) { return ag::resize_nearest(v[0], 5, 4); }, 7);
  check_gradients({t({2, 4, 6})}, [](const std::vector<Var>& v) { return ag::avgpool2(v[0]); }, 8);
  check_gradients({t({2, 3, 3})}, [](const std::vector<Var>& v) { return ag::spatial_mean(v[0]); }, 9);
  check_gradients({t({2, 3, 3}), t({1, 3, 3})},
                  [](const std::vector<Var>& v) { return ag::concat_channels(v[0], v[1]); }, 10);
  check_gradients({t({3, 3, 4}), t({1, 3, 4})},
                  [](const std::vector<Var>& v) { return ag::mul_channel_broadcast(v[0], v[1]); }, 11);
  check_gradients({t({2, 4, 5})},
                  [](const std::vector<Var>& v) { return ag::instance_norm(v[0], 1e-5); }, 12, 1e-4);
}

TEST_CASE("convex_blend gradients with the mask strictly inside (0,1)") {
  std::mt19937_64 rng(6);
  check_gradients({random_tensor({2, 3, 3}, rng), random_tensor({2, 3, 3}, rng),
                   random_tensor({1, 3, 3}, rng, 0.1, 0.9)},
                  [](const std::vector<Var>& v) { return ag::convex_blend(v[0], v[1], v[2]); }, 13);
}

TEST_CASE("warp_bilinear gradients away from integer sample positions") {
  std::mt19937_64 rng(7);
  Tensor flow = random_tensor({2, 4, 5}, rng, -1.4, 1.4);
  for (double& v : flow.values()) {
    if (std::abs(v - std::round(v)) < 0.05) v += 0.1;
  }
  check_gradients({random_tensor({2, 4, 5}, rng), flow},
                  [](const std::vector<Var>& v) { return ag::warp_bilinear(v[0], v[1]); }, 14,
                  1e-5, 1e-6);
}

TEST_CASE("scalar reductions") {
  std::mt19937_64 rng(8);
  const Tensor a = random_tensor({2, 3, 3}, rng);
  const Tensor b = random_tensor({2, 3, 3}, rng);
  double ref = 0;
  for (std::size_t i = 0; i < a.size(); ++i) ref += std::abs(a[i] - b[i]);
  CHECK(ag::mean_abs_diff(Var::constant(a), Var::constant(b)).value().item() ==
        doctest::Approx(ref / 18.0).epsilon(1e-14));
  check_gradients({a, b}, [](const std::vector<Var>& v) { return ag::mean_abs_diff(v[0], v[1]); }, 15);
  check_gradients({random_tensor({2, 4, 4}, rng)},
                  [](const std::vector<Var>& v) { return ag::charbonnier_curvature(v[0], 1e-3, 0.45); },
                  16, 1e-5);
}

TEST_CASE("charbonnier_curvature equals the reference loop bit for bit") {
  std::mt19937_64 rng(9);
  for (std::size_t h = 1; h <= 5; ++h) {
    for (std::size_t w = 1; w <= 5; ++w) {
      const Tensor f = random_tensor({2, h, w}, rng, -3, 3);
      CHECK(ag::charbonnier_curvature(Var::constant(f), 1e-3, 0.45).value().item() ==
            rmgn::testing::second_order_ref(f));
    }
  }
}

TEST_CASE("backward accumulates through shared subgraphs") {
  const Var x = Var::leaf(Tensor({1}, 3.0));
  const Var y = ag::mul(x, x);           // x^2
  const Var z = ag::add(y, ag::scale(y, 2.0));  // 3 x^2
  z.backward();
  CHECK(x.grad()[0] == doctest::Approx(18.0));
}

TEST_CASE("leaf sinks receive gradients and constants record nothing") {
  Tensor sink({1}, 0.0);
  const Var x = Var::leaf(Tensor({1}, 2.0), &sink);
  ag::scale(x, 5.0).backward();
  CHECK(sink[0] == doctest::Approx(5.0));
  const Var c = ag::scale(Var::constant(Tensor({1}, 2.0)), 5.0);
  CHECK_FALSE(c.requires_grad());
  CHECK(c.node()->parents.empty());
}

TEST_CASE("sigmoid stays strictly inside (0,1) under saturation") {
  const Tensor x({4}, std::vector<double>{-1e4, -800, 800, 1e4});
  const Tensor s = ag::sigmoid(Var::constant(x)).value();
  for (double v : s.values()) {
    CHECK(v > 0.0);
    CHECK(v < 1.0);
  }
}

TEST_CASE("shape errors") {
  const Var a = Var::constant(Tensor::chw(1, 2, 2));
  const Var b = Var::constant(Tensor::chw(1, 2, 3));
  CHECK_THROWS_AS(ag::add(a, b), ShapeError);
  CHECK_THROWS_AS(ag::warp_bilinear(a, Var::constant(Tensor::chw(2, 2, 3))), ShapeError);
  CHECK_THROWS_AS(ag::avgpool2(b), ShapeError);
  CHECK_THROWS_AS(ag::instance_norm(Var::constant(Tensor::chw(1, 1, 1)), 1e-5), ShapeError);
  CHECK_THROWS_AS(ag::scale(Var::leaf(Tensor::chw(1, 2, 2)), 2.0).backward(), ShapeError);
}
