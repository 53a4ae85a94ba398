#pragma once

// Helpers shared by the unit tests and the acceptance binary: random inputs,
// central finite differences, and brute-force reference implementations that
// do not reuse library code paths.

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "rmgn/tensor.hpp"

namespace rmgn::testing {

inline Tensor random_tensor(const Shape& shape, std::mt19937_64& rng, double lo = -1.0,
                            double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(shape);
  for (double& v : t.values()) v = u(rng);
  return t;
}

/// Central difference of f with respect to x (step h); x is restored.
inline double central_difference(const std::function<double()>& f, double& x, double h = 1e-3) {
  const double keep = x;
  x = keep + h;
  const double up = f();
  x = keep - h;
  const double down = f();
  x = keep;
  return (up - down) / (2.0 * h);
}

/// |a - n| / max(|a|, |n|), with differences below `floor` treated as exact.
inline double relative_error(double analytic, double numeric, double floor = 1e-9) {
  const double diff = std::abs(analytic - numeric);
  if (diff < floor) return 0.0;
  return diff / std::max(std::abs(analytic), std::abs(numeric));
}

inline double charbonnier_ref(double x, double eps = 1e-3, double alpha = 0.45) {
  return std::pow(x * x + eps * eps, alpha);
}

/// Triple loop over channels, directions, rows and columns in that order.
inline double second_order_ref(const Tensor& flow) {
  const long h = static_cast<long>(flow.height()), w = static_cast<long>(flow.width());
  const int dirs[4][2] = {{0, 1}, {1, 0}, {1, 1}, {1, -1}};
  double s = 0.0;
  for (std::size_t c = 0; c < flow.channels(); ++c) {
    for (const auto& d : dirs) {
      for (long y = 0; y < h; ++y) {
        for (long x = 0; x < w; ++x) {
          const long ya = y - d[0], xa = x - d[1], yb = y + d[0], xb = x + d[1];
          if (ya < 0 || yb >= h || xa < 0 || xa >= w || xb < 0 || xb >= w) continue;
          s += charbonnier_ref(flow.at(c, ya, xa) + flow.at(c, yb, xb) - 2.0 * flow.at(c, y, x));
        }
      }
    }
  }
  return s;
}

/// Number of (channel, direction, pixel) terms counted by second_order_ref.
inline std::size_t second_order_terms(std::size_t channels, long h, long w) {
  const int dirs[4][2] = {{0, 1}, {1, 0}, {1, 1}, {1, -1}};
  std::size_t t = 0;
  for (const auto& d : dirs) {
    for (long y = 0; y < h; ++y) {
      for (long x = 0; x < w; ++x) {
        const long ya = y - d[0], xa = x - d[1], yb = y + d[0], xb = x + d[1];
        if (ya < 0 || yb >= h || xa < 0 || xa >= w || xb < 0 || xb >= w) continue;
        ++t;
      }
    }
  }
  return t * channels;
}

/// Integer shift oracle: out(y, x) = img(y + dy, x + dx), zero outside.
inline Tensor shift_ref(const Tensor& img, long dx, long dy) {
  Tensor out(img.shape(), 0.0);
  const long h = static_cast<long>(img.height()), w = static_cast<long>(img.width());
  for (std::size_t c = 0; c < img.channels(); ++c) {
    for (long y = 0; y < h; ++y) {
      for (long x = 0; x < w; ++x) {
        const long sy = y + dy, sx = x + dx;
        if (sy >= 0 && sy < h && sx >= 0 && sx < w) out.at(c, y, x) = img.at(c, sy, sx);
      }
    }
  }
  return out;
}

}  // namespace rmgn::testing
