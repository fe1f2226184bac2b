#pragma once

#include <cmath>

#include "nxf/field.hpp"

namespace nxf::testing {

/// Piecewise-affine flow whose discontinuity follows an image edge: a disc
/// moving differently from the background. The image is bright inside the
/// disc and carries a faint horizontal ramp outside.
struct PiecewiseAffineScene {
  Field2D image;
  Field2D flow;
};

inline bool in_disc(Index x, Index y, Index n) {
  const double cx = 0.58 * n, cy = 0.45 * n, r = 0.28 * n;
  const double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
  return dx * dx + dy * dy <= r * r;
}

inline PiecewiseAffineScene piecewise_affine_scene(Index n = 96) {
  PiecewiseAffineScene s{Field2D(n, n, 3), Field2D(n, n, 2)};
  const double cx = 0.58 * n, cy = 0.45 * n;
  for (Index y = 0; y < n; ++y)
    for (Index x = 0; x < n; ++x) {
      const bool disc = in_disc(x, y, n);
      const double base = disc ? 0.75 : 0.25 + 0.1 * static_cast<double>(x) / n;
      s.image(x, y, 0) = base;
      s.image(x, y, 1) = disc ? 0.6 : base * 0.8;
      s.image(x, y, 2) = disc ? 0.35 : base * 1.2;
      if (disc) {
        s.flow(x, y, 0) = -2.0 + 0.02 * (y - cy);
        s.flow(x, y, 1) = 1.5 - 0.02 * (x - cx);
      } else {
        s.flow(x, y, 0) = 1.0 + 0.01 * x;
        s.flow(x, y, 1) = -0.5 + 0.005 * y;
      }
    }
  return s;
}

}  // namespace nxf::testing
