#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

#include "nxf/field.hpp"
#include "nxf/tensor_field.hpp"

namespace nxf {

/// Seeded generator with uniforms derived from the raw 64-bit output, so
/// sequences are identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

 private:
  std::mt19937_64 engine_;
};

inline Field2D random_field(Index w, Index h, Index c, Rng& rng, double lo = -1, double hi = 1) {
  Field2D f(w, h, c);
  for (Index i = 0; i < f.size(); ++i) f.data()[i] = rng.uniform(lo, hi);
  return f;
}

/// Random tensor field satisfying the stencil constraints: eigenvalues of D
/// in [0, 1], alpha in [0, 1/2] and beta either (1 - 2 alpha) sign(b)
/// (`stable_beta`) or uniform in [-(1 - 2 alpha), 1 - 2 alpha].
inline TensorField<double> random_tensor_field(Index w, Index h, Rng& rng, bool stable_beta = true) {
  TensorField<double> t(w, h);
  for (Index p = 0; p < t.pixels(); ++p) {
    const double theta = rng.uniform(0, std::numbers::pi);
    const double mu1 = rng.uniform(), mu2 = rng.uniform();
    const double cs = std::cos(theta), sn = std::sin(theta);
    t.a[p] = mu1 * cs * cs + mu2 * sn * sn;
    t.b[p] = (mu1 - mu2) * cs * sn;
    t.c[p] = mu1 * sn * sn + mu2 * cs * cs;
    t.alpha[p] = rng.uniform(0, 0.5);
    t.beta[p] = stable_beta ? beta_from(t.alpha[p], t.b[p])
                            : rng.uniform(-1, 1) * (1 - 2 * t.alpha[p]);
  }
  return t;
}

}  // namespace nxf
