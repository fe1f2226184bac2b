#pragma once

#include <Eigen/Core>

#include <cmath>
#include <vector>

#include "nxf/error.hpp"
#include "nxf/field.hpp"

namespace nxf {

/// Channel-summed outer products of smoothed image gradients, one symmetric
/// 2x2 matrix per pixel.
template <typename Scalar>
struct StructureTensorField {
  using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
  Index width = 0;
  Index height = 0;
  Array s11, s12, s22;

  Eigen::Matrix<Scalar, 2, 2> at(Index p) const {
    Eigen::Matrix<Scalar, 2, 2> m;
    m << s11[p], s12[p], s12[p], s22[p];
    return m;
  }
};

template <typename Scalar>
struct EigenPair {
  Scalar mu1 = 0;
  Scalar mu2 = 0;
  Eigen::Matrix<Scalar, 2, 1> v1{1, 0};
  Eigen::Matrix<Scalar, 2, 1> v2{0, 1};

  Eigen::Matrix<Scalar, 2, 2> reconstruct() const {
    return mu1 * v1 * v1.transpose() + mu2 * v2 * v2.transpose();
  }
};

/// Per-pixel diffusion tensor D = [[a, b], [b, c]] together with the
/// stencil parameters alpha in [0, 1/2] and |beta| <= 1 - 2 alpha.
template <typename Scalar>
struct TensorField {
  using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
  Index width = 0;
  Index height = 0;
  Array a, b, c, alpha, beta;

  TensorField() = default;
  TensorField(Index w, Index h)
      : width(w), height(h),
        a(Array::Zero(w * h)), b(Array::Zero(w * h)), c(Array::Zero(w * h)),
        alpha(Array::Zero(w * h)), beta(Array::Zero(w * h)) {}

  Index pixels() const { return width * height; }

  Eigen::Matrix<Scalar, 2, 2> tensor(Index p) const {
    Eigen::Matrix<Scalar, 2, 2> m;
    m << a[p], b[p], b[p], c[p];
    return m;
  }

  /// D = identity everywhere, beta = 0, constant alpha.
  static TensorField identity(Index w, Index h, Scalar alpha_const) {
    TensorField t(w, h);
    t.a.setOnes();
    t.c.setOnes();
    t.alpha.setConstant(alpha_const);
    return t;
  }
};

struct DiffusivityParams {
  double lambda = 1e-4;
  double rho = 1.0;
};

template <typename Scalar>
Scalar sign0(Scalar x) {
  return x > 0 ? Scalar(1) : (x < 0 ? Scalar(-1) : Scalar(0));
}

/// beta = (1 - 2 alpha) sign(b), the stable choice for a given alpha.
template <typename Scalar>
Scalar beta_from(Scalar alpha, Scalar b) {
  return (1 - 2 * alpha) * sign0(b);
}

/// Perona-Malik diffusivity g(x) = 1 / (1 + x^2 / lambda^2).
template <typename Scalar>
Scalar perona_malik(Scalar x, Scalar lambda) {
  const Scalar r = x / lambda;
  return Scalar(1) / (Scalar(1) + r * r);
}

namespace detail {

// Half-sample symmetric reflection: ... c b a | a b c ...
inline Index reflect(Index i, Index n) {
  if (n == 1) return 0;
  const Index period = 2 * n;
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - 1 - i;
}

template <typename Scalar>
std::vector<Scalar> gaussian_kernel(Scalar rho) {
  const Index radius = static_cast<Index>(std::ceil(3 * rho));
  std::vector<Scalar> k(static_cast<std::size_t>(2 * radius + 1));
  Scalar sum = 0;
  for (Index i = -radius; i <= radius; ++i) {
    const Scalar v = std::exp(-Scalar(0.5) * static_cast<Scalar>(i * i) / (rho * rho));
    k[static_cast<std::size_t>(i + radius)] = v;
    sum += v;
  }
  for (auto& v : k) v /= sum;
  return k;
}

}  // namespace detail

/// Separable Gaussian convolution with reflecting boundaries. The kernel is
/// truncated at ceil(3 rho) and renormalised; rho = 0 is the identity.
template <typename Scalar>
Field<Scalar> gaussian_smooth(const Field<Scalar>& f, Scalar rho) {
  if (rho < 0) throw Error(ErrorKind::InvalidArgument, "gaussian_smooth: rho must be >= 0");
  if (rho == 0 || f.pixels() == 0) return f;
  const auto k = detail::gaussian_kernel(rho);
  const Index radius = static_cast<Index>(k.size() / 2);
  const Index w = f.width(), h = f.height(), c = f.channels();

  Field<Scalar> tmp(w, h, c);
  for (Index y = 0; y < h; ++y)
    for (Index x = 0; x < w; ++x)
      for (Index ch = 0; ch < c; ++ch) {
        Scalar acc = 0;
        for (Index i = -radius; i <= radius; ++i)
          acc += k[static_cast<std::size_t>(i + radius)] * f(detail::reflect(x + i, w), y, ch);
        tmp(x, y, ch) = acc;
      }

  Field<Scalar> out(w, h, c);
  for (Index y = 0; y < h; ++y)
    for (Index x = 0; x < w; ++x)
      for (Index ch = 0; ch < c; ++ch) {
        Scalar acc = 0;
        for (Index i = -radius; i <= radius; ++i)
          acc += k[static_cast<std::size_t>(i + radius)] * tmp(x, detail::reflect(y + i, h), ch);
        out(x, y, ch) = acc;
      }
  return out;
}

/// Structure tensor of a (Gaussian pre-smoothed) multi-channel image.
/// Gradients use central differences inside and one-sided differences on
/// the border.
template <typename Scalar>
StructureTensorField<Scalar> structure_tensor(const Field<Scalar>& image, Scalar rho) {
  const Field<Scalar> s = gaussian_smooth(image, rho);
  const Index w = s.width(), h = s.height();
  StructureTensorField<Scalar> st;
  st.width = w;
  st.height = h;
  st.s11.setZero(w * h);
  st.s12.setZero(w * h);
  st.s22.setZero(w * h);

  auto diff = [](Scalar lo, Scalar hi, Index span) { return (hi - lo) / static_cast<Scalar>(span); };

  for (Index y = 0; y < h; ++y) {
    const Index ym = std::max<Index>(y - 1, 0), yp = std::min<Index>(y + 1, h - 1);
    for (Index x = 0; x < w; ++x) {
      const Index xm = std::max<Index>(x - 1, 0), xp = std::min<Index>(x + 1, w - 1);
      const Index p = y * w + x;
      for (Index ch = 0; ch < s.channels(); ++ch) {
        const Scalar gx = xp == xm ? Scalar(0) : diff(s(xm, y, ch), s(xp, y, ch), xp - xm);
        const Scalar gy = yp == ym ? Scalar(0) : diff(s(x, ym, ch), s(x, yp, ch), yp - ym);
        st.s11[p] += gx * gx;
        st.s12[p] += gx * gy;
        st.s22[p] += gy * gy;
      }
    }
  }
  return st;
}

/// Closed-form eigendecomposition of the symmetric matrix [[s11, s12], [s12, s22]].
/// mu1 >= mu2; v1 = (cos t, sin t) with t = atan2(2 s12, s11 - s22) / 2 and
/// v2 = v1 rotated by +90 degrees. Isotropic input yields v1 = (1, 0).
template <typename Scalar>
EigenPair<Scalar> eigen2x2(Scalar s11, Scalar s12, Scalar s22) {
  EigenPair<Scalar> e;
  const Scalar mean = (s11 + s22) / 2;
  const Scalar half_diff = (s11 - s22) / 2;
  const Scalar radius = std::hypot(half_diff, s12);
  e.mu1 = mean + radius;
  e.mu2 = mean - radius;
  if (s12 == 0 && s11 == s22) {
    e.v1 = {1, 0};
    e.v2 = {0, 1};
    return e;
  }
  const Scalar theta = std::atan2(2 * s12, s11 - s22) / 2;
  e.v1 = {std::cos(theta), std::sin(theta)};
  e.v2 = {-e.v1.y(), e.v1.x()};
  return e;
}

/// Edge-enhancing diffusion tensor from the reference image:
/// D = g(mu1) v1 v1^T + 1 v2 v2^T with the structure-tensor eigensystem.
template <typename Scalar>
TensorField<Scalar> eed_tensor(const Field<Scalar>& image, const DiffusivityParams& params,
                               Scalar alpha_const) {
  if (!(alpha_const >= 0 && alpha_const <= Scalar(0.5))) {
    throw Error(ErrorKind::InvalidArgument, "eed_tensor: alpha must lie in [0, 1/2]");
  }
  if (!(params.lambda > 0) || params.rho < 0) {
    throw Error(ErrorKind::InvalidArgument, "eed_tensor: need lambda > 0 and rho >= 0");
  }
  const auto st = structure_tensor(image, static_cast<Scalar>(params.rho));
  const Scalar lambda = static_cast<Scalar>(params.lambda);
  TensorField<Scalar> t(image.width(), image.height());
  for (Index p = 0; p < t.pixels(); ++p) {
    const auto e = eigen2x2(st.s11[p], st.s12[p], st.s22[p]);
    const Scalar g1 = perona_malik(e.mu1, lambda);
    const Eigen::Matrix<Scalar, 2, 2> d = g1 * e.v1 * e.v1.transpose() + e.v2 * e.v2.transpose();
    t.a[p] = d(0, 0);
    t.b[p] = d(0, 1);
    t.c[p] = d(1, 1);
    t.alpha[p] = alpha_const;
    t.beta[p] = beta_from(alpha_const, t.b[p]);
  }
  return t;
}

/// Below this norm (z3, z4) has no usable direction and v1 falls back to (1, 0).
inline constexpr double kDirectionEpsilon = 1e-8;

/// Maps a 5-channel feature map to stencil parameters:
/// alpha = sigmoid(z0) / 2, mu1 = g(z1), mu2 = g(z2), v1 = (z3, z4) / |(z3, z4)|.
template <typename Scalar>
TensorField<Scalar> z_to_tensor(const Field<Scalar>& z, Scalar lambda) {
  if (z.channels() != 5) {
    throw Error(ErrorKind::InvalidArgument,
                "z_to_tensor: expected 5 channels, got " + std::to_string(z.channels()));
  }
  if (!(lambda > 0)) throw Error(ErrorKind::InvalidArgument, "z_to_tensor: lambda must be > 0");
  TensorField<Scalar> t(z.width(), z.height());
  for (Index p = 0; p < t.pixels(); ++p) {
    const Scalar* zp = z.data().data() + p * 5;
    // sigmoid(z0) / 2 written to stay finite for large |z0|
    const Scalar alpha = zp[0] >= 0 ? Scalar(0.5) / (1 + std::exp(-zp[0]))
                                    : Scalar(0.5) * std::exp(zp[0]) / (1 + std::exp(zp[0]));
    const Scalar mu1 = perona_malik(zp[1], lambda);
    const Scalar mu2 = perona_malik(zp[2], lambda);
    Eigen::Matrix<Scalar, 2, 1> v1{zp[3], zp[4]};
    const Scalar n = v1.norm();
    if (n < static_cast<Scalar>(kDirectionEpsilon)) {
      v1 = {1, 0};
    } else {
      v1 /= n;
    }
    const Eigen::Matrix<Scalar, 2, 1> v2{-v1.y(), v1.x()};
    const Eigen::Matrix<Scalar, 2, 2> d = mu1 * v1 * v1.transpose() + mu2 * v2 * v2.transpose();
    t.a[p] = d(0, 0);
    t.b[p] = d(0, 1);
    t.c[p] = d(1, 1);
    t.alpha[p] = alpha;
    t.beta[p] = beta_from(alpha, t.b[p]);
  }
  return t;
}

}  // namespace nxf
