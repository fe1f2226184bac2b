#pragma once

#include <Eigen/Core>

#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "nxf/error.hpp"
#include "nxf/field.hpp"
#include "nxf/tensor_field.hpp"

namespace nxf {

using Kernel2 = Eigen::Matrix<int, 2, 2>;

/// The four 2x2 one-sided difference kernels of the stencil, indexed
/// (row, column) with rows growing downwards. Order: top-row x difference,
/// bottom-row x difference, left-column y difference, right-column y difference.
struct KernelSet {
  static std::array<Kernel2, 4> kernels() {
    Kernel2 x1, x2, y1, y2;
    x1 << -1, 1, 0, 0;
    x2 << 0, 0, -1, 1;
    y1 << -1, 0, 1, 0;
    y2 << 0, -1, 0, 1;
    return {x1, x2, y1, y2};
  }

  /// Mirror about the kernel centre and negate.
  static Kernel2 adjoint(const Kernel2& k) {
    Kernel2 out;
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) out(i, j) = -k(1 - i, 1 - j);
    return out;
  }
};

/// Weighting matrix of the four one-sided differences of a cell.
template <typename Scalar>
Eigen::Matrix<Scalar, 4, 4> h_matrix(Scalar a, Scalar b, Scalar c, Scalar alpha, Scalar beta) {
  const Scalar a1 = (1 - alpha) / 2 * a, a2 = alpha / 2 * a;
  const Scalar c1 = (1 - alpha) / 2 * c, c2 = alpha / 2 * c;
  const Scalar bm = (1 - beta) / 4 * b, bp = (1 + beta) / 4 * b;
  Eigen::Matrix<Scalar, 4, 4> h;
  h << a1, a2, bm, bp,
       a2, a1, bp, bm,
       bm, bp, c1, c2,
       bp, bm, c2, c1;
  return h;
}

/// Stencil parameters of the cell whose top-left pixel is (x, y): the mean of
/// its four corner pixels. Averaging keeps D's eigenvalues in [0, 1] and
/// |beta| <= 1 - 2 alpha.
template <typename Scalar>
struct CellParams {
  Scalar a, b, c, alpha, beta;
};

template <typename Scalar>
CellParams<Scalar> cell_params(const TensorField<Scalar>& t, Index x, Index y) {
  const Index w = t.width;
  const Index p00 = y * w + x, p01 = p00 + 1, p10 = p00 + w, p11 = p10 + 1;
  auto avg = [&](const auto& arr) { return (arr[p00] + arr[p01] + arr[p10] + arr[p11]) / Scalar(4); };
  return {avg(t.a), avg(t.b), avg(t.c), avg(t.alpha), avg(t.beta)};
}

/// Discrete div(D grad u) as one fused 3x3 stencil per pixel. The stencil
/// weights are assembled once from the tensor field; applying the operator
/// is a symmetric gather A(u)_p = sum_q w_pq (u_q - u_p), so constants map to
/// zero and the operator is self-adjoint. Fluxes across the image border are
/// zero (Neumann).
template <typename Scalar>
class DiffusionOperator {
 public:
  using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

  enum Dir { E, W, S, N, SE, NW, SW, NE, kDirs };

  explicit DiffusionOperator(const TensorField<Scalar>& t) : width_(t.width), height_(t.height) {
    for (auto& w : weights_) w.setZero(width_ * height_);
    for (Index y = 0; y + 1 < height_; ++y) {
      for (Index x = 0; x + 1 < width_; ++x) {
        const auto cp = cell_params(t, x, y);
        const Scalar horiz = (1 - cp.alpha) * cp.a / 2 - cp.alpha * cp.c / 2 - cp.beta * cp.b / 2;
        const Scalar vert = (1 - cp.alpha) * cp.c / 2 - cp.alpha * cp.a / 2 - cp.beta * cp.b / 2;
        const Scalar diag = cp.alpha * (cp.a + cp.c) / 2 + (1 + cp.beta) * cp.b / 2;
        const Scalar anti = cp.alpha * (cp.a + cp.c) / 2 - (1 - cp.beta) * cp.b / 2;
        const Index tl = y * width_ + x, tr = tl + 1, bl = tl + width_, br = bl + 1;
        add(tl, E, tr, W, horiz);
        add(bl, E, br, W, horiz);
        add(tl, S, bl, N, vert);
        add(tr, S, br, N, vert);
        add(tl, SE, br, NW, diag);
        add(tr, SW, bl, NE, anti);
      }
    }
  }

  Index width() const { return width_; }
  Index height() const { return height_; }
  const Array& weight(Dir d) const { return weights_[d]; }

  void apply(const Field<Scalar>& u, Field<Scalar>& out) const {
    if (u.width() != width_ || u.height() != height_) {
      throw Error(ErrorKind::InvalidArgument, "divergence: field and tensor dimensions differ");
    }
    if (!out.same_shape(u)) out = Field<Scalar>(u.width(), u.height(), u.channels());
    const Index w = width_, h = height_, c = u.channels();
    const Scalar* ud = u.data().data();
    Scalar* od = out.data().data();
#if defined(NXF_USE_OPENMP)
#pragma omp parallel for schedule(static)
#endif
    for (Index y = 0; y < h; ++y) {
      const Index ym = y > 0 ? y - 1 : 0, yp = y + 1 < h ? y + 1 : h - 1;
      for (Index x = 0; x < w; ++x) {
        const Index xm = x > 0 ? x - 1 : 0, xp = x + 1 < w ? x + 1 : w - 1;
        const Index p = y * w + x;
        const std::array<Index, kDirs> nb{y * w + xp, y * w + xm, yp * w + x, ym * w + x,
                                          yp * w + xp, ym * w + xm, yp * w + xm, ym * w + xp};
        for (Index ch = 0; ch < c; ++ch) {
          const Scalar up = ud[p * c + ch];
          Scalar acc = 0;
          for (int d = 0; d < kDirs; ++d) acc += weights_[d][p] * (ud[nb[d] * c + ch] - up);
          od[p * c + ch] = acc;
        }
      }
    }
  }

  Field<Scalar> operator()(const Field<Scalar>& u) const {
    Field<Scalar> out(u.width(), u.height(), u.channels());
    apply(u, out);
    return out;
  }

 private:
  void add(Index p, Dir dp, Index q, Dir dq, Scalar v) {
    weights_[dp][p] += v;
    weights_[dq][q] += v;
  }

  Index width_;
  Index height_;
  std::array<Array, kDirs> weights_;
};

template <typename Scalar>
void check_operator_inputs(const Field<Scalar>& u, const TensorField<Scalar>& t) {
  if (u.width() != t.width || u.height() != t.height) {
    throw Error(ErrorKind::InvalidArgument, "divergence: field and tensor dimensions differ");
  }
}

/// Fused-stencil divergence. Assembles the stencil on every call; hold a
/// DiffusionOperator when applying repeatedly.
template <typename Scalar>
Field<Scalar> divergence_stencil(const Field<Scalar>& u, const TensorField<Scalar>& t) {
  check_operator_inputs(u, t);
  return DiffusionOperator<Scalar>(t)(u);
}

/// Reference divergence built from the kernel decomposition: the four
/// one-sided differences w of every cell are weighted by that cell's H and
/// scattered back through the mirrored, negated kernels. Cells that would
/// cross the image border do not exist, which realises the Neumann condition.
template <typename Scalar>
Field<Scalar> divergence_decomposed(const Field<Scalar>& u, const TensorField<Scalar>& t) {
  check_operator_inputs(u, t);
  const Index w = u.width(), h = u.height(), c = u.channels();
  const Index cw = std::max<Index>(w - 1, 0), chh = std::max<Index>(h - 1, 0);
  const auto kernels = KernelSet::kernels();
  Field<Scalar> out(w, h, c);

  // flux[k] holds (H w)_k per cell for the current channel
  std::array<Eigen::Array<Scalar, Eigen::Dynamic, 1>, 4> flux;
  for (auto& f : flux) f.setZero(cw * chh);

  for (Index ch = 0; ch < c; ++ch) {
    for (Index cy = 0; cy < chh; ++cy) {
      for (Index cx = 0; cx < cw; ++cx) {
        Eigen::Matrix<Scalar, 4, 1> wv;
        for (int k = 0; k < 4; ++k) {
          Scalar acc = 0;
          for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j) acc += static_cast<Scalar>(kernels[k](i, j)) * u(cx + j, cy + i, ch);
          wv[k] = acc;
        }
        const auto cp = cell_params(t, cx, cy);
        const Eigen::Matrix<Scalar, 4, 1> hw = h_matrix(cp.a, cp.b, cp.c, cp.alpha, cp.beta) * wv;
        for (int k = 0; k < 4; ++k) flux[k][cy * cw + cx] = hw[k];
      }
    }
    // outer convolution: correlate each flux with the adjoint kernel, anchored
    // so that pixel (x, y) sees cells (x-1..x, y-1..y)
    for (int k = 0; k < 4; ++k) {
      const Kernel2 adj = KernelSet::adjoint(kernels[k]);
      for (Index y = 0; y < h; ++y)
        for (Index x = 0; x < w; ++x) {
          Scalar acc = 0;
          for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j) {
              const Index cx = x - 1 + j, cy = y - 1 + i;
              if (cx < 0 || cy < 0 || cx >= cw || cy >= chh) continue;
              acc += static_cast<Scalar>(adj(i, j)) * flux[k][cy * cw + cx];
            }
          out(x, y, ch) += acc;
        }
    }
  }
  return out;
}

/// Overwrites every known pixel of u with the Dirichlet data f.
template <typename Scalar>
void impose_dirichlet(Field<Scalar>& u, const Field<Scalar>& f, const std::vector<Index>& known) {
  const Index c = u.channels();
  for (Index p : known)
    for (Index ch = 0; ch < c; ++ch) u.data()[p * c + ch] = f.data()[p * c + ch];
}

template <typename Scalar>
void check_step_inputs(const Field<Scalar>& u, const Field<Scalar>& f, const Mask& m) {
  if (!u.same_shape(f) || !m.matches(u)) {
    throw Error(ErrorKind::InvalidArgument, "diffusion step: u, f and mask dimensions differ");
  }
}

/// One forward-Euler step u + tau A(u), followed by u = f on known pixels.
template <typename Scalar>
Field<Scalar> explicit_step(const Field<Scalar>& u, const DiffusionOperator<Scalar>& op,
                            const Field<Scalar>& f, const Mask& m, Scalar tau) {
  check_step_inputs(u, f, m);
  Field<Scalar> out = op(u);
  out.data() = u.data() + tau * out.data();
  impose_dirichlet(out, f, m.indices());
  return out;
}

template <typename Scalar>
Field<Scalar> explicit_step(const Field<Scalar>& u, const TensorField<Scalar>& t,
                            const Field<Scalar>& f, const Mask& m, Scalar tau) {
  check_operator_inputs(u, t);
  return explicit_step(u, DiffusionOperator<Scalar>(t), f, m, tau);
}

/// Extrapolation weights gamma_l = (4l + 2) / (2l + 3), l = 0..L-1.
template <typename Scalar = double>
std::vector<Scalar> fsi_weights(int cycle_len) {
  if (cycle_len < 1) throw Error(ErrorKind::InvalidArgument, "FSI cycle length must be >= 1");
  std::vector<Scalar> g(static_cast<std::size_t>(cycle_len));
  for (int l = 0; l < cycle_len; ++l) g[static_cast<std::size_t>(l)] = Scalar(4 * l + 2) / Scalar(2 * l + 3);
  return g;
}

/// One FSI cycle with caller-supplied extrapolation weights. The history
/// value u^{k-1/L} equals u^k at the cycle start; Dirichlet data is
/// re-imposed after every fractional step. A weight of exactly 1 reduces
/// that step to explicit_step.
template <typename Scalar>
Field<Scalar> fsi_cycle(const Field<Scalar>& u, const DiffusionOperator<Scalar>& op,
                        const Field<Scalar>& f, const Mask& m, Scalar tau,
                        std::span<const Scalar> gammas) {
  check_step_inputs(u, f, m);
  const auto known = m.indices();
  Field<Scalar> prev = u;
  Field<Scalar> cur = u;
  Field<Scalar> next(u.width(), u.height(), u.channels());
  for (const Scalar gamma : gammas) {
    op.apply(cur, next);
    if (gamma == Scalar(1)) {
      next.data() = cur.data() + tau * next.data();
    } else {
      next.data() = gamma * (cur.data() + tau * next.data()) + (1 - gamma) * prev.data();
    }
    impose_dirichlet(next, f, known);
    std::swap(prev, cur);
    std::swap(cur, next);
  }
  return cur;
}

template <typename Scalar>
Field<Scalar> fsi_cycle(const Field<Scalar>& u, const DiffusionOperator<Scalar>& op,
                        const Field<Scalar>& f, const Mask& m, Scalar tau, int cycle_len) {
  const auto g = fsi_weights<Scalar>(cycle_len);
  return fsi_cycle(u, op, f, m, tau, std::span<const Scalar>(g));
}

template <typename Scalar>
Field<Scalar> fsi_cycle(const Field<Scalar>& u, const TensorField<Scalar>& t, const Field<Scalar>& f,
                        const Mask& m, Scalar tau, int cycle_len) {
  check_operator_inputs(u, t);
  return fsi_cycle(u, DiffusionOperator<Scalar>(t), f, m, tau, cycle_len);
}

/// Largest stable explicit step for h = 1 and tensor eigenvalues <= 1.
inline constexpr double kStableTau = 0.25;

enum class StopMode { FixedIterations, Residual };

struct SolverConfig {
  double tau = kStableTau;
  int fsi_cycle_len = 20;
  int iterations = 45;  // fixed-iterations mode: explicit-step budget
  StopMode stop_mode = StopMode::Residual;
  double residual_tol = 1e-6;
  long max_iterations = 200000;  // residual mode cap on explicit steps

  void validate() const {
    if (!(tau > 0)) throw Error(ErrorKind::Config, "tau must be > 0");
    if (tau > kStableTau * (1 + 1e-12)) {
      throw Error(ErrorKind::Config, "tau = " + std::to_string(tau) + " exceeds the stability limit " +
                                         std::to_string(kStableTau));
    }
    if (fsi_cycle_len < 1) throw Error(ErrorKind::Config, "FSI cycle length must be >= 1");
    if (iterations < 0) throw Error(ErrorKind::Config, "iteration count must be >= 0");
    if (!(residual_tol > 0)) throw Error(ErrorKind::Config, "residual tolerance must be > 0");
    if (max_iterations < 1) throw Error(ErrorKind::Config, "max iterations must be >= 1");
  }
};

template <typename Scalar>
struct SolveResult {
  Field<Scalar> flow;
  bool converged = false;
  long steps = 0;  // operator applications
  long cycles = 0;
  double residual = std::numeric_limits<double>::infinity();
};

/// |u_after - u_before|_2 / max(|u_before|_2, 1e-12)
template <typename Scalar>
double relative_change(const Field<Scalar>& before, const Field<Scalar>& after) {
  const double diff = static_cast<double>((after.data() - before.data()).matrix().norm());
  const double base = static_cast<double>(before.data().matrix().norm());
  return diff / std::max(base, 1e-12);
}

/// |A(u)|_2 over the unknown pixels: how far u is from the steady state.
template <typename Scalar>
double equation_residual(const Field<Scalar>& u, const DiffusionOperator<Scalar>& op, const Mask& m) {
  const Field<Scalar> au = op(u);
  double acc = 0;
  for (Index p = 0; p < m.pixels(); ++p) {
    if (m.at(p)) continue;
    for (Index ch = 0; ch < u.channels(); ++ch) {
      const double v = static_cast<double>(au.data()[p * u.channels() + ch]);
      acc += v * v;
    }
  }
  return std::sqrt(acc);
}

/// Solves one pyramid level from `init`. Fixed mode spends cfg.iterations
/// explicit steps in FSI cycles of length cfg.fsi_cycle_len (the last cycle
/// may be shorter); residual mode repeats full cycles until the relative
/// change over a cycle drops below cfg.residual_tol or the step cap is hit.
template <typename Scalar>
SolveResult<Scalar> solve_level(const Field<Scalar>& sparse_flow, const Mask& mask,
                                const DiffusionOperator<Scalar>& op, const Field<Scalar>& init,
                                const SolverConfig& cfg) {
  cfg.validate();
  check_step_inputs(init, sparse_flow, mask);
  if (init.width() != op.width() || init.height() != op.height()) {
    throw Error(ErrorKind::InvalidArgument, "solve_level: init and tensor dimensions differ");
  }
  SolveResult<Scalar> r;
  r.flow = init;
  impose_dirichlet(r.flow, sparse_flow, mask.indices());
  const Scalar tau = static_cast<Scalar>(cfg.tau);

  if (mask.count() == mask.pixels()) {
    r.converged = true;
    r.residual = 0;
    return r;
  }

  if (cfg.stop_mode == StopMode::FixedIterations) {
    long remaining = cfg.iterations;
    while (remaining > 0) {
      const int len = static_cast<int>(std::min<long>(remaining, cfg.fsi_cycle_len));
      Field<Scalar> next = fsi_cycle(r.flow, op, sparse_flow, mask, tau, len);
      r.residual = relative_change(r.flow, next);
      r.flow = std::move(next);
      r.steps += len;
      ++r.cycles;
      remaining -= len;
    }
    r.converged = true;
    return r;
  }

  const auto gammas = fsi_weights<Scalar>(cfg.fsi_cycle_len);
  while (r.steps + cfg.fsi_cycle_len <= cfg.max_iterations) {
    Field<Scalar> next =
        fsi_cycle(r.flow, op, sparse_flow, mask, tau, std::span<const Scalar>(gammas));
    r.residual = relative_change(r.flow, next);
    r.flow = std::move(next);
    r.steps += cfg.fsi_cycle_len;
    ++r.cycles;
    if (!r.flow.all_finite()) {
      throw Error(ErrorKind::Numeric, "solver produced non-finite values");
    }
    if (r.residual < cfg.residual_tol) {
      r.converged = true;
      break;
    }
  }
  return r;
}

template <typename Scalar>
SolveResult<Scalar> solve_level(const PyramidLevel<Scalar>& level, const TensorField<Scalar>& t,
                                const Field<Scalar>& init, const SolverConfig& cfg) {
  if (t.width != level.mask.width() || t.height != level.mask.height()) {
    throw Error(ErrorKind::InvalidArgument, "solve_level: tensor and level dimensions differ");
  }
  return solve_level(level.sparse_flow, level.mask, DiffusionOperator<Scalar>(t), init, cfg);
}

}  // namespace nxf
