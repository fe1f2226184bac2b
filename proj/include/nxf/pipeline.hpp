#pragma once

#include <optional>
#include <string>
#include <type_traits>
#include <vector>

#include "nxf/diffusion.hpp"
#include "nxf/error.hpp"
#include "nxf/field.hpp"
#include "nxf/tensor_field.hpp"

namespace nxf {

enum class PipelineMode { ExplicitEed, NeuroexplicitZ };

/// Coarse-to-fine settings. Per-level lists run coarse -> fine.
struct PipelineConfig {
  int levels = 4;
  PipelineMode mode = PipelineMode::ExplicitEed;
  std::vector<int> iterations{5, 15, 30, 45};
  std::vector<double> lambdas{1e-4, 1e-4, 1e-4, 1e-4};
  double rho = 1.0;
  double alpha_const = 0.3;
  SolverConfig solver;

  /// Explicit EED baseline: converge every level to a relative residual of 1e-6.
  static PipelineConfig explicit_eed(int levels = 4) {
    PipelineConfig cfg;
    cfg.levels = levels;
    cfg.mode = PipelineMode::ExplicitEed;
    cfg.iterations = default_iterations(levels);
    cfg.lambdas.assign(static_cast<std::size_t>(levels), 1e-4);
    cfg.solver.stop_mode = StopMode::Residual;
    cfg.solver.residual_tol = 1e-6;
    return cfg;
  }

  /// z-field driven mode: one FSI cycle of i steps per level,
  /// i in {5, 15, 30, 45} coarse -> fine.
  static PipelineConfig neuroexplicit(int levels = 4) {
    PipelineConfig cfg;
    cfg.levels = levels;
    cfg.mode = PipelineMode::NeuroexplicitZ;
    cfg.iterations = default_iterations(levels);
    cfg.lambdas.assign(static_cast<std::size_t>(levels), 1.0);
    cfg.solver.stop_mode = StopMode::FixedIterations;
    return cfg;
  }

  /// The finest `levels` entries of {5, 15, 30, 45}; longer pyramids need an
  /// explicit schedule.
  static std::vector<int> default_iterations(int levels) {
    const std::vector<int> base{5, 15, 30, 45};
    if (levels < 1 || levels > static_cast<int>(base.size())) {
      throw Error(ErrorKind::Config,
                  "no default iteration schedule for " + std::to_string(levels) + " levels");
    }
    return {base.end() - levels, base.end()};
  }

  void validate() const {
    if (levels < 1) throw Error(ErrorKind::Config, "levels must be >= 1");
    if (static_cast<int>(iterations.size()) != levels) {
      throw Error(ErrorKind::Config, "need one iteration count per level");
    }
    if (static_cast<int>(lambdas.size()) != levels) {
      throw Error(ErrorKind::Config, "need one lambda per level");
    }
    for (double l : lambdas)
      if (!(l > 0)) throw Error(ErrorKind::Config, "lambda must be > 0");
    if (rho < 0) throw Error(ErrorKind::Config, "rho must be >= 0");
    if (!(alpha_const >= 0 && alpha_const <= 0.5)) {
      throw Error(ErrorKind::Config, "alpha must lie in [0, 1/2]");
    }
    solver.validate();
  }
};

template <typename Scalar>
struct LevelStats {
  int level_index = 0;
  Index width = 0;
  Index height = 0;
  long steps = 0;
  double residual = 0;
  bool converged = false;
};

template <typename Scalar>
struct InpaintResult {
  Field<Scalar> flow;
  bool converged = true;
  bool empty_mask = false;  // no known pixel: the zero field is returned
  std::vector<LevelStats<Scalar>> levels;  // coarse -> fine

  long total_steps() const {
    long s = 0;
    for (const auto& l : levels) s += l.steps;
    return s;
  }
};

namespace detail {

template <typename Scalar>
InpaintResult<Scalar> run_pyramid(const std::vector<PyramidLevel<Scalar>>& pyr,
                                  const std::vector<TensorField<Scalar>>& tensors,
                                  const PipelineConfig& cfg) {
  InpaintResult<Scalar> res;
  const int n = static_cast<int>(pyr.size());
  Field<Scalar> prev;
  for (int k = n - 1; k >= 0; --k) {
    const auto& lvl = pyr[static_cast<std::size_t>(k)];
    const int order = n - 1 - k;  // 0 = coarsest
    Field<Scalar> init = (k == n - 1)
                             ? Field<Scalar>(lvl.mask.width(), lvl.mask.height(), lvl.sparse_flow.channels())
                             : upsample_bilinear(prev, lvl.mask.width(), lvl.mask.height());
    SolverConfig scfg = cfg.solver;
    if (scfg.stop_mode == StopMode::FixedIterations) {
      scfg.iterations = cfg.iterations[static_cast<std::size_t>(order)];
      scfg.fsi_cycle_len = std::max(1, scfg.iterations);
    }
    auto sr = solve_level(lvl, tensors[static_cast<std::size_t>(k)], init, scfg);
    res.levels.push_back({k, lvl.mask.width(), lvl.mask.height(), sr.steps, sr.residual, sr.converged});
    res.converged = res.converged && sr.converged;
    prev = std::move(sr.flow);
  }
  res.flow = std::move(prev);
  return res;
}

template <typename Scalar>
void check_inputs(const Field<Scalar>& image, const Mask& mask, const Field<Scalar>& sparse_flow) {
  if (!mask.matches(image) || !mask.matches(sparse_flow)) {
    throw Error(ErrorKind::InvalidArgument, "inpaint: image, mask and flow dimensions differ");
  }
  if (sparse_flow.channels() != 2) {
    throw Error(ErrorKind::InvalidArgument, "inpaint: flow must have 2 channels");
  }
}

}  // namespace detail

/// Coarse-to-fine inpainting. The coarsest level starts from zero; every
/// finer level starts from the bilinearly upsampled coarser result with its
/// own known samples written over it. `z_levels` (finest first) is required
/// in neuroexplicit mode.
template <typename Scalar>
InpaintResult<Scalar> inpaint(const Field<Scalar>& image, const Mask& mask,
                              const Field<Scalar>& sparse_flow, const PipelineConfig& cfg,
                              const std::optional<std::vector<Field<std::type_identity_t<Scalar>>>>& z_levels = std::nullopt) {
  cfg.validate();
  detail::check_inputs(image, mask, sparse_flow);
  if (cfg.mode == PipelineMode::NeuroexplicitZ) {
    if (!z_levels) throw Error(ErrorKind::Config, "neuroexplicit mode needs z-fields");
    if (static_cast<int>(z_levels->size()) != cfg.levels) {
      throw Error(ErrorKind::Config, "expected " + std::to_string(cfg.levels) + " z-field levels, got " +
                                         std::to_string(z_levels->size()));
    }
  }
  const Field<Scalar> data = apply_mask(sparse_flow, mask);
  if (mask.count() == 0) {
    InpaintResult<Scalar> res;
    res.flow = Field<Scalar>(mask.width(), mask.height(), 2);
    res.empty_mask = true;
    return res;
  }
  const auto pyr = build_pyramid(image, mask, data, cfg.levels);

  std::vector<TensorField<Scalar>> tensors;
  tensors.reserve(pyr.size());
  for (std::size_t k = 0; k < pyr.size(); ++k) {
    // lambdas run coarse -> fine, pyramid levels fine -> coarse
    const double lambda = cfg.lambdas[pyr.size() - 1 - k];
    if (cfg.mode == PipelineMode::ExplicitEed) {
      tensors.push_back(eed_tensor(pyr[k].image, DiffusivityParams{lambda, cfg.rho},
                                   static_cast<Scalar>(cfg.alpha_const)));
    } else {
      const auto& z = (*z_levels)[k];
      if (z.width() != pyr[k].mask.width() || z.height() != pyr[k].mask.height()) {
        throw Error(ErrorKind::Config, "z-field level " + std::to_string(k) + " is " +
                                           std::to_string(z.width()) + "x" + std::to_string(z.height()) +
                                           ", pyramid level is " + std::to_string(pyr[k].mask.width()) +
                                           "x" + std::to_string(pyr[k].mask.height()));
      }
      tensors.push_back(z_to_tensor(z, static_cast<Scalar>(lambda)));
    }
  }
  return detail::run_pyramid(pyr, tensors, cfg);
}

/// Baseline with D = identity (alpha = cfg.alpha_const) on every level.
template <typename Scalar>
InpaintResult<Scalar> inpaint_homogeneous(const Mask& mask, const Field<Scalar>& sparse_flow,
                                          const PipelineConfig& cfg) {
  cfg.validate();
  const Field<Scalar> image(mask.width(), mask.height(), 1);
  detail::check_inputs(image, mask, sparse_flow);
  const Field<Scalar> data = apply_mask(sparse_flow, mask);
  if (mask.count() == 0) {
    InpaintResult<Scalar> res;
    res.flow = Field<Scalar>(mask.width(), mask.height(), 2);
    res.empty_mask = true;
    return res;
  }
  const auto pyr = build_pyramid(image, mask, data, cfg.levels);
  std::vector<TensorField<Scalar>> tensors;
  for (const auto& lvl : pyr) {
    tensors.push_back(TensorField<Scalar>::identity(lvl.mask.width(), lvl.mask.height(),
                                                    static_cast<Scalar>(cfg.alpha_const)));
  }
  return detail::run_pyramid(pyr, tensors, cfg);
}

}  // namespace nxf
