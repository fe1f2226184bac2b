// nxf: sparse optical-flow densification by anisotropic diffusion inpainting.

#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#if defined(NXF_USE_OPENMP)
#include <omp.h>
#endif

#include "nxf/calibrate.hpp"
#include "nxf/error.hpp"
#include "nxf/format.hpp"
#include "nxf/io.hpp"
#include "nxf/metrics.hpp"
#include "nxf/pipeline.hpp"
#include "nxf/selfcheck.hpp"

namespace {

using namespace nxf;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitFormat = 2;
constexpr int kExitNumeric = 3;

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Format:
    case ErrorKind::CorruptFile: return kExitFormat;
    case ErrorKind::Numeric:
    case ErrorKind::UndefinedMetric: return kExitNumeric;
    default: return kExitUsage;
  }
}

struct PipelineFlags {
  std::string mode = "eed";
  int levels = 4;
  std::vector<int> iterations;
  std::vector<double> lambdas;
  double rho = 1.0;
  double alpha = 0.3;
  double tau = kStableTau;
  std::optional<double> tol;
  std::optional<std::string> stop;
  int fsi_len = 20;
  long max_iter = 200000;

  void add_to(CLI::App* app) {
    app->add_option("--mode", mode, "eed (explicit EED) or z (z-field driven)")
        ->check(CLI::IsMember({"eed", "z"}))
        ->capture_default_str();
    app->add_option("--levels", levels, "pyramid levels")->capture_default_str();
    app->add_option("--iterations", iterations, "fixed-mode steps per level, coarse to fine")->delimiter(',');
    app->add_option("--lambda", lambdas, "contrast parameter, one value or one per level (coarse to fine)")
        ->delimiter(',');
    app->add_option("--rho", rho, "structure tensor pre-smoothing (pixels)")->capture_default_str();
    app->add_option("--alpha", alpha, "constant stencil alpha for EED mode")->capture_default_str();
    app->add_option("--tau", tau, "time step")->capture_default_str();
    app->add_option("--tol", tol, "relative residual tolerance per level (default 1e-6)");
    app->add_option("--stop", stop, "residual or fixed (default: residual for eed, fixed for z)")
        ->check(CLI::IsMember({"residual", "fixed"}));
    app->add_option("--fsi-len", fsi_len, "FSI cycle length in residual mode")->capture_default_str();
    app->add_option("--max-iter", max_iter, "residual-mode step cap per level")->capture_default_str();
  }

  PipelineConfig build() const {
    PipelineConfig cfg = mode == "z" ? PipelineConfig::neuroexplicit(1) : PipelineConfig::explicit_eed(1);
    cfg.levels = levels;
    if (!iterations.empty()) {
      cfg.iterations = iterations;
    } else {
      cfg.iterations = PipelineConfig::default_iterations(levels);
    }
    const double default_lambda = mode == "z" ? 1.0 : 1e-4;
    if (lambdas.empty()) {
      cfg.lambdas.assign(static_cast<std::size_t>(levels), default_lambda);
    } else if (lambdas.size() == 1) {
      cfg.lambdas.assign(static_cast<std::size_t>(levels), lambdas.front());
    } else {
      cfg.lambdas = lambdas;
    }
    cfg.rho = rho;
    cfg.alpha_const = alpha;
    cfg.solver.tau = tau;
    cfg.solver.fsi_cycle_len = fsi_len;
    cfg.solver.max_iterations = max_iter;
    if (tol) cfg.solver.residual_tol = *tol;
    if (stop) cfg.solver.stop_mode = *stop == "fixed" ? StopMode::FixedIterations : StopMode::Residual;
    cfg.validate();
    return cfg;
  }
};

void set_threads(int threads) {
  if (threads <= 0) {
    if (const char* env = std::getenv("NXF_THREADS")) threads = std::atoi(env);
  }
#if defined(NXF_USE_OPENMP)
  if (threads > 0) omp_set_num_threads(threads);
#endif
}

Mask intersect(const Mask& a, const Mask& b) {
  Mask out(a.width(), a.height());
  for (Index p = 0; p < a.pixels(); ++p) out.set(p, a.at(p) && b.at(p));
  return out;
}

std::optional<Mask> scope_mask(EvalScope scope, const std::optional<std::string>& known_path,
                               const std::optional<std::string>& heldout_path, Index w, Index h) {
  switch (scope) {
    case EvalScope::AllPixels: return std::nullopt;
    case EvalScope::UnknownOnly: {
      if (!known_path) throw Error(ErrorKind::Config, "--scope unknown needs --mask");
      const Mask known = read_mask(*known_path);
      Mask out(w, h);
      for (Index p = 0; p < out.pixels(); ++p) out.set(p, !known.at(p));
      return out;
    }
    case EvalScope::HeldoutMask: {
      if (!heldout_path) throw Error(ErrorKind::Config, "--scope heldout needs --heldout");
      return read_flow_any(*heldout_path).valid;
    }
  }
  return std::nullopt;
}

void print_report(const EvalReport& r) {
  std::cout << "epe=" << format_real(r.epe) << " fl=" << format_real(r.fl_rate) << " n_pixels=" << r.n_pixels
            << " scope=" << to_string(r.scope) << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse optical-flow densification by anisotropic diffusion inpainting"};
  app.require_subcommand(1);
  int threads = 0;
  app.add_option("--threads", threads, "worker threads (falls back to NXF_THREADS)");

  // inpaint
  auto* inpaint_cmd = app.add_subcommand("inpaint", "densify a sparse flow field");
  std::string in_image, in_flow, in_out;
  std::optional<std::string> in_mask, in_zfile, in_color, in_gt;
  std::optional<double> in_density;
  std::optional<std::uint64_t> in_seed;
  std::string in_fl_mode = "and";
  PipelineFlags in_flags;
  inpaint_cmd->add_option("--image", in_image, "reference image (PNG/PPM)")->required();
  inpaint_cmd->add_option("--flow-in", in_flow, "input flow (.flo or KITTI .png)")->required();
  auto* mask_opt = inpaint_cmd->add_option("--mask", in_mask, "known-pixel mask PNG");
  auto* density_opt = inpaint_cmd->add_option("--density", in_density, "sample a random mask of this density");
  auto* seed_opt = inpaint_cmd->add_option("--seed", in_seed, "seed for --density");
  density_opt->needs(seed_opt);
  seed_opt->needs(density_opt);
  mask_opt->excludes(density_opt);
  inpaint_cmd->add_option("--zfile", in_zfile, "z-field file (required for --mode z)");
  inpaint_cmd->add_option("--out", in_out, "output .flo")->required();
  inpaint_cmd->add_option("--color-out", in_color, "optional colour-coded PNG");
  inpaint_cmd->add_option("--gt", in_gt, "ground truth flow; prints EPE");
  inpaint_cmd->add_option("--fl-mode", in_fl_mode, "outlier rule: and|or")->capture_default_str();
  in_flags.add_to(inpaint_cmd);

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "score a flow, or sweep mask densities");
  std::string ev_gt;
  std::optional<std::string> ev_est, ev_image, ev_mask, ev_heldout, ev_out;
  std::vector<double> ev_densities;
  std::vector<std::uint64_t> ev_seeds;
  std::string ev_scope = "all", ev_fl_mode = "and";
  PipelineFlags ev_flags;
  eval_cmd->add_option("--gt", ev_gt, "ground truth flow")->required();
  eval_cmd->add_option("--est", ev_est, "estimated flow (single evaluation)");
  eval_cmd->add_option("--image", ev_image, "reference image (density sweep)");
  eval_cmd->add_option("--densities", ev_densities, "sweep densities")->delimiter(',');
  eval_cmd->add_option("--seeds", ev_seeds, "sweep mask seeds")->delimiter(',');
  eval_cmd->add_option("--mask", ev_mask, "known mask (for --scope unknown)");
  eval_cmd->add_option("--heldout", ev_heldout, "held-out measurements (for --scope heldout)");
  eval_cmd->add_option("--scope", ev_scope, "all|unknown|heldout")->capture_default_str();
  eval_cmd->add_option("--fl-mode", ev_fl_mode, "and|or")->capture_default_str();
  eval_cmd->add_option("--out", ev_out, "CSV report path (default: stdout)");
  ev_flags.add_to(eval_cmd);

  // genmask
  auto* genmask_cmd = app.add_subcommand("genmask", "draw a random mask with an exact density");
  Index gm_w = 0, gm_h = 0;
  double gm_density = 0;
  std::uint64_t gm_seed = 0;
  std::string gm_out;
  genmask_cmd->add_option("--width", gm_w)->required();
  genmask_cmd->add_option("--height", gm_h)->required();
  genmask_cmd->add_option("--density", gm_density)->required();
  genmask_cmd->add_option("--seed", gm_seed)->required();
  genmask_cmd->add_option("--out", gm_out, "mask PNG")->required();

  // gridsearch
  auto* grid_cmd = app.add_subcommand("gridsearch", "calibrate EED lambda and alpha for one density");
  std::vector<std::string> gs_images, gs_flows;
  double gs_density = 0.05;
  std::vector<std::uint64_t> gs_seeds;
  std::optional<std::string> gs_out;
  GridSpec gs_spec;
  PipelineFlags gs_flags;
  grid_cmd->add_option("--images", gs_images, "reference images")->required()->delimiter(',');
  grid_cmd->add_option("--flows", gs_flows, "ground-truth flows, same order")->required()->delimiter(',');
  grid_cmd->add_option("--density", gs_density)->required();
  grid_cmd->add_option("--seeds", gs_seeds, "mask seeds (cycled over samples)")->required()->delimiter(',');
  grid_cmd->add_option("--lambda-min", gs_spec.lambda_min)->capture_default_str();
  grid_cmd->add_option("--lambda-max", gs_spec.lambda_max)->capture_default_str();
  grid_cmd->add_option("--lambda-steps", gs_spec.lambda_steps)->capture_default_str();
  grid_cmd->add_option("--alpha-min", gs_spec.alpha_min)->capture_default_str();
  grid_cmd->add_option("--alpha-max", gs_spec.alpha_max)->capture_default_str();
  grid_cmd->add_option("--alpha-steps", gs_spec.alpha_steps)->capture_default_str();
  grid_cmd->add_option("--search-tol", gs_spec.search_tol)->capture_default_str();
  grid_cmd->add_option("--out", gs_out, "CSV of every grid point");
  gs_flags.add_to(grid_cmd);

  // flowviz
  auto* viz_cmd = app.add_subcommand("flowviz", "render a flow field with the colour wheel");
  std::string fv_flow, fv_out;
  std::optional<double> fv_max;
  viz_cmd->add_option("--flow", fv_flow)->required();
  viz_cmd->add_option("--out", fv_out)->required();
  viz_cmd->add_option("--max-mag", fv_max, "saturation scale (default: 99th percentile)");

  // selfcheck
  auto* check_cmd = app.add_subcommand("selfcheck", "run the operator oracle suite");
  SelfcheckOptions sc;
  check_cmd->add_option("--tau", sc.tau, "step size for the stability probe")->capture_default_str();
  check_cmd->add_option("--instances", sc.instances)->capture_default_str();
  check_cmd->add_option("--seed", sc.seed)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }
  set_threads(threads);

  try {
    if (*inpaint_cmd) {
      const PipelineConfig cfg = in_flags.build();
      if (cfg.mode == PipelineMode::NeuroexplicitZ && !in_zfile) {
        std::cerr << "error: --mode z requires --zfile\n";
        return kExitUsage;
      }
      if (!in_mask && !in_density) {
        std::cerr << "error: give either --mask or --density with --seed\n";
        return kExitUsage;
      }
      const Field2D image = read_image(in_image);
      const KittiFlow input = read_flow_any(in_flow);
      Mask mask = in_mask ? read_mask(*in_mask)
                          : genmask(input.flow.width(), input.flow.height(), *in_density, *in_seed);
      if (!mask.matches(input.flow) || !mask.matches(image)) {
        throw Error(ErrorKind::InvalidArgument, "image, flow and mask dimensions differ");
      }
      mask = intersect(mask, input.valid);
      std::optional<std::vector<Field2D>> z;
      if (cfg.mode == PipelineMode::NeuroexplicitZ) z = read_zfield(*in_zfile);
      const auto result = inpaint(image, mask, apply_mask(input.flow, mask), cfg, z);
      write_flo(in_out, result.flow);
      if (in_color) write_png_rgb(*in_color, flow_to_color(result.flow));
      if (result.empty_mask) std::cerr << "warning: mask is empty; wrote the zero field\n";
      for (const auto& l : result.levels) {
        std::cout << "level " << l.level_index << " " << l.width << "x" << l.height << " steps=" << l.steps
                  << " residual=" << format_real(l.residual) << (l.converged ? "" : " (not converged)") << '\n';
      }
      if (in_gt) {
        const KittiFlow gt = read_flow_any(*in_gt);
        EvalReport r;
        r.density = mask.density();
        r.epe = epe(result.flow, gt.flow, gt.valid);
        r.fl_rate = fl_rate(result.flow, gt.flow, gt.valid, parse_fl_mode(in_fl_mode));
        r.n_pixels = gt.valid.count();
        print_report(r);
      }
      if (!result.converged) {
        std::cerr << "error: residual tolerance not reached within the step cap\n";
        return kExitNumeric;
      }
      return kExitOk;
    }

    if (*eval_cmd) {
      const KittiFlow gt = read_flow_any(ev_gt);
      const EvalScope scope = parse_scope(ev_scope);
      const FlMode fl_mode = parse_fl_mode(ev_fl_mode);
      if (ev_est) {
        const KittiFlow est = read_flow_any(*ev_est);
        auto sm = scope_mask(scope, ev_mask, ev_heldout, gt.flow.width(), gt.flow.height());
        // invalid ground truth never counts
        Mask m = sm ? intersect(*sm, gt.valid) : gt.valid;
        EvalReport r;
        r.scope = scope;
        r.epe = epe(est.flow, gt.flow, m);
        r.fl_rate = fl_rate(est.flow, gt.flow, m, fl_mode);
        r.n_pixels = m.count();
        print_report(r);
        return kExitOk;
      }
      if (!ev_image || ev_densities.empty() || ev_seeds.empty()) {
        std::cerr << "error: eval needs --est, or --image with --densities and --seeds\n";
        return kExitUsage;
      }
      if (gt.valid.count() != gt.valid.pixels()) {
        std::cerr << "error: density sweeps need dense ground truth; use genmask, inpaint and eval for sparse data\n";
        return kExitUsage;
      }
      const auto rows =
          density_sweep(read_image(*ev_image), gt.flow, ev_densities, ev_flags.build(), ev_seeds, scope, fl_mode);
      if (ev_out) {
        std::ofstream os(*ev_out, std::ios::binary);
        write_report_csv(os, rows);
      } else {
        write_report_csv(std::cout, rows);
      }
      return kExitOk;
    }

    if (*genmask_cmd) {
      const Mask m = genmask(gm_w, gm_h, gm_density, gm_seed);
      write_mask(gm_out, m);
      std::cout << "known=" << m.count() << " density=" << format_real(m.density()) << '\n';
      return kExitOk;
    }

    if (*grid_cmd) {
      if (gs_images.size() != gs_flows.size()) {
        std::cerr << "error: --images and --flows need the same length\n";
        return kExitUsage;
      }
      std::vector<CalibrationSample> samples;
      for (std::size_t i = 0; i < gs_images.size(); ++i) {
        samples.push_back({read_image(gs_images[i]), read_flow_any(gs_flows[i]).flow});
      }
      const auto result = calibrate(samples, gs_density, gs_spec, gs_seeds, gs_flags.build(),
                                    [](const std::string& msg) { std::cerr << "warning: " << msg << '\n'; });
      if (gs_out) {
        std::ofstream os(*gs_out, std::ios::binary);
        write_grid_csv(os, result);
      }
      std::cout << "lambda=" << format_real(result.lambda) << " alpha=" << format_real(result.alpha)
                << " epe=" << format_real(result.epe) << '\n';
      return kExitOk;
    }

    if (*viz_cmd) {
      write_png_rgb(fv_out, flow_to_color(read_flow_any(fv_flow).flow, fv_max));
      return kExitOk;
    }

    if (*check_cmd) {
      const auto results = run_selfcheck(sc);
      print_selfcheck(std::cout, results);
      for (const auto& r : results)
        if (!r.passed) return kExitNumeric;
      return kExitOk;
    }
  } catch (const Error& e) {
    std::cerr << "error [" << to_string(e.kind()) << "]: " << e.what() << '\n';
    return exit_code(e.kind());
  }
  return kExitUsage;
}
