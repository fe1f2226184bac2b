#include "nxf/calibrate.hpp"

#include <cmath>
#include <limits>

#include "nxf/format.hpp"
#include "nxf/metrics.hpp"

namespace nxf {

void GridSpec::validate() const {
  if (lambda_steps < 2 || alpha_steps < 2) throw Error(ErrorKind::Config, "grids need at least 2 steps");
  if (!(lambda_min > 0) || !(lambda_max >= lambda_min)) {
    throw Error(ErrorKind::Config, "lambda range must be positive and ordered");
  }
  if (!(alpha_min >= 0) || !(alpha_max <= 0.5) || !(alpha_max >= alpha_min)) {
    throw Error(ErrorKind::Config, "alpha range must be ordered within [0, 1/2]");
  }
  if (!(search_tol > 0) || !(final_tol > 0)) throw Error(ErrorKind::Config, "tolerances must be > 0");
  if (max_samples < 1) throw Error(ErrorKind::Config, "sample cap must be >= 1");
}

std::vector<double> GridSpec::lambda_grid() const {
  validate();
  const double lo = std::log10(lambda_min), hi = std::log10(lambda_max);
  std::vector<double> g(static_cast<std::size_t>(lambda_steps));
  for (int k = 0; k < lambda_steps; ++k) {
    g[static_cast<std::size_t>(k)] = std::pow(10.0, lo + (hi - lo) * k / (lambda_steps - 1));
  }
  g.front() = lambda_min;
  g.back() = lambda_max;
  return g;
}

std::vector<double> GridSpec::alpha_grid() const {
  validate();
  std::vector<double> g(static_cast<std::size_t>(alpha_steps));
  for (int k = 0; k < alpha_steps; ++k) {
    g[static_cast<std::size_t>(k)] = alpha_min + (alpha_max - alpha_min) * k / (alpha_steps - 1);
  }
  g.front() = alpha_min;
  g.back() = alpha_max;
  return g;
}

std::vector<GridPoint> grid_points(const GridSpec& spec) {
  std::vector<GridPoint> pts;
  for (double l : spec.lambda_grid())
    for (double a : spec.alpha_grid()) pts.push_back({l, a});
  return pts;
}

CalibrationResult calibrate(const std::vector<CalibrationSample>& samples, double density,
                            const GridSpec& spec, const std::vector<std::uint64_t>& seeds,
                            const PipelineConfig& base,
                            const std::function<void(const std::string&)>& warn) {
  spec.validate();
  if (samples.empty()) throw Error(ErrorKind::InvalidArgument, "calibration needs at least one sample");
  if (seeds.empty()) throw Error(ErrorKind::InvalidArgument, "calibration needs at least one seed");

  const std::size_t n = std::min(samples.size(), spec.max_samples);
  std::vector<Mask> masks;
  std::vector<Field2D> sparse;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& gt = samples[i].gt_flow;
    masks.push_back(genmask(gt.width(), gt.height(), density, seeds[i % seeds.size()]));
    sparse.push_back(apply_mask(gt, masks.back()));
  }

  CalibrationResult out;
  out.epe = std::numeric_limits<double>::infinity();
  bool found = false;
  for (const GridPoint& pt : grid_points(spec)) {
    GridEvaluation ev{pt, 0.0, true, {}};
    try {
      PipelineConfig cfg = base;
      cfg.mode = PipelineMode::ExplicitEed;
      cfg.alpha_const = pt.alpha;
      cfg.lambdas.assign(static_cast<std::size_t>(cfg.levels), pt.lambda);
      cfg.solver.stop_mode = StopMode::Residual;
      cfg.solver.residual_tol = spec.search_tol;
      double sum = 0;
      for (std::size_t i = 0; i < n; ++i) {
        const auto r = inpaint(samples[i].image, masks[i], sparse[i], cfg);
        sum += epe(r.flow, samples[i].gt_flow);
      }
      ev.epe = sum / static_cast<double>(n);
      if (!std::isfinite(ev.epe)) throw Error(ErrorKind::Numeric, "non-finite EPE");
    } catch (const Error& e) {
      ev.ok = false;
      ev.epe = std::numeric_limits<double>::quiet_NaN();
      ev.error = e.what();
      if (warn) {
        warn("grid point lambda=" + format_real(pt.lambda) + " alpha=" + format_real(pt.alpha) +
             " skipped: " + e.what());
      }
    }
    out.table.push_back(ev);
    if (!ev.ok) continue;
    const bool better = !found || ev.epe < out.epe ||
                        (ev.epe == out.epe && (pt.alpha < out.alpha ||
                                               (pt.alpha == out.alpha && pt.lambda < out.lambda)));
    if (better) {
      found = true;
      out.lambda = pt.lambda;
      out.alpha = pt.alpha;
      out.epe = ev.epe;
    }
  }
  if (!found) throw Error(ErrorKind::Numeric, "every grid point failed");
  return out;
}

void write_grid_csv(std::ostream& os, const CalibrationResult& result) {
  os << "lambda,alpha,epe\n";
  for (const auto& ev : result.table) {
    os << format_real(ev.point.lambda) << ',' << format_real(ev.point.alpha) << ','
       << (ev.ok ? format_real(ev.epe) : std::string("nan")) << '\n';
  }
}

}  // namespace nxf
