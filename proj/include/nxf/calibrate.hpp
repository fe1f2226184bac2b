#pragma once

#include <cstdint>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "nxf/field.hpp"
#include "nxf/pipeline.hpp"

namespace nxf {

/// Search space for the explicit EED baseline. Lambda is log-spaced, alpha
/// linearly spaced; both grids include their endpoints.
struct GridSpec {
  double lambda_min = 1e-6;
  double lambda_max = 1e-2;
  int lambda_steps = 9;
  double alpha_min = 0.001;
  double alpha_max = 0.5;
  int alpha_steps = 14;
  double search_tol = 1e-5;
  double final_tol = 1e-6;
  std::size_t max_samples = 128;

  void validate() const;
  std::vector<double> lambda_grid() const;
  std::vector<double> alpha_grid() const;
};

struct GridPoint {
  double lambda = 0;
  double alpha = 0;
};

/// Cartesian product, lambda-major.
std::vector<GridPoint> grid_points(const GridSpec& spec);

struct CalibrationSample {
  Field2D image;
  Field2D gt_flow;
};

struct GridEvaluation {
  GridPoint point;
  double epe = 0;
  bool ok = true;
  std::string error;
};

struct CalibrationResult {
  double lambda = 0;
  double alpha = 0;
  double epe = 0;
  std::vector<GridEvaluation> table;  // in grid_points order
};

/// Grid search over (lambda, alpha) for one mask density. Every grid point
/// runs the explicit EED pipeline at spec.search_tol on each sample (sample i
/// uses a fixed mask drawn from seeds[i % seeds.size()]) and is scored by the
/// mean EPE. Ties prefer the smaller alpha, then the smaller lambda. A grid
/// point whose solve fails is recorded and skipped.
CalibrationResult calibrate(const std::vector<CalibrationSample>& samples, double density,
                            const GridSpec& spec, const std::vector<std::uint64_t>& seeds,
                            const PipelineConfig& base = PipelineConfig::explicit_eed(),
                            const std::function<void(const std::string&)>& warn = {});

/// CSV with header `lambda,alpha,epe` (failed points print `nan`).
void write_grid_csv(std::ostream& os, const CalibrationResult& result);

}  // namespace nxf
