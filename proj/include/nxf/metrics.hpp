#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "nxf/error.hpp"
#include "nxf/field.hpp"
#include "nxf/pipeline.hpp"

namespace nxf {

enum class EvalScope { AllPixels, UnknownOnly, HeldoutMask };
enum class FlMode { And, Or };

const char* to_string(EvalScope s);
EvalScope parse_scope(const std::string& s);
FlMode parse_fl_mode(const std::string& s);

struct EvalReport {
  double density = 0;
  std::uint64_t seed = 0;
  double epe = 0;
  double fl_rate = 0;
  Index n_pixels = 0;
  EvalScope scope = EvalScope::AllPixels;
};

/// Mean Euclidean distance between estimate and ground truth over the
/// pixels set in `scope` (all pixels when absent).
double epe(const Field2D& est, const Field2D& gt, const std::optional<Mask>& scope = std::nullopt);

/// Fraction of in-scope pixels whose endpoint error e is an outlier.
/// And: e > 3 and e > 0.05 |gt| (KITTI). Or: e > 3 or e >= 0.05 |gt|.
double fl_rate(const Field2D& est, const Field2D& gt, const std::optional<Mask>& scope = std::nullopt,
               FlMode mode = FlMode::And);

/// Exactly floor(density * w * h) known pixels: the largest of w*h seeded
/// uniform draws (ties by lower index). Bitwise reproducible per seed.
Mask genmask(Index width, Index height, double density, std::uint64_t seed);

/// Number of known pixels genmask selects.
Index genmask_count(Index pixels, double density);

/// For each (density, seed): draw a mask, subsample gt, inpaint, and score
/// against the full gt. Rows are density-major.
std::vector<EvalReport> density_sweep(const Field2D& image, const Field2D& gt_flow,
                                      const std::vector<double>& densities, const PipelineConfig& cfg,
                                      const std::vector<std::uint64_t>& seeds,
                                      EvalScope scope = EvalScope::AllPixels, FlMode fl_mode = FlMode::And);

/// CSV with header `density,seed,epe,fl,n_pixels,scope`, LF line endings.
void write_report_csv(std::ostream& os, const std::vector<EvalReport>& rows);

}  // namespace nxf
