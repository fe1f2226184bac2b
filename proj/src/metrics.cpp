#include "nxf/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "nxf/format.hpp"

namespace nxf {

const char* to_string(EvalScope s) {
  switch (s) {
    case EvalScope::AllPixels: return "all";
    case EvalScope::UnknownOnly: return "unknown";
    case EvalScope::HeldoutMask: return "heldout";
  }
  return "all";
}

EvalScope parse_scope(const std::string& s) {
  if (s == "all") return EvalScope::AllPixels;
  if (s == "unknown") return EvalScope::UnknownOnly;
  if (s == "heldout") return EvalScope::HeldoutMask;
  throw Error(ErrorKind::InvalidArgument, "unknown scope '" + s + "' (all|unknown|heldout)");
}

FlMode parse_fl_mode(const std::string& s) {
  if (s == "and") return FlMode::And;
  if (s == "or") return FlMode::Or;
  throw Error(ErrorKind::InvalidArgument, "unknown fl mode '" + s + "' (and|or)");
}

namespace {

void check_pair(const Field2D& est, const Field2D& gt, const std::optional<Mask>& scope) {
  if (!est.same_shape(gt) || est.channels() != 2) {
    throw Error(ErrorKind::InvalidArgument, "metrics need two 2-channel fields of equal size");
  }
  if (scope && !scope->matches(est)) {
    throw Error(ErrorKind::InvalidArgument, "scope mask dimensions differ from the flow");
  }
}

template <typename Fn>
Index for_each_in_scope(const Field2D& est, const Field2D& gt, const std::optional<Mask>& scope, Fn&& fn) {
  Index n = 0;
  for (Index p = 0; p < est.pixels(); ++p) {
    if (scope && !scope->at(p)) continue;
    const double du = est.data()[2 * p] - gt.data()[2 * p];
    const double dv = est.data()[2 * p + 1] - gt.data()[2 * p + 1];
    fn(std::hypot(du, dv), std::hypot(gt.data()[2 * p], gt.data()[2 * p + 1]));
    ++n;
  }
  if (n == 0) throw Error(ErrorKind::UndefinedMetric, "metric scope contains no pixel");
  return n;
}

}  // namespace

double epe(const Field2D& est, const Field2D& gt, const std::optional<Mask>& scope) {
  check_pair(est, gt, scope);
  double sum = 0;
  const Index n = for_each_in_scope(est, gt, scope, [&](double err, double) { sum += err; });
  return sum / static_cast<double>(n);
}

double fl_rate(const Field2D& est, const Field2D& gt, const std::optional<Mask>& scope, FlMode mode) {
  check_pair(est, gt, scope);
  Index outliers = 0;
  const Index n = for_each_in_scope(est, gt, scope, [&](double err, double mag) {
    const bool outlier = mode == FlMode::And ? (err > 3.0 && err > 0.05 * mag)
                                             : (err > 3.0 || err >= 0.05 * mag);
    outliers += outlier ? 1 : 0;
  });
  return static_cast<double>(outliers) / static_cast<double>(n);
}

Index genmask_count(Index pixels, double density) {
  if (!(density >= 0.0 && density <= 1.0)) {
    throw Error(ErrorKind::InvalidArgument, "density must lie in [0, 1]");
  }
  // the epsilon absorbs products such as 0.29 * 100 = 28.999999999999996
  const auto k = static_cast<Index>(std::floor(density * static_cast<double>(pixels) + 1e-9));
  return std::clamp<Index>(k, 0, pixels);
}

Mask genmask(Index width, Index height, double density, std::uint64_t seed) {
  const Index n = width * height;
  const Index k = genmask_count(n, density);
  Mask m(width, height);
  if (k == 0) return m;

  // 53-bit uniforms from the raw engine output; std distributions are not
  // portable across standard libraries
  std::mt19937_64 rng(seed);
  std::vector<double> draws(static_cast<std::size_t>(n));
  for (auto& d : draws) d = static_cast<double>(rng() >> 11) * 0x1.0p-53;

  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::partial_sort(order.begin(), order.begin() + k, order.end(), [&](Index a, Index b) {
    const double da = draws[static_cast<std::size_t>(a)], db = draws[static_cast<std::size_t>(b)];
    return da != db ? da > db : a < b;
  });
  for (Index i = 0; i < k; ++i) m.set(order[static_cast<std::size_t>(i)], true);
  return m;
}

std::vector<EvalReport> density_sweep(const Field2D& image, const Field2D& gt_flow,
                                      const std::vector<double>& densities, const PipelineConfig& cfg,
                                      const std::vector<std::uint64_t>& seeds, EvalScope scope,
                                      FlMode fl_mode) {
  if (densities.empty()) throw Error(ErrorKind::InvalidArgument, "density sweep needs at least one density");
  if (seeds.empty()) throw Error(ErrorKind::InvalidArgument, "density sweep needs at least one seed");
  std::vector<EvalReport> rows;
  rows.reserve(densities.size() * seeds.size());
  for (const double density : densities) {
    for (const std::uint64_t seed : seeds) {
      const Mask mask = genmask(gt_flow.width(), gt_flow.height(), density, seed);
      const auto result = inpaint(image, mask, apply_mask(gt_flow, mask), cfg);
      std::optional<Mask> scope_mask;
      if (scope != EvalScope::AllPixels) {
        // without a separate held-out set the unknown pixels are the held-out ones
        Mask unknown(mask.width(), mask.height());
        for (Index p = 0; p < mask.pixels(); ++p) unknown.set(p, !mask.at(p));
        scope_mask = unknown;
      }
      EvalReport r;
      r.density = density;
      r.seed = seed;
      r.scope = scope;
      r.n_pixels = scope_mask ? scope_mask->count() : mask.pixels();
      if (r.n_pixels == 0) {
        r.epe = 0;
        r.fl_rate = 0;
      } else {
        r.epe = epe(result.flow, gt_flow, scope_mask);
        r.fl_rate = fl_rate(result.flow, gt_flow, scope_mask, fl_mode);
      }
      rows.push_back(r);
    }
  }
  return rows;
}

void write_report_csv(std::ostream& os, const std::vector<EvalReport>& rows) {
  os << "density,seed,epe,fl,n_pixels,scope\n";
  for (const auto& r : rows) {
    os << format_real(r.density) << ',' << r.seed << ',' << format_real(r.epe) << ','
       << format_real(r.fl_rate) << ',' << r.n_pixels << ',' << to_string(r.scope) << '\n';
  }
}

}  // namespace nxf
