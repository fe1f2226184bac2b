#include "nxf/selfcheck.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "nxf/diffusion.hpp"
#include "nxf/format.hpp"
#include "nxf/random.hpp"

namespace nxf {

namespace {

double dot(const Field2D& a, const Field2D& b) { return (a.data() * b.data()).sum(); }

CheckResult check_equivalence(const SelfcheckOptions& o, Rng& rng) {
  double worst = 0;
  for (int i = 0; i < o.instances; ++i) {
    const auto t = random_tensor_field(o.size, o.size, rng, i % 2 == 0);
    const auto u = random_field(o.size, o.size, 2, rng);
    const auto fused = divergence_stencil(u, t);
    const auto ref = divergence_decomposed(u, t);
    const double scale = std::max(ref.data().abs().maxCoeff(), 1e-300);
    worst = std::max(worst, (fused.data() - ref.data()).abs().maxCoeff() / scale);
  }
  return {"stencil_equivalence", worst <= 1e-6, worst, 1e-6, "max relative error, fused vs decomposed"};
}

CheckResult check_adjoint(const SelfcheckOptions& o, Rng& rng) {
  double worst = 0;
  for (int i = 0; i < o.instances; ++i) {
    const DiffusionOperator<double> op(random_tensor_field(o.size, o.size, rng));
    const auto u = random_field(o.size, o.size, 2, rng);
    const auto w = random_field(o.size, o.size, 2, rng);
    const auto au = op(u), aw = op(w);
    const double scale = std::max(au.data().matrix().norm() * w.data().matrix().norm(),
                                  u.data().matrix().norm() * aw.data().matrix().norm());
    worst = std::max(worst, std::abs(dot(au, w) - dot(u, aw)) / std::max(scale, 1e-300));
  }
  return {"self_adjoint", worst <= 1e-6, worst, 1e-6, "|<Au,w> - <u,Aw>| / (|Au||w|)"};
}

CheckResult check_dissipation(const SelfcheckOptions& o, Rng& rng) {
  double worst = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < o.instances; ++i) {
    const DiffusionOperator<double> op(random_tensor_field(o.size, o.size, rng, i % 2 == 0));
    const auto u = random_field(o.size, o.size, 2, rng);
    worst = std::max(worst, dot(u, op(u)));
  }
  return {"dissipation", worst <= 1e-9, worst, 1e-9, "max <u, A(u)>"};
}

CheckResult check_conservation(const SelfcheckOptions& o, Rng& rng) {
  const auto t = random_tensor_field(o.size, o.size, rng);
  const DiffusionOperator<double> op(t);
  Field2D u = random_field(o.size, o.size, 2, rng, 1.0, 2.0);
  const Mask none(o.size, o.size);
  const double m0 = u.channel(0).data().mean(), m1 = u.channel(1).data().mean();
  for (int s = 0; s < o.conservation_steps; ++s) u = explicit_step(u, op, u, none, 0.25);
  const double drift = std::max(std::abs(u.channel(0).data().mean() - m0) / std::abs(m0),
                                std::abs(u.channel(1).data().mean() - m1) / std::abs(m1));
  return {"mean_conservation", drift < 1e-8, drift, 1e-8,
          "relative channel-mean drift over " + std::to_string(o.conservation_steps) + " steps"};
}

CheckResult check_stability(const SelfcheckOptions& o, Rng& rng) {
  double worst = 0;  // largest per-step norm growth factor minus one
  for (int i = 0; i < o.instances; ++i) {
    const DiffusionOperator<double> op(random_tensor_field(o.size, o.size, rng, i % 2 == 0));
    Field2D u = random_field(o.size, o.size, 2, rng);
    const Mask none(o.size, o.size);
    for (int s = 0; s < 50; ++s) {
      const double before = u.data().matrix().norm();
      u = explicit_step(u, op, u, none, o.tau);
      const double after = u.data().matrix().norm();
      if (!std::isfinite(after)) {
        worst = std::numeric_limits<double>::infinity();
        break;
      }
      worst = std::max(worst, after / before - 1.0);
    }
  }
  return {"stability", worst <= 1e-12, worst, 1e-12,
          "max(|u + tau A(u)| / |u|) - 1 at tau = " + format_real(o.tau)};
}

}  // namespace

std::vector<CheckResult> run_selfcheck(const SelfcheckOptions& opts) {
  Rng rng(opts.seed);
  std::vector<CheckResult> out;
  out.push_back(check_equivalence(opts, rng));
  out.push_back(check_adjoint(opts, rng));
  out.push_back(check_dissipation(opts, rng));
  out.push_back(check_conservation(opts, rng));
  out.push_back(check_stability(opts, rng));
  return out;
}

void print_selfcheck(std::ostream& os, const std::vector<CheckResult>& results) {
  for (const auto& r : results) {
    os << (r.passed ? "PASS " : "FAIL ") << r.name << "  measured=" << format_real(r.measured)
       << "  threshold=" << format_real(r.threshold) << "  (" << r.detail << ")\n";
  }
  for (const auto& r : results) {
    nlohmann::json j;
    j["check"] = r.name;
    j["passed"] = r.passed;
    // JSON has no infinity; the stability probe reports null when it blows up
    j["measured"] = std::isfinite(r.measured) ? nlohmann::json(r.measured) : nlohmann::json(nullptr);
    j["threshold"] = r.threshold;
    os << j.dump() << '\n';
  }
}

}  // namespace nxf
