#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace nxf {

struct CheckResult {
  std::string name;
  bool passed = false;
  double measured = 0;
  double threshold = 0;
  std::string detail;
};

struct SelfcheckOptions {
  double tau = 0.25;  // step size probed for stability
  int instances = 20;
  int size = 32;
  int conservation_steps = 1000;
  unsigned long long seed = 20240611;
};

/// Operator oracles: stencil vs kernel decomposition, self-adjointness,
/// dissipation, mean conservation, and an explicit-step stability probe.
std::vector<CheckResult> run_selfcheck(const SelfcheckOptions& opts = {});

/// One human-readable line per check followed by one JSON object per line.
void print_selfcheck(std::ostream& os, const std::vector<CheckResult>& results);

}  // namespace nxf
