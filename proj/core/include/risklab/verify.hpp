#pragma once

#include <string>
#include <vector>

namespace risklab {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

// The invariant gate: pseudoinverse identities, hat-matrix projector facts,
// zero representation error at the population target for both Gaussian
// models, loss and min-norm-predictor orbit invariance, responsibility
// normalization, and byte-identical seeded CSV output.
std::vector<CheckResult> run_verification_suite(std::uint64_t seed);

}  // namespace risklab
