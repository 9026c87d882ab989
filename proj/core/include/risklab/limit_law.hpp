#pragma once

#include <vector>

#include "risklab/errors.hpp"

namespace risklab {

// Constant plus a sum of independent scaled chi-square components.
struct LimitLawComponent {
  double weight = 0.0;  // >= 0
  int dof = 1;          // >= 1
};

struct LimitLaw {
  double constant = 0.0;
  std::vector<LimitLawComponent> components;

  double mean() const {
    double m = constant;
    for (const auto& c : components) m += c.weight * c.dof;
    return m;
  }
};

}  // namespace risklab
