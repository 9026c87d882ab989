#pragma once

#include <string>

#include "risklab/config.hpp"
#include "risklab/harness.hpp"

namespace risklab {

// Number rendering used in every CSV cell: 17 significant digits, so doubles
// round-trip exactly.
std::string csv_number(double v);

// Reproducibility header: '#' comment lines carrying the resolved seed, the
// config hash and the full canonical config.
std::string csv_preamble(const ExperimentConfig& config, std::uint64_t resolved_seed);

// One row per replication:
// rep_index,m,n,rep_term,leakage_term,variance_term,excess_scaled
std::string simulate_csv(const TwoStageResult& result, const ExperimentConfig& config,
                         std::uint64_t resolved_seed);

// Single data row:
// empirical_mean,law_mean,relative_mean_error,ks_distance,q10,q50,q90,n_effective
std::string comparison_csv(const ComparisonReport& report, const ExperimentConfig& config,
                           std::uint64_t resolved_seed);

// Law description: component,constant_or_weight,dof (constant row first).
std::string law_csv(const LimitLaw& law, const ExperimentConfig& config,
                    std::uint64_t resolved_seed);

// Reads the `excess_scaled` column of a simulate CSV (skipping '#' comments).
std::vector<double> read_excess_column(const std::string& csv_text);

}  // namespace risklab
