#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "risklab/errors.hpp"

namespace risklab {

// Experiment description parsed from the flat `key = value` format with
// [model] / [sizes] / [signal] / [mc] / [output] section headers.
struct ExperimentConfig {
  // [model]
  std::string model;  // spectral | factor | mog
  int d = 0;
  int k = 0;  // representation dimension (spectral/factor) or component count (mog)

  // [sizes]
  double alpha = 0.0;  // used when m == 0: m = round(alpha * n)
  long m = 0;
  long n = 0;
  int reps = 100;

  // [signal]
  double sigma2 = 1.0;           // spectral downstream noise variance
  double sigma_nu = 1.0;         // factor latent-regression noise std
  std::vector<double> beta;      // factor/spectral target coefficients
  std::vector<double> col_norms; // factor loading column norms
  double separation = 2.0;       // mog center separation
  std::string preset = "block";  // mog signal preset

  // [mc]
  std::uint64_t seed = 1;
  long n_fisher = 100000;
  long n_proj = 1000000;
  long n_eval = 1000000;
  long law_mc = 1000000;

  // [output]
  std::string path;

  long effective_m() const;
};

// Total parse with line-level diagnostics; unknown keys and sections,
// type mismatches and constraint violations throw ConfigError.
ExperimentConfig parse_config(const std::string& text);

// Canonical serialization; parse(serialize(c)) reproduces c.
std::string serialize_config(const ExperimentConfig& config);

// FNV-1a hash of the canonical serialization (integer-only, reproducible).
std::uint64_t config_hash(const ExperimentConfig& config);

}  // namespace risklab
