#pragma once

#include <string>
#include <vector>

#include "risklab/factor_model.hpp"
#include "risklab/limit_law.hpp"
#include "risklab/rng.hpp"
#include "risklab/spectral_model.hpp"

namespace risklab {

// Draws of constant + sum_j weight_j * chi2(dof_j), components independent.
std::vector<double> law_sample(const LimitLaw& law, long count, Rng& rng);

struct EmpiricalSample {
  std::vector<double> values;  // one per successful replication, ordered by index
  std::string model;
  long m = 0;
  long n = 0;
  std::uint64_t seed = 0;
  int failed = 0;  // replications excluded by fit failure
};

// Two-stage simulation of the scaled conditional excess risk: per
// replication, sample pre-training data with a derived stream, fit the
// descriptor, sample a fresh downstream design, and decompose the risk
// exactly (no labels are sampled; the conditional risk averages label noise
// analytically). Per-replication fit failures are excluded; more than 2% of
// them fails the run.
struct TwoStageRow {
  long rep_index = 0;
  double rep_term = 0.0;
  double leakage_term = 0.0;
  double variance_term = 0.0;
  double excess_scaled = 0.0;
};

struct TwoStageResult {
  EmpiricalSample sample;
  std::vector<TwoStageRow> rows;
};

TwoStageResult run_two_stage(const SpectralPopulation& pop, double sigma2, long m, long n,
                             int reps, std::uint64_t base_seed, const FitOptions& opts = {},
                             int threads = 0);

TwoStageResult run_two_stage(const FactorPopulation& pop, long m, long n, int reps,
                             std::uint64_t base_seed, int threads = 0);

struct ComparisonReport {
  double empirical_mean = 0.0;
  double law_mean = 0.0;
  double relative_mean_error = 0.0;
  double ks_distance = 0.0;
  double q10 = 0.0, q50 = 0.0, q90 = 0.0;
  long n_effective = 0;
};

// Mean comparison plus a two-sample Kolmogorov-Smirnov distance against
// law_mc fresh draws of the law.
ComparisonReport compare(const EmpiricalSample& sample, const LimitLaw& law, long law_mc,
                         std::uint64_t seed);

// Phase-transition threshold alpha_0 = interaction_mean / q0.
double baseline_alpha0(double interaction_mean, double q0);

// Two-sample KS statistic (exposed for tests).
double ks_statistic(std::vector<double> a, std::vector<double> b);

}  // namespace risklab
