#include "risklab/harness.hpp"

#include <algorithm>
#include <cmath>
#include <optional>

#include "risklab/parallel.hpp"

namespace risklab {

std::vector<double> law_sample(const LimitLaw& law, long count, Rng& rng) {
  if (count < 1) throw InputError("law_sample: count must be positive");
  for (const auto& c : law.components) {
    if (!(c.weight >= 0.0) || !std::isfinite(c.weight))
      throw InputError("law_sample: weights must be finite and nonnegative");
    if (c.dof < 1) throw InputError("law_sample: dof must be >= 1");
  }
  std::vector<double> out(count);
  for (long i = 0; i < count; ++i) {
    double v = law.constant;
    for (const auto& c : law.components) {
      double chi2 = 0.0;
      for (int j = 0; j < c.dof; ++j) {
        const double z = rng.normal();
        chi2 += z * z;
      }
      v += c.weight * chi2;
    }
    out[i] = v;
  }
  return out;
}

namespace {

struct RepOutcome {
  std::optional<TwoStageRow> row;
};

TwoStageResult collect(std::vector<RepOutcome> reps, std::string model, long m, long n,
                       std::uint64_t seed) {
  TwoStageResult out;
  out.sample.model = std::move(model);
  out.sample.m = m;
  out.sample.n = n;
  out.sample.seed = seed;
  for (auto& r : reps) {
    if (r.row) {
      out.rows.push_back(*r.row);
      out.sample.values.push_back(r.row->excess_scaled);
    } else {
      ++out.sample.failed;
    }
  }
  const double total = static_cast<double>(reps.size());
  if (out.sample.failed > 0.02 * total)
    throw NonConvergenceError("run_two_stage: more than 2% of replications failed (" +
                              std::to_string(out.sample.failed) + "/" +
                              std::to_string(reps.size()) + ")");
  return out;
}

}  // namespace

TwoStageResult run_two_stage(const SpectralPopulation& pop, double sigma2, long m, long n,
                             int reps, std::uint64_t base_seed, const FitOptions& opts,
                             int threads) {
  if (reps < 1) throw InputError("run_two_stage: reps must be positive");
  if (m < opts.min_samples || n < 1) throw InputError("run_two_stage: sample sizes too small");
  const Vector w_star = pop.target_coefficients();
  std::vector<RepOutcome> outcomes(reps);
  parallel_for(reps, threads, [&](long r) {
    Rng rng_pre(derive_stream(base_seed, 2 * static_cast<std::uint64_t>(r)));
    Rng rng_down(derive_stream(base_seed, 2 * static_cast<std::uint64_t>(r) + 1));
    TwoStageRow row;
    row.rep_index = r;
    try {
      const TripletBatch batch = sample_triplets(pop, m, rng_pre);
      const FitResult fit = fit_descriptor(batch, pop.k, opts, rng_pre);
      const Matrix w = spectral_feature_matrix(fit.descriptor);
      const PopulationMoments pm = linear_population_moments(w, pop.sigma_down, w_star);
      const Matrix root = sym_sqrt(pop.sigma_down).mat();
      const Matrix x = rng_down.normal_matrix(n, pop.dim()) * root;
      const DesignBlock design = DesignBlock::from_features(x, x * w.transpose());
      const RiskBreakdown risk = risk_decompose(pm, design, x * w_star, sigma2);
      row.rep_term = risk.rep;
      row.leakage_term = risk.leakage;
      row.variance_term = risk.variance;
      row.excess_scaled = risk.excess_scaled;
      outcomes[r].row = row;
    } catch (const NonConvergenceError&) {
      // excluded; counted by collect()
    }
  });
  return collect(std::move(outcomes), "spectral", m, n, base_seed);
}

TwoStageResult run_two_stage(const FactorPopulation& pop, long m, long n, int reps,
                             std::uint64_t base_seed, int threads) {
  if (reps < 1) throw InputError("run_two_stage: reps must be positive");
  if (m < 2 || n < 1) throw InputError("run_two_stage: sample sizes too small");
  std::vector<RepOutcome> outcomes(reps);
  parallel_for(reps, threads, [&](long r) {
    Rng rng_pre(derive_stream(base_seed, 2 * static_cast<std::uint64_t>(r)));
    Rng rng_down(derive_stream(base_seed, 2 * static_cast<std::uint64_t>(r) + 1));
    TwoStageRow row;
    row.rep_index = r;
    const Matrix x_pre = sample_factor(pop, m, rng_pre);
    const SymMatrix s_m(x_pre.transpose() * x_pre / static_cast<double>(m));
    const Descriptor m_hat = ppca_mle(s_m, pop.rank());
    const Matrix loading = factor_loading(m_hat);
    const Matrix w = factor_feature_matrix(loading);
    const PopulationMoments pm = linear_population_moments(w, pop.sigma_x, pop.w_star);
    const Matrix x = sample_factor(pop, n, rng_down);
    const DesignBlock design = DesignBlock::from_features(x, x * w.transpose());
    const RiskBreakdown risk = risk_decompose(pm, design, x * pop.w_star, pop.sigma2);
    row.rep_term = risk.rep;
    row.leakage_term = risk.leakage;
    row.variance_term = risk.variance;
    row.excess_scaled = risk.excess_scaled;
    outcomes[r].row = row;
  });
  return collect(std::move(outcomes), "factor", m, n, base_seed);
}

double ks_statistic(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw InputError("ks_statistic: empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    if (a[i] <= b[j])
      ++i;
    else
      ++j;
    d = std::max(d, std::abs(i / na - j / nb));
  }
  return d;
}

namespace {

double quantile_sorted(const std::vector<double>& sorted, double q) {
  const double pos = q * (static_cast<double>(sorted.size()) - 1.0);
  const std::size_t lo = static_cast<std::size_t>(pos);
  if (lo + 1 >= sorted.size()) return sorted.back();
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] * (1.0 - frac) + sorted[lo + 1] * frac;
}

}  // namespace

ComparisonReport compare(const EmpiricalSample& sample, const LimitLaw& law, long law_mc,
                         std::uint64_t seed) {
  if (sample.values.empty()) throw InputError("compare: empty empirical sample");
  if (law_mc < 1) throw InputError("compare: law_mc must be positive");
  ComparisonReport out;
  out.n_effective = static_cast<long>(sample.values.size());
  double mean = 0.0;
  for (double v : sample.values) mean += v;
  mean /= static_cast<double>(sample.values.size());
  out.empirical_mean = mean;
  out.law_mean = law.mean();
  out.relative_mean_error =
      std::abs(mean - out.law_mean) / std::max(std::abs(out.law_mean), 1e-300);
  Rng rng(seed);
  out.ks_distance = ks_statistic(sample.values, law_sample(law, law_mc, rng));
  std::vector<double> sorted = sample.values;
  std::sort(sorted.begin(), sorted.end());
  out.q10 = quantile_sorted(sorted, 0.10);
  out.q50 = quantile_sorted(sorted, 0.50);
  out.q90 = quantile_sorted(sorted, 0.90);
  return out;
}

double baseline_alpha0(double interaction_mean, double q0) {
  if (!(q0 > 0.0)) throw InputError("baseline_alpha0: q0 must be positive");
  return interaction_mean / q0;
}

}  // namespace risklab
