#include "risklab/verify.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "risklab/csv.hpp"
#include "risklab/downstream.hpp"
#include "risklab/factor_model.hpp"
#include "risklab/harness.hpp"
#include "risklab/mog_model.hpp"
#include "risklab/rng.hpp"
#include "risklab/spectral_model.hpp"

namespace risklab {

// ---- CSV helpers (shared by the CLI) ---------------------------------------

std::string csv_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string csv_preamble(const ExperimentConfig& config, std::uint64_t resolved_seed) {
  std::ostringstream out;
  char hash[32];
  std::snprintf(hash, sizeof(hash), "0x%016llx",
                static_cast<unsigned long long>(config_hash(config)));
  out << "# seed = " << resolved_seed << "\n";
  out << "# config_hash = " << hash << "\n";
  std::istringstream cfg(serialize_config(config));
  std::string line;
  while (std::getline(cfg, line)) out << "# " << line << "\n";
  return out.str();
}

std::string simulate_csv(const TwoStageResult& result, const ExperimentConfig& config,
                         std::uint64_t resolved_seed) {
  std::ostringstream out;
  out << csv_preamble(config, resolved_seed);
  out << "rep_index,m,n,rep_term,leakage_term,variance_term,excess_scaled\n";
  for (const auto& row : result.rows) {
    out << row.rep_index << ',' << result.sample.m << ',' << result.sample.n << ','
        << csv_number(row.rep_term) << ',' << csv_number(row.leakage_term) << ','
        << csv_number(row.variance_term) << ',' << csv_number(row.excess_scaled) << "\n";
  }
  return out.str();
}

std::string comparison_csv(const ComparisonReport& r, const ExperimentConfig& config,
                           std::uint64_t resolved_seed) {
  std::ostringstream out;
  out << csv_preamble(config, resolved_seed);
  out << "empirical_mean,law_mean,relative_mean_error,ks_distance,q10,q50,q90,n_effective\n";
  out << csv_number(r.empirical_mean) << ',' << csv_number(r.law_mean) << ','
      << csv_number(r.relative_mean_error) << ',' << csv_number(r.ks_distance) << ','
      << csv_number(r.q10) << ',' << csv_number(r.q50) << ',' << csv_number(r.q90) << ','
      << r.n_effective << "\n";
  return out.str();
}

std::string law_csv(const LimitLaw& law, const ExperimentConfig& config,
                    std::uint64_t resolved_seed) {
  std::ostringstream out;
  out << csv_preamble(config, resolved_seed);
  out << "component,value,dof\n";
  out << "constant," << csv_number(law.constant) << ",0\n";
  for (std::size_t i = 0; i < law.components.size(); ++i)
    out << "weight_" << i << ',' << csv_number(law.components[i].weight) << ','
        << law.components[i].dof << "\n";
  out << "mean," << csv_number(law.mean()) << ",0\n";
  return out.str();
}

std::vector<double> read_excess_column(const std::string& csv_text) {
  std::istringstream in(csv_text);
  std::string line;
  std::vector<double> out;
  int excess_col = -1;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cells;
    std::istringstream row(line);
    std::string cell;
    while (std::getline(row, cell, ',')) cells.push_back(cell);
    if (excess_col < 0) {
      for (std::size_t i = 0; i < cells.size(); ++i)
        if (cells[i] == "excess_scaled") excess_col = static_cast<int>(i);
      if (excess_col < 0) throw InputError("read_excess_column: no excess_scaled column");
      continue;
    }
    if (static_cast<int>(cells.size()) <= excess_col)
      throw InputError("read_excess_column: short row");
    out.push_back(std::stod(cells[excess_col]));
  }
  if (out.empty()) throw InputError("read_excess_column: no data rows");
  return out;
}

// ---- Verification suite -----------------------------------------------------

namespace {

SymMatrix random_psd(int d, int rank, Rng& rng) {
  if (rank == 0) return SymMatrix::zero(d);
  const Matrix a = rng.normal_matrix(d, rank);
  return SymMatrix(a * a.transpose());
}

Matrix random_orthogonal(int k, Rng& rng) {
  const Matrix g = rng.normal_matrix(k, k);
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ();
  // fix the sign gauge of the factorization
  const Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (int i = 0; i < k; ++i)
    if (r(i, i) < 0) q.col(i) = -q.col(i);
  return q;
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3g", v);
  return buf;
}

CheckResult check_penrose(Rng& rng) {
  double worst = 0.0;
  for (int rank = 0; rank <= 6; ++rank) {
    const SymMatrix s = random_psd(6, rank, rng);
    const Matrix sp = pinv(s).mat();
    const Matrix& m = s.mat();
    worst = std::max(worst, (m * sp * m - m).cwiseAbs().maxCoeff());
    worst = std::max(worst, (sp * m * sp - sp).cwiseAbs().maxCoeff());
    worst = std::max(worst, ((m * sp).transpose() - m * sp).cwiseAbs().maxCoeff());
    worst = std::max(worst, ((sp * m).transpose() - sp * m).cwiseAbs().maxCoeff());
  }
  return {"penrose_identities", worst < 1e-9, "max violation " + num(worst)};
}

CheckResult check_hat_matrix(Rng& rng) {
  double worst = 0.0;
  bool ranks_ok = true;
  for (int trial = 0; trial < 5; ++trial) {
    const int n = 40, p = 6;
    Matrix phi = rng.normal_matrix(n, p);
    if (trial % 2 == 1) phi.col(p - 1) = phi.col(0);  // rank-deficient design
    const Matrix h = hat_matrix(phi);
    worst = std::max(worst, (h * h - h).cwiseAbs().maxCoeff());
    worst = std::max(worst, (h - h.transpose()).cwiseAbs().maxCoeff());
    const SymMatrix sigma_n(phi.transpose() * phi / n);
    const int rank = effective_dimension(sigma_n);
    if (std::llround(h.trace()) != rank) ranks_ok = false;
  }
  return {"hat_matrix_projector", worst < 1e-9 && ranks_ok,
          "max violation " + num(worst) + (ranks_ok ? "" : ", trace != rank")};
}

CheckResult check_rep_at_truth_spectral() {
  const SpectralPopulation pop = SpectralPopulation::concrete_diagonal(5, 2);
  const Descriptor m_star = population_target(pop);
  const Matrix w = spectral_feature_matrix(m_star);
  const PopulationMoments pm =
      linear_population_moments(w, pop.sigma_down, pop.target_coefficients());
  const Vector theta = population_projector_linear(pm.sigma, pm.cross);
  const double rep = pm.f2 - pm.cross.dot(theta);
  return {"rep_zero_at_target_spectral", std::abs(rep) < 1e-10, "Rep(M*) = " + num(rep)};
}

CheckResult check_rep_at_truth_factor() {
  Vector norms(2);
  norms << 2.0, 1.0;
  const FactorPopulation pop = FactorPopulation::from_column_norms(6, norms, Vector::Ones(2), 1.0);
  const Matrix w = factor_feature_matrix(pop.a_star);
  const PopulationMoments pm = linear_population_moments(w, pop.sigma_x, pop.w_star);
  const Vector theta = population_projector_linear(pm.sigma, pm.cross);
  const double rep = pm.f2 - pm.cross.dot(theta);
  return {"rep_zero_at_target_factor", std::abs(rep) < 1e-10, "Rep(M*) = " + num(rep)};
}

CheckResult check_spectral_loss_invariance(Rng& rng) {
  const SpectralPopulation pop = SpectralPopulation::concrete_diagonal(5, 2);
  const TripletBatch batch = sample_triplets(pop, 500, rng);
  double worst = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    const Matrix a = rng.normal_matrix(2, 5);
    const Matrix q = random_orthogonal(2, rng);
    const double base = spectral_loss(a, batch);
    worst = std::max(worst, std::abs(spectral_loss(q * a, batch) - base) / (1.0 + std::abs(base)));
  }
  return {"spectral_loss_orthogonal_invariance", worst <= 1e-10, "max rel. drift " + num(worst)};
}

CheckResult check_orbit_invariance_spectral(Rng& rng) {
  const int d = 5, k = 2, n = 40;
  int passes = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix a = rng.normal_matrix(k, d);
    const Matrix q = random_orthogonal(k, rng);
    const Matrix x = rng.normal_matrix(n, d);
    const Vector y = rng.normal_vector(n);
    const Matrix probe = rng.normal_matrix(64, d);
    if (orbit_invariance_check(linear_features(a), linear_features(q * a), x, y, probe)) ++passes;
  }
  return {"orbit_invariance_spectral", passes == 20, std::to_string(passes) + "/20 passed"};
}

CheckResult check_orbit_invariance_factor(Rng& rng) {
  const int d = 6, k = 2, n = 50;
  int passes = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix a = rng.normal_matrix(d, k);
    const Matrix q = random_orthogonal(k, rng);
    const Matrix x = rng.normal_matrix(n, d);
    const Vector y = rng.normal_vector(n);
    const Matrix probe = rng.normal_matrix(64, d);
    if (orbit_invariance_check(linear_features(factor_feature_matrix(a)),
                               linear_features(factor_feature_matrix(a * q)), x, y, probe))
      ++passes;
  }
  return {"orbit_invariance_factor", passes == 20, std::to_string(passes) + "/20 passed"};
}

CheckResult check_orbit_invariance_mog(Rng& rng) {
  const int k = 3, d = 6, n = 120;
  const MixtureParams params = MixtureParams::axis_centers(k, d, 2.0);
  const GatingState gauge = make_gating(params);
  int passes = 0;
  for (int trial = 0; trial < 20; ++trial) {
    // random relabeling of the centers
    std::vector<int> perm(k);
    for (int i = 0; i < k; ++i) perm[i] = i;
    for (int i = k - 1; i > 0; --i) std::swap(perm[i], perm[rng.uniform_int(i + 1)]);
    Matrix permuted(k, d);
    for (int i = 0; i < k; ++i) permuted.row(i) = params.centers().row(perm[i]);
    const MixtureParams relabeled(permuted);
    const GatingState gauge_b = make_gating(relabeled);
    FeatureMap fa{k * (gauge.r_star + 1),
                  [&](const Vector& x) { return gating_features(x, params, gauge); }};
    FeatureMap fb{k * (gauge_b.r_star + 1),
                  [&](const Vector& x) { return gating_features(x, relabeled, gauge_b); }};
    Rng data_rng(rng.next_u64());
    const Matrix x = sample_mixture(params, n, data_rng);
    const Vector y = data_rng.normal_vector(n);
    const Matrix probe = sample_mixture(params, 64, data_rng);
    if (orbit_invariance_check(fa, fb, x, y, probe)) ++passes;
  }
  return {"orbit_invariance_mog", passes == 20, std::to_string(passes) + "/20 passed"};
}

CheckResult check_responsibilities(Rng& rng) {
  const MixtureParams params = MixtureParams::axis_centers(4, 8, 2.0);
  const GatingState gauge = make_gating(params);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const Vector x = 3.0 * rng.normal_vector(8);
    worst = std::max(worst, std::abs(responsibilities(params, x).sum() - 1.0));
    worst = std::max(worst, std::abs(gating_responsibilities(x, params, gauge).sum() - 1.0));
  }
  return {"responsibilities_sum_to_one", worst <= 1e-12, "max deviation " + num(worst)};
}

CheckResult check_csv_determinism(std::uint64_t seed) {
  ExperimentConfig cfg;
  cfg.model = "factor";
  cfg.d = 4;
  cfg.k = 1;
  cfg.m = 400;
  cfg.n = 200;
  cfg.reps = 8;
  cfg.col_norms = {1.5};
  cfg.beta = {1.0};
  cfg.seed = seed;
  const FactorPopulation pop = FactorPopulation::from_column_norms(
      cfg.d, Eigen::Map<const Vector>(cfg.col_norms.data(), 1),
      Eigen::Map<const Vector>(cfg.beta.data(), 1), cfg.sigma_nu);
  const TwoStageResult r1 = run_two_stage(pop, cfg.m, cfg.n, cfg.reps, cfg.seed);
  const TwoStageResult r2 = run_two_stage(pop, cfg.m, cfg.n, cfg.reps, cfg.seed);
  const std::string c1 = simulate_csv(r1, cfg, cfg.seed);
  const std::string c2 = simulate_csv(r2, cfg, cfg.seed);
  return {"seed_determinism_csv", c1 == c2,
          c1 == c2 ? "byte-identical" : "outputs differ"};
}

}  // namespace

std::vector<CheckResult> run_verification_suite(std::uint64_t seed) {
  Rng rng(derive_stream(seed, 0xC0FFEE));
  std::vector<CheckResult> out;
  out.push_back(check_penrose(rng));
  out.push_back(check_hat_matrix(rng));
  out.push_back(check_rep_at_truth_spectral());
  out.push_back(check_rep_at_truth_factor());
  out.push_back(check_spectral_loss_invariance(rng));
  out.push_back(check_orbit_invariance_spectral(rng));
  out.push_back(check_orbit_invariance_factor(rng));
  out.push_back(check_orbit_invariance_mog(rng));
  out.push_back(check_responsibilities(rng));
  out.push_back(check_csv_determinism(seed));
  return out;
}

}  // namespace risklab
