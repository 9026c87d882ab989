#include <doctest.h>

#include <cmath>

#include "risklab/downstream.hpp"
#include "risklab/factor_model.hpp"
#include "risklab/rng.hpp"

using namespace risklab;

TEST_CASE("min_norm_ols on pinned designs") {
  // identity design
  Matrix phi = Matrix::Identity(2, 2);
  Vector y(2);
  y << 1.0, 2.0;
  CHECK((min_norm_ols(phi, y) - y).norm() < 1e-12);

  // duplicated column: min-norm solution on the line theta1 + theta2 = 2
  Matrix dup(2, 2);
  dup << 1.0, 1.0, 1.0, 1.0;
  Vector y2(2);
  y2 << 2.0, 2.0;
  const Vector theta = min_norm_ols(dup, y2);
  CHECK(theta[0] == doctest::Approx(1.0));
  CHECK(theta[1] == doctest::Approx(1.0));
  // brute-force check along the solution line
  for (double t = -1.0; t <= 1.0; t += 0.25) {
    Vector cand(2);
    cand << 1.0 + t, 1.0 - t;
    CHECK(theta.norm() <= cand.norm() + 1e-12);
  }

  // y orthogonal to the column space
  Matrix one_col(2, 1);
  one_col << 1.0, 1.0;
  Vector y3(2);
  y3 << 1.0, -1.0;
  CHECK(min_norm_ols(one_col, y3).norm() < 1e-12);
}

TEST_CASE("fitted values equal the Euclidean projection of y") {
  Rng rng(3);
  const Matrix phi = rng.normal_matrix(30, 4);
  const Vector y = rng.normal_vector(30);
  const Vector theta = min_norm_ols(phi, y);
  const Vector fitted = phi * theta;
  const Matrix h = hat_matrix(phi);
  CHECK((fitted - h * y).cwiseAbs().maxCoeff() < 1e-10);
  // residual orthogonal to the column space
  CHECK((phi.transpose() * (y - fitted)).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("hat matrix is an orthogonal projector with trace equal to rank") {
  Rng rng(4);
  for (int trial = 0; trial < 4; ++trial) {
    Matrix phi = rng.normal_matrix(25, 5);
    if (trial % 2 == 1) phi.col(4) = 2.0 * phi.col(1);  // force rank deficiency
    const Matrix h = hat_matrix(phi);
    CHECK((h * h - h).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((h - h.transpose()).cwiseAbs().maxCoeff() < 1e-9);
    const SymMatrix sigma_n(phi.transpose() * phi / 25.0);
    CHECK(std::llround(h.trace()) == effective_dimension(sigma_n));
  }
}

TEST_CASE("effective_dimension pinned examples") {
  CHECK(effective_dimension(SymMatrix::identity(3)) == 3);
  Matrix d20 = Matrix::Zero(2, 2);
  d20(0, 0) = 2.0;
  CHECK(effective_dimension(SymMatrix(d20)) == 1);

  Rng rng(5);
  const Matrix phi = rng.normal_matrix(50, 4);
  const SymMatrix sigma_n(phi.transpose() * phi / 50.0);
  CHECK(effective_dimension(sigma_n) == 4);
  CHECK(std::abs(hat_matrix(phi).trace() - 4.0) < 1e-8);
}

TEST_CASE("population_projector_linear fixes its range and kills the complement") {
  Rng rng(6);
  const Matrix a = rng.normal_matrix(4, 4);
  const SymMatrix sigma(a * a.transpose());
  const Vector theta = rng.normal_vector(4);
  const Vector c = sigma.mat() * theta;
  CHECK((population_projector_linear(sigma, c) - theta).norm() < 1e-8);
  CHECK(population_projector_linear(sigma, Vector::Zero(4)).norm() == 0.0);
}

TEST_CASE("well-specified factor target has zero representation error") {
  // d=2, k=1, A* = e1: f* lies in the feature span at the population target
  const FactorPopulation pop =
      FactorPopulation::from_column_norms(2, Vector::Ones(1), Vector::Ones(1), 1.0);
  const Matrix w = factor_feature_matrix(pop.a_star);
  const SymMatrix sigma(w * pop.sigma_x.mat() * w.transpose());
  const Vector c = w * pop.sigma_x.mat() * pop.w_star;
  const double f2 = pop.w_star.dot(pop.sigma_x.mat() * pop.w_star);
  const Vector theta = population_projector_linear(sigma, c);
  CHECK(std::abs(f2 - c.dot(theta)) < 1e-10);
}

namespace {

PopulationMoments linear_moments(const Matrix& w, const SymMatrix& sigma_down,
                                 const Vector& w_star) {
  PopulationMoments out;
  out.sigma = SymMatrix(w * sigma_down.mat() * w.transpose());
  out.cross = w * sigma_down.mat() * w_star;
  out.f2 = w_star.dot(sigma_down.mat() * w_star);
  return out;
}

}  // namespace

TEST_CASE("risk_decompose at the truth: rep and leakage vanish") {
  Rng rng(7);
  const int d = 4, n = 60;
  const Matrix w = rng.normal_matrix(2, d);  // fitted features = truth features
  const SymMatrix sigma_down = SymMatrix::identity(d);
  Vector theta_star(2);
  theta_star << 1.0, -0.5;
  const Vector w_star = w.transpose() * theta_star;  // f* inside the span

  const Matrix x = rng.normal_matrix(n, d);
  const DesignBlock design = DesignBlock::from_features(x, x * w.transpose());
  const PopulationMoments pop = linear_moments(w, sigma_down, w_star);
  const double sigma2 = 1.7;
  const RiskBreakdown risk = risk_decompose(pop, design, x * w_star, sigma2);

  CHECK(risk.rep < 1e-10);
  CHECK(risk.leakage < 1e-10);
  CHECK(risk.well_posed);
  CHECK_FALSE(risk.degenerate_design);
  const Matrix sn_pinv = pinv(design.sigma_n()).mat();
  CHECK(risk.excess_scaled ==
        doctest::Approx(sigma2 * (pop.sigma.mat() * sn_pinv).trace()));
}

TEST_CASE("risk_decompose variance is exactly sigma2 p / n when Sigma_n equals Sigma") {
  // synthetic design whose empirical covariance equals the population one
  const int p = 3;
  const int n = p;
  Matrix w = Matrix::Identity(p, p);
  const SymMatrix sigma_down = SymMatrix::identity(p);
  const Vector w_star = Vector::Zero(p);  // trivial target
  const Matrix x = Matrix::Identity(n, p);
  // Phi^T Phi / n = I exactly when rows are sqrt(n) * orthonormal basis
  Matrix phi = Matrix::Identity(n, p) * std::sqrt(static_cast<double>(n));
  const DesignBlock design = DesignBlock::from_features(x, phi);
  const PopulationMoments pop = linear_moments(w, sigma_down, w_star);
  const double sigma2 = 0.9;
  const RiskBreakdown risk = risk_decompose(pop, design, x * w_star, sigma2);
  CHECK(risk.variance == doctest::Approx(sigma2 * p / static_cast<double>(n)));
}

TEST_CASE("rep term scales quadratically along tangent perturbations") {
  // factor model: rep(h)/h^2 converges to the squared derivative norm, which
  // is itself estimated by finite differences of the population projection
  Vector norms(2);
  norms << 2.0, 1.0;
  const FactorPopulation pop = FactorPopulation::from_column_norms(6, norms, Vector::Ones(2), 1.0);
  Rng rng(8);
  const TangentDirection v = fluctuation_sample(pop, rng);

  auto rep_at = [&](double t) {
    const Descriptor m = rank_k_truncate_psd(
        SymMatrix(pop.m_star.mat() + t * v.matrix.mat()), pop.rank());
    const Matrix a = factor_loading(m);
    const Matrix w = factor_feature_matrix(a);
    const PopulationMoments pm = linear_moments(w, pop.sigma_x, pop.w_star);
    const Vector theta = population_projector_linear(pm.sigma, pm.cross);
    return std::max(pm.f2 - pm.cross.dot(theta), 0.0);
  };

  // independent derivative estimate: finite difference of the projection
  // coefficients of f* in the population geometry
  auto proj_coeff = [&](double t) -> Vector {
    const Descriptor m = rank_k_truncate_psd(
        SymMatrix(pop.m_star.mat() + t * v.matrix.mat()), pop.rank());
    const Matrix a = factor_loading(m);
    const Matrix w = factor_feature_matrix(a);
    const PopulationMoments pm = linear_moments(w, pop.sigma_x, pop.w_star);
    // coefficient vector of Pi_M f* as a linear function of x
    return w.transpose() * population_projector_linear(pm.sigma, pm.cross);
  };
  const double fd_h = 1e-5;
  const Vector dcoeff = (proj_coeff(fd_h) - proj_coeff(-fd_h)) / (2.0 * fd_h);
  const double l_norm_sq = dcoeff.dot(pop.sigma_x.mat() * dcoeff);

  const double r1 = rep_at(1e-3) / 1e-6;
  const double r2 = rep_at(5e-4) / 2.5e-7;
  CHECK(r1 == doctest::Approx(l_norm_sq).epsilon(0.02));
  CHECK(r2 == doctest::Approx(l_norm_sq).epsilon(0.01));
}

TEST_CASE("leakage branches agree on well-posed designs and flag degenerate ones") {
  Rng rng(9);
  const int d = 5, n = 40;
  const Matrix w = rng.normal_matrix(3, d);
  const SymMatrix sigma_down = SymMatrix::identity(d);
  const Vector w_star = w.transpose() * Vector::Ones(3) + 0.3 * rng.normal_vector(d);
  const Matrix x = rng.normal_matrix(n, d);
  const DesignBlock design = DesignBlock::from_features(x, x * w.transpose());
  const PopulationMoments pop = linear_moments(w, sigma_down, w_star);
  const RiskBreakdown risk = risk_decompose(pop, design, x * w_star, 1.0);
  CHECK(risk.well_posed);

  // general-branch value computed directly
  const Vector theta_pop = population_projector_linear(pop.sigma, pop.cross);
  const Vector theta_n = min_norm_ols(design.phi(), x * w_star);
  const Vector diff = theta_n - theta_pop;
  CHECK(risk.leakage == doctest::Approx(diff.dot(pop.sigma.mat() * diff)).epsilon(1e-8));

  // population-degenerate feature: empirical rank exceeds population rank
  PopulationMoments degenerate = pop;
  const EigenSystem es = sym_eig(pop.sigma);
  const Matrix sigma_lowrank = es.eigenvectors.leftCols(2) *
                               es.eigenvalues.head(2).asDiagonal() *
                               es.eigenvectors.leftCols(2).transpose();
  degenerate.sigma = SymMatrix(sigma_lowrank);
  const RiskBreakdown risk2 = risk_decompose(degenerate, design, x * w_star, 1.0);
  CHECK(risk2.degenerate_design);
  CHECK_FALSE(risk2.well_posed);
}

TEST_CASE("risk components are nonnegative and rep ignores the design") {
  Rng rng(10);
  const int d = 4;
  const Matrix w = rng.normal_matrix(2, d);
  const SymMatrix sigma_down = SymMatrix::identity(d);
  const Vector w_star = rng.normal_vector(d);
  const PopulationMoments pop = linear_moments(w, sigma_down, w_star);
  double rep_seen = -1.0;
  for (int trial = 0; trial < 3; ++trial) {
    const Matrix x = rng.normal_matrix(30 + 10 * trial, d);
    const DesignBlock design = DesignBlock::from_features(x, x * w.transpose());
    const RiskBreakdown risk = risk_decompose(pop, design, x * w_star, 0.5);
    CHECK(risk.rep >= 0.0);
    CHECK(risk.leakage >= 0.0);
    CHECK(risk.variance >= 0.0);
    if (rep_seen >= 0.0) CHECK(risk.rep == doctest::Approx(rep_seen));
    rep_seen = risk.rep;
  }
}

TEST_CASE("orbit_invariance_check accepts identical maps and catches broken ones") {
  Rng rng(11);
  const int d = 4, n = 30;
  const Matrix a = rng.normal_matrix(2, d);
  const Matrix x = rng.normal_matrix(n, d);
  const Vector y = rng.normal_vector(n);
  const Matrix probe = probe_grid(SymMatrix::identity(d), 256, 99);

  CHECK(orbit_invariance_check(linear_features(a), linear_features(a), x, y, probe));
  // a genuinely different feature map changes the predictor
  const Matrix b = rng.normal_matrix(2, d);
  CHECK_FALSE(orbit_invariance_check(linear_features(a), linear_features(b), x, y, probe));
}

TEST_CASE("probe_grid is reproducible for a fixed seed") {
  const Matrix g1 = probe_grid(SymMatrix::identity(3), 16, 1234);
  const Matrix g2 = probe_grid(SymMatrix::identity(3), 16, 1234);
  CHECK((g1 - g2).cwiseAbs().maxCoeff() == 0.0);
}
