#pragma once

#include "risklab/downstream.hpp"
#include "risklab/limit_law.hpp"
#include "risklab/linalg.hpp"
#include "risklab/rng.hpp"

namespace risklab {

// Gaussian factor model x = A* h + mu, h ~ N(0, I_k), mu ~ N(0, I_d), with
// downstream labels y = beta*^T h + nu, nu ~ N(0, sigma_nu^2). Derived:
//   m_star   = A* A*^T            sigma_x = I_d + m_star
//   sigma2   = sigma_nu^2 + beta*^T (I_k + A*^T A*)^{-1} beta*
//   w_star   = sigma_x^{-1} A* beta*     (f*(x) = <w_star, x>)
//   u1, sigma_star: top-k eigenpairs of m_star.
struct FactorPopulation {
  FactorPopulation(Matrix a_star, Vector beta_star, double sigma_nu);

  // Canonical loading with orthogonal columns of the given norms placed on
  // the first k coordinate axes.
  static FactorPopulation from_column_norms(int d, const Vector& norms, Vector beta_star,
                                            double sigma_nu);

  int dim() const { return static_cast<int>(a_star.rows()); }
  int rank() const { return static_cast<int>(a_star.cols()); }

  Matrix a_star;      // d x k, full column rank
  Vector beta_star;   // k
  double sigma_nu = 0.0;

  SymMatrix m_star;
  SymMatrix sigma_x;
  Matrix u1;            // d x k eigenbasis of range(m_star)
  Vector sigma_star;    // top-k eigenvalues of m_star, descending
  double sigma2 = 0.0;  // downstream conditional noise variance
  Vector w_star;        // d
};

// Covariates x ~ N(0, sigma_x); n rows.
Matrix sample_factor(const FactorPopulation& pop, long n, Rng& rng);

// Covariates plus labels y = f*(x) + eps, eps ~ N(0, sigma2).
struct LabeledSample {
  Matrix x;
  Vector y;
};
LabeledSample sample_factor_labeled(const FactorPopulation& pop, long n, Rng& rng);

// PPCA maximum likelihood descriptor from a sample covariance:
//   M_hat = U_k diag((lambda_i - 1)_+) U_k^T.
Descriptor ppca_mle(const SymMatrix& s_m, int k);

// psi(x, A) = A^T (I_d + A A^T)^{-1} x, computed as (I_k + A^T A)^{-1} A^T x.
Vector factor_features(const Vector& x, const Matrix& a);

// Coefficient matrix W with psi(x, A) = W x.
Matrix factor_feature_matrix(const Matrix& a);

// Loading factor s with s s^T = M_hat (the d x k convention of this model).
Matrix factor_loading(const Descriptor& m_hat);

// Closed-form limit law:
//   sigma2 * k + (1/alpha) ||(I_k + Sigma*)^{-1/2} U1^T A* beta*||^2 chi2_{d-k}.
LimitLaw factor_limit_law(const FactorPopulation& pop, double alpha);

// One draw of the asymptotic pre-training fluctuation
//   Z = P* G + G P* - P* G P*,  G = sigma_x^{1/2} (W + W^T) sigma_x^{1/2} / sqrt(2),
// with W an i.i.d. standard Gaussian matrix.
TangentDirection fluctuation_sample(const FactorPopulation& pop, Rng& rng);

// ||L(Z)||^2 evaluated through the closed-form pipeline
// ||(I - P*) Z sigma_x^{-1} A* beta*||^2.
double fluctuation_interaction_norm(const FactorPopulation& pop, const TangentDirection& z);

}  // namespace risklab
