#pragma once

#include "risklab/downstream.hpp"
#include "risklab/limit_law.hpp"
#include "risklab/linalg.hpp"
#include "risklab/rng.hpp"

namespace risklab {

// Linear spectral contrastive population: positive pairs (x, x+) are jointly
// Gaussian mean zero with marginal covariance sigma_pre and symmetric
// cross-covariance sigma_cross; negatives are independent copies of x.
// Construction requires the joint covariance PSD, sigma_pre positive
// definite, and a positive eigengap for C = sigma_pre^{-1/2} sigma_cross
// sigma_pre^{-1/2} at level k.
struct SpectralPopulation {
  SpectralPopulation(SymMatrix sigma_pre, SymMatrix sigma_cross, int k,
                     SymMatrix sigma_down, Matrix a_star, Vector beta_star);

  // The diagonal family: sigma_pre = I_d, sigma_cross = diag(1, 1/2, ..., 1/d),
  // a_star = [diag(1, 1/sqrt(2), ..., 1/sqrt(k)) 0], beta_star = ones,
  // sigma_down = I_d.
  static SpectralPopulation concrete_diagonal(int d, int k);

  Eigen::Index dim() const { return sigma_pre.dim(); }
  // Whitened cross-covariance C.
  const SymMatrix& whitened_cross() const { return c_; }
  // lambda_k(C) - max(lambda_{k+1}(C), 0).
  double eigengap() const { return gap_; }
  // Target coefficient vector of f*(x) = <beta_star, a_star x> as a linear
  // function: w* = a_star^T beta_star.
  Vector target_coefficients() const { return a_star.transpose() * beta_star; }

  SymMatrix sigma_pre;
  SymMatrix sigma_cross;
  int k = 0;
  SymMatrix sigma_down;
  Matrix a_star;     // k x d
  Vector beta_star;  // k

 private:
  SymMatrix c_;
  double gap_ = 0.0;
};

// m triplets (x, x+, x-), one per row. The negative stream is drawn from an
// RNG stream separate from the positive-pair stream.
struct TripletBatch {
  Matrix x;
  Matrix x_plus;
  Matrix x_minus;
  Eigen::Index size() const { return x.rows(); }
};

TripletBatch sample_triplets(const SpectralPopulation& pop, long m, Rng& rng);

// Mean per-sample loss (1/m) sum_j [ -2 <A x_j, A x_j^+> + <A x_j, A x_j^->^2 ].
double spectral_loss(const Matrix& a, const TripletBatch& batch);

// Gradient of the empirical loss with respect to the k x d factor A.
Matrix spectral_loss_gradient(const Matrix& a, const TripletBatch& batch);

// Population descriptor target M*: sigma_pre^{1/2} M* sigma_pre^{1/2} equals
// the rank-k positive truncation of C. Throws EigengapError when the gap at k
// is below gap_tol.
Descriptor population_target(const SpectralPopulation& pop, double gap_tol = kGapTol);

struct FitOptions {
  double grad_tol = 1e-7;
  int max_iters = 5000;
  int restarts = 3;  // plug-in start plus perturbed copies
  long min_samples = 32;
  double perturb_scale = 0.05;
};

struct FitResult {
  Descriptor descriptor;
  Matrix a_hat;  // k x d factor actually fitted
  double loss = 0.0;
  int iterations = 0;
  bool converged = false;
};

// Gradient descent with Armijo backtracking on A over the empirical loss,
// initialized from the rank-k truncation of the empirically whitened
// cross-covariance; best-of-restarts by final loss. Throws
// NonConvergenceError when no restart reaches the gradient tolerance.
FitResult fit_descriptor(const TripletBatch& batch, int k, const FitOptions& opts, Rng& rng);

// Exact score covariance Cov(S_H1, S_H2) at m_star under joint Gaussianity:
//   4 ( C_aa(H1,H2) - C_ab(H1,H2) - C_ab(H2,H1) + C_bb(H1,H2) ),
// with P_i = M* sigma_pre H_i and Q = M* sigma_pre M*.
double score_covariance(const SymMatrix& h1, const SymMatrix& h2,
                        const SpectralPopulation& pop, const SymMatrix& m_star);

// Limiting covariance form <H1, V* H2> = C_aa(H1',H2') - C_ab(H1',H2')
// - C_ab(H2',H1') + C_bb(H1',H2') with H' = sigma_pre^{-1} H sigma_pre^{-1}.
double limit_covariance_form(const SymMatrix& h1, const SymMatrix& h2,
                             const SpectralPopulation& pop, const SymMatrix& m_star);

// Closed-form limit law for the diagonal family:
//   sigma2 * k + (2/alpha) * (sum_{i<=k} i (1 + i^{-2} + tau)) * chi2_{d-k},
// tau = sum_{j<=k} j^{-2}.
LimitLaw concrete_limit_law(int d, int k, double alpha, double sigma2);

// E[Q] = k(4d-2k-1)(1+tau) + 2(2d-1) tau + 2 (sum_i lambda_i)^2 with
// tau = sum_i lambda_i^2, the conditioning factor ||R^{-1/2} beta*||^2 of the
// diagonal model (R = diag(lambda)), and their product.
struct SuboptimalityReport {
  double expected_q = 0.0;
  double conditioning_factor = 0.0;
  double prior_bound_scale = 0.0;
};

SuboptimalityReport suboptimality_report(int d, int k, const Vector& lambdas,
                                         const Vector& beta_star);

// Downstream feature coefficient matrix W = s(M) for a fitted descriptor,
// anchored at the descriptor's own leading eigenvectors.
Matrix spectral_feature_matrix(const Descriptor& m);

// Population moments of phi(x) = W x against f*(x) = <w*, x> under N(0, sigma_down).
PopulationMoments linear_population_moments(const Matrix& w, const SymMatrix& sigma_down,
                                            const Vector& w_star);

}  // namespace risklab
