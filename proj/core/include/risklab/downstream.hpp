#pragma once

#include <functional>

#include "risklab/linalg.hpp"
#include "risklab/rng.hpp"

namespace risklab {

// Deterministic map from a covariate to a feature vector of fixed dimension.
struct FeatureMap {
  int dim = 0;
  std::function<Vector(const Vector&)> eval;
};

// Feature map that is linear in the covariate: phi(x) = coeff * x.
FeatureMap linear_features(const Matrix& coeff);

// Immutable design: covariates, their features, and the empirical covariance
// Sigma_n = Phi^T Phi / n.
class DesignBlock {
 public:
  DesignBlock(Matrix covariates, const FeatureMap& features);
  static DesignBlock from_features(Matrix covariates, Matrix phi);

  Eigen::Index n() const { return phi_.rows(); }
  Eigen::Index feature_dim() const { return phi_.cols(); }
  const Matrix& covariates() const { return x_; }
  const Matrix& phi() const { return phi_; }
  const SymMatrix& sigma_n() const { return sigma_n_; }

 private:
  DesignBlock() = default;
  Matrix x_;
  Matrix phi_;
  SymMatrix sigma_n_;
};

// Minimum-Euclidean-norm least squares: theta = Sigma_n^+ (Phi^T y / n).
Vector min_norm_ols(const Matrix& phi, const Vector& y, double rank_tol = kRankTol);

// Hat matrix H = Phi (Phi^T Phi)^+ Phi^T.
Matrix hat_matrix(const Matrix& phi, double rank_tol = kRankTol);

// rank(Sigma) by eigenvalue thresholding; equals tr(H) for the same design.
int effective_dimension(const SymMatrix& sigma, double rank_tol = kRankTol);

// Coefficients of the population L2 projection: Sigma^+ c_g.
Vector population_projector_linear(const SymMatrix& sigma, const Vector& c_g,
                                   double rank_tol = kRankTol);

// Population second moments of the fitted features against the target:
//   sigma = E[phi phi^T], cross = E[f*(X) phi(X)], f2 = E[f*(X)^2].
struct PopulationMoments {
  SymMatrix sigma;
  Vector cross;
  double f2 = 0.0;
};

struct RiskBreakdown {
  double sigma2 = 0.0;
  double rep = 0.0;
  double leakage = 0.0;
  double variance = 0.0;
  double excess_scaled = 0.0;
  bool well_posed = true;        // which Leakage branch ran
  bool degenerate_design = false;  // rank(Sigma_n) exceeded rank(Sigma)
};

// Exact conditional risk decomposition for the min-norm OLS predictor:
//   rep      = ||(I - Pi) f*||^2 = f2 - c^T Sigma^+ c
//   leakage  = ||Pi_n f* - Pi f*||^2 (via ||Pi_n e||^2 on the well-posed branch)
//   variance = (sigma2 / n) tr(Sigma Sigma_n^+)
//   excess_scaled = n (rep + leakage + variance).
// fstar_at_design holds f*(x_i) for the design points. No labels are used:
// the conditional risk averages label noise analytically.
RiskBreakdown risk_decompose(const PopulationMoments& pop, const DesignBlock& design,
                             const Vector& fstar_at_design, double sigma2,
                             double rank_tol = kRankTol);

// Fits min-norm OLS with both feature maps on the same data and compares the
// two predictors on the probe grid; true when they agree pointwise within tol.
bool orbit_invariance_check(const FeatureMap& features_a, const FeatureMap& features_b,
                            const Matrix& covariates, const Vector& y, const Matrix& probe,
                            double tol = 1e-9);

// Probe grid of `count` covariates drawn once from N(0, Sigma) under a fixed seed.
Matrix probe_grid(const SymMatrix& sigma, int count, std::uint64_t seed);

}  // namespace risklab
