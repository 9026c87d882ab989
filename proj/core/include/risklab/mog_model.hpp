#pragma once

#include "risklab/downstream.hpp"
#include "risklab/linalg.hpp"
#include "risklab/rng.hpp"

namespace risklab {

// Equal-weight spherical Gaussian mixture with K >= 2 pairwise-distinct
// centers (rows of `centers`).
class MixtureParams {
 public:
  explicit MixtureParams(Matrix centers);

  // Centers separation * e_i on the first K coordinate axes.
  static MixtureParams axis_centers(int count, int dim, double separation);

  int count() const { return static_cast<int>(centers_.rows()); }
  int dim() const { return static_cast<int>(centers_.cols()); }
  const Matrix& centers() const { return centers_; }
  Vector mean_center() const;
  // Centered second-moment matrix S(U) = sum_i (u_i - ubar)(u_i - ubar)^T.
  SymMatrix centered_second_moment() const;

 private:
  Matrix centers_;
};

// Projector onto the leading r* eigenspace of S(U) plus a fixed orthonormal
// coordinate basis of that eigenspace (the reference gauge).
struct GatingState {
  int r_star = 0;
  SymMatrix projector;
  Matrix basis;  // d x r_star
};

// r* inferred from the reference parameters by eigenvalue thresholding;
// throws EigengapError when the gap below r* is too small.
GatingState make_gating(const MixtureParams& reference, double rank_tol = 1e-8,
                        double gap_tol = kGapTol);

Matrix sample_mixture(const MixtureParams& params, long n, Rng& rng);

// Responsibilities of the full (unprojected) mixture at x.
Vector responsibilities(const MixtureParams& params, const Vector& x);

// Gradient blocks (K x d, row i = d/du_i) and block Hessian (Kd x Kd) of the
// negative log-density at x.
struct ScoreHessian {
  Matrix gradient;
  Matrix hessian;
};
ScoreHessian mixture_score_hessian(const MixtureParams& params, const Vector& x);

struct EmOptions {
  int max_iters = 500;
  double tol = 1e-10;  // relative log-likelihood improvement
  int restarts = 4;    // k-means++-style initializations
  long min_samples = 16;
};

struct FitCentersResult {
  MixtureParams params;
  double log_likelihood = 0.0;
  int iterations = 0;
  bool gauge_warning = false;  // permutation alignment was ambiguous
};

// EM for the centers (weights and covariance fixed), best restart by final
// log-likelihood, output permutation-aligned to `reference` by
// minimum-total-squared-distance assignment.
FitCentersResult fit_centers(const Matrix& data, int count, const EmOptions& opts,
                             const MixtureParams& reference, Rng& rng);

// Subspace-aware gating features: blocks
//   ( pi_i(x;U) * coords(P_U (x - u_i)), pi_i(x;U) )  for i in [K],
// where pi uses the projected mixture and coords expresses the projected
// vector in the reference gauge basis. Dimension K (r* + 1).
Vector gating_features(const Vector& x, const MixtureParams& params, const GatingState& gauge);
Matrix gating_features_batch(const Matrix& x, const MixtureParams& params,
                             const GatingState& gauge);

// Responsibilities of the projected mixture.
Vector gating_responsibilities(const Vector& x, const MixtureParams& params,
                               const GatingState& gauge);

// Monte-Carlo Fisher information at the centers (Kd x Kd): the average of
// score outer products over n_samples mixture draws. Requires n_samples >= 1e4.
SymMatrix fisher_information(const MixtureParams& params, long n_samples, Rng& rng);

// Per-block downstream signal (theta_i in R^{r*}, b_i in R), concatenated.
struct SignalSpec {
  Vector theta;  // K (r* + 1)

  // Block i proportional to (1/(i+1)) * ones(r*+1), full vector normalized to
  // unit Euclidean norm.
  static SignalSpec block_preset(int count, int r_star);
};

struct InteractionConfig {
  long n_fisher = 100000;
  long n_proj = 1000000;
  long n_eval = 1000000;
  double h_rel = 1e-3;  // step = h_rel * (1 + max_i ||u_i||)
  std::uint64_t seed = 1;
  int threads = 0;  // 0 = resolve from environment
};

struct InteractionResult {
  double value = 0.0;
  double std_error = 0.0;  // eval-stage MC error plus a half-sample
                           // projector-noise estimate, combined in quadrature
  int r_star = 0;
};

// Monte-Carlo estimate of the expected squared interaction E||L(Z)||^2:
// for every center coordinate direction e_a, the derivative of the population
// projection of f* is estimated by central differences with common random
// numbers across +-h (n_proj samples per projector); the quadratic form is
// then assembled with V = pinv(Fisher) and the Gram matrix of the estimated
// derivatives over n_eval fresh samples.
InteractionResult interaction_term_mc(const MixtureParams& params, const SignalSpec& signal,
                                      const InteractionConfig& cfg);

}  // namespace risklab
