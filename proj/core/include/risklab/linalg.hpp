#pragma once

#include <Eigen/Dense>

#include "risklab/errors.hpp"

namespace risklab {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline constexpr double kRankTol = 1e-10;  // relative to largest |eigenvalue|
inline constexpr double kGapTol = 1e-8;

// Dense symmetric matrix with storage-enforced exact symmetry.
class SymMatrix {
 public:
  SymMatrix() = default;
  // Symmetrizes (a+a^T)/2; rejects non-finite entries and inputs that are
  // not symmetric within 1e-8 * (1 + max|entry|).
  explicit SymMatrix(const Matrix& a);

  static SymMatrix zero(Eigen::Index dim) { return SymMatrix(Matrix::Zero(dim, dim)); }
  static SymMatrix identity(Eigen::Index dim) { return SymMatrix(Matrix::Identity(dim, dim)); }

  Eigen::Index dim() const { return m_.rows(); }
  const Matrix& mat() const { return m_; }
  double operator()(Eigen::Index i, Eigen::Index j) const { return m_(i, j); }

 private:
  Matrix m_;
};

// Eigendecomposition of a symmetric matrix, eigenvalues descending,
// eigenvectors orthonormal columns with a deterministic sign gauge
// (largest-magnitude entry positive, ties broken by lowest index).
struct EigenSystem {
  Vector eigenvalues;
  Matrix eigenvectors;
};

EigenSystem sym_eig(const SymMatrix& s);

// Rank by eigenvalue thresholding at rank_tol * max|eigenvalue|.
int sym_rank(const SymMatrix& s, double rank_tol = kRankTol);

// Moore-Penrose pseudoinverse of a symmetric matrix. Eigenvalues with
// |lambda| <= rank_tol * max|lambda| are treated as zero.
SymMatrix pinv(const SymMatrix& s, double rank_tol = kRankTol);

// Derivative of A -> A^+ at a PSD matrix of stable rank r in direction H:
//   D(A^+)[H] = -A^+ H A^+ + A^{+2} H (I - A A^+) + (I - A^+ A) H A^{+2}.
// Throws SingularityError when the smallest retained eigenvalue sits below
// stable_tol * max(1, lambda_max) (outside the stable-rank region).
SymMatrix pinv_derivative(const SymMatrix& a, const SymMatrix& h,
                          double rank_tol = kRankTol, double stable_tol = kGapTol);

// Rank-k PSD descriptor: symmetric matrix plus its retained rank.
struct Descriptor {
  SymMatrix matrix;
  int rank = 0;
};

// Keeps the k largest eigenvalues clipped below at zero. The returned rank is
// the number of strictly positive retained eigenvalues.
Descriptor rank_k_truncate_psd(const SymMatrix& s, int k, double rank_tol = kRankTol);

// Ambient symmetric tangent direction at a rank-k basepoint; in the
// basepoint's eigenbasis the lower-right (d-k) x (d-k) block vanishes.
struct TangentDirection {
  SymMatrix matrix;
  int basepoint_rank = 0;
};

// Projects an ambient symmetric direction onto the tangent block structure of
// the descriptor (zeroes the lower-right block in the basepoint eigenbasis).
TangentDirection tangent_project(const Descriptor& base, const SymMatrix& ambient);

// Frechet derivative of the rank-k spectral projector of B* in direction Bdot:
//   DPi(B*)[Bdot] = U2 (G ./ Delta) U1^T + transpose,
// with G = U2^T Bdot U1 and Delta_ai = lambda_i - lambda_{k+a}.
// Throws EigengapError when lambda_k - lambda_{k+1} < gap_tol * (1 + max|lambda|).
SymMatrix spectral_projector_derivative(const SymMatrix& bstar, const SymMatrix& bdot,
                                        int k, double gap_tol = kGapTol);

// Local section s(M) = Lambda(M)^{1/2} U(M)^T with U(M) = P(M) U* B(M)^{-1/2},
// B(M) = U*^T P(M) U*, where P(M) projects onto range(M) and U* is the d x k
// orthonormal anchor. Satisfies s(M)^T s(M) = M and is continuous in M near
// the anchor descriptor. Throws OutOfChartError when B(M) is ill-conditioned.
Matrix local_section(const Descriptor& m, const Matrix& anchor, double cond_tol = 1e8);

// E[(U^T A V)(U^T B V)] for jointly Gaussian mean-zero (U,V):
//   moment    = Tr(A S_uv) Tr(B S_uv) + Tr(A S_u B S_v) + Tr(A S_uv B^T S_uv^T)
//   covariance drops the first term.
// Exact for symmetric A, B with a symmetric cross-covariance (the
// exchangeable-pair setting in which it is used).
// Throws ModelError when the joint covariance [[S_u,S_uv],[S_uv^T,S_v]] is not PSD.
struct MomentResult {
  double moment = 0.0;
  double covariance = 0.0;
};

MomentResult gaussian_bilinear_moment(const Matrix& a, const Matrix& b,
                                      const SymMatrix& sigma_u, const SymMatrix& sigma_v,
                                      const Matrix& sigma_uv);

// E[(U^T A U)(U^T B U)] for U ~ N(0, Sigma):
//   moment = Tr(A S) Tr(B S) + Tr(A S B S) + Tr(A S B^T S).
MomentResult gaussian_quadratic_moment(const Matrix& a, const Matrix& b, const SymMatrix& sigma);

// PSD square root (clips eigenvalues below at 0).
SymMatrix sym_sqrt(const SymMatrix& s);
// Inverse square root; requires positive definiteness.
SymMatrix sym_inv_sqrt(const SymMatrix& s, double rank_tol = kRankTol);
// Orthonormal basis (d x k) of the top-k eigenspace.
Matrix top_eigenspace(const SymMatrix& s, int k);

}  // namespace risklab
