#include "risklab/linalg.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <limits>

namespace risklab {

namespace {

void require_finite(const Matrix& a, const char* what) {
  if (!a.allFinite()) throw InputError(std::string(what) + ": non-finite entries");
}

void require_square_same(const Matrix& a, const Matrix& b, const char* what) {
  if (a.rows() != a.cols() || b.rows() != b.cols() || a.rows() != b.rows())
    throw InputError(std::string(what) + ": dimension mismatch");
}

}  // namespace

SymMatrix::SymMatrix(const Matrix& a) {
  if (a.rows() != a.cols()) throw InputError("SymMatrix: matrix must be square");
  require_finite(a, "SymMatrix");
  const double scale = 1.0 + a.cwiseAbs().maxCoeff();
  const double asym = (a - a.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-8 * scale) throw InputError("SymMatrix: input is not symmetric");
  m_ = 0.5 * (a + a.transpose());
  // exact symmetry, independent of summation order above
  for (Eigen::Index i = 0; i < m_.rows(); ++i)
    for (Eigen::Index j = 0; j < i; ++j) m_(i, j) = m_(j, i);
}

EigenSystem sym_eig(const SymMatrix& s) {
  Eigen::SelfAdjointEigenSolver<Matrix> solver(s.mat());
  if (solver.info() != Eigen::Success) throw NumericalError("sym_eig: eigensolver failed");
  const Eigen::Index d = s.dim();
  EigenSystem out;
  out.eigenvalues.resize(d);
  out.eigenvectors.resize(d, d);
  // Eigen returns ascending order; reverse to descending.
  for (Eigen::Index i = 0; i < d; ++i) {
    out.eigenvalues[i] = solver.eigenvalues()[d - 1 - i];
    out.eigenvectors.col(i) = solver.eigenvectors().col(d - 1 - i);
  }
  // Sign gauge: largest-magnitude entry positive, ties by lowest index.
  for (Eigen::Index j = 0; j < d; ++j) {
    Eigen::Index arg = 0;
    double best = -1.0;
    for (Eigen::Index i = 0; i < d; ++i) {
      const double v = std::abs(out.eigenvectors(i, j));
      if (v > best) {
        best = v;
        arg = i;
      }
    }
    if (out.eigenvectors(arg, j) < 0.0) out.eigenvectors.col(j) = -out.eigenvectors.col(j);
  }
  return out;
}

int sym_rank(const SymMatrix& s, double rank_tol) {
  const EigenSystem es = sym_eig(s);
  const double scale = es.eigenvalues.cwiseAbs().maxCoeff();
  if (scale == 0.0) return 0;
  int r = 0;
  for (Eigen::Index i = 0; i < es.eigenvalues.size(); ++i)
    if (std::abs(es.eigenvalues[i]) > rank_tol * scale) ++r;
  return r;
}

SymMatrix pinv(const SymMatrix& s, double rank_tol) {
  const EigenSystem es = sym_eig(s);
  const double scale = es.eigenvalues.cwiseAbs().maxCoeff();
  const Eigen::Index d = s.dim();
  Vector inv = Vector::Zero(d);
  if (scale > 0.0) {
    for (Eigen::Index i = 0; i < d; ++i)
      if (std::abs(es.eigenvalues[i]) > rank_tol * scale) inv[i] = 1.0 / es.eigenvalues[i];
  }
  return SymMatrix(es.eigenvectors * inv.asDiagonal() * es.eigenvectors.transpose());
}

SymMatrix pinv_derivative(const SymMatrix& a, const SymMatrix& h,
                          double rank_tol, double stable_tol) {
  require_square_same(a.mat(), h.mat(), "pinv_derivative");
  const EigenSystem es = sym_eig(a);
  const double scale = es.eigenvalues.cwiseAbs().maxCoeff();
  int r = 0;
  if (scale > 0.0)
    for (Eigen::Index i = 0; i < es.eigenvalues.size(); ++i)
      if (es.eigenvalues[i] > rank_tol * scale) ++r;
  if (r > 0 && es.eigenvalues[r - 1] < stable_tol * std::max(1.0, scale))
    throw SingularityError("pinv_derivative: smallest retained eigenvalue below stable-rank tolerance");
  const Matrix ap = pinv(a, rank_tol).mat();
  const Eigen::Index d = a.dim();
  const Matrix eye = Matrix::Identity(d, d);
  const Matrix ap2 = ap * ap;
  Matrix out = -ap * h.mat() * ap
             + ap2 * h.mat() * (eye - a.mat() * ap)
             + (eye - ap * a.mat()) * h.mat() * ap2;
  return SymMatrix(0.5 * (out + out.transpose()));
}

Descriptor rank_k_truncate_psd(const SymMatrix& s, int k, double rank_tol) {
  if (k < 0 || k > s.dim()) throw InputError("rank_k_truncate_psd: k must be in [0, d]");
  const EigenSystem es = sym_eig(s);
  const double scale = es.eigenvalues.cwiseAbs().maxCoeff();
  const Eigen::Index d = s.dim();
  Vector kept = Vector::Zero(d);
  int rank = 0;
  for (int i = 0; i < k; ++i) {
    const double v = std::max(es.eigenvalues[i], 0.0);
    kept[i] = v;
    if (v > rank_tol * std::max(scale, 0.0)) ++rank;
  }
  Descriptor out;
  // Inputs already equal to their truncation up to roundoff are returned
  // unchanged, which makes the operation idempotent bit-for-bit.
  const double eps_tol = 64.0 * std::numeric_limits<double>::epsilon() * std::max(scale, 1.0);
  bool already = true;
  for (int i = 0; i < k; ++i)
    if (es.eigenvalues[i] < -eps_tol) already = false;
  for (Eigen::Index i = k; i < d; ++i)
    if (std::abs(es.eigenvalues[i]) > eps_tol) already = false;
  if (already) {
    out.matrix = s;
    out.rank = rank;
    return out;
  }
  out.matrix = SymMatrix(es.eigenvectors * kept.asDiagonal() * es.eigenvectors.transpose());
  out.rank = rank;
  return out;
}

TangentDirection tangent_project(const Descriptor& base, const SymMatrix& ambient) {
  require_square_same(base.matrix.mat(), ambient.mat(), "tangent_project");
  const int k = base.rank;
  const EigenSystem es = sym_eig(base.matrix);
  Matrix t = es.eigenvectors.transpose() * ambient.mat() * es.eigenvectors;
  const Eigen::Index d = ambient.dim();
  t.block(k, k, d - k, d - k).setZero();
  TangentDirection out;
  out.matrix = SymMatrix(es.eigenvectors * 0.5 * (t + t.transpose()) * es.eigenvectors.transpose());
  out.basepoint_rank = k;
  return out;
}

SymMatrix spectral_projector_derivative(const SymMatrix& bstar, const SymMatrix& bdot,
                                        int k, double gap_tol) {
  require_square_same(bstar.mat(), bdot.mat(), "spectral_projector_derivative");
  const Eigen::Index d = bstar.dim();
  if (k < 1 || k >= d) throw InputError("spectral_projector_derivative: need 1 <= k < d");
  const EigenSystem es = sym_eig(bstar);
  const double scale = es.eigenvalues.cwiseAbs().maxCoeff();
  const double gap = es.eigenvalues[k - 1] - es.eigenvalues[k];
  if (gap < gap_tol * (1.0 + scale))
    throw EigengapError("spectral_projector_derivative: eigengap at k below tolerance");
  const Matrix u1 = es.eigenvectors.leftCols(k);
  const Matrix u2 = es.eigenvectors.rightCols(d - k);
  const Matrix g = u2.transpose() * bdot.mat() * u1;  // (d-k) x k
  Matrix weighted(d - k, k);
  for (Eigen::Index a = 0; a < d - k; ++a)
    for (Eigen::Index i = 0; i < k; ++i)
      weighted(a, i) = g(a, i) / (es.eigenvalues[i] - es.eigenvalues[k + a]);
  const Matrix cross = u2 * weighted * u1.transpose();
  return SymMatrix(cross + cross.transpose());
}

Matrix local_section(const Descriptor& m, const Matrix& anchor, double cond_tol) {
  const Eigen::Index d = m.matrix.dim();
  const int k = m.rank;
  if (anchor.rows() != d || anchor.cols() != k)
    throw InputError("local_section: anchor must be d x rank");
  // P(M): orthogonal projector onto range(M).
  const EigenSystem es = sym_eig(m.matrix);
  const Matrix range = es.eigenvectors.leftCols(k);
  const Matrix p = range * range.transpose();
  const SymMatrix overlap(anchor.transpose() * p * anchor);  // B(M), k x k
  const EigenSystem bes = sym_eig(overlap);
  if (bes.eigenvalues[k - 1] <= 0.0 || bes.eigenvalues[0] / bes.eigenvalues[k - 1] > cond_tol)
    throw OutOfChartError("local_section: anchor overlap matrix B(M) is ill-conditioned");
  Vector binv_half = bes.eigenvalues.cwiseSqrt().cwiseInverse();
  const Matrix b_inv_sqrt = bes.eigenvectors * binv_half.asDiagonal() * bes.eigenvectors.transpose();
  const Matrix u = p * anchor * b_inv_sqrt;                       // d x k, orthonormal
  const SymMatrix lambda(u.transpose() * m.matrix.mat() * u);     // k x k PD on the chart
  const EigenSystem les = sym_eig(lambda);
  if (les.eigenvalues[k - 1] <= 0.0)
    throw OutOfChartError("local_section: Lambda(M) is not positive definite");
  const Matrix lambda_half =
      les.eigenvectors * les.eigenvalues.cwiseSqrt().asDiagonal() * les.eigenvectors.transpose();
  return lambda_half * u.transpose();  // k x d
}

MomentResult gaussian_bilinear_moment(const Matrix& a, const Matrix& b,
                                      const SymMatrix& sigma_u, const SymMatrix& sigma_v,
                                      const Matrix& sigma_uv) {
  const Eigen::Index d = sigma_u.dim();
  if (sigma_v.dim() != d || sigma_uv.rows() != d || sigma_uv.cols() != d ||
      a.rows() != d || a.cols() != d || b.rows() != d || b.cols() != d)
    throw InputError("gaussian_bilinear_moment: dimension mismatch");
  Matrix joint(2 * d, 2 * d);
  joint.topLeftCorner(d, d) = sigma_u.mat();
  joint.topRightCorner(d, d) = sigma_uv;
  joint.bottomLeftCorner(d, d) = sigma_uv.transpose();
  joint.bottomRightCorner(d, d) = sigma_v.mat();
  Eigen::SelfAdjointEigenSolver<Matrix> solver(0.5 * (joint + joint.transpose()));
  const double scale = solver.eigenvalues().cwiseAbs().maxCoeff();
  if (solver.eigenvalues().minCoeff() < -1e-8 * std::max(1.0, scale))
    throw ModelError("gaussian_bilinear_moment: joint covariance is not PSD");
  const double t1 = (a * sigma_uv).trace() * (b * sigma_uv).trace();
  const double t2 = (a * sigma_u.mat() * b * sigma_v.mat()).trace();
  const double t3 = (a * sigma_uv * b.transpose() * sigma_uv.transpose()).trace();
  return {t1 + t2 + t3, t2 + t3};
}

MomentResult gaussian_quadratic_moment(const Matrix& a, const Matrix& b, const SymMatrix& sigma) {
  const Eigen::Index d = sigma.dim();
  if (a.rows() != d || a.cols() != d || b.rows() != d || b.cols() != d)
    throw InputError("gaussian_quadratic_moment: dimension mismatch");
  const EigenSystem es = sym_eig(sigma);
  const double scale = es.eigenvalues.cwiseAbs().maxCoeff();
  if (es.eigenvalues.minCoeff() < -1e-8 * std::max(1.0, scale))
    throw ModelError("gaussian_quadratic_moment: covariance is not PSD");
  const double t1 = (a * sigma.mat()).trace() * (b * sigma.mat()).trace();
  const double t2 = (a * sigma.mat() * b * sigma.mat()).trace();
  const double t3 = (a * sigma.mat() * b.transpose() * sigma.mat()).trace();
  return {t1 + t2 + t3, t2 + t3};
}

SymMatrix sym_sqrt(const SymMatrix& s) {
  const EigenSystem es = sym_eig(s);
  Vector root = es.eigenvalues.cwiseMax(0.0).cwiseSqrt();
  return SymMatrix(es.eigenvectors * root.asDiagonal() * es.eigenvectors.transpose());
}

SymMatrix sym_inv_sqrt(const SymMatrix& s, double rank_tol) {
  const EigenSystem es = sym_eig(s);
  const double scale = es.eigenvalues.cwiseAbs().maxCoeff();
  if (es.eigenvalues.minCoeff() <= rank_tol * std::max(1.0, scale))
    throw SingularityError("sym_inv_sqrt: matrix is not positive definite");
  Vector root = es.eigenvalues.cwiseSqrt().cwiseInverse();
  return SymMatrix(es.eigenvectors * root.asDiagonal() * es.eigenvectors.transpose());
}

Matrix top_eigenspace(const SymMatrix& s, int k) {
  if (k < 1 || k > s.dim()) throw InputError("top_eigenspace: k must be in [1, d]");
  return sym_eig(s).eigenvectors.leftCols(k);
}

}  // namespace risklab
