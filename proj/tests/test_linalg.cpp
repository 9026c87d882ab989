#include <doctest.h>

#include <cmath>

#include "risklab/linalg.hpp"
#include "risklab/rng.hpp"

using namespace risklab;

namespace {

SymMatrix diag2(double a, double b) {
  Matrix m = Matrix::Zero(2, 2);
  m(0, 0) = a;
  m(1, 1) = b;
  return SymMatrix(m);
}

SymMatrix diag3(double a, double b, double c) {
  Matrix m = Matrix::Zero(3, 3);
  m(0, 0) = a;
  m(1, 1) = b;
  m(2, 2) = c;
  return SymMatrix(m);
}

SymMatrix random_sym(int d, Rng& rng) {
  const Matrix g = rng.normal_matrix(d, d);
  return SymMatrix(0.5 * (g + g.transpose()));
}

SymMatrix random_psd(int d, int rank, Rng& rng) {
  if (rank == 0) return SymMatrix::zero(d);
  const Matrix a = rng.normal_matrix(d, rank);
  return SymMatrix(a * a.transpose());
}

// Tangent-compatible direction at a PSD basepoint: zero lower-right block in
// the basepoint eigenbasis, so A + tH keeps rank r for small t.
SymMatrix rank_stable_direction(const SymMatrix& a, int rank, Rng& rng) {
  const EigenSystem es = sym_eig(a);
  const int d = static_cast<int>(a.dim());
  const Matrix raw = rng.normal_matrix(d, d);
  Matrix blocks = 0.5 * (raw + raw.transpose());
  blocks.bottomRightCorner(d - rank, d - rank).setZero();
  return SymMatrix(es.eigenvectors * blocks * es.eigenvectors.transpose());
}

double rel_frob(const Matrix& a, const Matrix& b) {
  return (a - b).norm() / std::max(b.norm(), 1e-300);
}

}  // namespace

TEST_CASE("SymMatrix enforces symmetry and rejects bad input") {
  Matrix asym(2, 2);
  asym << 1.0, 2.0, 0.0, 1.0;
  CHECK_THROWS_AS(SymMatrix{asym}, InputError);
  Matrix nan_mat = Matrix::Zero(2, 2);
  nan_mat(0, 1) = nan_mat(1, 0) = std::nan("");
  CHECK_THROWS_AS(SymMatrix{nan_mat}, InputError);
  Matrix near(2, 2);
  near << 1.0, 2.0, 2.0 + 1e-12, 1.0;
  const SymMatrix s(near);
  CHECK(s(0, 1) == s(1, 0));
}

TEST_CASE("sym_eig on diagonal and identity inputs") {
  const EigenSystem es = sym_eig(diag2(3.0, 1.0));
  CHECK(es.eigenvalues[0] == doctest::Approx(3.0));
  CHECK(es.eigenvalues[1] == doctest::Approx(1.0));
  CHECK((es.eigenvectors - Matrix::Identity(2, 2)).norm() < 1e-12);

  const EigenSystem id = sym_eig(SymMatrix::identity(4));
  for (int i = 0; i < 4; ++i) CHECK(id.eigenvalues[i] == doctest::Approx(1.0));
}

TEST_CASE("sym_eig reconstruction, orthonormality and determinism") {
  Rng rng(11);
  for (int trial = 0; trial < 5; ++trial) {
    const SymMatrix s = random_sym(6, rng);
    const EigenSystem es = sym_eig(s);
    const Matrix rec =
        es.eigenvectors * es.eigenvalues.asDiagonal() * es.eigenvectors.transpose();
    CHECK(rel_frob(rec, s.mat()) < 1e-10);
    CHECK((es.eigenvectors.transpose() * es.eigenvectors - Matrix::Identity(6, 6))
              .cwiseAbs()
              .maxCoeff() < 1e-10);
    for (int i = 0; i + 1 < 6; ++i) CHECK(es.eigenvalues[i] >= es.eigenvalues[i + 1]);

    const EigenSystem again = sym_eig(s);
    CHECK((es.eigenvectors - again.eigenvectors).cwiseAbs().maxCoeff() == 0.0);
    // sign gauge: largest-magnitude entry of each column is positive
    for (int j = 0; j < 6; ++j) {
      Eigen::Index arg;
      es.eigenvectors.col(j).cwiseAbs().maxCoeff(&arg);
      CHECK(es.eigenvectors(arg, j) > 0.0);
    }
  }
  CHECK_THROWS_AS(sym_eig(SymMatrix(Matrix::Constant(2, 2, std::nan("")))), InputError);
}

TEST_CASE("pinv on pinned examples") {
  CHECK(rel_frob(pinv(diag2(2.0, 0.0)).mat(), diag2(0.5, 0.0).mat()) < 1e-14);
  CHECK(rel_frob(pinv(SymMatrix::identity(3)).mat(), Matrix::Identity(3, 3)) < 1e-14);

  Vector u(2);
  u << 2.0, 0.0;
  const SymMatrix s(u * u.transpose());
  const Matrix expected = u * u.transpose() / 16.0;
  CHECK(rel_frob(pinv(s).mat(), expected) < 1e-12);

  const SymMatrix zero = SymMatrix::zero(3);
  CHECK(pinv(zero).mat().norm() == 0.0);
}

TEST_CASE("pinv satisfies the four Penrose identities on every rank") {
  Rng rng(22);
  const int d = 5;
  for (int rank = 0; rank <= d; ++rank) {
    const SymMatrix s = random_psd(d, rank, rng);
    const Matrix sp = pinv(s).mat();
    const Matrix& m = s.mat();
    CHECK((m * sp * m - m).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((sp * m * sp - sp).cwiseAbs().maxCoeff() < 1e-9);
    CHECK(((m * sp).transpose() - m * sp).cwiseAbs().maxCoeff() < 1e-9);
    CHECK(((sp * m).transpose() - sp * m).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("pinv_derivative pinned examples") {
  Rng rng(5);
  const SymMatrix h = random_sym(2, rng);
  const SymMatrix d_id = pinv_derivative(SymMatrix::identity(2), h);
  CHECK(rel_frob(d_id.mat(), -h.mat()) < 1e-12);

  const SymMatrix d_rank1 = pinv_derivative(diag2(2.0, 0.0), diag2(1.0, 0.0));
  CHECK(rel_frob(d_rank1.mat(), diag2(-0.25, 0.0).mat()) < 1e-12);
}

TEST_CASE("pinv_derivative matches central finite differences at second order") {
  Rng rng(33);
  const int d = 5, rank = 2;
  for (int trial = 0; trial < 5; ++trial) {
    // gapped instance: retained eigenvalues in [0.5, 2.5], random basis
    const Matrix g = rng.normal_matrix(d, d);
    const Matrix q = Eigen::HouseholderQR<Matrix>(g).householderQ();
    Vector evals = Vector::Zero(d);
    for (int i = 0; i < rank; ++i) evals[i] = 0.5 + 2.0 * rng.uniform();
    const SymMatrix a(q * evals.asDiagonal() * q.transpose());
    SymMatrix h = rank_stable_direction(a, rank, rng);
    h = SymMatrix(h.mat() / h.mat().norm());
    const SymMatrix closed = pinv_derivative(a, h);
    const double scale = 1.0 + sym_eig(a).eigenvalues.cwiseAbs().maxCoeff();

    // rank-stable path: clip back onto the rank-r stratum before inverting
    auto fd = [&](double step) {
      const SymMatrix ap = rank_k_truncate_psd(SymMatrix(a.mat() + step * h.mat()), rank).matrix;
      const SymMatrix am = rank_k_truncate_psd(SymMatrix(a.mat() - step * h.mat()), rank).matrix;
      return ((pinv(ap).mat() - pinv(am).mat()) / (2.0 * step)).eval();
    };
    const double h1 = 1e-4 * scale;
    const double err1 = (closed.mat() - fd(h1)).cwiseAbs().maxCoeff();
    const double err2 = (closed.mat() - fd(h1 / 2.0)).cwiseAbs().maxCoeff();
    CHECK(err1 < 1e-6);
    CHECK(err1 / err2 > 3.5);
    CHECK(err1 / err2 < 4.5);
  }
}

TEST_CASE("pinv_derivative rejects matrices outside the stable-rank region") {
  Matrix tiny = Matrix::Zero(3, 3);
  tiny(0, 0) = 1.0;
  tiny(1, 1) = 1e-9;  // retained by rank_tol but below stable_tol
  CHECK_THROWS_AS(pinv_derivative(SymMatrix(tiny), SymMatrix::identity(3)), SingularityError);
}

TEST_CASE("rank_k_truncate_psd clips and reports rank") {
  const Descriptor a = rank_k_truncate_psd(diag3(3.0, 2.0, -1.0), 2);
  CHECK(rel_frob(a.matrix.mat(), diag3(3.0, 2.0, 0.0).mat()) < 1e-14);
  CHECK(a.rank == 2);

  const Descriptor b = rank_k_truncate_psd(diag2(0.5, -1.0), 1);
  CHECK(rel_frob(b.matrix.mat(), diag2(0.5, 0.0).mat()) < 1e-14);
  CHECK(b.rank == 1);

  const Descriptor c = rank_k_truncate_psd(diag3(1.0, -2.0, -3.0), 2);
  CHECK(rel_frob(c.matrix.mat(), diag3(1.0, 0.0, 0.0).mat()) < 1e-14);
  CHECK(c.rank == 1);

  CHECK_THROWS_AS(rank_k_truncate_psd(diag2(1.0, 1.0), 3), InputError);
}

TEST_CASE("rank_k_truncate_psd is idempotent bit-for-bit") {
  Rng rng(44);
  for (int trial = 0; trial < 5; ++trial) {
    const SymMatrix s = random_sym(6, rng);
    const Descriptor once = rank_k_truncate_psd(s, 3);
    const Descriptor twice = rank_k_truncate_psd(once.matrix, 3);
    CHECK((once.matrix.mat() - twice.matrix.mat()).cwiseAbs().maxCoeff() == 0.0);
    CHECK(once.rank == twice.rank);
  }
}

TEST_CASE("tangent_project zeroes the lower-right block") {
  Rng rng(55);
  const SymMatrix base_mat = random_psd(5, 2, rng);
  const Descriptor base = rank_k_truncate_psd(base_mat, 2);
  const TangentDirection t = tangent_project(base, random_sym(5, rng));
  const EigenSystem es = sym_eig(base.matrix);
  const Matrix in_basis = es.eigenvectors.transpose() * t.matrix.mat() * es.eigenvectors;
  CHECK(in_basis.bottomRightCorner(3, 3).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("spectral_projector_derivative pinned examples") {
  Matrix bdot(2, 2);
  bdot << 0.0, 1.0, 1.0, 0.0;
  const SymMatrix d1 = spectral_projector_derivative(diag2(2.0, 1.0), SymMatrix(bdot), 1);
  CHECK(rel_frob(d1.mat(), bdot) < 1e-12);

  // direction diagonal in the eigenbasis: G = 0
  const SymMatrix d2 = spectral_projector_derivative(diag2(2.0, 1.0), diag2(0.3, -0.7), 1);
  CHECK(d2.mat().cwiseAbs().maxCoeff() < 1e-14);

  CHECK_THROWS_AS(spectral_projector_derivative(SymMatrix::identity(3), diag3(1, 0, 0), 1),
                  EigengapError);
}

namespace {

Matrix topk_projector(const SymMatrix& s, int k) {
  const Matrix u = top_eigenspace(s, k);
  return u * u.transpose();
}

}  // namespace

TEST_CASE("spectral_projector_derivative matches projector finite differences") {
  Rng rng(66);
  const int d = 6, k = 2;
  for (int trial = 0; trial < 5; ++trial) {
    // gapped spectrum: top-k well separated from the rest
    Vector evals(d);
    evals << 3.0 + rng.uniform(), 2.0 + 0.3 * rng.uniform(), 0.8, 0.5, 0.2, -0.1;
    const Matrix g = rng.normal_matrix(d, d);
    const Eigen::HouseholderQR<Matrix> qr(g);
    const Matrix q = qr.householderQ();
    const SymMatrix bstar(q * evals.asDiagonal() * q.transpose());
    const SymMatrix bdot = random_sym(d, rng);

    const SymMatrix closed = spectral_projector_derivative(bstar, bdot, k);
    auto fd = [&](double step) {
      const Matrix plus = topk_projector(SymMatrix(bstar.mat() + step * bdot.mat()), k);
      const Matrix minus = topk_projector(SymMatrix(bstar.mat() - step * bdot.mat()), k);
      return ((plus - minus) / (2.0 * step)).eval();
    };
    const double scale = 1.0 + sym_eig(bstar).eigenvalues.cwiseAbs().maxCoeff();
    const double err1 = (closed.mat() - fd(1e-4 * scale)).cwiseAbs().maxCoeff();
    const double err2 = (closed.mat() - fd(0.5e-4 * scale)).cwiseAbs().maxCoeff();
    CHECK(err1 < 1e-6);
    CHECK(err1 / err2 > 3.5);
    CHECK(err1 / err2 < 4.5);
  }
}

TEST_CASE("local_section reconstructs and stays continuous on its chart") {
  Rng rng(77);
  const int d = 6, k = 2;
  const SymMatrix base = random_psd(d, k, rng);
  const Descriptor m_star = rank_k_truncate_psd(base, k);
  const Matrix anchor = top_eigenspace(m_star.matrix, k);

  const Matrix s0 = local_section(m_star, anchor);
  CHECK(rel_frob(s0.transpose() * s0, m_star.matrix.mat()) < 1e-12);

  // deterministic gauge: repeated calls agree exactly
  const Matrix s0_again = local_section(m_star, anchor);
  CHECK((s0 - s0_again).cwiseAbs().maxCoeff() == 0.0);

  for (int trial = 0; trial < 5; ++trial) {
    const SymMatrix noise = rank_stable_direction(m_star.matrix, k, rng);
    const SymMatrix perturbed_mat(
        m_star.matrix.mat() + 1e-3 * noise.mat() / noise.mat().norm());
    const Descriptor perturbed = rank_k_truncate_psd(perturbed_mat, k);
    const Matrix s1 = local_section(perturbed, anchor);
    CHECK(rel_frob(s1.transpose() * s1, perturbed.matrix.mat()) < 1e-9);
    const double dist_m = (perturbed.matrix.mat() - m_star.matrix.mat()).norm();
    CHECK((s1 - s0).norm() <= 10.0 * dist_m);
  }
}

TEST_CASE("local_section leaves its chart when the anchor is orthogonal to the range") {
  const Descriptor m{diag3(2.0, 1.0, 0.0), 2};
  Matrix anchor = Matrix::Zero(3, 2);
  anchor(2, 0) = 1.0;  // spans only the null direction
  anchor(1, 1) = 1.0;
  // B(M) = anchor^T P anchor is singular (first anchor column is killed)
  CHECK_THROWS_AS(local_section(m, anchor), OutOfChartError);
}

TEST_CASE("gaussian_bilinear_moment pinned values") {
  const Matrix eye = Matrix::Identity(2, 2);
  const MomentResult indep = gaussian_bilinear_moment(
      eye, eye, SymMatrix::identity(2), SymMatrix::identity(2), Matrix::Zero(2, 2));
  CHECK(indep.moment == doctest::Approx(2.0));

  const MomentResult equal =
      gaussian_bilinear_moment(eye, eye, SymMatrix::identity(2), SymMatrix::identity(2), eye);
  CHECK(equal.moment == doctest::Approx(8.0));  // E[(chi2_2)^2]

  Matrix bad = Matrix::Identity(2, 2) * 2.0;  // correlation above 1
  CHECK_THROWS_AS(gaussian_bilinear_moment(eye, eye, SymMatrix::identity(2),
                                           SymMatrix::identity(2), bad),
                  ModelError);
}

TEST_CASE("gaussian_quadratic_moment pinned values") {
  const Matrix eye = Matrix::Identity(2, 2);
  CHECK(gaussian_quadratic_moment(eye, eye, SymMatrix::identity(2)).moment ==
        doctest::Approx(8.0));
  CHECK(gaussian_quadratic_moment(diag2(1, 0).mat(), diag2(0, 1).mat(), SymMatrix::identity(2))
            .moment == doctest::Approx(1.0));
}

TEST_CASE("gaussian moment closed forms match Monte-Carlo within 3 standard errors") {
  Rng rng(88);
  const int d = 3;
  // exchangeable-pair instance: equal marginals, symmetric cross-covariance
  const SymMatrix su = random_psd(d, d, rng);
  const SymMatrix& sv = su;
  const Matrix root = sym_sqrt(su).mat();
  const double rho = 0.4;
  const Matrix suv = rho * su.mat();
  const SymMatrix a = random_sym(d, rng);
  const SymMatrix b = random_sym(d, rng);

  const MomentResult closed = gaussian_bilinear_moment(a.mat(), b.mat(), su, sv, suv);

  const long samples = 1000000;
  double acc = 0.0, acc_sq = 0.0;
  for (long s = 0; s < samples; ++s) {
    const Vector zu = rng.normal_vector(d);
    const Vector zv = rng.normal_vector(d);
    const Vector u = root * zu;
    const Vector v = root * (rho * zu + std::sqrt(1.0 - rho * rho) * zv);
    const double prod = u.dot(a.mat() * v) * u.dot(b.mat() * v);
    acc += prod;
    acc_sq += prod * prod;
  }
  const double mc_mean = acc / samples;
  const double mc_se =
      std::sqrt(std::max(acc_sq / samples - mc_mean * mc_mean, 0.0) / samples);
  CHECK(std::abs(mc_mean - closed.moment) < 3.0 * mc_se);
  CHECK(std::abs(mc_mean - closed.moment) < 0.02 * std::abs(closed.moment));

  // quadratic form against its own Monte-Carlo
  const Matrix a4 = rng.normal_matrix(4, 4);
  const Matrix b4 = rng.normal_matrix(4, 4);
  const SymMatrix sigma4 = random_psd(4, 4, rng);
  const Matrix root4 = sym_sqrt(sigma4).mat();
  const MomentResult closed4 = gaussian_quadratic_moment(a4, b4, sigma4);
  acc = acc_sq = 0.0;
  for (long s = 0; s < samples; ++s) {
    const Vector u = root4 * rng.normal_vector(4);
    const double prod = u.dot(a4 * u) * u.dot(b4 * u);
    acc += prod;
    acc_sq += prod * prod;
  }
  const double mc4 = acc / samples;
  const double se4 = std::sqrt(std::max(acc_sq / samples - mc4 * mc4, 0.0) / samples);
  CHECK(std::abs(mc4 - closed4.moment) < 3.0 * se4);
  CHECK(std::abs(mc4 - closed4.moment) < 0.02 * std::abs(closed4.moment));
}
