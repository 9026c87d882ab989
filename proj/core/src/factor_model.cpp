#include "risklab/factor_model.hpp"

#include <cmath>

namespace risklab {

FactorPopulation::FactorPopulation(Matrix a_star_in, Vector beta_star_in, double sigma_nu_in)
    : a_star(std::move(a_star_in)), beta_star(std::move(beta_star_in)), sigma_nu(sigma_nu_in) {
  const Eigen::Index d = a_star.rows();
  const Eigen::Index k = a_star.cols();
  if (k < 1 || k >= d) throw InputError("FactorPopulation: need 1 <= k < d");
  if (beta_star.size() != k) throw InputError("FactorPopulation: beta* must have k entries");
  if (sigma_nu < 0.0) throw InputError("FactorPopulation: sigma_nu must be nonnegative");
  m_star = SymMatrix(a_star * a_star.transpose());
  const EigenSystem es = sym_eig(m_star);
  sigma_star = es.eigenvalues.head(k);
  if (sigma_star[k - 1] <= 0.0) throw InputError("FactorPopulation: A* must have full column rank");
  u1 = es.eigenvectors.leftCols(k);
  sigma_x = SymMatrix(Matrix::Identity(d, d) + m_star.mat());
  const Matrix gram = Matrix::Identity(k, k) + a_star.transpose() * a_star;
  sigma2 = sigma_nu * sigma_nu + beta_star.dot(gram.llt().solve(beta_star));
  w_star = sigma_x.mat().llt().solve(a_star * beta_star);
}

FactorPopulation FactorPopulation::from_column_norms(int d, const Vector& norms, Vector beta_star,
                                                     double sigma_nu) {
  const Eigen::Index k = norms.size();
  if (k < 1 || k >= d) throw InputError("from_column_norms: need 1 <= k < d");
  if ((norms.array() <= 0.0).any()) throw InputError("from_column_norms: norms must be positive");
  Matrix a = Matrix::Zero(d, k);
  for (Eigen::Index j = 0; j < k; ++j) a(j, j) = norms[j];
  return FactorPopulation(a, std::move(beta_star), sigma_nu);
}

Matrix sample_factor(const FactorPopulation& pop, long n, Rng& rng) {
  const int d = pop.dim();
  const int k = pop.rank();
  Matrix x = rng.normal_matrix(n, k) * pop.a_star.transpose();
  x += rng.normal_matrix(n, d);
  return x;
}

LabeledSample sample_factor_labeled(const FactorPopulation& pop, long n, Rng& rng) {
  const int d = pop.dim();
  const int k = pop.rank();
  LabeledSample out;
  const Matrix h = rng.normal_matrix(n, k);
  out.x = h * pop.a_star.transpose() + rng.normal_matrix(n, d);
  out.y = h * pop.beta_star;
  for (long i = 0; i < n; ++i) out.y[i] += pop.sigma_nu * rng.normal();
  return out;
}

Descriptor ppca_mle(const SymMatrix& s_m, int k) {
  if (k < 1 || k > s_m.dim()) throw InputError("ppca_mle: k must be in [1, d]");
  const EigenSystem es = sym_eig(s_m);
  const Eigen::Index d = s_m.dim();
  Vector kept = Vector::Zero(d);
  int rank = 0;
  for (int i = 0; i < k; ++i) {
    kept[i] = std::max(es.eigenvalues[i] - 1.0, 0.0);
    if (kept[i] > 0.0) ++rank;
  }
  Descriptor out;
  out.matrix = SymMatrix(es.eigenvectors * kept.asDiagonal() * es.eigenvectors.transpose());
  out.rank = rank;
  return out;
}

Vector factor_features(const Vector& x, const Matrix& a) {
  const Eigen::Index k = a.cols();
  const Matrix gram = Matrix::Identity(k, k) + a.transpose() * a;
  return gram.llt().solve(a.transpose() * x);
}

Matrix factor_feature_matrix(const Matrix& a) {
  const Eigen::Index k = a.cols();
  const Matrix gram = Matrix::Identity(k, k) + a.transpose() * a;
  return gram.llt().solve(a.transpose());
}

Matrix factor_loading(const Descriptor& m_hat) {
  const EigenSystem es = sym_eig(m_hat.matrix);
  const int k = std::max(m_hat.rank, 1);
  return es.eigenvectors.leftCols(k) *
         es.eigenvalues.head(k).cwiseMax(0.0).cwiseSqrt().asDiagonal();
}

LimitLaw factor_limit_law(const FactorPopulation& pop, double alpha) {
  if (alpha <= 0.0) throw InputError("factor_limit_law: alpha must be positive");
  const Vector v = (Vector::Ones(pop.rank()) + pop.sigma_star)
                       .cwiseSqrt()
                       .cwiseInverse()
                       .asDiagonal() *
                   (pop.u1.transpose() * (pop.a_star * pop.beta_star));
  LimitLaw law;
  law.constant = pop.sigma2 * pop.rank();
  law.components.push_back({v.squaredNorm() / alpha, pop.dim() - pop.rank()});
  return law;
}

TangentDirection fluctuation_sample(const FactorPopulation& pop, Rng& rng) {
  const int d = pop.dim();
  const Matrix w = rng.normal_matrix(d, d);
  const Matrix root = sym_sqrt(pop.sigma_x).mat();
  const Matrix g = root * (w + w.transpose()) * root / std::sqrt(2.0);
  const Matrix p = pop.u1 * pop.u1.transpose();
  const Matrix z = p * g + g * p - p * g * p;
  TangentDirection out;
  out.matrix = SymMatrix(z);
  out.basepoint_rank = pop.rank();
  return out;
}

double fluctuation_interaction_norm(const FactorPopulation& pop, const TangentDirection& z) {
  const int d = pop.dim();
  const Matrix p = pop.u1 * pop.u1.transpose();
  const Vector v = (Matrix::Identity(d, d) - p) * z.matrix.mat() * pop.w_star;
  return v.squaredNorm();
}

}  // namespace risklab
