#include "risklab/spectral_model.hpp"

#include <cmath>
#include <sstream>

namespace risklab {

SpectralPopulation::SpectralPopulation(SymMatrix sigma_pre_in, SymMatrix sigma_cross_in, int k_in,
                                       SymMatrix sigma_down_in, Matrix a_star_in,
                                       Vector beta_star_in)
    : sigma_pre(std::move(sigma_pre_in)),
      sigma_cross(std::move(sigma_cross_in)),
      k(k_in),
      sigma_down(std::move(sigma_down_in)),
      a_star(std::move(a_star_in)),
      beta_star(std::move(beta_star_in)) {
  const Eigen::Index d = sigma_pre.dim();
  if (sigma_cross.dim() != d || sigma_down.dim() != d)
    throw InputError("SpectralPopulation: covariance dimensions disagree");
  if (k < 1 || k >= d) throw InputError("SpectralPopulation: need 1 <= k < d");
  if (a_star.rows() != k || a_star.cols() != d || beta_star.size() != k)
    throw InputError("SpectralPopulation: target shape mismatch");
  // joint covariance of (x, x+) must be PSD
  Matrix joint(2 * d, 2 * d);
  joint.topLeftCorner(d, d) = sigma_pre.mat();
  joint.topRightCorner(d, d) = sigma_cross.mat();
  joint.bottomLeftCorner(d, d) = sigma_cross.mat();
  joint.bottomRightCorner(d, d) = sigma_pre.mat();
  const EigenSystem jes = sym_eig(SymMatrix(joint));
  const double jscale = jes.eigenvalues.cwiseAbs().maxCoeff();
  if (jes.eigenvalues.minCoeff() < -1e-8 * std::max(1.0, jscale))
    throw ModelError("SpectralPopulation: joint positive-pair covariance is not PSD");
  const SymMatrix white = sym_inv_sqrt(sigma_pre);
  c_ = SymMatrix(white.mat() * sigma_cross.mat() * white.mat());
  const EigenSystem ces = sym_eig(c_);
  gap_ = ces.eigenvalues[k - 1] - std::max(ces.eigenvalues[k], 0.0);
}

SpectralPopulation SpectralPopulation::concrete_diagonal(int d, int k) {
  if (k < 1 || k >= d) throw InputError("concrete_diagonal: need 1 <= k < d");
  Vector cross(d);
  for (int i = 0; i < d; ++i) cross[i] = 1.0 / (i + 1);
  Matrix a = Matrix::Zero(k, d);
  for (int i = 0; i < k; ++i) a(i, i) = 1.0 / std::sqrt(static_cast<double>(i + 1));
  return SpectralPopulation(SymMatrix::identity(d), SymMatrix(cross.asDiagonal().toDenseMatrix()),
                            k, SymMatrix::identity(d), a, Vector::Ones(k));
}

TripletBatch sample_triplets(const SpectralPopulation& pop, long m, Rng& rng) {
  const Eigen::Index d = pop.dim();
  // x+ | x ~ N(cross Sigma^{-1} x, Sigma - cross Sigma^{-1} cross)
  const Matrix sigma_inv = pinv(pop.sigma_pre).mat();
  const Matrix cond_mean = pop.sigma_cross.mat() * sigma_inv;
  const SymMatrix cond_cov(pop.sigma_pre.mat() -
                           pop.sigma_cross.mat() * sigma_inv * pop.sigma_cross.mat());
  const Matrix root = sym_sqrt(pop.sigma_pre).mat();
  const Matrix cond_root = sym_sqrt(cond_cov).mat();

  Rng rng_pos(derive_stream(rng.next_u64(), 0));
  Rng rng_neg(derive_stream(rng.next_u64(), 1));

  TripletBatch batch;
  batch.x = rng_pos.normal_matrix(m, d) * root;
  batch.x_plus = batch.x * cond_mean.transpose() + rng_pos.normal_matrix(m, d) * cond_root;
  batch.x_minus = rng_neg.normal_matrix(m, d) * root;
  return batch;
}

double spectral_loss(const Matrix& a, const TripletBatch& batch) {
  const Matrix p = batch.x * a.transpose();        // m x k
  const Matrix pp = batch.x_plus * a.transpose();  // m x k
  const Matrix pm = batch.x_minus * a.transpose();
  const double m = static_cast<double>(batch.size());
  const double pos = (p.array() * pp.array()).sum() / m;
  const Vector s = (p.array() * pm.array()).rowwise().sum().matrix();
  return -2.0 * pos + s.squaredNorm() / m;
}

Matrix spectral_loss_gradient(const Matrix& a, const TripletBatch& batch) {
  const Matrix p = batch.x * a.transpose();
  const Matrix pp = batch.x_plus * a.transpose();
  const Matrix pm = batch.x_minus * a.transpose();
  const double m = static_cast<double>(batch.size());
  const Vector s = (p.array() * pm.array()).rowwise().sum().matrix();  // x^T M x^-
  Matrix grad = -2.0 / m * (pp.transpose() * batch.x + p.transpose() * batch.x_plus);
  grad += 2.0 / m *
          ((pm.array().colwise() * s.array()).matrix().transpose() * batch.x +
           (p.array().colwise() * s.array()).matrix().transpose() * batch.x_minus);
  return grad;
}

Descriptor population_target(const SpectralPopulation& pop, double gap_tol) {
  if (pop.eigengap() <= gap_tol)
    throw EigengapError("population_target: eigengap of C at k is below tolerance");
  const Descriptor trunc = rank_k_truncate_psd(pop.whitened_cross(), pop.k);
  const Matrix white = sym_inv_sqrt(pop.sigma_pre).mat();
  Descriptor out;
  out.matrix = SymMatrix(white * trunc.matrix.mat() * white);
  out.rank = trunc.rank;
  return out;
}

namespace {

// Sufficient statistics of the empirical loss. Both terms of
//   L(A) = -2 tr(A^T A Chat) + vec(M)^T T2 vec(M),  M = A^T A,
// are exact contractions of per-batch moments, so every descent iteration
// costs O(d^4) independent of m.
struct SuffStats {
  Matrix cross_sym;  // d x d, sym((1/m) sum x x+^T)
  Matrix quartic;    // d^2 x d^2, (1/m) sum vec(x x-^T) vec(x x-^T)^T

  explicit SuffStats(const TripletBatch& batch) {
    const Eigen::Index m = batch.size();
    const Eigen::Index d = batch.x.cols();
    const Matrix cross = batch.x.transpose() * batch.x_plus / static_cast<double>(m);
    cross_sym = 0.5 * (cross + cross.transpose());
    quartic = Matrix::Zero(d * d, d * d);
    const long chunk = 8192;
    Matrix v(std::min<long>(chunk, m), d * d);
    for (long start = 0; start < m; start += chunk) {
      const long len = std::min<long>(chunk, m - start);
      for (Eigen::Index b = 0; b < d; ++b)
        for (Eigen::Index a = 0; a < d; ++a)
          v.col(b * d + a).head(len) =
              batch.x.col(a).segment(start, len).cwiseProduct(
                  batch.x_minus.col(b).segment(start, len));
      quartic.selfadjointView<Eigen::Lower>().rankUpdate(v.topRows(len).transpose());
    }
    quartic = Matrix(quartic.selfadjointView<Eigen::Lower>()) / static_cast<double>(m);
  }

  double loss(const Matrix& a) const {
    const Eigen::Index d = a.cols();
    const Matrix m = a.transpose() * a;
    const Eigen::Map<const Vector> vm(m.data(), d * d);
    return -2.0 * (m.array() * cross_sym.array()).sum() + vm.dot(quartic * vm);
  }

  Matrix gradient(const Matrix& a) const {
    const Eigen::Index d = a.cols();
    const Matrix m = a.transpose() * a;
    const Eigen::Map<const Vector> vm(m.data(), d * d);
    const Vector tv = quartic * vm;
    const Eigen::Map<const Matrix> tm(tv.data(), d, d);
    const Matrix grad_m = -2.0 * cross_sym + (tm + tm.transpose());
    return 2.0 * a * grad_m;
  }
};

struct DescentOutcome {
  Matrix a;
  double loss = 0.0;
  double grad_norm = 0.0;
  int iterations = 0;
  bool converged = false;
};

DescentOutcome armijo_descent(Matrix a, const SuffStats& stats, const FitOptions& opts) {
  DescentOutcome out;
  double loss = stats.loss(a);
  Matrix grad = stats.gradient(a);
  double step = 0.1;
  int it = 0;
  for (; it < opts.max_iters; ++it) {
    const double gnorm2 = grad.squaredNorm();
    if (std::sqrt(gnorm2) <= opts.grad_tol * (1.0 + std::abs(loss))) {
      out.converged = true;
      break;
    }
    // Armijo backtracking with warm-started step.
    double s = step;
    bool moved = false;
    for (int bt = 0; bt < 60; ++bt) {
      const Matrix cand = a - s * grad;
      const double cand_loss = stats.loss(cand);
      if (cand_loss <= loss - 1e-4 * s * gnorm2) {
        a = cand;
        loss = cand_loss;
        step = s * 1.5;
        moved = true;
        break;
      }
      s *= 0.5;
    }
    if (!moved) break;  // step underflow; gradient check decides convergence
    grad = stats.gradient(a);
  }
  out.a = std::move(a);
  out.loss = loss;
  out.grad_norm = grad.norm();
  out.iterations = it;
  if (!out.converged)
    out.converged = out.grad_norm <= opts.grad_tol * (1.0 + std::abs(out.loss));
  return out;
}

}  // namespace

FitResult fit_descriptor(const TripletBatch& batch, int k, const FitOptions& opts, Rng& rng) {
  const Eigen::Index d = batch.x.cols();
  const long m = batch.size();
  if (m < opts.min_samples) throw InputError("fit_descriptor: too few samples");
  if (k < 1 || k >= d) throw InputError("fit_descriptor: need 1 <= k < d");

  // Plug-in initializer: rank-k truncation of the empirically whitened
  // cross-covariance, mapped back through the empirical covariance.
  const SymMatrix sigma_emp(batch.x.transpose() * batch.x / static_cast<double>(m));
  const SymMatrix cross_emp(
      0.5 * (batch.x.transpose() * batch.x_plus + batch.x_plus.transpose() * batch.x) /
      static_cast<double>(m));
  const Matrix white = sym_inv_sqrt(sigma_emp).mat();
  const SymMatrix c_emp(white * cross_emp.mat() * white);
  Descriptor plug = rank_k_truncate_psd(c_emp, k);
  // descriptor in the original coordinates
  Descriptor plug_m;
  plug_m.matrix = SymMatrix(white * plug.matrix.mat() * white);
  plug_m.rank = plug.rank;
  Matrix a_init;
  if (plug_m.rank == k) {
    a_init = local_section(plug_m, top_eigenspace(plug_m.matrix, k));
  } else {
    a_init = 0.01 * rng.normal_matrix(k, d);  // fallback: degenerate plug-in
  }

  const SuffStats stats(batch);
  FitResult best;
  double best_loss = std::numeric_limits<double>::infinity();
  std::ostringstream diag;
  bool any_converged = false;
  for (int r = 0; r < std::max(opts.restarts, 1); ++r) {
    Matrix start = a_init;
    if (r > 0) start += opts.perturb_scale * rng.normal_matrix(k, d);
    DescentOutcome run = armijo_descent(start, stats, opts);
    diag << " restart " << r << ": grad_norm=" << run.grad_norm
         << (run.converged ? " (converged)" : " (not converged)");
    if (run.converged) any_converged = true;
    if (run.converged && run.loss < best_loss) {
      best_loss = run.loss;
      best.a_hat = run.a;
      best.loss = run.loss;
      best.iterations = run.iterations;
      best.converged = true;
    }
  }
  if (!any_converged)
    throw NonConvergenceError("fit_descriptor: no restart converged;" + diag.str());
  best.descriptor = rank_k_truncate_psd(SymMatrix(best.a_hat.transpose() * best.a_hat), k);
  return best;
}

namespace {

double caa_term(const Matrix& h1, const Matrix& h2, const Matrix& sp, const Matrix& sc) {
  return (h1 * sp * h2 * sp).trace() + (h1 * sc * h2 * sc).trace();
}

double cab_term(const Matrix& h1, const Matrix& h2, const Matrix& m, const Matrix& sp,
                const Matrix& sc) {
  const Matrix p2 = m * sp * h2;
  return (p2 * sp * h1 * sc).trace() + (p2 * sc * h1 * sp).trace();
}

double cbb_term(const Matrix& h1, const Matrix& h2, const Matrix& m, const Matrix& sp) {
  const Matrix p1 = m * sp * h1;
  const Matrix p2 = m * sp * h2;
  const Matrix q = m * sp * m;
  return (p1 * sp).trace() * (p2 * sp).trace() + 2.0 * (p1 * sp * p2 * sp).trace() +
         (h1 * sp * h2 * sp).trace() * (q * sp).trace() +
         4.0 * (h1 * sp * h2 * sp * q * sp).trace();
}

double covariance_combo(const Matrix& h1, const Matrix& h2, const Matrix& m, const Matrix& sp,
                        const Matrix& sc) {
  return caa_term(h1, h2, sp, sc) - cab_term(h1, h2, m, sp, sc) - cab_term(h2, h1, m, sp, sc) +
         cbb_term(h1, h2, m, sp);
}

}  // namespace

double score_covariance(const SymMatrix& h1, const SymMatrix& h2, const SpectralPopulation& pop,
                        const SymMatrix& m_star) {
  return 4.0 * covariance_combo(h1.mat(), h2.mat(), m_star.mat(), pop.sigma_pre.mat(),
                                pop.sigma_cross.mat());
}

double limit_covariance_form(const SymMatrix& h1, const SymMatrix& h2,
                             const SpectralPopulation& pop, const SymMatrix& m_star) {
  const Matrix sigma_inv = pinv(pop.sigma_pre).mat();
  const Matrix h1p = sigma_inv * h1.mat() * sigma_inv;
  const Matrix h2p = sigma_inv * h2.mat() * sigma_inv;
  return covariance_combo(h1p, h2p, m_star.mat(), pop.sigma_pre.mat(), pop.sigma_cross.mat());
}

LimitLaw concrete_limit_law(int d, int k, double alpha, double sigma2) {
  if (k < 1 || k >= d) throw InputError("concrete_limit_law: need 1 <= k < d");
  if (alpha <= 0.0) throw InputError("concrete_limit_law: alpha must be positive");
  double tau = 0.0;
  for (int j = 1; j <= k; ++j) tau += 1.0 / (static_cast<double>(j) * j);
  double sum = 0.0;
  for (int i = 1; i <= k; ++i) {
    const double di = static_cast<double>(i);
    sum += di * (1.0 + 1.0 / (di * di) + tau);
  }
  LimitLaw law;
  law.constant = sigma2 * k;
  law.components.push_back({2.0 / alpha * sum, d - k});
  return law;
}

SuboptimalityReport suboptimality_report(int d, int k, const Vector& lambdas,
                                         const Vector& beta_star) {
  if (lambdas.size() != k || beta_star.size() != k)
    throw InputError("suboptimality_report: need k lambdas and k coefficients");
  if ((lambdas.array() <= 0.0).any())
    throw InputError("suboptimality_report: lambdas must be positive");
  const double tau = lambdas.squaredNorm();
  const double lam_sum = lambdas.sum();
  SuboptimalityReport out;
  out.expected_q = k * (4.0 * d - 2.0 * k - 1.0) * (1.0 + tau) + 2.0 * (2.0 * d - 1.0) * tau +
                   2.0 * lam_sum * lam_sum;
  out.conditioning_factor = (beta_star.array().square() / lambdas.array()).sum();
  out.prior_bound_scale = out.expected_q * out.conditioning_factor;
  return out;
}

Matrix spectral_feature_matrix(const Descriptor& m) {
  return local_section(m, top_eigenspace(m.matrix, m.rank));
}

PopulationMoments linear_population_moments(const Matrix& w, const SymMatrix& sigma_down,
                                            const Vector& w_star) {
  PopulationMoments out;
  out.sigma = SymMatrix(w * sigma_down.mat() * w.transpose());
  out.cross = w * sigma_down.mat() * w_star;
  out.f2 = w_star.dot(sigma_down.mat() * w_star);
  return out;
}

}  // namespace risklab
