#include "risklab/downstream.hpp"

#include <cmath>

namespace risklab {

FeatureMap linear_features(const Matrix& coeff) {
  FeatureMap out;
  out.dim = static_cast<int>(coeff.rows());
  out.eval = [coeff](const Vector& x) -> Vector { return coeff * x; };
  return out;
}

DesignBlock::DesignBlock(Matrix covariates, const FeatureMap& features) {
  if (!features.eval) throw InputError("DesignBlock: feature map has no evaluator");
  x_ = std::move(covariates);
  if (!x_.allFinite()) throw InputError("DesignBlock: non-finite covariates");
  phi_.resize(x_.rows(), features.dim);
  for (Eigen::Index i = 0; i < x_.rows(); ++i) phi_.row(i) = features.eval(x_.row(i)).transpose();
  if (!phi_.allFinite()) throw InputError("DesignBlock: non-finite features");
  sigma_n_ = SymMatrix(phi_.transpose() * phi_ / static_cast<double>(phi_.rows()));
}

DesignBlock DesignBlock::from_features(Matrix covariates, Matrix phi) {
  if (covariates.rows() != phi.rows()) throw InputError("DesignBlock: row mismatch");
  if (!phi.allFinite()) throw InputError("DesignBlock: non-finite features");
  DesignBlock out;
  out.x_ = std::move(covariates);
  out.phi_ = std::move(phi);
  out.sigma_n_ =
      SymMatrix(out.phi_.transpose() * out.phi_ / static_cast<double>(out.phi_.rows()));
  return out;
}

Vector min_norm_ols(const Matrix& phi, const Vector& y, double rank_tol) {
  if (phi.rows() != y.size()) throw InputError("min_norm_ols: dimension mismatch");
  if (!phi.allFinite() || !y.allFinite()) throw InputError("min_norm_ols: non-finite input");
  const double n = static_cast<double>(phi.rows());
  const SymMatrix sigma_n(phi.transpose() * phi / n);
  return pinv(sigma_n, rank_tol).mat() * (phi.transpose() * y / n);
}

Matrix hat_matrix(const Matrix& phi, double rank_tol) {
  const SymMatrix gram(phi.transpose() * phi);
  return phi * pinv(gram, rank_tol).mat() * phi.transpose();
}

int effective_dimension(const SymMatrix& sigma, double rank_tol) {
  return sym_rank(sigma, rank_tol);
}

Vector population_projector_linear(const SymMatrix& sigma, const Vector& c_g, double rank_tol) {
  if (sigma.dim() != c_g.size()) throw InputError("population_projector_linear: dimension mismatch");
  return pinv(sigma, rank_tol).mat() * c_g;
}

RiskBreakdown risk_decompose(const PopulationMoments& pop, const DesignBlock& design,
                             const Vector& fstar_at_design, double sigma2, double rank_tol) {
  const Eigen::Index p = pop.sigma.dim();
  if (pop.cross.size() != p || design.feature_dim() != p)
    throw InputError("risk_decompose: feature dimension mismatch");
  if (fstar_at_design.size() != design.n())
    throw InputError("risk_decompose: target evaluations must match the design size");

  const double n = static_cast<double>(design.n());
  const Matrix sigma_pinv = pinv(pop.sigma, rank_tol).mat();
  const Matrix sigma_n_pinv = pinv(design.sigma_n(), rank_tol).mat();

  RiskBreakdown out;
  out.sigma2 = sigma2;

  const Vector theta_pop = sigma_pinv * pop.cross;
  out.rep = std::max(pop.f2 - pop.cross.dot(theta_pop), 0.0);

  const int rank_pop = sym_rank(pop.sigma, rank_tol);
  const int rank_emp = sym_rank(design.sigma_n(), rank_tol);
  out.well_posed = (rank_emp == rank_pop);
  out.degenerate_design = (rank_emp > rank_pop);

  if (out.well_posed) {
    // Pi_n f* - Pi f* = Pi_n e with e = f* - Pi f* evaluated on the design.
    const Vector e = fstar_at_design - design.phi() * theta_pop;
    const Vector theta_e = sigma_n_pinv * (design.phi().transpose() * e / n);
    out.leakage = theta_e.dot(pop.sigma.mat() * theta_e);
  } else {
    // General branch: population norm of Pi_n f* - Pi f*.
    const Vector theta_n = sigma_n_pinv * (design.phi().transpose() * fstar_at_design / n);
    const Vector diff = theta_n - theta_pop;
    out.leakage = diff.dot(pop.sigma.mat() * diff);
  }
  out.leakage = std::max(out.leakage, 0.0);

  out.variance = sigma2 / n * (pop.sigma.mat() * sigma_n_pinv).trace();
  out.excess_scaled = n * (out.rep + out.leakage + out.variance);
  return out;
}

bool orbit_invariance_check(const FeatureMap& features_a, const FeatureMap& features_b,
                            const Matrix& covariates, const Vector& y, const Matrix& probe,
                            double tol) {
  const DesignBlock da(covariates, features_a);
  const DesignBlock db(covariates, features_b);
  const Vector theta_a = min_norm_ols(da.phi(), y);
  const Vector theta_b = min_norm_ols(db.phi(), y);
  double scale = 1.0;
  for (Eigen::Index i = 0; i < probe.rows(); ++i) {
    const Vector x = probe.row(i);
    const double fa = theta_a.dot(features_a.eval(x));
    const double fb = theta_b.dot(features_b.eval(x));
    scale = std::max(scale, std::abs(fa));
    if (std::abs(fa - fb) > tol * scale) return false;
  }
  return true;
}

Matrix probe_grid(const SymMatrix& sigma, int count, std::uint64_t seed) {
  Rng rng(seed);
  const Matrix root = sym_sqrt(sigma).mat();
  return rng.normal_matrix(count, sigma.dim()) * root;
}

}  // namespace risklab
