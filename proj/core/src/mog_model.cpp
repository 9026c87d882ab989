#include "risklab/mog_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "risklab/parallel.hpp"

namespace risklab {

namespace {
constexpr double kLog2Pi = 1.8378770664093454835606594728112;
}

MixtureParams::MixtureParams(Matrix centers) : centers_(std::move(centers)) {
  if (centers_.rows() < 2) throw InputError("MixtureParams: need at least two centers");
  if (!centers_.allFinite()) throw InputError("MixtureParams: non-finite centers");
  for (Eigen::Index i = 0; i < centers_.rows(); ++i)
    for (Eigen::Index j = 0; j < i; ++j)
      if ((centers_.row(i) - centers_.row(j)).norm() == 0.0)
        throw InputError("MixtureParams: centers must be pairwise distinct");
}

MixtureParams MixtureParams::axis_centers(int count, int dim, double separation) {
  if (count > dim) throw InputError("axis_centers: need count <= dim");
  if (separation <= 0.0) throw InputError("axis_centers: separation must be positive");
  Matrix centers = Matrix::Zero(count, dim);
  for (int i = 0; i < count; ++i) centers(i, i) = separation;
  return MixtureParams(centers);
}

namespace {

// Lexicographic row order; reductions over centers run in this canonical
// order so that every label-invariant quantity is bit-identical across
// relabelings.
std::vector<int> canonical_row_order(const Matrix& rows) {
  std::vector<int> order(rows.rows());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    for (Eigen::Index j = 0; j < rows.cols(); ++j) {
      if (rows(a, j) < rows(b, j)) return true;
      if (rows(a, j) > rows(b, j)) return false;
    }
    return false;
  });
  return order;
}

}  // namespace

Vector MixtureParams::mean_center() const {
  const std::vector<int> order = canonical_row_order(centers_);
  Vector mean = Vector::Zero(dim());
  for (int i : order) mean += centers_.row(i).transpose();
  return mean / static_cast<double>(count());
}

SymMatrix MixtureParams::centered_second_moment() const {
  const std::vector<int> order = canonical_row_order(centers_);
  const Vector mean = mean_center();
  Matrix s = Matrix::Zero(dim(), dim());
  for (int i : order) {
    const Vector c = centers_.row(i).transpose() - mean;
    s += c * c.transpose();
  }
  return SymMatrix(s);
}

GatingState make_gating(const MixtureParams& reference, double rank_tol, double gap_tol) {
  const SymMatrix s = reference.centered_second_moment();
  const EigenSystem es = sym_eig(s);
  const double scale = es.eigenvalues.cwiseAbs().maxCoeff();
  int r = 0;
  for (Eigen::Index i = 0; i < es.eigenvalues.size(); ++i)
    if (es.eigenvalues[i] > rank_tol * std::max(scale, 1.0)) ++r;
  if (r == 0) throw InputError("make_gating: centered second moment is zero");
  if (r < reference.dim()) {
    const double gap = es.eigenvalues[r - 1] - es.eigenvalues[r];
    if (gap < gap_tol * (1.0 + scale))
      throw EigengapError("make_gating: eigengap below the effective rank is too small");
  }
  GatingState out;
  out.r_star = r;
  const Matrix basis = es.eigenvectors.leftCols(r);
  out.basis = basis;
  out.projector = SymMatrix(basis * basis.transpose());
  return out;
}

Matrix sample_mixture(const MixtureParams& params, long n, Rng& rng) {
  const int k = params.count();
  const int d = params.dim();
  Matrix x(n, d);
  for (long i = 0; i < n; ++i) {
    const auto comp = rng.uniform_int(k);
    for (int j = 0; j < d; ++j) x(i, j) = params.centers()(comp, j) + rng.normal();
  }
  return x;
}

namespace {

// Softmax of logits_i = <c_i, x> - ||c_i||^2 / 2 (shared by the full and the
// projected mixtures; projection is folded into c_i). The normalizer sums the
// exponentials in sorted order, so responsibilities are bit-identical across
// relabelings of the centers.
double sorted_sum(Vector values) {
  std::sort(values.data(), values.data() + values.size());
  double acc = 0.0;
  for (Eigen::Index i = 0; i < values.size(); ++i) acc += values[i];
  return acc;
}

Vector softmax_resp(const Matrix& centers, const Vector& x) {
  const Eigen::Index k = centers.rows();
  Vector logits(k);
  for (Eigen::Index i = 0; i < k; ++i)
    logits[i] = centers.row(i).dot(x) - 0.5 * centers.row(i).squaredNorm();
  const double top = logits.maxCoeff();
  Vector out = (logits.array() - top).exp();
  return out / sorted_sum(out);
}

}  // namespace

Vector responsibilities(const MixtureParams& params, const Vector& x) {
  return softmax_resp(params.centers(), x);
}

ScoreHessian mixture_score_hessian(const MixtureParams& params, const Vector& x) {
  const int k = params.count();
  const int d = params.dim();
  const Vector pi = responsibilities(params, x);
  ScoreHessian out;
  out.gradient.resize(k, d);
  for (int i = 0; i < k; ++i)
    out.gradient.row(i) = -pi[i] * (x.transpose() - params.centers().row(i));
  out.hessian.resize(k * d, k * d);
  for (int i = 0; i < k; ++i) {
    const Vector ri = x - params.centers().row(i).transpose();
    for (int j = 0; j < k; ++j) {
      const Vector rj = x - params.centers().row(j).transpose();
      Matrix block;
      if (i == j) {
        block = pi[i] * Matrix::Identity(d, d) - pi[i] * (1.0 - pi[i]) * ri * ri.transpose();
      } else {
        block = pi[i] * pi[j] * ri * rj.transpose();
      }
      out.hessian.block(i * d, j * d, d, d) = block;
    }
  }
  return out;
}

namespace {

double mixture_log_likelihood(const Matrix& data, const Matrix& centers) {
  const Eigen::Index n = data.rows();
  const Eigen::Index k = centers.rows();
  const Eigen::Index d = data.cols();
  Vector half_norms(k);
  for (Eigen::Index i = 0; i < k; ++i) half_norms[i] = 0.5 * centers.row(i).squaredNorm();
  double total = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) {
    Vector logits = centers * data.row(j).transpose() - half_norms;
    const double top = logits.maxCoeff();
    total += top + std::log((logits.array() - top).exp().sum());
    total -= 0.5 * data.row(j).squaredNorm();
  }
  total += n * (-0.5 * d * kLog2Pi - std::log(static_cast<double>(k)));
  return total;
}

Matrix kmeanspp_init(const Matrix& data, int k, Rng& rng) {
  const Eigen::Index n = data.rows();
  Matrix centers(k, data.cols());
  centers.row(0) = data.row(rng.uniform_int(n));
  Vector dist2 = (data.rowwise() - centers.row(0)).rowwise().squaredNorm();
  for (int i = 1; i < k; ++i) {
    const double total = dist2.sum();
    Eigen::Index pick = 0;
    if (total > 0.0) {
      double u = rng.uniform() * total;
      for (; pick < n - 1; ++pick) {
        u -= dist2[pick];
        if (u <= 0.0) break;
      }
    } else {
      pick = rng.uniform_int(n);
    }
    centers.row(i) = data.row(pick);
    dist2 = dist2.cwiseMin((data.rowwise() - centers.row(i)).rowwise().squaredNorm());
  }
  return centers;
}

struct EmRun {
  Matrix centers;
  double loglik = -std::numeric_limits<double>::infinity();
  int iterations = 0;
};

EmRun run_em(const Matrix& data, Matrix centers, const EmOptions& opts) {
  const Eigen::Index n = data.rows();
  const Eigen::Index k = centers.rows();
  Vector half_norms(k);
  double prev = mixture_log_likelihood(data, centers);
  EmRun out;
  int it = 0;
  for (; it < opts.max_iters; ++it) {
    for (Eigen::Index i = 0; i < k; ++i) half_norms[i] = 0.5 * centers.row(i).squaredNorm();
    // E-step: responsibilities; M-step: responsibility-weighted means.
    Matrix weighted = Matrix::Zero(k, data.cols());
    Vector mass = Vector::Zero(k);
    for (Eigen::Index j = 0; j < n; ++j) {
      Vector logits = centers * data.row(j).transpose() - half_norms;
      const double top = logits.maxCoeff();
      Vector g = (logits.array() - top).exp();
      g /= g.sum();
      weighted += g * data.row(j);
      mass += g;
    }
    for (Eigen::Index i = 0; i < k; ++i)
      if (mass[i] > 0.0) centers.row(i) = weighted.row(i) / mass[i];
    const double cur = mixture_log_likelihood(data, centers);
    if (cur < prev - 1e-7 * (1.0 + std::abs(prev)))
      throw NumericalError("fit_centers: EM log-likelihood decreased");
    if (cur - prev <= opts.tol * (1.0 + std::abs(cur))) {
      prev = cur;
      ++it;
      break;
    }
    prev = cur;
  }
  out.centers = std::move(centers);
  out.loglik = prev;
  out.iterations = it;
  return out;
}

}  // namespace

FitCentersResult fit_centers(const Matrix& data, int count, const EmOptions& opts,
                             const MixtureParams& reference, Rng& rng) {
  if (data.rows() < opts.min_samples) throw InputError("fit_centers: too few samples");
  if (count != reference.count() || data.cols() != reference.dim())
    throw InputError("fit_centers: reference shape mismatch");
  if (count > 10) throw InputError("fit_centers: alignment supports at most 10 components");

  EmRun best;
  for (int r = 0; r < std::max(opts.restarts, 1); ++r) {
    EmRun run = run_em(data, kmeanspp_init(data, count, rng), opts);
    if (run.loglik > best.loglik) best = std::move(run);
  }

  // Align to the reference by minimum total squared distance over relabelings.
  std::vector<int> perm(count), best_perm(count);
  std::iota(perm.begin(), perm.end(), 0);
  double best_cost = std::numeric_limits<double>::infinity();
  double second_cost = std::numeric_limits<double>::infinity();
  std::vector<int> order = perm;
  do {
    double cost = 0.0;
    for (int i = 0; i < count; ++i)
      cost += (best.centers.row(order[i]) - reference.centers().row(i)).squaredNorm();
    if (cost < best_cost) {
      second_cost = best_cost;
      best_cost = cost;
      best_perm = order;
    } else if (cost < second_cost) {
      second_cost = cost;
    }
  } while (std::next_permutation(order.begin(), order.end()));

  Matrix aligned(count, data.cols());
  for (int i = 0; i < count; ++i) aligned.row(i) = best.centers.row(best_perm[i]);

  FitCentersResult out{MixtureParams(aligned), best.loglik, best.iterations, false};
  out.gauge_warning = (second_cost - best_cost) < 1e-9 * (1.0 + std::abs(best_cost));
  return out;
}

Vector gating_responsibilities(const Vector& x, const MixtureParams& params,
                               const GatingState& gauge) {
  const Matrix projected = params.centers() * gauge.projector.mat();
  return softmax_resp(projected, gauge.projector.mat() * x);
}

Vector gating_features(const Vector& x, const MixtureParams& params, const GatingState& gauge) {
  const int k = params.count();
  const int r = gauge.r_star;
  const Vector pi = gating_responsibilities(x, params, gauge);
  const Vector px_coords = gauge.basis.transpose() * x;
  Vector out(k * (r + 1));
  for (int i = 0; i < k; ++i) {
    const Vector ci = gauge.basis.transpose() * params.centers().row(i).transpose();
    out.segment(i * (r + 1), r) = pi[i] * (px_coords - ci);
    out[i * (r + 1) + r] = pi[i];
  }
  return out;
}

Matrix gating_features_batch(const Matrix& x, const MixtureParams& params,
                             const GatingState& gauge) {
  const Eigen::Index n = x.rows();
  const int k = params.count();
  const int r = gauge.r_star;
  // Work entirely in the moving projected geometry; express coordinates in
  // the fixed gauge basis at the end.
  const Matrix proj_centers = params.centers() * gauge.projector.mat();  // k x d
  Vector half_norms(k);
  for (int i = 0; i < k; ++i) half_norms[i] = 0.5 * proj_centers.row(i).squaredNorm();
  const Matrix logits_all = x * proj_centers.transpose();  // n x k (uses P^2 = P)
  const Matrix x_coords = x * gauge.projector.mat() * gauge.basis;  // n x r
  const Matrix c_coords = params.centers() * gauge.projector.mat() * gauge.basis;  // k x r

  Matrix out(n, k * (r + 1));
  for (Eigen::Index j = 0; j < n; ++j) {
    Vector logits = logits_all.row(j).transpose() - half_norms;
    const double top = logits.maxCoeff();
    Vector pi = (logits.array() - top).exp();
    pi /= sorted_sum(pi);
    for (int i = 0; i < k; ++i) {
      out.row(j).segment(i * (r + 1), r) =
          pi[i] * (x_coords.row(j) - c_coords.row(i));
      out(j, i * (r + 1) + r) = pi[i];
    }
  }
  return out;
}

SymMatrix fisher_information(const MixtureParams& params, long n_samples, Rng& rng) {
  if (n_samples < 10000) throw InputError("fisher_information: need at least 1e4 samples");
  const int k = params.count();
  const int d = params.dim();
  Matrix acc = Matrix::Zero(k * d, k * d);
  Vector score(k * d);
  for (long s = 0; s < n_samples; ++s) {
    const auto comp = rng.uniform_int(k);
    Vector x(d);
    for (int j = 0; j < d; ++j) x[j] = params.centers()(comp, j) + rng.normal();
    const Vector pi = responsibilities(params, x);
    for (int i = 0; i < k; ++i)
      score.segment(i * d, d) = -pi[i] * (x - params.centers().row(i).transpose());
    acc.selfadjointView<Eigen::Lower>().rankUpdate(score);
  }
  Matrix full = acc.selfadjointView<Eigen::Lower>();
  full /= static_cast<double>(n_samples);
  const SymMatrix out(full);
  const EigenSystem es = sym_eig(out);
  if (es.eigenvalues.minCoeff() < -1e-8 * std::max(1.0, es.eigenvalues.cwiseAbs().maxCoeff()))
    throw NumericalError("fisher_information: estimate is not PSD");
  return out;
}

SignalSpec SignalSpec::block_preset(int count, int r_star) {
  Vector theta(count * (r_star + 1));
  for (int i = 0; i < count; ++i)
    theta.segment(i * (r_star + 1), r_star + 1).setConstant(1.0 / (i + 1));
  theta /= theta.norm();
  return SignalSpec{theta};
}

namespace {

// Gating state for a perturbed parameter: the projector follows the leading
// r* eigenspace of S(U'), the coordinate basis stays the reference gauge.
GatingState gating_at(const MixtureParams& params, const GatingState& reference) {
  const EigenSystem es = sym_eig(params.centered_second_moment());
  const Matrix lead = es.eigenvectors.leftCols(reference.r_star);
  GatingState out;
  out.r_star = reference.r_star;
  out.projector = SymMatrix(lead * lead.transpose());
  out.basis = reference.basis;
  return out;
}

}  // namespace

InteractionResult interaction_term_mc(const MixtureParams& params, const SignalSpec& signal,
                                      const InteractionConfig& cfg) {
  const int k = params.count();
  const int d = params.dim();
  const int kd = k * d;
  const GatingState gauge = make_gating(params);
  const int p = k * (gauge.r_star + 1);
  if (signal.theta.size() != p)
    throw InputError("interaction_term_mc: signal dimension must be K(r*+1)");
  if (cfg.n_proj < 1000 || cfg.n_eval < 1000 || cfg.n_fisher < 10000)
    throw InputError("interaction_term_mc: MC budgets below documented minimums");

  double max_center_norm = 0.0;
  for (int i = 0; i < k; ++i)
    max_center_norm = std::max(max_center_norm, params.centers().row(i).norm());
  const double h = cfg.h_rel * (1.0 + max_center_norm);

  Rng rng_fisher(derive_stream(cfg.seed, 0));
  Rng rng_proj(derive_stream(cfg.seed, 1));
  Rng rng_eval(derive_stream(cfg.seed, 2));

  const Matrix fisher = fisher_information(params, cfg.n_fisher, rng_fisher).mat();
  const Matrix v = pinv(SymMatrix(fisher)).mat();

  // Common random numbers: one projection sample, one evaluation sample.
  const Matrix x_proj = sample_mixture(params, cfg.n_proj, rng_proj);
  const Matrix x_eval = sample_mixture(params, cfg.n_eval, rng_eval);

  // Base features: target values and the full-rank assumption check.
  const long chunk = 65536;
  Vector f_targ(cfg.n_proj);
  Matrix feat_cov = Matrix::Zero(p, p);
  for (long start = 0; start < cfg.n_proj; start += chunk) {
    const long len = std::min(chunk, cfg.n_proj - start);
    const Matrix phi = gating_features_batch(x_proj.middleRows(start, len), params, gauge);
    f_targ.segment(start, len) = phi * signal.theta;
    feat_cov.selfadjointView<Eigen::Lower>().rankUpdate(phi.transpose());
  }
  Matrix feat_cov_full = feat_cov.selfadjointView<Eigen::Lower>();
  feat_cov_full /= static_cast<double>(cfg.n_proj);
  if (sym_rank(SymMatrix(feat_cov_full)) < p)
    throw ModelError("interaction_term_mc: feature second moment is rank-deficient at U*");

  // Phase 1: fitted projection coefficients for U +- h e_a (full and halves).
  struct DirectionFit {
    Vector plus, minus;        // full-sample coefficients
    Vector plus_1, minus_1;    // first-half
    Vector plus_2, minus_2;    // second-half
  };
  std::vector<DirectionFit> fits(kd);
  const long half = cfg.n_proj / 2;
  parallel_for(kd, cfg.threads, [&](long a) {
    const int ci = static_cast<int>(a) / d;
    const int cj = static_cast<int>(a) % d;
    DirectionFit fit;
    for (int sign = 0; sign < 2; ++sign) {
      Matrix centers = params.centers();
      centers(ci, cj) += (sign == 0 ? h : -h);
      const MixtureParams perturbed(centers);
      const GatingState g = gating_at(perturbed, gauge);
      Matrix gram_full = Matrix::Zero(p, p);
      Matrix gram_1 = Matrix::Zero(p, p);
      Vector rhs_full = Vector::Zero(p);
      Vector rhs_1 = Vector::Zero(p);
      for (long start = 0; start < cfg.n_proj; start += chunk) {
        const long len = std::min(chunk, cfg.n_proj - start);
        const Matrix phi = gating_features_batch(x_proj.middleRows(start, len), perturbed, g);
        gram_full.selfadjointView<Eigen::Lower>().rankUpdate(phi.transpose());
        rhs_full += phi.transpose() * f_targ.segment(start, len);
        if (start + len <= half) {
          gram_1.selfadjointView<Eigen::Lower>().rankUpdate(phi.transpose());
          rhs_1 += phi.transpose() * f_targ.segment(start, len);
        } else if (start < half) {
          const long cut = half - start;
          const Matrix head = phi.topRows(cut);
          gram_1.selfadjointView<Eigen::Lower>().rankUpdate(head.transpose());
          rhs_1 += head.transpose() * f_targ.segment(start, cut);
        }
      }
      const Matrix g_full = gram_full.selfadjointView<Eigen::Lower>();
      const Matrix g_1 = gram_1.selfadjointView<Eigen::Lower>();
      const Matrix g_2 = g_full - g_1;
      const Vector rhs_2 = rhs_full - rhs_1;
      const Vector th_full = pinv(SymMatrix(g_full / cfg.n_proj)).mat() * (rhs_full / cfg.n_proj);
      const Vector th_1 = pinv(SymMatrix(g_1 / half)).mat() * (rhs_1 / half);
      const Vector th_2 =
          pinv(SymMatrix(g_2 / (cfg.n_proj - half))).mat() * (rhs_2 / (cfg.n_proj - half));
      if (sign == 0) {
        fit.plus = th_full;
        fit.plus_1 = th_1;
        fit.plus_2 = th_2;
      } else {
        fit.minus = th_full;
        fit.minus_1 = th_1;
        fit.minus_2 = th_2;
      }
    }
    fits[a] = std::move(fit);
  });

  // Phase 2: Gram matrices of the derivative functions over fresh samples.
  Matrix gram = Matrix::Zero(kd, kd);
  Matrix gram_1 = Matrix::Zero(kd, kd);
  Matrix gram_2 = Matrix::Zero(kd, kd);
  const Matrix v_half = sym_sqrt(SymMatrix(v)).mat();
  double q_sum = 0.0, q_sq_sum = 0.0;

  const long eval_chunk = 32768;
  for (long start = 0; start < cfg.n_eval; start += eval_chunk) {
    const long len = std::min(eval_chunk, cfg.n_eval - start);
    const Matrix x_chunk = x_eval.middleRows(start, len);
    Matrix l(kd, len), l1(kd, len), l2(kd, len);
    parallel_for(kd, cfg.threads, [&](long a) {
      const int ci = static_cast<int>(a) / d;
      const int cj = static_cast<int>(a) % d;
      Matrix phi_p, phi_m;
      for (int sign = 0; sign < 2; ++sign) {
        Matrix centers = params.centers();
        centers(ci, cj) += (sign == 0 ? h : -h);
        const MixtureParams perturbed(centers);
        Matrix& dst = (sign == 0) ? phi_p : phi_m;
        dst = gating_features_batch(x_chunk, perturbed, gating_at(perturbed, gauge));
      }
      l.row(a) = -((phi_p * fits[a].plus - phi_m * fits[a].minus) / (2.0 * h)).transpose();
      l1.row(a) = -((phi_p * fits[a].plus_1 - phi_m * fits[a].minus_1) / (2.0 * h)).transpose();
      l2.row(a) = -((phi_p * fits[a].plus_2 - phi_m * fits[a].minus_2) / (2.0 * h)).transpose();
    });
    gram += l * l.transpose();
    gram_1 += l1 * l1.transpose();
    gram_2 += l2 * l2.transpose();
    const Matrix scaled = v_half * l;
    const Vector q = scaled.colwise().squaredNorm().transpose();
    q_sum += q.sum();
    q_sq_sum += q.squaredNorm();
  }
  const double n_eval = static_cast<double>(cfg.n_eval);
  const double value = (v.array() * (gram / n_eval).array()).sum();
  const double value_1 = (v.array() * (gram_1 / n_eval).array()).sum();
  const double value_2 = (v.array() * (gram_2 / n_eval).array()).sum();
  const double q_mean = q_sum / n_eval;
  const double q_var = std::max(q_sq_sum / n_eval - q_mean * q_mean, 0.0);
  const double se_eval = std::sqrt(q_var / n_eval);
  const double se_proj = 0.5 * std::abs(value_1 - value_2);

  InteractionResult out;
  out.value = value;
  out.std_error = std::sqrt(se_eval * se_eval + se_proj * se_proj);
  out.r_star = gauge.r_star;
  return out;
}

}  // namespace risklab
