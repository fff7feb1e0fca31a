#pragma once

#include "sboed/adjoint.hpp"

#include <vector>

namespace sboed {

/// Dense affine-Gaussian model F_k(m) = J_k m + b_k, m ~ N(m0, Gamma0),
/// noise N(0, noise_var I). Closed forms for oracles; d_m <= 4096.
struct LinearGaussianModel {
  std::vector<Matrix> jac;
  std::vector<Vector> offset;
  Vector prior_mean;
  Matrix prior_cov;
  double noise_var = 1.0;

  int num_candidates() const { return static_cast<int>(jac.size()); }
  Index dim() const { return prior_mean.size(); }
  ObservableSeries apply(const Vector& m) const;
};

/// Dense model from the tumor PDE linearized at the prior mean (exact when
/// the reaction is frozen, since the PtO map is then affine).
LinearGaussianModel dense_linear_model(const TumorModel& model, const GaussianPrior& prior);

struct DenseGaussian {
  Vector mean;
  Matrix cov;
};

DenseGaussian prior_of(const LinearGaussianModel& model);
DenseGaussian exact_posterior(const LinearGaussianModel& model, const ObservableSeries& y, const TimeMask& xi);

/// KL(p || q) between Gaussians.
double gaussian_kl(const DenseGaussian& p, const DenseGaussian& q);
double log_det_spd(const Matrix& a);

/// 1/2 log det(I + Gn^-1/2 J Gamma0 J^T Gn^-1/2) over the stacked selected rows.
double exact_eig(const LinearGaussianModel& model, const TimeMask& xi);

/// Expected KL(posterior(y_prefix, y_new) || prior) under the predictive of
/// the new data given the observed prefix. `prefix` is the posterior after the
/// observed data; xi is the full design (observed prefix plus candidate).
double conditional_eig_exact(const LinearGaussianModel& model, const DenseGaussian& prefix, const TimeMask& xi);

}  // namespace sboed
