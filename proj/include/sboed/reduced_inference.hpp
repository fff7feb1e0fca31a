#pragma once

#include "sboed/surrogate.hpp"

#include <string>

namespace sboed {

/// Data of one conditioning in the reduced output space: for each step,
/// w_k = Psi_F^T Gamma_noise^-1 (y_k - F_bar) and c_k = |y_k - F_bar|^2 in the
/// Gamma_noise^-1 norm, plus the shared Gram G = Psi_F^T Gamma_noise^-1 Psi_F.
/// The misfit 1/2 sum_k [N_k^T G N_k - 2 N_k^T w_k + c_k] equals the full-space
/// misfit of the decoded prediction.
struct ProjectedData {
  Matrix gram;
  std::vector<Vector> weighted;
  std::vector<double> offset;
};

/// From full-space observations (one vector per candidate step).
ProjectedData project_data(const ReducedBases& bases, double noise_var, const ObservableSeries& y);
/// From reduced observations z_k = Psi_F^T (y_k - F_bar), whose noise is
/// N(0, noise_var I_rF) for orthonormal Psi_F.
ProjectedData reduced_data(double noise_var, const std::vector<Vector>& z);

struct ReducedMapOptions {
  int max_iter = 150;
  int history = 150;
  double grad_tol = 1e-7;   // on max |g_i|
  double step_tol = 1e-9;   // on max |step_i| and on the cost change
  int max_backtrack = 40;
};

struct ReducedMapResult {
  Vector beta;
  double cost = 0.0;
  double grad_norm = 0.0;  // max |g_i|
  int iterations = 0;
  bool converged = false;  // false: iteration cap or failed line search
  std::string reason;
};

/// Reduced objective 1/2 sum_k xi_k misfit_k(N^F_k(beta)) + 1/2 |beta|^2 and its gradient.
double reduced_cost(const Surrogate& net, const Vector& beta_f0, const ProjectedData& data, const TimeMask& xi,
                    const Vector& beta, Vector* gradient = nullptr);

/// L-BFGS for the reduced MAP point (Gamma_beta = I).
ReducedMapResult reduced_map(const Surrogate& net, const Vector& beta_f0, const ProjectedData& data,
                             const TimeMask& xi, const Vector& beta0, const ReducedMapOptions& options = {});

struct SurrogatePosterior {
  Vector beta_map;
  Vector lambda;  // descending, >= 0
  Matrix u;       // orthonormal columns
  TimeMask xi;
};

/// H = sum_k xi_k (grad N^J_k)^T G (grad N^J_k) at beta_map, dense symmetric
/// eigendecomposition.
SurrogatePosterior reduced_posterior(const Surrogate& net, const Vector& beta_f0, const Matrix& gram,
                                     const TimeMask& xi, const Vector& beta_map);
Matrix reduced_hessian(const Prediction& at_map, const Matrix& gram, const TimeMask& xi);

/// 1/2 sum_j [log(1 + l_j) - l_j / (1 + l_j)] + 1/2 |beta_map|^2.
double reduced_information_gain(const SurrogatePosterior& post);

/// beta_map + (I - U S U^T) beta, beta ~ N(0, I), s_j = 1 - 1/sqrt(1 + l_j).
Vector reduced_posterior_sample(const SurrogatePosterior& post, std::uint64_t seed);
Vector reduced_posterior_transform(const SurrogatePosterior& post, const Vector& beta);

}  // namespace sboed
