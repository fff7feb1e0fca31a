#pragma once

#include "sboed/adjoint.hpp"

#include <filesystem>
#include <functional>

namespace sboed {

/// Applies a symmetric operator to a block of column vectors.
using BlockOperator = std::function<Matrix(const Matrix&)>;

struct Eigenpairs {
  Vector values;   // descending
  Matrix vectors;  // one column per value
};

/// Double-pass randomized eigensolver for a symmetric positive semidefinite
/// operator on R^n: sketch with r + p Gaussian columns, orthonormalize,
/// project with a second pass, and solve the small dense problem. Raw values
/// in (-1e-8, 0) are clamped to zero.
Eigenpairs randomized_eigensolver(const BlockOperator& op, Index n, int r, int oversampling,
                                  std::uint64_t seed);

/// Generalized problem H w = lambda Gamma_prior^-1 w, solved on the whitened
/// operator U^T H U with U = unwhiten. Returned vectors are
/// Gamma_prior^-1-orthonormal.
Eigenpairs randomized_gevp(const BlockOperator& hessian, const GaussianPrior& prior, int r, int oversampling,
                           std::uint64_t seed);

struct MapOptions {
  double rel_tol = 1e-6;  // on the gradient norm sqrt(g^T Gamma_prior g)
  double abs_tol = 1e-8;
  int max_iter = 100;
  int max_cg = 1000;
  int max_backtrack = 30;
};

struct MapResult {
  Vector m;
  StateTrajectory trajectory;  // forward solution at m
  double cost = 0.0;
  double grad_norm = 0.0;
  double initial_grad_norm = 0.0;
  int iterations = 0;
  int cg_iterations = 0;
};

/// Raised when Gauss-Newton exhausts its iteration or line-search budget;
/// carries the best iterate.
class MapFailure : public NumericalError {
 public:
  MapFailure(const std::string& what, MapResult best) : NumericalError(what), result(std::move(best)) {}
  MapResult result;
};

/// Inexact Gauss-Newton-CG for the MAP objective, prior-preconditioned CG
/// with forcing term min(0.5, sqrt(|g| / |g_0|)) and Armijo backtracking.
MapResult compute_map(const MapObjective& objective, const Vector& m0, const MapOptions& options = {});

struct LaplacePosterior {
  Vector map;
  Vector lambda;  // descending, >= 0
  Matrix w;       // Gamma_prior^-1-orthonormal columns
  TimeMask xi;
};

/// Low-rank Laplace approximation at the linearization point (the MAP).
LaplacePosterior laplace_at(const LinearizationPoint& at_map, const GaussianPrior& prior, const TimeMask& xi,
                            double noise_var, int r, int oversampling, std::uint64_t seed);

/// 1/2 sum_j [log(1 + l_j) - l_j / (1 + l_j)] + 1/2 |m_MAP - m_prior|^2_{Gamma_prior^-1}.
double information_gain(const LaplacePosterior& post, const GaussianPrior& prior);
double information_gain_terms(const Vector& lambda, double map_norm_sq);

/// s_j = 1 - 1/sqrt(1 + l_j); posterior draw m_MAP + (I - W S W^T Gamma_prior^-1) m, m ~ N(0, Gamma_prior).
Vector posterior_sample(const LaplacePosterior& post, const GaussianPrior& prior, std::uint64_t seed);
Vector posterior_transform(const LaplacePosterior& post, const GaussianPrior& prior, const Vector& fluctuation);

/// Pointwise standard deviation of the low-rank posterior:
/// diag(Gamma_prior) - sum_j d_j w_j^2 with d_j = l_j / (1 + l_j).
Vector posterior_std(const LaplacePosterior& post, const GaussianPrior& prior);

void write_spectrum_csv(const std::filesystem::path& path, const Vector& lambda);

}  // namespace sboed
