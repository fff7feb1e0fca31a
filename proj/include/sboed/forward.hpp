#pragma once

#include "sboed/common.hpp"
#include "sboed/mesh.hpp"

#include <vector>

namespace sboed {

/// Reaction term of the tumor model.
///   logistic:      e^m (1 - u) u
///   frozen_linear: s m, independent of u; makes the PtO map affine in m
///                  (used for linear-Gaussian oracles).
enum class ReactionMode { logistic, frozen_linear };

struct SimulationConfig {
  double final_time = 10.0;  // days
  double dt = 0.1;           // days
  int num_candidates = 10;   // K
  std::vector<int> candidate_steps;  // empty: every (K_sim / K)-th step
  double noise_std = 0.02;
  double newton_abs_tol = 1e-10;
  double newton_rel_tol = 1e-5;
  int newton_max_iter = 100;
  ReactionMode reaction = ReactionMode::logistic;
  double frozen_rate = 0.25;
  std::vector<Index> observed_nodes;  // empty: full-state observation

  int num_steps() const;                 // K_sim
  std::vector<int> candidates() const;   // strictly increasing in [1, K_sim]
  void validate() const;
};

/// u_0 .. u_{K_sim}.
struct StateTrajectory {
  std::vector<Vector> states;
};

/// F_1 .. F_K at the candidate times (index 0 is the first candidate).
using ObservableSeries = std::vector<Vector>;

/// Backward-Euler/FEM discretization of
///   du/dt = div(D grad u) + f(u, m),   natural boundary conditions,
/// with the time derivative and reaction carried by the lumped mass:
///   M_L (u_{n+1} - u_n)/dt + A_D u_{n+1} - M_L f(u_{n+1}, m) = 0.
class TumorModel {
 public:
  TumorModel(const Geometry& geometry, SimulationConfig config);

  const SimulationConfig& config() const { return config_; }
  Index dim() const { return lumped_.size(); }
  Index obs_dim() const;
  int num_candidates() const { return static_cast<int>(candidates_.size()); }
  const std::vector<int>& candidate_steps() const { return candidates_; }

  const Vector& initial_state() const { return u0_; }
  const Vector& lumped_mass() const { return lumped_; }
  const SparseMatrix& stiffness() const { return stiffness_; }
  const SparseMatrix& mass() const { return mass_; }

  /// Nodal reaction and its partial derivatives.
  Vector reaction(const Vector& u, const Vector& m) const;
  Vector reaction_du(const Vector& u, const Vector& m) const;
  Vector reaction_dm(const Vector& u, const Vector& m) const;

  /// Jacobian of the step residual w.r.t. u_{n+1}:
  /// M_L/dt + A_D - diag(M_L f_u(u, m)).
  SparseMatrix step_jacobian(const Vector& u, const Vector& m) const;

  StateTrajectory solve(const Vector& m) const;
  ObservableSeries observe(const StateTrajectory& trajectory) const;
  ObservableSeries pto(const Vector& m) const { return observe(solve(m)); }

  Vector observe_state(const Vector& u) const;       // B u
  Vector observe_transpose(const Vector& v) const;   // B^T v

 private:
  SimulationConfig config_;
  std::vector<int> candidates_;
  SparseMatrix mass_;
  SparseMatrix stiffness_;
  Vector lumped_;
  Vector u0_;
};

/// u_0(x) = amplitude * exp(-|x - c|^2 / (2 w^2)), c the gray-matter centroid,
/// w = width_fraction * lx.
Vector implantation_field(const Geometry& geometry, double amplitude = 0.5, double width_fraction = 0.1);

/// y_k = F_k + eps_k, eps_k ~ N(0, sigma^2 I).
ObservableSeries synthesize_data(const ObservableSeries& clean, double sigma, std::uint64_t seed);

/// Stacks a series into one vector (time-major).
Vector stack(const ObservableSeries& series);

}  // namespace sboed
