#pragma once

#include "sboed/forward.hpp"
#include "sboed/prior.hpp"

#include <Eigen/SparseCholesky>

#include <memory>
#include <vector>

namespace sboed {

/// Selected observation times, one flag per candidate.
using TimeMask = std::vector<bool>;

inline TimeMask all_times(int k) { return TimeMask(static_cast<std::size_t>(k), true); }

/// The PtO map linearized at m. Holds the state trajectory and one
/// factorization of the step Jacobian per time step; all tangent and
/// adjoint solves reuse them.
///
/// Tangent recursion (u^_0 = 0):
///   J_n u^_n = (M_L/dt) u^_{n-1} + M_L f_m(u_n, m) o m^
/// Its exact discrete adjoint (p_{K_sim+1} = 0, J_n symmetric):
///   J_n p_n = g_n + (M_L/dt) p_{n+1},   grad = sum_n M_L f_m(u_n, m) o p_n
/// where g_n = B^T v_k at candidate step n = c_k.
class LinearizationPoint {
 public:
  LinearizationPoint(const TumorModel& model, Vector m);
  LinearizationPoint(const TumorModel& model, Vector m, StateTrajectory trajectory);

  const TumorModel& model() const { return *model_; }
  const Vector& parameter() const { return m_; }
  const StateTrajectory& trajectory() const { return traj_; }
  ObservableSeries observables() const { return model_->observe(traj_); }
  std::size_t num_factorizations() const { return factors_.size(); }

  /// J_k m^ for every candidate k.
  ObservableSeries tangent(const Vector& mhat) const;
  /// Column-blocked tangent: entry k is J_k X (d_y x cols). Only candidates
  /// up to `last` (inclusive, candidate index) are computed; -1 means all.
  std::vector<Matrix> tangent(const Matrix& x, int last = -1) const;

  /// sum_k xi_k J_k^T v_k.
  Vector adjoint(const ObservableSeries& v, const TimeMask& xi) const;
  Matrix adjoint(const std::vector<Matrix>& v, const TimeMask& xi) const;

  /// sum_k xi_k J_k^T J_k m^ / noise_var.
  Vector gn_hessian(const TimeMask& xi, double noise_var, const Vector& mhat) const;
  Matrix gn_hessian(const TimeMask& xi, double noise_var, const Matrix& x) const;

 private:
  using Factor = Eigen::SimplicialLDLT<SparseMatrix>;

  void factorize();
  int last_selected(const TimeMask& xi) const;

  const TumorModel* model_;
  Vector m_;
  StateTrajectory traj_;
  std::vector<std::shared_ptr<const Factor>> factors_;  // factors_[n-1] at step n
  std::vector<Vector> source_;                          // M_L f_m(u_n, m), same indexing
};

/// Dense J_k for every candidate (d_y x d_m each), by d_m tangent solves.
std::vector<Matrix> dense_jacobians(const LinearizationPoint& lp);

/// Data-misfit-plus-prior objective
///   Phi(m) = 1/2 sum_k xi_k |y_k - F_k(m)|^2 / sigma^2 + 1/2 |m - m_prior|^2_{Gamma_prior^-1}.
struct MapObjective {
  const TumorModel* model;
  const GaussianPrior* prior;
  ObservableSeries data;
  TimeMask xi;
  double noise_var;

  double misfit(const ObservableSeries& f) const;
  double cost(const Vector& m, const ObservableSeries& f) const;
  Vector gradient(const LinearizationPoint& lp) const;
};

}  // namespace sboed
