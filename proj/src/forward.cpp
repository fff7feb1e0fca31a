#include "sboed/forward.hpp"

#include "sboed/prior.hpp"

#include <Eigen/SparseCholesky>

#include <cmath>
#include <limits>
#include <string>

namespace sboed {

int SimulationConfig::num_steps() const {
  return static_cast<int>(std::lround(final_time / dt));
}

std::vector<int> SimulationConfig::candidates() const {
  if (!candidate_steps.empty()) return candidate_steps;
  const int n = num_steps();
  std::vector<int> c;
  for (int k = 1; k <= num_candidates; ++k) c.push_back(k * (n / num_candidates));
  return c;
}

void SimulationConfig::validate() const {
  if (!(dt > 0.0) || !(final_time > 0.0)) throw UsageError("dt and T must be positive");
  const int n = num_steps();
  if (std::abs(n * dt - final_time) > 1e-9 * final_time) throw UsageError("T/dt must be an integer");
  if (!(noise_std > 0.0)) throw UsageError("noise std must be positive");
  if (candidate_steps.empty()) {
    if (num_candidates < 1 || n % num_candidates != 0)
      throw UsageError("K must divide the number of time steps");
  } else {
    int prev = 0;
    for (int c : candidate_steps) {
      if (c <= prev || c > n) throw UsageError("candidate steps must be strictly increasing in [1, K_sim]");
      prev = c;
    }
  }
  if (newton_max_iter < 1) throw UsageError("newton_max_iter must be positive");
}

Vector implantation_field(const Geometry& g, double amplitude, double width_fraction) {
  const auto c = gray_centroid(g);
  const double w = width_fraction * g.mesh.lx();
  Vector u(g.mesh.num_nodes());
  for (Index n = 0; n < u.size(); ++n) {
    const double dx = g.mesh.x(n) - c[0];
    const double dy = g.mesh.y(n) - c[1];
    u[n] = amplitude * std::exp(-(dx * dx + dy * dy) / (2.0 * w * w));
  }
  return u;
}

TumorModel::TumorModel(const Geometry& g, SimulationConfig config) : config_(std::move(config)) {
  config_.validate();
  candidates_ = config_.candidates();
  mass_ = assemble_mass(g.mesh);
  lumped_ = lump(mass_);
  stiffness_ = assemble_bilinear_form(g.mesh, g.material.diffusion, Vector::Zero(g.mesh.num_nodes()));
  u0_ = implantation_field(g);
  for (Index i : config_.observed_nodes)
    if (i < 0 || i >= dim()) throw UsageError("observed node index out of range");
}

Index TumorModel::obs_dim() const {
  return config_.observed_nodes.empty() ? dim() : static_cast<Index>(config_.observed_nodes.size());
}

Vector TumorModel::reaction(const Vector& u, const Vector& m) const {
  if (config_.reaction == ReactionMode::frozen_linear) return config_.frozen_rate * m;
  return m.array().exp() * (1.0 - u.array()) * u.array();
}

Vector TumorModel::reaction_du(const Vector& u, const Vector& m) const {
  if (config_.reaction == ReactionMode::frozen_linear) return Vector::Zero(u.size());
  return m.array().exp() * (1.0 - 2.0 * u.array());
}

Vector TumorModel::reaction_dm(const Vector& u, const Vector& m) const {
  if (config_.reaction == ReactionMode::frozen_linear) return Vector::Constant(u.size(), config_.frozen_rate);
  return m.array().exp() * (1.0 - u.array()) * u.array();
}

SparseMatrix TumorModel::step_jacobian(const Vector& u, const Vector& m) const {
  SparseMatrix j = stiffness_;
  const Vector diag = lumped_ / config_.dt - lumped_.cwiseProduct(reaction_du(u, m));
  for (Index i = 0; i < j.rows(); ++i) j.coeffRef(i, i) += diag[i];
  return j;
}

StateTrajectory TumorModel::solve(const Vector& m) const {
  if (m.size() != dim()) throw UsageError("parameter size does not match mesh");
  if (!m.allFinite()) throw NumericalError("non-finite parameter field");
  const int steps = config_.num_steps();
  const double dt = config_.dt;
  StateTrajectory traj;
  traj.states.reserve(steps + 1);
  traj.states.push_back(u0_);

  Eigen::SimplicialLDLT<SparseMatrix> ldlt;
  ldlt.analyzePattern(step_jacobian(u0_, m));
  auto residual = [&](const Vector& u, const Vector& prev) -> Vector {
    return lumped_.cwiseProduct(u - prev) / dt + stiffness_ * u - lumped_.cwiseProduct(reaction(u, m));
  };

  for (int n = 0; n < steps; ++n) {
    const Vector& prev = traj.states.back();
    Vector u = prev;
    Vector r = residual(u, prev);
    const double tol = std::max(config_.newton_abs_tol, config_.newton_rel_tol * r.norm());
    int it = 0;
    while (r.norm() > tol) {
      if (++it > config_.newton_max_iter)
        throw NumericalError("Newton failed to converge at time step " + std::to_string(n + 1) +
                             " (residual " + std::to_string(r.norm()) + ")");
      ldlt.factorize(step_jacobian(u, m));
      if (ldlt.info() != Eigen::Success)
        throw NumericalError("Newton Jacobian factorization failed at time step " + std::to_string(n + 1));
      const Vector du = ldlt.solve(r);
      u -= du;
      r = residual(u, prev);
      if (!r.allFinite()) throw NumericalError("Newton diverged at time step " + std::to_string(n + 1));
      // update at round-off level: the residual cannot decrease further
      if (du.norm() <= 4.0 * std::numeric_limits<double>::epsilon() * u.norm()) break;
    }
    traj.states.push_back(std::move(u));
  }
  return traj;
}

Vector TumorModel::observe_state(const Vector& u) const {
  if (config_.observed_nodes.empty()) return u;
  Vector y(obs_dim());
  for (Index i = 0; i < y.size(); ++i) y[i] = u[config_.observed_nodes[i]];
  return y;
}

Vector TumorModel::observe_transpose(const Vector& v) const {
  if (config_.observed_nodes.empty()) return v;
  Vector u = Vector::Zero(dim());
  for (Index i = 0; i < v.size(); ++i) u[config_.observed_nodes[i]] += v[i];
  return u;
}

ObservableSeries TumorModel::observe(const StateTrajectory& t) const {
  ObservableSeries f;
  f.reserve(candidates_.size());
  for (int c : candidates_) {
    if (c >= static_cast<int>(t.states.size())) throw UsageError("candidate index beyond trajectory");
    f.push_back(observe_state(t.states[c]));
  }
  return f;
}

ObservableSeries synthesize_data(const ObservableSeries& clean, double sigma, std::uint64_t seed) {
  if (sigma < 0.0) throw UsageError("noise std must be nonnegative");
  NormalSampler rng(seed);
  ObservableSeries y = clean;
  for (auto& yk : y) yk += sigma * rng.vector(yk.size());
  return y;
}

Vector stack(const ObservableSeries& series) {
  Index n = 0;
  for (const auto& v : series) n += v.size();
  Vector out(n);
  Index k = 0;
  for (const auto& v : series) {
    out.segment(k, v.size()) = v;
    k += v.size();
  }
  return out;
}

}  // namespace sboed
