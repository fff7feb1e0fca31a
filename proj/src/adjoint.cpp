#include "sboed/adjoint.hpp"

#include <string>

namespace sboed {

LinearizationPoint::LinearizationPoint(const TumorModel& model, Vector m)
    : model_(&model), m_(std::move(m)) {
  traj_ = model.solve(m_);
  factorize();
}

LinearizationPoint::LinearizationPoint(const TumorModel& model, Vector m, StateTrajectory trajectory)
    : model_(&model), m_(std::move(m)), traj_(std::move(trajectory)) {
  if (static_cast<int>(traj_.states.size()) != model.config().num_steps() + 1)
    throw UsageError("trajectory length does not match the time grid");
  factorize();
}

void LinearizationPoint::factorize() {
  const int steps = model_->config().num_steps();
  factors_.assign(steps, nullptr);
  source_.assign(steps, Vector());
  parallel_for(steps, [&](Index i) {
    const Vector& u = traj_.states[i + 1];
    auto f = std::make_shared<Factor>(model_->step_jacobian(u, m_));
    if (f->info() != Eigen::Success)
      throw NumericalError("linearized step operator factorization failed at step " + std::to_string(i + 1));
    factors_[i] = std::move(f);
    source_[i] = model_->lumped_mass().cwiseProduct(model_->reaction_dm(u, m_));
  });
}

int LinearizationPoint::last_selected(const TimeMask& xi) const {
  if (static_cast<int>(xi.size()) != model_->num_candidates()) throw UsageError("design length mismatch");
  for (int k = static_cast<int>(xi.size()) - 1; k >= 0; --k)
    if (xi[k]) return k;
  return -1;
}

std::vector<Matrix> LinearizationPoint::tangent(const Matrix& x, int last) const {
  if (x.rows() != model_->dim()) throw UsageError("direction size does not match mesh");
  const auto& c = model_->candidate_steps();
  if (last < 0) last = static_cast<int>(c.size()) - 1;
  const Vector decay = model_->lumped_mass() / model_->config().dt;
  const auto& nodes = model_->config().observed_nodes;

  std::vector<Matrix> out(static_cast<std::size_t>(last) + 1);
  Matrix uh = Matrix::Zero(x.rows(), x.cols());
  int k = 0;
  for (int n = 1; n <= c[last]; ++n) {
    Matrix rhs = decay.asDiagonal() * uh;
    rhs.noalias() += source_[n - 1].asDiagonal() * x;
    uh = factors_[n - 1]->solve(rhs);
    if (n == c[k]) {
      if (nodes.empty()) {
        out[k] = uh;
      } else {
        out[k].resize(static_cast<Index>(nodes.size()), x.cols());
        for (std::size_t i = 0; i < nodes.size(); ++i) out[k].row(i) = uh.row(nodes[i]);
      }
      ++k;
    }
  }
  return out;
}

ObservableSeries LinearizationPoint::tangent(const Vector& mhat) const {
  const auto blocks = tangent(Matrix(mhat), -1);
  ObservableSeries out;
  out.reserve(blocks.size());
  for (const auto& b : blocks) out.push_back(b.col(0));
  return out;
}

Matrix LinearizationPoint::adjoint(const std::vector<Matrix>& v, const TimeMask& xi) const {
  const int last = last_selected(xi);
  Index cols = 0;
  for (int k = 0; k <= last; ++k)
    if (xi[k]) cols = v.at(k).cols();
  Matrix grad = Matrix::Zero(model_->dim(), cols);
  if (last < 0) return grad;

  const auto& c = model_->candidate_steps();
  const Vector decay = model_->lumped_mass() / model_->config().dt;
  Matrix p = Matrix::Zero(model_->dim(), cols);
  int k = last;
  for (int n = c[last]; n >= 1; --n) {
    Matrix rhs = decay.asDiagonal() * p;
    if (k >= 0 && n == c[k]) {
      if (xi[k]) {
        if (v[k].rows() != model_->obs_dim() || v[k].cols() != cols)
          throw UsageError("adjoint source has the wrong shape");
        if (model_->config().observed_nodes.empty()) {
          rhs += v[k];
        } else {
          const auto& nodes = model_->config().observed_nodes;
          for (std::size_t i = 0; i < nodes.size(); ++i) rhs.row(nodes[i]) += v[k].row(i);
        }
      }
      --k;
    }
    p = factors_[n - 1]->solve(rhs);
    grad.noalias() += source_[n - 1].asDiagonal() * p;
  }
  return grad;
}

Vector LinearizationPoint::adjoint(const ObservableSeries& v, const TimeMask& xi) const {
  if (v.size() != xi.size()) throw UsageError("design length mismatch");
  std::vector<Matrix> blocks(v.size());
  for (std::size_t k = 0; k < v.size(); ++k)
    if (xi[k]) blocks[k] = v[k];
  const Matrix g = adjoint(blocks, xi);
  return g.cols() == 0 ? Vector(Vector::Zero(model_->dim())) : Vector(g.col(0));
}

Matrix LinearizationPoint::gn_hessian(const TimeMask& xi, double noise_var, const Matrix& x) const {
  const int last = last_selected(xi);
  if (last < 0) return Matrix::Zero(x.rows(), x.cols());
  auto t = tangent(x, last);
  for (int k = 0; k <= last; ++k) {
    if (xi[k]) t[k] /= noise_var;
  }
  return adjoint(t, xi);
}

Vector LinearizationPoint::gn_hessian(const TimeMask& xi, double noise_var, const Vector& mhat) const {
  return gn_hessian(xi, noise_var, Matrix(mhat)).col(0);
}

std::vector<Matrix> dense_jacobians(const LinearizationPoint& lp) {
  return lp.tangent(Matrix::Identity(lp.model().dim(), lp.model().dim()), -1);
}

double MapObjective::misfit(const ObservableSeries& f) const {
  double s = 0.0;
  for (std::size_t k = 0; k < xi.size(); ++k)
    if (xi[k]) s += (data[k] - f[k]).squaredNorm();
  return 0.5 * s / noise_var;
}

double MapObjective::cost(const Vector& m, const ObservableSeries& f) const {
  return misfit(f) + 0.5 * prior->precision_norm_sq(m - prior->mean());
}

Vector MapObjective::gradient(const LinearizationPoint& lp) const {
  const ObservableSeries f = lp.observables();
  ObservableSeries r(xi.size());
  for (std::size_t k = 0; k < xi.size(); ++k)
    if (xi[k]) r[k] = (f[k] - data[k]) / noise_var;
  return lp.adjoint(r, xi) + prior->precision_action(lp.parameter() - prior->mean());
}

}  // namespace sboed
