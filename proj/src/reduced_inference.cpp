#include "sboed/reduced_inference.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <deque>

namespace sboed {

ProjectedData project_data(const ReducedBases& bases, double noise_var, const ObservableSeries& y) {
  if (!(noise_var > 0.0)) throw UsageError("noise variance must be positive");
  ProjectedData d;
  d.gram = bases.psi_f.transpose() * bases.psi_f / noise_var;
  for (const auto& yk : y) {
    const Vector c = yk - bases.f_mean;
    d.weighted.push_back(bases.psi_f.transpose() * c / noise_var);
    d.offset.push_back(c.squaredNorm() / noise_var);
  }
  return d;
}

ProjectedData reduced_data(double noise_var, const std::vector<Vector>& z) {
  if (!(noise_var > 0.0)) throw UsageError("noise variance must be positive");
  if (z.empty()) throw UsageError("no reduced observations");
  ProjectedData d;
  d.gram = Matrix::Identity(z.front().size(), z.front().size()) / noise_var;
  for (const auto& zk : z) {
    d.weighted.push_back(zk / noise_var);
    d.offset.push_back(zk.squaredNorm() / noise_var);
  }
  return d;
}

namespace {

void check_design(const Surrogate& net, const ProjectedData& data, const TimeMask& xi) {
  if (static_cast<int>(xi.size()) != net.num_steps() || data.weighted.size() != xi.size())
    throw UsageError("design length mismatch");
}

}  // namespace

double reduced_cost(const Surrogate& net, const Vector& beta_f0, const ProjectedData& data, const TimeMask& xi,
                    const Vector& beta, Vector* gradient) {
  check_design(net, data, xi);
  bool any = false;
  for (bool b : xi) any = any || b;
  double cost = 0.5 * beta.squaredNorm();
  if (gradient) *gradient = beta;
  if (!any) return cost;
  const Prediction p = net.predict(beta, beta_f0, gradient != nullptr);
  for (std::size_t k = 0; k < xi.size(); ++k) {
    if (!xi[k]) continue;
    const Vector n = p.f.col(static_cast<Index>(k));
    const Vector gn = data.gram * n;
    cost += 0.5 * (n.dot(gn) - 2.0 * n.dot(data.weighted[k]) + data.offset[k]);
    if (gradient) *gradient += p.jac_f[k].transpose() * (gn - data.weighted[k]);
  }
  return cost;
}

ReducedMapResult reduced_map(const Surrogate& net, const Vector& beta_f0, const ProjectedData& data,
                             const TimeMask& xi, const Vector& beta0, const ReducedMapOptions& opt) {
  ReducedMapResult res;
  res.beta = beta0;
  Vector g;
  res.cost = reduced_cost(net, beta_f0, data, xi, res.beta, &g);
  std::deque<std::pair<Vector, Vector>> memory;  // (s, y)

  for (;;) {
    res.grad_norm = g.cwiseAbs().maxCoeff();
    if (res.grad_norm <= opt.grad_tol) {
      res.converged = true;
      res.reason = "gradient tolerance";
      return res;
    }
    if (res.iterations >= opt.max_iter) {
      res.reason = "iteration cap (" + std::to_string(opt.max_iter) + ")";
      return res;
    }
    ++res.iterations;

    // two-loop recursion
    Vector q = g;
    std::vector<double> alpha(memory.size());
    for (std::size_t i = memory.size(); i-- > 0;) {
      const auto& [s, y] = memory[i];
      alpha[i] = s.dot(q) / y.dot(s);
      q -= alpha[i] * y;
    }
    if (!memory.empty()) {
      const auto& [s, y] = memory.back();
      q *= s.dot(y) / y.squaredNorm();
    } else {
      q *= std::min(1.0, 1.0 / g.cwiseAbs().sum());
    }
    for (std::size_t i = 0; i < memory.size(); ++i) {
      const auto& [s, y] = memory[i];
      q += (alpha[i] - y.dot(q) / y.dot(s)) * s;
    }
    Vector dir = -q;
    double slope = g.dot(dir);
    if (!(slope < 0.0)) {
      memory.clear();
      dir = -g * std::min(1.0, 1.0 / g.cwiseAbs().sum());
      slope = g.dot(dir);
    }

    double step = 1.0, trial_cost = 0.0;
    Vector trial, trial_g;
    bool accepted = false;
    for (int bt = 0; bt < opt.max_backtrack; ++bt, step *= 0.5) {
      trial = res.beta + step * dir;
      try {
        trial_cost = reduced_cost(net, beta_f0, data, xi, trial, &trial_g);
      } catch (const NumericalError&) {
        continue;
      }
      if (trial_cost <= res.cost + 1e-4 * step * slope) {
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      res.reason = "line search failed";
      return res;
    }
    const Vector s = trial - res.beta, y = trial_g - g;
    const double change = std::abs(res.cost - trial_cost);
    res.beta = trial;
    res.cost = trial_cost;
    g = trial_g;
    if (s.dot(y) > 1e-12 * y.squaredNorm()) {
      memory.emplace_back(s, y);
      if (static_cast<int>(memory.size()) > opt.history) memory.pop_front();
    }
    if (s.cwiseAbs().maxCoeff() <= opt.step_tol || change < opt.step_tol) {
      res.grad_norm = g.cwiseAbs().maxCoeff();
      res.converged = true;
      res.reason = "step tolerance";
      return res;
    }
  }
}

Matrix reduced_hessian(const Prediction& p, const Matrix& gram, const TimeMask& xi) {
  const Index r = p.jac_j.empty() ? 0 : p.jac_j.front().cols();
  Matrix h = Matrix::Zero(r, r);
  for (std::size_t k = 0; k < xi.size(); ++k)
    if (xi[k]) h += p.jac_j[k].transpose() * gram * p.jac_j[k];
  return h;
}

SurrogatePosterior reduced_posterior(const Surrogate& net, const Vector& beta_f0, const Matrix& gram,
                                     const TimeMask& xi, const Vector& beta_map) {
  if (static_cast<int>(xi.size()) != net.num_steps()) throw UsageError("design length mismatch");
  const Prediction p = net.predict(beta_map, beta_f0, true);
  const Matrix h = reduced_hessian(p, gram, xi);
  if ((h - h.transpose()).norm() > 1e-8 * std::max(1.0, h.norm()))
    throw NumericalError("reduced Hessian is not symmetric");
  Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (h + h.transpose()));
  if (eig.info() != Eigen::Success) throw NumericalError("reduced eigenproblem failed");
  const Index r = h.rows();
  SurrogatePosterior post;
  post.beta_map = beta_map;
  post.xi = xi;
  post.lambda.resize(r);
  post.u.resize(r, r);
  for (Index j = 0; j < r; ++j) {
    double v = eig.eigenvalues()[r - 1 - j];
    if (v < 0.0) {
      if (v < -1e-8 * std::max(1.0, eig.eigenvalues().cwiseAbs().maxCoeff()))
        throw NumericalError("reduced Hessian is not positive semidefinite");
      v = 0.0;
    }
    post.lambda[j] = v;
    post.u.col(j) = eig.eigenvectors().col(r - 1 - j);
  }
  return post;
}

double reduced_information_gain(const SurrogatePosterior& post) {
  double s = 0.0;
  for (Index j = 0; j < post.lambda.size(); ++j) s += std::log1p(post.lambda[j]) - post.lambda[j] / (1.0 + post.lambda[j]);
  return 0.5 * s + 0.5 * post.beta_map.squaredNorm();
}

Vector reduced_posterior_transform(const SurrogatePosterior& post, const Vector& beta) {
  const Vector s = (1.0 - (1.0 + post.lambda.array()).rsqrt()).matrix();
  return post.beta_map + beta - post.u * s.cwiseProduct(post.u.transpose() * beta);
}

Vector reduced_posterior_sample(const SurrogatePosterior& post, std::uint64_t seed) {
  NormalSampler rng(seed);
  return reduced_posterior_transform(post, rng.vector(post.beta_map.size()));
}

}  // namespace sboed
