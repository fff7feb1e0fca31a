#include "sboed/laplace.hpp"

#include "sboed/io.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include <cmath>
#include <string>

namespace sboed {

Eigenpairs randomized_eigensolver(const BlockOperator& op, Index n, int r, int oversampling, std::uint64_t seed) {
  const Index l = r + oversampling;
  if (r < 1 || oversampling < 0 || l > n) throw UsageError("randomized eigensolver needs 1 <= r and r + p <= n");
  NormalSampler rng(seed);
  const Matrix omega = rng.matrix(n, l);
  const Matrix y = op(omega);
  Eigen::HouseholderQR<Matrix> qr(y);
  const Matrix q = qr.householderQ() * Matrix::Identity(n, l);
  Matrix t = q.transpose() * op(q);
  t = 0.5 * (t + t.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> eig(t);
  if (eig.info() != Eigen::Success) throw NumericalError("projected eigenproblem failed");

  Eigenpairs out;
  out.values.resize(r);
  out.vectors.resize(n, r);
  for (int j = 0; j < r; ++j) {
    const Index src = l - 1 - j;  // ascending order from Eigen
    double v = eig.eigenvalues()[src];
    if (v < 0.0) {
      if (v < -1e-8) throw NumericalError("operator is not positive semidefinite (eigenvalue " + std::to_string(v) + ")");
      if (v < -1e-12) warn("clamping negative eigenvalue " + std::to_string(v));
      v = 0.0;
    }
    out.values[j] = v;
    out.vectors.col(j) = q * eig.eigenvectors().col(src);
  }
  return out;
}

Eigenpairs randomized_gevp(const BlockOperator& hessian, const GaussianPrior& prior, int r, int oversampling,
                           std::uint64_t seed) {
  const BlockOperator whitened = [&](const Matrix& x) {
    return prior.unwhiten_transpose_block(hessian(prior.unwhiten_block(x)));
  };
  Eigenpairs e = randomized_eigensolver(whitened, prior.dim(), r, oversampling, seed);
  e.vectors = prior.unwhiten_block(e.vectors);
  return e;
}

namespace {

double dual_norm(const GaussianPrior& prior, const Vector& g) {
  return std::sqrt(std::max(0.0, g.dot(prior.covariance_action(g))));
}

/// Full Hessian action by central differences of the gradient; O(eps^2).
Vector fd_hessian_action(const MapObjective& obj, const Vector& m, const Vector& v) {
  const double vn = v.norm();
  if (vn == 0.0) return Vector::Zero(v.size());
  const double eps = 1e-5 * std::max(1.0, m.norm()) / vn;
  const auto grad_at = [&](const Vector& x) {
    return obj.gradient(LinearizationPoint(*obj.model, x, obj.model->solve(x)));
  };
  return (grad_at(m + eps * v) - grad_at(m - eps * v)) / (2.0 * eps);
}

}  // namespace

MapResult compute_map(const MapObjective& obj, const Vector& m0, const MapOptions& opt) {
  const TumorModel& model = *obj.model;
  const GaussianPrior& prior = *obj.prior;
  MapResult res;
  res.m = m0;
  res.trajectory = model.solve(m0);
  res.cost = obj.cost(m0, model.observe(res.trajectory));

  // Gauss-Newton contracts slowly where the residual curvature nearly cancels
  // the data term. After three consecutive steps that shrink the gradient by
  // less than 30% (increases are normal for GN and do not count) the full
  // Hessian, by differences, takes over.
  bool newton = false;
  int slow_steps = 0;
  double previous_norm = 0.0;
  for (;;) {
    const LinearizationPoint lp(model, res.m, res.trajectory);
    const Vector g = obj.gradient(lp);
    res.grad_norm = dual_norm(prior, g);
    if (res.iterations == 0) res.initial_grad_norm = res.grad_norm;
    if (res.iterations > 0) {
      const double ratio = res.grad_norm / previous_norm;
      slow_steps = ratio > 0.7 && ratio <= 1.0 ? slow_steps + 1 : 0;
      if (slow_steps >= 3) newton = true;
    }
    previous_norm = res.grad_norm;
    if (res.grad_norm <= opt.abs_tol || res.grad_norm <= opt.rel_tol * res.initial_grad_norm) return res;
    if (res.iterations >= opt.max_iter)
      throw MapFailure("MAP solver reached " + std::to_string(opt.max_iter) + " iterations (gradient norm " +
                           std::to_string(res.grad_norm) + ")",
                       res);
    ++res.iterations;

    // prior-preconditioned CG on (H_gn + Gamma_prior^-1) p = -g
    const double eta = std::min(0.5, std::sqrt(res.grad_norm / res.initial_grad_norm));
    const auto apply = [&](const Vector& v) {
      if (newton) return fd_hessian_action(obj, res.m, v);
      return Vector(lp.gn_hessian(obj.xi, obj.noise_var, v) + prior.precision_action(v));
    };
    Vector p = Vector::Zero(g.size());
    Vector r = -g;
    Vector z = prior.covariance_action(r);
    Vector d = z;
    double rz = r.dot(z);
    const double stop = eta * res.grad_norm;
    for (int it = 0; it < opt.max_cg && std::sqrt(std::max(rz, 0.0)) > stop; ++it) {
      const Vector hd = apply(d);
      const double curv = d.dot(hd);
      if (!(curv > 0.0)) break;
      const double alpha = rz / curv;
      p += alpha * d;
      r -= alpha * hd;
      z = prior.covariance_action(r);
      const double rz_new = r.dot(z);
      d = z + (rz_new / rz) * d;
      rz = rz_new;
      ++res.cg_iterations;
    }
    if (p.squaredNorm() == 0.0) p = -prior.covariance_action(g);

    const double slope = g.dot(p);
    double step = 1.0;
    bool accepted = false;
    for (int bt = 0; bt < opt.max_backtrack; ++bt, step *= 0.5) {
      const Vector trial = res.m + step * p;
      StateTrajectory traj;
      try {
        traj = model.solve(trial);
      } catch (const NumericalError&) {
        continue;
      }
      const double c = obj.cost(trial, model.observe(traj));
      if (c <= res.cost + 1e-4 * step * slope) {
        res.m = trial;
        res.trajectory = std::move(traj);
        res.cost = c;
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      // a failed line search at round-off level is convergence in practice
      if (res.grad_norm <= 1e3 * opt.rel_tol * res.initial_grad_norm) return res;
      throw MapFailure("MAP line search failed (gradient norm " + std::to_string(res.grad_norm) + ")", res);
    }
  }
}

LaplacePosterior laplace_at(const LinearizationPoint& lp, const GaussianPrior& prior, const TimeMask& xi,
                            double noise_var, int r, int oversampling, std::uint64_t seed) {
  const BlockOperator h = [&](const Matrix& x) { return lp.gn_hessian(xi, noise_var, x); };
  Eigenpairs e = randomized_gevp(h, prior, r, oversampling, seed);
  return {lp.parameter(), std::move(e.values), std::move(e.vectors), xi};
}

double information_gain_terms(const Vector& lambda, double map_norm_sq) {
  double s = 0.0;
  for (Index j = 0; j < lambda.size(); ++j) s += std::log1p(lambda[j]) - lambda[j] / (1.0 + lambda[j]);
  return 0.5 * s + 0.5 * map_norm_sq;
}

double information_gain(const LaplacePosterior& post, const GaussianPrior& prior) {
  return information_gain_terms(post.lambda, prior.precision_norm_sq(post.map - prior.mean()));
}

Vector posterior_transform(const LaplacePosterior& post, const GaussianPrior& prior, const Vector& m) {
  const Vector s = (1.0 - (1.0 + post.lambda.array()).rsqrt()).matrix();
  const Vector coeff = s.cwiseProduct(post.w.transpose() * prior.precision_action(m));
  return post.map + m - post.w * coeff;
}

Vector posterior_sample(const LaplacePosterior& post, const GaussianPrior& prior, std::uint64_t seed) {
  return posterior_transform(post, prior, prior.sample_fluctuation(seed));
}

Vector posterior_std(const LaplacePosterior& post, const GaussianPrior& prior) {
  Vector var = prior.pointwise_variance();
  for (Index j = 0; j < post.lambda.size(); ++j) {
    const double d = post.lambda[j] / (1.0 + post.lambda[j]);
    var -= d * post.w.col(j).cwiseAbs2();
  }
  return var.cwiseMax(0.0).cwiseSqrt();
}

void write_spectrum_csv(const std::filesystem::path& path, const Vector& lambda) {
  io::CsvWriter csv(path, {"index", "lambda"});
  for (Index j = 0; j < lambda.size(); ++j) csv.row({std::to_string(j + 1), io::format_double(lambda[j])});
}

}  // namespace sboed
