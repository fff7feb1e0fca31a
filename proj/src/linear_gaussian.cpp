#include "sboed/linear_gaussian.hpp"

#include <Eigen/Cholesky>

#include <cmath>

namespace sboed {

ObservableSeries LinearGaussianModel::apply(const Vector& m) const {
  ObservableSeries f;
  f.reserve(jac.size());
  for (std::size_t k = 0; k < jac.size(); ++k) f.push_back(jac[k] * m + offset[k]);
  return f;
}

LinearGaussianModel dense_linear_model(const TumorModel& model, const GaussianPrior& prior) {
  const LinearizationPoint lp(model, prior.mean());
  LinearGaussianModel out;
  out.jac = dense_jacobians(lp);
  const ObservableSeries f = lp.observables();
  for (std::size_t k = 0; k < f.size(); ++k) out.offset.push_back(f[k] - out.jac[k] * prior.mean());
  out.prior_mean = prior.mean();
  out.prior_cov = prior.dense_covariance();
  out.noise_var = model.config().noise_std * model.config().noise_std;
  return out;
}

double log_det_spd(const Matrix& a) {
  Eigen::LLT<Matrix> llt(a);
  if (llt.info() != Eigen::Success) throw NumericalError("matrix is not positive definite");
  return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

DenseGaussian prior_of(const LinearGaussianModel& model) { return {model.prior_mean, model.prior_cov}; }

DenseGaussian exact_posterior(const LinearGaussianModel& model, const ObservableSeries& y, const TimeMask& xi) {
  if (static_cast<int>(xi.size()) != model.num_candidates()) throw UsageError("design length mismatch");
  Eigen::LLT<Matrix> prior_llt(model.prior_cov);
  if (prior_llt.info() != Eigen::Success) throw NumericalError("prior covariance is not positive definite");
  const Index n = model.dim();
  Matrix precision = prior_llt.solve(Matrix::Identity(n, n));
  Vector rhs = prior_llt.solve(model.prior_mean);
  for (std::size_t k = 0; k < xi.size(); ++k) {
    if (!xi[k]) continue;
    precision += model.jac[k].transpose() * model.jac[k] / model.noise_var;
    rhs += model.jac[k].transpose() * (y[k] - model.offset[k]) / model.noise_var;
  }
  precision = 0.5 * (precision + precision.transpose());
  Eigen::LLT<Matrix> llt(precision);
  if (llt.info() != Eigen::Success) throw NumericalError("posterior precision is not positive definite");
  DenseGaussian post;
  post.cov = llt.solve(Matrix::Identity(n, n));
  post.cov = 0.5 * (post.cov + post.cov.transpose());
  post.mean = llt.solve(rhs);
  return post;
}

double gaussian_kl(const DenseGaussian& p, const DenseGaussian& q) {
  Eigen::LLT<Matrix> q_llt(q.cov);
  if (q_llt.info() != Eigen::Success) throw NumericalError("covariance is not positive definite");
  const Vector diff = p.mean - q.mean;
  const double trace = q_llt.solve(p.cov).trace();
  const double quad = diff.dot(q_llt.solve(diff));
  return 0.5 * (trace - static_cast<double>(p.mean.size()) + quad + log_det_spd(q.cov) - log_det_spd(p.cov));
}

double exact_eig(const LinearGaussianModel& model, const TimeMask& xi) {
  Index rows = 0;
  for (std::size_t k = 0; k < xi.size(); ++k)
    if (xi[k]) rows += model.jac[k].rows();
  if (rows == 0) return 0.0;
  Matrix j(rows, model.dim());
  Index r = 0;
  for (std::size_t k = 0; k < xi.size(); ++k) {
    if (!xi[k]) continue;
    j.middleRows(r, model.jac[k].rows()) = model.jac[k];
    r += model.jac[k].rows();
  }
  Matrix s = Matrix::Identity(rows, rows) + j * model.prior_cov * j.transpose() / model.noise_var;
  s = 0.5 * (s + s.transpose());
  return 0.5 * log_det_spd(s);
}

double conditional_eig_exact(const LinearGaussianModel& model, const DenseGaussian& prefix, const TimeMask& xi) {
  // E[mu_T] = mu_prefix and Cov(mu_T) = Sigma_prefix - Sigma_T under the predictive
  ObservableSeries dummy(xi.size(), Vector());
  for (std::size_t k = 0; k < xi.size(); ++k) dummy[k] = Vector::Zero(model.jac[k].rows());
  const DenseGaussian terminal = exact_posterior(model, dummy, xi);
  Eigen::LLT<Matrix> p_llt(model.prior_cov);
  const Vector diff = prefix.mean - model.prior_mean;
  const double n = static_cast<double>(model.dim());
  return 0.5 * (p_llt.solve(prefix.cov).trace() - n + log_det_spd(model.prior_cov) - log_det_spd(terminal.cov) +
                diff.dot(p_llt.solve(diff)));
}

}  // namespace sboed
