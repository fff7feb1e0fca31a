#include "doctest.h"

#include "sboed/lano.hpp"
#include "sboed/reduced_inference.hpp"
#include "sboed/reduction.hpp"

#include <Eigen/Eigenvalues>

using namespace sboed;

namespace {

/// N^F_k(beta) = C_k beta + b_k.
class AffineSurrogate final : public Surrogate {
 public:
  AffineSurrogate(const std::vector<Matrix>& c, const std::vector<Vector>& b)
      : Surrogate(static_cast<int>(c.front().cols()), static_cast<int>(c.front().rows()), static_cast<int>(c.size())) {
    for (std::size_t k = 0; k < c.size(); ++k) {
      params_.add("C_" + std::to_string(k + 1), c[k]);
      params_.add("b_" + std::to_string(k + 1), b[k]);
    }
  }
  std::string kind() const override { return "affine"; }
  io::KeyValues hyper() const override { return {}; }
  RolloutVars rollout(ad::Tape& t, const std::vector<ad::Var>& th, ad::Var beta_m, ad::Var, const SurrogateBatch*,
                      bool tangents) const override {
    RolloutVars out;
    const Index b = beta_m.cols();
    for (int k = 0; k < steps_; ++k) {
      const ad::Var f = add_col(matmul(th[2 * k], beta_m), th[2 * k + 1]);
      out.f.push_back(f);
      out.j.push_back(f);
      if (tangents) {
        const ad::Var d = matmul(th[2 * k], t.constant(Matrix::Identity(rank_m_, rank_m_).replicate(1, b)));
        out.df.push_back(d);
        out.dj.push_back(d);
      }
    }
    return out;
  }
};

Lano small_lano() {
  LanoConfig c;
  c.rank_m = 3;
  c.rank_f = 4;
  c.steps = 3;
  c.hidden = 8;
  c.attention = 8;
  c.init_seed = 5;
  return Lano(c);
}

std::vector<Vector> random_z(int k, int r, std::uint64_t seed) {
  NormalSampler rng(seed);
  std::vector<Vector> z;
  for (int i = 0; i < k; ++i) z.push_back(0.5 * rng.vector(r));
  return z;
}

Matrix orthonormal(Index n, Index r, std::uint64_t seed) {
  NormalSampler rng(seed);
  return Eigen::HouseholderQR<Matrix>(rng.matrix(n, r)).householderQ() * Matrix::Identity(n, r);
}

}  // namespace

TEST_CASE("no observations leave the prior untouched") {
  const Lano net = small_lano();
  const Vector f0 = Vector::Constant(4, 0.1);
  const auto data = reduced_data(0.04, random_z(3, 4, 1));
  const TimeMask none(3, false);
  const auto map = reduced_map(net, f0, data, none, Vector::Constant(3, 0.7));
  CHECK(map.converged);
  CHECK(map.beta.norm() <= 1e-7);
  const auto post = reduced_posterior(net, f0, data.gram, none, map.beta);
  CHECK(post.lambda.cwiseAbs().maxCoeff() == 0.0);
  CHECK(reduced_information_gain(post) <= 1e-14);
}

TEST_CASE("affine surrogate MAP matches the ridge closed form") {
  NormalSampler rng(2);
  const int k = 3, rm = 4, rf = 5;
  std::vector<Matrix> c;
  std::vector<Vector> b;
  for (int i = 0; i < k; ++i) {
    c.push_back(rng.matrix(rf, rm));
    b.push_back(rng.vector(rf));
  }
  const AffineSurrogate net(c, b);
  const double noise_var = 0.25;
  const auto z = random_z(k, rf, 3);
  const auto data = reduced_data(noise_var, z);
  const TimeMask xi{true, false, true};

  Matrix a = Matrix::Identity(rm, rm);
  Vector rhs = Vector::Zero(rm);
  for (int i = 0; i < k; ++i) {
    if (!xi[i]) continue;
    a += c[i].transpose() * c[i] / noise_var;
    rhs += c[i].transpose() * (z[i] - b[i]) / noise_var;
  }
  const Vector ridge = a.ldlt().solve(rhs);
  const auto map = reduced_map(net, Vector::Zero(rf), data, xi, Vector::Zero(rm));
  CHECK(map.converged);
  CHECK(relative_error(map.beta, ridge) <= 1e-6);

  const auto post = reduced_posterior(net, Vector::Zero(rf), data.gram, xi, map.beta);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(a - Matrix::Identity(rm, rm));
  for (int j = 0; j < rm; ++j) CHECK(post.lambda[j] == doctest::Approx(eig.eigenvalues()[rm - 1 - j]).epsilon(1e-10));
}

TEST_CASE("reduced cost gradient matches finite differences") {
  const Lano net = small_lano();
  const Vector f0 = Vector::Constant(4, 0.1);
  const auto data = reduced_data(0.04, random_z(3, 4, 7));
  const TimeMask xi{true, false, true};
  NormalSampler rng(8);
  const Vector beta = rng.vector(3), dir = rng.vector(3);
  Vector g;
  reduced_cost(net, f0, data, xi, beta, &g);
  const double h = 1e-6;
  const double fd = (reduced_cost(net, f0, data, xi, beta + h * dir) - reduced_cost(net, f0, data, xi, beta - h * dir)) /
                    (2 * h);
  CHECK(std::abs(fd - g.dot(dir)) <= 1e-6 * std::max(1.0, std::abs(fd)));
}

TEST_CASE("reduced MAP meets its stopping contract") {
  const Lano net = small_lano();
  const Vector f0 = Vector::Constant(4, 0.1);
  const auto data = reduced_data(0.04, random_z(3, 4, 9));
  const auto map = reduced_map(net, f0, data, all_times(3), Vector::Zero(3));
  INFO(map.reason);
  REQUIRE(map.converged);
  Vector g;
  reduced_cost(net, f0, data, all_times(3), map.beta, &g);
  CHECK(g.cwiseAbs().maxCoeff() == doctest::Approx(map.grad_norm));
  if (map.reason == "gradient tolerance") CHECK(map.grad_norm <= 1e-7);
  CHECK(map.grad_norm <= 1e-5);

  ReducedMapOptions capped;
  capped.max_iter = 1;
  capped.grad_tol = 0.0;
  const auto one = reduced_map(net, f0, data, all_times(3), Vector::Zero(3), capped);
  CHECK_FALSE(one.converged);
  CHECK(one.iterations == 1);
  CHECK(one.cost <= reduced_cost(net, f0, data, all_times(3), Vector::Zero(3)));
}

TEST_CASE("projected surrogate eigenvalues equal the full problem restricted to span(Psi_m)") {
  const Geometry g = build_geometry(8, 8, 24.0, 24.0, default_region(24.0, 24.0));
  const GaussianPrior prior(g);
  SimulationConfig cfg;
  cfg.final_time = 0.4;
  cfg.num_candidates = 2;
  cfg.reaction = ReactionMode::frozen_linear;
  cfg.observed_nodes = {10, 27, 36, 53};
  const TumorModel model(g, cfg);
  const double noise_var = cfg.noise_std * cfg.noise_std;
  const auto jac = dense_jacobians(LinearizationPoint(model, prior.mean()));
  const ObservableSeries f_mean = model.pto(prior.mean());

  ReducedBases bases;
  bases.psi_m = prior.unwhiten_block(orthonormal(prior.dim(), 4, 11));
  bases.psi_f = orthonormal(4, 4, 12);
  bases.f_mean = Vector::Constant(4, 0.05);
  std::vector<Matrix> c;
  std::vector<Vector> b;
  for (int k = 0; k < 2; ++k) {
    c.push_back(bases.psi_f.transpose() * jac[k] * bases.psi_m);
    b.push_back(bases.encode_f(f_mean[k]));
  }
  const AffineSurrogate net(c, b);
  const Matrix gram = bases.psi_f.transpose() * bases.psi_f / noise_var;
  const auto post = reduced_posterior(net, Vector::Zero(4), gram, all_times(2), Vector::Zero(4));

  const Matrix h = (jac[0].transpose() * jac[0] + jac[1].transpose() * jac[1]) / noise_var;
  Eigen::GeneralizedSelfAdjointEigenSolver<Matrix> ges(bases.psi_m.transpose() * h * bases.psi_m,
                                                       bases.psi_m.transpose() * prior.dense_precision() * bases.psi_m);
  for (int j = 0; j < 4; ++j) CHECK(post.lambda[j] == doctest::Approx(ges.eigenvalues()[3 - j]).epsilon(1e-6));
}

TEST_CASE("reduced Hessian is symmetric positive semidefinite") {
  const Lano net = small_lano();
  NormalSampler rng(13);
  const Matrix gram = Matrix::Identity(4, 4) / 0.04;
  for (int trial = 0; trial < 5; ++trial) {
    const Vector beta = rng.vector(3);
    const Prediction p = net.predict(beta, Vector::Constant(4, 0.1), true);
    const Matrix h = reduced_hessian(p, gram, all_times(3));
    CHECK((h - h.transpose()).norm() <= 1e-12 * h.norm());
    Eigen::SelfAdjointEigenSolver<Matrix> eig(h);
    CHECK(eig.eigenvalues().minCoeff() >= -1e-10 * std::max(1.0, h.norm()));
  }
}

TEST_CASE("reduced posterior samples have covariance (I - U S U^T)^2") {
  SurrogatePosterior post;
  post.beta_map = Vector::Constant(4, 0.3);
  post.lambda = (Vector(4) << 5.0, 1.0, 0.2, 0.0).finished();
  post.u = orthonormal(4, 4, 17);
  const Vector s = (1.0 - (1.0 + post.lambda.array()).rsqrt()).matrix();
  const Matrix t = Matrix::Identity(4, 4) - post.u * s.asDiagonal() * post.u.transpose();
  const Matrix cov = t * t;

  const int n = 100000;
  Vector mean = Vector::Zero(4);
  Matrix second = Matrix::Zero(4, 4);
  for (int i = 0; i < n; ++i) {
    const Vector x = reduced_posterior_sample(post, mix_seed(19, i)) - post.beta_map;
    mean += x / n;
    second += x * x.transpose() / n;
  }
  const Matrix est = second - mean * mean.transpose();
  for (int i = 0; i < 4; ++i) {
    CHECK(std::abs(mean[i]) <= 5.0 * std::sqrt(cov(i, i) / n));
    for (int j = 0; j < 4; ++j) {
      const double se = std::sqrt((cov(i, i) * cov(j, j) + cov(i, j) * cov(i, j)) / n);
      CHECK(std::abs(est(i, j) - cov(i, j)) <= 5.0 * se);
    }
  }
}

TEST_CASE("decoded reduced posterior draw equals the full-space transform") {
  const Geometry g = build_geometry(8, 8, 24.0, 24.0, default_region(24.0, 24.0));
  const GaussianPrior prior(g);
  ReducedBases bases;
  bases.psi_m = prior.unwhiten_block(orthonormal(prior.dim(), 5, 23));
  bases.psi_f = orthonormal(4, 4, 24);
  bases.f_mean = Vector::Zero(4);

  SurrogatePosterior post;
  NormalSampler rng(25);
  post.beta_map = rng.vector(5);
  post.lambda = (Vector(5) << 9.0, 3.0, 1.0, 0.1, 0.0).finished();
  post.u = orthonormal(5, 5, 26);
  const Vector beta = rng.vector(5);

  const Vector reduced = bases.decode_m(prior, reduced_posterior_transform(post, beta));
  const LaplacePosterior full{bases.decode_m(prior, post.beta_map), post.lambda, bases.psi_m * post.u, {}};
  const Vector direct = posterior_transform(full, prior, bases.psi_m * beta);
  CHECK(relative_error(reduced, direct) <= 1e-8);
}
