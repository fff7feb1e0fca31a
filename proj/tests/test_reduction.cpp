#include "doctest.h"

#include "sboed/reduction.hpp"

#include <Eigen/Eigenvalues>

#include <filesystem>

using namespace sboed;
namespace fs = std::filesystem;

namespace {

Geometry grid(int n) { return build_geometry(n, n, 24.0, 24.0, default_region(24.0, 24.0)); }

SimulationConfig short_run(int k) {
  SimulationConfig c;
  c.final_time = 0.2 * k;
  c.num_candidates = k;
  return c;
}

}  // namespace

TEST_CASE("DIS of a linear map spans the dense generalized eigenvectors") {
  const auto g = grid(8);
  const GaussianPrior prior(g);
  auto cfg = short_run(1);
  cfg.reaction = ReactionMode::frozen_linear;
  cfg.observed_nodes = {10, 27, 36, 53};
  const TumorModel model(g, cfg);
  const int r = 4;
  const auto dis = compute_dis(model, prior, 3, r, 6, 7);

  const Matrix prec = prior.dense_precision();
  const Matrix gram = dis.vectors.transpose() * prec * dis.vectors;
  CHECK((gram - Matrix::Identity(r, r)).cwiseAbs().maxCoeff() <= 1e-8);
  for (int j = 0; j < r; ++j) {
    CHECK(dis.values[j] >= 0.0);
    if (j > 0) CHECK(dis.values[j] <= dis.values[j - 1]);
  }

  const auto jac = dense_jacobians(LinearizationPoint(model, prior.mean()));
  Eigen::GeneralizedSelfAdjointEigenSolver<Matrix> ge(jac[0].transpose() * jac[0], prec);
  const Matrix w = ge.eigenvectors().rightCols(r);
  const Matrix residual = w - dis.vectors * (dis.vectors.transpose() * prec * w);
  for (int j = 0; j < r; ++j) {
    const double sin_angle = std::sqrt(residual.col(j).dot(prec * residual.col(j)));
    CHECK(sin_angle <= 1e-6);
  }
}

TEST_CASE("PCA reconstruction obeys the Eckart-Young identity") {
  NormalSampler rng(3);
  const Matrix low = rng.matrix(30, 5) * rng.matrix(5, 40);
  const auto exact = compute_pca(low, 5);
  const Matrix rec = (exact.basis * (exact.basis.transpose() * (low.colwise() - exact.mean))).colwise() + exact.mean;
  CHECK((rec - low).norm() <= 1e-10 * low.norm());
  CHECK((exact.basis.transpose() * exact.basis - Matrix::Identity(5, 5)).cwiseAbs().maxCoeff() <= 1e-10);

  const Matrix x = rng.matrix(30, 40);
  const int r = 7;
  const auto pca = compute_pca(x, r);
  const Matrix c = x.colwise() - pca.mean;
  const double err = (c - pca.basis * (pca.basis.transpose() * c)).squaredNorm();
  const double tail = pca.singular_values.tail(pca.singular_values.size() - r).squaredNorm();
  CHECK(err == doctest::Approx(tail).epsilon(1e-8));
  for (Index j = 1; j < pca.singular_values.size(); ++j)
    CHECK(pca.singular_values[j] <= pca.singular_values[j - 1]);
  CHECK_THROWS_AS(compute_pca(x.leftCols(3), 4), UsageError);
}

TEST_CASE("encode and decode are projections") {
  const auto g = grid(16);
  const GaussianPrior prior(g);
  ReducedBases b;
  b.psi_m = prior.unwhiten_block(Matrix::Identity(prior.dim(), prior.dim()));  // full rank
  NormalSampler rng(5);
  b.psi_f = Eigen::HouseholderQR<Matrix>(rng.matrix(prior.dim(), 6)).householderQ() * Matrix::Identity(prior.dim(), 6);
  b.f_mean = rng.vector(prior.dim());

  CHECK(b.encode_m(prior, prior.mean()).norm() == 0.0);
  const Vector m = prior.sample(9);
  CHECK(relative_error(b.decode_m(prior, b.encode_m(prior, m)), m) <= 1e-8);

  ReducedBases partial = b;
  partial.psi_m = b.psi_m.leftCols(10);
  const Vector beta = rng.vector(10);
  const Vector once = partial.decode_m(prior, beta);
  CHECK(relative_error(partial.decode_m(prior, partial.encode_m(prior, once)), once) <= 1e-10);

  const Vector bf = rng.vector(6);
  const Vector f = b.decode_f(bf);
  CHECK(relative_error(b.decode_f(b.encode_f(f)), f) <= 1e-10);
  CHECK_THROWS_AS(b.encode_f(Vector::Zero(3)), UsageError);
}

TEST_CASE("reduced Jacobians match the dense Jacobian by both routes") {
  const auto g = grid(8);
  const GaussianPrior prior(g);
  const TumorModel model(g, short_run(3));
  NormalSampler rng(2);
  for (auto [rm, rf] : {std::pair{3, 5}, std::pair{6, 2}}) {
    ReducedBases b;
    b.psi_m = prior.unwhiten_block(rng.matrix(model.dim(), rm));
    b.psi_f = Eigen::HouseholderQR<Matrix>(rng.matrix(model.dim(), rf)).householderQ() *
              Matrix::Identity(model.dim(), rf);
    b.f_mean = Vector::Zero(model.dim());
    const Vector m = prior.sample(4);
    const auto s = encode_sample(model, prior, b, m);
    const auto jac = dense_jacobians(LinearizationPoint(model, m));
    for (int k = 0; k < 3; ++k) {
      const Matrix exact = b.psi_f.transpose() * jac[k] * b.psi_m;
      CHECK((s.beta_j[k] - exact).norm() <= 1e-8 * exact.norm());
      CHECK(relative_error(s.outputs.col(k), model.pto(m)[k]) == 0.0);
    }
    CHECK(s.beta_f.col(0) == b.encode_f(model.initial_state()));
  }
}

TEST_CASE("reduction pipeline is deterministic and persists exactly") {
  const auto g = grid(8);
  const GaussianPrior prior(g);
  const TumorModel model(g, short_run(3));
  const auto a = build_reduction(model, prior, 2, 6, 3, 4, 4, 11);
  const auto b = build_reduction(model, prior, 2, 6, 3, 4, 4, 11);
  const fs::path da = fs::temp_directory_path() / "sboed_red_a", db = fs::temp_directory_path() / "sboed_red_b";
  save_training_set(da, "train", a.training);
  save_training_set(db, "train", b.training);
  save_bases(da, a.bases);
  for (const char* f : {"train_beta_m.sbf1", "train_beta_f.sbf1", "train_beta_j.sbf1", "train_outputs.sbf1"})
    CHECK(io::file_hash(da / f) == io::file_hash(db / f));

  const auto back = load_training_set(da, "train");
  REQUIRE(back.samples.size() == 6);
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(back.samples[i].beta_m == a.training.samples[i].beta_m);
    CHECK(back.samples[i].beta_f == a.training.samples[i].beta_f);
    CHECK(back.samples[i].outputs == a.training.samples[i].outputs);
    for (int k = 0; k < 3; ++k) CHECK(back.samples[i].beta_j[k] == a.training.samples[i].beta_j[k]);
  }
  const auto bases = load_bases(da);
  CHECK(bases.psi_m == a.bases.psi_m);
  CHECK(bases.psi_f == a.bases.psi_f);
  CHECK((bases.psi_f.transpose() * bases.psi_f - Matrix::Identity(4, 4)).cwiseAbs().maxCoeff() <= 1e-10);
  const Matrix gram = bases.psi_m.transpose() * prior.dense_precision() * bases.psi_m;
  CHECK((gram - Matrix::Identity(3, 3)).cwiseAbs().maxCoeff() <= 1e-8);
  // column 0 is the same for every sample since u_0 is fixed
  for (const auto& s : a.training.samples) CHECK(s.beta_f.col(0) == a.training.samples[0].beta_f.col(0));
}
