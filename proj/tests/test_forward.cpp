#include "doctest.h"

#include "sboed/forward.hpp"
#include "sboed/prior.hpp"

#include <cmath>

using namespace sboed;

namespace {
Geometry grid(int n) { return build_geometry(n, n, 24.0, 24.0, default_region(24.0, 24.0)); }
}  // namespace

TEST_CASE("default candidate times are every tenth step") {
  SimulationConfig cfg;
  CHECK(cfg.num_steps() == 100);
  CHECK(cfg.candidates() == std::vector<int>{10, 20, 30, 40, 50, 60, 70, 80, 90, 100});
  cfg.candidate_steps = {5, 3};
  CHECK_THROWS_AS(cfg.validate(), UsageError);
  cfg.candidate_steps = {3, 101};
  CHECK_THROWS_AS(cfg.validate(), UsageError);
  SimulationConfig odd;
  odd.dt = 0.3;
  CHECK_THROWS_AS(odd.validate(), UsageError);
}

TEST_CASE("zero dynamics keep the initial state") {
  auto g = grid(8);
  g.material.diffusion.setZero();
  SimulationConfig cfg;
  cfg.final_time = 1.0;
  cfg.num_candidates = 5;
  const TumorModel model(g, cfg);
  const auto traj = model.solve(Vector::Constant(model.dim(), -1e3));
  for (const auto& u : traj.states) CHECK((u - model.initial_state()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("pointwise logistic growth converges at first order") {
  auto g = grid(5);
  g.material.diffusion.setZero();
  const double growth = 0.7, t_end = 2.0;
  std::vector<double> err;
  for (double dt : {0.1, 0.05, 0.025, 0.0125}) {
    SimulationConfig cfg;
    cfg.final_time = t_end;
    cfg.dt = dt;
    cfg.num_candidates = 1;
    cfg.newton_abs_tol = 1e-14;
    cfg.newton_rel_tol = 0.0;
    const TumorModel model(g, cfg);
    const auto traj = model.solve(Vector::Constant(model.dim(), std::log(growth)));
    const Vector& u0 = model.initial_state();
    double e = 0.0;
    for (Index i = 0; i < model.dim(); ++i) {
      const double exact = u0[i] / (u0[i] + (1.0 - u0[i]) * std::exp(-growth * t_end));
      e = std::max(e, std::abs(traj.states.back()[i] - exact));
    }
    err.push_back(e);
  }
  for (std::size_t i = 1; i < err.size(); ++i) {
    const double ratio = err[i - 1] / err[i];
    CHECK(ratio > 1.8);
    CHECK(ratio < 2.2);
  }
}

TEST_CASE("default configuration stays within [0, 1]") {
  const auto g = grid(32);
  const GaussianPrior prior(g);
  const TumorModel model(g, SimulationConfig{});
  for (std::uint64_t seed : {1u, 2u}) {
    const auto traj = model.solve(prior.sample(seed));
    for (const auto& u : traj.states) {
      CHECK(u.maxCoeff() <= 1.0 + 1e-6);
      CHECK(u.minCoeff() >= -1e-6);
    }
  }
}

TEST_CASE("newton residual at accepted steps meets the tolerance") {
  const auto g = grid(16);
  const GaussianPrior prior(g);
  SimulationConfig cfg;
  const TumorModel model(g, cfg);
  const Vector m = prior.sample(4);
  const auto traj = model.solve(m);
  const Vector& ml = model.lumped_mass();
  for (std::size_t n = 1; n < traj.states.size(); ++n) {
    const Vector& u = traj.states[n];
    const Vector& p = traj.states[n - 1];
    const Vector r = ml.cwiseProduct(u - p) / cfg.dt + model.stiffness() * u - ml.cwiseProduct(model.reaction(u, m));
    const Vector r0 = model.stiffness() * p - ml.cwiseProduct(model.reaction(p, m));
    CHECK(r.norm() <= std::max(cfg.newton_abs_tol, cfg.newton_rel_tol * r0.norm()));
  }
}

TEST_CASE("time refinement of the observable converges at first order") {
  const auto g = grid(12);
  const GaussianPrior prior(g);
  const Vector m = prior.sample(8);
  std::vector<Vector> finals;
  for (double dt : {0.2, 0.1, 0.05, 0.025, 0.0125}) {
    SimulationConfig cfg;
    cfg.final_time = 4.0;
    cfg.dt = dt;
    cfg.num_candidates = 1;
    cfg.newton_abs_tol = 1e-13;
    cfg.newton_rel_tol = 0.0;
    finals.push_back(TumorModel(g, cfg).pto(m).back());
  }
  for (std::size_t i = 2; i < finals.size(); ++i) {
    const double ratio = (finals[i - 2] - finals[i - 1]).norm() / (finals[i - 1] - finals[i]).norm();
    CHECK(ratio >= 1.5);
    CHECK(ratio <= 2.5);
  }
}

TEST_CASE("observation modes") {
  const auto g = grid(8);
  SimulationConfig cfg;
  cfg.final_time = 1.0;
  cfg.num_candidates = 2;
  const TumorModel model(g, cfg);
  const Vector m = GaussianPrior(g).sample(1);
  const auto traj = model.solve(m);
  const auto f = model.observe(traj);
  REQUIRE(f.size() == 2);
  CHECK(f[0] == traj.states[5]);
  CHECK(f[1] == traj.states[10]);
  CHECK(model.pto(m) == f);

  cfg.observed_nodes = {17};
  const TumorModel sub(g, cfg);
  const auto fs = sub.observe(sub.solve(m));
  CHECK(sub.obs_dim() == 1);
  CHECK(fs[0][0] == traj.states[5][17]);
  CHECK(fs[1][0] == traj.states[10][17]);

  cfg.observed_nodes = {64};
  CHECK_THROWS_AS(TumorModel(g, cfg), UsageError);
}

TEST_CASE("synthetic noise has the configured statistics") {
  ObservableSeries clean(10, Vector::Constant(10000, 0.3));
  CHECK(synthesize_data(clean, 0.0, 1) == clean);
  CHECK(synthesize_data(clean, 0.02, 5) == synthesize_data(clean, 0.02, 5));
  const Vector e = stack(synthesize_data(clean, 0.02, 5)) - stack(clean);
  const double sd = std::sqrt(e.squaredNorm() / e.size());
  CHECK(sd == doctest::Approx(0.02).epsilon(0.01));
}

TEST_CASE("misfit at the truth has chi-square expectation") {
  // E[Phi] = d * d_y / 2 for d selected times of dimension d_y
  const auto g = grid(6);
  SimulationConfig cfg;
  cfg.final_time = 0.8;
  cfg.num_candidates = 4;
  const TumorModel model(g, cfg);
  const Vector m = GaussianPrior(g).sample(3);
  const auto f = model.pto(m);
  const std::vector<bool> xi{true, false, true, false};
  const int reps = 2000;
  double mean = 0.0;
  for (int s = 0; s < reps; ++s) {
    const auto y = synthesize_data(f, cfg.noise_std, mix_seed(77, s));
    double phi = 0.0;
    for (int k = 0; k < 4; ++k)
      if (xi[k]) phi += 0.5 * (y[k] - f[k]).squaredNorm() / (cfg.noise_std * cfg.noise_std);
    mean += phi / reps;
  }
  const double expected = 2.0 * model.obs_dim() / 2.0;
  // Var(Phi) = d d_y / 2
  CHECK(std::abs(mean - expected) < 5.0 * std::sqrt(expected / reps));
}
