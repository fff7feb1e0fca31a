#include "doctest.h"

#include "sboed/adjoint.hpp"

#include <Eigen/SparseCholesky>

#include <cmath>

using namespace sboed;

namespace {

struct Setup {
  Geometry geometry;
  GaussianPrior prior;
  TumorModel model;

  explicit Setup(int n, double t = 2.0, int k = 4)
      : geometry(build_geometry(n, n, 24.0, 24.0, default_region(24.0, 24.0))),
        prior(geometry),
        model(geometry, config(t, k)) {}

  static SimulationConfig config(double t, int k) {
    SimulationConfig c;
    c.final_time = t;
    c.num_candidates = k;
    c.newton_abs_tol = 1e-14;
    c.newton_rel_tol = 0.0;
    return c;
  }
};

double dot(const ObservableSeries& a, const ObservableSeries& b, const TimeMask& xi) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k)
    if (xi[k]) s += a[k].dot(b[k]);
  return s;
}

}  // namespace

TEST_CASE("one factorization per time step") {
  Setup s(8);
  const LinearizationPoint lp(s.model, s.prior.sample(1));
  CHECK(lp.num_factorizations() == 20);
}

TEST_CASE("tangent is linear and vanishes at zero") {
  Setup s(8);
  const LinearizationPoint lp(s.model, s.prior.sample(1));
  for (const auto& v : lp.tangent(Vector(Vector::Zero(s.model.dim())))) CHECK(v.norm() == 0.0);
  const Vector d = s.prior.sample_fluctuation(2);
  const auto a = lp.tangent(d);
  const auto b = lp.tangent(Vector(3.7 * d));
  for (std::size_t k = 0; k < a.size(); ++k) CHECK(relative_error(b[k], 3.7 * a[k]) < 1e-12);
}

TEST_CASE("tangent matches central finite differences") {
  Setup s(16);
  const Vector m = s.prior.sample(3);
  const Vector d = s.prior.sample_fluctuation(4);
  const LinearizationPoint lp(s.model, m);
  const auto jd = lp.tangent(d);
  const double eps = 1e-5;
  const auto fp = s.model.pto(m + eps * d);
  const auto fm = s.model.pto(m - eps * d);
  for (std::size_t k = 0; k < jd.size(); ++k) {
    const Vector fd = (fp[k] - fm[k]) / (2.0 * eps);
    CHECK(relative_error(fd, jd[k]) <= 1e-4);
  }
}

TEST_CASE("adjoint passes the dot test for every design") {
  Setup s(8);
  const LinearizationPoint lp(s.model, s.prior.sample(5));
  NormalSampler rng(6);
  const Vector d = rng.vector(s.model.dim());
  ObservableSeries v;
  for (int k = 0; k < 4; ++k) v.push_back(rng.vector(s.model.obs_dim()));
  const auto jd = lp.tangent(d);
  for (int mask = 0; mask < 16; ++mask) {
    TimeMask xi(4);
    for (int k = 0; k < 4; ++k) xi[k] = (mask >> k) & 1;
    const Vector g = lp.adjoint(v, xi);
    if (mask == 0) {
      CHECK(g.norm() == 0.0);
      continue;
    }
    const double lhs = dot(v, jd, xi);
    CHECK(std::abs(lhs - d.dot(g)) <= 1e-10 * std::abs(lhs));
  }
  ObservableSeries zeros(4, Vector::Zero(s.model.obs_dim()));
  CHECK(lp.adjoint(zeros, all_times(4)).norm() == 0.0);
  CHECK_THROWS_AS(lp.adjoint(zeros, TimeMask(3, true)), UsageError);
}

TEST_CASE("adjoint with subsampled observation passes the dot test") {
  auto g = build_geometry(8, 8, 24.0, 24.0, default_region(24.0, 24.0));
  const GaussianPrior prior(g);
  auto cfg = Setup::config(1.0, 2);
  cfg.observed_nodes = {3, 20, 41};
  const TumorModel model(g, cfg);
  const LinearizationPoint lp(model, prior.sample(2));
  NormalSampler rng(9);
  const Vector d = rng.vector(model.dim());
  const ObservableSeries v{rng.vector(3), rng.vector(3)};
  const double lhs = dot(v, lp.tangent(d), all_times(2));
  CHECK(std::abs(lhs - d.dot(lp.adjoint(v, all_times(2)))) <= 1e-10 * std::abs(lhs));
}

TEST_CASE("gauss-newton hessian is symmetric, PSD, and matches the dense oracle") {
  Setup s(8);
  const LinearizationPoint lp(s.model, s.prior.sample(7));
  const double nv = 0.02 * 0.02;
  NormalSampler rng(8);
  const Vector a = rng.vector(s.model.dim());
  const Vector b = rng.vector(s.model.dim());
  const TimeMask xi{true, false, true, true};
  const Vector ha = lp.gn_hessian(xi, nv, a);
  const Vector hb = lp.gn_hessian(xi, nv, b);
  CHECK(a.dot(ha) >= 0.0);
  CHECK(std::abs(b.dot(ha) - a.dot(hb)) <= 1e-10 * ha.norm() * b.norm());

  const auto jac = dense_jacobians(lp);
  const TimeMask one{false, true, false, false};
  const Vector exact = jac[1].transpose() * (jac[1] * a) / nv;
  CHECK(relative_error(lp.gn_hessian(one, nv, a), exact) <= 1e-8);
  CHECK(lp.gn_hessian(TimeMask(4, false), nv, a).norm() == 0.0);
}

TEST_CASE("cached factorizations reproduce fresh solves bit for bit") {
  Setup s(8);
  const Vector m = s.prior.sample(10);
  const LinearizationPoint lp(s.model, m);
  const Vector d = s.prior.sample_fluctuation(11);
  const auto t = lp.tangent(d);

  const auto& traj = lp.trajectory();
  const Vector decay = s.model.lumped_mass() / s.model.config().dt;
  Vector uh = Vector::Zero(s.model.dim());
  for (int n = 1; n <= s.model.config().num_steps(); ++n) {
    const Vector& u = traj.states[n];
    Eigen::SimplicialLDLT<SparseMatrix> fresh(s.model.step_jacobian(u, m));
    Matrix rhs = decay.asDiagonal() * Matrix(uh);
    rhs.noalias() += s.model.lumped_mass().cwiseProduct(s.model.reaction_dm(u, m)).asDiagonal() * Matrix(d);
    uh = fresh.solve(rhs).col(0);
  }
  CHECK(uh == t.back());
}

TEST_CASE("misfit gradient matches finite differences and reduces correctly") {
  Setup s(8);
  const double nv = 0.02 * 0.02;
  const Vector truth = s.prior.sample(12);
  const auto y = synthesize_data(s.model.pto(truth), 0.02, 13);
  const TimeMask xi{false, true, false, true};
  const MapObjective obj{&s.model, &s.prior, y, xi, nv};

  const Vector m = s.prior.sample(14);
  const LinearizationPoint lp(s.model, m);
  const Vector g = obj.gradient(lp);
  const Vector d = s.prior.sample_fluctuation(15);
  const double exact = g.dot(d);
  double best = 1.0;
  for (double eps : {1e-3, 1e-4, 1e-5, 1e-6}) {
    const Vector mp = m + eps * d, mm = m - eps * d;
    const double fd = (obj.cost(mp, s.model.pto(mp)) - obj.cost(mm, s.model.pto(mm))) / (2.0 * eps);
    best = std::min(best, std::abs(fd - exact) / std::abs(exact));
  }
  CHECK(best <= 1e-5);

  const MapObjective none{&s.model, &s.prior, y, TimeMask(4, false), nv};
  CHECK(relative_error(none.gradient(lp), s.prior.precision_action(m - s.prior.mean())) < 1e-14);

  const LinearizationPoint at_prior(s.model, s.prior.mean());
  const MapObjective exact_fit{&s.model, &s.prior, at_prior.observables(), all_times(4), nv};
  CHECK(exact_fit.gradient(at_prior).norm() == 0.0);
}
