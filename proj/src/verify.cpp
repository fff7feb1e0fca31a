#include "sboed/verify.hpp"

#include "sboed/lano.hpp"
#include "sboed/linear_gaussian.hpp"
#include "sboed/sboed.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>

namespace sboed {

namespace {

Geometry square(int n) { return build_geometry(n, n, 24.0, 24.0, default_region(24.0, 24.0)); }

/// 8x8 grid, frozen reaction, four observed nodes: the PtO map is affine.
struct LinearCase {
  Geometry geometry = square(8);
  GaussianPrior prior{geometry};
  TumorModel model;
  LinearGaussianModel dense;

  explicit LinearCase(int k) : model(geometry, config(k)), dense(dense_linear_model(model, prior)) {}

  static SimulationConfig config(int k) {
    SimulationConfig c;
    c.final_time = static_cast<double>(k);
    c.num_candidates = k;
    c.reaction = ReactionMode::frozen_linear;
    c.observed_nodes = {9, 22, 45, 54};
    return c;
  }
  ObservableSeries data(std::uint64_t seed) const {
    return synthesize_data(model.pto(prior.sample(seed)), model.config().noise_std, seed + 1);
  }
};

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(3);
  s << std::scientific << v;
  return s.str();
}

CheckResult timed(const std::function<CheckResult()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  CheckResult r = body();
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

double jacobian_fd_error(const Surrogate& net, const Vector& bm, const Vector& bf0, bool j_head) {
  const auto p = net.predict(bm, bf0, true);
  double worst = 0.0;
  const double h = 1e-5;
  for (Index i = 0; i < bm.size(); ++i) {
    Vector e = Vector::Zero(bm.size());
    e[i] = h;
    const auto plus = net.predict(bm + e, bf0, false), minus = net.predict(bm - e, bf0, false);
    const Matrix fd = ((j_head ? plus.j : plus.f) - (j_head ? minus.j : minus.f)) / (2 * h);
    for (int k = 0; k < net.num_steps(); ++k) {
      const Vector exact = (j_head ? p.jac_j : p.jac_f)[k].col(i);
      worst = std::max(worst, (exact - fd.col(k)).norm() / std::max(exact.norm(), 1e-8));
    }
  }
  return worst;
}

TimeMask mask_of(int bits, int k) {
  TimeMask xi(k);
  for (int i = 0; i < k; ++i) xi[i] = (bits >> i) & 1;
  return xi;
}

}  // namespace

CheckResult check_adjoint() {
  return timed([] {
    const Geometry g = square(16);
    const GaussianPrior prior(g);
    SimulationConfig cfg;
    cfg.final_time = 2.0;
    cfg.num_candidates = 4;
    cfg.newton_abs_tol = 1e-14;
    cfg.newton_rel_tol = 0.0;
    const TumorModel model(g, cfg);
    const Vector m = prior.sample(3);
    const LinearizationPoint lp(model, m);
    NormalSampler rng(6);
    const Vector d = prior.sample_fluctuation(4);
    ObservableSeries v;
    for (int k = 0; k < 4; ++k) v.push_back(rng.vector(model.obs_dim()));
    const auto jd = lp.tangent(d);
    double dot_err = 0.0;
    for (int bits = 1; bits < 16; ++bits) {
      const TimeMask xi = mask_of(bits, 4);
      double lhs = 0.0;
      for (int k = 0; k < 4; ++k)
        if (xi[k]) lhs += v[k].dot(jd[k]);
      dot_err = std::max(dot_err, std::abs(lhs - d.dot(lp.adjoint(v, xi))) / std::abs(lhs));
    }
    const double eps = 1e-5;
    const auto fp = model.pto(m + eps * d), fm = model.pto(m - eps * d);
    double fd_err = 0.0;
    for (int k = 0; k < 4; ++k) fd_err = std::max(fd_err, relative_error((fp[k] - fm[k]) / (2 * eps), jd[k]));
    CheckResult r;
    r.passed = dot_err <= 1e-10 && fd_err <= 1e-4;
    r.detail = "dot test " + fmt(dot_err) + " (<= 1e-10), tangent vs FD " + fmt(fd_err) + " (<= 1e-4)";
    return r;
  });
}

CheckResult check_linear_gaussian() {
  return timed([] {
    const LinearCase c(4);
    const double noise_var = c.dense.noise_var;
    MapOptions tight;
    tight.rel_tol = 1e-11;
    double map_err = 0.0, ig_err = 0.0;
    for (const TimeMask& xi : {TimeMask{false, true, false, true}, all_times(4)}) {
      const auto y = c.data(4);
      const auto exact = exact_posterior(c.dense, y, xi);
      const MapObjective obj{&c.model, &c.prior, y, xi, noise_var};
      const auto map = compute_map(obj, c.prior.mean(), tight);
      map_err = std::max(map_err, relative_error(map.m, exact.mean));
      const auto post = laplace_at(LinearizationPoint(c.model, map.m, map.trajectory), c.prior, xi, noise_var, 16,
                                   10, 3);
      const double kl = gaussian_kl(exact, prior_of(c.dense));
      ig_err = std::max(ig_err, std::abs(information_gain(post, c.prior) - kl) / kl);
    }

    Matrix h = Matrix::Zero(c.model.dim(), c.model.dim());
    for (int k = 0; k < 4; ++k) h += c.dense.jac[k].transpose() * c.dense.jac[k] / noise_var;
    Eigen::GeneralizedSelfAdjointEigenSolver<Matrix> ge(h, c.prior.dense_precision());
    const Vector exact = ge.eigenvalues().reverse();
    const auto post = laplace_at(LinearizationPoint(c.model, c.prior.mean()), c.prior, all_times(4), noise_var, 16,
                                 10, 1);
    // eigenvalues below 1e-8 lambda_max sit at the round-off floor of both solvers
    double eig_err = 0.0;
    int resolved = 0;
    for (int j = 0; j < 16 && exact[j] >= 1e-8 * exact[0]; ++j, ++resolved)
      eig_err = std::max(eig_err, std::abs(post.lambda[j] - exact[j]) / exact[j]);

    CheckResult r;
    r.passed = map_err <= 1e-6 && resolved >= 8 && eig_err <= 1e-6 && ig_err <= 1e-5;
    r.detail = "MAP " + fmt(map_err) + " (<= 1e-6), top-" + std::to_string(resolved) + " eigenvalues " +
               fmt(eig_err) + " (<= 1e-6), IG vs KL " +
               fmt(ig_err) + " (<= 1e-5)";
    return r;
  });
}

CheckResult check_terminal_equivalence() {
  return timed([] {
    const LinearCase c(4);
    const ObservableSeries y = c.data(8);
    double dev = 0.0, kl = 0.0;
    bool argmax_ok = true;
    // i = 1 (empty prefix, d = 2) and i = 2 (first step observed, one more to place)
    for (int next : {0, 1}) {
      TimeMask prefix(4, false);
      if (next == 1) prefix[0] = true;
      const auto rep = terminal_equivalence_oracle(c.dense, prefix, y, next, 2 - next);
      dev = std::max(dev, rep.max_deviation);
      if (next == 1) kl = rep.prefix_kl;
      argmax_ok = argmax_ok && rep.argmax_terminal == rep.argmax_initial;
    }
    // prefix of one observation and two more to place
    TimeMask prefix(4, false);
    prefix[0] = true;
    const auto rep = terminal_equivalence_oracle(c.dense, prefix, y, 1, 2);
    dev = std::max(dev, rep.max_deviation);
    argmax_ok = argmax_ok && rep.argmax_terminal == rep.argmax_initial;
    CheckResult r;
    r.passed = dev <= 1e-8 && argmax_ok && kl > 0.0;
    r.detail = "max deviation " + fmt(dev) + " (<= 1e-8), prefix KL " + fmt(kl) + ", argmax " +
               (argmax_ok ? "identical" : "differs");
    return r;
  });
}

CheckResult check_conditional_eig() {
  return timed([] {
    const LinearCase c(4);
    const LinearDesignModel dm(c.dense);
    const SyntheticObserver obs(c.dense.apply(c.prior.sample(12)), dm.noise_std(), 13);
    SboedState st = SboedState::initial(dm);
    st.data[0] = obs.observe(0);
    st.observed[0] = true;
    st.next = 1;
    st.posterior = dm.condition(st.data, st.observed, st.posterior.map);
    ObservableSeries y(4, Vector::Zero(4));
    y[0] = st.data[0];
    const DenseGaussian before = exact_posterior(c.dense, y, st.observed);

    DesignOptions opt;
    opt.num_samples = 10000;
    opt.seed = 14;
    const DesignSweep sweep = optimize_design(dm, st, 2, opt);
    double worst = 0.0;
    std::size_t best = 0;
    std::vector<double> exact;
    for (const auto& cand : sweep.table) {
      exact.push_back(conditional_eig_exact(c.dense, before, cand.xi));
      worst = std::max(worst, std::abs(cand.ceig - exact.back()) / cand.std_error);
    }
    best = static_cast<std::size_t>(std::max_element(exact.begin(), exact.end()) - exact.begin());
    const bool argmax_ok = sweep.best == sweep.table[best].xi;
    CheckResult r;
    r.passed = worst <= 3.0 && argmax_ok && sweep.table.size() == 3;
    r.detail = std::to_string(sweep.table.size()) + " candidates, max |estimate - exact| = " + fmt(worst) +
               " standard errors (<= 3), argmax " + (argmax_ok ? "matches" : "differs");
    return r;
  });
}

CheckResult check_eig_monotone() {
  return timed([] {
    const LinearCase c(5);
    std::vector<double> eig(32);
    for (int bits = 0; bits < 32; ++bits) eig[bits] = exact_eig(c.dense, mask_of(bits, 5));
    int violations = 0, pairs = 0;
    for (int a = 0; a < 32; ++a)
      for (int b = 0; b < 32; ++b) {
        if ((a & b) != a || a == b) continue;
        ++pairs;
        if (eig[b] < eig[a] - 1e-12 * std::abs(eig[b])) ++violations;
      }
    CheckResult r;
    r.passed = violations == 0 && eig[0] == 0.0;
    r.detail = std::to_string(pairs) + " subset pairs, " + std::to_string(violations) + " violations, EIG(empty) = " +
               fmt(eig[0]);
    return r;
  });
}

CheckResult check_lano_derivatives() {
  return timed([] {
    LanoConfig cfg;
    cfg.init_seed = 3;
    Lano net(cfg);
    NormalSampler rng(4);
    const Vector bf0 = 0.5 * rng.vector(cfg.rank_f);
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
      const Vector bm = rng.vector(cfg.rank_m);
      worst = std::max({worst, jacobian_fd_error(net, bm, bf0, false), jacobian_fd_error(net, bm, bf0, true)});
    }

    const Vector bm = rng.vector(cfg.rank_m);
    const auto base = net.predict(bm, bf0, true);
    const int j = 4;
    auto& v = net.parameters().values;
    const auto& names = net.parameters().names;
    std::vector<int> touched = net.head_parameters(j);
    for (std::size_t i = 0; i < names.size(); ++i)
      for (const char* pre : {"W_s_", "b_s_", "W_z_", "b_z_"})
        if (names[i] == pre + std::to_string(j)) touched.push_back(static_cast<int>(i));
    for (int id : touched) v[id].array() += 0.37;
    v[std::find(names.begin(), names.end(), "P") - names.begin()].col(j).array() += 0.5;
    const auto moved = net.predict(bm, bf0, true);
    bool causal = true;
    for (int k = 0; k < j; ++k)
      causal = causal && (moved.f.col(k).array() == base.f.col(k).array()).all() &&
               (moved.jac_f[k].array() == base.jac_f[k].array()).all() &&
               (moved.jac_j[k].array() == base.jac_j[k].array()).all();
    CheckResult r;
    r.passed = worst <= 1e-6 && causal;
    r.detail = "FD relative error " + fmt(worst) + " over 20 inputs (<= 1e-6), causal mask " +
               (causal ? "exact" : "violated");
    return r;
  });
}

CheckResult check_invariants() {
  return timed([] {
    std::vector<std::string> failed;
    const Geometry g = square(16);
    const GaussianPrior prior(g);
    const Vector x = prior.sample_fluctuation(21);
    if (relative_error(prior.unwhiten(prior.whiten(x)), x) > 1e-10) failed.push_back("whiten/unwhiten");

    const TumorModel model(g, SimulationConfig{});
    const auto traj = model.solve(prior.sample(22));
    for (const auto& u : traj.states)
      if (u.minCoeff() < -1e-12 || u.maxCoeff() > 1.0 + 1e-12) {
        failed.push_back("state range");
        break;
      }

    const LinearCase c(4);
    const LinearizationPoint lp(c.model, c.prior.sample(23));
    NormalSampler rng(24);
    const Vector a = rng.vector(c.model.dim()), b = rng.vector(c.model.dim());
    const double hab = a.dot(lp.gn_hessian(all_times(4), 1.0, b)), hba = b.dot(lp.gn_hessian(all_times(4), 1.0, a));
    if (std::abs(hab - hba) > 1e-10 * std::abs(hab)) failed.push_back("Hessian symmetry");
    if (a.dot(lp.gn_hessian(all_times(4), 1.0, a)) < 0.0) failed.push_back("Hessian PSD");

    const LinearDesignModel dm(c.dense);
    const SboedState st = SboedState::initial(dm);
    const auto samples = prepare_sweep(dm, st, 8, 25);
    if (std::abs(conditional_eig(dm, st, samples, TimeMask(4, false)).ceig) > 1e-8) failed.push_back("empty cEIG");

    CheckResult r;
    r.passed = failed.empty();
    r.detail = failed.empty() ? "prior whitening, state range, Hessian symmetry/PSD, empty-design cEIG" : "";
    for (const auto& f : failed) r.detail += (r.detail.empty() ? "failed: " : ", ") + f;
    return r;
  });
}

std::vector<Check> verify_suite() {
  return {{"adjoint correctness", check_adjoint},
          {"linear-Gaussian oracle", check_linear_gaussian},
          {"terminal vs initial-conditioned objective", check_terminal_equivalence},
          {"conditional EIG estimator", check_conditional_eig},
          {"EIG monotonicity", check_eig_monotone},
          {"LANO derivative fidelity", check_lano_derivatives},
          {"invariants", check_invariants}};
}

int run_checks(const std::vector<Check>& checks, std::ostream& out) {
  int failures = 0;
  for (const auto& c : checks) {
    CheckResult r;
    try {
      r = c.run();
    } catch (const std::exception& e) {
      r.passed = false;
      r.detail = std::string("exception: ") + e.what();
    }
    if (!r.passed) ++failures;
    out << (r.passed ? "PASS " : "FAIL ") << c.name << ": " << r.detail << " [" << fmt(r.seconds) << " s]\n";
    out.flush();
  }
  return failures;
}

}  // namespace sboed
