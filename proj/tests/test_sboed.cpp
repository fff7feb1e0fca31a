#include "doctest.h"

#include "sboed/sboed.hpp"

#include <algorithm>
#include <numeric>

using namespace sboed;

namespace {

/// Steps of different informativeness; step k has scale[k] times a random 2 x n map.
LinearGaussianModel synthetic(const std::vector<double>& scale, Index n = 6, std::uint64_t seed = 1) {
  NormalSampler rng(seed);
  LinearGaussianModel m;
  for (double s : scale) {
    m.jac.push_back(s * rng.matrix(2, n));
    m.offset.push_back(0.1 * rng.vector(2));
  }
  m.prior_mean = 0.2 * rng.vector(n);
  const Matrix a = rng.matrix(n, n);
  m.prior_cov = a * a.transpose() / static_cast<double>(n) + 0.5 * Matrix::Identity(n, n);
  m.noise_var = 0.5;
  return m;
}

DenseGaussian prefix_posterior(const LinearGaussianModel& model, const SboedState& st) {
  bool any = false;
  for (int t = 0; t < st.next; ++t) any = any || st.observed[t];
  if (!any) return prior_of(model);
  ObservableSeries y(st.data.begin(), st.data.end());
  for (std::size_t k = 0; k < y.size(); ++k)
    if (y[k].size() == 0) y[k] = Vector::Zero(model.jac[k].rows());
  return exact_posterior(model, y, st.observed);
}

/// Observes step t of the model at `truth`.
void observe(const LinearDesignModel& dm, const SyntheticObserver& obs, SboedState& st, int t) {
  st.data[t] = obs.observe(t);
  st.observed[t] = true;
  st.next = t + 1;
  st.posterior = dm.condition(st.data, st.observed, st.posterior.map);
}

class FailingModel final : public DesignModel {
 public:
  explicit FailingModel(const LinearDesignModel& inner) : inner_(&inner) {}
  std::string name() const override { return "failing"; }
  int num_candidates() const override { return inner_->num_candidates(); }
  double noise_std() const override { return inner_->noise_std(); }
  DesignPosterior prior_posterior() const override { return inner_->prior_posterior(); }
  Vector sample(const DesignPosterior& p, std::uint64_t seed) const override { return inner_->sample(p, seed); }
  std::vector<Vector> simulate(const Vector& m) const override { return inner_->simulate(m); }
  DesignPosterior condition(const std::vector<Vector>&, const TimeMask&, const Vector&) const override {
    throw NumericalError("inner solve failed");
  }
  Vector to_model_data(const Vector& y, int) const override { return y; }
  Vector parameter_field(const DesignPosterior& p) const override { return p.map; }
  Vector pointwise_std(const DesignPosterior& p) const override { return inner_->pointwise_std(p); }

 private:
  const LinearDesignModel* inner_;
};

}  // namespace

TEST_CASE("completion enumeration") {
  CHECK(completion_count(4, 0, 2) == 6);
  CHECK(completion_count(10, 0, 3) == 120);
  CHECK(completion_count(10, 4, 6) == 1);
  CHECK(completion_count(10, 4, 7) == 0);

  const auto model = synthetic({1.0, 0.5, 2.0, 0.3});
  const LinearDesignModel dm(model);
  DesignOptions opt;
  opt.num_samples = 8;
  SboedState st = SboedState::initial(dm);
  const auto sweep = optimize_design(dm, st, 2, opt);
  REQUIRE(sweep.table.size() == 6);
  CHECK_FALSE(sweep.greedy);
  CHECK(bitstring(sweep.table.front().xi) == "1100");
  CHECK(bitstring(sweep.table.back().xi) == "0011");
  for (const auto& c : sweep.table) CHECK(std::count(c.xi.begin(), c.xi.end(), true) == 2);

  const SyntheticObserver obs(model.apply(model.prior_mean), dm.noise_std(), 3);
  observe(dm, obs, st, 1);
  const auto after = optimize_design(dm, st, 1, opt, 1);
  REQUIRE(after.table.size() == 2);
  for (const auto& c : after.table) {
    CHECK_FALSE(c.xi[0]);
    CHECK(c.xi[1]);
  }
}

TEST_CASE("uniform design") {
  CHECK(bitstring(uniform_design(10, 3)) == "0010001001");
  CHECK(bitstring(uniform_design(6, 2)) == "001001");
  CHECK(bitstring(uniform_design(4, 4)) == "1111");
  CHECK_THROWS_AS(uniform_design(4, 5), UsageError);
}

TEST_CASE("exhaustive search recovers the closed-form best design") {
  const auto model = synthetic({0.4, 1.3, 0.6, 1.8, 0.8});
  const LinearDesignModel dm(model);
  DesignOptions opt;
  opt.num_samples = 512;
  const SboedState st = SboedState::initial(dm);
  const auto sweep = optimize_design(dm, st, 2, opt);
  REQUIRE(sweep.table.size() == 10);
  std::size_t best = 0;
  std::vector<double> exact;
  for (const auto& c : sweep.table) exact.push_back(conditional_eig_exact(model, prior_of(model), c.xi));
  best = static_cast<std::size_t>(std::max_element(exact.begin(), exact.end()) - exact.begin());
  CHECK(bitstring(sweep.best) == bitstring(sweep.table[best].xi));
  // the unconditioned objective is the mutual information
  for (std::size_t i = 0; i < exact.size(); ++i)
    CHECK(exact[i] == doctest::Approx(exact_eig(model, sweep.table[i].xi)).epsilon(1e-9));
}

TEST_CASE("terminal and initial-conditioned objectives differ by the prefix KL") {
  const auto model = synthetic({0.7, 1.1, 0.5, 1.6, 0.9}, 7, 4);
  const LinearDesignModel dm(model);
  NormalSampler rng(5);
  const Vector truth = model.prior_mean + rng.vector(7);
  const SyntheticObserver obs(model.apply(truth), dm.noise_std(), 6);
  for (int next : {0, 1, 2}) {
    SboedState st = SboedState::initial(dm);
    if (next > 0) observe(dm, obs, st, next - 1);
    ObservableSeries y(st.data.begin(), st.data.end());
    for (std::size_t k = 0; k < y.size(); ++k)
      if (y[k].size() == 0) y[k] = Vector::Zero(2);
    const auto rep = terminal_equivalence_oracle(model, st.observed, y, st.next, 2);
    CAPTURE(next);
    CHECK(rep.candidates.size() == static_cast<std::size_t>(completion_count(5, st.next, 2)));
    CHECK(rep.max_deviation <= 1e-8);
    CHECK(rep.argmax_terminal == rep.argmax_initial);
    if (next > 0) CHECK(rep.prefix_kl > 0.0);
    // the terminal objective is the conditional EIG
    const DenseGaussian before = prefix_posterior(model, st);
    for (std::size_t i = 0; i < rep.candidates.size(); ++i)
      CHECK(rep.terminal[i] == doctest::Approx(conditional_eig_exact(model, before, rep.candidates[i])).epsilon(1e-9));
  }
}

TEST_CASE("Monte Carlo conditional EIG agrees with the closed form") {
  const auto model = synthetic({0.8, 1.2, 0.6, 1.5});
  const LinearDesignModel dm(model);
  const SyntheticObserver obs(model.apply(model.prior_mean + Vector::Constant(6, 0.3)), dm.noise_std(), 9);
  SboedState st = SboedState::initial(dm);
  observe(dm, obs, st, 0);
  const auto samples = prepare_sweep(dm, st, 10000, 21);
  for (std::size_t s = 0; s < 5; ++s) CHECK(samples.data[s][0] == st.data[0]);
  const DenseGaussian before = prefix_posterior(model, st);
  for (const char* bits : {"1010", "1001", "1110"}) {
    TimeMask xi;
    for (const char* c = bits; *c; ++c) xi.push_back(*c == '1');
    const auto r = conditional_eig(dm, st, samples, xi);
    const double exact = conditional_eig_exact(model, before, xi);
    CAPTURE(bits);
    CHECK(r.failures == 0);
    CHECK(r.std_error > 0.0);
    CHECK(std::abs(r.ceig - exact) <= 3.0 * r.std_error);
  }
}

TEST_CASE("common random numbers preserve the exact ranking") {
  const auto model = synthetic({0.5, 1.4, 0.9, 2.2}, 6, 8);
  const LinearDesignModel dm(model);
  DesignOptions opt;
  opt.num_samples = 1024;
  const SboedState st = SboedState::initial(dm);
  const auto sweep = optimize_design(dm, st, 2, opt);
  std::vector<double> est, exact;
  for (const auto& c : sweep.table) {
    est.push_back(c.ceig);
    exact.push_back(exact_eig(model, c.xi));
  }
  std::vector<std::size_t> order_est(est.size()), order_exact(est.size());
  std::iota(order_est.begin(), order_est.end(), 0);
  std::iota(order_exact.begin(), order_exact.end(), 0);
  std::sort(order_est.begin(), order_est.end(), [&](auto a, auto b) { return est[a] > est[b]; });
  std::sort(order_exact.begin(), order_exact.end(), [&](auto a, auto b) { return exact[a] > exact[b]; });
  CHECK(order_est == order_exact);
}

TEST_CASE("full budget observes every step") {
  const auto model = synthetic({0.8, 1.2, 0.6, 1.5});
  const LinearDesignModel dm(model);
  const SyntheticObserver obs(model.apply(model.prior_mean), dm.noise_std(), 2);
  DesignOptions opt;
  opt.num_samples = 4;
  const auto res = adaptive_run(dm, obs, 4, opt);
  CHECK(bitstring(res.adaptive_design) == "1111");
  CHECK(bitstring(res.static_design) == "1111");
  CHECK(res.observation_steps == std::vector<int>{0, 1, 2, 3});
}

TEST_CASE("adaptive run bookkeeping") {
  const auto model = synthetic({0.4, 1.3, 0.6, 1.8, 0.8, 1.1});
  const LinearDesignModel dm(model);
  NormalSampler rng(3);
  const SyntheticObserver obs(model.apply(model.prior_mean + rng.vector(6)), dm.noise_std(), 4);
  DesignOptions opt;
  opt.num_samples = 16;
  const int d = 3;
  const auto res = adaptive_run(dm, obs, d, opt);
  CHECK(std::count(res.adaptive_design.begin(), res.adaptive_design.end(), true) == d);
  CHECK(std::count(res.static_design.begin(), res.static_design.end(), true) == d);
  CHECK(res.evaluations <= completion_count(7, 0, d));
  CHECK(static_cast<long>(res.log.size()) == res.evaluations);
  REQUIRE(res.observation_steps.size() == static_cast<std::size_t>(d));
  for (std::size_t i = 1; i < res.observation_steps.size(); ++i)
    CHECK(res.observation_steps[i] > res.observation_steps[i - 1]);
  for (double ig : res.information_gain) CHECK(ig > 0.0);

  // the final posterior is the exact posterior of the observed data
  const DenseGaussian exact = prefix_posterior(model, res.state);
  CHECK(relative_error(res.state.posterior.map, exact.mean) <= 1e-10);
  const DesignPosterior direct = observe_design(dm, obs, res.adaptive_design);
  CHECK(direct.information_gain == doctest::Approx(res.information_gain.back()).epsilon(1e-10));

  const auto again = adaptive_run(dm, obs, d, opt);
  CHECK(again.adaptive_design == res.adaptive_design);
  REQUIRE(again.log.size() == res.log.size());
  for (std::size_t i = 0; i < res.log.size(); ++i) CHECK(again.log[i].ceig == res.log[i].ceig);
}

TEST_CASE("design sweep is independent of the thread count") {
  const auto model = synthetic({0.4, 1.3, 0.6, 1.8, 0.8});
  const LinearDesignModel dm(model);
  DesignOptions opt;
  opt.num_samples = 32;
  const SboedState st = SboedState::initial(dm);
  set_thread_count(1);
  const auto one = optimize_design(dm, st, 2, opt);
  set_thread_count(3);
  const auto three = optimize_design(dm, st, 2, opt);
  set_thread_count(0);
  REQUIRE(one.table.size() == three.table.size());
  for (std::size_t i = 0; i < one.table.size(); ++i) CHECK(one.table[i].ceig == three.table[i].ceig);
}

TEST_CASE("greedy search above the budget cap") {
  const auto model = synthetic({0.4, 1.3, 0.6, 1.8, 0.8});
  const LinearDesignModel dm(model);
  DesignOptions opt;
  opt.num_samples = 64;
  opt.budget_cap = 5;
  set_quiet(true);
  const auto sweep = optimize_design(dm, SboedState::initial(dm), 2, opt);
  set_quiet(false);
  CHECK(sweep.greedy);
  CHECK(sweep.table.size() == 5 + 4);
  CHECK(std::count(sweep.best.begin(), sweep.best.end(), true) == 2);
  opt.strategy = "random";
  CHECK_THROWS_AS(optimize_design(dm, SboedState::initial(dm), 2, opt), UsageError);
}

TEST_CASE("inner solve failures abort the estimate") {
  const auto model = synthetic({0.4, 1.3, 0.6});
  const LinearDesignModel dm(model);
  const FailingModel failing(dm);
  const SboedState st = SboedState::initial(failing);
  const auto samples = prepare_sweep(failing, st, 8, 1);
  CHECK_THROWS_AS(conditional_eig(failing, st, samples, TimeMask{true, false, true}), NumericalError);
  CHECK(conditional_eig(dm, st, samples, TimeMask{true, false, true}).failures == 0);
}

TEST_CASE("empty design carries no information") {
  const auto model = synthetic({0.8, 1.2, 0.6, 1.5});
  const LinearDesignModel dm(model);
  const SboedState st = SboedState::initial(dm);
  const auto samples = prepare_sweep(dm, st, 64, 5);
  const auto r = conditional_eig(dm, st, samples, TimeMask(4, false));
  CHECK(std::abs(r.ceig) <= 1e-12);
  CHECK(std::abs(r.std_error) <= 1e-12);
}
