#include "sboed/sboed.hpp"

#include "sboed/io.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <chrono>
#include <cmath>

namespace sboed {

namespace {

bool any_selected(const TimeMask& xi) {
  for (bool b : xi)
    if (b) return true;
  return false;
}

void check_mask(const DesignModel& model, const TimeMask& xi) {
  if (static_cast<int>(xi.size()) != model.num_candidates()) throw UsageError("design length mismatch");
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

LaplacePosterior as_laplace(const DesignPosterior& post) { return {post.map, post.lambda, post.w, post.xi}; }

}  // namespace

// ---------------------------------------------------------------- full model

FullDesignModel::FullDesignModel(const TumorModel& model, const GaussianPrior& prior, FullModelOptions options)
    : model_(&model), prior_(&prior), options_(options) {}

DesignPosterior FullDesignModel::prior_posterior() const {
  DesignPosterior p;
  p.map = prior_->mean();
  p.lambda = Vector::Zero(0);
  p.w = Matrix::Zero(prior_->dim(), 0);
  p.xi = TimeMask(num_candidates(), false);
  return p;
}

Vector FullDesignModel::sample(const DesignPosterior& post, std::uint64_t seed) const {
  if (post.is_prior) return prior_->sample(seed);
  return posterior_sample(as_laplace(post), *prior_, seed);
}

std::vector<Vector> FullDesignModel::simulate(const Vector& parameter) const { return model_->pto(parameter); }

DesignPosterior FullDesignModel::condition(const std::vector<Vector>& data, const TimeMask& xi,
                                           const Vector& start) const {
  check_mask(*this, xi);
  if (!any_selected(xi)) return prior_posterior();
  const double noise_var = noise_std() * noise_std();
  MapObjective obj{model_, prior_, data, xi, noise_var};
  for (std::size_t k = 0; k < xi.size(); ++k)
    if (!xi[k]) obj.data[k] = Vector();
  const MapResult map = compute_map(obj, start.size() == prior_->dim() ? start : prior_->mean(), options_.map);
  const LinearizationPoint lp(*model_, map.m, map.trajectory);
  const LaplacePosterior lap =
      laplace_at(lp, *prior_, xi, noise_var, options_.rank, options_.oversampling, options_.seed);
  DesignPosterior p{lap.map, lap.lambda, lap.w, xi, information_gain(lap, *prior_), false};
  return p;
}

Vector FullDesignModel::pointwise_std(const DesignPosterior& post) const {
  if (post.is_prior) return prior_->pointwise_variance().cwiseSqrt();
  return posterior_std(as_laplace(post), *prior_);
}

// ----------------------------------------------------------- surrogate model

SurrogateDesignModel::SurrogateDesignModel(const Surrogate& net, const ReducedBases& bases,
                                           const GaussianPrior& prior, const Vector& beta_f0, double noise_std,
                                           ReducedMapOptions options)
    : net_(&net), bases_(&bases), prior_(&prior), beta_f0_(beta_f0), noise_std_(noise_std), options_(options) {
  if (bases.rank_m() != net.rank_m() || bases.rank_f() != net.rank_f())
    throw UsageError("surrogate ranks do not match the reduced bases");
  if (!(noise_std > 0.0)) throw UsageError("noise standard deviation must be positive");
}

DesignPosterior SurrogateDesignModel::prior_posterior() const {
  DesignPosterior p;
  p.map = Vector::Zero(net_->rank_m());
  p.lambda = Vector::Zero(0);
  p.w = Matrix::Zero(net_->rank_m(), 0);
  p.xi = TimeMask(num_candidates(), false);
  return p;
}

Vector SurrogateDesignModel::sample(const DesignPosterior& post, std::uint64_t seed) const {
  if (post.is_prior) return NormalSampler(seed).vector(net_->rank_m());
  return reduced_posterior_sample({post.map, post.lambda, post.w, post.xi}, seed);
}

std::vector<Vector> SurrogateDesignModel::simulate(const Vector& parameter) const {
  const Prediction p = net_->predict(parameter, beta_f0_, false);
  std::vector<Vector> out;
  for (Index k = 0; k < p.f.cols(); ++k) out.push_back(p.f.col(k));
  return out;
}

DesignPosterior SurrogateDesignModel::condition(const std::vector<Vector>& data, const TimeMask& xi,
                                                const Vector& start) const {
  check_mask(*this, xi);
  if (!any_selected(xi)) return prior_posterior();
  std::vector<Vector> z(xi.size());
  for (std::size_t k = 0; k < xi.size(); ++k)
    z[k] = xi[k] ? data[k] : Vector::Zero(net_->rank_f());
  const ProjectedData pd = reduced_data(noise_std_ * noise_std_, z);
  const Vector beta0 = start.size() == net_->rank_m() ? start : Vector::Zero(net_->rank_m());
  const ReducedMapResult map = reduced_map(*net_, beta_f0_, pd, xi, beta0, options_);
  if (!map.beta.allFinite()) throw NumericalError("reduced MAP is not finite");
  const SurrogatePosterior post = reduced_posterior(*net_, beta_f0_, pd.gram, xi, map.beta);
  return {post.beta_map, post.lambda, post.u, xi, reduced_information_gain(post), false};
}

Vector SurrogateDesignModel::parameter_field(const DesignPosterior& post) const {
  return bases_->decode_m(*prior_, post.map);
}

Vector SurrogateDesignModel::pointwise_std(const DesignPosterior& post) const {
  if (post.is_prior) return prior_->pointwise_variance().cwiseSqrt();
  // Psi_m U is Gamma_prior^-1-orthonormal
  const LaplacePosterior full{parameter_field(post), post.lambda, bases_->psi_m * post.w, post.xi};
  return posterior_std(full, *prior_);
}

// -------------------------------------------------------------- linear model

LinearDesignModel::LinearDesignModel(const LinearGaussianModel& model) : model_(&model) {
  Eigen::LLT<Matrix> llt(model.prior_cov);
  if (llt.info() != Eigen::Success) throw NumericalError("prior covariance is not positive definite");
  prior_chol_ = llt.matrixL();
  prior_precision_ = llt.solve(Matrix::Identity(model.dim(), model.dim()));
  prior_precision_ = 0.5 * (prior_precision_ + prior_precision_.transpose());
}

DesignPosterior LinearDesignModel::prior_posterior() const {
  DesignPosterior p;
  p.map = model_->prior_mean;
  p.lambda = Vector::Zero(0);
  p.w = Matrix::Zero(model_->dim(), 0);
  p.xi = TimeMask(num_candidates(), false);
  return p;
}

Vector LinearDesignModel::sample(const DesignPosterior& post, std::uint64_t seed) const {
  const Vector m = prior_chol_ * NormalSampler(seed).vector(model_->dim());
  if (post.is_prior) return model_->prior_mean + m;
  const Vector s = (1.0 - (1.0 + post.lambda.array()).rsqrt()).matrix();
  return post.map + m - post.w * s.cwiseProduct(post.w.transpose() * (prior_precision_ * m));
}

DesignPosterior LinearDesignModel::condition(const std::vector<Vector>& data, const TimeMask& xi,
                                             const Vector&) const {
  check_mask(*this, xi);
  if (!any_selected(xi)) return prior_posterior();
  ObservableSeries y(data.begin(), data.end());
  for (std::size_t k = 0; k < xi.size(); ++k)
    if (!xi[k]) y[k] = Vector::Zero(model_->jac[k].rows());
  const DenseGaussian exact = exact_posterior(*model_, y, xi);
  Matrix h = Matrix::Zero(model_->dim(), model_->dim());
  for (std::size_t k = 0; k < xi.size(); ++k)
    if (xi[k]) h += model_->jac[k].transpose() * model_->jac[k] / model_->noise_var;
  Eigen::GeneralizedSelfAdjointEigenSolver<Matrix> ges(0.5 * (h + h.transpose()), prior_precision_);
  if (ges.info() != Eigen::Success) throw NumericalError("dense generalized eigenproblem failed");
  const Index n = model_->dim();
  DesignPosterior p;
  p.map = exact.mean;
  p.lambda.resize(n);
  p.w.resize(n, n);
  for (Index j = 0; j < n; ++j) {
    p.lambda[j] = std::max(0.0, ges.eigenvalues()[n - 1 - j]);
    p.w.col(j) = ges.eigenvectors().col(n - 1 - j);
  }
  p.xi = xi;
  p.is_prior = false;
  const Vector diff = p.map - model_->prior_mean;
  p.information_gain = information_gain_terms(p.lambda, diff.dot(prior_precision_ * diff));
  return p;
}

Vector LinearDesignModel::pointwise_std(const DesignPosterior& post) const {
  Vector var = model_->prior_cov.diagonal();
  if (!post.is_prior) {
    const Vector d = (post.lambda.array() / (1.0 + post.lambda.array())).matrix();
    var -= post.w.array().square().matrix() * d;
  }
  return var.cwiseMax(0.0).cwiseSqrt();
}

// ------------------------------------------------------------- design loop

SboedState SboedState::initial(const DesignModel& model) {
  SboedState s;
  s.observed = TimeMask(model.num_candidates(), false);
  s.data.assign(model.num_candidates(), Vector());
  s.posterior = model.prior_posterior();
  return s;
}

SweepSamples prepare_sweep(const DesignModel& model, const SboedState& state, int num_samples, std::uint64_t seed) {
  if (num_samples < 1) throw UsageError("number of samples must be positive");
  SweepSamples out;
  out.data.resize(num_samples);
  const double sigma = model.noise_std();
  parallel_for(num_samples, [&](Index s) {
    const auto us = static_cast<std::uint64_t>(s);
    const Vector param = model.sample(state.posterior, mix_seed(seed, 2 * us));
    std::vector<Vector> y = model.simulate(param);
    NormalSampler noise(mix_seed(seed, 2 * us + 1));
    for (std::size_t k = 0; k < y.size(); ++k) {
      y[k] += sigma * noise.vector(y[k].size());
      if (static_cast<int>(k) < state.next && state.observed[k]) y[k] = state.data[k];
    }
    out.data[s] = std::move(y);
  });
  return out;
}

CandidateResult conditional_eig(const DesignModel& model, const SboedState& state, const SweepSamples& samples,
                                const TimeMask& xi, double max_failure_fraction) {
  check_mask(model, xi);
  for (int k = 0; k < state.next; ++k)
    if (xi[k] != state.observed[k]) throw UsageError("candidate does not extend the observed prefix");
  const auto t0 = std::chrono::steady_clock::now();
  CandidateResult r;
  r.xi = xi;
  double sum = 0.0, sum_sq = 0.0;
  for (const auto& y : samples.data) {
    try {
      const double ig = model.condition(y, xi, state.posterior.map).information_gain;
      sum += ig;
      sum_sq += ig * ig;
    } catch (const NumericalError&) {
      ++r.failures;
    }
  }
  const int n = static_cast<int>(samples.data.size());
  if (r.failures > max_failure_fraction * n)
    throw NumericalError("conditional EIG of " + bitstring(xi) + ": " + std::to_string(r.failures) + " of " +
                         std::to_string(n) + " inner solves failed");
  if (r.failures > 0) warn(std::to_string(r.failures) + " inner solves failed for " + bitstring(xi));
  const int used = n - r.failures;
  r.ceig = sum / used;
  if (used > 1) r.std_error = std::sqrt(std::max(0.0, (sum_sq - used * r.ceig * r.ceig) / (used - 1)) / used);
  r.seconds = seconds_since(t0);
  return r;
}

long completion_count(int num_candidates, int next, int remaining) {
  const int n = num_candidates - next;
  if (remaining < 0 || remaining > n) return 0;
  long c = 1;
  for (int i = 1; i <= remaining; ++i) c = c * (n - remaining + i) / i;
  return c;
}

namespace {

std::vector<TimeMask> completions(const SboedState& state, int remaining) {
  const int k = static_cast<int>(state.observed.size());
  TimeMask prefix(k, false);
  for (int t = 0; t < state.next; ++t) prefix[t] = state.observed[t];
  std::vector<TimeMask> out;
  std::vector<int> idx(remaining);
  for (int i = 0; i < remaining; ++i) idx[i] = state.next + i;
  for (;;) {
    TimeMask xi = prefix;
    for (int i : idx) xi[i] = true;
    out.push_back(std::move(xi));
    int i = remaining - 1;
    while (i >= 0 && idx[i] == k - remaining + i) --i;
    if (i < 0) break;
    ++idx[i];
    for (int j = i + 1; j < remaining; ++j) idx[j] = idx[j - 1] + 1;
  }
  return out;
}

std::vector<CandidateResult> evaluate_all(const DesignModel& model, const SboedState& state,
                                          const SweepSamples& samples, const std::vector<TimeMask>& candidates,
                                          double max_failure_fraction) {
  std::vector<CandidateResult> out(candidates.size());
  parallel_for(static_cast<Index>(candidates.size()), [&](Index i) {
    out[i] = conditional_eig(model, state, samples, candidates[i], max_failure_fraction);
  });
  return out;
}

std::size_t first_max(const std::vector<CandidateResult>& results, std::size_t begin) {
  std::size_t best = begin;
  for (std::size_t i = begin + 1; i < results.size(); ++i)
    if (results[i].ceig > results[best].ceig) best = i;
  return best;
}

}  // namespace

DesignSweep optimize_design(const DesignModel& model, const SboedState& state, int remaining,
                            const DesignOptions& options, int sweep_index) {
  const int k = model.num_candidates();
  const long count = completion_count(k, state.next, remaining);
  if (remaining < 1 || count == 0)
    throw UsageError("cannot place " + std::to_string(remaining) + " observations in steps " +
                     std::to_string(state.next + 1) + ".." + std::to_string(k));
  if (options.strategy != "exhaustive" && options.strategy != "greedy")
    throw UsageError("unknown design strategy '" + options.strategy + "'");
  const SweepSamples samples =
      prepare_sweep(model, state, options.num_samples, mix_seed(options.seed, static_cast<std::uint64_t>(sweep_index)));

  DesignSweep sweep;
  sweep.greedy = options.strategy == "greedy" || count > options.budget_cap;
  if (!sweep.greedy) {
    sweep.table = evaluate_all(model, state, samples, completions(state, remaining), options.max_failure_fraction);
    sweep.best = sweep.table[first_max(sweep.table, 0)].xi;
    return sweep;
  }
  if (options.strategy == "exhaustive")
    warn(std::to_string(count) + " candidates exceed the budget cap; using greedy search");
  TimeMask current(k, false);
  for (int t = 0; t < state.next; ++t) current[t] = state.observed[t];
  for (int added = 0; added < remaining; ++added) {
    std::vector<TimeMask> trial;
    for (int t = state.next; t < k; ++t) {
      if (current[t]) continue;
      trial.push_back(current);
      trial.back()[t] = true;
    }
    const std::size_t begin = sweep.table.size();
    for (auto& r : evaluate_all(model, state, samples, trial, options.max_failure_fraction))
      sweep.table.push_back(std::move(r));
    current = sweep.table[first_max(sweep.table, begin)].xi;
  }
  sweep.best = current;
  return sweep;
}

// ------------------------------------------------------------ adaptive run

SyntheticObserver::SyntheticObserver(const TumorModel& model, const Vector& truth, std::uint64_t noise_seed)
    : clean(model.pto(truth)), noise_std(model.config().noise_std), seed(noise_seed) {}

Vector SyntheticObserver::observe(int step) const {
  if (step < 0 || step >= static_cast<int>(clean.size())) throw UsageError("observation step out of range");
  NormalSampler noise(mix_seed(seed, static_cast<std::uint64_t>(step)));
  return clean[step] + noise_std * noise.vector(clean[step].size());
}

AdaptiveResult adaptive_run(const DesignModel& model, const SyntheticObserver& observer, int budget,
                            const DesignOptions& options) {
  const int k = model.num_candidates();
  if (budget < 1 || budget > k) throw UsageError("observation budget must be in [1, " + std::to_string(k) + "]");
  if (static_cast<int>(observer.clean.size()) != k) throw UsageError("observer and model disagree on K");
  AdaptiveResult res;
  res.state = SboedState::initial(model);
  for (int sweep_index = 0; static_cast<int>(res.observation_steps.size()) < budget; ++sweep_index) {
    const int remaining = budget - static_cast<int>(res.observation_steps.size());
    const DesignSweep sweep = optimize_design(model, res.state, remaining, options, sweep_index);
    res.evaluations += static_cast<long>(sweep.table.size());
    for (const auto& c : sweep.table) res.log.push_back({sweep_index, bitstring(c.xi), c.ceig, c.seconds});
    if (sweep_index == 0) res.static_design = sweep.best;

    int t = res.state.next;
    while (!sweep.best[t]) ++t;
    auto& st = res.state;
    st.data[t] = model.to_model_data(observer.observe(t), t);
    st.observed[t] = true;
    st.next = t + 1;
    st.posterior = model.condition(st.data, st.observed, st.posterior.map);
    res.observation_steps.push_back(t);
    res.information_gain.push_back(st.posterior.information_gain);
    res.posteriors.push_back(st.posterior);
  }
  res.adaptive_design = res.state.observed;
  return res;
}

DesignPosterior observe_design(const DesignModel& model, const SyntheticObserver& observer, const TimeMask& xi) {
  check_mask(model, xi);
  std::vector<Vector> data(xi.size());
  for (std::size_t k = 0; k < xi.size(); ++k)
    if (xi[k]) data[k] = model.to_model_data(observer.observe(static_cast<int>(k)), static_cast<int>(k));
  return model.condition(data, xi, model.prior_posterior().map);
}

TimeMask uniform_design(int num_candidates, int budget) {
  if (budget < 1 || budget > num_candidates) throw UsageError("observation budget out of range");
  TimeMask xi(num_candidates, false);
  for (int j = 1; j <= budget; ++j) {
    const int step = static_cast<int>(std::lround(static_cast<double>(j) * num_candidates / budget));
    xi[step - 1] = true;
  }
  return xi;
}

std::string bitstring(const TimeMask& xi) {
  std::string s;
  for (bool b : xi) s += b ? '1' : '0';
  return s;
}

void write_run_log(const std::filesystem::path& path, const std::vector<LogRecord>& log) {
  io::CsvWriter csv(path, {"sweep", "candidate", "ceig", "seconds"});
  for (const auto& r : log)
    csv.row({std::to_string(r.sweep), r.candidate, io::format_double(r.ceig), io::format_double(r.seconds)});
}

// ------------------------------------------------------- linear identity

TerminalEquivalenceReport terminal_equivalence_oracle(const LinearGaussianModel& model, const TimeMask& prefix, const ObservableSeries& y_prefix,
                               int next, int remaining) {
  const int k = model.num_candidates();
  if (static_cast<int>(prefix.size()) != k) throw UsageError("design length mismatch");
  const Index n = model.dim();
  const DenseGaussian prior = prior_of(model);
  bool observed = false;
  for (int t = 0; t < next; ++t) observed = observed || prefix[t];
  const DenseGaussian before = observed ? exact_posterior(model, y_prefix, prefix) : prior;

  TerminalEquivalenceReport rep;
  rep.prefix_kl = observed ? gaussian_kl(before, prior) : 0.0;
  Eigen::LLT<Matrix> prior_llt(model.prior_cov), before_llt(before.cov);
  const double logdet_prior = log_det_spd(model.prior_cov), logdet_before = log_det_spd(before.cov);

  SboedState st;
  st.next = next;
  st.observed = prefix;
  for (const TimeMask& xi : completions(st, remaining)) {
    ObservableSeries zeros(k);
    for (int t = 0; t < k; ++t) zeros[t] = Vector::Zero(model.jac[t].rows());
    const DenseGaussian terminal = exact_posterior(model, zeros, xi);

    // gain of the new rows against the prefix posterior
    Index rows = 0;
    for (int t = next; t < k; ++t)
      if (xi[t]) rows += model.jac[t].rows();
    Matrix j(rows, n);
    Index r = 0;
    for (int t = next; t < k; ++t) {
      if (!xi[t]) continue;
      j.middleRows(r, model.jac[t].rows()) = model.jac[t];
      r += model.jac[t].rows();
    }
    Matrix s = j * before.cov * j.transpose() + model.noise_var * Matrix::Identity(rows, rows);
    s = 0.5 * (s + s.transpose());
    Eigen::LLT<Matrix> s_llt(s);
    const Matrix gain = s_llt.solve(j * before.cov).transpose();
    const Vector mean_mu = before.mean;  // predictive innovation has zero mean
    const Matrix cov_mu = gain * s * gain.transpose();
    const double logdet_t = log_det_spd(terminal.cov);

    const Vector diff = mean_mu - model.prior_mean;
    const double term = 0.5 * (prior_llt.solve(terminal.cov).trace() - static_cast<double>(n) + logdet_prior -
                               logdet_t + diff.dot(prior_llt.solve(diff)) + prior_llt.solve(cov_mu).trace());
    const double init = 0.5 * (before_llt.solve(terminal.cov).trace() - static_cast<double>(n) + logdet_before -
                               logdet_t + before_llt.solve(cov_mu).trace());
    rep.candidates.push_back(xi);
    rep.terminal.push_back(term);
    rep.initial_conditioned.push_back(init);
    rep.max_deviation = std::max(rep.max_deviation, std::abs(term - init - rep.prefix_kl));
  }
  for (std::size_t i = 1; i < rep.terminal.size(); ++i) {
    if (rep.terminal[i] > rep.terminal[rep.argmax_terminal]) rep.argmax_terminal = i;
    if (rep.initial_conditioned[i] > rep.initial_conditioned[rep.argmax_initial]) rep.argmax_initial = i;
  }
  return rep;
}

}  // namespace sboed
