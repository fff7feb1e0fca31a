#pragma once

#include "sboed/laplace.hpp"
#include "sboed/linear_gaussian.hpp"
#include "sboed/reduced_inference.hpp"

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

namespace sboed {

/// Low-rank Gaussian posterior in a backend's own coordinates: the full
/// parameter for the PDE and dense linear backends, beta for the surrogate.
struct DesignPosterior {
  Vector map;
  Vector lambda;  // descending
  Matrix w;       // eigenvectors, orthonormal in the backend's prior metric
  TimeMask xi;
  double information_gain = 0.0;
  bool is_prior = true;
};

/// Inference backend of the design loop. Data live in the backend's data
/// space: full observables, or projected coefficients for the surrogate.
class DesignModel {
 public:
  virtual ~DesignModel() = default;
  virtual std::string name() const = 0;
  virtual int num_candidates() const = 0;
  virtual double noise_std() const = 0;

  virtual DesignPosterior prior_posterior() const = 0;
  virtual Vector sample(const DesignPosterior& post, std::uint64_t seed) const = 0;
  /// Clean data at every candidate step.
  virtual std::vector<Vector> simulate(const Vector& parameter) const = 0;
  /// MAP, eigenpairs and information gain for data at the selected steps
  /// (entries of unselected steps are ignored).
  virtual DesignPosterior condition(const std::vector<Vector>& data, const TimeMask& xi,
                                    const Vector& start) const = 0;
  /// Maps a full-space observation at `step` into the data space.
  virtual Vector to_model_data(const Vector& observation, int step) const = 0;

  /// Full-space views for reports.
  virtual Vector parameter_field(const DesignPosterior& post) const = 0;
  virtual Vector pointwise_std(const DesignPosterior& post) const = 0;
};

struct FullModelOptions {
  int rank = 16;
  int oversampling = 10;
  MapOptions map;
  std::uint64_t seed = 3;  // randomized eigensolver
};

class FullDesignModel final : public DesignModel {
 public:
  FullDesignModel(const TumorModel& model, const GaussianPrior& prior, FullModelOptions options = {});
  std::string name() const override { return "full"; }
  int num_candidates() const override { return model_->num_candidates(); }
  double noise_std() const override { return model_->config().noise_std; }
  DesignPosterior prior_posterior() const override;
  Vector sample(const DesignPosterior& post, std::uint64_t seed) const override;
  std::vector<Vector> simulate(const Vector& parameter) const override;
  DesignPosterior condition(const std::vector<Vector>& data, const TimeMask& xi, const Vector& start) const override;
  Vector to_model_data(const Vector& observation, int) const override { return observation; }
  Vector parameter_field(const DesignPosterior& post) const override { return post.map; }
  Vector pointwise_std(const DesignPosterior& post) const override;

 private:
  const TumorModel* model_;
  const GaussianPrior* prior_;
  FullModelOptions options_;
};

/// Surrogate backend on projected data z_k = Psi_F^T (y_k - F_bar) with noise
/// N(0, sigma^2 I_rF).
class SurrogateDesignModel final : public DesignModel {
 public:
  SurrogateDesignModel(const Surrogate& net, const ReducedBases& bases, const GaussianPrior& prior,
                       const Vector& beta_f0, double noise_std, ReducedMapOptions options = {});
  std::string name() const override { return "surrogate"; }
  int num_candidates() const override { return net_->num_steps(); }
  double noise_std() const override { return noise_std_; }
  DesignPosterior prior_posterior() const override;
  Vector sample(const DesignPosterior& post, std::uint64_t seed) const override;
  std::vector<Vector> simulate(const Vector& parameter) const override;
  DesignPosterior condition(const std::vector<Vector>& data, const TimeMask& xi, const Vector& start) const override;
  Vector to_model_data(const Vector& observation, int) const override { return bases_->encode_f(observation); }
  Vector parameter_field(const DesignPosterior& post) const override;
  Vector pointwise_std(const DesignPosterior& post) const override;

 private:
  const Surrogate* net_;
  const ReducedBases* bases_;
  const GaussianPrior* prior_;
  Vector beta_f0_;
  double noise_std_;
  ReducedMapOptions options_;
};

/// Dense affine-Gaussian backend with exact posteriors (oracle tests).
class LinearDesignModel final : public DesignModel {
 public:
  explicit LinearDesignModel(const LinearGaussianModel& model);
  std::string name() const override { return "linear"; }
  int num_candidates() const override { return model_->num_candidates(); }
  double noise_std() const override { return std::sqrt(model_->noise_var); }
  DesignPosterior prior_posterior() const override;
  Vector sample(const DesignPosterior& post, std::uint64_t seed) const override;
  std::vector<Vector> simulate(const Vector& parameter) const override { return model_->apply(parameter); }
  DesignPosterior condition(const std::vector<Vector>& data, const TimeMask& xi, const Vector& start) const override;
  Vector to_model_data(const Vector& observation, int) const override { return observation; }
  Vector parameter_field(const DesignPosterior& post) const override { return post.map; }
  Vector pointwise_std(const DesignPosterior& post) const override;

 private:
  const LinearGaussianModel* model_;
  Matrix prior_chol_;       // L L^T = Gamma0
  Matrix prior_precision_;
};

/// Observed prefix and current posterior of an adaptive run.
struct SboedState {
  int next = 0;                   // first mutable step (0-based)
  TimeMask observed;              // selected steps before `next`
  std::vector<Vector> data;       // backend data, filled at observed steps
  DesignPosterior posterior;

  static SboedState initial(const DesignModel& model);
};

struct DesignOptions {
  int num_samples = 16;      // N_s
  std::uint64_t seed = 11;   // sweep seeds derive from it
  std::string strategy = "exhaustive";  // exhaustive | greedy
  long budget_cap = 10000;   // exhaustive above this count falls back to greedy
  double max_failure_fraction = 0.1;
};

struct CandidateResult {
  TimeMask xi;
  double ceig = 0.0;
  double std_error = 0.0;  // of the Monte Carlo mean
  int failures = 0;
  double seconds = 0.0;
};

struct DesignSweep {
  std::vector<CandidateResult> table;  // every evaluated candidate
  TimeMask best;
  bool greedy = false;
};

/// Posterior draws and noisy simulated data shared by every candidate of a
/// sweep (common random numbers); observed prefix slots hold the observed data.
struct SweepSamples {
  std::vector<std::vector<Vector>> data;
};

SweepSamples prepare_sweep(const DesignModel& model, const SboedState& state, int num_samples, std::uint64_t seed);

/// Monte Carlo conditional EIG of the full design xi (observed prefix plus
/// candidate completion) over the sweep samples.
CandidateResult conditional_eig(const DesignModel& model, const SboedState& state, const SweepSamples& samples,
                                const TimeMask& xi, double max_failure_fraction = 0.1);

/// Number of ways to place `remaining` observations in steps [next, K).
long completion_count(int num_candidates, int next, int remaining);

/// Best completion of the state's prefix; ties go to the earliest steps.
DesignSweep optimize_design(const DesignModel& model, const SboedState& state, int remaining,
                            const DesignOptions& options, int sweep_index = 0);

/// Full-model observations of a ground truth with per-step noise seeds.
struct SyntheticObserver {
  ObservableSeries clean;
  double noise_std = 0.0;
  std::uint64_t seed = 0;

  SyntheticObserver(const TumorModel& model, const Vector& truth, std::uint64_t noise_seed);
  SyntheticObserver(ObservableSeries clean_data, double sigma, std::uint64_t noise_seed)
      : clean(std::move(clean_data)), noise_std(sigma), seed(noise_seed) {}
  Vector observe(int step) const;
};

struct LogRecord {
  int sweep = 0;
  std::string candidate;  // bitstring over all steps
  double ceig = 0.0;
  double seconds = 0.0;
};

struct AdaptiveResult {
  TimeMask static_design;
  TimeMask adaptive_design;
  std::vector<int> observation_steps;      // in observation order
  std::vector<double> information_gain;    // posterior IG after each observation
  std::vector<DesignPosterior> posteriors; // after each observation
  SboedState state;
  std::vector<LogRecord> log;
  long evaluations = 0;
};

AdaptiveResult adaptive_run(const DesignModel& model, const SyntheticObserver& observer, int budget,
                            const DesignOptions& options);

/// Posterior after observing the truth at every step of `xi`.
DesignPosterior observe_design(const DesignModel& model, const SyntheticObserver& observer, const TimeMask& xi);

/// Design with observations at round(j K / d), j = 1..d (1-based steps).
TimeMask uniform_design(int num_candidates, int budget);

std::string bitstring(const TimeMask& xi);
void write_run_log(const std::filesystem::path& path, const std::vector<LogRecord>& log);

struct TerminalEquivalenceReport {
  double max_deviation = 0.0;  // |terminal - initial_conditioned - KL(post_{i-1} || prior)|
  double prefix_kl = 0.0;
  std::vector<TimeMask> candidates;
  std::vector<double> terminal;
  std::vector<double> initial_conditioned;
  std::size_t argmax_terminal = 0;
  std::size_t argmax_initial = 0;
};

/// Closed-form check on a linear-Gaussian model: for every completion of the
/// observed prefix with `remaining` more steps, the terminal objective
/// (expected KL(post_T || prior) under the predictive of the new data) and
/// the initial-conditioned objective (expected KL(post_T || post_{i-1})) differ
/// by KL(post_{i-1} || prior).
TerminalEquivalenceReport terminal_equivalence_oracle(const LinearGaussianModel& model, const TimeMask& prefix, const ObservableSeries& y_prefix,
                               int next, int remaining);

}  // namespace sboed
