#pragma once

#include "sboed/forward.hpp"
#include "sboed/io.hpp"
#include "sboed/mesh.hpp"
#include "sboed/prior.hpp"
#include "sboed/sboed.hpp"
#include "sboed/training.hpp"

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

namespace sboed {

/// Every tunable of a pipeline run. Parsed from `key = value` files; unknown
/// keys are rejected. Named seeds default to streams of the master `seed`.
struct RunConfig {
  // geometry
  int nx = 32;
  int ny = 32;
  double lx = 24.0;  // mm
  double ly = 24.0;
  std::string region = "disk";  // disk | half | mask:<pgm path>
  TissueParameters tissue;
  MassMode prior_mass = MassMode::lumped;

  // forward model
  double final_time = 10.0;
  double dt = 0.1;
  int num_candidates = 10;  // K
  double noise_std = 0.02;
  ReactionMode reaction = ReactionMode::logistic;

  // reduction
  int rank_m = 16;
  int rank_f = 16;
  int dis_samples = 32;       // N_m
  int training_samples = 256; // N_t
  int test_samples = 64;
  int oversampling = 10;

  // surrogate and training
  std::string surrogate = "lano";  // lano | neural-ode | per-step
  int hidden = 64;
  int attention = 64;
  int width = 100;
  int blocks = 3;
  int epochs = 1000;
  int batch_size = 32;
  double learning_rate = 1e-3;
  double weight_decay = 1e-2;
  std::optional<double> jacobian_weight;  // default per kind
  std::optional<bool> teacher_forcing;    // default per kind

  // inference
  int laplace_rank = 16;
  int data_realizations = 16;
  int bench_repetitions = 4;
  double map_rel_tol = 1e-6;

  // design
  int budget = 2;             // d
  int design_samples = 16;    // N_s
  std::string strategy = "exhaustive";
  long budget_cap = 10000;
  std::string design_model = "surrogate";  // surrogate | full

  // seeds
  std::uint64_t seed = 1;
  std::optional<std::uint64_t> seed_reduction, seed_test, seed_init, seed_train, seed_truth, seed_noise, seed_design,
      seed_eigen;

  // inputs from earlier stages (empty: the output directory)
  std::filesystem::path reduction_dir;
  std::filesystem::path checkpoint_dir;  // empty: <out>/<surrogate>

  static RunConfig from_file(const std::filesystem::path& path);
  /// Applies overrides; throws UsageError naming an unknown key or bad value.
  void apply(const io::KeyValues& kv);
  /// Fully resolved configuration, named seeds included.
  io::KeyValues resolved() const;
  void validate() const;

  std::uint64_t reduction_seed() const;
  std::uint64_t test_seed() const;
  std::uint64_t init_seed() const;
  std::uint64_t train_seed() const;
  std::uint64_t truth_seed() const;
  std::uint64_t noise_seed() const;
  std::uint64_t design_seed() const;
  std::uint64_t eigen_seed() const;

  Geometry geometry() const;
  SimulationConfig simulation() const;
  io::KeyValues surrogate_hyper() const;
  TrainOptions train_options() const;
  DesignOptions design_options() const;
  FullModelOptions full_model_options() const;
};

/// Geometry, prior and forward model of one configuration.
struct Problem {
  Geometry geometry;
  GaussianPrior prior;
  TumorModel model;

  explicit Problem(const RunConfig& config);
};

/// Writes `config.resolved` into dir (created if needed).
void write_resolved_config(const std::filesystem::path& dir, const RunConfig& config);

}  // namespace sboed
