#pragma once

#include "sboed/io.hpp"
#include "sboed/laplace.hpp"

#include <filesystem>
#include <vector>

namespace sboed {

/// Input basis Psi_m (Gamma_prior^-1-orthonormal), output basis Psi_F
/// (orthonormal) and output mean F_bar.
struct ReducedBases {
  Matrix psi_m;
  Vector dis_values;
  Matrix psi_f;
  Vector singular_values;  // leading r_F, nonincreasing
  Vector f_mean;

  Index rank_m() const { return psi_m.cols(); }
  Index rank_f() const { return psi_f.cols(); }

  Vector encode_m(const GaussianPrior& prior, const Vector& m) const;  // Psi_m^T Gamma^-1 (m - m_prior)
  Vector decode_m(const GaussianPrior& prior, const Vector& beta) const;
  Vector encode_f(const Vector& f) const;  // Psi_F^T (f - F_bar)
  Vector decode_f(const Vector& beta) const;
};

/// Derivative-informed input subspace: leading generalized eigenpairs of
/// (1/N) sum_i sum_k J_k(m_i)^T J_k(m_i) against Gamma_prior^-1 over N prior
/// draws, computed with the double-pass randomized solver.
Eigenpairs compute_dis(const TumorModel& model, const GaussianPrior& prior, int num_samples, int rank,
                       int oversampling, std::uint64_t seed);

struct PcaResult {
  Matrix basis;
  Vector singular_values;  // all nonzero-rank values, nonincreasing
  Vector mean;
};

/// Mean-centered truncated SVD of the snapshot columns.
PcaResult compute_pca(const Matrix& snapshots, int rank);

struct TrainingSample {
  Vector beta_m;                // r_m
  Matrix beta_f;                // r_F x (K + 1); column 0 is the encoded initial state
  std::vector<Matrix> beta_j;   // K blocks r_F x r_m, Psi_F^T J_k Psi_m
  Matrix outputs;               // d_y x K full observables (for full-space metrics)
  Vector m;                     // the parameter draw
};

struct TrainingSet {
  std::vector<TrainingSample> samples;
  int num_candidates() const { return samples.empty() ? 0 : static_cast<int>(samples.front().beta_j.size()); }
};

/// Prior draws with seeds mix_seed(seed, n), full solves and reduced Jacobians
/// (tangent route when r_m <= r_F, adjoint route otherwise).
TrainingSet generate_training_set(const TumorModel& model, const GaussianPrior& prior, const ReducedBases& bases,
                                  int num_samples, std::uint64_t seed);

/// Fills the k = 0 column and the reduced quantities of a sample whose
/// parameter and full outputs are known.
TrainingSample encode_sample(const TumorModel& model, const GaussianPrior& prior, const ReducedBases& bases,
                             const Vector& m);

/// Full pipeline: DIS from N_m draws, N_t training solves, PCA of their
/// outputs, reduced Jacobians.
struct ReductionResult {
  ReducedBases bases;
  TrainingSet training;
};
ReductionResult build_reduction(const TumorModel& model, const GaussianPrior& prior, int num_dis_samples,
                                int num_training, int rank_m, int rank_f, int oversampling, std::uint64_t seed);

void save_bases(const std::filesystem::path& dir, const ReducedBases& bases);
ReducedBases load_bases(const std::filesystem::path& dir);
void save_training_set(const std::filesystem::path& dir, const std::string& prefix, const TrainingSet& set);
TrainingSet load_training_set(const std::filesystem::path& dir, const std::string& prefix);

}  // namespace sboed
