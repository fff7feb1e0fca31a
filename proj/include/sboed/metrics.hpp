#pragma once

#include "sboed/surrogate.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace sboed {

/// Sample mean and standard deviation of a relative error, one entry per step.
struct StepStatistics {
  std::vector<double> mean;
  std::vector<double> std;
  int samples = 0;
};

struct SurrogateErrors {
  StepStatistics pto;       // |F_k - Psi_F N_k - F_bar|_M / |F_k|_M
  StepStatistics jacobian;  // |beta_J_k - grad N_k|_F / |beta_J_k|_F
};

/// Rollout errors of a surrogate on held-out samples. `mass` weights the
/// observable norm (the identity when empty).
SurrogateErrors evaluate_surrogate(const Surrogate& model, const TrainingSet& test, const ReducedBases& bases,
                                   const SparseMatrix& mass);

/// |m_MAP - Psi_m beta_MAP - m_prior|_M / |m_MAP|_M.
double map_relative_error(const Vector& m_map, const Vector& beta_map, const ReducedBases& bases,
                          const GaussianPrior& prior);

/// Writes step, kind, PtO mean/std and Jacobian mean/std as percentages.
void write_error_table(const std::filesystem::path& path,
                       const std::vector<std::pair<std::string, SurrogateErrors>>& rows);

StepStatistics summarize(const std::vector<std::vector<double>>& per_sample);

}  // namespace sboed
