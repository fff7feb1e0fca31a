#pragma once

#include "sboed/reduction.hpp"
#include "sboed/sboed.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace sboed {

struct BenchRow {
  std::string quantity;  // PtO | MAP | Eigenpairs | Information Gain
  double full_seconds = 0.0;
  double surrogate_seconds = 0.0;
  double speedup() const { return full_seconds / surrogate_seconds; }
};

/// Mean wall times of full-order and surrogate inference over `repetitions`
/// synthetic data sets (truth from the prior, all steps observed). The
/// Information Gain row times the whole chain MAP + eigenpairs + IG.
std::vector<BenchRow> run_bench(const TumorModel& model, const GaussianPrior& prior, const FullModelOptions& full,
                                const Surrogate& net, const ReducedBases& bases, int repetitions,
                                std::uint64_t seed);

void write_bench_table(const std::filesystem::path& path, const std::vector<BenchRow>& rows);

/// Encoded initial observable Psi_F^T (B u_0 - F_bar).
Vector initial_reduced_state(const TumorModel& model, const ReducedBases& bases);

}  // namespace sboed
