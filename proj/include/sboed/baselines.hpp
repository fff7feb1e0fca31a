#pragma once

#include "sboed/surrogate.hpp"

namespace sboed {

struct ResNetConfig {
  int rank_m = 16;
  int rank_f = 16;
  int steps = 10;
  int width = 100;
  int blocks = 3;
  std::uint64_t init_seed = 1;
};

/// Discrete latent ODE x_{k+1} = x_k + N(x_k, beta_m), N a residual network
/// (lift to width, `blocks` blocks h += ELU(W h + b), linear read-out).
/// Jacobians follow the chain-rule recursion through the rollout.
class NeuralOde final : public Surrogate {
 public:
  explicit NeuralOde(const ResNetConfig& config);
  std::string kind() const override { return "neural-ode"; }
  io::KeyValues hyper() const override;

  RolloutVars rollout(ad::Tape& tape, const std::vector<ad::Var>& theta, ad::Var beta_m, ad::Var beta_f0,
                      const SurrogateBatch* teacher, bool tangents) const override;

 private:
  ResNetConfig config_;
};

/// One independent residual network beta_m -> beta_F_k per step.
class PerStepNet final : public Surrogate {
 public:
  explicit PerStepNet(const ResNetConfig& config);
  std::string kind() const override { return "per-step"; }
  io::KeyValues hyper() const override;

  RolloutVars rollout(ad::Tape& tape, const std::vector<ad::Var>& theta, ad::Var beta_m, ad::Var beta_f0,
                      const SurrogateBatch* teacher, bool tangents) const override;

 private:
  ResNetConfig config_;
};

}  // namespace sboed
