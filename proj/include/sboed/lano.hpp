#pragma once

#include "sboed/surrogate.hpp"

namespace sboed {

struct LanoConfig {
  int rank_m = 16;
  int rank_f = 16;
  int steps = 10;
  int hidden = 64;     // d_h
  int attention = 64;  // d_a
  double layer_norm_eps = 1e-5;
  std::uint64_t init_seed = 1;
};

/// Latent attention neural operator. Per step k: s_k = W^s_k x_k + b^s_k,
/// p = W^p beta_m + b^p, z_k = tanh(W^z_k [s_k; p] + b^z_k) + P_k; one causal
/// single-head attention block (row k attends to columns j <= k); feed-forward
/// g = W_2^T ELU(W_1^T a + b_1) + b_2 and layer normalization give f_k; two
/// residual ELU heads advance beta^F and beta^J. Inputs x_k are the rollout
/// predictions (x_0 = beta_F_0) and beta^J_0 = beta_F_0.
class Lano final : public Surrogate {
 public:
  explicit Lano(const LanoConfig& config);
  std::string kind() const override { return "lano"; }
  io::KeyValues hyper() const override;
  const LanoConfig& config() const { return config_; }

  RolloutVars rollout(ad::Tape& tape, const std::vector<ad::Var>& theta, ad::Var beta_m, ad::Var beta_f0,
                      const SurrogateBatch* teacher, bool tangents) const override;

  /// Parameters used only by the step-k heads (they affect beta_{k+1} onward).
  std::vector<int> head_parameters(int k) const;

 private:
  LanoConfig config_;
  int wp_, bp_, wq_, wk_, wv_, pos_, w1_, b1_, w2_, b2_, ln_gain_, ln_bias_;
  std::vector<int> ws_, bs_, wz_, bz_;
  std::vector<int> f1w_, f1b_, f2w_, f2b_, j1w_, j1b_, j2w_, j2b_;
};

/// Full-space Jacobian action J_k m_hat = Psi_F grad N^J_k (Psi_m^T Gamma^-1 m_hat).
Vector full_jacobian_action(const ReducedBases& bases, const GaussianPrior& prior, const Matrix& reduced_jacobian,
                            const Vector& m_hat);

}  // namespace sboed
