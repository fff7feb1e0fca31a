#pragma once

#include "sboed/autodiff.hpp"
#include "sboed/io.hpp"
#include "sboed/reduction.hpp"

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

namespace sboed {

/// Named trainable matrices in a fixed order.
struct ParameterSet {
  std::vector<std::string> names;
  std::vector<Matrix> values;

  int add(std::string name, Matrix value);
  Index scalar_count() const;
  bool all_finite() const;
};

/// B training samples laid out as columns. Jacobian targets use sample-major
/// column groups: columns [b r_m, (b + 1) r_m) hold sample b.
struct SurrogateBatch {
  Matrix beta_m;                // r_m x B
  std::vector<Matrix> beta_f;   // K + 1 blocks r_F x B, block 0 the initial state
  std::vector<Matrix> beta_j;   // K blocks r_F x (B r_m)
  Index size() const { return beta_m.cols(); }
};

SurrogateBatch make_batch(const TrainingSet& set, const std::vector<std::size_t>& indices);

/// One network evaluation. Column k - 1 of f is step k.
struct Prediction {
  Matrix f;                    // r_F x K
  Matrix j;                    // r_F x K, Jacobian-head states
  std::vector<Matrix> jac_f;   // K blocks r_F x r_m, derivative of the F path
  std::vector<Matrix> jac_j;   // K blocks r_F x r_m, the Jacobian head (jac_f for single-head models)
};

struct LossOptions {
  double jacobian_weight = 1.0;
  bool teacher_forcing = false;
};

/// Tape handles of a rollout on a batch; tangent entries are empty when not
/// requested.
struct RolloutVars {
  std::vector<ad::Var> f;
  std::vector<ad::Var> j;  // Jacobian-head states (f for single-head models)
  std::vector<ad::Var> df;
  std::vector<ad::Var> dj;
};

/// A reduced-space sequence surrogate beta_m -> (beta_F_1..K, Jacobians).
class Surrogate {
 public:
  virtual ~Surrogate() = default;

  virtual std::string kind() const = 0;
  virtual io::KeyValues hyper() const = 0;
  int rank_m() const { return rank_m_; }
  int rank_f() const { return rank_f_; }
  int num_steps() const { return steps_; }

  ParameterSet& parameters() { return params_; }
  const ParameterSet& parameters() const { return params_; }

  /// Builds the network on the tape from parameter handles theta (same order
  /// as parameters()). With teacher forcing, step k reads beta_F_k from the
  /// batch instead of the prediction.
  virtual RolloutVars rollout(ad::Tape& tape, const std::vector<ad::Var>& theta, ad::Var beta_m, ad::Var beta_f0,
                              const SurrogateBatch* teacher, bool tangents) const = 0;

  /// Mean over the batch of sum_k |beta_F_k - N^F_k|^2 + w_J |beta_J_k - grad N^J_k|_F^2.
  ad::Var loss(ad::Tape& tape, const std::vector<ad::Var>& theta, const SurrogateBatch& batch,
               const LossOptions& options) const;

  Prediction predict(const Vector& beta_m, const Vector& beta_f0, bool jacobians) const;

 protected:
  Surrogate(int rank_m, int rank_f, int steps);
  ParameterSet params_;
  int rank_m_, rank_f_, steps_;
};

/// Throws NumericalError naming the layer when v has a non-finite entry.
void check_finite(ad::Var v, const std::string& layer, int step);

/// Rebuilds a surrogate from its hyper-parameters (kind key selects the class).
std::unique_ptr<Surrogate> make_surrogate(const io::KeyValues& hyper);

/// Manifest (hyper-parameters + extra keys), loss history CSV and one SBF1
/// file per named parameter.
void save_checkpoint(const std::filesystem::path& dir, const Surrogate& model, const std::vector<double>& loss_history,
                     const io::KeyValues& extra = {});
std::unique_ptr<Surrogate> load_checkpoint(const std::filesystem::path& dir);

}  // namespace sboed
