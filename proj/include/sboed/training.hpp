#pragma once

#include "sboed/surrogate.hpp"

#include <functional>

namespace sboed {

struct TrainOptions {
  int epochs = 1000;
  int batch_size = 32;
  double learning_rate = 1e-3;
  double weight_decay = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  LossOptions loss;
  std::uint64_t seed = 1;  // mini-batch shuffling
  std::function<void(int epoch, double loss)> on_epoch;
};

struct TrainReport {
  double initial_loss = 0.0;
  std::vector<double> epoch_loss;  // running mean over the epoch's mini-batches
};

/// Mean per-sample loss over the whole set at the current parameters.
double dataset_loss(const Surrogate& model, const TrainingSet& set, const LossOptions& options,
                    int batch_size = 64);

/// AdamW (decoupled weight decay) on shuffled mini-batches. Deterministic for
/// a fixed seed. Throws NumericalError naming the epoch if the loss diverges.
TrainReport train(Surrogate& model, const TrainingSet& set, const TrainOptions& options);

/// Gradient of the mean batch loss with respect to every parameter.
std::vector<Matrix> loss_gradient(const Surrogate& model, const SurrogateBatch& batch, const LossOptions& options,
                                  double* loss_value = nullptr);

/// Loss options each model kind is trained with by default: derivative-informed
/// rollout for LANO and the per-step networks, teacher-forced one-step
/// output-only fitting for the neural ODE.
LossOptions default_loss_options(const std::string& kind);

}  // namespace sboed
