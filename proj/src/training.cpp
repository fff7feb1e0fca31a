#include "sboed/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace sboed {

std::vector<Matrix> loss_gradient(const Surrogate& model, const SurrogateBatch& batch, const LossOptions& options,
                                  double* loss_value) {
  ad::Tape tape;
  std::vector<ad::Var> theta;
  for (const auto& v : model.parameters().values) theta.push_back(tape.parameter(v));
  const ad::Var l = model.loss(tape, theta, batch, options);
  if (loss_value) *loss_value = l.value()(0, 0);
  tape.backward(l);
  std::vector<Matrix> g;
  g.reserve(theta.size());
  for (const auto& v : theta) g.push_back(tape.grad(v));
  return g;
}

double dataset_loss(const Surrogate& model, const TrainingSet& set, const LossOptions& options, int batch_size) {
  if (set.samples.empty()) throw UsageError("empty data set");
  double total = 0.0;
  const std::size_t n = set.samples.size();
  for (std::size_t start = 0; start < n; start += batch_size) {
    std::vector<std::size_t> idx;
    for (std::size_t i = start; i < std::min(n, start + batch_size); ++i) idx.push_back(i);
    const auto batch = make_batch(set, idx);
    ad::Tape tape;
    std::vector<ad::Var> theta;
    for (const auto& v : model.parameters().values) theta.push_back(tape.constant(v));
    total += model.loss(tape, theta, batch, options).value()(0, 0) * static_cast<double>(idx.size());
  }
  return total / static_cast<double>(n);
}

TrainReport train(Surrogate& model, const TrainingSet& set, const TrainOptions& opt) {
  if (set.samples.empty()) throw UsageError("training needs at least one sample");
  if (opt.batch_size < 1 || opt.epochs < 0) throw UsageError("invalid training schedule");
  auto& params = model.parameters().values;
  std::vector<Matrix> m1, m2;
  for (const auto& p : params) {
    m1.push_back(Matrix::Zero(p.rows(), p.cols()));
    m2.push_back(Matrix::Zero(p.rows(), p.cols()));
  }
  TrainReport report;
  report.initial_loss = dataset_loss(model, set, opt.loss);

  std::mt19937_64 shuffle_rng(opt.seed);
  std::vector<std::size_t> order(set.samples.size());
  std::iota(order.begin(), order.end(), 0);
  long step = 0;
  for (int epoch = 1; epoch <= opt.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += opt.batch_size) {
      const std::vector<std::size_t> idx(order.begin() + start,
                                         order.begin() + std::min(order.size(), start + opt.batch_size));
      double value = 0.0;
      const auto grads = loss_gradient(model, make_batch(set, idx), opt.loss, &value);
      if (!std::isfinite(value)) throw NumericalError("training diverged at epoch " + std::to_string(epoch));
      sum += value * static_cast<double>(idx.size());

      ++step;
      const double c1 = 1.0 - std::pow(opt.beta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(opt.beta2, static_cast<double>(step));
      for (std::size_t i = 0; i < params.size(); ++i) {
        m1[i] = opt.beta1 * m1[i] + (1.0 - opt.beta1) * grads[i];
        m2[i] = opt.beta2 * m2[i] + (1.0 - opt.beta2) * grads[i].cwiseAbs2();
        params[i] *= 1.0 - opt.learning_rate * opt.weight_decay;
        params[i].array() -=
            opt.learning_rate * (m1[i].array() / c1) / ((m2[i].array() / c2).sqrt() + opt.epsilon);
      }
    }
    const double mean = sum / static_cast<double>(order.size());
    if (!std::isfinite(mean) || !model.parameters().all_finite())
      throw NumericalError("training diverged at epoch " + std::to_string(epoch));
    report.epoch_loss.push_back(mean);
    if (opt.on_epoch) opt.on_epoch(epoch, mean);
  }
  return report;
}

LossOptions default_loss_options(const std::string& kind) {
  LossOptions o;
  if (kind == "neural-ode") {
    o.jacobian_weight = 0.0;
    o.teacher_forcing = true;
  }
  return o;
}

}  // namespace sboed
