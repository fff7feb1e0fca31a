#include "sboed/metrics.hpp"

#include <cmath>

namespace sboed {

namespace {

double weighted_norm(const SparseMatrix& mass, const Vector& v) {
  if (mass.size() == 0) return v.norm();
  return std::sqrt(std::max(0.0, v.dot(mass * v)));
}

}  // namespace

StepStatistics summarize(const std::vector<std::vector<double>>& per_sample) {
  StepStatistics s;
  s.samples = static_cast<int>(per_sample.size());
  if (per_sample.empty()) return s;
  const std::size_t k = per_sample.front().size();
  s.mean.assign(k, 0.0);
  s.std.assign(k, 0.0);
  for (const auto& row : per_sample)
    for (std::size_t j = 0; j < k; ++j) s.mean[j] += row[j] / s.samples;
  if (s.samples > 1) {
    for (const auto& row : per_sample)
      for (std::size_t j = 0; j < k; ++j) s.std[j] += (row[j] - s.mean[j]) * (row[j] - s.mean[j]);
    for (auto& v : s.std) v = std::sqrt(v / (s.samples - 1));
  }
  return s;
}

SurrogateErrors evaluate_surrogate(const Surrogate& model, const TrainingSet& test, const ReducedBases& bases,
                                   const SparseMatrix& mass) {
  if (test.samples.empty()) throw UsageError("empty test set");
  const int k = model.num_steps();
  std::vector<std::vector<double>> pto(test.samples.size()), jac(test.samples.size());
  parallel_for(static_cast<Index>(test.samples.size()), [&](Index n) {
    const auto& s = test.samples[n];
    const Prediction p = model.predict(s.beta_m, s.beta_f.col(0), true);
    for (int j = 0; j < k; ++j) {
      const Vector truth = s.outputs.col(j);
      const Vector approx = bases.decode_f(p.f.col(j));
      pto[n].push_back(weighted_norm(mass, truth - approx) / weighted_norm(mass, truth));
      jac[n].push_back((s.beta_j[j] - p.jac_j[j]).norm() / s.beta_j[j].norm());
    }
  });
  return {summarize(pto), summarize(jac)};
}

double map_relative_error(const Vector& m_map, const Vector& beta_map, const ReducedBases& bases,
                          const GaussianPrior& prior) {
  const Vector diff = m_map - bases.psi_m * beta_map - prior.mean();
  return prior.mass_norm(diff) / prior.mass_norm(m_map);
}

void write_error_table(const std::filesystem::path& path,
                       const std::vector<std::pair<std::string, SurrogateErrors>>& rows) {
  io::CsvWriter csv(path, {"model", "step", "pto_error_pct", "pto_std_pct", "jacobian_error_pct",
                           "jacobian_std_pct", "samples"});
  for (const auto& [name, e] : rows)
    for (std::size_t j = 0; j < e.pto.mean.size(); ++j)
      csv.row({name, std::to_string(j + 1), io::format_double(100 * e.pto.mean[j]),
               io::format_double(100 * e.pto.std[j]), io::format_double(100 * e.jacobian.mean[j]),
               io::format_double(100 * e.jacobian.std[j]), std::to_string(e.pto.samples)});
}

}  // namespace sboed
