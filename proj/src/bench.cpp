#include "sboed/bench.hpp"

#include "sboed/io.hpp"

#include <chrono>

namespace sboed {

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

}  // namespace

Vector initial_reduced_state(const TumorModel& model, const ReducedBases& bases) {
  return bases.encode_f(model.observe_state(model.initial_state()));
}

std::vector<BenchRow> run_bench(const TumorModel& model, const GaussianPrior& prior, const FullModelOptions& full,
                                const Surrogate& net, const ReducedBases& bases, int repetitions,
                                std::uint64_t seed) {
  if (repetitions < 1) throw UsageError("bench needs at least one repetition");
  const int k = model.num_candidates();
  if (net.num_steps() != k) throw UsageError("surrogate and model disagree on K");
  const TimeMask xi = all_times(k);
  const double sigma = model.config().noise_std, noise_var = sigma * sigma;
  const Vector f0 = initial_reduced_state(model, bases);
  std::vector<BenchRow> rows{{"PtO"}, {"MAP"}, {"Eigenpairs"}, {"Information Gain"}};

  for (int rep = 0; rep < repetitions; ++rep) {
    const Vector truth = prior.sample(mix_seed(seed, 2 * static_cast<std::uint64_t>(rep)));
    const Vector beta_truth = bases.encode_m(prior, truth);

    auto t0 = Clock::now();
    const ObservableSeries clean = model.pto(truth);
    rows[0].full_seconds += since(t0);
    const ObservableSeries y = synthesize_data(clean, sigma, mix_seed(seed, 2 * static_cast<std::uint64_t>(rep) + 1));

    t0 = Clock::now();
    {
      const Prediction p = net.predict(beta_truth, f0, false);
      for (int j = 0; j < k; ++j) {
        const Vector f = bases.decode_f(p.f.col(j));
        (void)f;
      }
    }
    rows[0].surrogate_seconds += since(t0);

    // full chain
    t0 = Clock::now();
    const MapObjective obj{&model, &prior, y, xi, noise_var};
    const MapResult map = compute_map(obj, prior.mean(), full.map);
    const double t_map = since(t0);
    t0 = Clock::now();
    const LaplacePosterior post = laplace_at(LinearizationPoint(model, map.m, map.trajectory), prior, xi, noise_var,
                                             full.rank, full.oversampling, full.seed);
    const double t_eig = since(t0);
    t0 = Clock::now();
    (void)information_gain(post, prior);
    rows[1].full_seconds += t_map;
    rows[2].full_seconds += t_eig;
    rows[3].full_seconds += t_map + t_eig + since(t0);

    // surrogate chain
    t0 = Clock::now();
    std::vector<Vector> z;
    for (const auto& yk : y) z.push_back(bases.encode_f(yk));
    const ProjectedData data = reduced_data(noise_var, z);
    const ReducedMapResult rmap = reduced_map(net, f0, data, xi, Vector::Zero(net.rank_m()));
    const double s_map = since(t0);
    t0 = Clock::now();
    const SurrogatePosterior rpost = reduced_posterior(net, f0, data.gram, xi, rmap.beta);
    const double s_eig = since(t0);
    t0 = Clock::now();
    (void)reduced_information_gain(rpost);
    rows[1].surrogate_seconds += s_map;
    rows[2].surrogate_seconds += s_eig;
    rows[3].surrogate_seconds += s_map + s_eig + since(t0);
  }
  for (auto& r : rows) {
    r.full_seconds /= repetitions;
    r.surrogate_seconds /= repetitions;
  }
  return rows;
}

void write_bench_table(const std::filesystem::path& path, const std::vector<BenchRow>& rows) {
  io::CsvWriter csv(path, {"quantity", "full_seconds", "surrogate_seconds", "speedup"});
  for (const auto& r : rows)
    csv.row({r.quantity, io::format_double(r.full_seconds), io::format_double(r.surrogate_seconds),
             io::format_double(r.speedup())});
}

}  // namespace sboed
