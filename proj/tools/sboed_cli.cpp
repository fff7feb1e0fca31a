#include "CLI11.hpp"

#include "sboed/bench.hpp"
#include "sboed/config.hpp"
#include "sboed/metrics.hpp"
#include "sboed/reduction.hpp"
#include "sboed/verify.hpp"

#include <chrono>
#include <cstdio>
#include <iostream>

using namespace sboed;
namespace fs = std::filesystem;

namespace {

constexpr const char* kVersion = "sboed 1.0";

struct Context {
  RunConfig config;
  fs::path out;
  std::string command;
  io::KeyValues manifest;

  fs::path reduction_dir() const { return config.reduction_dir.empty() ? out / "reduction" : config.reduction_dir; }
  fs::path checkpoint_dir(const std::string& kind) const {
    if (!config.checkpoint_dir.empty()) return config.checkpoint_dir / kind;
    return out / "checkpoints" / kind;
  }
  void record_input(const std::string& name, const fs::path& file) {
    if (!fs::exists(file)) throw UsageError("missing input '" + file.string() + "' (" + name + ")");
    manifest["input." + name] = file.string() + " " + io::file_hash(file);
  }
  void finish() {
    manifest["command"] = command;
    manifest["version"] = kVersion;
    manifest["threads"] = std::to_string(thread_count());
    write_resolved_config(out, config);
    io::write_key_values(out / (command + ".manifest"), manifest);
  }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void write_field(const fs::path& stem, const Vector& field, const RunConfig& c) {
  io::write_sbf1(stem.string() + ".sbf1", io::from_vector(field));
  io::write_pgm(stem.string() + ".pgm", io::render_field(field, c.nx, c.ny));
}

/// Data from gen-data when present, otherwise synthesized from the config.
SyntheticObserver observer_for(Context& ctx, const Problem& p) {
  const fs::path truth = ctx.out / "data" / "truth.sbf1";
  Vector m = fs::exists(truth) ? io::to_vector(io::read_sbf1(truth)) : p.prior.sample(ctx.config.truth_seed());
  if (fs::exists(truth)) ctx.record_input("truth", truth);
  if (m.size() != p.prior.dim()) throw UsageError("truth field does not match the grid");
  return SyntheticObserver(p.model, m, ctx.config.noise_seed());
}

struct SurrogateBundle {
  ReducedBases bases;
  std::unique_ptr<Surrogate> net;
};

SurrogateBundle load_surrogate(Context& ctx, const std::string& kind) {
  SurrogateBundle b;
  ctx.record_input("bases", ctx.reduction_dir() / "psi_m.sbf1");
  b.bases = load_bases(ctx.reduction_dir());
  const fs::path dir = ctx.checkpoint_dir(kind);
  ctx.record_input("checkpoint." + kind, dir / "checkpoint.manifest");
  b.net = load_checkpoint(dir);
  if (b.net->num_steps() != ctx.config.num_candidates) throw UsageError("checkpoint K differs from num_candidates");
  return b;
}

std::vector<Vector> all_observations(const DesignModel& model, const SyntheticObserver& obs) {
  std::vector<Vector> y;
  for (int k = 0; k < model.num_candidates(); ++k) y.push_back(model.to_model_data(obs.observe(k), k));
  return y;
}

// ------------------------------------------------------------ subcommands

void gen_geometry(Context& ctx) {
  const Problem p(ctx.config);
  const fs::path dir = ctx.out / "geometry";
  fs::create_directories(dir);
  Vector tissue(p.prior.dim());
  for (Index i = 0; i < tissue.size(); ++i) tissue[i] = p.geometry.material.tissue[i] == Tissue::white ? 1.0 : 0.0;
  write_field(dir / "tissue", tissue, ctx.config);
  write_field(dir / "diffusion", p.geometry.material.diffusion, ctx.config);
  write_field(dir / "prior_mean", p.prior.mean(), ctx.config);
  write_field(dir / "prior_std", p.prior.pointwise_variance().cwiseSqrt(), ctx.config);
  write_field(dir / "prior_sample", p.prior.sample(ctx.config.truth_seed()), ctx.config);
  write_field(dir / "initial_state", p.model.initial_state(), ctx.config);
  std::cout << "grid " << ctx.config.nx << "x" << ctx.config.ny << ", " << p.prior.dim() << " nodes, "
            << p.geometry.material.count(Tissue::white) << " white-matter nodes\n";
}

void gen_data(Context& ctx) {
  const Problem p(ctx.config);
  const fs::path dir = ctx.out / "data";
  fs::create_directories(dir);
  const Vector truth = p.prior.sample(ctx.config.truth_seed());
  const SyntheticObserver obs(p.model, truth, ctx.config.noise_seed());
  Matrix clean(p.model.obs_dim(), p.model.num_candidates()), noisy(clean.rows(), clean.cols());
  for (int k = 0; k < p.model.num_candidates(); ++k) {
    clean.col(k) = obs.clean[k];
    noisy.col(k) = obs.observe(k);
  }
  write_field(dir / "truth", truth, ctx.config);
  io::write_sbf1(dir / "clean.sbf1", io::from_matrix(clean));
  io::write_sbf1(dir / "observations.sbf1", io::from_matrix(noisy));
  for (int k = 0; k < p.model.num_candidates(); ++k)
    io::write_pgm(dir / ("observation_" + std::to_string(k + 1) + ".pgm"),
                  io::render_field(noisy.col(k), ctx.config.nx, ctx.config.ny));
  std::cout << "truth and " << p.model.num_candidates() << " noisy observations written to " << dir << "\n";
}

void reduce(Context& ctx) {
  const RunConfig& c = ctx.config;
  const Problem p(c);
  const auto t0 = std::chrono::steady_clock::now();
  const ReductionResult red =
      build_reduction(p.model, p.prior, c.dis_samples, c.training_samples, c.rank_m, c.rank_f, c.oversampling,
                      c.reduction_seed());
  const double t_reduce = seconds_since(t0);
  const TrainingSet test = generate_training_set(p.model, p.prior, red.bases, c.test_samples, c.test_seed());
  const fs::path dir = ctx.reduction_dir();
  save_bases(dir, red.bases);
  save_training_set(dir, "train", red.training);
  save_training_set(dir, "test", test);
  write_spectrum_csv(dir / "dis_spectrum.csv", red.bases.dis_values);
  write_spectrum_csv(dir / "pca_spectrum.csv", red.bases.singular_values);
  ctx.manifest["seconds.reduction"] = io::format_double(t_reduce);
  ctx.manifest["seconds.total"] = io::format_double(seconds_since(t0));
  std::cout << "bases r_m = " << c.rank_m << ", r_F = " << c.rank_f << "; " << c.training_samples
            << " training and " << c.test_samples << " test samples in " << dir << "\n";
}

void train_cmd(Context& ctx) {
  const RunConfig& c = ctx.config;
  ctx.record_input("training_set", ctx.reduction_dir() / "train_beta_m.sbf1");
  const TrainingSet set = load_training_set(ctx.reduction_dir(), "train");
  auto net = make_surrogate(c.surrogate_hyper());
  if (set.num_candidates() != net->num_steps()) throw UsageError("training set K differs from num_candidates");
  TrainOptions opt = c.train_options();
  const int every = std::max(1, c.epochs / 20);
  const auto t0 = std::chrono::steady_clock::now();
  opt.on_epoch = [&](int epoch, double loss) {
    if (epoch % every == 0 || epoch == c.epochs)
      std::cerr << "epoch " << epoch << " loss " << io::format_double(loss) << " (" << seconds_since(t0) << " s)\n";
  };
  const TrainReport rep = train(*net, set, opt);
  io::KeyValues extra{{"training_seconds", io::format_double(seconds_since(t0))},
                      {"initial_loss", io::format_double(rep.initial_loss)}};
  save_checkpoint(ctx.checkpoint_dir(c.surrogate), *net, rep.epoch_loss, extra);
  std::cout << c.surrogate << ": loss " << rep.initial_loss << " -> " << rep.epoch_loss.back() << " after "
            << c.epochs << " epochs\n";
}

void eval_surrogate(Context& ctx) {
  const Problem p(ctx.config);
  ctx.record_input("test_set", ctx.reduction_dir() / "test_beta_m.sbf1");
  const TrainingSet test = load_training_set(ctx.reduction_dir(), "test");
  const SparseMatrix mass = assemble_mass(p.geometry.mesh);
  std::vector<std::pair<std::string, SurrogateErrors>> rows;
  for (const std::string kind : {"lano", "neural-ode", "per-step"}) {
    if (!fs::exists(ctx.checkpoint_dir(kind) / "checkpoint.manifest")) continue;
    SurrogateBundle b = load_surrogate(ctx, kind);
    rows.emplace_back(kind, evaluate_surrogate(*b.net, test, b.bases, mass));
  }
  if (rows.empty()) throw UsageError("no checkpoints found under " + ctx.checkpoint_dir("").string());
  write_error_table(ctx.out / "surrogate_errors.csv", rows);
  std::printf("%-11s %5s %12s %12s\n", "model", "step", "PtO %", "Jacobian %");
  for (const auto& [kind, e] : rows)
    for (std::size_t k = 0; k < e.pto.mean.size(); ++k)
      std::printf("%-11s %5zu %6.2f±%-5.2f %6.2f±%-5.2f\n", kind.c_str(), k + 1, 100 * e.pto.mean[k],
                  100 * e.pto.std[k], 100 * e.jacobian.mean[k], 100 * e.jacobian.std[k]);
  std::cout << "(" << test.samples.size() << " test samples)\n";
}

/// Full and surrogate posteriors of the observed data over every step.
struct InferencePair {
  DesignPosterior full, surrogate;
  double full_seconds = 0.0, surrogate_seconds = 0.0;
};

InferencePair infer_both(Context& ctx, const Problem& p, SurrogateBundle& b) {
  const SyntheticObserver obs = observer_for(ctx, p);
  const FullDesignModel full(p.model, p.prior, ctx.config.full_model_options());
  const SurrogateDesignModel sur(*b.net, b.bases, p.prior, initial_reduced_state(p.model, b.bases),
                                 ctx.config.noise_std);
  const TimeMask xi = all_times(ctx.config.num_candidates);
  InferencePair r;
  auto t0 = std::chrono::steady_clock::now();
  r.full = full.condition(all_observations(full, obs), xi, p.prior.mean());
  r.full_seconds = seconds_since(t0);
  t0 = std::chrono::steady_clock::now();
  r.surrogate = sur.condition(all_observations(sur, obs), xi, Vector());
  r.surrogate_seconds = seconds_since(t0);
  return r;
}

void map_cmd(Context& ctx) {
  const Problem p(ctx.config);
  SurrogateBundle b = load_surrogate(ctx, ctx.config.surrogate);
  const InferencePair r = infer_both(ctx, p, b);
  const Vector decoded = b.bases.decode_m(p.prior, r.surrogate.map);
  write_field(ctx.out / "map_full", r.full.map, ctx.config);
  write_field(ctx.out / "map_surrogate", decoded, ctx.config);
  const double re = map_relative_error(r.full.map, r.surrogate.map, b.bases, p.prior);
  io::write_key_values(ctx.out / "map.kv", {{"map_relative_error", io::format_double(re)},
                                            {"full_seconds", io::format_double(r.full_seconds)},
                                            {"surrogate_seconds", io::format_double(r.surrogate_seconds)}});
  std::cout << "MAP relative error " << 100 * re << " %\n";
}

void eig_cmd(Context& ctx) {
  const Problem p(ctx.config);
  SurrogateBundle b = load_surrogate(ctx, ctx.config.surrogate);
  const InferencePair r = infer_both(ctx, p, b);
  write_spectrum_csv(ctx.out / "spectrum_full.csv", r.full.lambda);
  write_spectrum_csv(ctx.out / "spectrum_surrogate.csv", r.surrogate.lambda);
  const Index n = std::min(r.full.lambda.size(), r.surrogate.lambda.size());
  std::printf("%4s %14s %14s\n", "j", "full", "surrogate");
  for (Index j = 0; j < n; ++j) std::printf("%4td %14.6e %14.6e\n", j + 1, r.full.lambda[j], r.surrogate.lambda[j]);
}

void ig_cmd(Context& ctx) {
  const Problem p(ctx.config);
  SurrogateBundle b = load_surrogate(ctx, ctx.config.surrogate);
  const InferencePair r = infer_both(ctx, p, b);
  io::write_key_values(ctx.out / "ig.kv", {{"full", io::format_double(r.full.information_gain)},
                                           {"surrogate", io::format_double(r.surrogate.information_gain)},
                                           {"full_seconds", io::format_double(r.full_seconds)},
                                           {"surrogate_seconds", io::format_double(r.surrogate_seconds)}});
  std::cout << "information gain: full " << r.full.information_gain << " (" << r.full_seconds << " s), surrogate "
            << r.surrogate.information_gain << " (" << r.surrogate_seconds << " s)\n";
}

struct DesignBackend {
  std::unique_ptr<FullDesignModel> full;
  SurrogateBundle bundle;
  std::unique_ptr<SurrogateDesignModel> surrogate;
  const DesignModel& model() const {
    if (surrogate) return *surrogate;
    return *full;
  }
};

DesignBackend backend(Context& ctx, const Problem& p) {
  DesignBackend d;
  if (ctx.config.design_model == "full") {
    d.full = std::make_unique<FullDesignModel>(p.model, p.prior, ctx.config.full_model_options());
  } else {
    d.bundle = load_surrogate(ctx, ctx.config.surrogate);
    d.surrogate = std::make_unique<SurrogateDesignModel>(*d.bundle.net, d.bundle.bases, p.prior,
                                                         initial_reduced_state(p.model, d.bundle.bases),
                                                         ctx.config.noise_std);
  }
  return d;
}

void design_cmd(Context& ctx) {
  const Problem p(ctx.config);
  const DesignBackend d = backend(ctx, p);
  const DesignSweep sweep =
      optimize_design(d.model(), SboedState::initial(d.model()), ctx.config.budget, ctx.config.design_options());
  io::CsvWriter csv(ctx.out / "design_candidates.csv", {"candidate", "ceig", "std_error", "failures", "seconds"});
  for (const auto& c : sweep.table)
    csv.row({bitstring(c.xi), io::format_double(c.ceig), io::format_double(c.std_error), std::to_string(c.failures),
             io::format_double(c.seconds)});
  std::cout << sweep.table.size() << " candidates (" << (sweep.greedy ? "greedy" : "exhaustive") << "), best "
            << bitstring(sweep.best) << "\n";
}

void run_sboed(Context& ctx) {
  const RunConfig& c = ctx.config;
  const Problem p(c);
  const DesignBackend d = backend(ctx, p);
  const SyntheticObserver obs = observer_for(ctx, p);
  const auto t0 = std::chrono::steady_clock::now();
  const AdaptiveResult res = adaptive_run(d.model(), obs, c.budget, c.design_options());
  const TimeMask uniform = uniform_design(c.num_candidates, c.budget);
  const double ig_adaptive = res.information_gain.back();
  const double ig_static = observe_design(d.model(), obs, res.static_design).information_gain;
  const double ig_uniform = observe_design(d.model(), obs, uniform).information_gain;

  write_run_log(ctx.out / "run_log.csv", res.log);
  {
    io::CsvWriter csv(ctx.out / "information_gain.csv", {"observation", "step", "information_gain"});
    for (std::size_t i = 0; i < res.observation_steps.size(); ++i)
      csv.row({std::to_string(i + 1), std::to_string(res.observation_steps[i] + 1),
               io::format_double(res.information_gain[i])});
  }
  const fs::path fields = ctx.out / "fields";
  fs::create_directories(fields);
  const DesignModel& model = d.model();
  write_field(fields / "std_prior", model.pointwise_std(model.prior_posterior()), c);
  for (std::size_t i = 0; i < res.posteriors.size(); ++i) {
    const std::string day = std::to_string(res.observation_steps[i] + 1);
    write_field(fields / ("std_after_step_" + day), model.pointwise_std(res.posteriors[i]), c);
    write_field(fields / ("map_after_step_" + day), model.parameter_field(res.posteriors[i]), c);
  }
  io::write_key_values(ctx.out / "report.kv",
                       {{"static_design", bitstring(res.static_design)},
                        {"adaptive_design", bitstring(res.adaptive_design)},
                        {"uniform_design", bitstring(uniform)},
                        {"ig_adaptive", io::format_double(ig_adaptive)},
                        {"ig_static", io::format_double(ig_static)},
                        {"ig_uniform", io::format_double(ig_uniform)},
                        {"evaluations", std::to_string(res.evaluations)},
                        {"seconds", io::format_double(seconds_since(t0))}});
  std::cout << "static " << bitstring(res.static_design) << "  adaptive " << bitstring(res.adaptive_design)
            << "  uniform " << bitstring(uniform) << "\nterminal IG: adaptive " << ig_adaptive << ", static "
            << ig_static << ", uniform " << ig_uniform << " (" << res.evaluations << " cEIG evaluations)\n";
}

void bench_cmd(Context& ctx) {
  const RunConfig& c = ctx.config;
  const Problem p(c);
  SurrogateBundle b = load_surrogate(ctx, c.surrogate);
  const auto rows =
      run_bench(p.model, p.prior, c.full_model_options(), *b.net, b.bases, c.bench_repetitions, c.truth_seed());
  write_bench_table(ctx.out / "bench.csv", rows);
  std::printf("%-18s %12s %12s %10s\n", "", "full (s)", "surrogate (s)", "speedup");
  for (const auto& r : rows)
    std::printf("%-18s %12.4g %12.4g %9.1fx\n", r.quantity.c_str(), r.full_seconds, r.surrogate_seconds,
                r.speedup());
}

int verify_cmd() { return run_checks(verify_suite(), std::cout) == 0 ? 0 : 2; }

}  // namespace

int main(int argc, char** argv) {
  retain_heap_pages();
  CLI::App app{"Sequential Bayesian optimal experimental design with a latent-attention surrogate"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string config_path, out = "out", strategy;
  unsigned threads = 0;
  std::uint64_t seed = 0;
  std::vector<std::string> overrides;
  app.add_option("--config", config_path, "key = value configuration file")->check(CLI::ExistingFile);
  app.add_option("--out", out, "output directory");
  app.add_option("--threads", threads, "worker threads (0: all cores; 1: bit-reproducible)");
  auto* seed_opt = app.add_option("--seed", seed, "master seed");
  app.add_option("--set", overrides, "override a config key (key=value)");
  app.set_version_flag("--version", kVersion);

  const std::vector<std::pair<const char*, const char*>> commands = {
      {"gen-geometry", "write tissue labels, prior fields and the initial state"},
      {"gen-data", "draw a ground truth and synthesize noisy observations"},
      {"reduce", "derivative-informed and PCA bases plus training/test sets"},
      {"train", "train the configured surrogate"},
      {"eval-surrogate", "held-out PtO and Jacobian errors of trained surrogates"},
      {"map", "full and surrogate MAP points of the observed data"},
      {"eig", "full and surrogate posterior eigenvalue spectra"},
      {"ig", "full and surrogate information gain"},
      {"design", "static optimal design (every candidate's cEIG)"},
      {"run-sboed", "adaptive sequential design against a synthetic truth"},
      {"bench", "timing of full vs surrogate inference"},
      {"verify", "oracle and property suite"}};
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    if (std::string(name) == "design" || std::string(name) == "run-sboed")
      sub->add_option("--strategy", strategy, "exhaustive or greedy");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  Context ctx;
  ctx.command = app.get_subcommands().front()->get_name();
  try {
    if (!config_path.empty()) {
      ctx.config = RunConfig::from_file(config_path);
      ctx.record_input("config", config_path);
    }
    io::KeyValues kv;
    for (const auto& o : overrides) {
      const auto eq = o.find('=');
      if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + o + "'");
      kv[o.substr(0, eq)] = o.substr(eq + 1);
    }
    ctx.config.apply(kv);
    if (*seed_opt) ctx.config.seed = seed;
    if (!strategy.empty()) ctx.config.strategy = strategy;
    ctx.config.validate();
    set_thread_count(threads);
    ctx.out = out;
    fs::create_directories(ctx.out);

    int status = 0;
    const std::string& cmd = ctx.command;
    if (cmd == "gen-geometry") gen_geometry(ctx);
    else if (cmd == "gen-data") gen_data(ctx);
    else if (cmd == "reduce") reduce(ctx);
    else if (cmd == "train") train_cmd(ctx);
    else if (cmd == "eval-surrogate") eval_surrogate(ctx);
    else if (cmd == "map") map_cmd(ctx);
    else if (cmd == "eig") eig_cmd(ctx);
    else if (cmd == "ig") ig_cmd(ctx);
    else if (cmd == "design") design_cmd(ctx);
    else if (cmd == "run-sboed") run_sboed(ctx);
    else if (cmd == "bench") bench_cmd(ctx);
    else if (cmd == "verify") status = verify_cmd();
    ctx.finish();
    return status;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
