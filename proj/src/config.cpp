#include "sboed/config.hpp"

#include <functional>
#include <sstream>

namespace sboed {

namespace {

struct Field {
  const char* key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t") - b + 1);
}

template <class T>
T parse(const std::string& key, const std::string& value) {
  std::istringstream in(trim(value));
  T v{};
  in >> v;
  if (in.fail() || !in.eof()) throw UsageError("config key '" + key + "': invalid value '" + value + "'");
  return v;
}

bool parse_bool(const std::string& key, const std::string& value) {
  const std::string v = trim(value);
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw UsageError("config key '" + key + "': expected true or false, got '" + value + "'");
}

template <class T>
Field number(const char* key, T RunConfig::*member) {
  return {key, [key, member](RunConfig& c, const std::string& v) { c.*member = parse<T>(key, v); },
          [member](const RunConfig& c) {
            if constexpr (std::is_floating_point_v<T>) return io::format_double(c.*member);
            else return std::to_string(c.*member);
          }};
}

Field tissue(const char* key, double TissueParameters::*member) {
  return {key, [key, member](RunConfig& c, const std::string& v) { c.tissue.*member = parse<double>(key, v); },
          [member](const RunConfig& c) { return io::format_double(c.tissue.*member); }};
}

Field text(const char* key, std::string RunConfig::*member) {
  return {key, [member](RunConfig& c, const std::string& v) { c.*member = trim(v); },
          [member](const RunConfig& c) { return c.*member; }};
}

Field path(const char* key, std::filesystem::path RunConfig::*member) {
  return {key, [member](RunConfig& c, const std::string& v) { c.*member = trim(v); },
          [member](const RunConfig& c) { return (c.*member).string(); }};
}

constexpr std::uint64_t kStreamReduction = 1, kStreamTest = 2, kStreamInit = 3, kStreamTrain = 4, kStreamTruth = 5,
                        kStreamNoise = 6, kStreamDesign = 7, kStreamEigen = 8;

Field seed_field(const char* key, std::optional<std::uint64_t> RunConfig::*member,
                 std::uint64_t (RunConfig::*resolved)() const) {
  return {key, [key, member](RunConfig& c, const std::string& v) { c.*member = parse<std::uint64_t>(key, v); },
          [resolved](const RunConfig& c) { return std::to_string((c.*resolved)()); }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> f = {
      number("nx", &RunConfig::nx),
      number("ny", &RunConfig::ny),
      number("lx", &RunConfig::lx),
      number("ly", &RunConfig::ly),
      text("region", &RunConfig::region),
      tissue("log_diffusion_gray", &TissueParameters::log_diffusion_gray),
      tissue("log_diffusion_white", &TissueParameters::log_diffusion_white),
      tissue("mean_gray", &TissueParameters::mean_gray),
      tissue("mean_white", &TissueParameters::mean_white),
      tissue("variance_gray", &TissueParameters::variance_gray),
      tissue("variance_white", &TissueParameters::variance_white),
      tissue("correlation_gray", &TissueParameters::correlation_gray),
      tissue("correlation_white", &TissueParameters::correlation_white),
      {"prior_mass",
       [](RunConfig& c, const std::string& v) {
         const std::string t = trim(v);
         if (t == "lumped") c.prior_mass = MassMode::lumped;
         else if (t == "consistent") c.prior_mass = MassMode::consistent;
         else throw UsageError("config key 'prior_mass': expected lumped or consistent, got '" + v + "'");
       },
       [](const RunConfig& c) { return std::string(c.prior_mass == MassMode::lumped ? "lumped" : "consistent"); }},
      number("final_time", &RunConfig::final_time),
      number("dt", &RunConfig::dt),
      number("num_candidates", &RunConfig::num_candidates),
      number("noise_std", &RunConfig::noise_std),
      {"reaction",
       [](RunConfig& c, const std::string& v) {
         const std::string t = trim(v);
         if (t == "logistic") c.reaction = ReactionMode::logistic;
         else if (t == "frozen_linear") c.reaction = ReactionMode::frozen_linear;
         else throw UsageError("config key 'reaction': expected logistic or frozen_linear, got '" + v + "'");
       },
       [](const RunConfig& c) {
         return std::string(c.reaction == ReactionMode::logistic ? "logistic" : "frozen_linear");
       }},
      number("rank_m", &RunConfig::rank_m),
      number("rank_f", &RunConfig::rank_f),
      number("dis_samples", &RunConfig::dis_samples),
      number("training_samples", &RunConfig::training_samples),
      number("test_samples", &RunConfig::test_samples),
      number("oversampling", &RunConfig::oversampling),
      text("surrogate", &RunConfig::surrogate),
      number("hidden", &RunConfig::hidden),
      number("attention", &RunConfig::attention),
      number("width", &RunConfig::width),
      number("blocks", &RunConfig::blocks),
      number("epochs", &RunConfig::epochs),
      number("batch_size", &RunConfig::batch_size),
      number("learning_rate", &RunConfig::learning_rate),
      number("weight_decay", &RunConfig::weight_decay),
      {"jacobian_weight",
       [](RunConfig& c, const std::string& v) { c.jacobian_weight = parse<double>("jacobian_weight", v); },
       [](const RunConfig& c) { return io::format_double(c.train_options().loss.jacobian_weight); }},
      {"teacher_forcing",
       [](RunConfig& c, const std::string& v) { c.teacher_forcing = parse_bool("teacher_forcing", v); },
       [](const RunConfig& c) { return std::string(c.train_options().loss.teacher_forcing ? "true" : "false"); }},
      number("laplace_rank", &RunConfig::laplace_rank),
      number("data_realizations", &RunConfig::data_realizations),
      number("bench_repetitions", &RunConfig::bench_repetitions),
      number("map_rel_tol", &RunConfig::map_rel_tol),
      number("budget", &RunConfig::budget),
      number("design_samples", &RunConfig::design_samples),
      text("strategy", &RunConfig::strategy),
      number("budget_cap", &RunConfig::budget_cap),
      text("design_model", &RunConfig::design_model),
      number("seed", &RunConfig::seed),
      seed_field("seed_reduction", &RunConfig::seed_reduction, &RunConfig::reduction_seed),
      seed_field("seed_test", &RunConfig::seed_test, &RunConfig::test_seed),
      seed_field("seed_init", &RunConfig::seed_init, &RunConfig::init_seed),
      seed_field("seed_train", &RunConfig::seed_train, &RunConfig::train_seed),
      seed_field("seed_truth", &RunConfig::seed_truth, &RunConfig::truth_seed),
      seed_field("seed_noise", &RunConfig::seed_noise, &RunConfig::noise_seed),
      seed_field("seed_design", &RunConfig::seed_design, &RunConfig::design_seed),
      seed_field("seed_eigen", &RunConfig::seed_eigen, &RunConfig::eigen_seed),
      path("reduction_dir", &RunConfig::reduction_dir),
      path("checkpoint_dir", &RunConfig::checkpoint_dir),
  };
  return f;
}

std::uint64_t pick(const std::optional<std::uint64_t>& explicit_seed, std::uint64_t master, std::uint64_t stream) {
  return explicit_seed ? *explicit_seed : mix_seed(master, stream);
}

}  // namespace

RunConfig RunConfig::from_file(const std::filesystem::path& file) {
  RunConfig c;
  c.apply(io::read_key_values(file));
  return c;
}

void RunConfig::apply(const io::KeyValues& kv) {
  for (const auto& [key, value] : kv) {
    bool found = false;
    for (const auto& f : fields()) {
      if (key != f.key) continue;
      f.set(*this, value);
      found = true;
      break;
    }
    if (!found) throw UsageError("unknown config key '" + key + "'");
  }
}

io::KeyValues RunConfig::resolved() const {
  io::KeyValues kv;
  for (const auto& f : fields()) kv[f.key] = f.get(*this);
  return kv;
}

void RunConfig::validate() const {
  auto positive = [](const char* key, double v) {
    if (!(v > 0)) throw UsageError("config key '" + std::string(key) + "' must be positive");
  };
  positive("nx", nx);
  positive("ny", ny);
  positive("lx", lx);
  positive("ly", ly);
  positive("final_time", final_time);
  positive("dt", dt);
  positive("num_candidates", num_candidates);
  positive("noise_std", noise_std);
  positive("rank_m", rank_m);
  positive("rank_f", rank_f);
  positive("dis_samples", dis_samples);
  positive("training_samples", training_samples);
  positive("test_samples", test_samples);
  positive("epochs", epochs);
  positive("batch_size", batch_size);
  positive("learning_rate", learning_rate);
  positive("laplace_rank", laplace_rank);
  positive("data_realizations", data_realizations);
  positive("bench_repetitions", bench_repetitions);
  positive("design_samples", design_samples);
  positive("budget_cap", static_cast<double>(budget_cap));
  if (budget < 1 || budget > num_candidates)
    throw UsageError("config key 'budget' must be in [1, num_candidates]");
  if (surrogate != "lano" && surrogate != "neural-ode" && surrogate != "per-step")
    throw UsageError("config key 'surrogate': unknown kind '" + surrogate + "'");
  if (strategy != "exhaustive" && strategy != "greedy")
    throw UsageError("config key 'strategy': expected exhaustive or greedy");
  if (design_model != "surrogate" && design_model != "full")
    throw UsageError("config key 'design_model': expected surrogate or full");
  simulation().validate();
}

std::uint64_t RunConfig::reduction_seed() const { return pick(seed_reduction, seed, kStreamReduction); }
std::uint64_t RunConfig::test_seed() const { return pick(seed_test, seed, kStreamTest); }
std::uint64_t RunConfig::init_seed() const { return pick(seed_init, seed, kStreamInit); }
std::uint64_t RunConfig::train_seed() const { return pick(seed_train, seed, kStreamTrain); }
std::uint64_t RunConfig::truth_seed() const { return pick(seed_truth, seed, kStreamTruth); }
std::uint64_t RunConfig::noise_seed() const { return pick(seed_noise, seed, kStreamNoise); }
std::uint64_t RunConfig::design_seed() const { return pick(seed_design, seed, kStreamDesign); }
std::uint64_t RunConfig::eigen_seed() const { return pick(seed_eigen, seed, kStreamEigen); }

Geometry RunConfig::geometry() const {
  RegionSpec spec;
  if (region == "disk") spec = default_region(lx, ly);
  else if (region == "half") spec = HalfSplitRegion{};
  else if (region.rfind("mask:", 0) == 0) spec = MaskFileRegion{region.substr(5)};
  else throw UsageError("config key 'region': expected disk, half or mask:<path>, got '" + region + "'");
  return build_geometry(nx, ny, lx, ly, spec, tissue);
}

SimulationConfig RunConfig::simulation() const {
  SimulationConfig s;
  s.final_time = final_time;
  s.dt = dt;
  s.num_candidates = num_candidates;
  s.noise_std = noise_std;
  s.reaction = reaction;
  return s;
}

io::KeyValues RunConfig::surrogate_hyper() const {
  io::KeyValues h{{"kind", surrogate},
                  {"rank_m", std::to_string(rank_m)},
                  {"rank_f", std::to_string(rank_f)},
                  {"steps", std::to_string(num_candidates)},
                  {"init_seed", std::to_string(init_seed())}};
  if (surrogate == "lano") {
    h["hidden"] = std::to_string(hidden);
    h["attention"] = std::to_string(attention);
  } else {
    h["width"] = std::to_string(width);
    h["blocks"] = std::to_string(blocks);
  }
  return h;
}

TrainOptions RunConfig::train_options() const {
  TrainOptions o;
  o.epochs = epochs;
  o.batch_size = batch_size;
  o.learning_rate = learning_rate;
  o.weight_decay = weight_decay;
  o.loss = default_loss_options(surrogate);
  if (jacobian_weight) o.loss.jacobian_weight = *jacobian_weight;
  if (teacher_forcing) o.loss.teacher_forcing = *teacher_forcing;
  o.seed = train_seed();
  return o;
}

DesignOptions RunConfig::design_options() const {
  DesignOptions o;
  o.num_samples = design_samples;
  o.seed = design_seed();
  o.strategy = strategy;
  o.budget_cap = budget_cap;
  return o;
}

FullModelOptions RunConfig::full_model_options() const {
  FullModelOptions o;
  o.rank = laplace_rank;
  o.oversampling = oversampling;
  o.map.rel_tol = map_rel_tol;
  o.seed = eigen_seed();
  return o;
}

Problem::Problem(const RunConfig& config)
    : geometry(config.geometry()), prior(geometry, config.prior_mass), model(geometry, config.simulation()) {}

void write_resolved_config(const std::filesystem::path& dir, const RunConfig& config) {
  std::filesystem::create_directories(dir);
  io::write_key_values(dir / "config.resolved", config.resolved());
}

}  // namespace sboed
