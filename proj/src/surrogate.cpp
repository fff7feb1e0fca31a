#include "sboed/surrogate.hpp"

#include "sboed/baselines.hpp"
#include "sboed/lano.hpp"

#include <cmath>

namespace sboed {

int ParameterSet::add(std::string name, Matrix value) {
  names.push_back(std::move(name));
  values.push_back(std::move(value));
  return static_cast<int>(values.size()) - 1;
}

Index ParameterSet::scalar_count() const {
  Index n = 0;
  for (const auto& v : values) n += v.size();
  return n;
}

bool ParameterSet::all_finite() const {
  for (const auto& v : values)
    if (!v.allFinite()) return false;
  return true;
}

SurrogateBatch make_batch(const TrainingSet& set, const std::vector<std::size_t>& indices) {
  if (indices.empty()) throw UsageError("empty batch");
  const auto& s0 = set.samples.at(indices.front());
  const Index b = static_cast<Index>(indices.size());
  const Index rm = s0.beta_m.size(), rf = s0.beta_f.rows();
  const int k = static_cast<int>(s0.beta_j.size());
  SurrogateBatch out;
  out.beta_m.resize(rm, b);
  out.beta_f.assign(k + 1, Matrix(rf, b));
  out.beta_j.assign(k, Matrix(rf, b * rm));
  for (Index c = 0; c < b; ++c) {
    const auto& s = set.samples.at(indices[c]);
    out.beta_m.col(c) = s.beta_m;
    for (int t = 0; t <= k; ++t) out.beta_f[t].col(c) = s.beta_f.col(t);
    for (int t = 0; t < k; ++t) out.beta_j[t].middleCols(c * rm, rm) = s.beta_j[t];
  }
  return out;
}

Surrogate::Surrogate(int rank_m, int rank_f, int steps) : rank_m_(rank_m), rank_f_(rank_f), steps_(steps) {
  if (rank_m < 1 || rank_f < 1 || steps < 1) throw UsageError("surrogate ranks and steps must be positive");
}

ad::Var Surrogate::loss(ad::Tape& tape, const std::vector<ad::Var>& theta, const SurrogateBatch& batch,
                        const LossOptions& options) const {
  if (batch.beta_m.rows() != rank_m_ || static_cast<int>(batch.beta_j.size()) != steps_)
    throw UsageError("batch shape does not match the surrogate");
  const bool with_j = options.jacobian_weight > 0.0;
  const RolloutVars r = rollout(tape, theta, tape.constant(batch.beta_m), tape.constant(batch.beta_f[0]),
                                options.teacher_forcing ? &batch : nullptr, with_j);
  ad::Var total = sum_sq(r.f[0] - tape.constant(batch.beta_f[1]));
  for (int k = 1; k < steps_; ++k) total = total + sum_sq(r.f[k] - tape.constant(batch.beta_f[k + 1]));
  if (with_j)
    for (int k = 0; k < steps_; ++k)
      total = total + options.jacobian_weight * sum_sq(r.dj[k] - tape.constant(batch.beta_j[k]));
  return (1.0 / static_cast<double>(batch.size())) * total;
}

Prediction Surrogate::predict(const Vector& beta_m, const Vector& beta_f0, bool jacobians) const {
  if (beta_m.size() != rank_m_ || beta_f0.size() != rank_f_) throw UsageError("surrogate input size mismatch");
  ad::Tape tape;
  std::vector<ad::Var> theta;
  theta.reserve(params_.values.size());
  for (const auto& v : params_.values) theta.push_back(tape.constant(v));
  const RolloutVars r = rollout(tape, theta, tape.constant(beta_m), tape.constant(beta_f0), nullptr, jacobians);
  Prediction p;
  p.f.resize(rank_f_, steps_);
  p.j.resize(rank_f_, steps_);
  for (int k = 0; k < steps_; ++k) {
    p.f.col(k) = r.f[k].value().col(0);
    p.j.col(k) = r.j[k].value().col(0);
    if (jacobians) {
      p.jac_f.push_back(r.df[k].value());
      p.jac_j.push_back(r.dj[k].value());
    }
  }
  return p;
}

void check_finite(ad::Var v, const std::string& layer, int step) {
  if (!v.value().allFinite())
    throw NumericalError("non-finite activation in layer '" + layer + "' at step " + std::to_string(step));
}

namespace {

int int_key(const io::KeyValues& kv, const std::string& key, int fallback) {
  auto it = kv.find(key);
  return it == kv.end() ? fallback : std::stoi(it->second);
}

}  // namespace

std::unique_ptr<Surrogate> make_surrogate(const io::KeyValues& hyper) {
  auto it = hyper.find("kind");
  if (it == hyper.end()) throw UsageError("surrogate hyper-parameters lack 'kind'");
  const auto seed = [&] {
    auto s = hyper.find("init_seed");
    return s == hyper.end() ? std::uint64_t{1} : std::stoull(s->second);
  }();
  if (it->second == "lano") {
    LanoConfig c;
    c.rank_m = int_key(hyper, "rank_m", c.rank_m);
    c.rank_f = int_key(hyper, "rank_f", c.rank_f);
    c.steps = int_key(hyper, "steps", c.steps);
    c.hidden = int_key(hyper, "hidden", c.hidden);
    c.attention = int_key(hyper, "attention", c.attention);
    if (auto e = hyper.find("layer_norm_eps"); e != hyper.end()) c.layer_norm_eps = std::stod(e->second);
    c.init_seed = seed;
    return std::make_unique<Lano>(c);
  }
  ResNetConfig c;
  c.rank_m = int_key(hyper, "rank_m", c.rank_m);
  c.rank_f = int_key(hyper, "rank_f", c.rank_f);
  c.steps = int_key(hyper, "steps", c.steps);
  c.width = int_key(hyper, "width", c.width);
  c.blocks = int_key(hyper, "blocks", c.blocks);
  c.init_seed = seed;
  if (it->second == "neural-ode") return std::make_unique<NeuralOde>(c);
  if (it->second == "per-step") return std::make_unique<PerStepNet>(c);
  throw UsageError("unknown surrogate kind '" + it->second + "'");
}

void save_checkpoint(const std::filesystem::path& dir, const Surrogate& model, const std::vector<double>& loss_history,
                     const io::KeyValues& extra) {
  std::filesystem::create_directories(dir);
  io::KeyValues kv = model.hyper();
  for (const auto& [k, v] : extra) kv[k] = v;
  const auto& p = model.parameters();
  for (std::size_t i = 0; i < p.values.size(); ++i) {
    const auto file = dir / (p.names[i] + ".sbf1");
    io::write_sbf1(file, io::from_matrix(p.values[i]));
    kv["param." + p.names[i]] = io::file_hash(file);
  }
  kv["epochs"] = std::to_string(loss_history.size());
  io::write_key_values(dir / "checkpoint.manifest", kv);
  io::CsvWriter csv(dir / "loss_history.csv", {"epoch", "loss"});
  for (std::size_t e = 0; e < loss_history.size(); ++e)
    csv.row({std::to_string(e + 1), io::format_double(loss_history[e])});
}

std::unique_ptr<Surrogate> load_checkpoint(const std::filesystem::path& dir) {
  const auto kv = io::read_key_values(dir / "checkpoint.manifest");
  auto model = make_surrogate(kv);
  auto& p = model->parameters();
  for (std::size_t i = 0; i < p.values.size(); ++i) {
    Matrix v = io::to_matrix(io::read_sbf1(dir / (p.names[i] + ".sbf1")));
    if (v.rows() != p.values[i].rows() || v.cols() != p.values[i].cols())
      throw UsageError("checkpoint tensor '" + p.names[i] + "' has the wrong shape");
    p.values[i] = std::move(v);
  }
  return model;
}

}  // namespace sboed
