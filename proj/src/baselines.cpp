#include "sboed/baselines.hpp"

#include <cmath>

namespace sboed {

using ad::Var;

namespace {

Matrix init_weight(Index rows, Index cols, NormalSampler& rng, double gain = 1.0) {
  return (gain / std::sqrt(static_cast<double>(cols))) * rng.matrix(rows, cols);
}

/// Parameter indices of one residual network.
struct ResNetIds {
  int w_in, b_in;
  std::vector<int> w, b;
  int w_out, b_out;
};

ResNetIds add_resnet(ParameterSet& p, const std::string& prefix, int in, int out, const ResNetConfig& c,
                     NormalSampler& rng) {
  ResNetIds ids;
  ids.w_in = p.add(prefix + "W_in", init_weight(c.width, in, rng));
  ids.b_in = p.add(prefix + "b_in", Matrix::Zero(c.width, 1));
  for (int l = 0; l < c.blocks; ++l) {
    ids.w.push_back(p.add(prefix + "W_" + std::to_string(l), init_weight(c.width, c.width, rng, 0.5)));
    ids.b.push_back(p.add(prefix + "b_" + std::to_string(l), Matrix::Zero(c.width, 1)));
  }
  ids.w_out = p.add(prefix + "W_out", init_weight(out, c.width, rng, 0.1));
  ids.b_out = p.add(prefix + "b_out", Matrix::Zero(out, 1));
  return ids;
}

/// Network value and, when `din` is set, its tangent for tangent input din.
std::pair<Var, Var> apply_resnet(const ResNetIds& ids, const std::vector<Var>& th, Var in, Var din, Index r) {
  Var h = add_col(matmul(th[ids.w_in], in), th[ids.b_in]);
  Var dh = din.tape ? matmul(th[ids.w_in], din) : Var{};
  for (std::size_t l = 0; l < ids.w.size(); ++l) {
    const Var pre = add_col(matmul(th[ids.w[l]], h), th[ids.b[l]]);
    if (dh.tape) dh = dh + hadamard(repeat_cols(elu_prime(pre), r), matmul(th[ids.w[l]], dh));
    h = h + elu(pre);
  }
  const Var out = add_col(matmul(th[ids.w_out], h), th[ids.b_out]);
  return {out, dh.tape ? matmul(th[ids.w_out], dh) : Var{}};
}

io::KeyValues resnet_hyper(const std::string& kind, const ResNetConfig& c) {
  return {{"kind", kind},
          {"rank_m", std::to_string(c.rank_m)},
          {"rank_f", std::to_string(c.rank_f)},
          {"steps", std::to_string(c.steps)},
          {"width", std::to_string(c.width)},
          {"blocks", std::to_string(c.blocks)},
          {"init_seed", std::to_string(c.init_seed)}};
}

}  // namespace

NeuralOde::NeuralOde(const ResNetConfig& c) : Surrogate(c.rank_m, c.rank_f, c.steps), config_(c) {
  if (c.width < 1 || c.blocks < 0) throw UsageError("invalid residual network shape");
  NormalSampler rng(c.init_seed);
  add_resnet(params_, "", c.rank_f + c.rank_m, c.rank_f, c, rng);
}

io::KeyValues NeuralOde::hyper() const { return resnet_hyper(kind(), config_); }

RolloutVars NeuralOde::rollout(ad::Tape& t, const std::vector<Var>& th, Var beta_m, Var beta_f0,
                               const SurrogateBatch* teacher, bool tangents) const {
  // parameter order matches add_resnet
  ResNetIds ids{0, 1, {}, {}, 0, 0};
  for (int l = 0; l < config_.blocks; ++l) {
    ids.w.push_back(2 + 2 * l);
    ids.b.push_back(3 + 2 * l);
  }
  ids.w_out = 2 + 2 * config_.blocks;
  ids.b_out = ids.w_out + 1;

  const Index b = beta_m.cols(), r = rank_m_;
  Var dm{}, zero{};
  if (tangents) {
    dm = t.constant(Matrix::Identity(r, r).replicate(1, b));
    zero = t.zeros(rank_f_, b * r);
  }
  RolloutVars out;
  Var x = beta_f0, dx{};
  for (int k = 0; k < steps_; ++k) {
    if (teacher && k > 0) {
      x = t.constant(teacher->beta_f[k]);
      dx = Var{};
    }
    const auto [step, dstep] =
        apply_resnet(ids, th, vstack(x, beta_m), tangents ? vstack(dx.tape ? dx : zero, dm) : Var{}, r);
    x = x + step;
    check_finite(x, "neural-ODE step", k);
    out.f.push_back(x);
    out.j.push_back(x);
    if (tangents) {
      dx = dx.tape ? dx + dstep : dstep;
      out.df.push_back(dx);
      out.dj.push_back(dx);
    }
  }
  return out;
}

PerStepNet::PerStepNet(const ResNetConfig& c) : Surrogate(c.rank_m, c.rank_f, c.steps), config_(c) {
  if (c.width < 1 || c.blocks < 0) throw UsageError("invalid residual network shape");
  NormalSampler rng(c.init_seed);
  for (int k = 0; k < c.steps; ++k) add_resnet(params_, "step" + std::to_string(k + 1) + "_", c.rank_m, c.rank_f, c, rng);
}

io::KeyValues PerStepNet::hyper() const { return resnet_hyper(kind(), config_); }

RolloutVars PerStepNet::rollout(ad::Tape& t, const std::vector<Var>& th, Var beta_m, Var,
                                const SurrogateBatch*, bool tangents) const {
  const int per = 4 + 2 * config_.blocks;
  const Index b = beta_m.cols(), r = rank_m_;
  RolloutVars out;
  for (int k = 0; k < steps_; ++k) {
    const int base = k * per;
    ResNetIds ids{base, base + 1, {}, {}, base + 2 + 2 * config_.blocks, base + 3 + 2 * config_.blocks};
    for (int l = 0; l < config_.blocks; ++l) {
      ids.w.push_back(base + 2 + 2 * l);
      ids.b.push_back(base + 3 + 2 * l);
    }
    const Var din = tangents ? t.constant(Matrix::Identity(r, r).replicate(1, b)) : Var{};
    const auto [f, df] = apply_resnet(ids, th, beta_m, din, r);
    check_finite(f, "per-step network", k);
    out.f.push_back(f);
    out.j.push_back(f);
    if (tangents) {
      out.df.push_back(df);
      out.dj.push_back(df);
    }
  }
  return out;
}

}  // namespace sboed
