#include "sboed/lano.hpp"

#include <cmath>
#include <limits>

namespace sboed {

using ad::Var;

namespace {

Matrix init_weight(Index rows, Index cols, NormalSampler& rng, double gain = 1.0) {
  return (gain / std::sqrt(static_cast<double>(cols))) * rng.matrix(rows, cols);
}

Var ones_minus_square(ad::Tape& t, Var a) {
  return t.constant(Matrix::Ones(a.rows(), a.cols())) - hadamard(a, a);
}

}  // namespace

Lano::Lano(const LanoConfig& c) : Surrogate(c.rank_m, c.rank_f, c.steps), config_(c) {
  if (c.hidden < 1 || c.attention < 1) throw UsageError("LANO widths must be positive");
  NormalSampler rng(c.init_seed);
  const int h = c.hidden, a = c.attention, rm = c.rank_m, rf = c.rank_f;
  auto& p = params_;
  wp_ = p.add("W_p", init_weight(h, rm, rng));
  bp_ = p.add("b_p", Matrix::Zero(h, 1));
  for (int k = 0; k < c.steps; ++k) {
    const auto s = std::to_string(k);
    ws_.push_back(p.add("W_s_" + s, init_weight(h, rf, rng)));
    bs_.push_back(p.add("b_s_" + s, Matrix::Zero(h, 1)));
    wz_.push_back(p.add("W_z_" + s, init_weight(h, 2 * h, rng)));
    bz_.push_back(p.add("b_z_" + s, Matrix::Zero(h, 1)));
  }
  wq_ = p.add("W_Q", init_weight(h, a, rng));
  wk_ = p.add("W_K", init_weight(h, a, rng));
  wv_ = p.add("W_V", init_weight(h, a, rng));
  pos_ = p.add("P", 0.1 * rng.matrix(h, c.steps));
  w1_ = p.add("W_1", init_weight(a, h, rng));
  b1_ = p.add("b_1", Matrix::Zero(h, 1));
  w2_ = p.add("W_2", init_weight(h, h, rng));
  b2_ = p.add("b_2", Matrix::Zero(h, 1));
  ln_gain_ = p.add("ln_gain", Matrix::Ones(h, 1));
  ln_bias_ = p.add("ln_bias", Matrix::Zero(h, 1));
  // small read-out weights: the heads start near the identity step
  for (int k = 0; k < c.steps; ++k) {
    const auto s = std::to_string(k);
    f1w_.push_back(p.add("W_1F_" + s, init_weight(rf, h, rng)));
    f1b_.push_back(p.add("b_1F_" + s, Matrix::Zero(rf, 1)));
    f2w_.push_back(p.add("W_2F_" + s, init_weight(rf, rf, rng, 0.1)));
    f2b_.push_back(p.add("b_2F_" + s, Matrix::Zero(rf, 1)));
    j1w_.push_back(p.add("W_1J_" + s, init_weight(rf, h, rng)));
    j1b_.push_back(p.add("b_1J_" + s, Matrix::Zero(rf, 1)));
    j2w_.push_back(p.add("W_2J_" + s, init_weight(rf, rf, rng, 0.1)));
    j2b_.push_back(p.add("b_2J_" + s, Matrix::Zero(rf, 1)));
  }
}

io::KeyValues Lano::hyper() const {
  return {{"kind", kind()},
          {"rank_m", std::to_string(config_.rank_m)},
          {"rank_f", std::to_string(config_.rank_f)},
          {"steps", std::to_string(config_.steps)},
          {"hidden", std::to_string(config_.hidden)},
          {"attention", std::to_string(config_.attention)},
          {"layer_norm_eps", io::format_double(config_.layer_norm_eps)},
          {"init_seed", std::to_string(config_.init_seed)}};
}

std::vector<int> Lano::head_parameters(int k) const {
  return {f1w_.at(k), f1b_.at(k), f2w_.at(k), f2b_.at(k), j1w_.at(k), j1b_.at(k), j2w_.at(k), j2b_.at(k)};
}

RolloutVars Lano::rollout(ad::Tape& t, const std::vector<Var>& th, Var beta_m, Var beta_f0,
                          const SurrogateBatch* teacher, bool tangents) const {
  const Index b = beta_m.cols(), r = rank_m_, h = config_.hidden;
  const Index tb = b * r;  // tangent columns
  const double score_scale = 1.0 / std::sqrt(static_cast<double>(config_.attention));
  const double inv_h = 1.0 / static_cast<double>(h);
  auto rep = [r](Var v) { return repeat_cols(v, r); };

  const Var p = add_col(matmul(th[wp_], beta_m), th[bp_]);
  check_finite(p, "parameter encoder", 0);
  Var dp{}, zero_t{};
  if (tangents) {
    dp = tile_cols(th[wp_], b);
    zero_t = t.zeros(h, tb);
  }
  const Var eps = t.constant(Matrix::Constant(1, b, config_.layer_norm_eps));

  Var x = beta_f0, bj = beta_f0;
  Var dx{}, dbj{};  // empty: identically zero
  std::vector<Var> keys, values, dkeys, dvalues;
  RolloutVars out;

  for (int k = 0; k < steps_; ++k) {
    if (teacher && k > 0) {
      x = t.constant(teacher->beta_f[k]);
      dx = Var{};
    }
    // latent encoding
    const Var s = add_col(matmul(th[ws_[k]], x), th[bs_[k]]);
    const Var u = add_col(matmul(th[wz_[k]], vstack(s, p)), th[bz_[k]]);
    const Var act = tanh(u);
    const Var z = add_col(act, column(th[pos_], k));
    check_finite(z, "latent encoder", k);
    const Var q = matmul_tn(th[wq_], z);
    keys.push_back(matmul_tn(th[wk_], z));
    values.push_back(matmul_tn(th[wv_], z));

    Var dz{}, dq{};
    if (tangents) {
      const Var ds = dx.tape ? matmul(th[ws_[k]], dx) : zero_t;
      dz = hadamard(rep(ones_minus_square(t, act)), matmul(th[wz_[k]], vstack(ds, dp)));
      dq = matmul_tn(th[wq_], dz);
      dkeys.push_back(matmul_tn(th[wk_], dz));
      dvalues.push_back(matmul_tn(th[wv_], dz));
    }

    // causal attention: row k sees columns 0..k
    std::vector<Var> scores;
    Matrix shift = Matrix::Constant(1, b, -std::numeric_limits<double>::infinity());
    for (int j = 0; j <= k; ++j) {
      scores.push_back(score_scale * col_sum(hadamard(q, keys[j])));
      shift = shift.cwiseMax(scores.back().value());
    }
    const Var neg_shift = t.constant(-shift);
    std::vector<Var> weights;
    Var total{};
    for (int j = 0; j <= k; ++j) {
      weights.push_back(exp(add_row(scores[j], neg_shift)));
      total = total.tape ? total + weights.back() : weights.back();
    }
    const Var inv_total = recip(total);
    std::vector<Var> alpha;
    Var att{};
    for (int j = 0; j <= k; ++j) {
      alpha.push_back(hadamard(weights[j], inv_total));
      const Var term = mul_row(values[j], alpha[j]);
      att = att.tape ? att + term : term;
    }
    check_finite(att, "attention", k);

    Var datt{};
    if (tangents) {
      std::vector<Var> dscores;
      Var mean{};
      for (int j = 0; j <= k; ++j) {
        dscores.push_back(score_scale *
                          col_sum(hadamard(dq, rep(keys[j])) + hadamard(rep(q), dkeys[j])));
        const Var w = hadamard(rep(alpha[j]), dscores[j]);
        mean = mean.tape ? mean + w : w;
      }
      for (int j = 0; j <= k; ++j) {
        const Var ra = rep(alpha[j]);
        const Var dalpha = hadamard(ra, dscores[j] - mean);
        const Var term = mul_row(dvalues[j], ra) + mul_row(rep(values[j]), dalpha);
        datt = datt.tape ? datt + term : term;
      }
    }

    // feed-forward and layer normalization
    const Var pre = add_col(matmul_tn(th[w1_], att), th[b1_]);
    const Var g = add_col(matmul_tn(th[w2_], elu(pre)), th[b2_]);
    const Var centered = add_row(g, -inv_h * col_sum(g));
    const Var inv_std = rsqrt(inv_h * col_sum(hadamard(centered, centered)) + eps);
    const Var f = add_col(mul_col(mul_row(centered, inv_std), th[ln_gain_]), th[ln_bias_]);
    check_finite(f, "feed-forward", k);

    Var df{};
    if (tangents) {
      const Var dg = matmul_tn(th[w2_], hadamard(rep(elu_prime(pre)), matmul_tn(th[w1_], datt)));
      const Var dc = add_row(dg, -inv_h * col_sum(dg));
      const Var rc = rep(centered), ri = rep(inv_std);
      const Var dvar = (2.0 * inv_h) * col_sum(hadamard(rc, dc));
      const Var dinv = hadamard(-0.5 * hadamard(ri, hadamard(ri, ri)), dvar);
      df = mul_col(mul_row(dc, ri) + mul_row(rc, dinv), th[ln_gain_]);
    }

    // dual residual heads
    const Var af = add_col(matmul(th[f1w_[k]], f), th[f1b_[k]]);
    const Var aj = add_col(matmul(th[j1w_[k]], f), th[j1b_[k]]);
    const Var x_next = x + add_col(matmul(th[f2w_[k]], elu(af)), th[f2b_[k]]);
    const Var bj_next = bj + add_col(matmul(th[j2w_[k]], elu(aj)), th[j2b_[k]]);
    check_finite(x_next, "F head", k);
    check_finite(bj_next, "J head", k);
    out.f.push_back(x_next);
    out.j.push_back(bj_next);

    if (tangents) {
      const Var step_f = matmul(th[f2w_[k]], hadamard(rep(elu_prime(af)), matmul(th[f1w_[k]], df)));
      const Var step_j = matmul(th[j2w_[k]], hadamard(rep(elu_prime(aj)), matmul(th[j1w_[k]], df)));
      dx = dx.tape ? dx + step_f : step_f;
      dbj = dbj.tape ? dbj + step_j : step_j;
      out.df.push_back(dx);
      out.dj.push_back(dbj);
    }
    x = x_next;
    bj = bj_next;
  }
  return out;
}

Vector full_jacobian_action(const ReducedBases& bases, const GaussianPrior& prior, const Matrix& reduced_jacobian,
                            const Vector& m_hat) {
  return bases.psi_f * (reduced_jacobian * (bases.psi_m.transpose() * prior.precision_action(m_hat)));
}

}  // namespace sboed
