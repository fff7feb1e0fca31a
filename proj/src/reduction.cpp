#include "sboed/reduction.hpp"

#include <Eigen/SVD>

#include <string>

namespace sboed {

Vector ReducedBases::encode_m(const GaussianPrior& prior, const Vector& m) const {
  if (m.size() != psi_m.rows()) throw UsageError("parameter size does not match the input basis");
  return psi_m.transpose() * prior.precision_action(m - prior.mean());
}

Vector ReducedBases::decode_m(const GaussianPrior& prior, const Vector& beta) const {
  if (beta.size() != psi_m.cols()) throw UsageError("coefficient size does not match the input basis");
  return prior.mean() + psi_m * beta;
}

Vector ReducedBases::encode_f(const Vector& f) const {
  if (f.size() != psi_f.rows()) throw UsageError("observable size does not match the output basis");
  return psi_f.transpose() * (f - f_mean);
}

Vector ReducedBases::decode_f(const Vector& beta) const {
  if (beta.size() != psi_f.cols()) throw UsageError("coefficient size does not match the output basis");
  return f_mean + psi_f * beta;
}

Eigenpairs compute_dis(const TumorModel& model, const GaussianPrior& prior, int num_samples, int rank,
                       int oversampling, std::uint64_t seed) {
  if (num_samples < 1) throw UsageError("DIS needs at least one sample");
  std::vector<Vector> params(num_samples);
  std::vector<StateTrajectory> trajs(num_samples);
  parallel_for(num_samples, [&](Index i) {
    params[i] = prior.sample(mix_seed(seed, i));
    trajs[i] = model.solve(params[i]);
  });
  const TimeMask all = all_times(model.num_candidates());
  const BlockOperator op = [&](const Matrix& x) {
    std::vector<Matrix> parts(num_samples);
    parallel_for(num_samples, [&](Index i) {
      const LinearizationPoint lp(model, params[i], trajs[i]);
      parts[i] = lp.gn_hessian(all, 1.0, x);
    });
    Matrix sum = Matrix::Zero(x.rows(), x.cols());
    for (const auto& p : parts) sum += p;
    return Matrix(sum / num_samples);
  };
  return randomized_gevp(op, prior, rank, oversampling, mix_seed(seed, 0xd15));
}

PcaResult compute_pca(const Matrix& snapshots, int rank) {
  if (rank < 1 || snapshots.cols() < rank) throw UsageError("PCA needs at least r_F snapshots");
  if (rank > snapshots.rows()) throw UsageError("PCA rank exceeds the observable dimension");
  PcaResult out;
  out.mean = snapshots.rowwise().mean();
  const Matrix centered = snapshots.colwise() - out.mean;
  Eigen::BDCSVD<Matrix> svd(centered, Eigen::ComputeThinU);
  out.singular_values = svd.singularValues();
  if (out.singular_values.size() > 0 && out.singular_values[0] == 0.0)
    warn("PCA snapshots are all identical; output basis is arbitrary");
  else if (out.singular_values.size() >= rank && out.singular_values[rank - 1] <= 1e-14 * out.singular_values[0])
    warn("PCA snapshot rank is below r_F");
  out.basis = svd.matrixU().leftCols(rank);
  return out;
}

TrainingSample encode_sample(const TumorModel& model, const GaussianPrior& prior, const ReducedBases& bases,
                             const Vector& m) {
  const LinearizationPoint lp(model, m);
  const ObservableSeries f = lp.observables();
  const int k_count = model.num_candidates();
  TrainingSample s;
  s.m = m;
  s.beta_m = bases.encode_m(prior, m);
  s.beta_f.resize(bases.rank_f(), k_count + 1);
  s.beta_f.col(0) = bases.encode_f(model.observe_state(model.initial_state()));
  s.outputs.resize(model.obs_dim(), k_count);
  for (int k = 0; k < k_count; ++k) {
    s.outputs.col(k) = f[k];
    s.beta_f.col(k + 1) = bases.encode_f(f[k]);
  }
  s.beta_j.resize(k_count);
  if (bases.rank_m() <= bases.rank_f()) {
    const auto jpsi = lp.tangent(bases.psi_m, -1);
    for (int k = 0; k < k_count; ++k) s.beta_j[k] = bases.psi_f.transpose() * jpsi[k];
  } else {
    for (int k = 0; k < k_count; ++k) {
      TimeMask only(k_count, false);
      only[k] = true;
      std::vector<Matrix> v(k_count);
      v[k] = bases.psi_f;
      s.beta_j[k] = (lp.adjoint(v, only).transpose() * bases.psi_m);
    }
  }
  return s;
}

TrainingSet generate_training_set(const TumorModel& model, const GaussianPrior& prior, const ReducedBases& bases,
                                  int num_samples, std::uint64_t seed) {
  TrainingSet set;
  set.samples.resize(num_samples);
  parallel_for(num_samples, [&](Index n) {
    set.samples[n] = encode_sample(model, prior, bases, prior.sample(mix_seed(seed, n)));
  });
  return set;
}

ReductionResult build_reduction(const TumorModel& model, const GaussianPrior& prior, int num_dis_samples,
                                int num_training, int rank_m, int rank_f, int oversampling, std::uint64_t seed) {
  ReductionResult out;
  const Eigenpairs dis = compute_dis(model, prior, num_dis_samples, rank_m, oversampling, mix_seed(seed, 1));
  out.bases.psi_m = dis.vectors;
  out.bases.dis_values = dis.values;

  const std::uint64_t train_seed = mix_seed(seed, 2);
  const int k_count = model.num_candidates();
  Matrix snapshots(model.obs_dim(), static_cast<Index>(num_training) * k_count);
  parallel_for(num_training, [&](Index n) {
    const ObservableSeries f = model.pto(prior.sample(mix_seed(train_seed, n)));
    for (int k = 0; k < k_count; ++k) snapshots.col(n * k_count + k) = f[k];
  });
  const PcaResult pca = compute_pca(snapshots, rank_f);
  out.bases.psi_f = pca.basis;
  out.bases.singular_values = pca.singular_values.head(rank_f);
  out.bases.f_mean = pca.mean;

  out.training = generate_training_set(model, prior, out.bases, num_training, train_seed);
  return out;
}

namespace {

io::Tensor stack_tensor(std::vector<std::uint32_t> dims, const std::vector<const Matrix*>& blocks) {
  io::Tensor t;
  t.dims = std::move(dims);
  t.data.reserve(t.size());
  for (const Matrix* b : blocks)
    for (Index i = 0; i < b->rows(); ++i)
      for (Index j = 0; j < b->cols(); ++j) t.data.push_back((*b)(i, j));
  return t;
}

Matrix slice(const io::Tensor& t, std::size_t offset, Index rows, Index cols) {
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = t.data[offset + static_cast<std::size_t>(i * cols + j)];
  return m;
}

std::uint32_t u32(Index n) { return static_cast<std::uint32_t>(n); }

}  // namespace

void save_bases(const std::filesystem::path& dir, const ReducedBases& b) {
  std::filesystem::create_directories(dir);
  io::write_sbf1(dir / "psi_m.sbf1", io::from_matrix(b.psi_m));
  io::write_sbf1(dir / "dis_values.sbf1", io::from_vector(b.dis_values));
  io::write_sbf1(dir / "psi_f.sbf1", io::from_matrix(b.psi_f));
  io::write_sbf1(dir / "singular_values.sbf1", io::from_vector(b.singular_values));
  io::write_sbf1(dir / "f_mean.sbf1", io::from_vector(b.f_mean));
  io::KeyValues kv{{"rank_m", std::to_string(b.rank_m())},
                   {"rank_f", std::to_string(b.rank_f())},
                   {"d_m", std::to_string(b.psi_m.rows())},
                   {"d_y", std::to_string(b.psi_f.rows())}};
  for (const char* name : {"psi_m", "dis_values", "psi_f", "singular_values", "f_mean"})
    kv[std::string("hash.") + name] = io::file_hash(dir / (std::string(name) + ".sbf1"));
  io::write_key_values(dir / "bases.manifest", kv);
}

ReducedBases load_bases(const std::filesystem::path& dir) {
  ReducedBases b;
  b.psi_m = io::to_matrix(io::read_sbf1(dir / "psi_m.sbf1"));
  b.dis_values = io::to_vector(io::read_sbf1(dir / "dis_values.sbf1"));
  b.psi_f = io::to_matrix(io::read_sbf1(dir / "psi_f.sbf1"));
  b.singular_values = io::to_vector(io::read_sbf1(dir / "singular_values.sbf1"));
  b.f_mean = io::to_vector(io::read_sbf1(dir / "f_mean.sbf1"));
  if (b.f_mean.size() != b.psi_f.rows()) throw UsageError("inconsistent bases in " + dir.string());
  return b;
}

void save_training_set(const std::filesystem::path& dir, const std::string& prefix, const TrainingSet& set) {
  if (set.samples.empty()) throw UsageError("empty training set");
  std::filesystem::create_directories(dir);
  const auto& s0 = set.samples.front();
  const auto n = u32(static_cast<Index>(set.samples.size()));
  const auto k = u32(static_cast<Index>(s0.beta_j.size()));
  const auto rm = u32(s0.beta_m.size()), rf = u32(s0.beta_f.rows());
  const auto dy = u32(s0.outputs.rows()), dm = u32(s0.m.size());

  std::vector<Matrix> bm, fm, mm;
  std::vector<const Matrix*> beta_m, beta_f, beta_j, outputs, params;
  bm.reserve(n);
  fm.reserve(n);
  mm.reserve(n);
  for (const auto& s : set.samples) {
    bm.emplace_back(s.beta_m.transpose());
    fm.emplace_back(s.beta_f.transpose());
    mm.emplace_back(s.m.transpose());
  }
  std::vector<Matrix> out_t;
  out_t.reserve(n);
  for (std::size_t i = 0; i < set.samples.size(); ++i) {
    const auto& s = set.samples[i];
    beta_m.push_back(&bm[i]);
    beta_f.push_back(&fm[i]);
    params.push_back(&mm[i]);
    out_t.emplace_back(s.outputs.transpose());
    outputs.push_back(&out_t[i]);
    for (const auto& j : s.beta_j) beta_j.push_back(&j);
  }
  io::write_sbf1(dir / (prefix + "_beta_m.sbf1"), stack_tensor({n, rm}, beta_m));
  io::write_sbf1(dir / (prefix + "_beta_f.sbf1"), stack_tensor({n, k + 1, rf}, beta_f));
  io::write_sbf1(dir / (prefix + "_beta_j.sbf1"), stack_tensor({n, k, rf, rm}, beta_j));
  io::write_sbf1(dir / (prefix + "_outputs.sbf1"), stack_tensor({n, k, dy}, outputs));
  io::write_sbf1(dir / (prefix + "_m.sbf1"), stack_tensor({n, dm}, params));
  io::KeyValues kv{{"samples", std::to_string(n)}, {"K", std::to_string(k)}, {"rank_m", std::to_string(rm)},
                   {"rank_f", std::to_string(rf)}, {"d_y", std::to_string(dy)}, {"d_m", std::to_string(dm)}};
  for (const char* name : {"beta_m", "beta_f", "beta_j", "outputs", "m"})
    kv[std::string("hash.") + name] = io::file_hash(dir / (prefix + "_" + name + ".sbf1"));
  io::write_key_values(dir / (prefix + ".manifest"), kv);
}

TrainingSet load_training_set(const std::filesystem::path& dir, const std::string& prefix) {
  const auto bm = io::read_sbf1(dir / (prefix + "_beta_m.sbf1"));
  const auto bf = io::read_sbf1(dir / (prefix + "_beta_f.sbf1"));
  const auto bj = io::read_sbf1(dir / (prefix + "_beta_j.sbf1"));
  const auto out = io::read_sbf1(dir / (prefix + "_outputs.sbf1"));
  const auto pm = io::read_sbf1(dir / (prefix + "_m.sbf1"));
  if (bm.dims.size() != 2 || bf.dims.size() != 3 || bj.dims.size() != 4 || out.dims.size() != 3 ||
      pm.dims.size() != 2)
    throw UsageError("malformed training set in " + dir.string());
  const Index n = bm.dims[0], rm = bm.dims[1], k = bj.dims[1], rf = bj.dims[2], dy = out.dims[2], dm = pm.dims[1];
  TrainingSet set;
  set.samples.resize(n);
  for (Index i = 0; i < n; ++i) {
    auto& s = set.samples[i];
    s.beta_m = slice(bm, i * rm, 1, rm).transpose();
    s.beta_f = slice(bf, i * (k + 1) * rf, k + 1, rf).transpose();
    s.outputs = slice(out, i * k * dy, k, dy).transpose();
    s.m = slice(pm, i * dm, 1, dm).transpose();
    for (Index t = 0; t < k; ++t) s.beta_j.push_back(slice(bj, (i * k + t) * rf * rm, rf, rm));
  }
  return set;
}

}  // namespace sboed
