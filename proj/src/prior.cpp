#include "sboed/prior.hpp"

#include <array>
#include <cmath>
#include <vector>

namespace sboed {

namespace {

constexpr std::array<double, 4> kCornerXi{-1.0, 1.0, 1.0, -1.0};
constexpr std::array<double, 4> kCornerEta{-1.0, -1.0, 1.0, 1.0};

struct QuadratureTables {
  // per Gauss point q and corner a: shape value and reference derivatives
  std::array<std::array<double, 4>, 4> n{};
  std::array<std::array<double, 4>, 4> dxi{};
  std::array<std::array<double, 4>, 4> deta{};

  QuadratureTables() {
    const double g = 1.0 / std::sqrt(3.0);
    const std::array<double, 4> qxi{-g, g, g, -g};
    const std::array<double, 4> qeta{-g, -g, g, g};
    for (int q = 0; q < 4; ++q)
      for (int a = 0; a < 4; ++a) {
        n[q][a] = 0.25 * (1 + kCornerXi[a] * qxi[q]) * (1 + kCornerEta[a] * qeta[q]);
        dxi[q][a] = 0.25 * kCornerXi[a] * (1 + kCornerEta[a] * qeta[q]);
        deta[q][a] = 0.25 * kCornerEta[a] * (1 + kCornerXi[a] * qxi[q]);
      }
  }
};

const QuadratureTables& tables() {
  static const QuadratureTables t;
  return t;
}

}  // namespace

SparseMatrix assemble_bilinear_form(const StructuredMesh& mesh, const Vector& grad_coef,
                                    const Vector& mass_coef) {
  const Index n = mesh.num_nodes();
  if (grad_coef.size() != n || mass_coef.size() != n) throw UsageError("coefficient size mismatch");
  const auto& t = tables();
  const double hx = mesh.hx(), hy = mesh.hy();
  const double det = 0.25 * hx * hy;
  const double sx = 2.0 / hx, sy = 2.0 / hy;

  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(static_cast<std::size_t>(mesh.num_elements()) * 16);
  for (Index e = 0; e < mesh.num_elements(); ++e) {
    const auto nodes = mesh.element_nodes(e);
    double ke[4][4] = {};
    for (int q = 0; q < 4; ++q) {
      double a = 0.0, c = 0.0;
      for (int k = 0; k < 4; ++k) {
        a += t.n[q][k] * grad_coef[nodes[k]];
        c += t.n[q][k] * mass_coef[nodes[k]];
      }
      for (int i = 0; i < 4; ++i)
        for (int j = i; j < 4; ++j) {
          const double grad = sx * sx * t.dxi[q][i] * t.dxi[q][j] + sy * sy * t.deta[q][i] * t.deta[q][j];
          ke[i][j] += det * (a * grad + c * t.n[q][i] * t.n[q][j]);
        }
    }
    // upper triangle mirrored: exact symmetry whatever the FP contraction
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) triplets.emplace_back(nodes[i], nodes[j], i <= j ? ke[i][j] : ke[j][i]);
  }
  SparseMatrix k(n, n);
  k.setFromTriplets(triplets.begin(), triplets.end());
  k.makeCompressed();
  return k;
}

SparseMatrix assemble_mass(const StructuredMesh& mesh) {
  return assemble_bilinear_form(mesh, Vector::Zero(mesh.num_nodes()), Vector::Ones(mesh.num_nodes()));
}

Vector lump(const SparseMatrix& mass) {
  Vector d = Vector::Zero(mass.rows());
  for (Index k = 0; k < mass.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(mass, k); it; ++it) d[it.row()] += it.value();
  return d;
}

GaussianPrior::GaussianPrior(const Geometry& g, MassMode mode) : mode_(mode), mean_(g.material.prior_mean) {
  if (g.material.delta.maxCoeff() <= 0.0) throw NumericalError("singular SPDE operator: delta vanishes everywhere");
  mass_ = assemble_mass(g.mesh);
  lumped_ = lump(mass_);
  a_ = assemble_bilinear_form(g.mesh, g.material.gamma, g.material.delta);
  auto factor = std::make_shared<Eigen::SimplicialLLT<SparseMatrix, Eigen::Lower, Eigen::AMDOrdering<int>>>(a_);
  if (factor->info() != Eigen::Success) throw NumericalError("Cholesky factorization of the SPDE operator failed");
  a_factor_ = std::move(factor);
  if (mode_ == MassMode::consistent) {
    Eigen::SimplicialLLT<SparseMatrix, Eigen::Lower, Eigen::NaturalOrdering<int>> llt(mass_);
    if (llt.info() != Eigen::Success) throw NumericalError("Cholesky factorization of the mass matrix failed");
    mass_cholesky_ = std::make_shared<const SparseMatrix>(llt.matrixL());
  }
}

Vector GaussianPrior::apply_s(const Vector& x) const {
  if (mode_ == MassMode::lumped) return lumped_.cwiseSqrt().cwiseProduct(x);
  return (*mass_cholesky_) * x;
}

Vector GaussianPrior::apply_s_transpose(const Vector& x) const {
  if (mode_ == MassMode::lumped) return lumped_.cwiseSqrt().cwiseProduct(x);
  return mass_cholesky_->transpose() * x;
}

Vector GaussianPrior::apply_s_inv(const Vector& x) const {
  if (mode_ == MassMode::lumped) return x.cwiseQuotient(lumped_.cwiseSqrt());
  return mass_cholesky_->triangularView<Eigen::Lower>().solve(x);
}

Vector GaussianPrior::apply_mass_inv(const Vector& x) const {
  if (mode_ == MassMode::lumped) return x.cwiseQuotient(lumped_);
  Vector y = mass_cholesky_->triangularView<Eigen::Lower>().solve(x);
  return mass_cholesky_->transpose().triangularView<Eigen::Upper>().solve(y);
}

Vector GaussianPrior::solve_spde(const Vector& b) const { return a_factor_->solve(b); }

Vector GaussianPrior::precision_action(const Vector& v) const { return a_ * apply_mass_inv(a_ * v); }

Vector GaussianPrior::covariance_action(const Vector& v) const {
  const Vector x = solve_spde(v);
  return solve_spde(mode_ == MassMode::lumped ? Vector(lumped_.cwiseProduct(x)) : Vector(mass_ * x));
}

Vector GaussianPrior::whiten(const Vector& v) const { return apply_s_inv(a_ * v); }

Vector GaussianPrior::unwhiten(const Vector& beta) const { return solve_spde(apply_s(beta)); }

Vector GaussianPrior::unwhiten_transpose(const Vector& x) const { return apply_s_transpose(solve_spde(x)); }

Matrix GaussianPrior::unwhiten_block(const Matrix& beta) const {
  Matrix out(dim(), beta.cols());
  for (Index j = 0; j < beta.cols(); ++j) out.col(j) = unwhiten(Vector(beta.col(j)));
  return out;
}

Matrix GaussianPrior::unwhiten_transpose_block(const Matrix& x) const {
  Matrix out(dim(), x.cols());
  for (Index j = 0; j < x.cols(); ++j) out.col(j) = unwhiten_transpose(Vector(x.col(j)));
  return out;
}

double GaussianPrior::precision_norm_sq(const Vector& v) const { return whiten(v).squaredNorm(); }

double GaussianPrior::mass_norm(const Vector& v) const { return std::sqrt(v.dot(mass_ * v)); }

Vector GaussianPrior::sample_fluctuation(std::uint64_t seed) const {
  NormalSampler rng(seed);
  return unwhiten(rng.vector(dim()));
}

Vector GaussianPrior::sample(std::uint64_t seed) const { return mean_ + sample_fluctuation(seed); }

Matrix GaussianPrior::dense_covariance() const {
  if (dim() > 4096) throw UsageError("dense prior covariance limited to d_m <= 4096");
  Matrix c(dim(), dim());
  for (Index j = 0; j < dim(); ++j) c.col(j) = covariance_action(Vector::Unit(dim(), j));
  return 0.5 * (c + c.transpose());
}

Matrix GaussianPrior::dense_precision() const {
  if (dim() > 4096) throw UsageError("dense prior precision limited to d_m <= 4096");
  Matrix p(dim(), dim());
  for (Index j = 0; j < dim(); ++j) p.col(j) = precision_action(Vector::Unit(dim(), j));
  return 0.5 * (p + p.transpose());
}

Vector GaussianPrior::pointwise_variance() const {
  // diag(A^-1 S S^T A^-1) = row norms of A^-1 S
  Vector var = Vector::Zero(dim());
  for (Index j = 0; j < dim(); ++j) var += unwhiten(Vector::Unit(dim(), j)).cwiseAbs2();
  return var;
}

}  // namespace sboed
