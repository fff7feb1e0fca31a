#pragma once

#include "sboed/common.hpp"
#include "sboed/mesh.hpp"

#include <Eigen/SparseCholesky>

#include <memory>

namespace sboed {

/// Assembles int( a grad(phi_i).grad(phi_j) + c phi_i phi_j ) over the mesh
/// with bilinear elements; the nodal coefficients a and c are interpolated
/// bilinearly and integrated with 2x2 Gauss quadrature, which is exact for
/// this integrand. Natural boundary conditions.
SparseMatrix assemble_bilinear_form(const StructuredMesh& mesh, const Vector& grad_coef,
                                    const Vector& mass_coef);

/// Consistent mass matrix.
SparseMatrix assemble_mass(const StructuredMesh& mesh);

/// Row-sum lumped mass.
Vector lump(const SparseMatrix& mass);

/// Which mass matrix sits between the two SPDE solves in
/// Gamma_prior = A^-1 M A^-1.
enum class MassMode { lumped, consistent };

/// Gaussian random-field prior N(m_prior, A^-1 M A^-1) with
/// A = -div(gamma grad) + delta (bilinear form above).
///
/// With M = S S^T (S diagonal for the lumped mass, the Cholesky factor of the
/// consistent mass otherwise), whiten(v) = S^-1 A v and
/// unwhiten(b) = A^-1 S b are exact mutual inverses and
/// ||whiten(v)||^2 = v^T Gamma_prior^-1 v.
class GaussianPrior {
 public:
  GaussianPrior(const Geometry& geometry, MassMode mode = MassMode::lumped);

  Index dim() const { return mean_.size(); }
  MassMode mass_mode() const { return mode_; }

  const Vector& mean() const { return mean_; }
  const SparseMatrix& mass() const { return mass_; }
  const Vector& lumped_mass() const { return lumped_; }
  const SparseMatrix& spde_operator() const { return a_; }

  Vector precision_action(const Vector& v) const;   // Gamma_prior^-1 v
  Vector covariance_action(const Vector& v) const;  // Gamma_prior v
  Vector solve_spde(const Vector& b) const;         // A^-1 b

  Vector whiten(const Vector& v) const;
  Vector unwhiten(const Vector& beta) const;
  Vector unwhiten_transpose(const Vector& x) const;  // S^T A^-1 x
  Matrix unwhiten_block(const Matrix& beta) const;  // column-wise
  Matrix unwhiten_transpose_block(const Matrix& x) const;

  double precision_norm_sq(const Vector& v) const;  // ||v||^2 in Gamma_prior^-1
  double mass_norm(const Vector& v) const;          // sqrt(v^T M v), consistent M

  /// m_prior + unwhiten(eta), eta ~ N(0, I) from the given seed.
  Vector sample(std::uint64_t seed) const;
  /// Zero-mean draw unwhiten(eta).
  Vector sample_fluctuation(std::uint64_t seed) const;

  /// Dense covariance and precision; only for small meshes (d_m <= 4096).
  Matrix dense_covariance() const;
  Matrix dense_precision() const;
  /// Pointwise prior variance diag(Gamma_prior), computed column by column.
  Vector pointwise_variance() const;

 private:
  Vector apply_s(const Vector& x) const;        // S x
  Vector apply_s_transpose(const Vector& x) const;
  Vector apply_s_inv(const Vector& x) const;    // S^-1 x
  Vector apply_mass_inv(const Vector& x) const; // M^-1 x

  MassMode mode_;
  Vector mean_;
  SparseMatrix mass_;
  Vector lumped_;
  SparseMatrix a_;
  std::shared_ptr<const Eigen::SimplicialLLT<SparseMatrix, Eigen::Lower, Eigen::AMDOrdering<int>>> a_factor_;
  std::shared_ptr<const SparseMatrix> mass_cholesky_;  // lower factor L, M = L L^T (consistent mode)
};

}  // namespace sboed
