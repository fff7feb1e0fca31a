#include "sboed/mesh.hpp"

#include "sboed/io.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace sboed {

StructuredMesh::StructuredMesh(int nx, int ny, double lx, double ly)
    : nx_(nx), ny_(ny), lx_(lx), ly_(ly) {
  if (nx < 3 || ny < 3) throw UsageError("mesh needs at least 3 nodes per axis");
  if (!(lx > 0.0) || !(ly > 0.0)) throw UsageError("domain size must be positive");
  hx_ = lx / (nx - 1);
  hy_ = ly / (ny - 1);
}

std::array<Index, 4> StructuredMesh::element_nodes(Index e) const {
  const int ex = static_cast<int>(e % (nx_ - 1));
  const int ey = static_cast<int>(e / (nx_ - 1));
  return {node(ex, ey), node(ex + 1, ey), node(ex + 1, ey + 1), node(ex, ey + 1)};
}

RegionSpec default_region(double lx, double ly) {
  return DiskRegion{0.5 * lx, 0.5 * ly, 0.3 * std::min(lx, ly)};
}

double matern_gamma(double sigma, double rho) {
  return rho / (4.0 * std::sqrt(2.0 * std::numbers::pi) * sigma);
}

double matern_delta(double sigma, double rho) {
  return std::numbers::sqrt2 / (sigma * rho * std::sqrt(std::numbers::pi));
}

Index MaterialMap::count(Tissue t) const {
  return static_cast<Index>(std::count(tissue.begin(), tissue.end(), t));
}

namespace {

std::vector<Tissue> label_nodes(const StructuredMesh& mesh, const RegionSpec& region) {
  std::vector<Tissue> labels(static_cast<std::size_t>(mesh.num_nodes()), Tissue::gray);
  if (const auto* disk = std::get_if<DiskRegion>(&region)) {
    if (!(disk->radius > 0.0)) throw UsageError("disk radius must be positive");
    for (Index n = 0; n < mesh.num_nodes(); ++n) {
      const double dx = mesh.x(n) - disk->center_x;
      const double dy = mesh.y(n) - disk->center_y;
      if (dx * dx + dy * dy <= disk->radius * disk->radius) labels[n] = Tissue::white;
    }
  } else if (std::holds_alternative<HalfSplitRegion>(region)) {
    for (Index n = 0; n < mesh.num_nodes(); ++n)
      if (mesh.x(n) >= 0.5 * mesh.lx()) labels[n] = Tissue::white;
  } else {
    const auto& mask = std::get<MaskFileRegion>(region);
    const io::GrayImage img = io::read_pgm(mask.path);
    if (img.width != mesh.nx() || img.height != mesh.ny())
      throw UsageError("mask file " + mask.path.string() + " is " + std::to_string(img.width) + "x" +
                       std::to_string(img.height) + ", grid is " + std::to_string(mesh.nx()) + "x" +
                       std::to_string(mesh.ny()));
    // image row 0 is the top of the grid, matching render_field
    for (int j = 0; j < mesh.ny(); ++j)
      for (int i = 0; i < mesh.nx(); ++i) {
        const auto px = img.pixels[static_cast<std::size_t>(mesh.ny() - 1 - j) * mesh.nx() + i];
        if (px != 0 && px != 255) throw UsageError("mask pixels must be 0 (gray) or 255 (white)");
        if (px == 255) labels[mesh.node(i, j)] = Tissue::white;
      }
  }
  return labels;
}

}  // namespace

Geometry build_geometry(int nx, int ny, double lx, double ly, const RegionSpec& region,
                        const TissueParameters& p) {
  StructuredMesh mesh(nx, ny, lx, ly);
  if (!(p.variance_gray > 0.0 && p.variance_white > 0.0)) throw UsageError("prior variances must be positive");
  if (!(p.correlation_gray > 0.0 && p.correlation_white > 0.0))
    throw UsageError("correlation lengths must be positive");

  MaterialMap mat;
  mat.tissue = label_nodes(mesh, region);
  const Index n = mesh.num_nodes();
  mat.diffusion.resize(n);
  mat.prior_mean.resize(n);
  mat.sigma.resize(n);
  mat.rho.resize(n);
  mat.gamma.resize(n);
  mat.delta.resize(n);
  for (Index i = 0; i < n; ++i) {
    const bool gray = mat.tissue[i] == Tissue::gray;
    mat.diffusion[i] = std::exp(gray ? p.log_diffusion_gray : p.log_diffusion_white);
    mat.prior_mean[i] = gray ? p.mean_gray : p.mean_white;
    mat.sigma[i] = std::sqrt(gray ? p.variance_gray : p.variance_white);
    mat.rho[i] = gray ? p.correlation_gray : p.correlation_white;
    mat.gamma[i] = matern_gamma(mat.sigma[i], mat.rho[i]);
    mat.delta[i] = matern_delta(mat.sigma[i], mat.rho[i]);
  }
  return {std::move(mesh), std::move(mat)};
}

std::array<double, 2> gray_centroid(const Geometry& g) {
  double sx = 0.0, sy = 0.0;
  Index count = 0;
  for (Index n = 0; n < g.mesh.num_nodes(); ++n) {
    if (g.material.tissue[n] != Tissue::gray) continue;
    sx += g.mesh.x(n);
    sy += g.mesh.y(n);
    ++count;
  }
  if (count == 0) return {0.5 * g.mesh.lx(), 0.5 * g.mesh.ly()};
  return {sx / count, sy / count};
}

}  // namespace sboed
