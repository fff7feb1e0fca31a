#pragma once

#include "sboed/common.hpp"

#include <array>
#include <filesystem>
#include <variant>
#include <vector>

namespace sboed {

/// Rectangular grid of bilinear quadrilaterals. Node (i, j) has index
/// j * nx + i and sits at (i * hx, j * hy).
class StructuredMesh {
 public:
  StructuredMesh(int nx, int ny, double lx, double ly);

  int nx() const { return nx_; }
  int ny() const { return ny_; }
  double lx() const { return lx_; }
  double ly() const { return ly_; }
  double hx() const { return hx_; }
  double hy() const { return hy_; }

  Index num_nodes() const { return static_cast<Index>(nx_) * ny_; }
  Index num_elements() const { return static_cast<Index>(nx_ - 1) * (ny_ - 1); }

  Index node(int i, int j) const { return static_cast<Index>(j) * nx_ + i; }
  double x(Index node) const { return static_cast<double>(node % nx_) * hx_; }
  double y(Index node) const { return static_cast<double>(node / nx_) * hy_; }

  /// Counter-clockwise corner nodes of element e, starting at the lower left.
  std::array<Index, 4> element_nodes(Index e) const;

 private:
  int nx_, ny_;
  double lx_, ly_, hx_, hy_;
};

enum class Tissue { gray, white };

struct DiskRegion {
  double center_x, center_y, radius;  // mm; nodes inside are white matter
};
struct HalfSplitRegion {};  // x < lx/2 gray, otherwise white
struct MaskFileRegion {
  std::filesystem::path path;  // P5 PGM, 0 = gray, 255 = white
};
using RegionSpec = std::variant<DiskRegion, HalfSplitRegion, MaskFileRegion>;

/// Default region: white-matter disk of radius 0.3 * min(lx, ly) centered in
/// the domain.
RegionSpec default_region(double lx, double ly);

/// Tumor-model hyper-parameters per tissue (log-growth prior and diffusion).
struct TissueParameters {
  double log_diffusion_gray = -0.9937;
  double log_diffusion_white = -0.3006;
  double mean_gray = -0.7800;
  double mean_white = -0.8419;
  double variance_gray = 0.0682;
  double variance_white = 0.0682;
  double correlation_gray = 6.0;   // mm
  double correlation_white = 12.0; // mm
};

/// Matérn SPDE coefficients for marginal std sigma and correlation length rho.
double matern_gamma(double sigma, double rho);
double matern_delta(double sigma, double rho);

struct MaterialMap {
  std::vector<Tissue> tissue;
  Vector diffusion;  // mm^2/day
  Vector prior_mean; // log(1/day)
  Vector sigma;
  Vector rho;
  Vector gamma;
  Vector delta;

  Index count(Tissue t) const;
};

struct Geometry {
  StructuredMesh mesh;
  MaterialMap material;
};

Geometry build_geometry(int nx, int ny, double lx, double ly, const RegionSpec& region,
                        const TissueParameters& params = {});

/// Centroid of the gray-matter nodes (falls back to the domain center when
/// no node is gray).
std::array<double, 2> gray_centroid(const Geometry& geometry);

}  // namespace sboed
