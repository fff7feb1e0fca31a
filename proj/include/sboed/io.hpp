#pragma once

#include "sboed/common.hpp"

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

namespace sboed::io {

/// Dense float64 tensor stored row-major, the in-memory image of an SBF1 file.
struct Tensor {
  std::vector<std::uint32_t> dims;
  std::vector<double> data;

  std::size_t size() const;
};

Tensor from_vector(const Vector& v);
Tensor from_matrix(const Matrix& m);
Vector to_vector(const Tensor& t);
Matrix to_matrix(const Tensor& t);

/// SBF1: magic "SBF1", u32 ndim, u32 dims[ndim], float64 data; all
/// little-endian, data row-major.
void write_sbf1(const std::filesystem::path& path, const Tensor& t);
Tensor read_sbf1(const std::filesystem::path& path);

/// 8-bit grayscale image (binary PGM, P5), row-major.
struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;
};

void write_pgm(const std::filesystem::path& path, const GrayImage& image);
GrayImage read_pgm(const std::filesystem::path& path);

/// Min-max scaled render of a nodal field on an nx-by-ny grid. Row 0 of the
/// image is the top (largest y) row of the grid.
GrayImage render_field(const Vector& field, int nx, int ny);

/// key = value text file; '#' starts a comment.
using KeyValues = std::map<std::string, std::string>;
KeyValues read_key_values(const std::filesystem::path& path);
void write_key_values(const std::filesystem::path& path, const KeyValues& kv);

/// Simple CSV writer: header row, comma separator, '.' decimal, LF endings.
class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header);
  void row(const std::vector<std::string>& cells);

 private:
  std::ofstream out_;
  std::size_t columns_;
};

std::string format_double(double x);

/// 64-bit FNV-1a of a file's bytes, as 16 hex digits.
std::string file_hash(const std::filesystem::path& path);

}  // namespace sboed::io
