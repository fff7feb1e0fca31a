#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>

namespace sboed {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using SparseMatrix = Eigen::SparseMatrix<double>;
using Index = Eigen::Index;

/// Raised for invalid arguments and malformed inputs (CLI exit code 1).
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when a solver fails to converge or produces non-finite values
/// (CLI exit code 2).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Deterministic 64-bit mixing; used to derive independent stream seeds.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

/// Seeded generator for standard normal vectors. Each call site owns one.
class NormalSampler {
 public:
  explicit NormalSampler(std::uint64_t seed) : engine_(seed) {}

  double draw() { return normal_(engine_); }
  Vector vector(Index n);
  Matrix matrix(Index rows, Index cols);

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

/// Number of worker threads used by parallel loops; 0 selects the hardware
/// concurrency. Set once from the CLI (`--threads`).
void set_thread_count(unsigned n);

/// Keeps freed heap pages mapped. Training frees and reallocates the same
/// large tape buffers every batch; with the default glibc thresholds each
/// cycle returns them to the kernel and faults them back in.
void retain_heap_pages();
unsigned thread_count();

/// Runs body(i) for i in [0, n) across worker threads. Work is split into
/// contiguous blocks, so results written per index are independent of the
/// thread count. The first exception thrown by a worker is rethrown.
void parallel_for(Index n, const std::function<void(Index)>& body);

/// Diagnostics on stderr; set_quiet(true) silences them.
void warn(const std::string& message);
void set_quiet(bool quiet);

double relative_error(const Vector& approx, const Vector& exact);

}  // namespace sboed
