#include "sboed/io.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cstring>
#include <iomanip>
#include <sstream>

namespace sboed::io {

namespace {

static_assert(std::endian::native == std::endian::little,
              "SBF1 I/O assumes a little-endian host");

template <typename T>
void put(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(std::istream& in, const std::filesystem::path& path) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw UsageError("truncated SBF1 file: " + path.string());
  return value;
}

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// PGM header tokens may be separated by whitespace and comments.
std::string pgm_token(std::istream& in) {
  std::string tok;
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {}
      continue;
    }
    if (std::isspace(c)) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(static_cast<char>(c));
  }
  return tok;
}

}  // namespace

std::size_t Tensor::size() const {
  std::size_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

Tensor from_vector(const Vector& v) {
  Tensor t;
  t.dims = {static_cast<std::uint32_t>(v.size())};
  t.data.assign(v.data(), v.data() + v.size());
  return t;
}

Tensor from_matrix(const Matrix& m) {
  Tensor t;
  t.dims = {static_cast<std::uint32_t>(m.rows()), static_cast<std::uint32_t>(m.cols())};
  t.data.resize(static_cast<std::size_t>(m.size()));
  std::size_t k = 0;
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) t.data[k++] = m(i, j);
  return t;
}

Vector to_vector(const Tensor& t) {
  Vector v(static_cast<Index>(t.data.size()));
  std::copy(t.data.begin(), t.data.end(), v.data());
  return v;
}

Matrix to_matrix(const Tensor& t) {
  if (t.dims.size() != 2) throw UsageError("expected a rank-2 tensor");
  Matrix m(t.dims[0], t.dims[1]);
  std::size_t k = 0;
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) m(i, j) = t.data[k++];
  return m;
}

void write_sbf1(const std::filesystem::path& path, const Tensor& t) {
  if (t.size() != t.data.size()) throw UsageError("tensor dims do not match data size");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UsageError("cannot open for writing: " + path.string());
  out.write("SBF1", 4);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(t.dims.size()));
  for (auto d : t.dims) put<std::uint32_t>(out, d);
  out.write(reinterpret_cast<const char*>(t.data.data()),
            static_cast<std::streamsize>(t.data.size() * sizeof(double)));
  if (!out) throw UsageError("write failed: " + path.string());
}

Tensor read_sbf1(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot open: " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "SBF1", 4) != 0) throw UsageError("bad SBF1 magic: " + path.string());
  Tensor t;
  const auto ndim = get<std::uint32_t>(in, path);
  if (ndim > 16) throw UsageError("implausible SBF1 rank in " + path.string());
  for (std::uint32_t i = 0; i < ndim; ++i) t.dims.push_back(get<std::uint32_t>(in, path));
  t.data.resize(t.size());
  in.read(reinterpret_cast<char*>(t.data.data()),
          static_cast<std::streamsize>(t.data.size() * sizeof(double)));
  if (!in) throw UsageError("truncated SBF1 payload: " + path.string());
  return t;
}

void write_pgm(const std::filesystem::path& path, const GrayImage& image) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UsageError("cannot open for writing: " + path.string());
  out << "P5\n" << image.width << ' ' << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.pixels.data()),
            static_cast<std::streamsize>(image.pixels.size()));
}

GrayImage read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot open mask file: " + path.string());
  if (pgm_token(in) != "P5") throw UsageError("mask file is not a binary PGM (P5): " + path.string());
  GrayImage img;
  try {
    img.width = std::stoi(pgm_token(in));
    img.height = std::stoi(pgm_token(in));
    const int maxval = std::stoi(pgm_token(in));
    if (maxval != 255) throw UsageError("mask file must use maxval 255");
  } catch (const std::logic_error&) {
    throw UsageError("malformed PGM header: " + path.string());
  }
  if (img.width <= 0 || img.height <= 0) throw UsageError("malformed PGM dimensions");
  img.pixels.resize(static_cast<std::size_t>(img.width) * img.height);
  in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (!in) throw UsageError("truncated PGM payload: " + path.string());
  return img;
}

GrayImage render_field(const Vector& field, int nx, int ny) {
  if (field.size() != static_cast<Index>(nx) * ny) throw UsageError("field size does not match grid");
  GrayImage img;
  img.width = nx;
  img.height = ny;
  img.pixels.resize(static_cast<std::size_t>(nx) * ny);
  const double lo = field.minCoeff();
  const double hi = field.maxCoeff();
  const double span = hi > lo ? hi - lo : 1.0;
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      const double v = (field[static_cast<Index>(j) * nx + i] - lo) / span;
      img.pixels[static_cast<std::size_t>(ny - 1 - j) * nx + i] =
          static_cast<std::uint8_t>(std::clamp(std::lround(255.0 * v), 0L, 255L));
    }
  }
  return img;
}

KeyValues read_key_values(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open: " + path.string());
  KeyValues kv;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw UsageError(path.string() + ":" + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw UsageError(path.string() + ":" + std::to_string(lineno) + ": empty key");
    kv[key] = trim(line.substr(eq + 1));
  }
  return kv;
}

void write_key_values(const std::filesystem::path& path, const KeyValues& kv) {
  std::ofstream out(path);
  if (!out) throw UsageError("cannot open for writing: " + path.string());
  for (const auto& [k, v] : kv) out << k << " = " << v << '\n';
}

CsvWriter::CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header)
    : out_(path, std::ios::binary), columns_(header.size()) {
  if (!out_) throw UsageError("cannot open for writing: " + path.string());
  row(header);
}

void CsvWriter::row(const std::vector<std::string>& cells) {
  if (cells.size() != columns_) throw UsageError("CSV row width mismatch");
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) out_ << ',';
    out_ << cells[i];
  }
  out_ << '\n';
  out_.flush();
}

std::string format_double(double x) {
  std::ostringstream os;
  os.imbue(std::locale::classic());
  os << std::setprecision(17) << x;
  return os.str();
}

std::string file_hash(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot open: " + path.string());
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[1 << 14];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
    if (!in) break;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

}  // namespace sboed::io
