#include "doctest.h"

#include "sboed/common.hpp"
#include "sboed/io.hpp"

#include <atomic>
#include <filesystem>
#include <fstream>

using namespace sboed;
namespace fs = std::filesystem;

namespace {
fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "sboed_test_io";
  fs::create_directories(dir);
  return dir / name;
}
}  // namespace

TEST_CASE("sbf1 round trip preserves dims and bits") {
  Matrix m(3, 2);
  m << 1.5, -2.0, 3.25, 1e-300, -0.0, 7.0;
  const auto path = scratch("m.sbf1");
  io::write_sbf1(path, io::from_matrix(m));
  const auto t = io::read_sbf1(path);
  REQUIRE(t.dims == std::vector<std::uint32_t>{3, 2});
  CHECK(io::to_matrix(t) == m);

  std::ifstream in(path, std::ios::binary);
  char magic[4];
  in.read(magic, 4);
  CHECK(std::string(magic, 4) == "SBF1");
  CHECK(fs::file_size(path) == 4 + 4 + 2 * 4 + 6 * 8);
}

TEST_CASE("sbf1 rejects bad magic and truncation") {
  const auto path = scratch("bad.sbf1");
  {
    std::ofstream out(path, std::ios::binary);
    out << "NOPE";
  }
  CHECK_THROWS_AS(io::read_sbf1(path), UsageError);
  io::write_sbf1(path, io::from_vector(Vector::Ones(10)));
  fs::resize_file(path, fs::file_size(path) - 8);
  CHECK_THROWS_AS(io::read_sbf1(path), UsageError);
}

TEST_CASE("pgm round trip and render orientation") {
  Vector f(6);
  f << 0, 1, 2, 3, 4, 5;  // 3 x 2 grid, row 0 at the bottom
  const auto img = io::render_field(f, 3, 2);
  CHECK(img.pixels[0] == 153);  // top-left shows grid row 1, value 3
  CHECK(img.pixels[3] == 0);
  CHECK(img.pixels[5] == 102);
  const auto path = scratch("f.pgm");
  io::write_pgm(path, img);
  const auto back = io::read_pgm(path);
  CHECK(back.width == 3);
  CHECK(back.height == 2);
  CHECK(back.pixels == img.pixels);
}

TEST_CASE("key value files ignore comments and report line numbers") {
  const auto path = scratch("kv.cfg");
  {
    std::ofstream out(path);
    out << "# header\n nx = 16 \n\nseed=7 # trailing\n";
  }
  const auto kv = io::read_key_values(path);
  CHECK(kv.at("nx") == "16");
  CHECK(kv.at("seed") == "7");
  {
    std::ofstream out(path);
    out << "a = 1\nbroken line\n";
  }
  try {
    io::read_key_values(path);
    FAIL("expected a usage error");
  } catch (const UsageError& e) {
    CHECK(std::string(e.what()).find(":2:") != std::string::npos);
  }
}

TEST_CASE("csv writer enforces the header width") {
  const auto path = scratch("t.csv");
  io::CsvWriter csv(path, {"a", "b"});
  csv.row({"1", io::format_double(0.1)});
  CHECK_THROWS_AS(csv.row({"1"}), UsageError);
  std::ifstream in(path);
  std::string l1, l2;
  std::getline(in, l1);
  std::getline(in, l2);
  CHECK(l1 == "a,b");
  CHECK(l2 == "1,0.10000000000000001");
}

TEST_CASE("seed mixing and normal sampler are deterministic") {
  CHECK(mix_seed(1, 2) == mix_seed(1, 2));
  CHECK(mix_seed(1, 2) != mix_seed(2, 1));
  NormalSampler a(42), b(42);
  CHECK(a.vector(5) == b.vector(5));
}

TEST_CASE("parallel_for visits every index once and rethrows") {
  set_thread_count(3);
  std::vector<std::atomic<int>> hits(101);
  parallel_for(101, [&](Index i) { hits[i]++; });
  for (auto& h : hits) CHECK(h.load() == 1);
  CHECK_THROWS_AS(parallel_for(10, [](Index i) { if (i == 7) throw NumericalError("x"); }), NumericalError);
  set_thread_count(0);
}
