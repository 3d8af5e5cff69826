#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "egunet/bundles.hpp"
#include "egunet/dataset_io.hpp"
#include "egunet/errors.hpp"
#include "egunet/rng.hpp"
#include "egunet/scene.hpp"
#include "egunet/types.hpp"
#include "helpers.hpp"

using namespace egu;
namespace fs = std::filesystem;

namespace {

// Fresh scratch directory per test case; removed on destruction.
struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("egu_io_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void spit(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

Scene tiny_scene(std::uint64_t seed) {
  SceneSpec spec;
  spec.height = 8;
  spec.width = 8;
  spec.bands = 12;
  spec.classes = 3;
  spec.pure_per_class = 3;
  spec.field_sigma = 2.0;
  spec.snr_db = 0.0;
  spec.impulse_fraction = 0.0;
  return generate_scene(spec, seed);
}

}  // namespace

TEST_SUITE("dataset_io") {

// ------------------------------------------------------------- round trips

TEST_CASE("cube files round trip bit for bit") {
  TempDir tmp("cube");
  Scene scene = tiny_scene(1);
  DatasetMeta meta;
  meta.seed = 424242;
  meta.provenance = "unit test";
  std::string path = tmp.file("cube.hsux");
  write_cube(path, scene.cube, meta);
  HsiCube back = read_cube(path);
  CHECK(back.height == scene.cube.height);
  CHECK(back.width == scene.cube.width);
  CHECK(back.bands == scene.cube.bands);
  CHECK(back.wavelengths == scene.cube.wavelengths);
  CHECK((back.data.vec() - scene.cube.data.vec()).cwiseAbs().maxCoeff() == 0.0);

  // a second write produces byte-identical output
  std::string again = tmp.file("cube2.hsux");
  write_cube(again, scene.cube, meta);
  CHECK(slurp(path) == slurp(again));

  DatasetInfo info = peek_dataset(path);
  CHECK(info.kind == "cube");
  CHECK(info.height == 8);
  CHECK(info.width == 8);
  CHECK(info.bands == 12);
  REQUIRE(info.seed.has_value());
  CHECK(*info.seed == 424242);
  CHECK(info.provenance == "unit test");
}

TEST_CASE("cube files survive a missing wavelength table") {
  TempDir tmp("nowl");
  Scene scene = tiny_scene(2);
  scene.cube.wavelengths.clear();
  std::string path = tmp.file("cube.hsux");
  write_cube(path, scene.cube);
  HsiCube back = read_cube(path);
  CHECK(back.wavelengths.empty());
  CHECK((back.data.vec() - scene.cube.data.vec()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("abundance files round trip and allow free row sums") {
  TempDir tmp("abund");
  Scene scene = tiny_scene(3);
  std::string path = tmp.file("abundance.hsux");
  write_abundance(path, scene.abundance);
  AbundanceMap back = read_abundance(path);
  CHECK((back.data.vec() - scene.abundance.data.vec()).cwiseAbs().maxCoeff() == 0.0);

  // partially constrained estimates carry non-unit sums; files accept them
  AbundanceMap free_sums(2, 2, 3);
  for (std::int64_t i = 0; i < free_sums.data.size(); ++i) {
    free_sums.data[i] = 0.17 * static_cast<double>(i + 1);
  }
  std::string free_path = tmp.file("pclsu.hsux");
  write_abundance(free_path, free_sums);
  AbundanceMap fb = read_abundance(free_path);
  CHECK((fb.data.vec() - free_sums.data.vec()).cwiseAbs().maxCoeff() == 0.0);
  CHECK_THROWS(fb.validate());  // but simplex validation still notices

  AbundanceMap bad(2, 2, 2);
  bad.data[1] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(write_abundance(tmp.file("nan.hsux"), bad), NumericError);
}

TEST_CASE("endmember files round trip bit for bit") {
  TempDir tmp("endm");
  Scene scene = tiny_scene(4);
  std::string path = tmp.file("endmembers.hsux");
  write_endmembers(path, scene.endmembers);
  EndmemberMatrix back = read_endmembers(path);
  CHECK(back.bands == scene.endmembers.bands);
  CHECK(back.classes == scene.endmembers.classes);
  CHECK((back.m - scene.endmembers.m).cwiseAbs().maxCoeff() == 0.0);

  DatasetInfo info = peek_dataset(path);
  CHECK(info.kind == "endmembers");
  CHECK(info.bands == 12);
  CHECK(info.classes == 3);
  CHECK_FALSE(info.seed.has_value());
}

TEST_CASE("bundle files round trip every field") {
  TempDir tmp("bundle");
  Scene scene = tiny_scene(5);
  BundleConfig cfg;
  cfg.classes = 3;
  cfg.seed = 99;
  cfg.block_size = 4;
  EndmemberBundle bundle = extract_bundles(scene.cube, cfg);
  std::string path = tmp.file("bundle.hsux");
  write_bundle(path, bundle);
  EndmemberBundle back = read_bundle(path);
  CHECK((back.signatures - bundle.signatures).cwiseAbs().maxCoeff() == 0.0);
  CHECK((back.labels - bundle.labels).cwiseAbs().maxCoeff() == 0.0);
  CHECK(back.source_pixel == bundle.source_pixel);
  CHECK(back.cluster_of == bundle.cluster_of);
  CHECK((back.cluster_means - bundle.cluster_means).cwiseAbs().maxCoeff() == 0.0);
  CHECK(back.cluster_class == bundle.cluster_class);
  CHECK((back.references - bundle.references).cwiseAbs().maxCoeff() == 0.0);

  DatasetInfo info = peek_dataset(path);
  CHECK(info.kind == "bundle");
  CHECK(info.count == bundle.count());
  CHECK(info.clusters == bundle.clusters());
  CHECK(info.classes == 3);
}

// ------------------------------------------------------------ error paths

TEST_CASE("readers reject malformed framing") {
  TempDir tmp("bad");
  std::string path = tmp.file("junk.hsux");

  spit(path, "not json at all\n\x01\x02\x03");
  CHECK_THROWS_AS(read_cube(path), IoError);

  spit(path, "{\"magic\":\"NOPE\",\"version\":1,\"kind\":\"cube\"}\n");
  CHECK_THROWS_AS(read_cube(path), IoError);
  CHECK_THROWS_AS(peek_dataset(path), IoError);

  spit(path, "{\"magic\":\"HSUX\",\"version\":2,\"kind\":\"cube\",\"dtype\":\"f64le\","
             "\"height\":2,\"width\":2,\"bands\":2}\n");
  CHECK_THROWS_AS(read_cube(path), IoError);

  spit(path, "");
  CHECK_THROWS_AS(read_cube(path), IoError);
  CHECK_THROWS_AS(read_cube(tmp.file("does_not_exist.hsux")), IoError);

  // negative extents in an otherwise valid header
  spit(path, "{\"magic\":\"HSUX\",\"version\":1,\"kind\":\"cube\",\"dtype\":\"f64le\","
             "\"height\":-2,\"width\":2,\"bands\":2}\n");
  CHECK_THROWS_AS(read_cube(path), IoError);
}

TEST_CASE("readers reject wrong kinds, truncation, and trailing bytes") {
  TempDir tmp("frame");
  Scene scene = tiny_scene(6);
  std::string path = tmp.file("cube.hsux");
  write_cube(path, scene.cube);

  CHECK_THROWS_AS(read_abundance(path), IoError);   // kind mismatch
  CHECK_THROWS_AS(read_endmembers(path), IoError);
  CHECK_THROWS_AS(read_bundle(path), IoError);

  std::string bytes = slurp(path);
  spit(path, bytes.substr(0, bytes.size() - 9));  // cut into the payload
  CHECK_THROWS_AS(read_cube(path), IoError);

  spit(path, bytes + "x");  // one byte too many
  CHECK_THROWS_AS(read_cube(path), IoError);

  spit(path, bytes);  // restored bytes read fine again
  CHECK_NOTHROW(read_cube(path));
}

TEST_CASE("bundle reader rejects non-integer bookkeeping values") {
  TempDir tmp("ints");
  Scene scene = tiny_scene(7);
  BundleConfig cfg;
  cfg.classes = 3;
  cfg.seed = 5;
  cfg.block_size = 4;
  EndmemberBundle bundle = extract_bundles(scene.cube, cfg);
  std::string path = tmp.file("bundle.hsux");
  write_bundle(path, bundle);

  std::string bytes = slurp(path);
  std::size_t header_end = bytes.find('\n') + 1;
  const int ne = bundle.count(), b = static_cast<int>(bundle.signatures.cols());
  const int c = bundle.classes();
  // first source_pixel entry sits right after the signature and label blocks
  std::size_t offset = header_end + sizeof(double) * static_cast<std::size_t>(ne * b + ne * c);
  double frac = 0.5;
  std::string patched = bytes;
  patched.replace(offset, sizeof(double), reinterpret_cast<const char*>(&frac), sizeof(double));
  spit(path, patched);
  CHECK_THROWS_AS(read_bundle(path), IoError);
}

// ----------------------------------------------------------------- exports

TEST_CASE("image export writes one grayscale map per class plus csv") {
  TempDir tmp("export");
  AbundanceMap map(2, 2, 2);
  // class 0: 0, 1, 0.5, 0.25 across the four pixels; class 1: complement
  double v0[] = {0.0, 1.0, 0.5, 0.25};
  for (int y = 0; y < 2; ++y) {
    for (int x = 0; x < 2; ++x) {
      map.data.at(y, x, 0) = v0[y * 2 + x];
      map.data.at(y, x, 1) = 1.0 - v0[y * 2 + x];
    }
  }
  export_abundance_images(map, tmp.file("imgdir"));

  std::string pgm = slurp(tmp.file("imgdir") + "/abundance_class0.pgm");
  const std::string header = "P5\n2 2\n255\n";
  REQUIRE(pgm.size() == header.size() + 4);
  CHECK(pgm.compare(0, header.size(), header) == 0);
  const unsigned char* px = reinterpret_cast<const unsigned char*>(pgm.data() + header.size());
  CHECK(px[0] == 0);    // 0.0
  CHECK(px[1] == 255);  // 1.0
  CHECK(px[2] == 128);  // round(0.5 * 255)
  CHECK(px[3] == 64);   // round(0.25 * 255)

  // csv holds full-precision values that parse back exactly
  std::ifstream csv(tmp.file("imgdir") + "/abundance.csv");
  std::string line;
  REQUIRE(std::getline(csv, line));
  CHECK(line == "row,col,class_0,class_1");
  int rows = 0;
  while (std::getline(csv, line)) {
    std::istringstream ls(line);
    std::string cell;
    std::getline(ls, cell, ',');
    int y = std::stoi(cell);
    std::getline(ls, cell, ',');
    int x = std::stoi(cell);
    std::getline(ls, cell, ',');
    CHECK(std::strtod(cell.c_str(), nullptr) == map.data.at(y, x, 0));
    std::getline(ls, cell, ',');
    CHECK(std::strtod(cell.c_str(), nullptr) == map.data.at(y, x, 1));
    ++rows;
  }
  CHECK(rows == 4);
}

TEST_CASE("image export clamps out-of-range values") {
  TempDir tmp("clamp");
  AbundanceMap map(1, 2, 1);
  map.data.at(0, 0, 0) = -0.5;
  map.data.at(0, 1, 0) = 1.5;
  export_abundance_images(map, tmp.file("imgdir"));
  std::string pgm = slurp(tmp.file("imgdir") + "/abundance_class0.pgm");
  const std::string header = "P5\n2 1\n255\n";
  REQUIRE(pgm.size() == header.size() + 2);
  const unsigned char* px = reinterpret_cast<const unsigned char*>(pgm.data() + header.size());
  CHECK(px[0] == 0);
  CHECK(px[1] == 255);
}

}  // TEST_SUITE
