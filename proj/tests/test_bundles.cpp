#include <doctest.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "egunet/bundles.hpp"
#include "egunet/errors.hpp"
#include "egunet/rng.hpp"
#include "egunet/types.hpp"
#include "helpers.hpp"

using namespace egu;

namespace {

// Smooth, well separated spectra: shifted Gaussian bumps over the band axis.
Eigen::MatrixXd bump_spectra(int classes, int bands) {
  Eigen::MatrixXd s(classes, bands);
  for (int c = 0; c < classes; ++c) {
    double center = (c + 0.5) * bands / static_cast<double>(classes);
    double width = bands / (2.5 * classes);
    for (int b = 0; b < bands; ++b) {
      double z = (b - center) / width;
      s(c, b) = 0.1 + std::exp(-0.5 * z * z);
    }
  }
  return s;
}

// Striped pure-pixel cube: each column stripe holds one material, scaled by a
// per-pixel brightness factor, plus optional white noise.
HsiCube striped_cube(int h, int w, const Eigen::MatrixXd& spectra, Rng& rng,
                     double noise_sigma = 0.0) {
  const int classes = static_cast<int>(spectra.rows());
  const int bands = static_cast<int>(spectra.cols());
  HsiCube cube(h, w, bands);
  int stripe = w / classes;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      int c = std::min(classes - 1, x / stripe);
      double s = uniform(rng, 0.8, 1.2);
      for (int b = 0; b < bands; ++b) {
        cube.data.at(y, x, b) = s * spectra(c, b) + (noise_sigma > 0.0 ? normal(rng, 0.0, noise_sigma) : 0.0);
      }
    }
  }
  return cube;
}

}  // namespace

TEST_SUITE("bundles") {

// ---------------------------------------------------------------- partition

TEST_CASE("partition covers the image and appends a tail window") {
  auto blocks = partition_blocks(100, 100, 50, 10);
  // starts per axis with step 40: 0, 40, then a tail at 50 to reach the edge
  CHECK(blocks.size() == 9);
  std::vector<std::vector<char>> hit(100, std::vector<char>(100, 0));
  for (const auto& b : blocks) {
    CHECK(b.height == 50);
    CHECK(b.width == 50);
    CHECK(b.row >= 0);
    CHECK(b.col >= 0);
    CHECK(b.row + b.height <= 100);
    CHECK(b.col + b.width <= 100);
    for (int r = b.row; r < b.row + b.height; ++r) {
      for (int c = b.col; c < b.col + b.width; ++c) hit[r][c] = 1;
    }
  }
  for (int r = 0; r < 100; ++r) {
    for (int c = 0; c < 100; ++c) CHECK(hit[r][c] == 1);
  }
}

TEST_CASE("partition tiles exactly when the stride divides the extent") {
  auto blocks = partition_blocks(100, 60, 20, 0);
  CHECK(blocks.size() == 5 * 3);
  // no duplicate windows in the exact-tiling case
  std::set<std::pair<int, int>> origins;
  for (const auto& b : blocks) origins.insert({b.row, b.col});
  CHECK(origins.size() == blocks.size());
}

TEST_CASE("partition handles a block equal to the whole image") {
  auto blocks = partition_blocks(30, 30, 30, 0);
  CHECK(blocks.size() == 1);
  CHECK(blocks[0].row == 0);
  CHECK(blocks[0].col == 0);
}

TEST_CASE("partition rejects bad geometry") {
  CHECK_THROWS_AS(partition_blocks(0, 10, 5, 0), DimError);
  CHECK_THROWS_AS(partition_blocks(10, 10, 0, 0), ConfigError);
  CHECK_THROWS_AS(partition_blocks(10, 10, 11, 0), ConfigError);
  CHECK_THROWS_AS(partition_blocks(10, 10, 5, 5), ConfigError);
  CHECK_THROWS_AS(partition_blocks(10, 10, 5, -1), ConfigError);
}

// ------------------------------------------------------------- noise model

TEST_CASE("noise estimate recovers the white-noise scale on low-rank data") {
  Rng rng = make_rng(21, "t/noise");
  const int n = 600, b = 40, c = 3;
  Eigen::MatrixXd s = bump_spectra(c, b);
  Eigen::MatrixXd a(n, c);
  for (int i = 0; i < n; ++i) {
    double t1 = uniform(rng, 0.0, 1.0), t2 = uniform(rng, 0.0, 1.0);
    if (t1 > t2) std::swap(t1, t2);
    a(i, 0) = t1;
    a(i, 1) = t2 - t1;
    a(i, 2) = 1.0 - t2;
  }
  const double sigma = 5e-3;
  Eigen::MatrixXd x = a * s;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < b; ++j) x(i, j) += normal(rng, 0.0, sigma);
  }
  bool ridged = true;
  Eigen::MatrixXd w = estimate_noise(x, &ridged);
  CHECK_FALSE(ridged);
  CHECK(w.rows() == n);
  CHECK(w.cols() == b);
  double est_sigma = std::sqrt(w.squaredNorm() / static_cast<double>(n * b));
  CHECK(est_sigma == doctest::Approx(sigma).epsilon(0.5));  // right order of magnitude
}

TEST_CASE("noise estimate flags near-singular band correlations") {
  Rng rng = make_rng(22, "t/noise");
  const int n = 30, b = 10;
  Eigen::MatrixXd x(n, b);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < b; ++j) x(i, j) = uniform(rng, 0.0, 1.0);
  }
  x.col(b - 1) = x.col(0);  // duplicated band
  bool ridged = false;
  Eigen::MatrixXd w = estimate_noise(x, &ridged);
  CHECK(ridged);
  CHECK(w.allFinite());
  CHECK_THROWS_AS(estimate_noise(Eigen::MatrixXd::Zero(1, 5)), DimError);
}

TEST_CASE("subspace dimension counter finds three materials at high snr") {
  Rng rng = make_rng(23, "t/hysime");
  const int n = 900, b = 50, c = 3;
  Eigen::MatrixXd s = bump_spectra(c, b);
  Eigen::MatrixXd a(n, c);
  for (int i = 0; i < n; ++i) {
    double t1 = uniform(rng, 0.0, 1.0), t2 = uniform(rng, 0.0, 1.0);
    if (t1 > t2) std::swap(t1, t2);
    a(i, 0) = t1;
    a(i, 1) = t2 - t1;
    a(i, 2) = 1.0 - t2;
  }
  Eigen::MatrixXd x = a * s;
  // white noise at 40 dB relative to the mean signal power
  double p_signal = x.squaredNorm() / static_cast<double>(n * b);
  double sigma = std::sqrt(p_signal * 1e-4);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < b; ++j) x(i, j) += normal(rng, 0.0, sigma);
  }
  HysimeResult res = hysime(x);
  CHECK(res.dimension >= 2);
  CHECK(res.dimension <= 4);
  CHECK(res.deltas.size() == static_cast<std::size_t>(b));
  // deltas are reported in descending signal strength; the leaders are positive
  CHECK(res.deltas[0] > 0.0);
  CHECK(res.deltas[1] > 0.0);
}

TEST_CASE("subspace counter accepts an explicit noise matrix") {
  Rng rng = make_rng(24, "t/hysime");
  const int n = 200, b = 20;
  Eigen::MatrixXd x(n, b), w(n, b);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < b; ++j) {
      w(i, j) = normal(rng, 0.0, 1e-3);
      x(i, j) = uniform(rng, 0.0, 1.0) + w(i, j);
    }
  }
  HysimeResult res = hysime(x, w);
  CHECK(res.dimension >= 1);
  CHECK_THROWS_AS(hysime(x, Eigen::MatrixXd::Zero(n, b - 1)), DimError);
}

// --------------------------------------------------------------------- vca

TEST_CASE("vertex picks recover planted pure pixels") {
  Rng data_rng = make_rng(25, "t/vca");
  const int n = 200, b = 30, c = 4;
  Eigen::MatrixXd s = bump_spectra(c, b);
  std::vector<int> planted = {3, 57, 101, 166};
  Eigen::MatrixXd x(n, b);
  for (int i = 0; i < n; ++i) {
    // strictly interior mixtures everywhere except the planted vertices
    Eigen::VectorXd a(c);
    double sum = 0.0;
    for (int j = 0; j < c; ++j) {
      a[j] = uniform(data_rng, 0.1, 1.0);
      sum += a[j];
    }
    x.row(i) = (a / sum).transpose() * s;
  }
  for (int j = 0; j < c; ++j) x.row(planted[static_cast<std::size_t>(j)]) = s.row(j);

  for (int trial = 0; trial < 5; ++trial) {
    Rng rng = make_rng(26 + trial, "t/vca");
    std::vector<int> picks = vca(x, c, rng);
    CHECK(picks.size() == static_cast<std::size_t>(c));
    std::set<int> got(picks.begin(), picks.end());
    std::set<int> want(planted.begin(), planted.end());
    CHECK(got == want);
  }
}

TEST_CASE("vertex pick with count one is the brightest pixel") {
  Rng rng = make_rng(27, "t/vca");
  Eigen::MatrixXd x(50, 10);
  for (int i = 0; i < 50; ++i) {
    for (int j = 0; j < 10; ++j) x(i, j) = uniform(rng, 0.0, 1.0);
  }
  x.row(31) *= 10.0;  // unambiguous winner
  std::vector<int> picks = vca(x, 1, rng);
  REQUIRE(picks.size() == 1);
  CHECK(picks[0] == 31);
}

TEST_CASE("vertex analysis rejects degenerate inputs") {
  Rng rng = make_rng(28, "t/vca");
  Eigen::MatrixXd flat = Eigen::MatrixXd::Ones(20, 8);  // rank 1, no spread
  CHECK_THROWS_AS(vca(flat, 3, rng), NumericError);
  Eigen::MatrixXd x(4, 3);
  x.setRandom();
  CHECK_THROWS_AS(vca(x, 4, rng), DimError);   // count > min(n, b)
  CHECK_THROWS_AS(vca(x, 0, rng), ConfigError);
}

TEST_CASE("vertex picks are reproducible for a fixed stream") {
  Rng data_rng = make_rng(29, "t/vca");
  Eigen::MatrixXd x(80, 12);
  for (int i = 0; i < 80; ++i) {
    for (int j = 0; j < 12; ++j) x(i, j) = uniform(data_rng, 0.0, 1.0);
  }
  Rng r1 = make_rng(30, "t/vca");
  Rng r2 = make_rng(30, "t/vca");
  CHECK(vca(x, 3, r1) == vca(x, 3, r2));
}

// ------------------------------------------------------------------ kmeans

TEST_CASE("kmeans separates well-spread blobs") {
  Rng rng = make_rng(31, "t/kmeans");
  const int per = 40;
  Eigen::MatrixXd pts(3 * per, 2);
  double centers[3][2] = {{0.0, 0.0}, {10.0, 0.0}, {0.0, 10.0}};
  for (int c = 0; c < 3; ++c) {
    for (int i = 0; i < per; ++i) {
      pts(c * per + i, 0) = centers[c][0] + normal(rng, 0.0, 0.3);
      pts(c * per + i, 1) = centers[c][1] + normal(rng, 0.0, 0.3);
    }
  }
  KmeansResult res = kmeans(pts, 3, rng);
  REQUIRE(res.centers.rows() == 3);
  // every blob maps to exactly one cluster
  for (int c = 0; c < 3; ++c) {
    int first = res.assignment[static_cast<std::size_t>(c * per)];
    for (int i = 1; i < per; ++i) {
      CHECK(res.assignment[static_cast<std::size_t>(c * per + i)] == first);
    }
  }
  // converged: each point sits with its nearest center, centers are means
  for (Eigen::Index i = 0; i < pts.rows(); ++i) {
    int a = res.assignment[static_cast<std::size_t>(i)];
    double da = (pts.row(i) - res.centers.row(a)).squaredNorm();
    for (int c = 0; c < 3; ++c) {
      CHECK(da <= (pts.row(i) - res.centers.row(c)).squaredNorm() + 1e-12);
    }
  }
  double inertia = 0.0;
  for (Eigen::Index i = 0; i < pts.rows(); ++i) {
    inertia += (pts.row(i) - res.centers.row(res.assignment[static_cast<std::size_t>(i)])).squaredNorm();
  }
  CHECK(res.inertia == doctest::Approx(inertia).epsilon(1e-12));
}

TEST_CASE("kmeans with k equal to point count gives singleton clusters") {
  Rng rng = make_rng(32, "t/kmeans");
  Eigen::MatrixXd pts(6, 3);
  pts.setRandom();
  KmeansResult res = kmeans(pts, 6, rng);
  CHECK(res.inertia == doctest::Approx(0.0).epsilon(1e-12));
  std::set<int> used(res.assignment.begin(), res.assignment.end());
  CHECK(used.size() == 6);  // no empty cluster survives
}

TEST_CASE("kmeans is deterministic for a fixed stream") {
  Rng data_rng = make_rng(33, "t/kmeans");
  Eigen::MatrixXd pts(60, 4);
  for (int i = 0; i < 60; ++i) {
    for (int j = 0; j < 4; ++j) pts(i, j) = uniform(data_rng, 0.0, 1.0);
  }
  Rng r1 = make_rng(34, "t/kmeans");
  Rng r2 = make_rng(34, "t/kmeans");
  KmeansResult a = kmeans(pts, 8, r1);
  KmeansResult b = kmeans(pts, 8, r2);
  CHECK(a.assignment == b.assignment);
  CHECK((a.centers - b.centers).cwiseAbs().maxCoeff() == 0.0);
  CHECK(a.inertia == b.inertia);
}

TEST_CASE("kmeans validates its arguments") {
  Rng rng = make_rng(35, "t/kmeans");
  Eigen::MatrixXd pts(5, 2);
  pts.setRandom();
  CHECK_THROWS_AS(kmeans(pts, 0, rng), ConfigError);
  CHECK_THROWS_AS(kmeans(pts, 6, rng), DimError);
  CHECK_THROWS_AS(kmeans(pts, 2, rng, 0), ConfigError);
}

// ----------------------------------------------------------------- labels

TEST_CASE("soft labels of the references themselves are one-hot") {
  Eigen::MatrixXd refs = bump_spectra(3, 25);
  Eigen::MatrixXd labels = label_bundles(refs, refs);
  REQUIRE(labels.rows() == 3);
  REQUIRE(labels.cols() == 3);
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      CHECK(labels(i, j) == doctest::Approx(i == j ? 1.0 : 0.0).epsilon(1e-6));
    }
  }
}

TEST_CASE("soft labels land on the simplex for arbitrary spectra") {
  Rng rng = make_rng(36, "t/labels");
  Eigen::MatrixXd refs = bump_spectra(4, 30);
  Eigen::MatrixXd sigs(25, 30);
  for (int i = 0; i < 25; ++i) {
    for (int j = 0; j < 30; ++j) sigs(i, j) = uniform(rng, 0.0, 1.5);
  }
  Eigen::MatrixXd labels = label_bundles(sigs, refs);
  for (int i = 0; i < 25; ++i) {
    CHECK(labels.row(i).minCoeff() >= -1e-12);
    CHECK(std::abs(labels.row(i).sum() - 1.0) <= 1e-6);
  }
  CHECK_THROWS_AS(label_bundles(sigs, bump_spectra(4, 29)), DimError);
}

TEST_CASE("mixtures of two references get matching soft labels") {
  Eigen::MatrixXd refs = bump_spectra(3, 40);
  Eigen::MatrixXd sig(1, 40);
  sig.row(0) = 0.3 * refs.row(0) + 0.7 * refs.row(2);
  Eigen::MatrixXd labels = label_bundles(sig, refs);
  CHECK(labels(0, 0) == doctest::Approx(0.3).epsilon(1e-6));
  CHECK(labels(0, 1) == doctest::Approx(0.0).epsilon(1e-6));
  CHECK(labels(0, 2) == doctest::Approx(0.7).epsilon(1e-6));
}

// --------------------------------------------------------------- pipeline

TEST_CASE("bundle extraction on a striped pure-pixel scene") {
  Rng rng = make_rng(37, "t/extract");
  Eigen::MatrixXd spectra = bump_spectra(3, 20);
  HsiCube cube = striped_cube(30, 30, spectra, rng, 1e-4);

  BundleConfig cfg;
  cfg.classes = 3;
  cfg.seed = 91;
  EndmemberBundle bundle = extract_bundles(cube, cfg);
  CHECK_NOTHROW(bundle.validate());
  CHECK(bundle.classes() == 3);
  CHECK(bundle.count() >= 3);
  CHECK(bundle.clusters() >= 3);
  CHECK(bundle.clusters() <= bundle.count());

  // every signature is an actual observed pixel, traced by source index
  ConstMatView x = static_cast<const HsiCube&>(cube).pixel_mat();
  for (int i = 0; i < bundle.count(); ++i) {
    int p = bundle.source_pixel[static_cast<std::size_t>(i)];
    REQUIRE(p >= 0);
    REQUIRE(p < cube.pixels());
    CHECK((bundle.signatures.row(i) - x.row(p)).cwiseAbs().maxCoeff() == 0.0);
  }
  // source pixels are unique after deduplication
  std::set<int> sources(bundle.source_pixel.begin(), bundle.source_pixel.end());
  CHECK(sources.size() == static_cast<std::size_t>(bundle.count()));

  // every cluster mean points at one of the true materials
  for (int c = 0; c < bundle.clusters(); ++c) {
    double best = 1e9;
    for (int j = 0; j < 3; ++j) {
      best = std::min(best, test_ref::sad(bundle.cluster_means.row(c).transpose(),
                                          spectra.row(j).transpose()));
    }
    CHECK(best < 0.1);
  }
  // the references match the true materials closely on a pure scene
  for (int j = 0; j < 3; ++j) {
    double best = 1e9;
    for (int r = 0; r < 3; ++r) {
      best = std::min(best, test_ref::sad(bundle.references.row(r).transpose(),
                                          spectra.row(j).transpose()));
    }
    CHECK(best < 1e-3);
  }
}

TEST_CASE("bundle extraction is deterministic for a fixed seed") {
  Rng rng = make_rng(38, "t/extract");
  HsiCube cube = striped_cube(24, 24, bump_spectra(3, 16), rng, 1e-3);
  BundleConfig cfg;
  cfg.classes = 3;
  cfg.seed = 4242;
  EndmemberBundle a = extract_bundles(cube, cfg);
  EndmemberBundle b = extract_bundles(cube, cfg);
  CHECK((a.signatures - b.signatures).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.labels - b.labels).cwiseAbs().maxCoeff() == 0.0);
  CHECK(a.source_pixel == b.source_pixel);
  CHECK(a.cluster_of == b.cluster_of);
  CHECK(a.cluster_class == b.cluster_class);
}

TEST_CASE("bundle extraction estimates the class count when unset") {
  Rng rng = make_rng(39, "t/extract");
  HsiCube cube = striped_cube(30, 30, bump_spectra(3, 20), rng, 2e-3);
  BundleConfig cfg;  // classes = 0: estimate from the whole image
  cfg.seed = 7;
  EndmemberBundle bundle = extract_bundles(cube, cfg);
  CHECK(bundle.classes() >= 2);
  CHECK(bundle.classes() <= 4);
}

TEST_CASE("bundle extraction honors explicit cluster counts") {
  Rng rng = make_rng(40, "t/extract");
  HsiCube cube = striped_cube(24, 24, bump_spectra(3, 16), rng, 1e-3);
  BundleConfig cfg;
  cfg.classes = 3;
  cfg.clusters = 4;
  cfg.seed = 11;
  EndmemberBundle bundle = extract_bundles(cube, cfg);
  CHECK(bundle.clusters() == std::min(4, bundle.count()));
  for (int c : bundle.cluster_class) {
    CHECK(c >= 0);
    CHECK(c < 3);
  }
}

TEST_CASE("bundle extraction rejects bad block geometry") {
  Rng rng = make_rng(41, "t/extract");
  HsiCube cube = striped_cube(12, 12, bump_spectra(3, 10), rng, 1e-3);
  BundleConfig cfg;
  cfg.block_size = 13;
  CHECK_THROWS_AS(extract_bundles(cube, cfg), ConfigError);
  cfg = BundleConfig{};
  cfg.block_size = 6;
  cfg.overlap = 6;
  CHECK_THROWS_AS(extract_bundles(cube, cfg), ConfigError);
  cfg = BundleConfig{};
  cfg.asc_weight = 0.0;
  CHECK_THROWS_AS(extract_bundles(cube, cfg), ConfigError);
}

}  // TEST_SUITE
