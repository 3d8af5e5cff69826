#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "egunet/rng.hpp"
#include "egunet/types.hpp"

namespace egu {

// Square windows tiling the image with a fixed stride.  Starts step by
// (block_size - overlap); a final start is appended per axis when the last
// regular window does not reach the image edge, so every pixel is covered.
struct BlockWindow {
  int row = 0, col = 0, height = 0, width = 0;
};
std::vector<BlockWindow> partition_blocks(int image_h, int image_w, int block_size, int overlap);

// Band-wise noise estimate: each band is regressed on all others through the
// inverse correlation matrix and the residual is taken as noise (the
// multiple-regression estimator of Bioucas-Dias & Nascimento 2008).  Returns
// an N x B residual matrix; *ridged reports whether the correlation matrix
// needed a 1e-10 ridge.
Eigen::MatrixXd estimate_noise(const Eigen::MatrixXd& pixels, bool* ridged = nullptr);

struct HysimeResult {
  int dimension = 0;              // estimated signal subspace size
  std::vector<double> deltas;     // per-eigenvector signal-minus-noise power split
  bool ridged = false;
};

// Signal subspace identification: counts eigenvectors of the signal
// correlation matrix along which signal power exceeds twice the noise power.
HysimeResult hysime(const Eigen::MatrixXd& pixels);
HysimeResult hysime(const Eigen::MatrixXd& pixels, const Eigen::MatrixXd& noise);

// Vertex component analysis (Nascimento & Bioucas-Dias 2005): projects onto
// an SNR-dependent subspace and iteratively picks the pixel most orthogonal
// to the simplex spanned so far.  Returns row indices into `pixels`, so the
// extracted signatures are actual observed spectra.
std::vector<int> vca(const Eigen::MatrixXd& pixels, int count, Rng& rng);

struct KmeansResult {
  Eigen::MatrixXd centers;      // k x dims
  std::vector<int> assignment;  // per point
  double inertia = 0.0;
  int iterations = 0;
};

// Lloyd iterations with k-means++ seeding; a cluster that empties is
// reseeded from the point farthest from its center.
KmeansResult kmeans(const Eigen::MatrixXd& points, int k, Rng& rng, int max_iter = 100);

struct BundleConfig {
  int block_size = 0;   // 0: round(0.4 * min(H, W))
  int overlap = -1;     // <0: block_size / 4
  int classes = 0;      // 0: estimate on the whole image
  int clusters = 0;     // 0: min(round(0.2 * pixel count), candidates), at least classes
  double asc_weight = 1e3;
  int kmeans_max_iter = 100;
  std::uint64_t seed = 0;
};

// A library of candidate pure spectra harvested across image blocks, with
// soft class labels and cluster bookkeeping.
struct EndmemberBundle {
  Eigen::MatrixXd signatures;      // N_e x B, rows are observed pixel spectra
  Eigen::MatrixXd labels;          // N_e x C, simplex rows (soft class memberships)
  std::vector<int> source_pixel;   // N_e, flat pixel index each signature came from
  std::vector<int> cluster_of;     // N_e
  Eigen::MatrixXd cluster_means;   // K x B
  std::vector<int> cluster_class;  // K, nearest class per cluster by spectral angle
  Eigen::MatrixXd references;      // C x B, the whole-image vertex picks

  int count() const { return static_cast<int>(signatures.rows()); }
  int classes() const { return static_cast<int>(labels.cols()); }
  int clusters() const { return static_cast<int>(cluster_means.rows()); }

  void validate() const;
};

// Harvests candidate endmembers per block (subspace size per block, vertex
// picks inside the block), pools and deduplicates them, clusters the pool,
// and labels every candidate against the whole-image vertex picks with a
// fully constrained solve.
EndmemberBundle extract_bundles(const HsiCube& cube, const BundleConfig& cfg);

// Soft class labels for a set of spectra: fully constrained abundances
// against the reference signatures (references is C x B).
Eigen::MatrixXd label_bundles(const Eigen::MatrixXd& signatures, const Eigen::MatrixXd& references,
                              double asc_weight = 1e3);

}  // namespace egu
