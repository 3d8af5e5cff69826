#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "egunet/types.hpp"

namespace egu {

// Synthetic scene model: smooth random spectra with absorption dips, spatially
// correlated abundance fields pushed through a softmax, planted pure pixels,
// a smooth per-pixel brightness field, then optional Gaussian noise at a
// target SNR and optional saturated impulse entries.
struct SceneSpec {
  int height = 50;
  int width = 50;
  int bands = 100;
  int classes = 4;

  double softmax_temp = 0.5;  // lower temperature sharpens the mixtures
  double field_sigma = 8.0;   // spatial correlation length of the class fields
  int pure_per_class = 10;    // exact one-hot pixels planted per class

  double scale_min = 1.0;     // per-pixel brightness multiplier range;
  double scale_max = 1.0;     // equal bounds disable the variability field
  double scale_sigma = 10.0;

  double snr_db = 0.0;              // additive Gaussian noise target; 0 disables
  double impulse_fraction = 0.005;  // fraction of cube entries forced to 1.0

  int absorptions_min = 2;
  int absorptions_max = 4;
  double min_separation = 0.1;  // pairwise spectral angle floor between classes

  void validate() const;
};

struct Scene {
  HsiCube cube;
  AbundanceMap abundance;     // ground truth
  EndmemberMatrix endmembers;  // ground truth, bands x classes
};

// Deterministic: the same spec and seed reproduce the scene bit for bit.
Scene generate_scene(const SceneSpec& spec, std::uint64_t seed);

// Separable Gaussian blur with circular boundary handling, kernel truncated
// at two sigma.  Preserves the field mean exactly for constant fields.
void gaussian_blur_field(Eigen::MatrixXd& field, double sigma);

// Band-wise Gaussian blur (sigma = factor / 2) followed by decimation by
// `factor` along both spatial axes.  Extents must divide evenly.
HsiCube gaussian_downsample(const HsiCube& cube, int factor);

// Aggregates a fine class-label map into coarse abundance fractions: each
// low-resolution pixel holds the share of its factor x factor block carrying
// each label.  Labels run 0..classes-1; classes == 0 infers the count.
AbundanceMap classmap_to_abundance(const std::vector<int>& labels, int map_h, int map_w,
                                   int factor, int classes = 0);

// Mean spectrum over the pixels whose abundance reaches `purity` for each
// class; classes with no such pixel are reported in one error.
EndmemberMatrix reference_endmembers_from_pure(const HsiCube& cube, const AbundanceMap& abundance,
                                               double purity = 1.0);

}  // namespace egu
