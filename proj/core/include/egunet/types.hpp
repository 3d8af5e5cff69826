#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "egunet/tensor.hpp"

namespace egu {

// Hyperspectral image cube, stored [height, width, bands] with the band axis
// fastest (pixel-major, band-interleaved).  Flattening the spatial axes gives
// an N x B matrix whose rows are pixel spectra.
struct HsiCube {
  int height = 0;
  int width = 0;
  int bands = 0;
  std::vector<double> wavelengths;  // optional, size == bands when present
  Tensor data;                      // [height, width, bands]

  HsiCube() = default;
  HsiCube(int h, int w, int b);

  int pixels() const { return height * width; }
  MatView pixel_mat() { return MatView(data.data(), pixels(), bands); }
  ConstMatView pixel_mat() const { return ConstMatView(data.data(), pixels(), bands); }

  void validate() const;
};

// Per-pixel abundance fractions, [height, width, classes].  Rows live on the
// probability simplex: nonnegative and summing to one within 1e-6.
struct AbundanceMap {
  int height = 0;
  int width = 0;
  int classes = 0;
  Tensor data;  // [height, width, classes]

  AbundanceMap() = default;
  AbundanceMap(int h, int w, int c);

  int pixels() const { return height * width; }
  MatView pixel_mat() { return MatView(data.data(), pixels(), classes); }
  ConstMatView pixel_mat() const { return ConstMatView(data.data(), pixels(), classes); }

  void validate(double tol = 1e-6) const;
};

// One spectrum per class, stored bands x classes so a column is a signature.
struct EndmemberMatrix {
  int bands = 0;
  int classes = 0;
  Eigen::MatrixXd m;  // bands x classes

  EndmemberMatrix() = default;
  EndmemberMatrix(int b, int c) : bands(b), classes(c), m(Eigen::MatrixXd::Zero(b, c)) {}
  explicit EndmemberMatrix(Eigen::MatrixXd mat)
      : bands(static_cast<int>(mat.rows())), classes(static_cast<int>(mat.cols())),
        m(std::move(mat)) {}

  void validate() const;  // nonnegative entries, no all-zero column
};

}  // namespace egu
