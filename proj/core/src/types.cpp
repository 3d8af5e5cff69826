#include "egunet/types.hpp"

#include <cmath>
#include <string>

#include "egunet/errors.hpp"

namespace egu {

HsiCube::HsiCube(int h, int w, int b) : height(h), width(w), bands(b), data({h, w, b}) {}

void HsiCube::validate() const {
  if (height < 1 || width < 1) throw DimError("cube: spatial extents must be positive");
  if (bands < 2) throw DimError("cube: need at least two bands, got " + std::to_string(bands));
  if (data.rank() != 3 || data.dim(0) != height || data.dim(1) != width || data.dim(2) != bands) {
    throw DimError("cube: data shape " + shape_str(data.shape()) + " does not match header");
  }
  data.check_finite("cube");
  if (!wavelengths.empty()) {
    if (static_cast<int>(wavelengths.size()) != bands) {
      throw DimError("cube: wavelength list length does not match band count");
    }
    for (std::size_t i = 1; i < wavelengths.size(); ++i) {
      if (!(wavelengths[i] > wavelengths[i - 1])) {
        throw ConfigError("cube: wavelengths must increase strictly");
      }
    }
  }
}

AbundanceMap::AbundanceMap(int h, int w, int c) : height(h), width(w), classes(c), data({h, w, c}) {}

void AbundanceMap::validate(double tol) const {
  if (height < 1 || width < 1 || classes < 1) {
    throw DimError("abundance: extents must be positive");
  }
  if (data.rank() != 3 || data.dim(0) != height || data.dim(1) != width ||
      data.dim(2) != classes) {
    throw DimError("abundance: data shape " + shape_str(data.shape()) + " does not match header");
  }
  data.check_finite("abundance");
  ConstMatView rows = pixel_mat();
  for (std::int64_t i = 0; i < rows.rows(); ++i) {
    if (rows.row(i).minCoeff() < -1e-12) {
      throw NumericError("abundance: negative fraction at pixel " + std::to_string(i));
    }
    double s = rows.row(i).sum();
    if (std::abs(s - 1.0) > tol) {
      throw NumericError("abundance: pixel " + std::to_string(i) + " sums to " +
                         std::to_string(s));
    }
  }
}

void EndmemberMatrix::validate() const {
  if (bands < 2 || classes < 1) throw DimError("endmembers: need >= 2 bands and >= 1 class");
  if (m.rows() != bands || m.cols() != classes) {
    throw DimError("endmembers: matrix shape does not match header");
  }
  if (!m.allFinite()) throw NumericError("endmembers: non-finite entry");
  if (m.minCoeff() < 0.0) throw NumericError("endmembers: negative reflectance entry");
  for (int c = 0; c < classes; ++c) {
    if (m.col(c).maxCoeff() <= 0.0) {
      throw NumericError("endmembers: class " + std::to_string(c) + " is all zero");
    }
  }
}

}  // namespace egu
