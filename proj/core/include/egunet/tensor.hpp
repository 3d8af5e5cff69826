#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

namespace egu {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatView = Eigen::Map<RowMat>;
using ConstMatView = Eigen::Map<const RowMat>;
using VecView = Eigen::Map<Eigen::VectorXd>;
using ConstVecView = Eigen::Map<const Eigen::VectorXd>;

// Dense row-major tensor of doubles.  Rank 2 tensors are [rows, cols]; rank 4
// tensors are [batch, height, width, channels].  All layer math runs in 64-bit
// floats so finite-difference checks have headroom.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape);
  Tensor(std::vector<int> shape, std::vector<double> data);

  static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }
  static Tensor full(std::vector<int> shape, double value);

  const std::vector<int>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
  std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& storage() { return data_; }
  const std::vector<double>& storage() const { return data_; }

  double& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
  double operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

  // Rank-2 accessor.
  double& at(int r, int c) { return data_[static_cast<std::size_t>(r) * shape_[1] + c]; }
  double at(int r, int c) const { return data_[static_cast<std::size_t>(r) * shape_[1] + c]; }

  // Rank-3 accessor, [h, w, c] layout.
  double& at(int h, int w, int c) {
    return data_[(static_cast<std::size_t>(h) * shape_[1] + w) * shape_[2] + c];
  }
  double at(int h, int w, int c) const {
    return data_[(static_cast<std::size_t>(h) * shape_[1] + w) * shape_[2] + c];
  }

  // Rank-4 accessor, [n, h, w, c] layout.
  double& at(int n, int h, int w, int c);
  double at(int n, int h, int w, int c) const;

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  // Returns a copy with a new shape of equal element count.
  Tensor reshaped(std::vector<int> shape) const;

  void fill(double value);
  void check_finite(const char* where) const;  // throws NumericError on NaN or Inf

  // Rank-2 Eigen view.
  MatView mat();
  ConstMatView mat() const;

  // Views the tensor as a matrix of [size / last_dim, last_dim]; this is the
  // natural flattening for per-feature work on rank-4 activations.
  MatView last_dim_mat();
  ConstMatView last_dim_mat() const;

  VecView vec() { return VecView(data_.data(), size()); }
  ConstVecView vec() const { return ConstVecView(data_.data(), size()); }

 private:
  std::vector<int> shape_;
  std::vector<double> data_;
};

std::int64_t shape_count(const std::vector<int>& shape);
std::string shape_str(const std::vector<int>& shape);

}  // namespace egu
