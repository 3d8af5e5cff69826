#include "egunet/tensor.hpp"

#include <cmath>
#include <sstream>
#include <string>

#include "egunet/errors.hpp"

namespace egu {

std::int64_t shape_count(const std::vector<int>& shape) {
  std::int64_t n = 1;
  for (int d : shape) {
    if (d < 1) throw DimError("tensor shape has non-positive extent " + std::to_string(d));
    n *= d;
  }
  return n;
}

std::string shape_str(const std::vector<int>& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ",";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

Tensor::Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
  data_.assign(static_cast<std::size_t>(shape_count(shape_)), 0.0);
}

Tensor::Tensor(std::vector<int> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_count(shape_) != static_cast<std::int64_t>(data_.size())) {
    throw DimError("tensor data length " + std::to_string(data_.size()) +
                   " does not match shape " + shape_str(shape_));
  }
}

Tensor Tensor::full(std::vector<int> shape, double value) {
  Tensor t(std::move(shape));
  t.fill(value);
  return t;
}

double& Tensor::at(int n, int h, int w, int c) {
  std::size_t i = ((static_cast<std::size_t>(n) * shape_[1] + h) * shape_[2] + w) * shape_[3] + c;
  return data_[i];
}

double Tensor::at(int n, int h, int w, int c) const {
  std::size_t i = ((static_cast<std::size_t>(n) * shape_[1] + h) * shape_[2] + w) * shape_[3] + c;
  return data_[i];
}

Tensor Tensor::reshaped(std::vector<int> shape) const {
  if (shape_count(shape) != size()) {
    throw DimError("reshape from " + shape_str(shape_) + " to " + shape_str(shape) +
                   " changes element count");
  }
  return Tensor(std::move(shape), data_);
}

void Tensor::fill(double value) {
  for (double& v : data_) v = value;
}

void Tensor::check_finite(const char* where) const {
  for (double v : data_) {
    if (!std::isfinite(v)) {
      throw NumericError(std::string(where) + ": tensor contains a non-finite value");
    }
  }
}

MatView Tensor::mat() {
  if (rank() != 2) throw DimError("mat() on tensor of shape " + shape_str(shape_));
  return MatView(data_.data(), shape_[0], shape_[1]);
}

ConstMatView Tensor::mat() const {
  if (rank() != 2) throw DimError("mat() on tensor of shape " + shape_str(shape_));
  return ConstMatView(data_.data(), shape_[0], shape_[1]);
}

MatView Tensor::last_dim_mat() {
  if (rank() < 1) throw DimError("last_dim_mat() on rank-0 tensor");
  int last = shape_.back();
  std::int64_t rows = last > 0 ? size() / last : 0;
  return MatView(data_.data(), rows, last);
}

ConstMatView Tensor::last_dim_mat() const {
  if (rank() < 1) throw DimError("last_dim_mat() on rank-0 tensor");
  int last = shape_.back();
  std::int64_t rows = last > 0 ? size() / last : 0;
  return ConstMatView(data_.data(), rows, last);
}

}  // namespace egu
