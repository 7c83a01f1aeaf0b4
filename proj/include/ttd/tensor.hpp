#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace ttd {

// Dense row-major double tensor, rank 0..2.  Rank 0 is a scalar (shape {}),
// rank 1 a vector, rank 2 a matrix.  Values are immutable by convention once
// a tensor has been attached to a graph node.
class Tensor {
 public:
  Tensor() = default;
  Tensor(std::vector<std::int64_t> shape, std::vector<double> data);

  static Tensor scalar(double v);
  static Tensor zeros(std::vector<std::int64_t> shape);
  static Tensor full(std::vector<std::int64_t> shape, double v);
  static Tensor vector(std::vector<double> v);
  static Tensor matrix(std::int64_t rows, std::int64_t cols, std::vector<double> v);

  const std::vector<std::int64_t>& shape() const { return shape_; }
  std::int64_t rank() const { return static_cast<std::int64_t>(shape_.size()); }
  std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }
  std::int64_t rows() const;
  std::int64_t cols() const;
  bool is_scalar_like() const { return size() == 1; }

  const std::vector<double>& data() const { return data_; }
  std::vector<double>& data() { return data_; }
  const double* ptr() const { return data_.data(); }
  double* ptr() { return data_.data(); }

  double item() const;
  double operator()(std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }
  double operator()(std::int64_t i, std::int64_t j) const {
    return data_[static_cast<std::size_t>(i * cols() + j)];
  }
  double& at(std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
  double& at(std::int64_t i, std::int64_t j) {
    return data_[static_cast<std::size_t>(i * cols() + j)];
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
  bool all_finite() const;
  // Throws std::invalid_argument on NaN/Inf entries.
  void check_finite(const std::string& what) const;

  std::string shape_str() const;

 private:
  std::vector<std::int64_t> shape_;
  std::vector<double> data_;
};

// When enabled, graph primitives validate that freshly produced values are
// finite.  Off by default (hot path); tests flip it on.
bool checked_mode();
void set_checked_mode(bool on);

std::int64_t shape_product(const std::vector<std::int64_t>& shape);

}  // namespace ttd
