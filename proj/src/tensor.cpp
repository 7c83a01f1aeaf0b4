#include "ttd/tensor.hpp"

#include <cmath>
#include <sstream>

namespace ttd {

namespace {
bool g_checked = false;
}

bool checked_mode() { return g_checked; }
void set_checked_mode(bool on) { g_checked = on; }

std::int64_t shape_product(const std::vector<std::int64_t>& shape) {
  std::int64_t p = 1;
  for (auto e : shape) p *= e;
  return p;
}

Tensor::Tensor(std::vector<std::int64_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_.size() > 2)
    throw std::invalid_argument("Tensor: rank > 2 not supported");
  for (auto e : shape_)
    if (e < 0) throw std::invalid_argument("Tensor: negative extent");
  if (shape_product(shape_) != static_cast<std::int64_t>(data_.size()))
    throw std::invalid_argument("Tensor: data length " + std::to_string(data_.size()) +
                                " does not match shape " + shape_str());
  if (g_checked) check_finite("Tensor construction");
}

Tensor Tensor::scalar(double v) { return Tensor({}, {v}); }

Tensor Tensor::zeros(std::vector<std::int64_t> shape) {
  auto n = shape_product(shape);
  return Tensor(std::move(shape), std::vector<double>(static_cast<std::size_t>(n), 0.0));
}

Tensor Tensor::full(std::vector<std::int64_t> shape, double v) {
  auto n = shape_product(shape);
  return Tensor(std::move(shape), std::vector<double>(static_cast<std::size_t>(n), v));
}

Tensor Tensor::vector(std::vector<double> v) {
  auto n = static_cast<std::int64_t>(v.size());
  return Tensor({n}, std::move(v));
}

Tensor Tensor::matrix(std::int64_t rows, std::int64_t cols, std::vector<double> v) {
  return Tensor({rows, cols}, std::move(v));
}

std::int64_t Tensor::rows() const {
  if (rank() == 2) return shape_[0];
  return 1;
}

std::int64_t Tensor::cols() const {
  if (rank() == 2) return shape_[1];
  if (rank() == 1) return shape_[0];
  return 1;
}

double Tensor::item() const {
  if (size() != 1) throw std::invalid_argument("Tensor::item on non-scalar " + shape_str());
  return data_[0];
}

bool Tensor::all_finite() const {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

void Tensor::check_finite(const std::string& what) const {
  if (!all_finite())
    throw std::invalid_argument(what + ": non-finite value in tensor " + shape_str());
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape_.size(); ++i) {
    if (i) os << 'x';
    os << shape_[i];
  }
  os << ']';
  return os.str();
}

}  // namespace ttd
