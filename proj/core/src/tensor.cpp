#include "tt/tensor.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

namespace tt {

std::size_t shape_size(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw std::invalid_argument("non-positive tensor dimension");
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

Tensor::Tensor(std::vector<int> shape) : shape_(std::move(shape)), data_(shape_size(shape_), 0.0f) {}

void Tensor::fill(float v) { std::fill(data_.begin(), data_.end(), v); }

void Tensor::add_(const Tensor& other) {
  if (!same_shape(other)) throw std::invalid_argument("tensor shape mismatch in add_");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape_.size(); ++i) os << (i ? "x" : "") << shape_[i];
  os << "]";
  return os.str();
}

}  // namespace tt
