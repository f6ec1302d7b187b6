#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace tt {

// Dense float tensor. Feature maps use NCHW layout.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape);

  static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }

  const std::vector<int>& shape() const { return shape_; }
  int dim(int i) const { return shape_.at(i); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  float* data() { return data_.data(); }
  const float* data() const { return data_.data(); }

  float& operator[](std::size_t i) { return data_[i]; }
  float operator[](std::size_t i) const { return data_[i]; }

  // NCHW accessors.
  float& at(int n, int c, int h, int w) {
    return data_[((static_cast<std::size_t>(n) * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }
  float at(int n, int c, int h, int w) const {
    return data_[((static_cast<std::size_t>(n) * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }

  void fill(float v);
  void add_(const Tensor& other);  // elementwise +=
  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  std::string shape_str() const;

 private:
  std::vector<int> shape_;
  std::vector<float> data_;
};

std::size_t shape_size(const std::vector<int>& shape);

}  // namespace tt
