#pragma once

#include <memory>
#include <random>
#include <string>
#include <vector>

#include "tt/tensor.hpp"

namespace tt::nn {

struct Param {
  std::string name;
  Tensor value;
  Tensor grad;
};

// A layer computes one output tensor from one or more inputs and can
// back-propagate a gradient. Parameter gradients accumulate into Param::grad.
class Layer {
 public:
  virtual ~Layer() = default;
  virtual Tensor forward(const std::vector<const Tensor*>& in, bool train) = 0;
  // Returns dL/dx for each input, given dL/dy. Inputs are the same tensors
  // passed to the matching forward call.
  virtual std::vector<Tensor> backward(const std::vector<const Tensor*>& in,
                                       const Tensor& grad_out) = 0;
  virtual std::vector<Param*> params() { return {}; }
};

class Conv2d : public Layer {
 public:
  Conv2d(std::string name, int in_ch, int out_ch, int kernel, int stride, int pad,
         std::mt19937& rng, bool bias = true);
  Tensor forward(const std::vector<const Tensor*>& in, bool train) override;
  std::vector<Tensor> backward(const std::vector<const Tensor*>& in,
                               const Tensor& grad_out) override;
  std::vector<Param*> params() override;

  int in_ch() const { return in_ch_; }
  int out_ch() const { return out_ch_; }

 private:
  int in_ch_, out_ch_, kernel_, stride_, pad_;
  bool has_bias_;
  Param weight_;  // [out, in, k, k]
  Param bias_;    // [out]
};

// 2x2 stride-2 transposed convolution (exact upsampling by 2, no overlap).
class Deconv2x2 : public Layer {
 public:
  Deconv2x2(std::string name, int in_ch, int out_ch, std::mt19937& rng);
  Tensor forward(const std::vector<const Tensor*>& in, bool train) override;
  std::vector<Tensor> backward(const std::vector<const Tensor*>& in,
                               const Tensor& grad_out) override;
  std::vector<Param*> params() override;

 private:
  int in_ch_, out_ch_;
  Param weight_;  // [out, in, 2, 2]
  Param bias_;    // [out]
};

class MaxPool : public Layer {
 public:
  MaxPool(int kernel, int stride, int pad) : kernel_(kernel), stride_(stride), pad_(pad) {}
  Tensor forward(const std::vector<const Tensor*>& in, bool train) override;
  std::vector<Tensor> backward(const std::vector<const Tensor*>& in,
                               const Tensor& grad_out) override;

 private:
  int kernel_, stride_, pad_;
  std::vector<int> argmax_;  // flat input index per output element
};

class AvgPool : public Layer {
 public:
  AvgPool(int kernel, int stride) : kernel_(kernel), stride_(stride) {}
  Tensor forward(const std::vector<const Tensor*>& in, bool train) override;
  std::vector<Tensor> backward(const std::vector<const Tensor*>& in,
                               const Tensor& grad_out) override;

 private:
  int kernel_, stride_;
};

class ReLU : public Layer {
 public:
  Tensor forward(const std::vector<const Tensor*>& in, bool train) override;
  std::vector<Tensor> backward(const std::vector<const Tensor*>& in,
                               const Tensor& grad_out) override;
};

class Sigmoid : public Layer {
 public:
  Tensor forward(const std::vector<const Tensor*>& in, bool train) override;
  std::vector<Tensor> backward(const std::vector<const Tensor*>& in,
                               const Tensor& grad_out) override;
};

class BatchNorm2d : public Layer {
 public:
  BatchNorm2d(std::string name, int channels, float momentum = 0.1f, float eps = 1e-5f);
  Tensor forward(const std::vector<const Tensor*>& in, bool train) override;
  std::vector<Tensor> backward(const std::vector<const Tensor*>& in,
                               const Tensor& grad_out) override;
  std::vector<Param*> params() override;
  // Running statistics are serialized alongside learnable params.
  std::vector<Param*> buffers() { return {&running_mean_, &running_var_}; }

 private:
  int channels_;
  float momentum_, eps_;
  Param gamma_, beta_;
  Param running_mean_, running_var_;  // grads unused
  std::vector<float> batch_mean_, batch_inv_std_;  // cached by train forward
};

// Channel-wise concatenation of two inputs with equal N, H, W.
class Concat : public Layer {
 public:
  Tensor forward(const std::vector<const Tensor*>& in, bool train) override;
  std::vector<Tensor> backward(const std::vector<const Tensor*>& in,
                               const Tensor& grad_out) override;
};

// Static computation graph: single input node, ops in topological order.
class Graph {
 public:
  Graph() { nodes_.emplace_back(); }  // node 0 is the input

  int input_node() const { return 0; }
  int add(std::unique_ptr<Layer> layer, std::vector<int> inputs);

  // Runs the whole graph; returns the value of the last-added node.
  const Tensor& forward(const Tensor& x, bool train);
  // Back-propagates from the last node. Parameter grads must be zeroed first.
  void backward(const Tensor& grad_out);
  void zero_grad();

  std::vector<Param*> params();
  std::vector<Param*> buffers();
  std::size_t param_count();

  const Tensor& node_value(int node) const { return nodes_[node].value; }
  int output_node() const { return static_cast<int>(nodes_.size()) - 1; }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
  };
  struct OpRec {
    std::unique_ptr<Layer> layer;
    std::vector<int> inputs;
    int output;
  };
  std::vector<Node> nodes_;
  std::vector<OpRec> ops_;
  bool last_forward_train_ = false;
};

}  // namespace tt::nn
