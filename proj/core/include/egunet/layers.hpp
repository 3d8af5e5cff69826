#pragma once

#include <memory>
#include <string>
#include <vector>

#include "egunet/rng.hpp"
#include "egunet/tensor.hpp"

namespace egu {

enum class Mode { Train, Infer };

enum class LayerKind { Dense, Conv2d, Deconv2d, BatchNorm, Dropout, AvgPool, Activation };

enum class Act { None, Tanh, Relu, Sigmoid, Softmax };

const char* to_string(LayerKind k);
const char* to_string(Act a);

// A learnable parameter.  Layers hold parameters through shared_ptr so two
// layers can alias one parameter; gradients then accumulate into the same
// buffer and a single optimizer update moves both call sites at once.  This
// is how encoder blocks are tied across the two network streams.
struct Param {
  Tensor value;
  Tensor grad;
  std::string name;

  explicit Param(Tensor v, std::string n = "")
      : value(std::move(v)), grad(Tensor::zeros(value.shape())), name(std::move(n)) {}
};
using ParamPtr = std::shared_ptr<Param>;

// Batch-norm running statistics, shared between aliased batch-norm layers the
// same way parameters are.
struct BnState {
  Tensor running_mean;
  Tensor running_var;

  explicit BnState(int features)
      : running_mean(Tensor::zeros({features})), running_var(Tensor::full({features}, 1.0)) {}
};
using BnStatePtr = std::shared_ptr<BnState>;

// Glorot/Xavier uniform draw: U(-l, l) with l = sqrt(6 / (fan_in + fan_out)).
Tensor glorot_uniform(std::vector<int> shape, int fan_in, int fan_out, Rng& rng);

ParamPtr make_dense_weight(int fan_in, int fan_out, Rng& rng, std::string name);
ParamPtr make_conv_kernel(int kh, int kw, int c_in, int c_out, Rng& rng, std::string name);
ParamPtr make_bias(int n, std::string name);

class Layer {
 public:
  virtual ~Layer() = default;

  // rng is only consulted by stochastic layers (dropout) in Train mode.
  virtual Tensor forward(const Tensor& in, Mode mode, Rng* rng) = 0;
  virtual Tensor backward(const Tensor& grad_out) = 0;
  virtual std::vector<ParamPtr> params() const { return {}; }
  virtual BnStatePtr bn_state() const { return nullptr; }
  virtual LayerKind kind() const = 0;

 protected:
  void require_forward(const char* who) const;
  bool has_forward_ = false;
};

// Fully connected: out = in * W + b, in [N, d_in], W [d_in, d_out].
class DenseLayer : public Layer {
 public:
  DenseLayer(ParamPtr w, ParamPtr b);
  Tensor forward(const Tensor& in, Mode mode, Rng* rng) override;
  Tensor backward(const Tensor& grad_out) override;
  std::vector<ParamPtr> params() const override { return {w_, b_}; }
  LayerKind kind() const override { return LayerKind::Dense; }

 private:
  ParamPtr w_, b_;
  Tensor input_;
};

// 2-D convolution on [N, H, W, C] tensors, stride 1, same-size output.
// Borders are replicate-padded so a constant image stays constant; kernel
// layout is [kh, kw, c_in, c_out] and kh == kw must be odd.
class Conv2dLayer : public Layer {
 public:
  Conv2dLayer(ParamPtr kernel, ParamPtr bias);
  Tensor forward(const Tensor& in, Mode mode, Rng* rng) override;
  Tensor backward(const Tensor& grad_out) override;
  std::vector<ParamPtr> params() const override { return {kernel_, bias_}; }
  LayerKind kind() const override { return LayerKind::Conv2d; }

 private:
  ParamPtr kernel_, bias_;
  Tensor input_;
};

// Transposed convolution defined as the exact adjoint of Conv2dLayer with the
// same replicate-padding geometry.  Kernel layout is [kh, kw, c_out, c_in] so
// a square kernel can be aliased with the matching convolution.
class Deconv2dLayer : public Layer {
 public:
  Deconv2dLayer(ParamPtr kernel, ParamPtr bias);
  Tensor forward(const Tensor& in, Mode mode, Rng* rng) override;
  Tensor backward(const Tensor& grad_out) override;
  std::vector<ParamPtr> params() const override { return {kernel_, bias_}; }
  LayerKind kind() const override { return LayerKind::Deconv2d; }

 private:
  ParamPtr kernel_, bias_;
  Tensor input_;
};

// Per-feature batch normalization.  Statistics are taken over the batch axis
// for rank-2 input and over batch plus spatial axes for rank-4 input.
class BatchNormLayer : public Layer {
 public:
  BatchNormLayer(ParamPtr gamma, ParamPtr beta, BnStatePtr state, double momentum = 0.9,
                 double eps = 1e-5);
  Tensor forward(const Tensor& in, Mode mode, Rng* rng) override;
  Tensor backward(const Tensor& grad_out) override;
  std::vector<ParamPtr> params() const override { return {gamma_, beta_}; }
  BnStatePtr bn_state() const override { return state_; }
  LayerKind kind() const override { return LayerKind::BatchNorm; }

 private:
  ParamPtr gamma_, beta_;
  BnStatePtr state_;
  double momentum_, eps_;
  Tensor xhat_, inv_std_;
  std::int64_t rows_ = 0;
};

// Inverted dropout: in Train mode keeps each entry with probability `keep`
// and rescales by 1/keep so the expected activation is unchanged; identity in
// Infer mode.
class DropoutLayer : public Layer {
 public:
  explicit DropoutLayer(double keep);
  Tensor forward(const Tensor& in, Mode mode, Rng* rng) override;
  Tensor backward(const Tensor& grad_out) override;
  LayerKind kind() const override { return LayerKind::Dropout; }
  double keep() const { return keep_; }

 private:
  double keep_;
  Tensor mask_;
  bool identity_ = false;
};

// Average pooling with stride 1 and same-size output.  Border windows are
// clipped to the image and averaged over the cells actually covered, which
// keeps constant images constant.
class AvgPoolLayer : public Layer {
 public:
  explicit AvgPoolLayer(int window = 2);
  Tensor forward(const Tensor& in, Mode mode, Rng* rng) override;
  Tensor backward(const Tensor& grad_out) override;
  LayerKind kind() const override { return LayerKind::AvgPool; }

 private:
  int window_;
  std::vector<int> in_shape_;
};

// Elementwise tanh / relu / sigmoid, or row-wise softmax over the last axis
// (per pixel for rank-4 input) with max subtraction for stability.
class ActivationLayer : public Layer {
 public:
  explicit ActivationLayer(Act act);
  Tensor forward(const Tensor& in, Mode mode, Rng* rng) override;
  Tensor backward(const Tensor& grad_out) override;
  LayerKind kind() const override { return LayerKind::Activation; }
  Act act() const { return act_; }

 private:
  Act act_;
  Tensor input_, output_;
};

// Declarative layer description used by the factory below.
struct LayerSpec {
  LayerKind kind = LayerKind::Dense;
  int fan_in = 0;
  int fan_out = 0;
  int kernel = 0;  // conv/deconv kernel edge, must be odd
  Act activation = Act::None;
  double dropout_keep = 1.0;
  int window = 2;  // avgpool
};

void validate_spec(const LayerSpec& spec);

// Builds a layer with freshly initialized parameters (Glorot weights, zero
// biases, unit-gamma batch norm).  Streams that share parameters construct
// their layers directly from shared ParamPtr handles instead.
std::unique_ptr<Layer> make_layer(const LayerSpec& spec, Rng& rng);

// An ordered stack of layers trained as one unit.
class Network {
 public:
  Network() = default;
  Network(Network&&) = default;
  Network& operator=(Network&&) = default;

  void add(std::unique_ptr<Layer> layer);
  bool empty() const { return layers_.empty(); }
  std::size_t size() const { return layers_.size(); }
  Layer& layer(std::size_t i) { return *layers_[i]; }
  const Layer& layer(std::size_t i) const { return *layers_[i]; }

  Tensor forward(const Tensor& in, Mode mode, Rng* rng);
  // Propagates grad_out back through the stack, accumulating parameter
  // gradients, and returns the gradient with respect to the input.
  Tensor backward(const Tensor& grad_out);

  // Unique parameters in first-use order.
  std::vector<ParamPtr> params() const;
  std::vector<BnStatePtr> bn_states() const;
  void zero_grad();

 private:
  std::vector<std::unique_ptr<Layer>> layers_;
  bool has_forward_ = false;
};

}  // namespace egu
