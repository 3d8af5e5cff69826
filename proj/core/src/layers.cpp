#include "egunet/layers.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <unordered_set>

#include "egunet/errors.hpp"

namespace egu {

const char* to_string(LayerKind k) {
  switch (k) {
    case LayerKind::Dense: return "dense";
    case LayerKind::Conv2d: return "conv2d";
    case LayerKind::Deconv2d: return "deconv2d";
    case LayerKind::BatchNorm: return "batchnorm";
    case LayerKind::Dropout: return "dropout";
    case LayerKind::AvgPool: return "avgpool";
    case LayerKind::Activation: return "activation";
  }
  return "?";
}

const char* to_string(Act a) {
  switch (a) {
    case Act::None: return "none";
    case Act::Tanh: return "tanh";
    case Act::Relu: return "relu";
    case Act::Sigmoid: return "sigmoid";
    case Act::Softmax: return "softmax";
  }
  return "?";
}

Tensor glorot_uniform(std::vector<int> shape, int fan_in, int fan_out, Rng& rng) {
  if (fan_in < 1 || fan_out < 1) throw ConfigError("glorot_uniform: fans must be positive");
  double limit = std::sqrt(6.0 / (fan_in + fan_out));
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> dist(-limit, limit);
  for (std::int64_t i = 0; i < t.size(); ++i) t[i] = dist(rng);
  return t;
}

ParamPtr make_dense_weight(int fan_in, int fan_out, Rng& rng, std::string name) {
  return std::make_shared<Param>(glorot_uniform({fan_in, fan_out}, fan_in, fan_out, rng),
                                 std::move(name));
}

ParamPtr make_conv_kernel(int kh, int kw, int c_in, int c_out, Rng& rng, std::string name) {
  return std::make_shared<Param>(
      glorot_uniform({kh, kw, c_in, c_out}, kh * kw * c_in, kh * kw * c_out, rng),
      std::move(name));
}

ParamPtr make_bias(int n, std::string name) {
  return std::make_shared<Param>(Tensor::zeros({n}), std::move(name));
}

void Layer::require_forward(const char* who) const {
  if (!has_forward_) {
    throw StateError(std::string(who) + ": backward called before forward");
  }
}

namespace {

void require_rank(const Tensor& t, int rank, const char* who) {
  if (t.rank() != rank) {
    throw DimError(std::string(who) + ": expected rank-" + std::to_string(rank) +
                   " input, got shape " + shape_str(t.shape()));
  }
}

// Column sums with a fixed accumulation order.  Eigen's packet reductions
// may regroup terms depending on how buffers happen to be aligned, so a
// mathematically zero total (a bias feeding straight into batch norm) can
// come out with allocation-dependent low bits and break bit-reproducible
// training.  A scalar loop pins the order once and for all.
template <typename Derived>
Eigen::RowVectorXd ordered_colsum(const Eigen::MatrixBase<Derived>& m) {
  Eigen::RowVectorXd out = Eigen::RowVectorXd::Zero(m.cols());
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) out(j) += m(i, j);
  }
  return out;
}

// Gathers k x k patches of a [N, H, W, C] tensor into a [N*H*W, k*k*C]
// matrix.  Out-of-image coordinates are clamped to the nearest border pixel
// (replicate padding), which keeps constant images constant under both the
// convolution and its adjoint.
RowMat im2col(const Tensor& x, int k) {
  int n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  int pad = k / 2;
  RowMat col(static_cast<std::int64_t>(n) * h * w, static_cast<std::int64_t>(k) * k * c);
  const double* xp = x.data();
  double* cp = col.data();
  std::int64_t row_len = static_cast<std::int64_t>(k) * k * c;
  for (int in = 0; in < n; ++in) {
    for (int y = 0; y < h; ++y) {
      for (int x0 = 0; x0 < w; ++x0) {
        double* crow = cp + ((static_cast<std::int64_t>(in) * h + y) * w + x0) * row_len;
        for (int dy = 0; dy < k; ++dy) {
          int iy = std::clamp(y + dy - pad, 0, h - 1);
          for (int dx = 0; dx < k; ++dx) {
            int ix = std::clamp(x0 + dx - pad, 0, w - 1);
            const double* src = xp + ((static_cast<std::int64_t>(in) * h + iy) * w + ix) * c;
            std::memcpy(crow + (static_cast<std::int64_t>(dy) * k + dx) * c, src,
                        sizeof(double) * static_cast<std::size_t>(c));
          }
        }
      }
    }
  }
  return col;
}

// Adjoint of im2col: scatters a [N*H*W, k*k*C] matrix back onto the image
// grid, accumulating duplicates that the clamped gather created.
void col2im_add(const RowMat& t, int k, Tensor& out) {
  int n = out.dim(0), h = out.dim(1), w = out.dim(2), c = out.dim(3);
  int pad = k / 2;
  const double* tp = t.data();
  double* op = out.data();
  std::int64_t row_len = static_cast<std::int64_t>(k) * k * c;
  for (int in = 0; in < n; ++in) {
    for (int y = 0; y < h; ++y) {
      for (int x0 = 0; x0 < w; ++x0) {
        const double* trow = tp + ((static_cast<std::int64_t>(in) * h + y) * w + x0) * row_len;
        for (int dy = 0; dy < k; ++dy) {
          int iy = std::clamp(y + dy - pad, 0, h - 1);
          for (int dx = 0; dx < k; ++dx) {
            int ix = std::clamp(x0 + dx - pad, 0, w - 1);
            double* dst = op + ((static_cast<std::int64_t>(in) * h + iy) * w + ix) * c;
            const double* src = trow + (static_cast<std::int64_t>(dy) * k + dx) * c;
            for (int ic = 0; ic < c; ++ic) dst[ic] += src[ic];
          }
        }
      }
    }
  }
}

int kernel_edge(const Tensor& kernel, const char* who) {
  if (kernel.rank() != 4 || kernel.dim(0) != kernel.dim(1)) {
    throw DimError(std::string(who) + ": kernel must be [k,k,*,*], got " +
                   shape_str(kernel.shape()));
  }
  int k = kernel.dim(0);
  if (k < 1 || k % 2 == 0) {
    throw ConfigError(std::string(who) + ": kernel edge must be odd and positive, got " +
                      std::to_string(k));
  }
  return k;
}

}  // namespace

// ---------------------------------------------------------------------------
// DenseLayer

DenseLayer::DenseLayer(ParamPtr w, ParamPtr b) : w_(std::move(w)), b_(std::move(b)) {
  if (w_->value.rank() != 2) throw DimError("dense: weight must be rank 2");
  if (b_->value.rank() != 1 || b_->value.dim(0) != w_->value.dim(1)) {
    throw DimError("dense: bias shape must match weight columns");
  }
}

Tensor DenseLayer::forward(const Tensor& in, Mode, Rng*) {
  require_rank(in, 2, "dense");
  if (in.dim(1) != w_->value.dim(0)) {
    throw DimError("dense: input width " + std::to_string(in.dim(1)) +
                   " does not match weight rows " + std::to_string(w_->value.dim(0)));
  }
  input_ = in;
  Tensor out({in.dim(0), w_->value.dim(1)});
  out.mat().noalias() = in.mat() * w_->value.mat();
  out.mat().rowwise() += b_->value.vec().transpose();
  has_forward_ = true;
  return out;
}

Tensor DenseLayer::backward(const Tensor& grad_out) {
  require_forward("dense");
  has_forward_ = false;
  w_->grad.mat().noalias() += input_.mat().transpose() * grad_out.mat();
  b_->grad.vec().noalias() += ordered_colsum(grad_out.mat()).transpose();
  Tensor gin(input_.shape());
  gin.mat().noalias() = grad_out.mat() * w_->value.mat().transpose();
  return gin;
}

// ---------------------------------------------------------------------------
// Conv2dLayer

Conv2dLayer::Conv2dLayer(ParamPtr kernel, ParamPtr bias)
    : kernel_(std::move(kernel)), bias_(std::move(bias)) {
  int k = kernel_edge(kernel_->value, "conv2d");
  (void)k;
  if (bias_->value.rank() != 1 || bias_->value.dim(0) != kernel_->value.dim(3)) {
    throw DimError("conv2d: bias shape must match kernel output channels");
  }
}

Tensor Conv2dLayer::forward(const Tensor& in, Mode, Rng*) {
  require_rank(in, 4, "conv2d");
  int k = kernel_->value.dim(0);
  int ci = kernel_->value.dim(2), co = kernel_->value.dim(3);
  if (in.dim(3) != ci) {
    throw DimError("conv2d: input channels " + std::to_string(in.dim(3)) +
                   " do not match kernel input channels " + std::to_string(ci));
  }
  input_ = in;
  RowMat col = im2col(in, k);
  ConstMatView k2(kernel_->value.data(), static_cast<std::int64_t>(k) * k * ci, co);
  Tensor out({in.dim(0), in.dim(1), in.dim(2), co});
  out.last_dim_mat().noalias() = col * k2;
  out.last_dim_mat().rowwise() += bias_->value.vec().transpose();
  has_forward_ = true;
  return out;
}

Tensor Conv2dLayer::backward(const Tensor& grad_out) {
  require_forward("conv2d");
  has_forward_ = false;
  int k = kernel_->value.dim(0);
  int ci = kernel_->value.dim(2), co = kernel_->value.dim(3);
  ConstMatView g2 = grad_out.last_dim_mat();
  RowMat col = im2col(input_, k);
  MatView gk2(kernel_->grad.data(), static_cast<std::int64_t>(k) * k * ci, co);
  gk2.noalias() += col.transpose() * g2;
  bias_->grad.vec().noalias() += ordered_colsum(g2).transpose();
  ConstMatView k2(kernel_->value.data(), static_cast<std::int64_t>(k) * k * ci, co);
  RowMat t = g2 * k2.transpose();
  Tensor gin(input_.shape());
  col2im_add(t, k, gin);
  return gin;
}

// ---------------------------------------------------------------------------
// Deconv2dLayer
//
// Forward here is exactly the input-gradient pass of the matching
// convolution, so conv(x) . y == x . deconv(y) as bilinear forms (ignoring
// biases).  That adjoint identity is what the unit tests pin down.

Deconv2dLayer::Deconv2dLayer(ParamPtr kernel, ParamPtr bias)
    : kernel_(std::move(kernel)), bias_(std::move(bias)) {
  int k = kernel_edge(kernel_->value, "deconv2d");
  (void)k;
  if (bias_->value.rank() != 1 || bias_->value.dim(0) != kernel_->value.dim(2)) {
    throw DimError("deconv2d: bias shape must match kernel output channels");
  }
}

Tensor Deconv2dLayer::forward(const Tensor& in, Mode, Rng*) {
  require_rank(in, 4, "deconv2d");
  int k = kernel_->value.dim(0);
  int co = kernel_->value.dim(2), ci = kernel_->value.dim(3);
  if (in.dim(3) != ci) {
    throw DimError("deconv2d: input channels " + std::to_string(in.dim(3)) +
                   " do not match kernel input channels " + std::to_string(ci));
  }
  input_ = in;
  ConstMatView k2(kernel_->value.data(), static_cast<std::int64_t>(k) * k * co, ci);
  RowMat t = in.last_dim_mat() * k2.transpose();
  Tensor out({in.dim(0), in.dim(1), in.dim(2), co});
  col2im_add(t, k, out);
  out.last_dim_mat().rowwise() += bias_->value.vec().transpose();
  has_forward_ = true;
  return out;
}

Tensor Deconv2dLayer::backward(const Tensor& grad_out) {
  require_forward("deconv2d");
  has_forward_ = false;
  int k = kernel_->value.dim(0);
  int co = kernel_->value.dim(2), ci = kernel_->value.dim(3);
  RowMat colz = im2col(grad_out, k);
  ConstMatView k2(kernel_->value.data(), static_cast<std::int64_t>(k) * k * co, ci);
  Tensor gin(input_.shape());
  gin.last_dim_mat().noalias() = colz * k2;
  MatView gk2(kernel_->grad.data(), static_cast<std::int64_t>(k) * k * co, ci);
  gk2.noalias() += colz.transpose() * input_.last_dim_mat();
  bias_->grad.vec().noalias() += ordered_colsum(grad_out.last_dim_mat()).transpose();
  return gin;
}

// ---------------------------------------------------------------------------
// BatchNormLayer

BatchNormLayer::BatchNormLayer(ParamPtr gamma, ParamPtr beta, BnStatePtr state, double momentum,
                               double eps)
    : gamma_(std::move(gamma)), beta_(std::move(beta)), state_(std::move(state)),
      momentum_(momentum), eps_(eps) {
  if (gamma_->value.rank() != 1 || !gamma_->value.same_shape(beta_->value)) {
    throw DimError("batchnorm: gamma and beta must be rank-1 and equal-sized");
  }
  if (!state_ || state_->running_mean.dim(0) != gamma_->value.dim(0)) {
    throw DimError("batchnorm: running stats must match feature count");
  }
  if (momentum_ < 0.0 || momentum_ >= 1.0) throw ConfigError("batchnorm: momentum out of range");
  if (eps_ <= 0.0) throw ConfigError("batchnorm: eps must be positive");
}

Tensor BatchNormLayer::forward(const Tensor& in, Mode mode, Rng*) {
  int f = gamma_->value.dim(0);
  if (in.rank() != 2 && in.rank() != 4) throw DimError("batchnorm: input must be rank 2 or 4");
  if (in.shape().back() != f) {
    throw DimError("batchnorm: feature count " + std::to_string(in.shape().back()) +
                   " does not match parameters (" + std::to_string(f) + ")");
  }
  ConstMatView x = in.last_dim_mat();
  std::int64_t m = x.rows();
  Tensor out(in.shape());
  MatView y = out.last_dim_mat();

  if (mode == Mode::Train) {
    if (m < 2) {
      throw NumericError("batchnorm: training batch of " + std::to_string(m) +
                         " row(s) is degenerate");
    }
    Eigen::RowVectorXd mean = ordered_colsum(x) / static_cast<double>(m);
    RowMat centered = x.rowwise() - mean;
    Eigen::RowVectorXd var =
        ordered_colsum(centered.array().square().matrix()) / static_cast<double>(m);
    Eigen::RowVectorXd inv_std = (var.array() + eps_).sqrt().inverse().matrix();

    xhat_ = Tensor(in.shape());
    MatView xh = xhat_.last_dim_mat();
    xh = (centered.array().rowwise() * inv_std.array()).matrix();
    inv_std_ = Tensor({f});
    inv_std_.vec() = inv_std.transpose();
    rows_ = m;

    y = (xh.array().rowwise() * gamma_->value.vec().transpose().array()).matrix();
    y.rowwise() += beta_->value.vec().transpose();

    state_->running_mean.vec() =
        momentum_ * state_->running_mean.vec() + (1.0 - momentum_) * mean.transpose();
    state_->running_var.vec() =
        momentum_ * state_->running_var.vec() + (1.0 - momentum_) * var.transpose();
    has_forward_ = true;
  } else {
    Eigen::RowVectorXd mean = state_->running_mean.vec().transpose();
    Eigen::RowVectorXd inv_std =
        (state_->running_var.vec().transpose().array() + eps_).sqrt().inverse().matrix();
    RowMat centered = x.rowwise() - mean;
    y = (centered.array().rowwise() * inv_std.array()).matrix();
    y = (y.array().rowwise() * gamma_->value.vec().transpose().array()).matrix();
    y.rowwise() += beta_->value.vec().transpose();
    has_forward_ = false;  // infer caches nothing; backward would be invalid
  }
  return out;
}

Tensor BatchNormLayer::backward(const Tensor& grad_out) {
  require_forward("batchnorm");
  has_forward_ = false;
  ConstMatView g = grad_out.last_dim_mat();
  MatView xh = xhat_.last_dim_mat();
  double m = static_cast<double>(rows_);

  Eigen::RowVectorXd sum_g = ordered_colsum(g);
  Eigen::RowVectorXd sum_gx = ordered_colsum((g.array() * xh.array()).matrix());

  gamma_->grad.vec().noalias() += sum_gx.transpose();
  beta_->grad.vec().noalias() += sum_g.transpose();

  Eigen::RowVectorXd scale =
      (gamma_->value.vec().transpose().array() * inv_std_.vec().transpose().array() / m).matrix();
  Tensor gin(grad_out.shape());
  MatView gi = gin.last_dim_mat();
  RowMat tmp = g * m;
  tmp.rowwise() -= sum_g;
  tmp.array() -= xh.array().rowwise() * sum_gx.array();
  gi = (tmp.array().rowwise() * scale.array()).matrix();
  return gin;
}

// ---------------------------------------------------------------------------
// DropoutLayer

DropoutLayer::DropoutLayer(double keep) : keep_(keep) {
  if (!(keep > 0.0) || keep > 1.0) {
    throw ConfigError("dropout: keep probability must lie in (0, 1], got " + std::to_string(keep));
  }
}

Tensor DropoutLayer::forward(const Tensor& in, Mode mode, Rng* rng) {
  if (mode == Mode::Infer || keep_ == 1.0) {
    identity_ = true;
    has_forward_ = true;
    return in;
  }
  if (!rng) throw StateError("dropout: training-mode forward needs an rng");
  identity_ = false;
  mask_ = Tensor(in.shape());
  Tensor out(in.shape());
  std::uniform_real_distribution<double> dist(0.0, 1.0);
  double scale = 1.0 / keep_;
  for (std::int64_t i = 0; i < in.size(); ++i) {
    double keep_it = dist(*rng) < keep_ ? scale : 0.0;
    mask_[i] = keep_it;
    out[i] = in[i] * keep_it;
  }
  has_forward_ = true;
  return out;
}

Tensor DropoutLayer::backward(const Tensor& grad_out) {
  require_forward("dropout");
  has_forward_ = false;
  if (identity_) return grad_out;
  Tensor gin(grad_out.shape());
  for (std::int64_t i = 0; i < grad_out.size(); ++i) gin[i] = grad_out[i] * mask_[i];
  return gin;
}

// ---------------------------------------------------------------------------
// AvgPoolLayer

AvgPoolLayer::AvgPoolLayer(int window) : window_(window) {
  if (window < 1) throw ConfigError("avgpool: window must be positive");
}

Tensor AvgPoolLayer::forward(const Tensor& in, Mode, Rng*) {
  require_rank(in, 4, "avgpool");
  in_shape_ = in.shape();
  int n = in.dim(0), h = in.dim(1), w = in.dim(2), c = in.dim(3);
  Tensor out(in.shape());
  for (int b = 0; b < n; ++b) {
    for (int y = 0; y < h; ++y) {
      int y1 = std::min(y + window_, h);
      for (int x = 0; x < w; ++x) {
        int x1 = std::min(x + window_, w);
        double inv = 1.0 / ((y1 - y) * (x1 - x));
        for (int ch = 0; ch < c; ++ch) {
          double s = 0.0;
          for (int yy = y; yy < y1; ++yy) {
            for (int xx = x; xx < x1; ++xx) s += in.at(b, yy, xx, ch);
          }
          out.at(b, y, x, ch) = s * inv;
        }
      }
    }
  }
  has_forward_ = true;
  return out;
}

Tensor AvgPoolLayer::backward(const Tensor& grad_out) {
  require_forward("avgpool");
  has_forward_ = false;
  int n = in_shape_[0], h = in_shape_[1], w = in_shape_[2], c = in_shape_[3];
  Tensor gin(in_shape_);
  for (int b = 0; b < n; ++b) {
    for (int y = 0; y < h; ++y) {
      int y1 = std::min(y + window_, h);
      for (int x = 0; x < w; ++x) {
        int x1 = std::min(x + window_, w);
        double inv = 1.0 / ((y1 - y) * (x1 - x));
        for (int ch = 0; ch < c; ++ch) {
          double g = grad_out.at(b, y, x, ch) * inv;
          for (int yy = y; yy < y1; ++yy) {
            for (int xx = x; xx < x1; ++xx) gin.at(b, yy, xx, ch) += g;
          }
        }
      }
    }
  }
  return gin;
}

// ---------------------------------------------------------------------------
// ActivationLayer

ActivationLayer::ActivationLayer(Act act) : act_(act) {
  if (act == Act::None) throw ConfigError("activation: kind must not be none");
}

Tensor ActivationLayer::forward(const Tensor& in, Mode, Rng*) {
  Tensor out(in.shape());
  switch (act_) {
    case Act::Tanh:
      for (std::int64_t i = 0; i < in.size(); ++i) out[i] = std::tanh(in[i]);
      output_ = out;
      break;
    case Act::Relu:
      for (std::int64_t i = 0; i < in.size(); ++i) out[i] = in[i] > 0.0 ? in[i] : 0.0;
      input_ = in;
      break;
    case Act::Sigmoid:
      for (std::int64_t i = 0; i < in.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-in[i]));
      output_ = out;
      break;
    case Act::Softmax: {
      ConstMatView x = in.last_dim_mat();
      MatView y = out.last_dim_mat();
      for (std::int64_t r = 0; r < x.rows(); ++r) {
        // Scalar reductions keep the row totals independent of buffer
        // alignment (see ordered_colsum above).
        double mx = x(r, 0);
        for (Eigen::Index j = 1; j < x.cols(); ++j) mx = std::max(mx, x(r, j));
        double total = 0.0;
        for (Eigen::Index j = 0; j < x.cols(); ++j) {
          y(r, j) = std::exp(x(r, j) - mx);
          total += y(r, j);
        }
        y.row(r) /= total;
      }
      output_ = out;
      break;
    }
    case Act::None:
      break;
  }
  has_forward_ = true;
  return out;
}

Tensor ActivationLayer::backward(const Tensor& grad_out) {
  require_forward("activation");
  has_forward_ = false;
  Tensor gin(grad_out.shape());
  switch (act_) {
    case Act::Tanh:
      for (std::int64_t i = 0; i < gin.size(); ++i) {
        gin[i] = grad_out[i] * (1.0 - output_[i] * output_[i]);
      }
      break;
    case Act::Relu:
      for (std::int64_t i = 0; i < gin.size(); ++i) {
        gin[i] = input_[i] > 0.0 ? grad_out[i] : 0.0;
      }
      break;
    case Act::Sigmoid:
      for (std::int64_t i = 0; i < gin.size(); ++i) {
        gin[i] = grad_out[i] * output_[i] * (1.0 - output_[i]);
      }
      break;
    case Act::Softmax: {
      ConstMatView g = grad_out.last_dim_mat();
      MatView p = output_.last_dim_mat();
      MatView gi = gin.last_dim_mat();
      for (std::int64_t r = 0; r < g.rows(); ++r) {
        double dot = 0.0;
        for (Eigen::Index j = 0; j < g.cols(); ++j) dot += g(r, j) * p(r, j);
        gi.row(r) = (p.row(r).array() * (g.row(r).array() - dot)).matrix();
      }
      break;
    }
    case Act::None:
      break;
  }
  return gin;
}

// ---------------------------------------------------------------------------
// Factory

void validate_spec(const LayerSpec& spec) {
  switch (spec.kind) {
    case LayerKind::Dense:
      if (spec.fan_in < 1 || spec.fan_out < 1) {
        throw ConfigError("layer spec: dense fans must be positive");
      }
      break;
    case LayerKind::Conv2d:
    case LayerKind::Deconv2d:
      if (spec.fan_in < 1 || spec.fan_out < 1) {
        throw ConfigError("layer spec: conv fans must be positive");
      }
      if (spec.kernel < 1 || spec.kernel % 2 == 0) {
        throw ConfigError("layer spec: conv kernel edge must be odd and positive");
      }
      break;
    case LayerKind::BatchNorm:
      if (spec.fan_in < 1) throw ConfigError("layer spec: batchnorm needs a feature count");
      break;
    case LayerKind::Dropout:
      if (!(spec.dropout_keep > 0.0) || spec.dropout_keep > 1.0) {
        throw ConfigError("layer spec: dropout keep probability must lie in (0, 1]");
      }
      break;
    case LayerKind::AvgPool:
      if (spec.window < 1) throw ConfigError("layer spec: avgpool window must be positive");
      break;
    case LayerKind::Activation:
      if (spec.activation == Act::None) {
        throw ConfigError("layer spec: activation kind must be set");
      }
      break;
  }
}

std::unique_ptr<Layer> make_layer(const LayerSpec& spec, Rng& rng) {
  validate_spec(spec);
  switch (spec.kind) {
    case LayerKind::Dense:
      return std::make_unique<DenseLayer>(make_dense_weight(spec.fan_in, spec.fan_out, rng, "w"),
                                          make_bias(spec.fan_out, "b"));
    case LayerKind::Conv2d:
      return std::make_unique<Conv2dLayer>(
          make_conv_kernel(spec.kernel, spec.kernel, spec.fan_in, spec.fan_out, rng, "k"),
          make_bias(spec.fan_out, "b"));
    case LayerKind::Deconv2d:
      return std::make_unique<Deconv2dLayer>(
          make_conv_kernel(spec.kernel, spec.kernel, spec.fan_out, spec.fan_in, rng, "k"),
          make_bias(spec.fan_out, "b"));
    case LayerKind::BatchNorm: {
      auto gamma = std::make_shared<Param>(Tensor::full({spec.fan_in}, 1.0), "gamma");
      auto beta = std::make_shared<Param>(Tensor::zeros({spec.fan_in}), "beta");
      return std::make_unique<BatchNormLayer>(gamma, beta, std::make_shared<BnState>(spec.fan_in));
    }
    case LayerKind::Dropout:
      return std::make_unique<DropoutLayer>(spec.dropout_keep);
    case LayerKind::AvgPool:
      return std::make_unique<AvgPoolLayer>(spec.window);
    case LayerKind::Activation:
      return std::make_unique<ActivationLayer>(spec.activation);
  }
  throw ConfigError("layer spec: unknown kind");
}

// ---------------------------------------------------------------------------
// Network

void Network::add(std::unique_ptr<Layer> layer) { layers_.push_back(std::move(layer)); }

Tensor Network::forward(const Tensor& in, Mode mode, Rng* rng) {
  in.check_finite("network forward input");
  Tensor cur = in;
  for (auto& l : layers_) cur = l->forward(cur, mode, rng);
  cur.check_finite("network forward output");
  has_forward_ = true;
  return cur;
}

Tensor Network::backward(const Tensor& grad_out) {
  if (!has_forward_) throw StateError("network: backward called before forward");
  has_forward_ = false;
  Tensor cur = grad_out;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) cur = (*it)->backward(cur);
  return cur;
}

std::vector<ParamPtr> Network::params() const {
  std::vector<ParamPtr> out;
  std::unordered_set<const Param*> seen;
  for (const auto& l : layers_) {
    for (const auto& p : l->params()) {
      if (seen.insert(p.get()).second) out.push_back(p);
    }
  }
  return out;
}

std::vector<BnStatePtr> Network::bn_states() const {
  std::vector<BnStatePtr> out;
  std::unordered_set<const BnState*> seen;
  for (const auto& l : layers_) {
    if (auto s = l->bn_state(); s && seen.insert(s.get()).second) out.push_back(s);
  }
  return out;
}

void Network::zero_grad() {
  for (const auto& p : params()) p->grad.fill(0.0);
}

}  // namespace egu
