#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "egunet/bundles.hpp"
#include "egunet/layers.hpp"
#include "egunet/types.hpp"

namespace egu {

// Pw: pixel-wise streams built from dense blocks.  Ss: spatial-spectral
// streams built from convolutions so the unmixing stream sees neighborhoods.
enum class Variant { Pw, Ss };

// Full trains both streams jointly; UrOnly drops the guidance stream (a
// plain abundance autoencoder); EOnly trains the guidance stream alone and
// infers with it.
enum class Ablation { Full, UrOnly, EOnly };

const char* to_string(Variant v);
const char* to_string(Ablation a);
Variant variant_from_string(const std::string& s);
Ablation ablation_from_string(const std::string& s);

struct ModelConfig {
  int bands = 0;
  int classes = 0;
  Variant variant = Variant::Pw;
  Ablation ablation = Ablation::Full;
  double dropout_keep = 0.9;
  std::vector<int> encoder_widths = {128, 64};   // two hidden widths before C
  std::vector<int> decoder_widths = {64, 128, 192};

  void validate() const;
};

// Two-stream network: a guidance stream (e_net) maps candidate endmember
// spectra to soft class memberships, an unmixing stream (ur_encoder +
// ur_decoder) maps image pixels to abundances and back to spectra.  Encoder
// blocks are tied between the streams by aliasing the underlying parameter
// buffers: every block for the pixel-wise variant, the deepest two blocks
// for the spatial-spectral variant.
struct EguNet {
  ModelConfig cfg;
  Network e_net;
  Network ur_encoder;
  Network ur_decoder;
  std::vector<std::pair<int, int>> shared_blocks;  // (guidance block, unmixing block), 1-based
  std::int64_t epochs_trained = 0;
  std::uint64_t init_seed = 0;

  // Unique parameters in declaration order (the checkpoint order).
  std::vector<ParamPtr> parameters() const;
  std::vector<BnStatePtr> batchnorm_states() const;
};

EguNet build_network(const ModelConfig& cfg, std::uint64_t seed);
EguNet build_network(int bands, int classes, Variant variant, std::uint64_t seed);

// Guidance loss: binary cross entropy between predicted memberships and the
// bundle labels, summed over classes and averaged over samples, with the
// log arguments clamped at 1e-12.
double guidance_loss(const Tensor& pred, const Eigen::MatrixXd& labels);
Tensor guidance_loss_grad(const Tensor& pred, const Eigen::MatrixXd& labels);

// Reconstruction loss: squared Frobenius error divided by the full element
// count (pixels times bands).
double reconstruction_loss(const Tensor& input, const Tensor& reconstruction);
Tensor reconstruction_loss_grad(const Tensor& input, const Tensor& reconstruction);

struct TrainConfig {
  int epochs = 200;
  double base_lr = 0.1;
  double lr_power = 0.99;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;

  void validate() const;
};

struct EpochStats {
  int epoch = 0;  // 1-based
  double loss_guidance = 0.0;
  double loss_reconstruction = 0.0;
  double loss_total = 0.0;
  double lr = 0.0;
};

using EpochCallback = std::function<void(const EpochStats&)>;

// One optimizer step per epoch: the guidance stream sees the whole bundle,
// the unmixing stream sees a batch of as many pixels as the bundle holds
// (pixel-wise variant, sampled with replacement) or the whole image
// (spatial-spectral variant).  Throws NumericError if the loss goes
// non-finite.
std::vector<EpochStats> train(EguNet& model, const HsiCube& cube, const EndmemberBundle& bundle,
                              const TrainConfig& cfg, const EpochCallback& on_epoch = {});

// Per-pixel abundances in inference mode (running batch-norm statistics, no
// dropout).  Rows land on the simplex because the encoder ends in softmax.
AbundanceMap infer_abundances(EguNet& model, const HsiCube& cube);

// Whole-file checkpoint: JSON manifest line plus raw little-endian payload
// of every unique parameter and batch-norm running statistic.
void save_checkpoint(const std::string& path, const EguNet& model);
EguNet load_checkpoint(const std::string& path);

}  // namespace egu
