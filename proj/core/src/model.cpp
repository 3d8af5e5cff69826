#include "egunet/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "egunet/dataset_io.hpp"
#include "egunet/errors.hpp"
#include "egunet/optim.hpp"

namespace egu {

using nlohmann::json;

const char* to_string(Variant v) { return v == Variant::Pw ? "pw" : "ss"; }

const char* to_string(Ablation a) {
  switch (a) {
    case Ablation::Full: return "full";
    case Ablation::UrOnly: return "ur_only";
    case Ablation::EOnly: return "e_only";
  }
  return "?";
}

Variant variant_from_string(const std::string& s) {
  if (s == "pw") return Variant::Pw;
  if (s == "ss") return Variant::Ss;
  throw ConfigError("unknown variant '" + s + "' (expected pw or ss)");
}

Ablation ablation_from_string(const std::string& s) {
  if (s == "full") return Ablation::Full;
  if (s == "ur_only") return Ablation::UrOnly;
  if (s == "e_only") return Ablation::EOnly;
  throw ConfigError("unknown ablation '" + s + "' (expected full, ur_only or e_only)");
}

void ModelConfig::validate() const {
  if (bands < 2) throw ConfigError("model: need at least 2 bands");
  if (classes < 2) throw ConfigError("model: need at least 2 classes");
  if (!(dropout_keep > 0.0) || dropout_keep > 1.0) {
    throw ConfigError("model: dropout keep probability must lie in (0, 1]");
  }
  if (encoder_widths.size() != 2 || decoder_widths.size() != 3) {
    throw ConfigError("model: expected 2 encoder and 3 decoder hidden widths");
  }
  for (int wd : encoder_widths) {
    if (wd < 1) throw ConfigError("model: encoder widths must be positive");
  }
  for (int wd : decoder_widths) {
    if (wd < 1) throw ConfigError("model: decoder widths must be positive");
  }
}

namespace {

struct BnPack {
  ParamPtr gamma, beta;
  BnStatePtr state;
};

BnPack make_bn(int features, const std::string& prefix) {
  return {std::make_shared<Param>(Tensor::full({features}, 1.0), prefix + ".gamma"),
          std::make_shared<Param>(Tensor::zeros({features}), prefix + ".beta"),
          std::make_shared<BnState>(features)};
}

std::unique_ptr<Layer> bn_layer(const BnPack& p) {
  return std::make_unique<BatchNormLayer>(p.gamma, p.beta, p.state);
}

// Dense encoder parameter set: widths bands -> h0 -> h1 -> classes -> classes.
struct DenseEncoderParams {
  ParamPtr w1, b1, w2, b2, w3, b3, w4, b4;
  BnPack bn1, bn2, bn3;
};

DenseEncoderParams make_dense_encoder(int bands, int classes, int h0, int h1, Rng& rng,
                                      const std::string& prefix) {
  DenseEncoderParams p;
  p.w1 = make_dense_weight(bands, h0, rng, prefix + "1.w");
  p.b1 = make_bias(h0, prefix + "1.b");
  p.bn1 = make_bn(h0, prefix + "1.bn");
  p.w2 = make_dense_weight(h0, h1, rng, prefix + "2.w");
  p.b2 = make_bias(h1, prefix + "2.b");
  p.bn2 = make_bn(h1, prefix + "2.bn");
  p.w3 = make_dense_weight(h1, classes, rng, prefix + "3.w");
  p.b3 = make_bias(classes, prefix + "3.b");
  p.bn3 = make_bn(classes, prefix + "3.bn");
  p.w4 = make_dense_weight(classes, classes, rng, prefix + "4.w");
  p.b4 = make_bias(classes, prefix + "4.b");
  return p;
}

// Block 1: FC+BN+Dropout+Tanh; 2: FC+BN+Tanh; 3: FC+BN+ReLU; 4: FC+Softmax.
void stack_dense_encoder(Network& net, const DenseEncoderParams& p, double keep) {
  net.add(std::make_unique<DenseLayer>(p.w1, p.b1));
  net.add(bn_layer(p.bn1));
  net.add(std::make_unique<DropoutLayer>(keep));
  net.add(std::make_unique<ActivationLayer>(Act::Tanh));
  net.add(std::make_unique<DenseLayer>(p.w2, p.b2));
  net.add(bn_layer(p.bn2));
  net.add(std::make_unique<ActivationLayer>(Act::Tanh));
  net.add(std::make_unique<DenseLayer>(p.w3, p.b3));
  net.add(bn_layer(p.bn3));
  net.add(std::make_unique<ActivationLayer>(Act::Relu));
  net.add(std::make_unique<DenseLayer>(p.w4, p.b4));
  net.add(std::make_unique<ActivationLayer>(Act::Softmax));
}

// 1x1 convolutional guidance parameters for the spatial-spectral variant;
// blocks 3 and 4 are the ones the unmixing stream aliases.
struct ConvGuidanceParams {
  ParamPtr k1, b1, k2, b2, k3, b3, k4, b4;
  BnPack bn1, bn2, bn3;
};

ConvGuidanceParams make_conv_guidance(int bands, int classes, int h0, int h1, Rng& rng,
                                      const std::string& prefix) {
  ConvGuidanceParams p;
  p.k1 = make_conv_kernel(1, 1, bands, h0, rng, prefix + "1.k");
  p.b1 = make_bias(h0, prefix + "1.b");
  p.bn1 = make_bn(h0, prefix + "1.bn");
  p.k2 = make_conv_kernel(1, 1, h0, h1, rng, prefix + "2.k");
  p.b2 = make_bias(h1, prefix + "2.b");
  p.bn2 = make_bn(h1, prefix + "2.bn");
  p.k3 = make_conv_kernel(1, 1, h1, classes, rng, prefix + "3.k");
  p.b3 = make_bias(classes, prefix + "3.b");
  p.bn3 = make_bn(classes, prefix + "3.bn");
  p.k4 = make_conv_kernel(1, 1, classes, classes, rng, prefix + "4.k");
  p.b4 = make_bias(classes, prefix + "4.b");
  return p;
}

void stack_conv_guidance(Network& net, const ConvGuidanceParams& p, double keep) {
  net.add(std::make_unique<Conv2dLayer>(p.k1, p.b1));
  net.add(bn_layer(p.bn1));
  net.add(std::make_unique<DropoutLayer>(keep));
  net.add(std::make_unique<ActivationLayer>(Act::Tanh));
  net.add(std::make_unique<Conv2dLayer>(p.k2, p.b2));
  net.add(bn_layer(p.bn2));
  net.add(std::make_unique<ActivationLayer>(Act::Tanh));
  net.add(std::make_unique<Conv2dLayer>(p.k3, p.b3));
  net.add(bn_layer(p.bn3));
  net.add(std::make_unique<ActivationLayer>(Act::Relu));
  net.add(std::make_unique<Conv2dLayer>(p.k4, p.b4));
  net.add(std::make_unique<ActivationLayer>(Act::Softmax));
}

// Spatial unmixing encoder: 5x5 and 3x3 convolutions of its own, then the
// aliased 1x1 block and the aliased softmax block run as a transposed
// convolution.  Pooling sits before each activation.
void stack_conv_unmixer(Network& net, int bands, int h0, int h1, const ConvGuidanceParams& shared,
                        double keep, Rng& rng) {
  ParamPtr ku1 = make_conv_kernel(5, 5, bands, h0, rng, "u1.k");
  ParamPtr bu1 = make_bias(h0, "u1.b");
  BnPack bnu1 = make_bn(h0, "u1.bn");
  ParamPtr ku2 = make_conv_kernel(3, 3, h0, h1, rng, "u2.k");
  ParamPtr bu2 = make_bias(h1, "u2.b");
  BnPack bnu2 = make_bn(h1, "u2.bn");

  net.add(std::make_unique<Conv2dLayer>(ku1, bu1));
  net.add(bn_layer(bnu1));
  net.add(std::make_unique<DropoutLayer>(keep));
  net.add(std::make_unique<AvgPoolLayer>(2));
  net.add(std::make_unique<ActivationLayer>(Act::Tanh));
  net.add(std::make_unique<Conv2dLayer>(ku2, bu2));
  net.add(bn_layer(bnu2));
  net.add(std::make_unique<AvgPoolLayer>(2));
  net.add(std::make_unique<ActivationLayer>(Act::Tanh));
  net.add(std::make_unique<Conv2dLayer>(shared.k3, shared.b3));
  net.add(bn_layer(shared.bn3));
  net.add(std::make_unique<AvgPoolLayer>(2));
  net.add(std::make_unique<ActivationLayer>(Act::Relu));
  net.add(std::make_unique<Deconv2dLayer>(shared.k4, shared.b4));
  net.add(std::make_unique<ActivationLayer>(Act::Softmax));
}

void stack_dense_decoder(Network& net, int bands, int classes, const std::vector<int>& widths,
                         Rng& rng) {
  int d0 = widths[0], d1 = widths[1], d2 = widths[2];
  auto block = [&](int in, int out, const std::string& prefix) {
    net.add(std::make_unique<DenseLayer>(make_dense_weight(in, out, rng, prefix + ".w"),
                                         make_bias(out, prefix + ".b")));
    BnPack bn = make_bn(out, prefix + ".bn");
    net.add(bn_layer(bn));
    net.add(std::make_unique<ActivationLayer>(Act::Sigmoid));
  };
  block(classes, d0, "d1");
  block(d0, d1, "d2");
  block(d1, d2, "d3");
  block(d2, bands, "d4");
}

void stack_conv_decoder(Network& net, int bands, int classes, const std::vector<int>& widths,
                        Rng& rng) {
  int d0 = widths[0], d1 = widths[1], d2 = widths[2];
  auto block = [&](int k, int in, int out, const std::string& prefix) {
    // Transposed convolutions store kernels [k, k, out, in].
    net.add(std::make_unique<Deconv2dLayer>(make_conv_kernel(k, k, out, in, rng, prefix + ".k"),
                                            make_bias(out, prefix + ".b")));
    BnPack bn = make_bn(out, prefix + ".bn");
    net.add(bn_layer(bn));
    net.add(std::make_unique<ActivationLayer>(Act::Sigmoid));
  };
  block(1, classes, d0, "d1");
  block(1, d0, d1, "d2");
  block(3, d1, d2, "d3");
  block(5, d2, bands, "d4");
}

}  // namespace

std::vector<ParamPtr> EguNet::parameters() const {
  std::vector<ParamPtr> out;
  std::unordered_set<const Param*> seen;
  for (const Network* net : {&e_net, &ur_encoder, &ur_decoder}) {
    for (const auto& p : net->params()) {
      if (seen.insert(p.get()).second) out.push_back(p);
    }
  }
  return out;
}

std::vector<BnStatePtr> EguNet::batchnorm_states() const {
  std::vector<BnStatePtr> out;
  std::unordered_set<const BnState*> seen;
  for (const Network* net : {&e_net, &ur_encoder, &ur_decoder}) {
    for (const auto& s : net->bn_states()) {
      if (seen.insert(s.get()).second) out.push_back(s);
    }
  }
  return out;
}

EguNet build_network(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  EguNet net;
  net.cfg = cfg;
  net.init_seed = seed;
  Rng rng = make_rng(seed, "model/init");

  const int b = cfg.bands, c = cfg.classes;
  const int h0 = cfg.encoder_widths[0], h1 = cfg.encoder_widths[1];
  const bool want_e = cfg.ablation != Ablation::UrOnly;
  const bool want_ur = cfg.ablation != Ablation::EOnly;
  const bool tied = cfg.ablation == Ablation::Full;

  if (cfg.variant == Variant::Pw) {
    DenseEncoderParams enc = make_dense_encoder(b, c, h0, h1, rng, "e");
    if (want_e) stack_dense_encoder(net.e_net, enc, cfg.dropout_keep);
    if (want_ur) {
      DenseEncoderParams ur_enc =
          tied ? enc : make_dense_encoder(b, c, h0, h1, rng, "u");
      stack_dense_encoder(net.ur_encoder, ur_enc, cfg.dropout_keep);
      stack_dense_decoder(net.ur_decoder, b, c, cfg.decoder_widths, rng);
      if (tied) net.shared_blocks = {{1, 1}, {2, 2}, {3, 3}, {4, 4}};
    }
  } else {
    ConvGuidanceParams enc = make_conv_guidance(b, c, h0, h1, rng, "e");
    if (want_e) stack_conv_guidance(net.e_net, enc, cfg.dropout_keep);
    if (want_ur) {
      ConvGuidanceParams shared =
          tied ? enc : make_conv_guidance(b, c, h0, h1, rng, "u");
      stack_conv_unmixer(net.ur_encoder, b, h0, h1, shared, cfg.dropout_keep, rng);
      stack_conv_decoder(net.ur_decoder, b, c, cfg.decoder_widths, rng);
      if (tied) net.shared_blocks = {{3, 3}, {4, 4}};
    }
  }
  return net;
}

EguNet build_network(int bands, int classes, Variant variant, std::uint64_t seed) {
  ModelConfig cfg;
  cfg.bands = bands;
  cfg.classes = classes;
  cfg.variant = variant;
  return build_network(cfg, seed);
}

double guidance_loss(const Tensor& pred, const Eigen::MatrixXd& labels) {
  ConstMatView p = pred.last_dim_mat();
  if (p.rows() != labels.rows() || p.cols() != labels.cols()) {
    throw DimError("guidance loss: prediction and label shapes disagree");
  }
  const double eps = 1e-12;
  double acc = 0.0;
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    for (Eigen::Index j = 0; j < p.cols(); ++j) {
      double pc = std::clamp(p(i, j), eps, 1.0 - eps);
      double y = labels(i, j);
      acc += y * std::log(pc) + (1.0 - y) * std::log(1.0 - pc);
    }
  }
  return -acc / static_cast<double>(p.rows());
}

Tensor guidance_loss_grad(const Tensor& pred, const Eigen::MatrixXd& labels) {
  ConstMatView p = pred.last_dim_mat();
  if (p.rows() != labels.rows() || p.cols() != labels.cols()) {
    throw DimError("guidance loss: prediction and label shapes disagree");
  }
  const double eps = 1e-12;
  Tensor grad(pred.shape());
  MatView g = grad.last_dim_mat();
  const double inv_n = 1.0 / static_cast<double>(p.rows());
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    for (Eigen::Index j = 0; j < p.cols(); ++j) {
      double pv = p(i, j);
      if (pv <= eps || pv >= 1.0 - eps) {
        g(i, j) = 0.0;  // the clamp flattens the loss here
      } else {
        double y = labels(i, j);
        g(i, j) = -inv_n * (y / pv - (1.0 - y) / (1.0 - pv));
      }
    }
  }
  return grad;
}

double reconstruction_loss(const Tensor& input, const Tensor& reconstruction) {
  if (!input.same_shape(reconstruction)) {
    throw DimError("reconstruction loss: shapes disagree");
  }
  double acc = 0.0;
  for (std::int64_t i = 0; i < input.size(); ++i) {
    double d = reconstruction[i] - input[i];
    acc += d * d;
  }
  return acc / static_cast<double>(input.size());
}

Tensor reconstruction_loss_grad(const Tensor& input, const Tensor& reconstruction) {
  if (!input.same_shape(reconstruction)) {
    throw DimError("reconstruction loss: shapes disagree");
  }
  Tensor grad(input.shape());
  const double scale = 2.0 / static_cast<double>(input.size());
  for (std::int64_t i = 0; i < input.size(); ++i) {
    grad[i] = scale * (reconstruction[i] - input[i]);
  }
  return grad;
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("train: epochs must be positive");
  if (base_lr <= 0.0) throw ConfigError("train: base learning rate must be positive");
  if (lr_power <= 0.0) throw ConfigError("train: lr power must be positive");
}

std::vector<EpochStats> train(EguNet& model, const HsiCube& cube, const EndmemberBundle& bundle,
                              const TrainConfig& cfg, const EpochCallback& on_epoch) {
  cfg.validate();
  cube.validate();
  bundle.validate();
  if (cube.bands != model.cfg.bands) {
    throw DimError("train: cube band count does not match the model");
  }
  if (static_cast<int>(bundle.signatures.cols()) != model.cfg.bands) {
    throw DimError("train: bundle band count does not match the model");
  }
  if (bundle.classes() != model.cfg.classes) {
    throw DimError("train: bundle class count does not match the model");
  }

  const bool run_e = model.cfg.ablation != Ablation::UrOnly;
  const bool run_ur = model.cfg.ablation != Ablation::EOnly;
  const int ne = bundle.count();
  const int n = cube.pixels(), b = cube.bands;

  std::vector<ParamPtr> params;
  {
    std::unordered_set<const Param*> seen;
    auto take = [&](const Network& net) {
      for (const auto& p : net.params()) {
        if (seen.insert(p.get()).second) params.push_back(p);
      }
    };
    if (run_e) take(model.e_net);
    if (run_ur) {
      take(model.ur_encoder);
      take(model.ur_decoder);
    }
  }

  AdamConfig acfg;
  acfg.base_lr = cfg.base_lr;
  acfg.power = cfg.lr_power;
  acfg.max_iter = cfg.epochs;
  acfg.beta1 = cfg.adam_beta1;
  acfg.beta2 = cfg.adam_beta2;
  acfg.eps = cfg.adam_eps;
  Adam opt(params, acfg);

  // Guidance input: the bundle spectra, shaped per variant.
  Tensor signatures;
  if (model.cfg.variant == Variant::Pw) {
    signatures = Tensor({ne, b});
  } else {
    signatures = Tensor({ne, 1, 1, b});
  }
  for (int i = 0; i < ne; ++i) {
    for (int j = 0; j < b; ++j) {
      signatures[static_cast<std::int64_t>(i) * b + j] = bundle.signatures(i, j);
    }
  }

  Tensor image;
  if (run_ur && model.cfg.variant == Variant::Ss) {
    image = Tensor({1, cube.height, cube.width, b}, cube.data.storage());
  }

  ConstMatView x = cube.pixel_mat();
  std::vector<EpochStats> logbook;
  logbook.reserve(static_cast<std::size_t>(cfg.epochs));

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    Rng rng = make_rng(cfg.seed, "train/epoch", static_cast<std::uint64_t>(epoch));
    EpochStats st;
    st.epoch = epoch;
    st.lr = opt.next_lr();

    if (run_e) {
      Tensor pred = model.e_net.forward(signatures, Mode::Train, &rng);
      st.loss_guidance = guidance_loss(pred, bundle.labels);
      model.e_net.backward(guidance_loss_grad(pred, bundle.labels));
    }
    if (run_ur) {
      if (model.cfg.variant == Variant::Pw) {
        // A fresh batch of as many pixels as the bundle holds, drawn with
        // replacement.
        Tensor batch({ne, b});
        for (int i = 0; i < ne; ++i) {
          int pix = uniform_index(rng, n);
          for (int j = 0; j < b; ++j) {
            batch[static_cast<std::int64_t>(i) * b + j] = x(pix, j);
          }
        }
        Tensor code = model.ur_encoder.forward(batch, Mode::Train, &rng);
        Tensor recon = model.ur_decoder.forward(code, Mode::Train, &rng);
        st.loss_reconstruction = reconstruction_loss(batch, recon);
        Tensor gcode = model.ur_decoder.backward(reconstruction_loss_grad(batch, recon));
        model.ur_encoder.backward(gcode);
      } else {
        Tensor code = model.ur_encoder.forward(image, Mode::Train, &rng);
        Tensor recon = model.ur_decoder.forward(code, Mode::Train, &rng);
        st.loss_reconstruction = reconstruction_loss(image, recon);
        Tensor gcode = model.ur_decoder.backward(reconstruction_loss_grad(image, recon));
        model.ur_encoder.backward(gcode);
      }
    }

    st.loss_total = st.loss_guidance + st.loss_reconstruction;
    if (!std::isfinite(st.loss_total)) {
      throw NumericError("train: loss went non-finite at epoch " + std::to_string(epoch) +
                         " (lr " + std::to_string(st.lr) + ")");
    }
    opt.step();
    opt.zero_grad();
    model.epochs_trained += 1;
    logbook.push_back(st);
    if (on_epoch) on_epoch(st);
  }
  return logbook;
}

AbundanceMap infer_abundances(EguNet& model, const HsiCube& cube) {
  cube.validate();
  if (cube.bands != model.cfg.bands) {
    throw DimError("infer: cube band count does not match the model");
  }
  Network& encoder = model.ur_encoder.empty() ? model.e_net : model.ur_encoder;
  if (encoder.empty()) throw StateError("infer: model has no encoder stream");

  AbundanceMap out(cube.height, cube.width, model.cfg.classes);
  if (model.cfg.variant == Variant::Pw) {
    Tensor in({cube.pixels(), cube.bands}, cube.data.storage());
    Tensor pred = encoder.forward(in, Mode::Infer, nullptr);
    out.data = pred.reshaped({cube.height, cube.width, model.cfg.classes});
  } else {
    Tensor in({1, cube.height, cube.width, cube.bands}, cube.data.storage());
    Tensor pred = encoder.forward(in, Mode::Infer, nullptr);
    out.data = pred.reshaped({cube.height, cube.width, model.cfg.classes});
  }
  out.validate();
  return out;
}

void save_checkpoint(const std::string& path, const EguNet& model) {
  json j;
  j["magic"] = "EGUC";
  j["version"] = 1;
  j["variant"] = to_string(model.cfg.variant);
  j["ablation"] = to_string(model.cfg.ablation);
  j["bands"] = model.cfg.bands;
  j["classes"] = model.cfg.classes;
  j["encoder_widths"] = model.cfg.encoder_widths;
  j["decoder_widths"] = model.cfg.decoder_widths;
  j["dropout_keep"] = model.cfg.dropout_keep;
  j["epochs_trained"] = model.epochs_trained;
  j["init_seed"] = model.init_seed;
  j["shared_blocks"] = json::array();
  for (auto [a, bb] : model.shared_blocks) j["shared_blocks"].push_back({a, bb});

  auto params = model.parameters();
  auto states = model.batchnorm_states();
  j["params"] = json::array();
  for (const auto& p : params) {
    j["params"].push_back({{"name", p->name}, {"shape", p->value.shape()}});
  }
  j["bn_states"] = json::array();
  for (const auto& s : states) {
    j["bn_states"].push_back({{"features", s->running_mean.dim(0)}});
  }

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(path + ": cannot open for writing");
  out << j.dump() << "\n";
  for (const auto& p : params) {
    io_detail::write_doubles(out, p->value.data(), p->value.size());
  }
  for (const auto& s : states) {
    io_detail::write_doubles(out, s->running_mean.data(), s->running_mean.size());
    io_detail::write_doubles(out, s->running_var.data(), s->running_var.size());
  }
  if (!out) throw IoError(path + ": write failed");
}

EguNet load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path + ": cannot open for reading");
  json j;
  try {
    j = json::parse(io_detail::read_header_line(in, path));
  } catch (const json::exception& e) {
    throw IoError(path + ": header is not valid JSON (" + e.what() + ")");
  }
  if (j.value("magic", "") != "EGUC") throw IoError(path + ": bad magic, not a checkpoint");
  if (j.value("version", 0) != 1) throw IoError(path + ": unsupported checkpoint version");

  ModelConfig cfg;
  cfg.bands = j.at("bands").get<int>();
  cfg.classes = j.at("classes").get<int>();
  cfg.variant = variant_from_string(j.at("variant").get<std::string>());
  cfg.ablation = ablation_from_string(j.at("ablation").get<std::string>());
  cfg.dropout_keep = j.at("dropout_keep").get<double>();
  cfg.encoder_widths = j.at("encoder_widths").get<std::vector<int>>();
  cfg.decoder_widths = j.at("decoder_widths").get<std::vector<int>>();

  EguNet model = build_network(cfg, j.value("init_seed", std::uint64_t{0}));
  model.epochs_trained = j.value("epochs_trained", std::int64_t{0});

  auto params = model.parameters();
  auto states = model.batchnorm_states();
  if (j.at("params").size() != params.size()) {
    throw IoError(path + ": parameter manifest does not match this architecture");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto shape = j["params"][i].at("shape").get<std::vector<int>>();
    if (shape != params[i]->value.shape()) {
      throw IoError(path + ": parameter '" + params[i]->name + "' has unexpected shape");
    }
  }
  if (j.at("bn_states").size() != states.size()) {
    throw IoError(path + ": batch-norm manifest does not match this architecture");
  }
  for (const auto& p : params) {
    io_detail::read_doubles(in, p->value.data(), p->value.size(), path);
  }
  for (const auto& s : states) {
    io_detail::read_doubles(in, s->running_mean.data(), s->running_mean.size(), path);
    io_detail::read_doubles(in, s->running_var.data(), s->running_var.size(), path);
  }
  io_detail::expect_eof(in, path);
  return model;
}

}  // namespace egu
