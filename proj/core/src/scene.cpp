#include "egunet/scene.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <string>

#include "egunet/errors.hpp"
#include "egunet/metrics.hpp"
#include "egunet/rng.hpp"

namespace egu {

void SceneSpec::validate() const {
  if (height < 4 || width < 4) throw ConfigError("scene: extents must be at least 4");
  if (bands < 8) throw ConfigError("scene: need at least 8 bands");
  if (classes < 2 || classes > 8) throw ConfigError("scene: classes must lie in [2, 8]");
  if (!(softmax_temp > 0.0)) throw ConfigError("scene: softmax temperature must be positive");
  if (!(field_sigma > 0.0) || !(scale_sigma > 0.0)) {
    throw ConfigError("scene: field correlation lengths must be positive");
  }
  if (pure_per_class < 0) throw ConfigError("scene: pure pixel count must be non-negative");
  if (pure_per_class * classes > height * width) {
    throw ConfigError("scene: more pure pixels requested than pixels available");
  }
  if (!(scale_min > 0.0) || scale_max < scale_min) {
    throw ConfigError("scene: brightness range must satisfy 0 < min <= max");
  }
  if (snr_db < 0.0) throw ConfigError("scene: snr must be positive (or 0 to disable noise)");
  if (impulse_fraction < 0.0 || impulse_fraction > 0.2) {
    throw ConfigError("scene: impulse fraction must lie in [0, 0.2]");
  }
  if (absorptions_min < 0 || absorptions_max < absorptions_min) {
    throw ConfigError("scene: absorption feature range is inverted");
  }
  if (min_separation < 0.0) throw ConfigError("scene: separation floor must be non-negative");
}

namespace {

std::vector<double> gaussian_kernel(double sigma) {
  int radius = std::max(1, static_cast<int>(std::ceil(2.0 * sigma)));
  std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    double v = std::exp(-0.5 * (i * i) / (sigma * sigma));
    k[static_cast<std::size_t>(i + radius)] = v;
    sum += v;
  }
  for (double& v : k) v /= sum;
  return k;
}

int wrap(int i, int n) {
  i %= n;
  return i < 0 ? i + n : i;
}

}  // namespace

void gaussian_blur_field(Eigen::MatrixXd& field, double sigma) {
  if (!(sigma > 0.0)) throw ConfigError("blur: sigma must be positive");
  const int h = static_cast<int>(field.rows()), w = static_cast<int>(field.cols());
  std::vector<double> k = gaussian_kernel(sigma);
  int radius = (static_cast<int>(k.size()) - 1) / 2;

  Eigen::MatrixXd tmp(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int d = -radius; d <= radius; ++d) {
        acc += k[static_cast<std::size_t>(d + radius)] * field(y, wrap(x + d, w));
      }
      tmp(y, x) = acc;
    }
  }
  for (int x = 0; x < w; ++x) {
    for (int y = 0; y < h; ++y) {
      double acc = 0.0;
      for (int d = -radius; d <= radius; ++d) {
        acc += k[static_cast<std::size_t>(d + radius)] * tmp(wrap(y + d, h), x);
      }
      field(y, x) = acc;
    }
  }
}

Scene generate_scene(const SceneSpec& spec, std::uint64_t seed) {
  spec.validate();
  const int h = spec.height, w = spec.width, b = spec.bands, c = spec.classes;
  const int n = h * w;

  // Class spectra: a smooth continuum carved by a few Gaussian absorption
  // dips, redrawn until every pair keeps a minimum spectral angle.
  Rng rng_e = make_rng(seed, "scene/endmembers");
  Eigen::MatrixXd e(b, c);
  for (int j = 0; j < c; ++j) {
    for (int attempt = 0;; ++attempt) {
      if (attempt >= 200) {
        throw NumericError("scene: could not draw class spectra with the requested separation");
      }
      double base = uniform(rng_e, 0.35, 0.75);
      double slope = uniform(rng_e, -0.2, 0.2);
      double curve = uniform(rng_e, -0.15, 0.15);
      int dips = spec.absorptions_min +
                 (spec.absorptions_max > spec.absorptions_min
                      ? uniform_index(rng_e, spec.absorptions_max - spec.absorptions_min + 1)
                      : 0);
      std::vector<double> center(static_cast<std::size_t>(dips)), width_(static_cast<std::size_t>(dips)),
          depth(static_cast<std::size_t>(dips));
      for (int d = 0; d < dips; ++d) {
        center[static_cast<std::size_t>(d)] = uniform(rng_e, 0.1, 0.9);
        width_[static_cast<std::size_t>(d)] = uniform(rng_e, 0.02, 0.08);
        depth[static_cast<std::size_t>(d)] = uniform(rng_e, 0.1, 0.4);
      }
      Eigen::VectorXd spectrum(b);
      for (int i = 0; i < b; ++i) {
        double t = b > 1 ? static_cast<double>(i) / (b - 1) : 0.0;
        double v = base + slope * (t - 0.5) + curve * (t - 0.5) * (t - 0.5);
        for (int d = 0; d < dips; ++d) {
          double z = (t - center[static_cast<std::size_t>(d)]) / width_[static_cast<std::size_t>(d)];
          v *= 1.0 - depth[static_cast<std::size_t>(d)] * std::exp(-0.5 * z * z);
        }
        spectrum(i) = std::clamp(v, 0.02, 1.0);
      }
      bool separated = true;
      for (int prev = 0; prev < j && separated; ++prev) {
        separated = spectral_angle(spectrum, e.col(prev)) >= spec.min_separation;
      }
      if (separated) {
        e.col(j) = spectrum;
        break;
      }
    }
  }

  // Smooth per-class fields through a softmax give spatially coherent
  // mixtures; planted one-hot pixels guarantee exact purity somewhere.
  Rng rng_a = make_rng(seed, "scene/abundance");
  AbundanceMap abundance(h, w, c);
  {
    std::vector<Eigen::MatrixXd> fields;
    fields.reserve(static_cast<std::size_t>(c));
    for (int j = 0; j < c; ++j) {
      Eigen::MatrixXd f(h, w);
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) f(y, x) = normal(rng_a);
      }
      gaussian_blur_field(f, spec.field_sigma);
      double mean = f.mean();
      double sd = std::sqrt((f.array() - mean).square().mean());
      if (sd > 0.0) f = (f.array() - mean).matrix() / sd;
      fields.push_back(std::move(f));
    }
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        double mx = -1e300;
        for (int j = 0; j < c; ++j) mx = std::max(mx, fields[static_cast<std::size_t>(j)](y, x));
        double sum = 0.0;
        for (int j = 0; j < c; ++j) {
          double v = std::exp((fields[static_cast<std::size_t>(j)](y, x) - mx) / spec.softmax_temp);
          abundance.data.at(y, x, j) = v;
          sum += v;
        }
        for (int j = 0; j < c; ++j) abundance.data.at(y, x, j) /= sum;
      }
    }
    if (spec.pure_per_class > 0) {
      std::vector<int> order(static_cast<std::size_t>(n));
      std::iota(order.begin(), order.end(), 0);
      std::shuffle(order.begin(), order.end(), rng_a);
      int pos = 0;
      for (int j = 0; j < c; ++j) {
        for (int p = 0; p < spec.pure_per_class; ++p) {
          int pix = order[static_cast<std::size_t>(pos++)];
          int y = pix / w, x = pix % w;
          for (int jj = 0; jj < c; ++jj) abundance.data.at(y, x, jj) = jj == j ? 1.0 : 0.0;
        }
      }
    }
  }

  // Linear mixing, then the per-pixel brightness field.
  HsiCube cube(h, w, b);
  cube.wavelengths.resize(static_cast<std::size_t>(b));
  for (int i = 0; i < b; ++i) {
    double t = b > 1 ? static_cast<double>(i) / (b - 1) : 0.0;
    cube.wavelengths[static_cast<std::size_t>(i)] = 0.4 + t * (2.5 - 0.4);
  }

  Rng rng_s = make_rng(seed, "scene/scale");
  Eigen::MatrixXd scale = Eigen::MatrixXd::Constant(h, w, spec.scale_min);
  if (spec.scale_max > spec.scale_min) {
    Eigen::MatrixXd f(h, w);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) f(y, x) = normal(rng_s);
    }
    gaussian_blur_field(f, spec.scale_sigma);
    double mean = f.mean();
    double sd = std::sqrt((f.array() - mean).square().mean());
    if (sd > 0.0) f = (f.array() - mean).matrix() / sd;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        double sig = 1.0 / (1.0 + std::exp(-f(y, x)));
        scale(y, x) = spec.scale_min + (spec.scale_max - spec.scale_min) * sig;
      }
    }
  }

  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      Eigen::VectorXd a(c);
      for (int j = 0; j < c; ++j) a(j) = abundance.data.at(y, x, j);
      Eigen::VectorXd spec_px = scale(y, x) * (e * a);
      for (int i = 0; i < b; ++i) cube.data.at(y, x, i) = spec_px(i);
    }
  }

  // Additive Gaussian noise at the requested SNR (relative to the clean
  // signal power), clamped at zero only.
  if (spec.snr_db > 0.0) {
    Rng rng_n = make_rng(seed, "scene/noise");
    double power = cube.data.vec().squaredNorm() / static_cast<double>(cube.data.size());
    double sigma = std::sqrt(power) * std::pow(10.0, -spec.snr_db / 20.0);
    for (std::int64_t i = 0; i < cube.data.size(); ++i) {
      cube.data[i] = std::max(0.0, cube.data[i] + sigma * normal(rng_n));
    }
  }

  // Saturated impulse entries model dead or glinting detector cells.
  if (spec.impulse_fraction > 0.0) {
    Rng rng_i = make_rng(seed, "scene/impulse");
    std::int64_t total = cube.data.size();
    std::int64_t count = std::llround(spec.impulse_fraction * static_cast<double>(total));
    std::set<std::int64_t> hit;
    while (static_cast<std::int64_t>(hit.size()) < count) {
      std::int64_t idx = static_cast<std::int64_t>(
          std::uniform_int_distribution<std::uint64_t>(0, static_cast<std::uint64_t>(total - 1))(rng_i));
      hit.insert(idx);
    }
    for (std::int64_t idx : hit) cube.data[idx] = 1.0;
  }

  Scene out;
  out.cube = std::move(cube);
  out.abundance = std::move(abundance);
  out.endmembers = EndmemberMatrix(std::move(e));
  out.cube.validate();
  out.abundance.validate();
  out.endmembers.validate();
  return out;
}

HsiCube gaussian_downsample(const HsiCube& cube, int factor) {
  cube.validate();
  if (factor < 1) throw ConfigError("downsample: factor must be positive");
  if (cube.height % factor != 0 || cube.width % factor != 0) {
    throw DimError("downsample: extents " + std::to_string(cube.height) + "x" +
                   std::to_string(cube.width) + " are not divisible by " + std::to_string(factor));
  }
  const int h = cube.height, w = cube.width, b = cube.bands;
  const int oh = h / factor, ow = w / factor;

  HsiCube out(oh, ow, b);
  out.wavelengths = cube.wavelengths;
  double sigma = factor / 2.0;
  Eigen::MatrixXd band(h, w);
  for (int i = 0; i < b; ++i) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) band(y, x) = cube.data.at(y, x, i);
    }
    gaussian_blur_field(band, sigma);
    for (int y = 0; y < oh; ++y) {
      for (int x = 0; x < ow; ++x) out.data.at(y, x, i) = band(y * factor, x * factor);
    }
  }
  return out;
}

AbundanceMap classmap_to_abundance(const std::vector<int>& labels, int map_h, int map_w,
                                   int factor, int classes) {
  if (map_h < 1 || map_w < 1) throw DimError("classmap: extents must be positive");
  if (static_cast<std::int64_t>(labels.size()) != static_cast<std::int64_t>(map_h) * map_w) {
    throw DimError("classmap: label count does not match extents");
  }
  if (factor < 1) throw ConfigError("classmap: factor must be positive");
  if (map_h % factor != 0 || map_w % factor != 0) {
    throw DimError("classmap: extents " + std::to_string(map_h) + "x" + std::to_string(map_w) +
                   " are not divisible by " + std::to_string(factor));
  }
  int max_label = -1;
  for (int l : labels) {
    if (l < 0) throw ConfigError("classmap: negative label");
    max_label = std::max(max_label, l);
  }
  if (classes <= 0) classes = max_label + 1;
  if (max_label >= classes) {
    throw ConfigError("classmap: label " + std::to_string(max_label) + " outside " +
                      std::to_string(classes) + " classes");
  }

  const int oh = map_h / factor, ow = map_w / factor;
  AbundanceMap out(oh, ow, classes);
  const double inv = 1.0 / (static_cast<double>(factor) * factor);
  for (int y = 0; y < map_h; ++y) {
    for (int x = 0; x < map_w; ++x) {
      int l = labels[static_cast<std::size_t>(y) * map_w + x];
      out.data.at(y / factor, x / factor, l) += inv;
    }
  }
  return out;
}

EndmemberMatrix reference_endmembers_from_pure(const HsiCube& cube, const AbundanceMap& abundance,
                                               double purity) {
  cube.validate();
  if (abundance.height != cube.height || abundance.width != cube.width) {
    throw DimError("pure references: abundance extents do not match the cube");
  }
  if (!(purity > 0.0) || purity > 1.0) {
    throw ConfigError("pure references: purity must lie in (0, 1]");
  }
  const int c = abundance.classes, b = cube.bands;
  EndmemberMatrix e(b, c);
  std::vector<int> missing;
  for (int j = 0; j < c; ++j) {
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(b);
    int count = 0;
    for (int y = 0; y < cube.height; ++y) {
      for (int x = 0; x < cube.width; ++x) {
        if (abundance.data.at(y, x, j) >= purity - 1e-12) {
          for (int i = 0; i < b; ++i) acc(i) += cube.data.at(y, x, i);
          ++count;
        }
      }
    }
    if (count == 0) {
      missing.push_back(j);
    } else {
      e.m.col(j) = acc / count;
    }
  }
  if (!missing.empty()) {
    std::string list;
    for (std::size_t i = 0; i < missing.size(); ++i) {
      if (i) list += ", ";
      list += std::to_string(missing[i]);
    }
    throw NumericError("pure references: no pixel reaches purity " + std::to_string(purity) +
                       " for class(es) " + list);
  }
  return e;
}

}  // namespace egu
