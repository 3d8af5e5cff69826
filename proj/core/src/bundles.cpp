#include "egunet/bundles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "egunet/baselines.hpp"
#include "egunet/errors.hpp"
#include "egunet/metrics.hpp"

namespace egu {

namespace {

std::vector<int> axis_starts(int extent, int block, int step) {
  std::vector<int> starts;
  for (int s = 0; s + block <= extent; s += step) starts.push_back(s);
  if (starts.empty() || starts.back() + block < extent) starts.push_back(extent - block);
  return starts;
}

int numerical_rank(const Eigen::MatrixXd& m, double rel_tol = 1e-12) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  const auto& sv = svd.singularValues();
  if (sv.size() == 0 || !(sv(0) > 0.0)) return 0;
  int r = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i) {
    if (sv(i) > rel_tol * sv(0)) ++r;
  }
  return r;
}

}  // namespace

std::vector<BlockWindow> partition_blocks(int image_h, int image_w, int block_size, int overlap) {
  if (image_h < 1 || image_w < 1) throw DimError("partition: image extents must be positive");
  if (block_size < 1) throw ConfigError("partition: block size must be positive");
  if (block_size > std::min(image_h, image_w)) {
    throw ConfigError("partition: block size " + std::to_string(block_size) +
                      " exceeds image extent");
  }
  if (overlap < 0 || overlap >= block_size) {
    throw ConfigError("partition: overlap must lie in [0, block_size)");
  }
  int step = block_size - overlap;
  std::vector<BlockWindow> out;
  for (int r : axis_starts(image_h, block_size, step)) {
    for (int c : axis_starts(image_w, block_size, step)) {
      out.push_back({r, c, block_size, block_size});
    }
  }
  return out;
}

Eigen::MatrixXd estimate_noise(const Eigen::MatrixXd& pixels, bool* ridged) {
  const Eigen::Index n = pixels.rows(), b = pixels.cols();
  if (n < 2 || b < 2) throw DimError("noise estimate: need at least 2 pixels and 2 bands");

  Eigen::MatrixXd r = pixels.transpose() * pixels;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(r);
  double lmax = eig.eigenvalues().maxCoeff();
  double lmin = eig.eigenvalues().minCoeff();
  bool need_ridge = !(lmax > 0.0) || lmin < 1e-12 * lmax;
  if (need_ridge) {
    // Near-singular band correlation (fewer pixels than bands, duplicated
    // bands): stabilize with a small ridge relative to the top eigenvalue.
    r += 1e-10 * std::max(lmax, 1.0) * Eigen::MatrixXd::Identity(b, b);
  }
  if (ridged) *ridged = need_ridge;

  Eigen::MatrixXd rr = r.ldlt().solve(Eigen::MatrixXd::Identity(b, b));

  // Residual of regressing band i on all others; the partitioned-inverse
  // identity turns each per-band solve into rank-one updates of rr.
  Eigen::MatrixXd w(n, b);
  for (Eigen::Index i = 0; i < b; ++i) {
    Eigen::MatrixXd xx = rr - (rr.col(i) * rr.row(i)) / rr(i, i);
    Eigen::VectorXd rra = r.col(i);
    rra(i) = 0.0;
    Eigen::VectorXd beta = xx * rra;
    beta(i) = 0.0;
    w.col(i) = pixels.col(i) - pixels * beta;
  }
  return w;
}

HysimeResult hysime(const Eigen::MatrixXd& pixels) {
  bool ridged = false;
  Eigen::MatrixXd noise = estimate_noise(pixels, &ridged);
  HysimeResult res = hysime(pixels, noise);
  res.ridged = ridged;
  return res;
}

HysimeResult hysime(const Eigen::MatrixXd& pixels, const Eigen::MatrixXd& noise) {
  const Eigen::Index n = pixels.rows(), b = pixels.cols();
  if (noise.rows() != n || noise.cols() != b) {
    throw DimError("hysime: noise matrix shape must match pixels");
  }
  double inv_n = 1.0 / static_cast<double>(n);
  Eigen::MatrixXd signal = pixels - noise;
  Eigen::MatrixXd rs = signal.transpose() * signal * inv_n;
  Eigen::MatrixXd rw = noise.transpose() * noise * inv_n;
  Eigen::MatrixXd ry = pixels.transpose() * pixels * inv_n;

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(rs);
  // Eigen sorts ascending; walk descending so deltas follow signal strength.
  HysimeResult res;
  res.deltas.reserve(static_cast<std::size_t>(b));
  for (Eigen::Index i = b - 1; i >= 0; --i) {
    Eigen::VectorXd e = eig.eigenvectors().col(i);
    double py = e.dot(ry * e);
    double pn = e.dot(rw * e);
    double delta = py - 2.0 * pn;
    res.deltas.push_back(delta);
    if (delta > 0.0) ++res.dimension;
  }
  return res;
}

std::vector<int> vca(const Eigen::MatrixXd& pixels, int count, Rng& rng) {
  const Eigen::Index n = pixels.rows(), b = pixels.cols();
  if (count < 1) throw ConfigError("vca: count must be positive");
  if (count > std::min(n, b)) {
    throw DimError("vca: count " + std::to_string(count) + " exceeds min(pixels, bands)");
  }

  // Trivial simplex: the brightest pixel.
  if (count == 1) {
    Eigen::Index best = 0;
    pixels.rowwise().squaredNorm().maxCoeff(&best);
    return {static_cast<int>(best)};
  }

  Eigen::MatrixXd r = pixels.transpose();  // b x n, columns are spectra
  Eigen::VectorXd rmean = r.rowwise().mean();
  Eigen::MatrixXd r0 = r.colwise() - rmean;

  Eigen::BDCSVD<Eigen::MatrixXd> svd0(r0, Eigen::ComputeThinU);
  const auto& sv = svd0.singularValues();
  // Sum-to-one data is centered onto a (count-1)-dimensional subspace, so
  // only that much spread is required here; the high-SNR branch checks the
  // uncentered rank it actually projects with.
  if (sv.size() < count || !(sv(0) > 0.0) ||
      (count >= 2 && sv(count - 2) <= 1e-12 * sv(0))) {
    throw NumericError("vca: data rank below requested simplex size (degenerate simplex)");
  }

  double inv_n = 1.0 / static_cast<double>(n);
  double p_y = r.squaredNorm() * inv_n;
  Eigen::MatrixXd xc = svd0.matrixU().leftCols(count).transpose() * r0;
  double p_x = xc.squaredNorm() * inv_n + rmean.squaredNorm();
  double noise_power = p_y - p_x;
  double snr = noise_power > 0.0
                   ? 10.0 * std::log10((p_x - (static_cast<double>(count) / b) * p_y) / noise_power)
                   : std::numeric_limits<double>::infinity();
  double snr_threshold = 15.0 + 10.0 * std::log10(static_cast<double>(count));

  Eigen::MatrixXd y;  // count x n working coordinates
  if (snr > snr_threshold) {
    // High SNR: project onto the uncentered principal subspace and scale each
    // pixel into the hyperplane through the data mean direction.
    Eigen::BDCSVD<Eigen::MatrixXd> svd(r, Eigen::ComputeThinU);
    const auto& svu = svd.singularValues();
    if (!(svu(0) > 0.0) || svu(count - 1) <= 1e-12 * svu(0)) {
      throw NumericError("vca: data rank below requested simplex size (degenerate simplex)");
    }
    Eigen::MatrixXd ud = svd.matrixU().leftCols(count);
    Eigen::MatrixXd x = ud.transpose() * r;
    Eigen::VectorXd u = x.rowwise().mean();
    Eigen::RowVectorXd denom = u.transpose() * x;
    double dmax = denom.cwiseAbs().maxCoeff();
    if (!(dmax > 0.0)) throw NumericError("vca: projective scaling degenerated");
    y.resize(count, n);
    for (Eigen::Index j = 0; j < n; ++j) {
      double dj = denom(j);
      if (std::abs(dj) < 1e-12 * dmax) dj = dj < 0.0 ? -1e-12 * dmax : 1e-12 * dmax;
      y.col(j) = x.col(j) / dj;
    }
  } else {
    // Low SNR: drop to a (count-1)-dimensional affine subspace and lift with
    // a constant coordinate sized to the data spread.
    int d = count - 1;
    Eigen::MatrixXd x = svd0.matrixU().leftCols(d).transpose() * r0;
    double cmax = std::sqrt(x.colwise().squaredNorm().maxCoeff());
    y.resize(count, n);
    y.topRows(d) = x;
    y.row(d).setConstant(cmax > 0.0 ? cmax : 1.0);
  }

  // Iteratively pick the pixel with the largest component orthogonal to the
  // simplex found so far, along a random direction.
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(count, count);
  a(count - 1, 0) = 1.0;
  std::vector<int> picks(static_cast<std::size_t>(count), 0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int i = 0; i < count; ++i) {
    Eigen::VectorXd f;
    double fnorm = 0.0;
    for (int attempt = 0; attempt < 64 && !(fnorm > 1e-12); ++attempt) {
      Eigen::VectorXd wdir(count);
      for (int j = 0; j < count; ++j) wdir(j) = gauss(rng);
      Eigen::MatrixXd pinv = a.completeOrthogonalDecomposition().pseudoInverse();
      f = wdir - a * (pinv * wdir);
      fnorm = f.norm();
    }
    if (!(fnorm > 1e-12)) {
      throw NumericError("vca: could not find a direction outside the simplex span");
    }
    f /= fnorm;
    Eigen::RowVectorXd v = f.transpose() * y;
    Eigen::Index best = 0;
    v.cwiseAbs().maxCoeff(&best);
    picks[static_cast<std::size_t>(i)] = static_cast<int>(best);
    a.col(i) = y.col(best);
  }
  return picks;
}

KmeansResult kmeans(const Eigen::MatrixXd& points, int k, Rng& rng, int max_iter) {
  const Eigen::Index m = points.rows(), d = points.cols();
  if (k < 1) throw ConfigError("kmeans: k must be positive");
  if (k > m) throw DimError("kmeans: k exceeds point count");
  if (max_iter < 1) throw ConfigError("kmeans: max_iter must be positive");

  // k-means++ seeding: after a uniform first pick, sample proportionally to
  // squared distance from the nearest chosen center.
  Eigen::MatrixXd centers(k, d);
  std::vector<double> d2(static_cast<std::size_t>(m), 0.0);
  centers.row(0) = points.row(uniform_index(rng, static_cast<int>(m)));
  for (int c = 1; c < k; ++c) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < m; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (int cc = 0; cc < c; ++cc) {
        best = std::min(best, (points.row(i) - centers.row(cc)).squaredNorm());
      }
      d2[static_cast<std::size_t>(i)] = best;
      total += best;
    }
    Eigen::Index pick = 0;
    if (total > 0.0) {
      double target = uniform(rng, 0.0, total);
      double acc = 0.0;
      for (Eigen::Index i = 0; i < m; ++i) {
        acc += d2[static_cast<std::size_t>(i)];
        if (acc >= target) {
          pick = i;
          break;
        }
        pick = i;
      }
    } else {
      pick = uniform_index(rng, static_cast<int>(m));
    }
    centers.row(c) = points.row(pick);
  }

  std::vector<int> assign(static_cast<std::size_t>(m), -1);
  KmeansResult res;
  for (int it = 1; it <= max_iter; ++it) {
    bool changed = false;
    for (Eigen::Index i = 0; i < m; ++i) {
      int best = 0;
      double bestd = std::numeric_limits<double>::infinity();
      for (int c = 0; c < k; ++c) {
        double dist = (points.row(i) - centers.row(c)).squaredNorm();
        if (dist < bestd) {
          bestd = dist;
          best = c;
        }
      }
      if (assign[static_cast<std::size_t>(i)] != best) {
        assign[static_cast<std::size_t>(i)] = best;
        changed = true;
      }
    }
    res.iterations = it;
    if (!changed && it > 1) break;

    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k, d);
    std::vector<int> counts(static_cast<std::size_t>(k), 0);
    for (Eigen::Index i = 0; i < m; ++i) {
      sums.row(assign[static_cast<std::size_t>(i)]) += points.row(i);
      counts[static_cast<std::size_t>(assign[static_cast<std::size_t>(i)])]++;
    }
    for (int c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] > 0) {
        centers.row(c) = sums.row(c) / counts[static_cast<std::size_t>(c)];
      } else {
        // Empty cluster: reseed from the point farthest from its center.
        Eigen::Index far = 0;
        double fard = -1.0;
        for (Eigen::Index i = 0; i < m; ++i) {
          double dist =
              (points.row(i) - centers.row(assign[static_cast<std::size_t>(i)])).squaredNorm();
          if (dist > fard) {
            fard = dist;
            far = i;
          }
        }
        centers.row(c) = points.row(far);
        assign[static_cast<std::size_t>(far)] = c;
      }
    }
  }

  res.inertia = 0.0;
  for (Eigen::Index i = 0; i < m; ++i) {
    res.inertia += (points.row(i) - centers.row(assign[static_cast<std::size_t>(i)])).squaredNorm();
  }
  res.centers = std::move(centers);
  res.assignment = std::move(assign);
  return res;
}

void EndmemberBundle::validate() const {
  const int ne = count(), c = classes(), k = clusters();
  const Eigen::Index b = signatures.cols();
  if (ne < 1 || c < 1) throw DimError("bundle: empty signature or label set");
  if (ne < c) throw NumericError("bundle: fewer signatures than classes");
  if (k < c) throw NumericError("bundle: fewer clusters than classes");
  if (labels.rows() != ne) throw DimError("bundle: label rows do not match signatures");
  if (static_cast<int>(source_pixel.size()) != ne || static_cast<int>(cluster_of.size()) != ne) {
    throw DimError("bundle: per-signature bookkeeping lengths disagree");
  }
  if (static_cast<int>(cluster_class.size()) != k) {
    throw DimError("bundle: cluster class list does not match cluster count");
  }
  if (cluster_means.cols() != b || references.cols() != b || references.rows() != c) {
    throw DimError("bundle: matrix band widths disagree");
  }
  for (int i = 0; i < ne; ++i) {
    if (cluster_of[static_cast<std::size_t>(i)] < 0 || cluster_of[static_cast<std::size_t>(i)] >= k) {
      throw DimError("bundle: cluster index out of range");
    }
    if (source_pixel[static_cast<std::size_t>(i)] < 0) {
      throw DimError("bundle: negative source pixel index");
    }
    if (labels.row(i).minCoeff() < -1e-12 || std::abs(labels.row(i).sum() - 1.0) > 1e-6) {
      throw NumericError("bundle: label row " + std::to_string(i) + " is off the simplex");
    }
  }
}

Eigen::MatrixXd label_bundles(const Eigen::MatrixXd& signatures, const Eigen::MatrixXd& references,
                              double asc_weight) {
  if (signatures.cols() != references.cols()) {
    throw DimError("label_bundles: band counts disagree");
  }
  return fclsu_all(references.transpose(), signatures.transpose(), asc_weight).transpose();
}

EndmemberBundle extract_bundles(const HsiCube& cube, const BundleConfig& cfg) {
  cube.validate();
  if (cfg.asc_weight <= 0.0) throw ConfigError("extract: asc weight must be positive");
  const int h = cube.height, w = cube.width, b = cube.bands;
  const int n = cube.pixels();
  ConstMatView x = cube.pixel_mat();

  int bs = cfg.block_size > 0 ? cfg.block_size
                              : std::max(2, static_cast<int>(std::lround(0.4 * std::min(h, w))));
  if (bs > std::min(h, w)) {
    throw ConfigError("extract: block size exceeds image extent");
  }
  int ov = cfg.overlap >= 0 ? cfg.overlap : bs / 4;
  if (ov >= bs) throw ConfigError("extract: overlap must be smaller than the block size");

  std::vector<BlockWindow> blocks = partition_blocks(h, w, bs, ov);

  // Harvest per-block candidates: subspace size by the noise-split counter,
  // then vertex picks inside the block.
  std::vector<int> candidates;
  for (std::size_t bi = 0; bi < blocks.size(); ++bi) {
    const BlockWindow& blk = blocks[bi];
    const int bn = blk.height * blk.width;
    Eigen::MatrixXd bp(bn, b);
    std::vector<int> flat(static_cast<std::size_t>(bn));
    for (int r = 0; r < blk.height; ++r) {
      for (int c = 0; c < blk.width; ++c) {
        int g = (blk.row + r) * w + (blk.col + c);
        bp.row(r * blk.width + c) = x.row(g);
        flat[static_cast<std::size_t>(r * blk.width + c)] = g;
      }
    }
    int cb = 1;
    try {
      cb = hysime(bp).dimension;
    } catch (const NumericError&) {
      cb = 1;  // hopelessly flat block; still take its brightest pixel
    }
    Eigen::MatrixXd centered = bp.rowwise() - bp.colwise().mean();
    int rank = numerical_rank(centered);
    cb = std::clamp(cb, 1, std::max(1, std::min({bn, b, rank + 1})));
    Rng rng_b = make_rng(cfg.seed, "bundle/block", bi);
    std::vector<int> picks;
    while (true) {
      try {
        picks = vca(bp, cb, rng_b);
        break;
      } catch (const NumericError&) {
        if (--cb < 1) break;  // give up on this block
      }
    }
    for (int p : picks) candidates.push_back(flat[static_cast<std::size_t>(p)]);
  }

  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
  const int m = static_cast<int>(candidates.size());
  if (m < 1) throw NumericError("extract: no usable candidates were found");

  int classes = cfg.classes;
  if (classes <= 0) {
    classes = std::clamp(hysime(x).dimension, 2, std::min(b, m));
  }
  if (m < classes) {
    throw NumericError("extract: only " + std::to_string(m) + " candidate(s) for " +
                       std::to_string(classes) + " classes");
  }

  Eigen::MatrixXd sign(m, b);
  for (int i = 0; i < m; ++i) sign.row(i) = x.row(candidates[static_cast<std::size_t>(i)]);

  Rng rng_g = make_rng(cfg.seed, "bundle/global");
  std::vector<int> ref_idx = vca(x, classes, rng_g);
  Eigen::MatrixXd references(classes, b);
  for (int j = 0; j < classes; ++j) references.row(j) = x.row(ref_idx[static_cast<std::size_t>(j)]);

  int k = cfg.clusters > 0 ? std::min(cfg.clusters, m)
                           : std::min(static_cast<int>(std::lround(0.2 * n)), m);
  k = std::clamp(k, std::min(classes, m), m);

  Rng rng_k = make_rng(cfg.seed, "bundle/kmeans");
  KmeansResult km = kmeans(sign, k, rng_k, cfg.kmeans_max_iter);

  std::vector<int> cluster_class(static_cast<std::size_t>(k), 0);
  for (int c = 0; c < k; ++c) {
    double best = std::numeric_limits<double>::infinity();
    for (int j = 0; j < classes; ++j) {
      double angle = spectral_angle(km.centers.row(c).transpose(), references.row(j).transpose());
      if (angle < best) {
        best = angle;
        cluster_class[static_cast<std::size_t>(c)] = j;
      }
    }
  }

  EndmemberBundle bundle;
  bundle.signatures = std::move(sign);
  bundle.labels = label_bundles(bundle.signatures, references, cfg.asc_weight);
  bundle.source_pixel = std::move(candidates);
  bundle.cluster_of = std::move(km.assignment);
  bundle.cluster_means = std::move(km.centers);
  bundle.cluster_class = std::move(cluster_class);
  bundle.references = std::move(references);
  bundle.validate();
  return bundle;
}

}  // namespace egu
