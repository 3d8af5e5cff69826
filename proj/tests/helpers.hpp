#pragma once

// Independent reference implementations used as test oracles.  Everything in
// here is written the slow, obvious way on purpose: plain loops with no
// library calls, so a disagreement with the production code points at the
// production code.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <vector>

#include <Eigen/Dense>

#include "egunet/layers.hpp"
#include "egunet/rng.hpp"
#include "egunet/tensor.hpp"

namespace test_ref {

// Triple-loop matrix product.
inline Eigen::MatrixXd matmul(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(a.rows(), b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index k = 0; k < a.cols(); ++k) {
      for (Eigen::Index j = 0; j < b.cols(); ++j) {
        out(i, j) += a(i, k) * b(k, j);
      }
    }
  }
  return out;
}

// Direct convolution, stride 1, replicate padding, kernel [kh, kw, ci, co],
// input [n, h, w, ci].
inline egu::Tensor conv2d(const egu::Tensor& in, const egu::Tensor& kernel,
                          const std::vector<double>& bias) {
  const int n = in.dim(0), h = in.dim(1), w = in.dim(2), ci = in.dim(3);
  const int kh = kernel.dim(0), kw = kernel.dim(1), co = kernel.dim(3);
  const int ph = kh / 2, pw = kw / 2;
  egu::Tensor out({n, h, w, co});
  for (int im = 0; im < n; ++im) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        for (int oc = 0; oc < co; ++oc) {
          double acc = bias[static_cast<std::size_t>(oc)];
          for (int dy = 0; dy < kh; ++dy) {
            for (int dx = 0; dx < kw; ++dx) {
              int sy = std::clamp(y + dy - ph, 0, h - 1);
              int sx = std::clamp(x + dx - pw, 0, w - 1);
              for (int ic = 0; ic < ci; ++ic) {
                acc += in.at(im, sy, sx, ic) * kernel[((static_cast<std::int64_t>(dy) * kw + dx) *
                                                          ci + ic) * co + oc];
              }
            }
          }
          out.at(im, y, x, oc) = acc;
        }
      }
    }
  }
  return out;
}

// Clipped-window mean pool, stride 1.  Windows anchor at their top-left cell
// and are clipped at the bottom/right edges, the stride-1 analogue of SAME
// pooling that ignores padded cells.
inline egu::Tensor avgpool(const egu::Tensor& in, int window) {
  const int n = in.dim(0), h = in.dim(1), w = in.dim(2), c = in.dim(3);
  egu::Tensor out({n, h, w, c});
  for (int im = 0; im < n; ++im) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        int y1 = std::min(h - 1, y + window - 1);
        int x1 = std::min(w - 1, x + window - 1);
        int count = (y1 - y + 1) * (x1 - x + 1);
        for (int ch = 0; ch < c; ++ch) {
          double acc = 0.0;
          for (int sy = y; sy <= y1; ++sy) {
            for (int sx = x; sx <= x1; ++sx) acc += in.at(im, sy, sx, ch);
          }
          out.at(im, y, x, ch) = acc / count;
        }
      }
    }
  }
  return out;
}

// Two-loop abundance RMSE over C x N matrices.
inline double armse(const Eigen::MatrixXd& truth, const Eigen::MatrixXd& est) {
  double total = 0.0;
  for (Eigen::Index j = 0; j < truth.cols(); ++j) {
    double sq = 0.0;
    for (Eigen::Index i = 0; i < truth.rows(); ++i) {
      double d = truth(i, j) - est(i, j);
      sq += d * d;
    }
    total += std::sqrt(sq / static_cast<double>(truth.rows()));
  }
  return total / static_cast<double>(truth.cols());
}

inline double sad(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  double c = dot / (std::sqrt(na) * std::sqrt(nb));
  return std::acos(std::clamp(c, -1.0, 1.0));
}

// Exhaustive minimum-cost assignment; returns the column picked for each row.
inline std::vector<int> brute_force_assignment(const Eigen::MatrixXd& cost) {
  const int n = static_cast<int>(cost.rows());
  std::vector<int> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<int> best = perm;
  double best_cost = std::numeric_limits<double>::infinity();
  do {
    double c = 0.0;
    for (int i = 0; i < n; ++i) c += cost(i, perm[static_cast<std::size_t>(i)]);
    if (c < best_cost) {
      best_cost = c;
      best = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

// ---------------------------------------------------------------------------
// central finite-difference gradient checks

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::int64_t checked = 0;
};

inline double rel_error(double analytic, double numeric) {
  double denom = std::max({1e-4, std::abs(analytic), std::abs(numeric)});
  return std::abs(analytic - numeric) / denom;
}

// Checks d loss / d entry for every entry of `storage` (a parameter buffer or
// the input tensor), against a loss closure that re-runs the whole forward
// pass.  The closure must be deterministic: reseed any rng it uses.
inline GradCheckResult check_entries(egu::Tensor& storage, const egu::Tensor& analytic_grad,
                                     const std::function<double()>& loss, double h = 1e-5,
                                     std::int64_t stride = 1) {
  GradCheckResult res;
  for (std::int64_t i = 0; i < storage.size(); i += stride) {
    double saved = storage[i];
    storage[i] = saved + h;
    double upper = loss();
    storage[i] = saved - h;
    double lower = loss();
    storage[i] = saved;
    double fd = (upper - lower) / (2.0 * h);
    res.max_rel_error = std::max(res.max_rel_error, rel_error(analytic_grad[i], fd));
    res.checked += 1;
  }
  return res;
}

inline egu::Tensor random_tensor(std::vector<int> shape, egu::Rng& rng, double lo = -1.0,
                                 double hi = 1.0) {
  egu::Tensor t(std::move(shape));
  for (std::int64_t i = 0; i < t.size(); ++i) t[i] = egu::uniform(rng, lo, hi);
  return t;
}

}  // namespace test_ref
