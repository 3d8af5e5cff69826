#include "egunet/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "egunet/errors.hpp"

namespace egu {

namespace {

// Runs fn(i) for i in [0, n) across `threads` workers over contiguous
// chunks.  Results must go to disjoint slots; the first exception thrown by
// any worker is rethrown on the calling thread.
template <typename Fn>
void parallel_for(int n, int threads, Fn&& fn) {
  threads = std::max(1, std::min(threads, n));
  if (threads == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::exception_ptr first_error;
  std::mutex err_mutex;
  int chunk = (n + threads - 1) / threads;
  for (int t = 0; t < threads; ++t) {
    int lo = t * chunk, hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([&, lo, hi] {
      try {
        for (int i = lo; i < hi; ++i) fn(i);
      } catch (...) {
        std::scoped_lock lock(err_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

void require_unmix_dims(const Eigen::MatrixXd& endmembers, Eigen::Index pixel_rows,
                        const char* who) {
  if (endmembers.rows() < 2 || endmembers.cols() < 1) {
    throw DimError(std::string(who) + ": endmember matrix must be bands x classes");
  }
  if (endmembers.rows() != pixel_rows) {
    throw DimError(std::string(who) + ": pixel has " + std::to_string(pixel_rows) +
                   " bands, endmembers have " + std::to_string(endmembers.rows()));
  }
}

}  // namespace

Eigen::VectorXd nnls(const Eigen::MatrixXd& a, const Eigen::VectorXd& b, const NnlsOptions& opt) {
  const Eigen::Index m = a.rows(), n = a.cols();
  if (b.size() != m) throw DimError("nnls: rhs length does not match matrix rows");
  if (n < 1 || m < 1) throw DimError("nnls: empty system");
  if (opt.tol <= 0.0) throw ConfigError("nnls: tol must be positive");
  const int max_iter = opt.max_iter > 0 ? opt.max_iter : static_cast<int>(10 * n + 50);

  Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
  std::vector<char> passive(static_cast<std::size_t>(n), 0);
  Eigen::VectorXd w = a.transpose() * b;
  const double wtol = opt.tol * std::max(1.0, w.cwiseAbs().maxCoeff());

  std::vector<Eigen::Index> pset;
  pset.reserve(static_cast<std::size_t>(n));
  int iter = 0;

  while (true) {
    // Pick the most violated dual coordinate among the active (zero) set.
    Eigen::Index t = -1;
    double wmax = wtol;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (!passive[static_cast<std::size_t>(j)] && w(j) > wmax) {
        wmax = w(j);
        t = j;
      }
    }
    if (t < 0) break;  // KKT conditions hold
    passive[static_cast<std::size_t>(t)] = 1;
    pset.push_back(t);

    while (true) {
      if (++iter > max_iter) {
        double res = (b - a * x).norm();
        throw NumericError("nnls: active-set loop did not settle in " + std::to_string(max_iter) +
                           " passes (residual " + std::to_string(res) + ")");
      }
      // Least squares restricted to the passive columns.
      Eigen::MatrixXd ap(m, static_cast<Eigen::Index>(pset.size()));
      for (std::size_t k = 0; k < pset.size(); ++k) ap.col(static_cast<Eigen::Index>(k)) = a.col(pset[k]);
      Eigen::VectorXd z = ap.colPivHouseholderQr().solve(b);

      double zmin = std::numeric_limits<double>::infinity();
      for (Eigen::Index k = 0; k < z.size(); ++k) zmin = std::min(zmin, z(k));
      if (zmin > 0.0) {
        x.setZero();
        for (std::size_t k = 0; k < pset.size(); ++k) x(pset[k]) = z(static_cast<Eigen::Index>(k));
        break;
      }
      // Step toward z until the first passive coordinate hits zero.
      double alpha = std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < pset.size(); ++k) {
        double zk = z(static_cast<Eigen::Index>(k));
        if (zk <= 0.0) {
          double xk = x(pset[k]);
          alpha = std::min(alpha, xk / (xk - zk));
        }
      }
      for (std::size_t k = 0; k < pset.size(); ++k) {
        Eigen::Index j = pset[k];
        x(j) += alpha * (z(static_cast<Eigen::Index>(k)) - x(j));
      }
      // Retire coordinates that landed on the boundary.
      std::vector<Eigen::Index> kept;
      kept.reserve(pset.size());
      for (Eigen::Index j : pset) {
        if (x(j) > 1e-12) {
          kept.push_back(j);
        } else {
          x(j) = 0.0;
          passive[static_cast<std::size_t>(j)] = 0;
        }
      }
      pset.swap(kept);
      if (pset.empty()) break;
    }
    w.noalias() = a.transpose() * (b - a * x);
  }
  return x;
}

void SolverConfig::validate() const {
  if (asc_weight <= 0.0) throw ConfigError("solver: asc weight must be positive");
  if (lambda < 0.0) throw ConfigError("solver: lambda must be non-negative");
  if (rho <= 0.0) throw ConfigError("solver: rho must be positive");
  if (tol <= 0.0) throw ConfigError("solver: tol must be positive");
  if (max_iter < 1) throw ConfigError("solver: max_iter must be positive");
}

Eigen::VectorXd fclsu(const Eigen::MatrixXd& endmembers, const Eigen::VectorXd& pixel,
                      double asc_weight) {
  require_unmix_dims(endmembers, pixel.size(), "fclsu");
  if (asc_weight <= 0.0) throw ConfigError("fclsu: asc weight must be positive");
  const Eigen::Index b = endmembers.rows(), c = endmembers.cols();
  Eigen::MatrixXd ea(b + 1, c);
  ea.topRows(b) = endmembers;
  ea.row(b).setConstant(asc_weight);
  Eigen::VectorXd xa(b + 1);
  xa.head(b) = pixel;
  xa(b) = asc_weight;
  Eigen::VectorXd y = nnls(ea, xa);
  double s = y.sum();
  if (s <= 1e-12) {
    throw NumericError("fclsu: abundance sum collapsed to zero; endmembers may be degenerate");
  }
  return y / s;
}

Eigen::VectorXd pclsu(const Eigen::MatrixXd& endmembers, const Eigen::VectorXd& pixel) {
  require_unmix_dims(endmembers, pixel.size(), "pclsu");
  return nnls(endmembers, pixel);
}

Eigen::MatrixXd fclsu_all(const Eigen::MatrixXd& endmembers, const Eigen::MatrixXd& pixels,
                          double asc_weight, int threads) {
  require_unmix_dims(endmembers, pixels.rows(), "fclsu");
  Eigen::MatrixXd y(endmembers.cols(), pixels.cols());
  parallel_for(static_cast<int>(pixels.cols()), threads,
               [&](int i) { y.col(i) = fclsu(endmembers, pixels.col(i), asc_weight); });
  return y;
}

Eigen::MatrixXd pclsu_all(const Eigen::MatrixXd& endmembers, const Eigen::MatrixXd& pixels,
                          int threads) {
  require_unmix_dims(endmembers, pixels.rows(), "pclsu");
  Eigen::MatrixXd y(endmembers.cols(), pixels.cols());
  parallel_for(static_cast<int>(pixels.cols()), threads,
               [&](int i) { y.col(i) = pclsu(endmembers, pixels.col(i)); });
  return y;
}

SunsalResult sunsal(const Eigen::MatrixXd& endmembers, const Eigen::MatrixXd& pixels,
                    SunsalConstraints constraints, const SolverConfig& cfg) {
  require_unmix_dims(endmembers, pixels.rows(), "sunsal");
  cfg.validate();
  const Eigen::Index c = endmembers.cols(), npix = pixels.cols();

  // Sum-to-one enters through the same weighted augmentation row as fclsu.
  Eigen::MatrixXd a = endmembers;
  Eigen::MatrixXd x = pixels;
  if (constraints == SunsalConstraints::AncAsc) {
    a.conservativeResize(a.rows() + 1, Eigen::NoChange);
    a.row(a.rows() - 1).setConstant(cfg.asc_weight);
    x.conservativeResize(x.rows() + 1, Eigen::NoChange);
    x.row(x.rows() - 1).setConstant(cfg.asc_weight);
  }

  const Eigen::MatrixXd ata = a.transpose() * a;
  const Eigen::MatrixXd atx = a.transpose() * x;

  double rho = cfg.rho;
  Eigen::LDLT<Eigen::MatrixXd> factor(ata + rho * Eigen::MatrixXd::Identity(c, c));

  Eigen::MatrixXd u = Eigen::MatrixXd::Zero(c, npix);
  Eigen::MatrixXd v = Eigen::MatrixXd::Zero(c, npix);
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(c, npix);

  SunsalResult res;
  for (int it = 1; it <= cfg.max_iter; ++it) {
    u = factor.solve(atx + rho * (v - d));
    Eigen::MatrixXd v_prev = v;
    v = u + d;
    if (cfg.lambda > 0.0) {
      double thr = cfg.lambda / rho;
      v = v.unaryExpr([thr](double t) {
        if (t > thr) return t - thr;
        if (t < -thr) return t + thr;
        return 0.0;
      });
    }
    if (constraints != SunsalConstraints::None) v = v.cwiseMax(0.0);
    d += u - v;

    res.primal_residual = (u - v).norm();
    res.dual_residual = rho * (v - v_prev).norm();
    res.iterations = it;
    if (res.primal_residual < cfg.tol && res.dual_residual < cfg.tol) {
      res.converged = true;
      break;
    }
    if (it % 10 == 0) {
      if (res.primal_residual > 10.0 * res.dual_residual) {
        rho *= 2.0;
        d /= 2.0;
        factor.compute(ata + rho * Eigen::MatrixXd::Identity(c, c));
      } else if (res.dual_residual > 10.0 * res.primal_residual) {
        rho /= 2.0;
        d *= 2.0;
        factor.compute(ata + rho * Eigen::MatrixXd::Identity(c, c));
      }
    }
  }
  res.abundances = std::move(v);
  res.rho_final = rho;
  return res;
}

Eigen::MatrixXd update_endmembers(const Eigen::MatrixXd& pixels, const Eigen::MatrixXd& abundances,
                                  bool* ridged) {
  const Eigen::Index bands = pixels.rows(), npix = pixels.cols(), c = abundances.rows();
  if (abundances.cols() != npix) {
    throw DimError("update_endmembers: abundance columns do not match pixel count");
  }
  if (npix < c) throw DimError("update_endmembers: fewer pixels than classes");

  // Rows of E decouple: band b solves min_{e >= 0} |Y^T e - x_b|.
  Eigen::MatrixXd yt = abundances.transpose();  // N x C
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(yt);
  double smax = svd.singularValues()(0);
  double smin = svd.singularValues()(svd.singularValues().size() - 1);
  bool need_ridge = !(smax > 0.0) || smin < 1e-10 * smax;
  if (ridged) *ridged = need_ridge;

  Eigen::MatrixXd sys = yt;
  if (need_ridge) {
    // Tikhonov rows keep the per-band problems well posed when abundances
    // are collinear; the bias is O(sqrt(ridge)).
    double ridge = std::max(1e-8, 1e-8 * smax * smax);
    sys.conservativeResize(npix + c, Eigen::NoChange);
    sys.bottomRows(c) = std::sqrt(ridge) * Eigen::MatrixXd::Identity(c, c);
  }

  Eigen::MatrixXd e(bands, c);
  Eigen::VectorXd rhs(sys.rows());
  rhs.setZero();
  for (Eigen::Index b = 0; b < bands; ++b) {
    rhs.head(npix) = pixels.row(b).transpose();
    e.row(b) = nnls(sys, rhs).transpose();
  }
  return e;
}

BlindResult blind_unmix(const Eigen::MatrixXd& pixels, const Eigen::MatrixXd& endmembers0,
                        AbundanceMethod method, const SolverConfig& cfg, int max_outer,
                        double rel_tol, int threads) {
  require_unmix_dims(endmembers0, pixels.rows(), "blind_unmix");
  cfg.validate();
  if (max_outer < 1) throw ConfigError("blind_unmix: max_outer must be positive");

  BlindResult out;
  out.endmembers = endmembers0;
  for (int it = 1; it <= max_outer; ++it) {
    switch (method) {
      case AbundanceMethod::Fclsu:
        out.abundances = fclsu_all(out.endmembers, pixels, cfg.asc_weight, threads);
        break;
      case AbundanceMethod::Pclsu:
        out.abundances = pclsu_all(out.endmembers, pixels, threads);
        break;
      case AbundanceMethod::Sunsal:
        out.abundances = sunsal(out.endmembers, pixels, SunsalConstraints::AncAsc, cfg).abundances;
        break;
    }
    Eigen::MatrixXd e_next = update_endmembers(pixels, out.abundances);
    double denom = std::max(out.endmembers.norm(), 1e-30);
    double rel = (e_next - out.endmembers).norm() / denom;
    out.endmembers = std::move(e_next);
    out.outer_iterations = it;
    if (rel < rel_tol) {
      out.converged = true;
      break;
    }
  }
  return out;
}

}  // namespace egu
