#pragma once

#include <Eigen/Dense>

namespace egu {

// Conventions throughout the solver suite: pixels is bands x N (a column per
// pixel spectrum), endmembers is bands x C (a column per signature), and
// abundances come back as C x N.

struct NnlsOptions {
  double tol = 1e-10;  // dual feasibility tolerance, relative to |A^T b|_inf
  int max_iter = 0;    // 0 selects 10 * cols + 50
};

// Nonnegative least squares, min |A x - b|_2 with x >= 0, solved with the
// Lawson-Hanson active-set method (Solving Least Squares Problems, 1974).
// Exact for the recovered support; throws NumericError when the active-set
// loop fails to settle within max_iter passes.
Eigen::VectorXd nnls(const Eigen::MatrixXd& a, const Eigen::VectorXd& b,
                     const NnlsOptions& opt = {});

struct SolverConfig {
  double asc_weight = 1e3;  // delta for the sum-to-one augmentation row
  double lambda = 1e-3;     // l1 weight (sunsal)
  double rho = 1e-2;        // initial ADMM penalty
  double tol = 1e-6;        // residual tolerance
  int max_iter = 1000;

  void validate() const;
};

// Fully constrained unmixing of one pixel: nonnegative and sum-to-one.  The
// sum constraint is enforced softly by an extra row weighted delta, then the
// result is renormalized so the sum is exactly one.
Eigen::VectorXd fclsu(const Eigen::MatrixXd& endmembers, const Eigen::VectorXd& pixel,
                      double asc_weight = 1e3);

// Partially constrained variant: nonnegativity only, so row sums are free to
// absorb per-pixel brightness scaling.
Eigen::VectorXd pclsu(const Eigen::MatrixXd& endmembers, const Eigen::VectorXd& pixel);

// Whole-image drivers.  Pixels are independent, so work is sliced across
// `threads` workers with bitwise-identical results for any thread count.
Eigen::MatrixXd fclsu_all(const Eigen::MatrixXd& endmembers, const Eigen::MatrixXd& pixels,
                          double asc_weight = 1e3, int threads = 1);
Eigen::MatrixXd pclsu_all(const Eigen::MatrixXd& endmembers, const Eigen::MatrixXd& pixels,
                          int threads = 1);

enum class SunsalConstraints { None, Anc, AncAsc };

struct SunsalResult {
  Eigen::MatrixXd abundances;  // C x N
  int iterations = 0;
  bool converged = false;  // best iterate is still returned when false
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  double rho_final = 0.0;
};

// Sparse unmixing by variable splitting and augmented Lagrangian:
//   min 0.5 |A U - X|_F^2 + lambda |U|_1  (+ U >= 0, + sum-to-one)
// ADMM with residual balancing on rho (doubled or halved when one residual
// exceeds ten times the other).  The sum-to-one constraint reuses the same
// delta-weighted augmentation row as fclsu.
SunsalResult sunsal(const Eigen::MatrixXd& endmembers, const Eigen::MatrixXd& pixels,
                    SunsalConstraints constraints, const SolverConfig& cfg = {});

// Least-squares endmember refit given abundances: each band row of E solves
// a small NNLS against the abundance matrix.  Rank-deficient abundance
// matrices fall back to a ridge-stabilized system; *ridged reports that.
Eigen::MatrixXd update_endmembers(const Eigen::MatrixXd& pixels, const Eigen::MatrixXd& abundances,
                                  bool* ridged = nullptr);

enum class AbundanceMethod { Fclsu, Pclsu, Sunsal };

struct BlindResult {
  Eigen::MatrixXd endmembers;   // bands x C
  Eigen::MatrixXd abundances;   // C x N
  int outer_iterations = 0;
  bool converged = false;
};

// Alternates an abundance solve with the endmember refit, starting from the
// given endmember estimate, until the endmember matrix moves less than
// rel_tol in relative Frobenius norm or max_outer rounds pass.
BlindResult blind_unmix(const Eigen::MatrixXd& pixels, const Eigen::MatrixXd& endmembers0,
                        AbundanceMethod method, const SolverConfig& cfg = {}, int max_outer = 50,
                        double rel_tol = 1e-6, int threads = 1);

}  // namespace egu
