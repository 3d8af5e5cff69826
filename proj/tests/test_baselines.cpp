#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "egunet/baselines.hpp"
#include "egunet/errors.hpp"
#include "egunet/rng.hpp"
#include "helpers.hpp"

using namespace egu;

namespace {

Eigen::MatrixXd random_matrix(int rows, int cols, Rng& rng, double lo = 0.0, double hi = 1.0) {
  Eigen::MatrixXd m(rows, cols);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) m(i, j) = uniform(rng, lo, hi);
  }
  return m;
}

// Random point on the probability simplex (uniform via exponential spacings).
Eigen::VectorXd random_simplex(int n, Rng& rng) {
  Eigen::VectorXd v(n);
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    v[i] = -std::log(uniform(rng, 1e-12, 1.0));
    sum += v[i];
  }
  return v / sum;
}

}  // namespace

TEST_SUITE("baselines") {

// --------------------------------------------------------------------- nnls

TEST_CASE("nnls solves tiny instances exactly") {
  // identity system with one negative target: that coordinate clamps to zero
  Eigen::MatrixXd a = Eigen::MatrixXd::Identity(2, 2);
  Eigen::VectorXd b(2);
  b << -1.0, 2.0;
  Eigen::VectorXd x = nnls(a, b);
  CHECK(x[0] == 0.0);
  CHECK(x[1] == doctest::Approx(2.0).epsilon(1e-12));

  // overdetermined single column: least-squares midpoint
  Eigen::MatrixXd a2(2, 1);
  a2 << 1.0, 1.0;
  Eigen::VectorXd b2(2);
  b2 << 1.0, 2.0;
  Eigen::VectorXd x2 = nnls(a2, b2);
  CHECK(x2[0] == doctest::Approx(1.5).epsilon(1e-12));
}

TEST_CASE("nnls satisfies the KKT conditions on random instances") {
  for (int trial = 0; trial < 20; ++trial) {
    Rng rng = make_rng(100 + trial, "t/nnls");
    int m = 4 + uniform_index(rng, 8);
    int n = 2 + uniform_index(rng, 6);
    Eigen::MatrixXd a = random_matrix(m, n, rng, -1.0, 1.0);
    Eigen::VectorXd b = random_matrix(m, 1, rng, -1.0, 1.0).col(0);
    Eigen::VectorXd x = nnls(a, b);

    double scale = std::max(1.0, (a.transpose() * b).cwiseAbs().maxCoeff());
    Eigen::VectorXd w = a.transpose() * (b - a * x);  // dual vector
    for (int i = 0; i < n; ++i) {
      CHECK(x[i] >= 0.0);
      if (x[i] > 1e-10) {
        CHECK(std::abs(w[i]) <= 1e-8 * scale);  // active coords: stationarity
      } else {
        CHECK(w[i] <= 1e-8 * scale);  // zero coords: no ascent direction
      }
    }
  }
}

TEST_CASE("nnls recovers exact nonnegative solutions") {
  Rng rng = make_rng(7, "t/nnls");
  Eigen::MatrixXd a = random_matrix(10, 4, rng, 0.0, 1.0);
  Eigen::VectorXd truth(4);
  truth << 0.0, 1.2, 0.0, 0.4;  // supported on two coords
  Eigen::VectorXd b = a * truth;
  Eigen::VectorXd x = nnls(a, b);
  for (int i = 0; i < 4; ++i) CHECK(x[i] == doctest::Approx(truth[i]).epsilon(1e-9));
}

// -------------------------------------------------------------------- fclsu

TEST_CASE("fclsu recovers noiseless simplex mixtures") {
  Rng rng = make_rng(8, "t/fclsu");
  const int b = 20, c = 4;
  Eigen::MatrixXd e = random_matrix(b, c, rng, 0.05, 1.0);
  for (int trial = 0; trial < 30; ++trial) {
    Eigen::VectorXd a = random_simplex(c, rng);
    Eigen::VectorXd pixel = e * a;
    Eigen::VectorXd est = fclsu(e, pixel);
    CHECK(est.sum() == doctest::Approx(1.0).epsilon(1e-12));
    for (int i = 0; i < c; ++i) CHECK(std::abs(est[i] - a[i]) < 1e-8);
  }
}

TEST_CASE("fclsu output always lands on the simplex, even off-model") {
  Rng rng = make_rng(9, "t/fclsu");
  const int b = 15, c = 3;
  Eigen::MatrixXd e = random_matrix(b, c, rng, 0.05, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    Eigen::VectorXd pixel = random_matrix(b, 1, rng, 0.0, 2.0).col(0);  // not a mixture
    Eigen::VectorXd est = fclsu(e, pixel);
    CHECK(est.minCoeff() >= -1e-12);
    CHECK(std::abs(est.sum() - 1.0) <= 1e-6);
  }
}

TEST_CASE("pclsu absorbs per-pixel brightness into free row sums") {
  Rng rng = make_rng(10, "t/pclsu");
  const int b = 20, c = 4;
  Eigen::MatrixXd e = random_matrix(b, c, rng, 0.05, 1.0);
  Eigen::VectorXd a = random_simplex(c, rng);
  for (double s : {0.6, 1.0, 1.4}) {
    Eigen::VectorXd est = pclsu(e, s * (e * a));
    CHECK(est.sum() == doctest::Approx(s).epsilon(1e-8));
    for (int i = 0; i < c; ++i) CHECK(est[i] == doctest::Approx(s * a[i]).epsilon(1e-7));
  }
}

TEST_CASE("whole-image drivers are invariant to the thread count") {
  Rng rng = make_rng(11, "t/threads");
  const int b = 12, c = 3, n = 37;
  Eigen::MatrixXd e = random_matrix(b, c, rng, 0.05, 1.0);
  Eigen::MatrixXd x = random_matrix(b, n, rng, 0.0, 1.0);
  Eigen::MatrixXd u1 = fclsu_all(e, x, 1e3, 1);
  Eigen::MatrixXd u4 = fclsu_all(e, x, 1e3, 4);
  CHECK((u1 - u4).cwiseAbs().maxCoeff() == 0.0);  // bitwise identical
  Eigen::MatrixXd p1 = pclsu_all(e, x, 1);
  Eigen::MatrixXd p3 = pclsu_all(e, x, 3);
  CHECK((p1 - p3).cwiseAbs().maxCoeff() == 0.0);
}

// ------------------------------------------------------------------- sunsal

TEST_CASE("sunsal with zero l1 weight matches fclsu") {
  Rng rng = make_rng(12, "t/sunsal");
  const int b = 25, c = 4, n = 40;
  Eigen::MatrixXd e = random_matrix(b, c, rng, 0.05, 1.0);
  Eigen::MatrixXd truth(c, n);
  for (int j = 0; j < n; ++j) truth.col(j) = random_simplex(c, rng);
  Eigen::MatrixXd x = e * truth;
  // mild noise so the two solvers meet away from the vertices
  for (int i = 0; i < x.rows(); ++i) {
    for (int j = 0; j < x.cols(); ++j) x(i, j) += normal(rng, 0.0, 1e-3);
  }

  SolverConfig cfg;
  cfg.lambda = 0.0;
  cfg.tol = 1e-8;
  cfg.max_iter = 2000;
  SunsalResult res = sunsal(e, x, SunsalConstraints::AncAsc, cfg);
  Eigen::MatrixXd ref = fclsu_all(e, x);
  CHECK(res.converged);
  CHECK(test_ref::armse(ref, res.abundances) < 1e-4);
  for (int j = 0; j < n; ++j) {
    CHECK(res.abundances.col(j).minCoeff() >= -1e-12);
    CHECK(std::abs(res.abundances.col(j).sum() - 1.0) <= 1e-6);
  }
}

TEST_CASE("sunsal unconstrained with zero lambda is plain least squares") {
  Rng rng = make_rng(13, "t/sunsal");
  const int b = 20, c = 5, n = 15;
  Eigen::MatrixXd e = random_matrix(b, c, rng, -1.0, 1.0);
  Eigen::MatrixXd x = random_matrix(b, n, rng, -1.0, 1.0);
  SolverConfig cfg;
  cfg.lambda = 0.0;
  cfg.tol = 1e-10;
  cfg.max_iter = 5000;
  SunsalResult res = sunsal(e, x, SunsalConstraints::None, cfg);
  Eigen::MatrixXd ls = e.colPivHouseholderQr().solve(x);
  CHECK((res.abundances - ls).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("larger l1 weights produce sparser abundances") {
  Rng rng = make_rng(14, "t/sunsal");
  const int b = 30, c = 6, n = 25;
  Eigen::MatrixXd e = random_matrix(b, c, rng, 0.05, 1.0);
  Eigen::MatrixXd truth = Eigen::MatrixXd::Zero(c, n);
  for (int j = 0; j < n; ++j) {
    // two active materials per pixel
    int i1 = uniform_index(rng, c), i2 = (i1 + 1 + uniform_index(rng, c - 1)) % c;
    double w = uniform(rng, 0.2, 0.8);
    truth(i1, j) = w;
    truth(i2, j) = 1.0 - w;
  }
  Eigen::MatrixXd x = e * truth;
  for (int i = 0; i < x.rows(); ++i) {
    for (int j = 0; j < x.cols(); ++j) x(i, j) += normal(rng, 0.0, 1e-3);
  }

  auto count_small = [&](const Eigen::MatrixXd& u) {
    int k = 0;
    for (int i = 0; i < u.rows(); ++i) {
      for (int j = 0; j < u.cols(); ++j) {
        if (std::abs(u(i, j)) < 1e-4) ++k;
      }
    }
    return k;
  };
  SolverConfig weak;
  weak.lambda = 1e-6;
  SolverConfig strong;
  strong.lambda = 1e-2;
  int sparse_weak = count_small(sunsal(e, x, SunsalConstraints::Anc, weak).abundances);
  int sparse_strong = count_small(sunsal(e, x, SunsalConstraints::Anc, strong).abundances);
  CHECK(sparse_strong >= sparse_weak);
  CHECK(sparse_strong > 0);
}

TEST_CASE("sunsal reports iterations and residuals") {
  Rng rng = make_rng(15, "t/sunsal");
  Eigen::MatrixXd e = random_matrix(12, 3, rng, 0.05, 1.0);
  Eigen::MatrixXd x = random_matrix(12, 8, rng, 0.0, 1.0);
  SolverConfig cfg;
  cfg.max_iter = 500;
  SunsalResult res = sunsal(e, x, SunsalConstraints::AncAsc, cfg);
  CHECK(res.iterations >= 1);
  CHECK(res.iterations <= 500);
  CHECK(res.rho_final > 0.0);
  if (res.converged) {
    CHECK(res.primal_residual <= cfg.tol);
    CHECK(res.dual_residual <= cfg.tol);
  }
}

TEST_CASE("solver config validation rejects nonsense") {
  SolverConfig cfg;
  cfg.asc_weight = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = SolverConfig{};
  cfg.lambda = -1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = SolverConfig{};
  cfg.max_iter = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = SolverConfig{};
  cfg.tol = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

// -------------------------------------------------------- endmember refit

TEST_CASE("endmember update reproduces the exact factorization") {
  Rng rng = make_rng(16, "t/refit");
  const int b = 18, c = 4, n = 50;
  Eigen::MatrixXd e = random_matrix(b, c, rng, 0.05, 1.0);
  Eigen::MatrixXd y(c, n);
  for (int j = 0; j < n; ++j) y.col(j) = random_simplex(c, rng);
  Eigen::MatrixXd x = e * y;
  bool ridged = true;
  Eigen::MatrixXd est = update_endmembers(x, y, &ridged);
  CHECK_FALSE(ridged);
  CHECK((est - e).cwiseAbs().maxCoeff() < 1e-7);
}

TEST_CASE("endmember update survives rank-deficient abundances via ridge") {
  Rng rng = make_rng(17, "t/refit");
  const int b = 10, c = 3, n = 20;
  Eigen::MatrixXd e = random_matrix(b, c, rng, 0.05, 1.0);
  Eigen::MatrixXd y(c, n);
  for (int j = 0; j < n; ++j) {
    Eigen::VectorXd a = random_simplex(2, rng);
    y(0, j) = a[0];
    y(1, j) = a[1];
    y(2, j) = a[1];  // third row duplicates the second: rank 2
  }
  Eigen::MatrixXd x = e * y;
  bool ridged = false;
  Eigen::MatrixXd est = update_endmembers(x, y, &ridged);
  CHECK(ridged);
  CHECK(est.minCoeff() >= 0.0);
  // the fit still reconstructs the data even if E itself is not unique
  CHECK((est * y - x).cwiseAbs().maxCoeff() < 1e-3);
}

TEST_CASE("blind unmixing improves a perturbed endmember estimate") {
  Rng rng = make_rng(18, "t/blind");
  const int b = 30, c = 3, n = 200;
  Eigen::MatrixXd e = random_matrix(b, c, rng, 0.1, 1.0);
  Eigen::MatrixXd y(c, n);
  for (int j = 0; j < n; ++j) y.col(j) = random_simplex(c, rng);
  // plant a pure pixel per class so the factorization is identifiable
  for (int i = 0; i < c; ++i) {
    y.col(i) = Eigen::VectorXd::Zero(c);
    y(i, i) = 1.0;
  }
  Eigen::MatrixXd x = e * y;

  Eigen::MatrixXd e0 = e;
  for (int i = 0; i < b; ++i) {
    for (int j = 0; j < c; ++j) e0(i, j) = std::max(0.0, e0(i, j) + normal(rng, 0.0, 0.02));
  }

  BlindResult res = blind_unmix(x, e0, AbundanceMethod::Fclsu, SolverConfig{}, 50, 1e-8, 1);
  double before = (e0 * fclsu_all(e0, x) - x).norm() / x.norm();
  double after = (res.endmembers * res.abundances - x).norm() / x.norm();
  CHECK(after < before);
  CHECK(after < 1e-3);
}

}  // TEST_SUITE
