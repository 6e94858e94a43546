#include "doctest.h"

#include <cmath>

#include "drss/linear_models.hpp"

using namespace drss;

namespace {

MatrixXd gaussian(Index n, Index p, std::uint64_t seed) {
  RandomStream s(seed, tag_hash("test-design"));
  return s.normal_matrix(n, p);
}

// Plain ISTA on the standardized problem, run far past the solver's tolerance.
VectorXd ista_oracle(const StandardizedDesign& d, double lambda) {
  const double n = static_cast<double>(d.n());
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(d.Z.transpose() * d.Z / n);
  const double step = 1.0 / eig.eigenvalues().maxCoeff();
  VectorXd b = VectorXd::Zero(d.p());
  for (int it = 0; it < 200000; ++it) {
    const VectorXd z = b + step * d.Z.transpose() * (d.y - d.Z * b) / n;
    VectorXd next = z;
    for (Index j = 0; j < z.size(); ++j)
      next(j) = std::copysign(std::max(std::abs(z(j)) - step * lambda, 0.0), z(j));
    const double change = (next - b).cwiseAbs().maxCoeff();
    b = next;
    if (change < 1e-15) break;
  }
  return b;
}

void check_kkt(const StandardizedDesign& d, const VectorXd& beta, double lambda) {
  const VectorXd g = -d.Z.transpose() * (d.y - d.Z * beta) / static_cast<double>(d.n());
  for (Index j = 0; j < beta.size(); ++j) {
    if (!d.active[static_cast<std::size_t>(j)]) continue;
    if (beta(j) == 0.0)
      CHECK(std::abs(g(j)) <= lambda * (1 + 1e-6));
    else
      CHECK(std::abs(g(j) + lambda * (beta(j) > 0 ? 1.0 : -1.0)) <= 1e-6 * (1 + lambda));
  }
}

}  // namespace

TEST_CASE("polynomial features") {
  const MatrixXd X = (MatrixXd(2, 2) << 1, 2, 3, 4).finished();
  const MatrixXd F = polynomial_features(X, 3);
  CHECK(F.cols() == 6);
  CHECK(F(1, 0) == 3);
  CHECK(F(1, 3) == 16);
  CHECK(F(0, 5) == 8);
  CHECK(with_intercept(polynomial_features(gaussian(5, 7, 1), 2)).cols() == 1 + 2 * 7);
  CHECK_THROWS_AS(polynomial_features(X, 0), Error);
}

TEST_CASE("least squares small cases") {
  const LinearFit line = fit_least_squares((MatrixXd(2, 1) << 0, 1).finished(),
                                           (VectorXd(2) << 1, 3).finished());
  CHECK(line.beta(0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(line.beta(1) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(line.predict((MatrixXd(1, 1) << 3).finished())(0) == doctest::Approx(7.0));

  const LinearFit parabola = fit_least_squares((MatrixXd(3, 1) << -1, 0, 1).finished(),
                                               (VectorXd(3) << 1, 0, 1).finished(), 2);
  CHECK(std::abs(parabola.beta(0)) < 1e-12);
  CHECK(std::abs(parabola.beta(1)) < 1e-12);
  CHECK(parabola.beta(2) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(parabola.predict((MatrixXd(1, 1) << 2).finished())(0) == doctest::Approx(4.0));

  CHECK_THROWS_AS(line.predict(MatrixXd::Zero(1, 2)), Error);
}

TEST_CASE("least squares matches the normal equations") {
  const MatrixXd X = gaussian(50, 3, 11);
  RandomStream s(5, 0);
  VectorXd Y(50);
  for (Index i = 0; i < 50; ++i) Y(i) = 1.0 + X(i, 0) - 2.0 * X(i, 2) + s.normal();
  const LinearFit fit = fit_least_squares(X, Y);
  const MatrixXd D = with_intercept(X);
  const VectorXd oracle = (D.transpose() * D).llt().solve(D.transpose() * Y);
  CHECK((fit.beta - oracle).cwiseAbs().maxCoeff() < 1e-8);
  // residual orthogonality on the expanded design
  const LinearFit quad = fit_least_squares(X, Y, 2);
  const MatrixXd E = with_intercept(polynomial_features(X, 2));
  const VectorXd r = Y - quad.predict(X);
  CHECK((E.transpose() * r).cwiseAbs().maxCoeff() / 50.0 < 1e-8 * (1 + Y.cwiseAbs().maxCoeff()));
}

TEST_CASE("least squares on a collinear design returns the minimum-norm solution") {
  MatrixXd X(4, 2);
  X << 1, 2, 2, 4, 3, 6, 4, 8;
  const VectorXd Y = (VectorXd(4) << 1, 2, 3, 4).finished();
  const LinearFit fit = fit_least_squares(X, Y);
  CHECK(fit.rank == 2);
  CHECK((fit.predict(X) - Y).norm() < 1e-10);
  CHECK_THROWS_AS(fit_least_squares(MatrixXd::Zero(0, 1), VectorXd::Zero(0)), Error);
}

TEST_CASE("lasso degenerate cases") {
  const MatrixXd X = gaussian(30, 4, 2);
  const LinearFit flat = fit_lasso(X, VectorXd::Constant(30, 2.5));
  CHECK(flat.beta(0) == 2.5);
  CHECK(flat.beta.tail(4).isZero());

  VectorXd Y = X.col(0) + 0.1 * X.col(1);
  LassoOptions opts;
  const auto d = StandardizedDesign::from(X, Y);
  opts.lambda = lasso_lambda_max(d) * 1.0001;
  const LinearFit shrunk = fit_lasso(X, Y, 1, opts);
  CHECK(shrunk.beta.tail(4).isZero());
  CHECK(shrunk.beta(0) == doctest::Approx(Y.mean()).epsilon(1e-12));
}

TEST_CASE("lasso coordinate descent matches a proximal-gradient oracle and satisfies KKT") {
  const MatrixXd X = gaussian(100, 10, 3);
  RandomStream s(9, 0);
  VectorXd Y(100);
  for (Index i = 0; i < 100; ++i) Y(i) = 2 * X(i, 0) - X(i, 3) + 0.5 * X(i, 7) + s.normal();
  const auto d = StandardizedDesign::from(X, Y);
  const double lmax = lasso_lambda_max(d);
  for (double frac : {0.5, 0.1, 0.01}) {
    const double lambda = frac * lmax;
    const auto sol = lasso_coordinate_descent(d, lambda, VectorXd::Zero(10));
    CHECK(sol.converged);
    const VectorXd oracle = ista_oracle(d, lambda);
    CHECK(lasso_objective(d, sol.beta, lambda) <= lasso_objective(d, oracle, lambda) + 1e-8);
    check_kkt(d, sol.beta, lambda);
  }
}

TEST_CASE("lasso path is monotone in l1 norm and CV fit is consistent") {
  const MatrixXd X = gaussian(80, 20, 4);
  RandomStream s(10, 0);
  VectorXd Y(80);
  for (Index i = 0; i < 80; ++i) Y(i) = X(i, 0) + X(i, 1) - X(i, 2) + s.normal();
  const auto d = StandardizedDesign::from(X, Y);
  const VectorXd grid = lasso_lambda_grid(lasso_lambda_max(d), 100, 1e-4);
  CHECK(grid.size() == 100);
  CHECK(grid(99) == doctest::Approx(1e-4 * grid(0)));
  VectorXd beta = VectorXd::Zero(20);
  double previous = 0.0;
  for (Index l = 0; l < grid.size(); ++l) {
    beta = lasso_coordinate_descent(d, grid(l), beta).beta;
    const double norm = beta.lpNorm<1>();
    CHECK(norm >= previous - 1e-8);
    previous = norm;
    check_kkt(d, beta, grid(l));
  }
  const LinearFit fit = fit_lasso(X, Y, 1, {}, 17);
  REQUIRE(fit.lambda);
  CHECK(*fit.lambda > 0.0);
  CHECK(fit.beta(1) > 0.5);
  CHECK(fit_lasso(X, Y, 1, {}, 17).beta == fit.beta);
  CHECK_THROWS_AS(lasso_lambda_grid(1.0, 0, 1e-4), Error);
}

TEST_CASE("lasso handles constant columns") {
  MatrixXd X = gaussian(40, 3, 6);
  X.col(1).setConstant(3.0);
  const VectorXd Y = 2.0 * X.col(0);
  const LinearFit fit = fit_lasso(X, Y, 1, {}, 1);
  CHECK(fit.beta(2) == 0.0);
  CHECK(fit.predict(X).allFinite());
}

TEST_CASE("kernel ridge") {
  const MatrixXd x0 = (MatrixXd(1, 2) << 0.3, -1.2).finished();
  const VectorXd y0 = (VectorXd(1) << 2.0).finished();
  for (double r : {0.1, 1.0, 10.0}) {
    KernelRidgeOptions opts;
    opts.ridge_grid = {r};
    const auto fit = fit_kernel_ridge(x0, y0, opts);
    CHECK(fit.predict(x0)(0) == doctest::Approx(2.0 / (1.0 + r)).epsilon(1e-12));
  }

  const MatrixXd X = gaussian(30, 3, 7);
  const VectorXd Y = X.col(0).array().sin() + X.col(1).array().square();
  KernelRidgeOptions opts;
  opts.ridge_grid = {0.5};
  const auto fit = fit_kernel_ridge(X, Y, opts);
  CHECK(fit.bandwidth == 3.0);
  MatrixXd K(30, 30);
  for (Index i = 0; i < 30; ++i)
    for (Index j = 0; j < 30; ++j) K(i, j) = std::exp(-(X.row(i) - X.row(j)).squaredNorm() / 6.0);
  const VectorXd oracle = (K + 0.5 * MatrixXd::Identity(30, 30)).partialPivLu().solve(Y);
  CHECK((fit.alpha - oracle).cwiseAbs().maxCoeff() < 1e-8);
  CHECK((fit.predict(X) - K * oracle).cwiseAbs().maxCoeff() < 1e-8);

  opts.ridge_grid = {1e12};
  CHECK(fit_kernel_ridge(X, Y, opts).predict(X).cwiseAbs().maxCoeff() < 1e-9);

  const auto cv = fit_kernel_ridge(X, Y, {}, 3);
  CHECK(cv.ridge > 0.0);
  CHECK(cv.predict(X).allFinite());
  CHECK(default_ridge_grid(30).size() == 10);
  CHECK(default_ridge_grid(30).front() == doctest::Approx(30e-4));
  CHECK(default_ridge_grid(30).back() == doctest::Approx(3000.0));
}

TEST_CASE("outcome spec parsing") {
  CHECK(OutcomeSpec::parse("poly").degree == 2);
  CHECK(OutcomeSpec::parse("lasso").kind == OutcomeKind::Lasso);
  CHECK(OutcomeSpec::parse("rkhs").name() == "RKHS");
  CHECK_THROWS_AS(OutcomeSpec::parse("forest"), Error);
  const MatrixXd X = gaussian(20, 2, 8);
  const VectorXd Y = X.col(0);
  const OutcomeFit fit = fit_outcome(OutcomeSpec::least_squares(), X, Y, 0);
  CHECK((predict(fit, X) - Y).norm() < 1e-10);
}
