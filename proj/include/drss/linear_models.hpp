#ifndef DRSS_LINEAR_MODELS_HPP
#define DRSS_LINEAR_MODELS_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "drss/core.hpp"

namespace drss {

/// Per-coordinate powers x, x^2, ..., x^degree with no interaction terms.
/// Output columns are grouped by power: [x_1..x_p, x_1^2..x_p^2, ...].
template <typename Derived>
Matrix<typename Derived::Scalar> polynomial_features(const Eigen::MatrixBase<Derived>& X,
                                                     int degree) {
  if (degree < 1) throw Error(ErrorCode::InvalidArgument, "polynomial degree must be >= 1");
  const Index p = X.cols();
  Matrix<typename Derived::Scalar> out(X.rows(), p * degree);
  out.leftCols(p) = X;
  for (int d = 1; d < degree; ++d)
    out.middleCols(d * p, p) = out.middleCols((d - 1) * p, p).cwiseProduct(X);
  return out;
}

/// Affine model [1, phi(x)]^T beta with phi the degree-d expansion.
struct LinearFit {
  VectorXd beta;  // intercept first, length 1 + degree * input_dim
  int degree = 1;
  Index input_dim = 0;
  Index rank = 0;                 // numerical rank of the expanded design (least squares)
  std::optional<double> lambda;   // selected penalty, lasso only

  VectorXd predict(const MatrixXd& X) const;
};

/// Least squares on the expanded design via a pseudo-inverse SVD solve;
/// singular values below 1e-10 * sigma_max are treated as zero.
LinearFit fit_least_squares(const MatrixXd& X, const VectorXd& Y, int degree = 1);

struct LassoOptions {
  int cv_folds = 5;
  int n_lambda = 100;
  double lambda_min_ratio = 1e-4;
  std::optional<double> lambda;   // fixed penalty (standardized scale) skips CV
  double tolerance = 1e-7;
  int max_sweeps = 100000;
  // CV stops walking the grid after this many values without improvement
  // (0 searches the whole grid).
  int cv_patience = 10;
  // A CV fold whose training fit explains more than this share of variance
  // keeps its current solution for the rest of the grid.
  double path_max_explained = 0.999;
};

/// Centered/scaled copy of a design used by the coordinate-descent solver.
/// Columns are scaled to unit variance (1/n convention); constant columns are
/// marked unpenalizable and keep a zero slope.
struct StandardizedDesign {
  MatrixXd Z;
  VectorXd center;
  VectorXd scale;
  std::vector<bool> active;  // false for constant columns
  VectorXd y;                // centered response
  double y_mean = 0.0;

  static StandardizedDesign from(const MatrixXd& X, const VectorXd& Y);
  Index n() const { return Z.rows(); }
  Index p() const { return Z.cols(); }
};

/// lambda_max = ||Z^T y||_inf / n: smallest penalty with an all-zero solution.
double lasso_lambda_max(const StandardizedDesign& d);

/// 100 (or n) log-spaced values from lambda_max down to ratio * lambda_max.
VectorXd lasso_lambda_grid(double lambda_max, int n, double min_ratio);

struct LassoSolution {
  VectorXd beta;  // standardized-scale slopes
  int sweeps = 0;
  bool converged = false;
};

/// Cyclic coordinate descent for (1/2n)||y - Z b||^2 + lambda ||b||_1 with
/// active-set iterations between full sweeps.
LassoSolution lasso_coordinate_descent(const StandardizedDesign& d, double lambda,
                                       const VectorXd& warm_start, double tolerance = 1e-7,
                                       int max_sweeps = 100000);

/// Standardized-scale lasso objective.
double lasso_objective(const StandardizedDesign& d, const VectorXd& beta, double lambda);

/// Maps standardized slopes back to an intercept-first original-scale vector.
VectorXd lasso_original_scale(const StandardizedDesign& d, const VectorXd& beta);

/// Lasso on the degree-d expansion with intercept unpenalized and lambda
/// chosen by K-fold CV (validation MSE) unless `options.lambda` is set.
/// CV folds are drawn within the supplied rows.
/// A constant response yields the intercept-only fit.
LinearFit fit_lasso(const MatrixXd& X, const VectorXd& Y, int degree = 1,
                    const LassoOptions& options = {}, std::uint64_t seed = 0);

// ---------------------------------------------------------------------------

/// Gaussian kernel k(x, x') = exp(-||x - x'||^2 / (2 * bandwidth)).
MatrixXd gaussian_gram(const MatrixXd& A, const MatrixXd& B, double bandwidth);

struct KernelRidgeFit {
  MatrixXd support_points;
  VectorXd alpha;
  double bandwidth = 1.0;
  double ridge = 1.0;

  VectorXd predict(const MatrixXd& X) const;
};

struct KernelRidgeOptions {
  std::optional<double> bandwidth;  // defaults to the covariate dimension p
  std::vector<double> ridge_grid;   // empty: 10 log-spaced values in [1e-4, 1e2] * n
  int cv_folds = 5;
};

/// Solves (K + ridge I) alpha = Y with ridge selected by K-fold CV.
KernelRidgeFit fit_kernel_ridge(const MatrixXd& X, const VectorXd& Y,
                                const KernelRidgeOptions& options = {}, std::uint64_t seed = 0);

std::vector<double> default_ridge_grid(Index n);

// ---------------------------------------------------------------------------
// Outcome-model specification used by the cross-fitting pipeline.

enum class OutcomeKind { LeastSquares, Lasso, KernelRidge };

struct OutcomeSpec {
  OutcomeKind kind = OutcomeKind::LeastSquares;
  int degree = 1;
  LassoOptions lasso;
  KernelRidgeOptions kernel;

  static OutcomeSpec least_squares(int degree = 1) { return {OutcomeKind::LeastSquares, degree, {}, {}}; }
  static OutcomeSpec lasso_fit(int degree = 1) { return {OutcomeKind::Lasso, degree, {}, {}}; }
  static OutcomeSpec kernel_ridge() { return {OutcomeKind::KernelRidge, 1, {}, {}}; }

  /// Parses "ls", "poly", "poly2", "poly3", "lasso", "poly-lasso", "rkhs".
  static OutcomeSpec parse(const std::string& name);
  std::string name() const;
};

using OutcomeFit = std::variant<LinearFit, KernelRidgeFit>;

OutcomeFit fit_outcome(const OutcomeSpec& spec, const MatrixXd& X, const VectorXd& Y,
                       std::uint64_t seed);

VectorXd predict(const OutcomeFit& fit, const MatrixXd& X);
VectorXd predict(const LinearFit& fit, const MatrixXd& X);
VectorXd predict(const KernelRidgeFit& fit, const MatrixXd& X);

}  // namespace drss

#endif  // DRSS_LINEAR_MODELS_HPP
