#include "drss/linear_models.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace drss {

namespace {

void check_rows(const MatrixXd& X, const VectorXd& Y) {
  if (X.rows() != Y.size())
    throw Error(ErrorCode::DimensionMismatch, "design has " + std::to_string(X.rows()) +
                                                  " rows but response has " +
                                                  std::to_string(Y.size()));
  if (X.rows() < 1) throw Error(ErrorCode::EmptyLabeledSet, "no rows to fit");
}

double soft_threshold(double z, double t) {
  if (z > t) return z - t;
  if (z < -t) return z + t;
  return 0.0;
}

}  // namespace

// ---------------------------------------------------------------------------
// Least squares

VectorXd LinearFit::predict(const MatrixXd& X) const {
  if (X.cols() != input_dim)
    throw Error(ErrorCode::DimensionMismatch, "fit expects " + std::to_string(input_dim) +
                                                  " covariates, got " + std::to_string(X.cols()));
  VectorXd out = VectorXd::Constant(X.rows(), beta(0));
  if (input_dim == 0) return out;
  // Accumulate power by power to avoid materializing the expansion.
  MatrixXd power = X;
  for (int d = 0; d < degree; ++d) {
    if (d > 0) power.array() *= X.array();
    out.noalias() += power * beta.segment(1 + d * input_dim, input_dim);
  }
  return out;
}

LinearFit fit_least_squares(const MatrixXd& X, const VectorXd& Y, int degree) {
  check_rows(X, Y);
  const MatrixXd design = with_intercept(polynomial_features(X, degree));
  Eigen::BDCSVD<MatrixXd> svd(design, Eigen::ComputeThinU | Eigen::ComputeThinV);
  svd.setThreshold(1e-10);
  if (!(svd.singularValues().size() > 0 && svd.singularValues()(0) > 0.0) ||
      !svd.singularValues().allFinite())
    throw Error(ErrorCode::RankDeficientDesign, "design matrix has no usable singular values");
  LinearFit fit;
  fit.beta = svd.solve(Y);
  fit.degree = degree;
  fit.input_dim = X.cols();
  fit.rank = svd.rank();
  return fit;
}

// ---------------------------------------------------------------------------
// Lasso

StandardizedDesign StandardizedDesign::from(const MatrixXd& X, const VectorXd& Y) {
  check_rows(X, Y);
  StandardizedDesign d;
  const double n = static_cast<double>(X.rows());
  d.center = X.colwise().mean().transpose();
  d.Z = X.rowwise() - d.center.transpose();
  d.scale = (d.Z.colwise().squaredNorm().array() / n).sqrt().transpose();
  d.active.assign(static_cast<std::size_t>(X.cols()), true);
  for (Index j = 0; j < X.cols(); ++j) {
    const double tiny = 1e-12 * std::max(1.0, std::abs(d.center(j)));
    if (!(d.scale(j) > tiny)) {
      d.active[static_cast<std::size_t>(j)] = false;
      d.scale(j) = 1.0;
      d.Z.col(j).setZero();
    } else {
      d.Z.col(j) /= d.scale(j);
    }
  }
  d.y_mean = Y.mean();
  d.y = Y.array() - d.y_mean;
  return d;
}

double lasso_lambda_max(const StandardizedDesign& d) {
  if (d.p() == 0) return 0.0;
  return (d.Z.transpose() * d.y).cwiseAbs().maxCoeff() / static_cast<double>(d.n());
}

VectorXd lasso_lambda_grid(double lambda_max, int n, double min_ratio) {
  if (n < 1) throw Error(ErrorCode::EmptyGrid, "lambda grid needs at least one value");
  VectorXd grid(n);
  if (n == 1) {
    grid(0) = lambda_max;
    return grid;
  }
  const double step = std::log(min_ratio) / (n - 1);
  for (int k = 0; k < n; ++k) grid(k) = lambda_max * std::exp(step * k);
  return grid;
}

double lasso_objective(const StandardizedDesign& d, const VectorXd& beta, double lambda) {
  return (d.y - d.Z * beta).squaredNorm() / (2.0 * static_cast<double>(d.n())) +
         lambda * beta.lpNorm<1>();
}

LassoSolution lasso_coordinate_descent(const StandardizedDesign& d, double lambda,
                                       const VectorXd& warm_start, double tolerance,
                                       int max_sweeps) {
  const Index p = d.p();
  const double n = static_cast<double>(d.n());
  LassoSolution sol;
  sol.beta = warm_start.size() == p ? warm_start : VectorXd::Zero(p);
  VectorXd resid = d.y - d.Z * sol.beta;

  auto update = [&](Index j) {
    const double old = sol.beta(j);
    const double z = d.Z.col(j).dot(resid) / n + old;
    const double next = soft_threshold(z, lambda);
    if (next != old) {
      resid.noalias() -= (next - old) * d.Z.col(j);
      sol.beta(j) = next;
    }
    return std::abs(next - old);
  };
  auto threshold = [&] { return tolerance * (1.0 + sol.beta.cwiseAbs().maxCoeff()); };

  std::vector<Index> active_set;
  while (sol.sweeps < max_sweeps) {
    double change = 0.0;
    for (Index j = 0; j < p; ++j)
      if (d.active[static_cast<std::size_t>(j)]) change = std::max(change, update(j));
    ++sol.sweeps;
    if (p == 0 || change < threshold()) {
      sol.converged = true;
      break;
    }
    active_set.clear();
    for (Index j = 0; j < p; ++j)
      if (sol.beta(j) != 0.0) active_set.push_back(j);
    while (sol.sweeps < max_sweeps) {
      double inner = 0.0;
      for (Index j : active_set) inner = std::max(inner, update(j));
      ++sol.sweeps;
      if (inner < threshold()) break;
    }
  }
  return sol;
}

VectorXd lasso_original_scale(const StandardizedDesign& d, const VectorXd& beta) {
  VectorXd out(d.p() + 1);
  out.tail(d.p()) = beta.cwiseQuotient(d.scale);
  out(0) = d.y_mean - out.tail(d.p()).dot(d.center);
  return out;
}

namespace {

LinearFit make_fit(const VectorXd& beta, int degree, Index input_dim, double lambda) {
  LinearFit fit;
  fit.beta = beta;
  fit.degree = degree;
  fit.input_dim = input_dim;
  fit.rank = static_cast<Index>((beta.tail(beta.size() - 1).array() != 0.0).count()) + 1;
  fit.lambda = lambda;
  return fit;
}

}  // namespace

LinearFit fit_lasso(const MatrixXd& X, const VectorXd& Y, int degree, const LassoOptions& options,
                    std::uint64_t seed) {
  check_rows(X, Y);
  const MatrixXd features = polynomial_features(X, degree);
  const StandardizedDesign full = StandardizedDesign::from(features, Y);
  const Index q = features.cols();

  const double y_spread = full.y.cwiseAbs().maxCoeff();
  if (!(y_spread > 1e-12 * (1.0 + std::abs(full.y_mean)))) {
    VectorXd beta = VectorXd::Zero(q + 1);
    beta(0) = full.y_mean;
    return make_fit(beta, degree, X.cols(), 0.0);
  }

  const double lambda_max = lasso_lambda_max(full);
  if (options.lambda) {
    const auto sol = lasso_coordinate_descent(full, *options.lambda, VectorXd::Zero(q),
                                              options.tolerance, options.max_sweeps);
    return make_fit(lasso_original_scale(full, sol.beta), degree, X.cols(), *options.lambda);
  }

  const VectorXd grid = lasso_lambda_grid(lambda_max, options.n_lambda, options.lambda_min_ratio);
  const Index n = features.rows();
  if (n < options.cv_folds)
    throw Error(ErrorCode::InvalidArgument, "lasso CV needs at least cv_folds labeled rows");

  struct Fold {
    StandardizedDesign d;
    MatrixXd Xv;
    VectorXd Yv;
    VectorXd beta;
    double total = 0.0;
    bool saturated = false;
  };
  const CrossFitPlan cv = make_folds(n, options.cv_folds, seed);
  std::vector<Fold> folds;
  for (int k = 0; k < cv.K; ++k) {
    const auto train = cv.training(k);
    const auto valid = cv.fold(k);
    Fold f{StandardizedDesign::from(take_rows(features, train), take(Y, train)),
           take_rows(features, valid), take(Y, valid), VectorXd::Zero(q)};
    f.total = f.d.y.squaredNorm();
    folds.push_back(std::move(f));
  }

  // All folds walk down the grid together so the search can stop once the
  // CV error has not improved for `cv_patience` consecutive values.
  Index best = 0;
  double best_error = std::numeric_limits<double>::infinity();
  for (Index l = 0; l < grid.size(); ++l) {
    double error = 0.0;
    for (auto& f : folds) {
      if (!f.saturated) {
        f.beta = lasso_coordinate_descent(f.d, grid(l), f.beta, options.tolerance, options.max_sweeps).beta;
        // past this point the training fit is near-interpolating; keep the last solution
        const double explained = 1.0 - (f.d.y - f.d.Z * f.beta).squaredNorm() / f.total;
        f.saturated = !(f.total > 0.0) || explained > options.path_max_explained;
      }
      const VectorXd coef = lasso_original_scale(f.d, f.beta);
      const VectorXd pred = (f.Xv * coef.tail(q)).array() + coef(0);
      error += (f.Yv - pred).squaredNorm();
    }
    if (error < best_error) {
      best_error = error;
      best = l;
    } else if (options.cv_patience > 0 && l - best >= options.cv_patience) {
      break;
    }
  }

  VectorXd beta = VectorXd::Zero(q);
  for (Index l = 0; l <= best; ++l)
    beta = lasso_coordinate_descent(full, grid(l), beta, options.tolerance, options.max_sweeps).beta;
  return make_fit(lasso_original_scale(full, beta), degree, X.cols(), grid(best));
}

// ---------------------------------------------------------------------------
// Kernel ridge

MatrixXd gaussian_gram(const MatrixXd& A, const MatrixXd& B, double bandwidth) {
  if (A.cols() != B.cols()) throw Error(ErrorCode::DimensionMismatch, "kernel inputs differ in width");
  const VectorXd a2 = A.rowwise().squaredNorm();
  const VectorXd b2 = B.rowwise().squaredNorm();
  MatrixXd G = -2.0 * A * B.transpose();
  G.colwise() += a2;
  G.rowwise() += b2.transpose();
  return (-G.cwiseMax(0.0) / (2.0 * bandwidth)).array().exp();
}

VectorXd KernelRidgeFit::predict(const MatrixXd& X) const {
  if (X.cols() != support_points.cols())
    throw Error(ErrorCode::DimensionMismatch, "kernel fit expects " +
                                                  std::to_string(support_points.cols()) +
                                                  " covariates, got " + std::to_string(X.cols()));
  return gaussian_gram(X, support_points, bandwidth) * alpha;
}

std::vector<double> default_ridge_grid(Index n) {
  std::vector<double> grid;
  for (int k = 0; k < 10; ++k)
    grid.push_back(static_cast<double>(n) * std::pow(10.0, -4.0 + 6.0 * k / 9.0));
  return grid;
}

KernelRidgeFit fit_kernel_ridge(const MatrixXd& X, const VectorXd& Y,
                                const KernelRidgeOptions& options, std::uint64_t seed) {
  check_rows(X, Y);
  const double bandwidth = options.bandwidth.value_or(static_cast<double>(std::max<Index>(1, X.cols())));
  if (!(bandwidth > 0.0)) throw Error(ErrorCode::InvalidArgument, "bandwidth must be positive");
  const std::vector<double> grid =
      options.ridge_grid.empty() ? default_ridge_grid(X.rows()) : options.ridge_grid;
  if (grid.empty()) throw Error(ErrorCode::EmptyGrid, "ridge grid is empty");

  double ridge = grid.front();
  if (grid.size() > 1) {
    if (X.rows() < options.cv_folds)
      throw Error(ErrorCode::InvalidArgument, "kernel ridge CV needs at least cv_folds rows");
    const CrossFitPlan cv = make_folds(X.rows(), options.cv_folds, seed);
    std::vector<double> err(grid.size(), 0.0);
    for (int k = 0; k < cv.K; ++k) {
      const auto train = cv.training(k);
      const auto valid = cv.fold(k);
      const MatrixXd Xt = take_rows(X, train);
      const VectorXd Yt = take(Y, train);
      const VectorXd Yv = take(Y, valid);
      Eigen::SelfAdjointEigenSolver<MatrixXd> eig(gaussian_gram(Xt, Xt, bandwidth));
      const MatrixXd cross = gaussian_gram(take_rows(X, valid), Xt, bandwidth) * eig.eigenvectors();
      const VectorXd proj = eig.eigenvectors().transpose() * Yt;
      for (std::size_t g = 0; g < grid.size(); ++g) {
        const VectorXd scaled = proj.array() / (eig.eigenvalues().array().max(0.0) + grid[g]);
        err[g] += (Yv - cross * scaled).squaredNorm();
      }
    }
    ridge = grid[static_cast<std::size_t>(std::min_element(err.begin(), err.end()) - err.begin())];
  }

  MatrixXd K = gaussian_gram(X, X, bandwidth);
  K.diagonal().array() += ridge;
  Eigen::LDLT<MatrixXd> ldlt(K);
  if (ldlt.info() != Eigen::Success || !(ldlt.rcond() > std::numeric_limits<double>::epsilon()))
    throw Error(ErrorCode::NumericallySingularGram, "regularized Gram matrix is numerically singular");
  KernelRidgeFit fit;
  fit.support_points = X;
  fit.alpha = ldlt.solve(Y);
  fit.bandwidth = bandwidth;
  fit.ridge = ridge;
  return fit;
}

// ---------------------------------------------------------------------------

OutcomeSpec OutcomeSpec::parse(const std::string& name) {
  if (name == "ls" || name == "poly1") return least_squares(1);
  if (name == "poly" || name == "poly2") return least_squares(2);
  if (name == "poly3") return least_squares(3);
  if (name == "lasso") return lasso_fit(1);
  if (name == "poly-lasso") return lasso_fit(2);
  if (name == "rkhs") return kernel_ridge();
  throw Error(ErrorCode::InvalidSpec, "unknown outcome model '" + name + "'");
}

std::string OutcomeSpec::name() const {
  switch (kind) {
    case OutcomeKind::LeastSquares:
      return degree == 1 ? "LS" : "poly" + std::to_string(degree);
    case OutcomeKind::Lasso:
      return degree == 1 ? "Lasso" : "poly" + std::to_string(degree) + "-Lasso";
    case OutcomeKind::KernelRidge:
      return "RKHS";
  }
  return "?";
}

OutcomeFit fit_outcome(const OutcomeSpec& spec, const MatrixXd& X, const VectorXd& Y,
                       std::uint64_t seed) {
  switch (spec.kind) {
    case OutcomeKind::LeastSquares: return fit_least_squares(X, Y, spec.degree);
    case OutcomeKind::Lasso: return fit_lasso(X, Y, spec.degree, spec.lasso, seed);
    case OutcomeKind::KernelRidge: return fit_kernel_ridge(X, Y, spec.kernel, seed);
  }
  throw Error(ErrorCode::InvalidSpec, "unhandled outcome kind");
}

VectorXd predict(const LinearFit& fit, const MatrixXd& X) { return fit.predict(X); }
VectorXd predict(const KernelRidgeFit& fit, const MatrixXd& X) { return fit.predict(X); }
VectorXd predict(const OutcomeFit& fit, const MatrixXd& X) {
  return std::visit([&](const auto& f) { return f.predict(X); }, fit);
}

}  // namespace drss
