#include "drss/propensity.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace drss {

namespace {

std::vector<Index> all_rows(Index n) {
  std::vector<Index> rows(static_cast<std::size_t>(n));
  std::iota(rows.begin(), rows.end(), Index{0});
  return rows;
}

void check_inputs(const MatrixXd& X, const VectorXd& y) {
  if (X.rows() != y.size())
    throw Error(ErrorCode::DimensionMismatch, "X has " + std::to_string(X.rows()) +
                                                  " rows but the response has " +
                                                  std::to_string(y.size()));
}

// Logistic loss with offset log(a) restricted to a row subset. Rows outside
// the subset carry weight zero, so X is used in place and never copied.
class SubsetLoss {
 public:
  SubsetLoss(const MatrixXd& X, const VectorXd& y, const std::vector<Index>& rows, double a)
      : X_(X), y_(y), w_(VectorXd::Zero(X.rows())), log_a_(std::log(a)) {
    check_inputs(X, y);
    for (Index i : rows) {
      if (i < 0 || i >= X.rows()) throw Error(ErrorCode::DimensionMismatch, "row index out of range");
      w_(i) = 1.0;
    }
    n_ = w_.sum();
    if (n_ < 1) throw Error(ErrorCode::EmptyLabeledSet, "no rows to fit");
  }

  Index dim() const { return X_.cols() + 1; }
  double n() const { return n_; }
  double log_a() const { return log_a_; }
  double weighted_mean_y() const { return w_.dot(y_) / n_; }

  VectorXd eta(const VectorXd& gamma) const {
    VectorXd e = X_ * gamma.tail(X_.cols());
    e.array() += gamma(0);
    return e;
  }

  double value(const VectorXd& eta) const {
    double s = 0.0;
    for (Index i = 0; i < eta.size(); ++i)
      if (w_(i) != 0.0) s += log1p_exp(eta(i) + log_a_) - y_(i) * eta(i);
    return s / n_;
  }

  VectorXd gradient(const VectorXd& eta) const { return Xt_times(residual(eta)) / n_; }

  double max_abs_margin(const VectorXd& eta) const {
    double m = 0.0;
    for (Index i = 0; i < eta.size(); ++i)
      if (w_(i) != 0.0) m = std::max(m, std::abs(eta(i) + log_a_));
    return m;
  }

  // w_i * gdot(eta_i + log a): the per-row curvature of the loss.
  VectorXd curvature(const VectorXd& eta) const {
    VectorXd c(eta.size());
    for (Index i = 0; i < eta.size(); ++i) {
      const double g = logistic(eta(i) + log_a_);
      c(i) = w_(i) * g * (1.0 - g);
    }
    return c;
  }

  // (1/n) X_vec^T diag(c) X_vec v
  VectorXd hessian_times(const VectorXd& c, const VectorXd& v) const {
    VectorXd u = X_ * v.tail(X_.cols());
    u.array() += v(0);
    return Xt_times(c.cwiseProduct(u)) / n_;
  }

  // (1/n) sum_i w_i x_vec_ij^2, a diagonal metric for the proximal steps
  VectorXd second_moments() const {
    VectorXd d(dim());
    d(0) = 1.0;
    d.tail(X_.cols()).noalias() = X_.array().square().matrix().transpose() * w_ / n_;
    for (Index j = 1; j < d.size(); ++j)
      if (!(d(j) > 0.0)) d(j) = 1.0;
    return d;
  }

  MatrixXd hessian(const VectorXd& c) const {
    const Index p = X_.cols();
    MatrixXd H(p + 1, p + 1);
    H(0, 0) = c.sum();
    const VectorXd cross = X_.transpose() * c;
    H.block(1, 0, p, 1) = cross;
    H.block(0, 1, 1, p) = cross.transpose();
    H.bottomRightCorner(p, p).noalias() =
        X_.transpose() * (X_.array().colwise() * c.array()).matrix();
    return H / n_;
  }

 private:
  VectorXd residual(const VectorXd& eta) const {
    VectorXd r(eta.size());
    for (Index i = 0; i < eta.size(); ++i)
      r(i) = w_(i) == 0.0 ? 0.0 : logistic(eta(i) + log_a_) - y_(i);
    return r;
  }

  VectorXd Xt_times(const VectorXd& r) const {
    VectorXd out(X_.cols() + 1);
    out(0) = r.sum();
    out.tail(X_.cols()).noalias() = X_.transpose() * r;
    return out;
  }

  const MatrixXd& X_;
  const VectorXd& y_;
  VectorXd w_;
  double n_ = 0.0;
  double log_a_ = 0.0;
};

double subset_mean(const VectorXd& v, const std::vector<Index>& rows) {
  double s = 0.0;
  for (Index i : rows) s += v(i);
  return s / static_cast<double>(rows.size());
}

// Intercept-only minimizer of the offset loss: g(c + log a) = ybar.
VectorXd intercept_start(const SubsetLoss& loss) {
  VectorXd gamma = VectorXd::Zero(loss.dim());
  const double ybar = loss.weighted_mean_y();
  if (ybar > 0.0 && ybar < 1.0) gamma(0) = std::log(ybar / (1.0 - ybar)) - loss.log_a();
  return gamma;
}

OffsetLogisticFit newton(const SubsetLoss& loss, const NewtonOptions& options) {
  const double ybar = loss.weighted_mean_y();
  if (!(ybar > 0.0 && ybar < 1.0))
    throw Error(ErrorCode::Separation, "response is constant on the training rows; the MLE does not exist");

  OffsetLogisticFit fit;
  fit.gamma = intercept_start(loss);
  VectorXd eta = loss.eta(fit.gamma);
  double f = loss.value(eta);
  VectorXd grad = loss.gradient(eta);

  for (fit.iterations = 0; fit.iterations < options.max_iterations; ++fit.iterations) {
    if (grad.lpNorm<Eigen::Infinity>() <= options.tolerance) {
      fit.converged = true;
      break;
    }
    const MatrixXd H = loss.hessian(loss.curvature(eta));
    Eigen::LDLT<MatrixXd> ldlt(H);
    if (ldlt.info() != Eigen::Success || !(ldlt.rcond() > 1e-14) || !ldlt.isPositive())
      throw Error(ErrorCode::Separation, "Hessian is numerically singular after " +
                                             std::to_string(fit.iterations) + " Newton steps");
    const VectorXd step = -ldlt.solve(grad);

    double t = 1.0;
    bool accepted = false;
    VectorXd trial, trial_eta;
    double trial_f = 0.0;
    for (int h = 0; h <= options.max_halvings; ++h, t *= 0.5) {
      trial = fit.gamma + t * step;
      trial_eta = loss.eta(trial);
      trial_f = loss.value(trial_eta);
      if (std::isfinite(trial_f) && trial_f <= f + 1e-15 * (1.0 + std::abs(f))) {
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
    fit.gamma = std::move(trial);
    eta = std::move(trial_eta);
    f = trial_f;
    grad = loss.gradient(eta);
  }
  fit.gradient_norm = grad.lpNorm<Eigen::Infinity>();
  if (!fit.converged && fit.gradient_norm <= options.tolerance) fit.converged = true;
  if (!fit.converged)
    throw Error(ErrorCode::Separation, "Newton iterations stopped with gradient norm " +
                                           std::to_string(fit.gradient_norm));
  // Under (quasi-)separation the loss is driven to its infimum with fitted
  // probabilities at 0 or 1, where the gradient vanishes numerically.
  if (loss.max_abs_margin(eta) > 30.0)
    throw Error(ErrorCode::Separation, "fitted probabilities are numerically 0 or 1");
  fit.offset = loss.log_a();
  return fit;
}

// Largest eigenvalue of D^-1/2 H D^-1/2.
double power_iteration_lipschitz(const SubsetLoss& loss, const VectorXd& curvature,
                                 const VectorXd& inv_sqrt_d) {
  VectorXd v = VectorXd::Ones(loss.dim()).normalized();
  double lambda = 0.0;
  for (int it = 0; it < 8; ++it) {
    const VectorXd hv =
        inv_sqrt_d.cwiseProduct(loss.hessian_times(curvature, inv_sqrt_d.cwiseProduct(v)));
    lambda = hv.norm();
    if (!(lambda > 0.0)) break;
    v = hv / lambda;
  }
  return lambda;
}

double l1_penalty(const VectorXd& gamma, bool penalize_intercept) {
  return penalize_intercept ? gamma.lpNorm<1>() : gamma.tail(gamma.size() - 1).lpNorm<1>();
}

OffsetLogisticFit proximal_gradient(const SubsetLoss& loss, double lambda, VectorXd gamma,
                                    const OffsetLassoOptions& options) {
  if (!(lambda >= 0.0)) throw Error(ErrorCode::InvalidArgument, "lambda must be nonnegative");
  const bool pen0 = options.penalize_intercept;
  VectorXd eta = loss.eta(gamma);
  double smooth = loss.value(eta);
  double F = smooth + lambda * l1_penalty(gamma, pen0);
  VectorXd grad = loss.gradient(eta);

  const VectorXd D = loss.second_moments();
  const VectorXd inv_sqrt_d = D.cwiseSqrt().cwiseInverse();
  const double L = power_iteration_lipschitz(loss, loss.curvature(eta), inv_sqrt_d);
  double t = L > 0.0 ? 1.0 / L : 1.0;

  // FISTA with function-value restart
  VectorXd z = gamma, z_eta = eta, z_grad = grad;
  double z_smooth = smooth;
  double momentum = 1.0;
  OffsetLogisticFit fit;
  for (fit.iterations = 0; fit.iterations < options.max_iterations; ++fit.iterations) {
    VectorXd trial, trial_eta;
    double trial_smooth = 0.0;
    for (int h = 0; h < 60; ++h) {
      trial = z - t * z_grad.cwiseQuotient(D);
      for (Index j = pen0 ? 0 : 1; j < trial.size(); ++j) {
        const double v = trial(j), c = t * lambda / D(j);
        trial(j) = v > c ? v - c : (v < -c ? v + c : 0.0);
      }
      trial_eta = loss.eta(trial);
      trial_smooth = loss.value(trial_eta);
      const VectorXd d = trial - z;
      const double model = z_smooth + z_grad.dot(d) + d.dot(D.cwiseProduct(d)) / (2.0 * t);
      if (std::isfinite(trial_smooth) && trial_smooth <= model + 1e-15 * (1.0 + std::abs(z_smooth)))
        break;
      t *= 0.5;
    }
    const double F_next = trial_smooth + lambda * l1_penalty(trial, pen0);
    if (F_next > F && momentum > 1.0) {
      // restart from the last iterate
      momentum = 1.0;
      z = gamma;
      z_eta = eta;
      z_smooth = smooth;
      z_grad = grad;
      continue;
    }
    const double momentum_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * momentum * momentum));
    const double beta = (momentum - 1.0) / momentum_next;
    momentum = momentum_next;
    const VectorXd step = trial - gamma;
    const bool done = std::abs(F - F_next) < options.tolerance * (1.0 + std::abs(F_next)) &&
                      step.lpNorm<Eigen::Infinity>() < std::sqrt(options.tolerance);
    gamma = std::move(trial);
    eta = std::move(trial_eta);
    smooth = trial_smooth;
    grad = loss.gradient(eta);
    F = F_next;
    if (done) {
      fit.converged = true;
      ++fit.iterations;
      break;
    }
    z = gamma + beta * step;
    z_eta = loss.eta(z);
    z_smooth = loss.value(z_eta);
    z_grad = loss.gradient(z_eta);
  }
  fit.gamma = std::move(gamma);
  fit.gradient_norm = grad.lpNorm<Eigen::Infinity>();
  fit.offset = loss.log_a();
  fit.penalty = lambda;
  return fit;
}

// Bernoulli deviance of held-out rows under offset log(a).
double holdout_deviance(const MatrixXd& X, const VectorXd& y, const std::vector<Index>& rows,
                        const VectorXd& gamma, double log_a) {
  double s = 0.0;
  for (Index i : rows) {
    const double u = gamma(0) + X.row(i).dot(gamma.tail(X.cols())) + log_a;
    s += y(i) == 1.0 ? log1p_exp(-u) : log1p_exp(u);
  }
  return s;
}

std::vector<Index> select(const std::vector<Index>& rows, const std::vector<Index>& positions) {
  std::vector<Index> out;
  out.reserve(positions.size());
  for (Index k : positions) out.push_back(rows[static_cast<std::size_t>(k)]);
  return out;
}

// `balanced` selects the ordinary logistic model (a = 1) instead of a = ybar.
OffsetLogisticFit fit_lasso_impl(const MatrixXd& X, const VectorXd& y,
                                 const std::vector<Index>& rows, bool balanced,
                                 const OffsetLassoOptions& options, std::uint64_t seed) {
  check_inputs(X, y);
  if (rows.empty()) throw Error(ErrorCode::EmptyLabeledSet, "no rows to fit");
  const double ybar = subset_mean(y, rows);
  if (!balanced && !(ybar > 0.0))
    throw Error(ErrorCode::NoLabeledInTrainingFold, "training rows contain no labeled observation");
  const double a = balanced ? 1.0 : ybar;
  const Index n = static_cast<Index>(rows.size());
  const double rate = offset_lasso_rate(a, X.cols(), n);

  auto finish = [&](OffsetLogisticFit fit) {
    fit.pi_hat_N = balanced ? 1.0 : ybar;
    return fit;
  };

  if (options.lambda)
    return finish(solve_offset_lasso(X, y, rows, a, *options.lambda, options));
  if (options.rate_multiplier)
    return finish(solve_offset_lasso(X, y, rows, a, *options.rate_multiplier * rate, options));

  if (options.grid_size < 1) throw Error(ErrorCode::EmptyGrid, "lambda grid is empty");
  std::vector<double> grid(static_cast<std::size_t>(options.grid_size));
  for (int k = 0; k < options.grid_size; ++k) {
    const double e = options.grid_size == 1 ? 0.0 : 4.0 - 9.0 * k / (options.grid_size - 1);
    grid[static_cast<std::size_t>(k)] = rate * std::exp2(e);  // descending
  }
  if (n < options.cv_folds)
    throw Error(ErrorCode::InvalidArgument, "lasso CV needs at least cv_folds training rows");

  const CrossFitPlan cv = make_folds(n, options.cv_folds, seed);
  std::vector<double> dev(grid.size(), 0.0);
  for (int k = 0; k < cv.K; ++k) {
    const auto train = select(rows, cv.training(k));
    const auto valid = select(rows, cv.fold(k));
    const double a_k = balanced ? 1.0 : subset_mean(y, train);
    if (!(a_k > 0.0))
      throw Error(ErrorCode::NoLabeledInTrainingFold, "CV training split has no labeled rows");
    const SubsetLoss loss(X, y, train, a_k);
    VectorXd gamma = intercept_start(loss);
    for (std::size_t l = 0; l < grid.size(); ++l) {
      gamma = proximal_gradient(loss, grid[l], gamma, options).gamma;
      dev[l] += holdout_deviance(X, y, valid, gamma, std::log(a_k));
    }
  }
  const auto best = static_cast<std::size_t>(std::min_element(dev.begin(), dev.end()) - dev.begin());
  return finish(solve_offset_lasso(X, y, rows, a, grid[best], options));
}

}  // namespace

// ---------------------------------------------------------------------------

VectorXd OffsetLogisticFit::linear_predictor(const MatrixXd& X) const {
  if (X.cols() + 1 != gamma.size())
    throw Error(ErrorCode::DimensionMismatch, "propensity fit expects " +
                                                  std::to_string(gamma.size() - 1) +
                                                  " covariates, got " + std::to_string(X.cols()));
  VectorXd u = X * gamma.tail(X.cols());
  u.array() += gamma(0) + offset;
  return u;
}

VectorXd OffsetLogisticFit::predict(const MatrixXd& X) const {
  return linear_predictor(X).unaryExpr([](double u) { return logistic(u); });
}

double offset_loglik(const VectorXd& gamma, double a, const MatrixXd& X, const VectorXd& R) {
  if (gamma.size() != X.cols() + 1) throw Error(ErrorCode::DimensionMismatch, "gamma length must be p + 1");
  const SubsetLoss loss(X, R, all_rows(X.rows()), a);
  return loss.value(loss.eta(gamma));
}

VectorXd offset_loglik_gradient(const VectorXd& gamma, double a, const MatrixXd& X,
                                const VectorXd& R) {
  if (gamma.size() != X.cols() + 1) throw Error(ErrorCode::DimensionMismatch, "gamma length must be p + 1");
  const SubsetLoss loss(X, R, all_rows(X.rows()), a);
  return loss.gradient(loss.eta(gamma));
}

OffsetLogisticFit fit_offset_logistic_mle(const MatrixXd& X, const VectorXd& R,
                                          const NewtonOptions& options) {
  return fit_offset_logistic_mle(X, R, all_rows(X.rows()), options);
}

OffsetLogisticFit fit_offset_logistic_mle(const MatrixXd& X, const VectorXd& R,
                                          const std::vector<Index>& rows,
                                          const NewtonOptions& options) {
  check_inputs(X, R);
  if (rows.empty()) throw Error(ErrorCode::EmptyLabeledSet, "no rows to fit");
  const double pi_hat = subset_mean(R, rows);
  if (!(pi_hat > 0.0))
    throw Error(ErrorCode::NoLabeledInTrainingFold, "training rows contain no labeled observation");
  if (static_cast<Index>(rows.size()) < X.cols() + 1)
    throw Error(ErrorCode::RankDeficientDesign, "fewer training rows than parameters");
  OffsetLogisticFit fit = newton(SubsetLoss(X, R, rows, pi_hat), options);
  fit.pi_hat_N = pi_hat;
  return fit;
}

OffsetLogisticFit fit_logistic_mle(const MatrixXd& X, const VectorXd& y,
                                   const std::vector<Index>& rows, const NewtonOptions& options) {
  check_inputs(X, y);
  if (rows.empty()) throw Error(ErrorCode::EmptyLabeledSet, "no rows to fit");
  OffsetLogisticFit fit = newton(SubsetLoss(X, y, rows, 1.0), options);
  fit.pi_hat_N = 1.0;
  return fit;
}

double offset_lasso_rate(double pi_hat, Index p, Index n) {
  return std::sqrt(pi_hat * std::log(static_cast<double>(p) + 1.0) / static_cast<double>(n));
}

OffsetLogisticFit solve_offset_lasso(const MatrixXd& X, const VectorXd& y,
                                     const std::vector<Index>& rows, double a, double lambda,
                                     const OffsetLassoOptions& options) {
  const SubsetLoss loss(X, y, rows, a);
  OffsetLogisticFit fit = proximal_gradient(loss, lambda, intercept_start(loss), options);
  fit.pi_hat_N = a;
  return fit;
}

OffsetLogisticFit fit_offset_logistic_lasso(const MatrixXd& X, const VectorXd& R,
                                            const OffsetLassoOptions& options, std::uint64_t seed) {
  return fit_lasso_impl(X, R, all_rows(X.rows()), false, options, seed);
}

OffsetLogisticFit fit_offset_logistic_lasso(const MatrixXd& X, const VectorXd& R,
                                            const std::vector<Index>& rows,
                                            const OffsetLassoOptions& options, std::uint64_t seed) {
  return fit_lasso_impl(X, R, rows, false, options, seed);
}

OffsetLogisticFit fit_logistic_lasso(const MatrixXd& X, const VectorXd& y,
                                     const std::vector<Index>& rows,
                                     const OffsetLassoOptions& options, std::uint64_t seed) {
  return fit_lasso_impl(X, y, rows, true, options, seed);
}

// ---------------------------------------------------------------------------

McarPsFit fit_mcar(const VectorXd& R) { return fit_mcar(R, all_rows(R.size())); }

McarPsFit fit_mcar(const VectorXd& R, const std::vector<Index>& rows) {
  if (rows.empty()) throw Error(ErrorCode::EmptyLabeledSet, "no rows to fit");
  const double pi = subset_mean(R, rows);
  if (!(pi > 0.0)) throw Error(ErrorCode::EmptyLabeledSet, "no labeled rows in the training set");
  return McarPsFit{pi};
}

VectorXd StratifiedPsFit::predict(const MatrixXd& X) const {
  return predict_from_p_delta(p_delta_model.predict(X));
}

StratifiedPsFit fit_stratified(const MatrixXd& X, const VectorXd& R, const VectorXd& delta,
                               bool highdim, std::uint64_t seed) {
  return fit_stratified(X, R, delta, all_rows(X.rows()), highdim, seed);
}

StratifiedPsFit fit_stratified(const MatrixXd& X, const VectorXd& R, const VectorXd& delta,
                               const std::vector<Index>& rows, bool highdim, std::uint64_t seed) {
  check_inputs(X, R);
  check_inputs(X, delta);
  double n1 = 0.0, n0 = 0.0, r1 = 0.0, r0 = 0.0;
  for (Index i : rows) {
    if (delta(i) == 1.0) {
      n1 += 1.0;
      r1 += R(i);
    } else {
      n0 += 1.0;
      r0 += R(i);
    }
  }
  if (n1 == 0.0 || n0 == 0.0)
    throw Error(ErrorCode::EmptyStratum, "both strata must be present in the training rows");
  if (r1 + r0 == 0.0)
    throw Error(ErrorCode::NoLabeledInTrainingFold, "training rows contain no labeled observation");
  StratifiedPsFit fit;
  fit.pi1 = r1 / n1;
  fit.pi0 = r0 / n0;
  fit.p_delta_model = highdim ? fit_logistic_lasso(X, delta, rows, {}, seed)
                              : fit_logistic_mle(X, delta, rows);
  return fit;
}

// ---------------------------------------------------------------------------

double offset_bregman(const VectorXd& gamma0, const VectorXd& Delta, double a, const MatrixXd& X,
                      const VectorXd& R) {
  return offset_loglik(gamma0 + Delta, a, X, R) - offset_loglik(gamma0, a, X, R) -
         Delta.dot(offset_loglik_gradient(gamma0, a, X, R));
}

bool rsc_inequality_check(const VectorXd& gamma0, const VectorXd& Delta, double a,
                          const MatrixXd& X, const VectorXd& R, double slack) {
  if (!(a > 0.0 && a <= 1.0)) throw Error(ErrorCode::InvalidArgument, "a must lie in (0, 1]");
  return offset_bregman(gamma0, Delta, a, X, R) >= a * offset_bregman(gamma0, Delta, 1.0, X, R) - slack;
}

// ---------------------------------------------------------------------------

PsSpec PsSpec::parse(const std::string& name) {
  PsSpec spec;
  if (name == "constant" || name == "mcar") {
    spec.kind = PsKind::Mcar;
  } else if (name == "logistic" || name == "offset-logistic") {
    spec.kind = PsKind::OffsetLogistic;
  } else if (name == "log-lasso" || name == "offset-lasso") {
    spec.kind = PsKind::OffsetLasso;
  } else if (name == "stratified") {
    spec.kind = PsKind::Stratified;
  } else if (name == "stratified-lasso") {
    spec.kind = PsKind::Stratified;
    spec.highdim = true;
  } else {
    throw Error(ErrorCode::InvalidSpec, "unknown propensity model '" + name + "'");
  }
  return spec;
}

std::string PsSpec::name() const {
  switch (kind) {
    case PsKind::Mcar: return "constant";
    case PsKind::OffsetLogistic: return "logistic";
    case PsKind::OffsetLasso: return "log-Lasso";
    case PsKind::Stratified: return highdim ? "stratified-Lasso" : "stratified";
  }
  return "?";
}

PsFit fit_propensity(const PsSpec& spec, const MatrixXd& X, const VectorXd& R,
                     const VectorXd* delta, const std::vector<Index>& rows, std::uint64_t seed) {
  switch (spec.kind) {
    case PsKind::Mcar: return fit_mcar(R, rows);
    case PsKind::OffsetLogistic: return fit_offset_logistic_mle(X, R, rows, spec.newton);
    case PsKind::OffsetLasso: return fit_offset_logistic_lasso(X, R, rows, spec.lasso, seed);
    case PsKind::Stratified:
      if (delta == nullptr)
        throw Error(ErrorCode::EmptyStratum, "stratified propensity requires stratum indicators");
      return fit_stratified(X, R, *delta, rows, spec.highdim, seed);
  }
  throw Error(ErrorCode::InvalidSpec, "unhandled propensity kind");
}

VectorXd predict(const PsFit& fit, const MatrixXd& X) {
  return std::visit([&](const auto& f) { return f.predict(X); }, fit);
}

}  // namespace drss
