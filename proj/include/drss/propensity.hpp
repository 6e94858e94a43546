#ifndef DRSS_PROPENSITY_HPP
#define DRSS_PROPENSITY_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "drss/core.hpp"

namespace drss {

/// Logistic model with a fixed offset: predict(x) = g(x_vec^T gamma + offset),
/// x_vec = (1, x^T)^T. For the decaying-PS model offset = log(pi_hat_N); an
/// ordinary logistic regression is the special case offset = 0.
struct OffsetLogisticFit {
  VectorXd gamma;  // intercept first
  double offset = 0.0;
  double pi_hat_N = 1.0;
  std::optional<double> penalty;
  int iterations = 0;
  bool converged = false;
  double gradient_norm = 0.0;  // sup-norm of the smooth-loss gradient at exit

  VectorXd linear_predictor(const MatrixXd& X) const;
  VectorXd predict(const MatrixXd& X) const;
};

/// l_N(gamma; a) = -N^-1 sum [R_i x_i^T gamma - log(1 + a exp(x_i^T gamma))].
/// X excludes the intercept column; gamma has length p + 1.
double offset_loglik(const VectorXd& gamma, double a, const MatrixXd& X, const VectorXd& R);

/// grad l_N(gamma; a) = -N^-1 sum [R_i - g(x_i^T gamma + log a)] x_i.
VectorXd offset_loglik_gradient(const VectorXd& gamma, double a, const MatrixXd& X,
                                const VectorXd& R);

struct NewtonOptions {
  int max_iterations = 100;
  int max_halvings = 50;
  double tolerance = 1e-8;  // on the gradient sup-norm
};

/// Offset-logistic MLE with a = pi_hat_N = mean(R) by damped Newton.
OffsetLogisticFit fit_offset_logistic_mle(const MatrixXd& X, const VectorXd& R,
                                          const NewtonOptions& options = {});
/// Same, trained on the subset `rows` of (X, R) without copying X.
OffsetLogisticFit fit_offset_logistic_mle(const MatrixXd& X, const VectorXd& R,
                                          const std::vector<Index>& rows,
                                          const NewtonOptions& options = {});

/// Ordinary logistic regression of a binary y on X (the a = 1 case).
OffsetLogisticFit fit_logistic_mle(const MatrixXd& X, const VectorXd& y,
                                   const std::vector<Index>& rows,
                                   const NewtonOptions& options = {});

struct OffsetLassoOptions {
  std::optional<double> lambda;           // fixed penalty
  std::optional<double> rate_multiplier;  // lambda = c * sqrt(pi_hat log(p+1) / N)
  bool penalize_intercept = true;
  int cv_folds = 5;
  int grid_size = 20;  // log-spaced multipliers of the rate in [2^-5, 2^4]
  double tolerance = 1e-9;
  int max_iterations = 20000;
};

/// sqrt(pi_hat * log(p + 1) / n), the penalty rate for the imbalanced model.
double offset_lasso_rate(double pi_hat, Index p, Index n);

/// Minimizes l_N(gamma; pi_hat_N) + lambda ||gamma||_1 by proximal gradient with
/// backtracking. Without a fixed lambda or multiplier, lambda is chosen by
/// K-fold CV on held-out Bernoulli deviance.
OffsetLogisticFit fit_offset_logistic_lasso(const MatrixXd& X, const VectorXd& R,
                                            const OffsetLassoOptions& options = {},
                                            std::uint64_t seed = 0);
OffsetLogisticFit fit_offset_logistic_lasso(const MatrixXd& X, const VectorXd& R,
                                            const std::vector<Index>& rows,
                                            const OffsetLassoOptions& options = {},
                                            std::uint64_t seed = 0);

/// l1-penalized ordinary logistic regression (a = 1) on a subset of rows.
OffsetLogisticFit fit_logistic_lasso(const MatrixXd& X, const VectorXd& y,
                                     const std::vector<Index>& rows,
                                     const OffsetLassoOptions& options = {},
                                     std::uint64_t seed = 0);

/// Single penalized solve at a fixed lambda for a given offset level a.
OffsetLogisticFit solve_offset_lasso(const MatrixXd& X, const VectorXd& y,
                                     const std::vector<Index>& rows, double a, double lambda,
                                     const OffsetLassoOptions& options);

// ---------------------------------------------------------------------------

struct McarPsFit {
  double pi_hat = 1.0;
  VectorXd predict(const MatrixXd& X) const { return VectorXd::Constant(X.rows(), pi_hat); }
};

McarPsFit fit_mcar(const VectorXd& R);
McarPsFit fit_mcar(const VectorXd& R, const std::vector<Index>& rows);

/// pi(x) = pi1 * p_delta(x) + pi0 * (1 - p_delta(x)).
struct StratifiedPsFit {
  double pi1 = 0.0;
  double pi0 = 0.0;
  OffsetLogisticFit p_delta_model;

  VectorXd predict(const MatrixXd& X) const;
  VectorXd predict_from_p_delta(const VectorXd& p_delta) const {
    return pi1 * p_delta.array() + pi0 * (1.0 - p_delta.array());
  }
};

StratifiedPsFit fit_stratified(const MatrixXd& X, const VectorXd& R, const VectorXd& delta,
                               bool highdim, std::uint64_t seed = 0);
StratifiedPsFit fit_stratified(const MatrixXd& X, const VectorXd& R, const VectorXd& delta,
                               const std::vector<Index>& rows, bool highdim,
                               std::uint64_t seed = 0);

// ---------------------------------------------------------------------------

/// delta_l(Delta; a; gamma0) = l(gamma0 + Delta; a) - l(gamma0; a) - Delta^T grad l(gamma0; a).
double offset_bregman(const VectorXd& gamma0, const VectorXd& Delta, double a, const MatrixXd& X,
                      const VectorXd& R);

/// True when delta_l(Delta; a; gamma0) >= a * delta_l(Delta; 1; gamma0) - slack.
bool rsc_inequality_check(const VectorXd& gamma0, const VectorXd& Delta, double a,
                          const MatrixXd& X, const VectorXd& R, double slack = 1e-12);

// ---------------------------------------------------------------------------
// Propensity-model specification used by the cross-fitting pipeline.

enum class PsKind { Mcar, OffsetLogistic, OffsetLasso, Stratified };

struct PsSpec {
  PsKind kind = PsKind::Mcar;
  bool highdim = false;  // stratified only: logistic-lasso for p_delta
  NewtonOptions newton;
  OffsetLassoOptions lasso;

  /// Parses "constant" / "mcar", "logistic", "log-lasso", "stratified", "stratified-lasso".
  static PsSpec parse(const std::string& name);
  std::string name() const;
};

using PsFit = std::variant<McarPsFit, OffsetLogisticFit, StratifiedPsFit>;

/// Fits the propensity model on the subset `rows` of the sample arrays.
PsFit fit_propensity(const PsSpec& spec, const MatrixXd& X, const VectorXd& R,
                     const VectorXd* delta, const std::vector<Index>& rows, std::uint64_t seed);

VectorXd predict(const PsFit& fit, const MatrixXd& X);

}  // namespace drss

#endif  // DRSS_PROPENSITY_HPP
