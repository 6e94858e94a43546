#ifndef DRSS_INFERENCE_HPP
#define DRSS_INFERENCE_HPP

#include <optional>

#include "drss/core.hpp"
#include "drss/drss.hpp"
#include "drss/propensity.hpp"

namespace drss {

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  double length() const { return hi - lo; }
  bool contains(double x) const { return lo <= x && x <= hi; }
};

/// V_hat = N^-1 sum [m_i - theta + R_i / pi_i (Y_i - m_i)]^2.
double variance_plugin(const VectorXd& m_hat, const VectorXd& pi_hat, const VectorXd& R,
                       const VectorXd& Y, double theta);

/// Standard normal quantile: Acklam's rational approximation followed by one
/// Halley step against erfc, accurate to about 1e-15 on (0, 1).
double normal_quantile(double p);

/// theta -/+ z_{1-alpha/2} sqrt(v_hat / N).
Interval confidence_interval(double theta, double v_hat, Index N, double alpha = 0.05);

// ---------------------------------------------------------------------------
// Propensity-estimation corrections IF_pi. In each, the unknown E[h(X)(mu - m)]
// is estimated by N^-1 sum h(X_i) (m_hat_i - R_i Y_i / pi_hat_i).

/// MCAR: IF_pi = ((R - pi) / pi) * Delta_hat, Delta_hat = N^-1 sum (m_hat - R Y / pi).
VectorXd adjusted_if_mcar(const VectorXd& m_hat, double pi_hat, const VectorXd& R,
                          const VectorXd& Y);

/// Offset logistic: IF_pi,i = h^T J^-1 x_i (R_i - pi_i), with
/// h = N^-1 sum (1 - pi_i) x_i (m_i - R_i Y_i / pi_i) and J = N^-1 sum x_i x_i^T pi_i (1 - pi_i).
VectorXd adjusted_if_offset_logistic(const SemiSupervisedSample& sample,
                                     const NuisancePredictions& preds);

/// Stratified labeling; requires preds.p_delta (cross-fitted p_delta(X_i)).
VectorXd adjusted_if_stratified(const SemiSupervisedSample& sample,
                                const NuisancePredictions& preds);

/// Dispatches on the propensity model; the offset lasso has no correction.
VectorXd adjusted_if(const SemiSupervisedSample& sample, const NuisancePredictions& preds,
                     const PsSpec& ps);

// ---------------------------------------------------------------------------

struct ErrDiagnostics {
  std::optional<double> err_m;   // N^-1 sum (m_hat - m)^2
  std::optional<double> err_pi;  // N^-1 sum (1 - pi / pi_hat)^2
};

ErrDiagnostics err_diagnostics(const NuisancePredictions& preds,
                               const std::optional<VectorXd>& true_m,
                               const std::optional<VectorXd>& true_pi);

struct EstimateReport {
  double theta = 0.0;
  double v_hat = 0.0;
  std::optional<double> v_hat_adjusted;
  Interval ci;
  std::optional<Interval> ci_adjusted;
  double alpha = 0.05;
  Index N = 0;
  Index n_labeled = 0;
  double a_hat_inv = 0.0;  // N^-1 sum 1 / pi_hat_i
  std::optional<double> err_m;
  std::optional<double> err_pi;
};

/// Plug-in report for a DR estimate; with `if_pi` also the adjusted variance
/// N^-1 sum (psi + IF_pi)^2 and its interval.
EstimateReport make_report(const SemiSupervisedSample& sample, const NuisancePredictions& preds,
                           const MeanEstimate& estimate, double alpha = 0.05,
                           const std::optional<VectorXd>& if_pi = std::nullopt,
                           const ErrDiagnostics& diagnostics = {});

}  // namespace drss

#endif  // DRSS_INFERENCE_HPP
