#include "drss/inference.hpp"

#include <cmath>
#include <numbers>

namespace drss {

double variance_plugin(const VectorXd& m_hat, const VectorXd& pi_hat, const VectorXd& R,
                       const VectorXd& Y, double theta) {
  const Index n = m_hat.size();
  if (pi_hat.size() != n || R.size() != n || Y.size() != n)
    throw Error(ErrorCode::DimensionMismatch, "variance inputs differ in length");
  require_positive_propensity(pi_hat);
  return (dr_scores(m_hat, pi_hat, R, Y).array() - theta).square().mean();
}

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw Error(ErrorCode::InvalidAlpha, "quantile level must lie in (0, 1)");
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                 -2.759285104469687e+02, 1.383577518672690e+02,
                                 -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                 -1.556989798598866e+02, 6.680131188771972e+01,
                                 -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                 -2.400758277161838e+00, -2.549732539343734e+00,
                                 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                 2.445134137142996e+00, 3.754408661907416e+00};
  constexpr double low = 0.02425;
  double x;
  if (p < low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - low) {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log1p(-p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  // Halley refinement
  const double e = 0.5 * std::erfc(-x / std::numbers::sqrt2) - p;
  const double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(0.5 * x * x);
  return x - u / (1.0 + 0.5 * x * u);
}

Interval confidence_interval(double theta, double v_hat, Index N, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error(ErrorCode::InvalidAlpha, "alpha must lie in (0, 1)");
  if (!(v_hat >= 0.0)) throw Error(ErrorCode::InvalidArgument, "variance must be nonnegative");
  if (N < 1) throw Error(ErrorCode::InvalidArgument, "N must be positive");
  const double half = normal_quantile(1.0 - alpha / 2.0) * std::sqrt(v_hat / static_cast<double>(N));
  return {theta - half, theta + half};
}

// ---------------------------------------------------------------------------

namespace {

// m_hat - R Y / pi_hat: the per-row IPW estimate of mu(X) - m(X).
VectorXd ipw_gap(const VectorXd& m_hat, const VectorXd& pi_hat, const VectorXd& R,
                 const VectorXd& Y) {
  return m_hat.array() - R.array() * Y.array() / pi_hat.array();
}

void check_preds(const SemiSupervisedSample& sample, const NuisancePredictions& preds) {
  if (preds.m_hat.size() != sample.size() || preds.pi_hat.size() != sample.size())
    throw Error(ErrorCode::DimensionMismatch, "nuisance predictions and sample differ in length");
  require_positive_propensity(preds.pi_hat);
}

}  // namespace

VectorXd adjusted_if_mcar(const VectorXd& m_hat, double pi_hat, const VectorXd& R,
                          const VectorXd& Y) {
  if (R.size() != m_hat.size() || Y.size() != m_hat.size())
    throw Error(ErrorCode::DimensionMismatch, "inputs differ in length");
  if (!(pi_hat > 0.0)) throw Error(ErrorCode::NonpositivePropensity, "MCAR propensity must be positive");
  const double delta = (m_hat.array() - R.array() * Y.array() / pi_hat).mean();
  return ((R.array() - pi_hat) / pi_hat) * delta;
}

VectorXd adjusted_if_offset_logistic(const SemiSupervisedSample& sample,
                                     const NuisancePredictions& preds) {
  check_preds(sample, preds);
  const MatrixXd& X = sample.X();
  const VectorXd& pi = preds.pi_hat;
  const double n = static_cast<double>(sample.size());
  const Index q = X.cols() + 1;

  const VectorXd gap = ipw_gap(preds.m_hat, pi, sample.R(), sample.Y());
  const VectorXd hw = (1.0 - pi.array()) * gap.array();
  VectorXd h(q);
  h(0) = hw.sum() / n;
  h.tail(X.cols()) = X.transpose() * hw / n;

  const VectorXd w = pi.array() * (1.0 - pi.array());
  MatrixXd J(q, q);
  J(0, 0) = w.sum();
  const VectorXd cross = X.transpose() * w;
  J.block(1, 0, X.cols(), 1) = cross;
  J.block(0, 1, 1, X.cols()) = cross.transpose();
  J.bottomRightCorner(X.cols(), X.cols()).noalias() =
      X.transpose() * (X.array().colwise() * w.array()).matrix();
  J /= n;

  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(J);
  const double top = eig.eigenvalues().maxCoeff();
  const double bottom = eig.eigenvalues().minCoeff();
  if (!(bottom > 0.0) || top / bottom > 1e12)
    throw Error(ErrorCode::SingularJacobian, "condition number of J exceeds 1e12");
  const VectorXd v = J.ldlt().solve(h);

  VectorXd lin = X * v.tail(X.cols());
  lin.array() += v(0);
  return lin.array() * (sample.R().array() - pi.array());
}

VectorXd adjusted_if_stratified(const SemiSupervisedSample& sample,
                                const NuisancePredictions& preds) {
  check_preds(sample, preds);
  if (!sample.has_delta())
    throw Error(ErrorCode::EmptyStratum, "stratified correction requires stratum indicators");
  if (!preds.p_delta || preds.p_delta->size() != sample.size())
    throw Error(ErrorCode::DimensionMismatch, "stratified correction requires cross-fitted p_delta");
  const VectorXd& delta = sample.delta();
  const VectorXd& R = sample.R();
  const double p_bar = delta.mean();
  if (!(p_bar > 0.0 && p_bar < 1.0))
    throw Error(ErrorCode::EmptyStratum, "both strata must be present");
  const double pi1 = delta.dot(R) / delta.sum();
  const double pi0 = (1.0 - delta.array()).matrix().dot(R) / (1.0 - delta.array()).sum();

  const VectorXd gap = ipw_gap(preds.m_hat, preds.pi_hat, R, sample.Y());
  const VectorXd& pd = *preds.p_delta;
  const double A = (pd.array() / preds.pi_hat.array() * gap.array()).mean();
  const double B = ((1.0 - pd.array()) / preds.pi_hat.array() * gap.array()).mean();
  return (delta.array() * R.array() / p_bar - pi1) * A +
         ((1.0 - delta.array()) * R.array() / (1.0 - p_bar) - pi0) * B;
}

VectorXd adjusted_if(const SemiSupervisedSample& sample, const NuisancePredictions& preds,
                     const PsSpec& ps) {
  switch (ps.kind) {
    case PsKind::Mcar:
      check_preds(sample, preds);
      return adjusted_if_mcar(preds.m_hat, sample.R().mean(), sample.R(), sample.Y());
    case PsKind::OffsetLogistic: return adjusted_if_offset_logistic(sample, preds);
    case PsKind::Stratified: return adjusted_if_stratified(sample, preds);
    case PsKind::OffsetLasso: break;
  }
  throw Error(ErrorCode::InvalidSpec, "no adjusted influence function for " + ps.name());
}

// ---------------------------------------------------------------------------

ErrDiagnostics err_diagnostics(const NuisancePredictions& preds,
                               const std::optional<VectorXd>& true_m,
                               const std::optional<VectorXd>& true_pi) {
  ErrDiagnostics out;
  if (true_m) {
    if (true_m->size() != preds.m_hat.size())
      throw Error(ErrorCode::DimensionMismatch, "true m differs in length");
    out.err_m = (preds.m_hat - *true_m).squaredNorm() / static_cast<double>(true_m->size());
  }
  if (true_pi) {
    if (true_pi->size() != preds.pi_hat.size())
      throw Error(ErrorCode::DimensionMismatch, "true pi differs in length");
    out.err_pi = (1.0 - true_pi->array() / preds.pi_hat.array()).square().mean();
  }
  return out;
}

EstimateReport make_report(const SemiSupervisedSample& sample, const NuisancePredictions& preds,
                           const MeanEstimate& estimate, double alpha,
                           const std::optional<VectorXd>& if_pi,
                           const ErrDiagnostics& diagnostics) {
  check_preds(sample, preds);
  EstimateReport r;
  r.theta = estimate.theta;
  r.v_hat = estimate.psi.squaredNorm() / static_cast<double>(sample.size());
  r.alpha = alpha;
  r.N = sample.size();
  r.n_labeled = sample.n_labeled();
  r.ci = confidence_interval(r.theta, r.v_hat, r.N, alpha);
  r.a_hat_inv = preds.pi_hat.cwiseInverse().mean();
  if (if_pi) {
    if (if_pi->size() != sample.size())
      throw Error(ErrorCode::DimensionMismatch, "IF_pi differs in length");
    r.v_hat_adjusted = (estimate.psi + *if_pi).squaredNorm() / static_cast<double>(sample.size());
    r.ci_adjusted = confidence_interval(r.theta, *r.v_hat_adjusted, r.N, alpha);
  }
  r.err_m = diagnostics.err_m;
  r.err_pi = diagnostics.err_pi;
  return r;
}

}  // namespace drss
