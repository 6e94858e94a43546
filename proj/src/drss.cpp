#include "drss/drss.hpp"

#include <cmath>
#include <string>

namespace drss {

namespace {

void require_length(const VectorXd& v, Index n, const char* what) {
  if (v.size() != n)
    throw Error(ErrorCode::DimensionMismatch, std::string(what) + " has length " +
                                                  std::to_string(v.size()) + ", expected " +
                                                  std::to_string(n));
}

MeanEstimate centered(VectorXd scores, EstimatorKind kind) {
  MeanEstimate est;
  est.kind = kind;
  est.theta = scores.mean();
  est.psi = scores.array() - est.theta;
  return est;
}

[[noreturn]] void rethrow_for_fold(const Error& e, int k) {
  throw Error(e.code(), "fold " + std::to_string(k) + ": " + e.what());
}

}  // namespace

void require_positive_propensity(const VectorXd& pi_hat) {
  for (Index i = 0; i < pi_hat.size(); ++i)
    if (!(pi_hat(i) > 0.0) || !std::isfinite(pi_hat(i)))
      throw Error(ErrorCode::NonpositivePropensity,
                  "propensity at row " + std::to_string(i) + " is " + std::to_string(pi_hat(i)));
}

MeanEstimate naive_labeled_mean(const SemiSupervisedSample& sample) {
  const double n = static_cast<double>(sample.n_labeled());
  if (n < 1) throw Error(ErrorCode::EmptyLabeledSet, "no labeled observations");
  const VectorXd& R = sample.R();
  const VectorXd RY = R.cwiseProduct(sample.Y());
  MeanEstimate est;
  est.kind = EstimatorKind::Naive;
  est.theta = RY.sum() / n;
  // influence of the ratio sum(RY) / sum(R)
  est.psi = static_cast<double>(sample.size()) / n * (RY - est.theta * R).array();
  return est;
}

MeanEstimate estimate_reg(const SemiSupervisedSample& sample, const VectorXd& m_hat) {
  require_length(m_hat, sample.size(), "m_hat");
  return centered(m_hat, EstimatorKind::Reg);
}

MeanEstimate estimate_ipw(const SemiSupervisedSample& sample, const VectorXd& pi_hat) {
  require_length(pi_hat, sample.size(), "pi_hat");
  require_positive_propensity(pi_hat);
  return centered(sample.R().cwiseProduct(sample.Y()).cwiseQuotient(pi_hat), EstimatorKind::Ipw);
}

MeanEstimate estimate_dr(const SemiSupervisedSample& sample, const VectorXd& m_hat,
                         const VectorXd& pi_hat, EstimatorKind kind) {
  require_length(m_hat, sample.size(), "m_hat");
  require_length(pi_hat, sample.size(), "pi_hat");
  require_positive_propensity(pi_hat);
  return centered(dr_scores(m_hat, pi_hat, sample.R(), sample.Y()), kind);
}

// ---------------------------------------------------------------------------

std::vector<Index> training_rows_with_label(const SemiSupervisedSample& sample,
                                            const CrossFitPlan& plan, int k, double arm) {
  std::vector<Index> rows;
  for (Index i = 0; i < plan.size(); ++i)
    if (plan.assignment(i) != k && sample.R()(i) == arm) rows.push_back(i);
  return rows;
}

VectorXd cross_fit_outcome(const SemiSupervisedSample& sample, const CrossFitPlan& plan,
                           const OutcomeSpec& spec, std::uint64_t seed, double arm,
                           ErrorCode empty_code) {
  if (plan.size() != sample.size())
    throw Error(ErrorCode::DimensionMismatch, "fold plan and sample differ in size");
  VectorXd m_hat(sample.size());
  for (int k = 0; k < plan.K; ++k) {
    try {
      const auto rows = training_rows_with_label(sample, plan, k, arm);
      if (rows.empty())
        throw Error(empty_code, "training complement has no rows with R = " + std::to_string(static_cast<int>(arm)));
      const OutcomeFit fit = fit_outcome(spec, take_rows(sample.X(), rows), take(sample.Y(), rows),
                                         fold_seed(seed, k));
      const auto fold = plan.fold(k);
      const VectorXd pred = predict(fit, take_rows(sample.X(), fold));
      for (std::size_t j = 0; j < fold.size(); ++j) m_hat(fold[j]) = pred(static_cast<Index>(j));
    } catch (const Error& e) {
      rethrow_for_fold(e, k);
    }
  }
  return m_hat;
}

PropensityCrossFit cross_fit_propensity(const SemiSupervisedSample& sample,
                                        const CrossFitPlan& plan, const PsSpec& spec,
                                        std::uint64_t seed) {
  if (plan.size() != sample.size())
    throw Error(ErrorCode::DimensionMismatch, "fold plan and sample differ in size");
  PropensityCrossFit out;
  out.pi_hat.resize(sample.size());
  const VectorXd* delta = sample.has_delta() ? &sample.delta() : nullptr;
  for (int k = 0; k < plan.K; ++k) {
    try {
      const auto train = plan.training(k);
      double labeled = 0.0;
      for (Index i : train) labeled += sample.R()(i);
      if (labeled == 0.0)
        throw Error(ErrorCode::NoLabeledInTrainingFold, "training complement has no labeled rows");
      PsFit fit = fit_propensity(spec, sample.X(), sample.R(), delta, train, fold_seed(seed, k));
      const auto fold = plan.fold(k);
      const MatrixXd X_fold = take_rows(sample.X(), fold);
      const VectorXd pred = predict(fit, X_fold);
      for (std::size_t j = 0; j < fold.size(); ++j) out.pi_hat(fold[j]) = pred(static_cast<Index>(j));
      if (const auto* strat = std::get_if<StratifiedPsFit>(&fit)) {
        if (!out.p_delta) out.p_delta = VectorXd::Zero(sample.size());
        const VectorXd pd = strat->p_delta_model.predict(X_fold);
        for (std::size_t j = 0; j < fold.size(); ++j) (*out.p_delta)(fold[j]) = pd(static_cast<Index>(j));
      }
      out.fits.push_back(std::move(fit));
    } catch (const Error& e) {
      rethrow_for_fold(e, k);
    }
  }
  return out;
}

PipelineResult run_pipeline(const SemiSupervisedSample& sample, const CrossFitPlan& plan,
                            const PipelineSpec& spec, std::uint64_t seed) {
  PipelineResult result;
  result.preds.fold_of = plan.assignment;
  if (spec.oracle_m) {
    require_length(*spec.oracle_m, sample.size(), "oracle m");
    result.preds.m_hat = *spec.oracle_m;
  } else {
    result.preds.m_hat = cross_fit_outcome(sample, plan, spec.outcome, seed);
  }
  if (spec.oracle_pi) {
    require_length(*spec.oracle_pi, sample.size(), "oracle pi");
    result.preds.pi_hat = *spec.oracle_pi;
  } else {
    auto ps = cross_fit_propensity(sample, plan, spec.ps, seed);
    result.preds.pi_hat = std::move(ps.pi_hat);
    result.preds.p_delta = std::move(ps.p_delta);
    result.ps_fits = std::move(ps.fits);
  }
  if (spec.oracle_m && spec.oracle_pi) result.preds.fold_of.setConstant(-1);
  const EstimatorKind kind = spec.oracle_pi ? EstimatorKind::DrKnownPs : EstimatorKind::Drss;
  result.estimate = estimate_dr(sample, result.preds.m_hat, result.preds.pi_hat, kind);
  return result;
}

}  // namespace drss
