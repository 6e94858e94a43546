#ifndef DRSS_DRSS_HPP
#define DRSS_DRSS_HPP

#include <optional>
#include <vector>

#include "drss/core.hpp"
#include "drss/linear_models.hpp"
#include "drss/propensity.hpp"

namespace drss {

enum class EstimatorKind { Naive, Reg, Ipw, DrKnownPs, Drss };

/// Point estimate with its per-observation influence values at the plug-ins.
struct MeanEstimate {
  double theta = 0.0;
  VectorXd psi;
  EstimatorKind kind = EstimatorKind::Drss;
};

/// Cross-fitted nuisance values; row i was predicted by models trained
/// without fold_of(i). fold_of is -1 for injected (oracle) values.
struct NuisancePredictions {
  VectorXd m_hat;
  VectorXd pi_hat;
  VectorXi fold_of;
  std::optional<VectorXd> p_delta;  // cross-fitted p_delta(X_i), stratified models only
};

/// m + R / pi * (Y - m), the uncentered doubly robust score.
template <typename M, typename P, typename Rv, typename Yv>
VectorXd dr_scores(const Eigen::MatrixBase<M>& m, const Eigen::MatrixBase<P>& pi,
                   const Eigen::MatrixBase<Rv>& R, const Eigen::MatrixBase<Yv>& Y) {
  return m.array() + R.array() / pi.array() * (Y.array() - m.array());
}

MeanEstimate naive_labeled_mean(const SemiSupervisedSample& sample);
MeanEstimate estimate_reg(const SemiSupervisedSample& sample, const VectorXd& m_hat);
MeanEstimate estimate_ipw(const SemiSupervisedSample& sample, const VectorXd& pi_hat);
/// theta = N^-1 sum [m_i + R_i / pi_i (Y_i - m_i)]; psi_i = score_i - theta.
MeanEstimate estimate_dr(const SemiSupervisedSample& sample, const VectorXd& m_hat,
                         const VectorXd& pi_hat, EstimatorKind kind = EstimatorKind::Drss);

/// Throws NonpositivePropensity unless every entry is > 0 and finite.
void require_positive_propensity(const VectorXd& pi_hat);

// ---------------------------------------------------------------------------
// Cross-fitting

/// Rows of training(k) with R == arm (labeled rows of S_{-k} when arm = 1).
std::vector<Index> training_rows_with_label(const SemiSupervisedSample& sample,
                                            const CrossFitPlan& plan, int k, double arm);

/// Cross-fitted outcome predictions. Each fold model is trained on the rows
/// of the training complement with R == arm; an empty set raises `empty_code`.
VectorXd cross_fit_outcome(const SemiSupervisedSample& sample, const CrossFitPlan& plan,
                           const OutcomeSpec& spec, std::uint64_t seed, double arm = 1.0,
                           ErrorCode empty_code = ErrorCode::NoLabeledInTrainingFold);

struct PropensityCrossFit {
  VectorXd pi_hat;
  std::vector<PsFit> fits;          // one per fold
  std::optional<VectorXd> p_delta;  // stratified models only
};

/// Cross-fitted propensity predictions, each fold model trained on all of S_{-k}.
PropensityCrossFit cross_fit_propensity(const SemiSupervisedSample& sample,
                                        const CrossFitPlan& plan, const PsSpec& spec,
                                        std::uint64_t seed);

/// Nuisance choices for one pipeline run. An oracle vector (true values at
/// every row) replaces the corresponding fitted model.
struct PipelineSpec {
  OutcomeSpec outcome;
  PsSpec ps;
  std::optional<VectorXd> oracle_m;
  std::optional<VectorXd> oracle_pi;
};

struct PipelineResult {
  NuisancePredictions preds;
  MeanEstimate estimate;
  std::vector<PsFit> ps_fits;  // empty when the propensity is injected
};

/// Cross-fits both nuisances on the plan's folds and returns the DRSS estimate.
PipelineResult run_pipeline(const SemiSupervisedSample& sample, const CrossFitPlan& plan,
                            const PipelineSpec& spec, std::uint64_t seed);

/// Seed handed to the nuisance fitters of fold k.
inline std::uint64_t fold_seed(std::uint64_t seed, int k) {
  return derive_stream_id(seed ^ tag_hash("nuisance"), static_cast<std::uint64_t>(k));
}

}  // namespace drss

#endif  // DRSS_DRSS_HPP
