#ifndef DRSS_ATE_HPP
#define DRSS_ATE_HPP

#include <vector>

#include "drss/drss.hpp"
#include "drss/inference.hpp"

namespace drss {

struct ArmEstimate {
  double theta = 0.0;
  VectorXd psi;       // plug-in influence values, mean zero
  Index clipped = 0;  // rows whose 1 - pi_hat was floored (control arm only)
};

/// Floor applied to 1 - pi_hat in the control-arm weights.
inline constexpr double kControlWeightFloor = 1e-12;

/// theta1 = N^-1 sum [m1_i + R_i / pi_i (Y_i - m1_i)].
ArmEstimate estimate_theta1(const SemiSupervisedSample& sample, const VectorXd& m1_hat,
                            const VectorXd& pi_hat);

/// theta0 = N^-1 sum [m0_i + (1 - R_i) / (1 - pi_i) (Y_i - m0_i)], with 1 - pi
/// floored at kControlWeightFloor. pi_hat > 1 raises DegeneratePropensityOne.
ArmEstimate estimate_theta0(const SemiSupervisedSample& sample, const VectorXd& m0_hat,
                            const VectorXd& pi_hat);

struct AteSpec {
  OutcomeSpec outcome1;
  OutcomeSpec outcome0;
  PsSpec ps;
  double alpha = 0.05;
};

struct SplitResult {
  double theta_ate = 0.0;
  double v_hat = 0.0;
};

struct AteReport {
  double theta1 = 0.0;
  double theta0 = 0.0;
  double theta_ate = 0.0;
  double v_hat = 0.0;
  Interval ci;
  double alpha = 0.05;
  std::vector<SplitResult> per_split;
  int B = 1;
  Index N = 0;
  Index n_treated = 0;
  Index clipped = 0;  // summed over splits
};

/// Cross-fitted ATE on one fold plan: m1 on treated rows of S_{-k}, m0 on
/// control rows, pi on all of S_{-k}. Requires a causal-mode sample.
AteReport estimate_ate(const SemiSupervisedSample& sample, const CrossFitPlan& plan,
                       const AteSpec& spec, std::uint64_t seed);

/// Fold seed of split b in repeated_split_ate.
inline std::uint64_t split_seed(std::uint64_t seed, int b) {
  return derive_stream_id(seed ^ tag_hash("split"), static_cast<std::uint64_t>(b));
}

/// B independent fold plans; theta = median_b theta_b and
/// V = median_b {V_b + (theta_b - theta)^2}.
AteReport repeated_split_ate(const SemiSupervisedSample& sample, int B, int K, std::uint64_t seed,
                             const AteSpec& spec);

}  // namespace drss

#endif  // DRSS_ATE_HPP
