#include "drss/ate.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace drss {

namespace {

void require_arm_inputs(const SemiSupervisedSample& sample, const VectorXd& m, const VectorXd& pi) {
  if (m.size() != sample.size() || pi.size() != sample.size())
    throw Error(ErrorCode::DimensionMismatch, "arm plug-ins and sample differ in length");
}

}  // namespace

ArmEstimate estimate_theta1(const SemiSupervisedSample& sample, const VectorXd& m1_hat,
                            const VectorXd& pi_hat) {
  require_arm_inputs(sample, m1_hat, pi_hat);
  require_positive_propensity(pi_hat);
  // R * Y so the untreated outcomes of a causal sample never enter
  const VectorXd RY = sample.R().cwiseProduct(sample.Y());
  const VectorXd score = m1_hat.array() + sample.R().array() / pi_hat.array() *
                                              (RY.array() - sample.R().array() * m1_hat.array());
  ArmEstimate out;
  out.theta = score.mean();
  out.psi = score.array() - out.theta;
  return out;
}

ArmEstimate estimate_theta0(const SemiSupervisedSample& sample, const VectorXd& m0_hat,
                            const VectorXd& pi_hat) {
  require_arm_inputs(sample, m0_hat, pi_hat);
  ArmEstimate out;
  VectorXd w(sample.size());
  for (Index i = 0; i < sample.size(); ++i) {
    const double pi = pi_hat(i);
    if (!std::isfinite(pi) || pi > 1.0 || pi < 0.0)
      throw Error(ErrorCode::DegeneratePropensityOne,
                  "propensity at row " + std::to_string(i) + " is " + std::to_string(pi));
    double q = 1.0 - pi;
    if (q < kControlWeightFloor) {
      q = kControlWeightFloor;
      ++out.clipped;
    }
    w(i) = (1.0 - sample.R()(i)) / q;
  }
  const VectorXd control_y = (1.0 - sample.R().array()) * sample.Y().array();
  const VectorXd score =
      m0_hat.array() + w.array() * (control_y.array() - (1.0 - sample.R().array()) * m0_hat.array());
  out.theta = score.mean();
  out.psi = score.array() - out.theta;
  return out;
}

AteReport estimate_ate(const SemiSupervisedSample& sample, const CrossFitPlan& plan,
                       const AteSpec& spec, std::uint64_t seed) {
  if (sample.mode() != SampleMode::Causal)
    throw Error(ErrorCode::InvalidArgument, "ATE estimation needs a causal-mode sample");
  const VectorXd m1 = cross_fit_outcome(sample, plan, spec.outcome1, seed, 1.0,
                                        ErrorCode::EmptyArmInTrainingFold);
  const VectorXd m0 = cross_fit_outcome(sample, plan, spec.outcome0, seed ^ tag_hash("control"),
                                        0.0, ErrorCode::EmptyArmInTrainingFold);
  const VectorXd pi = cross_fit_propensity(sample, plan, spec.ps, seed).pi_hat;

  const ArmEstimate a1 = estimate_theta1(sample, m1, pi);
  const ArmEstimate a0 = estimate_theta0(sample, m0, pi);
  AteReport r;
  r.theta1 = a1.theta;
  r.theta0 = a0.theta;
  r.theta_ate = a1.theta - a0.theta;
  r.v_hat = (a1.psi - a0.psi).squaredNorm() / static_cast<double>(sample.size());
  r.alpha = spec.alpha;
  r.ci = confidence_interval(r.theta_ate, r.v_hat, sample.size(), spec.alpha);
  r.per_split = {{r.theta_ate, r.v_hat}};
  r.B = 1;
  r.N = sample.size();
  r.n_treated = sample.n_labeled();
  r.clipped = a0.clipped;
  return r;
}

AteReport repeated_split_ate(const SemiSupervisedSample& sample, int B, int K, std::uint64_t seed,
                             const AteSpec& spec) {
  if (B < 1) throw Error(ErrorCode::InvalidArgument, "B must be at least 1");
  std::vector<AteReport> splits;
  splits.reserve(static_cast<std::size_t>(B));
  for (int b = 0; b < B; ++b)
    splits.push_back(estimate_ate(sample, make_folds(sample.size(), K, split_seed(seed, b)), spec,
                                  derive_stream_id(seed, static_cast<std::uint64_t>(b))));
  if (B == 1) return splits.front();

  std::vector<double> thetas;
  for (const auto& s : splits) thetas.push_back(s.theta_ate);
  AteReport r;
  r.theta_ate = median(thetas);
  std::vector<double> inflated;
  for (const auto& s : splits) inflated.push_back(s.v_hat + (s.theta_ate - r.theta_ate) * (s.theta_ate - r.theta_ate));
  r.v_hat = median(inflated);

  // arm means from the median split(s); theta0 is set so the difference is exact
  std::vector<int> order(static_cast<std::size_t>(B));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return thetas[static_cast<std::size_t>(a)] < thetas[static_cast<std::size_t>(b)]; });
  const auto& lo = splits[static_cast<std::size_t>(order[static_cast<std::size_t>((B - 1) / 2)])];
  const auto& hi = splits[static_cast<std::size_t>(order[static_cast<std::size_t>(B / 2)])];
  r.theta1 = 0.5 * (lo.theta1 + hi.theta1);
  r.theta0 = r.theta1 - r.theta_ate;

  r.alpha = spec.alpha;
  r.ci = confidence_interval(r.theta_ate, r.v_hat, sample.size(), spec.alpha);
  for (const auto& s : splits) {
    r.per_split.push_back({s.theta_ate, s.v_hat});
    r.clipped += s.clipped;
  }
  r.B = B;
  r.N = sample.size();
  r.n_treated = sample.n_labeled();
  return r;
}

}  // namespace drss
