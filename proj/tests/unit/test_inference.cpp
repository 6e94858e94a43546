#include "doctest.h"

#include <cmath>
#include <limits>

#include <boost/math/distributions/normal.hpp>

#include "drss/inference.hpp"

using namespace drss;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

SemiSupervisedSample hand_sample(std::optional<VectorXd> delta = std::nullopt) {
  RawSample raw;
  raw.X = MatrixXd::Zero(4, 1);
  raw.X.col(0) << -1.0, 0.5, 1.0, -0.3;
  raw.R = (VectorXd(4) << 1, 0, 1, 0).finished();
  raw.Y = (VectorXd(4) << 2, kNaN, 4, kNaN).finished();
  raw.delta = std::move(delta);
  return validate_sample(raw);
}

NuisancePredictions hand_preds() {
  return {VectorXd::Ones(4), VectorXd::Constant(4, 0.5), VectorXi::Zero(4), std::nullopt};
}

}  // namespace

TEST_CASE("normal quantile matches an independent oracle") {
  const boost::math::normal_distribution<double> z;
  for (double p : {1e-12, 1e-6, 0.001, 0.02425, 0.025, 0.1, 0.3, 0.5, 0.7, 0.975, 0.97575, 0.999,
                   1 - 1e-9}) {
    CHECK(std::abs(normal_quantile(p) - boost::math::quantile(z, p)) < 1e-8);
  }
  CHECK(normal_quantile(0.975) == doctest::Approx(1.959964).epsilon(1e-6));
  CHECK_THROWS_AS(normal_quantile(0.0), Error);
  CHECK_THROWS_AS(normal_quantile(1.0), Error);
}

TEST_CASE("confidence interval construction") {
  const auto ci = confidence_interval(0.0, 1.0, 100);
  CHECK(ci.hi == doctest::Approx(0.195996).epsilon(1e-5));
  CHECK(ci.lo == doctest::Approx(-0.195996).epsilon(1e-5));
  const auto point = confidence_interval(2.0, 0.0, 10);
  CHECK(point.lo == 2.0);
  CHECK(point.hi == 2.0);
  const auto wide = confidence_interval(0.0, 4.0, 100);
  CHECK(wide.length() == doctest::Approx(2.0 * normal_quantile(0.975) * 0.2).epsilon(1e-14));
  CHECK(confidence_interval(0.0, 1.0, 100, 0.01).length() > ci.length());
  try {
    confidence_interval(0.0, 1.0, 100, 1.5);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InvalidAlpha);
  }
}

TEST_CASE("plug-in variance") {
  const auto s = hand_sample();
  const auto p = hand_preds();
  CHECK(variance_plugin(p.m_hat, p.pi_hat, s.R(), s.Y(), 3.0) == doctest::Approx(6.0));

  const auto est = estimate_dr(s, p.m_hat, p.pi_hat);
  CHECK(std::abs(variance_plugin(p.m_hat, p.pi_hat, s.R(), s.Y(), est.theta) -
                 est.psi.squaredNorm() / 4.0) < 1e-12);

  // zero residuals
  const VectorXd m = (VectorXd(4) << 2, 2, 2, 2).finished();
  RawSample raw;
  raw.X = MatrixXd::Zero(4, 1);
  raw.R = (VectorXd(4) << 1, 0, 1, 0).finished();
  raw.Y = (VectorXd(4) << 2, kNaN, 2, kNaN).finished();
  const auto flat = validate_sample(raw);
  CHECK(variance_plugin(m, p.pi_hat, flat.R(), flat.Y(), 2.0) == 0.0);
}

TEST_CASE("MCAR adjustment") {
  const auto s = hand_sample();
  const VectorXd adj = adjusted_if_mcar(VectorXd::Ones(4), 0.5, s.R(), s.Y());
  const VectorXd expected = (VectorXd(4) << -2, 2, -2, 2).finished();
  CHECK((adj - expected).cwiseAbs().maxCoeff() < 1e-12);

  // calibrated m: Delta = 0 and the variances coincide
  const VectorXd m = VectorXd::Constant(4, 3.0);
  CHECK(adjusted_if_mcar(m, 0.5, s.R(), s.Y()).cwiseAbs().maxCoeff() == 0.0);
  NuisancePredictions preds{m, VectorXd::Constant(4, 0.5), VectorXi::Zero(4), std::nullopt};
  const auto est = estimate_dr(s, m, preds.pi_hat);
  const auto rep = make_report(s, preds, est, 0.05, adjusted_if(s, preds, PsSpec::parse("constant")));
  CHECK(*rep.v_hat_adjusted == rep.v_hat);
}

TEST_CASE("offset-logistic adjustment") {
  RandomStream rs(3, 3);
  const Index n = 2000;
  RawSample raw;
  raw.X = rs.normal_matrix(n, 2);
  raw.R.resize(n);
  raw.Y.resize(n);
  for (Index i = 0; i < n; ++i) {
    raw.R(i) = rs.bernoulli(logistic(-1.0 + 0.5 * raw.X(i, 0))) ? 1.0 : 0.0;
    raw.Y(i) = raw.R(i) == 1.0 ? 1.0 + raw.X(i, 1) * raw.X(i, 1) + rs.normal() : kNaN;
  }
  const auto s = validate_sample(raw);
  const auto plan = make_folds(n, 2, 1);
  PipelineSpec spec{OutcomeSpec::least_squares(), PsSpec::parse("logistic"), {}, {}};
  const auto res = run_pipeline(s, plan, spec, 1);
  const VectorXd adj = adjusted_if_offset_logistic(s, res.preds);

  // independent evaluation of h^T J^-1 x (R - pi)
  const MatrixXd D = with_intercept(s.X());
  const VectorXd& pi = res.preds.pi_hat;
  MatrixXd J = MatrixXd::Zero(3, 3);
  VectorXd h = VectorXd::Zero(3);
  for (Index i = 0; i < n; ++i) {
    const VectorXd x = D.row(i).transpose();
    J += pi(i) * (1 - pi(i)) * x * x.transpose();
    h += (1 - pi(i)) * x * (res.preds.m_hat(i) - s.R()(i) * s.Y()(i) / pi(i));
  }
  J /= n;
  h /= n;
  const VectorXd v = J.inverse() * h;
  for (Index i = 0; i < n; i += 97)
    CHECK(adj(i) == doctest::Approx(v.dot(D.row(i)) * (s.R()(i) - pi(i))).epsilon(1e-9));

  // zero IPW residual: m_hat = R Y / pi
  NuisancePredictions zero = res.preds;
  zero.m_hat = s.R().cwiseProduct(s.Y()).cwiseQuotient(pi);
  CHECK(adjusted_if_offset_logistic(s, zero).cwiseAbs().maxCoeff() < 1e-12);

  // collinear covariates give a singular J
  RawSample dup = raw;
  dup.X.col(1) = dup.X.col(0);
  const auto sd = validate_sample(dup);
  try {
    adjusted_if_offset_logistic(sd, res.preds);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::SingularJacobian);
  }
}

TEST_CASE("stratified adjustment") {
  const VectorXd delta = (VectorXd(4) << 1, 1, 0, 0).finished();
  const auto s = hand_sample(delta);
  NuisancePredictions p = hand_preds();
  p.p_delta = (VectorXd(4) << 0.8, 0.6, 0.3, 0.1).finished();
  const VectorXd adj = adjusted_if_stratified(s, p);

  // hand evaluation: p_bar = 0.5, pi1 = pi0 = 0.5, gap = (-3, 1, -7, 1)
  const double A = (0.8 * -3 + 0.6 * 1 + 0.3 * -7 + 0.1 * 1) / 0.5 / 4;
  const double B = (0.2 * -3 + 0.4 * 1 + 0.7 * -7 + 0.9 * 1) / 0.5 / 4;
  const VectorXd expected = (VectorXd(4) << (2 - 0.5) * A - 0.5 * B, -0.5 * A - 0.5 * B,
                             -0.5 * A + (2 - 0.5) * B, -0.5 * A - 0.5 * B)
                                .finished();
  CHECK((adj - expected).cwiseAbs().maxCoeff() < 1e-12);

  NuisancePredictions zero = p;
  zero.m_hat = s.R().cwiseProduct(s.Y()) / 0.5;
  CHECK(adjusted_if_stratified(s, zero).cwiseAbs().maxCoeff() < 1e-12);

  const auto one = hand_sample(VectorXd::Ones(4));
  try {
    adjusted_if_stratified(one, p);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::EmptyStratum);
  }
}

TEST_CASE("offset lasso has no adjustment") {
  const auto s = hand_sample();
  CHECK_THROWS_AS(adjusted_if(s, hand_preds(), PsSpec::parse("log-lasso")), Error);
}

TEST_CASE("error diagnostics and report") {
  const auto s = hand_sample();
  const auto p = hand_preds();
  const auto none = err_diagnostics(p, std::nullopt, std::nullopt);
  CHECK_FALSE(none.err_m.has_value());
  const auto exact = err_diagnostics(p, p.m_hat, p.pi_hat);
  CHECK(*exact.err_m == 0.0);
  CHECK(*exact.err_pi == 0.0);
  const auto off = err_diagnostics(p, VectorXd::Zero(4), VectorXd::Constant(4, 0.25));
  CHECK(*off.err_m == doctest::Approx(1.0));
  CHECK(*off.err_pi == doctest::Approx(0.25));

  const auto est = estimate_dr(s, p.m_hat, p.pi_hat);
  const auto rep = make_report(s, p, est, 0.05, adjusted_if(s, p, PsSpec::parse("constant")), off);
  CHECK(rep.v_hat == doctest::Approx(6.0));
  CHECK(rep.n_labeled == 2);
  CHECK(rep.a_hat_inv == doctest::Approx(2.0));
  const double half = normal_quantile(0.975) * std::sqrt(6.0 / 4.0);
  CHECK(rep.ci.lo == doctest::Approx(3.0 - half).epsilon(1e-15));
  CHECK(rep.ci.hi == doctest::Approx(3.0 + half).epsilon(1e-15));
  // Psi = psi + IF = (0,-2,4,-2) + (-2,2,-2,2)
  CHECK(*rep.v_hat_adjusted == doctest::Approx((4.0 + 0.0 + 4.0 + 0.0) / 4.0));
  CHECK(*rep.err_pi == doctest::Approx(0.25));
}
