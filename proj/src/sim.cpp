#include "drss/sim.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <limits>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

namespace drss {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void require_spec(bool ok, const std::string& what) {
  if (!ok) throw Error(ErrorCode::InvalidSpec, what);
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace

DgpSpec DgpSpec::setting(const std::string& name, Index N, Index p, double pi_N) {
  DgpSpec s;
  s.N = N;
  s.p = p;
  s.pi_N = pi_N;
  if (name == "a") {
    s.ps_model = PsModel::Constant;
    s.outcome_model = OutcomeModel::Linear;
  } else if (name == "b") {
    s.ps_model = PsModel::Constant;
    s.outcome_model = OutcomeModel::Quadratic;
  } else if (name == "c") {
    s.ps_model = PsModel::OffsetLogistic;
    s.outcome_model = OutcomeModel::Linear;
  } else if (name == "d") {
    s.ps_model = PsModel::OffsetLogistic;
    s.outcome_model = OutcomeModel::Quadratic;
  } else if (name == "e") {
    s.ps_model = PsModel::Stratified;
    s.outcome_model = OutcomeModel::Quadratic;
  } else if (name == "f") {
    s.ps_model = PsModel::OffsetLogistic;
    s.outcome_model = OutcomeModel::Cubic;
  } else if (name == "c'" || name == "cprime") {
    s.ps_model = PsModel::SparseOffsetLogistic;
    s.outcome_model = OutcomeModel::SparseLinear;
  } else {
    throw Error(ErrorCode::InvalidSpec, "unknown setting '" + name + "'");
  }
  return s;
}

double calibrate_gamma_intercept(double pi_N, const VectorXd& gamma_slopes, Index mc_size,
                                 std::uint64_t seed) {
  require_spec(pi_N > 0.0 && pi_N < 1.0, "pi_N must lie in (0, 1)");
  require_spec(mc_size > 0, "Monte Carlo size must be positive");
  const double scale = gamma_slopes.norm();
  if (scale == 0.0) return -std::log1p(-pi_N);

  RandomStream stream(seed, tag_hash("gamma-calibration"));
  VectorXd z(mc_size);
  for (Index i = 0; i < mc_size; ++i) z(i) = scale * stream.normal();
  const double log_pi = std::log(pi_N);
  auto mean_ps = [&](double g0) {
    double s = 0.0;
    for (Index i = 0; i < mc_size; ++i) s += logistic(g0 + z(i) + log_pi);
    return s / static_cast<double>(mc_size);
  };

  double lo = -20.0, hi = 20.0;
  if (!(mean_ps(lo) <= pi_N && mean_ps(hi) >= pi_N))
    throw Error(ErrorCode::CalibrationNotBracketed, "mean propensity not bracketed on [-20, 20]");
  for (int it = 0; it < 100 && hi - lo > 1e-13; ++it) {
    const double mid = 0.5 * (lo + hi);
    (mean_ps(mid) < pi_N ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

// ---------------------------------------------------------------------------

Dgp::Dgp(const DgpSpec& spec) : spec_(spec) {
  const Index p = spec.p;
  require_spec(spec.N >= 2, "N must be at least 2");
  require_spec(spec.pi_N > 0.0 && spec.pi_N < 1.0, "pi_N must lie in (0, 1)");
  beta_ = VectorXd::Zero(p + 1);
  alpha_ = VectorXd::Zero(p + 1);
  zeta_ = VectorXd::Zero(p + 1);
  gamma_ = VectorXd::Zero(p);
  beta_(0) = -0.5;

  switch (spec.outcome_model) {
    case OutcomeModel::Cubic:
      require_spec(p >= 3, "the cubic outcome needs p >= 3");
      zeta_.segment(1, 3).setConstant(0.2);
      [[fallthrough]];
    case OutcomeModel::Quadratic:
      require_spec(p >= 3, "the quadratic outcome needs p >= 3");
      alpha_.segment(1, 3).setOnes();
      [[fallthrough]];
    case OutcomeModel::Linear:
      require_spec(p >= 3, "the linear outcome needs p >= 3");
      beta_.segment(1, 3).setOnes();
      break;
    case OutcomeModel::SparseLinear:
      require_spec(spec.s_m >= 1 && spec.s_m <= p, "s_m must lie in [1, p]");
      beta_.segment(1, spec.s_m).setConstant(std::sqrt(3.0 / spec.s_m));
      break;
  }
  // E(X^2) = 1 and E(X^3) = 0 for standard normals
  theta0_ = beta_(0) + alpha_.sum();

  switch (spec.ps_model) {
    case PsModel::Constant:
    case PsModel::Stratified:
      require_spec(p >= 1, "p must be positive");
      break;
    case PsModel::OffsetLogistic:
      require_spec(p >= 1, "p must be positive");
      gamma_(0) = 1.0;
      gamma_intercept_ = calibrate_gamma_intercept(spec.pi_N, gamma_, 1000000, spec.seed);
      break;
    case PsModel::SparseOffsetLogistic:
      require_spec(spec.s_pi >= 1 && spec.s_pi <= p, "s_pi must lie in [1, p]");
      gamma_.head(spec.s_pi).setConstant(std::sqrt(1.0 / spec.s_pi));
      gamma_intercept_ = calibrate_gamma_intercept(spec.pi_N, gamma_, 1000000, spec.seed);
      break;
  }
}

VectorXd Dgp::m(const MatrixXd& X) const {
  VectorXd out = (X * beta_.tail(spec_.p)).array() + beta_(0);
  if (spec_.outcome_model == OutcomeModel::Quadratic || spec_.outcome_model == OutcomeModel::Cubic)
    out += X.array().square().matrix() * alpha_.tail(spec_.p);
  if (spec_.outcome_model == OutcomeModel::Cubic)
    out += X.array().cube().matrix() * zeta_.tail(spec_.p);
  return out;
}

VectorXd Dgp::p_delta(const MatrixXd& X) const {
  return X.col(0).unaryExpr([](double u) { return logistic(u); });
}

VectorXd Dgp::pi(const MatrixXd& X) const {
  const double pi_N = spec_.pi_N;
  switch (spec_.ps_model) {
    case PsModel::Constant: return VectorXd::Constant(X.rows(), pi_N);
    case PsModel::Stratified: {
      const VectorXd pd = p_delta(X);
      return 0.5 * pi_N * pd.array() + 1.5 * pi_N * (1.0 - pd.array());
    }
    case PsModel::OffsetLogistic:
    case PsModel::SparseOffsetLogistic: {
      const double shift = gamma_intercept_ + std::log(pi_N);
      return (X * gamma_).unaryExpr([shift](double u) { return logistic(u + shift); });
    }
  }
  return {};
}

SimDraw Dgp::generate(RandomStream& stream) const {
  const Index N = spec_.N;
  RawSample raw;
  raw.X = stream.normal_matrix(N, spec_.p);
  VectorXd m_true = m(raw.X);
  VectorXd pi_true = pi(raw.X);
  raw.R.resize(N);
  raw.Y.resize(N);
  const bool stratified = spec_.ps_model == PsModel::Stratified;
  VectorXd pd;
  if (stratified) {
    pd = p_delta(raw.X);
    raw.delta = VectorXd(N);
  }
  for (Index i = 0; i < N; ++i) {
    double pr = pi_true(i);
    if (stratified) {
      const double d = stream.bernoulli(pd(i)) ? 1.0 : 0.0;
      (*raw.delta)(i) = d;
      pr = d == 1.0 ? 0.5 * spec_.pi_N : 1.5 * spec_.pi_N;
    }
    raw.R(i) = stream.bernoulli(pr) ? 1.0 : 0.0;
    const double y = m_true(i) + stream.normal();
    raw.Y(i) = raw.R(i) == 1.0 ? y : kNaN;
  }
  return {validate_sample(std::move(raw)), std::move(m_true), std::move(pi_true), theta0_};
}

// ---------------------------------------------------------------------------

EstimatorCell EstimatorCell::fitted(const std::string& ps, const std::string& outcome, bool adjusted) {
  return {CellKind::Fitted, PsSpec::parse(ps), OutcomeSpec::parse(outcome), adjusted};
}

std::string EstimatorCell::ps_label() const {
  switch (kind) {
    case CellKind::Naive: return "naive";
    case CellKind::Oracle: return "oracle";
    case CellKind::Fitted: break;
  }
  return ps.name();
}

std::string EstimatorCell::m_label() const {
  return kind == CellKind::Fitted ? outcome.name() : "-";
}

const SimRow& SimTable::row(const std::string& ps, const std::string& m) const {
  for (const auto& r : rows)
    if (r.estimator_ps == ps && r.estimator_m == m) return r;
  throw Error(ErrorCode::InvalidArgument, "no row " + ps + " / " + m);
}

RandomStream replication_stream(std::uint64_t seed, const std::string& setting_id, int rep) {
  return RandomStream(seed, derive_stream_id(tag_hash(setting_id), static_cast<std::uint64_t>(rep)));
}

namespace {

struct RepWork {
  const Dgp& dgp;
  const std::vector<EstimatorCell>& cells;
  const CampaignOptions& options;
};

std::vector<CellRep> run_replication(const RepWork& w, int rep) {
  RandomStream stream = replication_stream(w.options.seed, w.options.setting_id, rep);
  const SimDraw draw = w.dgp.generate(stream);
  const SemiSupervisedSample& s = draw.sample;
  const Index N = s.size();
  const std::uint64_t fold_seed_value = stream.child(tag_hash("folds"))();
  const std::uint64_t nuisance_seed = stream.child(tag_hash("nuisance"))();
  const CrossFitPlan plan = make_folds(N, w.options.K, fold_seed_value);

  std::map<std::string, VectorXd> outcome_cache;
  std::map<std::string, PropensityCrossFit> ps_cache;
  std::vector<CellRep> out;
  out.reserve(w.cells.size());

  for (const auto& cell : w.cells) {
    const std::string label = cell.ps_label() + "/" + cell.m_label();
    try {
      CellRep r;
      if (cell.kind == CellKind::Naive) {
        const MeanEstimate est = naive_labeled_mean(s);
        r.theta = est.theta;
        r.v_hat = est.psi.squaredNorm() / static_cast<double>(N);
      } else if (cell.kind == CellKind::Oracle) {
        const MeanEstimate est = estimate_dr(s, draw.m_true, draw.pi_true, EstimatorKind::DrKnownPs);
        r.theta = est.theta;
        r.v_hat = est.psi.squaredNorm() / static_cast<double>(N);
      } else {
        const std::string mk = cell.outcome.name();
        auto mit = outcome_cache.find(mk);
        if (mit == outcome_cache.end())
          mit = outcome_cache.emplace(mk, cross_fit_outcome(s, plan, cell.outcome, nuisance_seed)).first;
        const std::string pk = cell.ps.name();
        auto pit = ps_cache.find(pk);
        if (pit == ps_cache.end())
          pit = ps_cache.emplace(pk, cross_fit_propensity(s, plan, cell.ps, nuisance_seed)).first;

        NuisancePredictions preds{mit->second, pit->second.pi_hat, plan.assignment, pit->second.p_delta};
        const MeanEstimate est = estimate_dr(s, preds.m_hat, preds.pi_hat);
        std::optional<VectorXd> if_pi;
        if (cell.adjusted) if_pi = adjusted_if(s, preds, cell.ps);
        const EstimateReport rep_report =
            make_report(s, preds, est, w.options.alpha, if_pi,
                        err_diagnostics(preds, draw.m_true, draw.pi_true));
        r.theta = est.theta;
        r.v_hat = rep_report.v_hat;
        r.v_hat_adjusted = rep_report.v_hat_adjusted;
        r.err_m = rep_report.err_m;
        r.err_pi = rep_report.err_pi;
      }
      out.push_back(std::move(r));
    } catch (const Error& e) {
      throw Error(e.code(), "rep " + std::to_string(rep) + ", cell " + label + ": " + e.what());
    }
  }
  return out;
}

}  // namespace

SimRow summarize(const std::vector<CellRep>& reps, double theta0, Index N, double alpha,
                 bool use_adjusted) {
  if (reps.empty()) throw Error(ErrorCode::InvalidArgument, "no replications to summarize");
  std::vector<double> err, sq, len, cover, sd, em, ep;
  const double n = static_cast<double>(reps.size());
  double theta_mean = 0.0;
  for (const auto& r : reps) theta_mean += r.theta / n;
  double ss = 0.0;
  for (const auto& r : reps) {
    const double v = use_adjusted ? r.v_hat_adjusted.value() : r.v_hat;
    const Interval ci = confidence_interval(r.theta, v, N, alpha);
    err.push_back(r.theta - theta0);
    sq.push_back((r.theta - theta0) * (r.theta - theta0));
    len.push_back(ci.length());
    cover.push_back(ci.contains(theta0) ? 1.0 : 0.0);
    sd.push_back(std::sqrt(v / static_cast<double>(N)));
    ss += (r.theta - theta_mean) * (r.theta - theta_mean);
    if (r.err_m) em.push_back(*r.err_m);
    if (r.err_pi) ep.push_back(*r.err_pi);
  }
  SimRow row;
  row.bias = mean_of(err);
  row.rmse = std::sqrt(mean_of(sq));
  row.length = mean_of(len);
  row.coverage = mean_of(cover);
  row.esd = reps.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
  row.asd = mean_of(sd);
  row.err_m = em.empty() ? kNaN : mean_of(em);
  row.err_pi = ep.empty() ? kNaN : mean_of(ep);
  return row;
}

CampaignResult run_campaign(const DgpSpec& dgp_spec, const std::vector<EstimatorCell>& cells,
                            const CampaignOptions& options) {
  if (options.reps < 1) throw Error(ErrorCode::InvalidArgument, "reps must be positive");
  if (cells.empty()) throw Error(ErrorCode::InvalidArgument, "empty estimator grid");
  const Dgp dgp(dgp_spec);
  const RepWork work{dgp, cells, options};

  std::vector<std::vector<CellRep>> per_rep(static_cast<std::size_t>(options.reps));
  std::vector<std::exception_ptr> failures(static_cast<std::size_t>(options.reps));
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int r = next++; r < options.reps; r = next++) {
      try {
        per_rep[static_cast<std::size_t>(r)] = run_replication(work, r);
      } catch (...) {
        failures[static_cast<std::size_t>(r)] = std::current_exception();
      }
    }
  };
  int threads = options.threads > 0 ? options.threads
                                    : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  threads = std::min(threads, options.reps);
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  // lowest failing rep wins so the reported error does not depend on scheduling
  for (const auto& f : failures)
    if (f) std::rethrow_exception(f);

  CampaignResult result;
  result.reps.assign(cells.size(), {});
  for (std::size_t c = 0; c < cells.size(); ++c)
    for (const auto& rep : per_rep) result.reps[c].push_back(rep[c]);

  SimTable& t = result.table;
  t.setting = options.setting_id;
  t.N = dgp_spec.N;
  t.p = dgp_spec.p;
  t.pi_N = dgp_spec.pi_N;
  t.reps = options.reps;
  t.theta0_true = dgp.theta0();
  for (std::size_t c = 0; c < cells.size(); ++c) {
    SimRow row = summarize(result.reps[c], t.theta0_true, t.N, options.alpha);
    row.estimator_ps = cells[c].ps_label();
    row.estimator_m = cells[c].m_label();
    t.rows.push_back(row);
    if (cells[c].adjusted) {
      SimRow adj = summarize(result.reps[c], t.theta0_true, t.N, options.alpha, true);
      adj.estimator_ps = row.estimator_ps;
      adj.estimator_m = row.estimator_m + "(adj)";
      t.rows.push_back(adj);
    }
  }
  return result;
}

// ---------------------------------------------------------------------------

namespace {

std::string fmt17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<double> numeric_fields(const SimRow& r) {
  return {r.bias, r.rmse, r.length, r.coverage, r.esd, r.asd, r.err_m, r.err_pi};
}

}  // namespace

std::string to_csv(const SimTable& table) {
  std::ostringstream os;
  const auto& cols = sim_csv_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) os << (i ? "," : "") << cols[i];
  os << '\n';
  for (const auto& r : table.rows) {
    os << r.estimator_ps << ',' << r.estimator_m;
    for (double v : numeric_fields(r)) os << ',' << fmt17(v);
    os << '\n';
  }
  return os.str();
}

std::vector<SimRow> rows_from_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line)) throw Error(ErrorCode::ParseError, "empty table");
  std::string expected;
  for (const auto& c : sim_csv_columns()) expected += (expected.empty() ? "" : ",") + c;
  if (line != expected) throw Error(ErrorCode::ParseError, "unexpected table header: " + line);
  std::vector<SimRow> rows;
  int lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) f.push_back(cell);
    if (f.size() != sim_csv_columns().size())
      throw Error(ErrorCode::ParseError, "line " + std::to_string(lineno) + ": wrong field count");
    SimRow r;
    r.estimator_ps = f[0];
    r.estimator_m = f[1];
    double* targets[] = {&r.bias, &r.rmse, &r.length, &r.coverage, &r.esd, &r.asd, &r.err_m, &r.err_pi};
    for (int k = 0; k < 8; ++k) {
      const std::string& s = f[static_cast<std::size_t>(k + 2)];
      char* end = nullptr;
      *targets[k] = std::strtod(s.c_str(), &end);
      if (s.empty() || *end != '\0')
        throw Error(ErrorCode::ParseError, "line " + std::to_string(lineno) + ": bad number '" + s + "'");
    }
    rows.push_back(r);
  }
  return rows;
}

std::string to_markdown(const SimTable& table) {
  const auto& cols = sim_csv_columns();
  std::vector<std::vector<std::string>> cells;
  cells.emplace_back(cols.begin(), cols.end());
  for (const auto& r : table.rows) {
    std::vector<std::string> line{r.estimator_ps, r.estimator_m};
    for (double v : numeric_fields(r)) {
      char buf[32];
      if (std::isnan(v))
        std::snprintf(buf, sizeof buf, "-");
      else
        std::snprintf(buf, sizeof buf, "%.3f", v);
      line.emplace_back(buf);
    }
    cells.push_back(std::move(line));
  }
  std::vector<std::size_t> width(cols.size(), 3);
  for (const auto& line : cells)
    for (std::size_t j = 0; j < line.size(); ++j) width[j] = std::max(width[j], line[j].size());

  std::ostringstream os;
  os << "Setting " << table.setting << ": N=" << table.N << ", p=" << table.p
     << ", pi_N=" << table.pi_N << ", reps=" << table.reps << ", theta0=" << table.theta0_true
     << "\n\n";
  auto emit = [&](const std::vector<std::string>& line) {
    os << '|';
    for (std::size_t j = 0; j < line.size(); ++j) {
      const std::string pad(width[j] - line[j].size(), ' ');
      os << ' ' << (j < 2 ? line[j] + pad : pad + line[j]) << " |";
    }
    os << '\n';
  };
  emit(cells[0]);
  os << '|';
  for (std::size_t j = 0; j < cols.size(); ++j)
    os << (j < 2 ? " :" : " ") << std::string(width[j] - 1, '-') << (j < 2 ? "" : ":") << " |";
  os << '\n';
  for (std::size_t i = 1; i < cells.size(); ++i) emit(cells[i]);
  return os.str();
}

}  // namespace drss
