#ifndef DRSS_SIM_HPP
#define DRSS_SIM_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "drss/drss.hpp"
#include "drss/inference.hpp"

namespace drss {

enum class PsModel { Constant, OffsetLogistic, SparseOffsetLogistic, Stratified };
enum class OutcomeModel { Linear, Quadratic, SparseLinear, Cubic };

struct DgpSpec {
  PsModel ps_model = PsModel::Constant;
  OutcomeModel outcome_model = OutcomeModel::Linear;
  Index N = 10000;
  Index p = 10;
  double pi_N = 0.01;
  int s_m = 3;
  int s_pi = 15;
  std::uint64_t seed = 1;  // seeds the intercept calibration

  /// Named settings a-f and "c'" (sparse P2 + sparse O1).
  static DgpSpec setting(const std::string& name, Index N, Index p, double pi_N);
};

/// gamma0(1) with mean of g(x^T gamma + log pi_N) over mc_size draws equal
/// to pi_N. Since x^T slopes ~ N(0, ||slopes||^2), scalar normal draws suffice;
/// the same draws are reused across the bisection on [-20, 20].
double calibrate_gamma_intercept(double pi_N, const VectorXd& gamma_slopes,
                                 Index mc_size = 1000000, std::uint64_t seed = 1);

struct SimDraw {
  SemiSupervisedSample sample;
  VectorXd m_true;   // m(X_i)
  VectorXd pi_true;  // pi(X_i)
  double theta0 = 0.0;
};

/// Fully specified data-generating process with its parameter vectors.
class Dgp {
 public:
  explicit Dgp(const DgpSpec& spec);

  const DgpSpec& spec() const { return spec_; }
  double theta0() const { return theta0_; }
  double gamma_intercept() const { return gamma_intercept_; }
  const VectorXd& beta() const { return beta_; }          // intercept first
  const VectorXd& gamma_slopes() const { return gamma_; }  // length p

  VectorXd m(const MatrixXd& X) const;
  VectorXd pi(const MatrixXd& X) const;
  VectorXd p_delta(const MatrixXd& X) const;

  SimDraw generate(RandomStream& stream) const;

 private:
  DgpSpec spec_;
  VectorXd beta_;
  VectorXd alpha_;
  VectorXd zeta_;
  VectorXd gamma_;
  double gamma_intercept_ = 0.0;
  double theta0_ = 0.0;
};

// ---------------------------------------------------------------------------

enum class CellKind { Naive, Oracle, Fitted };

/// One estimator row of a campaign table.
struct EstimatorCell {
  CellKind kind = CellKind::Fitted;
  PsSpec ps;
  OutcomeSpec outcome;
  bool adjusted = false;  // also report the adjusted-IF interval

  static EstimatorCell naive() { return {CellKind::Naive, {}, {}, false}; }
  static EstimatorCell oracle() { return {CellKind::Oracle, {}, {}, false}; }
  /// Parses propensity and outcome names, e.g. ("logistic", "poly2").
  static EstimatorCell fitted(const std::string& ps, const std::string& outcome, bool adjusted = false);

  std::string ps_label() const;
  std::string m_label() const;
};

struct SimRow {
  std::string estimator_ps;
  std::string estimator_m;
  double bias = 0.0;
  double rmse = 0.0;
  double length = 0.0;
  double coverage = 0.0;
  double esd = 0.0;
  double asd = 0.0;
  double err_m = 0.0;   // NaN when not applicable
  double err_pi = 0.0;  // NaN when not applicable
};

struct SimTable {
  std::string setting;
  Index N = 0;
  Index p = 0;
  double pi_N = 0.0;
  int reps = 0;
  double theta0_true = 0.0;
  std::vector<SimRow> rows;

  const SimRow& row(const std::string& ps, const std::string& m) const;
};

/// Raw per-replication output of one cell.
struct CellRep {
  double theta = 0.0;
  double v_hat = 0.0;
  std::optional<double> v_hat_adjusted;
  std::optional<double> err_m;
  std::optional<double> err_pi;
};

struct CampaignOptions {
  int reps = 500;
  int K = 5;
  double alpha = 0.05;
  std::uint64_t seed = 1;
  int threads = 0;  // 0: hardware concurrency
  std::string setting_id = "custom";
};

struct CampaignResult {
  SimTable table;
  std::vector<std::vector<CellRep>> reps;  // [cell][rep]
};

/// Stream of replication `rep` of a setting.
RandomStream replication_stream(std::uint64_t seed, const std::string& setting_id, int rep);

/// Replication loop: fresh draw per rep, nuisances fitted once per distinct
/// specification on shared folds, then one DR estimate per cell. Adjusted
/// cells contribute an extra row labelled "<m>(adj)".
CampaignResult run_campaign(const DgpSpec& dgp, const std::vector<EstimatorCell>& cells,
                            const CampaignOptions& options);

/// Aggregates per-rep results into a table row.
SimRow summarize(const std::vector<CellRep>& reps, double theta0, Index N, double alpha,
                 bool use_adjusted = false);

// ---------------------------------------------------------------------------

inline const std::vector<std::string>& sim_csv_columns() {
  static const std::vector<std::string> cols{"estimator_ps", "estimator_m", "bias",  "rmse",
                                             "length",       "coverage",    "esd",   "asd",
                                             "err_m",        "err_pi"};
  return cols;
}

std::string to_csv(const SimTable& table);
std::vector<SimRow> rows_from_csv(const std::string& text);
std::string to_markdown(const SimTable& table);

}  // namespace drss

#endif  // DRSS_SIM_HPP
