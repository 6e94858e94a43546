#include "drss/cli.hpp"

#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "CLI11.hpp"

#include "drss/ate.hpp"
#include "drss/io.hpp"
#include "drss/sim.hpp"

namespace drss {

namespace {

using nlohmann::json;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Error raised inside a named stage, so messages say which operation failed.
struct StageError : std::runtime_error {
  StageError(const std::string& stage, const Error& e)
      : std::runtime_error(stage + "] " + e.what()), code(e.code()) {}
  ErrorCode code;
};

template <typename F>
auto stage(const std::string& name, F&& f) {
  try {
    return f();
  } catch (const Error& e) {
    throw StageError(name, e);
  }
}

bool is_usage_code(ErrorCode c) {
  return c == ErrorCode::InvalidSpec || c == ErrorCode::InvalidAlpha ||
         c == ErrorCode::InvalidFoldCount || c == ErrorCode::InvalidArgument;
}

// Flat "key = value" file; values fill options not given on the command line.
void apply_config(CLI::App& sub, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config file " + path);
  const auto items = CLI::ConfigINI().from_config(in);
  for (const auto& item : items) {
    if (!item.parents.empty() && !(item.parents.size() == 1 && item.parents[0] == "default"))
      throw UsageError("config sections are not supported (key '" + item.name + "')");
    if (item.name == "config") throw UsageError("config files cannot include other config files");
    CLI::Option* opt = nullptr;
    try {
      opt = sub.get_option("--" + item.name);
    } catch (const CLI::OptionNotFound&) {
      throw UsageError("unknown config key '" + item.name + "' for " + sub.get_name());
    }
    if (opt->count() > 0) continue;
    for (const auto& v : item.inputs)
      for (const auto& tok : CLI::detail::split_up(v, ',')) opt->add_result(CLI::detail::trim_copy(tok));
    opt->run_callback();
  }
}

std::map<std::string, std::string> effective_config(const CLI::App& sub) {
  std::map<std::string, std::string> cfg;
  for (const CLI::Option* opt : sub.get_options()) {
    const std::string name = opt->get_single_name();
    if (name.empty() || name == "help" || name == "config" || name == "out" ||
        name == "markdown")
      continue;  // output paths do not change results
    std::string value;
    for (const auto& r : opt->results()) value += (value.empty() ? "" : " ") + r;
    if (value.empty()) value = opt->get_default_str();
    cfg[name] = value;
  }
  return cfg;
}

void emit_json(const json& j, const std::string& path, std::ostream& out) {
  const std::string text = j.dump(2) + "\n";
  if (path.empty())
    out << text;
  else
    write_file(path, text);
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

// --------------------------------------------------------------------------

struct Common {
  std::uint64_t seed = 1;
  double alpha = 0.05;
  int K = 5;
  std::string config;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--seed", c.seed, "random seed")->capture_default_str();
  sub->add_option("--alpha", c.alpha, "1 - confidence level")->capture_default_str();
  sub->add_option("--K", c.K, "number of cross-fitting folds")->capture_default_str();
  sub->add_option("--config", c.config, "flat key = value file; flags override it");
}

struct SimulateArgs {
  std::string setting;
  Index N = 10000;
  Index p = 10;
  double pi = 0.01;
  int reps = 500;
  int threads = 0;
  std::vector<std::string> estimators;
  bool adjusted = false;
  std::optional<double> lasso_rate;
  int s_m = 3;
  int s_pi = 15;
  std::string out;
  std::string markdown;
};

std::vector<std::string> default_estimators(const SimulateArgs& a) {
  const bool high = a.p > 50;
  std::vector<std::string> ps{"constant", high ? "log-lasso" : "logistic"};
  if (a.setting == "e") ps.push_back(high ? "stratified-lasso" : "stratified");
  const std::vector<std::string> ms = high ? std::vector<std::string>{"lasso", "poly-lasso"}
                                           : std::vector<std::string>{"ls", "poly2"};
  std::vector<std::string> out;
  for (const auto& p : ps)
    for (const auto& m : ms) out.push_back(p + ":" + m);
  return out;
}

int run_simulate(const SimulateArgs& a, const Common& c, const CLI::App& sub, std::ostream& out) {
  DgpSpec dgp = stage("simulate/setting", [&] { return DgpSpec::setting(a.setting, a.N, a.p, a.pi); });
  dgp.s_m = a.s_m;
  dgp.s_pi = a.s_pi;
  dgp.seed = c.seed;

  std::vector<EstimatorCell> cells{EstimatorCell::naive(), EstimatorCell::oracle()};
  for (const auto& e : a.estimators.empty() ? default_estimators(a) : a.estimators) {
    const auto colon = e.find(':');
    if (colon == std::string::npos) throw UsageError("estimator '" + e + "' is not of the form ps:m");
    EstimatorCell cell = stage("simulate/estimators", [&] {
      return EstimatorCell::fitted(e.substr(0, colon), e.substr(colon + 1));
    });
    cell.adjusted = a.adjusted && cell.ps.kind != PsKind::OffsetLasso;
    if (a.lasso_rate) cell.ps.lasso.rate_multiplier = *a.lasso_rate;
    cells.push_back(cell);
  }

  CampaignOptions opt;
  opt.reps = a.reps;
  opt.K = c.K;
  opt.alpha = c.alpha;
  opt.seed = c.seed;
  opt.threads = a.threads;
  opt.setting_id = a.setting;
  const CampaignResult res = stage("simulate/run_campaign", [&] { return run_campaign(dgp, cells, opt); });

  write_file(a.out, to_csv(res.table));
  const std::string md = to_markdown(res.table);
  if (!a.markdown.empty()) write_file(a.markdown, md);
  json meta{{"setting", a.setting}, {"N", a.N}, {"p", a.p}, {"pi_N", a.pi}, {"reps", a.reps},
            {"theta0", res.table.theta0_true}, {"provenance", provenance(effective_config(sub), c.seed)}};
  write_file(a.out + ".json", meta.dump(2) + "\n");
  out << md;
  return 0;
}

struct DataArgs {
  std::string input;
  std::string schema;
  std::string out;
};

void add_data(CLI::App* sub, DataArgs& d) {
  sub->add_option("--input", d.input, "CSV data file");
  sub->add_option("--schema", d.schema, "JSON schema describing the columns");
  sub->add_option("--out", d.out, "JSON report path (stdout when absent)");
}

LoadedData load_data(const DataArgs& d, const std::string& cmd) {
  if (d.input.empty()) throw UsageError(cmd + " needs --input");
  if (d.schema.empty()) throw UsageError(cmd + " needs --schema");
  const DataSchema schema = stage(cmd + "/schema", [&] { return DataSchema::load(d.schema); });
  return stage(cmd + "/load_csv", [&] { return load_csv(d.input, schema); });
}

json data_block(const LoadedData& data) {
  return {{"N", data.sample.size()}, {"p", data.sample.dim()}, {"features", data.feature_names},
          {"categorical_expansion", data.notes}};
}

struct MeanArgs {
  DataArgs data;
  std::string ps = "logistic";
  std::string m = "ls";
  bool adjusted = false;
};

int run_estimate_mean(const MeanArgs& a, const Common& c, const CLI::App& sub, std::ostream& out) {
  const PsSpec ps = stage("estimate-mean/ps", [&] { return PsSpec::parse(a.ps); });
  const OutcomeSpec m = stage("estimate-mean/m", [&] { return OutcomeSpec::parse(a.m); });
  const LoadedData data = load_data(a.data, "estimate-mean");
  const SemiSupervisedSample sample =
      data.sample.mode() == SampleMode::Causal ? data.sample.as_missing_data() : data.sample;
  const CrossFitPlan plan = stage("estimate-mean/make_folds", [&] {
    return make_folds(sample.size(), c.K, derive_stream_id(c.seed, tag_hash("folds")));
  });
  const PipelineResult res = stage("estimate-mean/run_pipeline", [&] {
    return run_pipeline(sample, plan, PipelineSpec{m, ps, {}, {}}, c.seed);
  });
  std::optional<VectorXd> if_pi;
  if (a.adjusted) if_pi = stage("estimate-mean/adjusted_if", [&] { return adjusted_if(sample, res.preds, ps); });
  const EstimateReport rep = stage("estimate-mean/report", [&] {
    return make_report(sample, res.preds, res.estimate, c.alpha, if_pi);
  });

  json j{{"estimator", {{"ps", ps.name()}, {"m", m.name()}}},
         {"report", to_json(rep)},
         {"data", data_block(data)},
         {"provenance", provenance(effective_config(sub), c.seed)}};
  emit_json(j, a.data.out, out);
  if (!a.data.out.empty())
    out << "theta = " << fmt(rep.theta) << ", " << fmt(100 * (1 - c.alpha)) << "% CI ["
        << fmt(rep.ci.lo) << ", " << fmt(rep.ci.hi) << "], N = " << rep.N
        << ", labeled = " << rep.n_labeled << "\n";
  return 0;
}

struct AteArgs {
  DataArgs data;
  std::string ps = "log-lasso";
  std::string m1 = "lasso";
  std::string m0 = "lasso";
  int B = 10;
};

int run_estimate_ate(const AteArgs& a, const Common& c, const CLI::App& sub, std::ostream& out) {
  AteSpec spec;
  spec.ps = stage("estimate-ate/ps", [&] { return PsSpec::parse(a.ps); });
  spec.outcome1 = stage("estimate-ate/m1", [&] { return OutcomeSpec::parse(a.m1); });
  spec.outcome0 = stage("estimate-ate/m0", [&] { return OutcomeSpec::parse(a.m0); });
  spec.alpha = c.alpha;
  const LoadedData data = load_data(a.data, "estimate-ate");
  if (data.sample.mode() != SampleMode::Causal)
    throw StageError("estimate-ate/load_csv",
                     Error(ErrorCode::SchemaViolation, "schema must name a treatment column (causal mode)"));
  const AteReport rep = stage("estimate-ate/repeated_split_ate", [&] {
    return repeated_split_ate(data.sample, a.B, c.K, c.seed, spec);
  });

  json j{{"estimator", {{"ps", spec.ps.name()}, {"m1", spec.outcome1.name()}, {"m0", spec.outcome0.name()}}},
         {"report", to_json(rep)},
         {"data", data_block(data)},
         {"provenance", provenance(effective_config(sub), c.seed)}};
  emit_json(j, a.data.out, out);
  if (!a.data.out.empty())
    out << "ATE = " << fmt(rep.theta_ate) << ", " << fmt(100 * (1 - c.alpha)) << "% CI ["
        << fmt(rep.ci.lo) << ", " << fmt(rep.ci.hi) << "], B = " << rep.B << ", N = " << rep.N
        << ", treated = " << rep.n_treated << "\n";
  return 0;
}

struct FitPsArgs {
  DataArgs data;
  std::string model = "offset-logistic";
};

int run_fit_ps(const FitPsArgs& a, const Common& c, const CLI::App& sub, std::ostream& out) {
  const PsSpec ps = stage("fit-ps/model", [&] { return PsSpec::parse(a.model); });
  const LoadedData data = load_data(a.data, "fit-ps");
  const SemiSupervisedSample& s = data.sample;
  std::vector<Index> all(static_cast<std::size_t>(s.size()));
  for (Index i = 0; i < s.size(); ++i) all[static_cast<std::size_t>(i)] = i;
  const VectorXd* delta = s.has_delta() ? &s.delta() : nullptr;
  const PsFit fit = stage("fit-ps/fit_propensity", [&] {
    return fit_propensity(ps, s.X(), s.R(), delta, all, c.seed);
  });

  json model;
  if (const auto* f = std::get_if<OffsetLogisticFit>(&fit)) {
    model = to_json(*f, data.feature_names);
  } else if (const auto* f = std::get_if<McarPsFit>(&fit)) {
    model = {{"pi_hat", f->pi_hat}};
  } else if (const auto* f = std::get_if<StratifiedPsFit>(&fit)) {
    model = {{"pi1", f->pi1}, {"pi0", f->pi0}, {"p_delta_model", to_json(f->p_delta_model, data.feature_names)}};
  }
  const VectorXd pi_hat = predict(fit, s.X());
  json j{{"model", ps.name()},
         {"fit", model},
         {"pi_hat_summary", {{"min", pi_hat.minCoeff()}, {"mean", pi_hat.mean()}, {"max", pi_hat.maxCoeff()}}},
         {"data", data_block(data)},
         {"provenance", provenance(effective_config(sub), c.seed)}};
  emit_json(j, a.data.out, out);
  return 0;
}

}  // namespace

int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Doubly robust semi-supervised mean and ATE estimation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kLibraryVersion));

  Common common_sim, common_mean, common_ate, common_ps;

  SimulateArgs sim;
  auto* s = app.add_subcommand("simulate", "run a Monte Carlo campaign on a named setting");
  s->add_option("--setting", sim.setting, "a, b, c, d, e, f or c'")->required();
  s->add_option("--N", sim.N)->capture_default_str();
  s->add_option("--p", sim.p)->capture_default_str();
  s->add_option("--pi", sim.pi, "pi_N")->capture_default_str();
  s->add_option("--reps", sim.reps)->capture_default_str();
  s->add_option("--threads", sim.threads, "0 uses all cores")->capture_default_str();
  s->add_option("--estimators", sim.estimators, "ps:m pairs, e.g. constant:ls logistic:poly2");
  s->add_flag("--adjusted", sim.adjusted, "add adjusted-IF rows where available");
  s->add_option("--lasso-rate", sim.lasso_rate, "fixed log-Lasso penalty multiplier (skips CV)");
  s->add_option("--s-m", sim.s_m)->capture_default_str();
  s->add_option("--s-pi", sim.s_pi)->capture_default_str();
  s->add_option("--out", sim.out, "CSV output path")->required();
  s->add_option("--markdown", sim.markdown, "markdown table output path");
  add_common(s, common_sim);

  MeanArgs mean;
  auto* m = app.add_subcommand("estimate-mean", "DRSS estimate of E(Y) from a CSV file");
  add_data(m, mean.data);
  m->add_option("--ps", mean.ps)->capture_default_str();
  m->add_option("--m", mean.m)->capture_default_str();
  m->add_flag("--adjusted", mean.adjusted, "also report the adjusted-IF interval");
  add_common(m, common_mean);

  AteArgs ate;
  auto* a = app.add_subcommand("estimate-ate", "DRSS ATE with repeated cross-fitting splits");
  add_data(a, ate.data);
  a->add_option("--ps", ate.ps)->capture_default_str();
  a->add_option("--m1", ate.m1)->capture_default_str();
  a->add_option("--m0", ate.m0)->capture_default_str();
  a->add_option("--B", ate.B, "number of sample splits")->capture_default_str();
  add_common(a, common_ate);

  FitPsArgs fps;
  auto* f = app.add_subcommand("fit-ps", "fit a propensity model on all rows");
  add_data(f, fps.data);
  f->add_option("--model", fps.model)->capture_default_str();
  add_common(f, common_ps);

  // required options may come from the config file, so check them afterwards
  s->get_option("--setting")->required(false);
  s->get_option("--out")->required(false);

  try {
    try {
      app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
      out << app.help();
      return 0;
    } catch (const CLI::CallForAllHelp&) {
      out << app.help("", CLI::AppFormatMode::All);
      return 0;
    } catch (const CLI::CallForVersion&) {
      out << kLibraryVersion << "\n";
      return 0;
    } catch (const CLI::ParseError& e) {
      throw UsageError(e.what());
    }

    struct Entry {
      CLI::App* sub;
      Common* common;
    };
    for (const Entry& e : {Entry{s, &common_sim}, Entry{m, &common_mean}, Entry{a, &common_ate},
                           Entry{f, &common_ps}}) {
      if (!e.sub->parsed()) continue;
      if (!e.common->config.empty()) {
        try {
          apply_config(*e.sub, e.common->config);
        } catch (const CLI::Error& ce) {
          throw UsageError(std::string("config: ") + ce.what());
        }
      }
      if (e.sub == s) {
        if (sim.setting.empty()) throw UsageError("simulate needs --setting");
        if (sim.out.empty()) throw UsageError("simulate needs --out");
        return run_simulate(sim, common_sim, *s, out);
      }
      if (e.sub == m) return run_estimate_mean(mean, common_mean, *m, out);
      if (e.sub == a) return run_estimate_ate(ate, common_ate, *a, out);
      return run_fit_ps(fps, common_ps, *f, out);
    }
    throw UsageError("no subcommand given");
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\nRun with --help for the list of options.\n";
    return 1;
  } catch (const StageError& e) {
    err << "error [" << e.what() << "\n";
    return is_usage_code(e.code) ? 1 : 2;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return is_usage_code(e.code()) ? 1 : 2;
  }
}

}  // namespace drss
