#include "drss/io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

namespace drss {

namespace {

using nlohmann::json;

[[noreturn]] void schema_error(const std::string& what) {
  throw Error(ErrorCode::SchemaViolation, what);
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cell += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cell += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(cell);
      cell.clear();
    } else if (c != '\r') {
      cell += c;
    }
  }
  if (quoted) throw Error(ErrorCode::ParseError, "unterminated quote");
  out.push_back(cell);
  return out;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

bool is_missing(const std::string& s) { return s.empty() || s == "NA" || s == "NaN"; }

std::optional<double> parse_number(const std::string& s) {
  if (is_missing(s)) return std::nullopt;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0' || !std::isfinite(v))
    throw Error(ErrorCode::ParseError, "not a number: '" + s + "'");
  return v;
}

std::string row_tag(std::size_t row, const std::string& col) {
  return "row " + std::to_string(row) + ", column '" + col + "'";
}

}  // namespace

DataSchema DataSchema::from_json(const json& j) {
  static const std::set<std::string> known{"outcome", "label", "treatment", "covariates",
                                           "stratum", "categorical", "mode"};
  for (const auto& [key, _] : j.items())
    if (!known.count(key)) schema_error("unknown schema key '" + key + "'");
  DataSchema s;
  try {
    s.outcome_col = j.at("outcome").get<std::string>();
    if (j.contains("label") == j.contains("treatment"))
      schema_error("schema needs exactly one of 'label' or 'treatment'");
    s.label_col = j.contains("label") ? j["label"].get<std::string>() : j["treatment"].get<std::string>();
    s.covariate_cols = j.at("covariates").get<std::vector<std::string>>();
    if (j.contains("stratum")) s.stratum_col = j["stratum"].get<std::string>();
    if (j.contains("categorical"))
      s.categorical = j["categorical"].get<std::map<std::string, std::vector<std::string>>>();
    const std::string mode = j.value("mode", j.contains("treatment") ? "causal" : "missing-data");
    if (mode == "causal")
      s.mode = SampleMode::Causal;
    else if (mode == "missing-data")
      s.mode = SampleMode::MissingData;
    else
      schema_error("unknown mode '" + mode + "'");
  } catch (const json::exception& e) {
    schema_error(std::string("malformed schema: ") + e.what());
  }
  if (s.covariate_cols.empty()) schema_error("schema lists no covariates");
  for (const auto& [col, levels] : s.categorical) {
    if (std::find(s.covariate_cols.begin(), s.covariate_cols.end(), col) == s.covariate_cols.end())
      schema_error("categorical column '" + col + "' is not a covariate");
    if (levels.size() < 2) schema_error("categorical column '" + col + "' needs at least two levels");
  }
  return s;
}

DataSchema DataSchema::load(const std::string& path) {
  try {
    return from_json(json::parse(read_file(path)));
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::ParseError, path + ": " + e.what());
  }
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::ParseError, "cannot open " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::ParseError, "cannot write " + path);
  out << content;
  if (!out) throw Error(ErrorCode::ParseError, "write failed for " + path);
}

LoadedData parse_csv(const std::string& text, const DataSchema& schema) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line)) throw Error(ErrorCode::ParseError, "empty file");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  std::vector<std::string> header = split_csv_line(line);
  for (auto& h : header) h = trim(h);
  std::map<std::string, std::size_t> col;
  for (std::size_t j = 0; j < header.size(); ++j) col[header[j]] = j;

  auto index_of = [&](const std::string& name) {
    const auto it = col.find(name);
    if (it == col.end()) schema_error("column '" + name + "' not in header");
    return it->second;
  };
  const std::size_t y_col = index_of(schema.outcome_col);
  const std::size_t r_col = index_of(schema.label_col);
  const bool has_delta = schema.stratum_col.has_value();
  const std::size_t d_col = has_delta ? index_of(*schema.stratum_col) : 0;

  std::vector<std::string> feature_names, notes;
  std::vector<std::size_t> numeric, categorical;
  for (const auto& c : schema.covariate_cols) {
    index_of(c);
    if (schema.categorical.count(c)) {
      categorical.push_back(col[c]);
    } else {
      numeric.push_back(col[c]);
      feature_names.push_back(c);
    }
  }
  std::vector<std::string> cat_names;
  for (const auto& c : schema.covariate_cols)
    if (schema.categorical.count(c)) {
      const auto& levels = schema.categorical.at(c);
      cat_names.push_back(c);
      for (std::size_t l = 1; l < levels.size(); ++l) feature_names.push_back(c + "=" + levels[l]);
      notes.push_back(c + ": " + std::to_string(levels.size()) + " levels -> " +
                          std::to_string(levels.size() - 1) + " indicators (reference " +
                          levels.front() + ")");
    }

  std::vector<std::vector<double>> rows;
  std::vector<double> R, Y, D;
  std::size_t row = 0;
  while (std::getline(is, line)) {
    if (trim(line).empty()) continue;
    ++row;
    std::vector<std::string> f;
    try {
      f = split_csv_line(line);
    } catch (const Error& e) {
      throw Error(ErrorCode::ParseError, "row " + std::to_string(row) + ": " + e.what());
    }
    if (f.size() != header.size())
      throw Error(ErrorCode::ParseError, "row " + std::to_string(row) + " has " + std::to_string(f.size()) +
                                             " fields, header has " + std::to_string(header.size()));
    for (auto& v : f) v = trim(v);

    auto number = [&](std::size_t j) {
      try {
        return parse_number(f[j]);
      } catch (const Error& e) {
        throw Error(ErrorCode::ParseError, row_tag(row, header[j]) + ": " + e.what());
      }
    };
    auto binary = [&](std::size_t j) {
      const auto v = number(j);
      if (!v) schema_error(row_tag(row, header[j]) + ": missing indicator");
      if (*v != 0.0 && *v != 1.0) schema_error(row_tag(row, header[j]) + ": indicator must be 0 or 1");
      return *v;
    };

    const double r = binary(r_col);
    R.push_back(r);
    const auto y = number(y_col);
    const bool must_observe = schema.mode == SampleMode::Causal || r == 1.0;
    if (!y && must_observe) schema_error(row_tag(row, header[y_col]) + ": missing outcome on a labeled row");
    Y.push_back(y ? *y : std::numeric_limits<double>::quiet_NaN());
    if (has_delta) D.push_back(binary(d_col));

    std::vector<double> x;
    for (std::size_t j : numeric) {
      const auto v = number(j);
      if (!v) schema_error(row_tag(row, header[j]) + ": missing covariate");
      x.push_back(*v);
    }
    for (std::size_t c = 0; c < categorical.size(); ++c) {
      const std::size_t j = categorical[c];
      const auto& levels = schema.categorical.at(cat_names[c]);
      const auto it = std::find(levels.begin(), levels.end(), f[j]);
      if (it == levels.end()) schema_error(row_tag(row, header[j]) + ": level '" + f[j] + "' not in schema");
      const auto level = static_cast<std::size_t>(it - levels.begin());
      for (std::size_t l = 1; l < levels.size(); ++l) x.push_back(level == l ? 1.0 : 0.0);
    }
    rows.push_back(std::move(x));
  }
  if (rows.empty()) throw Error(ErrorCode::ParseError, "no data rows");

  RawSample raw;
  const Index n = static_cast<Index>(rows.size());
  const Index p = static_cast<Index>(feature_names.size());
  raw.X.resize(n, p);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < p; ++j) raw.X(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  raw.R = Eigen::Map<const VectorXd>(R.data(), n);
  raw.Y = Eigen::Map<const VectorXd>(Y.data(), n);
  if (has_delta) raw.delta = Eigen::Map<const VectorXd>(D.data(), n);
  raw.mode = schema.mode;
  return {validate_sample(std::move(raw)), std::move(feature_names), std::move(notes)};
}

LoadedData load_csv(const std::string& path, const DataSchema& schema) {
  return parse_csv(read_file(path), schema);
}

// ---------------------------------------------------------------------------

std::uint64_t config_hash(const std::map<std::string, std::string>& config) {
  std::string canonical;
  for (const auto& [k, v] : config) canonical += k + "=" + v + "\n";
  return tag_hash(canonical);
}

json provenance(const std::map<std::string, std::string>& config, std::uint64_t seed) {
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(config_hash(config)));
  return {{"library_version", kLibraryVersion}, {"seed", seed}, {"config_hash", hex}, {"config", config}};
}

json to_json(const Interval& ci) { return json::array({ci.lo, ci.hi}); }

json to_json(const EstimateReport& r) {
  json j{{"theta", r.theta},
         {"v_hat", r.v_hat},
         {"ci", to_json(r.ci)},
         {"alpha", r.alpha},
         {"N", r.N},
         {"n_labeled", r.n_labeled},
         {"a_hat_inv", r.a_hat_inv}};
  if (r.v_hat_adjusted) j["v_hat_adjusted"] = *r.v_hat_adjusted;
  if (r.ci_adjusted) j["ci_adjusted"] = to_json(*r.ci_adjusted);
  if (r.err_m) j["err_m"] = *r.err_m;
  if (r.err_pi) j["err_pi"] = *r.err_pi;
  return j;
}

json to_json(const AteReport& r) {
  json splits = json::array();
  for (const auto& s : r.per_split) splits.push_back({{"theta_ate", s.theta_ate}, {"v_hat", s.v_hat}});
  return {{"theta1", r.theta1},   {"theta0", r.theta0}, {"theta_ate", r.theta_ate},
          {"v_hat", r.v_hat},     {"ci", to_json(r.ci)}, {"alpha", r.alpha},
          {"B", r.B},             {"N", r.N},           {"n_treated", r.n_treated},
          {"clipped_control_weights", r.clipped},       {"per_split", splits}};
}

json to_json(const OffsetLogisticFit& fit, const std::vector<std::string>& feature_names) {
  json coef = json::object();
  coef["(intercept)"] = fit.gamma(0);
  for (std::size_t j = 0; j < feature_names.size() && static_cast<Index>(j + 1) < fit.gamma.size(); ++j)
    coef[feature_names[j]] = fit.gamma(static_cast<Index>(j + 1));
  json j{{"gamma", std::vector<double>(fit.gamma.data(), fit.gamma.data() + fit.gamma.size())},
         {"coefficients", coef},
         {"offset", fit.offset},
         {"pi_hat_N", fit.pi_hat_N},
         {"iterations", fit.iterations},
         {"converged", fit.converged},
         {"gradient_norm", fit.gradient_norm}};
  if (fit.penalty) j["penalty"] = *fit.penalty;
  return j;
}

}  // namespace drss
