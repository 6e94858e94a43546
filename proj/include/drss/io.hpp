#ifndef DRSS_IO_HPP
#define DRSS_IO_HPP

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "drss/ate.hpp"
#include "drss/core.hpp"
#include "drss/inference.hpp"

namespace drss {

/// Column roles of a tabular data file. Numeric covariates keep the listed
/// order; categorical covariates become indicator columns (first level
/// dropped) appended after them.
struct DataSchema {
  std::string outcome_col;
  std::string label_col;  // labeling or treatment indicator
  std::vector<std::string> covariate_cols;
  std::optional<std::string> stratum_col;
  std::map<std::string, std::vector<std::string>> categorical;  // column -> levels
  SampleMode mode = SampleMode::MissingData;

  static DataSchema from_json(const nlohmann::json& j);
  static DataSchema load(const std::string& path);
};

struct LoadedData {
  SemiSupervisedSample sample;
  std::vector<std::string> feature_names;  // columns of X
  std::vector<std::string> notes;          // categorical expansions applied
};

/// Parses comma-separated text with a header row. Missing cells are empty or
/// "NA"; they are allowed only in the outcome of unlabeled rows in
/// missing-data mode. Row numbers in errors count data rows from 1.
LoadedData parse_csv(const std::string& text, const DataSchema& schema);
LoadedData load_csv(const std::string& path, const DataSchema& schema);

std::string read_file(const std::string& path);
/// Writes atomically enough for our purposes: whole content in one stream.
void write_file(const std::string& path, const std::string& content);

/// Provenance block attached to every report.
nlohmann::json provenance(const std::map<std::string, std::string>& config, std::uint64_t seed);
/// FNV-1a over the sorted key=value lines.
std::uint64_t config_hash(const std::map<std::string, std::string>& config);

nlohmann::json to_json(const Interval& ci);
nlohmann::json to_json(const EstimateReport& report);
nlohmann::json to_json(const AteReport& report);
nlohmann::json to_json(const OffsetLogisticFit& fit, const std::vector<std::string>& feature_names);

}  // namespace drss

#endif  // DRSS_IO_HPP
