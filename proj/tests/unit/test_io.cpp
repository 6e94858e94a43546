#include "doctest.h"

#include <sstream>

#include "drss/io.hpp"

using namespace drss;

namespace {

DataSchema toy_schema() {
  return DataSchema::from_json(nlohmann::json::parse(
      R"({"outcome": "y", "label": "r", "covariates": ["x"], "mode": "missing-data"})"));
}

}  // namespace

TEST_CASE("three-row toy CSV") {
  const LoadedData d = parse_csv("y,r,x\n1.5,1,0.1\nNA,0,0.2\n2.5,1,-0.3\n", toy_schema());
  CHECK(d.sample.size() == 3);
  CHECK(d.sample.X().cols() == 1);
  CHECK(d.sample.n_labeled() == 2);
  CHECK(d.sample.X()(2, 0) == -0.3);
  CHECK(d.feature_names == std::vector<std::string>{"x"});
}

TEST_CASE("missing outcome on a labeled row is a schema violation at that row") {
  try {
    parse_csv("y,r,x\n1.5,1,0.1\n,1,0.2\n", toy_schema());
    FAIL("expected SchemaViolation");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::SchemaViolation);
    CHECK(std::string(e.what()).find("row 2") != std::string::npos);
  }
}

TEST_CASE("label must be binary") {
  CHECK_THROWS_AS(parse_csv("y,r,x\n1.5,2,0.1\n", toy_schema()), Error);
}

TEST_CASE("absent column is rejected") {
  CHECK_THROWS_AS(parse_csv("y,r\n1.5,1\n", toy_schema()), Error);
}

TEST_CASE("five-level categorical becomes four indicators") {
  const DataSchema schema = DataSchema::from_json(nlohmann::json::parse(
      R"({"outcome": "y", "treatment": "t", "covariates": ["age", "edu"],
          "categorical": {"edu": ["1", "2", "3", "4", "5"]}})"));
  CHECK(schema.mode == SampleMode::Causal);
  const LoadedData d =
      parse_csv("y,t,age,edu\n1,1,30,1\n2,0,40,3\n3,0,50,5\n4,1,60,2\n", schema);
  REQUIRE(d.sample.X().cols() == 5);
  CHECK(d.feature_names ==
        std::vector<std::string>{"age", "edu=2", "edu=3", "edu=4", "edu=5"});
  // row 1 (edu=3) and row 2 (edu=5)
  CHECK(d.sample.X().row(1).tail(4).sum() == 1.0);
  CHECK(d.sample.X()(1, 2) == 1.0);
  CHECK(d.sample.X()(2, 4) == 1.0);
  CHECK(d.sample.X().row(0).tail(4).sum() == 0.0);
  CHECK(d.notes.size() == 1);
}

TEST_CASE("undeclared categorical level is rejected") {
  const DataSchema schema = DataSchema::from_json(nlohmann::json::parse(
      R"({"outcome": "y", "treatment": "t", "covariates": ["edu"],
          "categorical": {"edu": ["1", "2"]}})"));
  CHECK_THROWS_AS(parse_csv("y,t,edu\n1,1,1\n2,0,7\n", schema), Error);
}

TEST_CASE("unknown schema key is rejected") {
  CHECK_THROWS_AS(DataSchema::from_json(nlohmann::json::parse(
                      R"({"outcome": "y", "label": "r", "covariates": ["x"], "weights": "w"})")),
                  Error);
}

TEST_CASE("config hash depends on content only") {
  const std::map<std::string, std::string> a{{"K", "5"}, {"seed", "1"}};
  std::map<std::string, std::string> b{{"seed", "1"}};
  b["K"] = "5";
  CHECK(config_hash(a) == config_hash(b));
  b["K"] = "6";
  CHECK(config_hash(a) != config_hash(b));
  const auto prov = provenance(a, 1);
  CHECK(prov.contains("library_version"));
  CHECK(prov.at("seed") == 1);
}
