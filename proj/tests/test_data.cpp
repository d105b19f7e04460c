#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>

#include "cidml/dataset.hpp"
#include "cidml/errors.hpp"
#include "cidml/rng.hpp"

namespace {

std::filesystem::path tmp_dir() {
  const auto dir = std::filesystem::temp_directory_path() / "cidml_test_data";
  std::filesystem::create_directories(dir);
  return dir;
}

std::string write_file(const std::string& name, const std::string& body) {
  const auto p = tmp_dir() / name;
  std::ofstream out(p);
  out << body;
  out.close();
  return p.string();
}

}  // namespace

TEST_CASE("CSV loads a small file with schema mapping") {
  const std::string path = write_file("small.csv",
                                      "id,d,y,f0\n"
                                      "a,1,2.5,0.1\n"
                                      "b,0,1.5,-0.2\n"
                                      "c,1,3.25,0.3\n"
                                      "d,0,0.5,0.4\n");
  cidml::Schema schema;
  schema.id_column = "id";
  schema.treatment_column = "d";
  schema.outcome_column = "y";
  const cidml::Dataset ds = cidml::load_dataset(path, schema);
  CHECK(ds.n() == 4);
  CHECK(ds.m() == 1);
  CHECK(ds.customer_ids == std::vector<std::string>{"a", "b", "c", "d"});
  CHECK(ds.feature_names == std::vector<std::string>{"f0"});
  CHECK(ds.treatment == std::vector<int>{1, 0, 1, 0});
  CHECK(ds.outcome(2) == 3.25);
  CHECK(ds.features(3, 0) == 0.4);
  CHECK(ds.has_both_arms());
}

TEST_CASE("non-binary treatment names the offending row") {
  const std::string path = write_file("badtreat.csv",
                                      "customer_id,treatment,outcome,x0\n"
                                      "a,1,2.0,0.1\n"
                                      "b,2,1.0,0.2\n");
  CHECK_THROWS_AS(cidml::load_csv(path, cidml::Schema{}),
                  cidml::ValidationError);
  try {
    cidml::load_csv(path, cidml::Schema{});
  } catch (const cidml::ValidationError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("row 2") != std::string::npos);
    CHECK(msg.find("0 or 1") != std::string::npos);
  }
}

TEST_CASE("all-treated file loads but reports a single arm") {
  const std::string path = write_file("alltreated.csv",
                                      "customer_id,treatment,outcome,x0\n"
                                      "a,1,2.0,0.1\n"
                                      "b,1,1.0,0.2\n"
                                      "c,1,3.0,0.3\n");
  const cidml::Dataset ds = cidml::load_csv(path, cidml::Schema{});
  CHECK(ds.n() == 3);
  CHECK_FALSE(ds.has_both_arms());
}

TEST_CASE("missing required column is a schema error naming it") {
  const std::string path = write_file("nocol.csv",
                                      "customer_id,treatment,x0\n"
                                      "a,1,0.1\n");
  CHECK_THROWS_WITH_AS(cidml::load_csv(path, cidml::Schema{}),
                       doctest::Contains("outcome"), cidml::SchemaError);
}

TEST_CASE("non-numeric and non-finite cells are validation errors") {
  const std::string bad = write_file("nan.csv",
                                     "customer_id,treatment,outcome,x0\n"
                                     "a,1,2.0,oops\n");
  try {
    cidml::load_csv(bad, cidml::Schema{});
    CHECK(false);
  } catch (const cidml::ValidationError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("row 1") != std::string::npos);
    CHECK(msg.find("x0") != std::string::npos);
  }
  const std::string inf = write_file("inf.csv",
                                     "customer_id,treatment,outcome,x0\n"
                                     "a,1,inf,0.5\n");
  CHECK_THROWS_AS(cidml::load_csv(inf, cidml::Schema{}),
                  cidml::ValidationError);
}

TEST_CASE("duplicate ids are rejected") {
  const std::string path = write_file("dup.csv",
                                      "customer_id,treatment,outcome,x0\n"
                                      "a,1,2.0,0.1\n"
                                      "a,0,1.0,0.2\n");
  CHECK_THROWS_WITH_AS(cidml::load_csv(path, cidml::Schema{}),
                       doctest::Contains("duplicate customer id"),
                       cidml::ValidationError);
}

TEST_CASE("explicit feature_columns selects and orders features") {
  const std::string path = write_file("sel.csv",
                                      "customer_id,treatment,outcome,a,b,c\n"
                                      "r1,1,2.0,1,2,3\n"
                                      "r2,0,1.0,4,5,6\n");
  cidml::Schema schema;
  schema.feature_columns = {"c", "a"};
  const cidml::Dataset ds = cidml::load_csv(path, schema);
  CHECK(ds.feature_names == std::vector<std::string>{"c", "a"});
  CHECK(ds.features(0, 0) == 3.0);
  CHECK(ds.features(0, 1) == 1.0);
  CHECK(ds.features(1, 0) == 6.0);
}

TEST_CASE("JSON-lines loads the same data model") {
  const std::string path = write_file(
      "rows.jsonl",
      R"({"customer_id":"a","treatment":1,"outcome":2.5,"x0":0.125})"
      "\n"
      R"({"customer_id":"b","treatment":0,"outcome":-1.5,"x0":0.25})"
      "\n");
  const cidml::Dataset ds = cidml::load_jsonl(path, cidml::Schema{});
  CHECK(ds.n() == 2);
  CHECK(ds.outcome(1) == -1.5);
  CHECK(ds.features(0, 0) == 0.125);
  // load_dataset dispatches on the extension.
  const cidml::Dataset ds2 = cidml::load_dataset(path, cidml::Schema{});
  CHECK(ds2.outcome(0) == ds.outcome(0));
}

TEST_CASE("missing file is a data error") {
  CHECK_THROWS_AS(cidml::load_csv("/definitely/not/here.csv", cidml::Schema{}),
                  cidml::DataError);
}

TEST_CASE("save then load round-trips bit-exactly") {
  cidml::Rng rng(404);
  cidml::Dataset ds;
  const int n = 50, m = 3;
  ds.features.resize(n, m);
  ds.outcome.resize(n);
  for (int i = 0; i < n; ++i) {
    ds.customer_ids.push_back("cust" + std::to_string(i));
    ds.treatment.push_back(rng.bernoulli(0.5) ? 1 : 0);
    // Awkward magnitudes to stress the round-trip formatting.
    ds.outcome(i) = rng.normal() * std::pow(10.0, rng.uniform() * 20 - 10);
    for (int j = 0; j < m; ++j) ds.features(i, j) = rng.normal() * 1e-7;
  }
  for (const auto& name : {"x0", "x1", "x2"}) ds.feature_names.push_back(name);
  ds.validate();

  const auto path = (tmp_dir() / "roundtrip.csv").string();
  cidml::save_csv(ds, path);
  const cidml::Dataset back = cidml::load_csv(path, cidml::Schema{});
  REQUIRE(back.n() == ds.n());
  REQUIRE(back.m() == ds.m());
  CHECK(back.customer_ids == ds.customer_ids);
  CHECK(back.treatment == ds.treatment);
  for (int i = 0; i < n; ++i) {
    CHECK(back.outcome(i) == ds.outcome(i));
    for (int j = 0; j < m; ++j) CHECK(back.features(i, j) == ds.features(i, j));
  }
}

TEST_CASE("assign_folds balances sizes and partitions the rows") {
  const cidml::FoldPlan p6 = cidml::assign_folds(6, 3, 7);
  CHECK(p6.fold_sizes() == std::vector<std::size_t>{2, 2, 2});

  const cidml::FoldPlan p7 = cidml::assign_folds(7, 3, 7);
  auto sizes = p7.fold_sizes();
  std::sort(sizes.begin(), sizes.end());
  CHECK(sizes == std::vector<std::size_t>{2, 2, 3});

  const cidml::FoldPlan a = cidml::assign_folds(1000, 3, 1);
  const cidml::FoldPlan b = cidml::assign_folds(1000, 3, 1);
  CHECK(a.fold_of == b.fold_of);
  const cidml::FoldPlan c = cidml::assign_folds(1000, 3, 2);
  CHECK(a.fold_of != c.fold_of);

  // Partition: every index appears once, every fold nonempty, sizes within 1.
  std::size_t total = 0;
  std::size_t lo = 1000, hi = 0;
  for (std::size_t s : a.fold_sizes()) {
    CHECK(s > 0);
    total += s;
    lo = std::min(lo, s);
    hi = std::max(hi, s);
  }
  CHECK(total == 1000);
  CHECK(hi - lo <= 1);
  for (int f : a.fold_of) {
    CHECK(f >= 0);
    CHECK(f < 3);
  }
}

TEST_CASE("assign_folds rejects bad arguments") {
  CHECK_THROWS_AS(cidml::assign_folds(5, 1, 0), cidml::ArgumentError);
  CHECK_THROWS_AS(cidml::assign_folds(2, 3, 0), cidml::ArgumentError);
}

TEST_CASE("Dataset::validate catches structural breakage") {
  cidml::Dataset ds;
  ds.customer_ids = {"a", "b"};
  ds.treatment = {1, 0};
  ds.outcome.resize(2);
  ds.outcome << 1.0, 2.0;
  ds.features.resize(2, 1);
  ds.features << 0.1, 0.2;
  ds.feature_names = {"x0"};
  CHECK_NOTHROW(ds.validate());

  auto broke = ds;
  broke.treatment = {1, 2};
  CHECK_THROWS_AS(broke.validate(), cidml::ValidationError);

  broke = ds;
  broke.outcome(0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(broke.validate(), cidml::ValidationError);

  broke = ds;
  broke.customer_ids = {"a", "a"};
  CHECK_THROWS_AS(broke.validate(), cidml::ValidationError);
}
