#include <gtest/gtest.h>

#include <fstream>

#include "testutil.hpp"
#include "vsi/survival_data.hpp"

using testutil::TempDir;
using vsi::ColumnRoles;
using vsi::RawRows;

namespace {

std::string write_file(const TempDir& dir, const std::string& name,
                       const std::string& content) {
  const std::string path = dir.file(name);
  std::ofstream out(path);
  out << content;
  return path;
}

}  // namespace

TEST(LoadCsv, BasicParseAndRoles) {
  TempDir dir("csv");
  const auto p = write_file(dir, "d.csv",
                            "age,group,time,event\n"
                            "30,a,1.5,1\n"
                            "40,b,2.5,0\n");
  ColumnRoles roles;
  roles.categorical = {"group"};
  const RawRows rows = vsi::load_csv(p, roles);
  ASSERT_EQ(rows.n(), 2);
  ASSERT_EQ(rows.n_covariates(), 2);
  EXPECT_EQ(rows.covariate_names[0], "age");
  EXPECT_EQ(rows.covariate_names[1], "group");
  EXPECT_EQ(rows.kinds[1], vsi::ColumnKind::categorical);
  EXPECT_EQ(rows.time[1], 2.5);
  EXPECT_EQ(rows.event[0], 1);
  EXPECT_EQ(*rows.cells[1][1], "b");
}

TEST(LoadCsv, CommentLinesCrLfAndMissingTokens) {
  TempDir dir("csv2");
  const auto p = write_file(dir, "d.csv",
                            "# provenance line\n"
                            "# another\n"
                            "x,time,event\r\n"
                            "NA,1.0,1\r\n"
                            "2.0,2.0,0\n");
  ColumnRoles roles;
  roles.missing_token = "NA";
  const RawRows rows = vsi::load_csv(p, roles);
  ASSERT_EQ(rows.n(), 2);
  EXPECT_FALSE(rows.cells[0][0].has_value());
  EXPECT_TRUE(rows.cells[1][0].has_value());
}

TEST(LoadCsv, Errors) {
  TempDir dir("csv3");
  ColumnRoles roles;
  EXPECT_THROW(vsi::load_csv(dir.file("absent.csv"), roles), vsi::data_error);

  const auto empty = write_file(dir, "empty.csv", "");
  EXPECT_THROW(vsi::load_csv(empty, roles), vsi::data_error);

  const auto no_time = write_file(dir, "nt.csv", "x,event\n1,1\n");
  EXPECT_THROW(vsi::load_csv(no_time, roles), vsi::config_error);

  const auto bad_event = write_file(dir, "be.csv", "x,time,event\n1,1,2\n");
  EXPECT_THROW(vsi::load_csv(bad_event, roles), vsi::data_error);

  const auto bad_time = write_file(dir, "bt.csv", "x,time,event\n1,oops,1\n");
  EXPECT_THROW(vsi::load_csv(bad_time, roles), vsi::data_error);

  const auto neg_time = write_file(dir, "ng.csv", "x,time,event\n1,-2,1\n");
  EXPECT_THROW(vsi::load_csv(neg_time, roles), vsi::data_error);

  const auto ragged = write_file(dir, "rg.csv", "x,time,event\n1,1\n");
  try {
    vsi::load_csv(ragged, roles);
    FAIL() << "expected data_error";
  } catch (const vsi::data_error& e) {
    EXPECT_NE(std::string(e.what()).find("row 1"), std::string::npos);
  }

  const auto missing_outcome = write_file(dir, "mo.csv", "x,time,event\n1,,1\n");
  EXPECT_THROW(vsi::load_csv(missing_outcome, roles), vsi::data_error);
}

TEST(Schema, ContinuousMomentsAndMedianImputation) {
  RawRows rows;
  rows.covariate_names = {"x"};
  rows.kinds = {vsi::ColumnKind::continuous};
  for (const char* v : {"1.0", "2.0", "4.0", "8.0"}) {
    rows.cells.push_back({std::string(v)});
    rows.time.push_back(1.0);
    rows.event.push_back(1);
  }
  rows.cells.push_back({std::nullopt});
  rows.time.push_back(1.0);
  rows.event.push_back(1);

  const auto schema = vsi::fit_schema(rows);
  ASSERT_EQ(schema.columns.size(), 1u);
  const auto& col = schema.columns[0];
  EXPECT_EQ(col.impute_median, 3.0);  // even count: mean of middle two
  // post-imputation values {1,2,4,8,3}: mean 3.6, sample sd over n-1
  EXPECT_NEAR(col.mean, 3.6, 1e-12);
  EXPECT_NEAR(col.sd, std::sqrt((6.76 + 2.56 + 0.16 + 19.36 + 0.36) / 4.0), 1e-12);

  const auto ds = vsi::transform(rows, schema);
  EXPECT_EQ(ds.p(), 1);
  EXPECT_NEAR(ds.X(4, 0), (3.0 - 3.6) / col.sd, 1e-12);  // imputed then scaled
  EXPECT_NEAR(ds.X.col(0).mean(), 0.0, 1e-12);
}

TEST(Schema, ConstantColumnDroppedWithWarning) {
  RawRows rows;
  rows.covariate_names = {"c", "x"};
  rows.kinds = {vsi::ColumnKind::continuous, vsi::ColumnKind::continuous};
  for (int i = 0; i < 4; ++i) {
    rows.cells.push_back({std::string("5.0"), std::to_string(i)});
    rows.time.push_back(1.0);
    rows.event.push_back(1);
  }
  const auto schema = vsi::fit_schema(rows);
  EXPECT_TRUE(schema.columns[0].dropped);
  ASSERT_EQ(schema.warnings.size(), 1u);
  EXPECT_NE(schema.warnings[0].find("'c'"), std::string::npos);
  EXPECT_EQ(schema.width(), 1);
  EXPECT_EQ(vsi::transform(rows, schema).p(), 1);
  EXPECT_EQ(schema.feature_names(), std::vector<std::string>{"x"});
}

TEST(Schema, CategoricalLevelsModesAndUnseen) {
  RawRows rows;
  rows.covariate_names = {"g"};
  rows.kinds = {vsi::ColumnKind::categorical};
  for (const char* v : {"b", "a", "b", "c"}) {
    rows.cells.push_back({std::string(v)});
    rows.time.push_back(1.0);
    rows.event.push_back(1);
  }
  rows.cells.push_back({std::nullopt});
  rows.time.push_back(1.0);
  rows.event.push_back(1);

  const auto schema = vsi::fit_schema(rows);
  const auto& col = schema.columns[0];
  EXPECT_EQ(col.levels, (std::vector<std::string>{"a", "b", "c"}));
  EXPECT_EQ(col.impute_mode, "b");
  EXPECT_EQ(schema.width(), 3);

  const auto ds = vsi::transform(rows, schema);
  EXPECT_EQ(ds.X(0, 1), 1.0);  // "b" one-hot in sorted position 1
  EXPECT_EQ(ds.X(4, 1), 1.0);  // missing imputed to mode
  EXPECT_EQ(ds.X.row(0).sum(), 1.0);

  // unseen level at transform time: all-zero block
  RawRows unseen = rows;
  unseen.cells[0][0] = std::string("zz");
  const auto ds2 = vsi::transform(unseen, schema);
  EXPECT_EQ(ds2.X.row(0).sum(), 0.0);
}

TEST(Schema, ModeTieResolvesLexicographically) {
  RawRows rows;
  rows.covariate_names = {"g"};
  rows.kinds = {vsi::ColumnKind::categorical};
  for (const char* v : {"b", "a"}) {
    rows.cells.push_back({std::string(v)});
    rows.time.push_back(1.0);
    rows.event.push_back(1);
  }
  EXPECT_EQ(vsi::fit_schema(rows).columns[0].impute_mode, "a");
}

TEST(Schema, AllMissingColumnRejected) {
  RawRows rows;
  rows.covariate_names = {"x"};
  rows.kinds = {vsi::ColumnKind::continuous};
  rows.cells.push_back({std::nullopt});
  rows.time.push_back(1.0);
  rows.event.push_back(1);
  try {
    vsi::fit_schema(rows);
    FAIL() << "expected data_error";
  } catch (const vsi::data_error& e) {
    EXPECT_NE(std::string(e.what()).find("'x'"), std::string::npos);
  }
}

TEST(Split, SizesDisjointCoverDeterministic) {
  const auto idx = vsi::split_indices(10, {0.6, 0.2, 0.2}, 42);
  EXPECT_EQ(idx[0].size(), 6u);
  EXPECT_EQ(idx[1].size(), 2u);
  EXPECT_EQ(idx[2].size(), 2u);

  std::vector<int> all;
  for (const auto& part : idx) all.insert(all.end(), part.begin(), part.end());
  std::sort(all.begin(), all.end());
  std::vector<int> expect(10);
  for (int i = 0; i < 10; ++i) expect[i] = i;
  EXPECT_EQ(all, expect);

  EXPECT_EQ(vsi::split_indices(10, {0.6, 0.2, 0.2}, 42), idx);
  EXPECT_NE(vsi::split_indices(10, {0.6, 0.2, 0.2}, 43), idx);

  // floor sizes, remainder to the last part
  const auto odd = vsi::split_indices(7, {0.6, 0.2, 0.2}, 1);
  EXPECT_EQ(odd[0].size(), 4u);  // floor(4.2)
  EXPECT_EQ(odd[1].size(), 1u);  // floor(1.4)
  EXPECT_EQ(odd[2].size(), 2u);  // remainder

  EXPECT_THROW(vsi::split_indices(10, {0.5, 0.2, 0.2}, 1), vsi::config_error);
  EXPECT_THROW(vsi::split_indices(2, {0.6, 0.2, 0.2}, 1), vsi::data_error);
}

TEST(Split, DatasetSubsetsCarrySchema) {
  const auto ds = testutil::toy_dataset(30, 2, 7);
  const auto parts = vsi::split(ds, {0.6, 0.2, 0.2}, 5);
  EXPECT_EQ(parts[0].n(), 18);
  EXPECT_EQ(parts[1].n(), 6);
  EXPECT_EQ(parts[2].n(), 6);
  EXPECT_EQ(parts[0].p(), ds.p());
  EXPECT_EQ(parts[2].schema.width(), ds.schema.width());
  // record accessor round-trips a row
  const auto rec = parts[0].record(0);
  EXPECT_EQ(rec.covariates.size(), ds.p());
}

TEST(SubsetRows, PreservesCellsAndOutcomes) {
  RawRows rows;
  rows.covariate_names = {"x"};
  rows.kinds = {vsi::ColumnKind::continuous};
  for (int i = 0; i < 5; ++i) {
    rows.cells.push_back({std::to_string(i)});
    rows.time.push_back(i + 0.5);
    rows.event.push_back(i % 2);
  }
  const auto sub = vsi::subset_rows(rows, {4, 0});
  ASSERT_EQ(sub.n(), 2);
  EXPECT_EQ(*sub.cells[0][0], "4");
  EXPECT_EQ(sub.time[1], 0.5);
  EXPECT_EQ(sub.event[0], 0);
}
