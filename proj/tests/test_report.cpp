#include "cyclegcn/csv.hpp"
#include "cyclegcn/errors.hpp"
#include "cyclegcn/report.hpp"
#include "helpers.hpp"

#include <doctest.h>

#include <cmath>
#include <string>

using namespace cyclegcn;

namespace {

const std::string kHeader = std::string(kResultsHeader) + "\n";

std::string sample_results() {
  return kHeader +
         "0.5,50,gcn,1,test,10,100,8,20,0,,ok\n"
         "0.5,50,gcn,1,validation,11,121,9,21,0,,ok\n"
         "0,100,gcn,1,test,6,36,5,12,0,,ok\n"
         "0,100,gcn,1,validation,7,49,6,13,0,,ok\n"
         "0,100,lr,1,test,9,81,7,15,1,,ok\n"
         "0,100,lr,2,test,5,25,4,11,0,,ok\n"
         "0,100,lr,3,test,,,,,,,failed: singular\n"
         "141,141,gcn,1,test,30,900,25,40,0,,ok\n";
}

}  // namespace

TEST_CASE("median") {
  CHECK(median({3, 1, 2}) == 2.0);
  CHECK(median({4, 1, 2, 3}) == 2.5);
  CHECK(std::isnan(median({})));
}

TEST_CASE("level ordering") {
  const auto f0 = SparsityLevel::masked_fraction(0.0);
  const auto f5 = SparsityLevel::masked_fraction(0.5);
  const auto c141 = SparsityLevel::kept_count(141);
  const auto c50 = SparsityLevel::kept_count(50);
  CHECK(level_before(f0, f5));
  CHECK_FALSE(level_before(f5, f0));
  CHECK(level_before(f5, c141));
  CHECK(level_before(c141, c50));
  CHECK_FALSE(level_before(f0, f0));
}

TEST_CASE("parsing results") {
  const auto rows = parse_results(sample_results());
  REQUIRE(rows.size() == 8);
  CHECK(rows[0].level == SparsityLevel::masked_fraction(0.5));
  CHECK(rows[0].labelled_count == 50);
  CHECK(*rows[0].mape == 20.0);
  CHECK_FALSE(rows[0].wall_ms.has_value());
  CHECK_FALSE(rows[6].ok());
  CHECK_FALSE(rows[6].rmse.has_value());
  CHECK(rows[7].level == SparsityLevel::kept_count(141));
}

TEST_CASE("malformed rows name the row") {
  CHECK_THROWS_WITH_AS(parse_results(kHeader + "0,100,lr,1,test,9,81,7,15,0,,ok\n0,100,lr,x,test,9,81,7,15,0,,ok\n"),
                       "results.csv: row 3: invalid seed 'x'", DataError);
  CHECK_THROWS_WITH_AS(parse_results(kHeader + "0,100,lr,1,train,9,81,7,15,0,,ok\n"),
                       "results.csv: row 2: invalid split 'train'", DataError);
  CHECK_THROWS_WITH_AS(parse_results(kHeader + "0,100,lr,1,test,abc,81,7,15,0,,ok\n", "r.csv"),
                       "r.csv: row 2: invalid rmse 'abc'", DataError);
  CHECK_THROWS_WITH_AS(parse_results("a,b\n1,2\n"), "results.csv: row 1: unexpected header", DataError);
  CHECK_THROWS_AS(parse_results(kHeader + "0,100,lr\n"), DataError);
  CHECK_THROWS_AS(parse_results(kHeader + "1.5,100,lr,1,test,9,81,7,15,0,,ok\n"), DataError);
}

TEST_CASE("empty input gives empty tables") {
  for (const std::string& text : {std::string(), kHeader}) {
    const auto bundle = build_report(parse_results(text));
    CHECK(bundle.sparsity_table.find("| 0 ") == std::string::npos);
    REQUIRE(bundle.series.size() == 4);
    CHECK(bundle.series.at("rmse") == "level,labelled_count\n");
  }
}

TEST_CASE("report medians skip failed seeds") {
  const auto bundle = build_report(parse_results(sample_results()));
  CHECK(bundle.series.at("rmse") ==
        "level,labelled_count,lr,gcn\n"
        "0,100,7,6\n"
        "0.5,50,,10\n"
        "141,141,,30\n");
  CHECK(bundle.sparsity_table.find("| 0 | 100 | lr | 3 | 1 | 7.000 | 5.500 | 13.000 |") != std::string::npos);
}

TEST_CASE("series are sorted by level whatever the input order") {
  const auto text = sample_results();
  const auto bundle = build_report(parse_results(text));
  // Reverse the data rows; the report must not change.
  std::vector<std::string> lines;
  std::size_t pos = kHeader.size();
  while (pos < text.size()) {
    const auto end = text.find('\n', pos);
    lines.push_back(text.substr(pos, end - pos + 1));
    pos = end + 1;
  }
  std::string reversed = kHeader;
  for (auto it = lines.rbegin(); it != lines.rend(); ++it) reversed += *it;
  const auto other = build_report(parse_results(reversed));
  CHECK(other.series == bundle.series);
  CHECK(other.sparsity_table == bundle.sparsity_table);
}

TEST_CASE("writing the report is idempotent") {
  testing::TempDir dir("report");
  const auto bundle = build_report(parse_results(sample_results()));
  write_report(bundle, dir.path());
  const auto first = read_text_file(dir.path() / "series_mae.csv");
  write_report(bundle, dir.path());
  CHECK(read_text_file(dir.path() / "series_mae.csv") == first);
  CHECK(read_text_file(dir.path() / "sparsity_table.md") == bundle.sparsity_table);
}
