#include "cyclegcn/cli.hpp"
#include "cyclegcn/csv.hpp"
#include "cyclegcn/errors.hpp"
#include "cyclegcn/report.hpp"
#include "helpers.hpp"

#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <sstream>
#include <string>
#include <vector>

using namespace cyclegcn;

namespace {

struct CliResult {
  int code = 0;
  std::string out;
  std::string err;
};

CliResult run(std::vector<std::string> args) {
  args.insert(args.begin(), "cyclegcn");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  CliResult r;
  r.code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string write_config(const testing::TempDir& dir, const std::string& name, const std::string& json) {
  const auto path = dir.path() / name;
  write_text_file(path, json);
  return path.string();
}

int run_binary(const std::string& args) {
  const std::string command = std::string(CYCLEGCN_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(command.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

const char* kSmallCity = R"({"synthetic": {"n_nodes": 120, "days": 5}, "train": {"max_epochs": 5}})";

}  // namespace

TEST_CASE("help and usage errors") {
  CHECK(run({"--help"}).code == 0);
  CHECK(run({}).code == 1);
  CHECK(run({"bogus"}).code == 1);
  CHECK(run({"report"}).code == 1);
  CHECK(run({"train", "--gcn-config", "K"}).code == 1);
  CHECK(run({"train", "--model", "xgb"}).code == 1);
  CHECK(run({"train", "--level", "1.5"}).code == 1);
}

TEST_CASE("configuration errors exit with 1") {
  testing::TempDir dir("cli-config");
  const auto out = (dir.path() / "o").string();

  auto r = run({"synth", "--config", write_config(dir, "zero.json", R"({"synthetic": {"n_nodes": 0}})"),
                "--out", out});
  CHECK(r.code == 1);
  CHECK(r.err.find("n_nodes") != std::string::npos);

  r = run({"synth", "--config", write_config(dir, "typo.json", R"({"synthetic": {"n_node": 100}})"), "--out", out});
  CHECK(r.code == 1);
  CHECK(r.err.find("n_node") != std::string::npos);

  r = run({"synth", "--config", write_config(dir, "label.json", R"({"gcn_config": "K"})"), "--out", out});
  CHECK(r.code == 1);

  r = run({"synth", "--config", write_config(dir, "type.json", R"({"seed": "forty-two"})"), "--out", out});
  CHECK(r.code == 1);

  r = run({"synth", "--config", write_config(dir, "broken.json", "{"), "--out", out});
  CHECK(r.code == 1);
}

TEST_CASE("report exit codes") {
  testing::TempDir dir("cli-report");
  write_text_file(dir.path() / "bad.csv", std::string(kResultsHeader) + "\n0,100,lr,x,test,1,1,1,1,0,,ok\n");
  auto r = run({"report", (dir.path() / "bad.csv").string()});
  CHECK(r.code == 2);
  CHECK(r.err.find("row 2") != std::string::npos);

  write_text_file(dir.path() / "empty.csv", "");
  r = run({"report", (dir.path() / "empty.csv").string(), "--out", (dir.path() / "rep").string()});
  CHECK(r.code == 0);
  CHECK(std::filesystem::exists(dir.path() / "rep" / "series_rmse.csv"));

  CHECK(run({"report", (dir.path() / "missing.csv").string()}).code == 2);
}

TEST_CASE("synth is deterministic") {
  testing::TempDir dir("cli-synth");
  const auto config = write_config(dir, "c.json", kSmallCity);
  const auto a = dir.path() / "a";
  const auto b = dir.path() / "b";
  REQUIRE(run({"synth", "--config", config, "--seed", "5", "--out", a.string()}).code == 0);
  REQUIRE(run({"synth", "--config", config, "--seed", "5", "--out", b.string()}).code == 0);
  for (const char* file : {"nodes.csv", "edges.csv", "counts.csv"}) {
    CHECK(read_text_file(a / file) == read_text_file(b / file));
  }
}

TEST_CASE("manifests reload to the same configuration") {
  testing::TempDir dir("cli-manifest");
  const auto out = dir.path() / "m";
  REQUIRE(run({"synth", "--config", write_config(dir, "c.json", kSmallCity), "--seed", "9", "--out",
               out.string()})
              .code == 0);
  const auto manifest = read_text_file(out / "manifest.json");
  const auto config = load_experiment_config(out / "manifest.json");
  CHECK(config.seed == 9);
  CHECK(config.synthetic.n_nodes == 120);
  CHECK(dump_json(Json{{"command", "synth"}, {"config", to_json(config)}}) == manifest);
}

TEST_CASE("train and preprocess write their outputs") {
  testing::TempDir dir("cli-train");
  const auto config = write_config(dir, "c.json", kSmallCity);
  const auto train_dir = dir.path() / "t";
  auto r = run({"train", "--config", config, "--gcn-config", "A", "--out", train_dir.string()});
  CHECK(r.code == 0);
  CHECK(std::filesystem::exists(train_dir / "metrics.json"));
  CHECK(std::filesystem::exists(train_dir / "loss_curve.csv"));

  const auto pre_dir = dir.path() / "p";
  r = run({"preprocess", "--config", config, "--out", pre_dir.string()});
  CHECK(r.code == 0);
  const auto skew = parse_csv(read_text_file(pre_dir / "skewness.csv"));
  CHECK(skew.header.size() == 6);
  CHECK(std::filesystem::exists(pre_dir / "features.csv"));
}

TEST_CASE("a held output lock is a runtime failure") {
  testing::TempDir dir("cli-lock");
  const auto out = dir.path() / "locked";
  std::filesystem::create_directories(out);
  {
    DirectoryLock lock(out);
    CHECK_THROWS_AS([&] { DirectoryLock second(out); }(), std::runtime_error);
    const auto r = run({"synth", "--config", write_config(dir, "c.json", kSmallCity), "--out", out.string()});
    CHECK(r.code == 3);
  }
  CHECK_FALSE(std::filesystem::exists(out / ".lock"));
}

TEST_CASE("installed binary reports exit codes") {
  CHECK(run_binary("--help") == 0);
  CHECK(run_binary("no-such-command") == 1);
  CHECK(run_binary("train --gcn-config K") == 1);
}
