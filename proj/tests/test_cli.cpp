#include <doctest.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>
#include <sys/wait.h>

#include "rbmsem/cli.hpp"
#include "rbmsem/dataset_io.hpp"

namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run cli(std::vector<std::string> args) {
  args.insert(args.begin(), "rbmsem");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = rbmsem::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch() {
  static const fs::path dir = [] {
    const fs::path d = fs::temp_directory_path() / "rbmsem_cli_test";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p);
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

}  // namespace

TEST_CASE("simulate writes datasets of the preset shape") {
  const Run g = cli({"simulate", "--model", "gcm", "--n", "15", "--reliability", "low", "--dist", "normal", "--seed", "3"});
  REQUIRE(g.code == 0);
  std::istringstream gs(g.out);
  const rbmsem::Dataset gd = rbmsem::read_csv(gs);
  CHECK(gd.rows() == 15);
  CHECK(gd.cols() == 10);
  CHECK(g.out.rfind("y1,y2,", 0) == 0);

  const fs::path path = scratch() / "tf.csv";
  const Run t = cli({"simulate", "--model", "two_factor", "--n", "20", "--seed", "4", "--output", path.string()});
  REQUIRE(t.code == 0);
  CHECK(t.out.empty());
  const rbmsem::Dataset td = rbmsem::read_csv(path.string());
  CHECK(td.rows() == 20);
  CHECK(td.cols() == 6);
  const auto manifest = nlohmann::json::parse(slurp(scratch() / "tf.manifest.json"));
  CHECK(manifest.at("seed") == 4);
  CHECK(manifest.at("model") == "two_factor");

  const std::string first = slurp(path);
  REQUIRE(cli({"simulate", "--model", "two_factor", "--n", "20", "--seed", "4", "--output", path.string()}).code == 0);
  CHECK(slurp(path) == first);

  const Run js = cli({"simulate", "--model", "gcm", "--n", "3", "--format", "json"});
  CHECK(nlohmann::json::parse(js.out).at("data").size() == 3);
}

TEST_CASE("fit exit codes") {
  const fs::path data = scratch() / "fit.csv";
  REQUIRE(cli({"simulate", "--model", "two_factor", "--n", "100", "--seed", "8", "--output", data.string()}).code == 0);

  const Run ok = cli({"fit", "--model", "two_factor", "--data", data.string(), "--estimator", "irbm"});
  CHECK(ok.code == 0);
  const auto doc = nlohmann::json::parse(ok.out);
  CHECK(doc.at("estimator") == "irbm");
  CHECK(doc.at("acceptable") == true);
  CHECK(doc.at("theta_hat").size() == 13);

  const Run csv = cli({"fit", "--model", "two_factor", "--data", data.string(), "--format", "csv"});
  CHECK(csv.code == 0);
  CHECK(csv.out.rfind("parameter,estimate,se\n", 0) == 0);

  const Run missing = cli({"fit", "--model", "two_factor", "--data", (scratch() / "nope.csv").string()});
  CHECK(missing.code == 1);
  CHECK(missing.err.find("error:") != std::string::npos);
  CHECK(missing.out.empty());

  const Run reml = cli({"fit", "--model", "two_factor", "--data", data.string(), "--estimator", "reml"});
  CHECK(reml.code == 1);

  CHECK(cli({"fit", "--model", "gcm", "--data", data.string()}).code == 1);  // wrong column count
  CHECK(cli({"fit", "--model", "two_factor"}).code == 1);                  // missing --data
  CHECK(cli({"bogus"}).code == 1);
  CHECK(cli({"--help"}).code == 0);

  // a rejected fit exits with 2: a single-replicate bootstrap has no SE
  const Run rejected = cli({"fit", "--model", "two_factor", "--data", data.string(), "--estimator", "boot",
                            "--bootstrap-T", "1"});
  CHECK(rejected.code == 2);
  CHECK(nlohmann::json::parse(rejected.out).at("acceptable") == false);
}

TEST_CASE("fit accepts a model file") {
  const fs::path model = scratch() / "model.json";
  std::ofstream(model) << R"({"preset": "gcm"})";
  const fs::path data = scratch() / "gcm.csv";
  REQUIRE(cli({"simulate", "--model", "gcm", "--n", "80", "--output", data.string()}).code == 0);
  CHECK(cli({"fit", "--model", model.string(), "--data", data.string(), "--estimator", "reml"}).code == 0);
  CHECK(cli({"fit", "--model", model.string(), "--data", data.string(), "--estimator", "erbm"}).code == 0);
}

TEST_CASE("grid and report") {
  const fs::path cfg = scratch() / "grid.json";
  const fs::path out = scratch() / "grid_out";
  std::ofstream(cfg) << R"({"models": ["gcm"], "ns": [20], "reliabilities": ["high"], "dists": ["normal"],
                            "replications": 2, "estimators": ["ml", "irbm"], "master_seed": 3})";
  const Run g = cli({"grid", "--config", cfg.string(), "--output", out.string(), "--jobs", "1"});
  REQUIRE(g.code == 0);
  CHECK(nlohmann::json::parse(g.out).at("rows") == 12);
  CHECK(fs::exists(out / "results.csv"));
  CHECK(fs::exists(out / "manifest.json"));
  CHECK_FALSE(g.err.empty());

  const Run again = cli({"grid", "--config", cfg.string(), "--output", out.string()});
  CHECK(nlohmann::json::parse(again.out).at("resumed") == 1);

  const Run rep = cli({"report", "--results", (out / "results.csv").string(), "--estimator", "irbm", "--parameter",
                       "psi11"});
  CHECK(rep.code == 0);
  CHECK(std::count(rep.out.begin(), rep.out.end(), '\n') == 2);
  const Run rj = cli({"report", "--results", (out / "results.csv").string(), "--format", "json"});
  CHECK(nlohmann::json::parse(rj.out).size() == 12);

  const fs::path empty = scratch() / "empty.json";
  std::ofstream(empty) << R"({"estimators": []})";
  CHECK(cli({"grid", "--config", empty.string()}).code == 1);
}

TEST_CASE("the installed binary behaves like the in-process entry point") {
  const fs::path out = scratch() / "bin.csv";
  const std::string cmd = std::string(RBMSEM_CLI_PATH) + " simulate --model gcm --n 5 --seed 2 > " + out.string();
  REQUIRE(std::system(cmd.c_str()) == 0);
  CHECK(slurp(out) == cli({"simulate", "--model", "gcm", "--n", "5", "--seed", "2"}).out);
  const std::string bad = std::string(RBMSEM_CLI_PATH) + " fit --model gcm --data /nonexistent.csv 2>/dev/null";
  const int status = std::system(bad.c_str());
  CHECK(WEXITSTATUS(status) == 1);
}
