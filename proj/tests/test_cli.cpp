#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <gradsynth/cli.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

using namespace gradsynth;
namespace fs = std::filesystem;

namespace {

// Runs the CLI in-process with stdout captured.
struct CliResult {
  int rc;
  std::string out;
};

CliResult call(std::vector<std::string> args) {
  std::ostringstream captured;
  std::streambuf* old = std::cout.rdbuf(captured.rdbuf());
  const int rc = run_cli(std::move(args));
  std::cout.rdbuf(old);
  return {rc, captured.str()};
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("tasks subcommand lists the registry") {
  const CliResult r = call({"tasks"});
  CHECK(r.rc == 0);
  CHECK(r.out.find("len\n") != std::string::npos);
  CHECK(r.out.find("dupK\n") != std::string::npos);
  CHECK(r.out.find("pairwiseSum\n") != std::string::npos);
}

TEST_CASE("run writes a record, a program, and the results table") {
  const fs::path dir = fresh_dir("gradsynth_cli_run");
  const CliResult r = call({"run", "--task", "dupK", "--k", "1", "--preset", "straightline",
                            "--restarts", "2", "--epochs", "40", "--seed", "1", "--out",
                            dir.string()});
  REQUIRE(r.rc == 0);
  CHECK(r.out.find("dupK-k1") != std::string::npos);

  CHECK(fs::exists(dir / "run_cti_dupK-k1_g1.json"));
  const std::string csv = slurp(dir / "results.csv");
  CHECK(csv.rfind("model,task,group,restarts,success_ratio,zero_loss_ratio\n", 0) == 0);
  CHECK(csv.find("cti,dupK-k1,1,2,") != std::string::npos);

  // Rerunning the same cell overwrites its record instead of appending rows.
  const CliResult again = call({"run", "--task", "dupK", "--k", "1", "--preset", "straightline",
                                "--restarts", "2", "--epochs", "40", "--seed", "1", "--out",
                                dir.string()});
  REQUIRE(again.rc == 0);
  const std::string csv2 = slurp(dir / "results.csv");
  CHECK(csv2 == csv);
}

TEST_CASE("report renders a markdown table with the best cell bolded") {
  const fs::path dir = fresh_dir("gradsynth_cli_report");
  REQUIRE(call({"run", "--task", "dupK", "--k", "1", "--preset", "straightline", "--restarts",
                "2", "--epochs", "40", "--seed", "1", "--out", dir.string()})
              .rc == 0);
  const CliResult r = call({"report", dir.string()});
  CHECK(r.rc == 0);
  CHECK(r.out.find("| task | C+T+I |") != std::string::npos);
  CHECK(r.out.find("**") != std::string::npos);
  CHECK(slurp(dir / "report.md") == r.out);
}

TEST_CASE("report on a directory without records fails") {
  const fs::path dir = fresh_dir("gradsynth_cli_empty");
  fs::create_directories(dir);
  CHECK(call({"report", dir.string()}).rc != 0);
}

TEST_CASE("enumerate prints a 1 for solvable tasks and writes a csv") {
  const fs::path dir = fresh_dir("gradsynth_cli_enum");
  const CliResult r = call({"enumerate", "--task", "len", "--preset", "simple-loop", "--budget",
                            "2000000", "--out", dir.string()});
  REQUIRE(r.rc == 0);
  CHECK(r.out.find("len") != std::string::npos);
  const std::string csv = slurp(dir / "enumerate.csv");
  CHECK(csv.rfind("task,model,preset,budget,nodes,seconds,found,test_consistent\n", 0) == 0);
  CHECK(csv.find("len,cti,simple-loop,2000000,") != std::string::npos);
  CHECK(csv.find(",1,1\n") != std::string::npos);
}

TEST_CASE("invalid arguments exit nonzero") {
  CHECK(call({"enumerate", "--task", "len", "--budget", "0"}).rc != 0);
  CHECK(call({"run", "--task", "len", "--model", "bogus", "--out",
              fresh_dir("gradsynth_cli_bad").string()})
            .rc != 0);
  CHECK(call({"run", "--task", "noSuchTask", "--out", fresh_dir("gradsynth_cli_bad2").string()})
            .rc != 0);
  CHECK(call({}).rc != 0);
}

TEST_CASE("the ctpi spelling of the full model is accepted") {
  const fs::path dir = fresh_dir("gradsynth_cli_ctpi");
  const CliResult r = call({"run", "--model", "ctpi", "--task", "dupK", "--k", "1", "--preset",
                            "straightline", "--restarts", "1", "--epochs", "10", "--seed", "1",
                            "--out", dir.string()});
  REQUIRE(r.rc == 0);
  CHECK(fs::exists(dir / "run_cti_dupK-k1_g1.json"));
}

TEST_CASE("paper-scale leaves explicit flags alone") {
  // Just check the flag parses; the full protocol is far too slow for a test.
  const fs::path dir = fresh_dir("gradsynth_cli_ps");
  const CliResult r = call({"run", "--paper-scale", "--restarts", "1", "--groups", "1",
                            "--epochs", "10", "--task", "dupK", "--k", "1", "--preset",
                            "straightline", "--seed", "1", "--out", dir.string()});
  REQUIRE(r.rc == 0);
  const std::string rec = slurp(dir / "run_cti_dupK-k1_g1.json");
  CHECK(rec.find("\"restarts\": 1") != std::string::npos);
  CHECK(rec.find("\"epochs\": 10") != std::string::npos);
}

TEST_CASE("config files provide run options") {
  const fs::path dir = fresh_dir("gradsynth_cli_cfg");
  fs::create_directories(dir);
  const fs::path cfg = dir / "run.ini";
  std::ofstream(cfg) << "task=dupK\nk=1\npreset=straightline\nrestarts=1\nepochs=10\nseed=1\n"
                     << "out=" << (dir / "results").string() << "\n";
  const CliResult r = call({"run", "--config", cfg.string()});
  REQUIRE(r.rc == 0);
  CHECK(fs::exists(dir / "results" / "run_cti_dupK-k1_g1.json"));
}
