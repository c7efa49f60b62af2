#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <sys/wait.h>
#include <unistd.h>

namespace fs = std::filesystem;

namespace {

#ifndef FCDX_CLI_PATH
#error "FCDX_CLI_PATH must point at the built command-line binary"
#endif

int run(const std::string& args) {
  std::string cmd = std::string(FCDX_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  int rc = std::system(cmd.c_str());
  REQUIRE(rc != -1);
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string capture(const std::string& args, int* exit_code = nullptr) {
  std::string tmp = (fs::temp_directory_path() / ("fcdx_cli_out_" + std::to_string(::getpid()))).string();
  std::string cmd = std::string(FCDX_CLI_PATH) + " " + args + " > " + tmp + " 2>&1";
  int rc = std::system(cmd.c_str());
  if (exit_code) *exit_code = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
  std::ifstream in(tmp);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  fs::remove(tmp);
  return text;
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("fcdx_cli_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string str() const { return path.string(); }
};

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("help and missing subcommand") {
  CHECK(run("--help") == 0);
  CHECK(run("") == 2);
  CHECK(run("frobnicate") == 2);
}

TEST_CASE("argument validation exits with usage errors") {
  CHECK(run("gen-cohort --out /tmp/x --n 0 --ambiguity 0.5") == 2);
  CHECK(run("gen-cohort --out /tmp/x --n 4 --ambiguity 1.5") == 2);
  CHECK(run("gen-cohort --n 4 --ambiguity 0.5") == 2);  // --out required
  CHECK(run("train --cohort /tmp/nowhere --fold 7") == 2);
  CHECK(run("eval --cohort /tmp/nowhere --ckpt-dir /tmp/nowhere --n-samples 0 --out /tmp/r.json") == 2);
}

TEST_CASE("missing input files exit with the file error code") {
  TempDir td("io");
  {
    std::ofstream cfg(td.str() + "/t.cfg");
    cfg << "epochs=1\n";
  }
  CHECK(run("train --cohort " + td.str() + "/absent --config " + td.str() + "/t.cfg --out " +
            td.str() + "/out") == 3);
  CHECK(run("infer --volume " + td.str() + "/absent.prvx --ckpt " + td.str() + "/absent.dspc") == 3);
}

TEST_CASE("gen-cohort writes a loadable cohort and its run config") {
  TempDir td("gen");
  int code = 0;
  std::string out = capture("gen-cohort --out " + td.str() + "/c --n 3 --ambiguity 0.2 --seed 5", &code);
  CHECK(code == 0);
  CHECK(out.find("3 records") != std::string::npos);
  CHECK(fs::exists(td.path / "c" / "manifest.jsonl"));
  CHECK(fs::exists(td.path / "c" / "run_config.txt"));
  std::ifstream rc(td.str() + "/c/run_config.txt");
  std::string text((std::istreambuf_iterator<char>(rc)), std::istreambuf_iterator<char>());
  CHECK(text.find("command=gen-cohort") != std::string::npos);
  CHECK(text.find("seed=5") != std::string::npos);
  CHECK(text.find("ambiguity=0.2") != std::string::npos);
}

TEST_CASE("selftest subcommand passes") {
  int code = 0;
  std::string out = capture("selftest", &code);
  CHECK(code == 0);
  CHECK(out.find("all checks passed") != std::string::npos);
  CHECK(out.find("FAIL") == std::string::npos);
}

TEST_CASE("a broken invariant is caught and reported as failure") {
  int code = 0;
  std::string out = capture("selftest --perturb-softmax", &code);
  CHECK(code == 1);
  CHECK(out.find("FAIL") != std::string::npos);
}

}  // TEST_SUITE
