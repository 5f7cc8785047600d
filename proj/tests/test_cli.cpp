#include "catch_amalgamated.hpp"

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace fs = std::filesystem;

namespace {

const fs::path kTmp = fs::temp_directory_path() / "convreveal_cli_test";

int run(const std::string& args, std::string* out = nullptr) {
  fs::create_directories(kTmp);
  const fs::path capture = kTmp / "stdout.txt";
  const std::string cmd = std::string("\"") + CONVREVEAL_CLI + "\" " + args + " > \"" + capture.string() +
                          "\" 2> \"" + (kTmp / "stderr.txt").string() + "\"";
  const int rc = std::system(cmd.c_str());
  if (out) {
    std::ifstream in(capture);
    std::ostringstream ss;
    ss << in.rdbuf();
    *out = ss.str();
  }
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string cfg(const char* rel) { return std::string("\"") + CONVREVEAL_CONFIG_DIR + "/" + rel + "\""; }

}  // namespace

TEST_CASE("simulate writes one episode log") {
  const auto out = kTmp / "ep.json";
  REQUIRE(run("simulate --scenario " + cfg("minimal.json") + " --task 1 --seed 4 --out \"" + out.string() + "\"") == 0);
  std::ifstream in(out);
  const auto j = nlohmann::json::parse(in);
  CHECK(j["theta_true"] == 1);
  CHECK(j["rows"].size() == j["outcome"]["ticks"].get<std::size_t>());
}

TEST_CASE("bandit and fit-regret chain through a directory") {
  const auto dir = kTmp / "bandit";
  REQUIRE(run("bandit --human explorer --seeds 40 --horizon 200 --out \"" + dir.string() + "\"") == 0);
  CHECK(fs::exists(dir / "regret.csv"));
  std::string out;
  REQUIRE(run("fit-regret --in \"" + dir.string() + "\"", &out) == 0);
  CHECK(nlohmann::json::parse(out)["model"] == "logarithmic");
}

TEST_CASE("sweep writes metrics and logs") {
  const auto sweep = kTmp / "sweep.json";
  {
    std::ofstream o(sweep);
    o << nlohmann::json{{"locations", nlohmann::json::array({std::string(CONVREVEAL_CONFIG_DIR) + "/minimal.json"})},
                        {"seeds", 4}}
             .dump();
  }
  const auto dir = kTmp / "sweep_out";
  std::string out;
  REQUIRE(run("sweep --config \"" + sweep.string() + "\" --out \"" + dir.string() + "\" --jobs 2", &out) == 0);
  CHECK(out.rfind("location,mode,metric,value\n", 0) == 0);
  CHECK(fs::exists(dir / "metrics.csv"));
  CHECK(fs::exists(dir / "logs.jsonl"));
}

TEST_CASE("configuration errors exit with status 2") {
  CHECK(run("simulate --scenario /nonexistent/scenario.json") == 2);
  CHECK(run("simulate --scenario " + cfg("minimal.json") + " --mode written") == 2);
  CHECK(run("simulate --scenario " + cfg("minimal.json") + " --task 9") == 2);
  CHECK(run("simulate --scenario " + cfg("minimal.json") + " --human robot") == 2);
  CHECK(run("sweep") == 2);
  CHECK(run("sweep --config /nonexistent.json") == 2);
  CHECK(run("bandit --n-arms 1") == 2);
  CHECK(run("fit-regret --in /nonexistent") == 2);
  CHECK(run("serve --scenario " + cfg("minimal.json") + " --addr nope") == 2);
  CHECK(run("frobnicate") == 2);
  CHECK(run("") == 2);

  const auto bad = kTmp / "bad.json";
  {
    std::ofstream o(bad);
    o << "{\"bounds\": {\"min\": [0, 0], \"max\": [1, 1]},\n \"blend_beta\": 1.5 }";
  }
  CHECK(run("simulate --scenario \"" + bad.string() + "\"") == 2);
}

TEST_CASE("help exits cleanly") { CHECK(run("--help") == 0); }

TEST_CASE("cache directory comes from the environment") {
  const auto cache = kTmp / "cache";
  fs::remove_all(cache);
  ::setenv("CONVREVEAL_CACHE_DIR", cache.string().c_str(), 1);
  REQUIRE(run("simulate --scenario " + cfg("minimal.json") + " --out /dev/null") == 0);
  ::unsetenv("CONVREVEAL_CACHE_DIR");
  CHECK(std::distance(fs::directory_iterator(cache), fs::directory_iterator{}) == 2);
}
