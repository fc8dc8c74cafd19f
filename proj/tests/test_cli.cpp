#include <doctest.h>

#include <cstdlib>
#include <unistd.h>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

const char* kScenario = R"({
  "schema": "scenario/1",
  "seed": 11,
  "n_iters": 40,
  "system": {
    "n_ranks": 8, "ranks_per_domain": 4,
    "b_single": 10e9, "b_cap": 50e9,
    "network": {"latency": 1e-6, "bandwidth": 12.5e9}
  },
  "workload": {
    "kind": "triad", "distances": [1, -1],
    "total_bytes": 8e8, "msg_bytes": 16384
  },
  "boundary": "open",
  "noise": {"kind": "uniform", "intensity": 0.05}
})";

struct Sandbox {
  fs::path dir;
  Sandbox() {
    dir = fs::temp_directory_path() / ("desync_cli_" + std::to_string(::getpid()));
    fs::create_directories(dir);
    std::ofstream(dir / "scenario.json") << kScenario;
  }
  ~Sandbox() { fs::remove_all(dir); }
  std::string path(const std::string& name) const { return (dir / name).string(); }
};

int run_cli(const std::string& args) {
  std::string cmd = std::string(DESYNC_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

}  // namespace

TEST_CASE("run writes trace and metrics, reruns are byte-identical") {
  Sandbox sb;
  int rc = run_cli("run --scenario " + sb.path("scenario.json") + " --out " + sb.path("a"));
  REQUIRE(rc == 0);
  CHECK(fs::exists(sb.path("a/trace.txt")));
  CHECK(fs::exists(sb.path("a/metrics.txt")));
  rc = run_cli("run --scenario " + sb.path("scenario.json") + " --out " + sb.path("b"));
  REQUIRE(rc == 0);
  CHECK(slurp(sb.path("a/trace.txt")) == slurp(sb.path("b/trace.txt")));
  CHECK(slurp(sb.path("a/metrics.txt")) == slurp(sb.path("b/metrics.txt")));

  // A different seed changes the trace.
  rc = run_cli("run --seed 12 --scenario " + sb.path("scenario.json") + " --out " +
               sb.path("c"));
  REQUIRE(rc == 0);
  CHECK(slurp(sb.path("a/trace.txt")) != slurp(sb.path("c/trace.txt")));
}

TEST_CASE("exit codes distinguish config and io errors") {
  Sandbox sb;
  CHECK(run_cli("run --scenario " + sb.path("missing.json") + " --out " + sb.path("x")) == 3);

  std::ofstream(sb.dir / "bad.json") << "{\"schema\": \"scenario/9\"}";
  CHECK(run_cli("run --scenario " + sb.path("bad.json") + " --out " + sb.path("x")) == 1);

  std::ofstream(sb.dir / "mal.json") << "{ nope";
  CHECK(run_cli("run --scenario " + sb.path("mal.json") + " --out " + sb.path("x")) == 1);
}

TEST_CASE("analyze reproduces run metrics from the stored trace") {
  Sandbox sb;
  REQUIRE(run_cli("run --scenario " + sb.path("scenario.json") + " --out " + sb.path("a")) == 0);
  REQUIRE(run_cli("analyze --scenario " + sb.path("scenario.json") + " --trace " +
                  sb.path("a/trace.txt") + " --out " + sb.path("re")) == 0);
  CHECK(slurp(sb.path("re/metrics.txt")) == slurp(sb.path("a/metrics.txt")));
}

TEST_CASE("export-csv emits plot-ready rows") {
  Sandbox sb;
  REQUIRE(run_cli("run --scenario " + sb.path("scenario.json") + " --out " + sb.path("a")) == 0);
  REQUIRE(run_cli("export-csv --trace " + sb.path("a/trace.txt") + " --out " +
                  sb.path("csv")) == 0);
  std::string csv = slurp(sb.path("csv/segments.csv"));
  CHECK(csv.rfind("rank,", 0) == 0);
  CHECK(csv.find("exec") != std::string::npos);
}

TEST_CASE("pd reports the barrier-free speedup") {
  Sandbox sb;
  REQUIRE(run_cli("pd --scenario " + sb.path("scenario.json") + " --out " + sb.path("pd")) == 0);
  std::string out = slurp(sb.path("pd/pd.txt"));
  CHECK(out.find("p_d ") != std::string::npos);
  CHECK(out.find("runtime_barrier_free ") != std::string::npos);
}

TEST_CASE("inject reports wave measurements") {
  Sandbox sb;
  REQUIRE(run_cli("inject --scenario " + sb.path("scenario.json") +
                  " --rank 2 --iteration 2 --seconds 0.05 --out " + sb.path("inj")) == 0);
  std::string out = slurp(sb.path("inj/inject.txt"));
  CHECK(out.find("wave_detected ") != std::string::npos);
  CHECK(out.find("lagger_before ") != std::string::npos);
}

TEST_CASE("sweep runs one point per value and summarizes") {
  Sandbox sb;
  REQUIRE(run_cli("sweep --scenario " + sb.path("scenario.json") +
                  " --param /workload/total_bytes --values 4e8,8e8 --out " +
                  sb.path("sw")) == 0);
  CHECK(fs::exists(sb.path("sw/point_0/metrics.txt")));
  CHECK(fs::exists(sb.path("sw/point_1/metrics.txt")));
  std::string csv = slurp(sb.path("sw/sweep.csv"));
  CHECK(csv.find("400000000") != std::string::npos);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);  // header + 2 rows
}
