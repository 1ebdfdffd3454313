#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "lrm/io.hpp"

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace lrm;
namespace fs = std::filesystem;

namespace {

const fs::path kRoot = fs::temp_directory_path() / "lrm_test_cli";

struct Run {
  int code = -1;
  std::string out;
};

// runs the CLI in kRoot with stdout and stderr captured
Run cli(const std::string& args) {
  fs::create_directories(kRoot);
  const fs::path log = kRoot / "last.log";
  const std::string cmd = "cd '" + kRoot.string() + "' && '" LRM_CLI_PATH "' " + args + " > '" + log.string() + "' 2>&1";
  const int st = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
  std::ifstream in(log);
  std::stringstream ss;
  ss << in.rdbuf();
  r.out = ss.str();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// a small scene: k = 10, beta = 0.04
void write_small_config() {
  fs::create_directories(kRoot);
  std::ofstream(kRoot / "small.json") << R"({
  "scenario": "cli-test",
  "scales": {"eta": 0.6283185307179586, "beta": 0.04, "alpha": 0.005},
  "solver": {"truncation": [-0.3, 0.3, -0.3, 0.2], "sponge_width": 1.0},
  "source": {"x": 0.0, "z": 0.1, "width": 0.04},
  "detector": [-0.25, 0.25, 0.05, 0.15],
  "ensemble": {"seed_base": 10, "count": 4, "test_functions": [[0.0, 0.1, 0.03]]},
  "covariance": {"method": "analytic"},
  "transport": {"n_theta": 16, "stride": 4, "window": [-0.3, 0.3, -0.2, 0.2], "window_h": 0.02}
})";
}

}  // namespace

TEST_CASE("usage and config errors exit with 2") {
  write_small_config();
  CHECK(cli("no-such-command").code == 2);
  Run r = cli("solve -c small.json --set foo.bar=1");
  CHECK(r.code == 2);
  CHECK(r.out.find("/foo/bar") != std::string::npos);
  r = cli("solve -c small.json --set scales.beta=\\\"x\\\"");
  CHECK(r.code == 2);
  r = cli("solve -c missing.json");
  CHECK(r.code == 2);
  r = cli("solve -c small.json --set ensemble.count=2.5");
  CHECK(r.code == 2);
}

TEST_CASE("missing upstream artifacts exit with 3") {
  write_small_config();
  fs::remove_all(kRoot / "empty");
  Run r = cli("clt-test -c small.json -o empty");
  CHECK(r.code == 3);
  CHECK(r.out.find("missing ensemble") != std::string::npos);
  r = cli("transport -c small.json -o empty");
  CHECK(r.code == 3);
  r = cli("correlation -c small.json -o empty");
  CHECK(r.code == 3);
}

TEST_CASE("schema is JSON and rejects unknown keys") {
  const Run r = cli("schema");
  REQUIRE(r.code == 0);
  const json s = json::parse(r.out);
  CHECK(s.at("additionalProperties") == false);
  CHECK(s.at("properties").contains("scales"));
  CHECK(s.at("properties").at("ensemble").at("properties").at("count").at("type") == "integer");
  const Run d = cli("schema --defaults");
  REQUIRE(d.code == 0);
  CHECK(json::parse(d.out).at("medium").at("intensity") == 0.5);
}

TEST_CASE("solve: artifacts, manifest, sigma = 0 is bitwise") {
  write_small_config();
  fs::remove_all(kRoot / "s");
  Run r = cli("solve -c small.json -o s --seed 3");
  REQUIRE_MESSAGE(r.code == 0, r.out);
  const json m = read_json((kRoot / "s" / "manifest_solve.json").string());
  CHECK(m.at("command") == "solve");
  CHECK(m.at("version") == LRM_VERSION);
  CHECK(m.at("seeds") == json::array({3}));
  CHECK(m.at("wall_time_s").get<double>() >= 0);
  CHECK(m.at("config_hash").get<std::string>().size() == 16);
  CHECK(m.at("physics_hash").get<std::string>().size() == 16);
  for (const auto& [rel, sum] : m.at("artifacts").items()) {
    const std::string bytes = slurp(kRoot / "s" / rel);
    CHECK_MESSAGE(hex64(fnv1a64(bytes.data(), bytes.size())) == sum.get<std::string>(), rel);
  }
  const ComplexField u = read_field((kRoot / "s" / "fields" / "u").string());
  const ComplexField ub = read_field((kRoot / "s" / "fields" / "u_beta_3").string());
  CHECK((ub.values.array() != u.values.array()).any());
  const json rep = read_json((kRoot / "s" / "solve_report.json").string());
  CHECK(rep.contains("regime"));

  fs::remove_all(kRoot / "s0");
  r = cli("solve -c small.json -o s0 --seed 3 --set medium.intensity=0");
  REQUIRE_MESSAGE(r.code == 0, r.out);
  const ComplexField u0 = read_field((kRoot / "s0" / "fields" / "u").string());
  const ComplexField ub0 = read_field((kRoot / "s0" / "fields" / "u_beta_3").string());
  CHECK((ub0.values.array() == u0.values.array()).all());
}

TEST_CASE("LRM_OUTPUT_ROOT prefixes relative output paths") {
  write_small_config();
  fs::remove_all(kRoot / "root");
  const Run r = cli("generate-medium -c small.json -o gm --count 2 --set medium.intensity=0.2; LRM_OUTPUT_ROOT='" +
                    (kRoot / "root").string() + "' '" LRM_CLI_PATH "' generate-medium -c small.json -o gm --count 2");
  CHECK(r.code == 0);
  CHECK(fs::exists(kRoot / "root" / "gm" / "medium" / "summary.csv"));
  CHECK(fs::exists(kRoot / "root" / "gm" / "manifest_generate-medium.json"));
}

TEST_CASE("ensemble commands: jobs invariance, too few members for the CLT test") {
  write_small_config();
  fs::remove_all(kRoot / "e1");
  fs::remove_all(kRoot / "e3");
  Run r = cli("corrector-stats -c small.json -o e1");
  CHECK(r.code == 3);
  for (const char* d : {"e1", "e3"}) {
    r = cli(std::string("solve -c small.json -o ") + d);
    REQUIRE_MESSAGE(r.code == 0, r.out);
  }
  r = cli("corrector-stats -c small.json -o e1 -j 1");
  REQUIRE_MESSAGE(r.code == 0, r.out);
  r = cli("corrector-stats -c small.json -o e3 -j 3");
  REQUIRE_MESSAGE(r.code == 0, r.out);
  CHECK(slurp(kRoot / "e1" / "members.csv") == slurp(kRoot / "e3" / "members.csv"));
  const json m = read_json((kRoot / "e1" / "manifest_corrector-stats.json").string());
  CHECK(m.at("seeds").size() == 4);

  r = cli("clt-test -c small.json -o e1");
  CHECK(r.code == 2);

  // a different physics configuration does not reuse the stored u
  r = cli("transport -c small.json -o e1 --set stack.n1_sq=1.35");
  CHECK(r.code == 3);
  r = cli("transport -c small.json -o e1");
  CHECK_MESSAGE(r.code == 0, r.out);
  CHECK(fs::exists(kRoot / "e1" / "transport" / "flux.json"));
  const json flux = read_json((kRoot / "e1" / "transport" / "flux.json").string());
  CHECK(flux.at("imbalance").get<double>() < 1e-10);
  r = cli("correlation -c small.json -o e1");
  CHECK_MESSAGE(r.code == 0, r.out);
  CHECK(slurp(kRoot / "e1" / "correlation.csv").rfind("x1,z1,x2,z2,re,im,u1u2_re,u1u2_im\n", 0) == 0);
}
