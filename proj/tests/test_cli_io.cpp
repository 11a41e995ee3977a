#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "rvp/cli_io.hpp"
#include "rvp/errors.hpp"

using namespace rvp;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  fs::path d = fs::temp_directory_path() / ("rvp_cli_test_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

fs::path write_file(const fs::path& p, const std::string& text) {
  std::ofstream(p, std::ios::binary) << text;
  return p;
}

struct CliResult {
  int status;
  std::string err;
};

CliResult run_cli(const std::string& args, const fs::path& dir) {
  const fs::path err = dir / "stderr.txt";
  const std::string cmd = std::string(RVP_CLI_PATH) + " " + args + " 2> " + err.string() + " > /dev/null";
  const int raw = std::system(cmd.c_str());
  return {WIFEXITED(raw) ? WEXITSTATUS(raw) : -1, slurp(err)};
}

std::string schema_error(const std::string& yaml) {
  try {
    cli::load_config_text(yaml, "cfg.yaml");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::SchemaError);
    return e.what();
  }
  return "";
}

const char* kSmallState = "steady:\n  nodes: 160\n  levels: 400\n";

}  // namespace

TEST_CASE("config parsing and validation") {
  SUBCASE("defaults fill every section") {
    const auto c = cli::load_config_text("");
    CHECK(c["seed"] == 20240611);
    CHECK(c["profile"]["family"] == "polytrope");
    CHECK(c["profile"]["e_Q"].get<double>() == -0.1);
    CHECK(c["steady"]["nodes"] == 400);
    CHECK(c["dynamics"]["deltas"].size() == 3);
    CHECK_FALSE(c["functionals"].contains("C_p"));
  }
  SUBCASE("JSON is accepted") {
    const auto c = cli::load_config_text(R"({"profile": {"kappa": 2.5}, "seed": 7})");
    CHECK(c["profile"]["kappa"].get<double>() == 2.5);
    CHECK(c["seed"] == 7);
  }
  SUBCASE("violations name the line, column and key") {
    CHECK(schema_error("profile:\n  kappa: 1\n  k: abc\n").find("cfg.yaml:3:6: profile.k: 'abc' is not a number") !=
          std::string::npos);
    CHECK(schema_error("seed: 1\nsteady:\n  nodse: 10\n").find("cfg.yaml:3:3: steady.nodse: unknown key") != std::string::npos);
    CHECK(schema_error("steady:\n  far_tol: 0\n").find("cfg.yaml:2:12: steady.far_tol") != std::string::npos);
    CHECK(schema_error("steady:\n  nodes: 12.5\n").find(":2:10:") != std::string::npos);
    CHECK(schema_error("dynamics:\n  integrator: euler\n").find("is not one of") != std::string::npos);
    CHECK(schema_error("dynamics:\n  deltas: []\n").find("at least 1") != std::string::npos);
    CHECK(schema_error("profile: [1, 2]\n").find("cfg.yaml:1:10: profile: expected a mapping") != std::string::npos);
    CHECK(schema_error("profile:\n  family: table\n  table_e: [-1]\n").find("cfg.yaml:2:3: profile:") != std::string::npos);
  }
  SUBCASE("syntax errors carry the parser position") {
    CHECK(schema_error("steady:\n  nodes: [1, 2\n").find("cfg.yaml:3:") != std::string::npos);
  }
  SUBCASE("all tolerances must be positive") {
    for (const char* key : {"steady:\n  far_tol: -1e-8\n", "rearrange:\n  tolerance: 0\n", "functionals:\n  tolerance: 0\n",
                            "dynamics:\n  midpoint_tol: 0\n"})
      CHECK_FALSE(schema_error(key).empty());
  }
}

TEST_CASE("hashing and number formatting") {
  CHECK(cli::sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  const auto a = cli::load_config_text("seed: 3\nprofile: {k: 2}\n"), b = cli::load_config_text("profile:\n  k: 2.0\nseed: 3\n");
  CHECK(cli::config_hash(a) == cli::config_hash(b));
  CHECK(cli::config_hash(a) != cli::config_hash(cli::load_config_text("seed: 4\nprofile: {k: 2}\n")));
  for (double x : {0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23}) CHECK(std::stod(cli::fmt17(x)) == x);
  CHECK(cli::fmt17(0.1) == "0.10000000000000001");
}

TEST_CASE("malformed config exits with status 2 and a line number") {
  const fs::path d = scratch("malformed");
  const fs::path cfg = write_file(d / "bad.yaml", "seed: 1\nsteady:\n  nodes: many\n");
  const auto r = run_cli("steady-state --config " + cfg.string() + " --out " + (d / "out").string(), d);
  CHECK(r.status == 2);
  CHECK(r.err.find("bad.yaml:3:10: steady.nodes") != std::string::npos);
}

TEST_CASE("vanishing profile exits with status 3 and names the module error") {
  const fs::path d = scratch("empty");
  const fs::path cfg = write_file(d / "zero.yaml", "profile:\n  kappa: 0\n");
  const auto r = run_cli("steady-state --config " + cfg.string() + " --out " + (d / "out").string(), d);
  CHECK(r.status == 3);
  CHECK(r.err.find("EmptySupport") != std::string::npos);
  CHECK(r.err.find("steady_state") != std::string::npos);
  const auto m = nlohmann::json::parse(slurp(d / "out" / "manifest.json"));
  CHECK(m["exit_status"] == 3);
}

TEST_CASE("steady-state archive and manifest; reruns are byte-identical") {
  const fs::path d = scratch("steady");
  const fs::path cfg = write_file(d / "c.yaml", kSmallState);
  REQUIRE(run_cli("steady-state --config " + cfg.string() + " --out " + (d / "a").string(), d).status == 0);
  REQUIRE(run_cli("steady-state --config " + cfg.string() + " --out " + (d / "b").string(), d).status == 0);
  for (const char* f : {"phi_Q.csv", "rho_Q.csv", "Q_star.csv", "levels.csv", "steady_state.json", "manifest.json"})
    CHECK(slurp(d / "a" / f) == slurp(d / "b" / f));
  const auto m = nlohmann::json::parse(slurp(d / "a" / "manifest.json"));
  CHECK(m["config_sha256"] == cli::config_hash(cli::load_config_text(kSmallState)));
  CHECK(m["grids"].size() == 1);
  CHECK(m["outputs"].size() == 5);
  for (const auto& o : m["outputs"]) CHECK(o["sha256"] == cli::sha256_hex(slurp(d / "a" / o["file"].get<std::string>())));
  // 17 significant digits in every float cell
  std::istringstream phi(slurp(d / "a" / "phi_Q.csv"));
  std::string line;
  std::getline(phi, line);
  CHECK(line == "r,value");
  std::getline(phi, line);
  const std::string v = line.substr(line.find(',') + 1);
  CHECK(v.find('.') != std::string::npos);
  CHECK(v.size() >= 18);
  const auto st = nlohmann::json::parse(slurp(d / "a" / "steady_state.json"));
  CHECK(st["R_Q"].get<double>() > 0.0);
  CHECK(st["build_config_sha256"].get<std::string>().size() == 64);
}

TEST_CASE("evolve trace is reproducible and the seed flag is recorded") {
  const fs::path d = scratch("evolve");
  const fs::path cfg =
      write_file(d / "c.yaml", std::string(kSmallState) + "dynamics:\n  particles: 1500\n  horizon: 0.5\n  record_every: 5\n");
  const std::string base = "evolve --config " + cfg.string() + " --seed 99 --threads 1 --out ";
  REQUIRE(run_cli(base + (d / "a").string(), d).status == 0);
  REQUIRE(run_cli(base + (d / "b").string(), d).status == 0);
  const std::string t = slurp(d / "a" / "trace.csv");
  CHECK(t == slurp(d / "b" / "trace.csv"));
  CHECK(t.rfind("t,H,mass,l1,lp,kinetic,distance\n", 0) == 0);
  const auto m = nlohmann::json::parse(slurp(d / "a" / "manifest.json"));
  CHECK(m["seeds"]["seed"] == 99);
  CHECK(m["config"]["seed"] == 99);
  CHECK(m["grids"].size() == 3);
  // a different seed samples different particles
  REQUIRE(run_cli("evolve --config " + cfg.string() + " --seed 100 --threads 1 --out " + (d / "c").string(), d).status == 0);
  CHECK(slurp(d / "c" / "trace.csv") != t);
}

TEST_CASE("coercivity report and refinement trace") {
  const fs::path d = scratch("coercivity");
  const fs::path cfg = write_file(d / "c.yaml", std::string(kSmallState) + "coercivity:\n  basis: 12\n  doublings: 1\n");
  REQUIRE(run_cli("coercivity --config " + cfg.string() + " --out " + (d / "o").string(), d).status == 0);
  const auto j = nlohmann::json::parse(slurp(d / "o" / "coercivity.json"));
  CHECK(j["trace"].size() == 2);
  CHECK(j["lambda_min"].get<double>() > 0.0);
  CHECK(slurp(d / "o" / "refinement.csv").rfind("dimension,lambda_min\n12,", 0) == 0);
}

TEST_CASE("verify runs the selected acceptance criteria and writes a summary") {
  const fs::path d = scratch("verify");
  const fs::path cfg = write_file(d / "c.yaml", "verify:\n  criteria: [1, 2]\n");
  const auto r = run_cli("verify --config " + cfg.string() + " --out " + (d / "o").string(), d);
  CHECK(r.status == 0);
  const auto j = nlohmann::json::parse(slurp(d / "o" / "verify.json"));
  CHECK(j["total"] == 2);
  CHECK(j["passed"] == 2);
  CHECK(j["criteria"][0]["id"] == 1);
  CHECK(j["criteria"][1]["metrics"].size() > 0);
  CHECK(r.err.find("PASS  1") != std::string::npos);
}
