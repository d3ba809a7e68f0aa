#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "commands.hpp"
#include "config.hpp"
#include "csv.hpp"
#include "doctest.h"
#include "dpm/simulation.hpp"

using namespace dpm;
using namespace dpm::cli;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("dpm_unit_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

std::map<std::string, std::string> key_values(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find(" = ");
    if (eq != std::string::npos) kv[line.substr(0, eq)] = line.substr(eq + 3);
  }
  return kv;
}

Config parse(const std::string& text) {
  std::istringstream in(text);
  return Config::parse(in, "test.cfg");
}

struct Run {
  int code;
  std::string out;
};

Run shell(const std::string& args) {
  const std::string cmd = std::string(DPM_CLI_PATH) + " " + args + " 2>&1";
  FILE* p = popen(cmd.c_str(), "r");
  REQUIRE(p != nullptr);
  std::string out;
  char buf[4096];
  size_t n;
  while ((n = fread(buf, 1, sizeof buf, p)) > 0) out.append(buf, n);
  const int status = pclose(p);
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

// rescaled estimate of the fixture below, recorded on the first run
constexpr double kGoldenGamma = 1.14535173112432;
constexpr double kGoldenBeta = 0.29256411171410984;

const char* kEstimateConfig =
    "model.family = arp\n"
    "model.p = 1\n"
    "model.T = 4\n"
    "data.N = 2000\n"
    "seed = 3\n"
    "instruments.atoms = const, y0:1\n"
    "estimator.kind = rescaled\n";

} // namespace

TEST_CASE("configuration parsing") {
  const Config c = parse("# comment\nmodel.p = 2   # trailing\n\nmodel.T=5\n");
  CHECK(c.get_int("model.p") == 2);
  CHECK(c.get_int("model.T") == 5);
  CHECK(c.get("estimator.kind") == "rescaled");
  CHECK_THROWS_AS(parse("model.q = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse("model.p\n"), ConfigError);
  try {
    parse("model.p = 1\nseed = 2\nmodel.p = 3\n");
    FAIL("duplicate accepted");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("test.cfg:3") != std::string::npos);
    CHECK(std::string(e.what()).find("line 1") != std::string::npos);
  }
  CHECK_THROWS_AS(parse("model.p = two\n").get_int("model.p"), ConfigError);
  CHECK_THROWS_AS(parse("estimator.variance = maybe\n").get_bool("estimator.variance"), ConfigError);
  CHECK_THROWS_AS(model_spec(parse("model.family = probit\n")), ConfigError);
  CHECK_THROWS_AS(model_spec(parse("model.p = 0\n")), ConfigError);
  // every key has a documented default and the dump parses back
  const Config d = parse(c.dump());
  CHECK(d.dump() == c.dump());
  for (const auto& k : known_keys()) CHECK(std::string(k.doc).size() > 0);
}

TEST_CASE("design blocks fix the model") {
  CHECK(model_spec(parse("data.design = ar3\n")).p == 3);
  CHECK(model_spec(parse("data.design = var1\n")).family == Family::VAR1);
  CHECK_THROWS_AS(model_spec(parse("data.design = ar9\n")), ConfigError);
  const ModelSpec spec = ModelSpec::arp(1, 3);
  CHECK(parse_theta(spec, "0.5, 0.25", Theta::zeros(spec)).beta[0] == 0.25);
  CHECK_THROWS_AS(parse_theta(spec, "0.5", Theta::zeros(spec)), ConfigError);
}

TEST_CASE("panel CSV round trip") {
  for (const auto& spec : {ModelSpec::arp(3, 5, 2), ModelSpec::var1(2, 3, 1), ModelSpec::mar1(2, 3, 1), ModelSpec::net3(3, 1)}) {
    const Dataset data = simulate(default_design(spec, 50, 9));
    std::ostringstream out;
    write_panel(out, data);
    std::istringstream in(out.str());
    const Dataset back = read_panel(in, spec, "mem");
    REQUIRE(back.units.size() == data.units.size());
    for (size_t i = 0; i < data.units.size(); ++i) {
      CHECK(back.units[i].y0 == data.units[i].y0);
      CHECK(back.units[i].y == data.units[i].y);
      CHECK(back.units[i].x == data.units[i].x);
      if (spec.family != Family::ARP) CHECK(back.units[i].x_pre == data.units[i].x_pre);
    }
    std::ostringstream again;
    write_panel(again, back);
    CHECK(again.str() == out.str());
  }
}

TEST_CASE("panel CSV errors name the line") {
  const ModelSpec spec = ModelSpec::arp(1, 2, 1);
  auto fails_with = [&](const std::string& text, const std::string& needle) {
    std::istringstream in(text);
    try {
      read_panel(in, spec, "p.csv");
      FAIL("accepted: " << text);
    } catch (const DataError& e) {
      CHECK_MESSAGE(std::string(e.what()).find(needle) != std::string::npos, e.what());
    }
  };
  const std::string head = "unit,time,y,x_1_1\n";
  fails_with("unit,time,y\n", "p.csv:1:");
  fails_with(head + "a,0,1,\na,1,0,0.5\na,2,1\n", "p.csv:4:");
  fails_with(head + "a,0,1,\na,1,0,abc\na,2,1,0\n", "p.csv:3:");
  fails_with(head + "a,0,1,\na,1,2,0.1\na,2,1,0\n", "p.csv:3:");
  fails_with(head + "a,0,1,\na,1,0,0.1\na,1,1,0\n", "first on line 3");
  fails_with(head + "a,0,1,\na,1,0,0.1\n", "no row for time 2");
  fails_with(head + "a,0,1,\na,1,0,0.1\na,3,1,0\n", "p.csv:4:");
  fails_with(head + "a,0,1,\na,1,0,\na,2,1,0\n", "p.csv:3:");
  fails_with(head, "no data rows");
  std::istringstream ok(head + "b,2,1,0.25\nb,0,1,\nb,1,0,-1e-3\n");
  const Dataset d = read_panel(ok, spec, "ok.csv");
  CHECK(d.units[0].y == std::vector<int>{0, 1});
  CHECK(d.units[0].x == std::vector<double>{-1e-3, 0.25});
}

TEST_CASE("count command") {
  Config c = parse("model.p = 1\nmodel.T = 4\noutput.dir = " + scratch("count").string() + "\n");
  std::ostringstream out, err;
  CHECK(run_command("count", c, out, err) == kOk);
  CHECK(out.str().substr(0, out.str().find('\n')) == "8");
  const Run r = shell("count --p 1 --T 4 --out " + scratch("count_cli").string());
  CHECK(r.code == 0);
  CHECK(r.out.substr(0, r.out.find('\n')) == "8");
}

TEST_CASE("verify command on the default model") {
  const fs::path dir = scratch("verify");
  std::ostringstream out, err;
  CHECK(run_command("verify", parse("output.dir = " + dir.string() + "\n"), out, err) == kOk);
  CHECK(err.str().empty());
  CHECK(fs::exists(dir / "verify.txt"));
  CHECK(fs::exists(dir / "manifest.txt"));
}

TEST_CASE("estimate command reproduces the recorded fixture") {
  const fs::path dir = scratch("estimate");
  Config c = parse(std::string(kEstimateConfig) + "output.dir = " + dir.string() + "\n");
  std::ostringstream out, err;
  REQUIRE(run_command("estimate", c, out, err) == kOk);
  const auto kv = key_values(slurp(dir / "results.txt"));
  CHECK(std::abs(std::stod(kv.at("theta.gamma.1")) - kGoldenGamma) < 1e-6);
  CHECK(std::abs(std::stod(kv.at("theta.beta.1")) - kGoldenBeta) < 1e-6);
  CHECK(kv.at("converged") == "true");
  CHECK(slurp(dir / "manifest.txt").find("instruments.atoms = const, y0:1") != std::string::npos);
}

TEST_CASE("simulated file and in-memory data estimate identically") {
  const fs::path sim = scratch("roundtrip_sim"), a = scratch("roundtrip_a"), b = scratch("roundtrip_b");
  std::ostringstream out, err;
  REQUIRE(run_command("simulate", parse(std::string(kEstimateConfig) + "output.dir = " + sim.string() + "\n"), out, err) ==
          kOk);
  REQUIRE(run_command("estimate", parse(std::string(kEstimateConfig) + "output.dir = " + a.string() + "\n"), out, err) ==
          kOk);
  REQUIRE(run_command("estimate",
                      parse(std::string(kEstimateConfig) + "output.dir = " + b.string() + "\ndata.input = " +
                            (sim / "data.csv").string() + "\n"),
                      out, err) == kOk);
  CHECK(slurp(a / "results.txt") == slurp(b / "results.txt"));
}

TEST_CASE("exit codes by error class") {
  const fs::path exit_dir = scratch("exit");
  const std::string out = " --out " + exit_dir.string();
  CHECK(shell("count --set model.q=1" + out).code == 2);
  CHECK(shell("count --set model.p" + out).code == 2);
  CHECK(shell("count --config /nonexistent/dpm.cfg" + out).code == 2);
  CHECK(shell("frobnicate").code == 2);
  const fs::path bad = scratch("exit_csv") / "bad.csv";
  {
    std::ofstream f(bad);
    f << "unit,time,y,x_1_1\n1,0,0,\n1,1,1,0.2\n1,2,5,0.1\n1,3,0,0\n";
  }
  const Run data_err = shell("estimate --set data.input=" + bad.string() + out);
  CHECK(data_err.code == 3);
  CHECK(data_err.out.rfind("error: DataError:", 0) == 0);
  CHECK(data_err.out.find("bad.csv:4:") != std::string::npos);
  const Run nc = shell("estimate --set estimator.max_iter=1 --set estimator.gtol=0 --set estimator.xtol=0 --set estimator.ftol=0 --set estimator.kind=identity --n 500" + out);
  CHECK(nc.code == 4);
  CHECK(nc.out.find("error: NotConverged:") != std::string::npos);
  CHECK(fs::exists(exit_dir / "results.txt"));
  const Run ok = shell("verify --set verify.draws=3" + out);
  CHECK(ok.code == 0);
  std::ostringstream o, e;
  const Config var = parse("model.family = var1\noutput.dir = " + scratch("exit_var").string() +
                           "\ndata.N = 300\ncounterfactual.theta = 1,0.5,0.5,1,0.5,0.5\ncounterfactual.path = 1,1\n"
                           "counterfactual.from = 1\n");
  CHECK(run_command("ame", var, o, e) == kConfigError);
  CHECK(e.str().rfind("error: DomainError:", 0) == 0);
}
