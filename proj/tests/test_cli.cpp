#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

namespace {

namespace fs = std::filesystem;

int run(const std::string& args) {
  const std::string cmd = std::string(PROBSTOP_BIN) + " " + args;
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

fs::path temp_dir() {
  const fs::path dir = fs::temp_directory_path() / "probstop_cli_test";
  fs::create_directories(dir);
  return dir;
}

} // namespace

TEST_CASE("trace estimate on the identity is exact") {
  const fs::path out = temp_dir() / "trace.csv";
  REQUIRE(run("trace --family identity --s 100 --dist rademacher --n 5 --out " +
              out.string()) == 0);
  const std::string text = slurp(out);
  CHECK(text.find("family,s,dist,n,estimate,exact,rel_err") != std::string::npos);
  CHECK(text.find("identity,100,rademacher,5,100,100,0") != std::string::npos);
}

TEST_CASE("probe plan prints the sufficient sizes") {
  const fs::path out = temp_dir() / "plan.txt";
  REQUIRE(run("trace --plan --eps 0.1 --delta 0.05 --out " + out.string()) == 0);
  const std::string text = slurp(out);
  CHECK(text.find("c = 368.887945411") != std::string::npos);
  CHECK(text.find("n_gaussian = 2952") != std::string::npos);
  CHECK(text.find("n_rademacher = 2214") != std::string::npos);
}

TEST_CASE("calibration failure rates stay under delta") {
  const fs::path out = temp_dir() / "calib.csv";
  REQUIRE(run("trace --calibrate --family diag --s 10 --dist gaussian --n 0 "
              "--eps 0.3 --delta 0.2 --trials 300 --out " + out.string()) == 0);
  std::ifstream in(out);
  std::string line, last;
  while (std::getline(in, line))
    if (!line.empty() && line[0] != '#') last = line;
  // last CSV field is the failure rate
  const double rate = std::stod(last.substr(last.rfind(',') + 1));
  CHECK(rate <= 0.2);
}

TEST_CASE("usage errors exit with code 2") {
  CHECK(run("trace --family nonsense --s 4 2>/dev/null") == 2);
  CHECK(run("poisson-bench --sizes 50 2>/dev/null") == 2);
  CHECK(run("no-such-command 2>/dev/null") == 2);
  CHECK(run("invert --config /nonexistent.cfg 2>/dev/null") == 2);
}

TEST_CASE("bench emits one row per size and method") {
  const fs::path out = temp_dir() / "bench.csv";
  REQUIRE(run("poisson-bench --sizes 49 --rho 1e-3 --out " + out.string()) == 0);
  const std::string text = slurp(out);
  CHECK(text.find("s,method,iterations,final_relres") != std::string::npos);
  for (const char* method : {"MR", "CG", "SD", "LSD"})
    CHECK(text.find("49," + std::string(method) + ",") != std::string::npos);
}

TEST_CASE("looser tolerance needs fewer iterations") {
  const fs::path loose_path = temp_dir() / "bench_loose.csv";
  const fs::path tight_path = temp_dir() / "bench_tight.csv";
  REQUIRE(run("poisson-bench --sizes 225 --rho 1e-3 --out " + loose_path.string()) == 0);
  REQUIRE(run("poisson-bench --sizes 225 --rho 1e-7 --out " + tight_path.string()) == 0);
  auto iterations_of = [](const fs::path& path, const std::string& method) {
    std::ifstream in(path);
    std::string line;
    while (std::getline(in, line)) {
      if (line.rfind("225," + method + ",", 0) == 0) {
        const auto first = line.find(',', 4);
        const auto second = line.find(',', first + 1);
        return std::stol(line.substr(first + 1, second - first - 1));
      }
    }
    return -1L;
  };
  for (const std::string method : {"MR", "CG", "SD"})
    CHECK(iterations_of(loose_path, method) < iterations_of(tight_path, method));
}

TEST_CASE("history files carry the per-iteration residuals") {
  const fs::path dir = temp_dir() / "hist";
  REQUIRE(run("poisson-bench --sizes 49 --rho 1e-5 --history " + dir.string() +
              " --out " + (temp_dir() / "bench_hist.csv").string()) == 0);
  const std::string lsd = slurp(dir / "history_LSD_49.csv");
  CHECK(lsd.find("k,relres,alpha") != std::string::npos);
  CHECK(slurp(dir / "history_CG_49.csv").find("k,relres") != std::string::npos);
}

TEST_CASE("adiabatic study reports the drift") {
  const fs::path out = temp_dir() / "ode.csv";
  REQUIRE(run("ode-adiabatic --lambda 1000 --rtol 1e-3 --atol 1e-6 --out " +
              out.string() + " > " + (temp_dir() / "ode_stdout.txt").string()) == 0);
  const std::string text = slurp(out);
  CHECK(text.find("t,q,p,J") != std::string::npos);
  const auto pos = text.find("# drift = ");
  REQUIRE(pos != std::string::npos);
  const double drift = std::stod(text.substr(pos + 10));
  CHECK(drift > 1e-2);
}

TEST_CASE("identical seeds give byte-identical output") {
  const fs::path a = temp_dir() / "det_a.csv";
  const fs::path b = temp_dir() / "det_b.csv";
  const std::string args =
      "trace --family random-psd --s 40 --dist gaussian --n 25 --seed 77 --out ";
  REQUIRE(run(args + a.string()) == 0);
  REQUIRE(run(args + b.string()) == 0);
  const std::string text_a = slurp(a);
  CHECK(text_a == slurp(b));
  CHECK(text_a.find("# seed = 77") != std::string::npos);
}

TEST_CASE("invert runs a small twin experiment end to end") {
  const fs::path dir = temp_dir() / "invert";
  const fs::path cfg = temp_dir() / "small.cfg";
  {
    std::ofstream out(cfg);
    out << "grid = 8\nsources = 8\nnoise = 0.05\nseed = 1\nmax_outer = 60\n";
  }
  const int code = run("invert --config " + cfg.string() + " --out " +
                       dir.string() + " > " + (temp_dir() / "invert_stdout.txt").string());
  REQUIRE(code == 0);

  const auto report = nlohmann::json::parse(slurp(dir / "report.json"));
  CHECK(report["converged"].get<bool>());
  CHECK(report["solve_count"].get<long>() > 0);
  CHECK(report["history"].size() > 0);
  CHECK(report["phi_hat_final"].get<double>() <=
        (1.0 + 0.1) * report["rho"].get<double>());
  CHECK(fs::exists(dir / "model.csv"));
  CHECK(fs::exists(dir / "true_model.csv"));

  // byte-identical reruns
  const fs::path dir2 = temp_dir() / "invert2";
  REQUIRE(run("invert --config " + cfg.string() + " --out " + dir2.string() +
              " > /dev/null") == 0);
  CHECK(slurp(dir / "report.json") == slurp(dir2 / "report.json"));
  CHECK(slurp(dir / "model.csv") == slurp(dir2 / "model.csv"));
}

TEST_CASE("malformed config exits with code 2 and a line number") {
  const fs::path cfg = temp_dir() / "bad.cfg";
  {
    std::ofstream out(cfg);
    out << "grid = 8\nbroken line here\n";
  }
  const fs::path err = temp_dir() / "bad_err.txt";
  CHECK(run("invert --config " + cfg.string() + " 2> " + err.string()) == 2);
  CHECK(slurp(err).find("line 2") != std::string::npos);
}
