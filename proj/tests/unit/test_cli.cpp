#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "casimir/io.hpp"

using namespace casimir;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("casimir_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// Runs the CLI with stdout and stderr captured next to the scratch directory.
Outcome run(const std::string& args, const fs::path& dir, const std::string& env = "") {
  const fs::path out = dir / "stdout.txt";
  const fs::path err = dir / "stderr.txt";
  const std::string cmd = env + (env.empty() ? "" : " ") + "'" + CASIMIR_CLI_PATH + "' " + args +
                          " > '" + out.string() + "' 2> '" + err.string() + "'";
  const int status = std::system(cmd.c_str());
  Outcome o;
  o.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  o.out = slurp(out);
  o.err = slurp(err);
  return o;
}

std::vector<fs::path> csv_files(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().extension() == ".csv") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  return files;
}

std::string joined(const std::vector<fs::path>& files) {
  std::string s;
  for (const fs::path& f : files) s += "'" + f.string() + "' ";
  return s;
}

}  // namespace

TEST_CASE("simulate writes one file per bias and is byte-reproducible") {
  const fs::path dir = scratch("simulate");
  const Outcome a = run("simulate --stage scan --seed 7 --out '" + (dir / "a").string() + "'", dir);
  REQUIRE(a.code == 0);
  const Outcome b = run("simulate --stage scan --seed 7 --out '" + (dir / "b").string() + "'", dir);
  REQUIRE(b.code == 0);

  const auto fa = csv_files(dir / "a" / "runs");
  const auto fb = csv_files(dir / "b" / "runs");
  REQUIRE(fa.size() == 4);
  REQUIRE(fb.size() == 4);
  for (std::size_t i = 0; i < fa.size(); ++i) {
    CHECK(fa[i].filename() == fb[i].filename());
    CHECK(slurp(fa[i]) == slurp(fb[i]));
  }
  const Outcome c = run("simulate --stage scan --seed 8 --out '" + (dir / "c").string() + "'", dir);
  REQUIRE(c.code == 0);
  CHECK(slurp(csv_files(dir / "c" / "runs")[0]) != slurp(fa[0]));
  fs::remove_all(dir);
}

TEST_CASE("config problems exit 2 and name the key") {
  const fs::path dir = scratch("config");
  std::ofstream(dir / "unknown.json") << R"({"apparatus": {"plate_area_m2": 1.2e-6}})";
  Outcome o = run("simulate --config '" + (dir / "unknown.json").string() + "' --out '" +
                      (dir / "o").string() + "'",
                  dir);
  CHECK(o.code == 2);
  CHECK(o.err.find("apparatus.plate_area_m2") != std::string::npos);

  std::ofstream(dir / "typed.json") << R"({"noise": {"rms_averages": "two"}})";
  o = run("simulate --config '" + (dir / "typed.json").string() + "' --out '" + (dir / "o").string() + "'",
          dir);
  CHECK(o.code == 2);
  CHECK(o.err.find("noise.rms_averages") != std::string::npos);

  std::ofstream(dir / "broken.json") << "{\n  \"seeds\": [1,,2]\n}\n";
  o = run("simulate --config '" + (dir / "broken.json").string() + "' --out '" + (dir / "o").string() + "'",
          dir);
  CHECK(o.code == 2);
  CHECK(o.err.find("line 2") != std::string::npos);

  o = run("simulate --stage nonsense", dir);
  CHECK(o.code == 2);
  fs::remove_all(dir);
}

TEST_CASE("analyze: calibrate on one run is a data error") {
  const fs::path dir = scratch("one_run");
  REQUIRE(run("simulate --stage calibration --seed 3 --out '" + dir.string() + "'", dir).code == 0);
  const auto files = csv_files(dir / "runs");
  REQUIRE(files.size() == 3);
  const Outcome o = run("analyze --mode calibrate '" + files[0].string() + "' --out '" +
                            (dir / "report").string() + "'",
                        dir);
  CHECK(o.code == 4);
  CHECK(!o.err.empty());

  // A file with too few rows is also a data error.
  std::ofstream(dir / "short.csv") << "v_pzt_volt,v_c_mv,t_s,delta_nu2_hz2,sigma_delta_nu2_hz2,d_s_m\n";
  CHECK(run("analyze '" + (dir / "short.csv").string() + "' --out '" + (dir / "r2").string() + "'", dir)
            .code == 4);
  fs::remove_all(dir);
}

TEST_CASE("analyze full on simulated files reports the coefficient") {
  const fs::path dir = scratch("full");
  REQUIRE(run("simulate --stage scan --seed 1 --out '" + dir.string() + "'", dir).code == 0);
  const auto files = csv_files(dir / "runs");
  REQUIRE(files.size() == 4);

  const Outcome o = run("analyze --mode full " + joined(files) + "--out '" + (dir / "report").string() + "'", dir);
  REQUIRE(o.code == 0);
  std::ifstream in(dir / "report" / "report.json");
  const Json j = Json::parse(in);
  const double k_c = j["extraction"]["casimir"]["params"]["k_c_n_m2"].get<double>();
  CHECK(k_c >= 1.04e-27);
  CHECK(k_c <= 1.40e-27);
  CHECK(j["extraction"]["drift"].is_object());
  for (const char* f : {"plots/calibration.csv", "plots/calibration.svg", "plots/residuals.csv",
                        "plots/residuals.svg"}) {
    CHECK_MESSAGE(fs::exists(dir / "report" / f), f);
  }

  // Extract mode carries the n versus chi-square probability trace.
  const Outcome x =
      run("analyze --mode extract " + joined(files) + "--out '" + (dir / "extract").string() + "'", dir);
  REQUIRE(x.code == 0);
  std::ifstream xin(dir / "extract" / "report.json");
  const Json xj = Json::parse(xin);
  const Json& scan = xj["extraction"]["casimir"]["selection_scan"];
  CHECK(scan.size() > 5);
  CHECK(fs::exists(dir / "extract" / "plots" / "selection.csv"));
  CHECK(xj["extraction"]["drift"].is_null());
  fs::remove_all(dir);
}

TEST_CASE("reproduce exits 0 and prints the comparison") {
  const fs::path dir = scratch("reproduce");
  const Outcome o = run("reproduce --seed 1 --out '" + (dir / "out").string() + "'", dir);
  CHECK(o.code == 0);
  CHECK(o.out.find("1.22") != std::string::npos);
  CHECK(fs::exists(dir / "out" / "report.json"));
  CHECK(fs::exists(dir / "out" / "summary.txt"));
  CHECK(fs::exists(dir / "out" / "runs"));
  fs::remove_all(dir);
}

TEST_CASE("list-defaults and the output directory override") {
  const fs::path dir = scratch("defaults");
  Outcome o = run("--list-defaults", dir);
  CHECK(o.code == 0);
  CHECK(o.out.find("138.275") != std::string::npos);
  CHECK(run("reproduce --list-defaults", dir).out == o.out);

  const fs::path env_dir = dir / "from_env";
  o = run("simulate --stage cancellation --seed 2", dir, "CASIMIR_OUT_DIR='" + env_dir.string() + "'");
  CHECK(o.code == 0);
  CHECK(csv_files(env_dir / "runs").size() == 1);

  // An explicit flag wins over the environment.
  const fs::path flag_dir = dir / "from_flag";
  o = run("simulate --stage cancellation --seed 2 --out '" + flag_dir.string() + "'", dir,
          "CASIMIR_OUT_DIR='" + env_dir.string() + "_unused'");
  CHECK(o.code == 0);
  CHECK(csv_files(flag_dir / "runs").size() == 1);
  CHECK(!fs::exists(env_dir.string() + "_unused"));
  fs::remove_all(dir);
}
