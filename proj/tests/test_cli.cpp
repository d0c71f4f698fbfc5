#include "bench.hpp"
#include "fsinc/cli.hpp"

#include <gtest/gtest.h>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace fsinc;
namespace fs = std::filesystem;

namespace {

const std::string kBase =
    "[physics]\n"
    "nu = 0.1\n"
    "m = 1\n"
    "J = 0.02\n"
    "beta_Omega = 1\n"
    "beta_S = 1\n"
    "[mesh]\n"
    "n_theta = 24\n"
    "n_r = 6\n"
    "[discretization]\n"
    "steps = 10\n";

fs::path scratch(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("fsinc_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

fs::path write_config(const fs::path& dir, const std::string& text) {
  fs::path p = dir / "run.ini";
  std::ofstream(p) << text;
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

struct Outcome {
  int code;
  std::string out, err;
};

Outcome run_cli(const std::string& command, const fs::path& config, const fs::path& out,
                const std::vector<std::pair<std::string, std::string>>& env = {}, int threads = 1) {
  CliOptions o;
  o.command = command;
  o.config_path = config.string();
  o.out_dir = out.string();
  o.threads = threads;
  std::ostringstream so, se;
  int code = run(o, env, so, se);
  return {code, so.str(), se.str()};
}

RunConfig config_of(const std::string& text) {
  std::istringstream is(text);
  return resolve_config(IniFile::parse(is));
}

}  // namespace

TEST(Cli, SimulateZeroDataWritesZeroTrajectory) {
  fs::path dir = scratch("zero");
  Outcome r = run_cli("simulate", write_config(dir, kBase), dir / "out");
  ASSERT_EQ(r.code, 0) << r.err;
  fs::path run_dir = r.out.substr(0, r.out.size() - 1);
  EXPECT_EQ(run_dir.parent_path(), dir / "out");
  std::string name = run_dir.filename().string();
  EXPECT_EQ(name.substr(name.size() - 2), "-1");
  std::string traj = slurp(run_dir / "trajectory.csv");
  std::istringstream is(traj);
  std::string line;
  std::getline(is, line);
  EXPECT_EQ(line, "t,h1,h2,theta,l1,l2,omega");
  int rows = 0;
  while (std::getline(is, line)) {
    ++rows;
    EXPECT_EQ(line.substr(line.find(',')), ",0,0,0,0,0,0");
  }
  EXPECT_EQ(rows, 11);
  std::string field = slurp(run_dir / "field.csv");
  EXPECT_EQ(field.rfind("t,x,y,u1,u2,p\n", 0), 0u);
  auto manifest = nlohmann::json::parse(slurp(run_dir / "manifest.json"));
  EXPECT_EQ(manifest["code_version"], code_version());
  EXPECT_EQ(manifest["seed"], 1);
  EXPECT_TRUE(manifest["tolerances"].contains("control.cg_tol"));
  EXPECT_EQ(manifest["config"]["physics.beta_S"], "1");
}

TEST(Cli, ValidationErrorsExitTwo) {
  fs::path dir = scratch("invalid");
  std::string missing = kBase;
  missing.erase(missing.find("beta_S"), std::string("beta_S = 1\n").size());
  Outcome r = run_cli("simulate", write_config(dir, missing), dir / "out");
  EXPECT_EQ(r.code, kExitValidation);
  EXPECT_NE(r.err.find("physics.beta_S"), std::string::npos) << r.err;
  EXPECT_FALSE(fs::exists(dir / "out"));

  EXPECT_EQ(run_cli("simulate", dir / "missing.ini", dir / "out").code, kExitValidation);
  EXPECT_EQ(run_cli("simulate", write_config(dir, kBase), dir / "out", {}, 0).code, kExitValidation);
  EXPECT_EQ(run_cli("simulate", write_config(dir, kBase), dir / "out", {{"FSINC__physics__mass", "2"}}).code,
            kExitValidation);
  EXPECT_EQ(run_cli("sweep", write_config(dir, kBase + "[sweep]\nparameter = control.epsilon\n"), dir / "out").code,
            kExitValidation);
}

TEST(Cli, SolverFailureExitsThree) {
  fs::path dir = scratch("solver");
  // initial offset beyond the collision margin: the nonlinear solve refuses the trajectory
  std::string text = kBase + "[initial]\nh1 = 0.15\n[nonlinear]\nenabled = true\n";
  Outcome r = run_cli("simulate", write_config(dir, text), dir / "out");
  EXPECT_EQ(r.code, kExitSolver) << r.err;
  EXPECT_EQ(exit_code(ErrorKind::CGStalled), kExitSolver);
  EXPECT_EQ(exit_code(ErrorKind::ConfigInvalid), kExitValidation);
}

TEST(Cli, EnvOverrideChangesOutputDirectory) {
  fs::path dir = scratch("env");
  fs::path cfg = write_config(dir, kBase);
  Outcome a = run_cli("simulate", cfg, dir / "out");
  Outcome b = run_cli("simulate", cfg, dir / "out", {{"FSINC__discretization__steps", "5"}});
  ASSERT_EQ(a.code, 0);
  ASSERT_EQ(b.code, 0);
  EXPECT_NE(a.out, b.out);
}

TEST(Cli, ControlCertificateHasRequiredKeys) {
  RunConfig cfg = config_of(kBase + "[initial]\nvelocity_scale = 0.05\n[control]\nepsilon = 1e-3\n");
  Artifacts a = execute("control", cfg);
  auto j = nlohmann::json::parse(a.file("certificate.json"));
  for (const char* key :
       {"terminal_state_norm", "terminal_position_error", "cg_iterations", "epsilon", "control_energy_weighted"})
    EXPECT_TRUE(j.contains(key)) << key;
  EXPECT_EQ(j["epsilon"].get<double>(), 1e-3);
  EXPECT_GT(j["cg_iterations"].get<int>(), 0);
  EXPECT_EQ(a.file("control.csv").rfind("t,x,y,v1,v2\n", 0), 0u);
}

TEST(Cli, EpsilonSweepHasMonotoneTerminalResidual) {
  std::string text = kBase +
                     "[initial]\nvelocity_scale = 0.05\n"
                     "[sweep]\ncommand = control\nparameter = control.epsilon\nvalues = 1e-4, 1e-5, 1e-6\n";
  std::istringstream is(text);
  IniFile ini = IniFile::parse(is);
  Artifacts a = execute_sweep(ini, resolve_config(ini));
  std::istringstream csv(a.file("sweep.csv"));
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line.rfind("value,terminal_state_norm,", 0), 0u) << line;
  std::vector<double> residual;
  while (std::getline(csv, line)) {
    std::stringstream ls(line);
    std::string value, norm;
    std::getline(ls, value, ',');
    std::getline(ls, norm, ',');
    residual.push_back(std::stod(norm));
  }
  ASSERT_EQ(residual.size(), 3u);
  EXPECT_GT(residual[0], residual[1]);
  EXPECT_GT(residual[1], residual[2]);
}

TEST(Cli, ProbeSweepReplaysIndividualRuns) {
  std::string text = kBase + "[sweep]\ncommand = probe-carleman\nparameter = carleman.s\nvalues = 1, 2, 4\n";
  std::istringstream is(text);
  IniFile ini = IniFile::parse(is);
  Artifacts sweep = execute_sweep(ini, resolve_config(ini));
  std::istringstream csv(sweep.file("sweep.csv"));
  std::string header, line;
  std::getline(csv, header);
  EXPECT_EQ(header, "s,lambda,ratio,ratio_minus_one");
  for (const char* s : {"1", "2", "4"}) {
    IniFile one = ini;
    one.set("carleman.s", s);
    Artifacts single = execute("probe-carleman", resolve_config(one));
    std::istringstream rs(single.file("ratio.csv"));
    std::string h, row;
    std::getline(rs, h);
    std::getline(rs, row);
    ASSERT_TRUE(std::getline(csv, line));
    EXPECT_EQ(line, row);
  }
}

TEST(Cli, RepeatedRunsAreByteIdentical) {
  fs::path dir = scratch("repeat");
  fs::path cfg = write_config(dir, kBase + "[initial]\nvelocity_scale = 0.05\n");
  Outcome a = run_cli("simulate", cfg, dir / "a");
  Outcome b = run_cli("simulate", cfg, dir / "b", {}, 4);
  ASSERT_EQ(a.code, 0);
  ASSERT_EQ(b.code, 0);
  fs::path da = a.out.substr(0, a.out.size() - 1), db = b.out.substr(0, b.out.size() - 1);
  EXPECT_EQ(da.filename(), db.filename());
  for (const char* f : {"trajectory.csv", "field.csv"}) EXPECT_EQ(slurp(da / f), slurp(db / f)) << f;
}
