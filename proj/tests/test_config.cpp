#include "fsinc/config.hpp"

#include <gtest/gtest.h>

#include <sstream>

using namespace fsinc;

namespace {

const char* kPhysics =
    "[physics]\n"
    "nu = 0.1\n"
    "m = 1\n"
    "J = 0.02\n"
    "beta_Omega = 1\n"
    "beta_S = 1\n";

IniFile ini_of(const std::string& text) {
  std::istringstream is(text);
  return IniFile::parse(is, "test.ini");
}

std::string config_error(const std::string& text) {
  try {
    resolve_config(ini_of(text));
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ConfigInvalid);
    return e.message();
  }
  return "";
}

}  // namespace

TEST(Ini, ParsesSectionsCommentsAndWhitespace) {
  IniFile f = ini_of("# header\n[a]\n x = 1 ; trailing\n\n[b]\ny=two words\n");
  EXPECT_EQ(f.get("a.x"), "1");
  EXPECT_EQ(f.get("b.y"), "two words");
  EXPECT_EQ(f.entries().size(), 2u);
}

TEST(Ini, RejectsMalformedLines) {
  EXPECT_THROW(ini_of("x = 1\n"), Error);
  EXPECT_THROW(ini_of("[a\nx = 1\n"), Error);
  EXPECT_THROW(ini_of("[a]\njustakey\n"), Error);
  EXPECT_THROW(ini_of("[a]\nx = 1\nx = 2\n"), Error);
  EXPECT_THROW(IniFile::load("/nonexistent/config.ini"), Error);
}

TEST(Config, DefaultsFilledAndRequiredPhysics) {
  RunConfig c = resolve_config(ini_of(kPhysics));
  EXPECT_EQ(c.steps, 50);
  EXPECT_EQ(c.T, 1.0);
  EXPECT_EQ(c.n_theta, 48);
  EXPECT_EQ(c.carleman.lambda, 1.5);
  EXPECT_EQ(c.carleman.T, 1.0);
  EXPECT_EQ(c.epsilon, 1e-6);
  EXPECT_EQ(c.seed, 1u);
  EXPECT_EQ(c.resolved.size(), config_keys().size());
}

TEST(Config, MissingBetaSNamesTheKey) {
  std::string text = kPhysics;
  text.erase(text.find("beta_S"));
  std::string msg = config_error(text);
  EXPECT_NE(msg.find("physics.beta_S"), std::string::npos) << msg;
}

TEST(Config, UnknownKeyRejected) {
  std::string msg = config_error(std::string(kPhysics) + "[control]\nepsilonn = 1\n");
  EXPECT_NE(msg.find("control.epsilonn"), std::string::npos) << msg;
}

TEST(Config, MalformedAndOutOfRangeValuesNameTheKey) {
  EXPECT_NE(config_error(std::string(kPhysics) + "[discretization]\nsteps = ten\n").find("discretization.steps"),
            std::string::npos);
  EXPECT_NE(config_error(std::string(kPhysics) + "[discretization]\nT = -1\n").find("discretization.T"),
            std::string::npos);
  EXPECT_NE(config_error(std::string(kPhysics) + "[carleman]\nN = 3\n").find("carleman.N"), std::string::npos);
  EXPECT_NE(config_error(std::string(kPhysics) + "[carleman]\nprobe = wave\n").find("carleman.probe"),
            std::string::npos);
  EXPECT_NE(config_error(std::string(kPhysics) + "[run]\nseed = -3\n").find("run.seed"), std::string::npos);
  std::string zero_friction = kPhysics;
  zero_friction.replace(zero_friction.find("beta_S = 1"), 10, "beta_S = 0");
  EXPECT_NE(config_error(zero_friction).find("physics.beta_S"), std::string::npos);
  EXPECT_NE(config_error(std::string(kPhysics) + "[sweep]\nparameter = control.nope\n").find("sweep.parameter"),
            std::string::npos);
}

TEST(Config, EnvironmentOverrides) {
  IniFile f = ini_of(kPhysics);
  apply_env_overrides(f, {{"FSINC__control__epsilon", "1e-5"},
                          {"FSINC__geometry__outer_radius", "1.1"},
                          {"FSINC__geometry__control__annulus_r0", "0.45"},
                          {"HOME", "/root"}});
  RunConfig c = resolve_config(f);
  EXPECT_EQ(c.epsilon, 1e-5);
  EXPECT_EQ(c.outer_radius, 1.1);
  EXPECT_EQ(c.control.r0, 0.45);
  IniFile g = ini_of(kPhysics);
  EXPECT_THROW(apply_env_overrides(g, {{"FSINC__control__nothing", "1"}}), Error);
  EXPECT_THROW(apply_env_overrides(g, {{"FSINC__control", "1"}}), Error);
}

TEST(Config, HashIgnoresSeedAndFormatting) {
  RunConfig a = resolve_config(ini_of(std::string(kPhysics) + "[control]\nepsilon = 1e-6\n"));
  RunConfig b = resolve_config(ini_of(std::string(kPhysics) + "[control]\nepsilon = 0.000001\n[run]\nseed = 9\n"));
  RunConfig c = resolve_config(ini_of(std::string(kPhysics) + "[control]\nepsilon = 2e-6\n"));
  EXPECT_EQ(config_hash(a), config_hash(b));
  EXPECT_NE(config_hash(a), config_hash(c));
  EXPECT_NE(config_hash(a, "simulate"), config_hash(a, "control"));
  EXPECT_EQ(config_hash(a).size(), 16u);
}

TEST(Config, SweepValuesSplit) {
  RunConfig c = resolve_config(ini_of(std::string(kPhysics) +
                                      "[sweep]\nparameter = control.epsilon\nvalues = 1e-4, 1e-5 ,1e-6\n"));
  ASSERT_EQ(c.sweep_values.size(), 3u);
  EXPECT_EQ(c.sweep_values[1], "1e-5");
}

TEST(Config, DomainAndMeshFromConfig) {
  RunConfig c = resolve_config(ini_of(std::string(kPhysics) + "[mesh]\nn_theta = 24\nn_r = 6\n"));
  Domain d = c.domain();
  EXPECT_NEAR(d.safety_distance, 0.2, 1e-5);
  Mesh m = c.mesh();
  EXPECT_EQ(m.nv(), 24 * 7);
  RunConfig e = resolve_config(ini_of(std::string(kPhysics) + "[geometry]\nbody.shape = ellipse\nbody.radius_b = 0.1\n"));
  EXPECT_THROW(e.mesh(), Error);
}
