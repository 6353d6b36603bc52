#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "marti/config.hpp"

using namespace marti;

TEST(Config, ParsesKeyValueWithComments) {
  AgentConfig c;
  std::istringstream in(
      "# header\n"
      "p = 9\n"
      "  m=3   # inline\n"
      "\n"
      "l2.max_vocab = 200\n"
      "surprise.threshold = inf\n"
      "disjoint_subsets = true\n"
      "epsilon = 0.125\n");
  apply_config_text(c, in);
  EXPECT_EQ(c.p, 9u);
  EXPECT_EQ(c.m, 3u);
  EXPECT_EQ(c.layer2.max_vocab, 200u);
  EXPECT_TRUE(std::isinf(c.surprise.threshold));
  EXPECT_TRUE(c.disjoint_subsets);
  EXPECT_EQ(c.epsilon, 0.125);
}

TEST(Config, ErrorsCarryLineNumbers) {
  AgentConfig c;
  std::istringstream unknown("p = 4\nbogus = 1\n");
  try {
    apply_config_text(c, unknown, "f.cfg");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("f.cfg:2"), std::string::npos);
  }
  std::istringstream bad_num("p = four\n");
  EXPECT_THROW(apply_config_text(c, bad_num), ConfigError);
  std::istringstream no_eq("p 4\n");
  EXPECT_THROW(apply_config_text(c, no_eq), ConfigError);
  std::istringstream negative("m = -1\n");
  EXPECT_THROW(apply_config_text(c, negative), ConfigError);
  std::istringstream bad_bool("surprise.streak = maybe\n");
  EXPECT_THROW(apply_config_text(c, bad_bool), ConfigError);
}

TEST(Config, EveryKeyRoundTrips) {
  AgentConfig c = default_config("minipong");
  c.surprise.threshold = 1.75;
  c.layer1.decay = 0.3;
  c.defer_inner_reward = true;
  std::istringstream in(config_to_text(c));
  AgentConfig d;
  apply_config_text(d, in);
  EXPECT_EQ(config_to_text(d), config_to_text(c));
  EXPECT_EQ(config_keys().size(), 23u);
}

TEST(Config, ShippedFilesMatchDefaults) {
  for (const std::string env : {"catch", "minipong"}) {
    AgentConfig c;
    apply_config_file(c, std::string(MARTI_SOURCE_DIR) + "/configs/" + env + ".cfg");
    EXPECT_EQ(config_to_text(c), config_to_text(default_config(env))) << env;
  }
  AgentConfig t;
  EXPECT_NO_THROW(apply_config_file(t, std::string(MARTI_SOURCE_DIR) + "/configs/template.cfg"));
}

TEST(Config, TemplateNamesEveryKey) {
  std::ifstream in(std::string(MARTI_SOURCE_DIR) + "/configs/template.cfg");
  std::stringstream ss;
  ss << in.rdbuf();
  for (const auto& k : config_keys()) EXPECT_NE(ss.str().find(k + " ="), std::string::npos) << k;
}

TEST(Config, DefaultsValidate) {
  EXPECT_NO_THROW(default_config("catch").validate());
  EXPECT_NO_THROW(default_config("minipong").validate());
}
