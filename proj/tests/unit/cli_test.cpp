#include "cli.hpp"

#include "viewfield/dataset.hpp"
#include "viewfield/net.hpp"

#include "json.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace viewfield;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code;
  std::string out, err;
};

Outcome run(std::vector<std::string> args) {
  args.insert(args.begin(), "viewfield");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) {
    if (!l.empty()) out.push_back(l);
  }
  return out;
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("viewfield_cli_" + std::to_string(::getpid()));
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  // Small end-to-end pipeline; returns the checkpoint path.
  std::string pipeline(const std::string& tag) {
    const auto scene = path(tag + "city.json"), data = path(tag + "views.csv"), model = path(tag + "model.nvf");
    EXPECT_EQ(run({"gen-scene", "--seed", "7", "--grid", "2", "--out", scene}).code, 0);
    EXPECT_EQ(run({"gen-data", "--scene", scene, "--n", "120", "--strategy", "uniform", "--seed", "7", "--width", "16",
                   "--height", "16", "--out", data})
                  .code,
              0);
    const auto t = run({"train", "--data", data, "--epochs", "2", "--batch", "32", "--out", model});
    EXPECT_EQ(t.code, 0) << t.err;
    return model;
  }

  fs::path dir_;
};

}  // namespace

TEST_F(CliTest, UsageErrorsExitWithOne) {
  EXPECT_EQ(run({}).code, 1);
  EXPECT_EQ(run({"frobnicate"}).code, 1);
  const auto r = run({"gen-scene", "--seed", "7", "--out", path("a.json"), "--bogus"});
  EXPECT_EQ(r.code, 1);
  EXPECT_FALSE(r.err.empty());
  EXPECT_EQ(run({"train", "--data", path("missing.csv"), "--out", path("m.nvf")}).code, 1);
  EXPECT_EQ(run({"gen-scene", "--seed", "x", "--out", path("a.json")}).code, 1);
  EXPECT_EQ(run({"--help"}).code, 0);
}

TEST_F(CliTest, PipelineIsReproducible) {
  const auto a = pipeline("a_"), b = pipeline("b_");
  EXPECT_EQ(slurp(path("a_city.json")), slurp(path("b_city.json")));
  EXPECT_EQ(slurp(path("a_views.csv")), slurp(path("b_views.csv")));
  EXPECT_EQ(slurp(a), slurp(b));
  EXPECT_EQ(load_dataset(path("a_views.csv")).size(), 120u);
  const auto report = nlohmann::json::parse(slurp(path("report.json")));
  EXPECT_EQ(report.at("epoch_loss").size(), 2u);
  EXPECT_TRUE(fs::exists(meta_path(path("a_views.csv"))));
}

TEST_F(CliTest, QueriesOnATrainedModel) {
  const auto model = pipeline("");
  const auto scene = path("city.json"), data = path("views.csv");

  auto q = run({"query", "--model", model, "--viewpoint", "10,20,5,1,0", "--viewpoint", "30,40,2,0,0.1", "--metric",
                "sidewalk / (sidewalk + road)"});
  ASSERT_EQ(q.code, 0) << q.err;
  ASSERT_EQ(lines(q.out).size(), 2u);
  EXPECT_TRUE(nlohmann::json::parse(lines(q.out)[0]).contains("metric"));

  auto inv = run({"inverse", "--model", model, "--target", "tree:0.2-0.4,sky:0.3-0.5", "--plane",
                  "p=0,0,1.7;v1=1,0,0;v2=0,1,0;l=100;L=100", "--n", "10", "--iterations", "5"});
  ASSERT_EQ(inv.code, 0) << inv.err;
  const auto rows = lines(inv.out);
  ASSERT_EQ(rows.size(), 10u);
  double last = -1;
  for (const auto& r : rows) {
    const auto j = nlohmann::json::parse(r);
    EXPECT_GE(j.at("loss").get<double>(), last);
    last = j.at("loss");
  }
  EXPECT_EQ(run({"inverse", "--model", model, "--target", "tree:0.2-"}).code, 1);

  auto ev = run({"eval", "--model", model, "--data", data});
  EXPECT_EQ(ev.code, 0) << ev.err;
  auto fc = run({"facade", "--model", model, "--scene", scene, "--building", "0", "--patch-size", "10"});
  EXPECT_EQ(fc.code, 0) << fc.err;
  auto re = run({"region-error", "--scene", scene, "--model", model, "--side", "60", "--out", path("re.json")});
  EXPECT_EQ(re.code, 0) << re.err;
  EXPECT_TRUE(nlohmann::json::parse(slurp(path("re.json"))).contains("percent_under"));
  auto rd = run({"render", "--scene", scene, "--viewpoint", "10,10,50,0,80", "--degrees", "--width", "32", "--height",
                 "32", "--out", path("v.png")});
  EXPECT_EQ(rd.code, 0) << rd.err;
  EXPECT_EQ(slurp(path("v.png")).substr(1, 3), "PNG");
  EXPECT_EQ(run({"facade", "--model", model, "--scene", scene, "--building", "99999"}).code, 1);
}
