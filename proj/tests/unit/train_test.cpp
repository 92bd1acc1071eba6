#include "viewfield/error.hpp"
#include "viewfield/random.hpp"
#include "viewfield/train.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

using namespace viewfield;

namespace {

const Aabb kBox{Vec3(0, 0, 0), Vec3(100, 100, 20)};

std::vector<ViewSample> toy_data(std::size_t n, int k, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<ViewSample> out(n);
  for (auto& s : out) {
    s.viewpoint = {rng.uniform(0, 100), rng.uniform(0, 100), rng.uniform(0, 20), rng.uniform(0, 2 * std::numbers::pi),
                   rng.uniform(-1, 1)};
    double sum = 0;
    s.m_gt.m.resize(k);
    for (auto& v : s.m_gt.m) sum += v = rng.uniform();
    for (auto& v : s.m_gt.m) v /= sum;
  }
  return out;
}

ModelParams toy_model(int k, std::uint64_t seed = 1) {
  ModelParams m = init_model(seed, k);
  m.meta.normalizer = Normalizer(kBox);
  return m;
}

}  // namespace

TEST(Train, MemorizesSixteenSamples) {
  const auto data = toy_data(16, 3, 5);
  TrainConfig c;
  c.epochs = 2000;
  c.batch_size = 16;
  c.seed = 3;
  const auto r = train(data, c, toy_model(3));
  ASSERT_EQ(r.report.epoch_loss.size(), 2000u);
  EXPECT_LT(r.report.epoch_loss.back(), 1e-3);
  EXPECT_LT(evaluate_rmse(r.model, data), std::sqrt(1e-3 / 3));
  // Adam is not monotone epoch to epoch, so compare 50-epoch window means
  // until the loss reaches float precision.
  const auto& loss = r.report.epoch_loss;
  auto window = [&](std::size_t start) {
    double sum = 0;
    for (std::size_t e = start; e < start + 50; ++e) sum += loss[e];
    return sum / 50;
  };
  for (std::size_t start = 100; start + 50 <= loss.size() && window(start - 50) > 1e-10; start += 50) {
    EXPECT_LT(window(start), window(start - 50)) << "window starting at epoch " << start;
  }
}

TEST(Train, OneEpochIsOnePass) {
  const auto data = toy_data(100, 4, 1);
  TrainConfig c;
  c.epochs = 1;
  c.batch_size = 32;
  const auto r = train(data, c, toy_model(4));
  EXPECT_EQ(r.report.epoch_loss.size(), 1u);
  EXPECT_EQ(r.report.train_samples, 100u);
  EXPECT_FALSE(r.report.test_rmse.has_value());
  c.epochs = 0;
  EXPECT_THROW(train(data, c, toy_model(4)), UserError);
}

TEST(Train, SameSeedSameWeights) {
  const auto data = toy_data(200, 3, 2);
  const auto test = toy_data(50, 3, 9);
  TrainConfig c;
  c.epochs = 3;
  c.batch_size = 64;
  c.seed = 11;
  const auto a = train(data, c, toy_model(3), test);
  const auto b = train(data, c, toy_model(3), test);
  EXPECT_EQ(a.model, b.model);
  EXPECT_EQ(a.report.epoch_loss, b.report.epoch_loss);
  ASSERT_TRUE(a.report.test_rmse.has_value());
  EXPECT_DOUBLE_EQ(*a.report.test_rmse, evaluate_rmse(a.model, test));
  c.seed = 12;
  EXPECT_NE(train(data, c, toy_model(3)).model, a.model);
}

TEST(Train, KeepsMetadata) {
  ModelParams init = toy_model(3);
  init.meta.class_names = {"sky", "a", "b"};
  TrainConfig c;
  c.epochs = 1;
  const auto r = train(toy_data(10, 3, 1), c, init);
  EXPECT_EQ(r.model.meta, init.meta);
}

TEST(Train, RejectsBadInput) {
  TrainConfig c;
  c.epochs = 1;
  EXPECT_THROW(train({}, c, toy_model(3)), UserError);
  auto data = toy_data(4, 3, 1);
  data[2].m_gt.m = {0.5, 0.6, 0.0};
  EXPECT_THROW(train(data, c, toy_model(3)), UserError);
  EXPECT_THROW(train(toy_data(4, 4, 1), c, toy_model(3)), UserError);
  c.learning_rate = 0;
  EXPECT_THROW(train(toy_data(4, 3, 1), c, toy_model(3)), UserError);
}

TEST(Train, DivergenceIsReported) {
  TrainConfig c;
  c.epochs = 5;
  c.learning_rate = 1e30;
  c.batch_size = 4;
  try {
    train(toy_data(16, 3, 1), c, toy_model(3));
    FAIL();
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("epoch"), std::string::npos);
  }
}

TEST(Rmse, PerfectPredictionIsZero) {
  const auto data = toy_data(5, 3, 1);
  std::vector<ThematicDistribution> p;
  for (const auto& s : data) p.push_back(s.m_gt);
  EXPECT_EQ(rmse(data, p), 0.0);
}

TEST(Rmse, UniformAgainstOneHotClosedForm) {
  // Per sample: six components off by 1/7 and one off by 6/7.
  const double expected = std::sqrt((6.0 / 49.0 + 36.0 / 49.0) / 7.0);
  std::vector<ViewSample> data(3);
  for (int i = 0; i < 3; ++i) {
    data[i].viewpoint = {10.0 * i, 5, 1, 0, 0};
    data[i].m_gt.m.assign(7, 0.0);
    data[i].m_gt.m[2 * i] = 1.0;
  }
  const std::vector<ThematicDistribution> uniform(3, ThematicDistribution{std::vector<double>(7, 1.0 / 7)});
  EXPECT_NEAR(rmse(data, uniform), expected, 1e-15);
  ModelParams zero = toy_model(7);
  zero.net.set_zero();
  EXPECT_NEAR(evaluate_rmse(zero, data), expected, 1e-7);
}

TEST(Rmse, ShuffleInvariantAndDecomposes) {
  const ModelParams model = toy_model(4, 2);
  auto data = toy_data(300, 4, 3);
  const double whole = evaluate_rmse(model, data);
  auto shuffled = data;
  std::reverse(shuffled.begin(), shuffled.end());
  std::rotate(shuffled.begin(), shuffled.begin() + 77, shuffled.end());
  EXPECT_NEAR(evaluate_rmse(model, shuffled), whole, 1e-12);
  const std::span<const ViewSample> all(data);
  const double r1 = evaluate_rmse(model, all.first(120)), r2 = evaluate_rmse(model, all.subspan(120));
  EXPECT_NEAR(whole * whole * 300, r1 * r1 * 120 + r2 * r2 * 180, 1e-9);
}

TEST(Report, JsonCarriesLossSeries) {
  TrainConfig c;
  c.epochs = 2;
  const auto r = train(toy_data(20, 3, 1), c, toy_model(3), toy_data(5, 3, 2));
  const auto j = to_json(r.report);
  EXPECT_EQ(j.at("epoch_loss").size(), 2u);
  EXPECT_TRUE(j.contains("test_rmse"));
  EXPECT_EQ(j.at("config").at("epochs"), 2);
}
