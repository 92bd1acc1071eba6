#include "viewfield/error.hpp"
#include "viewfield/query.hpp"
#include "viewfield/random.hpp"

#include "../support/oracles.hpp"

#include <gtest/gtest.h>

#include <chrono>
#include <numbers>

using namespace viewfield;

namespace {

const Scene& city() {
  static const Scene s = generate_city(4, CityParams{.grid_size = 2, .water_fraction = 0.0});
  return s;
}

ModelParams model_for(const Scene& s, std::uint64_t seed = 2) {
  ModelParams m = init_model(seed, static_cast<int>(s.class_count()));
  m.meta.class_names = s.class_names();
  m.meta.normalizer = Normalizer(s.aabb());
  return m;
}

std::vector<double> predicted(const ModelParams& model, const Viewpoint& v) {
  const auto out = predict(model, std::vector<Viewpoint>{v}).output;
  return {out.data(), out.data() + out.rows()};
}

double squared_distance(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

}  // namespace

TEST(Target, ParsesBothForms) {
  const auto names = city().class_names();
  const auto t = parse_target("tree:0.2-0.4,sky:0.3-0.5", names);
  EXPECT_EQ(t.kind, TargetSpec::Kind::intervals);
  EXPECT_EQ(t.active, (std::vector<bool>{true, false, false, false, false, false, true}));
  EXPECT_EQ(t.lo[6], 0.2);
  EXPECT_EQ(t.hi[0], 0.5);
  const auto e = parse_target("tree=0.3, sky=0.4", names);
  EXPECT_EQ(e.kind, TargetSpec::Kind::exact);
  EXPECT_EQ(e.exact[6], 0.3);
  EXPECT_FALSE(e.active[1]);
  for (const char* bad : {"", "tree:0.5-0.2", "shrub=0.1", "tree=0.3,sky:0.1-0.2", "tree=0.8,sky=0.8", "tree:0.1"}) {
    EXPECT_THROW(parse_target(bad, names), Error) << bad;
  }
  try {
    parse_target("tree=0.3,shrub=0.1", names);
    FAIL();
  } catch (const ParseError& err) {
    EXPECT_EQ(err.offset(), 9u);
  }
}

TEST(Target, IntervalLossIsHingeSquared) {
  const auto t = TargetSpec::interval_constraints({0.2, 0, 0}, {0.4, 1, 1}, {true, false, false});
  std::vector<double> dm(3);
  EXPECT_EQ(t.loss(std::vector<double>{0.3, 0.3, 0.4}, dm), 0.0);
  EXPECT_EQ(dm, (std::vector<double>{0, 0, 0}));
  EXPECT_NEAR(t.loss(std::vector<double>{0.1, 0.5, 0.4}, dm), 0.01, 1e-15);
  EXPECT_NEAR(dm[0], -0.2, 1e-15);
  EXPECT_NEAR(t.loss(std::vector<double>{0.7, 0.2, 0.1}, dm), 0.09, 1e-15);
  EXPECT_NEAR(dm[0], 0.6, 1e-15);
}

TEST(Direct, OneViewpointAndMetric) {
  const ModelParams model = model_for(city());
  const std::vector<Viewpoint> v = {{20, 30, 5, 1, 0.1}, {1e6, 30, 5, 1, 0.1}};
  const PerceptionMetric tree("tree", "tree", city().class_names());
  const auto r = direct_query(model, v, &tree);
  ASSERT_EQ(r.m.size(), 2u);
  EXPECT_TRUE(r.m[0].on_simplex());
  EXPECT_EQ(r.metric[0], r.m[0][6]);
  EXPECT_EQ(r.clamped, 1u);
  EXPECT_THROW(direct_query(model, {}), UserError);
  const std::vector<Viewpoint> bad = {{20, 30, 5, 1, 0.1}, {20, std::nan(""), 5, 1, 0.1}};
  EXPECT_THROW(direct_query(model, bad), UserError);
}

TEST(Inverse, FixedPointConvergesImmediately) {
  const ModelParams model = model_for(city());
  const Viewpoint v0{40, 50, 12, 2.0, -0.2};
  InverseConfig c;
  c.restarts = 1;
  c.initial_points = {v0};
  const auto r = inverse_gradient(model, TargetSpec::exact_vector(predicted(model, v0)), c);
  ASSERT_EQ(r.size(), 1u);
  EXPECT_EQ(r[0].status, InverseResult::Status::converged);
  EXPECT_EQ(r[0].iterations, 0);
  EXPECT_LT(r[0].loss, c.tolerance);
  EXPECT_EQ(r[0].viewpoint, v0);
}

TEST(Inverse, InfeasibleTargetRunsOut) {
  ASSERT_EQ(city().class_id("water"), 2);
  const ModelParams model = model_for(city());
  InverseConfig c;
  c.restarts = 4;
  c.max_iterations = 30;
  const auto r = inverse_gradient(model, TargetSpec::exact_vector({0, 0, 1, 0, 0, 0, 0}), c);
  ASSERT_EQ(r.size(), 4u);
  for (const auto& x : r) {
    EXPECT_EQ(x.status, InverseResult::Status::max_iterations);
    EXPECT_GT(x.loss, c.tolerance);
    EXPECT_EQ(x.iterations, 30);
  }
}

TEST(Inverse, ResultsAreFeasibleSortedAndExact) {
  const ModelParams model = model_for(city());
  const auto target = TargetSpec::exact_vector({0.5, 0.1, 0, 0.1, 0.1, 0.1, 0.1});
  InverseConfig c;
  c.restarts = 8;
  c.max_iterations = 60;
  c.seed = 5;
  const auto r = inverse_gradient(model, target, c);
  ASSERT_EQ(r.size(), 8u);
  const Aabb box = city().aabb();
  std::set<int> restarts;
  for (std::size_t i = 0; i < r.size(); ++i) {
    if (i > 0) EXPECT_LE(r[i - 1].loss, r[i].loss);
    restarts.insert(r[i].restart);
    EXPECT_TRUE(box.contains(r[i].viewpoint.position(), 0.0));
    EXPECT_GE(r[i].viewpoint.alpha, 0);
    EXPECT_LT(r[i].viewpoint.alpha, 2 * std::numbers::pi);
    EXPECT_LE(std::abs(r[i].viewpoint.gamma), c.max_pitch);
    EXPECT_EQ(r[i].loss, squared_distance(r[i].m, target.exact));
    EXPECT_EQ(r[i].m, predicted(model, r[i].viewpoint));
    EXPECT_EQ(r[i].status == InverseResult::Status::converged, r[i].loss <= c.tolerance);
  }
  EXPECT_EQ(restarts.size(), 8u);
  EXPECT_EQ(inverse_gradient(model, target, c).front().viewpoint, r.front().viewpoint);
}

TEST(Inverse, PlaneWithFixedDirectionStaysOnPlane) {
  const ModelParams model = model_for(city());
  const Plane plane{Vec3(5, 10, 1.7), Vec3(0.6, 0.8, 0), Vec3(0, 0, 1), 60, 25};
  const Vec3 normal = plane.v1.cross(plane.v2);
  InverseConfig c;
  c.region = plane;
  c.direction = std::make_pair(1.0, 0.1);
  c.restarts = 6;
  c.max_iterations = 80;
  const auto target = parse_target("sky:0.3-0.5,tree:0.2-0.4", city().class_names());
  for (const auto& r : inverse_gradient(model, target, c)) {
    EXPECT_LT(std::abs((r.viewpoint.position() - plane.origin).dot(normal)), 1e-6);
    ASSERT_TRUE(r.ab.has_value());
    EXPECT_GE(r.ab->first, 0);
    EXPECT_LE(r.ab->first, 1);
    EXPECT_TRUE(param_point(plane, r.ab->first, r.ab->second).isApprox(r.viewpoint.position(), 1e-12));
    EXPECT_EQ(r.viewpoint.alpha, 1.0);
    EXPECT_EQ(r.viewpoint.gamma, 0.1);
  }
}

TEST(Inverse, SphereRegion) {
  const ModelParams model = model_for(city());
  InverseConfig c;
  c.region = Hemisphere{Vec3(60, 60, 0), 30};
  c.restarts = 3;
  c.max_iterations = 20;
  for (const auto& r : inverse_gradient(model, TargetSpec::exact_vector({1, 0, 0, 0, 0, 0, 0}), c)) {
    EXPECT_NEAR((r.viewpoint.position() - Vec3(60, 60, 0)).norm(), 30, 1e-9);
  }
  c.initial_points = {Viewpoint{}};
  EXPECT_THROW(inverse_gradient(model, TargetSpec::exact_vector({1, 0, 0, 0, 0, 0, 0}), c), UserError);
}

TEST(Sweep, AllSortedWhenNEqualsQ) {
  const ModelParams model = model_for(city());
  const auto target = TargetSpec::exact_vector({0.4, 0.2, 0, 0.1, 0.1, 0.1, 0.1});
  InverseConfig c;
  c.seed = 8;
  const auto r = inverse_sweep(model, target, c, 200, 200);
  ASSERT_EQ(r.size(), 200u);
  for (std::size_t i = 1; i < r.size(); ++i) EXPECT_LE(r[i - 1].loss, r[i].loss);
  EXPECT_EQ(inverse_sweep(model, target, c, 200, 200).front().viewpoint, r.front().viewpoint);
  EXPECT_THROW(inverse_sweep(model, target, c, 5, 6), UserError);
  EXPECT_THROW(inverse_sweep(model, target, c, 5, 0), UserError);
}

TEST(Sweep, OwnOutputRanksFirst) {
  const ModelParams model = model_for(city());
  InverseConfig c;
  c.seed = 9;
  const auto first = inverse_sweep(model, TargetSpec::exact_vector({1, 0, 0, 0, 0, 0, 0}), c, 300, 300);
  const InverseResult& pick = first[137];
  const auto again = inverse_sweep(model, TargetSpec::exact_vector(pick.m), c, 300, 3);
  EXPECT_EQ(again[0].restart, pick.restart);
  EXPECT_EQ(again[0].loss, 0.0);
}

TEST(Sweep, LargerNestedSweepIsNoWorse) {
  const ModelParams model = model_for(city());
  const auto target = parse_target("tree:0.2-0.4,sky:0.3-0.5", city().class_names());
  InverseConfig c;
  c.seed = 10;
  const auto small = inverse_sweep(model, target, c, 1000, 1);
  const auto large = inverse_sweep(model, target, c, 10000, 1);
  EXPECT_LE(large[0].loss, small[0].loss);
}

TEST(Facade, SingleSampleEqualsDirectQuery) {
  const Scene s = oracle::box_scene();
  const ModelParams model = model_for(s, 3);
  const auto patches = facade_summary(model, s, s.buildings[0].id, 5.0, 1, 4);
  ASSERT_EQ(patches.size(), facade_patches(s.buildings[0], 5.0).size());
  for (const auto& p : patches) {
    ASSERT_EQ(p.samples.size(), 1u);
    const auto& v = p.samples[0];
    const Vec3 local = v.position() - p.patch.origin;
    EXPECT_NEAR(local.dot(p.patch.normal), 0, 1e-9);
    EXPECT_TRUE(v.direction().isApprox(p.patch.normal, 1e-12));
    const auto d = direct_query(model, p.samples);
    EXPECT_EQ(d.clamped, 0u);
    for (int c = 0; c < model.k(); ++c) EXPECT_NEAR(p.m[c], d.m[0][c], 1e-7);
  }
}

TEST(Facade, MeanOverSamplesIsOnSimplex) {
  const Scene s = oracle::box_scene();
  const ModelParams model = model_for(s, 3);
  for (const auto& p : facade_summary(model, s, s.buildings[0].id, 4.0, 5, 4)) {
    ASSERT_EQ(p.samples.size(), 5u);
    const auto d = direct_query(model, p.samples);
    double sum = 0;
    for (int c = 0; c < model.k(); ++c) {
      double mean = 0;
      for (const auto& m : d.m) mean += m[c] / 5;
      EXPECT_NEAR(p.m[c], mean, 1e-7);
      sum += p.m[c];
    }
    EXPECT_NEAR(sum, 1.0, 1e-6);
  }
  EXPECT_THROW(facade_summary(model, s, 999, 4.0, 5, 4), UserError);
  EXPECT_THROW(facade_summary(model, s, s.buildings[0].id, 4.0, 0, 4), UserError);
}

TEST(Facade, ThousandPatchesWithinBudget) {
  const Scene s = oracle::box_scene(100, {40, 40, 65, 65}, 10);
  ASSERT_EQ(facade_patches(s.buildings[0], 1.0).size(), 1000u);
  const ModelParams model = model_for(s, 3);
  const auto t0 = std::chrono::steady_clock::now();
  const auto out = facade_summary(model, s, s.buildings[0].id, 1.0, 5, 1);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  EXPECT_EQ(out.size(), 1000u);
  EXPECT_LE(seconds, 2.0);
}
