#include "viewfield/dataset.hpp"
#include "viewfield/error.hpp"

#include "../support/oracles.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <numbers>
#include <set>

using namespace viewfield;

namespace {

std::vector<ViewSample> numbered(std::size_t n) {
  std::vector<ViewSample> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i].viewpoint.x = static_cast<double>(i);
    out[i].m_gt.m = {1.0, 0.0};
  }
  return out;
}

}  // namespace

TEST(Sampling, UniformStaysInBoundsAndOutOfBuildings) {
  const Scene s = generate_city(3, CityParams{.grid_size = 3});
  const auto views = sample_viewpoints(s, SamplingStrategy::uniform(), 1000, 3);
  ASSERT_EQ(views.size(), 1000u);
  const Aabb box = s.aabb();
  for (const auto& v : views) {
    EXPECT_GE(v.z, box.min.z());
    EXPECT_LE(v.z, box.max.z());
    EXPECT_TRUE(box.contains(v.position(), 1e-9));
    for (const auto& b : s.buildings) EXPECT_FALSE(b.contains(v.position()));
    EXPECT_GE(v.alpha, 0);
    EXPECT_LT(v.alpha, 2 * std::numbers::pi);
  }
  EXPECT_EQ(views, sample_viewpoints(s, SamplingStrategy::uniform(), 1000, 3));
  EXPECT_NE(views, sample_viewpoints(s, SamplingStrategy::uniform(), 1000, 4));
}

TEST(Sampling, StreetLevelIsAtEyeHeight) {
  const Scene s = generate_city(3, CityParams{.grid_size = 3});
  SamplingStrategy st = SamplingStrategy::street_level();
  st.directions_per_position = 4;
  const auto views = sample_viewpoints(s, st, 101, 5);
  ASSERT_EQ(views.size(), 101u);
  for (const auto& v : views) {
    EXPECT_NEAR(v.z, kEyeHeight, 1e-9);
    EXPECT_GE(v.gamma, st.min_pitch);
    EXPECT_LE(v.gamma, st.max_pitch);
  }
  for (std::size_t i = 0; i + 4 <= views.size(); i += 4) {
    for (std::size_t d = 1; d < 4; ++d) EXPECT_EQ(views[i].position(), views[i + d].position());
  }
}

TEST(Sampling, StreetLevelNeedsStreets) {
  EXPECT_THROW(sample_viewpoints(oracle::box_scene(), SamplingStrategy::street_level(), 5, 1), UserError);
}

TEST(Sampling, FacadeMountedHugsFacades) {
  const Scene s = oracle::box_scene();
  const auto views = sample_viewpoints(s, SamplingStrategy::facade_mounted(), 500, 2);
  const auto facades = s.buildings[0].facades();
  for (const auto& v : views) {
    const Vec3 p = v.position();
    bool near_facade = false;
    for (const auto& f : facades) {
      const double dist = (p - f.origin).dot(f.normal);
      const Vec3 local = p - f.origin - dist * f.normal;
      const double u = local.dot(f.edge_u) / f.edge_u.squaredNorm();
      const double w = local.dot(f.edge_v) / f.edge_v.squaredNorm();
      if (std::abs(dist) <= 0.1 && u >= 0 && u <= 1 && w >= 0 && w <= 1) {
        near_facade = true;
        EXPECT_GT(v.direction().dot(f.normal), 0);
      }
    }
    EXPECT_TRUE(near_facade);
  }
}

TEST(Sampling, StrategyNames) {
  EXPECT_EQ(SamplingStrategy::from_name("street").kind, SamplingStrategy::Kind::street_level);
  EXPECT_EQ(SamplingStrategy::from_name("facade").kind, SamplingStrategy::Kind::facade_mounted);
  EXPECT_THROW(SamplingStrategy::from_name("aerial"), UserError);
  SamplingStrategy s = SamplingStrategy::uniform();
  s.max_pitch = std::numbers::pi / 2;
  EXPECT_THROW(s.validate(), UserError);
}

TEST(Dataset, SkyViewIsOneHot) {
  const Scene s = oracle::box_scene();
  const std::vector<Viewpoint> v = {{50, 50, 100, 0, 1.2}};
  const auto d = build_dataset(s, v, BinSpec::categorical(7), RenderSettings{});
  ASSERT_EQ(d.size(), 1u);
  EXPECT_EQ(d[0].m_gt.m, (std::vector<double>{1, 0, 0, 0, 0, 0, 0}));
}

TEST(Dataset, WorkerCountDoesNotChangeResults) {
  const Scene s = generate_city(3, CityParams{.grid_size = 2});
  const auto views = sample_viewpoints(s, SamplingStrategy::uniform(), 40, 1);
  RenderSettings r;
  r.width = r.height = 16;
  const auto a = build_dataset(s, views, BinSpec::categorical(7), r, 1);
  const auto b = build_dataset(s, views, BinSpec::categorical(7), r, 3);
  EXPECT_EQ(dataset_to_csv(a), dataset_to_csv(b));
  for (const auto& x : a) EXPECT_TRUE(x.m_gt.on_simplex());
}

TEST(Dataset, BadViewpointNamesItsIndex) {
  const Scene s = oracle::box_scene();
  const std::vector<Viewpoint> v = {{10, 10, 2, 0, 0}, {10, 10, 2, 0, std::numbers::pi / 2}};
  try {
    build_dataset(s, v, BinSpec::categorical(7), RenderSettings{});
    FAIL();
  } catch (const UserError& e) {
    EXPECT_NE(std::string(e.what()).find("viewpoint 1"), std::string::npos);
  }
}

TEST(Split, PaperCounts) {
  const auto data = numbered(78696);
  const auto parts = split(data, 15000.0 / 78696.0, 1);
  EXPECT_EQ(parts.train.size(), 63696u);
  EXPECT_EQ(parts.test.size(), 15000u);
}

TEST(Split, DisjointAndExhaustive) {
  const auto data = numbered(100);
  const auto parts = split(data, 0.2, 9);
  std::set<double> seen;
  for (const auto& s : parts.train) seen.insert(s.viewpoint.x);
  for (const auto& s : parts.test) EXPECT_TRUE(seen.insert(s.viewpoint.x).second);
  EXPECT_EQ(seen.size(), 100u);
  EXPECT_THROW(split(data, 0.0, 1), UserError);
  EXPECT_THROW(split(numbered(3), 0.01, 1), UserError);
}

TEST(Subset, IdentityAndNesting) {
  const auto data = numbered(200);
  EXPECT_EQ(subset(data, 1.0, 4), data);
  const auto small = subset(data, 0.1, 4), large = subset(data, 0.2, 4);
  EXPECT_EQ(small.size(), 20u);
  std::set<double> in_large;
  for (const auto& s : large) in_large.insert(s.viewpoint.x);
  for (const auto& s : small) EXPECT_TRUE(in_large.count(s.viewpoint.x));
  for (std::size_t i = 1; i < small.size(); ++i) EXPECT_LT(small[i - 1].viewpoint.x, small[i].viewpoint.x);
}

TEST(Csv, RoundTripAndErrors) {
  std::vector<ViewSample> d = {{{1.5, 2, 3, 0.25, -0.1}, {{0.125, 0.875}}}, {{4, 5, 6, 1, 0}, {{1, 0}}}};
  const std::string text = dataset_to_csv(d);
  EXPECT_EQ(text.substr(0, text.find('\n')), "x,y,z,alpha,gamma,m0,m1");
  EXPECT_EQ(dataset_from_csv(text), d);
  EXPECT_EQ(dataset_to_csv(dataset_from_csv(text)), text);
  EXPECT_THROW(dataset_from_csv("a,b\n"), ParseError);
  EXPECT_THROW(dataset_from_csv(""), ParseError);
  try {
    dataset_from_csv("x,y,z,alpha,gamma,m0,m1\n1,2,3,4,5,0.5,0.5\n1,2,3,4,5,0.5\n");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.offset(), 3u);
  }
  EXPECT_THROW(dataset_from_csv("x,y,z,alpha,gamma,m0,m1\n1,2,3,4,abc,0.5,0.5\n"), ParseError);
}

TEST(Csv, Regeneration) {
  const Scene s = generate_city(3, CityParams{.grid_size = 2});
  RenderSettings r;
  r.width = r.height = 8;
  auto make = [&] {
    return dataset_to_csv(build_dataset(s, sample_viewpoints(s, SamplingStrategy::uniform(), 20, 6),
                                        BinSpec::categorical(7), r));
  };
  EXPECT_EQ(make(), make());
}

TEST(Meta, SidecarRoundTrip) {
  DatasetMeta m{{"sky", "bin1", "bin2"}, BinSpec::scalar({0, 2, 5}), RenderSettings{}, Aabb{Vec3(0, 0, 0), Vec3(1, 2, 3)}};
  m.settings.width = 32;
  const auto path = std::filesystem::temp_directory_path() / "viewfield_meta.csv";
  save_meta(m, meta_path(path));
  EXPECT_EQ(load_meta(meta_path(path)), m);
  std::filesystem::remove(meta_path(path));
  EXPECT_THROW(load_meta(meta_path(path)), UserError);
}
