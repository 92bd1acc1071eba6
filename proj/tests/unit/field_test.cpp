#include "viewfield/error.hpp"
#include "viewfield/field.hpp"
#include "viewfield/random.hpp"

#include "../support/oracles.hpp"

#include <gtest/gtest.h>

#include <numbers>

using namespace viewfield;

constexpr double kPi = std::numbers::pi;

TEST(Encoding, AtZero) {
  const auto e = encode(0.0);
  for (int j = 0; j < 10; ++j) {
    EXPECT_EQ(e[2 * j], 0.0);
    EXPECT_EQ(e[2 * j + 1], 1.0);
  }
}

TEST(Encoding, AtOne) {
  const auto e = encode(1.0);
  EXPECT_NEAR(e[0], 0.0, 1e-12);
  EXPECT_NEAR(e[1], -1.0, 1e-12);
  for (int j = 1; j < 10; ++j) {
    EXPECT_NEAR(e[2 * j], 0.0, 1e-9);
    EXPECT_NEAR(e[2 * j + 1], 1.0, 1e-12);
  }
}

TEST(Encoding, AtHalf) {
  const auto e = encode(0.5);
  const double expected[6] = {1, 0, 0, -1, 0, 1};
  for (int i = 0; i < 6; ++i) EXPECT_NEAR(e[i], expected[i], 1e-12);
  for (int j = 3; j < 10; ++j) {
    EXPECT_NEAR(e[2 * j], 0.0, 1e-9);
    EXPECT_NEAR(e[2 * j + 1], 1.0, 1e-12);
  }
}

TEST(Encoding, DerivativeMatchesDifferences) {
  Rng rng(4);
  for (int n = 0; n < 50; ++n) {
    const double t = rng.uniform(-1, 1), h = 1e-7;
    const auto d = encode_derivative(t);
    const auto p = encode(t + h), m = encode(t - h);
    for (int i = 0; i < kEncodingWidth; ++i) {
      const double fd = (p[i] - m[i]) / (2 * h);
      EXPECT_NEAR(d[i], fd, 1e-5 * std::max(1.0, std::abs(fd)));
    }
  }
}

TEST(Normalizer, CenterMapsToZero) {
  const Aabb box{Vec3(0, 0, 0), Vec3(100, 50, 20)};
  const Normalizer n(box);
  const auto u = n.normalize({50, 25, 10, kPi, 0});
  for (double x : u) EXPECT_NEAR(x, 0.0, 1e-15);
  const auto f = encode_viewpoint(n, {50, 25, 10, kPi, 0});
  EXPECT_EQ(f.position.size(), 60u);
  EXPECT_EQ(f.direction.size(), 40u);
  for (int i = 0; i < 60; ++i) EXPECT_NEAR(f.position[i], i % 2 ? 1.0 : 0.0, 1e-12);
  for (int i = 0; i < 40; ++i) EXPECT_NEAR(f.direction[i], i % 2 ? 1.0 : 0.0, 1e-12);
}

TEST(Normalizer, CornersAndRoundTrip) {
  const Aabb box{Vec3(-10, 5, 0), Vec3(30, 25, 40)};
  const Normalizer n(box);
  const auto lo = n.normalize({-10, 5, 0, 0, -kPi / 2});
  const auto hi = n.normalize({30, 25, 40, 2 * kPi, kPi / 2});
  for (int c = 0; c < 5; ++c) {
    EXPECT_NEAR(lo[c], -1.0, 1e-15);
    EXPECT_NEAR(hi[c], 1.0, 1e-15);
  }
  const Viewpoint v{3, 7, 11, 1.3, -0.4};
  const Viewpoint back = n.denormalize(n.normalize(v));
  EXPECT_NEAR(back.x, v.x, 1e-12);
  EXPECT_NEAR(back.y, v.y, 1e-12);
  EXPECT_NEAR(back.z, v.z, 1e-12);
  EXPECT_NEAR(back.alpha, v.alpha, 1e-12);
  EXPECT_NEAR(back.gamma, v.gamma, 1e-12);
  EXPECT_THROW(Normalizer(Aabb::empty()), ValidationError);
}

TEST(Normalizer, ShiftOnlyTouchesItsBlock) {
  const Normalizer n(Aabb{Vec3(0, 0, 0), Vec3(64, 64, 64)});
  const Viewpoint a{10.3, 20.1, 5.5, 1.0, 0.2};
  Viewpoint b = a;
  b.x += 64.0 / 3.0;
  const auto fa = encode_viewpoint(n, a), fb = encode_viewpoint(n, b);
  for (int i = 20; i < 60; ++i) EXPECT_EQ(fa.position[i], fb.position[i]);
  EXPECT_EQ(fa.direction, fb.direction);
  bool changed = false;
  for (int i = 0; i < 20; ++i) changed |= fa.position[i] != fb.position[i];
  EXPECT_TRUE(changed);
}

TEST(Viewpoint, CanonicalWrapsYawAndClampsPitch) {
  const Viewpoint v = Viewpoint{0, 0, 0, -0.5, 3.0}.canonical();
  EXPECT_NEAR(v.alpha, 2 * kPi - 0.5, 1e-12);
  EXPECT_EQ(v.gamma, kPi / 2);
  EXPECT_EQ(wrap_yaw(-1e-300), 0.0);
  EXPECT_LT(wrap_yaw(7 * kPi), 2 * kPi);
  const auto [a, g] = direction_angles(Vec3(0, -1, 1));
  EXPECT_NEAR(a, 1.5 * kPi, 1e-12);
  EXPECT_NEAR(g, kPi / 4, 1e-12);
}

TEST(Distribution, SimplexCheck) {
  EXPECT_TRUE((ThematicDistribution{{0.25, 0.75}}).on_simplex());
  EXPECT_FALSE((ThematicDistribution{{-0.1, 1.1}}).on_simplex());
  EXPECT_FALSE((ThematicDistribution{{0.5, 0.4}}).on_simplex());
}

TEST(Parametrization, PlaneCorners) {
  const Plane p{Vec3(1, 2, 3), Vec3::UnitX(), Vec3::UnitY(), 10, 20};
  EXPECT_TRUE(param_point(p, 0, 0).isApprox(Vec3(1, 2, 3)));
  EXPECT_TRUE(param_point(p, 1, 1).isApprox(Vec3(11, 22, 3)));
  EXPECT_TRUE(param_point(p, 2, -1).isApprox(Vec3(11, 2, 3)));
}

TEST(Parametrization, SpherePoles) {
  const Sphere s{Vec3::Zero(), 1.0};
  for (double a : {0.0, 0.3, 0.9}) EXPECT_TRUE(param_point(s, a, 0).isApprox(Vec3(0, 0, 1)));
  EXPECT_TRUE(param_point(s, 0, 0.5).isApprox(Vec3(1, 0, 0)));
  EXPECT_NEAR(param_point(Hemisphere{Vec3::Zero(), 2.0}, 0.2, 1.0).z(), 0.0, 1e-12);
}

TEST(Parametrization, SpherePointsOnSurface) {
  Rng rng(1);
  const Sphere s{Vec3(5, -3, 2), 7.5};
  const Hemisphere h{Vec3(5, -3, 2), 7.5};
  for (int i = 0; i < 1000; ++i) {
    const double a = rng.uniform(), b = rng.uniform();
    EXPECT_NEAR((param_point(s, a, b) - s.center).norm(), 7.5, 1e-9);
    const Vec3 q = param_point(h, a, b);
    EXPECT_NEAR((q - h.center).norm(), 7.5, 1e-9);
    EXPECT_GE(q.z(), h.center.z() - 1e-9);
  }
}

TEST(Parametrization, JacobianMatchesDifferences) {
  Rng rng(2);
  const std::vector<Parametrization> params = {
      Plane{Vec3(1, 2, 3), Vec3(0.6, 0.8, 0), Vec3(0, 0, 1), 10, 4}, Sphere{Vec3(1, 1, 1), 3},
      Hemisphere{Vec3(0, 0, 0), 2}};
  for (const auto& p : params) {
    for (int i = 0; i < 20; ++i) {
      const double a = rng.uniform(0.05, 0.95), b = rng.uniform(0.05, 0.95), h = 1e-6;
      const auto [ja, jb] = param_jacobian(p, a, b);
      const Vec3 fa = (param_point(p, a + h, b) - param_point(p, a - h, b)) / (2 * h);
      const Vec3 fb = (param_point(p, a, b + h) - param_point(p, a, b - h)) / (2 * h);
      EXPECT_LT((ja - fa).norm(), 1e-6 * std::max(1.0, fa.norm()));
      EXPECT_LT((jb - fb).norm(), 1e-6 * std::max(1.0, fb.norm()));
    }
  }
}

TEST(Parametrization, ParseAndPrint) {
  const auto p = parse_parametrization("p=0,0,1.7;v1=1,0,0;v2=0,1,0;l=500;L=250");
  const auto& plane = std::get<Plane>(p);
  EXPECT_EQ(plane.origin, Vec3(0, 0, 1.7));
  EXPECT_EQ(plane.L, 250);
  const auto again = parse_parametrization(to_string(p));
  EXPECT_EQ(std::get<Plane>(again).origin, plane.origin);
  const auto s = parse_parametrization("sphere:c=1,2,3;r=4");
  EXPECT_EQ(std::get<Sphere>(s).radius, 4);
  EXPECT_TRUE(std::holds_alternative<Hemisphere>(parse_parametrization("hemisphere:c=0,0,0;r=1")));
}

TEST(Parametrization, Invalid) {
  EXPECT_THROW(parse_parametrization("p=0,0,0;v1=1,0,0;v2=1,0,0;l=1;L=1"), ValidationError);
  EXPECT_THROW(parse_parametrization("p=0,0,0;v1=2,0,0;v2=0,1,0;l=1;L=1"), ValidationError);
  EXPECT_THROW(parse_parametrization("p=0,0,0;v1=1,0,0;v2=0,1,0;l=0;L=1"), ValidationError);
  EXPECT_THROW(parse_parametrization("sphere:c=0,0,0;r=-1"), ValidationError);
  EXPECT_THROW(parse_parametrization("p=0,0;v1=1,0,0;v2=0,1,0;l=1;L=1"), UserError);
  EXPECT_THROW(parse_parametrization("p=0,0,0;v1=1,0,0"), UserError);
  EXPECT_THROW(parse_parametrization("sphere:c=0,0,0;r=abc"), UserError);
}
