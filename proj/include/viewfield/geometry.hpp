#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <algorithm>
#include <limits>

namespace viewfield {

using Vec3 = Eigen::Vector3d;

/// Axis-aligned box in world coordinates (meters).
struct Aabb {
  Vec3 min = Vec3::Zero();
  Vec3 max = Vec3::Zero();

  static Aabb empty() {
    constexpr double inf = std::numeric_limits<double>::infinity();
    return {Vec3(inf, inf, inf), Vec3(-inf, -inf, -inf)};
  }

  bool is_empty() const { return (min.array() > max.array()).any(); }

  void extend(const Vec3& p) {
    min = min.cwiseMin(p);
    max = max.cwiseMax(p);
  }

  bool contains(const Vec3& p, double slack = 0.0) const {
    return (p.array() >= min.array() - slack).all() && (p.array() <= max.array() + slack).all();
  }

  Vec3 clamp(const Vec3& p) const { return p.cwiseMax(min).cwiseMin(max); }
  Vec3 center() const { return 0.5 * (min + max); }
  Vec3 extent() const { return max - min; }

  bool operator==(const Aabb&) const = default;
};

/// Axis-aligned rectangle on the ground plane.
struct Rect {
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;

  double width() const { return x1 - x0; }
  double depth() const { return y1 - y0; }
  bool contains(double x, double y) const { return x >= x0 && x <= x1 && y >= y0 && y <= y1; }

  bool operator==(const Rect&) const = default;
};

}  // namespace viewfield
