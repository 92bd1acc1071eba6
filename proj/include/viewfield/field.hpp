#pragma once

#include "viewfield/geometry.hpp"

#include <array>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

namespace viewfield {

inline constexpr int kEncodingFrequencies = 10;
inline constexpr int kEncodingWidth = 2 * kEncodingFrequencies;
inline constexpr int kPositionFeatures = 3 * kEncodingWidth;
inline constexpr int kDirectionFeatures = 2 * kEncodingWidth;

/// Position plus yaw/pitch viewing direction. Roll is not modelled.
///
/// `alpha` is yaw in [0, 2pi) measured from +x towards +y; `gamma` is pitch in
/// [-pi/2, pi/2], positive looking up. Use `canonical()` to wrap/clamp raw
/// values into those ranges.
struct Viewpoint {
  double x = 0, y = 0, z = 0;
  double alpha = 0, gamma = 0;

  Vec3 position() const { return {x, y, z}; }
  Vec3 direction() const {
    return {std::cos(gamma) * std::cos(alpha), std::cos(gamma) * std::sin(alpha), std::sin(gamma)};
  }
  Viewpoint canonical() const;

  bool operator==(const Viewpoint&) const = default;
};

double wrap_yaw(double alpha);

/// Yaw/pitch of a (not necessarily unit) direction vector.
std::pair<double, double> direction_angles(const Vec3& d);

/// Normalized fractions of a view falling into each thematic bin.
struct ThematicDistribution {
  std::vector<double> m;

  std::size_t size() const { return m.size(); }
  double operator[](std::size_t i) const { return m[i]; }
  bool on_simplex(double tol = 1e-6) const;

  bool operator==(const ThematicDistribution&) const = default;
};

/// Affine map from world viewpoints onto [-1, 1]^5.
class Normalizer {
 public:
  Normalizer() = default;
  explicit Normalizer(const Aabb& box);

  const Aabb& box() const { return box_; }

  std::array<double, 5> normalize(const Viewpoint& v) const;
  Viewpoint denormalize(const std::array<double, 5>& u) const;

  /// d(normalized coordinate) / d(raw coordinate), per coordinate.
  std::array<double, 5> scale() const;

  bool operator==(const Normalizer&) const = default;

 private:
  Aabb box_{Vec3(-1, -1, -1), Vec3(1, 1, 1)};
};

/// Frequency encoding of one normalized scalar:
/// out[2j] = sin(2^j pi t), out[2j+1] = cos(2^j pi t) for j = 0..9.
template <typename Scalar>
void encode(double t, std::span<Scalar, kEncodingWidth> out) {
  double freq = std::numbers::pi;
  for (int j = 0; j < kEncodingFrequencies; ++j, freq *= 2.0) {
    out[2 * j] = static_cast<Scalar>(std::sin(freq * t));
    out[2 * j + 1] = static_cast<Scalar>(std::cos(freq * t));
  }
}

std::array<double, kEncodingWidth> encode(double t);

/// d encode(t) / dt.
std::array<double, kEncodingWidth> encode_derivative(double t);

template <typename Scalar>
void encode_normalized(const std::array<double, 5>& u, std::span<Scalar, kPositionFeatures> pos,
                       std::span<Scalar, kDirectionFeatures> dir) {
  for (int c = 0; c < 3; ++c) {
    encode<Scalar>(u[c], pos.subspan(c * kEncodingWidth).template first<kEncodingWidth>());
  }
  for (int c = 0; c < 2; ++c) {
    encode<Scalar>(u[3 + c], dir.subspan(c * kEncodingWidth).template first<kEncodingWidth>());
  }
}

struct ViewpointFeatures {
  std::array<double, kPositionFeatures> position;
  std::array<double, kDirectionFeatures> direction;
};

ViewpointFeatures encode_viewpoint(const Normalizer& normalizer, const Viewpoint& v);

// Subspace parametrizations mapping the unit square into the scene.

struct Plane {
  Vec3 origin = Vec3::Zero();
  Vec3 v1 = Vec3::UnitX();
  Vec3 v2 = Vec3::UnitY();
  double l = 1.0;
  double L = 1.0;
};

struct Sphere {
  Vec3 center = Vec3::Zero();
  double radius = 1.0;
};

struct Hemisphere {
  Vec3 center = Vec3::Zero();
  double radius = 1.0;
};

using Parametrization = std::variant<Plane, Sphere, Hemisphere>;

/// Throws ValidationError if direction vectors are not unit/independent or a
/// radius/side length is not positive.
void validate(const Parametrization& p);

/// zeta(a, b); (a, b) is clamped into [0, 1]^2 first.
Vec3 param_point(const Parametrization& p, double a, double b);

/// Partial derivatives (d zeta/da, d zeta/db) at a clamped (a, b).
std::pair<Vec3, Vec3> param_jacobian(const Parametrization& p, double a, double b);

/// Parses "p=x,y,z;v1=x,y,z;v2=x,y,z;l=..;L=.." (plane),
/// "sphere:c=x,y,z;r=.." or "hemisphere:c=x,y,z;r=..".
Parametrization parse_parametrization(std::string_view text);

std::string to_string(const Parametrization& p);

}  // namespace viewfield
