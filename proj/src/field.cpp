#include "viewfield/field.hpp"

#include "viewfield/error.hpp"

#include <charconv>
#include <cstdio>
#include <map>
#include <sstream>

namespace viewfield {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kTwoPi = 2.0 * std::numbers::pi;

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

double safe_extent(double e) { return e > 1e-9 ? e : 1.0; }

double parse_number(std::string_view s, std::string_view field) {
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  while (!s.empty() && s.back() == ' ') s.remove_suffix(1);
  double v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw UserError("parametrization field '" + std::string(field) + "': bad number '" +
                    std::string(s) + "'");
  }
  return v;
}

Vec3 parse_vec3(std::string_view s, std::string_view field) {
  Vec3 out;
  for (int i = 0; i < 3; ++i) {
    auto comma = s.find(',');
    if ((i < 2) != (comma != std::string_view::npos)) {
      throw UserError("parametrization field '" + std::string(field) + "' needs 3 components");
    }
    out[i] = parse_number(s.substr(0, comma), field);
    if (comma != std::string_view::npos) s.remove_prefix(comma + 1);
  }
  return out;
}

std::map<std::string, std::string, std::less<>> split_fields(std::string_view text) {
  std::map<std::string, std::string, std::less<>> fields;
  while (!text.empty()) {
    auto semi = text.find(';');
    auto item = text.substr(0, semi);
    auto eq = item.find('=');
    if (eq == std::string_view::npos) {
      throw UserError("parametrization: expected key=value, got '" + std::string(item) + "'");
    }
    std::string key(item.substr(0, eq));
    while (!key.empty() && key.front() == ' ') key.erase(key.begin());
    while (!key.empty() && key.back() == ' ') key.pop_back();
    fields[key] = std::string(item.substr(eq + 1));
    if (semi == std::string_view::npos) break;
    text.remove_prefix(semi + 1);
  }
  return fields;
}

const std::string& require(const std::map<std::string, std::string, std::less<>>& f,
                           const std::string& key) {
  auto it = f.find(key);
  if (it == f.end()) throw UserError("parametrization: missing field '" + key + "'");
  return it->second;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt(const Vec3& v) { return fmt(v.x()) + "," + fmt(v.y()) + "," + fmt(v.z()); }

}  // namespace

double wrap_yaw(double alpha) {
  if (!std::isfinite(alpha)) return alpha;
  double a = std::fmod(alpha, kTwoPi);
  if (a < 0) a += kTwoPi;
  // fmod of a tiny negative number can round up to exactly 2pi.
  if (a >= kTwoPi) a = 0.0;
  return a;
}

std::pair<double, double> direction_angles(const Vec3& d) {
  const double horiz = std::hypot(d.x(), d.y());
  return {wrap_yaw(std::atan2(d.y(), d.x())), std::atan2(d.z(), horiz)};
}

Viewpoint Viewpoint::canonical() const {
  Viewpoint v = *this;
  v.alpha = wrap_yaw(alpha);
  v.gamma = std::clamp(gamma, -kPi / 2, kPi / 2);
  return v;
}

bool ThematicDistribution::on_simplex(double tol) const {
  double sum = 0;
  for (double v : m) {
    if (!(v >= 0.0)) return false;
    sum += v;
  }
  return std::abs(sum - 1.0) <= tol;
}

Normalizer::Normalizer(const Aabb& box) : box_(box) {
  if (box.is_empty()) throw ValidationError("normalizer: empty bounding box");
}

std::array<double, 5> Normalizer::normalize(const Viewpoint& v) const {
  const Vec3 ext = box_.extent();
  const Vec3 c = box_.center();
  return {2.0 * (v.x - c.x()) / safe_extent(ext.x()), 2.0 * (v.y - c.y()) / safe_extent(ext.y()),
          2.0 * (v.z - c.z()) / safe_extent(ext.z()), v.alpha / kPi - 1.0, 2.0 * v.gamma / kPi};
}

Viewpoint Normalizer::denormalize(const std::array<double, 5>& u) const {
  const Vec3 ext = box_.extent();
  const Vec3 c = box_.center();
  return {c.x() + 0.5 * u[0] * safe_extent(ext.x()), c.y() + 0.5 * u[1] * safe_extent(ext.y()),
          c.z() + 0.5 * u[2] * safe_extent(ext.z()), (u[3] + 1.0) * kPi, u[4] * kPi / 2.0};
}

std::array<double, 5> Normalizer::scale() const {
  const Vec3 ext = box_.extent();
  return {2.0 / safe_extent(ext.x()), 2.0 / safe_extent(ext.y()), 2.0 / safe_extent(ext.z()),
          1.0 / kPi, 2.0 / kPi};
}

std::array<double, kEncodingWidth> encode(double t) {
  std::array<double, kEncodingWidth> out{};
  encode<double>(t, std::span<double, kEncodingWidth>(out));
  return out;
}

std::array<double, kEncodingWidth> encode_derivative(double t) {
  std::array<double, kEncodingWidth> out{};
  double freq = kPi;
  for (int j = 0; j < kEncodingFrequencies; ++j, freq *= 2.0) {
    out[2 * j] = freq * std::cos(freq * t);
    out[2 * j + 1] = -freq * std::sin(freq * t);
  }
  return out;
}

ViewpointFeatures encode_viewpoint(const Normalizer& normalizer, const Viewpoint& v) {
  ViewpointFeatures f{};
  encode_normalized<double>(normalizer.normalize(v), f.position, f.direction);
  return f;
}

void validate(const Parametrization& p) {
  std::visit(
      [](const auto& q) {
        using T = std::decay_t<decltype(q)>;
        if constexpr (std::is_same_v<T, Plane>) {
          if (std::abs(q.v1.norm() - 1.0) > 1e-6 || std::abs(q.v2.norm() - 1.0) > 1e-6) {
            throw ValidationError("plane: v1 and v2 must be unit vectors");
          }
          if (q.v1.cross(q.v2).norm() < 1e-6) throw ValidationError("plane: v1 and v2 are parallel");
          if (!(q.l > 0) || !(q.L > 0)) throw ValidationError("plane: side lengths must be positive");
        } else {
          if (!(q.radius > 0)) throw ValidationError("sphere: radius must be positive");
        }
      },
      p);
}

Vec3 param_point(const Parametrization& p, double a, double b) {
  a = clamp01(a);
  b = clamp01(b);
  return std::visit(
      [a, b](const auto& q) -> Vec3 {
        using T = std::decay_t<decltype(q)>;
        if constexpr (std::is_same_v<T, Plane>) {
          return q.origin + a * q.l * q.v1 + b * q.L * q.v2;
        } else {
          const double polar = std::is_same_v<T, Sphere> ? kPi * b : 0.5 * kPi * b;
          const double az = kTwoPi * a;
          return q.center + q.radius * Vec3(std::cos(az) * std::sin(polar),
                                            std::sin(az) * std::sin(polar), std::cos(polar));
        }
      },
      p);
}

std::pair<Vec3, Vec3> param_jacobian(const Parametrization& p, double a, double b) {
  a = clamp01(a);
  b = clamp01(b);
  return std::visit(
      [a, b](const auto& q) -> std::pair<Vec3, Vec3> {
        using T = std::decay_t<decltype(q)>;
        if constexpr (std::is_same_v<T, Plane>) {
          return {q.l * q.v1, q.L * q.v2};
        } else {
          const double k = std::is_same_v<T, Sphere> ? kPi : 0.5 * kPi;
          const double polar = k * b;
          const double az = kTwoPi * a;
          const Vec3 da = q.radius * kTwoPi *
                          Vec3(-std::sin(az) * std::sin(polar), std::cos(az) * std::sin(polar), 0.0);
          const Vec3 db = q.radius * k *
                          Vec3(std::cos(az) * std::cos(polar), std::sin(az) * std::cos(polar),
                               -std::sin(polar));
          return {da, db};
        }
      },
      p);
}

Parametrization parse_parametrization(std::string_view text) {
  Parametrization out;
  if (text.starts_with("sphere:") || text.starts_with("hemisphere:")) {
    const bool hemi = text.starts_with("hemisphere:");
    auto fields = split_fields(text.substr(text.find(':') + 1));
    const Vec3 c = parse_vec3(require(fields, "c"), "c");
    const double r = parse_number(require(fields, "r"), "r");
    if (hemi) {
      out = Hemisphere{c, r};
    } else {
      out = Sphere{c, r};
    }
  } else {
    if (text.starts_with("plane:")) text.remove_prefix(6);
    auto fields = split_fields(text);
    Plane pl;
    pl.origin = parse_vec3(require(fields, "p"), "p");
    pl.v1 = parse_vec3(require(fields, "v1"), "v1");
    pl.v2 = parse_vec3(require(fields, "v2"), "v2");
    pl.l = parse_number(require(fields, "l"), "l");
    pl.L = parse_number(require(fields, "L"), "L");
    out = pl;
  }
  validate(out);
  return out;
}

std::string to_string(const Parametrization& p) {
  return std::visit(
      [](const auto& q) -> std::string {
        using T = std::decay_t<decltype(q)>;
        if constexpr (std::is_same_v<T, Plane>) {
          return "p=" + fmt(q.origin) + ";v1=" + fmt(q.v1) + ";v2=" + fmt(q.v2) + ";l=" + fmt(q.l) +
                 ";L=" + fmt(q.L);
        } else {
          const char* tag = std::is_same_v<T, Sphere> ? "sphere:" : "hemisphere:";
          return std::string(tag) + "c=" + fmt(q.center) + ";r=" + fmt(q.radius);
        }
      },
      p);
}

}  // namespace viewfield
