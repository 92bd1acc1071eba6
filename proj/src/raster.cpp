#include "viewfield/raster.hpp"

#include "viewfield/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace viewfield {

namespace {

struct ClipVertex {
  Vec3 c;  // camera space: (right, up, depth)
};

struct ScreenVertex {
  double x, y, inv_z;
};

// Sutherland-Hodgman against depth >= near and depth <= far.
int clip_depth(const ClipVertex* in, int n, ClipVertex* out, double plane, bool keep_greater) {
  int m = 0;
  for (int i = 0; i < n; ++i) {
    const ClipVertex& a = in[i];
    const ClipVertex& b = in[(i + 1) % n];
    const double da = keep_greater ? a.c.z() - plane : plane - a.c.z();
    const double db = keep_greater ? b.c.z() - plane : plane - b.c.z();
    if (da >= 0) out[m++] = a;
    if ((da >= 0) != (db >= 0)) {
      const double t = da / (da - db);
      out[m++] = {a.c + t * (b.c - a.c)};
    }
  }
  return m;
}

bool top_left(const ScreenVertex& a, const ScreenVertex& b) {
  const double dx = b.x - a.x, dy = b.y - a.y;
  return dy < 0 || (dy == 0 && dx > 0);
}

class Rasterizer {
 public:
  Rasterizer(ClassImage& img, std::optional<std::vector<double>>* value_channel)
      : img_(img), values_(value_channel) {}

  void triangle(ScreenVertex a, ScreenVertex b, ScreenVertex c, std::uint16_t cls, double value) {
    // Evaluated from a canonical endpoint so that a shared edge gives exactly
    // opposite values in its two triangles and leaves no cracks.
    auto edge = [](const ScreenVertex& p, const ScreenVertex& q, double x, double y) {
      if (q.x < p.x || (q.x == p.x && q.y < p.y)) {
        return -((p.x - q.x) * (y - q.y) - (p.y - q.y) * (x - q.x));
      }
      return (q.x - p.x) * (y - p.y) - (q.y - p.y) * (x - p.x);
    };
    double area = edge(a, b, c.x, c.y);
    if (area == 0 || !std::isfinite(area)) return;
    if (area < 0) {
      std::swap(b, c);
      area = -area;
    }
    const double min_x = std::min({a.x, b.x, c.x}), max_x = std::max({a.x, b.x, c.x});
    const double min_y = std::min({a.y, b.y, c.y}), max_y = std::max({a.y, b.y, c.y});
    const int i0 = std::max(0, static_cast<int>(std::ceil(min_x - 0.5)));
    const int i1 = std::min(img_.width - 1, static_cast<int>(std::floor(max_x - 0.5)));
    const int j0 = std::max(0, static_cast<int>(std::ceil(min_y - 0.5)));
    const int j1 = std::min(img_.height - 1, static_cast<int>(std::floor(max_y - 0.5)));
    if (i0 > i1 || j0 > j1) return;

    const bool tl_ab = top_left(a, b), tl_bc = top_left(b, c), tl_ca = top_left(c, a);
    const double inv_area = 1.0 / area;
    for (int j = j0; j <= j1; ++j) {
      const double py = j + 0.5;
      for (int i = i0; i <= i1; ++i) {
        const double px = i + 0.5;
        const double w_c = edge(a, b, px, py);
        const double w_a = edge(b, c, px, py);
        const double w_b = edge(c, a, px, py);
        if (w_c < 0 || w_a < 0 || w_b < 0) continue;
        if ((w_c == 0 && !tl_ab) || (w_a == 0 && !tl_bc) || (w_b == 0 && !tl_ca)) continue;
        const double inv_z = (w_a * a.inv_z + w_b * b.inv_z + w_c * c.inv_z) * inv_area;
        const double depth = 1.0 / inv_z;
        const std::size_t idx = static_cast<std::size_t>(j) * img_.width + i;
        if (depth < img_.depth[idx]) {
          img_.depth[idx] = depth;
          img_.cls[idx] = cls;
          if (*values_) (**values_)[idx] = value;
        }
      }
    }
  }

 private:
  ClassImage& img_;
  std::optional<std::vector<double>>* values_;
};

}  // namespace

void RenderSettings::validate() const {
  if (!(vertical_fov > 0 && vertical_fov < 180)) throw UserError("camera: vertical fov must lie in (0, 180)");
  if (width < 1 || height < 1) throw UserError("camera: image size must be at least 1x1");
  if (!(near > 0 && near < far)) throw UserError("camera: need 0 < near < far");
}

CameraFrame camera_frame(const Camera& camera) {
  camera.settings.validate();
  const Viewpoint& v = camera.viewpoint;
  if (!std::isfinite(v.x) || !std::isfinite(v.y) || !std::isfinite(v.z) || !std::isfinite(v.alpha) ||
      !std::isfinite(v.gamma)) {
    throw UserError("camera: non-finite viewpoint");
  }
  CameraFrame f;
  f.eye = v.position();
  f.forward = v.direction();
  const Vec3 side = f.forward.cross(Vec3::UnitZ());
  if (std::abs(v.gamma) >= std::numbers::pi / 2 || side.norm() < 1e-12) {
    throw UserError("camera: pitch of +-90 degrees leaves the up vector undefined");
  }
  f.right = side.normalized();
  f.up = f.right.cross(f.forward);
  f.tan_half_v = std::tan(camera.settings.vertical_fov * std::numbers::pi / 360.0);
  f.tan_half_h = f.tan_half_v * camera.settings.width / camera.settings.height;
  return f;
}

BinSpec BinSpec::categorical(int k) {
  BinSpec b;
  b.kind = Kind::categorical;
  b.classes = k;
  b.validate();
  return b;
}

BinSpec BinSpec::scalar(std::vector<double> edges) {
  BinSpec b;
  b.kind = Kind::scalar;
  b.edges = std::move(edges);
  b.validate();
  return b;
}

int BinSpec::bin_count() const {
  return kind == Kind::categorical ? classes : static_cast<int>(edges.size());
}

void BinSpec::validate() const {
  if (kind == Kind::categorical) {
    if (classes < 2) throw ValidationError("bins: categorical bins need at least 2 classes");
    return;
  }
  if (edges.size() < 2) throw ValidationError("bins: scalar bins need at least 2 edges");
  for (std::size_t i = 0; i < edges.size(); ++i) {
    if (!std::isfinite(edges[i])) throw ValidationError("bins: edges must be finite");
    if (i > 0 && !(edges[i] > edges[i - 1])) throw ValidationError("bins: edges must be strictly increasing");
  }
}

std::vector<std::string> BinSpec::names(const std::vector<std::string>& class_names) const {
  if (kind == Kind::categorical) {
    std::vector<std::string> out;
    for (int i = 0; i < classes; ++i) {
      out.push_back(i < static_cast<int>(class_names.size()) ? class_names[i] : "m" + std::to_string(i));
    }
    return out;
  }
  std::vector<std::string> out{"sky"};
  for (std::size_t i = 1; i < edges.size(); ++i) out.push_back("bin" + std::to_string(i));
  return out;
}

ClassImage render(const Scene& scene, const Camera& camera) {
  const CameraFrame f = camera_frame(camera);
  const RenderSettings& s = camera.settings;

  ClassImage img;
  img.width = s.width;
  img.height = s.height;
  const std::size_t n = static_cast<std::size_t>(s.width) * s.height;
  img.cls.assign(n, 0);
  img.depth.assign(n, std::numeric_limits<double>::infinity());
  if (scene.tri_value) img.value = std::vector<double>(n, 0.0);

  std::vector<Vec3> cam(scene.vertices.size());
  for (std::size_t i = 0; i < scene.vertices.size(); ++i) {
    const Vec3 d = scene.vertices[i] - f.eye;
    cam[i] = Vec3(d.dot(f.right), d.dot(f.up), d.dot(f.forward));
  }

  Rasterizer raster(img, &img.value);
  const double half_w = 0.5 * s.width, half_h = 0.5 * s.height;
  auto project = [&](const Vec3& c) {
    const double inv_z = 1.0 / c.z();
    return ScreenVertex{(c.x() * inv_z / f.tan_half_h + 1.0) * half_w,
                        (1.0 - c.y() * inv_z / f.tan_half_v) * half_h, inv_z};
  };

  for (std::size_t t = 0; t < scene.triangles.size(); ++t) {
    const auto& tri = scene.triangles[t];
    const Vec3 &c0 = cam[tri[0]], &c1 = cam[tri[1]], &c2 = cam[tri[2]];
    const double zmin = std::min({c0.z(), c1.z(), c2.z()});
    const double zmax = std::max({c0.z(), c1.z(), c2.z()});
    if (zmax < s.near || zmin > s.far) continue;

    ClipVertex poly_a[5] = {{c0}, {c1}, {c2}};
    ClipVertex poly_b[5];
    int count = 3;
    const ClipVertex* poly = poly_a;
    if (zmin < s.near) {
      count = clip_depth(poly_a, count, poly_b, s.near, true);
      poly = poly_b;
    }
    ClipVertex poly_c[5];
    if (zmax > s.far && count >= 3) {
      count = clip_depth(poly, count, poly_c, s.far, false);
      poly = poly_c;
    }
    if (count < 3) continue;

    ScreenVertex sv[5];
    for (int i = 0; i < count; ++i) sv[i] = project(poly[i].c);
    const double value = scene.tri_value ? (*scene.tri_value)[t] : 0.0;
    for (int i = 1; i + 1 < count; ++i) raster.triangle(sv[0], sv[i], sv[i + 1], scene.tri_class[t], value);
  }
  return img;
}

ThematicDistribution histogram(const ClassImage& image, const BinSpec& bins) {
  bins.validate();
  const int k = bins.bin_count();
  std::vector<std::uint64_t> counts(k, 0);
  const std::size_t n = image.cls.size();
  if (bins.kind == BinSpec::Kind::categorical) {
    for (std::size_t i = 0; i < n; ++i) {
      if (image.cls[i] >= k) {
        throw UserError("histogram: pixel class " + std::to_string(image.cls[i]) + " exceeds bin count " +
                        std::to_string(k));
      }
      ++counts[image.cls[i]];
    }
  } else {
    if (!image.value) throw UserError("histogram: scalar bins need a value channel");
    const auto& edges = bins.edges;
    for (std::size_t i = 0; i < n; ++i) {
      if (image.cls[i] == 0) {
        ++counts[0];
        continue;
      }
      const double v = (*image.value)[i];
      // Bin b (1-based) covers [edges[b-1], edges[b]); out-of-range values clamp.
      auto it = std::upper_bound(edges.begin(), edges.end(), v);
      std::ptrdiff_t b = it - edges.begin();
      b = std::clamp<std::ptrdiff_t>(b, 1, static_cast<std::ptrdiff_t>(edges.size()) - 1);
      ++counts[b];
    }
  }
  ThematicDistribution m;
  m.m.resize(k);
  for (int i = 0; i < k; ++i) m.m[i] = n ? static_cast<double>(counts[i]) / static_cast<double>(n) : 0.0;
  return m;
}

std::vector<std::uint8_t> render_falsecolor(const Scene& scene, const Camera& camera) {
  const ClassImage img = render(scene, camera);
  std::vector<std::uint8_t> rgb(img.cls.size() * 3);
  for (std::size_t i = 0; i < img.cls.size(); ++i) {
    const auto c = img.cls[i];
    const auto& col = c < scene.classes.size() ? scene.classes[c].color : scene.classes[0].color;
    rgb[3 * i] = col[0];
    rgb[3 * i + 1] = col[1];
    rgb[3 * i + 2] = col[2];
  }
  return encode_png_rgb(img.width, img.height, rgb);
}

}  // namespace viewfield
