#include "viewfield/scene.hpp"

#include "viewfield/error.hpp"
#include "viewfield/random.hpp"

#include "json.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

namespace viewfield {

namespace {

using json = nlohmann::json;

constexpr double kTreeSpacing = 10.0;
constexpr double kParkTreeSpacing = 8.0;
constexpr int kLotsPerSide = 2;
constexpr int kTreeSegments = 6;

class SceneBuilder {
 public:
  explicit SceneBuilder(Scene& scene) : scene_(scene) {}

  std::uint32_t vertex(double x, double y, double z) {
    scene_.vertices.emplace_back(x, y, z);
    return static_cast<std::uint32_t>(scene_.vertices.size() - 1);
  }

  void triangle(std::uint32_t a, std::uint32_t b, std::uint32_t c, int cls) {
    scene_.triangles.push_back({a, b, c});
    scene_.tri_class.push_back(static_cast<std::uint16_t>(cls));
  }

  // Ground-level rectangle facing up.
  void ground(double x0, double y0, double x1, double y1, int cls) {
    if (x1 <= x0 || y1 <= y0) return;
    auto a = vertex(x0, y0, 0), b = vertex(x1, y0, 0), c = vertex(x1, y1, 0), d = vertex(x0, y1, 0);
    triangle(a, b, c, cls);
    triangle(a, c, d, cls);
  }

  // Closed box with outward-facing winding: 12 triangles.
  void box(const Rect& r, double z0, double z1, int cls) {
    std::uint32_t v[8];
    for (int i = 0; i < 2; ++i) {
      const double z = i == 0 ? z0 : z1;
      v[4 * i + 0] = vertex(r.x0, r.y0, z);
      v[4 * i + 1] = vertex(r.x1, r.y0, z);
      v[4 * i + 2] = vertex(r.x1, r.y1, z);
      v[4 * i + 3] = vertex(r.x0, r.y1, z);
    }
    static constexpr int faces[12][3] = {{0, 3, 2}, {0, 2, 1}, {4, 5, 6}, {4, 6, 7},
                                         {0, 1, 5}, {0, 5, 4}, {1, 2, 6}, {1, 6, 5},
                                         {2, 3, 7}, {2, 7, 6}, {3, 0, 4}, {3, 4, 7}};
    for (const auto& f : faces) triangle(v[f[0]], v[f[1]], v[f[2]], cls);
  }

  // Open cylinder trunk under a closed cone crown.
  void tree(double x, double y, double scale, int cls) {
    const double trunk_r = 0.3 * scale, trunk_h = 2.5 * scale;
    const double crown_r = 2.0 * scale, crown_h = 4.5 * scale;
    std::uint32_t bottom[kTreeSegments], top[kTreeSegments], rim[kTreeSegments];
    for (int i = 0; i < kTreeSegments; ++i) {
      const double t = 2.0 * std::numbers::pi * i / kTreeSegments;
      const double c = std::cos(t), s = std::sin(t);
      bottom[i] = vertex(x + trunk_r * c, y + trunk_r * s, 0.0);
      top[i] = vertex(x + trunk_r * c, y + trunk_r * s, trunk_h);
      rim[i] = vertex(x + crown_r * c, y + crown_r * s, trunk_h);
    }
    const auto apex = vertex(x, y, trunk_h + crown_h);
    const auto hub = vertex(x, y, trunk_h);
    for (int i = 0; i < kTreeSegments; ++i) {
      const int j = (i + 1) % kTreeSegments;
      triangle(bottom[i], bottom[j], top[j], cls);
      triangle(bottom[i], top[j], top[i], cls);
      triangle(rim[i], rim[j], apex, cls);
      triangle(hub, rim[j], rim[i], cls);
    }
  }

 private:
  Scene& scene_;
};

std::array<std::uint8_t, 3> color_of(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 3) throw ValidationError(where + ": expected [r,g,b]");
  std::array<std::uint8_t, 3> c{};
  for (int i = 0; i < 3; ++i) {
    if (!j[i].is_number_integer() || j[i].get<int>() < 0 || j[i].get<int>() > 255) {
      throw ValidationError(where + ": color components must be integers in [0,255]");
    }
    c[i] = static_cast<std::uint8_t>(j[i].get<int>());
  }
  return c;
}

const json& field(const json& obj, const char* key, const std::string& where) {
  if (!obj.is_object()) throw ValidationError(where + ": expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) throw ValidationError(where + ": missing field '" + key + "'");
  return *it;
}

template <typename T>
T number(const json& j, const std::string& where) {
  if constexpr (std::is_integral_v<T>) {
    if (!j.is_number_integer() || (std::is_unsigned_v<T> && j.get<std::int64_t>() < 0)) {
      throw ValidationError(where + ": expected a non-negative integer");
    }
  } else {
    if (!j.is_number()) throw ValidationError(where + ": expected a number");
  }
  return j.get<T>();
}

std::size_t line_of(std::string_view text, std::size_t byte) {
  byte = std::min(byte, text.size());
  return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + byte, '\n'));
}

}  // namespace

std::vector<ThematicClass> default_classes() {
  return {{0, "sky", {135, 206, 235}},    {1, "building", {178, 102, 76}},
          {2, "water", {30, 90, 200}},    {3, "road", {70, 70, 70}},
          {4, "sidewalk", {190, 190, 180}}, {5, "surface", {150, 190, 110}},
          {6, "tree", {30, 120, 40}}};
}

std::array<Facade, 4> Building::facades() const {
  const Rect& r = footprint;
  const Vec3 up(0, 0, height);
  return {{{Vec3(r.x0, r.y0, 0), Vec3(r.width(), 0, 0), up, Vec3(0, -1, 0)},
           {Vec3(r.x1, r.y0, 0), Vec3(0, r.depth(), 0), up, Vec3(1, 0, 0)},
           {Vec3(r.x1, r.y1, 0), Vec3(-r.width(), 0, 0), up, Vec3(0, 1, 0)},
           {Vec3(r.x0, r.y1, 0), Vec3(0, -r.depth(), 0), up, Vec3(-1, 0, 0)}}};
}

bool Building::contains(const Vec3& p, double margin) const {
  return p.x() >= footprint.x0 - margin && p.x() <= footprint.x1 + margin &&
         p.y() >= footprint.y0 - margin && p.y() <= footprint.y1 + margin && p.z() >= -margin &&
         p.z() <= height + margin;
}

int Scene::class_id(std::string_view name) const {
  for (const auto& c : classes) {
    if (c.name == name) return c.id;
  }
  return -1;
}

std::vector<std::string> Scene::class_names() const {
  std::vector<std::string> out;
  for (const auto& c : classes) out.push_back(c.name);
  return out;
}

Aabb Scene::aabb() const {
  if (vertices.empty()) return Aabb{};
  Aabb box = Aabb::empty();
  for (const auto& v : vertices) box.extend(v);
  return box;
}

double Scene::triangle_area(std::size_t t) const {
  const auto& tri = triangles[t];
  return 0.5 * (vertices[tri[1]] - vertices[tri[0]]).cross(vertices[tri[2]] - vertices[tri[0]]).norm();
}

void Scene::validate() const {
  if (classes.empty() || classes[0].name != "sky") {
    throw ValidationError("scene: class 0 must be 'sky'");
  }
  std::set<std::string> names;
  for (std::size_t i = 0; i < classes.size(); ++i) {
    const auto& c = classes[i];
    if (c.id != static_cast<int>(i)) throw ValidationError("scene: class ids must be contiguous from 0");
    if (c.name.empty()) throw ValidationError("scene: class " + std::to_string(i) + " has no name");
    for (char ch : c.name) {
      const bool ok = (ch >= 'a' && ch <= 'z') || (ch >= '0' && ch <= '9') || ch == '_';
      if (!ok) throw ValidationError("scene: class name '" + c.name + "' must be lowercase ASCII");
    }
    if (!names.insert(c.name).second) throw ValidationError("scene: duplicate class '" + c.name + "'");
  }
  if (tri_class.size() != triangles.size()) {
    throw ValidationError("scene: tri_class needs one entry per triangle");
  }
  for (std::size_t t = 0; t < triangles.size(); ++t) {
    for (auto idx : triangles[t]) {
      if (idx >= vertices.size()) {
        throw ValidationError("scene: triangle " + std::to_string(t) + " references vertex " +
                              std::to_string(idx) + " of " + std::to_string(vertices.size()));
      }
    }
    if (tri_class[t] < 1 || tri_class[t] >= classes.size()) {
      throw ValidationError("scene: triangle " + std::to_string(t) + " has unknown class " +
                            std::to_string(tri_class[t]));
    }
  }
  if (tri_value && tri_value->size() != triangles.size()) {
    throw ValidationError("scene: tri_value needs one entry per triangle");
  }
  for (const auto& b : buildings) {
    if (b.tri_start + b.tri_count > triangles.size()) {
      throw ValidationError("scene: building " + std::to_string(b.id) + " triangle range out of bounds");
    }
    if (!(b.height >= 0) || b.footprint.x1 < b.footprint.x0 || b.footprint.y1 < b.footprint.y0) {
      throw ValidationError("scene: building " + std::to_string(b.id) + " has a degenerate footprint");
    }
  }
}

Scene generate_city(std::uint64_t seed, const CityParams& p) {
  if (p.grid_size < 1) throw UserError("generate_city: grid size must be >= 1");
  if (!(p.block_size > 0) || !(p.street_width > 0) || !(p.max_height > 0) ||
      !(p.sidewalk_width >= 0) || 2 * p.sidewalk_width >= p.block_size) {
    throw UserError("generate_city: dimensions must be positive (and sidewalks narrower than blocks)");
  }
  for (double d : {p.building_density, p.tree_density, p.water_fraction}) {
    if (!(d >= 0.0 && d <= 1.0)) throw UserError("generate_city: densities must lie in [0,1]");
  }

  Scene scene;
  scene.classes = default_classes();
  const int kBuilding = scene.class_id("building"), kWater = scene.class_id("water"),
            kRoad = scene.class_id("road"), kSidewalk = scene.class_id("sidewalk"),
            kSurface = scene.class_id("surface"), kTree = scene.class_id("tree");

  SceneBuilder build(scene);
  Rng rng(seed);

  const int n = p.grid_size;
  const double pitch = p.block_size + p.street_width;
  const double total = n * pitch + p.street_width;
  const double sw = p.sidewalk_width;

  // Streets: full-width east-west strips, north-south strips between them.
  for (int j = 0; j <= n; ++j) build.ground(0, j * pitch, total, j * pitch + p.street_width, kRoad);
  for (int i = 0; i <= n; ++i) {
    for (int j = 0; j < n; ++j) {
      build.ground(i * pitch, j * pitch + p.street_width, i * pitch + p.street_width, (j + 1) * pitch,
                   kRoad);
    }
  }

  struct Lot {
    Rect area;
    bool water = false;
  };
  std::vector<Lot> lots;
  std::vector<Rect> blocks;
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < n; ++i) {
      const Rect b{p.street_width + i * pitch, p.street_width + j * pitch,
                   p.street_width + i * pitch + p.block_size, p.street_width + j * pitch + p.block_size};
      blocks.push_back(b);
      build.ground(b.x0, b.y0, b.x1, b.y0 + sw, kSidewalk);
      build.ground(b.x0, b.y1 - sw, b.x1, b.y1, kSidewalk);
      build.ground(b.x0, b.y0 + sw, b.x0 + sw, b.y1 - sw, kSidewalk);
      build.ground(b.x1 - sw, b.y0 + sw, b.x1, b.y1 - sw, kSidewalk);
      const double lot = (p.block_size - 2 * sw) / kLotsPerSide;
      for (int lj = 0; lj < kLotsPerSide; ++lj) {
        for (int li = 0; li < kLotsPerSide; ++li) {
          const double x0 = b.x0 + sw + li * lot, y0 = b.y0 + sw + lj * lot;
          lots.push_back({{x0, y0, x0 + lot, y0 + lot}});
        }
      }
    }
  }

  // Water lots: exact proportion, at least one when requested, never all.
  std::size_t n_water = static_cast<std::size_t>(std::lround(p.water_fraction * lots.size()));
  if (p.water_fraction > 0 && n_water == 0) n_water = 1;
  n_water = std::min(n_water, lots.size() - 1);
  {
    std::vector<std::size_t> order(lots.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(std::span(order));
    for (std::size_t i = 0; i < n_water; ++i) lots[order[i]].water = true;
  }

  std::vector<bool> occupied(lots.size(), false);
  std::vector<Rect> footprints;
  std::vector<double> heights;
  for (std::size_t li = 0; li < lots.size(); ++li) {
    const Lot& lot = lots[li];
    build.ground(lot.area.x0, lot.area.y0, lot.area.x1, lot.area.y1, lot.water ? kWater : kSurface);
    if (lot.water) continue;
    // Draws happen unconditionally so the sequence is independent of density.
    const bool place = rng.bernoulli(p.building_density);
    const double setback_x0 = rng.uniform(1.5, 4.0), setback_x1 = rng.uniform(1.5, 4.0);
    const double setback_y0 = rng.uniform(1.5, 4.0), setback_y1 = rng.uniform(1.5, 4.0);
    const double u = rng.uniform();
    if (!place) continue;
    occupied[li] = true;
    footprints.push_back({lot.area.x0 + setback_x0, lot.area.y0 + setback_y0, lot.area.x1 - setback_x1,
                          lot.area.y1 - setback_y1});
    heights.push_back(p.max_height * (0.15 + 0.85 * u * u));
  }
  if (p.building_density > 0 && footprints.empty()) {
    for (std::size_t li = 0; li < lots.size(); ++li) {
      if (lots[li].water) continue;
      const Rect& a = lots[li].area;
      occupied[li] = true;
      footprints.push_back({a.x0 + 2.0, a.y0 + 2.0, a.x1 - 2.0, a.y1 - 2.0});
      heights.push_back(0.5 * p.max_height);
      break;
    }
  }
  for (std::size_t i = 0; i < footprints.size(); ++i) {
    Building b;
    b.id = static_cast<int>(i);
    b.tri_start = scene.triangles.size();
    b.footprint = footprints[i];
    b.height = heights[i];
    build.box(b.footprint, 0.0, b.height, kBuilding);
    b.tri_count = scene.triangles.size() - b.tri_start;
    scene.buildings.push_back(b);
  }

  // Street trees along the middle of each sidewalk ring, park trees in empty lots.
  std::size_t trees = 0;
  auto maybe_tree = [&](double x, double y) {
    const bool place = rng.bernoulli(p.tree_density);
    const double scale = rng.uniform(0.8, 1.2);
    if (!place) return;
    build.tree(x, y, scale, kTree);
    ++trees;
  };
  for (const Rect& b : blocks) {
    const double off = 0.5 * sw;
    const int per_side = std::max(1, static_cast<int>(std::floor((p.block_size - sw) / kTreeSpacing)));
    const double step = (p.block_size - sw) / per_side;
    for (int s = 0; s < per_side; ++s) {
      const double t = off + s * step;
      maybe_tree(b.x0 + t, b.y0 + off);
      maybe_tree(b.x1 - off, b.y0 + t);
      maybe_tree(b.x1 - t, b.y1 - off);
      maybe_tree(b.x0 + off, b.y1 - t);
    }
  }
  for (std::size_t li = 0; li < lots.size(); ++li) {
    if (lots[li].water || occupied[li]) continue;
    const Rect& a = lots[li].area;
    for (double y = a.y0 + kParkTreeSpacing / 2; y < a.y1; y += kParkTreeSpacing) {
      for (double x = a.x0 + kParkTreeSpacing / 2; x < a.x1; x += kParkTreeSpacing) maybe_tree(x, y);
    }
  }
  if (p.tree_density > 0 && trees == 0) {
    build.tree(blocks[0].x0 + 0.5 * sw, blocks[0].y0 + 0.5 * sw, 1.0, kTree);
  }

  scene.validate();
  return scene;
}

Scene relabel_materials(const Scene& scene, double glass_fraction, std::uint64_t seed) {
  if (!(glass_fraction >= 0.0 && glass_fraction <= 1.0)) {
    throw UserError("relabel_materials: glass fraction must lie in [0,1]");
  }
  const int building = scene.class_id("building");
  if (building < 0) throw UserError("relabel_materials: scene has no 'building' class");
  Scene out = scene;
  out.classes[building].name = "brick";
  out.classes[building].color = {170, 74, 68};
  const int glass = static_cast<int>(out.classes.size());
  out.classes.push_back({glass, "glass", {120, 200, 230}});

  std::vector<std::size_t> order(out.buildings.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(std::span(order));
  const auto n_glass = static_cast<std::size_t>(std::lround(glass_fraction * order.size()));
  for (std::size_t i = 0; i < n_glass; ++i) {
    const Building& b = out.buildings[order[i]];
    for (std::size_t t = b.tri_start; t < b.tri_start + b.tri_count; ++t) {
      out.tri_class[t] = static_cast<std::uint16_t>(glass);
    }
  }
  out.validate();
  return out;
}

std::string scene_to_json(const Scene& scene) {
  // One array element per line keeps large meshes diffable.
  std::ostringstream os;
  auto list = [&os](const char* key, const auto& items, auto&& to_json, bool last = false) {
    os << "\"" << key << "\":[";
    for (std::size_t i = 0; i < items.size(); ++i) {
      os << (i ? ",\n" : "\n") << to_json(items[i]).dump();
    }
    os << (items.empty() ? "]" : "\n]") << (last ? "\n" : ",\n");
  };
  os << "{\"version\":1,\n";
  list("classes", scene.classes, [](const ThematicClass& c) {
    return json{{"id", c.id}, {"name", c.name}, {"color", {c.color[0], c.color[1], c.color[2]}}};
  });
  list("vertices", scene.vertices, [](const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); });
  list("triangles", scene.triangles, [](const Scene::Triangle& t) { return json::array({t[0], t[1], t[2]}); });
  os << "\"tri_class\":" << json(scene.tri_class).dump() << ",\n";
  os << "\"tri_value\":" << (scene.tri_value ? json(*scene.tri_value).dump() : "null") << ",\n";
  list(
      "buildings", scene.buildings,
      [](const Building& b) {
        nlohmann::ordered_json j;
        j["id"] = b.id;
        j["tri_start"] = b.tri_start;
        j["tri_count"] = b.tri_count;
        j["footprint"] = {b.footprint.x0, b.footprint.y0, b.footprint.x1, b.footprint.y1};
        j["height"] = b.height;
        return j;
      },
      true);
  os << "}\n";
  return os.str();
}

Scene scene_from_json(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    const std::size_t line = line_of(text, e.byte == 0 ? 0 : e.byte - 1);
    throw ParseError("scene: malformed JSON on line " + std::to_string(line) + ": " + e.what(), e.byte);
  }
  if (number<int>(field(doc, "version", "scene"), "scene.version") != 1) {
    throw ValidationError("scene: unsupported version");
  }
  Scene s;
  const auto& classes = field(doc, "classes", "scene");
  if (!classes.is_array()) throw ValidationError("scene.classes: expected an array");
  for (std::size_t i = 0; i < classes.size(); ++i) {
    const std::string where = "scene.classes[" + std::to_string(i) + "]";
    ThematicClass c;
    c.id = number<int>(field(classes[i], "id", where), where + ".id");
    const auto& name = field(classes[i], "name", where);
    if (!name.is_string()) throw ValidationError(where + ".name: expected a string");
    c.name = name.get<std::string>();
    c.color = color_of(field(classes[i], "color", where), where + ".color");
    s.classes.push_back(c);
  }
  const auto& verts = field(doc, "vertices", "scene");
  if (!verts.is_array()) throw ValidationError("scene.vertices: expected an array");
  s.vertices.reserve(verts.size());
  for (std::size_t i = 0; i < verts.size(); ++i) {
    const std::string where = "scene.vertices[" + std::to_string(i) + "]";
    if (!verts[i].is_array() || verts[i].size() != 3) throw ValidationError(where + ": expected [x,y,z]");
    s.vertices.emplace_back(number<double>(verts[i][0], where), number<double>(verts[i][1], where),
                            number<double>(verts[i][2], where));
  }
  const auto& tris = field(doc, "triangles", "scene");
  if (!tris.is_array()) throw ValidationError("scene.triangles: expected an array");
  s.triangles.reserve(tris.size());
  for (std::size_t i = 0; i < tris.size(); ++i) {
    const std::string where = "scene.triangles[" + std::to_string(i) + "]";
    if (!tris[i].is_array() || tris[i].size() != 3) throw ValidationError(where + ": expected [a,b,c]");
    s.triangles.push_back({number<std::uint32_t>(tris[i][0], where), number<std::uint32_t>(tris[i][1], where),
                           number<std::uint32_t>(tris[i][2], where)});
  }
  const auto& cls = field(doc, "tri_class", "scene");
  if (!cls.is_array()) throw ValidationError("scene.tri_class: expected an array");
  for (std::size_t i = 0; i < cls.size(); ++i) {
    const auto v = number<std::uint32_t>(cls[i], "scene.tri_class[" + std::to_string(i) + "]");
    if (v > UINT16_MAX) throw ValidationError("scene.tri_class[" + std::to_string(i) + "]: out of range");
    s.tri_class.push_back(static_cast<std::uint16_t>(v));
  }
  const auto& vals = field(doc, "tri_value", "scene");
  if (!vals.is_null()) {
    if (!vals.is_array()) throw ValidationError("scene.tri_value: expected an array or null");
    std::vector<double> tv;
    for (std::size_t i = 0; i < vals.size(); ++i) {
      tv.push_back(number<double>(vals[i], "scene.tri_value[" + std::to_string(i) + "]"));
    }
    s.tri_value = std::move(tv);
  }
  const auto& blds = field(doc, "buildings", "scene");
  if (!blds.is_array()) throw ValidationError("scene.buildings: expected an array");
  for (std::size_t i = 0; i < blds.size(); ++i) {
    const std::string where = "scene.buildings[" + std::to_string(i) + "]";
    Building b;
    b.id = number<int>(field(blds[i], "id", where), where + ".id");
    b.tri_start = number<std::size_t>(field(blds[i], "tri_start", where), where + ".tri_start");
    b.tri_count = number<std::size_t>(field(blds[i], "tri_count", where), where + ".tri_count");
    const auto& fp = field(blds[i], "footprint", where);
    if (!fp.is_array() || fp.size() != 4) throw ValidationError(where + ".footprint: expected [x0,y0,x1,y1]");
    b.footprint = {number<double>(fp[0], where), number<double>(fp[1], where), number<double>(fp[2], where),
                   number<double>(fp[3], where)};
    b.height = number<double>(field(blds[i], "height", where), where + ".height");
    s.buildings.push_back(b);
  }
  s.validate();
  return s;
}

void save_scene(const Scene& scene, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UserError("cannot write scene file " + path.string());
  out << scene_to_json(scene);
  if (!out) throw UserError("failed writing scene file " + path.string());
}

Scene load_scene(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UserError("cannot read scene file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return scene_from_json(buf.str());
}

std::vector<FacadePatch> facade_patches(const Building& building, double patch_size) {
  if (!(patch_size > 0)) throw UserError("facade_patches: patch size must be positive");
  std::vector<FacadePatch> out;
  const auto facades = building.facades();
  for (int f = 0; f < 4; ++f) {
    const Facade& fa = facades[f];
    const double w = fa.edge_u.norm(), h = fa.edge_v.norm();
    if (w <= 0 || h <= 0) continue;
    const Vec3 du = fa.edge_u / w, dv = fa.edge_v / h;
    // The epsilon keeps exact multiples (e.g. 30.48 / 6.096) from gaining a sliver row.
    const int nu = static_cast<int>(std::ceil(w / patch_size - 1e-9));
    const int nv = static_cast<int>(std::ceil(h / patch_size - 1e-9));
    for (int j = 0; j < nv; ++j) {
      const double v0 = j * patch_size, v1 = std::min((j + 1) * patch_size, h);
      for (int i = 0; i < nu; ++i) {
        const double u0 = i * patch_size, u1 = std::min((i + 1) * patch_size, w);
        FacadePatch p;
        p.origin = fa.origin + u0 * du + v0 * dv;
        p.edge_u = (u1 - u0) * du;
        p.edge_v = (v1 - v0) * dv;
        p.center = p.origin + 0.5 * (p.edge_u + p.edge_v);
        p.normal = fa.normal;
        p.facade = f;
        out.push_back(p);
      }
    }
  }
  return out;
}

}  // namespace viewfield
