#include "viewfield/dataset.hpp"

#include "viewfield/error.hpp"
#include "viewfield/json_io.hpp"
#include "viewfield/parallel.hpp"
#include "viewfield/random.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>

namespace viewfield {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;
constexpr int kMaxRejections = 10000;
constexpr double kBuildingMargin = 0.3;

bool inside_building(const Scene& scene, const Vec3& p) {
  for (const auto& b : scene.buildings) {
    if (b.contains(p, kBuildingMargin)) return true;
  }
  return false;
}

// Area-weighted triangle picker over a subset of classes.
class TrianglePicker {
 public:
  TrianglePicker(const Scene& scene, const std::vector<int>& classes) : scene_(scene) {
    double total = 0;
    for (std::size_t t = 0; t < scene.triangles.size(); ++t) {
      if (std::find(classes.begin(), classes.end(), scene.tri_class[t]) == classes.end()) continue;
      const double a = scene.triangle_area(t);
      if (a <= 0) continue;
      total += a;
      tris_.push_back(t);
      cumulative_.push_back(total);
    }
  }

  bool empty() const { return tris_.empty(); }

  Vec3 sample(Rng& rng) const {
    const double r = rng.uniform() * cumulative_.back();
    auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), r);
    const std::size_t k = std::min<std::size_t>(it - cumulative_.begin(), tris_.size() - 1);
    const auto& tri = scene_.triangles[tris_[k]];
    const double s = std::sqrt(rng.uniform()), u = rng.uniform();
    const Vec3& a = scene_.vertices[tri[0]];
    const Vec3& b = scene_.vertices[tri[1]];
    const Vec3& c = scene_.vertices[tri[2]];
    return (1 - s) * a + s * (1 - u) * b + s * u * c;
  }

 private:
  const Scene& scene_;
  std::vector<std::size_t> tris_;
  std::vector<double> cumulative_;
};

std::string format_g9(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

double parse_field(std::string_view s, std::size_t line) {
  double v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw ParseError("views.csv line " + std::to_string(line) + ": bad number '" + std::string(s) + "'", line);
  }
  return v;
}

}  // namespace

SamplingStrategy SamplingStrategy::uniform() {
  SamplingStrategy s;
  s.kind = Kind::uniform;
  s.min_pitch = -30 * kDeg;
  s.max_pitch = 30 * kDeg;
  return s;
}

SamplingStrategy SamplingStrategy::street_level() {
  SamplingStrategy s;
  s.kind = Kind::street_level;
  s.min_pitch = -10 * kDeg;
  s.max_pitch = 30 * kDeg;
  return s;
}

SamplingStrategy SamplingStrategy::facade_mounted() {
  SamplingStrategy s;
  s.kind = Kind::facade_mounted;
  s.min_pitch = -20 * kDeg;
  s.max_pitch = 40 * kDeg;
  s.yaw_jitter = 60 * kDeg;
  return s;
}

SamplingStrategy SamplingStrategy::from_name(const std::string& name) {
  if (name == "uniform") return uniform();
  if (name == "street" || name == "street-level" || name == "street_level") return street_level();
  if (name == "facade" || name == "facade-mounted" || name == "facade_mounted") return facade_mounted();
  throw UserError("unknown sampling strategy '" + name + "' (uniform, street, facade)");
}

void SamplingStrategy::validate() const {
  if (directions_per_position < 1) throw UserError("sampling: directions per position must be >= 1");
  if (!(min_pitch <= max_pitch) || min_pitch <= -std::numbers::pi / 2 || max_pitch >= std::numbers::pi / 2) {
    throw UserError("sampling: pitch range must lie strictly inside (-90, 90) degrees");
  }
  if (kind == Kind::facade_mounted && !(yaw_jitter >= 0 && yaw_jitter < std::numbers::pi / 2)) {
    throw UserError("sampling: facade yaw jitter must lie in [0, 90) degrees");
  }
}

std::vector<Viewpoint> sample_viewpoints(const Scene& scene, const SamplingStrategy& strategy, std::size_t n,
                                         std::uint64_t seed) {
  if (n < 1) throw UserError("sample_viewpoints: n must be >= 1");
  strategy.validate();
  const Aabb box = scene.aabb();
  Rng rng(seed);
  std::vector<Viewpoint> out;
  out.reserve(n);

  auto emit = [&](const Vec3& p, double base_yaw, double yaw_spread) {
    for (int d = 0; d < strategy.directions_per_position && out.size() < n; ++d) {
      Viewpoint v;
      v.x = p.x();
      v.y = p.y();
      v.z = p.z();
      v.alpha = wrap_yaw(base_yaw + rng.uniform(-yaw_spread, yaw_spread));
      v.gamma = rng.uniform(strategy.min_pitch, strategy.max_pitch);
      out.push_back(v);
    }
  };

  switch (strategy.kind) {
    case SamplingStrategy::Kind::uniform: {
      const double zmax = strategy.max_height < 0 ? box.max.z() : strategy.max_height;
      const double zmin = std::max(strategy.min_height, box.min.z());
      if (zmin > zmax || zmax > box.max.z() + 1e-9) {
        throw UserError("sample_viewpoints: height range lies outside the scene bounds");
      }
      while (out.size() < n) {
        Vec3 p;
        int tries = 0;
        do {
          if (++tries > kMaxRejections) throw UserError("sample_viewpoints: no free space in the scene");
          p = Vec3(rng.uniform(box.min.x(), box.max.x()), rng.uniform(box.min.y(), box.max.y()),
                   rng.uniform(zmin, zmax));
        } while (inside_building(scene, p));
        emit(p, std::numbers::pi, std::numbers::pi);
      }
      break;
    }
    case SamplingStrategy::Kind::street_level: {
      const TrianglePicker picker(scene, {scene.class_id("road"), scene.class_id("sidewalk")});
      if (picker.empty()) throw UserError("sample_viewpoints: scene has no road or sidewalk surfaces");
      while (out.size() < n) {
        Vec3 p;
        int tries = 0;
        do {
          if (++tries > kMaxRejections) throw UserError("sample_viewpoints: street cells are all blocked");
          p = picker.sample(rng) + Vec3(0, 0, kEyeHeight);
        } while (inside_building(scene, p));
        emit(p, std::numbers::pi, std::numbers::pi);
      }
      break;
    }
    case SamplingStrategy::Kind::facade_mounted: {
      std::vector<double> cumulative;
      std::vector<std::pair<std::size_t, int>> facades;
      double total = 0;
      for (std::size_t b = 0; b < scene.buildings.size(); ++b) {
        const auto fs = scene.buildings[b].facades();
        for (int f = 0; f < 4; ++f) {
          const double a = fs[f].edge_u.norm() * fs[f].edge_v.norm();
          if (a <= 0) continue;
          total += a;
          cumulative.push_back(total);
          facades.emplace_back(b, f);
        }
      }
      if (facades.empty()) throw UserError("sample_viewpoints: scene has no building facades");
      while (out.size() < n) {
        const double r = rng.uniform() * total;
        const std::size_t k = std::min<std::size_t>(
            std::upper_bound(cumulative.begin(), cumulative.end(), r) - cumulative.begin(), facades.size() - 1);
        const Facade fa = scene.buildings[facades[k].first].facades()[facades[k].second];
        const Vec3 p = fa.origin + rng.uniform() * fa.edge_u + rng.uniform() * fa.edge_v + kFacadeOffset * fa.normal;
        emit(p, direction_angles(fa.normal).first, strategy.yaw_jitter);
      }
      break;
    }
  }
  return out;
}

std::vector<ViewSample> build_dataset(const Scene& scene, std::span<const Viewpoint> viewpoints,
                                      const BinSpec& bins, const RenderSettings& settings, int threads) {
  bins.validate();
  settings.validate();
  std::vector<ViewSample> out(viewpoints.size());
  parallel_for(viewpoints.size(), resolve_threads(threads), [&](std::size_t i) {
    try {
      const ClassImage img = render(scene, Camera{viewpoints[i], settings});
      out[i] = {viewpoints[i], histogram(img, bins)};
    } catch (const UserError& e) {
      throw UserError("viewpoint " + std::to_string(i) + ": " + e.what());
    }
  });
  return out;
}

DatasetSplit split(std::span<const ViewSample> data, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction > 0 && test_fraction <= 1)) throw UserError("split: test fraction must lie in (0, 1]");
  const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * data.size()));
  if (n_test == 0 || n_test >= data.size()) throw UserError("split: train or test part would be empty");
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(std::span(order));
  std::vector<bool> is_test(data.size(), false);
  for (std::size_t i = 0; i < n_test; ++i) is_test[order[i]] = true;
  DatasetSplit out;
  out.train.reserve(data.size() - n_test);
  out.test.reserve(n_test);
  for (std::size_t i = 0; i < data.size(); ++i) (is_test[i] ? out.test : out.train).push_back(data[i]);
  return out;
}

std::vector<ViewSample> subset(std::span<const ViewSample> data, double fraction, std::uint64_t seed) {
  if (!(fraction > 0 && fraction <= 1)) throw UserError("subset: fraction must lie in (0, 1]");
  const auto count = static_cast<std::size_t>(std::llround(fraction * data.size()));
  if (count == 0) throw UserError("subset: result would be empty");
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(std::span(order));
  order.resize(count);
  std::sort(order.begin(), order.end());
  std::vector<ViewSample> out;
  out.reserve(count);
  for (auto i : order) out.push_back(data[i]);
  return out;
}

std::string dataset_to_csv(std::span<const ViewSample> data) {
  const std::size_t k = data.empty() ? 0 : data.front().m_gt.size();
  std::string out = "x,y,z,alpha,gamma";
  for (std::size_t i = 0; i < k; ++i) out += ",m" + std::to_string(i);
  out += '\n';
  for (const auto& s : data) {
    if (s.m_gt.size() != k) throw UserError("dataset: samples disagree on component count");
    const auto& v = s.viewpoint;
    out += format_g9(v.x) + ',' + format_g9(v.y) + ',' + format_g9(v.z) + ',' + format_g9(v.alpha) + ',' +
           format_g9(v.gamma);
    for (double m : s.m_gt.m) out += ',' + format_g9(m);
    out += '\n';
  }
  return out;
}

std::vector<ViewSample> dataset_from_csv(std::string_view text) {
  std::vector<ViewSample> out;
  std::size_t line_no = 0, columns = 0;
  while (!text.empty()) {
    auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text.remove_prefix(nl == std::string_view::npos ? text.size() : nl + 1);
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    std::vector<std::string_view> cells;
    for (;;) {
      auto comma = line.find(',');
      cells.push_back(line.substr(0, comma));
      if (comma == std::string_view::npos) break;
      line.remove_prefix(comma + 1);
    }
    if (line_no == 1) {
      if (cells.size() < 7 || cells[0] != "x" || cells[1] != "y" || cells[2] != "z" || cells[3] != "alpha" ||
          cells[4] != "gamma") {
        throw ParseError("views.csv: header must be x,y,z,alpha,gamma,m0,...", 1);
      }
      for (std::size_t i = 5; i < cells.size(); ++i) {
        if (cells[i] != "m" + std::to_string(i - 5)) throw ParseError("views.csv: bad header column", 1);
      }
      columns = cells.size();
      continue;
    }
    if (cells.size() != columns) {
      throw ParseError("views.csv line " + std::to_string(line_no) + ": expected " + std::to_string(columns) +
                           " columns",
                       line_no);
    }
    ViewSample s;
    s.viewpoint = {parse_field(cells[0], line_no), parse_field(cells[1], line_no), parse_field(cells[2], line_no),
                   parse_field(cells[3], line_no), parse_field(cells[4], line_no)};
    for (std::size_t i = 5; i < cells.size(); ++i) s.m_gt.m.push_back(parse_field(cells[i], line_no));
    out.push_back(std::move(s));
  }
  if (columns == 0) throw ParseError("views.csv: missing header", 1);
  return out;
}

void save_dataset(std::span<const ViewSample> data, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UserError("cannot write " + path.string());
  out << dataset_to_csv(data);
}

std::vector<ViewSample> load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UserError("cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return dataset_from_csv(buf.str());
}

std::filesystem::path meta_path(const std::filesystem::path& csv) {
  auto p = csv;
  p += ".meta.json";
  return p;
}

void save_meta(const DatasetMeta& meta, const std::filesystem::path& path) {
  nlohmann::json j{{"components", meta.components},
                   {"bins", meta.bins},
                   {"render", meta.settings},
                   {"aabb", meta.aabb}};
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UserError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

DatasetMeta load_meta(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UserError("cannot read dataset sidecar " + path.string());
  try {
    const auto j = nlohmann::json::parse(in);
    DatasetMeta m;
    m.components = j.at("components").get<std::vector<std::string>>();
    m.bins = j.at("bins").get<BinSpec>();
    m.settings = j.at("render").get<RenderSettings>();
    m.aabb = j.at("aabb").get<Aabb>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw UserError("dataset sidecar " + path.string() + ": " + e.what());
  }
}

}  // namespace viewfield
