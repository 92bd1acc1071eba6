#include "viewfield/service.hpp"

#include "viewfield/analysis.hpp"
#include "viewfield/error.hpp"
#include "viewfield/json_io.hpp"
#include "viewfield/parallel.hpp"
#include "viewfield/percept.hpp"
#include "viewfield/query.hpp"

#include "httplib.h"
#include "json.hpp"

#include <chrono>
#include <map>
#include <mutex>
#include <numbers>

namespace viewfield {

using nlohmann::json;

namespace {

constexpr std::size_t kMaxRenderPixels = 1024 * 1024;

struct HttpError {
  int status;
  std::string message;
  std::optional<std::size_t> offset;
};

struct LatentPoint {
  std::size_t index;
  std::array<double, 2> xy;
  std::vector<double> m;
};

// Everything derived from one load(); immutable once published.
struct State {
  Scene scene;
  ModelParams model;
  std::vector<ViewSample> dataset;
  std::vector<ViewSample> test;
  std::vector<std::pair<std::string, std::shared_ptr<const PerceptionMetric>>> metrics;
  Pca pca;
  Eigen::MatrixXd test_latents;
  std::vector<std::vector<double>> test_predictions;
};

struct GreenPoint {
  int id;
  Viewpoint viewpoint;
  std::vector<double> latent;
  std::vector<double> m;
  double loss;
};

json vec3(const Vec3& v) { return {v.x(), v.y(), v.z()}; }

json body_json(const httplib::Request& req) {
  try {
    return json::parse(req.body);
  } catch (const json::exception& e) {
    throw HttpError{400, std::string("malformed JSON body: ") + e.what(), std::nullopt};
  }
}

template <typename T>
T field_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key) || j[key].is_null()) return fallback;
  try {
    return j[key].get<T>();
  } catch (const json::exception&) {
    throw HttpError{400, std::string("field '") + key + "' has the wrong type", std::nullopt};
  }
}

std::shared_ptr<const PerceptionMetric> find_metric(const State& s, const std::string& name) {
  for (const auto& [n, m] : s.metrics) {
    if (n == name) return m;
  }
  return std::make_shared<PerceptionMetric>("custom", name, s.model.meta.class_names);
}

Eigen::Vector2d project_latent(const State& s, const Eigen::VectorXd& latent) {
  return s.pca.axes.transpose() * (latent - s.pca.mean);
}

}  // namespace

struct Service::Impl {
  ServiceOptions options;
  httplib::Server server;
  std::mutex state_mutex;
  std::shared_ptr<const State> state;
  std::mutex green_mutex;
  std::vector<GreenPoint> green;
  int next_green_id = 0;

  std::shared_ptr<const State> current() {
    std::lock_guard lock(state_mutex);
    if (!state) throw HttpError{503, "no scene/model loaded yet", std::nullopt};
    return state;
  }

  using Handler = std::function<void(const httplib::Request&, httplib::Response&)>;

  httplib::Server::Handler wrap(Handler h) {
    return [this, h](const httplib::Request& req, httplib::Response& res) {
      const auto start = std::chrono::steady_clock::now();
      auto fail = [&](int status, const std::string& msg, std::optional<std::size_t> offset) {
        json e{{"error", msg}};
        if (offset) e["offset"] = *offset;
        res.status = status;
        res.set_content(e.dump(), "application/json");
      };
      try {
        h(req, res);
        const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (elapsed > options.timeout_seconds) fail(503, "request exceeded the service deadline", std::nullopt);
      } catch (const HttpError& e) {
        fail(e.status, e.message, e.offset);
      } catch (const ParseError& e) {
        fail(400, e.what(), e.offset());
      } catch (const UserError& e) {
        fail(400, e.what(), std::nullopt);
      } catch (const json::exception& e) {
        fail(400, e.what(), std::nullopt);
      } catch (const std::exception& e) {
        fail(500, e.what(), std::nullopt);
      }
    };
  }

  std::chrono::steady_clock::time_point deadline() const {
    return std::chrono::steady_clock::now() +
           std::chrono::duration_cast<std::chrono::steady_clock::duration>(
               std::chrono::duration<double>(options.timeout_seconds * 0.9));
  }

  void routes();
  void meta(const httplib::Request&, httplib::Response&);
  void groundtruth(const httplib::Request&, httplib::Response&);
  void direct(const httplib::Request&, httplib::Response&);
  void inverse(const httplib::Request&, httplib::Response&);
  void render(const httplib::Request&, httplib::Response&);
  void facade(const httplib::Request&, httplib::Response&);
  void latent(const httplib::Request&, httplib::Response&);
};

void Service::Impl::routes() {
  server.set_default_headers({{"Access-Control-Allow-Origin", options.cors_origin},
                              {"Access-Control-Allow-Headers", "Content-Type"},
                              {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
  server.Options(".*", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
  server.Get("/api/meta", wrap([this](auto& q, auto& r) { meta(q, r); }));
  server.Get("/api/groundtruth", wrap([this](auto& q, auto& r) { groundtruth(q, r); }));
  server.Post("/api/query/direct", wrap([this](auto& q, auto& r) { direct(q, r); }));
  server.Post("/api/query/inverse", wrap([this](auto& q, auto& r) { inverse(q, r); }));
  server.Post("/api/render", wrap([this](auto& q, auto& r) { render(q, r); }));
  server.Post("/api/facade", wrap([this](auto& q, auto& r) { facade(q, r); }));
  server.Get("/api/latent", wrap([this](auto& q, auto& r) { latent(q, r); }));
}

void Service::Impl::meta(const httplib::Request&, httplib::Response& res) {
  const auto s = current();
  json classes = json::array();
  for (const auto& c : s->scene.classes) classes.push_back({{"id", c.id}, {"name", c.name}, {"color", c.color}});
  json buildings = json::array();
  for (const auto& b : s->scene.buildings) {
    const auto& f = b.footprint;
    buildings.push_back({{"id", b.id}, {"footprint", {f.x0, f.y0, f.x1, f.y1}}, {"height", b.height}});
  }
  json metrics = json::array();
  for (const auto& [n, m] : s->metrics) metrics.push_back({{"name", n}, {"expression", m->source()}});
  res.set_content(json{{"classes", classes},
                       {"components", s->model.meta.class_names},
                       {"k", s->model.k()},
                       {"aabb", s->scene.aabb()},
                       {"buildings", buildings},
                       {"dataset_size", s->dataset.size()},
                       {"test_size", s->test.size()},
                       {"metrics", metrics},
                       {"render", s->model.meta.render},
                       {"model",
                        {{"parameter_count", s->model.net.parameter_count()},
                         {"provenance", s->model.meta.provenance}}}}
                      .dump(),
                  "application/json");
}

void Service::Impl::groundtruth(const httplib::Request& req, httplib::Response& res) {
  const auto s = current();
  std::size_t limit = s->dataset.size();
  if (req.has_param("limit")) {
    long long n = 0;
    try {
      std::size_t used = 0;
      const std::string text = req.get_param_value("limit");
      n = std::stoll(text, &used);
      if (used != text.size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw HttpError{400, "limit must be an integer", std::nullopt};
    }
    if (n <= 0) throw HttpError{400, "limit must be positive", std::nullopt};
    limit = std::min<std::size_t>(limit, static_cast<std::size_t>(n));
  }
  json rows = json::array();
  for (std::size_t i = 0; i < limit; ++i) {
    const auto& sample = s->dataset[i];
    json row = sample.viewpoint;
    row["m"] = sample.m_gt.m;
    json metrics = json::object();
    for (const auto& [n, m] : s->metrics) metrics[n] = m->eval(sample.m_gt.m);
    row["metrics"] = metrics;
    rows.push_back(std::move(row));
  }
  res.set_content(json{{"components", s->model.meta.class_names}, {"rows", rows}}.dump(), "application/json");
}

void Service::Impl::direct(const httplib::Request& req, httplib::Response& res) {
  const auto s = current();
  const json body = body_json(req);
  if (!body.contains("viewpoints") || !body["viewpoints"].is_array() || body["viewpoints"].empty()) {
    throw HttpError{400, "viewpoints must be a non-empty array", std::nullopt};
  }
  std::vector<Viewpoint> views;
  for (std::size_t i = 0; i < body["viewpoints"].size(); ++i) {
    try {
      views.push_back(body["viewpoints"][i].get<Viewpoint>());
    } catch (const json::exception& e) {
      throw HttpError{400, "viewpoint " + std::to_string(i) + ": " + e.what(), std::nullopt};
    }
  }
  std::shared_ptr<const PerceptionMetric> metric;
  if (body.contains("metric") && !body["metric"].is_null()) metric = find_metric(*s, body["metric"].get<std::string>());
  const auto r = direct_query(s->model, views, metric.get());
  json results = json::array();
  for (std::size_t i = 0; i < r.m.size(); ++i) {
    json row{{"m", r.m[i].m}};
    if (metric) row["metric"] = r.metric[i];
    results.push_back(std::move(row));
  }
  res.set_content(json{{"results", results}, {"clamped", r.clamped}}.dump(), "application/json");
}

void Service::Impl::inverse(const httplib::Request& req, httplib::Response& res) {
  const auto s = current();
  const json body = body_json(req);
  const auto& names = s->model.meta.class_names;
  TargetSpec target;
  if (body.contains("metric")) {
    target = TargetSpec::metric_target(find_metric(*s, body["metric"].get<std::string>()),
                                       field_or<double>(body, "value", 0.0));
  } else if (body.contains("target") && body["target"].is_string()) {
    target = parse_target(body["target"].get<std::string>(), names);
  } else {
    throw HttpError{400, "request needs a 'target' string or a 'metric'", std::nullopt};
  }
  InverseConfig config;
  config.restarts = field_or<int>(body, "count", 10);
  if (config.restarts < 1 || config.restarts > 1000) throw HttpError{400, "count must lie in [1, 1000]", std::nullopt};
  if (body.contains("region") && body["region"].is_string()) {
    config.region = parse_parametrization(body["region"].get<std::string>());
  }
  if (body.contains("direction") && !body["direction"].is_null()) {
    const auto d = body["direction"].get<std::array<double, 2>>();
    config.direction = std::make_pair(d[0], d[1]);
  }
  if (body.contains("config")) {
    const json& c = body["config"];
    config.learning_rate = field_or(c, "learning_rate", config.learning_rate);
    config.max_iterations = field_or(c, "max_iterations", config.max_iterations);
    config.tolerance = field_or(c, "tolerance", config.tolerance);
    config.seed = field_or<std::uint64_t>(c, "seed", config.seed);
  }
  config.deadline = deadline();
  const auto results = inverse_gradient(s->model, target, config);

  std::vector<Viewpoint> views;
  for (const auto& r : results) views.push_back(r.viewpoint);
  const Eigen::MatrixXd latents = latent_codes(s->model, views);

  json out = json::array();
  std::vector<GreenPoint> fresh;
  {
    std::lock_guard lock(green_mutex);
    for (std::size_t i = 0; i < results.size(); ++i) {
      const auto& r = results[i];
      const Eigen::Vector2d xy = project_latent(*s, latents.col(i));
      GreenPoint g{next_green_id++, r.viewpoint,
                   std::vector<double>(latents.col(i).data(), latents.col(i).data() + latents.rows()), r.m, r.loss};
      json row{{"id", g.id},
               {"rank", i},
               {"viewpoint", r.viewpoint},
               {"m", r.m},
               {"loss", r.loss},
               {"status", to_string(r.status)},
               {"iterations", r.iterations},
               {"restart", r.restart},
               {"latent", {xy.x(), xy.y()}}};
      if (r.ab) row["ab"] = {r.ab->first, r.ab->second};
      out.push_back(std::move(row));
      fresh.push_back(std::move(g));
    }
    green = std::move(fresh);
  }
  res.set_content(json{{"results", out}}.dump(), "application/json");
}

void Service::Impl::render(const httplib::Request& req, httplib::Response& res) {
  const auto s = current();
  const json body = body_json(req);
  if (!body.contains("viewpoint")) throw HttpError{400, "missing viewpoint", std::nullopt};
  Viewpoint v;
  try {
    v = body["viewpoint"].get<Viewpoint>();
  } catch (const json::exception& e) {
    throw HttpError{400, std::string("viewpoint: ") + e.what(), std::nullopt};
  }
  RenderSettings settings = s->model.meta.render;
  settings.width = field_or(body, "width", 256);
  settings.height = field_or(body, "height", 256);
  if (settings.width < 1 || settings.height < 1 ||
      static_cast<std::size_t>(settings.width) * static_cast<std::size_t>(settings.height) > kMaxRenderPixels) {
    throw HttpError{400, "image size must lie between 1x1 and 1024x1024 pixels", std::nullopt};
  }
  const auto png = render_falsecolor(s->scene, Camera{v, settings});
  res.set_content(std::string(png.begin(), png.end()), "image/png");
}

void Service::Impl::facade(const httplib::Request& req, httplib::Response& res) {
  const auto s = current();
  const json body = body_json(req);
  const int building = field_or(body, "building", -1);
  const double patch = field_or(body, "patch_size", 6.0);
  const int samples = field_or(body, "samples", 5);
  const auto seed = field_or<std::uint64_t>(body, "seed", 0);
  const std::string theme = field_or<std::string>(body, "theme", "sky");
  const bool known = std::any_of(s->scene.buildings.begin(), s->scene.buildings.end(),
                                 [&](const Building& b) { return b.id == building; });
  if (!known) throw HttpError{404, "unknown building " + std::to_string(building), std::nullopt};

  const auto& names = s->model.meta.class_names;
  auto idx = std::find(names.begin(), names.end(), theme);
  std::shared_ptr<const PerceptionMetric> metric;
  if (idx == names.end()) metric = find_metric(*s, theme);
  std::optional<std::array<double, 2>> filter;
  if (body.contains("filter") && !body["filter"].is_null()) filter = body["filter"].get<std::array<double, 2>>();

  const auto patches = facade_summary(s->model, s->scene, building, patch, samples, seed);
  json out = json::array();
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto& p : patches) {
    const double value = metric ? metric->eval(p.m.m) : p.m[idx - names.begin()];
    if (filter && !(value >= (*filter)[0] && value <= (*filter)[1])) continue;
    lo = std::min(lo, value);
    hi = std::max(hi, value);
    out.push_back({{"center", vec3(p.patch.center)},
                   {"normal", vec3(p.patch.normal)},
                   {"origin", vec3(p.patch.origin)},
                   {"edge_u", vec3(p.patch.edge_u)},
                   {"edge_v", vec3(p.patch.edge_v)},
                   {"facade", p.patch.facade},
                   {"value", value},
                   {"m", p.m.m}});
  }
  json legend = out.empty() ? json(nullptr) : json{{"min", lo}, {"max", hi}};
  res.set_content(json{{"building", building},
                       {"theme", theme},
                       {"patch_count", patches.size()},
                       {"patches", out},
                       {"legend", legend}}
                      .dump(),
                  "application/json");
}

void Service::Impl::latent(const httplib::Request& req, httplib::Response& res) {
  const auto s = current();
  std::optional<TargetSpec> filter;
  if (req.has_param("subset") && !req.get_param_value("subset").empty()) {
    filter = parse_target(req.get_param_value("subset"), s->model.meta.class_names);
  }
  json purple = json::array();
  for (std::size_t i = 0; i < s->test_predictions.size(); ++i) {
    const auto& m = s->test_predictions[i];
    if (filter && filter->loss(m) > 0) continue;
    const Eigen::Vector2d xy = project_latent(*s, s->test_latents.col(i));
    purple.push_back({{"index", i}, {"x", xy.x()}, {"y", xy.y()}, {"viewpoint", s->test[i].viewpoint}, {"m", m}});
  }
  json greens = json::array();
  {
    std::lock_guard lock(green_mutex);
    for (const auto& g : green) {
      const Eigen::Vector2d xy =
          project_latent(*s, Eigen::Map<const Eigen::VectorXd>(g.latent.data(), static_cast<Eigen::Index>(g.latent.size())));
      greens.push_back({{"id", g.id}, {"x", xy.x()}, {"y", xy.y()}, {"viewpoint", g.viewpoint}, {"m", g.m}, {"loss", g.loss}});
    }
  }
  res.set_content(json{{"purple", purple}, {"green", greens}}.dump(), "application/json");
}

Service::Service(ServiceOptions options) : impl_(std::make_unique<Impl>()) {
  impl_->options = std::move(options);
  const int workers = std::max(2, resolve_threads(impl_->options.workers));
  impl_->server.new_task_queue = [workers] { return new httplib::ThreadPool(static_cast<std::size_t>(workers)); };
  const auto seconds = static_cast<time_t>(std::ceil(impl_->options.timeout_seconds));
  impl_->server.set_read_timeout(seconds, 0);
  impl_->server.set_write_timeout(seconds, 0);
  impl_->routes();
}

Service::~Service() { stop(); }

void Service::load(Scene scene, ModelParams model, std::vector<ViewSample> dataset) {
  scene.validate();
  const int k = model.k();
  if (model.meta.bins.kind == BinSpec::Kind::categorical) {
    if (scene.class_names() != model.meta.class_names) {
      throw UserError("service: scene classes do not match the model's components");
    }
  }
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    if (static_cast<int>(dataset[i].m_gt.size()) != k) {
      throw UserError("service: dataset row " + std::to_string(i) + " has the wrong component count");
    }
  }
  auto state = std::make_shared<State>();
  for (const auto& [name, source] : impl_->options.metrics) {
    state->metrics.emplace_back(name, std::make_shared<PerceptionMetric>(name, source, model.meta.class_names));
  }
  if (dataset.size() >= 2) {
    state->test = split(dataset, impl_->options.test_fraction, impl_->options.split_seed).test;
  } else {
    state->test = dataset;
  }
  if (state->test.size() > impl_->options.max_latent_points) state->test.resize(impl_->options.max_latent_points);
  if (!state->test.empty()) {
    std::vector<Viewpoint> views;
    for (const auto& t : state->test) views.push_back(t.viewpoint);
    const Prediction p = predict(model, views, true);
    state->test_latents = p.latent.cast<double>();
    for (const auto& d : to_distributions(p.output)) state->test_predictions.push_back(d.m);
  }
  if (state->test_latents.cols() >= 2) {
    state->pca = principal_components(state->test_latents, 2);
  } else {
    state->pca.mean = Eigen::VectorXd::Zero(Network<float>::kHeadWidth);
    state->pca.axes = Eigen::MatrixXd::Identity(Network<float>::kHeadWidth, 2);
  }
  state->scene = std::move(scene);
  state->model = std::move(model);
  state->dataset = std::move(dataset);
  {
    std::lock_guard lock(impl_->state_mutex);
    impl_->state = std::move(state);
  }
  std::lock_guard lock(impl_->green_mutex);
  impl_->green.clear();
}

int Service::bind() {
  auto& o = impl_->options;
  if (o.port == 0) {
    o.port = impl_->server.bind_to_any_port(o.host);
    if (o.port < 0) throw UserError("service: cannot bind " + o.host);
  } else if (!impl_->server.bind_to_port(o.host, o.port)) {
    throw UserError("service: cannot bind " + o.host + ":" + std::to_string(o.port));
  }
  return o.port;
}

void Service::run() { impl_->server.listen_after_bind(); }

void Service::stop() {
  if (impl_->server.is_running()) impl_->server.stop();
}

void Service::wait_until_ready() const { impl_->server.wait_until_ready(); }

}  // namespace viewfield
