#include "viewfield/query.hpp"

#include "viewfield/error.hpp"
#include "viewfield/random.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <numbers>
#include <numeric>

namespace viewfield {

TargetSpec TargetSpec::exact_vector(std::vector<double> m, std::vector<bool> mask) {
  TargetSpec t;
  t.kind = Kind::exact;
  if (mask.empty()) mask.assign(m.size(), true);
  t.exact = std::move(m);
  t.active = std::move(mask);
  return t;
}

TargetSpec TargetSpec::interval_constraints(std::vector<double> lo, std::vector<double> hi, std::vector<bool> mask) {
  TargetSpec t;
  t.kind = Kind::intervals;
  t.lo = std::move(lo);
  t.hi = std::move(hi);
  t.active = std::move(mask);
  return t;
}

TargetSpec TargetSpec::metric_target(std::shared_ptr<const PerceptionMetric> metric, double value) {
  TargetSpec t;
  t.kind = Kind::metric;
  t.metric = std::move(metric);
  t.metric_value = value;
  return t;
}

void TargetSpec::validate(int k) const {
  const auto n = static_cast<std::size_t>(k);
  switch (kind) {
    case Kind::exact: {
      if (exact.size() != n || active.size() != n) throw ValidationError("target: expected " + std::to_string(k) + " components");
      double sum = 0;
      for (std::size_t i = 0; i < n; ++i) {
        if (!active[i]) continue;
        if (!(exact[i] >= 0 && exact[i] <= 1)) throw ValidationError("target: values must lie in [0, 1]");
        sum += exact[i];
      }
      if (std::none_of(active.begin(), active.end(), [](bool b) { return b; })) {
        throw ValidationError("target: no active component");
      }
      if (sum > 1 + 1e-6) throw ValidationError("target: values sum above 1");
      if (std::all_of(active.begin(), active.end(), [](bool b) { return b; }) && std::abs(sum - 1) > 1e-6) {
        throw ValidationError("target: a full target vector must sum to 1");
      }
      return;
    }
    case Kind::intervals: {
      if (lo.size() != n || hi.size() != n || active.size() != n) {
        throw ValidationError("target: expected " + std::to_string(k) + " components");
      }
      bool any = false;
      for (std::size_t i = 0; i < n; ++i) {
        if (!active[i]) continue;
        any = true;
        if (!(lo[i] >= 0 && lo[i] <= hi[i] && hi[i] <= 1)) throw ValidationError("target: need 0 <= lo <= hi <= 1");
      }
      if (!any) throw ValidationError("target: no active component");
      return;
    }
    case Kind::metric:
      if (!metric) throw ValidationError("target: missing metric");
      if (metric->derivatives().size() != n) throw ValidationError("target: metric compiled for another model");
      if (!std::isfinite(metric_value)) throw ValidationError("target: metric value must be finite");
      return;
  }
}

double TargetSpec::loss(std::span<const double> m, std::span<double> dm) const {
  const bool want = !dm.empty();
  if (want) std::fill(dm.begin(), dm.end(), 0.0);
  double loss = 0;
  switch (kind) {
    case Kind::exact:
      for (std::size_t i = 0; i < m.size(); ++i) {
        if (!active[i]) continue;
        const double d = m[i] - exact[i];
        loss += d * d;
        if (want) dm[i] = 2 * d;
      }
      break;
    case Kind::intervals:
      for (std::size_t i = 0; i < m.size(); ++i) {
        if (!active[i]) continue;
        const double below = std::max(0.0, lo[i] - m[i]);
        const double above = std::max(0.0, m[i] - hi[i]);
        loss += below * below + above * above;
        if (want) dm[i] = 2 * (above - below);
      }
      break;
    case Kind::metric: {
      const double d = metric->eval(m) - metric_value;
      loss = d * d;
      if (want) {
        const auto g = metric->grad(m);
        for (std::size_t i = 0; i < m.size(); ++i) dm[i] = 2 * d * g[i];
      }
      break;
    }
  }
  return loss;
}

namespace {

class TargetParser {
 public:
  TargetParser(std::string_view text, const std::vector<std::string>& names) : s_(text), names_(names) {}

  TargetSpec parse() {
    const std::size_t k = names_.size();
    std::vector<double> exact(k, 0), lo(k, 0), hi(k, 1);
    std::vector<bool> active(k, false);
    std::optional<TargetSpec::Kind> kind;
    skip();
    if (pos_ == s_.size()) fail("empty target");
    for (;;) {
      skip();
      const std::size_t name_at = pos_;
      while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_')) ++pos_;
      if (pos_ == name_at) fail("expected a component name");
      const int idx = lookup(s_.substr(name_at, pos_ - name_at));
      if (idx < 0) fail_at("unknown component '" + std::string(s_.substr(name_at, pos_ - name_at)) + "'", name_at);
      if (active[idx]) fail_at("component listed twice", name_at);
      active[idx] = true;
      skip();
      if (pos_ == s_.size()) fail("expected ':' or '='");
      const char op = s_[pos_];
      const auto this_kind = op == ':'   ? TargetSpec::Kind::intervals
                             : op == '=' ? TargetSpec::Kind::exact
                                         : (fail("expected ':' or '='"), TargetSpec::Kind::exact);
      if (kind && *kind != this_kind) fail("cannot mix intervals and exact values");
      kind = this_kind;
      ++pos_;
      if (this_kind == TargetSpec::Kind::exact) {
        exact[idx] = number();
      } else {
        lo[idx] = number();
        skip();
        if (pos_ == s_.size() || s_[pos_] != '-') fail("expected '-' between interval bounds");
        ++pos_;
        hi[idx] = number();
        if (lo[idx] > hi[idx]) fail_at("interval lower bound exceeds upper bound", name_at);
      }
      skip();
      if (pos_ == s_.size()) break;
      if (s_[pos_] != ',') fail("expected ','");
      ++pos_;
    }
    TargetSpec t = *kind == TargetSpec::Kind::exact ? TargetSpec::exact_vector(exact, active)
                                                    : TargetSpec::interval_constraints(lo, hi, active);
    try {
      t.validate(static_cast<int>(k));
    } catch (const ValidationError& e) {
      throw ParseError(e.what(), 0);
    }
    return t;
  }

 private:
  [[noreturn]] void fail(const std::string& msg) { fail_at(msg, pos_); }
  [[noreturn]] void fail_at(const std::string& msg, std::size_t at) { throw ParseError("target: " + msg, at); }

  void skip() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }

  int lookup(std::string_view n) const {
    auto find = [&](std::string_view x) {
      auto it = std::find(names_.begin(), names_.end(), x);
      return it == names_.end() ? -1 : static_cast<int>(it - names_.begin());
    };
    int i = find(n);
    if (i < 0 && n.starts_with("m_")) i = find(n.substr(2));
    return i;
  }

  double number() {
    skip();
    double v = 0;
    auto [ptr, ec] = std::from_chars(s_.data() + pos_, s_.data() + s_.size(), v, std::chars_format::fixed);
    if (ec != std::errc() || !std::isfinite(v)) fail("expected a number");
    pos_ = ptr - s_.data();
    return v;
  }

  std::string_view s_;
  const std::vector<std::string>& names_;
  std::size_t pos_ = 0;
};

// Descent state: position (or region coordinates a, b) plus angles.
struct State {
  double p[3] = {0, 0, 0};
  double alpha = 0, gamma = 0;
};

class Search {
 public:
  Search(const ModelParams& model, const InverseConfig& config)
      : model_(model), c_(config), bounds_(config.bounds.value_or(model.meta.normalizer.box())) {}

  bool region() const { return c_.region.has_value(); }

  State random_start(Rng& rng) const {
    State s;
    if (region()) {
      s.p[0] = rng.uniform();
      s.p[1] = rng.uniform();
    } else {
      for (int i = 0; i < 3; ++i) s.p[i] = rng.uniform(bounds_.min[i], bounds_.max[i]);
    }
    if (c_.direction) {
      s.alpha = c_.direction->first;
      s.gamma = c_.direction->second;
    } else {
      s.alpha = rng.uniform(0, 2 * std::numbers::pi);
      s.gamma = rng.uniform(c_.min_pitch, c_.max_pitch);
    }
    return project(s);
  }

  State from_viewpoint(const Viewpoint& v) const {
    if (region()) throw UserError("inverse: explicit start points need an unconstrained search");
    State s;
    s.p[0] = v.x;
    s.p[1] = v.y;
    s.p[2] = v.z;
    s.alpha = c_.direction ? c_.direction->first : v.alpha;
    s.gamma = c_.direction ? c_.direction->second : v.gamma;
    return project(s);
  }

  State project(State s) const {
    if (region()) {
      s.p[0] = std::clamp(s.p[0], 0.0, 1.0);
      s.p[1] = std::clamp(s.p[1], 0.0, 1.0);
    } else {
      for (int i = 0; i < 3; ++i) s.p[i] = std::clamp(s.p[i], bounds_.min[i], bounds_.max[i]);
    }
    s.alpha = wrap_yaw(s.alpha);
    s.gamma = std::clamp(s.gamma, c_.min_pitch, c_.max_pitch);
    return s;
  }

  Viewpoint viewpoint(const State& s) const {
    Vec3 pos = region() ? param_point(*c_.region, s.p[0], s.p[1]) : Vec3(s.p[0], s.p[1], s.p[2]);
    return {pos.x(), pos.y(), pos.z(), s.alpha, s.gamma};
  }

  // One descent step from d(loss)/du at the state's normalized viewpoint.
  State step(const State& s, const double* du) const {
    const auto scale = model_.meta.normalizer.scale();
    const double eta = c_.learning_rate;
    State n = s;
    if (region()) {
      const auto [ja, jb] = param_jacobian(*c_.region, s.p[0], s.p[1]);
      double ga = 0, gb = 0;
      for (int i = 0; i < 3; ++i) {
        ga += du[i] * scale[i] * ja[i];
        gb += du[i] * scale[i] * jb[i];
      }
      n.p[0] -= eta * ga;
      n.p[1] -= eta * gb;
    } else {
      for (int i = 0; i < 3; ++i) n.p[i] -= eta * du[i] / scale[i];
    }
    if (!c_.direction) {
      n.alpha -= eta * du[3] / scale[3];
      n.gamma -= eta * du[4] / scale[4];
    }
    return project(n);
  }

 private:
  const ModelParams& model_;
  const InverseConfig& c_;
  Aabb bounds_;
};

InverseResult make_result(const Search& search, const State& s, std::vector<double> m, double loss, double tol,
                          int iterations, int restart) {
  InverseResult r;
  r.viewpoint = search.viewpoint(s);
  r.m = std::move(m);
  r.loss = loss;
  r.status = loss <= tol ? InverseResult::Status::converged : InverseResult::Status::max_iterations;
  r.iterations = iterations;
  r.restart = restart;
  if (search.region()) r.ab = std::make_pair(s.p[0], s.p[1]);
  return r;
}

void sort_results(std::vector<InverseResult>& results) {
  std::stable_sort(results.begin(), results.end(), [](const InverseResult& a, const InverseResult& b) {
    return a.loss < b.loss || (a.loss == b.loss && a.restart < b.restart);
  });
}

}  // namespace

TargetSpec parse_target(std::string_view text, const std::vector<std::string>& names) {
  return TargetParser(text, names).parse();
}

void InverseConfig::validate() const {
  if (!(learning_rate > 0)) throw UserError("inverse: learning rate must be > 0");
  if (max_iterations < 1) throw UserError("inverse: max iterations must be >= 1");
  if (!(tolerance > 0)) throw UserError("inverse: tolerance must be > 0");
  if (restarts < 1) throw UserError("inverse: restarts must be >= 1");
  if (!(min_pitch <= max_pitch) || min_pitch <= -std::numbers::pi / 2 || max_pitch >= std::numbers::pi / 2) {
    throw UserError("inverse: pitch bounds must lie strictly inside (-90, 90) degrees");
  }
  if (region) viewfield::validate(*region);
  if (bounds && bounds->is_empty()) throw UserError("inverse: empty bounds");
  if (direction && std::abs(direction->second) >= std::numbers::pi / 2) {
    throw UserError("inverse: fixed pitch must lie strictly inside (-90, 90) degrees");
  }
}

std::string to_string(InverseResult::Status s) {
  return s == InverseResult::Status::converged ? "converged" : "max_iterations";
}

DirectResult direct_query(const ModelParams& model, std::span<const Viewpoint> viewpoints,
                          const PerceptionMetric* metric) {
  if (viewpoints.empty()) throw UserError("direct query: no viewpoints");
  const Aabb& box = model.meta.normalizer.box();
  DirectResult r;
  std::vector<Viewpoint> inside(viewpoints.begin(), viewpoints.end());
  for (std::size_t i = 0; i < inside.size(); ++i) {
    auto& v = inside[i];
    if (!std::isfinite(v.x) || !std::isfinite(v.y) || !std::isfinite(v.z) || !std::isfinite(v.alpha) ||
        !std::isfinite(v.gamma)) {
      throw UserError("viewpoint " + std::to_string(i) + ": non-finite coordinate");
    }
    const Vec3 p = box.clamp(v.position());
    if (p != v.position()) ++r.clamped;
    v = Viewpoint{p.x(), p.y(), p.z(), v.alpha, v.gamma}.canonical();
  }
  r.m = to_distributions(predict(model, inside).output);
  if (metric) {
    r.metric.reserve(r.m.size());
    for (const auto& m : r.m) r.metric.push_back(metric->eval(m.m));
  }
  return r;
}

std::vector<InverseResult> inverse_gradient(const ModelParams& model, const TargetSpec& target,
                                            const InverseConfig& config) {
  config.validate();
  const int k = model.k();
  target.validate(k);
  const Search search(model, config);

  const int restarts = config.restarts;
  std::vector<State> states(restarts);
  Rng rng(config.seed);
  for (int r = 0; r < restarts; ++r) {
    states[r] = r < static_cast<int>(config.initial_points.size()) ? search.from_viewpoint(config.initial_points[r])
                                                                    : search.random_start(rng);
  }

  std::vector<InverseResult> results;
  std::vector<int> live(restarts);
  std::iota(live.begin(), live.end(), 0);
  ForwardTrace<float> trace;
  InputGradients<float> grads;
  std::vector<double> m(k), dm(k);
  for (int it = 0; !live.empty(); ++it) {
    const auto n = static_cast<Eigen::Index>(live.size());
    std::vector<Viewpoint> views(live.size());
    for (std::size_t i = 0; i < live.size(); ++i) views[i] = search.viewpoint(states[live[i]]);
    const InputBatch u = normalize_batch(model.meta.normalizer, views);
    encode_batch(u, trace);
    model.net.forward(trace);

    const bool out_of_time = config.deadline && std::chrono::steady_clock::now() >= *config.deadline;
    Eigen::MatrixXf d_output = Eigen::MatrixXf::Zero(k, n);
    std::vector<int> next;
    for (Eigen::Index i = 0; i < n; ++i) {
      for (int c = 0; c < k; ++c) m[c] = trace.output(c, i);
      const double loss = target.loss(m, dm);
      if (loss <= config.tolerance || it == config.max_iterations || out_of_time) {
        results.push_back(make_result(search, states[live[i]], m, loss, config.tolerance, it, live[i]));
        continue;
      }
      for (int c = 0; c < k; ++c) d_output(c, i) = static_cast<float>(dm[c]);
      next.push_back(static_cast<int>(i));
    }
    if (next.empty()) break;

    model.net.backward(trace, d_output, nullptr, &grads);
    const InputBatch du = encoding_backward(u, grads);
    std::vector<int> still;
    for (int i : next) {
      states[live[i]] = search.step(states[live[i]], du.col(i).data());
      still.push_back(live[i]);
    }
    live = std::move(still);
  }
  sort_results(results);
  return results;
}

std::vector<InverseResult> inverse_sweep(const ModelParams& model, const TargetSpec& target,
                                         const InverseConfig& config, std::size_t n, std::size_t q) {
  config.validate();
  target.validate(model.k());
  if (q < 1 || n < q) throw UserError("sweep: need n >= q >= 1");
  const Search search(model, config);
  Rng rng(config.seed);
  std::vector<State> states(n);
  std::vector<Viewpoint> views(n);
  for (std::size_t i = 0; i < n; ++i) {
    states[i] = search.random_start(rng);
    views[i] = search.viewpoint(states[i]);
  }
  const Eigen::MatrixXf out = predict(model, views).output;
  std::vector<double> loss(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> m(out.col(i).data(), out.col(i).data() + out.rows());
    loss[i] = target.loss(m);
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::partial_sort(order.begin(), order.begin() + q, order.end(),
                    [&](std::size_t a, std::size_t b) { return loss[a] < loss[b] || (loss[a] == loss[b] && a < b); });
  std::vector<InverseResult> results;
  for (std::size_t j = 0; j < q; ++j) {
    const std::size_t i = order[j];
    std::vector<double> m(out.col(i).data(), out.col(i).data() + out.rows());
    results.push_back(make_result(search, states[i], std::move(m), loss[i], config.tolerance, 0, static_cast<int>(i)));
  }
  return results;
}

std::vector<PatchSummary> facade_summary(const ModelParams& model, const Scene& scene, int building_id,
                                         double patch_size, int samples, std::uint64_t seed) {
  if (samples < 1) throw UserError("facade: samples per patch must be >= 1");
  if (!(patch_size > 0)) throw UserError("facade: patch size must be > 0");
  auto it = std::find_if(scene.buildings.begin(), scene.buildings.end(),
                         [&](const Building& b) { return b.id == building_id; });
  if (it == scene.buildings.end()) throw UserError("facade: unknown building " + std::to_string(building_id));
  const auto patches = facade_patches(*it, patch_size);
  std::vector<PatchSummary> out;
  if (patches.empty()) return out;

  Rng rng(seed);
  std::vector<Viewpoint> views;
  views.reserve(patches.size() * samples);
  for (const auto& p : patches) {
    const auto [alpha, gamma] = direction_angles(p.normal);
    for (int s = 0; s < samples; ++s) {
      const Vec3 x = p.origin + rng.uniform() * p.edge_u + rng.uniform() * p.edge_v;
      views.push_back({x.x(), x.y(), x.z(), alpha, gamma});
    }
  }
  const Eigen::MatrixXf pred = predict(model, views).output;
  for (std::size_t i = 0; i < patches.size(); ++i) {
    PatchSummary ps{patches[i], {}, {views.begin() + i * samples, views.begin() + (i + 1) * samples}};
    ps.m.m.assign(model.k(), 0.0);
    for (int s = 0; s < samples; ++s) {
      const auto col = static_cast<Eigen::Index>(i * samples + s);
      for (int c = 0; c < model.k(); ++c) ps.m.m[c] += pred(c, col);
    }
    for (auto& v : ps.m.m) v /= samples;
    out.push_back(std::move(ps));
  }
  return out;
}

}  // namespace viewfield
