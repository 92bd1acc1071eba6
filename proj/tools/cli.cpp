#include "cli.hpp"

#include "viewfield/analysis.hpp"
#include "viewfield/dataset.hpp"
#include "viewfield/error.hpp"
#include "viewfield/json_io.hpp"
#include "viewfield/net.hpp"
#include "viewfield/parallel.hpp"
#include "viewfield/percept.hpp"
#include "viewfield/query.hpp"
#include "viewfield/scene.hpp"
#include "viewfield/service.hpp"
#include "viewfield/train.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <csignal>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

namespace viewfield::cli {

namespace {

using nlohmann::json;

constexpr double kDeg = std::numbers::pi / 180.0;

std::vector<double> parse_numbers(const std::string& text, const std::string& what) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (item.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw UserError(what + ": '" + item + "' is not a number");
    }
  }
  return out;
}

Viewpoint parse_viewpoint(const std::string& text, bool degrees) {
  const auto v = parse_numbers(text, "viewpoint");
  if (v.size() != 5) throw UserError("viewpoint must be x,y,z,alpha,gamma");
  const double a = degrees ? kDeg : 1.0;
  return {v[0], v[1], v[2], v[3] * a, v[4] * a};
}

void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UserError("cannot write " + path);
  out << bytes;
}

struct Common {
  int threads = 0;
  bool pretty = false;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--threads", c.threads, "Worker cap (0: $NVF_THREADS or all cores)")->capture_default_str();
  app->add_flag("--pretty", c.pretty, "Human-readable tables instead of JSON lines");
}

void emit(std::ostream& out, const json& j, bool pretty) { out << (pretty ? j.dump(2) : j.dump()) << '\n'; }

json viewpoint_json(const Viewpoint& v) { return v; }

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

ModelParams model_for(const DatasetMeta& meta, std::uint64_t seed) {
  ModelParams m = init_model(seed, static_cast<int>(meta.components.size()));
  m.meta.class_names = meta.components;
  m.meta.bins = meta.bins;
  m.meta.normalizer = Normalizer(meta.aabb);
  m.meta.render = meta.settings;
  return m;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Neural view-field toolkit: city generation, ground truth, training and view queries"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Help for every subcommand");
  std::function<void()> action;

  // gen-scene
  Common gs_c;
  std::uint64_t gs_seed = 0;
  std::string gs_out;
  CityParams city;
  double glass = -1;
  auto* gs = app.add_subcommand("gen-scene", "Generate a procedural city scene (JSON)");
  add_common(gs, gs_c);
  gs->add_option("--seed", gs_seed, "Random seed")->capture_default_str();
  gs->add_option("--out", gs_out, "Output scene.json")->required();
  gs->add_option("--grid", city.grid_size, "Blocks per side")->capture_default_str();
  gs->add_option("--block", city.block_size, "Block size in meters")->capture_default_str();
  gs->add_option("--street", city.street_width, "Street width in meters")->capture_default_str();
  gs->add_option("--sidewalk", city.sidewalk_width, "Sidewalk width in meters")->capture_default_str();
  gs->add_option("--building-density", city.building_density, "Fraction of lots with a building")->capture_default_str();
  gs->add_option("--max-height", city.max_height, "Tallest building in meters")->capture_default_str();
  gs->add_option("--tree-density", city.tree_density, "Tree density in [0, 1]")->capture_default_str();
  gs->add_option("--water-fraction", city.water_fraction, "Fraction of empty lots that are water")->capture_default_str();
  gs->add_option("--glass-fraction", glass, "Relabel buildings into brick/glass with this glass share");
  gs->callback([&] {
    action = [&] {
      Scene s = generate_city(gs_seed, city);
      if (glass >= 0) s = relabel_materials(s, glass, gs_seed);
      save_scene(s, gs_out);
      emit(out, {{"scene", gs_out}, {"triangles", s.triangles.size()}, {"buildings", s.buildings.size()},
                 {"classes", s.class_names()}}, gs_c.pretty);
    };
  });

  // gen-data
  Common gd_c;
  std::string gd_scene, gd_out, gd_strategy = "uniform", gd_bins;
  std::size_t gd_n = 6000;
  std::uint64_t gd_seed = 0;
  RenderSettings gd_render;
  int gd_dirs = 1;
  double gd_min_h = kEyeHeight, gd_max_h = -1;
  std::optional<double> gd_min_pitch, gd_max_pitch;
  auto* gd = app.add_subcommand("gen-data", "Sample viewpoints and render ground-truth distributions (CSV)");
  add_common(gd, gd_c);
  gd->add_option("--scene", gd_scene, "Input scene.json")->required();
  gd->add_option("--out", gd_out, "Output views.csv (a .meta.json sidecar is written next to it)")->required();
  gd->add_option("--n", gd_n, "Number of viewpoints")->capture_default_str();
  gd->add_option("--strategy", gd_strategy, "uniform, street or facade")->capture_default_str();
  gd->add_option("--seed", gd_seed, "Random seed")->capture_default_str();
  gd->add_option("--directions", gd_dirs, "Directions per sampled position")->capture_default_str();
  gd->add_option("--min-height", gd_min_h, "Uniform strategy: lowest camera height")->capture_default_str();
  gd->add_option("--max-height", gd_max_h, "Uniform strategy: highest camera height (-1: scene top)")->capture_default_str();
  gd->add_option("--min-pitch", gd_min_pitch, "Lowest pitch in degrees (strategy default otherwise)");
  gd->add_option("--max-pitch", gd_max_pitch, "Highest pitch in degrees (strategy default otherwise)");
  gd->add_option("--width", gd_render.width, "Image width")->capture_default_str();
  gd->add_option("--height", gd_render.height, "Image height")->capture_default_str();
  gd->add_option("--fov", gd_render.vertical_fov, "Vertical field of view in degrees")->capture_default_str();
  gd->add_option("--near", gd_render.near, "Near plane in meters")->capture_default_str();
  gd->add_option("--far", gd_render.far, "Far plane in meters")->capture_default_str();
  gd->add_option("--bins", gd_bins, "Scalar bin edges over tri_value, e.g. 0,2,5,24 (default: one bin per class)");
  gd->callback([&] {
    action = [&] {
      const Scene scene = load_scene(gd_scene);
      SamplingStrategy st = SamplingStrategy::from_name(gd_strategy);
      st.directions_per_position = gd_dirs;
      st.min_height = gd_min_h;
      st.max_height = gd_max_h;
      if (gd_min_pitch) st.min_pitch = *gd_min_pitch * kDeg;
      if (gd_max_pitch) st.max_pitch = *gd_max_pitch * kDeg;
      const BinSpec bins = gd_bins.empty() ? BinSpec::categorical(static_cast<int>(scene.class_count()))
                                           : BinSpec::scalar(parse_numbers(gd_bins, "--bins"));
      const auto views = sample_viewpoints(scene, st, gd_n, gd_seed);
      const auto data = build_dataset(scene, views, bins, gd_render, gd_c.threads);
      save_dataset(data, gd_out);
      save_meta({bins.names(scene.class_names()), bins, gd_render, scene.aabb()}, meta_path(gd_out));
      emit(out, {{"data", gd_out}, {"rows", data.size()}, {"components", bins.bin_count()}}, gd_c.pretty);
    };
  });

  // train
  Common tr_c;
  std::string tr_data, tr_out, tr_report;
  TrainConfig tr_cfg;
  std::uint64_t tr_init_seed = 0, tr_split_seed = 0;
  double tr_test_fraction = 0.2, tr_subset = 1.0;
  auto* tr = app.add_subcommand("train", "Train the field network on a views.csv dataset");
  add_common(tr, tr_c);
  tr->add_option("--data", tr_data, "Input views.csv")->required();
  tr->add_option("--out", tr_out, "Output checkpoint")->required();
  tr->add_option("--report", tr_report, "Training report (default: report.json next to --out)");
  tr->add_option("--epochs", tr_cfg.epochs, "Epochs")->capture_default_str();
  tr->add_option("--batch", tr_cfg.batch_size, "Mini-batch size")->capture_default_str();
  tr->add_option("--lr", tr_cfg.learning_rate, "Learning rate")->capture_default_str();
  tr->add_option("--seed", tr_cfg.seed, "Shuffle seed")->capture_default_str();
  tr->add_option("--init-seed", tr_init_seed, "Weight initialization seed")->capture_default_str();
  tr->add_option("--test-fraction", tr_test_fraction, "Held-out share for the test RMSE (0: none)")->capture_default_str();
  tr->add_option("--split-seed", tr_split_seed, "Train/test split seed")->capture_default_str();
  tr->add_option("--subset", tr_subset, "Train on this nested fraction of the training split")->capture_default_str();
  tr->callback([&] {
    action = [&] {
      const auto data = load_dataset(tr_data);
      const DatasetMeta meta = load_meta(meta_path(tr_data));
      std::vector<ViewSample> train_set = data, test_set;
      if (tr_test_fraction > 0) {
        auto parts = split(data, tr_test_fraction, tr_split_seed);
        train_set = std::move(parts.train);
        test_set = std::move(parts.test);
      }
      if (tr_subset < 1) train_set = subset(train_set, tr_subset, tr_split_seed);
      ModelParams init = model_for(meta, tr_init_seed);
      init.meta.provenance = {{"train_samples", train_set.size()}, {"test_samples", test_set.size()},
                              {"epochs", tr_cfg.epochs}, {"batch_size", tr_cfg.batch_size},
                              {"learning_rate", tr_cfg.learning_rate}, {"seed", tr_cfg.seed},
                              {"init_seed", tr_init_seed}, {"split_seed", tr_split_seed},
                              {"test_fraction", tr_test_fraction}, {"subset", tr_subset}};
      auto result = train(train_set, tr_cfg, std::move(init), test_set, [&](int epoch, double loss) {
        if (tr_c.pretty) out << "epoch " << epoch + 1 << "/" << tr_cfg.epochs << "  loss " << fmt("%.6f", loss) << '\n';
      });
      save_checkpoint(result.model, tr_out);
      const std::string report_path =
          tr_report.empty() ? (std::filesystem::path(tr_out).parent_path() / "report.json").string() : tr_report;
      write_file(report_path, to_json(result.report).dump(2) + "\n");
      json line{{"model", tr_out}, {"report", report_path}, {"final_loss", result.report.epoch_loss.back()},
                {"test_rmse", result.report.test_rmse ? json(*result.report.test_rmse) : json(nullptr)},
                {"wall_seconds", result.report.wall_seconds}};
      emit(out, line, tr_c.pretty);
    };
  });

  // eval
  Common ev_c;
  std::string ev_model, ev_data, ev_knn = "2,5,20", ev_fractions, ev_out;
  double ev_test_fraction = 0.2;
  std::uint64_t ev_split_seed = 0, ev_init_seed = 0;
  TrainConfig ev_cfg;
  auto* ev = app.add_subcommand("eval", "Test RMSE of a model against KNN baselines, optionally over training fractions");
  add_common(ev, ev_c);
  ev->add_option("--model", ev_model, "Checkpoint (not needed with --fractions)");
  ev->add_option("--data", ev_data, "Input views.csv")->required();
  ev->add_option("--knn", ev_knn, "Neighbor counts for KNN baselines")->capture_default_str();
  ev->add_option("--test-fraction", ev_test_fraction, "Held-out share")->capture_default_str();
  ev->add_option("--split-seed", ev_split_seed, "Train/test split seed")->capture_default_str();
  ev->add_option("--fractions", ev_fractions, "Retrain on nested training fractions, e.g. 0.1,0.2,0.3,0.8,1");
  ev->add_option("--epochs", ev_cfg.epochs, "Epochs per retraining")->capture_default_str();
  ev->add_option("--batch", ev_cfg.batch_size, "Mini-batch size per retraining")->capture_default_str();
  ev->add_option("--lr", ev_cfg.learning_rate, "Learning rate per retraining")->capture_default_str();
  ev->add_option("--seed", ev_cfg.seed, "Shuffle seed per retraining")->capture_default_str();
  ev->add_option("--init-seed", ev_init_seed, "Weight initialization seed")->capture_default_str();
  ev->add_option("--out", ev_out, "Write the comparison report JSON here");
  ev->callback([&] {
    action = [&] {
      const auto data = load_dataset(ev_data);
      const auto parts = split(data, ev_test_fraction, ev_split_seed);
      std::vector<int> ks;
      for (double k : parse_numbers(ev_knn, "--knn")) ks.push_back(static_cast<int>(k));
      ModelParams base;
      if (!ev_model.empty()) {
        base = load_checkpoint(ev_model);
      } else {
        base = model_for(load_meta(meta_path(ev_data)), ev_init_seed);
      }
      Comparison c;
      if (!ev_fractions.empty()) {
        c = compare_models(parts.train, parts.test, parse_numbers(ev_fractions, "--fractions"), ks, ev_cfg, base,
                           ev_init_seed, ev_split_seed, ev_c.threads);
      } else {
        if (ev_model.empty()) throw UserError("eval: need --model or --fractions");
        c.fractions = {1.0};
        c.train_sizes = {parts.train.size()};
        std::vector<Viewpoint> queries;
        for (const auto& s : parts.test) queries.push_back(s.viewpoint);
        for (int k : ks) {
          c.models.push_back(std::to_string(k) + "-Neighbors");
          c.rmse.push_back({rmse(parts.test, knn_predict(parts.train, base.meta.normalizer, queries, k, ev_c.threads))});
        }
        c.models.push_back("Ours");
        c.rmse.push_back({evaluate_rmse(base, parts.test)});
      }
      if (!ev_out.empty()) write_file(ev_out, to_json(c).dump(2) + "\n");
      if (ev_c.pretty) {
        out << to_table(c);
      } else {
        emit(out, to_json(c), false);
      }
    };
  });

  // region-error
  Common re_c;
  std::string re_scene, re_model, re_out;
  double re_side = 80, re_threshold = 0.1;
  auto* re = app.add_subcommand("region-error", "Share of block-sized regions whose per-class error is under a threshold");
  add_common(re, re_c);
  re->add_option("--scene", re_scene, "Scene the model was trained on")->required();
  re->add_option("--model", re_model, "Checkpoint")->required();
  re->add_option("--side", re_side, "Region side in meters")->capture_default_str();
  re->add_option("--threshold", re_threshold, "Error threshold")->capture_default_str();
  re->add_option("--out", re_out, "Write the full report JSON here");
  re->callback([&] {
    action = [&] {
      const auto report = region_error(load_scene(re_scene), load_checkpoint(re_model), re_side, re_threshold, re_c.threads);
      if (!re_out.empty()) write_file(re_out, to_json(report).dump(2) + "\n");
      if (re_c.pretty) {
        out << to_table(report);
      } else {
        json j = to_json(report);
        j.erase("per_region");
        emit(out, j, false);
      }
    };
  });

  // query
  Common q_c;
  std::string q_model, q_metric, q_input;
  std::vector<std::string> q_views;
  bool q_degrees = false;
  auto* q = app.add_subcommand("query", "Direct queries: predicted distribution per viewpoint");
  add_common(q, q_c);
  q->add_option("--model", q_model, "Checkpoint")->required();
  q->add_option("--viewpoint", q_views, "x,y,z,alpha,gamma (repeatable)");
  q->add_option("--input", q_input, "CSV with x,y,z,alpha,gamma columns");
  q->add_option("--metric", q_metric, "Perception metric expression, e.g. 'sidewalk / (sidewalk + road)'");
  q->add_flag("--degrees", q_degrees, "Angles given in degrees");
  q->callback([&] {
    action = [&] {
      const auto model = load_checkpoint(q_model);
      std::vector<Viewpoint> views;
      for (const auto& v : q_views) views.push_back(parse_viewpoint(v, q_degrees));
      if (!q_input.empty()) {
        for (const auto& s : load_dataset(q_input)) views.push_back(s.viewpoint);
      }
      if (views.empty()) throw UserError("query: give --viewpoint or --input");
      std::optional<PerceptionMetric> metric;
      if (!q_metric.empty()) metric.emplace("metric", q_metric, model.meta.class_names);
      const auto r = direct_query(model, views, metric ? &*metric : nullptr);
      if (r.clamped) err << "warning: " << r.clamped << " viewpoint(s) clamped into the scene box\n";
      for (std::size_t i = 0; i < r.m.size(); ++i) {
        if (q_c.pretty) {
          out << "#" << i;
          for (std::size_t c = 0; c < r.m[i].size(); ++c) out << "  " << model.meta.class_names[c] << "=" << fmt("%.4f", r.m[i][c]);
          if (metric) out << "  metric=" << fmt("%.4f", r.metric[i]);
          out << '\n';
          continue;
        }
        json line{{"viewpoint", viewpoint_json(views[i])}, {"m", r.m[i].m}};
        if (metric) line["metric"] = r.metric[i];
        emit(out, line, false);
      }
    };
  });

  // inverse
  Common inv_c;
  std::string inv_model, inv_target, inv_metric, inv_region, inv_direction;
  double inv_value = 0;
  InverseConfig inv_cfg;
  bool inv_degrees = false;
  auto* inv = app.add_subcommand("inverse", "Inverse queries: viewpoints whose predicted distribution matches a target");
  add_common(inv, inv_c);
  inv->add_option("--model", inv_model, "Checkpoint")->required();
  inv->add_option("--target", inv_target, "'tree:0.2-0.4,sky:0.3-0.5' or 'tree=0.3,sky=0.4'");
  inv->add_option("--metric", inv_metric, "Perception metric expression to drive towards --value");
  inv->add_option("--value", inv_value, "Desired metric value")->capture_default_str();
  inv->add_option("--plane,--region", inv_region,
                  "Search region: 'p=x,y,z;v1=..;v2=..;l=..;L=..', 'sphere:c=..;r=..' or 'hemisphere:c=..;r=..'");
  inv->add_option("--direction", inv_direction, "Fixed alpha,gamma");
  inv->add_flag("--degrees", inv_degrees, "Angles in --direction given in degrees");
  inv->add_option("--n", inv_cfg.restarts, "Number of restarts (results)")->capture_default_str();
  inv->add_option("--lr", inv_cfg.learning_rate, "Step size in normalized coordinates")->capture_default_str();
  inv->add_option("--iterations", inv_cfg.max_iterations, "Maximum descent steps")->capture_default_str();
  inv->add_option("--tolerance", inv_cfg.tolerance, "Convergence threshold on the loss")->capture_default_str();
  inv->add_option("--seed", inv_cfg.seed, "Random seed for starts")->capture_default_str();
  inv->callback([&] {
    action = [&] {
      const auto model = load_checkpoint(inv_model);
      TargetSpec target;
      if (!inv_metric.empty()) {
        target = TargetSpec::metric_target(
            std::make_shared<PerceptionMetric>("metric", inv_metric, model.meta.class_names), inv_value);
      } else if (!inv_target.empty()) {
        target = parse_target(inv_target, model.meta.class_names);
      } else {
        throw UserError("inverse: give --target or --metric");
      }
      if (!inv_region.empty()) inv_cfg.region = parse_parametrization(inv_region);
      if (!inv_direction.empty()) {
        const auto d = parse_numbers(inv_direction, "--direction");
        if (d.size() != 2) throw UserError("--direction must be alpha,gamma");
        const double a = inv_degrees ? kDeg : 1.0;
        inv_cfg.direction = std::make_pair(d[0] * a, d[1] * a);
      }
      const auto results = inverse_gradient(model, target, inv_cfg);
      for (std::size_t i = 0; i < results.size(); ++i) {
        const auto& r = results[i];
        if (inv_c.pretty) {
          const auto& v = r.viewpoint;
          out << "#" << i << "  loss " << fmt("%.3g", r.loss) << "  " << to_string(r.status) << "  at ("
              << fmt("%.2f", v.x) << ", " << fmt("%.2f", v.y) << ", " << fmt("%.2f", v.z) << ") yaw "
              << fmt("%.1f", v.alpha / kDeg) << " pitch " << fmt("%.1f", v.gamma / kDeg) << '\n';
          continue;
        }
        json line{{"rank", i},
                  {"viewpoint", viewpoint_json(r.viewpoint)},
                  {"m", r.m},
                  {"loss", r.loss},
                  {"status", to_string(r.status)},
                  {"iterations", r.iterations},
                  {"restart", r.restart}};
        if (r.ab) line["ab"] = {r.ab->first, r.ab->second};
        emit(out, line, false);
      }
    };
  });

  // facade
  Common f_c;
  std::string f_model, f_scene, f_theme, f_filter;
  int f_building = 0, f_samples = 5;
  double f_patch = 6.0;
  std::uint64_t f_seed = 0;
  auto* fc = app.add_subcommand("facade", "Per-patch visibility summaries over one building's facades");
  add_common(fc, f_c);
  fc->add_option("--model", f_model, "Checkpoint")->required();
  fc->add_option("--scene", f_scene, "Scene JSON")->required();
  fc->add_option("--building", f_building, "Building id")->capture_default_str();
  fc->add_option("--patch-size", f_patch, "Patch side in meters")->capture_default_str();
  fc->add_option("--samples", f_samples, "Sampled viewpoints per patch")->capture_default_str();
  fc->add_option("--seed", f_seed, "Random seed")->capture_default_str();
  fc->add_option("--theme", f_theme, "Report one component or metric expression per patch");
  fc->add_option("--filter", f_filter, "Keep patches whose theme value lies in lo,hi");
  fc->callback([&] {
    action = [&] {
      const auto model = load_checkpoint(f_model);
      const auto patches = facade_summary(model, load_scene(f_scene), f_building, f_patch, f_samples, f_seed);
      std::optional<PerceptionMetric> theme;
      if (!f_theme.empty()) theme.emplace("theme", f_theme, model.meta.class_names);
      std::optional<std::vector<double>> filter;
      if (!f_filter.empty()) {
        filter = parse_numbers(f_filter, "--filter");
        if (filter->size() != 2) throw UserError("--filter must be lo,hi");
        if (!theme) throw UserError("--filter needs --theme");
      }
      for (std::size_t i = 0; i < patches.size(); ++i) {
        const auto& p = patches[i];
        const double value = theme ? theme->eval(p.m.m) : 0.0;
        if (filter && !(value >= (*filter)[0] && value <= (*filter)[1])) continue;
        if (f_c.pretty) {
          out << "patch " << i << " facade " << p.patch.facade << " center (" << fmt("%.1f", p.patch.center.x())
              << ", " << fmt("%.1f", p.patch.center.y()) << ", " << fmt("%.1f", p.patch.center.z()) << ")";
          if (theme) out << "  " << f_theme << "=" << fmt("%.4f", value);
          out << '\n';
          continue;
        }
        json line{{"patch", i},
                  {"facade", p.patch.facade},
                  {"center", {p.patch.center.x(), p.patch.center.y(), p.patch.center.z()}},
                  {"normal", {p.patch.normal.x(), p.patch.normal.y(), p.patch.normal.z()}},
                  {"m", p.m.m}};
        if (theme) line["value"] = value;
        emit(out, line, false);
      }
    };
  });

  // render
  Common r_c;
  std::string r_scene, r_view, r_out;
  RenderSettings r_settings;
  r_settings.width = r_settings.height = 256;
  bool r_degrees = false;
  auto* rd = app.add_subcommand("render", "False-color PNG of the scene from one viewpoint");
  add_common(rd, r_c);
  rd->add_option("--scene", r_scene, "Scene JSON")->required();
  rd->add_option("--viewpoint", r_view, "x,y,z,alpha,gamma")->required();
  rd->add_flag("--degrees", r_degrees, "Angles given in degrees");
  rd->add_option("--width", r_settings.width, "Image width")->capture_default_str();
  rd->add_option("--height", r_settings.height, "Image height")->capture_default_str();
  rd->add_option("--fov", r_settings.vertical_fov, "Vertical field of view in degrees")->capture_default_str();
  rd->add_option("--out", r_out, "Output PNG")->required();
  rd->callback([&] {
    action = [&] {
      const auto png = render_falsecolor(load_scene(r_scene), Camera{parse_viewpoint(r_view, r_degrees), r_settings});
      write_file(r_out, std::string(png.begin(), png.end()));
      emit(out, {{"png", r_out}, {"bytes", png.size()}}, r_c.pretty);
    };
  });

  // serve
  Common sv_c;
  std::string sv_scene, sv_model, sv_data;
  std::vector<std::string> sv_metrics;
  ServiceOptions sv_opts;
  auto* sv = app.add_subcommand("serve", "HTTP/JSON API for the browser interface");
  add_common(sv, sv_c);
  sv->add_option("--scene", sv_scene, "Scene JSON")->required();
  sv->add_option("--model", sv_model, "Checkpoint")->required();
  sv->add_option("--data", sv_data, "Ground-truth views.csv for the PCP and latent map")->required();
  sv->add_option("--host", sv_opts.host, "Bind address")->capture_default_str();
  sv->add_option("--port", sv_opts.port, "Port")->capture_default_str();
  sv->add_option("--metric", sv_metrics, "Named metric 'name=expression' (repeatable)");
  sv->add_option("--test-fraction", sv_opts.test_fraction, "Held-out share shown on the latent map")->capture_default_str();
  sv->add_option("--split-seed", sv_opts.split_seed, "Split seed (match train)")->capture_default_str();
  sv->add_option("--cors-origin", sv_opts.cors_origin, "Allowed browser origin")->capture_default_str();
  sv->callback([&] {
    action = [&] {
      for (const auto& m : sv_metrics) {
        const auto eq = m.find('=');
        if (eq == std::string::npos || eq == 0) throw UserError("--metric must be name=expression");
        sv_opts.metrics.emplace_back(m.substr(0, eq), m.substr(eq + 1));
      }
      sv_opts.workers = sv_c.threads;
      Service service(sv_opts);
      service.load(load_scene(sv_scene), load_checkpoint(sv_model), load_dataset(sv_data));
      const int port = service.bind();
      emit(out, {{"listening", "http://" + sv_opts.host + ":" + std::to_string(port)}}, sv_c.pretty);
      out.flush();
      service.run();
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n";
    const auto subs = app.get_subcommands();
    err << (subs.empty() ? app.help() : subs.front()->help());
    return 1;
  }

  try {
    action();
    return 0;
  } catch (const UserError& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return 2;
  }
}

}  // namespace viewfield::cli
