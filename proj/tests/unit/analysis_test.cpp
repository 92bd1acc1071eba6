#include "viewfield/analysis.hpp"
#include "viewfield/error.hpp"
#include "viewfield/query.hpp"
#include "viewfield/random.hpp"

#include "../support/oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

using namespace viewfield;

namespace {

// Eigenvalues of a symmetric 3x3 matrix from its characteristic polynomial
// (trigonometric form of the cubic), descending.
std::array<double, 3> symmetric_eigenvalues(const Eigen::Matrix3d& a) {
  const double q = a.trace() / 3;
  const Eigen::Matrix3d b = a - q * Eigen::Matrix3d::Identity();
  const double p = std::sqrt((b * b).trace() / 6);
  const double r = std::clamp((b / p).determinant() / 2, -1.0, 1.0);
  const double phi = std::acos(r) / 3;
  const double l1 = q + 2 * p * std::cos(phi);
  const double l3 = q + 2 * p * std::cos(phi + 2 * std::numbers::pi / 3);
  return {l1, 3 * q - l1 - l3, l3};
}

Eigen::Vector3d null_vector(const Eigen::Matrix3d& a, double lambda) {
  const Eigen::Matrix3d m = a - lambda * Eigen::Matrix3d::Identity();
  Eigen::Vector3d best = Eigen::Vector3d::Zero();
  for (int i = 0; i < 3; ++i) {
    const Eigen::Vector3d c = m.row(i).transpose().cross(m.row((i + 1) % 3).transpose());
    if (c.norm() > best.norm()) best = c;
  }
  return best.normalized();
}

std::vector<ViewSample> random_samples(Rng& rng, std::size_t n, int k) {
  std::vector<ViewSample> out(n);
  for (auto& s : out) {
    s.viewpoint = {rng.uniform(0, 50), rng.uniform(0, 50), rng.uniform(0, 10), rng.uniform(0, 6.28),
                   rng.uniform(-1, 1)};
    double sum = 0;
    s.m_gt.m.resize(k);
    for (auto& v : s.m_gt.m) sum += v = rng.uniform();
    for (auto& v : s.m_gt.m) v /= sum;
  }
  return out;
}

ModelParams model_for(const Scene& s, std::uint64_t seed) {
  ModelParams m = init_model(seed, static_cast<int>(s.class_count()));
  m.meta.class_names = s.class_names();
  m.meta.normalizer = Normalizer(s.aabb());
  return m;
}

// Ground truth for every queried view, rendered with the same settings.
Predictor replay(const Scene& s, const RenderSettings& r) {
  return [s, r](std::span<const Viewpoint> v) {
    std::vector<ThematicDistribution> out;
    for (const auto& x : build_dataset(s, v, BinSpec::categorical(static_cast<int>(s.class_count())), r)) {
      out.push_back(x.m_gt);
    }
    return out;
  };
}

}  // namespace

TEST(Pca, MatchesCharacteristicPolynomial) {
  Rng rng(3);
  Eigen::MatrixXd x(3, 10);
  for (int i = 0; i < 10; ++i) {
    const double t = rng.uniform(-2, 2), u = rng.uniform(-1, 1);
    x.col(i) = Eigen::Vector3d(3 * t + u, t - 2 * u, 0.3 * rng.uniform(-1, 1) + u);
  }
  const Pca pca = principal_components(x, 2);
  const Eigen::MatrixXd c = x.colwise() - x.rowwise().mean();
  const Eigen::Matrix3d cov = c * c.transpose() / 9.0;
  const auto lambda = symmetric_eigenvalues(cov);
  for (int j = 0; j < 2; ++j) {
    EXPECT_NEAR(pca.variances(j), lambda[j], 1e-8 * lambda[0]);
    EXPECT_NEAR(std::abs(pca.axes.col(j).dot(null_vector(cov, lambda[j]))), 1.0, 1e-8);
  }
}

TEST(Pca, AxesAreOrthonormal) {
  Rng rng(4);
  Eigen::MatrixXd x(128, 300);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.uniform(-1, 1) * (1 + (i % 128) / 16.0);
  const Pca pca = principal_components(x, 2);
  const Eigen::Matrix2d g = pca.axes.transpose() * pca.axes;
  EXPECT_LT((g - Eigen::Matrix2d::Identity()).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_GE(pca.variances(0), pca.variances(1));
}

TEST(Project, RankOneDataHasNoSecondComponent) {
  Rng rng(5);
  Eigen::VectorXd dir(128), base(128);
  for (int i = 0; i < 128; ++i) {
    dir(i) = rng.uniform(-1, 1);
    base(i) = rng.uniform(-1, 1);
  }
  Eigen::MatrixXd x(128, 50);
  for (int i = 0; i < 50; ++i) x.col(i) = base + rng.uniform(-3, 3) * dir;
  const Eigen::MatrixXd p = project_2d(x, Projection::parse("pca"));
  const double mean = p.row(1).mean();
  EXPECT_LT((p.row(1).array() - mean).square().mean(), 1e-9);
  EXPECT_GT((p.row(0).array() - p.row(0).mean()).square().mean(), 1.0);
}

TEST(Project, TranslationInvariant) {
  Rng rng(6);
  Eigen::MatrixXd x(16, 40);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.uniform(-1, 1) * (1 + i % 16);
  Eigen::VectorXd shift(16);
  for (int i = 0; i < 16; ++i) shift(i) = rng.uniform(-50, 50);
  const Eigen::MatrixXd a = project_2d(x, Projection{});
  const Eigen::MatrixXd b = project_2d(x.colwise() + shift, Projection{});
  EXPECT_LT((a - b).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Project, ZeroVarianceAndAxisPairs) {
  const Eigen::MatrixXd same = Eigen::MatrixXd::Constant(8, 5, 0.25);
  const Eigen::MatrixXd p = project_2d(same, Projection{});
  EXPECT_LT(p.cwiseAbs().maxCoeff(), 1e-12);
  Eigen::MatrixXd x = Eigen::MatrixXd::Random(8, 5);
  const Eigen::MatrixXd q = project_2d(x, Projection::parse("axes:3,1"));
  EXPECT_EQ(q.row(0), x.row(3));
  EXPECT_EQ(q.row(1), x.row(1));
  EXPECT_THROW(project_2d(x, Projection::parse("axes:3,9")), UserError);
  EXPECT_THROW(Projection::parse("tsne"), UserError);
  EXPECT_THROW(project_2d(Eigen::MatrixXd::Ones(8, 1), Projection{}), UserError);
}

TEST(Latent, MatchesPredictionAndKeepsOrder) {
  const Scene s = generate_city(2, CityParams{.grid_size = 2});
  const ModelParams model = model_for(s, 1);
  const std::vector<Viewpoint> v = {{10, 20, 3, 1, 0}, {50, 60, 8, 4, -0.3}, {10, 20, 3, 1, 0}};
  const Eigen::MatrixXd z = latent_codes(model, v);
  ASSERT_EQ(z.rows(), 128);
  ASSERT_EQ(z.cols(), 3);
  EXPECT_EQ(z.col(0), z.col(2));
  EXPECT_LT(z.cwiseAbs().maxCoeff(), 1.0);
  const Eigen::MatrixXd one = latent_codes(model, std::span(v).subspan(1, 1));
  EXPECT_EQ(one.col(0), z.col(1));
  const auto p = predict(model, v, true);
  EXPECT_EQ(p.latent.cast<double>(), z);
}

TEST(Knn, ExactHitAndTies) {
  const Normalizer n(Aabb{Vec3(0, 0, 0), Vec3(10, 10, 10)});
  std::vector<ViewSample> train = {{{2, 5, 5, 3, 0}, {{1, 0}}},
                                   {{8, 5, 5, 3, 0}, {{0, 1}}},
                                   {{5, 5, 5, 3, 0}, {{0.25, 0.75}}},
                                   {{5, 2, 5, 3, 0}, {{0.9, 0.1}}}};
  EXPECT_EQ(knn_predict(train, n, train[2].viewpoint, 1).m, train[2].m_gt.m);
  // (2,5) and (8,5) are equidistant from (5,5); the second tie at (5,2) loses on index.
  const Viewpoint q{5, 5, 5, 3, 0};
  train.erase(train.begin() + 2);
  const auto m = knn_predict(train, n, q, 2);
  EXPECT_EQ(m.m, (std::vector<double>{0.5, 0.5}));
  EXPECT_EQ(m.m, oracle::knn_scan(train, n, q, 2));
  EXPECT_THROW(knn_predict(std::span<const ViewSample>{}, n, q, 1), UserError);
  EXPECT_THROW(knn_predict(train, n, q, 4), UserError);
}

TEST(Knn, MatchesExhaustiveScan) {
  Rng rng(7);
  const auto train = random_samples(rng, 500, 4);
  const auto queries = random_samples(rng, 60, 4);
  const Normalizer n(Aabb{Vec3(0, 0, 0), Vec3(50, 50, 10)});
  std::vector<Viewpoint> qv;
  for (const auto& s : queries) qv.push_back(s.viewpoint);
  for (int k : {1, 5, 20}) {
    const auto batch = knn_predict(train, n, qv, k, 2);
    for (std::size_t i = 0; i < qv.size(); ++i) {
      const auto expected = oracle::knn_scan(train, n, qv[i], k);
      ASSERT_EQ(batch[i].size(), expected.size());
      for (std::size_t c = 0; c < expected.size(); ++c) EXPECT_NEAR(batch[i][c], expected[c], 1e-15);
      EXPECT_TRUE(batch[i].on_simplex());
    }
  }
}

TEST(Region, AllOneClassClosedForm) {
  // Looking straight ahead at eye height inside a closed box, every pixel is wall.
  Scene s;
  s.classes = default_classes();
  const double lo = 0, hi = 40, top = 400;
  s.vertices = {{lo, lo, 0}, {hi, lo, 0}, {hi, hi, 0}, {lo, hi, 0}, {lo, lo, top}, {hi, lo, top}, {hi, hi, top}, {lo, hi, top}};
  s.triangles = {{0, 1, 2}, {0, 2, 3}, {4, 5, 6}, {4, 6, 7}, {0, 1, 5}, {0, 5, 4},
                 {1, 2, 6}, {1, 6, 5}, {2, 3, 7}, {2, 7, 6}, {3, 0, 4}, {3, 4, 7}};
  s.tri_class.assign(12, 1);
  ModelParams model = model_for(s, 1);
  model.net.set_zero();
  RenderSettings settings;
  settings.far = 1000;
  const auto r = region_error(s, [&](std::span<const Viewpoint> v) { return direct_query(model, v).m; }, BinSpec::categorical(7), settings, 20, 0.1);
  ASSERT_EQ(r.anchors.size(), 4u);
  for (const auto& e : r.error) EXPECT_NEAR(e[1], std::abs(1 - 1.0 / 7), 1e-7);
  EXPECT_EQ(r.percent_under[1], 0.0);
}

TEST(Region, OracleAndFullThreshold) {
  const Scene s = generate_city(3, CityParams{.grid_size = 2});
  RenderSettings settings;
  settings.width = settings.height = 32;
  const auto r = region_error(s, replay(s, settings), BinSpec::categorical(7), settings, 40, 0.1);
  for (double p : r.percent_under) EXPECT_EQ(p, 100.0);
  for (const auto& e : r.error) {
    for (double v : e) EXPECT_EQ(v, 0.0);
  }
  const ModelParams model = model_for(s, 4);
  const auto full = region_error(s, [&](std::span<const Viewpoint> v) { return direct_query(model, v).m; }, BinSpec::categorical(7),
                                 settings, 40, 1.0);
  for (double p : full.percent_under) EXPECT_EQ(p, 100.0);
  for (const auto& a : full.anchors) {
    EXPECT_NEAR(a.z, s.aabb().min.z() + kEyeHeight, 1e-12);
    for (const auto& b : s.buildings) EXPECT_FALSE(b.contains(a.position()));
  }
}

TEST(Region, BlockedCellsMoveOrSkip) {
  const Scene s = oracle::box_scene(100, {0, 0, 40, 40}, 20);
  RenderSettings settings;
  settings.width = settings.height = 16;
  const auto r = region_error(s, replay(s, settings), BinSpec::categorical(7), settings, 25, 0.1);
  EXPECT_EQ(r.skipped, 1);
  ASSERT_EQ(r.anchors.size(), 15u);
  for (std::size_t i = 0; i < r.anchors.size(); ++i) {
    EXPECT_FALSE(s.buildings[0].contains(r.anchors[i].position()));
    EXPECT_LE(std::abs(r.anchors[i].x - r.centers[i][0]), 12.5);
    EXPECT_LE(std::abs(r.anchors[i].y - r.centers[i][1]), 12.5);
  }
  EXPECT_THROW(region_error(s, replay(s, settings), BinSpec::categorical(7), settings, 0, 0.1), UserError);
}

TEST(Compare, NestedSubsetsAndLayout) {
  Rng rng(8);
  const auto train = random_samples(rng, 200, 3);
  const auto test = random_samples(rng, 40, 3);
  ModelParams base = init_model(0, 3);
  base.meta.normalizer = Normalizer(Aabb{Vec3(0, 0, 0), Vec3(50, 50, 10)});
  TrainConfig c;
  c.epochs = 2;
  c.batch_size = 64;
  const auto cmp = compare_models(train, test, {0.5, 1.0}, {1, 5}, c, base, 1, 2);
  EXPECT_EQ(cmp.train_sizes, (std::vector<std::size_t>{100, 200}));
  ASSERT_EQ(cmp.models.size(), 3u);
  ASSERT_EQ(cmp.rmse.size(), 3u);
  for (const auto& row : cmp.rmse) ASSERT_EQ(row.size(), 2u);
  std::vector<ThematicDistribution> knn5;
  for (const auto& s : test) knn5.push_back(ThematicDistribution{oracle::knn_scan(train, base.meta.normalizer, s.viewpoint, 5)});
  EXPECT_NEAR(cmp.rmse[1][1], rmse(test, knn5), 1e-12);
  const auto j = to_json(cmp);
  EXPECT_EQ(j.at("rows").size(), 3u);
  EXPECT_EQ(j.at("rows")[2].at("model"), "Ours");
  EXPECT_NE(to_table(cmp).find("5-Neighbors"), std::string::npos);
}
