#include <gtest/gtest.h>

#include <filesystem>
#include <set>

#include "dlsi/synthdata.hpp"

using namespace dlsi;
namespace fs = std::filesystem;

TEST(Synthdata, DefaultBendCylinderResolution) {
  FamilySpec s;
  s.count = 2;
  const Dataset ds = generate(s);
  const Mesh m = ds.template_mesh();
  EXPECT_EQ(m.vertex_count(), 502u);
  EXPECT_EQ(m.faces().size(), 1000u);
  EXPECT_EQ(m.edges().size(), 1500u);
  for (const Points& p : ds.shapes) EXPECT_NEAR(total_area(p, ds.faces), 1.0, 1e-9);
}

TEST(Synthdata, ZeroBendIsStraightCylinder) {
  FamilySpec s;
  s.count = 1;
  s.max_bend = 0.0;
  const Dataset ds = generate(s);
  const Points& p = ds.shapes[0];
  // every ring vertex sits at one common distance from the principal axis
  const Eigen::RowVector3d c = p.colwise().mean();
  const Points q = p.rowwise() - c;
  Eigen::SelfAdjointEigenSolver<Mat3> es(q.transpose() * q);
  const Vec3 axis = es.eigenvectors().col(2);
  std::vector<double> radii;
  for (Eigen::Index i = 0; i < 500; ++i) {
    const Vec3 v = q.row(i).transpose();
    radii.push_back((v - v.dot(axis) * axis).norm());
  }
  const auto [lo, hi] = std::minmax_element(radii.begin(), radii.end());
  EXPECT_LT(*hi - *lo, 1e-9);
  EXPECT_NEAR(total_area(p, ds.faces), 1.0, 1e-9);
}

TEST(Synthdata, BendIsNearlyIsometric) {
  FamilySpec s;
  s.count = 200;
  EXPECT_LT(max_relative_edge_spread(generate(s)), 0.03);
}

TEST(Synthdata, DeterministicAndSharedConnectivity) {
  FamilySpec s;
  s.count = 5;
  s.seed = 17;
  const Dataset a = generate(s), b = generate(s);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_TRUE(a.shapes[i] == b.shapes[i]);
  EXPECT_EQ(a.faces, b.faces);
  s.seed = 18;
  EXPECT_FALSE(generate(s).shapes[0] == a.shapes[0]);
}

TEST(Synthdata, OtherFamiliesGenerate) {
  for (Family f : {Family::TwistCylinder, Family::ArticulatedArm, Family::BendPlate}) {
    FamilySpec s;
    s.family = f;
    s.count = 3;
    const Dataset ds = generate(s);
    EXPECT_EQ(ds.size(), 3u) << family_name(f);
    for (const Points& p : ds.shapes) {
      EXPECT_TRUE(p.allFinite());
      EXPECT_NEAR(total_area(p, ds.faces), 1.0, 1e-9);
    }
    EXPECT_EQ(parse_family(family_name(f)), f);
  }
  EXPECT_THROW(parse_family("torus"), Error);
}

TEST(Synthdata, ZeroNoiseIsIdentity) {
  FamilySpec s;
  s.count = 1;
  const PointCloud c = sample_surface(generate(s).mesh(0), 300, 2);
  EXPECT_TRUE(corrupt(c, Corruption::noise(0.0), 5).points == c.points);
}

TEST(Synthdata, SubsampleKeepsExistingPoints) {
  FamilySpec s;
  s.count = 1;
  const PointCloud c = sample_surface(generate(s).mesh(0), 1000, 3);
  const PointCloud sub = corrupt(c, Corruption::subsample(500), 4);
  ASSERT_EQ(sub.size(), 500u);
  std::set<std::array<double, 3>> src, seen;
  for (Eigen::Index i = 0; i < c.points.rows(); ++i) src.insert({c.points(i, 0), c.points(i, 1), c.points(i, 2)});
  for (Eigen::Index i = 0; i < sub.points.rows(); ++i) {
    const std::array<double, 3> r{sub.points(i, 0), sub.points(i, 1), sub.points(i, 2)};
    EXPECT_TRUE(src.count(r));
    EXPECT_TRUE(seen.insert(r).second);  // drawn without replacement
  }
  EXPECT_THROW(corrupt(c, Corruption::subsample(1001), 4), Error);
}

TEST(Synthdata, HoleRemovesBall) {
  FamilySpec s;
  s.count = 1;
  const PointCloud c = sample_surface(generate(s).mesh(0), 1000, 3);
  const Vec3 centre = c.points.row(0).transpose();
  const PointCloud h = corrupt(c, Corruption::hole(centre, 0.1), 1);
  EXPECT_LT(h.size(), c.size());
  for (Eigen::Index i = 0; i < h.points.rows(); ++i) {
    EXPECT_GT((h.points.row(i).transpose() - centre).norm(), 0.1);
  }
}

TEST(Synthdata, SampleSurfaceEdgeCases) {
  Points v(3, 3);
  v << 0, 0, 0, 1, 0, 0, 0, 1, 0;
  const Mesh tri(v, {{0, 1, 2}});
  EXPECT_TRUE(sample_surface(tri, 0, 1).empty());
  const PointCloud c = sample_surface(tri, 2000, 1);
  for (Eigen::Index i = 0; i < c.points.rows(); ++i) {
    EXPECT_EQ(c.points(i, 2), 0.0);
    EXPECT_GE(c.points(i, 0), 0.0);
    EXPECT_GE(c.points(i, 1), 0.0);
    EXPECT_LE(c.points(i, 0) + c.points(i, 1), 1.0 + 1e-12);
  }
}

TEST(Synthdata, SampleSurfaceIsAreaUniform) {
  // unit octahedron: samples should average to the centre, each face a
  // fraction 1/8 of the points
  Points v(6, 3);
  v << 1, 0, 0, -1, 0, 0, 0, 1, 0, 0, -1, 0, 0, 0, 1, 0, 0, -1;
  const Mesh oct(v, {{0, 2, 4}, {2, 1, 4}, {1, 3, 4}, {3, 0, 4},
                     {2, 0, 5}, {1, 2, 5}, {3, 1, 5}, {0, 3, 5}});
  const PointCloud c = sample_surface(oct, 100000, 9);
  const Eigen::RowVector3d mean = c.points.colwise().mean();
  EXPECT_LT(mean.norm(), 0.02);
  std::size_t positive_octant = 0;
  for (Eigen::Index i = 0; i < c.points.rows(); ++i) {
    if (c.points(i, 0) > 0 && c.points(i, 1) > 0 && c.points(i, 2) > 0) ++positive_octant;
  }
  EXPECT_NEAR(static_cast<double>(positive_octant) / 100000.0, 0.125, 0.005);
}

TEST(Synthdata, FarthestPointAnchorsMatchBruteForce) {
  FamilySpec s;
  s.count = 10;
  s.around = 8;
  s.along = 6;
  const Dataset ds = generate(s);
  const PairSelection sel = farthest_point_pairs(ds.shapes, 4, 6, 5);
  ASSERT_EQ(sel.anchors.size(), 4u);
  // each anchor after the first maximises the distance to the chosen set
  for (std::size_t a = 1; a < sel.anchors.size(); ++a) {
    auto set_distance = [&](std::size_t i) {
      double d = 1e300;
      for (std::size_t b = 0; b < a; ++b) d = std::min(d, d_rot(ds.shapes[i], ds.shapes[sel.anchors[b]]).value);
      return d;
    };
    double best = -1.0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
      if (std::find(sel.anchors.begin(), sel.anchors.begin() + a, i) == sel.anchors.begin() + a) {
        best = std::max(best, set_distance(i));
      }
    }
    EXPECT_NEAR(set_distance(sel.anchors[a]), best, 1e-15);
  }
  std::set<std::pair<std::size_t, std::size_t>> distinct(sel.pairs.begin(), sel.pairs.end());
  EXPECT_EQ(distinct.size(), 6u);
  for (const auto& [i, j] : sel.pairs) EXPECT_NE(i, j);
  EXPECT_THROW(farthest_point_pairs(ds.shapes, 4, 7, 5), Error);
}

TEST(Synthdata, AllAnchorsCoverDataset) {
  FamilySpec s;
  s.count = 6;
  s.around = 6;
  s.along = 4;
  const Dataset ds = generate(s);
  const PairSelection sel = farthest_point_pairs(ds.shapes, 6, 15, 1);
  std::set<std::size_t> anchors(sel.anchors.begin(), sel.anchors.end());
  EXPECT_EQ(anchors.size(), 6u);
}

TEST(Synthdata, DatasetDiskRoundTrip) {
  FamilySpec s;
  s.count = 4;
  s.around = 7;
  s.along = 5;
  const Dataset ds = generate(s);
  const fs::path dir = fs::temp_directory_path() / "dlsi_test_dataset";
  fs::remove_all(dir);
  write_dataset(dir, ds);
  const Dataset back = read_dataset(dir);
  ASSERT_EQ(back.size(), ds.size());
  EXPECT_EQ(back.faces, ds.faces);
  for (std::size_t i = 0; i < ds.size(); ++i) EXPECT_TRUE(back.shapes[i] == ds.shapes[i]);
  EXPECT_EQ(back.flags, ds.flags);
}
