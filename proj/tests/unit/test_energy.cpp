#include <gtest/gtest.h>

#include "dlsi/energy.hpp"
#include "dlsi/nn.hpp"
#include "dlsi/synthdata.hpp"

using namespace dlsi;

namespace {

EdgeLengths vec(std::initializer_list<double> v) {
  EdgeLengths e(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) e[i++] = x;
  return e;
}

// Two points on the x axis: a single edge of the given length.
Points segment(double len) {
  Points p(2, 3);
  p << 0, 0, 0, len, 0, 0;
  return p;
}

}  // namespace

TEST(Energy, SingleEdgeHandCase) {
  const std::vector<Edge> edges{{0, 1}};
  const ShapeSequence seq({segment(1.0), segment(1.5), segment(2.0)}, edges);
  EXPECT_DOUBLE_EQ(e_disc(seq), 0.5);
  const std::vector<EdgeLengths> l{vec({1.0}), vec({1.5}), vec({2.0})};
  EXPECT_DOUBLE_EQ(e_disc(l), 0.5);
}

TEST(Energy, ScalarVarianceHandCase) {
  const std::vector<double> v{0.0, 1.0, 3.0};
  EXPECT_DOUBLE_EQ(var_scalar(v), 2.5);
}

TEST(Energy, LowerBoundHolds) {
  Rng rng(21);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto edges = static_cast<Eigen::Index>(1 + rng.index(12));
    const std::size_t frames = 2 + rng.index(10);
    std::vector<EdgeLengths> seq;
    for (std::size_t k = 0; k < frames; ++k) {
      EdgeLengths e(edges);
      for (Eigen::Index i = 0; i < edges; ++i) e[i] = rng.uniform(0.0, 3.0);
      seq.push_back(e);
    }
    EXPECT_GE(e_disc(seq) + 1e-9, e_disc_lower_bound(seq.front(), seq.back(), frames - 1));
  }
}

TEST(Energy, LowerBoundAttainedByUniformSteps) {
  const EdgeLengths a = vec({1.0, 2.0, 0.5}), b = vec({2.0, 0.0, 0.5});
  std::vector<EdgeLengths> seq;
  for (int k = 0; k <= 4; ++k) seq.push_back(a + (b - a) * (k / 4.0));
  EXPECT_NEAR(e_disc(seq), e_disc_lower_bound(a, b, 4), 1e-14);
  EXPECT_NEAR(e_disc_lower_bound(a, b, 4), 5.0 / 4.0, 1e-15);
}

TEST(Energy, Rejections) {
  const std::vector<EdgeLengths> bad{vec({1.0}), vec({1.0, 2.0})};
  EXPECT_THROW(e_disc(bad), Error);
  EXPECT_THROW(e_disc_lower_bound(vec({1.0}), vec({2.0}), 0), Error);
  EXPECT_THROW(ShapeSequence({segment(1.0)}, {{0, 1}}), Error);
  EXPECT_THROW(parse_feature("curvature"), Error);
}

TEST(Energy, VarElIsEnergyPerStep) {
  FamilySpec s;
  s.count = 6;
  s.seed = 4;
  const Dataset ds = generate(s);
  const ShapeSequence seq(ds.shapes, ds.template_mesh());
  EXPECT_NEAR(var_f(seq, Feature::EdgeLengths), e_disc(seq) / 5.0, 1e-15);
  const MetricReport r = metric_report(seq);
  EXPECT_NEAR(r.var_edge_length, r.e_disc / 5.0, 1e-15);
  EXPECT_EQ(r.step_volume.size(), 5u);
}

TEST(Energy, ConstantSequenceHasZeroVariance) {
  FamilySpec s;
  s.count = 1;
  const Dataset ds = generate(s);
  const ShapeSequence seq({ds.shapes[0], ds.shapes[0], ds.shapes[0]}, ds.template_mesh());
  for (Feature f : {Feature::EdgeLengths, Feature::TotalArea, Feature::Volume, Feature::PerTriangleArea}) {
    EXPECT_EQ(var_f(seq, f), 0.0);
  }
}

TEST(Energy, FeatureTagsRoundTrip) {
  for (const char* t : {"edge-lengths", "total-area", "volume", "per-triangle-area"}) {
    EXPECT_EQ(feature_name(parse_feature(t)), t);
  }
}

TEST(Energy, ReconstructionReportOfExactCopyIsZero) {
  FamilySpec s;
  s.count = 1;
  const Dataset ds = generate(s);
  const ReconstructionReport r = reconstruction_report(ds.shapes[0], ds.template_mesh());
  EXPECT_EQ(r.el, 0.0);
  EXPECT_LT(r.pc, 1e-20);
  EXPECT_EQ(r.chamfer, 0.0);
  EXPECT_EQ(r.total_volume_diff, 0.0);
}

TEST(Energy, GradientMatchesFiniteDifferences) {
  Rng rng(2);
  std::vector<Points> shapes;
  for (int k = 0; k < 4; ++k) {
    Points p(5, 3);
    for (Eigen::Index i = 0; i < p.size(); ++i) p.data()[i] = rng.uniform(-1, 1);
    shapes.push_back(p);
  }
  const std::vector<Edge> edges{{0, 1}, {1, 2}, {2, 3}, {3, 4}, {0, 4}, {1, 3}};
  const EnergyGradient g = e_disc_with_gradient(ShapeSequence(shapes, edges));
  EXPECT_NEAR(g.value, e_disc(ShapeSequence(shapes, edges)), 1e-14);
  const double h = 1e-6;
  for (std::size_t k = 0; k < shapes.size(); ++k) {
    for (Eigen::Index i = 0; i < shapes[k].size(); ++i) {
      auto plus = shapes, minus = shapes;
      plus[k].data()[i] += h;
      minus[k].data()[i] -= h;
      const double fd = (e_disc(ShapeSequence(plus, edges)) - e_disc(ShapeSequence(minus, edges))) / (2 * h);
      EXPECT_NEAR(g.gradient[k].data()[i], fd, 1e-6);
    }
  }
}
