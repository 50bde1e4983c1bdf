#pragma once

// Discrete intrinsic interpolation energy, its lower bound for fixed
// endpoints, and the sequence / reconstruction metrics.

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dlsi/error.hpp"
#include "dlsi/geometry.hpp"

namespace dlsi {

// Shapes sampled at uniform times along an interpolation, all sharing one
// connectivity. `faces` may be empty when only edge features are needed.
class ShapeSequence {
 public:
  ShapeSequence(std::vector<Points> shapes, std::vector<Edge> edges,
                std::vector<Face> faces = {})
      : shapes_(std::move(shapes)),
        edges_(std::move(edges)),
        faces_(std::move(faces)) {
    require(shapes_.size() >= 2, "shape sequence needs at least 2 shapes, got ",
            shapes_.size());
    for (std::size_t k = 1; k < shapes_.size(); ++k) {
      require(shapes_[k].rows() == shapes_[0].rows(), "shape ", k, " has ",
              shapes_[k].rows(), " vertices, expected ", shapes_[0].rows());
    }
  }

  ShapeSequence(std::vector<Points> shapes, const Mesh& connectivity)
      : ShapeSequence(std::move(shapes), connectivity.edges(),
                      connectivity.faces()) {}

  std::size_t size() const noexcept { return shapes_.size(); }
  const std::vector<Points>& shapes() const noexcept { return shapes_; }
  const Points& operator[](std::size_t k) const { return shapes_[k]; }
  const std::vector<Edge>& edges() const noexcept { return edges_; }
  const std::vector<Face>& faces() const noexcept { return faces_; }

 private:
  std::vector<Points> shapes_;
  std::vector<Edge> edges_;
  std::vector<Face> faces_;
};

inline std::vector<EdgeLengths> sequence_edge_lengths(const ShapeSequence& seq) {
  std::vector<EdgeLengths> out;
  out.reserve(seq.size());
  for (const Points& s : seq.shapes()) out.push_back(edge_lengths(s, seq.edges()));
  return out;
}

/// Sum over consecutive shapes and edges of squared edge-length change.
inline double e_disc(const ShapeSequence& seq) {
  const auto lengths = sequence_edge_lengths(seq);
  double total = 0.0;
  for (std::size_t k = 1; k < lengths.size(); ++k) {
    total += (lengths[k] - lengths[k - 1]).squaredNorm();
  }
  return total;
}

/// E_disc over edge-length vectors directly (mismatched sizes rejected).
inline double e_disc(std::span<const EdgeLengths> lengths) {
  require(lengths.size() >= 2, "e_disc needs at least 2 entries");
  double total = 0.0;
  for (std::size_t k = 1; k < lengths.size(); ++k) {
    require(lengths[k].size() == lengths[0].size(),
            "e_disc: mismatched edge lists at step ", k);
    total += (lengths[k] - lengths[k - 1]).squaredNorm();
  }
  return total;
}

struct EnergyGradient {
  double value = 0.0;
  std::vector<Points> gradient;  // one n×3 block per shape
};

inline EnergyGradient e_disc_with_gradient(const ShapeSequence& seq) {
  const auto lengths = sequence_edge_lengths(seq);
  const std::size_t count = seq.size();
  EnergyGradient out;
  out.gradient.assign(count, Points::Zero(seq[0].rows(), 3));
  for (std::size_t k = 0; k < count; ++k) {
    EdgeLengths up = EdgeLengths::Zero(lengths[k].size());
    if (k > 0) {
      const EdgeLengths d = lengths[k] - lengths[k - 1];
      out.value += d.squaredNorm();
      up += 2.0 * d;
    }
    if (k + 1 < count) up -= 2.0 * (lengths[k + 1] - lengths[k]);
    edge_lengths_backward(seq[k], seq.edges(), up, out.gradient[k]);
  }
  return out;
}

/// Minimum of E_disc over all edge-length sequences with the given endpoints:
/// equal steps along every edge.
inline double e_disc_lower_bound(const EdgeLengths& first, const EdgeLengths& last,
                                 std::size_t segments) {
  require(segments >= 1, "e_disc_lower_bound: segments must be >= 1");
  require(first.size() == last.size(), "e_disc_lower_bound: size mismatch (",
          first.size(), " vs ", last.size(), ")");
  return (last - first).squaredNorm() / static_cast<double>(segments);
}

enum class Feature { EdgeLengths, TotalArea, Volume, PerTriangleArea };

inline Feature parse_feature(std::string_view tag) {
  if (tag == "edge-lengths") return Feature::EdgeLengths;
  if (tag == "total-area") return Feature::TotalArea;
  if (tag == "volume") return Feature::Volume;
  if (tag == "per-triangle-area") return Feature::PerTriangleArea;
  fail("unknown feature tag '", tag, "'");
}

inline std::string_view feature_name(Feature f) {
  switch (f) {
    case Feature::EdgeLengths: return "edge-lengths";
    case Feature::TotalArea: return "total-area";
    case Feature::Volume: return "volume";
    case Feature::PerTriangleArea: return "per-triangle-area";
  }
  return "?";
}

inline Eigen::VectorXd feature_of(const Points& shape, const ShapeSequence& seq,
                                  Feature f) {
  switch (f) {
    case Feature::EdgeLengths: return edge_lengths(shape, seq.edges());
    case Feature::TotalArea:
      return Eigen::VectorXd::Constant(1, total_area(shape, seq.faces()));
    case Feature::Volume:
      return Eigen::VectorXd::Constant(1, enclosed_volume(shape, seq.faces()));
    case Feature::PerTriangleArea: return per_triangle_areas(shape, seq.faces());
  }
  fail("unknown feature");
}

/// Squared consecutive feature differences, one per step.
inline std::vector<double> feature_steps(const ShapeSequence& seq, Feature f) {
  if (f != Feature::EdgeLengths) {
    require(!seq.faces().empty(), "feature '", feature_name(f),
            "' needs faces attached to the sequence");
  }
  std::vector<double> steps;
  steps.reserve(seq.size() - 1);
  Eigen::VectorXd prev = feature_of(seq[0], seq, f);
  for (std::size_t k = 1; k < seq.size(); ++k) {
    Eigen::VectorXd cur = feature_of(seq[k], seq, f);
    steps.push_back((cur - prev).squaredNorm());
    prev = std::move(cur);
  }
  return steps;
}

/// Mean squared consecutive difference of a shape feature.
inline double var_f(const ShapeSequence& seq, Feature f) {
  const auto steps = feature_steps(seq, f);
  double s = 0.0;
  for (double v : steps) s += v;
  return s / static_cast<double>(steps.size());
}

inline double var_f(const ShapeSequence& seq, std::string_view tag) {
  return var_f(seq, parse_feature(tag));
}

/// Var of a scalar feature sequence.
inline double var_scalar(std::span<const double> values) {
  require(values.size() >= 2, "var_scalar needs at least 2 values");
  double s = 0.0;
  for (std::size_t k = 1; k < values.size(); ++k) {
    const double d = values[k] - values[k - 1];
    s += d * d;
  }
  return s / static_cast<double>(values.size() - 1);
}

struct MetricReport {
  double var_edge_length = 0.0;
  double var_total_area = 0.0;
  double var_volume = 0.0;
  double e_disc = 0.0;
  std::vector<double> step_edge_length;
  std::vector<double> step_total_area;
  std::vector<double> step_volume;
};

inline MetricReport metric_report(const ShapeSequence& seq) {
  MetricReport r;
  r.step_edge_length = feature_steps(seq, Feature::EdgeLengths);
  r.step_total_area = feature_steps(seq, Feature::TotalArea);
  r.step_volume = feature_steps(seq, Feature::Volume);
  const auto mean = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
  };
  for (double v : r.step_edge_length) r.e_disc += v;
  r.var_edge_length = mean(r.step_edge_length);
  r.var_total_area = mean(r.step_total_area);
  r.var_volume = mean(r.step_volume);
  return r;
}

struct ReconstructionReport {
  double el = 0.0;                  // mean squared edge-length error
  double pc = 0.0;                  // d_rot
  double per_triangle_area = 0.0;   // mean squared per-face area error
  double total_area_diff = 0.0;     // squared total-area difference
  double total_volume_diff = 0.0;   // squared volume difference
  double chamfer = 0.0;
};

/// `predicted` must be in the reference's vertex order.
inline ReconstructionReport reconstruction_report(const Points& predicted,
                                                  const Mesh& reference) {
  require(predicted.rows() == reference.vertices().rows(),
          "reconstruction_report: ", predicted.rows(), " predicted points vs ",
          reference.vertices().rows(), " reference vertices");
  ReconstructionReport r;
  const auto& ref = reference.vertices();
  const EdgeLengths le = edge_lengths(predicted, reference.edges());
  const EdgeLengths lr = edge_lengths(ref, reference.edges());
  r.el = (le - lr).squaredNorm() / static_cast<double>(lr.size());
  r.pc = d_rot(predicted, ref).value;
  const Eigen::VectorXd ap = per_triangle_areas(predicted, reference.faces());
  const Eigen::VectorXd ar = per_triangle_areas(ref, reference.faces());
  r.per_triangle_area = (ap - ar).squaredNorm() / static_cast<double>(ar.size());
  const double da = ap.sum() - ar.sum();
  r.total_area_diff = da * da;
  const double dv = enclosed_volume(predicted, reference.faces()) -
                    enclosed_volume(ref, reference.faces());
  r.total_volume_diff = dv * dv;
  r.chamfer = chamfer(predicted, ref);
  return r;
}

}  // namespace dlsi
