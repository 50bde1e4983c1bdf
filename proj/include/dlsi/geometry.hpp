#pragma once

// Mesh and point-cloud data model plus the closed-form geometry used by the
// losses and metrics: edge lengths, areas, volume, rigid alignment, the
// rotation-invariant distance, Chamfer distance and the graph Laplacian.

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <utility>
#include <vector>

#include "dlsi/error.hpp"

namespace dlsi {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
// n×3 coordinates, row-major so that the flat buffer is x0 y0 z0 x1 ...
using Points = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;
using EdgeLengths = Eigen::VectorXd;
using Face = std::array<int, 3>;

struct Edge {
  int a = 0;  // always a < b
  int b = 0;

  friend bool operator==(const Edge&, const Edge&) = default;
  friend auto operator<=>(const Edge&, const Edge&) = default;
};

/// Sorted, duplicate-free undirected edges of a face list.
inline std::vector<Edge> canonical_edges(std::span<const Face> faces) {
  std::vector<Edge> edges;
  edges.reserve(faces.size() * 3);
  for (std::size_t f = 0; f < faces.size(); ++f) {
    const Face& t = faces[f];
    if (t[0] == t[1] || t[1] == t[2] || t[0] == t[2]) {
      fail("degenerate face ", f, " (", t[0], ", ", t[1], ", ", t[2], ")");
    }
    for (int k = 0; k < 3; ++k) {
      const int i = t[k];
      const int j = t[(k + 1) % 3];
      require(i >= 0 && j >= 0, "negative vertex index in face ", f);
      edges.push_back({std::min(i, j), std::max(i, j)});
    }
  }
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  return edges;
}

// Fixed-connectivity triangle mesh. The edge list is derived from the faces
// and never set independently.
class Mesh {
 public:
  Mesh() = default;

  Mesh(Points vertices, std::vector<Face> faces)
      : vertices_(std::move(vertices)), faces_(std::move(faces)) {
    const auto n = static_cast<int>(vertices_.rows());
    for (std::size_t f = 0; f < faces_.size(); ++f) {
      for (int idx : faces_[f]) {
        require(idx >= 0 && idx < n, "face ", f, " index ", idx,
                " out of range for ", n, " vertices");
      }
    }
    edges_ = canonical_edges(faces_);
  }

  const Points& vertices() const noexcept { return vertices_; }
  Points& vertices() noexcept { return vertices_; }
  const std::vector<Face>& faces() const noexcept { return faces_; }
  const std::vector<Edge>& edges() const noexcept { return edges_; }
  std::size_t vertex_count() const noexcept {
    return static_cast<std::size_t>(vertices_.rows());
  }

  Mesh with_vertices(Points v) const {
    require(v.rows() == vertices_.rows(), "vertex count mismatch: ", v.rows(),
            " vs ", vertices_.rows());
    Mesh m = *this;
    m.vertices_ = std::move(v);
    return m;
  }

 private:
  Points vertices_;
  std::vector<Face> faces_;
  std::vector<Edge> edges_;
};

struct PointCloud {
  Points points;

  std::size_t size() const noexcept {
    return static_cast<std::size_t>(points.rows());
  }
  bool empty() const noexcept { return points.rows() == 0; }
  bool finite() const { return points.allFinite(); }
};

struct RigidTransform {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();
  // Set when the cross-covariance does not pin down a unique rotation.
  bool degenerate = false;

  Points apply(const Points& p) const {
    Points out = p * rotation.transpose();
    out.rowwise() += translation.transpose();
    return out;
  }
};

inline EdgeLengths edge_lengths(const Points& v, std::span<const Edge> edges) {
  EdgeLengths out(static_cast<Eigen::Index>(edges.size()));
  const auto n = v.rows();
  for (std::size_t k = 0; k < edges.size(); ++k) {
    const Edge& e = edges[k];
    require(e.a >= 0 && e.b >= 0 && e.a < n && e.b < n, "edge ", k,
            " index out of range");
    out[static_cast<Eigen::Index>(k)] = (v.row(e.a) - v.row(e.b)).norm();
  }
  return out;
}

/// Accumulates dLoss/dV into `grad` given dLoss/dL for every edge.
/// Zero-length edges contribute nothing.
inline void edge_lengths_backward(const Points& v, std::span<const Edge> edges,
                                  const EdgeLengths& upstream, Points& grad) {
  for (std::size_t k = 0; k < edges.size(); ++k) {
    const Edge& e = edges[k];
    const Eigen::RowVector3d d = v.row(e.a) - v.row(e.b);
    const double len = d.norm();
    if (len <= 0.0) continue;
    const Eigen::RowVector3d g =
        (upstream[static_cast<Eigen::Index>(k)] / len) * d;
    grad.row(e.a) += g;
    grad.row(e.b) -= g;
  }
}

inline Eigen::VectorXd per_triangle_areas(const Points& v,
                                          std::span<const Face> faces) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(faces.size()));
  for (std::size_t f = 0; f < faces.size(); ++f) {
    const Vec3 a = v.row(faces[f][0]).transpose();
    const Vec3 b = v.row(faces[f][1]).transpose();
    const Vec3 c = v.row(faces[f][2]).transpose();
    out[static_cast<Eigen::Index>(f)] = 0.5 * (b - a).cross(c - a).norm();
  }
  return out;
}

inline Eigen::VectorXd per_triangle_areas(const Mesh& m) {
  return per_triangle_areas(m.vertices(), m.faces());
}

inline double total_area(const Points& v, std::span<const Face> faces) {
  return per_triangle_areas(v, faces).sum();
}

inline double total_area(const Mesh& m) {
  return total_area(m.vertices(), m.faces());
}

// Absolute value of the signed volume of origin-apex tetrahedra. Only
// meaningful for closed, consistently oriented surfaces; not validated.
inline double enclosed_volume(const Points& v, std::span<const Face> faces) {
  double six_vol = 0.0;
  for (const Face& f : faces) {
    const Vec3 a = v.row(f[0]).transpose();
    const Vec3 b = v.row(f[1]).transpose();
    const Vec3 c = v.row(f[2]).transpose();
    six_vol += a.dot(b.cross(c));
  }
  return std::abs(six_vol) / 6.0;
}

inline double enclosed_volume(const Mesh& m) {
  return enclosed_volume(m.vertices(), m.faces());
}

/// Proper rigid motion (R, t) minimising sum |R s_i + t - t_i|^2.
inline RigidTransform kabsch_align(const Points& source, const Points& target) {
  require(source.rows() == target.rows(), "kabsch_align: point counts differ (",
          source.rows(), " vs ", target.rows(), ")");
  require(source.rows() >= 3, "kabsch_align: need at least 3 points, got ",
          source.rows());

  const Eigen::RowVector3d cs = source.colwise().mean();
  const Eigen::RowVector3d ct = target.colwise().mean();
  const Mat3 h = (source.rowwise() - cs).transpose() * (target.rowwise() - ct);

  Eigen::JacobiSVD<Mat3> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Mat3& u = svd.matrixU();
  const Mat3& vm = svd.matrixV();
  const Vec3 s = svd.singularValues();
  const double d = (vm * u.transpose()).determinant() < 0.0 ? -1.0 : 1.0;

  RigidTransform out;
  out.rotation = vm * Eigen::Vector3d(1.0, 1.0, d).asDiagonal() * u.transpose();
  out.translation = ct.transpose() - out.rotation * cs.transpose();

  const double scale = std::max(s[0], std::numeric_limits<double>::min());
  const double tol = 1e-12 * scale;
  out.degenerate = s[1] <= tol || (d < 0.0 && std::abs(s[1] - s[2]) <= tol);
  return out;
}

struct RotDistance {
  double value = 0.0;
  Points gradient;  // d value / d predicted
  RigidTransform alignment;
};

// Mean squared error after aligning `predicted` onto `reference`. The
// gradient holds the optimal alignment fixed, which is exact at the optimum.
inline RotDistance d_rot(const Points& predicted, const Points& reference) {
  RotDistance out;
  out.alignment = kabsch_align(predicted, reference);
  const Points residual = out.alignment.apply(predicted) - reference;
  const double n = static_cast<double>(predicted.rows());
  out.value = residual.squaredNorm() / n;
  out.gradient = (2.0 / n) * residual * out.alignment.rotation;
  return out;
}

namespace detail {

// For every row of `from`, index of the nearest row of `to` and the squared
// distance. Brute force; clouds here are at most a few thousand points.
inline void nearest_neighbours(const Points& from, const Points& to,
                               std::vector<int>& index,
                               std::vector<double>& dist2) {
  index.assign(static_cast<std::size_t>(from.rows()), 0);
  dist2.assign(static_cast<std::size_t>(from.rows()),
               std::numeric_limits<double>::infinity());
  for (Eigen::Index i = 0; i < from.rows(); ++i) {
    const double x = from(i, 0), y = from(i, 1), z = from(i, 2);
    double best = std::numeric_limits<double>::infinity();
    int arg = 0;
    for (Eigen::Index j = 0; j < to.rows(); ++j) {
      const double dx = x - to(j, 0), dy = y - to(j, 1), dz = z - to(j, 2);
      const double d = dx * dx + dy * dy + dz * dz;
      if (d < best) {
        best = d;
        arg = static_cast<int>(j);
      }
    }
    index[static_cast<std::size_t>(i)] = arg;
    dist2[static_cast<std::size_t>(i)] = best;
  }
}

}  // namespace detail

struct ChamferResult {
  double value = 0.0;
  Points gradient;  // w.r.t. the first argument
};

inline ChamferResult chamfer_with_gradient(const Points& a, const Points& b) {
  require(a.rows() > 0 && b.rows() > 0, "chamfer: empty point cloud");
  std::vector<int> ab, ba;
  std::vector<double> dab, dba;
  detail::nearest_neighbours(a, b, ab, dab);
  detail::nearest_neighbours(b, a, ba, dba);

  const double na = static_cast<double>(a.rows());
  const double nb = static_cast<double>(b.rows());
  ChamferResult out;
  double sa = 0.0, sb = 0.0;
  for (double d : dab) sa += d;
  for (double d : dba) sb += d;
  out.value = sa / na + sb / nb;

  out.gradient = Points::Zero(a.rows(), 3);
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    out.gradient.row(i) +=
        (2.0 / na) * (a.row(i) - b.row(ab[static_cast<std::size_t>(i)]));
  }
  for (Eigen::Index j = 0; j < b.rows(); ++j) {
    const int i = ba[static_cast<std::size_t>(j)];
    out.gradient.row(i) += (2.0 / nb) * (a.row(i) - b.row(j));
  }
  return out;
}

inline double chamfer(const Points& a, const Points& b) {
  require(a.rows() > 0 && b.rows() > 0, "chamfer: empty point cloud");
  std::vector<int> idx;
  std::vector<double> dab, dba;
  detail::nearest_neighbours(a, b, idx, dab);
  detail::nearest_neighbours(b, a, idx, dba);
  double sa = 0.0, sb = 0.0;
  for (double d : dab) sa += d;
  for (double d : dba) sb += d;
  return sa / static_cast<double>(a.rows()) + sb / static_cast<double>(b.rows());
}

inline double chamfer(const PointCloud& a, const PointCloud& b) {
  return chamfer(a.points, b.points);
}

/// Combinatorial Laplacian D - A of the edge graph.
inline Eigen::SparseMatrix<double> graph_laplacian(std::size_t vertex_count,
                                                   std::span<const Edge> edges) {
  const auto n = static_cast<Eigen::Index>(vertex_count);
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(edges.size() * 4);
  for (const Edge& e : edges) {
    require(e.a >= 0 && e.b >= 0 && e.a < n && e.b < n,
            "graph_laplacian: edge index out of range");
    trips.emplace_back(e.a, e.b, -1.0);
    trips.emplace_back(e.b, e.a, -1.0);
    trips.emplace_back(e.a, e.a, 1.0);
    trips.emplace_back(e.b, e.b, 1.0);
  }
  Eigen::SparseMatrix<double> lap(n, n);
  lap.setFromTriplets(trips.begin(), trips.end());
  return lap;
}

inline Eigen::SparseMatrix<double> graph_laplacian(const Mesh& m) {
  return graph_laplacian(m.vertex_count(), m.edges());
}

inline Eigen::RowVector3d bbox_extent(const Points& p) {
  if (p.rows() == 0) return Eigen::RowVector3d::Zero();
  return p.colwise().maxCoeff() - p.colwise().minCoeff();
}

inline double bbox_diagonal(const Points& p) { return bbox_extent(p).norm(); }

}  // namespace dlsi
