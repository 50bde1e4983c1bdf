#pragma once

// Procedural fixed-connectivity mesh families (corresponded training and test
// data), surface sampling, corruption operators and farthest-point pair
// selection.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "dlsi/error.hpp"
#include "dlsi/geometry.hpp"
#include "dlsi/io.hpp"
#include "dlsi/nn.hpp"

namespace dlsi {

enum class Family { BendCylinder, TwistCylinder, ArticulatedArm, BendPlate };

inline Family parse_family(std::string_view s) {
  if (s == "bend-cylinder") return Family::BendCylinder;
  if (s == "twist-cylinder") return Family::TwistCylinder;
  if (s == "articulated-arm") return Family::ArticulatedArm;
  if (s == "bend-plate") return Family::BendPlate;
  fail("unknown family '", s, "'");
}

inline std::string family_name(Family f) {
  switch (f) {
    case Family::BendCylinder: return "bend-cylinder";
    case Family::TwistCylinder: return "twist-cylinder";
    case Family::ArticulatedArm: return "articulated-arm";
    case Family::BendPlate: return "bend-plate";
  }
  return "?";
}

struct FamilySpec {
  Family family = Family::BendCylinder;
  std::size_t around = 20;  // vertices per ring (cylinders) / plate columns
  std::size_t along = 25;   // rings (cylinders) / plate rows
  double radius = 0.05;
  double length = 2.0;
  double max_bend = 0.55;     // total bend angle, radians
  double max_twist = 1.5;     // end-to-end twist, radians
  double max_joint = 1.2;     // elbow angle, radians
  double area_target = 1.0;
  std::size_t count = 100;
  std::uint64_t seed = 1;
};

struct Dataset {
  Family family = Family::BendCylinder;
  std::vector<Face> faces;
  std::vector<Points> shapes;
  std::vector<std::map<std::string, double>> params;
  std::vector<std::string> flags;  // "ok" or a warning tag

  std::size_t size() const noexcept { return shapes.size(); }
  Mesh mesh(std::size_t i) const { return Mesh(shapes.at(i), faces); }
  Mesh template_mesh() const {
    require(!shapes.empty(), "empty dataset");
    return mesh(0);
  }
};

namespace detail {

// Rings of `around` vertices along z plus two cap centres (bottom, top).
inline std::vector<Face> tube_faces(std::size_t around, std::size_t along) {
  const int m = static_cast<int>(around);
  const int r = static_cast<int>(along);
  std::vector<Face> faces;
  auto id = [m](int j, int i) { return j * m + (i % m); };
  for (int j = 0; j + 1 < r; ++j) {
    for (int i = 0; i < m; ++i) {
      const int a = id(j, i), b = id(j, i + 1), c = id(j + 1, i + 1), d = id(j + 1, i);
      faces.push_back({a, b, c});
      faces.push_back({a, c, d});
    }
  }
  const int bottom = r * m, top = r * m + 1;
  for (int i = 0; i < m; ++i) {
    faces.push_back({bottom, id(0, i + 1), id(0, i)});
    faces.push_back({top, id(r - 1, i), id(r - 1, i + 1)});
  }
  return faces;
}

inline std::vector<Face> plate_faces(std::size_t cols, std::size_t rows) {
  const int m = static_cast<int>(cols);
  std::vector<Face> faces;
  for (int j = 0; j + 1 < static_cast<int>(rows); ++j) {
    for (int i = 0; i + 1 < m; ++i) {
      const int a = j * m + i, b = a + 1, c = a + m + 1, d = a + m;
      faces.push_back({a, b, c});
      faces.push_back({a, c, d});
    }
  }
  return faces;
}

// Straight tube along z, centred at the origin; `section` maps the ring
// angle to an (x, y) offset.
template <typename Section>
Points straight_tube(const FamilySpec& s, Section section) {
  const auto m = static_cast<Eigen::Index>(s.around);
  const auto r = static_cast<Eigen::Index>(s.along);
  Points p(r * m + 2, 3);
  for (Eigen::Index j = 0; j < r; ++j) {
    const double z = -0.5 * s.length + s.length * static_cast<double>(j) / static_cast<double>(r - 1);
    for (Eigen::Index i = 0; i < m; ++i) {
      const double th = 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(m);
      const Eigen::Vector2d xy = section(th);
      p.row(j * m + i) << xy.x(), xy.y(), z;
    }
  }
  p.row(r * m) << 0.0, 0.0, -0.5 * s.length;
  p.row(r * m + 1) << 0.0, 0.0, 0.5 * s.length;
  return p;
}

inline Points bend_tube(const FamilySpec& s, double angle, double azimuth) {
  Points p = straight_tube(s, [&](double th) {
    return Eigen::Vector2d(s.radius * std::cos(th), s.radius * std::sin(th));
  });
  const double kappa = angle / s.length;
  if (std::abs(kappa) < 1e-12) return p;
  const Eigen::Vector3d u(std::cos(azimuth), std::sin(azimuth), 0.0);
  const Eigen::Vector3d bn(-std::sin(azimuth), std::cos(azimuth), 0.0);
  const Eigen::Vector3d ez(0.0, 0.0, 1.0);
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    const Eigen::Vector3d q = p.row(i).transpose();
    const double arc = q.z() + 0.5 * s.length;
    const double a = q.x() * u.x() + q.y() * u.y();
    const double b = q.x() * bn.x() + q.y() * bn.y();
    const double ks = kappa * arc;
    const Eigen::Vector3d centre =
        u * (1.0 - std::cos(ks)) / kappa + ez * (std::sin(ks) / kappa - 0.5 * s.length);
    const Eigen::Vector3d normal = u * std::cos(ks) - ez * std::sin(ks);
    p.row(i) = (centre + a * normal + b * bn).transpose();
  }
  return p;
}

inline Points twist_tube(const FamilySpec& s, double twist) {
  // Elliptic section so that the twist is visible.
  Points p = straight_tube(s, [&](double th) {
    return Eigen::Vector2d(1.6 * s.radius * std::cos(th), 0.6 * s.radius * std::sin(th));
  });
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    const double phi = twist * (p(i, 2) / s.length);
    const double c = std::cos(phi), sn = std::sin(phi);
    const double x = p(i, 0), y = p(i, 1);
    p(i, 0) = c * x - sn * y;
    p(i, 1) = sn * x + c * y;
  }
  return p;
}

inline double smoothstep(double t) {
  t = std::clamp(t, 0.0, 1.0);
  return t * t * (3.0 - 2.0 * t);
}

// Elbow at mid-length: rings beyond the joint rotate rigidly about the
// joint centre, with a smooth blend over a short zone around it.
inline Points arm_tube(const FamilySpec& s, double angle, double azimuth) {
  Points p = straight_tube(s, [&](double th) {
    return Eigen::Vector2d(s.radius * std::cos(th), s.radius * std::sin(th));
  });
  const Eigen::Vector3d axis(-std::sin(azimuth), std::cos(azimuth), 0.0);
  const double zone = 0.08 * s.length;
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    const double w = smoothstep((p(i, 2) + zone) / (2.0 * zone));
    if (w <= 0.0) continue;
    const Eigen::Matrix3d rot = Eigen::AngleAxisd(w * angle, axis).toRotationMatrix();
    p.row(i) = (rot * p.row(i).transpose()).transpose();
  }
  return p;
}

inline Points bend_plate(const FamilySpec& s, double angle) {
  const auto cols = static_cast<Eigen::Index>(s.around);
  const auto rows = static_cast<Eigen::Index>(s.along);
  const double width = 0.5 * s.length;
  Points p(cols * rows, 3);
  const double kappa = angle / width;
  for (Eigen::Index j = 0; j < rows; ++j) {
    const double y = -0.5 * s.length + s.length * static_cast<double>(j) / static_cast<double>(rows - 1);
    for (Eigen::Index i = 0; i < cols; ++i) {
      const double x = -0.5 * width + width * static_cast<double>(i) / static_cast<double>(cols - 1);
      if (std::abs(kappa) < 1e-12) {
        p.row(j * cols + i) << x, y, 0.0;
      } else {
        p.row(j * cols + i) << std::sin(kappa * x) / kappa, y, (1.0 - std::cos(kappa * x)) / kappa;
      }
    }
  }
  return p;
}

inline void normalise_area(Points& p, std::span<const Face> faces, double target) {
  const Eigen::RowVector3d c = p.colwise().mean();
  p.rowwise() -= c;
  const double area = total_area(p, faces);
  require(area > 0.0, "generated mesh has zero area");
  p *= std::sqrt(target / area);
}

}  // namespace detail

/// Deterministic family of `spec.count` meshes sharing one face list, each
/// centred and scaled to `spec.area_target`.
inline Dataset generate(const FamilySpec& spec) {
  require(spec.count >= 1, "generate: count must be >= 1");
  require(spec.around >= 3 && spec.along >= 2, "generate: resolution too small");
  require(spec.radius > 0.0 && spec.length > 0.0 && spec.area_target > 0.0,
          "generate: radius, length and area target must be positive");
  Dataset ds;
  ds.family = spec.family;
  ds.faces = spec.family == Family::BendPlate ? detail::plate_faces(spec.around, spec.along)
                                              : detail::tube_faces(spec.around, spec.along);
  ds.shapes.reserve(spec.count);
  for (std::size_t k = 0; k < spec.count; ++k) {
    Rng rng(mix_seed(spec.seed, k));
    std::map<std::string, double> par;
    std::string flag = "ok";
    Points p;
    switch (spec.family) {
      case Family::BendCylinder: {
        const double angle = rng.uniform(0.0, spec.max_bend);
        const double az = rng.uniform(0.0, 2.0 * std::numbers::pi);
        par = {{"bend", angle}, {"azimuth", az}};
        if (spec.radius * angle / spec.length >= 1.0) flag = "self-intersection";
        p = detail::bend_tube(spec, angle, az);
        break;
      }
      case Family::TwistCylinder: {
        const double tw = rng.uniform(-spec.max_twist, spec.max_twist);
        par = {{"twist", tw}};
        p = detail::twist_tube(spec, tw);
        break;
      }
      case Family::ArticulatedArm: {
        const double angle = rng.uniform(0.0, spec.max_joint);
        const double az = rng.uniform(0.0, 2.0 * std::numbers::pi);
        par = {{"joint", angle}, {"azimuth", az}};
        if (angle > 0.85 * std::numbers::pi) flag = "self-intersection";
        p = detail::arm_tube(spec, angle, az);
        break;
      }
      case Family::BendPlate: {
        const double angle = rng.uniform(-spec.max_bend, spec.max_bend);
        par = {{"bend", angle}};
        if (std::abs(angle) >= 2.0 * std::numbers::pi) flag = "self-intersection";
        p = detail::bend_plate(spec, angle);
        break;
      }
    }
    detail::normalise_area(p, ds.faces, spec.area_target);
    ds.shapes.push_back(std::move(p));
    ds.params.push_back(std::move(par));
    ds.flags.push_back(flag);
  }
  return ds;
}

inline std::vector<EdgeLengths> dataset_edge_lengths(const Dataset& ds) {
  const auto edges = canonical_edges(ds.faces);
  std::vector<EdgeLengths> out;
  out.reserve(ds.size());
  for (const Points& p : ds.shapes) out.push_back(edge_lengths(p, edges));
  return out;
}

/// Largest per-edge (max - min) / mean over the dataset.
inline double max_relative_edge_spread(const Dataset& ds) {
  const auto lengths = dataset_edge_lengths(ds);
  double worst = 0.0;
  for (Eigen::Index e = 0; e < lengths.front().size(); ++e) {
    double lo = lengths[0][e], hi = lo, sum = 0.0;
    for (const auto& l : lengths) {
      lo = std::min(lo, l[e]);
      hi = std::max(hi, l[e]);
      sum += l[e];
    }
    const double mean = sum / static_cast<double>(lengths.size());
    if (mean > 0.0) worst = std::max(worst, (hi - lo) / mean);
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Dataset on disk: mesh_NNNNN.obj per shape + manifest.txt

inline std::string mesh_filename(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "mesh_%05zu.obj", i);
  return buf;
}

inline void write_dataset(const std::filesystem::path& dir, const Dataset& ds) {
  std::filesystem::create_directories(dir);
  auto manifest = detail::open_out(dir / "manifest.txt");
  manifest << "# index family params... area flags\n";
  for (std::size_t i = 0; i < ds.size(); ++i) {
    write_obj(dir / mesh_filename(i), ds.shapes[i], ds.faces);
    manifest << i << ' ' << family_name(ds.family);
    for (const auto& [k, v] : ds.params[i]) manifest << ' ' << k << '=' << detail::format_double(v);
    manifest << " area=" << detail::format_double(total_area(ds.shapes[i], ds.faces))
             << " flags=" << ds.flags[i] << '\n';
  }
}

inline Dataset read_dataset(const std::filesystem::path& dir) {
  const auto mpath = dir / "manifest.txt";
  auto in = detail::open_in(mpath);
  Dataset ds;
  std::string line;
  std::size_t lineno = 0;
  bool first = true;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    const auto tok = detail::split_ws(line);
    if (tok.size() < 2) throw ParseError(mpath.string(), lineno, "malformed manifest row");
    long idx = 0;
    if (!detail::parse_long(tok[0], idx) || idx != static_cast<long>(ds.size())) {
      throw ParseError(mpath.string(), lineno, "manifest indices must be consecutive from 0");
    }
    ds.family = parse_family(tok[1]);
    std::map<std::string, double> par;
    std::string flag = "ok";
    for (std::size_t t = 2; t < tok.size(); ++t) {
      const auto eq = tok[t].find('=');
      if (eq == std::string_view::npos) {
        throw ParseError(mpath.string(), lineno, "expected key=value");
      }
      const std::string key(tok[t].substr(0, eq));
      const auto val = tok[t].substr(eq + 1);
      if (key == "flags") {
        flag = std::string(val);
      } else if (key != "area") {
        double v = 0;
        if (!detail::parse_double(val, v)) throw ParseError(mpath.string(), lineno, "bad value");
        par[key] = v;
      }
    }
    Mesh m = read_obj(dir / mesh_filename(ds.size()));
    if (first) {
      ds.faces = m.faces();
      first = false;
    } else if (m.faces() != ds.faces) {
      fail("dataset '", dir.string(), "': mesh ", ds.size(), " does not share the face list");
    }
    ds.shapes.push_back(m.vertices());
    ds.params.push_back(std::move(par));
    ds.flags.push_back(flag);
  }
  require(!ds.shapes.empty(), "dataset '", dir.string(), "' is empty");
  return ds;
}

// ---------------------------------------------------------------------------
// Sampling and corruption

/// Area-weighted uniform samples on the surface.
inline PointCloud sample_surface(const Mesh& mesh, std::size_t k, std::uint64_t seed) {
  PointCloud out;
  out.points.resize(static_cast<Eigen::Index>(k), 3);
  if (k == 0) return out;
  const Eigen::VectorXd areas = per_triangle_areas(mesh);
  std::vector<double> cdf(static_cast<std::size_t>(areas.size()));
  double acc = 0.0;
  for (Eigen::Index f = 0; f < areas.size(); ++f) {
    acc += areas[f];
    cdf[static_cast<std::size_t>(f)] = acc;
  }
  require(acc > 0.0, "sample_surface: mesh has zero area");
  Rng rng(seed);
  const auto& v = mesh.vertices();
  for (std::size_t s = 0; s < k; ++s) {
    const double pick = rng.uniform(0.0, acc);
    auto it = std::upper_bound(cdf.begin(), cdf.end(), pick);
    if (it == cdf.end()) --it;
    const Face& f = mesh.faces()[static_cast<std::size_t>(it - cdf.begin())];
    const double r1 = std::sqrt(rng.uniform(0.0, 1.0));
    const double r2 = rng.uniform(0.0, 1.0);
    out.points.row(static_cast<Eigen::Index>(s)) =
        (1.0 - r1) * v.row(f[0]) + r1 * (1.0 - r2) * v.row(f[1]) + r1 * r2 * v.row(f[2]);
  }
  return out;
}

struct Corruption {
  enum class Mode { GaussNoise, Subsample, Hole };
  Mode mode = Mode::GaussNoise;
  double sigma = 0.0;            // GaussNoise: absolute standard deviation
  std::size_t keep = 0;          // Subsample: points kept
  Vec3 center = Vec3::Zero();    // Hole
  double radius = 0.0;           // Hole

  static Corruption noise(double sigma) { return {Mode::GaussNoise, sigma, 0, Vec3::Zero(), 0.0}; }
  static Corruption subsample(std::size_t k) { return {Mode::Subsample, 0.0, k, Vec3::Zero(), 0.0}; }
  static Corruption hole(const Vec3& c, double r) { return {Mode::Hole, 0.0, 0, c, r}; }
};

/// Returns a corrupted copy; the input is never modified.
inline PointCloud corrupt(const PointCloud& cloud, const Corruption& c, std::uint64_t seed) {
  Rng rng(seed);
  PointCloud out;
  switch (c.mode) {
    case Corruption::Mode::GaussNoise: {
      require(c.sigma >= 0.0, "corrupt: negative sigma");
      out.points = cloud.points;
      if (c.sigma == 0.0) return out;
      for (Eigen::Index i = 0; i < out.points.rows(); ++i) {
        for (int k = 0; k < 3; ++k) out.points(i, k) += rng.normal(0.0, c.sigma);
      }
      return out;
    }
    case Corruption::Mode::Subsample: {
      require(c.keep <= cloud.size(), "corrupt: cannot subsample ", c.keep, " of ",
              cloud.size(), " points");
      std::vector<Eigen::Index> idx(cloud.size());
      std::iota(idx.begin(), idx.end(), Eigen::Index{0});
      rng.shuffle(idx.begin(), idx.end());
      out.points.resize(static_cast<Eigen::Index>(c.keep), 3);
      for (std::size_t i = 0; i < c.keep; ++i) {
        out.points.row(static_cast<Eigen::Index>(i)) = cloud.points.row(idx[i]);
      }
      return out;
    }
    case Corruption::Mode::Hole: {
      std::vector<Eigen::Index> keep;
      for (Eigen::Index i = 0; i < cloud.points.rows(); ++i) {
        if ((cloud.points.row(i).transpose() - c.center).norm() > c.radius) keep.push_back(i);
      }
      out.points.resize(static_cast<Eigen::Index>(keep.size()), 3);
      for (std::size_t i = 0; i < keep.size(); ++i) {
        out.points.row(static_cast<Eigen::Index>(i)) = cloud.points.row(keep[i]);
      }
      return out;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Evaluation pairs

struct PairSelection {
  std::vector<std::size_t> anchors;
  std::vector<std::pair<std::size_t, std::size_t>> pairs;  // dataset indices
};

/// Greedy farthest-point anchors under d_rot, then `n_pairs` distinct random
/// anchor pairs.
inline PairSelection farthest_point_pairs(std::span<const Points> shapes,
                                          std::size_t n_anchors, std::size_t n_pairs,
                                          std::uint64_t seed) {
  require(n_anchors >= 1 && n_anchors <= shapes.size(), "farthest_point_pairs: need 1..",
          shapes.size(), " anchors, got ", n_anchors);
  Rng rng(seed);
  PairSelection out;
  std::vector<double> dist(shapes.size(), std::numeric_limits<double>::infinity());
  std::vector<bool> taken(shapes.size(), false);
  std::size_t cur = rng.index(shapes.size());
  for (std::size_t a = 0; a < n_anchors; ++a) {
    out.anchors.push_back(cur);
    taken[cur] = true;
    std::size_t best = cur;
    double best_d = -1.0;
    for (std::size_t i = 0; i < shapes.size(); ++i) {
      if (taken[i]) continue;
      dist[i] = std::min(dist[i], d_rot(shapes[i], shapes[cur]).value);
      if (dist[i] > best_d) {
        best_d = dist[i];
        best = i;
      }
    }
    cur = best;
  }
  std::vector<std::pair<std::size_t, std::size_t>> all;
  for (std::size_t i = 0; i < out.anchors.size(); ++i) {
    for (std::size_t j = i + 1; j < out.anchors.size(); ++j) {
      all.emplace_back(out.anchors[i], out.anchors[j]);
    }
  }
  require(n_pairs <= all.size(), "farthest_point_pairs: only ", all.size(),
          " distinct pairs among ", n_anchors, " anchors, requested ", n_pairs);
  rng.shuffle(all.begin(), all.end());
  out.pairs.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n_pairs));
  return out;
}

}  // namespace dlsi
