#pragma once

// Reconstruction and interpolation with a trained dual model: the one-pass
// edge-latent interpolation and the baselines it is compared against
// (linear shape-latent path, latent-space gradient descent on E_disc or on
// coordinate variance, and direct coordinate descent on E_disc).

#include <cmath>
#include <cstddef>
#include <iostream>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dlsi/energy.hpp"
#include "dlsi/error.hpp"
#include "dlsi/geometry.hpp"
#include "dlsi/models.hpp"
#include "dlsi/nn.hpp"

namespace dlsi {

enum class Method { Dual, LinearLatent, GdEl, GdL2, GdCoord };

inline Method parse_method(std::string_view s) {
  if (s == "dual") return Method::Dual;
  if (s == "linear") return Method::LinearLatent;
  if (s == "gd-el") return Method::GdEl;
  if (s == "gd-l2") return Method::GdL2;
  if (s == "gd-coord") return Method::GdCoord;
  fail("unknown method '", s, "' (expected dual, linear, gd-el, gd-l2 or gd-coord)");
}

inline std::string method_name(Method m) {
  switch (m) {
    case Method::Dual: return "dual";
    case Method::LinearLatent: return "linear";
    case Method::GdEl: return "gd-el";
    case Method::GdL2: return "gd-l2";
    case Method::GdCoord: return "gd-coord";
  }
  return "?";
}

struct InterpolationPath {
  Method method = Method::Dual;
  std::vector<double> alphas;           // strictly increasing, 0 and 1 included
  std::vector<Points> raw;              // decoder outputs before alignment
  std::vector<Points> shapes;           // final (aligned) frames
  std::vector<RigidTransform> transforms;
  std::vector<Eigen::VectorXd> initial_latents;  // latent-space methods only
  double initial_objective = 0.0;       // GD methods
  double final_objective = 0.0;
  std::size_t steps_run = 0;
  bool diverged = false;

  std::size_t size() const noexcept { return shapes.size(); }
};

/// `interior` samples strictly between the endpoints: k / (interior + 1).
inline std::vector<double> uniform_alphas(std::size_t interior) {
  std::vector<double> a(interior + 2);
  for (std::size_t k = 0; k < a.size(); ++k) {
    a[k] = static_cast<double>(k) / static_cast<double>(interior + 1);
  }
  a.back() = 1.0;
  return a;
}

inline Eigen::VectorXd lerp(const Eigen::VectorXd& a, const Eigen::VectorXd& b, double t) {
  return (1.0 - t) * a + t * b;
}

/// dec_p(M_EP(M_PE(enc_p(P)))).
inline Points reconstruct(const DualModel& m, const Points& cloud) {
  const Eigen::VectorXd code = apply_net(m.nets().m_pe, m, encode_points(m, cloud));
  return decode_points(m, apply_net(m.nets().m_ep, m, code));
}

/// Plain shape auto-encoder: dec_p(enc_p(P)).
inline Points reconstruct_shape_ae(const DualModel& m, const Points& cloud) {
  return decode_points(m, encode_points(m, cloud));
}

/// Edge-latent code M_PE(enc_p(P)) of a cloud.
inline Eigen::VectorXd edge_code(const DualModel& m, const Points& cloud) {
  return apply_net(m.nets().m_pe, m, encode_points(m, cloud));
}

/// Rigidly aligns each frame onto the previous aligned frame, starting from
/// the first one.
inline void align_chain(InterpolationPath& path) {
  path.shapes.clear();
  path.transforms.clear();
  path.shapes.push_back(path.raw.front());
  path.transforms.emplace_back();
  for (std::size_t k = 1; k < path.raw.size(); ++k) {
    const RigidTransform t = kabsch_align(path.raw[k], path.shapes.back());
    path.shapes.push_back(t.apply(path.raw[k]));
    path.transforms.push_back(t);
  }
}

inline void identity_alignment(InterpolationPath& path) {
  path.shapes = path.raw;
  path.transforms.assign(path.raw.size(), RigidTransform{});
}

/// Linear interpolation of edge-latent codes decoded through M_EP and the
/// shape decoder, followed by the alignment chain.
inline InterpolationPath interpolate_dual(const DualModel& m, const Points& a,
                                          const Points& b, std::size_t interior) {
  InterpolationPath path;
  path.method = Method::Dual;
  path.alphas = uniform_alphas(interior);
  const Eigen::VectorXd ma = edge_code(m, a);
  const Eigen::VectorXd mb = edge_code(m, b);
  for (double t : path.alphas) {
    const Eigen::VectorXd code = lerp(ma, mb, t);
    path.initial_latents.push_back(code);
    path.raw.push_back(decode_points(m, apply_net(m.nets().m_ep, m, code)));
  }
  align_chain(path);
  return path;
}

/// Straight line between shape-latent codes, decoded.
inline InterpolationPath interpolate_linear_latent(const DualModel& m, const Points& a,
                                                   const Points& b, std::size_t interior) {
  InterpolationPath path;
  path.method = Method::LinearLatent;
  path.alphas = uniform_alphas(interior);
  const Eigen::VectorXd la = encode_points(m, a);
  const Eigen::VectorXd lb = encode_points(m, b);
  for (double t : path.alphas) {
    const Eigen::VectorXd code = lerp(la, lb, t);
    path.initial_latents.push_back(code);
    path.raw.push_back(decode_points(m, code));
  }
  identity_alignment(path);
  return path;
}

struct GdOptions {
  std::size_t steps = 1000;
  double lr = 1e-2;
  std::size_t patience = 50;  // consecutive increases before giving up
  // Adam-scaled steps instead of lr * gradient. Vertex coordinates are badly
  // conditioned under E_disc: plain steps small enough to be stable barely
  // move the bending modes.
  bool adam = false;

  static GdOptions coordinate() { return {10000, 1e-4, 50, true}; }
};

namespace detail {

// Mean over steps of |S_k - S_{k-1}|_F^2 and its gradient.
inline EnergyGradient coordinate_variance(std::span<const Points> shapes) {
  EnergyGradient out;
  const std::size_t count = shapes.size();
  const double inv = 1.0 / static_cast<double>(count - 1);
  out.gradient.assign(count, Points::Zero(shapes[0].rows(), 3));
  for (std::size_t k = 1; k < count; ++k) {
    const Points d = shapes[k] - shapes[k - 1];
    out.value += d.squaredNorm() * inv;
    out.gradient[k] += 2.0 * inv * d;
    out.gradient[k - 1] -= 2.0 * inv * d;
  }
  return out;
}

struct LatentObjective {
  double value;
  Mat latent_grad;
  std::vector<Points> shapes;
};

inline LatentObjective latent_objective(const DualModel& m, const Mat& latents,
                                        bool edge_energy) {
  const Tape dec = forward(m.nets().dec_p, m.params, latents);
  std::vector<Points> shapes;
  shapes.reserve(static_cast<std::size_t>(latents.rows()));
  for (Eigen::Index r = 0; r < latents.rows(); ++r) shapes.push_back(row_to_points(dec.output, r));
  const EnergyGradient e = edge_energy
                               ? e_disc_with_gradient(ShapeSequence(shapes, m.edges()))
                               : coordinate_variance(shapes);
  Mat up(dec.output.rows(), dec.output.cols());
  for (Eigen::Index r = 0; r < latents.rows(); ++r) {
    const Points& g = e.gradient[static_cast<std::size_t>(r)];
    up.row(r) = Eigen::Map<const Eigen::RowVectorXd>(g.data(), g.size());
  }
  return {e.value, backward_input(dec, up), std::move(shapes)};
}

inline InterpolationPath latent_descent(const DualModel& m, const Points& a, const Points& b,
                                        std::size_t interior, const GdOptions& opt,
                                        bool edge_energy) {
  const InterpolationPath init = interpolate_linear_latent(m, a, b, interior);
  InterpolationPath path;
  path.method = edge_energy ? Method::GdEl : Method::GdL2;
  path.alphas = init.alphas;
  path.initial_latents = init.initial_latents;

  const auto k = static_cast<Eigen::Index>(init.initial_latents.size());
  Mat lat(k, init.initial_latents[0].size());
  for (Eigen::Index r = 0; r < k; ++r) lat.row(r) = init.initial_latents[static_cast<std::size_t>(r)].transpose();

  LatentObjective cur = latent_objective(m, lat, edge_energy);
  path.initial_objective = cur.value;
  double best = cur.value;
  // batched decoding differs from the single-shape decodes in the last bits;
  // the starting iterate and the fixed endpoints come from the linear path
  std::vector<Points> best_shapes = init.raw;
  double prev = cur.value;
  std::size_t rising = 0;
  for (std::size_t step = 0; step < opt.steps; ++step) {
    // endpoints stay fixed
    lat.middleRows(1, k - 2) -= opt.lr * cur.latent_grad.middleRows(1, k - 2);
    cur = latent_objective(m, lat, edge_energy);
    path.steps_run = step + 1;
    if (!std::isfinite(cur.value)) {
      path.diverged = true;
      break;
    }
    if (cur.value < best) {
      best = cur.value;
      best_shapes = cur.shapes;
    }
    rising = cur.value > prev ? rising + 1 : 0;
    prev = cur.value;
    if (rising >= opt.patience) {
      path.diverged = true;
      break;
    }
  }
  if (path.diverged) {
    std::cerr << "warning: " << method_name(path.method)
              << " objective kept increasing; returning best iterate\n";
  }
  path.final_objective = best;
  best_shapes.front() = init.raw.front();
  best_shapes.back() = init.raw.back();
  path.raw = std::move(best_shapes);
  identity_alignment(path);
  return path;
}

}  // namespace detail

/// Gradient descent on E_disc of decoded shapes over the interior
/// shape-latent samples, initialised with the linear latent path.
inline InterpolationPath gd_el(const DualModel& m, const Points& a, const Points& b,
                               std::size_t interior, const GdOptions& opt = {}) {
  return detail::latent_descent(m, a, b, interior, opt, true);
}

/// Same scheme minimising the coordinate variance of the decoded path.
inline InterpolationPath gd_l2(const DualModel& m, const Points& a, const Points& b,
                               std::size_t interior, const GdOptions& opt = {}) {
  return detail::latent_descent(m, a, b, interior, opt, false);
}

/// Direct descent of E_disc over interior vertex coordinates, starting from
/// the linear blend of two corresponded meshes.
inline InterpolationPath gd_coord(const Points& a, const Points& b, std::span<const Edge> edges,
                                  std::size_t interior,
                                  const GdOptions& opt = GdOptions::coordinate()) {
  require(a.rows() == b.rows(), "gd_coord: meshes must be in 1-1 correspondence (",
          a.rows(), " vs ", b.rows(), " vertices)");
  InterpolationPath path;
  path.method = Method::GdCoord;
  path.alphas = uniform_alphas(interior);
  std::vector<Points> shapes;
  for (double t : path.alphas) shapes.push_back(a + t * (b - a));  // exact for a == b
  shapes.back() = b;
  const std::vector<Edge> edge_list(edges.begin(), edges.end());

  EnergyGradient cur = e_disc_with_gradient(ShapeSequence(shapes, edge_list));
  path.initial_objective = cur.value;
  double best = cur.value;
  std::vector<Points> best_shapes = shapes;
  double prev = cur.value;
  std::size_t rising = 0;
  const AdamConfig hyper{};
  std::vector<Points> m1(shapes.size(), Points::Zero(a.rows(), 3)), m2 = m1;
  for (std::size_t step = 0; step < opt.steps && cur.value > 0.0; ++step) {
    const double c1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(step + 1));
    const double c2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(step + 1));
    for (std::size_t k = 1; k + 1 < shapes.size(); ++k) {
      const Points& g = cur.gradient[k];
      if (!opt.adam) {
        shapes[k] -= opt.lr * g;
        continue;
      }
      m1[k] = hyper.beta1 * m1[k] + (1.0 - hyper.beta1) * g;
      m2[k] = hyper.beta2 * m2[k] + (1.0 - hyper.beta2) * g.cwiseAbs2();
      shapes[k].array() -= opt.lr * (m1[k].array() / c1) / ((m2[k].array() / c2).sqrt() + hyper.eps);
    }
    cur = e_disc_with_gradient(ShapeSequence(shapes, edge_list));
    path.steps_run = step + 1;
    if (!std::isfinite(cur.value)) {
      path.diverged = true;
      break;
    }
    if (cur.value < best) {
      best = cur.value;
      best_shapes = shapes;
    }
    rising = cur.value > prev ? rising + 1 : 0;
    prev = cur.value;
    if (rising >= opt.patience) {
      path.diverged = true;
      break;
    }
  }
  if (path.diverged) std::cerr << "warning: gd-coord diverged; returning best iterate\n";
  path.final_objective = best;
  path.raw = std::move(best_shapes);
  identity_alignment(path);
  return path;
}

/// Decoded path in the edge auto-encoder's own latent space:
/// dec_e((1 - t) enc_e(E_A) + t enc_e(E_B)).
inline std::vector<EdgeLengths> interpolate_edge_latent(const DualModel& m, const EdgeLengths& ea,
                                                        const EdgeLengths& eb,
                                                        std::size_t interior) {
  const Eigen::VectorXd za = apply_net(m.nets().enc_e, m, ea);
  const Eigen::VectorXd zb = apply_net(m.nets().enc_e, m, eb);
  std::vector<EdgeLengths> out;
  for (double t : uniform_alphas(interior)) out.push_back(apply_net(m.nets().dec_e, m, lerp(za, zb, t)));
  return out;
}

inline ShapeSequence as_sequence(const InterpolationPath& path, const Mesh& connectivity) {
  return ShapeSequence(path.shapes, connectivity);
}

}  // namespace dlsi
