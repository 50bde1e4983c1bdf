#pragma once

// The four networks of the dual latent model (shape auto-encoder, edge-length
// auto-encoder, two latent mapping networks) and every training loss as a
// function of the parameter store and a mini-batch.
//
// Every loss returns the batch mean. When `grads` is non-null it must be the
// model's own store; the gradient of the returned value is accumulated into
// the trainable slots.

#include <Eigen/Sparse>

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dlsi/error.hpp"
#include "dlsi/geometry.hpp"
#include "dlsi/nn.hpp"

namespace dlsi {

struct ArchConfig {
  std::vector<std::size_t> enc_p_widths{64, 128, 256};  // per-point stack
  std::size_t shape_latent = 128;
  std::vector<std::size_t> dec_p_widths{256, 512};
  std::vector<std::size_t> enc_e_widths{512, 256};
  std::size_t edge_latent = 128;
  std::vector<std::size_t> dec_e_widths{256, 512};
  std::vector<std::size_t> map_widths{256, 256};
  // Edge nets see (e - template lengths) / s and emit the inverse, with s
  // this fraction of the mean template edge length; 0 feeds raw lengths.
  double edge_scale = 0.01;

  friend bool operator==(const ArchConfig&, const ArchConfig&) = default;
};

struct DualNets {
  Network enc_p, dec_p, enc_e, dec_e, m_pe, m_ep;
};

inline std::vector<LayerSpec> mlp(const std::string& prefix, std::size_t in,
                                  const std::vector<std::size_t>& hidden,
                                  std::size_t out, Activation act,
                                  LayerKind kind = LayerKind::Dense) {
  std::vector<LayerSpec> layers;
  std::size_t width = in;
  std::size_t k = 0;
  for (std::size_t h : hidden) {
    layers.push_back({kind, width, h, Activation::Identity,
                      prefix + "." + std::to_string(k++), {}, 1.0});
    layers.push_back(activation(act, h));
    width = h;
  }
  layers.push_back({kind, width, out, Activation::Identity,
                    prefix + "." + std::to_string(k), {}, 1.0});
  return layers;
}

inline DualNets build_nets(const ArchConfig& a, std::size_t vertices,
                           const Eigen::VectorXd& template_lengths) {
  const auto edges = static_cast<std::size_t>(template_lengths.size());
  require(!a.enc_p_widths.empty(), "enc_p needs at least one per-point layer");
  DualNets n;

  std::vector<LayerSpec> enc;
  std::size_t w = 3;
  for (std::size_t k = 0; k < a.enc_p_widths.size(); ++k) {
    enc.push_back(pointwise("enc_p." + std::to_string(k), w, a.enc_p_widths[k]));
    enc.push_back(activation(Activation::Relu, a.enc_p_widths[k]));
    w = a.enc_p_widths[k];
  }
  enc.push_back(max_pool(w));
  enc.push_back(dense("enc_p." + std::to_string(a.enc_p_widths.size()), w,
                      a.shape_latent));
  n.enc_p = Network("enc_p", std::move(enc));

  n.dec_p = Network("dec_p", mlp("dec_p", a.shape_latent, a.dec_p_widths,
                                 3 * vertices, Activation::Relu));
  auto enc_e = mlp("enc_e", edges, a.enc_e_widths, a.edge_latent, Activation::Tanh);
  auto dec_e = mlp("dec_e", a.edge_latent, a.dec_e_widths, edges, Activation::Tanh);
  if (a.edge_scale > 0.0) {
    const double s = a.edge_scale * template_lengths.mean();
    const Eigen::RowVectorXd t = template_lengths.transpose();
    enc_e.insert(enc_e.begin(), affine(-t, 1.0 / s));
    dec_e.push_back(affine(t / s, s));
  }
  n.enc_e = Network("enc_e", std::move(enc_e));
  n.dec_e = Network("dec_e", std::move(dec_e));
  n.m_pe = Network("m_pe", mlp("m_pe", a.shape_latent, a.map_widths,
                               a.edge_latent, Activation::Tanh));
  n.m_ep = Network("m_ep", mlp("m_ep", a.edge_latent, a.map_widths,
                               a.shape_latent, Activation::Tanh));
  return n;
}

// Parameters plus the fixed training template whose vertex order the shape
// decoder reproduces and whose edges define every edge-length vector.
class DualModel {
 public:
  DualModel(Mesh templ, ArchConfig arch, std::uint64_t seed)
      : arch_(std::move(arch)), template_(std::move(templ)) {
    template_lengths_ = edge_lengths(template_.vertices(), template_.edges());
    nets_ = build_nets(arch_, template_.vertex_count(), template_lengths_);
    const std::array<const Network*, 6> order{&nets_.enc_p, &nets_.dec_p,
                                              &nets_.enc_e, &nets_.dec_e,
                                              &nets_.m_pe,  &nets_.m_ep};
    for (std::size_t k = 0; k < order.size(); ++k) {
      Rng rng(mix_seed(seed, k));
      order[k]->initialize(params, rng);
    }
    laplacian_ = graph_laplacian(template_);
  }

  const ArchConfig& arch() const noexcept { return arch_; }
  const DualNets& nets() const noexcept { return nets_; }
  const Mesh& template_mesh() const noexcept { return template_; }
  const std::vector<Edge>& edges() const noexcept { return template_.edges(); }
  std::size_t vertex_count() const noexcept { return template_.vertex_count(); }
  std::size_t edge_count() const noexcept { return template_.edges().size(); }
  const Eigen::SparseMatrix<double>& laplacian() const noexcept { return laplacian_; }
  const EdgeLengths& template_lengths() const noexcept { return template_lengths_; }

  // Which training stages have produced the current weights.
  std::map<std::string, std::string> meta;

  ParamStore params;

 private:
  ArchConfig arch_;
  Mesh template_;
  DualNets nets_;
  Eigen::SparseMatrix<double> laplacian_;
  EdgeLengths template_lengths_;
};

// ---------------------------------------------------------------------------
// Layout helpers

inline Mat stack_points(std::span<const Points> clouds) {
  require(!clouds.empty(), "empty batch");
  const Eigen::Index per = clouds[0].rows();
  Mat out(per * static_cast<Eigen::Index>(clouds.size()), 3);
  for (std::size_t b = 0; b < clouds.size(); ++b) {
    require(clouds[b].rows() == per, "batch clouds must share a point count (",
            clouds[b].rows(), " vs ", per, ")");
    out.middleRows(static_cast<Eigen::Index>(b) * per, per) = clouds[b];
  }
  return out;
}

inline Mat stack_rows(std::span<const Points> shapes) {
  require(!shapes.empty(), "empty batch");
  const Eigen::Index n = shapes[0].rows();
  Mat out(static_cast<Eigen::Index>(shapes.size()), 3 * n);
  for (std::size_t b = 0; b < shapes.size(); ++b) {
    require(shapes[b].rows() == n, "batch shapes must share a vertex count");
    out.row(static_cast<Eigen::Index>(b)) =
        Eigen::Map<const Eigen::RowVectorXd>(shapes[b].data(), 3 * n);
  }
  return out;
}

inline Mat stack_vectors(std::span<const EdgeLengths> v) {
  require(!v.empty(), "empty batch");
  Mat out(static_cast<Eigen::Index>(v.size()), v[0].size());
  for (std::size_t b = 0; b < v.size(); ++b) {
    require(v[b].size() == v[0].size(), "batch edge vectors differ in length");
    out.row(static_cast<Eigen::Index>(b)) = v[b].transpose();
  }
  return out;
}

inline Points row_to_points(const Mat& m, Eigen::Index r) {
  require(m.cols() % 3 == 0, "decoder output width not divisible by 3");
  return Eigen::Map<const Points>(m.row(r).data(), m.cols() / 3, 3);
}

inline Eigen::Map<const Points> row_points_view(const Mat& m, Eigen::Index r) {
  return Eigen::Map<const Points>(m.data() + r * m.cols(), m.cols() / 3, 3);
}

inline bool any_trainable(const ParamStore& store, const Network& net) {
  for (const auto& s : store.slots()) {
    if (s.trainable && s.name.starts_with(net.name() + ".")) return true;
  }
  return false;
}

namespace detail {

inline void check_grads(const DualModel& m, const ParamStore* grads) {
  require(grads == nullptr || grads == &m.params,
          "gradients must accumulate into the model's own store");
}

inline Mat backward_maybe(const Tape& tape, const Mat& up, ParamStore* grads) {
  return grads ? backward(tape, up, *grads) : backward_input(tape, up);
}

inline void check_cached(const DualModel& m, std::size_t batch, const ParamStore* grads,
                         const Mat* latents) {
  if (!latents) return;
  require(static_cast<std::size_t>(latents->rows()) == batch, "cached latents: ",
          latents->rows(), " rows for a batch of ", batch);
  require(grads == nullptr || !any_trainable(m.params, m.nets().enc_p),
          "cached shape latents need a frozen enc_p");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Inference

inline Mat encode_points(const DualModel& m, std::span<const Points> clouds) {
  return forward_value(m.nets().enc_p, m.params, stack_points(clouds),
                       static_cast<Eigen::Index>(clouds.size()));
}

inline Eigen::VectorXd encode_points(const DualModel& m, const Points& cloud) {
  return encode_points(m, std::span<const Points>(&cloud, 1)).row(0).transpose();
}

inline Points decode_points(const DualModel& m, const Eigen::VectorXd& latent) {
  return row_to_points(forward_value(m.nets().dec_p, m.params, row(latent)), 0);
}

inline Eigen::VectorXd apply_net(const Network& net, const DualModel& m,
                                 const Eigen::VectorXd& x) {
  return forward_value(net, m.params, row(x)).row(0).transpose();
}

// ---------------------------------------------------------------------------
// Shape auto-encoder

/// Mean over the batch of (1/n) sum |target_i - dec_p(enc_p(input))_i|^2.
inline double shape_ae_regression(const DualModel& m, std::span<const Points> inputs,
                                  std::span<const Points> targets,
                                  ParamStore* grads = nullptr) {
  detail::check_grads(m, grads);
  require(inputs.size() == targets.size(), "inputs/targets batch mismatch");
  const auto b = static_cast<Eigen::Index>(inputs.size());
  const Tape enc = forward(m.nets().enc_p, m.params, stack_points(inputs), b);
  const Tape dec = forward(m.nets().dec_p, m.params, enc.output);
  const Mat t = stack_rows(targets);
  require(t.cols() == dec.output.cols(), "target has ", t.cols() / 3,
          " points, decoder produces ", dec.output.cols() / 3);
  const Mat d = dec.output - t;
  const double n = static_cast<double>(d.cols() / 3);
  const double value = d.squaredNorm() / (n * static_cast<double>(b));
  if (grads) {
    const Mat up = (2.0 / (n * static_cast<double>(b))) * d;
    const Mat gl = backward(dec, up, *grads);
    if (any_trainable(m.params, m.nets().enc_p)) backward(enc, gl, *grads);
  }
  return value;
}

/// Mean squared coordinate error of the auto-encoder on ordered clouds.
inline double loss_rec(const DualModel& m, std::span<const Points> batch,
                       ParamStore* grads = nullptr) {
  return shape_ae_regression(m, batch, batch, grads);
}

inline double loss_rec(const DualModel& m, const Points& p,
                       ParamStore* grads = nullptr) {
  return loss_rec(m, std::span<const Points>(&p, 1), grads);
}

/// Pre-training target: the template, whatever the input.
inline double loss_rec_init(const DualModel& m, std::span<const Points> batch,
                            ParamStore* grads = nullptr) {
  std::vector<Points> targets(batch.size(), m.template_mesh().vertices());
  return shape_ae_regression(m, batch, targets, grads);
}

struct UnsupWeights {
  double edge = 1.0;
  double laplacian = 1.0;
};

struct UnsupLoss {
  double total = 0.0;
  double chamfer = 0.0;
  double edge_reg = 0.0;
  double lap_reg = 0.0;
};

/// Chamfer to the (unordered) input plus edge-length and Laplacian
/// regularisers towards the template.
inline UnsupLoss loss_unsup(const DualModel& m, std::span<const Points> batch,
                            const UnsupWeights& w, ParamStore* grads = nullptr) {
  detail::check_grads(m, grads);
  const auto b = static_cast<Eigen::Index>(batch.size());
  const Tape enc = forward(m.nets().enc_p, m.params, stack_points(batch), b);
  const Tape dec = forward(m.nets().dec_p, m.params, enc.output);
  const Points& tmpl = m.template_mesh().vertices();
  const auto& lap = m.laplacian();

  UnsupLoss out;
  Mat up(dec.output.rows(), dec.output.cols());
  const double inv_b = 1.0 / static_cast<double>(b);
  for (Eigen::Index s = 0; s < b; ++s) {
    const Points pred = row_to_points(dec.output, s);
    const ChamferResult cd = chamfer_with_gradient(pred, batch[static_cast<std::size_t>(s)]);
    Points g = cd.gradient;
    out.chamfer += cd.value * inv_b;

    if (w.edge != 0.0) {
      const EdgeLengths d = edge_lengths(pred, m.edges()) - m.template_lengths();
      out.edge_reg += d.squaredNorm() * inv_b;
      Points ge = Points::Zero(pred.rows(), 3);
      edge_lengths_backward(pred, m.edges(), 2.0 * w.edge * d, ge);
      g += ge;
    }
    if (w.laplacian != 0.0) {
      const Eigen::MatrixXd ld = lap * (pred - tmpl);
      out.lap_reg += ld.squaredNorm() * inv_b;
      const Eigen::MatrixXd gl = 2.0 * w.laplacian * (lap.transpose() * ld);
      g += gl;
    }
    up.row(s) = inv_b * Eigen::Map<const Eigen::RowVectorXd>(g.data(), g.size());
  }
  out.total = out.chamfer + w.edge * out.edge_reg + w.laplacian * out.lap_reg;
  if (grads) {
    const Mat gl = backward(dec, up, *grads);
    if (any_trainable(m.params, m.nets().enc_p)) backward(enc, gl, *grads);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Edge-length auto-encoder

/// Squared reconstruction error |dec_e(enc_e(E)) - E|^2, batch mean.
inline double loss_e(const DualModel& m, std::span<const EdgeLengths> batch,
                     ParamStore* grads = nullptr) {
  detail::check_grads(m, grads);
  const Mat x = stack_vectors(batch);
  require(static_cast<std::size_t>(x.cols()) == m.edge_count(),
          "loss_e: edge vector has ", x.cols(), " entries, model expects ",
          m.edge_count());
  const Tape enc = forward(m.nets().enc_e, m.params, x);
  const Tape dec = forward(m.nets().dec_e, m.params, enc.output);
  const Mat d = dec.output - x;
  const double inv_b = 1.0 / static_cast<double>(x.rows());
  if (grads) {
    const Mat gz = backward(dec, (2.0 * inv_b) * d, *grads);
    if (any_trainable(m.params, m.nets().enc_e)) backward(enc, gz, *grads);
  }
  return d.squaredNorm() * inv_b;
}

inline double loss_e(const DualModel& m, const EdgeLengths& e,
                     ParamStore* grads = nullptr) {
  return loss_e(m, std::span<const EdgeLengths>(&e, 1), grads);
}

/// Midpoint linearity of the edge latent space, batch mean over pairs
/// (a[k], b[k]).
inline double loss_lin(const DualModel& m, std::span<const EdgeLengths> a,
                       std::span<const EdgeLengths> b, ParamStore* grads = nullptr) {
  detail::check_grads(m, grads);
  require(a.size() == b.size(), "loss_lin: pair lists differ in length");
  const auto nb = static_cast<Eigen::Index>(a.size());
  Mat x(2 * nb, static_cast<Eigen::Index>(m.edge_count()));
  x.topRows(nb) = stack_vectors(a);
  x.bottomRows(nb) = stack_vectors(b);

  const Tape enc = forward(m.nets().enc_e, m.params, x);
  const Tape dec = forward(m.nets().dec_e, m.params, enc.output);
  const Mat zmid = 0.5 * (enc.output.topRows(nb) + enc.output.bottomRows(nb));
  const Tape dmid = forward(m.nets().dec_e, m.params, zmid);

  const Mat d = 0.5 * (dec.output.topRows(nb) + dec.output.bottomRows(nb)) -
                dmid.output;
  const double inv_b = 1.0 / static_cast<double>(nb);
  if (grads) {
    const Mat gd = (2.0 * inv_b) * d;
    Mat up(2 * nb, d.cols());
    up.topRows(nb) = 0.5 * gd;
    up.bottomRows(nb) = 0.5 * gd;
    Mat gz = backward(dec, up, *grads);
    const Mat gzmid = backward(dmid, -gd, *grads);
    gz.topRows(nb) += 0.5 * gzmid;
    gz.bottomRows(nb) += 0.5 * gzmid;
    if (any_trainable(m.params, m.nets().enc_e)) backward(enc, gz, *grads);
  }
  return d.squaredNorm() * inv_b;
}

// ---------------------------------------------------------------------------
// Mapping networks

struct MappingWeights {
  double alpha = 30.0;   // rotation-invariant round trip
  double beta = 1200.0;  // edge lengths of the round trip
  double gamma = 800.0;  // cycle from the edge latent space
};

struct MappingLoss {
  double total = 0.0;
  double map1 = 0.0;
  double map2 = 0.0;
  double map3 = 0.0;
};

/// alpha*L_map1 + beta*L_map2 + gamma*L_map3 over a batch of template-ordered
/// shapes. Terms with zero weight are neither evaluated nor differentiated.
/// `shape_latents`, when given, holds enc_p of the batch (rows in batch
/// order) and replaces the encoder pass; enc_p must then be frozen.
inline MappingLoss loss_mapping(const DualModel& m, std::span<const Points> batch,
                                const MappingWeights& w, ParamStore* grads = nullptr,
                                const Mat* shape_latents = nullptr) {
  detail::check_grads(m, grads);
  detail::check_cached(m, batch.size(), grads, shape_latents);
  require(w.alpha >= 0.0 && w.beta >= 0.0 && w.gamma >= 0.0,
          "mapping loss weights must be non-negative");
  const auto b = static_cast<Eigen::Index>(batch.size());
  const double inv_b = 1.0 / static_cast<double>(b);
  const auto& nets = m.nets();
  MappingLoss out;

  std::vector<EdgeLengths> lengths;
  lengths.reserve(batch.size());
  for (const Points& p : batch) lengths.push_back(edge_lengths(p, m.edges()));

  if (w.alpha > 0.0 || w.beta > 0.0) {
    std::optional<Tape> enc;
    if (!shape_latents) enc.emplace(forward(nets.enc_p, m.params, stack_points(batch), b));
    const Tape pe = forward(nets.m_pe, m.params, enc ? enc->output : *shape_latents);
    const Tape ep = forward(nets.m_ep, m.params, pe.output);
    const Tape dec = forward(nets.dec_p, m.params, ep.output);
    Mat up = Mat::Zero(dec.output.rows(), dec.output.cols());
    for (Eigen::Index s = 0; s < b; ++s) {
      const Points pred = row_to_points(dec.output, s);
      const auto& ref = batch[static_cast<std::size_t>(s)];
      Points g = Points::Zero(pred.rows(), 3);
      if (w.alpha > 0.0) {
        const RotDistance r = d_rot(pred, ref);
        out.map1 += r.value * inv_b;
        g += w.alpha * r.gradient;
      }
      if (w.beta > 0.0) {
        const EdgeLengths d =
            edge_lengths(pred, m.edges()) - lengths[static_cast<std::size_t>(s)];
        out.map2 += d.squaredNorm() * inv_b;
        edge_lengths_backward(pred, m.edges(), 2.0 * w.beta * d, g);
      }
      up.row(s) = inv_b * Eigen::Map<const Eigen::RowVectorXd>(g.data(), g.size());
    }
    if (grads) {
      Mat g = detail::backward_maybe(dec, up, grads);
      g = backward(ep, g, *grads);
      g = detail::backward_maybe(pe, g, grads);
      if (enc && any_trainable(m.params, nets.enc_p)) backward(*enc, g, *grads);
    }
  }

  if (w.gamma > 0.0) {
    const Mat x = stack_vectors(lengths);
    const Tape enc = forward(nets.enc_e, m.params, x);
    const Tape ep = forward(nets.m_ep, m.params, enc.output);
    const Tape pe = forward(nets.m_pe, m.params, ep.output);
    const Tape dec = forward(nets.dec_e, m.params, pe.output);
    const Mat d = dec.output - x;
    out.map3 = d.squaredNorm() * inv_b;
    if (grads) {
      Mat g = backward(dec, (2.0 * w.gamma * inv_b) * d, *grads);
      g = backward(pe, g, *grads);
      g = backward(ep, g, *grads);
      if (any_trainable(m.params, nets.enc_e)) backward(enc, g, *grads);
    }
  }
  out.total = w.alpha * out.map1 + w.beta * out.map2 + w.gamma * out.map3;
  return out;
}

inline double loss_map1(const DualModel& m, std::span<const Points> batch,
                        ParamStore* grads = nullptr) {
  return loss_mapping(m, batch, {1.0, 0.0, 0.0}, grads).map1;
}
inline double loss_map2(const DualModel& m, std::span<const Points> batch,
                        ParamStore* grads = nullptr) {
  return loss_mapping(m, batch, {0.0, 1.0, 0.0}, grads).map2;
}
inline double loss_map3(const DualModel& m, std::span<const Points> batch,
                        ParamStore* grads = nullptr) {
  return loss_mapping(m, batch, {0.0, 0.0, 1.0}, grads).map3;
}

struct DirectLoss {
  double total = 0.0;
  double coords = 0.0;     // decoded-from-edge-code coordinates vs P
  double lengths = 0.0;    // their edge lengths vs E_P
  double regression = 0.0; // dec_e(M_PE(enc_p(P))) vs E_P
};

/// Ablation replacing the cycle losses with direct reconstruction targets.
/// The coordinate term is a per-point mean, like L_rec and d_rot.
inline DirectLoss loss_direct(const DualModel& m, std::span<const Points> batch,
                              double alpha, double beta, ParamStore* grads = nullptr,
                              const Mat* shape_latents = nullptr) {
  detail::check_grads(m, grads);
  detail::check_cached(m, batch.size(), grads, shape_latents);
  const auto b = static_cast<Eigen::Index>(batch.size());
  const double inv_b = 1.0 / static_cast<double>(b);
  const auto& nets = m.nets();
  DirectLoss out;

  std::vector<EdgeLengths> lengths;
  lengths.reserve(batch.size());
  for (const Points& p : batch) lengths.push_back(edge_lengths(p, m.edges()));
  const Mat e = stack_vectors(lengths);

  if (alpha != 0.0 || beta != 0.0) {
    const Tape enc = forward(nets.enc_e, m.params, e);
    const Tape ep = forward(nets.m_ep, m.params, enc.output);
    const Tape dec = forward(nets.dec_p, m.params, ep.output);
    const double n = static_cast<double>(m.vertex_count());
    const Mat t = stack_rows(batch);
    const Mat dc = dec.output - t;
    out.coords = dc.squaredNorm() / n * inv_b;
    Mat up = (2.0 * alpha / n * inv_b) * dc;
    for (Eigen::Index s = 0; s < b; ++s) {
      const Points pred = row_to_points(dec.output, s);
      const EdgeLengths d = edge_lengths(pred, m.edges()) - lengths[static_cast<std::size_t>(s)];
      out.lengths += d.squaredNorm() * inv_b;
      if (beta != 0.0) {
        Points g = Points::Zero(pred.rows(), 3);
        edge_lengths_backward(pred, m.edges(), 2.0 * beta * inv_b * d, g);
        up.row(s) += Eigen::Map<const Eigen::RowVectorXd>(g.data(), g.size());
      }
    }
    if (grads) {
      Mat g = detail::backward_maybe(dec, up, grads);
      g = backward(ep, g, *grads);
      if (any_trainable(m.params, nets.enc_e)) backward(enc, g, *grads);
    }
  }

  {
    std::optional<Tape> enc;
    if (!shape_latents) enc.emplace(forward(nets.enc_p, m.params, stack_points(batch), b));
    const Tape pe = forward(nets.m_pe, m.params, enc ? enc->output : *shape_latents);
    const Tape dec = forward(nets.dec_e, m.params, pe.output);
    const Mat d = dec.output - e;
    out.regression = d.squaredNorm() * inv_b;
    if (grads) {
      Mat g = detail::backward_maybe(dec, (2.0 * inv_b) * d, grads);
      g = detail::backward_maybe(pe, g, grads);
      if (enc && any_trainable(m.params, nets.enc_p)) backward(*enc, g, *grads);
    }
  }
  out.total = alpha * out.coords + beta * out.lengths + out.regression;
  return out;
}

}  // namespace dlsi
