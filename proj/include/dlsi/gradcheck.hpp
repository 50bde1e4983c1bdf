#pragma once

// Central finite-difference checks of every analytic gradient: each layer
// kind, each training loss, and the geometric energies.

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "dlsi/energy.hpp"
#include "dlsi/geometry.hpp"
#include "dlsi/interpolation.hpp"
#include "dlsi/models.hpp"
#include "dlsi/nn.hpp"
#include "dlsi/synthdata.hpp"

namespace dlsi {

struct GradCheck {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t entries = 0;
};

struct GradcheckOptions {
  double step = 1e-6;
  double tolerance = 1e-5;
  std::uint64_t seed = 7;
};

namespace detail {

// max_i |a_i - n_i| / max(max|a|, max|n|): the error relative to the
// gradient's own scale, so near-zero entries do not dominate.
class ErrorAccumulator {
 public:
  void add(double analytic, double numeric) {
    diff_ = std::max(diff_, std::abs(analytic - numeric));
    scale_ = std::max({scale_, std::abs(analytic), std::abs(numeric)});
    ++count_;
  }
  double relative() const { return scale_ > 0.0 ? diff_ / scale_ : diff_; }
  std::size_t count() const { return count_; }

 private:
  double diff_ = 0.0, scale_ = 0.0;
  std::size_t count_ = 0;
};

inline double central(const std::function<double()>& f, double& x, double h) {
  const double saved = x;
  x = saved + h;
  const double fp = f();
  x = saved - h;
  const double fm = f();
  x = saved;
  return (fp - fm) / (2.0 * h);
}

// Compares the analytic gradient in `store` against differences of `loss`
// for every parameter entry.
inline void check_params(ParamStore& store, const std::function<double()>& loss,
                         const GradcheckOptions& opt, ErrorAccumulator& acc) {
  for (std::size_t i = 0; i < store.size(); ++i) {
    const auto analytic = store.grad(i).data;
    for (std::size_t k = 0; k < analytic.size(); ++k) {
      double& x = store.mutable_value(i).data[k];
      acc.add(analytic[k], central(loss, x, opt.step));
    }
  }
}

inline void check_points(Points& p, const Points& analytic, const std::function<double()>& f,
                         const GradcheckOptions& opt, ErrorAccumulator& acc) {
  for (Eigen::Index r = 0; r < p.rows(); ++r) {
    for (Eigen::Index c = 0; c < 3; ++c) acc.add(analytic(r, c), central(f, p(r, c), opt.step));
  }
}

inline Points random_points(Rng& rng, Eigen::Index n, double scale = 1.0) {
  Points p(n, 3);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int c = 0; c < 3; ++c) p(i, c) = rng.uniform(-scale, scale);
  }
  return p;
}

inline Mat random_mat(Rng& rng, Eigen::Index r, Eigen::Index c) {
  Mat m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-1.0, 1.0);
  return m;
}

// Network output contracted with a fixed random weight; checks parameter
// and input gradients.
inline GradCheck check_network(const std::string& name, const Network& net, Eigen::Index rows,
                               Eigen::Index groups, const GradcheckOptions& opt) {
  Rng rng(mix_seed(opt.seed, std::hash<std::string>{}(name)));
  ParamStore store;
  net.initialize(store, rng);
  // non-zero biases so they are exercised
  for (std::size_t i = 0; i < store.size(); ++i) {
    for (double& v : store.mutable_value(i).data) v += rng.uniform(-0.1, 0.1);
  }
  Mat x = random_mat(rng, rows, static_cast<Eigen::Index>(net.in_width()));
  const Tape probe = forward(net, store, x, groups);
  const Mat w = random_mat(rng, probe.output.rows(), probe.output.cols());
  auto loss = [&] { return forward(net, store, x, groups).output.cwiseProduct(w).sum(); };

  store.zero_grad();
  const Tape tape = forward(net, store, x, groups);
  const Mat gx = backward(tape, w, store);
  ErrorAccumulator acc;
  check_params(store, loss, opt, acc);
  for (Eigen::Index i = 0; i < x.size(); ++i) acc.add(gx.data()[i], central(loss, x.data()[i], opt.step));
  return {name, acc.relative(), acc.count()};
}

inline DualModel tiny_model(std::uint64_t seed) {
  FamilySpec spec;
  spec.around = 5;
  spec.along = 3;
  spec.count = 1;
  const Dataset ds = generate(spec);
  ArchConfig a;
  a.enc_p_widths = {6, 7};
  a.shape_latent = 4;
  a.dec_p_widths = {8};
  a.enc_e_widths = {9};
  a.edge_latent = 3;
  a.dec_e_widths = {8};
  a.map_widths = {6};
  DualModel m(ds.template_mesh(), a, seed);
  Rng rng(mix_seed(seed, 99));
  for (std::size_t i = 0; i < m.params.size(); ++i) {
    for (double& v : m.params.mutable_value(i).data) v += rng.uniform(-0.1, 0.1);
  }
  return m;
}

inline std::vector<Points> tiny_batch(const DualModel& m, std::uint64_t seed, std::size_t count) {
  Rng rng(seed);
  std::vector<Points> out;
  for (std::size_t k = 0; k < count; ++k) {
    Points p = m.template_mesh().vertices();
    p += random_points(rng, p.rows(), 0.05);
    out.push_back(std::move(p));
  }
  return out;
}

// Loss of the whole model w.r.t. every parameter.
inline GradCheck check_model_loss(
    const std::string& name,
    const std::function<double(const DualModel&, ParamStore*)>& loss,
    const GradcheckOptions& opt) {
  DualModel m = tiny_model(opt.seed);
  m.params.zero_grad();
  loss(m, &m.params);
  ErrorAccumulator acc;
  check_params(m.params, [&] { return loss(m, nullptr); }, opt, acc);
  return {name, acc.relative(), acc.count()};
}

}  // namespace detail

inline std::vector<GradCheck> run_gradcheck(const GradcheckOptions& opt = {}) {
  using detail::check_network;
  using detail::check_model_loss;
  std::vector<GradCheck> out;

  out.push_back(check_network("layer.dense", Network("t", {dense("t.0", 4, 5)}), 3, 1, opt));
  out.push_back(check_network("layer.pointwise", Network("t", {pointwise("t.0", 3, 4)}), 6, 1, opt));
  out.push_back(check_network("layer.max_pool",
                              Network("t", {pointwise("t.0", 3, 4), max_pool(4)}), 8, 2, opt));
  out.push_back(check_network("layer.relu",
                              Network("t", {dense("t.0", 4, 6), activation(Activation::Relu, 6)}),
                              3, 1, opt));
  out.push_back(check_network("layer.tanh",
                              Network("t", {dense("t.0", 4, 6), activation(Activation::Tanh, 6)}),
                              3, 1, opt));
  out.push_back(check_network(
      "layer.identity", Network("t", {dense("t.0", 4, 6), activation(Activation::Identity, 6)}), 3,
      1, opt));
  out.push_back(check_network(
      "layer.affine",
      Network("t", {affine(Eigen::RowVectorXd::LinSpaced(4, -1.0, 2.0), 2.5), dense("t.0", 4, 3),
                    affine(Eigen::RowVectorXd::Constant(3, 0.3), 0.2)}),
      3, 1, opt));

  const auto batch_seed = mix_seed(opt.seed, 1);
  auto shapes = [&](const DualModel& m) { return detail::tiny_batch(m, batch_seed, 3); };
  auto lengths = [&](const DualModel& m, std::uint64_t s) {
    std::vector<EdgeLengths> e;
    for (const Points& p : detail::tiny_batch(m, s, 3)) e.push_back(edge_lengths(p, m.edges()));
    return e;
  };

  out.push_back(check_model_loss("loss.rec", [&](const DualModel& m, ParamStore* g) {
    return loss_rec(m, shapes(m), g);
  }, opt));
  out.push_back(check_model_loss("loss.rec_init", [&](const DualModel& m, ParamStore* g) {
    return loss_rec_init(m, shapes(m), g);
  }, opt));
  out.push_back(check_model_loss("loss.unsup", [&](const DualModel& m, ParamStore* g) {
    // unordered input clouds of a different size
    std::vector<Points> clouds;
    Rng rng(batch_seed);
    for (int k = 0; k < 2; ++k) clouds.push_back(detail::random_points(rng, 9, 0.5));
    return loss_unsup(m, clouds, {0.7, 0.3}, g).total;
  }, opt));
  out.push_back(check_model_loss("loss.e", [&](const DualModel& m, ParamStore* g) {
    return loss_e(m, lengths(m, batch_seed), g);
  }, opt));
  out.push_back(check_model_loss("loss.lin", [&](const DualModel& m, ParamStore* g) {
    return loss_lin(m, lengths(m, batch_seed), lengths(m, batch_seed + 1), g);
  }, opt));
  out.push_back(check_model_loss("loss.map1", [&](const DualModel& m, ParamStore* g) {
    return loss_map1(m, shapes(m), g);
  }, opt));
  out.push_back(check_model_loss("loss.map2", [&](const DualModel& m, ParamStore* g) {
    return loss_map2(m, shapes(m), g);
  }, opt));
  out.push_back(check_model_loss("loss.map3", [&](const DualModel& m, ParamStore* g) {
    return loss_map3(m, shapes(m), g);
  }, opt));
  out.push_back(check_model_loss("loss.mapping", [&](const DualModel& m, ParamStore* g) {
    return loss_mapping(m, shapes(m), MappingWeights{}, g).total;
  }, opt));
  out.push_back(check_model_loss("loss.direct", [&](const DualModel& m, ParamStore* g) {
    return loss_direct(m, shapes(m), 30.0, 1200.0, g).total;
  }, opt));

  Rng rng(mix_seed(opt.seed, 2));
  {
    // E_disc w.r.t. all coordinates of a sequence
    const DualModel m = detail::tiny_model(opt.seed);
    std::vector<Points> seq = detail::tiny_batch(m, batch_seed, 4);
    const EnergyGradient g = e_disc_with_gradient(ShapeSequence(seq, m.edges()));
    detail::ErrorAccumulator acc;
    for (std::size_t k = 0; k < seq.size(); ++k) {
      detail::check_points(seq[k], g.gradient[k],
                           [&] { return e_disc(ShapeSequence(seq, m.edges())); }, opt, acc);
    }
    out.push_back({"energy.e_disc", acc.relative(), acc.count()});
  }
  {
    Points a = detail::random_points(rng, 7);
    const Points b = detail::random_points(rng, 7);
    const RotDistance r = d_rot(a, b);
    detail::ErrorAccumulator acc;
    detail::check_points(a, r.gradient, [&] { return d_rot(a, b).value; }, opt, acc);
    out.push_back({"geometry.d_rot", acc.relative(), acc.count()});
  }
  {
    Points a = detail::random_points(rng, 6);
    const Points b = detail::random_points(rng, 8);
    const ChamferResult c = chamfer_with_gradient(a, b);
    detail::ErrorAccumulator acc;
    detail::check_points(a, c.gradient, [&] { return chamfer(a, b); }, opt, acc);
    out.push_back({"geometry.chamfer", acc.relative(), acc.count()});
  }
  {
    // GD objectives w.r.t. the latent samples
    DualModel m = detail::tiny_model(opt.seed);
    Mat lat = detail::random_mat(rng, 4, static_cast<Eigen::Index>(m.arch().shape_latent));
    for (bool edge : {true, false}) {
      const detail::LatentObjective o = detail::latent_objective(m, lat, edge);
      detail::ErrorAccumulator acc;
      for (Eigen::Index i = 0; i < lat.size(); ++i) {
        acc.add(o.latent_grad.data()[i],
                detail::central([&] { return detail::latent_objective(m, lat, edge).value; },
                                lat.data()[i], opt.step));
      }
      out.push_back({edge ? "objective.gd_el" : "objective.gd_l2", acc.relative(), acc.count()});
    }
  }
  return out;
}

inline bool gradcheck_passed(const std::vector<GradCheck>& results, double tolerance) {
  return std::all_of(results.begin(), results.end(),
                     [&](const GradCheck& g) { return g.max_rel_error < tolerance; });
}

}  // namespace dlsi
