#pragma once

// Staged training: shape AE, then edge-length AE, then the mapping networks
// with both auto-encoders frozen; plus the unsupervised schedule and the
// ablation switches.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "dlsi/error.hpp"
#include "dlsi/geometry.hpp"
#include "dlsi/io.hpp"
#include "dlsi/models.hpp"
#include "dlsi/nn.hpp"
#include "dlsi/synthdata.hpp"

namespace dlsi {

enum class Stage { ShapeAE, EdgeAE, Mappers, UnsupInit, UnsupMain, UnsupEdge };

inline Stage parse_stage(std::string_view s) {
  if (s == "shape-ae") return Stage::ShapeAE;
  if (s == "edge-ae") return Stage::EdgeAE;
  if (s == "mappers") return Stage::Mappers;
  if (s == "unsup-init") return Stage::UnsupInit;
  if (s == "unsup-main") return Stage::UnsupMain;
  if (s == "unsup-edge") return Stage::UnsupEdge;
  fail("unknown stage '", s, "'");
}

inline std::string stage_name(Stage s) {
  switch (s) {
    case Stage::ShapeAE: return "shape-ae";
    case Stage::EdgeAE: return "edge-ae";
    case Stage::Mappers: return "mappers";
    case Stage::UnsupInit: return "unsup-init";
    case Stage::UnsupMain: return "unsup-main";
    case Stage::UnsupEdge: return "unsup-edge";
  }
  return "?";
}

enum class MappingMode { Cycle, Direct };

struct TrainConfig {
  Stage stage = Stage::ShapeAE;
  std::size_t epochs = 500;
  std::size_t batch_size = 32;
  AdamConfig adam{};
  std::uint64_t seed = 1;

  MappingWeights mapping{};
  MappingMode mapping_mode = MappingMode::Cycle;
  double direct_alpha = 30.0;
  double direct_beta = 1200.0;
  double lin_weight = 1.0;
  UnsupWeights unsup{};
  // 0: train on template-ordered vertices (shuffled for the unsupervised
  // stages); otherwise encoder inputs are this many surface samples.
  std::size_t input_points = 0;
  // Mapper data from shape-AE outputs instead of ground-truth meshes.
  bool mappers_from_ae = false;
  // Also trains both auto-encoders during the mapper stage.
  bool experimental_joint = false;

  std::size_t plateau_epochs = 50;
  double plateau_tolerance = 1e-7;
  bool record_timing = false;

  std::filesystem::path dataset;
  std::filesystem::path checkpoint_in;
  std::filesystem::path checkpoint_out;
  std::filesystem::path loss_csv;
  ArchConfig arch{};

  static TrainConfig from(const Config& c) {
    c.check_known({"stage", "epochs", "batch_size", "lr", "adam.beta1", "adam.beta2",
                   "adam.eps", "seed", "mapping.alpha", "mapping.beta", "mapping.gamma",
                   "mapping.mode", "direct.alpha", "direct.beta", "edge.lin_weight",
                   "unsup.edge_weight", "unsup.lap_weight", "data.input_points",
                   "data.mappers_from_ae", "data.train", "checkpoint.in",
                   "checkpoint.out", "output.loss_csv", "output.record_timing",
                   "early_stop.patience", "early_stop.tolerance",
                   "experimental.joint", "arch.*"});
    TrainConfig t;
    t.stage = parse_stage(c.get_string("stage", "shape-ae"));
    const long epochs = c.get_long("epochs", default_epochs(t.stage));
    require(epochs >= 1, "epochs must be >= 1");
    t.epochs = static_cast<std::size_t>(epochs);
    const long bs = c.get_long("batch_size", 32);
    require(bs >= 1, "batch_size must be >= 1");
    t.batch_size = static_cast<std::size_t>(bs);
    t.adam.lr = c.get_double("lr", 1e-3);
    t.adam.beta1 = c.get_double("adam.beta1", 0.9);
    t.adam.beta2 = c.get_double("adam.beta2", 0.999);
    t.adam.eps = c.get_double("adam.eps", 1e-8);
    t.seed = static_cast<std::uint64_t>(c.get_long("seed", 1));
    t.mapping.alpha = c.get_double("mapping.alpha", 30.0);
    t.mapping.beta = c.get_double("mapping.beta", 1200.0);
    t.mapping.gamma = c.get_double("mapping.gamma", 800.0);
    const auto mode = c.get_string("mapping.mode", "cycle");
    require(mode == "cycle" || mode == "direct", "mapping.mode must be cycle or direct");
    t.mapping_mode = mode == "cycle" ? MappingMode::Cycle : MappingMode::Direct;
    t.direct_alpha = c.get_double("direct.alpha", t.mapping.alpha);
    t.direct_beta = c.get_double("direct.beta", t.mapping.beta);
    t.lin_weight = c.get_double("edge.lin_weight", 1.0);
    t.unsup.edge = c.get_double("unsup.edge_weight", 1.0);
    t.unsup.laplacian = c.get_double("unsup.lap_weight", 1.0);
    t.input_points = static_cast<std::size_t>(c.get_long("data.input_points", 0));
    t.mappers_from_ae = c.get_bool("data.mappers_from_ae", false);
    t.experimental_joint = c.get_bool("experimental.joint", false);
    t.plateau_epochs = static_cast<std::size_t>(c.get_long("early_stop.patience", 50));
    t.plateau_tolerance = c.get_double("early_stop.tolerance", 1e-7);
    t.record_timing = c.get_bool("output.record_timing", false);
    t.dataset = c.get_string("data.train", "");
    t.checkpoint_in = c.get_string("checkpoint.in", "");
    t.checkpoint_out = c.get_string("checkpoint.out", "");
    t.loss_csv = c.get_string("output.loss_csv", "");
    if (c.has("arch.enc_p_widths")) t.arch.enc_p_widths = detail::split_sizes(c.get_string("arch.enc_p_widths", ""));
    if (c.has("arch.dec_p_widths")) t.arch.dec_p_widths = detail::split_sizes(c.get_string("arch.dec_p_widths", ""));
    if (c.has("arch.enc_e_widths")) t.arch.enc_e_widths = detail::split_sizes(c.get_string("arch.enc_e_widths", ""));
    if (c.has("arch.dec_e_widths")) t.arch.dec_e_widths = detail::split_sizes(c.get_string("arch.dec_e_widths", ""));
    if (c.has("arch.map_widths")) t.arch.map_widths = detail::split_sizes(c.get_string("arch.map_widths", ""));
    t.arch.shape_latent = static_cast<std::size_t>(c.get_long("arch.shape_latent", 128));
    t.arch.edge_latent = static_cast<std::size_t>(c.get_long("arch.edge_latent", 128));
    t.arch.edge_scale = c.get_double("arch.edge_scale", t.arch.edge_scale);
    require(t.arch.edge_scale >= 0.0, "arch.edge_scale must be >= 0");
    for (double w : {t.mapping.alpha, t.mapping.beta, t.mapping.gamma, t.direct_alpha,
                     t.direct_beta, t.lin_weight, t.unsup.edge, t.unsup.laplacian}) {
      require(w >= 0.0, "loss weights must be non-negative");
    }
    return t;
  }

  static long default_epochs(Stage s) {
    switch (s) {
      case Stage::ShapeAE:
      case Stage::UnsupInit:
      case Stage::UnsupMain: return 500;
      case Stage::EdgeAE:
      case Stage::UnsupEdge: return 500;
      case Stage::Mappers: return 300;
    }
    return 500;
  }
};

struct EpochStat {
  std::size_t epoch = 0;  // 1-based
  double loss = 0.0;
  double wall_ms = 0.0;
};

struct TrainResult {
  std::vector<EpochStat> curve;
  bool stopped_early = false;
  bool diverged = false;
  std::size_t skipped_steps = 0;
};

// Which networks a stage updates.
inline std::vector<std::string> trainable_prefixes(const TrainConfig& cfg) {
  switch (cfg.stage) {
    case Stage::ShapeAE:
    case Stage::UnsupInit:
    case Stage::UnsupMain: return {"enc_p.", "dec_p."};
    case Stage::EdgeAE:
    case Stage::UnsupEdge: return {"enc_e.", "dec_e."};
    case Stage::Mappers:
      if (cfg.experimental_joint) return {"enc_p.", "dec_p.", "enc_e.", "dec_e.", "m_pe.", "m_ep."};
      return {"m_pe.", "m_ep."};
  }
  return {};
}

// Stages that must have run before `s` can start.
inline std::vector<std::string> prerequisites(Stage s, bool mappers_from_ae) {
  switch (s) {
    case Stage::Mappers:
      return mappers_from_ae ? std::vector<std::string>{"unsup-main", "unsup-edge"}
                             : std::vector<std::string>{"shape-ae", "edge-ae"};
    case Stage::UnsupMain: return {"unsup-init"};
    case Stage::UnsupEdge: return {"unsup-main"};
    default: return {};
  }
}

inline bool stage_done(const DualModel& m, const std::string& stage) {
  auto it = m.meta.find("trained." + stage);
  return it != m.meta.end() && it->second == "1";
}

// Per-sample training data for one stage.
struct StageData {
  std::vector<Points> inputs;         // encoder inputs
  std::vector<Points> shapes;         // template-ordered targets
  std::vector<EdgeLengths> lengths;   // edge-AE inputs
  Mat shape_latents;                  // enc_p of `shapes` when enc_p is frozen
};

namespace detail {

inline std::vector<Points> shuffled_points(const std::vector<Points>& shapes, std::uint64_t seed) {
  std::vector<Points> out;
  out.reserve(shapes.size());
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    Rng rng(mix_seed(seed, i));
    std::vector<Eigen::Index> perm(static_cast<std::size_t>(shapes[i].rows()));
    std::iota(perm.begin(), perm.end(), Eigen::Index{0});
    rng.shuffle(perm.begin(), perm.end());
    Points p(shapes[i].rows(), 3);
    for (std::size_t r = 0; r < perm.size(); ++r) p.row(static_cast<Eigen::Index>(r)) = shapes[i].row(perm[r]);
    out.push_back(std::move(p));
  }
  return out;
}

inline std::vector<Points> encoder_inputs(const Dataset& ds, const TrainConfig& cfg, bool shuffle) {
  if (cfg.input_points > 0) {
    std::vector<Points> out;
    for (std::size_t i = 0; i < ds.size(); ++i) {
      out.push_back(sample_surface(ds.mesh(i), cfg.input_points, mix_seed(cfg.seed ^ 0x5eedULL, i)).points);
    }
    return out;
  }
  return shuffle ? shuffled_points(ds.shapes, cfg.seed ^ 0xc0ffeeULL) : ds.shapes;
}

inline std::vector<Points> ae_outputs(const DualModel& m, const std::vector<Points>& inputs) {
  std::vector<Points> out;
  out.reserve(inputs.size());
  for (const Points& p : inputs) out.push_back(decode_points(m, encode_points(m, p)));
  return out;
}

}  // namespace detail

inline StageData prepare_stage_data(const DualModel& m, const Dataset& ds, const TrainConfig& cfg) {
  StageData d;
  switch (cfg.stage) {
    case Stage::ShapeAE:
      d.inputs = detail::encoder_inputs(ds, cfg, false);
      d.shapes = ds.shapes;
      break;
    case Stage::EdgeAE:
      d.lengths = dataset_edge_lengths(ds);
      break;
    case Stage::Mappers:
      if (cfg.mappers_from_ae) {
        d.shapes = detail::ae_outputs(m, detail::encoder_inputs(ds, cfg, true));
      } else {
        d.shapes = ds.shapes;
      }
      for (const Points& p : d.shapes) d.lengths.push_back(edge_lengths(p, m.edges()));
      if (!cfg.experimental_joint) {
        d.shape_latents.resize(static_cast<Eigen::Index>(d.shapes.size()),
                               static_cast<Eigen::Index>(m.arch().shape_latent));
        for (std::size_t i = 0; i < d.shapes.size(); ++i) {
          d.shape_latents.row(static_cast<Eigen::Index>(i)) = encode_points(m, d.shapes[i]).transpose();
        }
      }
      break;
    case Stage::UnsupInit:
    case Stage::UnsupMain:
      d.inputs = detail::encoder_inputs(ds, cfg, true);
      break;
    case Stage::UnsupEdge: {
      d.shapes = detail::ae_outputs(m, detail::encoder_inputs(ds, cfg, true));
      for (const Points& p : d.shapes) d.lengths.push_back(edge_lengths(p, m.edges()));
      break;
    }
  }
  return d;
}

namespace detail {

template <typename T>
std::vector<T> gather(const std::vector<T>& src, std::span<const std::size_t> idx) {
  std::vector<T> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(src[i]);
  return out;
}

}  // namespace detail

/// Loss of one mini-batch (batch mean); accumulates gradients when asked.
inline double stage_batch_loss(const DualModel& m, const TrainConfig& cfg, const StageData& d,
                               std::span<const std::size_t> idx, Rng& rng, ParamStore* grads) {
  switch (cfg.stage) {
    case Stage::ShapeAE: {
      const auto in = detail::gather(d.inputs, idx);
      const auto tg = detail::gather(d.shapes, idx);
      return shape_ae_regression(m, in, tg, grads);
    }
    case Stage::UnsupInit: return loss_rec_init(m, detail::gather(d.inputs, idx), grads);
    case Stage::UnsupMain:
      return loss_unsup(m, detail::gather(d.inputs, idx), cfg.unsup, grads).total;
    case Stage::EdgeAE:
    case Stage::UnsupEdge: {
      const auto e = detail::gather(d.lengths, idx);
      double loss = loss_e(m, e, grads);
      if (cfg.lin_weight > 0.0 && e.size() >= 2) {
        // each sample paired with a distinct partner at a random offset
        const std::size_t off = 1 + rng.index(e.size() - 1);
        std::vector<EdgeLengths> partner;
        for (std::size_t k = 0; k < e.size(); ++k) partner.push_back(e[(k + off) % e.size()]);
        if (grads) {
          // scale gradient by the weight: accumulate into a zeroed copy
          ParamStore& store = *grads;
          std::vector<Tensor> saved;
          for (std::size_t i = 0; i < store.size(); ++i) saved.push_back(store.grad(i));
          store.zero_grad();
          const double lin = loss_lin(m, e, partner, grads);
          for (std::size_t i = 0; i < store.size(); ++i) {
            auto& g = store.grad(i).data;
            for (std::size_t k = 0; k < g.size(); ++k) g[k] = saved[i].data[k] + cfg.lin_weight * g[k];
          }
          loss += cfg.lin_weight * lin;
        } else {
          loss += cfg.lin_weight * loss_lin(m, e, partner, nullptr);
        }
      }
      return loss;
    }
    case Stage::Mappers: {
      const auto s = detail::gather(d.shapes, idx);
      std::optional<Mat> z;
      if (d.shape_latents.rows() > 0) {
        z.emplace(static_cast<Eigen::Index>(idx.size()), d.shape_latents.cols());
        for (std::size_t k = 0; k < idx.size(); ++k) {
          z->row(static_cast<Eigen::Index>(k)) = d.shape_latents.row(static_cast<Eigen::Index>(idx[k]));
        }
      }
      const Mat* zp = z ? &*z : nullptr;
      if (cfg.mapping_mode == MappingMode::Direct) {
        return loss_direct(m, s, cfg.direct_alpha, cfg.direct_beta, grads, zp).total;
      }
      return loss_mapping(m, s, cfg.mapping, grads, zp).total;
    }
  }
  return 0.0;
}

inline std::size_t stage_sample_count(const TrainConfig& cfg, const StageData& d) {
  switch (cfg.stage) {
    case Stage::ShapeAE:
    case Stage::UnsupInit:
    case Stage::UnsupMain: return d.inputs.size();
    case Stage::EdgeAE:
    case Stage::UnsupEdge: return d.lengths.size();
    case Stage::Mappers: return d.shapes.size();
  }
  return 0;
}

/// Mean stage loss over all samples (no parameter update).
inline double evaluate_stage_loss(const DualModel& m, const TrainConfig& cfg, const StageData& d) {
  const std::size_t n = stage_sample_count(cfg, d);
  Rng rng(mix_seed(cfg.seed, 0xe7a1ULL));
  double sum = 0.0;
  for (std::size_t start = 0; start < n; start += cfg.batch_size) {
    const std::size_t end = std::min(n, start + cfg.batch_size);
    std::vector<std::size_t> idx(end - start);
    std::iota(idx.begin(), idx.end(), start);
    sum += stage_batch_loss(m, cfg, d, idx, rng, nullptr) * static_cast<double>(idx.size());
  }
  return sum / static_cast<double>(n);
}

// True once none of the last `patience` epochs beat the best earlier loss
// by a relative margin of `tolerance`.
inline bool plateaued(const std::vector<EpochStat>& curve, std::size_t patience, double tolerance) {
  if (patience == 0 || curve.size() <= patience) return false;
  const auto split = curve.end() - static_cast<std::ptrdiff_t>(patience);
  auto by_loss = [](const EpochStat& x, const EpochStat& y) { return x.loss < y.loss; };
  const double before = std::min_element(curve.begin(), split, by_loss)->loss;
  const double recent = std::min_element(split, curve.end(), by_loss)->loss;
  return before - recent <= tolerance * std::abs(before);
}

/// Runs one stage in place on `model`. Parameters outside the stage's
/// trainable set are verified bitwise unchanged afterwards.
inline TrainResult train_stage(DualModel& model, const TrainConfig& cfg, const StageData& data,
                               std::ostream* log = nullptr) {
  for (const auto& pre : prerequisites(cfg.stage, cfg.mappers_from_ae)) {
    require(stage_done(model, pre), "stage '", stage_name(cfg.stage),
            "' requires a checkpoint trained through stage '", pre, "'");
  }
  const std::size_t n = stage_sample_count(cfg, data);
  require(n >= 1, "stage '", stage_name(cfg.stage), "' has no training samples");

  ParamStore& store = model.params;
  store.set_all_trainable(false);
  for (const auto& p : trainable_prefixes(cfg)) store.set_trainable(p, true);
  store.reset_moments();

  std::vector<Tensor> frozen;
  for (const auto& s : store.slots()) frozen.push_back(s.trainable ? Tensor{} : s.value);

  TrainResult result;
  std::vector<Tensor> last_good;
  for (const auto& s : store.slots()) last_good.push_back(s.value);
  long step = 0;
  const auto t0 = std::chrono::steady_clock::now();

  std::vector<std::size_t> order(n);
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    Rng rng(mix_seed(cfg.seed, epoch));
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(order.begin(), order.end());
    double sum = 0.0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t end = std::min(n, start + cfg.batch_size);
      const std::span<const std::size_t> idx(order.data() + start, end - start);
      store.zero_grad();
      const double loss = stage_batch_loss(model, cfg, data, idx, rng, &store);
      sum += loss * static_cast<double>(idx.size());
      if (!adam_step(store, cfg.adam, ++step)) ++result.skipped_steps;
    }
    const double mean = sum / static_cast<double>(n);
    EpochStat st;
    st.epoch = epoch;
    st.loss = mean;
    if (cfg.record_timing) {
      st.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    }
    if (!std::isfinite(mean)) {
      result.diverged = true;
      auto& slots = store.mutable_slots();
      for (std::size_t i = 0; i < slots.size(); ++i) slots[i].value = last_good[i];
      if (log) *log << stage_name(cfg.stage) << ": non-finite loss at epoch " << epoch
                    << ", restored last good parameters\n";
      break;
    }
    result.curve.push_back(st);
    for (std::size_t i = 0; i < store.size(); ++i) last_good[i] = store.value(i);
    if (log) *log << stage_name(cfg.stage) << " epoch " << epoch << " loss " << mean << '\n';

    if (plateaued(result.curve, cfg.plateau_epochs, cfg.plateau_tolerance)) {
      result.stopped_early = true;
      break;
    }
  }

  // soft check: 20-epoch moving average should not rise
  const std::size_t w = 20;
  if (result.curve.size() >= 2 * w) {
    for (std::size_t e = 2 * w; e <= result.curve.size(); e += w) {
      double a = 0.0, b = 0.0;
      for (std::size_t k = e - 2 * w; k < e - w; ++k) a += result.curve[k].loss;
      for (std::size_t k = e - w; k < e; ++k) b += result.curve[k].loss;
      if (b > a) {
        std::cerr << "warning: " << stage_name(cfg.stage)
                  << " loss moving average increased around epoch " << e << '\n';
        break;
      }
    }
  }

  for (std::size_t i = 0; i < store.size(); ++i) {
    if (!store.trainable(i) && store.value(i) != frozen[i]) {
      fail("stage '", stage_name(cfg.stage), "' modified frozen parameter '", store.slot(i).name, "'");
    }
  }
  store.set_all_trainable(true);
  if (!result.diverged) model.meta["trained." + stage_name(cfg.stage)] = "1";
  return result;
}

inline void write_loss_curve(const std::filesystem::path& path, const TrainResult& r) {
  CsvWriter csv(path, {"epoch", "loss", "wall_ms"});
  for (const auto& e : r.curve) {
    csv.write_row({std::to_string(e.epoch), CsvWriter::num(e.loss), CsvWriter::num(e.wall_ms)});
  }
}

/// File-level stage runner used by the CLI: loads or creates the model,
/// trains, and writes checkpoint and loss curve.
inline TrainResult run_training(const TrainConfig& cfg, std::ostream& log) {
  require(!cfg.dataset.empty(), "config: data.train is required");
  require(!cfg.checkpoint_out.empty(), "config: checkpoint.out is required");
  const Dataset ds = read_dataset(cfg.dataset);
  std::optional<DualModel> model;
  if (!cfg.checkpoint_in.empty()) {
    require(std::filesystem::exists(cfg.checkpoint_in), "missing prerequisite checkpoint '",
            cfg.checkpoint_in.string(), "'");
    model.emplace(load_model(cfg.checkpoint_in));
    require(static_cast<Eigen::Index>(model->vertex_count()) == ds.shapes[0].rows() &&
                model->template_mesh().faces() == ds.faces,
            "checkpoint template does not match the dataset connectivity");
  } else {
    model.emplace(ds.template_mesh(), cfg.arch, cfg.seed);
  }
  const StageData data = prepare_stage_data(*model, ds, cfg);
  TrainResult r = train_stage(*model, cfg, data, &log);
  save_model(cfg.checkpoint_out, *model);
  if (!cfg.loss_csv.empty()) write_loss_curve(cfg.loss_csv, r);
  if (r.diverged) fail("training diverged; last good parameters written to '",
                       cfg.checkpoint_out.string(), "'");
  return r;
}

}  // namespace dlsi
