#pragma once

// Pair-set evaluation of interpolation methods, the per-method summary table,
// per-path output files and ablation summaries.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "dlsi/energy.hpp"
#include "dlsi/interpolation.hpp"
#include "dlsi/io.hpp"
#include "dlsi/models.hpp"
#include "dlsi/synthdata.hpp"

namespace dlsi {

struct EvalOptions {
  std::size_t interior = 10;
  GdOptions gd{};
  GdOptions gd_coord = GdOptions::coordinate();
  std::size_t jobs = 1;
  bool record_timing = false;
};

struct PairMetrics {
  std::size_t pair_id = 0;
  std::size_t a = 0, b = 0;
  Method method = Method::Dual;
  double var_el = 0.0;
  double var_area = 0.0;
  double var_vol = 0.0;
  double e_disc = 0.0;
  double e_disc_init = 0.0;   // linear-latent / linear-blend start, GD methods
  double lower_bound = 0.0;   // over the path's own endpoints
  double runtime_ms = 0.0;
};

/// Runs `method` between two meshes; cloud inputs are their vertices.
inline InterpolationPath run_method(const DualModel* m, Method method, const Mesh& a,
                                    const Mesh& b, const EvalOptions& opt) {
  const auto model = [&]() -> const DualModel& {
    require(m != nullptr, "method '", method_name(method), "' needs a trained checkpoint");
    return *m;
  };
  switch (method) {
    case Method::Dual: return interpolate_dual(model(), a.vertices(), b.vertices(), opt.interior);
    case Method::LinearLatent:
      return interpolate_linear_latent(model(), a.vertices(), b.vertices(), opt.interior);
    case Method::GdEl: return gd_el(model(), a.vertices(), b.vertices(), opt.interior, opt.gd);
    case Method::GdL2: return gd_l2(model(), a.vertices(), b.vertices(), opt.interior, opt.gd);
    case Method::GdCoord:
      return gd_coord(a.vertices(), b.vertices(), a.edges(), opt.interior, opt.gd_coord);
  }
  fail("unknown method");
}

inline PairMetrics path_metrics(const InterpolationPath& path, const Mesh& connectivity) {
  PairMetrics r;
  r.method = path.method;
  const ShapeSequence seq(path.shapes, connectivity);
  const MetricReport rep = metric_report(seq);
  r.var_el = rep.var_edge_length;
  r.var_area = rep.var_total_area;
  r.var_vol = rep.var_volume;
  r.e_disc = rep.e_disc;
  r.e_disc_init = path.method == Method::GdEl || path.method == Method::GdCoord
                      ? path.initial_objective
                      : rep.e_disc;
  r.lower_bound = e_disc_lower_bound(edge_lengths(path.shapes.front(), connectivity.edges()),
                                     edge_lengths(path.shapes.back(), connectivity.edges()),
                                     path.shapes.size() - 1);
  return r;
}

/// One row per (pair, method), ordered pair-major. Work items run on up to
/// `opt.jobs` threads; results are stored by index, so output order and
/// values do not depend on the thread count.
inline std::vector<PairMetrics> evaluate_pairs(const DualModel* m, const Dataset& ds,
                                               std::span<const std::pair<std::size_t, std::size_t>> pairs,
                                               std::span<const Method> methods,
                                               const EvalOptions& opt) {
  const std::size_t total = pairs.size() * methods.size();
  std::vector<PairMetrics> rows(total);
  std::atomic<std::size_t> next{0};
  std::mutex err_mu;
  std::exception_ptr err;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= total) return;
      try {
        const auto& [ia, ib] = pairs[i / methods.size()];
        const Method method = methods[i % methods.size()];
        const Mesh a = ds.mesh(ia), b = ds.mesh(ib);
        const auto t0 = std::chrono::steady_clock::now();
        const InterpolationPath path = run_method(m, method, a, b, opt);
        const auto t1 = std::chrono::steady_clock::now();
        PairMetrics r = path_metrics(path, a);
        r.pair_id = i / methods.size();
        r.a = ia;
        r.b = ib;
        if (opt.record_timing) r.runtime_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
        rows[i] = r;
      } catch (...) {
        std::lock_guard lock(err_mu);
        if (!err) err = std::current_exception();
        next = total;
      }
    }
  };
  const std::size_t jobs = std::max<std::size_t>(1, std::min(opt.jobs, total));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    for (std::size_t j = 0; j < jobs; ++j) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
  }
  if (err) std::rethrow_exception(err);
  return rows;
}

struct MethodSummary {
  Method method = Method::Dual;
  std::size_t pairs = 0;
  double var_el = 0.0;
  double var_area = 0.0;
  double var_vol = 0.0;
  double e_disc = 0.0;
  double e_disc_init = 0.0;
  double lower_bound = 0.0;
};

/// Mean of each metric over pairs, one entry per method in first-seen order.
inline std::vector<MethodSummary> summarise(std::span<const PairMetrics> rows) {
  std::vector<MethodSummary> out;
  for (const auto& r : rows) {
    auto it = std::find_if(out.begin(), out.end(), [&](const auto& s) { return s.method == r.method; });
    if (it == out.end()) {
      out.push_back({});
      it = out.end() - 1;
      it->method = r.method;
    }
    ++it->pairs;
    it->var_el += r.var_el;
    it->var_area += r.var_area;
    it->var_vol += r.var_vol;
    it->e_disc += r.e_disc;
    it->e_disc_init += r.e_disc_init;
    it->lower_bound += r.lower_bound;
  }
  for (auto& s : out) {
    const double n = static_cast<double>(s.pairs);
    s.var_el /= n;
    s.var_area /= n;
    s.var_vol /= n;
    s.e_disc /= n;
    s.e_disc_init /= n;
    s.lower_bound /= n;
  }
  return out;
}

inline void write_pair_csv(const std::filesystem::path& path, std::span<const PairMetrics> rows) {
  CsvWriter csv(path, {"pair_id", "a", "b", "method", "var_el", "var_area", "var_vol", "e_disc",
                       "e_disc_init", "lower_bound", "runtime_ms"});
  for (const auto& r : rows) {
    csv.write_row({std::to_string(r.pair_id), std::to_string(r.a), std::to_string(r.b),
                   method_name(r.method), CsvWriter::num(r.var_el), CsvWriter::num(r.var_area),
                   CsvWriter::num(r.var_vol), CsvWriter::num(r.e_disc),
                   CsvWriter::num(r.e_disc_init), CsvWriter::num(r.lower_bound),
                   CsvWriter::num(r.runtime_ms)});
  }
}

inline void write_table_csv(const std::filesystem::path& path, std::span<const MethodSummary> rows) {
  CsvWriter csv(path, {"method", "pairs", "var_el", "var_area", "var_vol", "e_disc",
                       "e_disc_init", "lower_bound"});
  for (const auto& s : rows) {
    csv.write_row({method_name(s.method), std::to_string(s.pairs), CsvWriter::num(s.var_el),
                   CsvWriter::num(s.var_area), CsvWriter::num(s.var_vol), CsvWriter::num(s.e_disc),
                   CsvWriter::num(s.e_disc_init), CsvWriter::num(s.lower_bound)});
  }
}

/// Numbered OBJ frames (frame_000.obj, ...) plus path.csv with per-step
/// contributions.
inline void write_path(const std::filesystem::path& dir, const InterpolationPath& path,
                       const Mesh& connectivity) {
  std::filesystem::create_directories(dir);
  char name[32];
  for (std::size_t k = 0; k < path.shapes.size(); ++k) {
    std::snprintf(name, sizeof name, "frame_%03zu.obj", k);
    write_obj(dir / name, path.shapes[k], connectivity.faces());
  }
  const MetricReport rep = metric_report(ShapeSequence(path.shapes, connectivity));
  CsvWriter csv(dir / "path.csv", {"frame", "alpha", "el_step", "area_step", "vol_step",
                                   "e_disc_partial"});
  double partial = 0.0;
  for (std::size_t k = 0; k < path.shapes.size(); ++k) {
    double el = 0.0, ar = 0.0, vo = 0.0;
    if (k > 0) {
      el = rep.step_edge_length[k - 1];
      ar = rep.step_total_area[k - 1];
      vo = rep.step_volume[k - 1];
      partial += el;
    }
    csv.write_row({std::to_string(k), CsvWriter::num(path.alphas[k]), CsvWriter::num(el),
                   CsvWriter::num(ar), CsvWriter::num(vo), CsvWriter::num(partial)});
  }
}

inline double quantile(std::vector<double> v, double q) {
  require(!v.empty(), "quantile of an empty set");
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

struct ReconstructionSummary {
  std::vector<double> el;  // per-shape EL error
  double el_mean = 0.0, el_median = 0.0, el_p90 = 0.0;
  double pc_mean = 0.0, chamfer_mean = 0.0;
  double area_mean = 0.0, volume_mean = 0.0;
};

/// Reconstruction metrics of each input against its reference mesh.
/// `shape_ae_only` bypasses the mapping networks.
inline ReconstructionSummary reconstruction_summary(const DualModel& m, std::span<const Points> inputs,
                                                    std::span<const Mesh> references,
                                                    bool shape_ae_only = false) {
  require(inputs.size() == references.size() && !inputs.empty(),
          "reconstruction_summary: inputs and references must pair up");
  ReconstructionSummary s;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const Points pred = shape_ae_only ? reconstruct_shape_ae(m, inputs[i]) : reconstruct(m, inputs[i]);
    const ReconstructionReport r = reconstruction_report(pred, references[i]);
    s.el.push_back(r.el);
    s.el_mean += r.el;
    s.pc_mean += r.pc;
    s.chamfer_mean += r.chamfer;
    s.area_mean += r.total_area_diff;
    s.volume_mean += r.total_volume_diff;
  }
  const double n = static_cast<double>(inputs.size());
  s.el_mean /= n;
  s.pc_mean /= n;
  s.chamfer_mean /= n;
  s.area_mean /= n;
  s.volume_mean /= n;
  s.el_median = quantile(s.el, 0.5);
  s.el_p90 = quantile(s.el, 0.9);
  return s;
}

struct AblationRow {
  std::string config;
  ReconstructionSummary rec;
  double var_el_dual = 0.0;
  double var_area_dual = 0.0;
  double var_vol_dual = 0.0;
  double var_el_edge_latent = 0.0;  // decoded by dec_e, no shape decoder
};

/// Aggregates for one trained configuration over a test set and pair list.
inline AblationRow ablation_row(const std::string& name, const DualModel& m, const Dataset& test,
                                std::span<const std::pair<std::size_t, std::size_t>> pairs,
                                std::size_t interior) {
  AblationRow row;
  row.config = name;
  std::vector<Mesh> refs;
  for (std::size_t i = 0; i < test.size(); ++i) refs.push_back(test.mesh(i));
  row.rec = reconstruction_summary(m, test.shapes, refs);
  for (const auto& [ia, ib] : pairs) {
    const InterpolationPath p = interpolate_dual(m, test.shapes[ia], test.shapes[ib], interior);
    const MetricReport rep = metric_report(ShapeSequence(p.shapes, refs[ia]));
    row.var_el_dual += rep.var_edge_length;
    row.var_area_dual += rep.var_total_area;
    row.var_vol_dual += rep.var_volume;
    const auto el = interpolate_edge_latent(m, edge_lengths(test.shapes[ia], m.edges()),
                                            edge_lengths(test.shapes[ib], m.edges()), interior);
    row.var_el_edge_latent += e_disc(el) / static_cast<double>(el.size() - 1);
  }
  const double n = static_cast<double>(std::max<std::size_t>(1, pairs.size()));
  row.var_el_dual /= n;
  row.var_area_dual /= n;
  row.var_vol_dual /= n;
  row.var_el_edge_latent /= n;
  return row;
}

inline void write_ablation_csv(const std::filesystem::path& path, std::span<const AblationRow> rows) {
  CsvWriter csv(path, {"config", "el_mean", "el_median", "el_p90", "pc_mean", "chamfer_mean",
                       "area_diff_mean", "volume_diff_mean", "var_el_dual", "var_area_dual",
                       "var_vol_dual", "var_el_edge_latent"});
  for (const auto& r : rows) {
    csv.write_row({r.config, CsvWriter::num(r.rec.el_mean), CsvWriter::num(r.rec.el_median),
                   CsvWriter::num(r.rec.el_p90), CsvWriter::num(r.rec.pc_mean),
                   CsvWriter::num(r.rec.chamfer_mean), CsvWriter::num(r.rec.area_mean),
                   CsvWriter::num(r.rec.volume_mean), CsvWriter::num(r.var_el_dual),
                   CsvWriter::num(r.var_area_dual), CsvWriter::num(r.var_vol_dual),
                   CsvWriter::num(r.var_el_edge_latent)});
  }
}

}  // namespace dlsi
