// dlsi: data generation, staged training, reconstruction, interpolation,
// baselines, evaluation and gradient self-check.

#include <malloc.h>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dlsi/evaluation.hpp"
#include "dlsi/gradcheck.hpp"
#include "dlsi/interpolation.hpp"
#include "dlsi/io.hpp"
#include "dlsi/synthdata.hpp"
#include "dlsi/training.hpp"

namespace fs = std::filesystem;
using namespace dlsi;

namespace {

void print_resolved(const std::string& cmd, const std::vector<std::pair<std::string, std::string>>& kv) {
  std::cout << "# " << cmd << '\n';
  for (const auto& [k, v] : kv) std::cout << k << " = " << v << '\n';
  std::cout.flush();
}

std::string num(double v) { return detail::format_double(v); }

Points read_input(const fs::path& p) {
  if (p.extension() == ".obj") return read_obj(p).vertices();
  return read_cloud(p).points;
}

struct GenArgs {
  std::string family = "bend-cylinder";
  std::size_t count = 100;
  std::uint64_t seed = 1;
  std::size_t around = 20, along = 25;
  double max_bend = 0.55, max_twist = 1.5, max_joint = 1.2, area = 1.0;
  std::string out;
};

int cmd_gen(const GenArgs& a) {
  FamilySpec s;
  s.family = parse_family(a.family);
  s.count = a.count;
  s.seed = a.seed;
  s.around = a.around;
  s.along = a.along;
  s.max_bend = a.max_bend;
  s.max_twist = a.max_twist;
  s.max_joint = a.max_joint;
  s.area_target = a.area;
  print_resolved("gen-data", {{"family", a.family}, {"count", std::to_string(a.count)},
                              {"seed", std::to_string(a.seed)}, {"around", std::to_string(a.around)},
                              {"along", std::to_string(a.along)}, {"max_bend", num(a.max_bend)},
                              {"max_twist", num(a.max_twist)}, {"max_joint", num(a.max_joint)},
                              {"area_target", num(a.area)}, {"out", a.out}});
  const Dataset ds = generate(s);
  write_dataset(a.out, ds);
  std::size_t flagged = 0;
  for (const auto& f : ds.flags) flagged += f != "ok";
  if (flagged) std::cerr << "warning: " << flagged << " meshes flagged in manifest\n";
  return 0;
}

struct TrainArgs {
  std::string config;
  std::vector<std::string> overrides;
  bool verbose = false;
};

int cmd_train(const TrainArgs& a) {
  Config c = a.config.empty() ? Config{} : Config::load(a.config);
  for (const auto& o : a.overrides) {
    const auto eq = o.find('=');
    require(eq != std::string::npos, "--set expects key=value, got '", o, "'");
    c.set(std::string(detail::trim(o.substr(0, eq))), std::string(detail::trim(o.substr(eq + 1))));
  }
  const TrainConfig t = TrainConfig::from(c);
  std::vector<std::pair<std::string, std::string>> kv;
  kv.emplace_back("stage", stage_name(t.stage));
  kv.emplace_back("seed", std::to_string(t.seed));
  kv.emplace_back("epochs", std::to_string(t.epochs));
  kv.emplace_back("batch_size", std::to_string(t.batch_size));
  kv.emplace_back("lr", num(t.adam.lr));
  for (const auto& [k, v] : c.values()) {
    if (k != "stage" && k != "seed" && k != "epochs" && k != "batch_size" && k != "lr") kv.emplace_back(k, v);
  }
  print_resolved("train", kv);
  std::ostringstream sink;
  const TrainResult r = run_training(t, a.verbose ? std::cerr : sink);
  if (!r.curve.empty()) {
    std::cout << "final_loss = " << num(r.curve.back().loss) << "\nepochs_run = " << r.curve.size()
              << (r.stopped_early ? " (plateau)" : "") << '\n';
  }
  return 0;
}

struct ReconArgs {
  std::string checkpoint, input, out;
  bool shape_ae_only = false;
};

int cmd_reconstruct(const ReconArgs& a) {
  print_resolved("reconstruct", {{"checkpoint", a.checkpoint}, {"input", a.input}, {"out", a.out},
                                 {"shape_ae_only", a.shape_ae_only ? "true" : "false"}});
  const DualModel m = load_model(a.checkpoint);
  const Points in = read_input(a.input);
  const Points p = a.shape_ae_only ? reconstruct_shape_ae(m, in) : reconstruct(m, in);
  write_obj(a.out, p, m.template_mesh().faces());
  return 0;
}

struct InterpArgs {
  std::string checkpoint, source, target, method = "dual", out;
  std::size_t nk = 10, steps = 1000, coord_steps = GdOptions::coordinate().steps;
  double lr = 1e-2, coord_lr = GdOptions::coordinate().lr;
  std::uint64_t seed = 1;
};

int cmd_interpolate(const InterpArgs& a) {
  print_resolved("interpolate", {{"checkpoint", a.checkpoint}, {"source", a.source},
                                 {"target", a.target}, {"method", a.method},
                                 {"nk", std::to_string(a.nk)}, {"steps", std::to_string(a.steps)},
                                 {"lr", num(a.lr)}, {"coord_steps", std::to_string(a.coord_steps)},
                                 {"coord_lr", num(a.coord_lr)}, {"seed", std::to_string(a.seed)},
                                 {"out", a.out}});
  require(a.nk >= 2, "--nk must be >= 2");
  const Method method = parse_method(a.method);
  EvalOptions opt;
  opt.interior = a.nk;
  opt.gd = {a.steps, a.lr, 50, false};
  opt.gd_coord = {a.coord_steps, a.coord_lr, 50, true};
  InterpolationPath path;
  std::optional<Mesh> connectivity;
  if (method == Method::GdCoord) {
    const Mesh ma = read_obj(a.source), mb = read_obj(a.target);
    require(ma.faces() == mb.faces(), "gd-coord needs meshes with identical connectivity");
    path = gd_coord(ma.vertices(), mb.vertices(), ma.edges(), a.nk, opt.gd_coord);
    connectivity = ma;
  } else {
    require(!a.checkpoint.empty(), "--checkpoint is required for method '", a.method, "'");
    const DualModel m = load_model(a.checkpoint);
    const Points pa = read_input(a.source), pb = read_input(a.target);
    switch (method) {
      case Method::Dual: path = interpolate_dual(m, pa, pb, a.nk); break;
      case Method::LinearLatent: path = interpolate_linear_latent(m, pa, pb, a.nk); break;
      case Method::GdEl: path = gd_el(m, pa, pb, a.nk, opt.gd); break;
      case Method::GdL2: path = gd_l2(m, pa, pb, a.nk, opt.gd); break;
      case Method::GdCoord: break;
    }
    connectivity = m.template_mesh();
  }
  write_path(a.out, path, *connectivity);
  const PairMetrics r = path_metrics(path, *connectivity);
  std::cout << "frames = " << path.shapes.size() << "\nvar_el = " << num(r.var_el)
            << "\ne_disc = " << num(r.e_disc) << '\n';
  return 0;
}

struct EvalArgs {
  std::string checkpoint, data, out, per_pair;
  std::vector<std::string> methods{"dual", "linear", "gd-el", "gd-l2", "gd-coord"};
  std::vector<std::string> ablation;
  std::size_t anchors = 50, pairs = 100, nk = 10, steps = 1000, jobs = 1;
  std::size_t coord_steps = GdOptions::coordinate().steps;
  double lr = 1e-2, coord_lr = GdOptions::coordinate().lr;
  std::uint64_t seed = 1;
  bool constant = false, record_timing = false;
};

std::vector<std::pair<std::size_t, std::size_t>> select_pairs(const Dataset& ds, const EvalArgs& a) {
  const PairSelection sel = farthest_point_pairs(ds.shapes, std::min(a.anchors, ds.size()), a.pairs, a.seed);
  if (!a.constant) return sel.pairs;
  std::vector<std::pair<std::size_t, std::size_t>> same;
  for (const auto& p : sel.pairs) same.emplace_back(p.first, p.first);
  return same;
}

int cmd_evaluate(const EvalArgs& a) {
  std::string methods;
  for (const auto& m : a.methods) methods += (methods.empty() ? "" : ",") + m;
  std::string abl;
  for (const auto& m : a.ablation) abl += (abl.empty() ? "" : ",") + m;
  print_resolved("evaluate", {{"checkpoint", a.checkpoint}, {"data", a.data}, {"methods", methods},
                              {"ablation", abl}, {"anchors", std::to_string(a.anchors)},
                              {"pairs", std::to_string(a.pairs)}, {"nk", std::to_string(a.nk)},
                              {"steps", std::to_string(a.steps)}, {"lr", num(a.lr)},
                              {"coord_steps", std::to_string(a.coord_steps)},
                              {"coord_lr", num(a.coord_lr)}, {"jobs", std::to_string(a.jobs)},
                              {"seed", std::to_string(a.seed)},
                              {"constant", a.constant ? "true" : "false"}, {"out", a.out},
                              {"per_pair", a.per_pair}});
  require(a.nk >= 2, "--nk must be >= 2");
  const Dataset ds = read_dataset(a.data);
  const auto pairs = select_pairs(ds, a);

  if (!a.ablation.empty()) {
    std::vector<AblationRow> rows;
    for (const auto& spec : a.ablation) {
      const auto eq = spec.find('=');
      require(eq != std::string::npos, "--ablation expects name=checkpoint, got '", spec, "'");
      const DualModel m = load_model(spec.substr(eq + 1));
      rows.push_back(ablation_row(spec.substr(0, eq), m, ds, pairs, a.nk));
    }
    write_ablation_csv(a.out, rows);
    return 0;
  }

  std::vector<Method> ms;
  for (const auto& s : a.methods) ms.push_back(parse_method(s));
  std::optional<DualModel> model;
  if (!a.checkpoint.empty()) model.emplace(load_model(a.checkpoint));
  EvalOptions opt;
  opt.interior = a.nk;
  opt.gd = {a.steps, a.lr, 50, false};
  opt.gd_coord = {a.coord_steps, a.coord_lr, 50, true};
  opt.jobs = a.jobs;
  opt.record_timing = a.record_timing;
  const auto rows = evaluate_pairs(model ? &*model : nullptr, ds, pairs, ms, opt);
  const auto table = summarise(rows);
  write_table_csv(a.out, table);
  if (!a.per_pair.empty()) write_pair_csv(a.per_pair, rows);
  for (const auto& s : table) {
    std::cout << method_name(s.method) << ": var_el " << num(s.var_el) << " var_area "
              << num(s.var_area) << " var_vol " << num(s.var_vol) << '\n';
  }
  return 0;
}

struct BaselineArgs {
  std::string checkpoint, source, target, out;
  std::size_t nk = 10, steps = 1000, coord_steps = GdOptions::coordinate().steps;
  double lr = 1e-2, coord_lr = GdOptions::coordinate().lr;
};

int cmd_baseline(const BaselineArgs& a) {
  print_resolved("baseline", {{"checkpoint", a.checkpoint}, {"source", a.source},
                              {"target", a.target}, {"nk", std::to_string(a.nk)},
                              {"steps", std::to_string(a.steps)}, {"lr", num(a.lr)},
                              {"coord_steps", std::to_string(a.coord_steps)},
                              {"coord_lr", num(a.coord_lr)}, {"out", a.out}});
  require(a.nk >= 2, "--nk must be >= 2");
  const DualModel m = load_model(a.checkpoint);
  const Mesh ma = read_obj(a.source), mb = read_obj(a.target);
  require(ma.faces() == m.template_mesh().faces() && mb.faces() == ma.faces(),
          "baseline needs meshes with the checkpoint's connectivity");
  EvalOptions opt;
  opt.interior = a.nk;
  opt.gd = {a.steps, a.lr, 50, false};
  opt.gd_coord = {a.coord_steps, a.coord_lr, 50, true};
  std::vector<PairMetrics> rows;
  for (Method method : {Method::Dual, Method::LinearLatent, Method::GdEl, Method::GdL2, Method::GdCoord}) {
    PairMetrics r = path_metrics(run_method(&m, method, ma, mb, opt), ma);
    rows.push_back(r);
  }
  write_pair_csv(a.out, rows);
  return 0;
}

int cmd_gradcheck(double tolerance, std::uint64_t seed) {
  print_resolved("gradcheck", {{"tolerance", num(tolerance)}, {"seed", std::to_string(seed)}});
  GradcheckOptions opt;
  opt.tolerance = tolerance;
  opt.seed = seed;
  const auto results = run_gradcheck(opt);
  double worst = 0.0;
  for (const auto& g : results) {
    std::printf("%-20s %-4s max_rel_error %.3e (%zu entries)\n", g.name.c_str(),
                g.max_rel_error < tolerance ? "ok" : "FAIL", g.max_rel_error, g.entries);
    worst = std::max(worst, g.max_rel_error);
  }
  std::printf("max relative error %.3e\n", worst);
  return gradcheck_passed(results, tolerance) ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  // Large per-batch activations would otherwise be mmapped and unmapped on
  // every step.
  mallopt(M_MMAP_MAX, 0);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  CLI::App app{"dual latent space shape interpolation"};
  app.require_subcommand(1);

  GenArgs gen;
  auto* g = app.add_subcommand("gen-data", "generate a synthetic mesh family");
  g->add_option("--family", gen.family, "bend-cylinder | twist-cylinder | articulated-arm | bend-plate")
      ->capture_default_str();
  g->add_option("--count", gen.count)->capture_default_str();
  g->add_option("--seed", gen.seed)->capture_default_str();
  g->add_option("--around", gen.around)->capture_default_str();
  g->add_option("--along", gen.along)->capture_default_str();
  g->add_option("--max-bend", gen.max_bend)->capture_default_str();
  g->add_option("--max-twist", gen.max_twist)->capture_default_str();
  g->add_option("--max-joint", gen.max_joint)->capture_default_str();
  g->add_option("--area", gen.area)->capture_default_str();
  g->add_option("--out", gen.out, "output directory")->required();

  TrainArgs tr;
  std::uint64_t train_seed = 0;
  bool train_timing = false;
  auto* t = app.add_subcommand("train", "run one training stage");
  t->add_option("--config", tr.config, "key = value config file");
  t->add_option("--set", tr.overrides, "override a config key (key=value)");
  auto* seed_opt = t->add_option("--seed", train_seed, "overrides the config seed");
  t->add_flag("--record-timing", train_timing, "fill the wall_ms column");
  t->add_flag("--verbose", tr.verbose, "per-epoch loss on stderr");

  ReconArgs rc;
  auto* r = app.add_subcommand("reconstruct", "reconstruct a shape through both latent spaces");
  r->add_option("--checkpoint", rc.checkpoint)->required();
  r->add_option("--input", rc.input, "OBJ or XYZ")->required();
  r->add_option("--out", rc.out, "output OBJ")->required();
  r->add_flag("--shape-ae-only", rc.shape_ae_only, "skip the mapping networks");

  InterpArgs ia;
  auto* in = app.add_subcommand("interpolate", "interpolate between two shapes");
  in->add_option("--checkpoint", ia.checkpoint);
  in->add_option("--source", ia.source)->required();
  in->add_option("--target", ia.target)->required();
  in->add_option("--method", ia.method, "dual | linear | gd-el | gd-l2 | gd-coord")->capture_default_str();
  in->add_option("--nk", ia.nk, "interior samples")->capture_default_str();
  in->add_option("--steps", ia.steps)->capture_default_str();
  in->add_option("--lr", ia.lr, "latent GD step")->capture_default_str();
  in->add_option("--coord-steps", ia.coord_steps)->capture_default_str();
  in->add_option("--coord-lr", ia.coord_lr, "coordinate descent (Adam) step")->capture_default_str();
  in->add_option("--seed", ia.seed)->capture_default_str();
  in->add_option("--out", ia.out, "output directory")->required();

  BaselineArgs ba;
  auto* b = app.add_subcommand("baseline", "all methods on one mesh pair");
  b->add_option("--checkpoint", ba.checkpoint)->required();
  b->add_option("--source", ba.source, "OBJ")->required();
  b->add_option("--target", ba.target, "OBJ")->required();
  b->add_option("--nk", ba.nk)->capture_default_str();
  b->add_option("--steps", ba.steps)->capture_default_str();
  b->add_option("--lr", ba.lr)->capture_default_str();
  b->add_option("--coord-steps", ba.coord_steps)->capture_default_str();
  b->add_option("--coord-lr", ba.coord_lr)->capture_default_str();
  b->add_option("--out", ba.out, "output CSV")->required();

  EvalArgs ev;
  auto* e = app.add_subcommand("evaluate", "method table over farthest-point test pairs");
  e->add_option("--checkpoint", ev.checkpoint);
  e->add_option("--data", ev.data, "dataset directory")->required();
  e->add_option("--methods", ev.methods)->delimiter(',')->capture_default_str();
  e->add_option("--ablation", ev.ablation, "name=checkpoint; writes the ablation CSV instead");
  e->add_option("--anchors", ev.anchors)->capture_default_str();
  e->add_option("--pairs", ev.pairs)->capture_default_str();
  e->add_option("--nk", ev.nk)->capture_default_str();
  e->add_option("--steps", ev.steps)->capture_default_str();
  e->add_option("--lr", ev.lr, "latent GD step")->capture_default_str();
  e->add_option("--coord-steps", ev.coord_steps)->capture_default_str();
  e->add_option("--coord-lr", ev.coord_lr, "coordinate descent (Adam) step")->capture_default_str();
  e->add_option("--jobs", ev.jobs)->capture_default_str();
  e->add_option("--seed", ev.seed)->capture_default_str();
  e->add_flag("--constant", ev.constant, "pair every anchor with itself");
  e->add_flag("--record-timing", ev.record_timing, "fill the runtime_ms column");
  e->add_option("--out", ev.out, "table CSV")->required();
  e->add_option("--per-pair", ev.per_pair, "per-pair CSV");

  double tol = 1e-5;
  std::uint64_t gc_seed = 7;
  auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient checks");
  gc->add_option("--tolerance", tol)->capture_default_str();
  gc->add_option("--seed", gc_seed)->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*g) return cmd_gen(gen);
    if (*t) {
      if (seed_opt->count()) tr.overrides.push_back("seed=" + std::to_string(train_seed));
      if (train_timing) tr.overrides.emplace_back("output.record_timing=true");
      return cmd_train(tr);
    }
    if (*r) return cmd_reconstruct(rc);
    if (*in) return cmd_interpolate(ia);
    if (*b) return cmd_baseline(ba);
    if (*e) return cmd_evaluate(ev);
    if (*gc) return cmd_gradcheck(tol, gc_seed);
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << '\n';
    return 1;
  }
  return 1;
}
