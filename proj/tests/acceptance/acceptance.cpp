// Acceptance runner: one PASS/FAIL line per criterion.
//
//   acceptance [--only N] [--work DIR]
//
// Criterion 4 trains the desk-scale pipeline and leaves its checkpoints in
// the work directory; 5 and 6 reuse them.

#include <malloc.h>
#include <sys/wait.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "dlsi/evaluation.hpp"
#include "dlsi/gradcheck.hpp"
#include "dlsi/training.hpp"

namespace fs = std::filesystem;
using namespace dlsi;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

fs::path g_work;

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// Collects named sub-checks; the criterion passes when all do.
struct Checks {
  bool ok = true;
  std::ostringstream failed;
  void expect(bool cond, const std::string& what) {
    if (!cond) {
      ok = false;
      failed << " [failed: " << what << "]";
    }
  }
};

Points random_points(Rng& rng, Eigen::Index n) {
  Points p(n, 3);
  for (Eigen::Index i = 0; i < p.size(); ++i) p.data()[i] = rng.uniform(-1.0, 1.0);
  return p;
}

Mat3 random_rotation(Rng& rng) {
  Eigen::Quaterniond q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
  return q.normalized().toRotationMatrix();
}

Points rigid(const Points& p, const Mat3& r, const Vec3& t) {
  Points out(p.rows(), 3);
  for (Eigen::Index i = 0; i < p.rows(); ++i) out.row(i) = (r * p.row(i).transpose() + t).transpose();
  return out;
}

// ---------------------------------------------------------------------------

Outcome criterion1() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto results = run_gradcheck();
  const double secs = seconds_since(t0);
  double worst = 0.0;
  std::string worst_name;
  for (const auto& g : results) {
    if (g.max_rel_error >= worst) {
      worst = g.max_rel_error;
      worst_name = g.name;
    }
  }
  const bool pass = gradcheck_passed(results, 1e-5) && secs < 120.0;
  return {pass, std::to_string(results.size()) + " checks, max rel error " + fmt("%.2e", worst) + " (" +
                    worst_name + ") < 1e-5, " + fmt("%.1f", secs) + " s < 120 s"};
}

Outcome criterion2() {
  const auto t0 = std::chrono::steady_clock::now();
  Checks c;
  Rng rng(2024);

  double el_worst = 0.0, drot_worst = 0.0, kabsch_worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const Points p = random_points(rng, 60);
    std::vector<Edge> edges;
    for (int i = 0; i + 1 < 60; ++i) edges.push_back({i, i + 1});
    const Mat3 r = random_rotation(rng);
    const Vec3 t(rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-5, 5));
    const Points q = rigid(p, r, t);
    el_worst = std::max(el_worst, (edge_lengths(p, edges) - edge_lengths(q, edges)).cwiseAbs().maxCoeff());
    drot_worst = std::max(drot_worst, d_rot(p, q).value);
    const RigidTransform x = kabsch_align(p, q);
    kabsch_worst = std::max(kabsch_worst, (x.rotation - r).norm() + (x.translation - t).norm());
  }
  c.expect(el_worst < 1e-12, "edge-length invariance");
  c.expect(drot_worst < 1e-10, "d_rot of rigid copy");
  c.expect(kabsch_worst < 1e-6, "Kabsch recovery");

  FamilySpec s;
  s.count = 4;
  const Dataset ds = generate(s);
  const DualModel m(ds.template_mesh(), ArchConfig{}, 5);
  bool perm_exact = true;
  for (const Points& p : ds.shapes) {
    const Eigen::VectorXd z = encode_points(m, p);
    std::vector<Eigen::Index> perm(static_cast<std::size_t>(p.rows()));
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm.begin(), perm.end());
    Points q(p.rows(), 3);
    for (Eigen::Index i = 0; i < p.rows(); ++i) q.row(i) = p.row(perm[static_cast<std::size_t>(i)]);
    perm_exact = perm_exact && encode_points(m, q) == z;
  }
  c.expect(perm_exact, "enc_p permutation invariance");

  const fs::path dir = g_work / "c2";
  fs::create_directories(dir);
  save_model(dir / "m.ckpt", m);
  const DualModel back = load_model(dir / "m.ckpt");
  bool ck_exact = back.params.size() == m.params.size();
  for (std::size_t i = 0; ck_exact && i < m.params.size(); ++i) {
    ck_exact = back.params.slot(i).name == m.params.slot(i).name && back.params.value(i) == m.params.value(i);
  }
  c.expect(ck_exact, "checkpoint round trip");
  write_obj(dir / "m.obj", ds.mesh(1));
  const Mesh obj = read_obj(dir / "m.obj");
  c.expect(obj.vertices() == ds.shapes[1] && obj.faces() == ds.faces, "OBJ round trip");

  const double secs = seconds_since(t0);
  c.expect(secs < 60.0, "runtime");
  return {c.ok, "edge-length " + fmt("%.1e", el_worst) + " < 1e-12, d_rot " + fmt("%.1e", drot_worst) +
                    " < 1e-10, Kabsch " + fmt("%.1e", kabsch_worst) + " < 1e-6, enc_p permutation " +
                    (perm_exact ? "exact" : "inexact") + ", checkpoint/OBJ round trips " +
                    (ck_exact ? "exact" : "inexact") + ", " + fmt("%.1f", secs) + " s < 60 s" +
                    c.failed.str()};
}

Outcome criterion3() {
  const auto t0 = std::chrono::steady_clock::now();
  Checks c;
  Rng rng(77);
  double worst_gap = 1e300;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto edges = static_cast<Eigen::Index>(1 + rng.index(20));
    const std::size_t frames = 2 + rng.index(12);
    std::vector<EdgeLengths> seq;
    for (std::size_t k = 0; k < frames; ++k) {
      EdgeLengths e(edges);
      for (Eigen::Index i = 0; i < edges; ++i) e[i] = rng.uniform(0.0, 2.0);
      seq.push_back(e);
    }
    worst_gap = std::min(worst_gap, e_disc(seq) - e_disc_lower_bound(seq.front(), seq.back(), frames - 1));
  }
  c.expect(worst_gap >= -1e-9, "lower bound");

  std::vector<Edge> edge{{0, 1}};
  auto segment = [](double len) {
    Points p(2, 3);
    p << 0, 0, 0, len, 0, 0;
    return p;
  };
  const double single = e_disc(ShapeSequence({segment(1.0), segment(1.5), segment(2.0)}, edge));
  c.expect(single == 0.5, "single-edge case");
  const double var = var_scalar(std::vector<double>{0.0, 1.0, 3.0});
  c.expect(var == 2.5, "scalar variance case");
  const double secs = seconds_since(t0);
  c.expect(secs < 60.0, "runtime");
  return {c.ok, "min(e_disc - bound) over 1000 sequences " + fmt("%.2e", worst_gap) + " >= -1e-9, single edge " +
                    fmt("%.17g", single) + " == 0.5, Var[0,1,3] " + fmt("%.17g", var) + " == 2.5, " +
                    fmt("%.1f", secs) + " s < 60 s" + c.failed.str()};
}

// ---------------------------------------------------------------------------
// Desk-scale pipeline

struct Pipeline {
  std::size_t train_count = 2000, test_count = 200;
  std::uint64_t train_seed = 11, test_seed = 12, model_seed = 1;
  std::size_t shape_epochs = 60, edge_epochs = 60, mapper_epochs = 150;
  double shape_lr = 1e-3, edge_lr = 1e-3, mapper_lr = 1e-3;
  std::size_t anchors = 10, pairs = 20, interior = 10;
  GdOptions gd{1000, 1e-2, 50};
  GdOptions gd_coord = GdOptions::coordinate();
  std::uint64_t pair_seed = 1;
};

Pipeline g_pipe;

Dataset test_set() {
  FamilySpec s;
  s.count = g_pipe.test_count;
  s.seed = g_pipe.test_seed;
  return generate(s);
}

std::vector<std::pair<std::size_t, std::size_t>> test_pairs(const Dataset& test) {
  return farthest_point_pairs(test.shapes, g_pipe.anchors, g_pipe.pairs, g_pipe.pair_seed).pairs;
}

TrainConfig stage_config(Stage stage, std::size_t epochs, double lr) {
  TrainConfig c;
  c.stage = stage;
  c.epochs = epochs;
  c.adam.lr = lr;
  c.seed = g_pipe.model_seed;
  return c;
}

TrainResult train(DualModel& m, const Dataset& ds, const TrainConfig& c, const std::string& csv) {
  const auto t0 = std::chrono::steady_clock::now();
  const TrainResult r = train_stage(m, c, prepare_stage_data(m, ds, c));
  write_loss_curve(g_work / csv, r);
  std::cerr << "  " << stage_name(c.stage) << ": " << r.curve.size() << " epochs, final loss "
            << r.curve.back().loss << ", " << fmt("%.0f", seconds_since(t0)) << " s\n";
  require(!r.diverged, "stage ", stage_name(c.stage), " diverged");
  return r;
}

fs::path ckpt(const std::string& name) { return g_work / name; }

Outcome criterion4() {
  const auto t0 = std::chrono::steady_clock::now();
  FamilySpec s;
  s.count = g_pipe.train_count;
  s.seed = g_pipe.train_seed;
  const Dataset train_ds = generate(s);
  const Dataset test = test_set();

  DualModel m(train_ds.template_mesh(), ArchConfig{}, g_pipe.model_seed);
  train(m, train_ds, stage_config(Stage::ShapeAE, g_pipe.shape_epochs, g_pipe.shape_lr), "loss_shape_ae.csv");
  save_model(ckpt("shape_ae.ckpt"), m);
  train(m, train_ds, stage_config(Stage::EdgeAE, g_pipe.edge_epochs, g_pipe.edge_lr), "loss_edge_ae.csv");
  save_model(ckpt("edge_ae.ckpt"), m);
  train(m, train_ds, stage_config(Stage::Mappers, g_pipe.mapper_epochs, g_pipe.mapper_lr), "loss_mappers.csv");
  save_model(ckpt("full.ckpt"), m);
  const double train_secs = seconds_since(t0);

  const auto pairs = test_pairs(test);
  const std::vector<Method> methods{Method::Dual, Method::LinearLatent, Method::GdEl, Method::GdCoord};
  EvalOptions opt;
  opt.interior = g_pipe.interior;
  opt.gd = g_pipe.gd;
  opt.gd_coord = g_pipe.gd_coord;
  const auto rows = evaluate_pairs(&m, test, pairs, methods, opt);
  const auto table = summarise(rows);
  write_pair_csv(g_work / "pipeline_pairs.csv", rows);
  write_table_csv(g_work / "pipeline_table.csv", table);
  const double secs = seconds_since(t0);

  auto row = [&](Method method) {
    return *std::find_if(table.begin(), table.end(), [&](const auto& r) { return r.method == method; });
  };
  const MethodSummary dual = row(Method::Dual), lin = row(Method::LinearLatent), gd = row(Method::GdEl),
                      coord = row(Method::GdCoord);
  const double dual_ratio = dual.var_el / lin.var_el;
  const double gd_reduction = 1.0 - gd.e_disc / gd.e_disc_init;
  const double coord_gap = coord.e_disc / coord.lower_bound - 1.0;
  Checks c;
  c.expect(dual_ratio <= 0.85, "dual vs linear");
  c.expect(gd_reduction >= 0.30, "GD EL reduction");
  c.expect(coord_gap <= 0.05, "GD coord gap");
  c.expect(secs < 1800.0, "runtime");
  return {c.ok, "Var_EL dual/linear " + fmt("%.3f", dual_ratio) + " <= 0.85 (" + fmt("%.4g", dual.var_el) + " vs " +
                    fmt("%.4g", lin.var_el) + "), GD-EL E_disc reduction " + fmt("%.1f", 100 * gd_reduction) +
                    "% >= 30%, GD-coord above bound by " + fmt("%.2f", 100 * coord_gap) + "% <= 5%, " +
                    fmt("%.0f", secs) + " s (training " + fmt("%.0f", train_secs) + " s) < 1800 s" + c.failed.str()};
}

DualModel need(const std::string& name) {
  require(fs::exists(ckpt(name)), "checkpoint '", ckpt(name).string(),
          "' missing; run criterion 4 first with the same --work");
  return load_model(ckpt(name));
}

Outcome criterion5() {
  const auto t0 = std::chrono::steady_clock::now();
  const DualModel m = need("full.ckpt");
  const Dataset test = test_set();
  std::vector<Points> clean, noisy, sub;
  std::vector<Mesh> refs;
  for (std::size_t i = 0; i < test.size(); ++i) {
    const Mesh mesh = test.mesh(i);
    const PointCloud c = sample_surface(mesh, 1000, mix_seed(51, i));
    const double sigma = 0.05 * bbox_diagonal(mesh.vertices());
    clean.push_back(c.points);
    noisy.push_back(corrupt(c, Corruption::noise(sigma), mix_seed(52, i)).points);
    sub.push_back(corrupt(c, Corruption::subsample(500), mix_seed(53, i)).points);
    refs.push_back(mesh);
  }
  auto el = [&](const std::vector<Points>& in, bool ae_only) {
    return reconstruction_summary(m, in, refs, ae_only).el_mean;
  };
  const double dual_clean = el(clean, false), ae_clean = el(clean, true);
  const double dual_noise = el(noisy, false) / dual_clean, ae_noise = el(noisy, true) / ae_clean;
  const double dual_sub = el(sub, false) / dual_clean, ae_sub = el(sub, true) / ae_clean;
  {
    CsvWriter csv(g_work / "robustness.csv", {"input", "el_dual", "el_shape_ae"});
    csv.write_row({"clean", CsvWriter::num(dual_clean), CsvWriter::num(ae_clean)});
    csv.write_row({"noise", CsvWriter::num(dual_noise * dual_clean), CsvWriter::num(ae_noise * ae_clean)});
    csv.write_row({"subsample", CsvWriter::num(dual_sub * dual_clean), CsvWriter::num(ae_sub * ae_clean)});
  }
  const double secs = seconds_since(t0);
  Checks c;
  c.expect(dual_noise < ae_noise, "noise");
  c.expect(dual_sub < ae_sub, "subsample");
  c.expect(secs < 300.0, "runtime");
  return {c.ok, "EL degradation dual vs shape AE: noise x" + fmt("%.3f", dual_noise) + " < x" +
                    fmt("%.3f", ae_noise) + ", subsample x" + fmt("%.3f", dual_sub) + " < x" + fmt("%.3f", ae_sub) +
                    ", " + fmt("%.0f", secs) + " s < 300 s" + c.failed.str()};
}

double edge_latent_var(const DualModel& m, const Dataset& test,
                       std::span<const std::pair<std::size_t, std::size_t>> pairs) {
  double sum = 0.0;
  for (const auto& [a, b] : pairs) {
    const auto path = interpolate_edge_latent(m, edge_lengths(test.shapes[a], m.edges()),
                                              edge_lengths(test.shapes[b], m.edges()), g_pipe.interior);
    sum += e_disc(path) / static_cast<double>(path.size() - 1);
  }
  return sum / static_cast<double>(pairs.size());
}

Outcome criterion6() {
  const auto t0 = std::chrono::steady_clock::now();
  FamilySpec s;
  s.count = g_pipe.train_count;
  s.seed = g_pipe.train_seed;
  const Dataset train_ds = generate(s);
  const Dataset test = test_set();
  const auto pairs = test_pairs(test);

  // edge AE without the linearity term, from the same shape-AE checkpoint
  const DualModel with_lin = need("edge_ae.ckpt");
  DualModel no_lin = need("shape_ae.ckpt");
  TrainConfig c_nolin = stage_config(Stage::EdgeAE, g_pipe.edge_epochs, g_pipe.edge_lr);
  c_nolin.lin_weight = 0.0;
  train(no_lin, train_ds, c_nolin, "loss_edge_ae_nolin.csv");
  save_model(ckpt("edge_ae_nolin.ckpt"), no_lin);
  const double var_lin = edge_latent_var(with_lin, test, pairs);
  const double var_nolin = edge_latent_var(no_lin, test, pairs);

  // mappers trained with the direct loss instead of the cycle losses
  DualModel direct = need("edge_ae.ckpt");
  TrainConfig c_direct = stage_config(Stage::Mappers, g_pipe.mapper_epochs, g_pipe.mapper_lr);
  c_direct.mapping_mode = MappingMode::Direct;
  train(direct, train_ds, c_direct, "loss_mappers_direct.csv");
  save_model(ckpt("direct.ckpt"), direct);
  const DualModel cycle = need("full.ckpt");

  std::vector<Mesh> refs;
  for (std::size_t i = 0; i < test.size(); ++i) refs.push_back(test.mesh(i));
  const ReconstructionSummary rd = reconstruction_summary(direct, test.shapes, refs);
  const ReconstructionSummary rc = reconstruction_summary(cycle, test.shapes, refs);
  const double tail_direct = rd.el_p90 / rd.el_median, tail_cycle = rc.el_p90 / rc.el_median;
  {
    std::vector<AblationRow> rows;
    rows.push_back(ablation_row("full", cycle, test, pairs, g_pipe.interior));
    rows.push_back(ablation_row("edge-ae-no-lin", no_lin, test, pairs, g_pipe.interior));
    rows.push_back(ablation_row("direct-mapping", direct, test, pairs, g_pipe.interior));
    write_ablation_csv(g_work / "ablation.csv", rows);
  }
  const double secs = seconds_since(t0);
  Checks c;
  c.expect(var_nolin > var_lin, "L_lin removal");
  c.expect(tail_direct >= 5.0, "direct-loss tail");
  c.expect(secs < 1200.0, "runtime");
  return {c.ok, "edge-latent Var_EL without L_lin " + fmt("%.4g", var_nolin) + " > with " + fmt("%.4g", var_lin) +
                    ", direct-loss EL p90/median " + fmt("%.2f", tail_direct) + " >= 5 (cycle losses " +
                    fmt("%.2f", tail_cycle) + "), " + fmt("%.0f", secs) + " s < 1200 s" + c.failed.str()};
}

// ---------------------------------------------------------------------------
// Determinism through the command-line tool

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(DLSI_CLI) + " " + args + " >>" + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

Outcome criterion7() {
  const auto t0 = std::chrono::steady_clock::now();
  const std::string arch =
      " --set arch.enc_p_widths=32,32 --set arch.dec_p_widths=64 --set arch.enc_e_widths=64"
      " --set arch.dec_e_widths=64 --set arch.map_widths=32 --set arch.shape_latent=16"
      " --set arch.edge_latent=16 --set batch_size=8 --seed 5";
  std::vector<fs::path> dirs{g_work / "c7_run1", g_work / "c7_run2"};
  bool ran = true;
  for (const fs::path& d : dirs) {
    fs::remove_all(d);
    fs::create_directories(d);
    const std::string w = d.string() + "/";
    const fs::path log = d / "log.txt";
    for (const std::string& cmd : {
             "gen-data --count 24 --around 10 --along 8 --seed 3 --out " + w + "data",
             "train --set stage=shape-ae --set epochs=4 --set data.train=" + w + "data --set checkpoint.out=" + w +
                 "a.ckpt --set output.loss_csv=" + w + "a.csv" + arch,
             "train --set stage=edge-ae --set epochs=4 --set data.train=" + w + "data --set checkpoint.in=" + w +
                 "a.ckpt --set checkpoint.out=" + w + "b.ckpt --set output.loss_csv=" + w + "b.csv" + arch,
             "train --set stage=mappers --set epochs=4 --set data.train=" + w + "data --set checkpoint.in=" + w +
                 "b.ckpt --set checkpoint.out=" + w + "c.ckpt --set output.loss_csv=" + w + "c.csv" + arch,
             "evaluate --checkpoint " + w + "c.ckpt --data " + w + "data --anchors 6 --pairs 4 --nk 4 --steps 30 --jobs 2 --out " +
                 w + "table.csv --per-pair " + w + "pairs.csv",
             "interpolate --checkpoint " + w + "c.ckpt --source " + w + "data/mesh_00000.obj --target " + w +
                 "data/mesh_00001.obj --method gd-el --nk 4 --steps 30 --out " + w + "path",
             "evaluate --data " + w + "data --anchors 6 --pairs 4 --nk 4 --ablation full=" + w + "c.ckpt --out " + w +
                 "ablation.csv",
         }) {
      ran = ran && run_cli(cmd, log) == 0;
    }
  }
  std::size_t compared = 0, differing = 0;
  for (const auto& e : fs::recursive_directory_iterator(dirs[0])) {
    if (!e.is_regular_file() || e.path().filename() == "log.txt") continue;
    const fs::path rel = fs::relative(e.path(), dirs[0]);
    ++compared;
    if (!fs::exists(dirs[1] / rel) || slurp(e.path()) != slurp(dirs[1] / rel)) {
      ++differing;
      std::cerr << "  differs: " << rel.string() << '\n';
    }
  }
  const double secs = seconds_since(t0);
  const bool pass = ran && differing == 0 && compared > 0;
  return {pass, std::to_string(compared) + " output files (CSV, OBJ, checkpoints) compared across two runs, " +
                    std::to_string(differing) + " differ" + (ran ? "" : ", a command failed") + ", " +
                    fmt("%.0f", secs) + " s"};
}

}  // namespace

int main(int argc, char** argv) {
  mallopt(M_MMAP_MAX, 0);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  CLI::App app{"acceptance criteria"};
  int only = 0;
  std::string work = "acceptance_work";
  app.add_option("--only", only, "run a single criterion (1-7)")->check(CLI::Range(1, 7));
  app.add_option("--work", work, "directory for datasets, checkpoints and result CSVs")->capture_default_str();
  app.add_option("--shape-epochs", g_pipe.shape_epochs)->capture_default_str();
  app.add_option("--edge-epochs", g_pipe.edge_epochs)->capture_default_str();
  app.add_option("--mapper-epochs", g_pipe.mapper_epochs)->capture_default_str();
  app.add_option("--shape-lr", g_pipe.shape_lr)->capture_default_str();
  app.add_option("--edge-lr", g_pipe.edge_lr)->capture_default_str();
  app.add_option("--mapper-lr", g_pipe.mapper_lr)->capture_default_str();
  app.add_option("--gd-lr", g_pipe.gd.lr)->capture_default_str();
  app.add_option("--coord-lr", g_pipe.gd_coord.lr)->capture_default_str();
  app.add_option("--coord-steps", g_pipe.gd_coord.steps)->capture_default_str();
  CLI11_PARSE(app, argc, argv);
  g_work = fs::absolute(work);
  fs::create_directories(g_work);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient integrity", criterion1},      {"geometric invariances", criterion2},
      {"energy calculus", criterion3},         {"desk-scale pipeline", criterion4},
      {"robustness to corrupted input", criterion5}, {"ablations", criterion6},
      {"determinism", criterion7},
  };
  bool all = true;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (only && static_cast<std::size_t>(only) != i + 1) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    all = all && o.pass;
    std::cout << "criterion " << i + 1 << " " << (o.pass ? "PASS" : "FAIL") << "  " << criteria[i].first << ": "
              << o.detail << std::endl;
  }
  return all ? 0 : 1;
}
