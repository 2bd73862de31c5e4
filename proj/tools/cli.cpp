#include "cli.hpp"

#include "clude/config.hpp"
#include "clude/dataset.hpp"
#include "clude/errors.hpp"
#include "clude/evalkit.hpp"
#include "clude/gradsuite.hpp"
#include "clude/model.hpp"
#include "clude/objective.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace clude::cli {
namespace fs = std::filesystem;

namespace {

struct Common {
  std::string preset;
  std::string config_file;
  std::vector<std::string> sets;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--preset", c.preset, "desk | kitti | void | clude-dagger | clude-dagger-ce");
  cmd->add_option("--config", c.config_file, "key = value file");
  cmd->add_option("--set", c.sets, "key=value override (repeatable)");
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void apply_env_seed(RunConfig& cfg) {
  if (const char* s = std::getenv("CLUDE_SEED"); s && *s) {
    try {
      apply_setting(cfg, "seed", s);
    } catch (const ConfigError& e) {
      throw ConfigError(std::string("CLUDE_SEED: ") + e.what());
    }
  }
}

// preset, then config file, then --set overrides, then CLUDE_SEED.
RunConfig resolve(const Common& c) {
  RunConfig cfg = make_preset(c.preset.empty() ? "desk" : c.preset);
  if (!c.config_file.empty()) apply_config_text(cfg, read_text(c.config_file));
  for (const std::string& s : c.sets) {
    const auto [k, v] = split_assignment(s);
    apply_setting(cfg, k, v);
  }
  apply_env_seed(cfg);
  validate(cfg);
  return cfg;
}

RunConfig checkpoint_config(const fs::path& path) {
  RunConfig cfg = make_preset("desk");
  apply_config_text(cfg, read_checkpoint_config(path));
  validate(cfg);
  return cfg;
}

void require_same_range(const DepthRange& model, const DepthRange& data) {
  if (model.d_min != data.d_min || model.d_max != data.d_max) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "model range [%g, %g] m does not match dataset range [%g, %g] m", model.d_min,
                  model.d_max, data.d_min, data.d_max);
    throw ConfigError(buf);
  }
}

void require_parent(const fs::path& path) {
  const fs::path parent = path.has_parent_path() ? path.parent_path() : fs::path(".");
  if (!fs::is_directory(parent)) throw IoError("directory does not exist: " + parent.string());
}

// ---------------------------------------------------------------- synth

struct SynthArgs {
  Common common;
  std::string out;
};

int cmd_synth(const SynthArgs& a, std::ostream& out) {
  const RunConfig cfg = resolve(a.common);
  const Manifest m = write_dataset(cfg, a.out);
  out << "wrote " << m.entries.size() << " scenes to " << a.out << "\n";
  return kOk;
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  Common common;
  std::string data, out, loss_csv, resume, stage = "all";
  Index log_every = 100;
};

int cmd_train(const TrainArgs& a, std::ostream& out) {
  RunConfig cfg = resolve(a.common);
  if (a.stage == "1") cfg.train.stage2_steps = 0;
  const Manifest m = read_manifest(a.data);
  require_same_range(cfg.model.range, m.scene.range);
  const fs::path ckpt = a.out;
  const fs::path csv = a.loss_csv.empty() ? fs::path(a.out + ".loss.csv") : fs::path(a.loss_csv);
  require_parent(ckpt);
  require_parent(csv);
  if (!a.resume.empty() && !fs::exists(a.resume)) throw IoError("cannot read " + a.resume);

  std::vector<TrainSample> train;
  for (const SceneSample& s : load_split(m, false)) train.push_back({s.sparse, s.rgb, s.gt});
  if (train.empty()) throw DataError("train: the dataset has no training scenes");

  CludeModel model(cfg.model, cfg.seed);
  TrainConfig tc = cfg.train;
  tc.seed = cfg.seed;
  Trainer trainer(model, tc);
  if (!a.resume.empty()) {
    trainer.load_checkpoint(a.resume);
    out << "resumed at step " << trainer.next_step() << "\n";
  }
  double acc = 0.0;
  Index n = 0;
  trainer.run(train, [&](const LossRecord& r) {
    acc += r.total;
    ++n;
    if (a.log_every > 0 && (n == a.log_every || r.step + 1 == trainer.total_steps())) {
      char buf[128];
      std::snprintf(buf, sizeof(buf), "step %lld  mean loss %.4f\n", static_cast<long long>(r.step), acc / static_cast<double>(n));
      out << buf << std::flush;
      acc = 0.0;
      n = 0;
    }
  });
  trainer.save_checkpoint(ckpt, to_config_text(cfg));
  write_loss_csv(csv, trainer.log());
  out << "checkpoint " << ckpt.string() << "\nloss log " << csv.string() << "\n";
  return kOk;
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
  std::string checkpoint, data, split = "all", subset = "test", baseline = "model", csv, density;
  double intervals = 0.0;
  bool zero_cue = false;
};

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(cell, &used));
      if (used != cell.size()) throw std::invalid_argument(cell);
    } catch (const std::exception&) {
      throw ConfigError("--density: bad value '" + cell + "'");
    }
  }
  return out;
}

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  if (a.baseline == "model" && a.checkpoint.empty()) throw ConfigError("eval: --checkpoint is required");
  if (a.intervals < 0.0) throw ConfigError("eval: --intervals must be >= 0");
  const std::vector<double> densities = a.density.empty() ? std::vector<double>{} : parse_list(a.density);
  const Manifest m = read_manifest(a.data);
  std::optional<CludeModel> model;
  if (a.baseline == "model") {
    const RunConfig cfg = checkpoint_config(a.checkpoint);
    require_same_range(cfg.model.range, m.scene.range);
    model.emplace(cfg.model, cfg.seed);
    load_model(a.checkpoint, *model);
  }
  if (!a.csv.empty()) require_parent(a.csv);
  ForwardOptions opts;
  opts.zero_cue = a.zero_cue;
  const Predictor predict = [&](const SparseDepthMap& sparse, const RgbImage& rgb) -> DepthMap {
    if (a.baseline == "nearest") return nearest_valid_fill(sparse);
    return model->predict(sparse, rgb, opts).depth;
  };

  std::vector<SceneSample> scenes;
  for (const ManifestEntry& e : m.entries)
    if (a.subset == "all" || e.test == (a.subset == "test")) scenes.push_back(load_scene(m, e));
  if (scenes.empty()) throw DataError("eval: no scenes in subset '" + a.subset + "'");

  std::vector<MetricReport> all, boundary, inner;
  std::vector<double> edges;
  if (a.intervals > 0.0) edges = uniform_edges(m.scene.range.d_min, m.scene.range.d_max, a.intervals);
  std::vector<std::vector<double>> bucket_abs(edges.empty() ? 0 : edges.size() - 1);
  std::vector<Index> bucket_n(bucket_abs.size(), 0);
  for (const SceneSample& s : scenes) {
    const DepthMap pred = a.baseline == "gt" ? DepthMap(s.gt) : predict(s.sparse, s.rgb);
    all.push_back(compute_metrics(pred, s.gt));
    if (a.split == "boundary") {
      const SplitReport r = split_eval(pred, s.gt, s.labels);
      if (r.boundary) boundary.push_back(*r.boundary);
      if (r.non_boundary) inner.push_back(*r.non_boundary);
    }
    if (!edges.empty()) {
      const auto rows = interval_mae(pred, s.gt, edges);
      for (std::size_t k = 0; k < rows.size(); ++k) {
        if (!rows[k].mae) continue;
        bucket_abs[k].push_back(*rows[k].mae * static_cast<double>(rows[k].count));
        bucket_n[k] += rows[k].count;
      }
    }
  }

  std::vector<std::pair<std::string, std::optional<MetricReport>>> table{{"all", mean_report(all)}};
  if (a.split == "boundary") {
    table.emplace_back("boundary", boundary.empty() ? std::nullopt : std::optional(mean_report(boundary)));
    table.emplace_back("non-boundary", inner.empty() ? std::nullopt : std::optional(mean_report(inner)));
  }
  out << "scenes: " << scenes.size() << " (" << a.subset << ")\n" << format_metrics_table(table);

  std::vector<IntervalRow> interval_rows;
  for (std::size_t k = 0; k < bucket_abs.size(); ++k) {
    IntervalRow r{edges[k], edges[k + 1], std::nullopt, bucket_n[k]};
    if (bucket_n[k] > 0) {
      double sum = 0.0;
      for (double v : bucket_abs[k]) sum += v;
      r.mae = sum / static_cast<double>(bucket_n[k]);
    }
    interval_rows.push_back(r);
  }
  if (!interval_rows.empty()) out << "\n" << format_interval_table(interval_rows);

  std::vector<DensityRow> sweep;
  if (!densities.empty()) {
    std::vector<EvalScene> es;
    for (const SceneSample& s : scenes) es.push_back({s.rgb, s.gt, s.labels});
    sweep = density_sweep(predict, es, densities, 0);
    std::vector<std::pair<std::string, std::optional<MetricReport>>> rows;
    for (const DensityRow& d : sweep) {
      char label[32];
      std::snprintf(label, sizeof(label), "density %g", d.density);
      rows.emplace_back(label, d.report);
    }
    out << "\n" << format_metrics_table(rows);
  }

  if (!a.csv.empty()) {
    std::ofstream f(a.csv);
    f << metrics_csv_header();
    for (const auto& [label, r] : table)
      if (r) f << metrics_csv_row(label, *r);
    for (const DensityRow& d : sweep) f << metrics_csv_row("density " + std::to_string(d.density), d.report);
    if (!interval_rows.empty()) f << "\n" << interval_csv(interval_rows);
    if (!f) throw IoError("cannot write " + a.csv);
  }
  return kOk;
}

// ---------------------------------------------------------------- infer

struct InferArgs {
  std::string checkpoint, sparse, rgb, out, dump_stages;
};

int cmd_infer(const InferArgs& a, std::ostream& out) {
  const RunConfig cfg = checkpoint_config(a.checkpoint);
  const SparseDepthMap sparse = load_depth_png(a.sparse);
  const RgbImage rgb = load_rgb_png(a.rgb);
  if (sparse.height() != rgb.height() || sparse.width() != rgb.width()) {
    throw IoError("infer: sparse map is " + std::to_string(sparse.height()) + "x" + std::to_string(sparse.width()) +
                  " but the RGB image is " + std::to_string(rgb.height()) + "x" + std::to_string(rgb.width()));
  }
  if (sparse.height() % 8 != 0 || sparse.width() % 8 != 0) {
    throw DataError("infer: image size must be divisible by 8");
  }
  require_parent(a.out);
  if (!a.dump_stages.empty()) {
    std::error_code ec;
    fs::create_directories(a.dump_stages, ec);
    if (!fs::is_directory(a.dump_stages)) throw IoError("cannot create " + a.dump_stages);
  }
  CludeModel model(cfg.model, cfg.seed);
  load_model(a.checkpoint, model);
  const Prediction p = model.predict(sparse, rgb);
  save_depth_png(a.out, p.depth);
  out << "wrote " << a.out << "\n";
  if (!a.dump_stages.empty()) {
    const fs::path dir = a.dump_stages;
    for (std::size_t i = 0; i < p.stages.size(); ++i) {
      save_depth_png(dir / ("stage_d" + std::to_string(i + 1) + ".png"), p.stages[i].cwiseMax(0.0));
    }
    if (p.corrected_sparse) save_depth_png(dir / "corrected_sparse_s5.png", *p.corrected_sparse);
    out << "stages in " << dir.string() << "\n";
  }
  return kOk;
}

// ---------------------------------------------------------------- gradcheck

struct GradArgs {
  double corrupt = 0.0;
  int points = 20;
  bool no_pipeline = false;
};

int cmd_gradcheck(const GradArgs& a, std::ostream& out) {
  if (a.points <= 0) throw ConfigError("gradcheck: --points must be positive");
  SuiteOptions o;
  o.corrupt = a.corrupt;
  o.points = a.points;
  o.pipeline = !a.no_pipeline;
  out << "precision float64, central differences, step " << o.step << "\n";
  double worst = 0.0;
  bool ok = true;
  for (const SuiteResult& r : run_gradient_suite(o)) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%-4s %-26s max rel err %.3e (tol %.0e) %s\n", r.passed() ? "ok" : "FAIL",
                  r.name.c_str(), r.max_rel_error, r.tolerance, r.worst.c_str());
    out << buf;
    worst = std::max(worst, r.max_rel_error);
    ok = ok && r.passed();
  }
  char buf[96];
  std::snprintf(buf, sizeof(buf), "%s: worst relative error %.3e\n", ok ? "PASS" : "FAIL", worst);
  out << buf;
  return ok ? kOk : kNumericError;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Clustering-based depth completion", "clude"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "write a synthetic dataset");
  add_common(s, synth.common);
  s->add_option("--out", synth.out, "output directory")->required();

  TrainArgs train;
  auto* t = app.add_subcommand("train", "two-stage training");
  add_common(t, train.common);
  t->add_option("--data", train.data, "dataset directory or manifest")->required();
  t->add_option("--out", train.out, "checkpoint path")->required();
  t->add_option("--loss-csv", train.loss_csv, "loss log (default: <out>.loss.csv)");
  t->add_option("--resume", train.resume, "continue from a training checkpoint");
  t->add_option("--stage", train.stage, "1 (skip the prune block) or all")->check(CLI::IsMember({"1", "all"}));
  t->add_option("--log-every", train.log_every, "steps between progress lines");

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "metrics on a dataset split");
  e->add_option("--checkpoint", ev.checkpoint, "model checkpoint");
  e->add_option("--data", ev.data, "dataset directory or manifest")->required();
  e->add_option("--subset", ev.subset, "test | train | all")->check(CLI::IsMember({"test", "train", "all"}));
  e->add_option("--split", ev.split, "all | boundary")->check(CLI::IsMember({"all", "boundary"}));
  e->add_option("--intervals", ev.intervals, "per-interval MAE with this bucket width in meters");
  e->add_option("--density", ev.density, "comma-separated densities for a sweep, descending");
  e->add_option("--baseline", ev.baseline, "model | nearest | gt")->check(CLI::IsMember({"model", "nearest", "gt"}));
  e->add_flag("--zero-cue", ev.zero_cue, "feed zero depth cues");
  e->add_option("--csv", ev.csv, "also write the reports as CSV");

  InferArgs inf;
  auto* i = app.add_subcommand("infer", "complete one sparse map");
  i->add_option("--checkpoint", inf.checkpoint)->required();
  i->add_option("--sparse", inf.sparse, "16-bit depth PNG")->required();
  i->add_option("--rgb", inf.rgb, "RGB PNG")->required();
  i->add_option("--out", inf.out, "output 16-bit depth PNG")->required();
  i->add_option("--dump-stages", inf.dump_stages, "directory for D1..D5 and S5");

  GradArgs gc;
  auto* g = app.add_subcommand("gradcheck", "finite-difference gradient suite");
  g->add_option("--corrupt", gc.corrupt, "add this to every analytic gradient (checker self-test)");
  g->add_option("--points", gc.points, "random points per op");
  g->add_flag("--no-pipeline", gc.no_pipeline, "skip the end-to-end micro pipeline");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& ex) {
    const int code = app.exit(ex, out, err);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (s->parsed()) return cmd_synth(synth, out);
    if (t->parsed()) return cmd_train(train, out);
    if (e->parsed()) return cmd_eval(ev, out);
    if (i->parsed()) return cmd_infer(inf, out);
    if (g->parsed()) return cmd_gradcheck(gc, out);
  } catch (const ConfigError& ex) {
    err << "config error: " << ex.what() << "\n";
    return kConfigError;
  } catch (const NumericError& ex) {
    err << "numeric failure: " << ex.what() << "\n";
    return kNumericError;
  } catch (const DataError& ex) {
    err << "data error: " << ex.what() << "\n";
    return kDataError;
  } catch (const IoError& ex) {
    err << "i/o error: " << ex.what() << "\n";
    return kDataError;
  } catch (const ContractViolation& ex) {
    err << "data error: " << ex.what() << "\n";
    return kDataError;
  }
  return kConfigError;
}

}  // namespace clude::cli
