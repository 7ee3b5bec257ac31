#include "hornn/commands.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "hornn/cost_model.hpp"
#include "hornn/errors.hpp"
#include "hornn/experiment.hpp"
#include "hornn/fsq.hpp"
#include "hornn/grad_lab.hpp"

namespace hornn {

namespace {

namespace fs = std::filesystem;

constexpr double kGradTolerance = 1e-6;

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

// Layer flags shared by count, flops and train.
struct LayerFlags {
  std::string kind = "rnn";
  std::size_t dx = 0;
  std::size_t dh = 0;
  std::size_t dp = 0;
  std::size_t n = 0;
  std::size_t m = 0;
  std::string activation;
  std::size_t layers = 1;
  bool freeze_scale = false;

  void attach(CLI::App* app) {
    app->add_option("--kind", kind, "cell kind (rnn, lstm, lstmp, hornn_relu, hornn_sigmoid, "
                                    "hornnp_relu, hornnp_sigmoid, resrnn; hornn/hornnp = relu)");
    app->add_option("--dx", dx, "input dim of the first layer");
    app->add_option("--dh", dh, "hidden dim");
    app->add_option("--dp", dp, "projection dim (projected kinds)");
    app->add_option("--n", n, "high-order lag (0 keeps the kind default)");
    app->add_option("--m", m, "shortcut lag (0 keeps the kind default)");
    app->add_option("--activation", activation, "sigmoid, relu, tanh or psigmoid");
    app->add_option("--layers", layers, "number of stacked identical layers");
    app->add_flag("--freeze-scale", freeze_scale, "keep the p-sigmoid scale fixed");
  }

  std::vector<CellConfig> build() const {
    if (layers == 0) throw ConfigError("--layers must be at least 1");
    const CellKind k = parse_cell_kind(kind);
    std::vector<CellConfig> out;
    std::size_t in = dx;
    for (std::size_t i = 0; i < layers; ++i) {
      CellConfig c = CellConfig::make(k, in, dh, dp);
      if (n) c.n = n;
      if (m) c.m = m;
      if (!activation.empty()) c.activation = parse_activation(activation);
      c.freeze_scale = freeze_scale;
      c.validate();
      out.push_back(c);
      in = c.output_dim();
    }
    validate_stack(out);
    return out;
  }
};

Json cost_json(const CostReport& r) {
  Json j;
  j["layers"] = Json::array();
  for (const LayerCost& l : r.layers) {
    Json e;
    e["kind"] = to_string(l.config.kind);
    e["d_x"] = l.config.d_x;
    e["d_h"] = l.config.d_h;
    e["d_p"] = l.config.d_p;
    e["n"] = l.config.n;
    e["m"] = l.config.m;
    e["activation"] = to_string(l.config.activation);
    e["params"] = l.params;
    e["madds"] = l.madds;
    if (l.scale_params) e["scale_params"] = l.scale_params;
    j["layers"].push_back(e);
  }
  j["params_recurrent"] = r.params_recurrent;
  j["params_display"] = format_millions(r.params_recurrent);
  j["madds_per_frame"] = r.madds_per_frame;
  if (r.reduction_ratio_vs_unprojected > 0.0) {
    j["reduction_ratio_vs_unprojected"] = r.reduction_ratio_vs_unprojected;
  }
  return j;
}

std::string cost_csv(const CostReport& r) {
  std::ostringstream s;
  s << "layer,kind,d_x,d_h,d_p,params,madds_per_frame\n";
  for (std::size_t i = 0; i < r.layers.size(); ++i) {
    const LayerCost& l = r.layers[i];
    s << i << ',' << to_string(l.config.kind) << ',' << l.config.d_x << ',' << l.config.d_h << ','
      << l.config.d_p << ',' << l.params << ',' << l.madds << '\n';
  }
  s << "total,,,,," << r.params_recurrent << ',' << r.madds_per_frame << '\n';
  return s.str();
}

// count and flops differ only in their default stdout format.
void add_cost_command(CLI::App& app, const char* name, const char* help, const char* default_format,
                      std::ostream& out) {
  auto* cmd = app.add_subcommand(name, help);
  auto flags = std::make_shared<LayerFlags>();
  auto config = std::make_shared<std::string>();
  auto out_dir = std::make_shared<std::string>();
  auto format = std::make_shared<std::string>(default_format);
  flags->attach(cmd);
  cmd->add_option("--config", *config, "experiment JSON; its layers replace the layer flags");
  cmd->add_option("--out", *out_dir, "directory for cost.json");
  cmd->add_option("--format", *format, "stdout format")->check(CLI::IsMember({"json", "csv"}));
  cmd->callback([=, &out] {
    const std::vector<CellConfig> layers =
        config->empty() ? flags->build() : load_experiment(*config).layers;
    const CostReport report = cost_report(layers);
    const Json j = cost_json(report);
    if (!out_dir->empty()) write_text(fs::path(*out_dir) / "cost.json", j.dump(2) + "\n");
    out << (*format == "json" ? j.dump(2) + "\n" : cost_csv(report));
  });
}

struct GradcheckFlags {
  std::string kind;
  std::size_t dx = 3;
  std::size_t dh = 4;
  std::size_t dp = 2;
  std::size_t length = 12;
  std::size_t classes = 3;
  std::size_t seeds = 3;
  bool corrupt = false;
  std::string out_dir;
};

int run_gradcheck(const GradcheckFlags& f, std::ostream& out) {
  if (f.dh > 16 || f.length > 32) {
    throw ConfigError("gradcheck is limited to d_h <= 16 and T <= 32");
  }
  if (f.seeds == 0) throw ConfigError("--seeds must be positive");
  std::vector<CellKind> kinds;
  if (f.kind.empty()) {
    kinds.assign(kAllCellKinds.begin(), kAllCellKinds.end());
  } else {
    kinds.push_back(parse_cell_kind(f.kind));
  }

  Json report;
  report["tolerance"] = kGradTolerance;
  report["results"] = Json::array();
  bool all_ok = true;
  for (CellKind k : kinds) {
    GradCheckOptions o;
    o.cell = CellConfig::make(k, f.dx, f.dh, f.dp);
    o.length = f.length;
    o.num_classes = f.classes;
    o.corrupt = f.corrupt;
    GradCheckResult worst;
    for (std::size_t s = 1; s <= f.seeds; ++s) {
      o.seed = s;
      const GradCheckResult r = finite_diff_check(o);
      if (s == 1 || r.max_rel_error > worst.max_rel_error) worst = r;
    }
    const bool ok = worst.max_rel_error < kGradTolerance;
    all_ok = all_ok && ok;
    Json line;
    line["kind"] = to_string(k);
    line["max_rel_err"] = worst.max_rel_error;
    out << line.dump() << "\n";
    line["worst_tensor"] = worst.worst_tensor;
    line["worst_index"] = worst.worst_index;
    line["checked"] = worst.checked;
    line["forward_mismatch"] = worst.forward_mismatch;
    line["passed"] = ok;
    report["results"].push_back(line);
  }
  report["passed"] = all_ok;
  if (!f.out_dir.empty()) write_text(fs::path(f.out_dir) / "gradcheck.json", report.dump(2) + "\n");
  return all_ok ? kExitOk : kExitRuntime;
}

struct TrainFlags {
  std::string config;
  std::string out_dir;
  std::string resume;
  LayerFlags layer;
  std::string task = "delayed_recall";
  std::size_t lag = 20;
  std::size_t classes = 4;
  std::size_t length = 60;
  std::size_t count = 100;
  std::size_t valid_count = 0;
  std::size_t test_count = 0;
  double noise = 0.1;
  std::size_t window = 3;
  std::uint64_t seed = 1;
  std::size_t epochs = 0;
  double lr = -1.0;
  std::string sample_mode;
  std::size_t unfold = 0;
  long delay = -1;
  std::size_t minibatch = 0;
  std::string schedule;
};

ExperimentConfig experiment_from_flags(const TrainFlags& f, CLI::App* cmd) {
  ExperimentConfig c;
  const auto given = [&](const char* name) { return cmd->count(name) > 0; };
  if (!f.config.empty()) {
    c = load_experiment(f.config);
  } else {
    TaskSpec t;
    t.kind = parse_task_kind(f.task);
    t.lag = f.lag;
    t.classes = f.classes;
    t.length = f.length;
    t.count = f.count;
    t.noise = f.noise;
    t.window = f.window;
    t.seed = f.seed;
    c.data.task = t;
    c.data.valid_count = f.valid_count;
    c.data.test_count = f.test_count;
    LayerFlags lf = f.layer;
    if (lf.dx == 0) lf.dx = t.frame_dim();
    if (lf.dh == 0) throw ConfigError("--dh is required without --config");
    c.layers = lf.build();
    c.seed = f.seed;
    c.train.seed = f.seed;
  }
  if (given("--seed") && !f.config.empty()) {
    c.seed = f.seed;
    c.train.seed = f.seed;
  }
  if (given("--out")) c.out_dir = f.out_dir;
  if (given("--epochs")) c.train.epochs = f.epochs;
  if (given("--lr")) c.train.learning_rate = f.lr;
  if (given("--sample-mode")) c.train.sample_mode = parse_sample_mode(f.sample_mode);
  if (given("--unfold")) c.train.unfold_steps = f.unfold;
  if (given("--delay")) {
    if (f.delay < 0) throw ConfigError("--delay must be non-negative");
    c.train.target_delay = static_cast<std::size_t>(f.delay);
  }
  if (given("--minibatch")) c.train.minibatch_frames = f.minibatch;
  if (given("--schedule")) c.train.newbob = f.schedule == "newbob";
  if (!(c.train.learning_rate >= 0.0)) throw ConfigError("learning rate must be non-negative");
  c.validate();
  return c;
}

int run_train(const TrainFlags& f, CLI::App* cmd, std::ostream& out) {
  ExperimentConfig config;
  TrainRun run;
  std::optional<Datasets> data;
  if (!f.resume.empty()) {
    const ModelFile file = load_model(f.resume);
    if (!file.state.contains("experiment")) throw FormatError(f.resume + ": not a checkpoint");
    config = experiment_from_json(file.state.at("experiment"));
    if (cmd->count("--epochs")) config.train.epochs = f.epochs;
    if (cmd->count("--out")) config.out_dir = f.out_dir;
    config.validate();
    run = resume_run(file);
    data = load_datasets(config);
  } else {
    config = experiment_from_flags(f, cmd);
    data = load_datasets(config);
    run = start_run(config, *data);
  }

  const fs::path dir = config.out_dir;
  fs::create_directories(dir);
  write_text(dir / "config.json", to_json(config).dump(2) + "\n");
  const auto checkpoint = [&](const TrainRun& r) {
    save_model(dir / "model.bin", r.model, checkpoint_state(r, config));
    write_text(dir / "train_log.csv", train_log_csv(r.log));
    return true;
  };
  continue_run(run, config, *data, checkpoint);
  checkpoint(run);

  Json summary;
  summary["epochs"] = run.log.size();
  if (!run.log.empty()) {
    summary["train_facc"] = run.log.back().train.frame_acc;
    summary["valid_facc"] = run.log.back().valid.frame_acc;
  }
  if (!data->test.empty()) {
    const EpochStats test = evaluate(run.model, data->test, config.train.parallel);
    summary["test_facc"] = test.frame_acc;
    summary["test_ce"] = test.mean_ce;
  }
  out << summary.dump() << "\n";
  return kExitOk;
}

struct EvalFlags {
  std::string model;
  std::string data;
  long delay = -1;
  std::string out_dir;
};

int run_eval(const EvalFlags& f, std::ostream& out) {
  const ModelFile file = load_model(f.model);
  FeatureConfig features;
  if (file.state.contains("experiment")) {
    features = experiment_from_json(file.state.at("experiment")).features();
  }
  if (f.delay >= 0) features.delay = static_cast<std::size_t>(f.delay);
  const std::vector<SequenceBatch> raw = read_manifest(f.data);
  for (const SequenceBatch& b : raw) {
    const std::size_t dim = b.dim() * (features.deltas ? 2 : 1);
    if (dim != file.model.input_dim() || b.num_classes != file.model.num_classes()) {
      throw DimensionError("sequence '" + b.utterance_id + "' has D=" + std::to_string(b.dim()) +
                           ", C=" + std::to_string(b.num_classes) + " but the model expects D=" +
                           std::to_string(file.model.input_dim()) +
                           ", C=" + std::to_string(file.model.num_classes()));
    }
  }
  const std::vector<SequenceBatch> data = prepare(raw, features);
  const EpochStats s = evaluate(file.model, data);
  Json j;
  j["frame_acc"] = s.frame_acc;
  j["mean_ce"] = s.mean_ce;
  j["frames"] = s.frames;
  j["utterances"] = data.size();
  if (!f.out_dir.empty()) write_text(fs::path(f.out_dir) / "eval.json", j.dump(2) + "\n");
  out << j.dump() << "\n";
  return kExitOk;
}

struct LagFlags {
  std::vector<std::string> kinds{"rnn", "hornn_sigmoid"};
  std::size_t dx = 8;
  std::size_t dh = 32;
  std::size_t seeds = 5;
  std::size_t max_lag = 19;
  std::size_t length = 40;
  double init_range = 0.05;
  std::string out_dir;
};

// "kind" or "kind:activation".
CellConfig lag_config(const std::string& spec, const LagFlags& f) {
  const auto colon = spec.find(':');
  CellConfig c = CellConfig::make(parse_cell_kind(spec.substr(0, colon)), f.dx, f.dh, f.dh / 2);
  if (colon != std::string::npos) c.activation = parse_activation(spec.substr(colon + 1));
  c.validate();
  return c;
}

int run_lagcurve(const LagFlags& f, std::ostream& out) {
  if (f.max_lag >= f.length) {
    throw ConfigError("lagcurve: K=" + std::to_string(f.max_lag) + " must be smaller than T=" +
                      std::to_string(f.length));
  }
  DecayCompareOptions o;
  for (const std::string& k : f.kinds) o.configs.push_back(lag_config(k, f));
  for (std::size_t s = 1; s <= f.seeds; ++s) o.seeds.push_back(s);
  o.max_lag = f.max_lag;
  o.length = f.length;
  o.init_range = f.init_range;
  const DecayComparison cmp = decay_compare(o);

  std::ostringstream csv;
  csv << "kind,seed,k,g_k\n";
  Json summary;
  summary["max_lag"] = f.max_lag;
  summary["length"] = f.length;
  summary["seeds"] = cmp.seeds;
  summary["kinds"] = Json::array();
  for (const DecayRow& row : cmp.rows) {
    Json r;
    r["kind"] = row.label;
    r["median_decay_rate"] = std::isnan(row.median_rate) ? Json(nullptr) : Json(row.median_rate);
    r["decay_rates"] = Json::array();
    for (std::size_t s = 0; s < row.curves.size(); ++s) {
      const LagCurve& c = row.curves[s];
      for (std::size_t k = 0; k < c.g.size(); ++k) {
        csv << row.label << ',' << cmp.seeds[s] << ',' << k << ',' << fmt("%.17g", c.g[k]) << '\n';
      }
      r["decay_rates"].push_back(c.degenerate ? Json(nullptr) : Json(c.decay_rate));
    }
    r["degenerate_curves"] = row.degenerate;
    summary["kinds"].push_back(r);
  }
  if (cmp.hornn_no_faster_than_rnn) {
    summary["hornn_decay_le_rnn"] = *cmp.hornn_no_faster_than_rnn;
  }
  if (!f.out_dir.empty()) {
    write_text(fs::path(f.out_dir) / "lagcurve.csv", csv.str());
    write_text(fs::path(f.out_dir) / "lagcurve_summary.json", summary.dump(2) + "\n");
  }
  out << summary.dump() << "\n";
  return kExitOk;
}

struct GenFlags {
  std::string task = "delayed_recall";
  TaskSpec spec;
  std::string out_dir;
};

int run_gen_data(GenFlags f, std::ostream& out) {
  f.spec.kind = parse_task_kind(f.task);
  if (f.out_dir.empty()) throw ConfigError("gen-data needs --out");
  const std::vector<SequenceBatch> data = generate(f.spec);
  const fs::path manifest = write_dataset(f.out_dir, data);
  Json j;
  j["manifest"] = manifest.string();
  j["utterances"] = data.size();
  j["task"] = to_json(f.spec);
  out << j.dump() << "\n";
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Recurrent cell cost model, gradient diagnostics and training."};
  app.name("hornn_lab");
  app.require_subcommand(1);
  int status = kExitOk;

  add_cost_command(app, "count", "parameter and cost report", "json", out);
  add_cost_command(app, "flops", "multiply-adds per frame", "csv", out);

  GradcheckFlags gf;
  auto* gc = app.add_subcommand("gradcheck", "finite-difference check of BPTT gradients");
  gc->add_option("--kind", gf.kind, "single kind (default: all eight)");
  gc->add_option("--dx", gf.dx);
  gc->add_option("--dh", gf.dh);
  gc->add_option("--dp", gf.dp);
  gc->add_option("--length", gf.length, "sequence length T");
  gc->add_option("--classes", gf.classes);
  gc->add_option("--seeds", gf.seeds, "seeds 1..N; the worst error is reported");
  gc->add_flag("--corrupt", gf.corrupt, "perturb one analytic entry (harness self-test)");
  gc->add_option("--out", gf.out_dir, "directory for gradcheck.json");
  gc->callback([&] { status = run_gradcheck(gf, out); });

  TrainFlags tf;
  auto* tr = app.add_subcommand("train", "train a model; writes model.bin and train_log.csv");
  tr->add_option("--config", tf.config, "experiment JSON");
  tr->add_option("--out", tf.out_dir, "output directory");
  tr->add_option("--resume", tf.resume, "continue from a model.bin checkpoint");
  tf.layer.attach(tr);
  tr->add_option("--task", tf.task);
  tr->add_option("--lag", tf.lag);
  tr->add_option("--classes", tf.classes);
  tr->add_option("--length", tf.length);
  tr->add_option("--count", tf.count);
  tr->add_option("--valid-count", tf.valid_count);
  tr->add_option("--test-count", tf.test_count);
  tr->add_option("--noise", tf.noise);
  tr->add_option("--window", tf.window);
  tr->add_option("--seed", tf.seed);
  tr->add_option("--epochs", tf.epochs);
  tr->add_option("--lr", tf.lr);
  tr->add_option("--sample-mode", tf.sample_mode, "frame_window or utterance");
  tr->add_option("--unfold", tf.unfold);
  tr->add_option("--delay", tf.delay, "target delay in frames");
  tr->add_option("--minibatch", tf.minibatch, "labeled frames per update");
  tr->add_option("--schedule", tf.schedule, "newbob (default) or fixed")
      ->check(CLI::IsMember({"newbob", "fixed"}));
  tr->callback([&] { status = run_train(tf, tr, out); });

  EvalFlags ef;
  auto* ev = app.add_subcommand("eval", "frame accuracy and cross-entropy of a model");
  ev->add_option("--model", ef.model)->required();
  ev->add_option("--data", ef.data, "FSQ1 manifest")->required();
  ev->add_option("--delay", ef.delay, "override the target delay stored with the model");
  ev->add_option("--out", ef.out_dir, "directory for eval.json");
  ev->callback([&] { status = run_eval(ef, out); });

  LagFlags lf;
  auto* lc = app.add_subcommand("lagcurve", "gradient norm versus lag");
  lc->add_option("--kinds", lf.kinds, "kind or kind:activation, repeatable")->delimiter(',');
  lc->add_option("--dx", lf.dx);
  lc->add_option("--dh", lf.dh);
  lc->add_option("--seeds", lf.seeds);
  lc->add_option("--K", lf.max_lag, "largest lag");
  lc->add_option("--T", lf.length, "probe length");
  lc->add_option("--init-range", lf.init_range);
  lc->add_option("--out", lf.out_dir, "directory for lagcurve.csv and lagcurve_summary.json");
  lc->callback([&] { status = run_lagcurve(lf, out); });

  GenFlags gd;
  auto* gen = app.add_subcommand("gen-data", "write a synthetic task as FSQ1 files");
  gen->add_option("--task", gd.task);
  gen->add_option("--lag", gd.spec.lag);
  gen->add_option("--classes", gd.spec.classes);
  gen->add_option("--window", gd.spec.window);
  gen->add_option("--states", gd.spec.states);
  gen->add_option("--emission-dim", gd.spec.emission_dim);
  gen->add_option("--length", gd.spec.length);
  gen->add_option("--count", gd.spec.count);
  gen->add_option("--seed", gd.spec.seed);
  gen->add_option("--noise", gd.spec.noise);
  gen->add_option("--utterances-per-segment", gd.spec.utterances_per_segment);
  gen->add_option("--out", gd.out_dir, "output directory");
  gen->callback([&] { status = run_gen_data(gd, out); });

  try {
    configure_threads_from_env();
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << "\n";
    return kExitRuntime;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return status;
}

}  // namespace hornn
