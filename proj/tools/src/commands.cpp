#include "catgcn_cli/commands.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "catgcn/checkpoint.hpp"
#include "catgcn/dataset.hpp"
#include "catgcn/error.hpp"
#include "catgcn/parallel.hpp"
#include "catgcn/synthetic.hpp"
#include "catgcn/verify.hpp"
#include "catgcn/version.hpp"
#include "json.hpp"

namespace catgcn::cli {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

struct DataPaths {
  std::string edges, features, labels;

  void add_to(CLI::App& cmd) {
    cmd.add_option("--edges", edges, "Edge list, one 'u v' pair per line");
    cmd.add_option("--features", features, "Per-node categorical features");
    cmd.add_option("--labels", labels, "Node labels, one 'node class' pair per line");
  }
  bool complete() const { return !edges.empty() && !features.empty() && !labels.empty(); }
};

// Every config key exposed as a flag (underscores become dashes), plus an
// optional --config key=value file. Flags win over the file.
struct ConfigFlags {
  std::string config_file;
  std::map<std::string, std::string> values;
  std::map<std::string, CLI::Option*> options;

  void add_to(CLI::App& cmd) {
    cmd.add_option("--config", config_file, "key=value file with config defaults");
    for (std::string_view key : config_keys()) {
      std::string flag = "--" + std::string(key);
      std::replace(flag.begin(), flag.end(), '_', '-');
      if (key == "learning_rate") flag += ",--lr";
      std::string& slot = values[std::string(key)];
      options[std::string(key)] = cmd.add_option(flag, slot);
    }
  }

  TrainConfig resolve() const {
    TrainConfig c;
    if (!config_file.empty()) {
      for (const auto& [key, value] : read_settings_file(config_file)) apply_setting(c, key, value);
    }
    for (const auto& [key, opt] : options)
      if (opt->count() > 0) apply_setting(c, key, values.at(key));
    c.validate();
    return c;
  }
};

std::string hex64(std::uint64_t v) {
  char buf[19];
  std::snprintf(buf, sizeof buf, "0x%016llx", static_cast<unsigned long long>(v));
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw InputError("cannot open " + path.string() + " for writing");
  out << text << '\n';
}

ordered_json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  try {
    return ordered_json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw InputError(path.string() + ": " + e.what());
  }
}

ordered_json metrics_json(const Metrics& m, std::size_t best_epoch) {
  return {{"accuracy", m.accuracy}, {"macro_f1", m.macro_f1}, {"best_epoch", best_epoch}};
}

std::string fmt(double v, int precision = 4) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(precision) << v;
  return s.str();
}

// --- train ------------------------------------------------------------------

struct TrainArgs {
  DataPaths data;
  ConfigFlags config;
  std::string out_dir = "run";
  std::string replay;
  std::size_t jobs = 1;
  bool log_timing = false;
};

int cmd_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  TrainConfig config;
  DataPaths paths = a.data;
  std::optional<std::string> expected_fingerprint;
  std::size_t jobs = a.jobs;
  bool log_timing = a.log_timing;
  if (!a.replay.empty()) {
    const ordered_json m = read_json_file(a.replay);
    try {
      config = train_config_from_json(m.at("config").dump());
      paths.edges = m.at("dataset").at("edges").get<std::string>();
      paths.features = m.at("dataset").at("features").get<std::string>();
      paths.labels = m.at("dataset").at("labels").get<std::string>();
      expected_fingerprint = m.at("dataset").at("fingerprint").get<std::string>();
      jobs = m.value("jobs", jobs);
      log_timing = m.value("log_timing", log_timing);
    } catch (const nlohmann::json::exception& e) {
      throw InputError("manifest " + a.replay + ": " + e.what());
    }
    config.validate();
  } else {
    if (!a.data.complete()) throw ContractError("train needs --edges, --features and --labels (or --replay)");
    config = a.config.resolve();
  }

  RawDataset raw = load_dataset(paths.edges, paths.features, paths.labels);
  const std::uint64_t fp = fingerprint(raw);
  if (expected_fingerprint && *expected_fingerprint != hex64(fp)) {
    throw InputError("dataset fingerprint " + hex64(fp) + " does not match the manifest's " + *expected_fingerprint);
  }
  set_worker_count(jobs);
  const Dataset data = prepare_dataset(std::move(raw), config.n_f, config.seed);

  const fs::path dir = a.out_dir;
  fs::create_directories(dir);
  const fs::path ckpt_path = dir / "checkpoint.bin";
  const fs::path epochs_path = dir / "epochs.jsonl";
  const fs::path metrics_path = dir / "metrics.json";
  const fs::path manifest_path = dir / "manifest.json";

  ordered_json manifest;
  manifest["version"] = kVersion;
  manifest["config"] = ordered_json::parse(to_json(config));
  manifest["seed"] = config.seed;
  manifest["jobs"] = jobs;
  manifest["log_timing"] = log_timing;
  manifest["dataset"] = {{"edges", fs::absolute(paths.edges).string()},
                         {"features", fs::absolute(paths.features).string()},
                         {"labels", fs::absolute(paths.labels).string()},
                         {"fingerprint", hex64(fp)}};
  manifest["artifacts"] = {{"checkpoint", fs::absolute(ckpt_path).string()},
                           {"epochs", fs::absolute(epochs_path).string()},
                           {"metrics", fs::absolute(metrics_path).string()}};
  write_text(manifest_path, manifest.dump(2));

  std::ofstream epochs(epochs_path, std::ios::trunc);
  if (!epochs) throw InputError("cannot open " + epochs_path.string() + " for writing");
  const TrainResult result = train(config, data, [&](const EpochRecord& r) {
    epochs << to_json_line(r, log_timing) << '\n';
    epochs.flush();
  });

  const ModelConfig mcfg = config.model_config();
  const Metrics test = evaluate_params(result.best_params, data, mcfg, data.split.test_ids);
  Checkpoint ckpt;
  ckpt.config = config;
  ckpt.params = result.best_params;
  ckpt.dataset_fingerprint = fp;
  ckpt.best_epoch = result.best_epoch;
  save_checkpoint(ckpt_path, ckpt);

  const ordered_json metrics = metrics_json(test, result.best_epoch);
  ordered_json full = metrics;
  full["val_accuracy"] = result.best_val.accuracy;
  full["val_macro_f1"] = result.best_val.macro_f1;
  full["epochs_run"] = result.epochs.size();
  write_text(metrics_path, full.dump(2));

  out << metrics.dump() << '\n';
  err << "trained " << result.epochs.size() << " epochs on " << data.num_nodes() << " nodes; best epoch "
      << result.best_epoch << " (val macro-F1 " << fmt(result.best_val.macro_f1) << "), test accuracy "
      << fmt(test.accuracy) << ", test macro-F1 " << fmt(test.macro_f1) << "\nartifacts in " << dir.string()
      << '\n';
  return kOk;
}

// --- eval -------------------------------------------------------------------

struct EvalArgs {
  DataPaths data;
  std::string checkpoint;
  std::size_t jobs = 1;
};

int cmd_eval(const EvalArgs& a, std::ostream& out, std::ostream& err) {
  if (!a.data.complete()) throw ContractError("eval needs --edges, --features and --labels");
  const Checkpoint ckpt = load_checkpoint(a.checkpoint);
  RawDataset raw = load_dataset(a.data.edges, a.data.features, a.data.labels);
  const std::uint64_t fp = fingerprint(raw);
  if (fp != ckpt.dataset_fingerprint) {
    throw InputError("dataset fingerprint " + hex64(fp) + " does not match the checkpoint's " +
                     hex64(ckpt.dataset_fingerprint));
  }
  set_worker_count(a.jobs);
  const Dataset data = prepare_dataset(std::move(raw), ckpt.config.n_f, ckpt.config.seed);
  const Metrics test = evaluate_params(ckpt.params, data, ckpt.config.model_config(), data.split.test_ids);
  out << metrics_json(test, ckpt.best_epoch).dump() << '\n';
  err << "test accuracy " << fmt(test.accuracy) << ", test macro-F1 " << fmt(test.macro_f1) << " on "
      << data.split.test_ids.size() << " nodes\n";
  return kOk;
}

// --- grid -------------------------------------------------------------------

struct GridArgs {
  DataPaths data;
  ConfigFlags config;
  GridAxes axes;
  std::size_t jobs = 1;
  bool list_cells = false;
  std::string results;
};

int cmd_grid(const GridArgs& a, std::ostream& out, std::ostream& err) {
  const TrainConfig base = a.config.resolve();
  const std::vector<TrainConfig> cells = expand_grid(base, a.axes);
  if (a.list_cells) {
    ordered_json j;
    j["cell_count"] = cells.size();
    ordered_json list = ordered_json::array();
    for (const TrainConfig& c : cells) list.push_back(ordered_json::parse(to_json(c)));
    j["cells"] = std::move(list);
    out << j.dump() << '\n';
    err << cells.size() << " grid cells\n";
    return kOk;
  }
  if (!a.data.complete()) throw ContractError("grid needs --edges, --features and --labels");
  const Dataset data = prepare_dataset(load_dataset(a.data.edges, a.data.features, a.data.labels), base.n_f, base.seed);
  const GridResult result = grid_search(data, base, a.axes, a.jobs);
  const std::string table = to_json(result);
  if (!a.results.empty()) write_text(a.results, table);

  std::size_t failed = 0;
  for (const GridCell& c : result.cells) failed += c.failed ? 1 : 0;
  if (!result.best_index) {
    err << "all " << result.cells.size() << " grid cells diverged\n";
    return kDivergence;
  }
  const GridCell& best = result.cells[*result.best_index];
  ordered_json j;
  j["best_index"] = *result.best_index;
  j["config"] = ordered_json::parse(to_json(best.config));
  j["best_val"] = {{"accuracy", best.val.accuracy}, {"macro_f1", best.val.macro_f1}};
  j["test"] = metrics_json(best.test, best.best_epoch);
  j["cells"] = result.cells.size();
  j["failed_cells"] = failed;
  out << j.dump() << '\n';
  err << result.cells.size() << " cells (" << failed << " failed); best cell " << *result.best_index
      << " with val macro-F1 " << fmt(best.val.macro_f1) << ", test accuracy " << fmt(best.test.accuracy)
      << ", test macro-F1 " << fmt(best.test.macro_f1) << '\n';
  return kOk;
}

// --- verify -----------------------------------------------------------------

struct VerifyArgs {
  bool theorem = false;
  bool spectrum = false;
  std::size_t n = 0;
  double rho1 = 0.0;
  std::size_t k = 0;
  double rho = 0.0;
  std::uint64_t seed = 0;
  CLI::Option* n_opt = nullptr;
  CLI::Option* rho1_opt = nullptr;
  CLI::Option* k_opt = nullptr;
  CLI::Option* rho_opt = nullptr;
};

std::string list(const std::vector<double>& values) {
  std::ostringstream s;
  s << std::setprecision(10);
  for (std::size_t i = 0; i < values.size(); ++i) s << (i ? ", " : "") << values[i];
  return s.str();
}

int cmd_verify(const VerifyArgs& a, std::ostream& out, std::ostream& err) {
  if (a.theorem && a.spectrum) throw ContractError("choose one of --theorem and --spectrum");
  if (a.theorem) {
    if (!a.n_opt->count() || !a.rho1_opt->count() || !a.k_opt->count())
      throw ContractError("--theorem needs --n, --rho1 and --k");
    const TheoremCertificate c = certify_theorem(a.n, a.rho1, a.k);
    out << to_json(c) << '\n';
    err << std::setprecision(12) << "rho2 = " << c.rho2 << ", max entry difference " << std::scientific
        << c.max_entry_diff << (c.pass ? ", pass\n" : ", FAIL\n");
    return c.pass ? kOk : kVerifyFailed;
  }
  if (a.spectrum) {
    if (!a.n_opt->count() || !a.rho_opt->count()) throw ContractError("--spectrum needs --n and --rho");
    const SpectralReport r = spectrum_check(a.n, a.rho, a.seed);
    out << to_json(r) << '\n';
    err << "eigenvalues of P: " << list(r.eigenvalues) << "\nfilter coefficients: " << list(r.closed_form_filter)
        << " (computed: " << list(r.filter_coefficients) << ")\nmax residual " << std::scientific
        << r.max_residual << (r.pass ? ", pass\n" : ", FAIL\n");
    return r.pass ? kOk : kVerifyFailed;
  }
  const VerifyReport r = run_verification(a.seed);
  out << to_json(r) << '\n';
  err << std::scientific << std::setprecision(3) << "theorem: " << r.theorem.cells.size()
      << " cells, max entry diff " << r.theorem.max_entry_diff << (r.theorem.pass ? " pass" : " FAIL")
      << "\nspectrum: " << r.spectrum.cells.size() << " cells" << (r.spectrum.pass ? " pass" : " FAIL")
      << "\nbi-interaction: " << r.biinteraction.cases << " cases, max rel error "
      << r.biinteraction.max_rel_error << (r.biinteraction.pass ? " pass" : " FAIL") << '\n';
  return r.pass ? kOk : kVerifyFailed;
}

// --- synth ------------------------------------------------------------------

struct SynthArgs {
  SyntheticSpec spec;
  std::string kind = "local-signal";
  std::string out_dir;
};

int cmd_synth(SynthArgs a, std::ostream& out, std::ostream& err) {
  a.spec.kind = parse_synthetic_kind(a.kind);
  const RawDataset raw = generate_synthetic(a.spec);
  write_synthetic(raw, a.spec, a.out_dir);
  ordered_json j;
  j["dir"] = a.out_dir;
  j["kind"] = to_string(a.spec.kind);
  j["nodes"] = raw.num_nodes;
  j["edges"] = raw.edges.size();
  j["features"] = raw.num_features;
  j["classes"] = raw.num_classes;
  j["fingerprint"] = hex64(fingerprint(raw));
  out << j.dump() << '\n';
  err << "wrote " << raw.num_nodes << " nodes and " << raw.edges.size() << " edges to " << a.out_dir << '\n';
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"CatGCN: graph convolution over categorical node features"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  TrainArgs train_args;
  CLI::App* train_cmd = app.add_subcommand("train", "Train a model and write its artifacts");
  train_args.data.add_to(*train_cmd);
  train_args.config.add_to(*train_cmd);
  train_cmd->add_option("--out", train_args.out_dir, "Output directory")->capture_default_str();
  train_cmd->add_option("--replay", train_args.replay, "Rerun from a manifest.json");
  train_cmd->add_option("--jobs", train_args.jobs, "Worker threads for propagation")->check(CLI::PositiveNumber);
  train_cmd->add_flag("--log-timing", train_args.log_timing, "Add per-epoch wall time to the epoch log");

  EvalArgs eval_args;
  CLI::App* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on the test split");
  eval_args.data.add_to(*eval_cmd);
  eval_cmd->add_option("--checkpoint", eval_args.checkpoint, "checkpoint.bin from train")->required();
  eval_cmd->add_option("--jobs", eval_args.jobs)->check(CLI::PositiveNumber);

  GridArgs grid_args;
  CLI::App* grid_cmd = app.add_subcommand("grid", "Grid search over hyper-parameters");
  grid_args.data.add_to(*grid_cmd);
  grid_args.config.add_to(*grid_cmd);
  grid_cmd->add_option("--grid-learning-rate", grid_args.axes.learning_rate)->delimiter(',');
  grid_cmd->add_option("--grid-eta", grid_args.axes.eta)->delimiter(',');
  grid_cmd->add_option("--grid-dropout", grid_args.axes.dropout)->delimiter(',');
  grid_cmd->add_option("--grid-alpha", grid_args.axes.alpha)->delimiter(',');
  grid_cmd->add_option("--grid-rho", grid_args.axes.rho)->delimiter(',');
  grid_cmd->add_option("--grid-hops", grid_args.axes.hops)->delimiter(',');
  grid_cmd->add_option("--jobs", grid_args.jobs, "Cells trained in parallel")->check(CLI::PositiveNumber);
  grid_cmd->add_flag("--list-cells", grid_args.list_cells, "Print the expanded grid and exit");
  grid_cmd->add_option("--results", grid_args.results, "Write the per-cell table to this JSON file");

  VerifyArgs verify_args;
  CLI::App* verify_cmd = app.add_subcommand("verify", "Run the numerical certification sweeps");
  verify_cmd->add_flag("--theorem", verify_args.theorem, "Certify one (n, rho1, K) cell");
  verify_cmd->add_flag("--spectrum", verify_args.spectrum, "Eigen-decompose one (n, rho) artificial graph");
  verify_args.n_opt = verify_cmd->add_option("--n", verify_args.n, "Number of features");
  verify_args.rho1_opt = verify_cmd->add_option("--rho1", verify_args.rho1);
  verify_args.k_opt = verify_cmd->add_option("--k", verify_args.k, "Number of hops");
  verify_args.rho_opt = verify_cmd->add_option("--rho", verify_args.rho);
  verify_cmd->add_option("--seed", verify_args.seed);

  SynthArgs synth_args;
  CLI::App* synth_cmd = app.add_subcommand("synth", "Generate a synthetic dataset");
  synth_cmd->add_option("--kind", synth_args.kind, "local-signal, global-signal or homophily")->capture_default_str();
  synth_cmd->add_option("--nodes", synth_args.spec.n_nodes)->capture_default_str();
  synth_cmd->add_option("--num-features", synth_args.spec.n_feats)->capture_default_str();
  synth_cmd->add_option("--classes", synth_args.spec.n_classes)->capture_default_str();
  synth_cmd->add_option("--n-f", synth_args.spec.n_f, "Features per node")->capture_default_str();
  synth_cmd->add_option("--p-in", synth_args.spec.p_in)->capture_default_str();
  synth_cmd->add_option("--p-out", synth_args.spec.p_out)->capture_default_str();
  synth_cmd->add_option("--seed", synth_args.spec.seed);
  synth_cmd->add_option("--out", synth_args.out_dir, "Output directory")->required();

  std::vector<const char*> argv;
  for (const std::string& s : args) argv.push_back(s.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (train_cmd->parsed()) return cmd_train(train_args, out, err);
    if (eval_cmd->parsed()) return cmd_eval(eval_args, out, err);
    if (grid_cmd->parsed()) return cmd_grid(grid_args, out, err);
    if (verify_cmd->parsed()) return cmd_verify(verify_args, out, err);
    if (synth_cmd->parsed()) return cmd_synth(synth_args, out, err);
  } catch (const DivergenceError& e) {
    err << "error: " << e.what() << " (last finite epoch " << e.last_finite_epoch() << ")\n";
    return kDivergence;
  } catch (const NumericError& e) {
    err << "error: " << e.what() << '\n';
    return kDivergence;
  } catch (const ContractError& e) {
    err << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const InputError& e) {
    err << "data error: " << e.what() << '\n';
    return kDataError;
  } catch (const fs::filesystem_error& e) {
    err << "data error: " << e.what() << '\n';
    return kDataError;
  }
  return kUsage;
}

}  // namespace catgcn::cli
