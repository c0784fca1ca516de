// rknlab: generate datasets, train the learned filter, evaluate estimators
// and emit SVG figures, as reproducible pipeline steps.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage error.
#include <CLI11.hpp>
#include <filesystem>
#include <iostream>
#include <sstream>

#include "rknlab/dataset_io.hpp"
#include "rknlab/metrics.hpp"
#include "rknlab/report_io.hpp"
#include "rknlab/svg.hpp"
#include "rknlab/train.hpp"

namespace fs = std::filesystem;
using namespace rknlab;

namespace {

constexpr const char* kToolVersion = "rknlab 0.1.0";

std::string join_args(int argc, char** argv) {
  std::ostringstream out;
  for (int i = 0; i < argc; ++i) out << (i ? " " : "") << argv[i];
  return out.str();
}

ScenarioMix mix_for(const std::string& scenario, int count) {
  if (scenario == "s1") return {{Scenario::S1, count}};
  if (scenario == "s2")
    return {{Scenario::S2a, count / 2}, {Scenario::S2b, count - count / 2}};
  if (scenario == "s3")
    return {{Scenario::S3a, count / 2}, {Scenario::S3b, count - count / 2}};
  // Single-regime ids fall through to the enum parser.
  return {{scenario_from_string(scenario), count}};
}

struct EstimatorSpec {
  enum class Kind { kf_oracle, kf_fixed, rkn } kind;
  double fixed_r = 1.0;
  std::string checkpoint;
};

EstimatorSpec parse_estimator(const std::string& spec) {
  if (spec == "kf:oracle") return {EstimatorSpec::Kind::kf_oracle};
  if (spec.rfind("kf:fixed=", 0) == 0) {
    EstimatorSpec e{EstimatorSpec::Kind::kf_fixed};
    try {
      e.fixed_r = std::stod(spec.substr(9));
    } catch (const std::exception&) {
      throw std::invalid_argument("bad estimator spec '" + spec + "'");
    }
    if (!(e.fixed_r > 0))
      throw std::invalid_argument("estimator '" + spec + "': R must be positive");
    return e;
  }
  if (spec.rfind("rkn:", 0) == 0) {
    EstimatorSpec e{EstimatorSpec::Kind::rkn};
    e.checkpoint = spec.substr(4);
    return e;
  }
  throw std::invalid_argument("unknown estimator spec '" + spec +
                              "' (valid: kf:oracle, kf:fixed=<r>, rkn:<path>)");
}

std::vector<Matrix> truths_of(const Dataset& ds) {
  std::vector<Matrix> truths;
  truths.reserve(ds.episodes.size());
  for (const Episode& ep : ds.episodes) truths.push_back(ep.x);
  return truths;
}

int cmd_generate(const std::string& cmdline, const std::string& scenario,
                 int n_train, int n_val, int n_test, int length, uint64_t seed,
                 double dt, double sigma_v, const std::string& out_dir) {
  const StateSpaceModel model = make_cv_model(dt, sigma_v);
  const InitialLaw initial = default_cv_initial();
  fs::create_directories(out_dir);

  const std::vector<std::pair<Split, int>> splits = {
      {Split::train, n_train}, {Split::val, n_val}, {Split::test, n_test}};
  for (const auto& [split, count] : splits) {
    if (count <= 0) continue;
    const Dataset ds = generate_dataset(model, mix_for(scenario, count), initial,
                                        length, seed, split);
    const std::string path = out_dir + "/" + to_string(split) + ".ndjson";
    save_dataset(ds, path);
    std::cout << "wrote " << path << ": " << ds.episodes.size()
              << " episodes, T=" << length << ", scenario=" << scenario
              << ", seed=" << seed << "\n";
  }
  (void)cmdline;
  return 0;
}

int cmd_train(const std::string& cmdline, const std::string& train_path,
              const std::string& val_path, const std::string& out_path,
              const std::string& history_path, TrainConfig config,
              uint64_t init_seed, const std::string& note) {
  const Dataset train_set = load_dataset(train_path);
  const Dataset val_set = load_dataset(val_path);

  auto [model, history] = train_rkn(config, init_seed, train_set, val_set);

  CheckpointMeta meta;
  meta.init_seed = init_seed;
  meta.note = note;
  save_checkpoint(model, out_path, meta);

  if (!history_path.empty()) {
    Provenance prov = {{"command", cmdline},
                       {"tool", kToolVersion},
                       {"init_seed", std::to_string(init_seed)},
                       {"shuffle_seed", std::to_string(config.seed)},
                       {"checkpoint", file_hash_hex(out_path)}};
    write_history_csv(history.train_loss, history.val_loss, history_path, prov);
  }
  std::cout << "checkpoint " << out_path << " (hash " << file_hash_hex(out_path)
            << ")\n";
  if (history.best_epoch >= 0)
    std::cout << "best epoch " << history.best_epoch << ", val loss "
              << history.val_loss[history.best_epoch] << "\n";
  if (history.stopped_epoch >= 0)
    std::cout << "early stop at epoch " << history.stopped_epoch << "\n";
  if (history.clipping_engaged)
    std::cout << "note: gradient clipping was engaged after divergence\n";
  return 0;
}

int cmd_eval(const std::string& cmdline, const std::string& test_path,
             const std::vector<std::string>& estimator_specs,
             const std::vector<int>& probes, const std::string& out_dir,
             bool export_runs) {
  const Dataset test_set = load_dataset(test_path);
  const auto truths = truths_of(test_set);
  const int threads = worker_count();
  fs::create_directories(out_dir);

  Provenance prov = {{"command", cmdline},
                     {"tool", kToolVersion},
                     {"test_set", test_path},
                     {"master_seed", std::to_string(test_set.master_seed)}};

  std::vector<MetricsSeries> series;
  for (const std::string& spec : estimator_specs) {
    const EstimatorSpec est = parse_estimator(spec);
    const int n_ep = static_cast<int>(test_set.episodes.size());
    std::vector<FilterRun> runs(n_ep);
    std::string estimator_id;

    if (est.kind == EstimatorSpec::Kind::rkn) {
      RknModel model = load_checkpoint(est.checkpoint);
      estimator_id = "rkn:" + file_hash_hex(est.checkpoint);
      prov.emplace_back("checkpoint " + est.checkpoint, file_hash_hex(est.checkpoint));
      parallel_for_indexed(n_ep, threads, [&](int i) {
        runs[i] = rkn_filter(model, test_set.initial, test_set.episodes[i].z,
                             test_set.model.F, test_set.model.H, nullptr,
                             test_set.episodes[i].episode_id);
        runs[i].estimator_id = estimator_id;
      });
    } else {
      const MeasurementNoiseModel noise =
          est.kind == EstimatorSpec::Kind::kf_oracle
              ? MeasurementNoiseModel::oracle()
              : MeasurementNoiseModel::fixed(est.fixed_r);
      parallel_for_indexed(n_ep, threads, [&](int i) {
        runs[i] = run_kf(test_set.model, noise, test_set.initial,
                         test_set.episodes[i]);
      });
      estimator_id = runs.front().estimator_id;
    }

    series.push_back(MetricsSeries::from_runs(estimator_id, runs, truths));
    if (export_runs)
      export_filter_runs_csv(
          runs, out_dir + "/runs_" + std::to_string(series.size() - 1) + ".csv", prov);
  }

  write_metrics_csv(series, out_dir + "/metrics.csv", prov);
  const ComparisonTable table = compare(series, probes);
  write_comparison_csv(table, out_dir + "/comparison.csv", prov);
  std::cout << table.render();
  return 0;
}

int cmd_plot(const std::string& cmdline, const std::string& metrics_path,
             const std::string& out_dir) {
  const auto series = read_metrics_csv(metrics_path);
  fs::create_directories(out_dir);
  const Provenance prov = {{"command", cmdline},
                           {"tool", kToolVersion},
                           {"metrics", metrics_path}};

  SvgChart sd_chart;
  sd_chart.title = "Position standard deviation: estimated (solid) vs empirical (dash-dot)";
  sd_chart.x_label = "t";
  sd_chart.y_label = "position std";
  SvgChart gain_chart;
  gain_chart.title = "Mean position gain";
  gain_chart.x_label = "t";
  gain_chart.y_label = "K position";

  for (size_t i = 0; i < series.size(); ++i) {
    const MetricsSeries& s = series[i];
    std::vector<double> ts(s.length());
    for (int t = 0; t < s.length(); ++t) ts[t] = t;
    sd_chart.series.push_back(
        {s.estimator_id + " est", ts, s.sd_est_pos, svg_palette(i), false});
    sd_chart.series.push_back(
        {s.estimator_id + " emp", ts, s.sd_emp_pos, svg_palette(i), true});
    gain_chart.series.push_back(
        {s.estimator_id, ts, s.k_pos_mean, svg_palette(i), false});
  }
  sd_chart.save(out_dir + "/sd_position.svg", prov);
  gain_chart.save(out_dir + "/gain_position.svg", prov);
  std::cout << "wrote " << out_dir << "/sd_position.svg and gain_position.svg\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  const std::string cmdline = join_args(argc, argv);
  CLI::App app{"Recursive KalmanNet laboratory"};
  app.require_subcommand(1);

  // generate
  auto* gen = app.add_subcommand("generate", "Generate train/val/test datasets");
  std::string scenario, out_dir = "data";
  int n_train = 1000, n_val = 100, n_test = 1000, length = 150;
  uint64_t seed = 42;
  double dt = 1.0, sigma_v = 0.01;
  gen->add_option("--scenario", scenario, "s1 | s2 | s3 | S2a | S2b | S3a | S3b")
      ->required();
  gen->add_option("--train", n_train, "training episodes");
  gen->add_option("--val", n_val, "validation episodes");
  gen->add_option("--test", n_test, "test episodes");
  gen->add_option("--length", length, "episode length T");
  gen->add_option("--seed", seed, "master seed");
  gen->add_option("--dt", dt, "time step");
  gen->add_option("--sigma-v", sigma_v, "velocity random-walk std");
  gen->add_option("--out", out_dir, "output directory");

  // train
  auto* tr = app.add_subcommand("train", "Train the learned filter");
  std::string train_path, val_path, ckpt_path = "rkn.ckpt.json", history_path;
  std::string note;
  TrainConfig config;
  uint64_t init_seed = 1;
  tr->add_option("--train", train_path, "training dataset")
      ->required()
      ->check(CLI::ExistingFile);
  tr->add_option("--val", val_path, "validation dataset")
      ->required()
      ->check(CLI::ExistingFile);
  tr->add_option("--out", ckpt_path, "checkpoint output path");
  tr->add_option("--history", history_path, "training history CSV");
  tr->add_option("--lr", config.learning_rate, "learning rate");
  tr->add_option("--batch", config.batch_size, "batch size");
  tr->add_option("--epochs", config.max_epochs, "max epochs");
  tr->add_option("--patience", config.patience, "early-stop patience");
  tr->add_option("--l2", config.l2_lambda, "l2 penalty weight");
  tr->add_option("--seed", config.seed, "shuffle seed");
  tr->add_option("--init-seed", init_seed, "parameter init seed");
  tr->add_option("--tag", note, "free-form note stored in the checkpoint");

  // eval
  auto* ev = app.add_subcommand("eval", "Evaluate estimators on a test set");
  std::string test_path, eval_out = "results";
  std::vector<std::string> estimators;
  std::vector<int> probes = {70, 80};
  bool export_runs = false;
  ev->add_option("--test", test_path, "test dataset")
      ->required()
      ->check(CLI::ExistingFile);
  ev->add_option("--estimators", estimators,
                 "comma-separated: kf:oracle | kf:fixed=<r> | rkn:<path>")
      ->required()
      ->delimiter(',');
  ev->add_option("--probes", probes, "probe times")->delimiter(',');
  ev->add_option("--out", eval_out, "output directory");
  ev->add_flag("--export-runs", export_runs, "also export per-step filter runs");

  // plot
  auto* pl = app.add_subcommand("plot", "Emit SVG figures from a metrics CSV");
  std::string metrics_path, plot_out = "plots";
  pl->add_option("--metrics", metrics_path, "metrics CSV")
      ->required()
      ->check(CLI::ExistingFile);
  pl->add_option("--out", plot_out, "output directory");

  try {
    app.parse(argc, argv);
    if (gen->parsed())
      return cmd_generate(cmdline, scenario, n_train, n_val, n_test, length, seed,
                          dt, sigma_v, out_dir);
    if (tr->parsed())
      return cmd_train(cmdline, train_path, val_path, ckpt_path, history_path,
                       config, init_seed, note);
    if (ev->parsed())
      return cmd_eval(cmdline, test_path, estimators, probes, eval_out, export_runs);
    if (pl->parsed()) return cmd_plot(cmdline, metrics_path, plot_out);
    return 2;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
