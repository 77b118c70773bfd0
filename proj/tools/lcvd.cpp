// lcvd: desk-scale OOD-detection laboratory.
//
// Subcommands: pretrain, finetune, retrain, evaluate, sweep-m, ablate,
// theorem, heatmap. Config = defaults, overlaid by --config JSON, overlaid
// by CLI flags. Exit codes: 0 ok, 2 config/input error, 3 training
// divergence.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "lcvd/detectors.hpp"
#include "lcvd/experiment.hpp"
#include "lcvd/model.hpp"

namespace ex = lcvd::experiment;

namespace {

// Collects CLI overrides into a JSON overlay whose keys mirror the config
// file schema one-to-one; only flags the user actually passed are applied.
class ConfigCli {
 public:
  void attach(CLI::App* app) {
    app->add_option("--config", config_path_, "JSON config file");
    add(app, "--seed", seed_);
    add(app, "--out-dir", out_dir_);
    add(app, "--K", num_classes_);
    add(app, "--dim", dim_);
    add(app, "--train-per-class", train_per_class_);
    add(app, "--test-per-class", test_per_class_);
    add(app, "--sigma", sigma_);
    add(app, "--mean-radius", mean_radius_);
    add(app, "--normalize", normalize_);
    add(app, "--ood-ring-n", ood_ring_n_);
    add(app, "--ood-ring-inner", ood_ring_inner_);
    add(app, "--ood-ring-outer", ood_ring_outer_);
    add_vector(app, "--ood-shift-offset", ood_shift_offset_);
    add_vector(app, "--ood-sets", ood_sets_);
    add_vector(app, "--hidden-dims", hidden_dims_);
    add(app, "--pretrain-batch", pretrain_batch_);
    add(app, "--pretrain-lr", pretrain_lr_);
    add(app, "--pretrain-epochs", pretrain_epochs_);
    add_vector(app, "--pretrain-milestones", pretrain_milestones_);
    add(app, "--pretrain-decay", pretrain_decay_);
    add(app, "--weight-decay", weight_decay_);
    add(app, "--momentum", momentum_);
    add(app, "--finetune-batch", finetune_batch_);
    add(app, "--finetune-lr", finetune_lr_);
    add(app, "--finetune-epochs", finetune_epochs_);
    add(app, "--plateau-tolerance", plateau_tolerance_);
    add(app, "--plateau-patience", plateau_patience_);
    add(app, "--M", m_);
    add(app, "--companion-policy", companion_policy_);
    add(app, "--ood-pool-size", ood_pool_size_);
    add_vector(app, "--detectors", detectors_);
    add(app, "--odin-temperature", odin_temperature_);
    add(app, "--odin-epsilon", odin_epsilon_);
    add(app, "--energy-temperature", energy_temperature_);
    add(app, "--ra-percentile", ra_percentile_);
    add(app, "--ra-temperature", ra_temperature_);
    add(app, "--maha-ridge", maha_ridge_);
    add(app, "--gradnorm-temperature", gradnorm_temperature_);
    add(app, "--gradnorm-order", gradnorm_order_);
    add(app, "--fpr-level", fpr_level_);
  }

  // defaults -> config file -> CLI flags, all through one parser.
  ex::ExperimentConfig resolve() const {
    ex::Json merged = ex::Json::object();
    if (!config_path_.empty()) {
      std::ifstream in(config_path_);
      if (!in) {
        throw ex::ConfigError(config_path_ + ": cannot open config file");
      }
      try {
        merged = ex::Json::parse(in);
      } catch (const ex::Json::exception& e) {
        throw ex::ConfigError(config_path_ + ": " + e.what());
      }
      if (!merged.is_object()) {
        throw ex::ConfigError(config_path_ + ": config must be a JSON object");
      }
    }
    for (const auto& apply : overrides_) apply(merged);
    auto config = ex::config_from_json(merged);
    ex::validate_config(config);
    return config;
  }

 private:
  template <typename T>
  void add(CLI::App* app, const std::string& flag, T& storage) {
    auto* option = app->add_option(flag, storage);
    const std::string key = flag.substr(2);
    overrides_.push_back([option, &storage, key](ex::Json& j) {
      if (option->count() > 0) j[key] = storage;
    });
  }

  template <typename T>
  void add_vector(CLI::App* app, const std::string& flag,
                  std::vector<T>& storage) {
    auto* option = app->add_option(flag, storage);
    option->delimiter(',');
    const std::string key = flag.substr(2);
    overrides_.push_back([option, &storage, key](ex::Json& j) {
      if (option->count() > 0) j[key] = storage;
    });
  }

  std::string config_path_;
  std::uint64_t seed_ = 0;
  std::string out_dir_;
  int num_classes_ = 0;
  int dim_ = 0;
  int train_per_class_ = 0;
  int test_per_class_ = 0;
  double sigma_ = 0;
  double mean_radius_ = 0;
  bool normalize_ = true;
  int ood_ring_n_ = 0;
  double ood_ring_inner_ = 0;
  double ood_ring_outer_ = 0;
  std::vector<double> ood_shift_offset_;
  std::vector<std::string> ood_sets_;
  std::vector<std::size_t> hidden_dims_;
  int pretrain_batch_ = 0;
  double pretrain_lr_ = 0;
  int pretrain_epochs_ = 0;
  std::vector<int> pretrain_milestones_;
  double pretrain_decay_ = 0;
  double weight_decay_ = 0;
  double momentum_ = 0;
  int finetune_batch_ = 0;
  double finetune_lr_ = 0;
  int finetune_epochs_ = 0;
  double plateau_tolerance_ = 0;
  int plateau_patience_ = 0;
  int m_ = 0;
  std::string companion_policy_;
  int ood_pool_size_ = 0;
  std::vector<std::string> detectors_;
  double odin_temperature_ = 0;
  double odin_epsilon_ = 0;
  double energy_temperature_ = 0;
  double ra_percentile_ = 0;
  double ra_temperature_ = 0;
  double maha_ridge_ = 0;
  double gradnorm_temperature_ = 0;
  double gradnorm_order_ = 0;
  double fpr_level_ = 0;
  std::vector<std::function<void(ex::Json&)>> overrides_;
};

std::string join_path(const std::string& dir, const std::string& name) {
  return (std::filesystem::path(dir) / name).string();
}

void ensure_out_dir(const ex::ExperimentConfig& config) {
  std::filesystem::create_directories(config.out_dir);
}

void print_curve_tail(const ex::TrainResult& result) {
  const auto& last = result.curve.back();
  std::printf("epochs_run=%zu\n", result.curve.size());
  std::printf("final_mean_loss=%.6f\n", last.mean_loss);
  std::printf("final_train_accuracy=%.4f\n", last.train_accuracy);
  std::printf("final_test_accuracy=%.4f\n", last.test_accuracy);
}

void print_report(const ex::RunReport& report) {
  std::printf("run_id=%s\n", report.id.c_str());
  std::printf("id_test_accuracy=%.4f\n", report.id_test_accuracy);
  std::printf("detector,ood_set,auroc,auprin,auprout,fpr95,deterr\n");
  for (const auto& row : report.rows) {
    std::printf("%s,%s,%.2f,%.2f,%.2f,%.2f,%.2f\n", row.detector.c_str(),
                row.ood_set.c_str(), 100.0 * row.auroc, 100.0 * row.auprin,
                100.0 * row.auprout, 100.0 * row.fpr95, 100.0 * row.deterr);
  }
}

lcvd::model::MlpClassifier load_or_pretrain(
    const ex::ExperimentConfig& config, const ex::PreparedData& data,
    const std::string& checkpoint) {
  if (!checkpoint.empty()) return lcvd::model::load_checkpoint(checkpoint);
  auto result = ex::pretrain(config, data);
  ensure_out_dir(config);
  lcvd::model::save_checkpoint(result.model,
                               join_path(config.out_dir, "pretrained.ckpt"));
  ex::write_curve_csv(join_path(config.out_dir, "pretrain_curve.csv"),
                      result.curve);
  return std::move(result.model);
}

int run_pretrain(const ConfigCli& cli) {
  const auto config = cli.resolve();
  const auto data = ex::prepare_data(config);
  auto result = ex::pretrain(config, data);
  ensure_out_dir(config);
  lcvd::model::save_checkpoint(result.model,
                               join_path(config.out_dir, "pretrained.ckpt"));
  ex::write_curve_csv(join_path(config.out_dir, "pretrain_curve.csv"),
                      result.curve);
  ex::write_config_echo(join_path(config.out_dir, "config_pretrain.json"),
                        config, "pretrain");
  print_curve_tail(result);
  return 0;
}

int run_finetune(const ConfigCli& cli, const std::string& checkpoint) {
  const auto config = cli.resolve();
  const auto data = ex::prepare_data(config);
  const std::string source =
      checkpoint.empty() ? join_path(config.out_dir, "pretrained.ckpt")
                         : checkpoint;
  auto start = lcvd::model::load_checkpoint(source);
  auto result =
      ex::finetune(config, data, std::move(start), ex::Variant::kLcvd);
  ensure_out_dir(config);
  lcvd::model::save_checkpoint(result.model,
                               join_path(config.out_dir, "finetuned.ckpt"));
  ex::write_curve_csv(join_path(config.out_dir, "finetune_curve.csv"),
                      result.curve);
  ex::write_config_echo(join_path(config.out_dir, "config_finetune.json"),
                        config, "finetune");
  print_curve_tail(result);
  return 0;
}

int run_retrain(const ConfigCli& cli) {
  const auto config = cli.resolve();
  const auto data = ex::prepare_data(config);
  auto result = ex::retrain(config, data);
  ensure_out_dir(config);
  lcvd::model::save_checkpoint(result.model,
                               join_path(config.out_dir, "retrained.ckpt"));
  ex::write_curve_csv(join_path(config.out_dir, "retrain_curve.csv"),
                      result.curve);
  ex::write_config_echo(join_path(config.out_dir, "config_retrain.json"),
                        config, "retrain");
  print_curve_tail(result);
  return 0;
}

int run_evaluate(const ConfigCli& cli, const std::string& checkpoint,
                 const std::string& tag, bool dump_scores) {
  const auto config = cli.resolve();
  const auto data = ex::prepare_data(config);
  const std::string source =
      checkpoint.empty() ? join_path(config.out_dir, "finetuned.ckpt")
                         : checkpoint;
  const auto m = lcvd::model::load_checkpoint(source);
  const auto report = ex::evaluate(config, m, data);
  ensure_out_dir(config);
  ex::write_report_csv(join_path(config.out_dir, "report_" + tag + ".csv"),
                       report);
  ex::write_report_json(join_path(config.out_dir, "report_" + tag + ".json"),
                        report, config, "evaluate");
  if (dump_scores) {
    for (const auto& name : config.detectors) {
      const auto fitted = lcvd::detectors::fit_detector(
          m, ex::detector_config(config, name), data.train);
      ex::write_scores_csv(
          join_path(config.out_dir, "scores_" + tag + "_" + name + ".csv"), m,
          fitted, data);
    }
  }
  print_report(report);
  return 0;
}

int run_sweep_m(const ConfigCli& cli, const std::string& checkpoint,
                const std::vector<int>& m_values) {
  auto config = cli.resolve();
  if (m_values.empty()) throw ex::ConfigError("--m-values must not be empty");
  for (int m_value : m_values) {
    if (m_value < 1) throw ex::ConfigError("every M must be >= 1");
  }
  const auto data = ex::prepare_data(config);
  const auto start = load_or_pretrain(config, data, checkpoint);
  std::vector<ex::SweepRow> rows;
  for (int m_value : m_values) {
    auto run_config = config;
    run_config.finetune.vicinity.M = m_value;
    auto result =
        ex::finetune(run_config, data, start, ex::Variant::kLcvd);
    const auto report = ex::evaluate(run_config, result.model, data);
    for (const auto& row : report.rows) {
      rows.push_back({m_value, row});
    }
  }
  ensure_out_dir(config);
  ex::write_sweep_csv(join_path(config.out_dir, "sweep_m.csv"), rows);
  std::printf("sweep rows=%zu\n", rows.size());
  return 0;
}

int run_ablate(const ConfigCli& cli, const std::string& checkpoint,
               const std::string& variant_name) {
  const auto config = cli.resolve();
  const auto variant = ex::variant_from_name(variant_name);
  const auto data = ex::prepare_data(config);
  const auto start = load_or_pretrain(config, data, checkpoint);
  auto result = ex::finetune(config, data, start, variant);
  const auto report = ex::evaluate(config, result.model, data);
  std::vector<ex::AblateRow> rows;
  for (const auto& row : report.rows) {
    rows.push_back({variant_name, row});
  }
  ensure_out_dir(config);
  ex::write_ablate_csv(
      join_path(config.out_dir, "ablate_" + variant_name + ".csv"), rows);
  ex::write_report_json(
      join_path(config.out_dir, "ablate_" + variant_name + ".json"), report,
      config, "ablate " + variant_name);
  print_report(report);
  return 0;
}

int run_theorem(const ConfigCli& cli, std::int64_t trials,
                const std::string& out_path) {
  const auto config = cli.resolve();
  if (trials < 1) throw ex::ConfigError("theorem: trials must be >= 1");
  const std::int64_t m = config.finetune.vicinity.M;
  const std::int64_t k = config.data.num_classes;
  std::string path = out_path;
  if (path.empty()) {
    ensure_out_dir(config);
    path = join_path(config.out_dir, "theorem.csv");
  } else {
    const auto parent = std::filesystem::path(path).parent_path();
    if (!parent.empty()) std::filesystem::create_directories(parent);
  }
  ex::write_theorem_csv(path, m, k, trials, config.seed);
  std::printf("theorem table written: %s\n", path.c_str());
  return 0;
}

int run_heatmap(const ConfigCli& cli, const std::string& checkpoint,
                double grid_min, double grid_max, int resolution,
                const std::string& out_path) {
  const auto config = cli.resolve();
  const std::string source =
      checkpoint.empty() ? join_path(config.out_dir, "finetuned.ckpt")
                         : checkpoint;
  const auto m = lcvd::model::load_checkpoint(source);
  std::string path = out_path;
  if (path.empty()) {
    ensure_out_dir(config);
    path = join_path(config.out_dir, "heatmap.csv");
  } else {
    const auto parent = std::filesystem::path(path).parent_path();
    if (!parent.empty()) std::filesystem::create_directories(parent);
  }
  ex::write_heatmap_csv(path, m, grid_min, grid_max, resolution);
  std::printf("heatmap written: %s\n", path.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"desk-scale out-of-distribution detection laboratory"};
  app.require_subcommand(1);

  ConfigCli pretrain_cli;
  auto* pretrain_cmd = app.add_subcommand("pretrain", "train the classifier");
  pretrain_cli.attach(pretrain_cmd);

  ConfigCli finetune_cli;
  std::string finetune_checkpoint;
  auto* finetune_cmd =
      app.add_subcommand("finetune", "finetune with generated OOD samples");
  finetune_cli.attach(finetune_cmd);
  finetune_cmd->add_option("--checkpoint", finetune_checkpoint,
                           "pretrained checkpoint (default out-dir)");

  ConfigCli retrain_cli;
  auto* retrain_cmd =
      app.add_subcommand("retrain", "train from scratch with the mixed risk");
  retrain_cli.attach(retrain_cmd);

  ConfigCli evaluate_cli;
  std::string evaluate_checkpoint;
  std::string evaluate_tag = "eval";
  bool dump_scores = false;
  auto* evaluate_cmd =
      app.add_subcommand("evaluate", "score detectors and compute metrics");
  evaluate_cli.attach(evaluate_cmd);
  evaluate_cmd->add_option("--checkpoint", evaluate_checkpoint,
                           "checkpoint to evaluate (default out-dir)");
  evaluate_cmd->add_option("--tag", evaluate_tag, "report file tag");
  evaluate_cmd->add_flag("--dump-scores", dump_scores,
                         "write per-sample score CSVs");

  ConfigCli sweep_cli;
  std::string sweep_checkpoint;
  std::vector<int> m_values = {1, 5, 10, 15, 20};
  auto* sweep_cmd =
      app.add_subcommand("sweep-m", "finetune + evaluate across M values");
  sweep_cli.attach(sweep_cmd);
  sweep_cmd->add_option("--checkpoint", sweep_checkpoint,
                        "pretrained checkpoint (default: pretrain here)");
  sweep_cmd->add_option("--m-values", m_values, "M values to sweep")
      ->delimiter(',');

  ConfigCli ablate_cli;
  std::string ablate_checkpoint;
  std::string ablate_variant;
  auto* ablate_cmd =
      app.add_subcommand("ablate", "finetune with an ablation variant");
  ablate_cli.attach(ablate_cmd);
  ablate_cmd->add_option("--checkpoint", ablate_checkpoint,
                         "pretrained checkpoint (default: pretrain here)");
  ablate_cmd
      ->add_option("--variant", ablate_variant,
                   "lcvd | input-gaussian | input-rotation | "
                   "label-groundtruth | label-smooth | label-temperature | "
                   "label-uniform")
      ->required();

  // The theorem table reuses the config's --M (mixture size) and --K
  // (number of classes).
  ConfigCli theorem_cli;
  std::int64_t theorem_trials = 100000;
  std::string theorem_out;
  auto* theorem_cmd = app.add_subcommand(
      "theorem", "class-count distribution: DP vs occupancy vs Monte Carlo");
  theorem_cli.attach(theorem_cmd);
  theorem_cmd->add_option("--trials", theorem_trials, "Monte Carlo draws");
  theorem_cmd->add_option("--out", theorem_out, "output CSV path");

  ConfigCli heatmap_cli;
  std::string heatmap_checkpoint;
  double grid_min = -6.0;
  double grid_max = 6.0;
  int resolution = 100;
  std::string heatmap_out;
  auto* heatmap_cmd =
      app.add_subcommand("heatmap", "max-softmax confidence grid");
  heatmap_cli.attach(heatmap_cmd);
  heatmap_cmd->add_option("--checkpoint", heatmap_checkpoint,
                          "checkpoint to visualize (default out-dir)");
  heatmap_cmd->add_option("--min", grid_min, "grid lower bound");
  heatmap_cmd->add_option("--max", grid_max, "grid upper bound");
  heatmap_cmd->add_option("--res", resolution, "grid resolution per axis");
  heatmap_cmd->add_option("--out", heatmap_out, "output CSV path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  const auto started = std::chrono::steady_clock::now();
  int status = 0;
  std::string command;
  try {
    if (pretrain_cmd->parsed()) {
      command = "pretrain";
      status = run_pretrain(pretrain_cli);
    } else if (finetune_cmd->parsed()) {
      command = "finetune";
      status = run_finetune(finetune_cli, finetune_checkpoint);
    } else if (retrain_cmd->parsed()) {
      command = "retrain";
      status = run_retrain(retrain_cli);
    } else if (evaluate_cmd->parsed()) {
      command = "evaluate";
      status = run_evaluate(evaluate_cli, evaluate_checkpoint, evaluate_tag,
                            dump_scores);
    } else if (sweep_cmd->parsed()) {
      command = "sweep-m";
      status = run_sweep_m(sweep_cli, sweep_checkpoint, m_values);
    } else if (ablate_cmd->parsed()) {
      command = "ablate";
      status = run_ablate(ablate_cli, ablate_checkpoint, ablate_variant);
    } else if (theorem_cmd->parsed()) {
      command = "theorem";
      status = run_theorem(theorem_cli, theorem_trials, theorem_out);
    } else if (heatmap_cmd->parsed()) {
      command = "heatmap";
      status = run_heatmap(heatmap_cli, heatmap_checkpoint, grid_min, grid_max,
                           resolution, heatmap_out);
    }
  } catch (const lcvd::model::TrainingDivergedError& e) {
    std::fprintf(stderr, "error: training diverged: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  const auto elapsed = std::chrono::duration<double>(
                           std::chrono::steady_clock::now() - started)
                           .count();
  std::fprintf(stderr, "[time] %s: %.2f s\n", command.c_str(), elapsed);
  return status;
}
