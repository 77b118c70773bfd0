#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "lcvd/dataset.hpp"
#include "lcvd/detectors.hpp"
#include "lcvd/model.hpp"
#include "lcvd/vicinity.hpp"

namespace lcvd::experiment {

using Json = nlohmann::ordered_json;

// Bad flags, bad config files, or inconsistent inputs; the CLI exits 2.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DataConfig {
  int num_classes = 10;
  int dim = 2;
  int train_per_class = 500;
  int test_per_class = 500;
  double sigma = 0.25;
  double mean_radius = 2.0;
  bool normalize = true;
  int ood_ring_n = 5000;
  double ood_ring_inner = 4.0;
  double ood_ring_outer = 5.0;
  Vec ood_shift_offset = {0.7071067811865476, 0.7071067811865476};
  std::vector<std::string> ood_sets = {"ring", "shifted"};
};

struct FinetuneConfig {
  int batch_size = 128;
  // Summed-gradient step size; <= 0 requests the tie to the final pretrain
  // learning rate.
  double learning_rate = 8e-5;
  int epochs = 20;
  double plateau_tolerance = 1e-4;
  int plateau_patience = 3;
  vicinity::VicinityConfig vicinity;
  int ood_pool_size = 0;  // 0 = regenerate OOD samples fresh every batch
};

struct DetectorParams {
  double odin_temperature = 1000.0;
  double odin_epsilon = 0.0014;
  double energy_temperature = 1.0;
  double ra_percentile = 90.0;
  double ra_temperature = 1.0;
  double maha_ridge = 1e-3;
  double gradnorm_temperature = 1.0;
  int gradnorm_order = 1;
};

struct ExperimentConfig {
  std::uint64_t seed = 1;
  std::string out_dir = "runs/out";
  DataConfig data;
  std::vector<std::size_t> hidden_dims = {64, 64};
  model::TrainConfig pretrain;  // summed-gradient steps
  FinetuneConfig finetune;
  std::vector<std::string> detectors = {"msp",  "odin", "energy",
                                        "maha", "ra",   "gradnorm"};
  DetectorParams detector_params;
  double fpr_level = 0.95;
};

ExperimentConfig default_config();
void validate_config(const ExperimentConfig& config);

// JSON keys mirror the CLI flag names; unknown keys are rejected.
ExperimentConfig config_from_json(const Json& j);
Json config_to_json(const ExperimentConfig& config);

// FNV-1a hash of the canonical config serialization, 16 hex digits.
std::string run_id(const ExperimentConfig& config);

// The finetune step size after resolving the default tie to the final
// pretrain learning rate.
double effective_finetune_lr(const ExperimentConfig& config);

struct PreparedData {
  data::Dataset train;
  data::Dataset test;
  std::vector<std::pair<std::string, data::Dataset>> ood_sets;
};

// Generates train/test/OOD sets from the config's seed substreams and
// normalizes everything with train statistics when configured.
PreparedData prepare_data(const ExperimentConfig& config);

struct CurvePoint {
  int epoch = 0;
  double mean_loss = 0.0;  // per-sample mean of the summed batch risks
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
};

struct TrainResult {
  model::MlpClassifier model;
  std::vector<CurvePoint> curve;
};

enum class Variant {
  kLcvd,
  kInputGaussian,
  kInputRotation,
  kLabelGroundtruth,
  kLabelSmooth,
  kLabelTemperature,
  kLabelUniform,
};

Variant variant_from_name(const std::string& name);
std::string variant_name(Variant variant);
const std::vector<std::string>& all_variant_names();

// Fresh He-initialized model on the config's init substream.
model::MlpClassifier init_model(const ExperimentConfig& config);

// Mini-batch SGD on the fitting risk over ID data with the decay schedule.
TrainResult pretrain(const ExperimentConfig& config, const PreparedData& data);

// Half-ID/half-OOD batches under the generic risk at a constant step size,
// stopping early once the epoch-mean risk plateaus. The variant selects the
// OOD input/label construction; kLcvd is the unmodified method.
TrainResult finetune(const ExperimentConfig& config, const PreparedData& data,
                     model::MlpClassifier start, Variant variant);

// Fresh initialization trained with the generic risk on the pretrain
// schedule.
TrainResult retrain(const ExperimentConfig& config, const PreparedData& data);

double accuracy(const model::MlpClassifier& m, const data::Dataset& dataset);

struct MetricRow {
  std::string detector;
  std::string ood_set;  // "average" for the per-detector mean row
  double auroc = 0.0;
  double auprin = 0.0;
  double auprout = 0.0;
  double fpr95 = 0.0;
  double deterr = 0.0;
};

struct RunReport {
  std::string id;
  double id_test_accuracy = 0.0;
  std::vector<MetricRow> rows;
};

// Detector config for one of the configured detector names.
detectors::DetectorConfig detector_config(const ExperimentConfig& config,
                                          const std::string& name);

// Scores ID test vs every configured OOD set with every configured detector.
RunReport evaluate(const ExperimentConfig& config,
                   const model::MlpClassifier& m, const PreparedData& data);

// Deterministic file writers (fixed formatting, no timestamps).
void write_curve_csv(const std::string& path,
                     const std::vector<CurvePoint>& curve);
void write_report_csv(const std::string& path, const RunReport& report);
void write_report_json(const std::string& path, const RunReport& report,
                       const ExperimentConfig& config,
                       const std::string& command);
void write_config_echo(const std::string& path, const ExperimentConfig& config,
                       const std::string& command);
void write_scores_csv(const std::string& path, const model::MlpClassifier& m,
                      const detectors::FittedDetector& fitted,
                      const PreparedData& data);
void write_heatmap_csv(const std::string& path, const model::MlpClassifier& m,
                       double grid_min, double grid_max, int resolution);
void write_theorem_csv(const std::string& path, std::int64_t m, std::int64_t k,
                       std::int64_t trials, std::uint64_t seed);

struct SweepRow {
  int m_value = 0;
  MetricRow metrics;
};

void write_sweep_csv(const std::string& path, const std::vector<SweepRow>& rows);

struct AblateRow {
  std::string variant;
  MetricRow metrics;
};

void write_ablate_csv(const std::string& path,
                      const std::vector<AblateRow>& rows);

}  // namespace lcvd::experiment
