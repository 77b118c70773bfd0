// End-to-end acceptance harness. Each check prints a single
// "[PASS]/[FAIL] criterion N: ..." line with its wall time; the process
// exits nonzero if any check fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "lcvd/dataset.hpp"
#include "lcvd/detectors.hpp"
#include "lcvd/experiment.hpp"
#include "lcvd/matrix.hpp"
#include "lcvd/metrics.hpp"
#include "lcvd/model.hpp"
#include "lcvd/rng.hpp"
#include "lcvd/risk.hpp"
#include "lcvd/theorem.hpp"
#include "lcvd/vicinity.hpp"

using lcvd::Matrix;
using lcvd::Rng;
using lcvd::Vec;
namespace data = lcvd::data;
namespace detectors = lcvd::detectors;
namespace experiment = lcvd::experiment;
namespace metrics = lcvd::metrics;
namespace model = lcvd::model;
namespace risk = lcvd::risk;
namespace theorem = lcvd::theorem;
namespace vicinity = lcvd::vicinity;

namespace {

struct Outcome {
  bool ok = false;
  std::string detail;
};

double median(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  if (n % 2 == 1) return values[n / 2];
  return 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

double rel_error(double got, double want) {
  const double denom = std::max({std::abs(got), std::abs(want), 1e-8});
  return std::abs(got - want) / denom;
}

std::string fmt(double v, int digits = 3) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(digits) << v;
  return out.str();
}

// ---------------------------------------------------------------------------
// 1. Partition table vs direct enumeration; reference mode of the class-count
//    law.

// Number of ways to write m as a non-increasing sum of exactly k parts, each
// at most max_part. Direct enumeration, no memoization.
long long enumerate_partitions(int m, int k, int max_part) {
  if (k == 0) return m == 0 ? 1 : 0;
  long long count = 0;
  for (int part = 1; part <= std::min(max_part, m); ++part) {
    count += enumerate_partitions(m - part, k - 1, part);
  }
  return count;
}

Outcome criterion1() {
  for (int m = 1; m <= 12; ++m) {
    for (int kc = 1; kc <= 12; ++kc) {
      const theorem::BigInt got = theorem::partition_count(m, kc);
      const long long want = enumerate_partitions(m, kc, m);
      if (got != want) {
        return {false, "partition_count(" + std::to_string(m) + "," +
                           std::to_string(kc) + ") = " + got.str() +
                           ", enumeration gives " + std::to_string(want)};
      }
    }
  }
  const std::vector<double> dist = theorem::class_count_distribution(10, 10);
  std::size_t argmax = 1;
  for (std::size_t j = 2; j < dist.size(); ++j) {
    if (dist[j] > dist[argmax]) argmax = j;
  }
  if (argmax != 4) {
    return {false, "class-count mode is " + std::to_string(argmax) +
                       ", expected 4"};
  }
  if (dist[4] != 9.0 / 42.0) {
    return {false, "P(4) = " + fmt(dist[4], 17) + ", expected 9/42 exactly"};
  }
  if (dist[10] != 1.0 / 42.0) {
    return {false, "P(10) = " + fmt(dist[10], 17) + ", expected 1/42 exactly"};
  }
  return {true,
          "all d(M,K_C) for M,K_C <= 12 match enumeration; mode 4 with "
          "P(4) = 9/42 and P(10) = 1/42 exact"};
}

// ---------------------------------------------------------------------------
// 2. Analytic gradients vs central finite differences.

bool near_kink(const model::ForwardTrace& trace, double margin) {
  for (std::size_t l = 0; l + 1 < trace.pre_activations.size(); ++l) {
    for (double v : trace.pre_activations[l]) {
      if (std::abs(v) < margin) return true;
    }
  }
  return false;
}

double softmax_kl_to_uniform(const model::MlpClassifier& m, const Vec& x,
                             double temperature) {
  const model::ForwardTrace trace = model::forward(m, x);
  const std::size_t k = trace.logits.size();
  double max_scaled = trace.logits[0] / temperature;
  for (double v : trace.logits) {
    max_scaled = std::max(max_scaled, v / temperature);
  }
  double z = 0.0;
  for (double v : trace.logits) z += std::exp(v / temperature - max_scaled);
  double kl = std::log(static_cast<double>(k));
  for (double v : trace.logits) {
    const double p = std::exp(v / temperature - max_scaled) / z;
    if (p > 0.0) kl += p * std::log(p);
  }
  return kl;
}

Outcome criterion2() {
  Rng rng(20250816, 21);
  const double fd_h = 1e-6;
  const double tolerance = 1e-4;
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    // Draw a small model and probe point away from ReLU kinks and the
    // rejection clamp so the finite differences are trustworthy.
    model::MlpClassifier m;
    Vec x;
    int y_fit = 0;
    int y_rej = 0;
    for (int attempt = 0;; ++attempt) {
      if (attempt > 500) return {false, "could not sample a usable model"};
      const std::size_t d = 1 + rng.uniform_int(4);
      const std::size_t h = 1 + rng.uniform_int(6);
      const std::size_t k = 2 + rng.uniform_int(4);
      m = model::make_mlp({d, h, k}, rng);
      for (auto& b : m.biases) {
        for (double& v : b) v += 0.2 * rng.normal();
      }
      x.assign(d, 0.0);
      for (double& v : x) v = 0.7 * rng.normal();
      const model::ForwardTrace trace = model::forward(m, x);
      if (near_kink(trace, 1e-4)) continue;
      y_fit = static_cast<int>(rng.uniform_int(k));
      y_rej = static_cast<int>(rng.uniform_int(k));
      if (trace.probabilities[y_rej] > 1.0 - 1e-3) continue;
      break;
    }

    const auto check_loss = [&](auto&& loss_of, const char* what) -> Outcome {
      const model::ForwardTrace trace = model::forward(m, x);
      const risk::LossResult at = loss_of(trace.probabilities);
      const model::Gradients grads =
          model::backward(m, trace, at.dloss_dlogits);
      const auto loss_model = [&](const model::MlpClassifier& mm) {
        return loss_of(model::forward(mm, x).probabilities).loss;
      };
      for (std::size_t l = 0; l < m.num_layers(); ++l) {
        for (std::size_t i = 0; i < m.weights[l].values.size(); ++i) {
          model::MlpClassifier plus = m;
          model::MlpClassifier minus = m;
          plus.weights[l].values[i] += fd_h;
          minus.weights[l].values[i] -= fd_h;
          const double fd =
              (loss_model(plus) - loss_model(minus)) / (2.0 * fd_h);
          const double rel = rel_error(grads.weights[l].values[i], fd);
          worst = std::max(worst, rel);
          if (rel > tolerance) {
            return {false, std::string(what) + " weight gradient off by " +
                               fmt(rel, 8)};
          }
        }
        for (std::size_t i = 0; i < m.biases[l].size(); ++i) {
          model::MlpClassifier plus = m;
          model::MlpClassifier minus = m;
          plus.biases[l][i] += fd_h;
          minus.biases[l][i] -= fd_h;
          const double fd =
              (loss_model(plus) - loss_model(minus)) / (2.0 * fd_h);
          const double rel = rel_error(grads.biases[l][i], fd);
          worst = std::max(worst, rel);
          if (rel > tolerance) {
            return {false, std::string(what) + " bias gradient off by " +
                               fmt(rel, 8)};
          }
        }
      }
      for (std::size_t i = 0; i < x.size(); ++i) {
        Vec plus = x;
        Vec minus = x;
        plus[i] += fd_h;
        minus[i] -= fd_h;
        const double fd =
            (loss_of(model::forward(m, plus).probabilities).loss -
             loss_of(model::forward(m, minus).probabilities).loss) /
            (2.0 * fd_h);
        const double rel = rel_error(grads.input_gradient[i], fd);
        worst = std::max(worst, rel);
        if (rel > tolerance) {
          return {false,
                  std::string(what) + " input gradient off by " + fmt(rel, 8)};
        }
      }
      return {true, ""};
    };

    Outcome fit = check_loss(
        [&](const Vec& p) { return risk::nll_loss(p, y_fit); }, "fitting");
    if (!fit.ok) return fit;
    Outcome rej = check_loss(
        [&](const Vec& p) { return risk::rejection_loss(p, y_rej); },
        "rejection");
    if (!rej.ok) return rej;

    // Gradient-norm score vs the norms of a finite-difference gradient of
    // the same objective over the final-layer weights.
    const double temperature = 2.5;
    const std::size_t last = m.num_layers() - 1;
    std::vector<double> fd_grad(m.weights[last].values.size(), 0.0);
    for (std::size_t i = 0; i < fd_grad.size(); ++i) {
      model::MlpClassifier plus = m;
      model::MlpClassifier minus = m;
      plus.weights[last].values[i] += fd_h;
      minus.weights[last].values[i] -= fd_h;
      fd_grad[i] = (softmax_kl_to_uniform(plus, x, temperature) -
                    softmax_kl_to_uniform(minus, x, temperature)) /
                   (2.0 * fd_h);
    }
    double l1 = 0.0;
    double l2 = 0.0;
    for (double g : fd_grad) {
      l1 += std::abs(g);
      l2 += g * g;
    }
    l2 = std::sqrt(l2);
    const double got1 = detectors::score_gradnorm(m, x, temperature, 1);
    const double got2 = detectors::score_gradnorm(m, x, temperature, 2);
    const double rel1 = rel_error(got1, l1);
    const double rel2 = rel_error(got2, l2);
    worst = std::max({worst, rel1, rel2});
    if (rel1 > tolerance || rel2 > tolerance) {
      return {false, "gradient-norm score off by " +
                         fmt(std::max(rel1, rel2), 8)};
    }
  }
  return {true, "100 models: fitting/rejection/gradient-norm derivatives all "
                "within 1e-4 of central differences (worst " +
                    fmt(worst, 8) + ")"};
}

// ---------------------------------------------------------------------------
// 3. Information bounds on random discrete joints.

Matrix random_joint_table(Rng& rng, std::size_t nx, std::size_t k) {
  Matrix table(nx, k);
  double total = 0.0;
  for (double& v : table.values) {
    v = 0.01 + rng.uniform();
    total += v;
  }
  for (double& v : table.values) v /= total;
  double sum = 0.0;
  for (std::size_t i = 0; i + 1 < table.values.size(); ++i) {
    sum += table.values[i];
  }
  table.values.back() = 1.0 - sum;
  return table;
}

Matrix random_conditional(Rng& rng, std::size_t nx, std::size_t k) {
  Matrix q(nx, k);
  for (std::size_t r = 0; r < nx; ++r) {
    double total = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      q(r, c) = 0.05 + rng.uniform();
      total += q(r, c);
    }
    for (std::size_t c = 0; c < k; ++c) q(r, c) /= total;
  }
  return q;
}

Outcome criterion3() {
  Rng rng(20250816, 22);
  int violations = 0;
  double worst_gap = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t nx = 1 + rng.uniform_int(8);
    const std::size_t k = 2 + rng.uniform_int(4);
    const risk::DiscreteJoint joint =
        risk::make_discrete_joint(random_joint_table(rng, nx, k));
    const double mi = risk::exact_mutual_information(joint);

    Matrix q_true(nx, k);
    for (std::size_t r = 0; r < nx; ++r) {
      for (std::size_t c = 0; c < k; ++c) {
        q_true(r, c) = joint.table(r, c) / joint.marginal_x[r];
      }
    }
    const double tight = risk::mi_lower_bound_id(joint, q_true);
    worst_gap = std::max(worst_gap, std::abs(tight - mi));

    const Matrix q = random_conditional(rng, nx, k);
    const double lower = risk::mi_lower_bound_id(joint, q);
    if (lower > mi + 1e-9) ++violations;
    const double upper = risk::mi_upper_bound_ood(joint, joint.marginal_y, q);
    if (upper < mi - 1e-9) ++violations;
  }
  if (violations > 0) {
    return {false, std::to_string(violations) + " bound violations past 1e-9"};
  }
  if (worst_gap > 1e-9) {
    return {false,
            "lower bound not tight at the true conditional (worst gap " +
                fmt(worst_gap, 12) + ")"};
  }
  return {true, "1000 joints: no bound violations; worst tight-case gap " +
                    fmt(worst_gap, 12)};
}

// ---------------------------------------------------------------------------
// 4. Ranking metrics vs exhaustive oracles.

double auroc_oracle(const metrics::ScoreSet& s) {
  double u = 0.0;
  for (double id : s.id_scores) {
    for (double ood : s.ood_scores) {
      if (id > ood) {
        u += 1.0;
      } else if (id == ood) {
        u += 0.5;
      }
    }
  }
  return u / (static_cast<double>(s.id_scores.size()) *
              static_cast<double>(s.ood_scores.size()));
}

double aupr_oracle(const metrics::ScoreSet& s, metrics::Positive positive) {
  const bool id_positive = positive == metrics::Positive::kId;
  std::vector<double> pos;
  std::vector<double> neg;
  for (double v : s.id_scores) {
    (id_positive ? pos : neg).push_back(id_positive ? v : -v);
  }
  for (double v : s.ood_scores) {
    (id_positive ? neg : pos).push_back(id_positive ? v : -v);
  }
  std::set<double, std::greater<double>> thresholds(pos.begin(), pos.end());
  thresholds.insert(neg.begin(), neg.end());
  const double total_pos = static_cast<double>(pos.size());
  double area = 0.0;
  double tp_prev = 0.0;
  for (double t : thresholds) {
    double tp = 0.0;
    double fp = 0.0;
    for (double v : pos) {
      if (v >= t) tp += 1.0;
    }
    for (double v : neg) {
      if (v >= t) fp += 1.0;
    }
    if (tp > tp_prev) {
      area += (tp - tp_prev) / total_pos * (tp / (tp + fp));
    }
    tp_prev = tp;
  }
  return area;
}

struct ScanOracle {
  double tpr = 1.0;
  double fpr = 0.0;
};

ScanOracle scan_oracle(const metrics::ScoreSet& s, double level) {
  std::set<double, std::greater<double>> id_values(s.id_scores.begin(),
                                                   s.id_scores.end());
  const double n_id = static_cast<double>(s.id_scores.size());
  double threshold = *id_values.rbegin();
  double tpr = 1.0;
  for (double value : id_values) {
    double count_ge = 0.0;
    for (double v : s.id_scores) {
      if (v >= value) count_ge += 1.0;
    }
    const double tpr_here = count_ge / n_id;
    if (tpr_here >= level) {
      threshold = value;
      tpr = tpr_here;
      break;
    }
  }
  double ood_ge = 0.0;
  for (double v : s.ood_scores) {
    if (v >= threshold) ood_ge += 1.0;
  }
  return {tpr, ood_ge / static_cast<double>(s.ood_scores.size())};
}

Outcome criterion4() {
  Rng rng(20250816, 23);
  for (int trial = 0; trial < 200; ++trial) {
    metrics::ScoreSet s;
    const std::size_t n_id = 1 + rng.uniform_int(200);
    const std::size_t n_ood = 1 + rng.uniform_int(200);
    for (std::size_t i = 0; i < n_id; ++i) {
      s.id_scores.push_back(static_cast<double>(rng.uniform_int(25)) * 0.5);
    }
    for (std::size_t i = 0; i < n_ood; ++i) {
      s.ood_scores.push_back(static_cast<double>(rng.uniform_int(25)) * 0.5 -
                             2.0);
    }
    if (metrics::auroc(s) != auroc_oracle(s)) {
      return {false, "auroc mismatch on trial " + std::to_string(trial)};
    }
    if (metrics::aupr(s, metrics::Positive::kId) !=
        aupr_oracle(s, metrics::Positive::kId)) {
      return {false, "aupr-in mismatch on trial " + std::to_string(trial)};
    }
    if (metrics::aupr(s, metrics::Positive::kOod) !=
        aupr_oracle(s, metrics::Positive::kOod)) {
      return {false, "aupr-out mismatch on trial " + std::to_string(trial)};
    }
    const ScanOracle scan = scan_oracle(s, 0.95);
    if (metrics::fpr_at_tpr(s, 0.95) != scan.fpr) {
      return {false, "fpr@95 mismatch on trial " + std::to_string(trial)};
    }
    if (metrics::detection_error(s, 0.95) !=
        0.5 * (1.0 - scan.tpr) + 0.5 * scan.fpr) {
      return {false,
              "detection-error mismatch on trial " + std::to_string(trial)};
    }
  }
  return {true, "200 tied score sets: all five metrics equal their "
                "exhaustive oracles exactly"};
}

// ---------------------------------------------------------------------------
// 5. Synthetic-outlier construction invariants.

Outcome criterion5() {
  const Matrix means = data::circle_class_means(10, 2.0);
  Rng data_rng(7, 1);
  const data::Dataset train =
      data::gen_gaussian_mixture(10, 2, 100, means, 0.25, data_rng);
  const std::size_t n = train.inputs.rows;
  vicinity::VicinityConfig config;
  config.M = 10;

  Rng rng(7, 50);
  std::size_t checked = 0;
  const auto check_example = [&](const vicinity::OodExample& ex) -> Outcome {
    if (ex.constituent_indices.size() != 10 ||
        ex.constituent_indices.front() >= n) {
      return {false, "constituent index list malformed"};
    }
    const std::set<std::size_t> distinct(ex.constituent_indices.begin(),
                                         ex.constituent_indices.end());
    if (distinct.size() != 10 || *distinct.rbegin() >= n) {
      return {false, "constituent indices not distinct in-range"};
    }
    Vec mean(train.inputs.cols, 0.0);
    std::set<int> labels;
    for (std::size_t idx : ex.constituent_indices) {
      for (std::size_t j = 0; j < mean.size(); ++j) {
        mean[j] += train.inputs(idx, j);
      }
      labels.insert(train.labels[idx]);
    }
    for (std::size_t j = 0; j < mean.size(); ++j) {
      if (std::abs(mean[j] / 10.0 - ex.input[j]) > 1e-12) {
        return {false, "mixed input differs from the constituent mean"};
      }
    }
    const std::vector<int> want_set(labels.begin(), labels.end());
    if (ex.constituent_label_set != want_set) {
      return {false, "stored label set differs from the constituents'"};
    }
    if (labels.count(ex.complementary_label) == 0) {
      return {false, "complementary label outside the constituent label set"};
    }
    ++checked;
    return {true, ""};
  };

  for (std::size_t i = 0; i < 8720; ++i) {
    const Outcome out =
        check_example(vicinity::draw_ood_sample(train, i % n, config, rng));
    if (!out.ok) return out;
  }
  for (int batch = 0; batch < 20; ++batch) {
    const auto [id_half, ood_half] =
        vicinity::build_finetune_batch(train, 128, config, rng);
    if (id_half.size() != 64 || ood_half.size() != 64) {
      return {false, "128-example batch did not split 64/64"};
    }
    for (const auto& ex : ood_half) {
      const Outcome out = check_example(ex);
      if (!out.ok) return out;
    }
  }

  vicinity::VicinityConfig single;
  single.M = 1;
  for (std::size_t i = 0; i < 1000; ++i) {
    const std::size_t anchor = i % n;
    const vicinity::OodExample ex =
        vicinity::draw_ood_sample(train, anchor, single, rng);
    for (std::size_t j = 0; j < ex.input.size(); ++j) {
      if (ex.input[j] != train.inputs(anchor, j)) {
        return {false, "M=1 mixture is not the anchor bit-for-bit"};
      }
    }
    if (ex.constituent_label_set !=
            std::vector<int>{train.labels[anchor]} ||
        ex.complementary_label != train.labels[anchor]) {
      return {false, "M=1 label set is not the anchor's label"};
    }
  }

  return {true, std::to_string(checked) +
                    " mixtures verified; batches split 64/64; M=1 "
                    "reproduces anchors bit-for-bit"};
}

// ---------------------------------------------------------------------------
// 6-8. Training pipeline: shared per-seed cache.

struct SeedRun {
  experiment::ExperimentConfig config;
  experiment::PreparedData prepared;
  model::MlpClassifier pretrained;
  model::MlpClassifier finetuned;  // default mixing breadth
  double pre_accuracy = 0.0;
  double fine_accuracy = 0.0;
  std::vector<double> pre_auroc;   // per OOD set
  std::vector<double> fine_auroc;  // per OOD set
};

std::vector<double> msp_aurocs(const model::MlpClassifier& m,
                               const experiment::PreparedData& prepared) {
  std::vector<double> id_scores;
  id_scores.reserve(prepared.test.inputs.rows);
  for (std::size_t i = 0; i < prepared.test.inputs.rows; ++i) {
    id_scores.push_back(
        detectors::score_max_softmax(m, prepared.test.inputs.row(i)));
  }
  std::vector<double> out;
  for (const auto& [name, dataset] : prepared.ood_sets) {
    metrics::ScoreSet s;
    s.id_scores = id_scores;
    s.ood_scores.reserve(dataset.inputs.rows);
    for (std::size_t i = 0; i < dataset.inputs.rows; ++i) {
      s.ood_scores.push_back(
          detectors::score_max_softmax(m, dataset.inputs.row(i)));
    }
    out.push_back(metrics::auroc(s));
  }
  return out;
}

double mean(const std::vector<double>& values) {
  double total = 0.0;
  for (double v : values) total += v;
  return total / static_cast<double>(values.size());
}

std::vector<SeedRun> g_seed_runs;

Outcome criterion6() {
  g_seed_runs.clear();
  for (int s = 0; s < 5; ++s) {
    SeedRun run;
    run.config = experiment::default_config();
    run.config.seed = 1 + static_cast<std::uint64_t>(s);
    run.prepared = experiment::prepare_data(run.config);
    experiment::TrainResult pre =
        experiment::pretrain(run.config, run.prepared);
    experiment::TrainResult fine = experiment::finetune(
        run.config, run.prepared, pre.model, experiment::Variant::kLcvd);
    run.pre_accuracy = experiment::accuracy(pre.model, run.prepared.test);
    run.fine_accuracy = experiment::accuracy(fine.model, run.prepared.test);
    run.pre_auroc = msp_aurocs(pre.model, run.prepared);
    run.fine_auroc = msp_aurocs(fine.model, run.prepared);
    run.pretrained = std::move(pre.model);
    run.finetuned = std::move(fine.model);
    g_seed_runs.push_back(std::move(run));
  }

  std::vector<double> improvements;
  std::vector<double> accuracy_drops;
  int direction_hits = 0;
  for (const SeedRun& run : g_seed_runs) {
    bool improved_both = true;
    for (std::size_t set = 0; set < run.pre_auroc.size(); ++set) {
      improvements.push_back(run.fine_auroc[set] - run.pre_auroc[set]);
      if (!(run.fine_auroc[set] > run.pre_auroc[set])) improved_both = false;
    }
    if (improved_both) ++direction_hits;
    accuracy_drops.push_back(run.pre_accuracy - run.fine_accuracy);
  }
  const double median_improvement = median(improvements);
  const double median_drop = median(accuracy_drops);
  const double min_improvement =
      *std::min_element(improvements.begin(), improvements.end());

  std::string detail = std::to_string(direction_hits) +
                       "/5 seeds improved on both outlier sets; median gain " +
                       fmt(100.0 * median_improvement, 2) +
                       " pts (min " + fmt(100.0 * min_improvement, 2) +
                       "), median accuracy drop " + fmt(100.0 * median_drop, 2) +
                       " pts";
  const bool ok = direction_hits == 5 && median_improvement >= 0.02 &&
                  median_drop <= 0.02;
  return {ok, detail};
}

Outcome criterion7() {
  if (g_seed_runs.size() != 5) return {false, "seed cache unavailable"};
  std::vector<double> wide;  // default mixing breadth (M = 10)
  std::vector<double> narrow;  // M = 1
  for (const SeedRun& run : g_seed_runs) {
    wide.push_back(mean(run.fine_auroc));
    experiment::ExperimentConfig config = run.config;
    config.finetune.vicinity.M = 1;
    const experiment::TrainResult fine = experiment::finetune(
        config, run.prepared, run.pretrained, experiment::Variant::kLcvd);
    narrow.push_back(mean(msp_aurocs(fine.model, run.prepared)));
  }
  const double median_wide = median(wide);
  const double median_narrow = median(narrow);
  const std::string detail = "median AUROC " + fmt(100.0 * median_wide, 2) +
                             " at M=10 vs " + fmt(100.0 * median_narrow, 2) +
                             " at M=1";
  return {median_wide >= median_narrow + 0.01, detail};
}

Outcome criterion8() {
  if (g_seed_runs.size() != 5) return {false, "seed cache unavailable"};
  std::vector<double> lcvd_scores;
  for (const SeedRun& run : g_seed_runs) {
    lcvd_scores.push_back(mean(run.fine_auroc));
  }
  const double lcvd_median = median(lcvd_scores);

  std::string detail = "lcvd median " + fmt(100.0 * lcvd_median, 2);
  bool ok = true;
  for (const std::string& name : experiment::all_variant_names()) {
    if (name == "lcvd") continue;
    std::vector<double> scores;
    for (const SeedRun& run : g_seed_runs) {
      const experiment::TrainResult fine =
          experiment::finetune(run.config, run.prepared, run.pretrained,
                               experiment::variant_from_name(name));
      scores.push_back(mean(msp_aurocs(fine.model, run.prepared)));
    }
    const double variant_median = median(scores);
    detail += "; " + name + " " + fmt(100.0 * variant_median, 2);
    if (!(lcvd_median >= variant_median)) ok = false;
  }
  return {ok, detail};
}

// ---------------------------------------------------------------------------
// 9. Byte-identical re-runs.

experiment::ExperimentConfig small_config() {
  experiment::ExperimentConfig config = experiment::default_config();
  config.seed = 5;
  config.data.num_classes = 4;
  config.data.train_per_class = 16;
  config.data.test_per_class = 10;
  config.data.ood_ring_n = 30;
  config.hidden_dims = {8};
  config.pretrain.epochs = 3;
  config.pretrain.milestones = {2};
  config.pretrain.batch_size = 32;
  config.pretrain.learning_rate = 1e-4;
  config.finetune.epochs = 2;
  config.finetune.vicinity.M = 5;
  return config;
}

std::vector<std::string> run_pipeline(const std::string& dir) {
  std::filesystem::create_directories(dir);
  // The artifact directory differs between the two runs, but the config —
  // including its out_dir — must be identical for the outputs to match.
  const experiment::ExperimentConfig config = small_config();
  const experiment::PreparedData prepared = experiment::prepare_data(config);
  const experiment::TrainResult pre = experiment::pretrain(config, prepared);
  const experiment::TrainResult fine = experiment::finetune(
      config, prepared, pre.model, experiment::Variant::kLcvd);
  const experiment::RunReport report =
      experiment::evaluate(config, fine.model, prepared);

  experiment::write_config_echo(dir + "/config.json", config, "run");
  experiment::write_curve_csv(dir + "/pretrain_curve.csv", pre.curve);
  experiment::write_curve_csv(dir + "/finetune_curve.csv", fine.curve);
  model::save_checkpoint(fine.model, dir + "/model.ckpt");
  experiment::write_report_csv(dir + "/report.csv", report);
  experiment::write_report_json(dir + "/report.json", report, config, "run");
  const detectors::FittedDetector fitted = detectors::fit_detector(
      fine.model, experiment::detector_config(config, "msp"), prepared.train);
  experiment::write_scores_csv(dir + "/scores.csv", fine.model, fitted,
                               prepared);
  experiment::write_heatmap_csv(dir + "/heatmap.csv", fine.model, -3.0, 3.0,
                                17);
  experiment::write_theorem_csv(dir + "/theorem.csv", 10, 10, 5000,
                                config.seed);
  return {"config.json", "pretrain_curve.csv", "finetune_curve.csv",
          "model.ckpt", "report.csv",          "report.json",
          "scores.csv",  "heatmap.csv",        "theorem.csv"};
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

Outcome criterion9() {
  const std::string dir_a = "./acceptance_rerun_a";
  const std::string dir_b = "./acceptance_rerun_b";
  std::filesystem::remove_all(dir_a);
  std::filesystem::remove_all(dir_b);
  const std::vector<std::string> files = run_pipeline(dir_a);
  run_pipeline(dir_b);
  for (const std::string& file : files) {
    const std::string a = slurp(dir_a + "/" + file);
    const std::string b = slurp(dir_b + "/" + file);
    if (a.empty()) return {false, file + " is empty or missing"};
    if (a != b) return {false, file + " differs between identical runs"};
  }
  return {true, std::to_string(files.size()) +
                    " artifacts byte-identical across re-runs"};
}

}  // namespace

int main() {
  struct Criterion {
    int number;
    const char* name;
    Outcome (*run)();
    double budget_seconds;  // 0 = no budget
  };
  const std::vector<Criterion> criteria = {
      {1, "partition law", criterion1, 1.0},
      {2, "gradient suite", criterion2, 10.0},
      {3, "information bounds", criterion3, 5.0},
      {4, "metric exactness", criterion4, 10.0},
      {5, "mixture invariants", criterion5, 5.0},
      {6, "finetuning improves detection", criterion6, 120.0},
      {7, "mixing breadth trend", criterion7, 600.0},
      {8, "ablation ordering", criterion8, 900.0},
      {9, "byte-identical re-runs", criterion9, 0.0},
  };

  bool all_ok = true;
  for (const Criterion& criterion : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome outcome;
    try {
      outcome = criterion.run();
    } catch (const std::exception& e) {
      outcome = {false, std::string("exception: ") + e.what()};
    }
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
            .count();
    if (criterion.budget_seconds > 0.0 &&
        seconds > criterion.budget_seconds && outcome.ok) {
      outcome.ok = false;
      outcome.detail += " [over the " + fmt(criterion.budget_seconds, 0) +
                        "s budget]";
    }
    all_ok = all_ok && outcome.ok;
    std::printf("[%s] criterion %d (%s): %s (%.2fs)\n",
                outcome.ok ? "PASS" : "FAIL", criterion.number, criterion.name,
                outcome.detail.c_str(), seconds);
    std::fflush(stdout);
  }
  return all_ok ? 0 : 1;
}
