#include "lcvd/detectors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "lcvd/numerics.hpp"

namespace lcvd::detectors {
namespace {

std::size_t argmax(const Vec& v) {
  return static_cast<std::size_t>(
      std::max_element(v.begin(), v.end()) - v.begin());
}

// Final-layer affine map z = W_L f + b_L, computed exactly as forward does so
// clip-free rectified scores match energy scores bit-for-bit.
Vec final_layer_logits(const model::MlpClassifier& m, const Vec& features) {
  Vec logits;
  matvec(m.weights.back(), features, logits);
  for (std::size_t i = 0; i < logits.size(); ++i) {
    logits[i] += m.biases.back()[i];
  }
  return logits;
}

}  // namespace

DetectorKind detector_from_name(const std::string& name) {
  if (name == "msp") return DetectorKind::kMsp;
  if (name == "odin") return DetectorKind::kOdin;
  if (name == "energy") return DetectorKind::kEnergy;
  if (name == "maha") return DetectorKind::kMahalanobis;
  if (name == "ra") return DetectorKind::kRectified;
  if (name == "gradnorm") return DetectorKind::kGradNorm;
  throw std::invalid_argument("unknown detector: " + name);
}

std::string detector_name(DetectorKind kind) {
  switch (kind) {
    case DetectorKind::kMsp: return "msp";
    case DetectorKind::kOdin: return "odin";
    case DetectorKind::kEnergy: return "energy";
    case DetectorKind::kMahalanobis: return "maha";
    case DetectorKind::kRectified: return "ra";
    case DetectorKind::kGradNorm: return "gradnorm";
  }
  throw std::invalid_argument("unknown detector kind");
}

void validate_detector_config(const DetectorConfig& config) {
  if (!(config.temperature > 0.0)) {
    throw std::invalid_argument("DetectorConfig: temperature must be > 0");
  }
  if (config.epsilon < 0.0) {
    throw std::invalid_argument("DetectorConfig: epsilon must be >= 0");
  }
  if (!(config.percentile > 0.0) || config.percentile > 100.0) {
    throw std::invalid_argument(
        "DetectorConfig: percentile must be in (0, 100]");
  }
  if (!(config.ridge > 0.0)) {
    throw std::invalid_argument("DetectorConfig: ridge must be > 0");
  }
  if (config.gradnorm_order != 1 && config.gradnorm_order != 2) {
    throw std::invalid_argument("DetectorConfig: gradnorm order must be 1 or 2");
  }
}

double score_max_softmax(const model::MlpClassifier& m, const Vec& x) {
  const auto trace = model::forward(m, x);
  return *std::max_element(trace.probabilities.begin(),
                           trace.probabilities.end());
}

double score_odin(const model::MlpClassifier& m, const Vec& x,
                  double temperature, double epsilon) {
  if (!(temperature > 0.0) || epsilon < 0.0) {
    throw std::invalid_argument("score_odin: need T > 0, epsilon >= 0");
  }
  Vec probe = x;
  if (epsilon > 0.0) {
    const auto trace = model::forward(m, x);
    const Vec p = softmax(trace.logits, temperature);
    const std::size_t top = argmax(p);
    // d(-log p_top)/dlogit_k = (p_k - [k == top]) / T
    Vec dloss(p.size());
    for (std::size_t k = 0; k < p.size(); ++k) {
      dloss[k] = (p[k] - (k == top ? 1.0 : 0.0)) / temperature;
    }
    const auto grads = model::backward(m, trace, dloss);
    for (std::size_t j = 0; j < probe.size(); ++j) {
      const double g = grads.input_gradient[j];
      const double sign = g > 0.0 ? 1.0 : (g < 0.0 ? -1.0 : 0.0);
      probe[j] -= epsilon * sign;
    }
  }
  const auto trace = model::forward(m, probe);
  const Vec p = softmax(trace.logits, temperature);
  return *std::max_element(p.begin(), p.end());
}

double score_energy(const model::MlpClassifier& m, const Vec& x,
                    double temperature) {
  const auto trace = model::forward(m, x);
  return log_sum_exp(trace.logits, temperature);
}

MahalanobisStats fit_mahalanobis(const model::MlpClassifier& m,
                                 const data::Dataset& train, double ridge) {
  if (!(ridge > 0.0)) {
    throw std::invalid_argument("fit_mahalanobis: ridge must be > 0");
  }
  if (!train.labels_usable) {
    throw std::invalid_argument("fit_mahalanobis: training labels required");
  }
  const auto k = static_cast<std::size_t>(train.num_classes);
  const std::size_t n = train.inputs.rows;

  std::vector<Vec> features;
  features.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    features.push_back(model::forward(m, train.inputs.row(i)).penultimate_features);
  }
  const std::size_t dim = features.front().size();

  MahalanobisStats stats;
  stats.class_means.assign(k, Vec(dim, 0.0));
  std::vector<std::size_t> counts(k, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto label = static_cast<std::size_t>(train.labels[i]);
    ++counts[label];
    for (std::size_t j = 0; j < dim; ++j) {
      stats.class_means[label][j] += features[i][j];
    }
  }
  for (std::size_t c = 0; c < k; ++c) {
    if (counts[c] == 0) {
      throw std::invalid_argument(
          "fit_mahalanobis: every class must appear in train");
    }
    for (double& value : stats.class_means[c]) {
      value /= static_cast<double>(counts[c]);
    }
  }

  stats.covariance = Matrix(dim, dim);
  Vec centered(dim);
  for (std::size_t i = 0; i < n; ++i) {
    const auto label = static_cast<std::size_t>(train.labels[i]);
    for (std::size_t j = 0; j < dim; ++j) {
      centered[j] = features[i][j] - stats.class_means[label][j];
    }
    add_scaled_outer(stats.covariance, centered, centered, 1.0);
  }
  for (double& value : stats.covariance.values) {
    value /= static_cast<double>(n);
  }
  for (std::size_t j = 0; j < dim; ++j) {
    stats.covariance(j, j) += ridge;
  }

  Matrix lower;
  try {
    lower = cholesky_factor(stats.covariance);
  } catch (const std::invalid_argument&) {
    throw std::runtime_error(
        "fit_mahalanobis: covariance singular after regularization");
  }
  stats.inverse = Matrix(dim, dim);
  Vec basis(dim, 0.0);
  for (std::size_t j = 0; j < dim; ++j) {
    basis[j] = 1.0;
    const Vec column = cholesky_solve(lower, basis);
    basis[j] = 0.0;
    for (std::size_t i = 0; i < dim; ++i) {
      stats.inverse(i, j) = column[i];
    }
  }
  return stats;
}

double score_mahalanobis(const model::MlpClassifier& m,
                         const MahalanobisStats& stats, const Vec& x) {
  const auto trace = model::forward(m, x);
  const Vec& f = trace.penultimate_features;
  if (stats.class_means.empty() || stats.class_means.front().size() != f.size()) {
    throw std::invalid_argument("score_mahalanobis: stats/model mismatch");
  }
  double best = std::numeric_limits<double>::infinity();
  Vec centered(f.size());
  Vec transformed;
  for (const Vec& mean : stats.class_means) {
    for (std::size_t j = 0; j < f.size(); ++j) centered[j] = f[j] - mean[j];
    matvec(stats.inverse, centered, transformed);
    best = std::min(best, dot(centered, transformed));
  }
  return -best;
}

double fit_activation_clip(const model::MlpClassifier& m,
                           const data::Dataset& train, double percentile) {
  if (!(percentile > 0.0) || percentile > 100.0) {
    throw std::invalid_argument(
        "fit_activation_clip: percentile must be in (0, 100]");
  }
  Vec activations;
  activations.reserve(train.inputs.rows);
  for (std::size_t i = 0; i < train.inputs.rows; ++i) {
    const auto trace = model::forward(m, train.inputs.row(i));
    activations.insert(activations.end(), trace.penultimate_features.begin(),
                       trace.penultimate_features.end());
  }
  std::sort(activations.begin(), activations.end());
  // Nearest-rank percentile: the ceil(c/100 * n)-th smallest value.
  const auto n = static_cast<double>(activations.size());
  auto rank = static_cast<std::size_t>(std::ceil(percentile / 100.0 * n));
  rank = std::min(std::max<std::size_t>(rank, 1), activations.size());
  return activations[rank - 1];
}

double score_rectified(const model::MlpClassifier& m, const Vec& x,
                       double clip_threshold, double temperature) {
  const auto trace = model::forward(m, x);
  Vec clipped = trace.penultimate_features;
  for (double& value : clipped) value = std::min(value, clip_threshold);
  const Vec logits = final_layer_logits(m, clipped);
  return log_sum_exp(logits, temperature);
}

double score_gradnorm(const model::MlpClassifier& m, const Vec& x,
                      double temperature, int order) {
  if (!(temperature > 0.0) || (order != 1 && order != 2)) {
    throw std::invalid_argument("score_gradnorm: need T > 0, order in {1,2}");
  }
  const auto trace = model::forward(m, x);
  const Vec p = softmax(trace.logits, temperature);
  double mean_log = 0.0;
  Vec logs(p.size());
  for (std::size_t j = 0; j < p.size(); ++j) {
    logs[j] = std::log(p[j]);
    mean_log += p[j] * logs[j];
  }
  // d KL(p || uniform) / d logit_j = p_j (log p_j - sum_k p_k log p_k) / T.
  // The weight gradient is the outer product dlogits x features, whose norm
  // factorizes into the two vector norms.
  double dz_norm = 0.0;
  double feat_norm = 0.0;
  const Vec& f = trace.penultimate_features;
  if (order == 1) {
    for (std::size_t j = 0; j < p.size(); ++j) {
      dz_norm += std::abs(p[j] * (logs[j] - mean_log) / temperature);
    }
    for (double value : f) feat_norm += std::abs(value);
  } else {
    for (std::size_t j = 0; j < p.size(); ++j) {
      const double dz = p[j] * (logs[j] - mean_log) / temperature;
      dz_norm += dz * dz;
    }
    dz_norm = std::sqrt(dz_norm);
    for (double value : f) feat_norm += value * value;
    feat_norm = std::sqrt(feat_norm);
  }
  return dz_norm * feat_norm;
}

FittedDetector fit_detector(const model::MlpClassifier& m,
                            const DetectorConfig& config,
                            const data::Dataset& train) {
  validate_detector_config(config);
  FittedDetector fitted;
  fitted.config = config;
  if (config.kind == DetectorKind::kMahalanobis) {
    fitted.mahalanobis = fit_mahalanobis(m, train, config.ridge);
  } else if (config.kind == DetectorKind::kRectified) {
    fitted.clip_threshold = fit_activation_clip(m, train, config.percentile);
  }
  return fitted;
}

double score_sample(const model::MlpClassifier& m, const FittedDetector& fitted,
                    const Vec& x) {
  switch (fitted.config.kind) {
    case DetectorKind::kMsp:
      return score_max_softmax(m, x);
    case DetectorKind::kOdin:
      return score_odin(m, x, fitted.config.temperature, fitted.config.epsilon);
    case DetectorKind::kEnergy:
      return score_energy(m, x, fitted.config.temperature);
    case DetectorKind::kMahalanobis:
      return score_mahalanobis(m, fitted.mahalanobis, x);
    case DetectorKind::kRectified:
      return score_rectified(m, x, fitted.clip_threshold,
                             fitted.config.temperature);
    case DetectorKind::kGradNorm:
      return score_gradnorm(m, x, fitted.config.temperature,
                            fitted.config.gradnorm_order);
  }
  throw std::invalid_argument("score_sample: unknown detector kind");
}

}  // namespace lcvd::detectors
