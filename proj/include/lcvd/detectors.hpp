#pragma once

#include <string>
#include <vector>

#include "lcvd/dataset.hpp"
#include "lcvd/matrix.hpp"
#include "lcvd/model.hpp"

namespace lcvd::detectors {

// All scores follow the ID-high convention: larger means more
// in-distribution.
enum class DetectorKind { kMsp, kOdin, kEnergy, kMahalanobis, kRectified, kGradNorm };

// Parse/format the CLI names (msp, odin, energy, maha, ra, gradnorm).
DetectorKind detector_from_name(const std::string& name);
std::string detector_name(DetectorKind kind);

struct DetectorConfig {
  DetectorKind kind = DetectorKind::kMsp;
  double temperature = 1.0;   // T > 0 (odin default 1000)
  double epsilon = 0.0;       // odin input perturbation, >= 0
  double percentile = 90.0;   // rectification percentile c in (0, 100]
  double ridge = 1e-3;        // mahalanobis covariance ridge, > 0
  int gradnorm_order = 1;     // 1 or 2
};

void validate_detector_config(const DetectorConfig& config);

struct MahalanobisStats {
  std::vector<Vec> class_means;  // one per class, penultimate space
  Matrix covariance;             // pooled + ridge on the diagonal
  Matrix inverse;                // inverse of `covariance`
};

double score_max_softmax(const model::MlpClassifier& m, const Vec& x);

// Perturbs x against the gradient of -log max-softmax_T, then reports the
// perturbed max softmax at temperature T. epsilon = 0, T = 1 reproduces
// score_max_softmax bit-for-bit.
double score_odin(const model::MlpClassifier& m, const Vec& x,
                  double temperature, double epsilon);

// T * log sum_k exp(logit_k / T) (the negated energy).
double score_energy(const model::MlpClassifier& m, const Vec& x,
                    double temperature);

// Per-class penultimate means and pooled ridge-regularized covariance.
// Every class must appear in train.
MahalanobisStats fit_mahalanobis(const model::MlpClassifier& m,
                                 const data::Dataset& train, double ridge);

// -min_k (f - mu_k)^T Sigma^{-1} (f - mu_k) on penultimate features.
double score_mahalanobis(const model::MlpClassifier& m,
                         const MahalanobisStats& stats, const Vec& x);

// c-th percentile (nearest-rank) over every penultimate activation of train.
double fit_activation_clip(const model::MlpClassifier& m,
                           const data::Dataset& train, double percentile);

// Min-clips penultimate activations at the threshold, recomputes the final
// layer, and returns the energy score. A threshold above every activation
// reproduces score_energy bit-for-bit.
double score_rectified(const model::MlpClassifier& m, const Vec& x,
                       double clip_threshold, double temperature);

// Norm (order 1 or 2) of the gradient of KL(softmax_T(logits) || uniform)
// with respect to the final-layer weights.
double score_gradnorm(const model::MlpClassifier& m, const Vec& x,
                      double temperature, int order);

// A detector plus whatever it fitted on the training set.
struct FittedDetector {
  DetectorConfig config;
  MahalanobisStats mahalanobis;  // kMahalanobis only
  double clip_threshold = 0.0;   // kRectified only
};

FittedDetector fit_detector(const model::MlpClassifier& m,
                            const DetectorConfig& config,
                            const data::Dataset& train);

double score_sample(const model::MlpClassifier& m, const FittedDetector& fitted,
                    const Vec& x);

}  // namespace lcvd::detectors
