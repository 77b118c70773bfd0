#pragma once

#include <string>
#include <vector>

#include "lcvd/matrix.hpp"
#include "lcvd/rng.hpp"

namespace lcvd::data {

// A labeled sample set. `labels_usable` is false for OOD sets, whose labels
// are placeholders (all zero) and must not feed classification losses.
struct Dataset {
  Matrix inputs;            // N x D
  std::vector<int> labels;  // length N, each in [0, num_classes)
  int num_classes = 0;
  std::string name;
  bool labels_usable = true;
};

enum class LabelKind { kGroundTruth, kComplementary };

// One training example; complementary labels mark classes the input does
// NOT belong to.
struct LabeledExample {
  Vec input;
  int label = 0;
  LabelKind label_kind = LabelKind::kGroundTruth;
};

// Per-feature affine normalization statistics fitted on a training set.
struct NormStats {
  Vec mean;
  Vec stddev;  // population std, floored at 1e-8
};

// Class means evenly spaced on a circle of the given radius (2-D).
Matrix circle_class_means(int num_classes, double radius);

// K*n_per_class samples; sample i of class k = class_means[k] + sigma*N(0,I).
// Class-major order (all of class 0, then class 1, ...).
Dataset gen_gaussian_mixture(int num_classes, int dim, int n_per_class,
                             const Matrix& class_means, double sigma, Rng& rng);

// n points with every coordinate uniform in [low, high).
Dataset gen_ood_uniform(int n, int dim, double low, double high, Rng& rng);

// n 2-D points at angle ~ U[0, 2pi), radius ~ U[inner, outer) (drawn in that
// order per point); requires 0 < inner < outer.
Dataset gen_ood_ring(int n, int dim, double inner_radius, double outer_radius,
                     Rng& rng);

// Point-wise source.inputs + offset; labels zeroed and marked unusable.
Dataset gen_ood_shifted(const Dataset& source, const Vec& offset);

// IDX pair (big-endian magics 0x00000803 / 0x00000801); pixels scaled to
// [0,1]. Format errors name the byte offset.
Dataset load_idx(const std::string& images_path, const std::string& labels_path);

// CSV with header `label,f0,f1,...`, one sample per line. Format errors name
// the line number.
Dataset load_csv(const std::string& path);

// Writes the load_csv format; numeric content round-trips through load_csv.
void write_csv(const std::string& path, const Dataset& dataset);

// Per-feature mean/std over `train` (population std, floored at 1e-8).
NormStats normalize_fit(const Dataset& train);

// (x - mean) / std per feature using the fitted stats.
Dataset normalize_apply(const NormStats& stats, const Dataset& dataset);

}  // namespace lcvd::data
