#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "lcvd/dataset.hpp"
#include "lcvd/rng.hpp"

namespace lcvd::vicinity {

enum class CompanionPolicy { kAnySample, kDistinctClass };

// Label policy is always uniform-over-set; only the companion draw varies.
struct VicinityConfig {
  int M = 10;  // constituents per mixture, 1 <= M <= min(N, 1000)
  CompanionPolicy companion_policy = CompanionPolicy::kAnySample;
};

// One synthetic OOD sample: the mean of M in-distribution inputs plus a
// complementary label drawn from the constituents' label set.
struct OodExample {
  Vec input;                              // mean of the constituents
  int complementary_label = 0;            // in constituent_label_set
  std::vector<int> constituent_label_set;  // sorted ascending, distinct
  std::vector<std::size_t> constituent_indices;  // anchor first, size M
  data::LabelKind label_kind = data::LabelKind::kComplementary;
};

void validate_vicinity_config(const VicinityConfig& config,
                              const data::Dataset& dataset);

// Exact copy of sample `index` with its ground-truth label.
data::LabeledExample sample_dirac(const data::Dataset& dataset,
                                  std::size_t index);

// Arithmetic mean of equal-length vectors; a single input returns itself
// bit-exactly.
Vec mix_inputs(const std::vector<Vec>& constituents);

// Draws M-1 companions for the anchor (uniform without replacement from the
// other samples, or class-distinct under that policy), mixes inputs, and
// draws the complementary label uniformly from the constituent label set.
// Draw order: companions in sequence, then the label.
OodExample draw_ood_sample(const data::Dataset& dataset,
                           std::size_t anchor_index,
                           const VicinityConfig& config, Rng& rng);

// b/2 ID examples drawn uniformly without replacement plus b/2 OOD examples
// from independently drawn anchors (with replacement across examples).
std::pair<std::vector<data::LabeledExample>, std::vector<OodExample>>
build_finetune_batch(const data::Dataset& dataset, int b,
                     const VicinityConfig& config, Rng& rng);

}  // namespace lcvd::vicinity
