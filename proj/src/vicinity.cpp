#include "lcvd/vicinity.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace lcvd::vicinity {
namespace {

int distinct_class_count(const data::Dataset& dataset) {
  std::vector<bool> seen(static_cast<std::size_t>(dataset.num_classes), false);
  int distinct = 0;
  for (int label : dataset.labels) {
    if (!seen[static_cast<std::size_t>(label)]) {
      seen[static_cast<std::size_t>(label)] = true;
      ++distinct;
    }
  }
  return distinct;
}

}  // namespace

void validate_vicinity_config(const VicinityConfig& config,
                              const data::Dataset& dataset) {
  if (config.M < 1 || config.M > 1000) {
    throw std::invalid_argument("VicinityConfig: M must be in [1, 1000]");
  }
  if (static_cast<std::size_t>(config.M) > dataset.inputs.rows) {
    throw std::invalid_argument("VicinityConfig: M exceeds dataset size");
  }
}

data::LabeledExample sample_dirac(const data::Dataset& dataset,
                                  std::size_t index) {
  if (index >= dataset.inputs.rows) {
    throw std::out_of_range("sample_dirac: index out of range");
  }
  data::LabeledExample example;
  example.input = dataset.inputs.row(index);
  example.label = dataset.labels[index];
  example.label_kind = data::LabelKind::kGroundTruth;
  return example;
}

Vec mix_inputs(const std::vector<Vec>& constituents) {
  if (constituents.empty()) {
    throw std::invalid_argument("mix_inputs: empty constituent list");
  }
  const std::size_t dim = constituents.front().size();
  for (const Vec& c : constituents) {
    if (c.size() != dim) {
      throw std::invalid_argument("mix_inputs: dimension mismatch");
    }
  }
  if (constituents.size() == 1) return constituents.front();
  Vec sum(dim, 0.0);
  for (const Vec& c : constituents) {
    for (std::size_t j = 0; j < dim; ++j) sum[j] += c[j];
  }
  const double inv_m = 1.0 / static_cast<double>(constituents.size());
  for (double& value : sum) value *= inv_m;
  return sum;
}

OodExample draw_ood_sample(const data::Dataset& dataset,
                           std::size_t anchor_index,
                           const VicinityConfig& config, Rng& rng) {
  validate_vicinity_config(config, dataset);
  const std::size_t n = dataset.inputs.rows;
  if (anchor_index >= n) {
    throw std::out_of_range("draw_ood_sample: anchor index out of range");
  }
  const std::size_t m = static_cast<std::size_t>(config.M);
  if (config.companion_policy == CompanionPolicy::kDistinctClass &&
      config.M > distinct_class_count(dataset)) {
    throw std::invalid_argument(
        "draw_ood_sample: distinct-class policy needs M <= represented "
        "classes");
  }

  OodExample example;
  example.constituent_indices.reserve(m);
  example.constituent_indices.push_back(anchor_index);
  std::vector<bool> used_index(n, false);
  used_index[anchor_index] = true;
  std::vector<bool> used_class(static_cast<std::size_t>(dataset.num_classes),
                               false);
  used_class[static_cast<std::size_t>(dataset.labels[anchor_index])] = true;
  while (example.constituent_indices.size() < m) {
    const auto candidate = static_cast<std::size_t>(
        rng.uniform_int(static_cast<std::uint64_t>(n)));
    if (used_index[candidate]) continue;
    const auto cls = static_cast<std::size_t>(dataset.labels[candidate]);
    if (config.companion_policy == CompanionPolicy::kDistinctClass &&
        used_class[cls]) {
      continue;
    }
    used_index[candidate] = true;
    used_class[cls] = true;
    example.constituent_indices.push_back(candidate);
  }

  std::vector<Vec> inputs;
  inputs.reserve(m);
  for (std::size_t index : example.constituent_indices) {
    inputs.push_back(dataset.inputs.row(index));
  }
  example.input = mix_inputs(inputs);

  example.constituent_label_set.reserve(m);
  for (std::size_t index : example.constituent_indices) {
    example.constituent_label_set.push_back(dataset.labels[index]);
  }
  std::sort(example.constituent_label_set.begin(),
            example.constituent_label_set.end());
  example.constituent_label_set.erase(
      std::unique(example.constituent_label_set.begin(),
                  example.constituent_label_set.end()),
      example.constituent_label_set.end());

  const auto pick = static_cast<std::size_t>(rng.uniform_int(
      static_cast<std::uint64_t>(example.constituent_label_set.size())));
  example.complementary_label = example.constituent_label_set[pick];
  example.label_kind = data::LabelKind::kComplementary;
  return example;
}

std::pair<std::vector<data::LabeledExample>, std::vector<OodExample>>
build_finetune_batch(const data::Dataset& dataset, int b,
                     const VicinityConfig& config, Rng& rng) {
  validate_vicinity_config(config, dataset);
  if (b < 2 || b % 2 != 0) {
    throw std::invalid_argument("build_finetune_batch: b must be even >= 2");
  }
  const std::size_t n = dataset.inputs.rows;
  const std::size_t half = static_cast<std::size_t>(b) / 2;
  if (half > n) {
    throw std::invalid_argument("build_finetune_batch: b/2 exceeds dataset");
  }

  // Partial Fisher-Yates: first `half` entries become a uniform draw without
  // replacement.
  std::vector<std::size_t> indices(n);
  std::iota(indices.begin(), indices.end(), 0);
  std::vector<data::LabeledExample> id_batch;
  id_batch.reserve(half);
  for (std::size_t j = 0; j < half; ++j) {
    const std::size_t swap_with =
        j + static_cast<std::size_t>(
                rng.uniform_int(static_cast<std::uint64_t>(n - j)));
    std::swap(indices[j], indices[swap_with]);
    id_batch.push_back(sample_dirac(dataset, indices[j]));
  }

  std::vector<OodExample> ood_batch;
  ood_batch.reserve(half);
  for (std::size_t j = 0; j < half; ++j) {
    const auto anchor = static_cast<std::size_t>(
        rng.uniform_int(static_cast<std::uint64_t>(n)));
    ood_batch.push_back(draw_ood_sample(dataset, anchor, config, rng));
  }
  return {std::move(id_batch), std::move(ood_batch)};
}

}  // namespace lcvd::vicinity
