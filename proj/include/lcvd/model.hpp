#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "lcvd/matrix.hpp"
#include "lcvd/rng.hpp"

namespace lcvd::model {

// Raised when an update produces non-finite parameters; the CLI maps it to
// its own exit code.
struct TrainingDivergedError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Fully connected ReLU network with identity output layer (softmax applied
// by consumers). layer_dims = [D, h_1, ..., h_L, K]; weights[l] is
// layer_dims[l+1] x layer_dims[l].
struct MlpClassifier {
  std::vector<std::size_t> layer_dims;
  std::vector<Matrix> weights;
  std::vector<Vec> biases;

  std::size_t num_layers() const { return weights.size(); }
  std::size_t input_dim() const { return layer_dims.front(); }
  std::size_t output_dim() const { return layer_dims.back(); }
};

// Everything recorded during one forward pass. activations[0] is the input;
// activations[l+1] is layer l's output after its nonlinearity (identity for
// the final layer, so activations.back() == logits).
struct ForwardTrace {
  std::vector<Vec> pre_activations;  // one per layer
  std::vector<Vec> activations;      // num_layers + 1 entries
  Vec penultimate_features;          // activations[num_layers - 1]
  Vec logits;
  Vec probabilities;  // softmax(logits, T=1)
};

struct Gradients {
  std::vector<Matrix> weights;
  std::vector<Vec> biases;
  Vec input_gradient;
};

struct TrainConfig {
  int batch_size = 128;  // must be even: finetuning splits it in halves
  double learning_rate = 0.1;
  int epochs = 40;
  std::vector<int> milestones = {20, 30};
  double decay = 0.1;
  std::uint64_t seed = 0;
  double weight_decay = 0.0;  // optional, off by default
  double momentum = 0.0;      // optional, off by default
};

void validate_train_config(const TrainConfig& config);

// He-initialized weights (std sqrt(2/fan_in)), zero biases. layer_dims must
// have >= 2 entries, all positive.
MlpClassifier make_mlp(const std::vector<std::size_t>& layer_dims, Rng& rng);

ForwardTrace forward(const MlpClassifier& model, const Vec& x);

// Exact chain rule from dloss/dlogits to every parameter and to the input.
// ReLU subgradient at exactly 0 is 0.
Gradients backward(const MlpClassifier& model, const ForwardTrace& trace,
                   const Vec& dloss_dlogits);

// Adds the same gradients into `acc` (shapes must match the model).
void accumulate_backward(const MlpClassifier& model, const ForwardTrace& trace,
                         const Vec& dloss_dlogits, Gradients& acc);

// Zero-filled gradient buffers shaped like the model.
Gradients zero_gradients(const MlpClassifier& model);

// theta <- theta - mu * grad; throws TrainingDivergedError if any parameter
// leaves the finite range.
void sgd_step(MlpClassifier& model, const Gradients& grads, double mu);

// Piecewise-constant schedule: learning_rate * decay^(milestones passed).
// Requires 0 <= epoch < config.epochs.
double lr_at_epoch(const TrainConfig& config, int epoch);

// Binary checkpoint: magic "LCVD1", u32 layer-dim count, u32 dims, then per
// layer row-major little-endian f64 weights followed by biases.
// load(save(m)) is bit-identical.
void save_checkpoint(const MlpClassifier& model, const std::string& path);
MlpClassifier load_checkpoint(const std::string& path);

}  // namespace lcvd::model
