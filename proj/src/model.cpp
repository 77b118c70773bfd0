#include "lcvd/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "lcvd/numerics.hpp"

namespace lcvd::model {
namespace {

void check_model(const MlpClassifier& m) {
  if (m.layer_dims.size() < 2 || m.weights.size() != m.layer_dims.size() - 1 ||
      m.biases.size() != m.weights.size()) {
    throw std::invalid_argument("MlpClassifier: inconsistent layer structure");
  }
  for (std::size_t l = 0; l < m.weights.size(); ++l) {
    if (m.weights[l].rows != m.layer_dims[l + 1] ||
        m.weights[l].cols != m.layer_dims[l] ||
        m.biases[l].size() != m.layer_dims[l + 1]) {
      throw std::invalid_argument("MlpClassifier: weight shape mismatch");
    }
  }
}

void check_trace(const MlpClassifier& m, const ForwardTrace& trace) {
  if (trace.activations.size() != m.num_layers() + 1 ||
      trace.pre_activations.size() != m.num_layers()) {
    throw std::invalid_argument("backward: trace does not match model depth");
  }
  for (std::size_t l = 0; l <= m.num_layers(); ++l) {
    if (trace.activations[l].size() != m.layer_dims[l]) {
      throw std::invalid_argument("backward: trace width mismatch");
    }
  }
}

// Core reverse pass shared by backward/accumulate_backward.
void backprop(const MlpClassifier& model, const ForwardTrace& trace,
              const Vec& dloss_dlogits, Gradients& grads) {
  const std::size_t num_layers = model.num_layers();
  Vec delta = dloss_dlogits;  // d loss / d pre_activation of current layer
  Vec next;
  for (std::size_t l = num_layers; l-- > 0;) {
    if (l != num_layers - 1) {
      // Pull back through ReLU; subgradient at exactly 0 is 0.
      for (std::size_t i = 0; i < delta.size(); ++i) {
        if (!(trace.pre_activations[l][i] > 0.0)) delta[i] = 0.0;
      }
    }
    add_scaled_outer(grads.weights[l], delta, trace.activations[l], 1.0);
    for (std::size_t i = 0; i < delta.size(); ++i) {
      grads.biases[l][i] += delta[i];
    }
    matvec_transposed(model.weights[l], delta, next);
    std::swap(delta, next);
  }
  for (std::size_t j = 0; j < delta.size(); ++j) {
    grads.input_gradient[j] += delta[j];
  }
}

void append_u32_le(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) {
    out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
  }
}

void append_f64_le(std::string& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) {
    out.push_back(static_cast<char>((bits >> (8 * i)) & 0xffu));
  }
}

class ByteReader {
 public:
  ByteReader(std::string data, std::string path)
      : data_(std::move(data)), path_(std::move(path)) {}

  std::uint32_t read_u32_le() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<std::uint32_t>(
               static_cast<unsigned char>(data_[pos_ + i]))
           << (8 * i);
    }
    pos_ += 4;
    return v;
  }

  double read_f64_le() {
    need(8);
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) {
      bits |= static_cast<std::uint64_t>(
                  static_cast<unsigned char>(data_[pos_ + i]))
              << (8 * i);
    }
    pos_ += 8;
    return std::bit_cast<double>(bits);
  }

  std::string read_bytes(std::size_t n) {
    need(n);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool exhausted() const { return pos_ == data_.size(); }

 private:
  void need(std::size_t n) {
    if (pos_ + n > data_.size()) {
      throw std::runtime_error(path_ + ": truncated checkpoint at byte " +
                               std::to_string(data_.size()));
    }
  }

  std::string data_;
  std::string path_;
  std::size_t pos_ = 0;
};

constexpr char kMagic[] = "LCVD1";
constexpr std::size_t kMagicLen = 5;

}  // namespace

void validate_train_config(const TrainConfig& config) {
  if (config.batch_size < 2 || config.batch_size % 2 != 0) {
    throw std::invalid_argument("TrainConfig: batch size must be even and >= 2");
  }
  if (!(config.learning_rate > 0.0)) {
    throw std::invalid_argument("TrainConfig: learning rate must be > 0");
  }
  if (config.epochs < 1) {
    throw std::invalid_argument("TrainConfig: epochs must be >= 1");
  }
  if (!(config.decay > 0.0)) {
    throw std::invalid_argument("TrainConfig: decay must be > 0");
  }
  if (config.weight_decay < 0.0 || config.momentum < 0.0 ||
      config.momentum >= 1.0) {
    throw std::invalid_argument("TrainConfig: bad weight_decay/momentum");
  }
}

MlpClassifier make_mlp(const std::vector<std::size_t>& layer_dims, Rng& rng) {
  if (layer_dims.size() < 2) {
    throw std::invalid_argument("make_mlp: need at least input and output");
  }
  for (std::size_t dim : layer_dims) {
    if (dim == 0) throw std::invalid_argument("make_mlp: zero layer width");
  }
  MlpClassifier m;
  m.layer_dims = layer_dims;
  for (std::size_t l = 0; l + 1 < layer_dims.size(); ++l) {
    const std::size_t fan_in = layer_dims[l];
    const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
    Matrix w(layer_dims[l + 1], fan_in);
    for (double& value : w.values) value = stddev * rng.normal();
    m.weights.push_back(std::move(w));
    m.biases.emplace_back(layer_dims[l + 1], 0.0);
  }
  return m;
}

ForwardTrace forward(const MlpClassifier& model, const Vec& x) {
  check_model(model);
  if (x.size() != model.input_dim() || !all_finite(x)) {
    throw std::invalid_argument("forward: input must be finite of width D");
  }
  ForwardTrace trace;
  trace.activations.reserve(model.num_layers() + 1);
  trace.pre_activations.reserve(model.num_layers());
  trace.activations.push_back(x);
  for (std::size_t l = 0; l < model.num_layers(); ++l) {
    Vec pre;
    matvec(model.weights[l], trace.activations.back(), pre);
    for (std::size_t i = 0; i < pre.size(); ++i) pre[i] += model.biases[l][i];
    Vec post = pre;
    if (l != model.num_layers() - 1) {
      for (double& value : post) value = std::max(value, 0.0);
    }
    trace.pre_activations.push_back(std::move(pre));
    trace.activations.push_back(std::move(post));
  }
  trace.penultimate_features = trace.activations[model.num_layers() - 1];
  trace.logits = trace.activations.back();
  trace.probabilities = softmax(trace.logits);
  return trace;
}

Gradients zero_gradients(const MlpClassifier& model) {
  Gradients grads;
  for (std::size_t l = 0; l < model.num_layers(); ++l) {
    grads.weights.emplace_back(model.layer_dims[l + 1], model.layer_dims[l]);
    grads.biases.emplace_back(model.layer_dims[l + 1], 0.0);
  }
  grads.input_gradient.assign(model.input_dim(), 0.0);
  return grads;
}

Gradients backward(const MlpClassifier& model, const ForwardTrace& trace,
                   const Vec& dloss_dlogits) {
  Gradients grads = zero_gradients(model);
  accumulate_backward(model, trace, dloss_dlogits, grads);
  return grads;
}

void accumulate_backward(const MlpClassifier& model, const ForwardTrace& trace,
                         const Vec& dloss_dlogits, Gradients& acc) {
  check_model(model);
  check_trace(model, trace);
  if (dloss_dlogits.size() != model.output_dim()) {
    throw std::invalid_argument("backward: dloss_dlogits width mismatch");
  }
  if (acc.weights.size() != model.num_layers() ||
      acc.input_gradient.size() != model.input_dim()) {
    throw std::invalid_argument("backward: gradient buffer shape mismatch");
  }
  backprop(model, trace, dloss_dlogits, acc);
}

void sgd_step(MlpClassifier& model, const Gradients& grads, double mu) {
  if (!(mu > 0.0)) {
    throw std::invalid_argument("sgd_step: learning rate must be > 0");
  }
  check_model(model);
  if (grads.weights.size() != model.num_layers()) {
    throw std::invalid_argument("sgd_step: gradient shape mismatch");
  }
  for (std::size_t l = 0; l < model.num_layers(); ++l) {
    for (std::size_t i = 0; i < model.weights[l].values.size(); ++i) {
      model.weights[l].values[i] -= mu * grads.weights[l].values[i];
    }
    for (std::size_t i = 0; i < model.biases[l].size(); ++i) {
      model.biases[l][i] -= mu * grads.biases[l][i];
    }
    if (!all_finite(model.weights[l]) || !all_finite(model.biases[l])) {
      throw TrainingDivergedError("sgd_step: non-finite parameters");
    }
  }
}

double lr_at_epoch(const TrainConfig& config, int epoch) {
  validate_train_config(config);
  if (epoch < 0 || epoch >= config.epochs) {
    throw std::invalid_argument("lr_at_epoch: epoch out of range");
  }
  double lr = config.learning_rate;
  for (int milestone : config.milestones) {
    if (epoch >= milestone) lr *= config.decay;
  }
  return lr;
}

void save_checkpoint(const MlpClassifier& model, const std::string& path) {
  check_model(model);
  std::string blob;
  blob.append(kMagic, kMagicLen);
  append_u32_le(blob, static_cast<std::uint32_t>(model.layer_dims.size()));
  for (std::size_t dim : model.layer_dims) {
    append_u32_le(blob, static_cast<std::uint32_t>(dim));
  }
  for (std::size_t l = 0; l < model.num_layers(); ++l) {
    for (double value : model.weights[l].values) append_f64_le(blob, value);
    for (double value : model.biases[l]) append_f64_le(blob, value);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw std::runtime_error(path + ": cannot open for writing");
  }
  out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  if (!out) {
    throw std::runtime_error(path + ": write failed");
  }
}

MlpClassifier load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::runtime_error(path + ": cannot open");
  }
  std::string data((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  ByteReader reader(std::move(data), path);
  if (reader.read_bytes(kMagicLen) != std::string(kMagic, kMagicLen)) {
    throw std::runtime_error(path + ": bad checkpoint magic");
  }
  const std::uint32_t num_dims = reader.read_u32_le();
  if (num_dims < 2 || num_dims > 64) {
    throw std::runtime_error(path + ": implausible layer count");
  }
  MlpClassifier m;
  for (std::uint32_t i = 0; i < num_dims; ++i) {
    const std::uint32_t dim = reader.read_u32_le();
    if (dim == 0) {
      throw std::runtime_error(path + ": zero layer width in checkpoint");
    }
    m.layer_dims.push_back(dim);
  }
  for (std::size_t l = 0; l + 1 < m.layer_dims.size(); ++l) {
    Matrix w(m.layer_dims[l + 1], m.layer_dims[l]);
    for (double& value : w.values) value = reader.read_f64_le();
    Vec b(m.layer_dims[l + 1]);
    for (double& value : b) value = reader.read_f64_le();
    m.weights.push_back(std::move(w));
    m.biases.push_back(std::move(b));
  }
  if (!reader.exhausted()) {
    throw std::runtime_error(path + ": trailing bytes after checkpoint");
  }
  check_model(m);
  return m;
}

}  // namespace lcvd::model
