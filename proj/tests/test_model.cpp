#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "doctest.h"
#include "lcvd/matrix.hpp"
#include "lcvd/model.hpp"
#include "lcvd/numerics.hpp"
#include "lcvd/rng.hpp"

using lcvd::Matrix;
using lcvd::Rng;
using lcvd::Vec;
namespace model = lcvd::model;

namespace {

model::MlpClassifier tiny_linear_model() {
  // Single layer, 2 -> 3, hand-set affine map.
  model::MlpClassifier m;
  m.layer_dims = {2, 3};
  Matrix w(3, 2);
  w(0, 0) = 1.0;
  w(0, 1) = -2.0;
  w(1, 0) = 0.5;
  w(1, 1) = 0.25;
  w(2, 0) = -1.5;
  w(2, 1) = 3.0;
  m.weights = {w};
  m.biases = {Vec{0.125, -0.5, 2.0}};
  return m;
}

double linear_loss(const model::MlpClassifier& m, const Vec& x,
                   const Vec& coeffs) {
  const model::ForwardTrace trace = model::forward(m, x);
  double loss = 0.0;
  for (std::size_t k = 0; k < coeffs.size(); ++k) {
    loss += coeffs[k] * trace.logits[k];
  }
  return loss;
}

// True when some pre-activation sits close enough to the ReLU kink that a
// central difference with step h would straddle it.
bool near_kink(const model::MlpClassifier& m, const Vec& x, double margin) {
  const model::ForwardTrace trace = model::forward(m, x);
  for (std::size_t l = 0; l + 1 < m.num_layers(); ++l) {
    for (double v : trace.pre_activations[l]) {
      if (std::abs(v) < margin) return true;
    }
  }
  return false;
}

double rel_error(double got, double want) {
  const double denom = std::max({std::abs(got), std::abs(want), 1e-8});
  return std::abs(got - want) / denom;
}

}  // namespace

TEST_CASE("zero model yields uniform probabilities") {
  model::MlpClassifier m;
  m.layer_dims = {3, 4};
  m.weights = {Matrix(4, 3)};
  m.biases = {Vec(4, 0.0)};
  const model::ForwardTrace trace = model::forward(m, {1.0, -2.0, 0.5});
  for (double p : trace.probabilities) {
    CHECK(p == doctest::Approx(0.25));
  }
  for (double z : trace.logits) {
    CHECK(z == 0.0);
  }
}

TEST_CASE("single linear layer computes the affine map") {
  const model::MlpClassifier m = tiny_linear_model();
  const Vec x = {2.0, -1.0};
  const model::ForwardTrace trace = model::forward(m, x);
  REQUIRE(trace.logits.size() == 3);
  CHECK(trace.logits[0] == doctest::Approx(1.0 * 2.0 + -2.0 * -1.0 + 0.125));
  CHECK(trace.logits[1] == doctest::Approx(0.5 * 2.0 + 0.25 * -1.0 - 0.5));
  CHECK(trace.logits[2] == doctest::Approx(-1.5 * 2.0 + 3.0 * -1.0 + 2.0));
  double sum = 0.0;
  for (double p : trace.probabilities) sum += p;
  CHECK(sum == doctest::Approx(1.0));
  CHECK(trace.activations.front() == x);
  CHECK(trace.activations.back() == trace.logits);
  CHECK(trace.penultimate_features == x);
}

TEST_CASE("zero dloss produces exactly zero gradients") {
  Rng rng(41, 3);
  const model::MlpClassifier m = model::make_mlp({2, 5, 3}, rng);
  const Vec x = {0.3, -0.7};
  const model::ForwardTrace trace = model::forward(m, x);
  const model::Gradients g = model::backward(m, trace, Vec(3, 0.0));
  for (const Matrix& gw : g.weights) {
    for (double v : gw.values) CHECK(v == 0.0);
  }
  for (const Vec& gb : g.biases) {
    for (double v : gb) CHECK(v == 0.0);
  }
  for (double v : g.input_gradient) CHECK(v == 0.0);
}

TEST_CASE("backward matches central finite differences") {
  Rng rng(97, 3);
  const double h = 1e-6;
  int models_checked = 0;
  while (models_checked < 30) {
    const std::size_t d = 1 + rng.uniform_int(4);
    const std::size_t hdim = 1 + rng.uniform_int(6);
    const std::size_t k = 2 + rng.uniform_int(4);
    model::MlpClassifier m = model::make_mlp({d, hdim, k}, rng);
    for (Vec& b : m.biases) {
      for (double& v : b) v = 0.2 * rng.normal();
    }
    Vec x(d);
    for (double& v : x) v = rng.normal();
    if (near_kink(m, x, 1e-4)) continue;  // FD would straddle the ReLU kink
    ++models_checked;
    Vec coeffs(k);
    for (double& c : coeffs) c = rng.normal();
    const model::ForwardTrace trace = model::forward(m, x);
    const model::Gradients g = model::backward(m, trace, coeffs);

    for (std::size_t l = 0; l < m.num_layers(); ++l) {
      for (std::size_t idx = 0; idx < m.weights[l].values.size(); ++idx) {
        model::MlpClassifier plus = m;
        model::MlpClassifier minus = m;
        plus.weights[l].values[idx] += h;
        minus.weights[l].values[idx] -= h;
        const double fd =
            (linear_loss(plus, x, coeffs) - linear_loss(minus, x, coeffs)) /
            (2.0 * h);
        CHECK(rel_error(g.weights[l].values[idx], fd) < 1e-4);
      }
      for (std::size_t idx = 0; idx < m.biases[l].size(); ++idx) {
        model::MlpClassifier plus = m;
        model::MlpClassifier minus = m;
        plus.biases[l][idx] += h;
        minus.biases[l][idx] -= h;
        const double fd =
            (linear_loss(plus, x, coeffs) - linear_loss(minus, x, coeffs)) /
            (2.0 * h);
        CHECK(rel_error(g.biases[l][idx], fd) < 1e-4);
      }
    }
    for (std::size_t idx = 0; idx < x.size(); ++idx) {
      Vec xp = x;
      Vec xm = x;
      xp[idx] += h;
      xm[idx] -= h;
      const double fd =
          (linear_loss(m, xp, coeffs) - linear_loss(m, xm, coeffs)) /
          (2.0 * h);
      CHECK(rel_error(g.input_gradient[idx], fd) < 1e-4);
    }
  }
}

TEST_CASE("accumulate_backward equals backward summed") {
  Rng rng(55, 3);
  const model::MlpClassifier m = model::make_mlp({3, 6, 4}, rng);
  Vec xa(3);
  Vec xb(3);
  for (double& v : xa) v = rng.normal();
  for (double& v : xb) v = rng.normal();
  const model::ForwardTrace ta = model::forward(m, xa);
  const model::ForwardTrace tb = model::forward(m, xb);
  const Vec da = {0.5, -0.25, 0.125, 1.0};
  const Vec db = {-1.0, 2.0, 0.0, 0.75};

  model::Gradients acc = model::zero_gradients(m);
  model::accumulate_backward(m, ta, da, acc);
  model::accumulate_backward(m, tb, db, acc);

  const model::Gradients ga = model::backward(m, ta, da);
  const model::Gradients gb = model::backward(m, tb, db);
  for (std::size_t l = 0; l < m.num_layers(); ++l) {
    for (std::size_t idx = 0; idx < acc.weights[l].values.size(); ++idx) {
      CHECK(acc.weights[l].values[idx] ==
            ga.weights[l].values[idx] + gb.weights[l].values[idx]);
    }
    for (std::size_t idx = 0; idx < acc.biases[l].size(); ++idx) {
      CHECK(acc.biases[l][idx] == ga.biases[l][idx] + gb.biases[l][idx]);
    }
  }
}

TEST_CASE("sgd_step applies theta minus mu grad") {
  model::MlpClassifier m;
  m.layer_dims = {1, 1};
  m.weights = {Matrix(1, 1)};
  m.weights[0](0, 0) = 1.0;
  m.biases = {Vec{0.5}};
  model::Gradients g = model::zero_gradients(m);
  g.weights[0](0, 0) = 2.0;
  g.biases[0][0] = -1.0;
  model::sgd_step(m, g, 0.1);
  CHECK(m.weights[0](0, 0) == doctest::Approx(0.8));
  CHECK(m.biases[0][0] == doctest::Approx(0.6));

  // Zero gradients leave the parameters bit-identical.
  model::MlpClassifier before = m;
  model::sgd_step(m, model::zero_gradients(m), 0.1);
  CHECK(m.weights[0].values == before.weights[0].values);
  CHECK(m.biases[0] == before.biases[0]);

  g.weights[0](0, 0) = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(model::sgd_step(m, g, 0.1), model::TrainingDivergedError);
}

TEST_CASE("a small step along the gradient reduces the loss") {
  Rng rng(77, 3);
  int reduced = 0;
  const int trials = 100;
  for (int t = 0; t < trials; ++t) {
    model::MlpClassifier m = model::make_mlp({2, 8, 3}, rng);
    Vec x = {rng.normal(), rng.normal()};
    const int y = static_cast<int>(rng.uniform_int(3));
    const auto loss_of = [&](const model::MlpClassifier& mm) {
      const model::ForwardTrace trace = model::forward(mm, x);
      return -std::log(std::max(trace.probabilities[static_cast<std::size_t>(y)],
                                1e-12));
    };
    const model::ForwardTrace trace = model::forward(m, x);
    Vec dloss = trace.probabilities;
    dloss[static_cast<std::size_t>(y)] -= 1.0;
    const model::Gradients g = model::backward(m, trace, dloss);
    const double before = loss_of(m);
    model::sgd_step(m, g, 1e-4);
    if (loss_of(m) <= before) ++reduced;
  }
  CHECK(reduced >= 95);
}

TEST_CASE("learning-rate schedule") {
  model::TrainConfig reference;
  reference.learning_rate = 0.1;
  reference.epochs = 200;
  reference.milestones = {100, 150};
  reference.decay = 0.1;
  CHECK(model::lr_at_epoch(reference, 0) == 0.1);
  CHECK(model::lr_at_epoch(reference, 99) == 0.1);
  CHECK(model::lr_at_epoch(reference, 100) == doctest::Approx(0.01));
  CHECK(model::lr_at_epoch(reference, 120) == doctest::Approx(0.01));
  CHECK(model::lr_at_epoch(reference, 199) == doctest::Approx(0.001));

  model::TrainConfig desk;
  desk.learning_rate = 0.1;
  desk.epochs = 40;
  desk.milestones = {20, 30};
  desk.decay = 0.1;
  CHECK(model::lr_at_epoch(desk, 35) == doctest::Approx(0.001));
  CHECK_THROWS_AS((void)model::lr_at_epoch(desk, -1), std::invalid_argument);
  CHECK_THROWS_AS((void)model::lr_at_epoch(desk, 40), std::invalid_argument);
}

TEST_CASE("train config validation") {
  model::TrainConfig config;
  CHECK_NOTHROW(model::validate_train_config(config));
  config.batch_size = 3;
  CHECK_THROWS_AS(model::validate_train_config(config), std::invalid_argument);
  config.batch_size = 128;
  config.learning_rate = 0.0;
  CHECK_THROWS_AS(model::validate_train_config(config), std::invalid_argument);
}

TEST_CASE("he initialization statistics") {
  Rng rng(13, 3);
  const model::MlpClassifier m = model::make_mlp({100, 200, 10}, rng);
  for (double b : m.biases[0]) CHECK(b == 0.0);
  for (double b : m.biases[1]) CHECK(b == 0.0);
  double sum = 0.0;
  double sumsq = 0.0;
  for (double v : m.weights[0].values) {
    sum += v;
    sumsq += v * v;
  }
  const auto n = static_cast<double>(m.weights[0].values.size());
  const double mean = sum / n;
  const double var = sumsq / n - mean * mean;
  CHECK(std::abs(mean) < 0.01);
  CHECK(var == doctest::Approx(2.0 / 100.0).epsilon(0.1));
  CHECK_THROWS_AS((void)model::make_mlp({5}, rng), std::invalid_argument);
  CHECK_THROWS_AS((void)model::make_mlp({5, 0, 2}, rng),
                  std::invalid_argument);
}

TEST_CASE("checkpoints round-trip bit-identically") {
  Rng rng(29, 3);
  const model::MlpClassifier m = model::make_mlp({2, 7, 5, 3}, rng);
  const std::string path = "./test_tmp_model.ckpt";
  model::save_checkpoint(m, path);
  const model::MlpClassifier back = model::load_checkpoint(path);
  REQUIRE(back.layer_dims == m.layer_dims);
  for (std::size_t l = 0; l < m.num_layers(); ++l) {
    CHECK(back.weights[l].values == m.weights[l].values);
    CHECK(back.biases[l] == m.biases[l]);
  }

  SUBCASE("bad magic is rejected") {
    std::ofstream out(path, std::ios::binary);
    out << "NOPE1";
    out.close();
    CHECK_THROWS_AS((void)model::load_checkpoint(path), std::runtime_error);
  }

  SUBCASE("truncation is rejected") {
    std::ifstream in(path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)),
                      std::istreambuf_iterator<char>());
    in.close();
    std::ofstream out(path, std::ios::binary);
    out.write(bytes.data(),
              static_cast<std::streamsize>(bytes.size() / 2));
    out.close();
    CHECK_THROWS_AS((void)model::load_checkpoint(path), std::runtime_error);
  }

  SUBCASE("trailing bytes are rejected") {
    std::ofstream out(path, std::ios::binary | std::ios::app);
    out << 'x';
    out.close();
    CHECK_THROWS_AS((void)model::load_checkpoint(path), std::runtime_error);
  }
}
