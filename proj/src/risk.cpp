#include "lcvd/risk.hpp"

#include <cmath>
#include <stdexcept>

namespace lcvd::risk {
namespace {

constexpr double kFitClamp = 1e-12;
constexpr double kRejectClamp = 1e-7;

void check_distribution(const Vec& p, const char* who) {
  if (p.empty()) {
    throw std::invalid_argument(std::string(who) + ": empty distribution");
  }
  double total = 0.0;
  for (double value : p) {
    if (!std::isfinite(value) || value < 0.0) {
      throw std::invalid_argument(std::string(who) +
                                  ": entries must be finite and >= 0");
    }
    total += value;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw std::invalid_argument(std::string(who) +
                                ": entries must sum to 1");
  }
}

void check_label(const Vec& p, int label, const char* who) {
  if (label < 0 || static_cast<std::size_t>(label) >= p.size()) {
    throw std::invalid_argument(std::string(who) + ": label out of range");
  }
}

// q must be row-stochastic with the joint's shape.
void check_conditional(const DiscreteJoint& joint, const Matrix& q,
                       const char* who) {
  if (q.rows != joint.table.rows || q.cols != joint.table.cols) {
    throw std::invalid_argument(std::string(who) + ": q shape mismatch");
  }
  for (std::size_t x = 0; x < q.rows; ++x) {
    double total = 0.0;
    for (std::size_t y = 0; y < q.cols; ++y) {
      const double value = q(x, y);
      if (!std::isfinite(value) || value < 0.0) {
        throw std::invalid_argument(std::string(who) +
                                    ": q entries must be finite and >= 0");
      }
      total += value;
    }
    if (std::abs(total - 1.0) > 1e-9) {
      throw std::invalid_argument(std::string(who) +
                                  ": q rows must sum to 1");
    }
  }
}

}  // namespace

DiscreteJoint make_discrete_joint(const Matrix& table) {
  if (table.rows == 0 || table.cols == 0) {
    throw std::invalid_argument("DiscreteJoint: empty table");
  }
  double total = 0.0;
  for (double value : table.values) {
    if (!std::isfinite(value) || value < 0.0) {
      throw std::invalid_argument(
          "DiscreteJoint: entries must be finite and >= 0");
    }
    total += value;
  }
  if (std::abs(total - 1.0) > 1e-12) {
    throw std::invalid_argument("DiscreteJoint: entries must sum to 1");
  }
  DiscreteJoint joint;
  joint.table = table;
  joint.marginal_x.assign(table.rows, 0.0);
  joint.marginal_y.assign(table.cols, 0.0);
  for (std::size_t x = 0; x < table.rows; ++x) {
    for (std::size_t y = 0; y < table.cols; ++y) {
      joint.marginal_x[x] += table(x, y);
      joint.marginal_y[y] += table(x, y);
    }
  }
  return joint;
}

LossResult nll_loss(const Vec& probabilities, int label) {
  check_distribution(probabilities, "nll_loss");
  check_label(probabilities, label, "nll_loss");
  LossResult result;
  result.loss = -std::log(
      std::max(probabilities[static_cast<std::size_t>(label)], kFitClamp));
  result.dloss_dlogits = probabilities;
  result.dloss_dlogits[static_cast<std::size_t>(label)] -= 1.0;
  return result;
}

LossResult rejection_loss(const Vec& probabilities, int complementary_label) {
  check_distribution(probabilities, "rejection_loss");
  check_label(probabilities, complementary_label, "rejection_loss");
  const auto y = static_cast<std::size_t>(complementary_label);
  const double p_y = probabilities[y];
  const double denom = std::max(1.0 - p_y, kRejectClamp);
  LossResult result;
  result.loss = -std::log(denom);
  result.dloss_dlogits.assign(probabilities.size(), 0.0);
  for (std::size_t k = 0; k < probabilities.size(); ++k) {
    const double indicator = k == y ? 1.0 : 0.0;
    result.dloss_dlogits[k] = p_y * (indicator - probabilities[k]) / denom;
  }
  return result;
}

LossResult soft_cross_entropy(const Vec& probabilities, const Vec& target) {
  check_distribution(probabilities, "soft_cross_entropy");
  check_distribution(target, "soft_cross_entropy target");
  if (target.size() != probabilities.size()) {
    throw std::invalid_argument("soft_cross_entropy: size mismatch");
  }
  LossResult result;
  result.dloss_dlogits.assign(probabilities.size(), 0.0);
  for (std::size_t k = 0; k < probabilities.size(); ++k) {
    if (target[k] > 0.0) {
      result.loss -= target[k] * std::log(std::max(probabilities[k], kFitClamp));
    }
    result.dloss_dlogits[k] = probabilities[k] - target[k];
  }
  return result;
}

double pretrain_risk(const model::MlpClassifier& m,
                     const std::vector<data::LabeledExample>& id_batch) {
  if (id_batch.empty()) {
    throw std::invalid_argument("pretrain_risk: empty batch");
  }
  double total = 0.0;
  for (const auto& example : id_batch) {
    if (example.label_kind != data::LabelKind::kGroundTruth) {
      throw std::invalid_argument(
          "pretrain_risk: batch must hold ground-truth labels");
    }
    const auto trace = model::forward(m, example.input);
    total += nll_loss(trace.probabilities, example.label).loss;
  }
  return total;
}

double generic_empirical_risk(
    const model::MlpClassifier& m,
    const std::vector<data::LabeledExample>& id_batch,
    const std::vector<vicinity::OodExample>& ood_batch) {
  if (id_batch.empty() || ood_batch.empty()) {
    throw std::invalid_argument(
        "generic_empirical_risk: both batches must be nonempty");
  }
  for (const auto& example : ood_batch) {
    if (example.label_kind != data::LabelKind::kComplementary) {
      throw std::invalid_argument(
          "generic_empirical_risk: OOD batch must hold complementary labels");
    }
  }
  double total = pretrain_risk(m, id_batch);
  for (const auto& example : ood_batch) {
    const auto trace = model::forward(m, example.input);
    total += rejection_loss(trace.probabilities, example.complementary_label)
                 .loss;
  }
  return total;
}

double exact_mutual_information(const DiscreteJoint& joint) {
  double mi = 0.0;
  for (std::size_t x = 0; x < joint.table.rows; ++x) {
    for (std::size_t y = 0; y < joint.table.cols; ++y) {
      const double p = joint.table(x, y);
      if (p > 0.0) {
        mi += p * std::log(p / (joint.marginal_x[x] * joint.marginal_y[y]));
      }
    }
  }
  return mi;
}

double mi_lower_bound_id(const DiscreteJoint& joint, const Matrix& q) {
  check_conditional(joint, q, "mi_lower_bound_id");
  double bound = 0.0;
  for (std::size_t x = 0; x < joint.table.rows; ++x) {
    for (std::size_t y = 0; y < joint.table.cols; ++y) {
      const double p = joint.table(x, y);
      if (p > 0.0) {
        bound += p * std::log(std::max(q(x, y), kFitClamp));
      }
    }
  }
  for (double py : joint.marginal_y) {
    if (py > 0.0) bound -= py * std::log(py);
  }
  return bound;
}

double mi_upper_bound_ood(const DiscreteJoint& joint_ood,
                          const Vec& marginal_id_y, const Matrix& q) {
  check_conditional(joint_ood, q, "mi_upper_bound_ood");
  if (marginal_id_y.size() != joint_ood.table.cols) {
    throw std::invalid_argument("mi_upper_bound_ood: marginal size mismatch");
  }
  for (double value : marginal_id_y) {
    if (!(value > 0.0)) {
      throw std::invalid_argument(
          "mi_upper_bound_ood: marginal_id_y must be strictly positive");
    }
  }
  double bound = 0.0;
  for (std::size_t x = 0; x < joint_ood.table.rows; ++x) {
    for (std::size_t y = 0; y < joint_ood.table.cols; ++y) {
      const double p = joint_ood.table(x, y);
      if (p > 0.0) {
        bound -= p * std::log(std::max(1.0 - q(x, y), kFitClamp));
      }
    }
  }
  for (std::size_t y = 0; y < marginal_id_y.size(); ++y) {
    bound += joint_ood.marginal_y[y] / marginal_id_y[y];
  }
  return bound;
}

}  // namespace lcvd::risk
