#pragma once

#include <vector>

#include "lcvd/dataset.hpp"
#include "lcvd/matrix.hpp"
#include "lcvd/model.hpp"
#include "lcvd/vicinity.hpp"

namespace lcvd::risk {

struct LossResult {
  double loss = 0.0;
  Vec dloss_dlogits;
};

// Small discrete joint distribution for mutual-information diagnostics.
// Entries nonnegative, total 1 within 1e-12; marginals derived on build.
struct DiscreteJoint {
  Matrix table;  // |X| x K
  Vec marginal_x;
  Vec marginal_y;
};

DiscreteJoint make_discrete_joint(const Matrix& table);

// Fitting loss: -log(max(p_label, 1e-12)); gradient wrt logits is
// p - onehot(label).
LossResult nll_loss(const Vec& probabilities, int label);

// Rejection loss: -log(max(1 - p_y, 1e-7)); gradient wrt logits is
// p_y*(onehot(y) - p)/max(1 - p_y, 1e-7).
LossResult rejection_loss(const Vec& probabilities, int complementary_label);

// Fitting loss against a full target distribution: -sum_k t_k log(max(p_k,
// 1e-12)); gradient wrt logits is p - t. Used by label-policy ablations.
LossResult soft_cross_entropy(const Vec& probabilities, const Vec& target);

// Sum of nll_loss over the batch (no averaging).
double pretrain_risk(const model::MlpClassifier& m,
                     const std::vector<data::LabeledExample>& id_batch);

// Sum of nll_loss over the ID half plus rejection_loss over the OOD half.
double generic_empirical_risk(const model::MlpClassifier& m,
                              const std::vector<data::LabeledExample>& id_batch,
                              const std::vector<vicinity::OodExample>& ood_batch);

// Sum p(x,y) log(p(x,y)/(p(x)p(y))) with 0 log 0 = 0, natural log.
double exact_mutual_information(const DiscreteJoint& joint);

// Sum_{x,y} P(x,y) log max(q(y|x), 1e-12) + H(P(y)). q rows must be valid
// distributions over the K classes.
double mi_lower_bound_id(const DiscreteJoint& joint, const Matrix& q);

// -Sum_{x,y} P_O(x,y) log max(1 - q(y|x), 1e-12) + Sum_y P_O(y)/P_I(y).
// marginal_id_y must be strictly positive.
double mi_upper_bound_ood(const DiscreteJoint& joint_ood,
                          const Vec& marginal_id_y, const Matrix& q);

}  // namespace lcvd::risk
