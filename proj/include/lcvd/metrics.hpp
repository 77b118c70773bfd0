#pragma once

#include <vector>

namespace lcvd::metrics {

// Paired detection scores under the ID-high convention: in-distribution
// samples are expected to receive larger scores than out-of-distribution
// ones. Both lists must be nonempty and finite.
struct ScoreSet {
  std::vector<double> id_scores;
  std::vector<double> ood_scores;
};

enum class Positive { kId, kOod };

// Probability that a random ID score exceeds a random OOD score, ties
// counted 1/2. Sort-and-rank, O(n log n).
double auroc(const ScoreSet& s);

// Area under the precision-recall curve via the step-wise
// (interpolation-free) sum over descending score thresholds. With
// positive = kOod all scores are negated first so higher means positive.
double aupr(const ScoreSet& s, Positive positive);

// Fraction of OOD scores >= the largest score value at which the fraction
// of ID scores >= that value first reaches `level`.
double fpr_at_tpr(const ScoreSet& s, double level = 0.95);

// 0.5*(1 - TPR) + 0.5*FPR evaluated at the fpr_at_tpr threshold.
double detection_error(const ScoreSet& s, double level = 0.95);

}  // namespace lcvd::metrics
