#include "lcvd/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <utility>

namespace lcvd::metrics {
namespace {

void check_scores(const ScoreSet& s) {
  if (s.id_scores.empty() || s.ood_scores.empty()) {
    throw std::invalid_argument("ScoreSet: both score lists must be nonempty");
  }
  for (double v : s.id_scores) {
    if (!std::isfinite(v)) {
      throw std::invalid_argument("ScoreSet: non-finite ID score");
    }
  }
  for (double v : s.ood_scores) {
    if (!std::isfinite(v)) {
      throw std::invalid_argument("ScoreSet: non-finite OOD score");
    }
  }
}

struct ThresholdPoint {
  double threshold;
  double tpr;
  double fpr;
};

// Largest score value whose >=-threshold TPR first reaches `level`, with the
// TPR/FPR achieved there. TPR(t) = |{id >= t}|/n_I is nonincreasing in t, so
// this scans distinct ID values descending and stops at the first hit.
ThresholdPoint scan_threshold(const ScoreSet& s, double level) {
  std::vector<double> id_sorted = s.id_scores;
  std::sort(id_sorted.begin(), id_sorted.end(), std::greater<double>());
  const auto n_id = static_cast<double>(id_sorted.size());
  double threshold = id_sorted.back();
  double tpr = 1.0;
  std::size_t idx = 0;
  while (idx < id_sorted.size()) {
    const double value = id_sorted[idx];
    std::size_t count_ge = idx + 1;
    while (count_ge < id_sorted.size() && id_sorted[count_ge] == value) {
      ++count_ge;
    }
    const double tpr_here = static_cast<double>(count_ge) / n_id;
    if (tpr_here >= level) {
      threshold = value;
      tpr = tpr_here;
      break;
    }
    idx = count_ge;
  }
  std::size_t ood_ge = 0;
  for (double v : s.ood_scores) {
    if (v >= threshold) ++ood_ge;
  }
  const double fpr =
      static_cast<double>(ood_ge) / static_cast<double>(s.ood_scores.size());
  return {threshold, tpr, fpr};
}

}  // namespace

double auroc(const ScoreSet& s) {
  check_scores(s);
  std::vector<std::pair<double, bool>> all;  // (score, is_id)
  all.reserve(s.id_scores.size() + s.ood_scores.size());
  for (double v : s.id_scores) all.emplace_back(v, true);
  for (double v : s.ood_scores) all.emplace_back(v, false);
  std::sort(all.begin(), all.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  // U = |{(i,o): id_i > ood_o}| + 0.5 * |ties|, accumulated per tie group.
  // Counts and half-counts are exact in double well past these sizes.
  double u = 0.0;
  double ood_below = 0.0;
  std::size_t idx = 0;
  while (idx < all.size()) {
    const double value = all[idx].first;
    double id_here = 0.0;
    double ood_here = 0.0;
    while (idx < all.size() && all[idx].first == value) {
      if (all[idx].second) {
        id_here += 1.0;
      } else {
        ood_here += 1.0;
      }
      ++idx;
    }
    u += id_here * (ood_below + 0.5 * ood_here);
    ood_below += ood_here;
  }
  return u / (static_cast<double>(s.id_scores.size()) *
              static_cast<double>(s.ood_scores.size()));
}

double aupr(const ScoreSet& s, Positive positive) {
  check_scores(s);
  std::vector<std::pair<double, bool>> all;  // (score, is_positive)
  all.reserve(s.id_scores.size() + s.ood_scores.size());
  const bool id_positive = positive == Positive::kId;
  for (double v : s.id_scores) {
    all.emplace_back(id_positive ? v : -v, id_positive);
  }
  for (double v : s.ood_scores) {
    all.emplace_back(id_positive ? v : -v, !id_positive);
  }
  std::sort(all.begin(), all.end(),
            [](const auto& a, const auto& b) { return a.first > b.first; });
  const double total_pos = static_cast<double>(
      id_positive ? s.id_scores.size() : s.ood_scores.size());
  double area = 0.0;
  double tp = 0.0;
  double fp = 0.0;
  std::size_t idx = 0;
  while (idx < all.size()) {
    const double value = all[idx].first;
    const double tp_prev = tp;
    while (idx < all.size() && all[idx].first == value) {
      if (all[idx].second) {
        tp += 1.0;
      } else {
        fp += 1.0;
      }
      ++idx;
    }
    if (tp > tp_prev) {
      area += (tp - tp_prev) / total_pos * (tp / (tp + fp));
    }
  }
  return area;
}

double fpr_at_tpr(const ScoreSet& s, double level) {
  check_scores(s);
  if (!(level > 0.0) || !(level <= 1.0)) {
    throw std::invalid_argument("fpr_at_tpr: level must be in (0, 1]");
  }
  return scan_threshold(s, level).fpr;
}

double detection_error(const ScoreSet& s, double level) {
  check_scores(s);
  if (!(level > 0.0) || !(level <= 1.0)) {
    throw std::invalid_argument("detection_error: level must be in (0, 1]");
  }
  const ThresholdPoint point = scan_threshold(s, level);
  return 0.5 * (1.0 - point.tpr) + 0.5 * point.fpr;
}

}  // namespace lcvd::metrics
