#include "lcvd/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace lcvd {

namespace {

void check_logits(const Vec& logits, double temperature) {
  if (logits.empty()) throw std::invalid_argument("softmax: empty logits");
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw std::invalid_argument("softmax: temperature must be positive and finite");
  }
  if (!all_finite(logits)) throw std::invalid_argument("softmax: non-finite logit");
}

}  // namespace

Vec softmax(const Vec& logits, double temperature) {
  check_logits(logits, temperature);
  const double shift = *std::max_element(logits.begin(), logits.end());
  Vec probabilities(logits.size());
  double total = 0.0;
  for (std::size_t k = 0; k < logits.size(); ++k) {
    probabilities[k] = std::exp((logits[k] - shift) / temperature);
    total += probabilities[k];
  }
  for (double& p : probabilities) p /= total;
  return probabilities;
}

double log_sum_exp(const Vec& logits, double temperature) {
  check_logits(logits, temperature);
  const double shift = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (double l : logits) total += std::exp((l - shift) / temperature);
  return shift + temperature * std::log(total);
}

}  // namespace lcvd
