#pragma once

#include "lcvd/matrix.hpp"

namespace lcvd {

// Temperature-scaled softmax, computed max-shifted for stability. Entries are
// strictly positive and sum to 1 (within rounding). Throws
// std::invalid_argument on an empty input, non-finite logits, or T <= 0.
Vec softmax(const Vec& logits, double temperature = 1.0);

// T * log sum_k exp(l_k / T), max-shifted. Same error contract as softmax.
double log_sum_exp(const Vec& logits, double temperature = 1.0);

}  // namespace lcvd
