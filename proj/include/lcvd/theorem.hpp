#pragma once

#include <cstdint>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "lcvd/rng.hpp"

namespace lcvd::theorem {

using BigInt = boost::multiprecision::cpp_int;

// Memoized table of d(M, K_C): the number of ways to split M identical items
// into exactly K_C unordered nonempty groups, computed by the recurrence
// d(M,1) = d(M,M) = 1, d(M,K_C) = 0 for M < K_C, and
// d(M,K_C) = sum_{i=1..K_C} d(M-K_C, i) otherwise. Exact integers throughout;
// counts overflow 64 bits near M ~ 400.
class PartitionTable {
 public:
  PartitionTable(std::int64_t max_m, std::int64_t max_k);

  std::int64_t max_m() const { return max_m_; }
  std::int64_t max_k() const { return max_k_; }

  // d(M, K_C); requires 1 <= M <= max_m, 1 <= K_C <= max_k.
  const BigInt& at(std::int64_t m, std::int64_t kc) const;

 private:
  std::int64_t max_m_;
  std::int64_t max_k_;
  std::vector<BigInt> d_;  // (max_m+1) x (max_k+1), row-major
};

// d(M, K_C) for a single query; M >= 1, K_C >= 1.
BigInt partition_count(std::int64_t m, std::int64_t kc);

// P(K_C) = d(M,K_C) / sum_{i=1..K} d(M,i), returned as a vector of length
// K+1 with index 0 unused and entry j = P(K_C = j). M >= 1, K >= 1.
std::vector<double> class_count_distribution(std::int64_t m, std::int64_t k);

// class_count_distribution(M,K)[K].
double prob_all_classes(std::int64_t m, std::int64_t k);

// Exact distribution of the number of distinct classes when M labels are
// drawn uniformly at random from K classes: P(K_C=j) = C(K,j)*S(M,j)*j!/K^M
// with S a Stirling number of the second kind. Same indexing as above.
std::vector<double> occupancy_class_count_distribution(std::int64_t m,
                                                       std::int64_t k);

// Empirical histogram of distinct-class counts over `trials` simulations of
// drawing M labels uniformly from [0, K). Same indexing as above.
std::vector<double> monte_carlo_class_count(std::int64_t m, std::int64_t k,
                                            std::int64_t trials, Rng& rng);

}  // namespace lcvd::theorem
