#include "lcvd/theorem.hpp"

#include <algorithm>
#include <stdexcept>

namespace lcvd::theorem {

PartitionTable::PartitionTable(std::int64_t max_m, std::int64_t max_k)
    : max_m_(max_m), max_k_(max_k) {
  if (max_m < 1 || max_k < 1) {
    throw std::invalid_argument("PartitionTable: bounds must be >= 1");
  }
  d_.assign(static_cast<std::size_t>((max_m + 1) * (max_k + 1)), BigInt(0));
  auto cell = [&](std::int64_t m, std::int64_t kc) -> BigInt& {
    return d_[static_cast<std::size_t>(m * (max_k_ + 1) + kc)];
  };
  // Fill in increasing M so every d(M-K_C, i) lookup is already final.
  for (std::int64_t m = 1; m <= max_m_; ++m) {
    for (std::int64_t kc = 1; kc <= max_k_; ++kc) {
      if (kc > m) {
        cell(m, kc) = 0;
      } else if (kc == 1 || kc == m) {
        cell(m, kc) = 1;
      } else {
        BigInt total = 0;
        for (std::int64_t i = 1; i <= kc; ++i) {
          if (i <= max_k_ && m - kc >= 1) total += cell(m - kc, i);
        }
        cell(m, kc) = total;
      }
    }
  }
}

const BigInt& PartitionTable::at(std::int64_t m, std::int64_t kc) const {
  if (m < 1 || m > max_m_ || kc < 1 || kc > max_k_) {
    throw std::invalid_argument("PartitionTable::at: query out of range");
  }
  return d_[static_cast<std::size_t>(m * (max_k_ + 1) + kc)];
}

BigInt partition_count(std::int64_t m, std::int64_t kc) {
  if (m < 1 || kc < 1) {
    throw std::invalid_argument("partition_count: arguments must be >= 1");
  }
  if (kc > m) return BigInt(0);
  PartitionTable table(m, kc);
  return table.at(m, kc);
}

std::vector<double> class_count_distribution(std::int64_t m, std::int64_t k) {
  if (m < 1 || k < 1) {
    throw std::invalid_argument(
        "class_count_distribution: arguments must be >= 1");
  }
  PartitionTable table(m, k);
  std::vector<BigInt> counts(static_cast<std::size_t>(k + 1), BigInt(0));
  BigInt total = 0;
  for (std::int64_t kc = 1; kc <= k; ++kc) {
    counts[static_cast<std::size_t>(kc)] = kc <= m ? table.at(m, kc) : 0;
    total += counts[static_cast<std::size_t>(kc)];
  }
  std::vector<double> probs(static_cast<std::size_t>(k + 1), 0.0);
  for (std::int64_t kc = 1; kc <= k; ++kc) {
    probs[static_cast<std::size_t>(kc)] =
        static_cast<double>(boost::multiprecision::cpp_rational(
            counts[static_cast<std::size_t>(kc)], total));
  }
  return probs;
}

double prob_all_classes(std::int64_t m, std::int64_t k) {
  return class_count_distribution(m, k)[static_cast<std::size_t>(k)];
}

std::vector<double> occupancy_class_count_distribution(std::int64_t m,
                                                       std::int64_t k) {
  if (m < 1 || k < 1) {
    throw std::invalid_argument(
        "occupancy_class_count_distribution: arguments must be >= 1");
  }
  // q[j] after processing i draws = P(exactly j distinct classes seen).
  // Transition: stay with prob j/K, grow with prob (K-j+1)/K from j-1.
  std::vector<double> q(static_cast<std::size_t>(k + 1), 0.0);
  q[1] = 1.0;  // first draw always introduces one class
  for (std::int64_t draw = 2; draw <= m; ++draw) {
    std::vector<double> next(static_cast<std::size_t>(k + 1), 0.0);
    for (std::int64_t j = 1; j <= k; ++j) {
      const double stay = q[static_cast<std::size_t>(j)] *
                          (static_cast<double>(j) / static_cast<double>(k));
      const double grow =
          j >= 2 ? q[static_cast<std::size_t>(j - 1)] *
                       (static_cast<double>(k - j + 1) / static_cast<double>(k))
                 : 0.0;
      next[static_cast<std::size_t>(j)] = stay + grow;
    }
    q = std::move(next);
  }
  return q;
}

std::vector<double> monte_carlo_class_count(std::int64_t m, std::int64_t k,
                                            std::int64_t trials, Rng& rng) {
  if (m < 1 || k < 1 || trials < 1) {
    throw std::invalid_argument(
        "monte_carlo_class_count: arguments must be >= 1");
  }
  std::vector<std::int64_t> histogram(static_cast<std::size_t>(k + 1), 0);
  std::vector<bool> seen(static_cast<std::size_t>(k), false);
  for (std::int64_t t = 0; t < trials; ++t) {
    std::fill(seen.begin(), seen.end(), false);
    std::int64_t distinct = 0;
    for (std::int64_t i = 0; i < m; ++i) {
      const auto label = static_cast<std::size_t>(
          rng.uniform_int(static_cast<std::uint64_t>(k)));
      if (!seen[label]) {
        seen[label] = true;
        ++distinct;
      }
    }
    ++histogram[static_cast<std::size_t>(distinct)];
  }
  std::vector<double> probs(static_cast<std::size_t>(k + 1), 0.0);
  for (std::int64_t j = 1; j <= k; ++j) {
    probs[static_cast<std::size_t>(j)] =
        static_cast<double>(histogram[static_cast<std::size_t>(j)]) /
        static_cast<double>(trials);
  }
  return probs;
}

}  // namespace lcvd::theorem
