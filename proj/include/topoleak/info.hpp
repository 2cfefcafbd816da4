#pragma once

#include <cstdint>
#include <vector>

namespace topoleak::info {

/// Joint distribution over n binary variables: entry x holds P(X = x), where
/// bit i of x is the value of variable i. Size 2^n, entries sum to 1.
using Joint = std::vector<double>;

/// Number of variables behind a joint table. Throws std::invalid_argument when
/// the size is not a power of two or the entries are not a distribution.
int variable_count(const Joint& p);

/// Shannon entropy (nats) of the variables selected by `mask`.
double entropy(const Joint& p, std::uint32_t mask);

/// I(A; B) = H(A) + H(B) - H(A, B) for disjoint variable sets.
double mutual_information(const Joint& p, std::uint32_t a, std::uint32_t b);

/// Total correlation of the variables in `mask`, telescoped in index order:
/// sum over k of I(first k variables; variable k+1).
double total_correlation(const Joint& p, std::uint32_t mask);

/// TC(A u B) = TC(A) + TC(B) + I(A; B) for disjoint blocks.
double total_correlation_split(const Joint& p, std::uint32_t a, std::uint32_t b);

}  // namespace topoleak::info
