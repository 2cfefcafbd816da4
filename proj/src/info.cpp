#include "topoleak/info.hpp"

#include <bit>
#include <cmath>
#include <stdexcept>

namespace topoleak::info {

int variable_count(const Joint& p) {
  if (p.empty() || !std::has_single_bit(p.size()) || p.size() > (std::size_t{1} << 20))
    throw std::invalid_argument("joint table size must be a power of two");
  double total = 0.0;
  for (double v : p) {
    if (!(v >= 0.0)) throw std::invalid_argument("joint table has a negative entry");
    total += v;
  }
  if (std::abs(total - 1.0) > 1e-9) throw std::invalid_argument("joint table does not sum to 1");
  return std::countr_zero(p.size());
}

double entropy(const Joint& p, std::uint32_t mask) {
  const int n = variable_count(p);
  if (mask >> n) throw std::invalid_argument("entropy: mask selects a missing variable");
  std::vector<double> marginal(p.size(), 0.0);
  for (std::size_t x = 0; x < p.size(); ++x) marginal[x & mask] += p[x];
  double h = 0.0;
  for (double v : marginal)
    if (v > 0.0) h -= v * std::log(v);
  return h;
}

double mutual_information(const Joint& p, std::uint32_t a, std::uint32_t b) {
  if (a & b) throw std::invalid_argument("mutual_information: variable sets overlap");
  return entropy(p, a) + entropy(p, b) - entropy(p, a | b);
}

double total_correlation(const Joint& p, std::uint32_t mask) {
  double tc = 0.0;
  std::uint32_t prefix = 0;
  for (std::uint32_t rest = mask; rest != 0; rest &= rest - 1) {
    const std::uint32_t next = rest & (~rest + 1);
    if (prefix != 0) tc += mutual_information(p, prefix, next);
    prefix |= next;
  }
  return tc;
}

double total_correlation_split(const Joint& p, std::uint32_t a, std::uint32_t b) {
  return total_correlation(p, a) + total_correlation(p, b) + mutual_information(p, a, b);
}

}  // namespace topoleak::info
