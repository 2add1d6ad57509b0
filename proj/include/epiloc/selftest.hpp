#pragma once

#include <string>
#include <vector>

namespace epiloc {

struct SelftestResult {
  std::string suite;
  bool passed = false;
  std::string detail;
};

/// Compact built-in checks runnable from the CLI: the adjoint identity of
/// the dictionary operators, analytic-vs-finite-difference gradients of a
/// small network, and ISTA objective descent.
std::vector<SelftestResult> run_selftests(std::uint64_t seed);

} // namespace epiloc
