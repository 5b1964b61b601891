#pragma once

#include "stec/gradcheck.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace stec::verify {

struct SuiteResult {
  std::string name;
  bool passed = false;
  std::string detail;  // "max|d|=... over N trials" or the first counterexample
};

// Appendix-style derivation checks and algebra oracles, all runnable
// without training.
SuiteResult run_decomposition(long trials, std::uint64_t seed);
SuiteResult run_bound(long trials, std::uint64_t seed);
SuiteResult run_recovery(std::uint64_t seed);
SuiteResult run_gradients(std::uint64_t seed);
SuiteResult run_affine(long trials, std::uint64_t seed);
// remaining spec invariants: imaging pipeline, schedules, optimizer,
// dataset determinism
SuiteResult run_extras(long trials, std::uint64_t seed);

// which: one suite name or "all"
std::vector<SuiteResult> run_suites(const std::string& which, long trials,
                                    std::uint64_t seed);

}  // namespace stec::verify
