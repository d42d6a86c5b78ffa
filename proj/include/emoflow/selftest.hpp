#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace emoflow::selftest {

struct SuiteResult {
  std::string name;
  bool passed = false;
  std::string detail;  // first counterexample on failure, a summary otherwise
  double millis = 0.0;
};

/// geometry, gradients, adjoint, spline.
const std::vector<std::string>& suite_names();

/// Throws ConfigError for an unknown suite.
SuiteResult run_suite(const std::string& name, std::uint64_t seed);

}  // namespace emoflow::selftest
