#pragma once
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

namespace rvp {

struct CriterionResult {
  int id = 0;
  std::string name;
  bool pass = false;
  double seconds = 0.0;
  double time_limit = 0.0;
  std::string detail;                                    // one line, human readable
  std::vector<std::pair<std::string, double>> metrics;   // measured values, stable order
};

struct SuiteOptions {
  std::vector<int> criteria;        // empty: all twelve
  std::uint64_t seed = 20240611;
  // Multiplies the particle counts of the dynamics criteria (1 = the stated N).
  double particle_scale = 1.0;
  std::function<void(const CriterionResult&)> on_result;  // called as each criterion finishes
};

// Property-based acceptance suite on the golden polytrope. A criterion passes when every
// measured quantity meets its tolerance and the wall time is within its budget.
std::vector<CriterionResult> run_acceptance_suite(const SuiteOptions& opt);

const std::vector<std::pair<int, std::string>>& acceptance_criteria();

}  // namespace rvp
