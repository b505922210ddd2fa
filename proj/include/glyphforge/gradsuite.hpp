#pragma once
// Finite-difference suites over the operator set, the warp bridge and
// every training objective, on tiny double-precision networks.

#include <string>
#include <vector>

#include "glyphforge/gradcheck.hpp"

namespace glyphforge::gradsuite {

struct CaseResult {
  std::string suite;  // ops | geometry | losses
  std::string name;
  ad::GradCheckReport report;
  double seconds = 0.0;
};

struct SuiteOptions {
  ad::GradCheckOptions check{};
  // Entries sampled per parameter tensor in network-sized cases.
  std::size_t entries_per_param = 4;
  // Step and denominator floor for network-sized cases. Stacked L1, ReLU
  // and bilinear sampling put kinks within 1e-4 of many parameter
  // settings; a smaller step (3e-7, floor 1e-5 against roundoff of about
  // eps * |f| / step) resolves the derivative there.
  double network_step = 1e-4;
  double network_floor = 1e-6;
  std::uint64_t seed = 1;
};

/// Case names of a suite, in run order.
std::vector<std::string> case_names(const std::string& suite);

/// suite is "ops", "geometry", "losses" or "all". Throws
/// std::invalid_argument for anything else.
std::vector<CaseResult> run(const std::string& suite, const SuiteOptions& options = {});

/// Runs a single named case.
CaseResult run_case(const std::string& suite, const std::string& name,
                    const SuiteOptions& options = {});

}  // namespace glyphforge::gradsuite
