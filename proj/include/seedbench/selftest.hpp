#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace seedbench::cli {

struct SelftestResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

/// Oracle suites runnable from the command line: finite-difference gradients,
/// Monte-Carlo CRPS, noiseless power-law recovery, resampling single-seed
/// summary and exact Mann-Whitney enumeration. `quick` shrinks sample counts.
std::vector<SelftestResult> run_selftest(bool quick, std::uint64_t seed = 20240611);

}  // namespace seedbench::cli
