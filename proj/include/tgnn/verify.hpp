#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace tgnn {

// One measured quantity of a suite. Most checks pass when value <= bound;
// with `lower_bound` set they pass when value > bound.
struct SuiteCheck {
  std::string measure;
  double value = 0.0;
  double bound = 0.0;
  bool lower_bound = false;
  std::size_t cases = 0;
  bool passed = false;
};

struct SuiteReport {
  std::string name;
  std::vector<SuiteCheck> checks;
  double seconds = 0.0;

  bool passed() const noexcept;
};

// Suites in run order:
//   unfolding    mode products agree with unfolding times a Kronecker chain
//   permutation  CP and combined layers are bit-identical under input shuffles
//   multilinear  identity-activation CP layers equal the dense [[W,...,W,M]] contraction
//   sum-tensor   the sum tensor contracts to alpha * sum x, and a rank F*k fit recovers it
//   slices       symmetric-slice decomposition reconstructs partially symmetric tensors
//   strictness   a rank-1 CP layer has a nonzero mixed second difference
//   gradient     analytic gradients of layers, losses and models match central differences
std::vector<std::string> suite_names();

// Throws InvalidArgument for an unknown name.
SuiteReport run_suite(std::string_view name, std::uint64_t seed = 0);

}  // namespace tgnn
