// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "gssl/datasets.hpp"
#include "gssl/losses.hpp"
#include "gssl/tensor.hpp"

namespace gssl::selftest {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

/// Implementations under test. Defaults are the library functions; tests
/// swap in faulty versions to confirm the matching check fails.
struct Targets {
  std::function<loss::ClassMargins(std::span<const int>, double, double)> ldam_margins = loss::ldam_margins;
  std::function<loss::ClassWeights(std::span<const int>, double)> drw_weights = loss::drw_weights;
  std::function<loss::LdamResult(const Tensor&, std::span<const int>, const loss::ClassMargins&,
                                 const loss::ClassWeights*)>
      ldam_loss = loss::ldam_loss;
  std::function<loss::TaskCeResult(const Tensor&, std::span<const int>)> task_ce = loss::task_ce;
  std::function<loss::GatedLossResult(double, const Tensor&, const std::vector<std::vector<double>>&, double)>
      gated_total_loss = loss::gated_total_loss;
  std::function<Tensor(const Tensor&)> gate_distribution;
  std::function<data::ImbalanceProfile(int, int, double)> exponential_profile = data::exponential_profile;

  Targets();
};

/// Runs every oracle comparison. Each check is independent; a thrown
/// exception marks that check failed.
std::vector<CheckResult> run(const Targets& targets = Targets());

bool all_passed(const std::vector<CheckResult>& results);

}  // namespace gssl::selftest
